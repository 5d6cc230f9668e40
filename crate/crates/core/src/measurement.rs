//! Measurement operators for both models, noise and synthetic data.
//!
//! A measurement is the density at time `t_{j1}` averaged against a test
//! function `χ_{j2}`, for each initial profile `k`. Rows of a [`GMatrix`] are
//! indexed by `j1 * J2 + j2`, columns by `k`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, KernelParams};
use crate::kinetic::{macro_density, KernelField, KineticOptions, KineticSolver, KineticState, SolveDiagnostics};
use crate::ks::{restrict_initial, CoefficientField, KsOptions, KsSolver, MacroState};
use crate::macro_coeffs::compute_macro;
use crate::spatial::{bump, bump_normalization, SpatialGrid, SpatialProfile};
use crate::velocity::VelocityGrid;

const TIME_MATCH: f64 = 1e-12;

/// Normalized bump `c · max(0, 1 − (|x − x_c|/r)²)²` with unit integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub center: [f64; 2],
    pub radius: f64,
}

impl TestFunction {
    pub fn new_1d(center: f64, radius: f64) -> Self {
        Self {
            center: [center, 0.0],
            radius,
        }
    }

    pub fn evaluate(&self, grid: &SpatialGrid) -> Vec<f64> {
        let c = bump_normalization(self.radius, grid.dimension());
        grid.centers()
            .iter()
            .map(|x| c * bump(grid.distance(x, &self.center), self.radius))
            .collect()
    }
}

/// `max(‖χ‖₁, ‖χ‖₂, ‖χ‖_∞, |supp χ|)` on the grid.
pub fn test_function_bound(chi: &[f64], grid: &SpatialGrid) -> f64 {
    let l1 = grid.integrate(&chi.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let l2 = grid.integrate(&chi.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt();
    let linf = chi.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let support = chi.iter().filter(|&&x| x != 0.0).count() as f64 * grid.cell_volume();
    l1.max(l2).max(linf).max(support)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    /// `h^d Σ_i ρ(x_i) χ(x_i)`.
    #[default]
    Integral,
    /// `ρ` at the cell nearest to the test-function centre.
    Pointwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetup {
    pub times: Vec<f64>,
    pub test_functions: Vec<TestFunction>,
    pub initial_profiles: Vec<SpatialProfile>,
    #[serde(default)]
    pub velocity_profile: Option<Vec<f64>>,
    pub c_x: f64,
    pub c_rho: f64,
    #[serde(default)]
    pub kind: MeasurementKind,
}

impl MeasurementSetup {
    pub fn n_rows(&self) -> usize {
        self.times.len() * self.test_functions.len()
    }

    pub fn n_cols(&self) -> usize {
        self.initial_profiles.len()
    }

    pub fn final_time(&self) -> f64 {
        self.times.iter().copied().fold(0.0, f64::max)
    }

    /// Checks times, test-function bounds and initial-data bounds on `grid`.
    pub fn validate(&self, grid: &SpatialGrid) -> Result<()> {
        if self.times.is_empty() || self.test_functions.is_empty() || self.initial_profiles.is_empty() {
            return Err(Error::Config("measurement setup needs times, test functions and initial profiles".into()));
        }
        let mut prev = 0.0;
        for &t in &self.times {
            if !(t > prev) {
                return Err(Error::Config(format!(
                    "measurement times must be positive and strictly increasing, got {:?}",
                    self.times
                )));
            }
            prev = t;
        }
        if !(self.c_x > 0.0 && self.c_rho > 0.0) {
            return Err(Error::Config("C_x and C_rho must be positive".into()));
        }
        for tf in &self.test_functions {
            if !(tf.radius > 0.0) {
                return Err(Error::Config(format!("test function radius must be positive, got {}", tf.radius)));
            }
            for a in 0..grid.dimension() {
                if tf.center[a] - tf.radius < 0.0 || tf.center[a] + tf.radius > grid.length()[a] {
                    return Err(Error::Config(format!("test function at {:?} escapes the box", tf.center)));
                }
            }
            let b = test_function_bound(&tf.evaluate(grid), grid);
            if b > self.c_x {
                return Err(Error::Config(format!(
                    "test function at {:?} has norm bound {b:.4} > C_x = {}",
                    tf.center, self.c_x
                )));
            }
        }
        Ok(())
    }
}

/// Dense `rows × cols` matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl GMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.cols + col] = value;
    }

    pub fn same_shape(&self, other: &GMatrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::ShapeMismatch {
                expected_rows: self.rows,
                expected_cols: self.cols,
                rows: other.rows,
                cols: other.cols,
            });
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    /// `max_{jk} |self − other|`.
    pub fn max_abs_diff(&self, other: &GMatrix) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Observed data `y = G + η`, `η ~ N(0, γ²)` iid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSet {
    pub y: GMatrix,
    pub gamma: f64,
    pub seed: u64,
    #[serde(default)]
    pub setup_hash: String,
}

/// Adds seeded Gaussian noise to `g_truth`, drawing entries in row-major order.
pub fn generate_data(g_truth: &GMatrix, gamma: f64, seed: u64) -> Result<DataSet> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidInput(format!("noise level must be positive, got {gamma}")));
    }
    let normal = Normal::new(0.0, gamma).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = g_truth.clone();
    for v in y.values.iter_mut() {
        *v += normal.sample(&mut rng);
    }
    Ok(DataSet {
        y,
        gamma,
        seed,
        setup_hash: String::new(),
    })
}

/// Measures one column (one initial profile) from snapshots at the setup times.
pub fn measure(snapshots: &[MacroState], setup: &MeasurementSetup, grid: &SpatialGrid) -> Result<Vec<f64>> {
    let chis: Vec<Vec<f64>> = setup.test_functions.iter().map(|tf| tf.evaluate(grid)).collect();
    measure_with(snapshots, setup, grid, &chis)
}

fn measure_with(
    snapshots: &[MacroState],
    setup: &MeasurementSetup,
    grid: &SpatialGrid,
    chis: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(setup.n_rows());
    for &t in &setup.times {
        let snap = snapshots
            .iter()
            .find(|s| (s.time - t).abs() <= TIME_MATCH * t.max(1.0))
            .ok_or(Error::MissingSnapshot { time: t })?;
        for (tf, chi) in setup.test_functions.iter().zip(chis) {
            let value = match setup.kind {
                MeasurementKind::Integral => {
                    grid.cell_volume() * snap.values.iter().zip(chi).map(|(r, c)| r * c).sum::<f64>()
                }
                MeasurementKind::Pointwise => snap.values[nearest_cell(grid, &tf.center)],
            };
            out.push(value);
        }
    }
    Ok(out)
}

fn nearest_cell(grid: &SpatialGrid, x: &[f64; 2]) -> usize {
    let [nx, ny] = grid.n_cells();
    let h = grid.h();
    let ix = ((x[0] / h[0]).floor().max(0.0) as usize).min(nx - 1);
    let iy = if grid.dimension() == 2 {
        ((x[1] / h[1]).floor().max(0.0) as usize).min(ny - 1)
    } else {
        0
    };
    iy * nx + ix
}

/// Which forward model generates the measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    Chem { epsilon: f64 },
    Ks,
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Model::Chem { epsilon } => write!(f, "chem(eps={epsilon})"),
            Model::Ks => write!(f, "ks"),
        }
    }
}

/// Measurements together with the solver diagnostics collected producing them.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub g: GMatrix,
    pub diagnostics: SolveDiagnostics,
}

/// Grids, kernel family, solver options and measurement setup: everything
/// needed to map kernel parameters to measurements.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    kinetic: KineticSolver,
    ks: KsSolver,
    setup: MeasurementSetup,
    chis: Vec<Vec<f64>>,
    f0: Vec<KineticState>,
    rho0: Vec<MacroState>,
    hash: String,
}

#[derive(Serialize)]
struct HashInput<'a> {
    space: &'a SpatialGrid,
    velocity: &'a VelocityGrid,
    family: &'a KernelFamily,
    kinetic: &'a KineticOptions,
    ks: &'a KsOptions,
    setup: &'a MeasurementSetup,
}

impl ForwardModel {
    pub fn new(
        space: SpatialGrid,
        velocity: VelocityGrid,
        family: KernelFamily,
        kinetic_options: KineticOptions,
        ks_options: KsOptions,
        setup: MeasurementSetup,
    ) -> Result<Self> {
        setup.validate(&space)?;
        family.validate()?;
        let kinetic = KineticSolver::with_options(space.clone(), velocity.clone(), family.clone(), kinetic_options)?;
        let ks = KsSolver::with_options(space.clone(), ks_options)?;
        let chis = setup.test_functions.iter().map(|tf| tf.evaluate(&space)).collect();
        let f0 = setup
            .initial_profiles
            .iter()
            .map(|p| kinetic.make_initial_kinetic(p, setup.velocity_profile.as_deref(), Some(setup.c_rho)))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Config(format!("initial profile: {e}")))?;
        let rho0 = f0.iter().map(|f| restrict_initial(f, &velocity)).collect();
        let input = HashInput {
            space: &space,
            velocity: &velocity,
            family: &family,
            kinetic: &kinetic_options,
            ks: &ks_options,
            setup: &setup,
        };
        let hash = hex::encode(Sha256::digest(serde_json::to_vec(&input)?));
        Ok(Self {
            kinetic,
            ks,
            setup,
            chis,
            f0,
            rho0,
            hash,
        })
    }

    pub fn setup(&self) -> &MeasurementSetup {
        &self.setup
    }

    pub fn space(&self) -> &SpatialGrid {
        &self.kinetic.space
    }

    pub fn velocity(&self) -> &VelocityGrid {
        &self.kinetic.velocity
    }

    pub fn family(&self) -> &KernelFamily {
        &self.kinetic.family
    }

    pub fn kinetic_solver(&self) -> &KineticSolver {
        &self.kinetic
    }

    pub fn ks_solver(&self) -> &KsSolver {
        &self.ks
    }

    pub fn initial_kinetic(&self) -> &[KineticState] {
        &self.f0
    }

    pub fn initial_density(&self) -> &[MacroState] {
        &self.rho0
    }

    /// Hash of grids, family, solver options and setup.
    pub fn setup_hash(&self) -> &str {
        &self.hash
    }

    fn collect(&self, columns: Vec<(Vec<MacroState>, SolveDiagnostics)>) -> Result<Evaluation> {
        let mut g = GMatrix::zeros(self.setup.n_rows(), self.setup.n_cols());
        let mut diag: Option<SolveDiagnostics> = None;
        for (k, (snaps, d)) in columns.into_iter().enumerate() {
            let col = measure_with(&snaps, &self.setup, self.space(), &self.chis)?;
            for (row, v) in col.into_iter().enumerate() {
                g.set(row, k, v);
            }
            diag = Some(match diag {
                None => d,
                Some(prev) => prev.merge(&d),
            });
        }
        Ok(Evaluation {
            g,
            diagnostics: diag.expect("setup has at least one profile"),
        })
    }

    /// Kinetic measurements at scaling `epsilon`, with solver diagnostics.
    pub fn evaluate_chem(&self, params: &KernelParams, epsilon: f64) -> Result<Evaluation> {
        let field = KernelField::Uniform(params.clone());
        let t_final = self.setup.final_time();
        let columns = self
            .f0
            .iter()
            .map(|f0| {
                let sol = self.kinetic.solve_kinetic(f0, &field, epsilon, t_final, &self.setup.times)?;
                let snaps = sol
                    .snapshots
                    .iter()
                    .map(|s| MacroState {
                        values: macro_density(s, self.velocity()),
                        time: s.time,
                    })
                    .collect();
                Ok((snaps, sol.diagnostics))
            })
            .collect::<Result<Vec<_>>>()?;
        self.collect(columns)
    }

    /// Keller–Segel measurements with coefficients derived from `params`.
    pub fn evaluate_ks(&self, params: &KernelParams) -> Result<Evaluation> {
        let coeffs = compute_macro(self.family(), params, self.velocity(), self.space().dimension())?;
        let field = CoefficientField::Uniform(coeffs);
        let t_final = self.setup.final_time();
        let columns = self
            .rho0
            .iter()
            .map(|r0| {
                let sol = self.ks.solve_ks(r0, &field, t_final, &self.setup.times)?;
                Ok((sol.snapshots, sol.diagnostics))
            })
            .collect::<Result<Vec<_>>>()?;
        self.collect(columns)
    }

    pub fn evaluate(&self, model: Model, params: &KernelParams) -> Result<Evaluation> {
        match model {
            Model::Chem { epsilon } => self.evaluate_chem(params, epsilon),
            Model::Ks => self.evaluate_ks(params),
        }
    }

    pub fn g_chem(&self, params: &KernelParams, epsilon: f64) -> Result<GMatrix> {
        Ok(self.evaluate_chem(params, epsilon)?.g)
    }

    pub fn g_ks(&self, params: &KernelParams) -> Result<GMatrix> {
        Ok(self.evaluate_ks(params)?.g)
    }

    /// Noisy data from `model` at `truth`, tagged with the setup hash.
    pub fn generate_data(&self, model: Model, truth: &KernelParams, gamma: f64, seed: u64) -> Result<DataSet> {
        let g = self.evaluate(model, truth)?.g;
        let mut data = generate_data(&g, gamma, seed)?;
        data.setup_hash = self.hash.clone();
        Ok(data)
    }
}
