//! Experiment configuration: TOML with a default for every field.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use crate::bayes::{ParamRange, PriorSpec};
use crate::error::{Error, Result};
use crate::kernel::{check_admissible, KernelFamily, KernelParams, SymmetricBasis};
use crate::kinetic::KineticOptions;
use crate::ks::{KsOptions, KsTimeIntegration};
use crate::macro_coeffs::compute_macro;
use crate::measurement::{ForwardModel, MeasurementKind, MeasurementSetup, Model, TestFunction};
use crate::spatial::{SpatialGrid, SpatialProfile};
use crate::velocity::VelocityGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VelocityConfig {
    pub dimension: usize,
    pub n_points: usize,
}

impl Default for VelocityConfig {
    fn default() -> Self {
        Self {
            dimension: 1,
            n_points: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpaceConfig {
    pub dimension: usize,
    /// Cells per axis.
    pub n_cells: Vec<usize>,
    /// Box length per axis.
    pub length: Vec<f64>,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        Self {
            dimension: 1,
            n_cells: vec![4800],
            length: vec![12.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub basis: Vec<SymmetricBasis>,
    pub direction: [f64; 2],
    pub alpha: f64,
    pub c_bound: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            basis: Vec::new(),
            direction: [1.0, 0.0],
            alpha: 0.1,
            c_bound: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruthConfig {
    pub lambda: f64,
    pub beta: f64,
    pub extras: Vec<f64>,
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            beta: 0.3,
            extras: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionConfig {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileConfig {
    Bump {
        centers: Vec<Vec<f64>>,
        radius: f64,
        #[serde(default)]
        weights: Option<Vec<f64>>,
        #[serde(default = "one")]
        mass: f64,
    },
    Constant {
        value: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn point(c: &[f64], what: &str) -> Result<[f64; 2]> {
    match c {
        [x] => Ok([*x, 0.0]),
        [x, y] => Ok([*x, *y]),
        _ => Err(Error::Config(format!("{what} needs 1 or 2 coordinates, got {}", c.len()))),
    }
}

impl ProfileConfig {
    pub fn to_profile(&self) -> Result<SpatialProfile> {
        Ok(match self {
            ProfileConfig::Bump {
                centers,
                radius,
                weights,
                mass,
            } => SpatialProfile::Bump {
                centers: centers
                    .iter()
                    .map(|c| point(c, "profile centre"))
                    .collect::<Result<_>>()?,
                radius: *radius,
                weights: weights.clone(),
                mass: *mass,
            },
            ProfileConfig::Constant { value } => SpatialProfile::Constant { value: *value },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasurementConfig {
    pub times: Vec<f64>,
    pub test_functions: Vec<TestFunctionConfig>,
    pub initial_profiles: Vec<ProfileConfig>,
    pub velocity_profile: Option<Vec<f64>>,
    pub c_x: f64,
    pub c_rho: f64,
    pub kind: MeasurementKind,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self {
            times: vec![0.1, 0.25, 0.5],
            test_functions: [5.0, 6.0, 7.0]
                .iter()
                .map(|&c| TestFunctionConfig {
                    center: vec![c],
                    radius: 0.5,
                })
                .collect(),
            initial_profiles: vec![
                ProfileConfig::Bump {
                    centers: vec![vec![6.0]],
                    radius: 0.75,
                    weights: None,
                    mass: 1.0,
                },
                ProfileConfig::Bump {
                    centers: vec![vec![5.25], vec![6.75]],
                    radius: 0.5,
                    weights: None,
                    mass: 1.0,
                },
            ],
            velocity_profile: None,
            c_x: 2.0,
            c_rho: 2.0,
            kind: MeasurementKind::Integral,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthModel {
    /// Kinetic model at the smallest swept ε.
    Chem,
    Ks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Defaults to `0.01 · C_x · C_ρ`.
    pub gamma: Option<f64>,
    pub seed: u64,
    pub truth_model: TruthModel,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            gamma: None,
            seed: 20240917,
            truth_model: TruthModel::Chem,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub epsilons: Vec<f64>,
    /// Diagnostic: use the Keller–Segel likelihood for the kinetic posteriors.
    pub substitute_ks_likelihood: bool,
    /// Uniform data perturbation for the data-stability check.
    pub perturbation: f64,
    /// Bins per axis of the `(D, Γ)` push-forward histogram.
    pub push_forward_bins: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            epsilons: vec![0.2, 0.1, 0.05],
            substitute_ks_likelihood: false,
            perturbation: 1e-3,
            push_forward_bins: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub cfl: f64,
    pub ks_time_integration: KsTimeIntegration,
    pub implicit_dt_factor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let k = KsOptions::default();
        Self {
            cfl: KineticOptions::default().cfl,
            ks_time_integration: k.time_integration,
            implicit_dt_factor: k.implicit_dt_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Forward-evaluation cache; disabled when absent.
    pub cache_dir: Option<PathBuf>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            cache_dir: None,
        }
    }
}

fn default_prior() -> PriorSpec {
    PriorSpec::new(ParamRange::new(0.5, 2.0, 41), ParamRange::new(-0.6, 0.6, 21))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub velocity: VelocityConfig,
    pub space: SpaceConfig,
    pub kernel: KernelConfig,
    pub truth: TruthConfig,
    pub measurement: MeasurementConfig,
    pub noise: NoiseConfig,
    pub sweep: SweepConfig,
    pub prior: PriorSpec,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            velocity: VelocityConfig::default(),
            space: SpaceConfig::default(),
            kernel: KernelConfig::default(),
            truth: TruthConfig::default(),
            measurement: MeasurementConfig::default(),
            noise: NoiseConfig::default(),
            sweep: SweepConfig::default(),
            prior: default_prior(),
            solver: SolverConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// sha256 of the configuration without its output locations.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.output = OutputConfig::default();
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(&c)?)))
    }

    pub fn family(&self) -> KernelFamily {
        KernelFamily {
            basis: self.kernel.basis.clone(),
            direction: self.kernel.direction,
        }
    }

    pub fn truth(&self) -> KernelParams {
        KernelParams::with_extras(self.truth.lambda, self.truth.beta, self.truth.extras.clone())
    }

    pub fn gamma(&self) -> f64 {
        self.noise
            .gamma
            .unwrap_or(0.01 * self.measurement.c_x * self.measurement.c_rho)
    }

    pub fn smallest_epsilon(&self) -> f64 {
        self.sweep.epsilons.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Model that generates the data.
    pub fn truth_model(&self) -> Model {
        match self.noise.truth_model {
            TruthModel::Chem => Model::Chem {
                epsilon: self.smallest_epsilon(),
            },
            TruthModel::Ks => Model::Ks,
        }
    }

    pub fn velocity_grid(&self) -> Result<VelocityGrid> {
        VelocityGrid::new(self.velocity.dimension, self.velocity.n_points).map_err(config_error)
    }

    pub fn spatial_grid(&self) -> Result<SpatialGrid> {
        let d = self.space.dimension;
        if self.space.n_cells.len() != d || self.space.length.len() != d {
            return Err(Error::Config(format!(
                "space.n_cells and space.length need {d} entries"
            )));
        }
        let n = [self.space.n_cells[0], *self.space.n_cells.get(1).unwrap_or(&1)];
        let l = [self.space.length[0], *self.space.length.get(1).unwrap_or(&1.0)];
        SpatialGrid::new(d, n, l).map_err(config_error)
    }

    pub fn measurement_setup(&self) -> Result<MeasurementSetup> {
        let m = &self.measurement;
        Ok(MeasurementSetup {
            times: m.times.clone(),
            test_functions: m
                .test_functions
                .iter()
                .map(|t| {
                    Ok(TestFunction {
                        center: point(&t.center, "test function centre")?,
                        radius: t.radius,
                    })
                })
                .collect::<Result<_>>()?,
            initial_profiles: m
                .initial_profiles
                .iter()
                .map(|p| p.to_profile())
                .collect::<Result<_>>()?,
            velocity_profile: m.velocity_profile.clone(),
            c_x: m.c_x,
            c_rho: m.c_rho,
            kind: m.kind,
        })
    }

    pub fn kinetic_options(&self) -> KineticOptions {
        KineticOptions {
            cfl: self.solver.cfl,
            ..KineticOptions::default()
        }
    }

    pub fn ks_options(&self) -> KsOptions {
        KsOptions {
            time_integration: self.solver.ks_time_integration,
            implicit_dt_factor: self.solver.implicit_dt_factor,
            ..KsOptions::default()
        }
    }

    pub fn forward_model(&self) -> Result<ForwardModel> {
        ForwardModel::new(
            self.spatial_grid()?,
            self.velocity_grid()?,
            self.family(),
            self.kinetic_options(),
            self.ks_options(),
            self.measurement_setup()?,
        )
        .map_err(config_error)
    }

    /// Every structural and admissibility check that can run without a
    /// forward solve. Failures are [`Error::Config`].
    pub fn validate(&self) -> Result<()> {
        let eps = &self.sweep.epsilons;
        if eps.is_empty() || eps.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::Config(format!("epsilons must be positive, got {eps:?}")));
        }
        if eps.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config(format!("epsilons must be strictly decreasing, got {eps:?}")));
        }
        if !(self.gamma() > 0.0 && self.gamma().is_finite()) {
            return Err(Error::Config(format!("noise gamma must be positive, got {}", self.gamma())));
        }
        if !(self.sweep.perturbation > 0.0) {
            return Err(Error::Config("sweep.perturbation must be positive".into()));
        }
        if !(self.solver.cfl > 0.0 && self.solver.cfl <= 1.0) {
            return Err(Error::Config(format!("solver.cfl must lie in (0, 1], got {}", self.solver.cfl)));
        }
        if self.space.dimension > self.velocity.dimension {
            return Err(Error::Config("spatial dimension exceeds velocity dimension".into()));
        }
        let family = self.family();
        family.validate().map_err(config_error)?;
        let vgrid = self.velocity_grid()?;
        let space = self.spatial_grid()?;
        self.measurement_setup()?.validate(&space).map_err(config_error)?;
        let (alpha, c) = (self.kernel.alpha, self.kernel.c_bound);
        self.prior.validate(&family, &vgrid, alpha, c)?;
        let truth = self.truth();
        let report = check_admissible(&family, &truth, &vgrid, alpha, c);
        if !report.admissible {
            return Err(Error::Config(format!("truth {truth} is not admissible: {:?}", report.violations)));
        }
        if !self.prior.contains(&truth) {
            return Err(Error::Config(format!("truth {truth} lies outside the prior box")));
        }
        self.check_box(&family, &vgrid, &space)?;
        self.forward_model()?;
        Ok(())
    }

    /// The initial supports, widened on each side by three diffusive
    /// standard deviations `sqrt(2 D_max T)` plus the largest drift
    /// displacement `|Γ|_max T` over the prior, must fit in the box.
    fn check_box(&self, family: &KernelFamily, vgrid: &VelocityGrid, space: &SpatialGrid) -> Result<()> {
        let t = self.measurement.times.iter().copied().fold(0.0, f64::max);
        let mut d_max: f64 = 0.0;
        let mut g_max: f64 = 0.0;
        for p in self.prior.nodes() {
            let c = compute_macro(family, &p, vgrid, space.dimension()).map_err(config_error)?;
            d_max = d_max.max(c.max_eigenvalue());
            g_max = g_max.max(c.drift.iter().map(|x| x * x).sum::<f64>().sqrt());
        }
        let margin = 3.0 * (2.0 * d_max * t).sqrt() + g_max * t;
        for p in &self.measurement.initial_profiles {
            let prof = p.to_profile()?;
            for a in 0..space.dimension() {
                if let Some((lo, hi)) = prof.support(a) {
                    if lo - margin < 0.0 || hi + margin > space.length()[a] {
                        return Err(Error::Config(format!(
                            "box of length {} too small: support [{lo}, {hi}] needs margin {margin:.3} on axis {a}",
                            space.length()[a]
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn config_error(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}
