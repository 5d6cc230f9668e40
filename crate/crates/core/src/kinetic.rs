//! Solver for the parabolically scaled kinetic chemotaxis equation
//!
//! ```text
//! ε² ∂_t f + ε v·∇_x f = 𝒦_ε(f)
//! ```
//!
//! on a periodic grid. Each step is a Strang splitting: half a step of the
//! stiff tumbling relaxation, solved exactly with the matrix exponential of
//! `dt 𝒦_ε / (2ε²)`, then upwind transport at speed `v/ε`, then the other half
//! of the relaxation. Consecutive half-relaxations are fused.
//!
//! The exponential of a matrix with nonnegative off-diagonals is entrywise
//! nonnegative, and first-order upwind with transport number at most one is a
//! convex combination, so the scheme keeps `f ≥ 0`. Both substeps conserve
//! `Σ w_j f_j` per cell exactly up to rounding.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::kernel::{assemble_tumbling_matrix, KernelFamily, KernelParams};
use crate::spatial::{SpatialGrid, SpatialProfile};
use crate::velocity::VelocityGrid;

/// Largest supported number of discrete velocities.
pub const MAX_VELOCITIES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KineticOptions {
    /// Transport number limit: `dt/ε · Σ_a |v_a|/h_a ≤ cfl`. At most one.
    pub cfl: f64,
    /// Smallest admissible density value before a solve is declared broken.
    pub negativity_tolerance: f64,
}

impl Default for KineticOptions {
    fn default() -> Self {
        Self {
            cfl: 1.0,
            negativity_tolerance: 1e-12,
        }
    }
}

/// Tumbling kernel as a function of space. `PerCell` evaluates a separate
/// kernel in every spatial cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelField {
    Uniform(KernelParams),
    PerCell(Vec<KernelParams>),
}

impl From<KernelParams> for KernelField {
    fn from(p: KernelParams) -> Self {
        KernelField::Uniform(p)
    }
}

impl From<&KernelParams> for KernelField {
    fn from(p: &KernelParams) -> Self {
        KernelField::Uniform(p.clone())
    }
}

/// Phase-space density at one time. Values are stored velocity-major:
/// `values[j * n_cells + cell]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticState {
    pub values: Vec<f64>,
    pub n_cells: usize,
    pub n_velocities: usize,
    pub time: f64,
}

impl KineticState {
    pub fn get(&self, cell: usize, velocity: usize) -> f64 {
        self.values[velocity * self.n_cells + cell]
    }

    pub fn slice(&self, velocity: usize) -> &[f64] {
        &self.values[velocity * self.n_cells..(velocity + 1) * self.n_cells]
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `ρ_i = Σ_j w_j f(x_i, v_j)`.
pub fn macro_density(state: &KineticState, velocity: &VelocityGrid) -> Vec<f64> {
    let mut rho = vec![0.0; state.n_cells];
    for (j, w) in velocity.weights().iter().enumerate() {
        for (r, f) in rho.iter_mut().zip(state.slice(j)) {
            *r += w * f;
        }
    }
    rho
}

/// `max_{i,j} |f(x_i, v_j) − ρ_i F|`, the distance to local equilibrium.
pub fn equilibrium_gap(state: &KineticState, velocity: &VelocityGrid) -> f64 {
    let rho = macro_density(state, velocity);
    let f_eq = 1.0 / velocity.measure();
    (0..state.n_velocities)
        .flat_map(|j| state.slice(j).iter().zip(&rho).map(move |(f, r)| (f - r * f_eq).abs()))
        .fold(0.0, f64::max)
}

/// Conservation and positivity record of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub initial_mass: f64,
    pub max_relative_mass_drift: f64,
    pub min_value: f64,
    pub steps: usize,
}

impl SolveDiagnostics {
    pub(crate) fn new(initial_mass: f64, min_value: f64) -> Self {
        Self {
            initial_mass,
            max_relative_mass_drift: 0.0,
            min_value,
            steps: 0,
        }
    }

    pub(crate) fn record(&mut self, mass: f64, min_value: f64) {
        let scale = self.initial_mass.abs().max(f64::MIN_POSITIVE);
        self.max_relative_mass_drift = self.max_relative_mass_drift.max((mass - self.initial_mass).abs() / scale);
        self.min_value = self.min_value.min(min_value);
    }

    /// Worst case over several solves.
    pub fn merge(&self, other: &SolveDiagnostics) -> SolveDiagnostics {
        SolveDiagnostics {
            initial_mass: self.initial_mass,
            max_relative_mass_drift: self.max_relative_mass_drift.max(other.max_relative_mass_drift),
            min_value: self.min_value.min(other.min_value),
            steps: self.steps + other.steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KineticSolution {
    pub snapshots: Vec<KineticState>,
    pub final_state: KineticState,
    pub diagnostics: SolveDiagnostics,
}

/// Per-cell (or shared) relaxation propagator `exp(τ M)`, row-major.
enum Propagator {
    Uniform(Vec<f64>),
    PerCell(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticSolver {
    pub space: SpatialGrid,
    pub velocity: VelocityGrid,
    pub family: KernelFamily,
    pub options: KineticOptions,
}

impl KineticSolver {
    pub fn new(space: SpatialGrid, velocity: VelocityGrid, family: KernelFamily) -> Result<Self> {
        Self::with_options(space, velocity, family, KineticOptions::default())
    }

    pub fn with_options(
        space: SpatialGrid,
        velocity: VelocityGrid,
        family: KernelFamily,
        options: KineticOptions,
    ) -> Result<Self> {
        if space.dimension() > velocity.dimension() {
            return Err(Error::InvalidInput(format!(
                "spatial dimension {} exceeds velocity dimension {}",
                space.dimension(),
                velocity.dimension()
            )));
        }
        if velocity.len() > MAX_VELOCITIES {
            return Err(Error::InvalidInput(format!(
                "at most {MAX_VELOCITIES} velocities supported, got {}",
                velocity.len()
            )));
        }
        if !(options.cfl > 0.0 && options.cfl <= 1.0) {
            return Err(Error::InvalidInput(format!("cfl must lie in (0, 1], got {}", options.cfl)));
        }
        Ok(Self {
            space,
            velocity,
            family,
            options,
        })
    }

    /// `Σ_a |v_a| / h_a` maximized over velocities.
    fn transport_rate(&self) -> f64 {
        let h = self.space.h();
        self.velocity
            .points()
            .iter()
            .map(|v| (0..self.space.dimension()).map(|a| v[a].abs() / h[a]).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest step allowed by the transport CFL condition.
    pub fn max_time_step(&self, epsilon: f64) -> f64 {
        self.options.cfl * epsilon / self.transport_rate()
    }

    /// `f_0(x, v) = g(x) q(v)`; `q` defaults to the equilibrium `F` and must be
    /// nonnegative with unit velocity quadrature. With `c_rho` set, both the
    /// `L¹` and `L^∞` norms of `f_0` (and of `g`) must not exceed it.
    pub fn make_initial_kinetic(
        &self,
        profile: &SpatialProfile,
        velocity_profile: Option<&[f64]>,
        c_rho: Option<f64>,
    ) -> Result<KineticState> {
        let g = profile.evaluate(&self.space)?;
        if g.iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidInput("initial profile must be nonnegative".into()));
        }
        let q = match velocity_profile {
            Some(q) => {
                if q.len() != self.velocity.len() {
                    return Err(Error::LengthMismatch {
                        expected: self.velocity.len(),
                        got: q.len(),
                    });
                }
                if q.iter().any(|&x| x < 0.0) {
                    return Err(Error::InvalidInput("velocity profile must be nonnegative".into()));
                }
                let mass = self.velocity.quadrature(q)?;
                if (mass - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!("velocity profile integrates to {mass}, not 1")));
                }
                q.to_vec()
            }
            None => self.velocity.equilibrium().values,
        };
        let n = self.space.len();
        let mut values = vec![0.0; n * q.len()];
        for (j, qj) in q.iter().enumerate() {
            for (i, gi) in g.iter().enumerate() {
                values[j * n + i] = gi * qj;
            }
        }
        let state = KineticState {
            values,
            n_cells: n,
            n_velocities: q.len(),
            time: 0.0,
        };
        if let Some(bound) = c_rho {
            let l1 = self.mass(&state);
            let linf = state.values.iter().copied().fold(0.0, f64::max);
            let g_inf = g.iter().copied().fold(0.0, f64::max);
            if l1 > bound || linf > bound || g_inf > bound {
                return Err(Error::InvalidInput(format!(
                    "initial data norms (L1 {l1:.4}, Linf {:.4}) exceed C_rho = {bound}",
                    linf.max(g_inf)
                )));
            }
        }
        Ok(state)
    }

    /// `h^d Σ_{i,j} w_j f_{ij}`.
    pub fn mass(&self, state: &KineticState) -> f64 {
        self.space.integrate(&macro_density(state, &self.velocity))
    }

    fn kernel_for_cell<'a>(&self, field: &'a KernelField, cell: usize) -> &'a KernelParams {
        match field {
            KernelField::Uniform(p) => p,
            KernelField::PerCell(ps) => &ps[cell],
        }
    }

    fn check_field(&self, field: &KernelField) -> Result<()> {
        if let KernelField::PerCell(ps) = field {
            if ps.len() != self.space.len() {
                return Err(Error::LengthMismatch {
                    expected: self.space.len(),
                    got: ps.len(),
                });
            }
        }
        Ok(())
    }

    /// Generator `𝒦_ε` for one kernel, checked for nonnegative off-diagonals.
    fn generator(&self, params: &KernelParams, epsilon: f64) -> Result<DMatrix<f64>> {
        let m = assemble_tumbling_matrix(&self.family, params, &self.velocity, epsilon).entries;
        let n = m.nrows();
        for i in 0..n {
            for j in 0..n {
                if i != j && m[(i, j)] < 0.0 {
                    return Err(Error::NotAdmissible(format!(
                        "K_eps takes negative value {:.3e} for {params} at eps = {epsilon}",
                        m[(i, j)] / self.velocity.weights()[j]
                    )));
                }
            }
        }
        Ok(m)
    }

    /// `exp(τ M)` with rounding-level negative off-diagonals clipped and the
    /// diagonal reset so that weighted column sums equal the weights exactly.
    fn exponential(&self, m: &DMatrix<f64>, tau: f64) -> Vec<f64> {
        let n = m.nrows();
        let mut e = (m * tau).exp();
        let w = self.velocity.weights();
        for j in 0..n {
            let mut off = 0.0;
            for i in 0..n {
                if i != j {
                    if e[(i, j)] < 0.0 {
                        e[(i, j)] = 0.0;
                    }
                    off += w[i] * e[(i, j)];
                }
            }
            e[(j, j)] = (w[j] - off) / w[j];
        }
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = e[(i, j)];
            }
        }
        out
    }

    fn propagator(&self, generators: &Generators, tau: f64) -> Propagator {
        match generators {
            Generators::Uniform(m) => Propagator::Uniform(self.exponential(m, tau)),
            Generators::PerCell { unique, index } => {
                let exps: Vec<Vec<f64>> = unique.iter().map(|m| self.exponential(m, tau)).collect();
                Propagator::PerCell(index.iter().map(|&k| exps[k].clone()).collect())
            }
        }
    }

    fn generators(&self, field: &KernelField, epsilon: f64) -> Result<Generators> {
        self.check_field(field)?;
        match field {
            KernelField::Uniform(p) => Ok(Generators::Uniform(self.generator(p, epsilon)?)),
            KernelField::PerCell(ps) => {
                let mut unique: Vec<DMatrix<f64>> = Vec::new();
                let mut keys: Vec<&KernelParams> = Vec::new();
                let mut index = Vec::with_capacity(ps.len());
                for cell in 0..ps.len() {
                    let p = self.kernel_for_cell(field, cell);
                    match keys.iter().position(|k| *k == p) {
                        Some(k) => index.push(k),
                        None => {
                            keys.push(p);
                            unique.push(self.generator(p, epsilon)?);
                            index.push(unique.len() - 1);
                        }
                    }
                }
                Ok(Generators::PerCell { unique, index })
            }
        }
    }

    fn relax(&self, values: &mut [f64], prop: &Propagator) {
        let n = self.space.len();
        let nv = self.velocity.len();
        let mut buf = [0.0; MAX_VELOCITIES];
        let apply = |values: &mut [f64], e: &[f64], c: usize, buf: &mut [f64; MAX_VELOCITIES]| {
            for j in 0..nv {
                buf[j] = values[j * n + c];
            }
            for i in 0..nv {
                let row = &e[i * nv..(i + 1) * nv];
                let mut s = 0.0;
                for j in 0..nv {
                    s += row[j] * buf[j];
                }
                values[i * n + c] = s;
            }
        };
        match prop {
            Propagator::Uniform(e) => {
                if nv == 2 {
                    let (e00, e01, e10, e11) = (e[0], e[1], e[2], e[3]);
                    let (a, b) = values.split_at_mut(n);
                    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                        let (p, q) = (*x, *y);
                        *x = e00 * p + e01 * q;
                        *y = e10 * p + e11 * q;
                    }
                } else {
                    for c in 0..n {
                        apply(values, e, c, &mut buf);
                    }
                }
            }
            Propagator::PerCell(es) => {
                for (c, e) in es.iter().enumerate() {
                    apply(values, e, c, &mut buf);
                }
            }
        }
    }

    fn transport(&self, values: &mut [f64], epsilon: f64, dt: f64, scratch: &mut Vec<f64>) {
        let n = self.space.len();
        let h = self.space.h();
        match self.space.dimension() {
            1 => {
                for (j, v) in self.velocity.points().iter().enumerate() {
                    let c = v[0] * dt / (epsilon * h[0]);
                    upwind_1d(&mut values[j * n..(j + 1) * n], c);
                }
            }
            _ => {
                let [nx, ny] = self.space.n_cells();
                scratch.resize(n, 0.0);
                for (j, v) in self.velocity.points().iter().enumerate() {
                    let cx = v[0] * dt / (epsilon * h[0]);
                    let cy = v[1] * dt / (epsilon * h[1]);
                    let f = &mut values[j * n..(j + 1) * n];
                    scratch.copy_from_slice(f);
                    for iy in 0..ny {
                        let up_y = if cy >= 0.0 { (iy + ny - 1) % ny } else { (iy + 1) % ny };
                        for ix in 0..nx {
                            let up_x = if cx >= 0.0 { (ix + nx - 1) % nx } else { (ix + 1) % nx };
                            let k = iy * nx + ix;
                            let old = scratch[k];
                            f[k] = old - cx.abs() * (old - scratch[iy * nx + up_x])
                                - cy.abs() * (old - scratch[up_y * nx + ix]);
                        }
                    }
                }
            }
        }
    }

    fn check_step(&self, epsilon: f64, dt: f64) -> Result<()> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(dt >= 0.0) {
            return Err(Error::InvalidInput(format!("time step must be nonnegative, got {dt}")));
        }
        let number = dt * self.transport_rate() / epsilon;
        if number > self.options.cfl * (1.0 + 1e-12) {
            return Err(Error::CflViolation {
                number,
                limit: self.options.cfl,
            });
        }
        Ok(())
    }

    fn check_negativity(&self, state: &KineticState) -> Result<f64> {
        let min = state.min_value();
        if min < -self.options.negativity_tolerance {
            return Err(Error::NegativeDensity { min, time: state.time });
        }
        Ok(min)
    }

    /// One Strang step of length `dt`.
    pub fn step_kinetic(
        &self,
        state: &KineticState,
        kernel: &KernelField,
        epsilon: f64,
        dt: f64,
    ) -> Result<KineticState> {
        self.check_step(epsilon, dt)?;
        let gens = self.generators(kernel, epsilon)?;
        let half = self.propagator(&gens, 0.5 * dt / (epsilon * epsilon));
        let mut next = state.clone();
        let mut scratch = Vec::new();
        self.relax(&mut next.values, &half);
        self.transport(&mut next.values, epsilon, dt, &mut scratch);
        self.relax(&mut next.values, &half);
        next.time = state.time + dt;
        self.check_negativity(&next)?;
        Ok(next)
    }

    /// Advances `f0` to `t_final`, recording states at each snapshot time.
    /// The last step before a snapshot is shortened to land on it exactly.
    pub fn solve_kinetic(
        &self,
        f0: &KineticState,
        kernel: &KernelField,
        epsilon: f64,
        t_final: f64,
        snapshot_times: &[f64],
    ) -> Result<KineticSolution> {
        validate_times(f0.time, t_final, snapshot_times)?;
        let dt_max = self.max_time_step(epsilon);
        self.check_step(epsilon, dt_max)?;
        let gens = self.generators(kernel, epsilon)?;
        let inv_eps2 = 1.0 / (epsilon * epsilon);

        let mut cache: HashMap<u64, Propagator> = HashMap::new();
        let mut relax_for = |solver: &Self, values: &mut [f64], tau_dt: f64| {
            let key = tau_dt.to_bits();
            let prop = cache
                .entry(key)
                .or_insert_with(|| solver.propagator(&gens, tau_dt * inv_eps2));
            solver.relax(values, prop);
        };

        let mut state = f0.clone();
        let mut diag = SolveDiagnostics::new(self.mass(f0), f0.min_value());
        let mut snapshots = Vec::with_capacity(snapshot_times.len());
        let mut scratch = Vec::new();

        let mut stops: Vec<f64> = snapshot_times.to_vec();
        if stops.last().is_none_or(|&t| t < t_final) {
            stops.push(t_final);
        }
        let n_snap = snapshot_times.len();
        for (s, &stop) in stops.iter().enumerate() {
            let steps = step_sequence(state.time, stop, dt_max);
            if let Some(&first) = steps.first() {
                relax_for(self, &mut state.values, 0.5 * first);
                for (k, &dt) in steps.iter().enumerate() {
                    self.transport(&mut state.values, epsilon, dt, &mut scratch);
                    let next = steps.get(k + 1).copied().unwrap_or(0.0);
                    relax_for(self, &mut state.values, 0.5 * (dt + next));
                }
                diag.steps += steps.len();
            }
            state.time = stop;
            let min = self.check_negativity(&state)?;
            diag.record(self.mass(&state), min);
            if s < n_snap {
                snapshots.push(state.clone());
            }
        }
        Ok(KineticSolution {
            snapshots,
            final_state: state,
            diagnostics: diag,
        })
    }
}

enum Generators {
    Uniform(DMatrix<f64>),
    PerCell { unique: Vec<DMatrix<f64>>, index: Vec<usize> },
}

/// Upwind update of one periodic velocity slice with signed transport number `c`.
fn upwind_1d(f: &mut [f64], c: f64) {
    let n = f.len();
    if c > 0.0 {
        let mut prev = f[n - 1];
        for x in f.iter_mut() {
            let cur = *x;
            *x = cur - c * (cur - prev);
            prev = cur;
        }
    } else if c < 0.0 {
        let a = -c;
        let mut next = f[0];
        for x in f.iter_mut().rev() {
            let cur = *x;
            *x = cur - a * (cur - next);
            next = cur;
        }
    }
}

/// Steps of at most `dt_max` covering `[start, stop]`; only the last is shorter.
pub(crate) fn step_sequence(start: f64, stop: f64, dt_max: f64) -> Vec<f64> {
    let span = stop - start;
    if span <= 0.0 {
        return Vec::new();
    }
    let full = (span / dt_max).floor() as usize;
    let mut steps = vec![dt_max; full];
    let rem = span - full as f64 * dt_max;
    if rem > 1e-12 * dt_max {
        steps.push(rem);
    } else if full == 0 {
        steps.push(span);
    }
    steps
}

pub(crate) fn validate_times(start: f64, t_final: f64, snapshot_times: &[f64]) -> Result<()> {
    if !(t_final >= start) {
        return Err(Error::InvalidInput(format!("final time {t_final} precedes start {start}")));
    }
    let mut prev = start;
    for &t in snapshot_times {
        if !(t >= prev) || t > t_final {
            return Err(Error::InvalidInput(format!(
                "snapshot times must be sorted within [{start}, {t_final}], got {snapshot_times:?}"
            )));
        }
        prev = t;
    }
    Ok(())
}
