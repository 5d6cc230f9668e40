//! Finite-volume solver for the Keller–Segel limit
//!
//! ```text
//! ∂_t ρ − ∇·(D ∇ρ) + ∇·(ρ Γ) = 0
//! ```
//!
//! on a periodic grid. Face fluxes along each axis use the exponentially
//! fitted Scharfetter–Gummel form
//!
//! ```text
//! F_{i+½} = (D/h) [ B(−P) ρ_i − B(P) ρ_{i+1} ],   P = Γ h / D,   B(z) = z / (e^z − 1)
//! ```
//!
//! which is second-order centered when `|P|` is small and reduces to upwind as
//! `D → 0`. The semi-discrete operator has nonnegative off-diagonals and zero
//! column sums, so it conserves mass and positivity.
//!
//! With uniform coefficients the operator is circulant and is propagated
//! exactly in Fourier space, so the only error is the spatial one. Per-cell
//! coefficient fields use implicit Euler with periodic tridiagonal solves,
//! dimension-split in 2D.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetic::{macro_density, step_sequence, validate_times, KineticState, SolveDiagnostics};
use crate::macro_coeffs::MacroCoefficients;
use crate::spatial::SpatialGrid;
use crate::velocity::VelocityGrid;

const PSD_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroState {
    pub values: Vec<f64>,
    pub time: f64,
}

impl MacroState {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, time: 0.0 }
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `ρ_0 = ∫ f_0 dv`.
pub fn restrict_initial(f0: &KineticState, velocity: &VelocityGrid) -> MacroState {
    MacroState {
        values: macro_density(f0, velocity),
        time: f0.time,
    }
}

/// Macroscopic coefficients as a function of space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientField {
    Uniform(MacroCoefficients),
    PerCell(Vec<MacroCoefficients>),
}

impl From<MacroCoefficients> for CoefficientField {
    fn from(c: MacroCoefficients) -> Self {
        CoefficientField::Uniform(c)
    }
}

impl From<&MacroCoefficients> for CoefficientField {
    fn from(c: &MacroCoefficients) -> Self {
        CoefficientField::Uniform(c.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KsTimeIntegration {
    /// Exact propagation of the semi-discrete system (uniform coefficients
    /// only; fields fall back to implicit Euler).
    Exponential,
    ImplicitEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsOptions {
    pub time_integration: KsTimeIntegration,
    /// Implicit Euler step as a multiple of the smallest cell width.
    pub implicit_dt_factor: f64,
    pub negativity_tolerance: f64,
}

impl Default for KsOptions {
    fn default() -> Self {
        Self {
            time_integration: KsTimeIntegration::Exponential,
            implicit_dt_factor: 0.25,
            negativity_tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroSolution {
    pub snapshots: Vec<MacroState>,
    pub final_state: MacroState,
    pub diagnostics: SolveDiagnostics,
}

/// `B(z) = z / (e^z − 1)`.
fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - 0.5 * z
    } else {
        z / z.exp_m1()
    }
}

/// `(a, b)` with face flux `F = a ρ_left − b ρ_right`.
fn face_rates(d: f64, gamma: f64, h: f64) -> (f64, f64) {
    if d <= 0.0 {
        return (gamma.max(0.0), (-gamma).max(0.0));
    }
    let p = gamma * h / d;
    (d / h * bernoulli(-p), d / h * bernoulli(p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsSolver {
    pub space: SpatialGrid,
    pub options: KsOptions,
}

impl KsSolver {
    pub fn new(space: SpatialGrid) -> Self {
        Self {
            space,
            options: KsOptions::default(),
        }
    }

    pub fn with_options(space: SpatialGrid, options: KsOptions) -> Result<Self> {
        if !(options.implicit_dt_factor > 0.0) {
            return Err(Error::InvalidInput("implicit_dt_factor must be positive".into()));
        }
        Ok(Self { space, options })
    }

    pub fn mass(&self, state: &MacroState) -> f64 {
        self.space.integrate(&state.values)
    }

    fn check_coefficients(&self, c: &MacroCoefficients) -> Result<()> {
        let d = self.space.dimension();
        if c.dimension() != d || c.diffusion.iter().any(|row| row.len() != d) {
            return Err(Error::InvalidInput(format!(
                "coefficients of dimension {} on a {d}-dimensional grid",
                c.dimension()
            )));
        }
        if c.diffusion.iter().flatten().chain(&c.drift).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite macroscopic coefficient".into()));
        }
        let min = c.min_eigenvalue();
        if min < -PSD_TOLERANCE {
            return Err(Error::IndefiniteDiffusion { min_eigenvalue: min });
        }
        Ok(())
    }

    fn check_field(&self, field: &CoefficientField) -> Result<()> {
        match field {
            CoefficientField::Uniform(c) => self.check_coefficients(c),
            CoefficientField::PerCell(cs) => {
                if cs.len() != self.space.len() {
                    return Err(Error::LengthMismatch {
                        expected: self.space.len(),
                        got: cs.len(),
                    });
                }
                cs.iter().try_for_each(|c| self.check_coefficients(c))
            }
        }
    }

    fn check_negativity(&self, state: &MacroState) -> Result<f64> {
        let min = state.min_value();
        if min < -self.options.negativity_tolerance {
            return Err(Error::NegativeDensity { min, time: state.time });
        }
        Ok(min)
    }

    /// Advances `rho0` to `t_final`, recording states at each snapshot time.
    pub fn solve_ks(
        &self,
        rho0: &MacroState,
        coeffs: &CoefficientField,
        t_final: f64,
        snapshot_times: &[f64],
    ) -> Result<MacroSolution> {
        if rho0.values.len() != self.space.len() {
            return Err(Error::LengthMismatch {
                expected: self.space.len(),
                got: rho0.values.len(),
            });
        }
        validate_times(rho0.time, t_final, snapshot_times)?;
        self.check_field(coeffs)?;

        let mut stops: Vec<f64> = snapshot_times.to_vec();
        if stops.last().is_none_or(|&t| t < t_final) {
            stops.push(t_final);
        }
        let uniform = match coeffs {
            CoefficientField::Uniform(c) => Some(c),
            CoefficientField::PerCell(_) => None,
        };
        let states = match (uniform, self.options.time_integration) {
            (Some(c), KsTimeIntegration::Exponential) => self.propagate_exponential(rho0, c, &stops)?,
            _ => self.propagate_implicit(rho0, coeffs, &stops)?,
        };

        let mut diag = SolveDiagnostics::new(self.mass(rho0), rho0.min_value());
        for s in &states {
            let min = self.check_negativity(s)?;
            diag.record(self.mass(s), min);
        }
        let final_state = states.last().cloned().unwrap_or_else(|| rho0.clone());
        let snapshots = states.into_iter().take(snapshot_times.len()).collect();
        Ok(MacroSolution {
            snapshots,
            final_state,
            diagnostics: diag,
        })
    }

    /// Fourier symbol of the 1D operator along one axis at angle `θ`.
    fn axis_symbol(d: f64, gamma: f64, h: f64, theta: f64) -> Complex64 {
        let (a, b) = face_rates(d, gamma, h);
        let em = Complex64::from_polar(1.0, -theta) - 1.0;
        let ep = Complex64::from_polar(1.0, theta) - 1.0;
        (em * a + ep * b) / h
    }

    fn propagate_exponential(&self, rho0: &MacroState, c: &MacroCoefficients, stops: &[f64]) -> Result<Vec<MacroState>> {
        let [nx, ny] = self.space.n_cells();
        let h = self.space.h();
        let dim = self.space.dimension();
        let tau = std::f64::consts::TAU;
        let sx: Vec<Complex64> = (0..nx)
            .map(|k| Self::axis_symbol(c.diffusion[0][0], c.drift[0], h[0], tau * k as f64 / nx as f64))
            .collect();
        let (sy, cross): (Vec<Complex64>, f64) = if dim == 2 {
            (
                (0..ny)
                    .map(|k| Self::axis_symbol(c.diffusion[1][1], c.drift[1], h[1], tau * k as f64 / ny as f64))
                    .collect(),
                0.5 * (c.diffusion[0][1] + c.diffusion[1][0]),
            )
        } else {
            (vec![Complex64::new(0.0, 0.0)], 0.0)
        };
        let mut symbol = vec![Complex64::new(0.0, 0.0); nx * ny];
        for ky in 0..ny {
            for kx in 0..nx {
                let mut s = sx[kx] + sy[ky];
                if cross != 0.0 {
                    let tx = tau * kx as f64 / nx as f64;
                    let ty = tau * ky as f64 / ny as f64;
                    s -= 2.0 * cross * tx.sin() * ty.sin() / (h[0] * h[1]);
                }
                symbol[ky * nx + kx] = s;
            }
        }
        symbol[0] = Complex64::new(0.0, 0.0);

        let fft = Fft2::new(nx, ny);
        let mut hat: Vec<Complex64> = rho0.values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        fft.forward(&mut hat);
        let scale = 1.0 / (nx * ny) as f64;
        let mut out = Vec::with_capacity(stops.len());
        for &t in stops {
            let dt = t - rho0.time;
            let mut buf: Vec<Complex64> = hat.iter().zip(&symbol).map(|(x, s)| x * (s * dt).exp()).collect();
            fft.inverse(&mut buf);
            out.push(MacroState {
                values: buf.iter().map(|z| z.re * scale).collect(),
                time: t,
            });
        }
        Ok(out)
    }

    fn implicit_dt(&self) -> f64 {
        let h = self.space.h();
        let hmin = if self.space.dimension() == 1 { h[0] } else { h[0].min(h[1]) };
        self.options.implicit_dt_factor * hmin
    }

    fn propagate_implicit(&self, rho0: &MacroState, field: &CoefficientField, stops: &[f64]) -> Result<Vec<MacroState>> {
        let n = self.space.len();
        let cell = |i: usize| -> &MacroCoefficients {
            match field {
                CoefficientField::Uniform(c) => c,
                CoefficientField::PerCell(cs) => &cs[i],
            }
        };
        if self.space.dimension() == 2 && (0..n).any(|i| cell(i).diffusion[0][1].abs() > 1e-14) {
            return Err(Error::InvalidInput(
                "off-diagonal diffusion needs uniform coefficients and exponential time integration".into(),
            ));
        }
        let [nx, ny] = self.space.n_cells();
        let h = self.space.h();
        // Face rates: x-face to the right of each cell, y-face above it.
        let face = |i: usize, j: usize, axis: usize| {
            let (ci, cj) = (cell(i), cell(j));
            let d = 0.5 * (ci.diffusion[axis][axis] + cj.diffusion[axis][axis]);
            let g = 0.5 * (ci.drift[axis] + cj.drift[axis]);
            face_rates(d, g, h[axis])
        };
        let x_faces: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let (ix, iy) = (i % nx, i / nx);
                face(i, iy * nx + (ix + 1) % nx, 0)
            })
            .collect();
        let y_faces: Vec<(f64, f64)> = if self.space.dimension() == 2 {
            (0..n)
                .map(|i| {
                    let (ix, iy) = (i % nx, i / nx);
                    face(i, ((iy + 1) % ny) * nx + ix, 1)
                })
                .collect()
        } else {
            Vec::new()
        };

        let dt_max = self.implicit_dt();
        let mut values = rho0.values.clone();
        let mut t = rho0.time;
        let mut out = Vec::with_capacity(stops.len());
        let mut line = Vec::new();
        let mut rates = Vec::new();
        for &stop in stops {
            for dt in step_sequence(t, stop, dt_max) {
                for iy in 0..ny {
                    let idx: Vec<usize> = (0..nx).map(|ix| iy * nx + ix).collect();
                    rates.clear();
                    rates.extend(idx.iter().map(|&i| x_faces[i]));
                    implicit_line(&mut values, &idx, &rates, dt / h[0], &mut line);
                }
                if !y_faces.is_empty() {
                    for ix in 0..nx {
                        let idx: Vec<usize> = (0..ny).map(|iy| iy * nx + ix).collect();
                        rates.clear();
                        rates.extend(idx.iter().map(|&i| y_faces[i]));
                        implicit_line(&mut values, &idx, &rates, dt / h[1], &mut line);
                    }
                }
            }
            t = stop;
            out.push(MacroState {
                values: values.clone(),
                time: stop,
            });
        }
        Ok(out)
    }
}

/// One implicit Euler step along a periodic line of cells. `rates[k]` are the
/// `(a, b)` of the face between `idx[k]` and `idx[k+1]`.
fn implicit_line(values: &mut [f64], idx: &[usize], rates: &[(f64, f64)], r: f64, rhs: &mut Vec<f64>) {
    let n = idx.len();
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    rhs.clear();
    for k in 0..n {
        let (a_right, b_right) = rates[k];
        let (a_left, b_left) = rates[(k + n - 1) % n];
        sub[k] = -r * a_left;
        diag[k] = 1.0 + r * (a_right + b_left);
        sup[k] = -r * b_right;
        rhs.push(values[idx[k]]);
    }
    let x = solve_cyclic_tridiagonal(&sub, &diag, &sup, rhs);
    for (k, &i) in idx.iter().enumerate() {
        values[i] = x[k];
    }
}

/// Solves the periodic tridiagonal system with `sub[0]` in the top-right
/// corner and `sup[n−1]` in the bottom-left (Sherman–Morrison).
pub fn solve_cyclic_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let alpha = sup[n - 1];
    let beta = sub[0];
    let gamma = -diag[0];
    let mut b = diag.to_vec();
    b[0] -= gamma;
    b[n - 1] -= alpha * beta / gamma;
    let x = thomas(sub, &b, sup, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = thomas(sub, &b, sup, &u);
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}

fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / m;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Row-then-column complex FFT on an `nx × ny` array stored `iy * nx + ix`.
struct Fft2 {
    nx: usize,
    ny: usize,
    fx: std::sync::Arc<dyn rustfft::Fft<f64>>,
    fy: std::sync::Arc<dyn rustfft::Fft<f64>>,
    ix: std::sync::Arc<dyn rustfft::Fft<f64>>,
    iy: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Fft2 {
    fn new(nx: usize, ny: usize) -> Self {
        let mut p = FftPlanner::new();
        Self {
            nx,
            ny,
            fx: p.plan_fft_forward(nx),
            fy: p.plan_fft_forward(ny),
            ix: p.plan_fft_inverse(nx),
            iy: p.plan_fft_inverse(ny),
        }
    }

    fn run(&self, data: &mut [Complex64], rows: &dyn rustfft::Fft<f64>, cols: &dyn rustfft::Fft<f64>) {
        rows.process(data);
        if self.ny > 1 {
            let mut col = vec![Complex64::new(0.0, 0.0); self.ny];
            for ix in 0..self.nx {
                for iy in 0..self.ny {
                    col[iy] = data[iy * self.nx + ix];
                }
                cols.process(&mut col);
                for iy in 0..self.ny {
                    data[iy * self.nx + ix] = col[iy];
                }
            }
        }
    }

    fn forward(&self, data: &mut [Complex64]) {
        self.run(data, self.fx.as_ref(), self.fy.as_ref());
    }

    fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, self.ix.as_ref(), self.iy.as_ref());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::SpatialProfile;
    use std::f64::consts::PI;

    fn bump_state(grid: &SpatialGrid, center: f64, radius: f64) -> MacroState {
        MacroState::new(SpatialProfile::single_bump(center, radius).evaluate(grid).unwrap())
    }

    fn centroid(grid: &SpatialGrid, rho: &[f64]) -> f64 {
        let m: f64 = rho.iter().sum();
        grid.centers().iter().zip(rho).map(|(x, r)| x[0] * r).sum::<f64>() / m
    }

    #[test]
    fn bernoulli_limits() {
        assert!((bernoulli(0.0) - 1.0).abs() < 1e-15);
        assert!((bernoulli(1e-3) - 1e-3 / (1e-3f64).exp_m1()).abs() < 1e-12);
        assert_eq!(bernoulli(800.0), 0.0);
        assert!((bernoulli(-800.0) - 800.0).abs() < 1e-9);
        assert_eq!(face_rates(0.0, 0.6, 0.1), (0.6, 0.0));
        assert_eq!(face_rates(0.0, -0.6, 0.1), (0.0, 0.6));
    }

    #[test]
    fn heat_kernel_image_sum() {
        let length = 10.0;
        let grid = SpatialGrid::new_1d(200, length).unwrap();
        let rho0 = bump_state(&grid, 5.0, 1.0);
        let s = KsSolver::new(grid.clone());
        let sol = s
            .solve_ks(&rho0, &MacroCoefficients::new_1d(0.5, 0.0).into(), 0.25, &[0.25])
            .unwrap();
        let (d, t, h) = (0.5, 0.25, grid.h()[0]);
        let xs = grid.centers();
        let mut err: f64 = 0.0;
        for (i, x) in xs.iter().enumerate() {
            let mut exact = 0.0;
            for (y, r0) in xs.iter().zip(&rho0.values) {
                for m in -100..=100 {
                    let z = x[0] - y[0] + m as f64 * length;
                    exact += h * r0 * (-z * z / (4.0 * d * t)).exp() / (4.0 * PI * d * t).sqrt();
                }
            }
            err = err.max((sol.snapshots[0].values[i] - exact).abs());
        }
        assert!(err < 1e-3, "heat kernel error {err}");
    }

    #[test]
    fn pure_drift_translates_centroid() {
        let grid = SpatialGrid::new_1d(200, 10.0).unwrap();
        let rho0 = bump_state(&grid, 4.0, 0.75);
        for method in [KsTimeIntegration::Exponential, KsTimeIntegration::ImplicitEuler] {
            let s = KsSolver::with_options(
                grid.clone(),
                KsOptions {
                    time_integration: method,
                    ..Default::default()
                },
            )
            .unwrap();
            let sol = s
                .solve_ks(&rho0, &MacroCoefficients::new_1d(0.0, 0.6).into(), 0.5, &[0.5])
                .unwrap();
            let shift = centroid(&grid, &sol.snapshots[0].values) - centroid(&grid, &rho0.values);
            assert!((shift - 0.3).abs() < grid.h()[0], "{method:?}: shift {shift}");
        }
    }

    #[test]
    fn zero_time_is_identity() {
        let grid = SpatialGrid::new_1d(64, 4.0).unwrap();
        let rho0 = bump_state(&grid, 2.0, 0.5);
        let s = KsSolver::new(grid);
        let sol = s
            .solve_ks(&rho0, &MacroCoefficients::new_1d(0.7, 0.4).into(), 0.0, &[0.0])
            .unwrap();
        for (a, b) in sol.snapshots[0].values.iter().zip(&rho0.values) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn conserves_mass_and_sign() {
        let grid = SpatialGrid::new_1d(400, 12.0).unwrap();
        let rho0 = bump_state(&grid, 6.0, 0.75);
        let s = KsSolver::new(grid);
        for (d, g) in [(0.5, 0.6), (0.25, -1.2), (1e-3, 2.0), (0.0, 0.3)] {
            let sol = s
                .solve_ks(&rho0, &MacroCoefficients::new_1d(d, g).into(), 0.5, &[0.1, 0.25, 0.5])
                .unwrap();
            assert!(sol.diagnostics.max_relative_mass_drift < 1e-11);
            assert!(sol.diagnostics.min_value >= -1e-12);
        }
    }

    #[test]
    fn implicit_euler_approaches_exponential() {
        let grid = SpatialGrid::new_1d(200, 10.0).unwrap();
        let rho0 = bump_state(&grid, 5.0, 0.75);
        let c: CoefficientField = MacroCoefficients::new_1d(0.5, 0.6).into();
        let exact = KsSolver::new(grid.clone()).solve_ks(&rho0, &c, 0.5, &[0.5]).unwrap();
        let err = |factor: f64| {
            let s = KsSolver::with_options(
                grid.clone(),
                KsOptions {
                    time_integration: KsTimeIntegration::ImplicitEuler,
                    implicit_dt_factor: factor,
                    ..Default::default()
                },
            )
            .unwrap();
            let sol = s.solve_ks(&rho0, &c, 0.5, &[0.5]).unwrap();
            sol.snapshots[0]
                .values
                .iter()
                .zip(&exact.snapshots[0].values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(0.5), err(0.25));
        assert!(e2 < e1 && e1 / e2 > 1.8 && e1 / e2 < 2.2, "{e1} {e2}");
    }

    #[test]
    fn uniform_per_cell_field_matches_implicit_uniform() {
        let grid = SpatialGrid::new_1d(64, 4.0).unwrap();
        let rho0 = bump_state(&grid, 2.0, 0.5);
        let c = MacroCoefficients::new_1d(0.4, 0.2);
        let s = KsSolver::with_options(
            grid,
            KsOptions {
                time_integration: KsTimeIntegration::ImplicitEuler,
                ..Default::default()
            },
        )
        .unwrap();
        let a = s.solve_ks(&rho0, &c.clone().into(), 0.2, &[0.2]).unwrap();
        let b = s.solve_ks(&rho0, &CoefficientField::PerCell(vec![c; 64]), 0.2, &[0.2]).unwrap();
        for (x, y) in a.final_state.values.iter().zip(&b.final_state.values) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn variable_field_conserves_mass() {
        let grid = SpatialGrid::new_1d(128, 8.0).unwrap();
        let rho0 = bump_state(&grid, 4.0, 1.0);
        let field: Vec<MacroCoefficients> = grid
            .centers()
            .iter()
            .map(|x| MacroCoefficients::new_1d(0.2 + 0.1 * (x[0]).sin().powi(2), 0.5 * (x[0] / 2.0).cos()))
            .collect();
        let sol = KsSolver::new(grid)
            .solve_ks(&rho0, &CoefficientField::PerCell(field), 1.0, &[0.5, 1.0])
            .unwrap();
        assert!(sol.diagnostics.max_relative_mass_drift < 1e-12);
        assert!(sol.diagnostics.min_value >= -1e-12);
    }

    #[test]
    fn indefinite_diffusion_is_rejected() {
        let grid = SpatialGrid::new_1d(64, 4.0).unwrap();
        let rho0 = bump_state(&grid, 2.0, 0.5);
        let err = KsSolver::new(grid)
            .solve_ks(&rho0, &MacroCoefficients::new_1d(-0.1, 0.0).into(), 0.1, &[])
            .unwrap_err();
        assert!(matches!(err, Error::IndefiniteDiffusion { .. }));
    }

    #[test]
    fn separable_two_dimensional_solution() {
        let g1 = SpatialGrid::new_1d(32, 4.0).unwrap();
        let g2 = SpatialGrid::new_2d([32, 32], [4.0, 4.0]).unwrap();
        let px = SpatialProfile::single_bump(1.8, 0.8).evaluate(&g1).unwrap();
        let py = SpatialProfile::single_bump(2.2, 1.0).evaluate(&g1).unwrap();
        let mut v = vec![0.0; 32 * 32];
        for iy in 0..32 {
            for ix in 0..32 {
                v[iy * 32 + ix] = px[ix] * py[iy];
            }
        }
        let c2 = MacroCoefficients {
            diffusion: vec![vec![0.3, 0.0], vec![0.0, 0.2]],
            drift: vec![0.4, -0.5],
        };
        let s1 = KsSolver::new(g1);
        let x = s1
            .solve_ks(&MacroState::new(px), &MacroCoefficients::new_1d(0.3, 0.4).into(), 0.3, &[])
            .unwrap()
            .final_state;
        let y = s1
            .solve_ks(&MacroState::new(py), &MacroCoefficients::new_1d(0.2, -0.5).into(), 0.3, &[])
            .unwrap()
            .final_state;
        let sol = KsSolver::new(g2).solve_ks(&MacroState::new(v), &c2.into(), 0.3, &[]).unwrap();
        for iy in 0..32 {
            for ix in 0..32 {
                let want = x.values[ix] * y.values[iy];
                assert!((sol.final_state.values[iy * 32 + ix] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cyclic_tridiagonal_solver() {
        let n = 7;
        let sub: Vec<f64> = (0..n).map(|i| -0.3 - 0.01 * i as f64).collect();
        let sup: Vec<f64> = (0..n).map(|i| -0.2 + 0.02 * i as f64).collect();
        let diag = vec![2.0; n];
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = solve_cyclic_tridiagonal(&sub, &diag, &sup, &rhs);
        for i in 0..n {
            let lhs = sub[i] * x[(i + n - 1) % n] + diag[i] * x[i] + sup[i] * x[(i + 1) % n];
            assert!((lhs - rhs[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn restrict_initial_integrates_velocity() {
        use crate::kernel::KernelFamily;
        use crate::kinetic::KineticSolver;
        let grid = SpatialGrid::new_1d(64, 4.0).unwrap();
        let vg = VelocityGrid::new(1, 2).unwrap();
        let ks = KineticSolver::new(grid.clone(), vg.clone(), KernelFamily::default()).unwrap();
        let prof = SpatialProfile::single_bump(2.0, 0.5);
        let f0 = ks.make_initial_kinetic(&prof, None, None).unwrap();
        let rho0 = restrict_initial(&f0, &vg);
        let g = prof.evaluate(&grid).unwrap();
        for (a, b) in rho0.values.iter().zip(&g) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((grid.integrate(&rho0.values) - ks.mass(&f0)).abs() < 1e-15);
    }

    #[test]
    fn grid_refinement_reduces_self_error() {
        let coeffs: CoefficientField = MacroCoefficients::new_1d(0.5, 0.6).into();
        let solve = |n: usize| {
            let grid = SpatialGrid::new_1d(n, 12.0).unwrap();
            let rho0 = bump_state(&grid, 6.0, 0.75);
            KsSolver::new(grid).solve_ks(&rho0, &coeffs, 0.5, &[]).unwrap().final_state.values
        };
        let fine = solve(3200);
        let err = |n: usize| {
            let r = 3200 / n;
            let coarse = solve(n);
            coarse
                .iter()
                .enumerate()
                .map(|(i, c)| (c - fine[i * r..(i + 1) * r].iter().sum::<f64>() / r as f64).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(100), err(200));
        assert!(e1 / e2 >= 1.7, "{e1} {e2}");
    }
}
