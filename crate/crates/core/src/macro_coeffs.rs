//! Cell problems and the Keller–Segel coefficients derived from a kernel.
//!
//! `D = ∫ v ⊗ κ dv` and `Γ = −∫ v θ dv`, where `κ` and `θ` are the mean-zero
//! solutions of `𝒦_0(κ) = −vF` and `𝒦_0(θ) = 𝒦_1(F)`.
//!
//! The right-hand side of the κ problem carries a minus sign: with the
//! unsigned form `𝒦_0(κ) = vF` the resulting `D` is negative definite, which
//! disagrees with the variance growth of the kinetic dynamics. The drift keeps
//! the unsigned form, which already matches the centroid motion.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{assemble_k1_matrix, assemble_tumbling_matrix, KernelFamily, KernelParams, TumblingMatrix};
use crate::velocity::VelocityGrid;

/// Sign applied to `vF` in the κ cell problem.
pub const KAPPA_SIGN: f64 = -1.0;

/// Largest condition estimate accepted for the bordered cell-problem system.
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSolution {
    /// `kappa[i][c]`: component `c` of κ at velocity point `i`.
    pub kappa: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
    pub kappa_residual: f64,
    pub theta_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroCoefficients {
    /// `d_x × d_x` diffusion tensor, row-major nested.
    pub diffusion: Vec<Vec<f64>>,
    pub drift: Vec<f64>,
}

impl MacroCoefficients {
    pub fn new_1d(diffusion: f64, drift: f64) -> Self {
        Self {
            diffusion: vec![vec![diffusion]],
            drift: vec![drift],
        }
    }

    pub fn dimension(&self) -> usize {
        self.drift.len()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        match self.dimension() {
            1 => self.diffusion[0][0],
            _ => {
                let a = self.diffusion[0][0];
                let d = self.diffusion[1][1];
                let b = 0.5 * (self.diffusion[0][1] + self.diffusion[1][0]);
                let mean = 0.5 * (a + d);
                let rad = (0.25 * (a - d).powi(2) + b * b).sqrt();
                mean - rad
            }
        }
    }

    pub fn max_eigenvalue(&self) -> f64 {
        match self.dimension() {
            1 => self.diffusion[0][0],
            _ => {
                let a = self.diffusion[0][0];
                let d = self.diffusion[1][1];
                let b = 0.5 * (self.diffusion[0][1] + self.diffusion[1][0]);
                0.5 * (a + d) + (0.25 * (a - d).powi(2) + b * b).sqrt()
            }
        }
    }
}

/// Solves `m x = rhs` on the quadrature-mean-zero subspace by bordering the
/// system with the weight vector (a Lagrange multiplier for `Σ w_i x_i = 0`).
fn solve_mean_zero(m: &DMatrix<f64>, weights: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = m.nrows();
    let mut a = DMatrix::zeros(n + 1, n + 1);
    a.view_mut((0, 0), (n, n)).copy_from(m);
    for i in 0..n {
        a[(i, n)] = weights[i];
        a[(n, i)] = weights[i];
    }
    let sv = a.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::SingularCellProblem { condition });
    }
    let mut b = DVector::zeros(n + 1);
    for i in 0..n {
        b[i] = rhs[i];
    }
    let x = a
        .lu()
        .solve(&b)
        .ok_or(Error::SingularCellProblem { condition })?;
    Ok(x.iter().take(n).copied().collect())
}

fn max_residual(m: &DMatrix<f64>, x: &[f64], rhs: &[f64]) -> f64 {
    let r = m * DVector::from_column_slice(x);
    r.iter().zip(rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Mean-zero κ with `𝒦_0(κ) = −vF`, one column per spatial direction.
pub fn solve_cell_kappa(k0: &TumblingMatrix, grid: &VelocityGrid, spatial_dim: usize) -> Result<Vec<Vec<f64>>> {
    Ok(solve_kappa_with_residual(k0, grid, spatial_dim)?.0)
}

fn solve_kappa_with_residual(
    k0: &TumblingMatrix,
    grid: &VelocityGrid,
    spatial_dim: usize,
) -> Result<(Vec<Vec<f64>>, f64)> {
    check_spatial_dim(grid, spatial_dim)?;
    let f = 1.0 / grid.measure();
    let n = grid.len();
    let mut kappa = vec![vec![0.0; spatial_dim]; n];
    let mut residual: f64 = 0.0;
    for c in 0..spatial_dim {
        let rhs: Vec<f64> = grid.points().iter().map(|v| KAPPA_SIGN * v[c] * f).collect();
        let col = solve_mean_zero(&k0.entries, grid.weights(), &rhs)?;
        residual = residual.max(max_residual(&k0.entries, &col, &rhs));
        for i in 0..n {
            kappa[i][c] = col[i];
        }
    }
    Ok((kappa, residual))
}

/// Mean-zero θ with `𝒦_0(θ) = 𝒦_1(F)`; `k1_on_equilibrium` is `𝒦_1(F)`.
pub fn solve_cell_theta(k0: &TumblingMatrix, k1_on_equilibrium: &[f64], grid: &VelocityGrid) -> Result<Vec<f64>> {
    if k1_on_equilibrium.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: k1_on_equilibrium.len(),
        });
    }
    solve_mean_zero(&k0.entries, grid.weights(), k1_on_equilibrium)
}

fn check_spatial_dim(grid: &VelocityGrid, spatial_dim: usize) -> Result<()> {
    if spatial_dim == 0 || spatial_dim > grid.dimension() {
        return Err(Error::InvalidInput(format!(
            "spatial dimension {spatial_dim} incompatible with velocity dimension {}",
            grid.dimension()
        )));
    }
    Ok(())
}

/// Solves both cell problems for a kernel and reports residuals.
pub fn solve_cells(
    family: &KernelFamily,
    params: &KernelParams,
    grid: &VelocityGrid,
    spatial_dim: usize,
) -> Result<CellSolution> {
    let k0 = assemble_tumbling_matrix(family, params, grid, 0.0);
    let (kappa, kappa_residual) = solve_kappa_with_residual(&k0, grid, spatial_dim)?;
    let k1 = assemble_k1_matrix(family, params, grid);
    let eq = DVector::from_vec(grid.equilibrium().values);
    let k1f: Vec<f64> = (&k1 * eq).iter().copied().collect();
    let theta = solve_cell_theta(&k0, &k1f, grid)?;
    let theta_residual = max_residual(&k0.entries, &theta, &k1f);
    Ok(CellSolution {
        kappa,
        theta,
        kappa_residual,
        theta_residual,
    })
}

/// `D` and `Γ` from a solved pair of cell problems.
pub fn coefficients_from_cells(cells: &CellSolution, grid: &VelocityGrid, spatial_dim: usize) -> MacroCoefficients {
    let w = grid.weights();
    let pts = grid.points();
    let mut diffusion = vec![vec![0.0; spatial_dim]; spatial_dim];
    let mut drift = vec![0.0; spatial_dim];
    for i in 0..grid.len() {
        for a in 0..spatial_dim {
            for (b, d) in diffusion[a].iter_mut().enumerate() {
                *d += w[i] * pts[i][a] * cells.kappa[i][b];
            }
            drift[a] -= w[i] * pts[i][a] * cells.theta[i];
        }
    }
    MacroCoefficients { diffusion, drift }
}

pub fn compute_macro(
    family: &KernelFamily,
    params: &KernelParams,
    grid: &VelocityGrid,
    spatial_dim: usize,
) -> Result<MacroCoefficients> {
    let cells = solve_cells(family, params, grid, spatial_dim)?;
    Ok(coefficients_from_cells(&cells, grid, spatial_dim))
}
