//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

use chemobayes::experiments::ExperimentConfig;
use chemobayes::{KernelParams, SpatialGrid};

/// Exact solution of the periodic two-velocity kinetic equation
///
/// `ε² ∂_t f± ± ε ∂_x f± = (K_ε f)±`,  `K_ε(v, v') = λ + εβ(v − v')`,
///
/// started from `f0 = ρ0 / 2`, evaluated mode by mode with a complex matrix
/// exponential. `rho0` holds point values on a uniform periodic grid; the
/// initial data is their trigonometric interpolant. Returns `ρ(·, t)`.
pub fn spectral_two_velocity(rho0: &[f64], length: f64, lambda: f64, beta: f64, eps: f64, t: f64) -> Vec<f64> {
    let n = rho0.len();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut hat: Vec<Complex64> = rho0.iter().map(|&r| Complex64::new(0.5 * r, 0.0)).collect();
    fwd.process(&mut hat);

    // Rates into v = −1 from +1 and into +1 from −1.
    let to_minus = lambda - 2.0 * eps * beta;
    let to_plus = lambda + 2.0 * eps * beta;
    let mut minus = vec![Complex64::new(0.0, 0.0); n];
    let mut plus = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        let m = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        let xi = 2.0 * PI * m / length;
        // d/dt (f−, f+) = A (f−, f+)
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(-to_plus / (eps * eps), xi / eps),
                Complex64::new(to_minus / (eps * eps), 0.0),
                Complex64::new(to_plus / (eps * eps), 0.0),
                Complex64::new(-to_minus / (eps * eps), -xi / eps),
            ],
        );
        let e = (a * Complex64::new(t, 0.0)).exp();
        let v = &e * DVector::from_vec(vec![hat[k], hat[k]]);
        minus[k] = v[0];
        plus[k] = v[1];
    }
    inv.process(&mut minus);
    inv.process(&mut plus);
    minus
        .iter()
        .zip(&plus)
        .map(|(a, b)| (a.re + b.re) / n as f64)
        .collect()
}

/// `∫ G_t(x − y) ρ0(y) dy` for the periodic drift–diffusion kernel, by image
/// sums over `2·images + 1` periods with midpoint quadrature in `y`.
pub fn drift_diffusion_image_sum(grid: &SpatialGrid, rho0: &[f64], d: f64, gamma: f64, t: f64, images: i32) -> Vec<f64> {
    let l = grid.length()[0];
    let h = grid.h()[0];
    let xs = grid.centers();
    xs.iter()
        .map(|x| {
            let mut s = 0.0;
            for (y, r) in xs.iter().zip(rho0) {
                if *r == 0.0 {
                    continue;
                }
                for m in -images..=images {
                    let z = x[0] - y[0] - gamma * t + m as f64 * l;
                    s += h * r * (-z * z / (4.0 * d * t)).exp() / (4.0 * PI * d * t).sqrt();
                }
            }
            s
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn centroid_and_variance(grid: &SpatialGrid, rho: &[f64]) -> (f64, f64) {
    let m: f64 = rho.iter().sum();
    let xs = grid.centers();
    let mean = xs.iter().zip(rho).map(|(x, r)| x[0] * r).sum::<f64>() / m;
    let var = xs.iter().zip(rho).map(|(x, r)| r * (x[0] - mean).powi(2)).sum::<f64>() / m;
    (mean, var)
}

/// Five admissible samples spanning the default prior box, no two related by
/// the reflection `β → −β`.
pub fn box_samples() -> Vec<KernelParams> {
    vec![
        KernelParams::new(0.5, -0.6),
        KernelParams::new(0.75, 0.5),
        KernelParams::new(2.0, 0.6),
        KernelParams::new(1.5, -0.3),
        KernelParams::new(1.0, 0.3),
    ]
}

/// Default experiment with a small prior grid and a coarser spatial grid.
pub fn reduced_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.space.n_cells = vec![1200];
    c.prior.lambda.nodes = 7;
    c.prior.beta.nodes = 5;
    c
}
