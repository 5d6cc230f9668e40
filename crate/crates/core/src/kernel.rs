//! Tumbling kernels `K_ε = K0 + ε K1` and the discrete tumbling operator.
//!
//! `K0(v, v') = λ + Σ_m c_m S_m(v, v')` with symmetric basis functions `S_m`,
//! and `K1(v, v') = β e·(v − v')` for a fixed unit direction `e`. Both
//! symmetries hold exactly by construction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::Add;

use crate::error::{Error, Result};
use crate::velocity::{dot, Velocity, VelocityGrid};

/// Symmetric basis functions of `(v, v')` that may be added to `K0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetricBasis {
    /// `v·v'`
    VDot,
    /// `(v·v')²`
    VDotSquared,
}

impl SymmetricBasis {
    pub fn eval(&self, v: &Velocity, vp: &Velocity) -> f64 {
        match self {
            SymmetricBasis::VDot => dot(v, vp),
            SymmetricBasis::VDotSquared => dot(v, vp).powi(2),
        }
    }
}

/// Fixed structure of a kernel family: the basis for the extras in `K0` and
/// the frozen chemoattractant-gradient direction used by `K1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelFamily {
    #[serde(default)]
    pub basis: Vec<SymmetricBasis>,
    #[serde(default = "default_direction")]
    pub direction: Velocity,
}

fn default_direction() -> Velocity {
    [1.0, 0.0]
}

impl Default for KernelFamily {
    fn default() -> Self {
        Self {
            basis: Vec::new(),
            direction: default_direction(),
        }
    }
}

impl KernelFamily {
    pub fn with_basis(basis: Vec<SymmetricBasis>) -> Self {
        Self {
            basis,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let norm = dot(&self.direction, &self.direction).sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "K1 direction must be a unit vector, |e| = {norm}"
            )));
        }
        Ok(())
    }
}

/// Parameters of one kernel in the family; the quantity being inferred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub lambda: f64,
    pub beta: f64,
    #[serde(default)]
    pub extras: Vec<f64>,
}

impl KernelParams {
    pub fn new(lambda: f64, beta: f64) -> Self {
        Self {
            lambda,
            beta,
            extras: Vec::new(),
        }
    }

    pub fn with_extras(lambda: f64, beta: f64, extras: Vec<f64>) -> Self {
        Self {
            lambda,
            beta,
            extras,
        }
    }

    /// Flat coordinate vector `(λ, β, extras...)`.
    pub fn coordinates(&self) -> Vec<f64> {
        let mut c = vec![self.lambda, self.beta];
        c.extend_from_slice(&self.extras);
        c
    }

    pub fn from_coordinates(c: &[f64]) -> Self {
        Self {
            lambda: c[0],
            beta: c[1],
            extras: c[2..].to_vec(),
        }
    }
}

impl fmt::Display for KernelParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(lambda={}, beta={}", self.lambda, self.beta)?;
        for (i, e) in self.extras.iter().enumerate() {
            write!(f, ", extra_{}={}", i + 1, e)?;
        }
        write!(f, ")")
    }
}

impl Add for &KernelParams {
    type Output = KernelParams;

    fn add(self, rhs: Self) -> KernelParams {
        let n = self.extras.len().max(rhs.extras.len());
        let extras = (0..n)
            .map(|i| self.extras.get(i).unwrap_or(&0.0) + rhs.extras.get(i).unwrap_or(&0.0))
            .collect();
        KernelParams {
            lambda: self.lambda + rhs.lambda,
            beta: self.beta + rhs.beta,
            extras,
        }
    }
}

pub fn evaluate_k0(family: &KernelFamily, params: &KernelParams, v: &Velocity, vp: &Velocity) -> f64 {
    params.lambda
        + family
            .basis
            .iter()
            .zip(&params.extras)
            .map(|(b, c)| c * b.eval(v, vp))
            .sum::<f64>()
}

pub fn evaluate_k1(family: &KernelFamily, params: &KernelParams, v: &Velocity, vp: &Velocity) -> f64 {
    let e = &family.direction;
    params.beta * (dot(e, v) - dot(e, vp))
}

/// Which admissibility constraint failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    /// `min K0 < α`
    LowerBound { min_k0: f64, alpha: f64 },
    /// `max |K0| > C`
    K0Bound { max_abs_k0: f64, c_bound: f64 },
    /// `max |K1| > C`
    K1Bound { max_abs_k1: f64, c_bound: f64 },
    /// Number of extras differs from the number of basis functions.
    ExtrasLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    pub min_k0: f64,
    pub max_abs_k0: f64,
    pub max_abs_k1: f64,
    pub violations: Vec<Violation>,
}

/// Pointwise bounds `α ≤ K0`, `|K0| ≤ C`, `|K1| ≤ C` over all grid pairs.
///
/// The kernels carry no `(x, t)` dependence and the basis is analytic in the
/// velocities, so the C¹ part of the admissible-set condition reduces to these
/// pointwise bounds.
pub fn check_admissible(
    family: &KernelFamily,
    params: &KernelParams,
    grid: &VelocityGrid,
    alpha: f64,
    c_bound: f64,
) -> AdmissibilityReport {
    let mut violations = Vec::new();
    if params.extras.len() != family.basis.len() {
        violations.push(Violation::ExtrasLength {
            expected: family.basis.len(),
            got: params.extras.len(),
        });
    }
    let mut min_k0 = f64::INFINITY;
    let mut max_abs_k0: f64 = 0.0;
    let mut max_abs_k1: f64 = 0.0;
    for v in grid.points() {
        for vp in grid.points() {
            let k0 = evaluate_k0(family, params, v, vp);
            let k1 = evaluate_k1(family, params, v, vp);
            min_k0 = min_k0.min(k0);
            max_abs_k0 = max_abs_k0.max(k0.abs());
            max_abs_k1 = max_abs_k1.max(k1.abs());
        }
    }
    if min_k0 < alpha {
        violations.push(Violation::LowerBound { min_k0, alpha });
    }
    if max_abs_k0 > c_bound {
        violations.push(Violation::K0Bound { max_abs_k0, c_bound });
    }
    if max_abs_k1 > c_bound {
        violations.push(Violation::K1Bound { max_abs_k1, c_bound });
    }
    AdmissibilityReport {
        admissible: violations.is_empty(),
        min_k0,
        max_abs_k0,
        max_abs_k1,
        violations,
    }
}

/// `‖(K0 − K0', K1 − K1')‖_* = max(‖K0 − K0'‖_∞, ‖K1 − K1'‖_∞)` over grid pairs.
pub fn kernel_distance(
    family: &KernelFamily,
    grid: &VelocityGrid,
    a: &KernelParams,
    b: &KernelParams,
) -> f64 {
    let mut d0: f64 = 0.0;
    let mut d1: f64 = 0.0;
    for v in grid.points() {
        for vp in grid.points() {
            d0 = d0.max((evaluate_k0(family, a, v, vp) - evaluate_k0(family, b, v, vp)).abs());
            d1 = d1.max((evaluate_k1(family, a, v, vp) - evaluate_k1(family, b, v, vp)).abs());
        }
    }
    d0.max(d1)
}

/// Discrete tumbling operator acting on velocity profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct TumblingMatrix {
    pub entries: DMatrix<f64>,
    pub epsilon: f64,
}

impl TumblingMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(g);
        (&self.entries * x).iter().copied().collect()
    }
}

/// Matrix of `g ↦ ∫_V K(v, v') g(v') − K(v', v) g(v) dv'` for an arbitrary kernel.
///
/// The loss term uses the same quadrature as the gain term, so the weighted
/// column sums vanish and the operator conserves mass exactly.
pub fn tumbling_operator<F>(grid: &VelocityGrid, kernel: F) -> DMatrix<f64>
where
    F: Fn(&Velocity, &Velocity) -> f64,
{
    let n = grid.len();
    let pts = grid.points();
    let w = grid.weights();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut loss = 0.0;
        for j in 0..n {
            if i != j {
                m[(i, j)] = w[j] * kernel(&pts[i], &pts[j]);
                loss += w[j] * kernel(&pts[j], &pts[i]);
            }
        }
        m[(i, i)] = -loss;
    }
    m
}

/// Assembles the discrete `𝒦_ε` for `K_ε = K0 + ε K1`.
pub fn assemble_tumbling_matrix(
    family: &KernelFamily,
    params: &KernelParams,
    grid: &VelocityGrid,
    epsilon: f64,
) -> TumblingMatrix {
    let entries = tumbling_operator(grid, |v, vp| {
        evaluate_k0(family, params, v, vp) + epsilon * evaluate_k1(family, params, v, vp)
    });
    TumblingMatrix { entries, epsilon }
}

/// Discrete `𝒦_1`, the operator built from `K1` alone.
pub fn assemble_k1_matrix(family: &KernelFamily, params: &KernelParams, grid: &VelocityGrid) -> DMatrix<f64> {
    tumbling_operator(grid, |v, vp| evaluate_k1(family, params, v, vp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_d() -> VelocityGrid {
        VelocityGrid::new(1, 2).unwrap()
    }

    #[test]
    fn k0_examples() {
        let fam = KernelFamily::default();
        let g = one_d();
        let p = KernelParams::new(1.0, 0.0);
        for v in g.points() {
            for vp in g.points() {
                assert_eq!(evaluate_k0(&fam, &p, v, vp), 1.0);
            }
        }
        let fam = KernelFamily::with_basis(vec![SymmetricBasis::VDot]);
        let p = KernelParams::with_extras(1.0, 0.0, vec![0.2]);
        assert!((evaluate_k0(&fam, &p, &[1.0, 0.0], &[-1.0, 0.0]) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn k1_examples() {
        let fam = KernelFamily::default();
        let p = KernelParams::new(1.0, 0.3);
        assert!((evaluate_k1(&fam, &p, &[1.0, 0.0], &[-1.0, 0.0]) - 0.6).abs() < 1e-15);
        assert_eq!(evaluate_k1(&fam, &p, &[1.0, 0.0], &[1.0, 0.0]), 0.0);
    }

    #[test]
    fn symmetry_and_antisymmetry_on_random_pairs() {
        let fam = KernelFamily::with_basis(vec![SymmetricBasis::VDot, SymmetricBasis::VDotSquared]);
        let p = KernelParams::with_extras(1.3, -0.4, vec![0.2, -0.1]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let b: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let va = [a.cos(), a.sin()];
            let vb = [b.cos(), b.sin()];
            assert_eq!(evaluate_k0(&fam, &p, &va, &vb), evaluate_k0(&fam, &p, &vb, &va));
            assert_eq!(evaluate_k1(&fam, &p, &va, &vb), -evaluate_k1(&fam, &p, &vb, &va));
        }
    }

    #[test]
    fn admissibility_examples() {
        let g = one_d();
        let fam = KernelFamily::default();
        let r = check_admissible(&fam, &KernelParams::new(1.0, 0.3), &g, 0.1, 10.0);
        assert!(r.admissible);

        let r = check_admissible(&fam, &KernelParams::new(0.05, 0.0), &g, 0.1, 10.0);
        assert!(!r.admissible);
        assert!(matches!(r.violations[0], Violation::LowerBound { .. }));

        let fam = KernelFamily::with_basis(vec![SymmetricBasis::VDot]);
        let r = check_admissible(&fam, &KernelParams::with_extras(1.0, 0.0, vec![-2.0]), &g, 0.1, 10.0);
        assert!(!r.admissible);
        assert_eq!(r.min_k0, -1.0);
        assert!(matches!(r.violations[0], Violation::LowerBound { .. }));

        let r = check_admissible(&KernelFamily::default(), &KernelParams::new(1.0, 6.0), &g, 0.1, 10.0);
        assert!(matches!(r.violations[0], Violation::K1Bound { .. }));
    }

    #[test]
    fn constant_kernel_matrix_in_1d() {
        let g = one_d();
        let m = assemble_tumbling_matrix(&KernelFamily::default(), &KernelParams::new(1.0, 0.0), &g, 0.0);
        // Direct evaluation of the two-point integral: 𝒦_0(g)(v) = g(−v) − g(v).
        let expected = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        assert_eq!(m.entries, expected);
        assert_eq!(m.apply(&[3.0, 5.0]), vec![2.0, -2.0]);
    }

    #[test]
    fn equilibrium_in_null_space_and_mass_conserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fam = KernelFamily::with_basis(vec![SymmetricBasis::VDot]);
        for (d, n) in [(1, 2), (2, 8), (2, 12)] {
            let g = VelocityGrid::new(d, n).unwrap();
            let f = g.equilibrium();
            for _ in 0..5 {
                let p = KernelParams::with_extras(
                    rng.random_range(0.5..2.0),
                    rng.random_range(-0.6..0.6),
                    vec![rng.random_range(-0.3..0.3)],
                );
                let m0 = assemble_tumbling_matrix(&fam, &p, &g, 0.0);
                for x in m0.apply(&f.values) {
                    assert!(x.abs() < 1e-12);
                }
                let me = assemble_tumbling_matrix(&fam, &p, &g, 0.1);
                for _ in 0..20 {
                    let prof: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let q = g.quadrature(&me.apply(&prof)).unwrap();
                    assert!(q.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn assembly_is_linear_in_params() {
        let fam = KernelFamily::with_basis(vec![SymmetricBasis::VDot]);
        let g = VelocityGrid::new(2, 8).unwrap();
        let p1 = KernelParams::with_extras(0.7, 0.2, vec![0.1]);
        let p2 = KernelParams::with_extras(1.1, -0.5, vec![-0.3]);
        let sum = &p1 + &p2;
        for eps in [0.0, 0.05, 0.2] {
            let a = assemble_tumbling_matrix(&fam, &sum, &g, eps).entries;
            let b = assemble_tumbling_matrix(&fam, &p1, &g, eps).entries
                + assemble_tumbling_matrix(&fam, &p2, &g, eps).entries;
            assert!((a - b).amax() < 1e-13);
        }
    }

    #[test]
    fn restricted_operator_is_invertible() {
        let fam = KernelFamily::default();
        for (d, n) in [(1, 2), (2, 8)] {
            let g = VelocityGrid::new(d, n).unwrap();
            let m = assemble_tumbling_matrix(&fam, &KernelParams::new(0.5, 0.4), &g, 0.0).entries;
            // Spectrum: one zero eigenvalue, the rest bounded away from zero.
            let eig = m.clone().complex_eigenvalues();
            let mut mods: Vec<f64> = eig.iter().map(|z| z.norm()).collect();
            mods.sort_by(f64::total_cmp);
            assert!(mods[0] < 1e-12);
            assert!(mods[1] > 0.1);
        }
    }

    #[test]
    fn distance_in_1d() {
        let fam = KernelFamily::default();
        let g = one_d();
        let a = KernelParams::new(1.0, 0.3);
        let b = KernelParams::new(1.1, 0.2);
        // ‖K1 − K1'‖_∞ = 2|β − β'| = 0.2 dominates ‖K0 − K0'‖_∞ = 0.1.
        assert!((kernel_distance(&fam, &g, &a, &b) - 0.2).abs() < 1e-14);
    }
}
