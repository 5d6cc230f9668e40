//! Discrete velocity sets, velocity quadrature and the local equilibrium.
//!
//! Two families are supported: the two-point set `{-1, +1}` with unit counting
//! weights, and equally spaced points on the unit circle with rectangle-rule
//! weights `2π/n`. Both are symmetric under `v -> -v`, which makes the first
//! moment of the quadrature vanish and keeps the cell problems solvable.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// A velocity, stored with two components. For one-dimensional sets the second
/// component is zero.
pub type Velocity = [f64; 2];

pub fn dot(a: &Velocity, b: &Velocity) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityGrid {
    dimension: usize,
    points: Vec<Velocity>,
    weights: Vec<f64>,
    measure: f64,
}

impl VelocityGrid {
    /// Builds `{-1, +1}` (dimension 1, `n_points = 2`) or `n_points` equally
    /// spaced angles on the unit circle (dimension 2, `n_points` even).
    pub fn new(dimension: usize, n_points: usize) -> Result<Self> {
        let (points, weights): (Vec<Velocity>, Vec<f64>) = match dimension {
            1 => {
                if n_points != 2 {
                    return Err(Error::InvalidInput(format!(
                        "one-dimensional velocity set has exactly 2 points, got {n_points}"
                    )));
                }
                (vec![[-1.0, 0.0], [1.0, 0.0]], vec![1.0, 1.0])
            }
            2 => {
                if n_points < 2 || !n_points.is_multiple_of(2) {
                    return Err(Error::InvalidInput(format!(
                        "circle discretization needs an even number of points >= 2, got {n_points}"
                    )));
                }
                let w = 2.0 * PI / n_points as f64;
                let points = (0..n_points)
                    .map(|i| {
                        let angle = 2.0 * PI * i as f64 / n_points as f64;
                        [angle.cos(), angle.sin()]
                    })
                    .collect::<Vec<_>>();
                let points = symmetrize(points);
                (points, vec![w; n_points])
            }
            d => {
                return Err(Error::InvalidInput(format!(
                    "velocity dimension must be 1 or 2, got {d}"
                )))
            }
        };
        let measure = weights.iter().sum();
        Ok(Self {
            dimension,
            points,
            weights,
            measure,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Velocity] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `|V|`, the sum of the quadrature weights.
    pub fn measure(&self) -> f64 {
        self.measure
    }

    pub fn max_speed(&self) -> f64 {
        self.points
            .iter()
            .map(|v| dot(v, v).sqrt())
            .fold(0.0, f64::max)
    }

    /// `Σ_i w_i values[i]`.
    pub fn quadrature(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: values.len(),
            });
        }
        Ok(self.weights.iter().zip(values).map(|(w, f)| w * f).sum())
    }

    pub fn equilibrium(&self) -> Equilibrium {
        Equilibrium {
            values: vec![1.0 / self.measure; self.len()],
        }
    }
}

/// Replaces each point on the circle by an exactly antipodal partner so that
/// `Σ w_i v_i` cancels without rounding residue.
fn symmetrize(mut points: Vec<Velocity>) -> Vec<Velocity> {
    let n = points.len();
    let half = n / 2;
    for i in 0..half {
        let v = points[i];
        points[i + half] = [-v[0], -v[1]];
    }
    points
}

/// The local equilibrium `F ≡ 1/|V|`, one value per velocity point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub values: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_point_set() {
        let g = VelocityGrid::new(1, 2).unwrap();
        assert_eq!(g.points(), &[[-1.0, 0.0], [1.0, 0.0]]);
        assert_eq!(g.weights(), &[1.0, 1.0]);
        assert_eq!(g.measure(), 2.0);
    }

    #[test]
    fn four_point_circle() {
        let g = VelocityGrid::new(2, 4).unwrap();
        assert!((g.measure() - 2.0 * PI).abs() < 1e-15);
        for w in g.weights() {
            assert!((w - PI / 2.0).abs() < 1e-15);
        }
        let expected = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (p, e) in g.points().iter().zip(expected) {
            assert!((p[0] - e[0]).abs() < 1e-15 && (p[1] - e[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_invariants_hold() {
        for (d, n) in [(1, 2), (2, 4), (2, 8), (2, 12), (2, 16)] {
            let g = VelocityGrid::new(d, n).unwrap();
            assert!(g.weights().iter().all(|&w| w > 0.0));
            for k in 0..2 {
                let m: f64 = g
                    .points()
                    .iter()
                    .zip(g.weights())
                    .map(|(v, w)| w * v[k])
                    .sum();
                assert!(m.abs() < 1e-13, "first moment {m} for ({d},{n})");
            }
            for v in g.points() {
                assert!((dot(v, v).sqrt() - 1.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(VelocityGrid::new(1, 3).is_err());
        assert!(VelocityGrid::new(2, 7).is_err());
        assert!(VelocityGrid::new(3, 4).is_err());
    }

    #[test]
    fn quadrature_examples() {
        let g = VelocityGrid::new(1, 2).unwrap();
        assert_eq!(g.quadrature(&[1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(g.quadrature(&[-1.0, 1.0]).unwrap(), 0.0);
        assert!(g.quadrature(&[1.0]).is_err());

        // ∫_0^{2π} cos² = π, exact for the rectangle rule with 4 points.
        let c = VelocityGrid::new(2, 4).unwrap();
        let cos2: Vec<f64> = c.points().iter().map(|v| v[0] * v[0]).collect();
        assert!((c.quadrature(&cos2).unwrap() - PI).abs() < 1e-14);
    }

    #[test]
    fn equilibrium_is_normalized() {
        let g = VelocityGrid::new(1, 2).unwrap();
        assert_eq!(g.equilibrium().values, vec![0.5, 0.5]);
        let c = VelocityGrid::new(2, 4).unwrap();
        for f in c.equilibrium().values {
            assert!((f - 1.0 / (2.0 * PI)).abs() < 1e-16);
        }
        for (d, n) in [(1, 2), (2, 4), (2, 10)] {
            let g = VelocityGrid::new(d, n).unwrap();
            let eq = g.equilibrium();
            assert!((g.quadrature(&eq.values).unwrap() - 1.0).abs() < 1e-13);
        }
    }

    proptest! {
        #[test]
        fn quadrature_is_linear(
            a in -5.0f64..5.0,
            b in -5.0f64..5.0,
            f in proptest::collection::vec(-10.0f64..10.0, 8),
            g in proptest::collection::vec(-10.0f64..10.0, 8),
        ) {
            let grid = VelocityGrid::new(2, 8).unwrap();
            let combo: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
            let lhs = grid.quadrature(&combo).unwrap();
            let rhs = a * grid.quadrature(&f).unwrap() + b * grid.quadrature(&g).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-13 * (1.0 + lhs.abs()) * 10.0);
        }
    }
}
