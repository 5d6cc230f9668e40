//! Periodic Cartesian grids and the smooth compactly supported profiles used
//! for initial data and test functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_CELLS: usize = 8;

/// Uniform periodic grid in one or two dimensions. Cell `i` (1D) or
/// `(ix, iy)` (2D, stored as `iy * nx + ix`) has its centre at `(i + 1/2) h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    dimension: usize,
    n_cells: [usize; 2],
    length: [f64; 2],
    h: [f64; 2],
}

impl SpatialGrid {
    pub fn new_1d(n_cells: usize, length: f64) -> Result<Self> {
        Self::new(1, [n_cells, 1], [length, 1.0])
    }

    pub fn new_2d(n_cells: [usize; 2], length: [f64; 2]) -> Result<Self> {
        Self::new(2, n_cells, length)
    }

    pub fn new(dimension: usize, n_cells: [usize; 2], length: [f64; 2]) -> Result<Self> {
        if dimension != 1 && dimension != 2 {
            return Err(Error::InvalidInput(format!("spatial dimension must be 1 or 2, got {dimension}")));
        }
        let mut n = n_cells;
        let mut l = length;
        if dimension == 1 {
            n[1] = 1;
            l[1] = 1.0;
        }
        for a in 0..dimension {
            if n[a] < MIN_CELLS {
                return Err(Error::InvalidInput(format!(
                    "need at least {MIN_CELLS} cells per axis, got {}",
                    n[a]
                )));
            }
            if !(l[a] > 0.0 && l[a].is_finite()) {
                return Err(Error::InvalidInput(format!("domain length must be positive, got {}", l[a])));
            }
        }
        let h = [l[0] / n[0] as f64, l[1] / n[1] as f64];
        Ok(Self {
            dimension,
            n_cells: n,
            length: l,
            h,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn n_cells(&self) -> [usize; 2] {
        self.n_cells
    }

    pub fn len(&self) -> usize {
        self.n_cells[0] * self.n_cells[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn length(&self) -> [f64; 2] {
        self.length
    }

    pub fn h(&self) -> [f64; 2] {
        self.h
    }

    /// Volume of one cell.
    pub fn cell_volume(&self) -> f64 {
        match self.dimension {
            1 => self.h[0],
            _ => self.h[0] * self.h[1],
        }
    }

    pub fn center(&self, cell: usize) -> [f64; 2] {
        let nx = self.n_cells[0];
        let ix = cell % nx;
        let iy = cell / nx;
        let x = (ix as f64 + 0.5) * self.h[0];
        match self.dimension {
            1 => [x, 0.0],
            _ => [x, (iy as f64 + 0.5) * self.h[1]],
        }
    }

    pub fn centers(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|c| self.center(c)).collect()
    }

    /// `h^d Σ_i values[i]`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.cell_volume() * values.iter().sum::<f64>()
    }

    /// Distance in the first `dimension` coordinates (not wrapped).
    pub fn distance(&self, a: &[f64; 2], b: &[f64; 2]) -> f64 {
        let mut s = (a[0] - b[0]).powi(2);
        if self.dimension == 2 {
            s += (a[1] - b[1]).powi(2);
        }
        s.sqrt()
    }
}

/// Unnormalized smooth bump `max(0, 1 − (r/R)²)²`.
pub fn bump(distance: f64, radius: f64) -> f64 {
    let s = 1.0 - (distance / radius).powi(2);
    if s > 0.0 {
        s * s
    } else {
        0.0
    }
}

/// Normalization making the bump integrate to one in `dimension` dimensions.
pub fn bump_normalization(radius: f64, dimension: usize) -> f64 {
    match dimension {
        // ∫_{−R}^{R} (1 − x²/R²)² dx = 16R/15
        1 => 15.0 / (16.0 * radius),
        // ∫ (1 − r²/R²)² dA = πR²/3
        _ => 3.0 / (std::f64::consts::PI * radius * radius),
    }
}

/// Named spatial profiles for initial densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpatialProfile {
    /// Sum of bumps sharing one radius, rescaled on the grid to total `mass`.
    Bump {
        centers: Vec<[f64; 2]>,
        radius: f64,
        #[serde(default)]
        weights: Option<Vec<f64>>,
        #[serde(default = "one")]
        mass: f64,
    },
    /// Spatially uniform density.
    Constant { value: f64 },
}

fn one() -> f64 {
    1.0
}

impl SpatialProfile {
    pub fn single_bump(center: f64, radius: f64) -> Self {
        SpatialProfile::Bump {
            centers: vec![[center, 0.0]],
            radius,
            weights: None,
            mass: 1.0,
        }
    }

    pub fn bumps(centers: &[f64], radius: f64) -> Self {
        SpatialProfile::Bump {
            centers: centers.iter().map(|&c| [c, 0.0]).collect(),
            radius,
            weights: None,
            mass: 1.0,
        }
    }

    /// Cell values of the profile on `grid`.
    pub fn evaluate(&self, grid: &SpatialGrid) -> Result<Vec<f64>> {
        match self {
            SpatialProfile::Constant { value } => {
                if *value < 0.0 {
                    return Err(Error::InvalidInput("constant profile must be nonnegative".into()));
                }
                Ok(vec![*value; grid.len()])
            }
            SpatialProfile::Bump {
                centers,
                radius,
                weights,
                mass,
            } => {
                if centers.is_empty() || *radius <= 0.0 || *mass <= 0.0 {
                    return Err(Error::InvalidInput(
                        "bump profile needs centres, a positive radius and a positive mass".into(),
                    ));
                }
                let w = match weights {
                    Some(w) if w.len() != centers.len() => {
                        return Err(Error::LengthMismatch {
                            expected: centers.len(),
                            got: w.len(),
                        })
                    }
                    Some(w) if w.iter().any(|&x| x < 0.0) => {
                        return Err(Error::InvalidInput("bump weights must be nonnegative".into()))
                    }
                    Some(w) => w.clone(),
                    None => vec![1.0; centers.len()],
                };
                for c in centers {
                    for a in 0..grid.dimension() {
                        if c[a] - radius < 0.0 || c[a] + radius > grid.length()[a] {
                            return Err(Error::InvalidInput(format!(
                                "bump at {:?} with radius {radius} escapes the box",
                                &c[..grid.dimension()]
                            )));
                        }
                    }
                }
                let mut values: Vec<f64> = grid
                    .centers()
                    .iter()
                    .map(|x| {
                        centers
                            .iter()
                            .zip(&w)
                            .map(|(c, wk)| wk * bump(grid.distance(x, c), *radius))
                            .sum()
                    })
                    .collect();
                let total = grid.integrate(&values);
                if total <= 0.0 {
                    return Err(Error::InvalidInput("bump profile is not resolved by the grid".into()));
                }
                let scale = mass / total;
                values.iter_mut().for_each(|v| *v *= scale);
                Ok(values)
            }
        }
    }

    /// Support of the profile along `axis` as `(lo, hi)`; `None` for profiles
    /// that fill the whole box.
    pub fn support(&self, axis: usize) -> Option<(f64, f64)> {
        match self {
            SpatialProfile::Constant { .. } => None,
            SpatialProfile::Bump { centers, radius, .. } => {
                let lo = centers.iter().map(|c| c[axis] - radius).fold(f64::INFINITY, f64::min);
                let hi = centers.iter().map(|c| c[axis] + radius).fold(f64::NEG_INFINITY, f64::max);
                Some((lo, hi))
            }
        }
    }
}
