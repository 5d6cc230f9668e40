//! Uniform priors on boxes of kernel parameters, discretized as tensor grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{check_admissible, KernelFamily, KernelParams};
use crate::velocity::VelocityGrid;

/// Closed interval sampled at `nodes` equally spaced points. A single node sits
/// at the midpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub min: f64,
    pub max: f64,
    pub nodes: usize,
}

impl ParamRange {
    pub fn new(min: f64, max: f64, nodes: usize) -> Self {
        Self { min, max, nodes }
    }

    pub fn fixed(value: f64) -> Self {
        Self::new(value, value, 1)
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.nodes == 0 || !self.min.is_finite() || !self.max.is_finite() || self.min > self.max {
            return Err(Error::Config(format!("invalid prior range for {name}: {self:?}")));
        }
        if self.nodes > 1 && self.min == self.max {
            return Err(Error::Config(format!("{name}: several nodes on a degenerate range")));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        if self.nodes > 1 {
            (self.max - self.min) / (self.nodes - 1) as f64
        } else {
            0.0
        }
    }

    pub fn points(&self) -> Vec<f64> {
        if self.nodes == 1 {
            return vec![0.5 * (self.min + self.max)];
        }
        let h = self.spacing();
        (0..self.nodes)
            .map(|i| if i + 1 == self.nodes { self.max } else { self.min + i as f64 * h })
            .collect()
    }

    /// Trapezoid weights summing to one.
    pub fn weights(&self) -> Vec<f64> {
        if self.nodes == 1 {
            return vec![1.0];
        }
        let n = self.nodes;
        let inner = 1.0 / (n - 1) as f64;
        (0..n)
            .map(|i| if i == 0 || i + 1 == n { 0.5 * inner } else { inner })
            .collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }
}

/// Uniform prior on `λ × β × extras`, discretized on the tensor grid with
/// `λ` varying slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub lambda: ParamRange,
    pub beta: ParamRange,
    #[serde(default)]
    pub extras: Vec<ParamRange>,
}

impl PriorSpec {
    pub fn new(lambda: ParamRange, beta: ParamRange) -> Self {
        Self {
            lambda,
            beta,
            extras: Vec::new(),
        }
    }

    pub fn axes(&self) -> Vec<&ParamRange> {
        let mut a = vec![&self.lambda, &self.beta];
        a.extend(self.extras.iter());
        a
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes().iter().map(|a| a.nodes).collect()
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multi-index of flat node `index`.
    pub fn unravel(&self, mut index: usize) -> Vec<usize> {
        let shape = self.shape();
        let mut out = vec![0; shape.len()];
        for a in (0..shape.len()).rev() {
            out[a] = index % shape[a];
            index /= shape[a];
        }
        out
    }

    pub fn nodes(&self) -> Vec<KernelParams> {
        let points: Vec<Vec<f64>> = self.axes().iter().map(|a| a.points()).collect();
        (0..self.len())
            .map(|i| {
                let idx = self.unravel(i);
                let c: Vec<f64> = idx.iter().enumerate().map(|(a, &k)| points[a][k]).collect();
                KernelParams::from_coordinates(&c)
            })
            .collect()
    }

    /// Product trapezoid weights of the uniform prior, summing to one.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let weights: Vec<Vec<f64>> = self.axes().iter().map(|a| a.weights()).collect();
        let mut q: Vec<f64> = (0..self.len())
            .map(|i| {
                self.unravel(i)
                    .iter()
                    .enumerate()
                    .map(|(a, &k)| weights[a][k])
                    .product()
            })
            .collect();
        let s: f64 = q.iter().sum();
        q.iter_mut().for_each(|x| *x /= s);
        q
    }

    pub fn contains(&self, p: &KernelParams) -> bool {
        let c = p.coordinates();
        let axes = self.axes();
        c.len() == axes.len() && axes.iter().zip(&c).all(|(a, x)| a.contains(*x))
    }

    /// Ranges are well formed, `λ_min ≥ α` and every node is admissible.
    pub fn validate(&self, family: &KernelFamily, grid: &VelocityGrid, alpha: f64, c_bound: f64) -> Result<()> {
        self.lambda.validate("lambda")?;
        self.beta.validate("beta")?;
        for (i, e) in self.extras.iter().enumerate() {
            e.validate(&format!("extras[{i}]"))?;
        }
        if self.extras.len() != family.basis.len() {
            return Err(Error::Config(format!(
                "prior has {} extra ranges but the family has {} basis functions",
                self.extras.len(),
                family.basis.len()
            )));
        }
        if self.lambda.min < alpha {
            return Err(Error::Config(format!(
                "lambda range starts at {} below the admissibility bound alpha = {alpha}",
                self.lambda.min
            )));
        }
        for (i, p) in self.nodes().iter().enumerate() {
            let r = check_admissible(family, p, grid, alpha, c_bound);
            if !r.admissible {
                return Err(Error::Config(format!(
                    "prior node {i} {p} is not admissible: {:?}",
                    r.violations
                )));
            }
        }
        Ok(())
    }
}
