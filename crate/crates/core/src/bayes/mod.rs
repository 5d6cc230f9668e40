//! Grid posteriors over kernel parameters under either forward model.
//!
//! The prior is uniform on a box and is represented by product trapezoid
//! weights `q_i` on a tensor grid. A posterior stores, per node, the
//! log-likelihood, the density `w_i` with respect to the prior
//! (`Σ q_i w_i = 1`) and the log mass `log(q_i w_i)`.

pub mod mcmc;
pub mod metrics;
pub mod prior;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::ForwardCache;
use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, KernelParams};
use crate::kinetic::SolveDiagnostics;
use crate::macro_coeffs::compute_macro;
use crate::measurement::{DataSet, Evaluation, ForwardModel, GMatrix, Model};
use crate::velocity::VelocityGrid;

pub use metrics::{compare, hellinger, kl_divergence, Comparison};
pub use prior::{ParamRange, PriorSpec};

/// `−‖G − y‖²_F / (2γ²)`.
pub fn log_likelihood(g: &GMatrix, data: &DataSet) -> Result<f64> {
    data.y.same_shape(g)?;
    let r2: f64 = g.values.iter().zip(&data.y.values).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(-r2 / (2.0 * data.gamma * data.gamma))
}

/// `log Σ_i q_i exp(l_i)` with a max shift.
pub fn log_sum_exp_weighted(q: &[f64], l: &[f64]) -> f64 {
    let m = l
        .iter()
        .zip(q)
        .filter(|(_, &w)| w > 0.0)
        .map(|(x, _)| *x)
        .fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = l.iter().zip(q).map(|(x, w)| w * (x - m).exp()).sum();
    m + s.ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorGrid {
    pub model: Model,
    pub nodes: Vec<KernelParams>,
    pub shape: Vec<usize>,
    /// Prior quadrature weights `q_i`, summing to one.
    pub prior_weights: Vec<f64>,
    pub log_likelihoods: Vec<f64>,
    /// Density with respect to the prior: `w_i = exp(l_i − log Z)`.
    pub weights: Vec<f64>,
    /// `log(q_i w_i)`.
    pub log_masses: Vec<f64>,
    /// `log Z = log Σ q_i exp(l_i)`.
    pub log_z: f64,
    /// `Z`, possibly underflowed to zero; `log_z` is authoritative.
    pub z: f64,
}

impl PosteriorGrid {
    pub fn from_log_likelihoods(
        model: Model,
        nodes: Vec<KernelParams>,
        shape: Vec<usize>,
        prior_weights: Vec<f64>,
        log_likelihoods: Vec<f64>,
    ) -> Self {
        let log_z = log_sum_exp_weighted(&prior_weights, &log_likelihoods);
        let weights = log_likelihoods.iter().map(|l| (l - log_z).exp()).collect();
        let log_masses = log_likelihoods
            .iter()
            .zip(&prior_weights)
            .map(|(l, q)| q.ln() + l - log_z)
            .collect();
        Self {
            model,
            nodes,
            shape,
            prior_weights,
            log_likelihoods,
            weights,
            log_masses,
            log_z,
            z: log_z.exp(),
        }
    }

    pub fn masses(&self) -> Vec<f64> {
        self.log_masses.iter().map(|l| l.exp()).collect()
    }

    /// `Σ q_i w_i`, one up to rounding.
    pub fn total_mass(&self) -> f64 {
        self.prior_weights.iter().zip(&self.weights).map(|(q, w)| q * w).sum()
    }

    pub fn map_index(&self) -> usize {
        let mut best = 0;
        for (i, l) in self.log_masses.iter().enumerate() {
            if *l > self.log_masses[best] {
                best = i;
            }
        }
        best
    }

    pub fn map_node(&self) -> &KernelParams {
        &self.nodes[self.map_index()]
    }

    /// Posterior mean of the parameter coordinates.
    pub fn mean(&self) -> Vec<f64> {
        let dim = self.nodes.first().map_or(0, |n| n.coordinates().len());
        let mut m = vec![0.0; dim];
        for (node, p) in self.nodes.iter().zip(self.masses()) {
            for (a, c) in node.coordinates().iter().enumerate() {
                m[a] += p * c;
            }
        }
        m
    }

    /// Checks `−B ≤ log Z ≤ 0` with
    /// `B = (‖y‖ + √(JK) C_x C_ρ)² / (2γ²)`.
    pub fn z_bound(&self, data: &DataSet, c_x: f64, c_rho: f64) -> ZBound {
        let jk = data.y.values.len() as f64;
        let b = (data.y.norm() + jk.sqrt() * c_x * c_rho).powi(2) / (2.0 * data.gamma * data.gamma);
        ZBound {
            b,
            log_z: self.log_z,
            holds: self.log_z >= -b - 1e-12 && self.log_z <= 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZBound {
    pub b: f64,
    pub log_z: f64,
    pub holds: bool,
}

/// Forward evaluations at every prior node for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTable {
    pub model: Model,
    pub nodes: Vec<KernelParams>,
    pub g: Vec<GMatrix>,
    pub diagnostics: SolveDiagnostics,
    pub cache_hits: usize,
}

/// Evaluates `model` at every node in parallel. Results come back in node
/// order regardless of scheduling. A failing node aborts with its index.
pub fn forward_table(
    forward: &ForwardModel,
    model: Model,
    nodes: &[KernelParams],
    cache: Option<&ForwardCache>,
) -> Result<ForwardTable> {
    let results: Vec<(Evaluation, bool)> = nodes
        .par_iter()
        .enumerate()
        .map(|(index, p)| {
            let wrap = |e: Error| Error::NodeFailure {
                index,
                params: p.to_string(),
                source: Box::new(e),
            };
            let key = match cache {
                Some(_) => Some(ForwardCache::key(p, &model, forward.setup_hash()).map_err(wrap)?),
                None => None,
            };
            if let (Some(c), Some(k)) = (cache, key.as_deref()) {
                if let Some(hit) = c.get(k) {
                    return Ok((hit, true));
                }
            }
            let eval = forward.evaluate(model, p).map_err(wrap)?;
            if let (Some(c), Some(k)) = (cache, key.as_deref()) {
                c.put(k, &eval)?;
            }
            Ok((eval, false))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut diag: Option<SolveDiagnostics> = None;
    let mut g = Vec::with_capacity(results.len());
    let mut hits = 0;
    for (eval, hit) in results {
        diag = Some(match diag {
            None => eval.diagnostics,
            Some(d) => d.merge(&eval.diagnostics),
        });
        hits += usize::from(hit);
        g.push(eval.g);
    }
    Ok(ForwardTable {
        model,
        nodes: nodes.to_vec(),
        g,
        diagnostics: diag.unwrap_or(SolveDiagnostics {
            initial_mass: 0.0,
            max_relative_mass_drift: 0.0,
            min_value: 0.0,
            steps: 0,
        }),
        cache_hits: hits,
    })
}

/// Posterior from precomputed forward evaluations.
pub fn posterior_from_table(table: &ForwardTable, prior: &PriorSpec, data: &DataSet) -> Result<PosteriorGrid> {
    if table.nodes.len() != prior.len() {
        return Err(Error::GridMismatch(format!(
            "table has {} nodes, prior {}",
            table.nodes.len(),
            prior.len()
        )));
    }
    let ll = table
        .g
        .iter()
        .map(|g| log_likelihood(g, data))
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorGrid::from_log_likelihoods(
        table.model,
        table.nodes.clone(),
        prior.shape(),
        prior.quadrature_weights(),
        ll,
    ))
}

/// Forward solves at every node followed by normalization.
pub fn build_posterior(
    forward: &ForwardModel,
    model: Model,
    prior: &PriorSpec,
    data: &DataSet,
    cache: Option<&ForwardCache>,
) -> Result<PosteriorGrid> {
    let table = forward_table(forward, model, &prior.nodes(), cache)?;
    posterior_from_table(&table, prior, data)
}

/// Posterior mass binned over the derived coefficients `(D_11, Γ_1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushForward {
    pub diffusion_edges: Vec<f64>,
    pub drift_edges: Vec<f64>,
    /// `masses[i * n_drift_bins + j]`.
    pub masses: Vec<f64>,
}

pub fn push_forward(
    posterior: &PosteriorGrid,
    family: &KernelFamily,
    velocity: &VelocityGrid,
    spatial_dim: usize,
    bins: usize,
) -> Result<PushForward> {
    let bins = bins.max(1);
    let coeffs = posterior
        .nodes
        .iter()
        .map(|p| compute_macro(family, p, velocity, spatial_dim).map(|c| (c.diffusion[0][0], c.drift[0])))
        .collect::<Result<Vec<_>>>()?;
    let edges = |vals: Vec<f64>| {
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            hi = lo + 1.0;
        }
        (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect::<Vec<_>>()
    };
    let de = edges(coeffs.iter().map(|c| c.0).collect());
    let ge = edges(coeffs.iter().map(|c| c.1).collect());
    let locate = |e: &[f64], x: f64| {
        let t = (x - e[0]) / (e[bins] - e[0]) * bins as f64;
        (t.floor().max(0.0) as usize).min(bins - 1)
    };
    let mut masses = vec![0.0; bins * bins];
    for ((d, g), m) in coeffs.iter().zip(posterior.masses()) {
        masses[locate(&de, *d) * bins + locate(&ge, *g)] += m;
    }
    Ok(PushForward {
        diffusion_edges: de,
        drift_edges: ge,
        masses,
    })
}
