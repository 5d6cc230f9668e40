//! Divergences between posteriors on a shared prior grid.
//!
//! Both functions work from log masses `log p_i`, so nodes whose mass
//! underflows in linear space still contribute correctly.

use serde::{Deserialize, Serialize};

use super::PosteriorGrid;
use crate::error::{Error, Result};

fn check_same_grid(p: &PosteriorGrid, q: &PosteriorGrid) -> Result<()> {
    if p.nodes != q.nodes || p.prior_weights != q.prior_weights {
        return Err(Error::GridMismatch(format!(
            "{} nodes vs {} nodes or different prior weights",
            p.nodes.len(),
            q.nodes.len()
        )));
    }
    Ok(())
}

/// `Σ_i p_i log(p_i / q_i)` from log masses.
pub fn kl_from_log_masses(lp: &[f64], lq: &[f64]) -> f64 {
    let kl: f64 = lp
        .iter()
        .zip(lq)
        .filter(|(a, _)| a.is_finite())
        .map(|(a, b)| if a == b { 0.0 } else { a.exp() * (a - b) })
        .sum();
    kl.max(0.0)
}

/// `sqrt(½ Σ_i (√p_i − √q_i)²)` from log masses, clamped to `[0, 1]`.
pub fn hellinger_from_log_masses(lp: &[f64], lq: &[f64]) -> f64 {
    let d2: f64 = 0.5
        * lp.iter()
            .zip(lq)
            .map(|(a, b)| if a == b { 0.0 } else { ((0.5 * a).exp() - (0.5 * b).exp()).powi(2) })
            .sum::<f64>();
    d2.max(0.0).sqrt().min(1.0)
}

/// `d_KL(p ‖ q) = Σ p log(p/q)`.
pub fn kl_divergence(p: &PosteriorGrid, q: &PosteriorGrid) -> Result<f64> {
    check_same_grid(p, q)?;
    Ok(kl_from_log_masses(&p.log_masses, &q.log_masses))
}

/// Hellinger distance with respect to the shared prior.
pub fn hellinger(p: &PosteriorGrid, q: &PosteriorGrid) -> Result<f64> {
    check_same_grid(p, q)?;
    Ok(hellinger_from_log_masses(&p.log_masses, &q.log_masses))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// `d_KL(p ‖ q)`, integrated against `p`.
    pub kl_forward: f64,
    /// `d_KL(q ‖ p)`, integrated against `q`.
    pub kl_reverse: f64,
    pub hellinger: f64,
}

pub fn compare(p: &PosteriorGrid, q: &PosteriorGrid) -> Result<Comparison> {
    Ok(Comparison {
        kl_forward: kl_divergence(p, q)?,
        kl_reverse: kl_divergence(q, p)?,
        hellinger: hellinger(p, q)?,
    })
}
