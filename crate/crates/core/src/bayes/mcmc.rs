//! Random-walk Metropolis, used only to cross-check grid posteriors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{log_likelihood, PriorSpec};
use crate::error::{Error, Result};
use crate::kernel::KernelParams;
use crate::measurement::{DataSet, ForwardModel, Model};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetropolisOptions {
    pub n_samples: usize,
    pub burn_in: usize,
    /// Proposal standard deviation per coordinate.
    pub step: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcResult {
    pub samples: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
    pub mean: Vec<f64>,
}

/// Samples from `exp(log_density)`; `−∞` marks points outside the support.
pub fn metropolis<F>(mut log_density: F, start: &[f64], opts: &MetropolisOptions) -> Result<McmcResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if opts.step.len() != start.len() {
        return Err(Error::LengthMismatch {
            expected: start.len(),
            got: opts.step.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = start.to_vec();
    let mut lx = log_density(&x)?;
    if !lx.is_finite() {
        return Err(Error::InvalidInput("chain must start inside the support".into()));
    }
    let total = opts.burn_in + opts.n_samples;
    let mut samples = Vec::with_capacity(opts.n_samples);
    let mut accepted = 0usize;
    for it in 0..total {
        let y: Vec<f64> = x
            .iter()
            .zip(&opts.step)
            .map(|(xi, s)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                xi + s * z
            })
            .collect();
        let ly = log_density(&y)?;
        let u: f64 = rng.random();
        if ly.is_finite() && u.ln() < ly - lx {
            x = y;
            lx = ly;
            accepted += 1;
        }
        if it >= opts.burn_in {
            samples.push(x.clone());
        }
    }
    let dim = start.len();
    let mut mean = vec![0.0; dim];
    for s in &samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    let n = samples.len().max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(McmcResult {
        samples,
        acceptance_rate: accepted as f64 / total.max(1) as f64,
        mean,
    })
}

/// Log posterior density (up to a constant) under the uniform prior.
pub fn posterior_log_density<'a>(
    forward: &'a ForwardModel,
    model: Model,
    prior: &'a PriorSpec,
    data: &'a DataSet,
) -> impl FnMut(&[f64]) -> Result<f64> + 'a {
    move |c: &[f64]| {
        let p = KernelParams::from_coordinates(c);
        if !prior.contains(&p) {
            return Ok(f64::NEG_INFINITY);
        }
        log_likelihood(&forward.evaluate(model, &p)?.g, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::{build_posterior, ParamRange};
    use crate::kernel::KernelFamily;
    use crate::kinetic::KineticOptions;
    use crate::ks::KsOptions;
    use crate::measurement::{generate_data, MeasurementKind, MeasurementSetup, TestFunction};
    use crate::spatial::{SpatialGrid, SpatialProfile};
    use crate::velocity::VelocityGrid;

    #[test]
    fn gaussian_target_moments() {
        let opts = MetropolisOptions {
            n_samples: 20000,
            burn_in: 1000,
            step: vec![1.0, 1.0],
            seed: 11,
        };
        let r = metropolis(|x: &[f64]| Ok(-0.5 * ((x[0] - 1.0).powi(2) + (x[1] + 2.0).powi(2) / 0.25)), &[0.0, 0.0], &opts).unwrap();
        assert!((r.mean[0] - 1.0).abs() < 0.1);
        assert!((r.mean[1] + 2.0).abs() < 0.05);
        assert!(r.acceptance_rate > 0.2 && r.acceptance_rate < 0.8);
        let again = metropolis(|x: &[f64]| Ok(-0.5 * ((x[0] - 1.0).powi(2) + (x[1] + 2.0).powi(2) / 0.25)), &[0.0, 0.0], &opts).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn chain_mean_agrees_with_grid_mean() {
        let fwd = ForwardModel::new(
            SpatialGrid::new_1d(240, 12.0).unwrap(),
            VelocityGrid::new(1, 2).unwrap(),
            KernelFamily::default(),
            KineticOptions::default(),
            KsOptions::default(),
            MeasurementSetup {
                times: vec![0.1, 0.25, 0.5],
                test_functions: vec![
                    TestFunction::new_1d(5.0, 0.5),
                    TestFunction::new_1d(6.0, 0.5),
                    TestFunction::new_1d(7.0, 0.5),
                ],
                initial_profiles: vec![
                    SpatialProfile::single_bump(6.0, 0.75),
                    SpatialProfile::bumps(&[5.25, 6.75], 0.5),
                ],
                velocity_profile: None,
                c_x: 2.0,
                c_rho: 2.0,
                kind: MeasurementKind::Integral,
            },
        )
        .unwrap();
        let prior = PriorSpec::new(ParamRange::new(0.5, 2.0, 41), ParamRange::new(-0.6, 0.6, 21));
        let data = generate_data(&fwd.g_ks(&KernelParams::new(1.0, 0.3)).unwrap(), 0.04, 5).unwrap();
        let grid = build_posterior(&fwd, Model::Ks, &prior, &data, None).unwrap();
        let opts = MetropolisOptions {
            n_samples: 6000,
            burn_in: 500,
            step: vec![0.08, 0.04],
            seed: 2,
        };
        let chain = metropolis(posterior_log_density(&fwd, Model::Ks, &prior, &data), &[1.0, 0.3], &opts).unwrap();
        let gm = grid.mean();
        assert!((chain.mean[0] - gm[0]).abs() <= 2.0 * prior.lambda.spacing(), "{:?} {gm:?}", chain.mean);
        assert!((chain.mean[1] - gm[1]).abs() <= 2.0 * prior.beta.spacing(), "{:?} {gm:?}", chain.mean);
    }
}
