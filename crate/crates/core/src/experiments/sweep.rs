//! Forward convergence study and the posterior ε-sweep.

use serde::{Deserialize, Serialize};
use std::time::Instant;

use super::config::ExperimentConfig;
use crate::bayes::{
    compare, forward_table, hellinger, posterior_from_table, push_forward, Comparison, ForwardTable, PosteriorGrid,
    PushForward,
};
use crate::cache::ForwardCache;
use crate::error::{Error, Result};
use crate::kernel::KernelParams;
use crate::kinetic::{equilibrium_gap, macro_density, KernelField, SolveDiagnostics};
use crate::ks::CoefficientField;
use crate::macro_coeffs::compute_macro;
use crate::measurement::{DataSet, ForwardModel, Model};

/// Gaps between the kinetic density and the Keller–Segel density at one ε,
/// maximized over snapshots and initial profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardRecord {
    pub epsilon: f64,
    pub error_inf: f64,
    pub error_l1: f64,
    /// `max |f_ε − ρ_ε F|`.
    pub equilibrium_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardStudy {
    pub records: Vec<ForwardRecord>,
    pub kinetic: SolveDiagnostics,
    pub ks: SolveDiagnostics,
}

fn merge(a: Option<SolveDiagnostics>, b: &SolveDiagnostics) -> Option<SolveDiagnostics> {
    Some(match a {
        None => *b,
        Some(a) => a.merge(b),
    })
}

/// Kinetic versus Keller–Segel densities at `params` for each ε.
pub fn forward_convergence(forward: &ForwardModel, params: &KernelParams, epsilons: &[f64]) -> Result<ForwardStudy> {
    let times = &forward.setup().times;
    let t_final = forward.setup().final_time();
    let space = forward.space();
    let velocity = forward.velocity();
    let coeffs = compute_macro(forward.family(), params, velocity, space.dimension())?;
    let field = CoefficientField::Uniform(coeffs);
    let mut ks_diag = None;
    let ks_solutions = forward
        .initial_density()
        .iter()
        .map(|r0| {
            let s = forward.ks_solver().solve_ks(r0, &field, t_final, times)?;
            ks_diag = merge(ks_diag, &s.diagnostics);
            Ok(s.snapshots)
        })
        .collect::<Result<Vec<_>>>()?;

    let kernel = KernelField::Uniform(params.clone());
    let mut kin_diag = None;
    let mut records = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let mut rec = ForwardRecord {
            epsilon: eps,
            error_inf: 0.0,
            error_l1: 0.0,
            equilibrium_gap: 0.0,
        };
        for (f0, ks_snaps) in forward.initial_kinetic().iter().zip(&ks_solutions) {
            let sol = forward
                .kinetic_solver()
                .solve_kinetic(f0, &kernel, eps, t_final, times)
                .map_err(|e| Error::EpsilonFailure {
                    epsilon: eps,
                    source: Box::new(e),
                })?;
            kin_diag = merge(kin_diag, &sol.diagnostics);
            for (snap, ks) in sol.snapshots.iter().zip(ks_snaps) {
                let rho = macro_density(snap, velocity);
                let diff: Vec<f64> = rho.iter().zip(&ks.values).map(|(a, b)| (a - b).abs()).collect();
                rec.error_inf = rec.error_inf.max(diff.iter().copied().fold(0.0, f64::max));
                rec.error_l1 = rec.error_l1.max(space.integrate(&diff));
                rec.equilibrium_gap = rec.equilibrium_gap.max(equilibrium_gap(snap, velocity));
            }
        }
        records.push(rec);
    }
    let empty = SolveDiagnostics {
        initial_mass: 0.0,
        max_relative_mass_drift: 0.0,
        min_value: 0.0,
        steps: 0,
    };
    Ok(ForwardStudy {
        records,
        kinetic: kin_diag.unwrap_or(empty),
        ks: ks_diag.unwrap_or(empty),
    })
}

/// Forward convergence at the configured truth.
pub fn run_forward_convergence(config: &ExperimentConfig) -> Result<Vec<ForwardRecord>> {
    config.validate()?;
    let forward = config.forward_model()?;
    Ok(forward_convergence(&forward, &config.truth(), &config.sweep.epsilons)?.records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRecord {
    pub epsilon: f64,
    pub forward_error_inf: f64,
    pub forward_error_l1: f64,
    pub equilibrium_gap: f64,
    /// `max_{jk} |g_chem(ε) − g_ks|` at the truth.
    pub measurement_gap: f64,
    /// `d_KL(μ_ε ‖ μ_KS)`.
    pub kl_forward: f64,
    /// `d_KL(μ_KS ‖ μ_ε)`.
    pub kl_reverse: f64,
    pub hellinger: f64,
    pub log_z_chem: f64,
    pub z_chem: f64,
    pub z_bound_holds: bool,
    pub map_chem: KernelParams,
    pub mean_chem: Vec<f64>,
}

/// Slopes of `log(metric)` against `log(ε)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalOrder {
    pub metric: String,
    /// Between consecutive ε; `None` where a value is not positive.
    pub consecutive: Vec<Option<f64>>,
    /// Least-squares slope over all ε.
    pub fit: Option<f64>,
}

impl EmpiricalOrder {
    pub fn new(metric: &str, eps: &[f64], values: &[f64]) -> Self {
        let consecutive = eps
            .windows(2)
            .zip(values.windows(2))
            .map(|(e, v)| {
                if v[0] > 0.0 && v[1] > 0.0 {
                    Some((v[0] / v[1]).ln() / (e[0] / e[1]).ln())
                } else {
                    None
                }
            })
            .collect();
        let fit = if values.len() >= 2 && values.iter().all(|&v| v > 0.0) {
            let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
            let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
            let n = xs.len() as f64;
            let mx = xs.iter().sum::<f64>() / n;
            let my = ys.iter().sum::<f64>() / n;
            let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
            Some(sxy / sxx)
        } else {
            None
        };
        Self {
            metric: metric.to_string(),
            consecutive,
            fit,
        }
    }
}

/// Worst-case conservation and positivity over every solve of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservationSummary {
    pub kinetic_max_mass_drift: f64,
    pub kinetic_min_value: f64,
    pub kinetic_steps: usize,
    pub ks_max_mass_drift: f64,
    pub ks_min_value: f64,
}

/// Hellinger distance between Keller–Segel posteriors for `y` and `y + δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataStability {
    pub delta: f64,
    pub hellinger_delta: f64,
    pub hellinger_half_delta: f64,
    /// `None` when the half-δ distance vanishes.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub log_z: f64,
    pub z: f64,
    pub z_bound: f64,
    pub z_bound_holds: bool,
    pub map: KernelParams,
    pub mean: Vec<f64>,
}

impl PosteriorSummary {
    fn new(p: &PosteriorGrid, data: &DataSet, c_x: f64, c_rho: f64) -> Self {
        let zb = p.z_bound(data, c_x, c_rho);
        Self {
            log_z: p.log_z,
            z: p.z,
            z_bound: zb.b,
            z_bound_holds: zb.holds,
            map: p.map_node().clone(),
            mean: p.mean(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Runtimes {
    pub total_seconds: f64,
    pub ks_table_seconds: f64,
    pub epsilon_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub version: String,
    pub config_hash: String,
    pub setup_hash: String,
    pub truth: KernelParams,
    pub truth_model: Model,
    pub substitute_ks_likelihood: bool,
    pub data: DataSet,
    pub records: Vec<EpsilonRecord>,
    pub ks_posterior: PosteriorSummary,
    pub data_stability: DataStability,
    pub conservation: ConservationSummary,
    pub orders: Vec<EmpiricalOrder>,
    pub push_forward_ks: PushForward,
    /// Wall-clock timings; the only nondeterministic part of the record.
    pub runtimes: Runtimes,
}

impl SweepResult {
    /// Copy with timings zeroed, for reproducibility comparisons.
    pub fn without_runtimes(&self) -> SweepResult {
        SweepResult {
            runtimes: Runtimes::default(),
            ..self.clone()
        }
    }
}

fn shifted(data: &DataSet, delta: f64) -> DataSet {
    let mut d = data.clone();
    d.y.values.iter_mut().for_each(|v| *v += delta);
    d
}

/// Builds the Keller–Segel posterior and one kinetic posterior per ε from
/// the same data and compares them.
pub fn run_posterior_sweep(config: &ExperimentConfig, cache: Option<&ForwardCache>) -> Result<SweepResult> {
    let start = Instant::now();
    config.validate()?;
    let forward = config.forward_model()?;
    let truth = config.truth();
    let truth_model = config.truth_model();
    let data = forward.generate_data(truth_model, &truth, config.gamma(), config.noise.seed)?;
    let prior = &config.prior;
    let nodes = prior.nodes();
    let (c_x, c_rho) = (config.measurement.c_x, config.measurement.c_rho);

    let t_ks = Instant::now();
    let ks_table = forward_table(&forward, Model::Ks, &nodes, cache)?;
    let post_ks = posterior_from_table(&ks_table, prior, &data)?;
    let ks_table_seconds = t_ks.elapsed().as_secs_f64();

    let study = forward_convergence(&forward, &truth, &config.sweep.epsilons)?;
    let g_ks_truth = forward.g_ks(&truth)?;

    let mut kin_diag = study.kinetic;
    let mut ks_diag = study.ks.merge(&ks_table.diagnostics);
    let mut records = Vec::with_capacity(config.sweep.epsilons.len());
    let mut epsilon_seconds = Vec::new();
    for (&eps, fwd) in config.sweep.epsilons.iter().zip(&study.records) {
        let t = Instant::now();
        let wrap = |e: Error| match e {
            Error::EpsilonFailure { .. } => e,
            other => Error::EpsilonFailure {
                epsilon: eps,
                source: Box::new(other),
            },
        };
        let model = Model::Chem { epsilon: eps };
        let table: ForwardTable = if config.sweep.substitute_ks_likelihood {
            ks_table.clone()
        } else {
            let t = forward_table(&forward, model, &nodes, cache).map_err(wrap)?;
            kin_diag = kin_diag.merge(&t.diagnostics);
            t
        };
        let post = posterior_from_table(&table, prior, &data)?;
        let Comparison {
            kl_forward,
            kl_reverse,
            hellinger,
        } = compare(&post, &post_ks)?;
        let eval = forward.evaluate_chem(&truth, eps).map_err(wrap)?;
        kin_diag = kin_diag.merge(&eval.diagnostics);
        let zb = post.z_bound(&data, c_x, c_rho);
        records.push(EpsilonRecord {
            epsilon: eps,
            forward_error_inf: fwd.error_inf,
            forward_error_l1: fwd.error_l1,
            equilibrium_gap: fwd.equilibrium_gap,
            measurement_gap: eval.g.max_abs_diff(&g_ks_truth)?,
            kl_forward,
            kl_reverse,
            hellinger,
            log_z_chem: post.log_z,
            z_chem: post.z,
            z_bound_holds: zb.holds,
            map_chem: post.map_node().clone(),
            mean_chem: post.mean(),
        });
        epsilon_seconds.push(t.elapsed().as_secs_f64());
    }
    ks_diag = ks_diag.merge(&forward.evaluate_ks(&truth)?.diagnostics);

    let delta = config.sweep.perturbation;
    let h1 = hellinger(&post_ks, &posterior_from_table(&ks_table, prior, &shifted(&data, delta))?)?;
    let h2 = hellinger(&post_ks, &posterior_from_table(&ks_table, prior, &shifted(&data, 0.5 * delta))?)?;
    let data_stability = DataStability {
        delta,
        hellinger_delta: h1,
        hellinger_half_delta: h2,
        ratio: (h2 > 0.0).then(|| h1 / h2),
    };

    let eps = &config.sweep.epsilons;
    let column = |f: fn(&EpsilonRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
    let orders = vec![
        EmpiricalOrder::new("forward_error_inf", eps, &column(|r| r.forward_error_inf)),
        EmpiricalOrder::new("forward_error_l1", eps, &column(|r| r.forward_error_l1)),
        EmpiricalOrder::new("measurement_gap", eps, &column(|r| r.measurement_gap)),
        EmpiricalOrder::new("kl_forward", eps, &column(|r| r.kl_forward)),
        EmpiricalOrder::new("kl_reverse", eps, &column(|r| r.kl_reverse)),
        EmpiricalOrder::new("hellinger", eps, &column(|r| r.hellinger)),
    ];

    Ok(SweepResult {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config.hash()?,
        setup_hash: forward.setup_hash().to_string(),
        truth: truth.clone(),
        truth_model,
        substitute_ks_likelihood: config.sweep.substitute_ks_likelihood,
        ks_posterior: PosteriorSummary::new(&post_ks, &data, c_x, c_rho),
        push_forward_ks: push_forward(
            &post_ks,
            forward.family(),
            forward.velocity(),
            forward.space().dimension(),
            config.sweep.push_forward_bins,
        )?,
        data,
        records,
        data_stability,
        conservation: ConservationSummary {
            kinetic_max_mass_drift: kin_diag.max_relative_mass_drift,
            kinetic_min_value: kin_diag.min_value,
            kinetic_steps: kin_diag.steps,
            ks_max_mass_drift: ks_diag.max_relative_mass_drift,
            ks_min_value: ks_diag.min_value,
        },
        orders,
        runtimes: Runtimes {
            total_seconds: start.elapsed().as_secs_f64(),
            ks_table_seconds,
            epsilon_seconds,
        },
    })
}
