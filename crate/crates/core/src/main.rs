#![allow(clippy::neg_cmp_op_on_partial_ord)]

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chemobayes::bayes::{build_posterior, compare, push_forward, PosteriorGrid, PushForward};
use chemobayes::cache::ForwardCache;
use chemobayes::experiments::{emit_report, run_posterior_sweep, ExperimentConfig};
use chemobayes::kernel::KernelParams;
use chemobayes::kinetic::{macro_density, KernelField};
use chemobayes::ks::{CoefficientField, MacroState};
use chemobayes::macro_coeffs::{coefficients_from_cells, solve_cells};
use chemobayes::measurement::{DataSet, Model};
use chemobayes::spatial::SpatialGrid;
use chemobayes::{Error, Result};

/// Kinetic and Keller–Segel chemotaxis forward models with grid-based Bayesian
/// inversion of tumbling kernels.
#[derive(Parser)]
#[command(name = "chemobayes", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Noise seed; overrides `noise.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for forward solves.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Chem,
    Ks,
}

#[derive(Subcommand)]
enum Command {
    /// Kinetic densities at the truth, one CSV per profile and snapshot.
    ForwardKinetic {
        #[command(flatten)]
        common: Common,
        /// Scaling parameter; defaults to the smallest swept value.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Keller–Segel densities at the truth, same CSV layout.
    ForwardKs {
        #[command(flatten)]
        common: Common,
    },
    /// Macroscopic coefficients and cell-problem solutions at the truth.
    Coeffs {
        #[command(flatten)]
        common: Common,
    },
    /// Synthetic noisy data from the configured truth model.
    GenerateData {
        #[command(flatten)]
        common: Common,
    },
    /// Grid posterior for one model.
    Posterior {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "ks")]
        model: ModelArg,
        /// Required for `--model chem` unless the sweep has a single value.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Data file from `generate-data`; generated on the fly when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// KL divergences and Hellinger distance between two posterior files.
    Compare {
        first: PathBuf,
        second: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Posterior sweep over the configured ε values, with report files.
    SweepEps {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Serialize, Deserialize)]
struct PosteriorFile {
    config_hash: String,
    setup_hash: String,
    map: KernelParams,
    mean: Vec<f64>,
    push_forward: PushForward,
    posterior: PosteriorGrid,
}

#[derive(Serialize)]
struct CoeffsFile {
    params: KernelParams,
    diffusion: Vec<Vec<f64>>,
    drift: Vec<f64>,
    kappa: Vec<Vec<f64>>,
    theta: Vec<f64>,
    kappa_residual: f64,
    theta_residual: f64,
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.noise.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output.dir = out.clone();
    }
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    config.validate()?;
    let dir = config.output.dir.clone();
    std::fs::create_dir_all(&dir)?;
    Ok((config, dir))
}

fn cache(config: &ExperimentConfig) -> Result<Option<ForwardCache>> {
    config.output.cache_dir.as_ref().map(ForwardCache::new).transpose()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn write_density_csv(path: &Path, grid: &SpatialGrid, rho: &[f64]) -> Result<()> {
    let to_io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(to_io)?;
    if grid.dimension() == 1 {
        w.write_record(["x", "rho"]).map_err(to_io)?;
    } else {
        w.write_record(["x", "y", "rho"]).map_err(to_io)?;
    }
    for (c, r) in grid.centers().iter().zip(rho) {
        let mut row = vec![c[0].to_string()];
        if grid.dimension() == 2 {
            row.push(c[1].to_string());
        }
        row.push(r.to_string());
        w.write_record(&row).map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

fn write_snapshots(dir: &Path, prefix: &str, grid: &SpatialGrid, columns: &[Vec<MacroState>]) -> Result<()> {
    for (k, snaps) in columns.iter().enumerate() {
        for s in snaps {
            let path = dir.join(format!("{prefix}_k{k}_t{}.csv", s.time));
            write_density_csv(&path, grid, &s.values)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ForwardKinetic { common, epsilon } => {
            let (config, dir) = load(&common)?;
            let forward = config.forward_model()?;
            let eps = epsilon.unwrap_or_else(|| config.smallest_epsilon());
            let kernel = KernelField::Uniform(config.truth());
            let setup = forward.setup();
            let columns = forward
                .initial_kinetic()
                .iter()
                .map(|f0| {
                    let sol = forward
                        .kinetic_solver()
                        .solve_kinetic(f0, &kernel, eps, setup.final_time(), &setup.times)
                        .map_err(|e| Error::EpsilonFailure {
                            epsilon: eps,
                            source: Box::new(e),
                        })?;
                    Ok(sol
                        .snapshots
                        .iter()
                        .map(|s| MacroState {
                            values: macro_density(s, forward.velocity()),
                            time: s.time,
                        })
                        .collect())
                })
                .collect::<Result<Vec<_>>>()?;
            write_snapshots(&dir, "kinetic", forward.space(), &columns)
        }
        Command::ForwardKs { common } => {
            let (config, dir) = load(&common)?;
            let forward = config.forward_model()?;
            let coeffs = chemobayes::compute_macro(
                forward.family(),
                &config.truth(),
                forward.velocity(),
                forward.space().dimension(),
            )?;
            let field = CoefficientField::Uniform(coeffs);
            let setup = forward.setup();
            let columns = forward
                .initial_density()
                .iter()
                .map(|r0| {
                    Ok(forward
                        .ks_solver()
                        .solve_ks(r0, &field, setup.final_time(), &setup.times)?
                        .snapshots)
                })
                .collect::<Result<Vec<_>>>()?;
            write_snapshots(&dir, "ks", forward.space(), &columns)
        }
        Command::Coeffs { common } => {
            let (config, dir) = load(&common)?;
            let vgrid = config.velocity_grid()?;
            let family = config.family();
            let params = config.truth();
            let cells = solve_cells(&family, &params, &vgrid, config.space.dimension)?;
            let c = coefficients_from_cells(&cells, &vgrid, config.space.dimension);
            let out = CoeffsFile {
                params,
                diffusion: c.diffusion,
                drift: c.drift,
                kappa: cells.kappa,
                theta: cells.theta,
                kappa_residual: cells.kappa_residual,
                theta_residual: cells.theta_residual,
            };
            println!("{}", serde_json::to_string_pretty(&out)?);
            write_json(&dir.join("coeffs.json"), &out)
        }
        Command::GenerateData { common } => {
            let (config, dir) = load(&common)?;
            let forward = config.forward_model()?;
            let data = forward.generate_data(config.truth_model(), &config.truth(), config.gamma(), config.noise.seed)?;
            let path = dir.join("data.json");
            write_json(&path, &data)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::Posterior {
            common,
            model,
            epsilon,
            data,
        } => {
            let (config, dir) = load(&common)?;
            let forward = config.forward_model()?;
            let model = match model {
                ModelArg::Ks => Model::Ks,
                ModelArg::Chem => {
                    let eps = match (epsilon, config.sweep.epsilons.as_slice()) {
                        (Some(e), _) => e,
                        (None, [e]) => *e,
                        _ => return Err(Error::Config("--model chem needs --epsilon".into())),
                    };
                    if !(eps > 0.0) {
                        return Err(Error::Config(format!("epsilon must be positive, got {eps}")));
                    }
                    Model::Chem { epsilon: eps }
                }
            };
            let data: DataSet = match data {
                Some(path) => {
                    let d: DataSet = serde_json::from_slice(&std::fs::read(&path)?)
                        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                    if d.setup_hash != forward.setup_hash() {
                        return Err(Error::Config(format!(
                            "{} was generated for a different measurement setup",
                            path.display()
                        )));
                    }
                    d
                }
                None => {
                    forward.generate_data(config.truth_model(), &config.truth(), config.gamma(), config.noise.seed)?
                }
            };
            let cache = cache(&config)?;
            let post = build_posterior(&forward, model, &config.prior, &data, cache.as_ref()).map_err(|e| match model {
                Model::Chem { epsilon } => Error::EpsilonFailure {
                    epsilon,
                    source: Box::new(e),
                },
                Model::Ks => e,
            })?;
            let file = PosteriorFile {
                config_hash: config.hash()?,
                setup_hash: forward.setup_hash().to_string(),
                map: post.map_node().clone(),
                mean: post.mean(),
                push_forward: push_forward(
                    &post,
                    forward.family(),
                    forward.velocity(),
                    forward.space().dimension(),
                    config.sweep.push_forward_bins,
                )?,
                posterior: post,
            };
            let name = match model {
                Model::Ks => "posterior_ks.json".to_string(),
                Model::Chem { epsilon } => format!("posterior_chem_eps{epsilon}.json"),
            };
            let path = dir.join(name);
            write_json(&path, &file)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::Compare { first, second, out } => {
            let read = |p: &Path| -> Result<PosteriorFile> {
                serde_json::from_slice(&std::fs::read(p)?).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
            };
            let (a, b) = (read(&first)?, read(&second)?);
            let c = compare(&a.posterior, &b.posterior)?;
            println!("{}", serde_json::to_string_pretty(&c)?);
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                write_json(&dir.join("compare.json"), &c)?;
            }
            Ok(())
        }
        Command::SweepEps { common } => {
            let (config, dir) = load(&common)?;
            let cache = cache(&config)?;
            let result = run_posterior_sweep(&config, cache.as_ref())?;
            for path in emit_report(&result, &dir)? {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else if e.is_numerical() {
                ExitCode::from(3)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
