//! Result files: `results.json`, `results.csv` and log-log plot data.

use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::sweep::SweepResult;
use crate::error::{Error, Result};

#[derive(Serialize)]
struct CsvRow {
    epsilon: f64,
    forward_error_inf: f64,
    forward_error_l1: f64,
    equilibrium_gap: f64,
    measurement_gap: f64,
    kl_forward: f64,
    kl_reverse: f64,
    hellinger: f64,
    log_z_chem: f64,
    z_bound_holds: bool,
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

type Metric = fn(&super::EpsilonRecord) -> f64;

/// Writes the report files into `dir` and returns their paths.
pub fn emit_report(result: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let json = dir.join("results.json");
    let mut text = serde_json::to_string_pretty(result)?;
    text.push('\n');
    std::fs::write(&json, text)?;
    written.push(json);

    let csv_path = dir.join("results.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(csv_error)?;
    for r in &result.records {
        w.serialize(CsvRow {
            epsilon: r.epsilon,
            forward_error_inf: r.forward_error_inf,
            forward_error_l1: r.forward_error_l1,
            equilibrium_gap: r.equilibrium_gap,
            measurement_gap: r.measurement_gap,
            kl_forward: r.kl_forward,
            kl_reverse: r.kl_reverse,
            hellinger: r.hellinger,
            log_z_chem: r.log_z_chem,
            z_bound_holds: r.z_bound_holds,
        })
        .map_err(csv_error)?;
    }
    w.flush()?;
    written.push(csv_path);

    let metrics: [(&str, Metric); 6] = [
        ("forward_error_inf", |r| r.forward_error_inf),
        ("forward_error_l1", |r| r.forward_error_l1),
        ("measurement_gap", |r| r.measurement_gap),
        ("kl_forward", |r| r.kl_forward),
        ("kl_reverse", |r| r.kl_reverse),
        ("hellinger", |r| r.hellinger),
    ];
    for (name, get) in metrics {
        let path = dir.join(format!("plot_{name}.dat"));
        let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(f, "# epsilon {name} log10_epsilon log10_{name}")?;
        for r in &result.records {
            let v = get(r);
            writeln!(f, "{} {} {} {}", r.epsilon, v, r.epsilon.log10(), v.log10())?;
        }
        f.flush()?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_results(path: &Path) -> Result<SweepResult> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}
