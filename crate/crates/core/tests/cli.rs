mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use chemobayes::experiments::{read_results, run_posterior_sweep, ExperimentConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chemobayes"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn quick_args(sub: &str, out: &Path) -> Vec<String> {
    vec![
        sub.into(),
        "--config".into(),
        configs().join("quick.toml").display().to_string(),
        "--out".into(),
        out.display().to_string(),
    ]
}

#[test]
fn shipped_default_config_equals_built_in_defaults() {
    let parsed = ExperimentConfig::load(&configs().join("default.toml")).unwrap();
    let builtin = ExperimentConfig::default();
    assert_eq!(parsed.hash().unwrap(), builtin.hash().unwrap());
    assert_eq!(parsed.output.dir, builtin.output.dir);
    parsed.validate().unwrap();
}

#[test]
fn config_round_trips_through_toml() {
    let c = common::reduced_config();
    let back = ExperimentConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
    assert_eq!(c.hash().unwrap(), back.hash().unwrap());
}

#[test]
fn unknown_config_key_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[space]\nbogus = 1\n").unwrap();
    let out = bin()
        .args(["coeffs", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn box_too_small_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, "[space]\nlength = [3.0]\n").unwrap();
    let out = bin()
        .args(["coeffs", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn inadmissible_epsilon_exits_with_numerical_code_and_names_node() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = quick_args("posterior", dir.path());
    args.extend(["--model".into(), "chem".into(), "--epsilon".into(), "5".into()]);
    let out = bin().args(&args).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("epsilon = 5") && err.contains("prior node 0"), "{err}");
}

#[test]
fn coefficients_and_forward_csvs() {
    let dir = tempfile::tempdir().unwrap();
    assert!(bin().args(quick_args("coeffs", dir.path())).output().unwrap().status.success());
    let coeffs: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("coeffs.json")).unwrap()).unwrap();
    assert!((coeffs["diffusion"][0][0].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!((coeffs["drift"][0].as_f64().unwrap() - 0.6).abs() < 1e-12);

    for sub in ["forward-ks", "forward-kinetic"] {
        let out = bin().args(quick_args(sub, dir.path())).output().unwrap();
        assert!(out.status.success(), "{sub}: {}", String::from_utf8_lossy(&out.stderr));
        let listed: Vec<String> = String::from_utf8_lossy(&out.stdout).lines().map(String::from).collect();
        assert!(!listed.is_empty());
        for path in listed {
            let mut r = csv::Reader::from_path(&path).unwrap();
            assert_eq!(r.headers().unwrap(), vec!["x", "rho"]);
            assert_eq!(r.records().count(), 1200, "{path}");
        }
    }
}

#[test]
fn data_posterior_and_compare_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(bin().args(quick_args("generate-data", d)).output().unwrap().status.success());
    let data = d.join("data.json").display().to_string();

    let mut ks = quick_args("posterior", d);
    ks.extend(["--model".into(), "ks".into(), "--data".into(), data.clone()]);
    assert!(bin().args(&ks).output().unwrap().status.success());
    let mut chem = quick_args("posterior", d);
    chem.extend(["--model".into(), "chem".into(), "--epsilon".into(), "0.1".into(), "--data".into(), data]);
    let out = bin().args(&chem).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let ks_file = d.join("posterior_ks.json");
    let chem_file = d.join("posterior_chem_eps0.1.json");
    let out = bin()
        .arg("compare")
        .args([&chem_file, &ks_file])
        .args(["--out", d.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let c: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("compare.json")).unwrap()).unwrap();
    let (kl, h) = (c["kl_forward"].as_f64().unwrap(), c["hellinger"].as_f64().unwrap());
    assert!(kl > 0.0 && h > 0.0 && h * h <= kl + 1e-12);

    let same = bin().arg("compare").args([&ks_file, &ks_file]).output().unwrap();
    let c: serde_json::Value = serde_json::from_slice(&same.stdout).unwrap();
    assert_eq!(c["kl_forward"].as_f64(), Some(0.0));
    assert_eq!(c["hellinger"].as_f64(), Some(0.0));
}

#[test]
fn data_from_another_setup_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(bin().args(quick_args("generate-data", d)).output().unwrap().status.success());
    let other = d.join("other.toml");
    std::fs::write(&other, "[space]\nn_cells = [1000]\n[prior]\nlambda = { min = 0.5, max = 2.0, nodes = 3 }\n").unwrap();
    let out = bin()
        .args(["posterior", "--config", other.to_str().unwrap(), "--out", d.to_str().unwrap()])
        .args(["--data", d.join("data.json").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_cli_writes_report_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        let out = bin().args(quick_args("sweep-eps", d)).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let ra = read_results(&a.path().join("results.json")).unwrap().without_runtimes();
    let rb = read_results(&b.path().join("results.json")).unwrap().without_runtimes();
    assert_eq!(serde_json::to_string(&ra).unwrap(), serde_json::to_string(&rb).unwrap());
    let mut csv = csv::Reader::from_path(a.path().join("results.csv")).unwrap();
    assert_eq!(csv.records().count(), ra.records.len());
    for metric in ["kl_forward", "hellinger"] {
        assert!(a.path().join(format!("plot_{metric}.dat")).exists());
    }
}

#[test]
fn substituted_likelihood_gives_zero_divergence() {
    let mut c = common::reduced_config();
    c.sweep.substitute_ks_likelihood = true;
    c.sweep.epsilons = vec![0.2, 0.1];
    let r = run_posterior_sweep(&c, None).unwrap();
    for rec in &r.records {
        assert_eq!(rec.kl_forward, 0.0);
        assert_eq!(rec.kl_reverse, 0.0);
        assert_eq!(rec.hellinger, 0.0);
    }
}

#[test]
fn cached_sweep_matches_uncached() {
    let cache_dir = tempfile::tempdir().unwrap();
    let cache = chemobayes::cache::ForwardCache::new(cache_dir.path()).unwrap();
    let mut c = common::reduced_config();
    c.sweep.epsilons = vec![0.2];
    let plain = run_posterior_sweep(&c, None).unwrap().without_runtimes();
    let cold = run_posterior_sweep(&c, Some(&cache)).unwrap().without_runtimes();
    let warm = run_posterior_sweep(&c, Some(&cache)).unwrap().without_runtimes();
    let s = |r: &chemobayes::experiments::SweepResult| serde_json::to_string(r).unwrap();
    assert_eq!(s(&plain), s(&cold));
    assert_eq!(s(&plain), s(&warm));
}
