use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use ssmlab_cli::config::ExperimentConfig;
use ssmlab_cli::error::CliError;
use ssmlab_cli::sweep::Override;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ssmlab"))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn bundled() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    v.sort();
    v
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A short single-seed version of a bundled config.
fn quick(bundled_name: &str, iters: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(&configs_dir().join(bundled_name)).unwrap();
    cfg.name = "quick".into();
    cfg.seeds = vec![11];
    cfg.optimizer.max_iters = Some(iters);
    cfg.optimizer.log_every = 50;
    if let Some(o) = &mut cfg.optimizer_special {
        o.max_iters = Some(iters);
        o.log_every = 50;
    }
    cfg.eval.test_set_size = 50;
    cfg
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> PathBuf {
    let p = dir.join("cfg.json");
    fs::write(&p, cfg.to_json()).unwrap();
    p
}

#[test]
fn bundled_configs_round_trip() {
    let files = bundled();
    assert_eq!(files.len(), 5);
    for f in files {
        let cfg = ExperimentConfig::load(&f).unwrap_or_else(|e| panic!("{}: {e}", f.display()));
        let text = cfg.to_json();
        let again = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(cfg, again, "{}", f.display());
        assert_eq!(text, again.to_json());
        assert_eq!(f.file_stem().unwrap().to_str().unwrap(), cfg.name);
    }
}

#[test]
fn kappa_mismatch_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick("table1_ssm_beyond.json", 10);
    cfg.data.baseline.as_mut().unwrap().kappa = 7;
    let path = dir.path().join("bad.json");
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = bin().arg("run").arg(&path).arg("--out-dir").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("data.baseline.kappa"), "{}", stderr(&out));
}

#[test]
fn unknown_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs_dir().join("table1_theorem.json")).unwrap();
    let bad = text.replacen("\"seeds\"", "\"sedes\": [1], \"seeds\"", 1);
    let path = dir.path().join("bad.json");
    fs::write(&path, bad).unwrap();
    let out = bin().arg("run").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("sedes"));
}

#[test]
fn duplicate_seed_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick("fig1_ssm_special.json", 10);
    cfg.seeds = vec![3, 4, 3];
    let path = dir.path().join("dup.json");
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = bin().arg("run").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("duplicate seed 3"));

    let good = write_config(dir.path(), &quick("fig1_ssm_special.json", 10));
    let out = bin()
        .args(["sweep"])
        .arg(&good)
        .args(["--set", "seeds=5,6,5", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("duplicate seed 5"));
}

#[test]
fn rerun_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick("table1_ssm_beyond.json", 600);
    let path = write_config(dir.path(), &cfg);
    let mut bytes = Vec::new();
    for (sub, threads) in [("a", "1"), ("b", "3")] {
        let out_dir = dir.path().join(sub);
        let out = bin()
            .arg("run")
            .arg(&path)
            .arg("--out-dir")
            .arg(&out_dir)
            .env("SSMLAB_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        bytes.push((
            fs::read(out_dir.join("quick_clean_11.csv")).unwrap(),
            fs::read(out_dir.join("quick_poisoned_11.csv")).unwrap(),
        ));
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick("fig1_ssm_nospecial.json", 300);
    let path = write_config(dir.path(), &cfg);
    let out = bin().arg("run").arg(&path).arg("--out-dir").arg(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));

    let csv = fs::read_to_string(dir.path().join("quick_11.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    let a_cols: Vec<String> = (1..=10).map(|j| format!("a_{j}")).collect();
    assert_eq!(header, format!("step,time,loss,gen_norm,eff_rank,gamma0,w1dist,{}", a_cols.join(",")));
    // rows at 0, 50, ..., 300
    assert_eq!(lines.count(), 7);

    let summary: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("quick_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"][0]["seed"], 11);
    assert_eq!(summary["runs"][0]["csv"], "quick_11.csv");
    assert_eq!(summary["arms"][0]["arm"], "single");
    assert!(summary["runs"][0]["gen_unnormalized"].is_number());
    assert!(summary.get("gen_ratio").is_none());
}

#[test]
fn mlp_run_uses_held_out_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick("table1_mlp.json", 100);
    cfg.compare = false;
    let path = write_config(dir.path(), &cfg);
    let out = bin().arg("run").arg(&path).arg("--out-dir").arg(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("quick_summary.json")).unwrap()).unwrap();
    let run = &summary["runs"][0];
    assert!(run["gen_unnormalized"].is_null());
    let g = run["gen_norm"].as_f64().unwrap();
    assert!(g > 0.0 && g.is_finite());
}

#[test]
fn sweep_builds_one_cell_per_combination() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &quick("fig1_ssm_special.json", 100));
    let out = bin()
        .arg("sweep")
        .arg(&path)
        .args(["--set", "seeds=1,2", "--set", "d=8,12", "--set", "base_lr=0.01,0.001", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let sweep: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("quick_sweep.json")).unwrap()).unwrap();
    let cells = sweep["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 4);
    assert_eq!(cells[0]["name"], "quick_d8_base_lr0.01");
    assert_eq!(cells[3]["name"], "quick_d12_base_lr0.001");
    for c in cells {
        assert_eq!(c["runs"].as_array().unwrap().len(), 2);
        assert_eq!(c["arms"][0]["gen_norm"]["n"], 2);
    }
    assert!(dir.path().join("quick_d12_base_lr0.001_2.csv").exists());
}

#[test]
fn empty_sweep_is_a_single_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick("fig1_ssm_special.json", 50);
    let cells = ssmlab_cli::sweep::expand(&cfg, &[]).unwrap();
    assert_eq!(cells.len(), 1);
    assert_eq!(cells[0].1, cfg);
    let (summary, _) = ssmlab_cli::sweep::run_sweep(&cfg, &[], dir.path()).unwrap();
    assert_eq!(summary.cells.len(), 1);
    assert_eq!(summary.cells[0].name, "quick");
}

#[test]
fn sweep_kappa_override_keeps_specs_consistent() {
    let cfg = quick("table1_ssm_beyond.json", 10);
    let o: Override = "kappa=7,8".parse().unwrap();
    let cells = ssmlab_cli::sweep::expand(&cfg, &[o]).unwrap();
    for (settings, c) in &cells {
        let k: usize = settings[0].1.parse().unwrap();
        assert_eq!(c.data.baseline.as_ref().unwrap().kappa, k);
        assert_eq!(c.data.special.as_ref().unwrap().kappa, k);
    }
    assert!("foo=1".parse::<Override>().is_err());
    assert!("d=".parse::<Override>().is_err());
}

#[test]
fn verify_reports_json_and_exit_codes() {
    let out = bin().args(["verify", "saddle"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["suite"], "saddle");
    assert_eq!(report["passed"], true);
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));

    let out = bin().args(["verify", "nonsense"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    assert_eq!(CliError::VerifyFailed("x".into()).exit_code(), 3);
    assert_eq!(CliError::Numerical(ssmlab::SsmError::Divergence { iter: 1, loss: f64::NAN }).exit_code(), 2);
}

#[test]
fn saddle_report_subcommand() {
    let out = bin().args(["saddle-report", "--d", "10", "--L", "7"]).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    let s = r["s"].as_f64().unwrap();
    assert!(s > 0.1 && s < 0.3);
    assert!(r["lambda_minus"].as_f64().unwrap() < 0.0);
    assert_eq!(r["L"], 7);

    let out = bin().args(["saddle-report", "--d", "3", "--L", "7"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn adversarial_subcommand() {
    let out = bin().args(["adversarial", "--kappa", "6", "--d", "12", "--eps", "0.3"]).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(r["prefix_error"].as_f64().unwrap() < 1e-9);
    assert!((r["gen_error_kappa_plus_1"].as_f64().unwrap() - 0.3).abs() < 1e-6);

    let out = bin().args(["adversarial", "--kappa", "6", "--d", "5", "--eps", "0.3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
