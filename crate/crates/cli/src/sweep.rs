//! Cartesian sweeps over config overrides.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, ExperimentConfig};
use crate::error::CliError;
use crate::pipeline::{run_one, tasks, thread_pool, ArmSummary, RunSummary};

/// Override settings of a cell and the resulting config.
pub type CellConfig = (Vec<(String, String)>, ExperimentConfig);

const KEYS: [&str; 4] = ["seeds", "d", "kappa", "base_lr"];

/// One `--set key=v1,v2,...` argument.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Override {
    pub key: String,
    pub values: Vec<String>,
}

impl std::str::FromStr for Override {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        let (key, list) = s
            .split_once('=')
            .ok_or_else(|| ConfigError::new("--set", format!("expected key=v1,v2,..., got '{s}'")))?;
        let key = key.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::new(format!("--set {key}"), "unknown key (expected seeds, d, kappa or base_lr)"));
        }
        let values: Vec<String> = list.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(ConfigError::new(format!("--set {key}"), "empty value list"));
        }
        Ok(Self { key, values })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// `(key, value)` pairs that define the cell, seeds excluded.
    pub settings: Vec<(String, String)>,
    pub name: String,
    pub arms: Vec<ArmSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gen_ratio: Option<f64>,
    pub runs: Vec<crate::pipeline::SeedResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub name: String,
    pub seeds: Vec<u64>,
    pub cells: Vec<Cell>,
}

/// Expands the overrides into one validated config per cell, in
/// lexicographic order of the override lists as given.
pub fn expand(base: &ExperimentConfig, overrides: &[Override]) -> Result<Vec<CellConfig>, CliError> {
    let mut seen = Vec::new();
    for o in overrides {
        if seen.contains(&o.key) {
            return Err(ConfigError::new(format!("--set {}", o.key), "given more than once").into());
        }
        seen.push(o.key.clone());
    }
    let mut root = base.clone();
    if let Some(o) = overrides.iter().find(|o| o.key == "seeds") {
        root.seeds = o
            .values
            .iter()
            .map(|v| v.parse().map_err(|_| ConfigError::new("--set seeds", format!("not a seed: {v}"))))
            .collect::<Result<_, _>>()?;
    }
    let mut cells: Vec<CellConfig> = vec![(Vec::new(), root)];
    for o in overrides.iter().filter(|o| o.key != "seeds") {
        let mut next = Vec::with_capacity(cells.len() * o.values.len());
        for (settings, cfg) in &cells {
            for v in &o.values {
                let mut c = cfg.clone();
                c.apply_override(&o.key, v)?;
                let mut s = settings.clone();
                s.push((o.key.clone(), v.clone()));
                next.push((s, c));
            }
        }
        cells = next;
    }
    for (settings, cfg) in &mut cells {
        if !settings.is_empty() {
            let tag: Vec<String> = settings.iter().map(|(k, v)| format!("{k}{v}")).collect();
            cfg.name = format!("{}_{}", base.name, tag.join("_"));
        }
        cfg.validate()?;
    }
    Ok(cells)
}

/// Runs every cell and seed on one worker pool, writes per-run CSVs and
/// `{name}_sweep.json`. On failures the worst exit code wins.
pub fn run_sweep(base: &ExperimentConfig, overrides: &[Override], out_dir: &Path) -> Result<(SweepSummary, PathBuf), CliError> {
    let cells = expand(base, overrides)?;
    fs::create_dir_all(out_dir)?;
    let jobs: Vec<(usize, crate::pipeline::Arm, u64)> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, (_, cfg))| tasks(cfg).into_iter().map(move |(a, s)| (i, a, s)))
        .collect();
    let pool = thread_pool()?;
    let results: Vec<_> = pool.install(|| {
        jobs.par_iter().map(|&(i, arm, seed)| (i, run_one(&cells[i].1, arm, seed, out_dir))).collect()
    });

    let mut worst: Option<CliError> = None;
    let mut per_cell: Vec<Vec<_>> = vec![Vec::new(); cells.len()];
    for (i, r) in results {
        match r {
            Ok(res) => per_cell[i].push(res),
            Err(e) => {
                eprintln!("{}: {e}", cells[i].1.name);
                if worst.as_ref().is_none_or(|w| e.exit_code() > w.exit_code()) {
                    worst = Some(e);
                }
            }
        }
    }
    if let Some(e) = worst {
        return Err(e);
    }
    let summary = SweepSummary {
        name: base.name.clone(),
        seeds: cells[0].1.seeds.clone(),
        cells: cells
            .iter()
            .zip(per_cell)
            .map(|((settings, cfg), runs)| {
                let s = RunSummary::from_results(&cfg.name, runs);
                Cell { settings: settings.clone(), name: s.name, arms: s.arms, gen_ratio: s.gen_ratio, runs: s.runs }
            })
            .collect(),
    };
    let path = out_dir.join(format!("{}_sweep.json", base.name));
    fs::write(&path, serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
    Ok((summary, path))
}
