//! Single-config runs: data, initialization, training, artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use ssmlab::analysis::effective_rank_diag;
use ssmlab::data::{
    canonical_teacher, diag_teacher, gaussian_sequences, label_set, s1_set, s2_set, sample_init,
    two_state_teacher, SequenceSpec,
};
use ssmlab::head::{Head, MlpHead};
use ssmlab::optimize::{optimize, Probes, RunOutcome};
use ssmlab::rng::{stream, Stream};
use ssmlab::ssm::{generalization_error, normalized_generalization_error};
use ssmlab::{HeadF64, Set, Ssm};

use crate::config::{DataPreset, ExperimentConfig, HeadConfig, TeacherKind};
use crate::error::CliError;

/// Which training set a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// Single-arm run; `data.use_special` decides the set.
    Single,
    Clean,
    Poisoned,
}

impl Arm {
    pub fn label(self) -> Option<&'static str> {
        match self {
            Arm::Single => None,
            Arm::Clean => Some("clean"),
            Arm::Poisoned => Some("poisoned"),
        }
    }
}

/// Final numbers for one (arm, seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub arm: Arm,
    pub seed: u64,
    pub final_loss: f64,
    /// Normalized impulse-response error, or held-out relative error when the
    /// student has an MLP head.
    pub gen_norm: f64,
    /// `max_{k < kappa+2} |student_k - teacher_k|`; SSM-only runs.
    pub gen_unnormalized: Option<f64>,
    pub eff_rank: f64,
    pub steps: usize,
    /// Step at which the loss first fell below `loss_stop`.
    pub stop_step: Option<usize>,
    pub eff_rank_at_stop: Option<f64>,
    pub csv: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: Arm,
    pub final_loss: Stat,
    pub gen_norm: Stat,
    pub eff_rank: Stat,
    /// Runs whose loss reached `loss_stop`.
    pub converged: usize,
    /// `gen_norm` over converged runs only.
    pub gen_norm_converged: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub runs: Vec<SeedResult>,
    pub arms: Vec<ArmSummary>,
    /// Mean poisoned over mean clean generalization error, converged runs
    /// only (compare mode).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gen_ratio: Option<f64>,
}

impl RunSummary {
    pub fn from_results(name: &str, runs: Vec<SeedResult>) -> Self {
        let mut arms = Vec::new();
        for arm in [Arm::Single, Arm::Clean, Arm::Poisoned] {
            let sel: Vec<&SeedResult> = runs.iter().filter(|r| r.arm == arm).collect();
            if sel.is_empty() {
                continue;
            }
            let col = |f: fn(&SeedResult) -> f64| Stat::of(&sel.iter().map(|r| f(r)).collect::<Vec<_>>());
            arms.push(ArmSummary {
                arm,
                final_loss: col(|r| r.final_loss),
                gen_norm: col(|r| r.gen_norm),
                eff_rank: col(|r| r.eff_rank),
                converged: sel.iter().filter(|r| r.stop_step.is_some()).count(),
                gen_norm_converged: Stat::of(
                    &sel.iter().filter(|r| r.stop_step.is_some()).map(|r| r.gen_norm).collect::<Vec<_>>(),
                ),
            });
        }
        let mean_of = |arm| {
            arms.iter().find(|a: &&ArmSummary| a.arm == arm).and_then(|a| (a.converged > 0).then_some(a.gen_norm_converged.mean))
        };
        let gen_ratio = match (mean_of(Arm::Clean), mean_of(Arm::Poisoned)) {
            (Some(c), Some(p)) => Some(p / c),
            _ => None,
        };
        Self { name: name.to_string(), runs, arms, gen_ratio }
    }
}

/// Teacher SSM and head described by the config.
pub fn build_teacher(cfg: &ExperimentConfig) -> Result<(Ssm, HeadF64), CliError> {
    let t = &cfg.teacher;
    let ssm = match t.kind {
        TeacherKind::Canonical => canonical_teacher(t.d_star.unwrap_or(0))?,
        TeacherKind::TwoState => two_state_teacher(t.d_star.unwrap_or(0))?,
        TeacherKind::Diag => diag_teacher(&t.values)?,
    };
    let head = match t.head_width {
        Some(w) => Head::Mlp(MlpHead::teacher(w)),
        None => Head::Identity,
    };
    Ok((ssm, head))
}

/// Training set for one arm and seed.
pub fn build_training_set(
    cfg: &ExperimentConfig,
    arm: Arm,
    seed: u64,
    teacher: &Ssm,
    teacher_head: &HeadF64,
) -> Result<Set, CliError> {
    let with_special = match arm {
        Arm::Single => cfg.data.use_special,
        Arm::Clean => false,
        Arm::Poisoned => true,
    };
    let kappa = cfg.data.kappa;
    if cfg.data.preset == Some(DataPreset::S1S2) {
        return Ok(if with_special { s2_set(teacher, kappa)? } else { s1_set(teacher, kappa)? });
    }
    let base = cfg.data.baseline.as_ref().expect("validated");
    let mut xs = gaussian_sequences(base, &mut stream(seed, Stream::Data))?;
    if with_special {
        let special = cfg.data.special.as_ref().expect("validated");
        xs.extend(gaussian_sequences(special, &mut stream(seed, Stream::Special))?);
    }
    Ok(label_set(teacher, teacher_head, xs)?)
}

/// Student SSM and head at initialization.
pub fn build_student(cfg: &ExperimentConfig, seed: u64) -> Result<(Ssm, HeadF64), CliError> {
    let ssm = sample_init::<f64, _>(&cfg.init, &mut stream(seed, Stream::Init))?.into_ssm()?;
    let head = match cfg.student.head {
        HeadConfig::None => Head::Identity,
        HeadConfig::Mlp { d_h, sd } => Head::Mlp(MlpHead::random(d_h, sd, &mut stream(seed, Stream::Head))),
    };
    Ok((ssm, head))
}

/// Held-out set of fully Gaussian sequences for MLP runs.
pub fn build_test_set(cfg: &ExperimentConfig, seed: u64, teacher: &Ssm, head: &HeadF64) -> Result<Set, CliError> {
    let len = cfg.eval.gen_length;
    let spec = SequenceSpec { kappa: len, nonzero_indices: (1..=len).collect(), count: cfg.eval.test_set_size };
    let xs = gaussian_sequences(&spec, &mut stream(seed, Stream::TestSet))?;
    Ok(label_set(teacher, head, xs)?)
}

/// `||pred - y|| / ||y||` over a labeled set.
pub fn relative_error(ssm: &Ssm, head: &HeadF64, set: &Set) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for item in set.items() {
        let r = head.forward(ssm.forward(&item.x)) - item.y;
        num += r * r;
        den += item.y * item.y;
    }
    (num / den).sqrt()
}

pub fn csv_name(cfg: &ExperimentConfig, arm: Arm, seed: u64) -> String {
    match arm.label() {
        Some(l) => format!("{}_{l}_{seed}.csv", cfg.name),
        None => format!("{}_{seed}.csv", cfg.name),
    }
}

pub fn write_csv(path: &Path, outcome: &RunOutcome<f64>, d: usize) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(outcome.log.header(d))?;
    for row in &outcome.log.rows {
        let mut rec = vec![row.step.to_string()];
        rec.extend(
            [row.time, row.loss, row.gen_norm, row.eff_rank, row.gamma0, row.w1dist]
                .iter()
                .chain(&row.a)
                .chain(&row.extra)
                .map(f64::to_string),
        );
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Trains one (arm, seed) and writes its trajectory CSV into `out_dir`.
pub fn run_one(cfg: &ExperimentConfig, arm: Arm, seed: u64, out_dir: &Path) -> Result<SeedResult, CliError> {
    let (teacher, teacher_head) = build_teacher(cfg)?;
    let set = build_training_set(cfg, arm, seed, &teacher, &teacher_head)?;
    let (ssm0, head0) = build_student(cfg, seed)?;
    let spec = cfg.optimizer_for(arm == Arm::Poisoned || (arm == Arm::Single && cfg.data.use_special));
    let gen_len = cfg.eval.gen_length;
    let mlp = matches!(cfg.student.head, HeadConfig::Mlp { .. });
    let test_set = if mlp { Some(build_test_set(cfg, seed, &teacher, &teacher_head)?) } else { None };

    let probes = match &test_set {
        Some(ts) => Probes::none().generalization(move |s: &Ssm, h: &HeadF64| relative_error(s, h, ts)),
        None => Probes::with_teacher(&teacher, gen_len),
    };
    let outcome = optimize(&ssm0, &head0, &set, &spec, &probes)?;
    drop(probes);

    let d = outcome.ssm.dim();
    let name = csv_name(cfg, arm, seed);
    write_csv(&out_dir.join(&name), &outcome, d)?;

    let (gen_norm, gen_unnormalized) = match &test_set {
        Some(ts) => (relative_error(&outcome.ssm, &outcome.head, ts), None),
        None => (
            normalized_generalization_error(&outcome.ssm, &teacher, gen_len)?,
            Some(generalization_error(&outcome.ssm, &teacher, cfg.data.kappa + 2)),
        ),
    };
    let stop = outcome.first_below_stop.as_ref();
    Ok(SeedResult {
        arm,
        seed,
        final_loss: outcome.final_loss,
        gen_norm,
        gen_unnormalized,
        eff_rank: effective_rank_diag(outcome.ssm.a()).unwrap_or(f64::NAN),
        steps: outcome.steps,
        stop_step: stop.map(|s| s.step),
        eff_rank_at_stop: stop.map(|s| effective_rank_diag(s.ssm.a()).unwrap_or(f64::NAN)),
        csv: name,
    })
}

/// Every (arm, seed) task of a config, in output order.
pub fn tasks(cfg: &ExperimentConfig) -> Vec<(Arm, u64)> {
    let arms: &[Arm] = if cfg.compare { &[Arm::Clean, Arm::Poisoned] } else { &[Arm::Single] };
    cfg.seeds.iter().flat_map(|&s| arms.iter().map(move |&a| (a, s))).collect()
}

/// Worker pool sized by `SSMLAB_THREADS` when set.
pub fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("SSMLAB_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| crate::config::ConfigError::new("SSMLAB_THREADS", format!("not a count: {v}")))?;
        if n > 0 {
            b = b.num_threads(n);
        }
    }
    b.build().map_err(|e| CliError::Io(e.to_string()))
}

/// Runs every seed (and both arms in compare mode) and writes the CSVs and
/// `{name}_summary.json`.
pub fn run_config(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(RunSummary, PathBuf), CliError> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let pool = thread_pool()?;
    let results: Vec<Result<SeedResult, CliError>> = pool.install(|| {
        tasks(cfg).into_par_iter().map(|(arm, seed)| run_one(cfg, arm, seed, out_dir)).collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let summary = RunSummary::from_results(&cfg.name, runs);
    let path = out_dir.join(format!("{}_summary.json", cfg.name));
    fs::write(&path, serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
    Ok((summary, path))
}
