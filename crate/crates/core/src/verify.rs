//! Numeric invariant suites with a machine-readable report.
//!
//! Each suite evaluates a list of named checks `value <rule> threshold`. The
//! command line `verify` subcommand serializes the resulting
//! [`SuiteReport`]; the acceptance tests call the same functions.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    find_saddle, linearized_trajectory, max_entry_gap, pl_coefficient, s2_hessian_at_diagonal,
    w1_distance, SaddleReport,
};
use crate::data::{
    adversarial_zero_loss, canonical_teacher, chebyshev_nodes, diag_teacher, gaussian_sequences,
    label_set, s2_set, vandermonde_condition, LabeledSequence, SequenceSpec, TrainingSet,
    DEFAULT_NODE_RADIUS,
};
use crate::error::{Result, SsmError};
use crate::head::{Head, MlpHead};
use crate::loss::{characterize, grad, loss, predicted_a_dot};
use crate::ode::{Control, Dopri5};
use crate::optimize::{gradient_flow, Layout, OptimizerSpec, Probes};
use crate::rng::stream_id;
use crate::ssm::{generalization_error, DiagonalSsm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Dynamics,
    Saddle,
    Linearization,
    Vandermonde,
    Pl,
}

impl Suite {
    pub const ALL: [Suite; 5] =
        [Suite::Dynamics, Suite::Saddle, Suite::Linearization, Suite::Vandermonde, Suite::Pl];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Dynamics => "dynamics",
            Suite::Saddle => "saddle",
            Suite::Linearization => "linearization",
            Suite::Vandermonde => "vandermonde",
            Suite::Pl => "pl",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = SsmError;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| SsmError::InvalidArgument(format!("unknown suite '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    AtMost,
    AtLeast,
    Below,
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub rule: Rule,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, rule: Rule, threshold: f64) -> Self {
        let passed = match rule {
            Rule::AtMost => value <= threshold,
            Rule::AtLeast => value >= threshold,
            Rule::Below => value < threshold,
            Rule::Above => value > threshold,
        };
        Self { name: name.into(), value, rule, threshold, passed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn new(suite: Suite, checks: Vec<Check>) -> Self {
        Self { suite, passed: checks.iter().all(|c| c.passed), checks }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

pub const DEFAULT_SEED: u64 = 20240601;

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    match suite {
        Suite::Dynamics => dynamics_suite(seed, 100),
        Suite::Saddle => saddle_suite(),
        Suite::Linearization => linearization_suite(seed, 20),
        Suite::Vandermonde => vandermonde_suite(seed),
        Suite::Pl => pl_suite(seed, 10_000),
    }
}

/// A random model, head and training set for identity and gradient checks.
#[derive(Debug, Clone)]
pub struct RandomConfig {
    pub ssm: DiagonalSsm<f64>,
    pub head: Head<f64>,
    pub set: TrainingSet<f64>,
    pub train_bc: bool,
}

/// `d in 2..=8`, `kappa in {4, 6}`, `n in 1..=5`, identity or random MLP head
/// of width at most 8, random `train_bc`. Labels are arbitrary.
pub fn random_config<R: Rng + ?Sized>(rng: &mut R) -> RandomConfig {
    let d = rng.random_range(2..=8);
    let kappa = if rng.random_bool(0.5) { 4 } else { 6 };
    let n = rng.random_range(1..=5);
    let train_bc = rng.random_bool(0.5);
    let normal = |rng: &mut R| -> f64 { StandardNormal.sample(rng) };
    let a: Vec<f64> = (0..d).map(|_| rng.random_range(-0.95..0.95)).collect();
    let b: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
    let c: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
    let ssm = DiagonalSsm::new(a, b, c).expect("finite draws");
    let head = if rng.random_bool(0.5) {
        Head::Identity
    } else {
        let width = rng.random_range(1..=8);
        Head::Mlp(MlpHead::random(width, 0.7, rng))
    };
    let items = (0..n)
        .map(|_| LabeledSequence {
            x: (0..kappa).map(|_| normal(rng)).collect(),
            y: normal(rng),
        })
        .collect();
    let set = TrainingSet::new(items).expect("consistent lengths");
    RandomConfig { ssm, head, set, train_bc }
}

/// Largest `|p - q| / (1e-10 |q| + 1e-14)` between the polynomial form of
/// `a_j'` and minus the analytic gradient; at most 1 means the identity holds.
pub fn prop1_deviation(cfg: &RandomConfig) -> f64 {
    let ch = characterize(&cfg.ssm, &cfg.head, &cfg.set);
    let p = predicted_a_dot(&cfg.ssm, &ch);
    let g = grad(&cfg.ssm, &cfg.head, &cfg.set, cfg.train_bc);
    p.iter()
        .zip(&g.da)
        .map(|(&p, &da)| {
            let q = -da;
            (p - q).abs() / (1e-10 * q.abs() + 1e-14)
        })
        .fold(0.0, f64::max)
}

/// Smallest distance of any ReLU preactivation from zero over the training set.
pub fn kink_margin(cfg: &RandomConfig) -> f64 {
    match cfg.head.mlp() {
        None => f64::INFINITY,
        Some(m) => cfg
            .set
            .items()
            .iter()
            .map(|it| m.kink_margin(cfg.ssm.forward(&it.x)))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Five-point central differences of the loss against the analytic gradient,
/// over all trained parameters. Entry errors are relative to
/// `max(|analytic|, 1e-4 max(1, loss))`; the floor tracks the rounding noise
/// of the differenced loss values.
pub fn fd_gradient_deviation(cfg: &RandomConfig) -> f64 {
    let layout = Layout::new(&cfg.ssm, &cfg.head, cfg.train_bc);
    let theta = layout.pack(&cfg.ssm, &cfg.head);
    let mut analytic = vec![0.0; theta.len()];
    layout.gradient(&cfg.ssm, &cfg.head, &cfg.set, &mut analytic);
    let mut ssm = cfg.ssm.clone();
    let mut head = cfg.head.clone();
    let mut eval = |v: &[f64]| {
        layout.unpack(v, &mut ssm, &mut head);
        loss(&ssm, &head, &cfg.set)
    };
    let floor = 1e-4 * eval(&theta).max(1.0);
    let mut worst: f64 = 0.0;
    let mut probe = theta.clone();
    for i in 0..theta.len() {
        let h = 1e-5 * theta[i].abs().max(1.0);
        let mut at = |k: f64| {
            probe[i] = theta[i] + k * h;
            let v = eval(&probe);
            probe[i] = theta[i];
            v
        };
        let fd = (at(-2.0) - 8.0 * at(-1.0) + 8.0 * at(1.0) - at(2.0)) / (12.0 * h);
        worst = worst.max((fd - analytic[i]).abs() / analytic[i].abs().max(floor));
    }
    worst
}

/// Draws configurations until one sits at least `margin` away from every
/// ReLU kink (at most 1000 attempts).
pub fn random_config_off_kinks<R: Rng + ?Sized>(rng: &mut R, margin: f64) -> RandomConfig {
    let mut cfg = random_config(rng);
    for _ in 0..1000 {
        if kink_margin(&cfg) >= margin {
            break;
        }
        cfg = random_config(rng);
    }
    cfg
}

fn dynamics_suite(seed: u64, configs: usize) -> Result<SuiteReport> {
    let mut rng = stream_id(seed, 101);
    let mut prop1: f64 = 0.0;
    let mut fd: f64 = 0.0;
    let mut mlp = 0usize;
    for _ in 0..configs {
        let cfg = random_config_off_kinks(&mut rng, 1e-3);
        mlp += usize::from(!cfg.head.is_identity());
        prop1 = prop1.max(prop1_deviation(&cfg));
        fd = fd.max(fd_gradient_deviation(&cfg));
    }
    Ok(SuiteReport::new(
        Suite::Dynamics,
        vec![
            Check::new("prop1_normalized_deviation", prop1, Rule::AtMost, 1.0),
            Check::new("gradient_fd_relative_error", fd, Rule::AtMost, 1e-6),
            Check::new("configs_with_mlp_head", mlp as f64, Rule::AtLeast, 1.0),
        ],
    ))
}

/// Dense Hessian of the two-example loss by central differences of the
/// analytic gradient.
pub fn fd_hessian(set: &TrainingSet<f64>, a: &[f64], h: f64) -> DMatrix<f64> {
    let d = a.len();
    let grad_at = |v: &[f64]| {
        let ssm = DiagonalSsm::with_unit_io(v.to_vec()).expect("finite point");
        grad(&ssm, &Head::Identity, set, false).da
    };
    let mut m = DMatrix::zeros(d, d);
    let mut probe = a.to_vec();
    for j in 0..d {
        probe[j] = a[j] + h;
        let plus = grad_at(&probe);
        probe[j] = a[j] - h;
        let minus = grad_at(&probe);
        probe[j] = a[j];
        for i in 0..d {
            m[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    (&m + m.transpose()) * 0.5
}

fn sorted_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Checks for one `(d, L)` saddle.
pub fn saddle_checks(d: usize, l: usize) -> Result<Vec<Check>> {
    let r: SaddleReport<f64> = find_saddle(d, l)?;
    let tag = format!("d{d}_L{l}");
    let set = s2_set(&canonical_teacher::<f64>(d)?, l)?;
    let at = vec![r.s; d];
    let g = grad(&DiagonalSsm::with_unit_io(at.clone())?, &Head::Identity, &set, false);
    let g_inf = g.da.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let ev = sorted_eigenvalues(fd_hessian(&set, &at, 1e-5));
    let expected: Vec<f64> = std::iter::repeat_n(r.lambda_minus, d - 1)
        .chain(std::iter::once(r.lambda_plus))
        .collect();
    let spectrum = ev.iter().zip(&expected).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let dd = d as f64;
    Ok(vec![
        Check::new(format!("{tag}.s_times_d_lower"), r.s * dd, Rule::AtLeast, 1.0),
        Check::new(format!("{tag}.s_times_d_upper"), r.s * dd, Rule::AtMost, 3.0),
        Check::new(format!("{tag}.grad_inf_at_saddle"), g_inf, Rule::AtMost, 1e-12),
        Check::new(format!("{tag}.loss_at_s"), r.loss_at_s, Rule::AtLeast, 0.125),
        Check::new(format!("{tag}.lambda_plus"), r.lambda_plus, Rule::AtLeast, dd - 1.0),
        Check::new(format!("{tag}.lambda_minus_lower"), r.lambda_minus, Rule::Above, -1.0),
        Check::new(format!("{tag}.lambda_minus_upper"), r.lambda_minus, Rule::Below, 0.0),
        Check::new(format!("{tag}.fd_hessian_spectrum"), spectrum, Rule::AtMost, 1e-6),
    ])
}

fn saddle_suite() -> Result<SuiteReport> {
    let mut checks = Vec::new();
    for d in [8, 16, 32] {
        for l in [7, 9, 11] {
            checks.extend(saddle_checks(d, l)?);
        }
    }
    Ok(SuiteReport::new(Suite::Saddle, checks))
}

/// Sup-norm gap on `t in [0, 5]` between [`linearized_trajectory`] and a
/// Dormand-Prince solution of `y' = -H (y - s 1)`, with `H` applied entrywise
/// from its diagonal and off-diagonal values.
pub fn linearization_gap(report: &SaddleReport<f64>, a0: &[f64]) -> Result<f64> {
    let (diag, off) = s2_hessian_at_diagonal(report.s, report.d, report.l);
    let s = report.s;
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let total: f64 = y.iter().map(|v| v - s).sum();
        for (o, &v) in dy.iter_mut().zip(y) {
            *o = -((diag - off) * (v - s) + off * total);
        }
    };
    let times: Vec<f64> = (0..=100).map(|i| 0.05 * i as f64).collect();
    let sol = Dopri5::new(1e-12, 1e-14).integrate(rhs, 0.0, a0, &times, |_, _| Control::Continue)?;
    let mut worst: f64 = 0.0;
    for (t, y) in sol.times.iter().zip(&sol.states) {
        let closed = linearized_trajectory(a0, report, *t);
        for (p, q) in closed.iter().zip(y) {
            worst = worst.max((p - q).abs());
        }
    }
    Ok(worst)
}

fn linearization_suite(seed: u64, starts: usize) -> Result<SuiteReport> {
    let report = find_saddle::<f64>(10, 7)?;
    let mut rng = stream_id(seed, 102);
    let normal = Normal::new(0.0, 0.05).expect("valid sd");
    let mut worst: f64 = 0.0;
    for _ in 0..starts {
        let a0: Vec<f64> = (0..10).map(|_| report.s + normal.sample(&mut rng)).collect();
        worst = worst.max(linearization_gap(&report, &a0)?);
    }
    let at_s = vec![report.s; 10];
    let fixed = linearized_trajectory(&at_s, &report, 5.0)
        .iter()
        .map(|v| (v - report.s).abs())
        .fold(0.0, f64::max);
    let on_span = vec![0.5 * report.s; 10];
    let span_w1 = (0..=50)
        .map(|i| w1_distance(&linearized_trajectory(&on_span, &report, 0.1 * i as f64)))
        .fold(0.0, f64::max);
    Ok(SuiteReport::new(
        Suite::Linearization,
        vec![
            Check::new("closed_form_vs_numeric_sup", worst, Rule::AtMost, 1e-6),
            Check::new("saddle_is_fixed_point", fixed, Rule::AtMost, 0.0),
            Check::new("span_start_w1_distance", span_w1, Rule::AtMost, 1e-12),
        ],
    ))
}

/// Teacher used for the zero-loss construction: `A = 1`, `B = C = 1`.
pub fn vandermonde_teacher() -> DiagonalSsm<f64> {
    diag_teacher(&[1.0]).expect("valid teacher")
}

fn vandermonde_suite(seed: u64) -> Result<SuiteReport> {
    let (d, kappa, eps) = (12, 6, 0.3);
    let teacher = vandermonde_teacher();
    let nodes = chebyshev_nodes(d, DEFAULT_NODE_RADIUS);
    let student = adversarial_zero_loss(&teacher, kappa, d, eps, &nodes)?;
    let mut rng = stream_id(seed, 103);
    let spec = SequenceSpec { kappa, nonzero_indices: (1..=kappa).collect(), count: 8 };
    let mut worst_loss: f64 = 0.0;
    for _ in 0..20 {
        let xs = gaussian_sequences(&spec, &mut rng)?;
        let set = label_set(&teacher, &Head::Identity, xs)?;
        worst_loss = worst_loss.max(loss(&student, &Head::Identity, &set));
    }
    let gen = generalization_error(&student, &teacher, kappa + 1);
    let prefix = generalization_error(&student, &teacher, kappa);
    Ok(SuiteReport::new(
        Suite::Vandermonde,
        vec![
            Check::new("condition_estimate", vandermonde_condition(&nodes)?, Rule::AtMost, 1e12),
            Check::new("max_training_loss", worst_loss, Rule::AtMost, 1e-9),
            Check::new("markov_prefix_error", prefix, Rule::AtMost, 1e-9),
            Check::new("gen_error_kappa_plus_1", gen, Rule::AtLeast, eps - 1e-6),
        ],
    ))
}

/// Smallest `|grad l|^2 / (2 mu l)` over `samples` uniform points of
/// `[-3, 3]^d` whose largest entry gap exceeds `b`.
pub fn pl_ratio(b: f64, d: usize, l: usize, samples: usize, seed: u64) -> Result<f64> {
    let mu = pl_coefficient(b, d, l)?;
    let set = s2_set(&canonical_teacher::<f64>(d.max(2))?, l)?;
    let mut rng = stream_id(seed, 104);
    let mut worst = f64::INFINITY;
    let mut accepted = 0;
    while accepted < samples {
        let a: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..=3.0)).collect();
        if max_entry_gap(&a) <= b {
            continue;
        }
        accepted += 1;
        let ssm = DiagonalSsm::with_unit_io(a)?;
        let value = loss(&ssm, &Head::Identity, &set);
        let g2: f64 = grad(&ssm, &Head::Identity, &set, false).da.iter().map(|v| v * v).sum();
        worst = worst.min(g2 / (2.0 * mu * value));
    }
    Ok(worst)
}

/// Worst ratio `l(t) / (l(0) e^{-2 mu t})` along a two-example flow started at
/// `a0`, over the logged times at which the flow is still outside the
/// `b`-diagonal band.
pub fn pl_decay_ratio(a0: &[f64], b: f64, l: usize, horizon: f64) -> Result<f64> {
    let d = a0.len();
    let mu = pl_coefficient(b, d, l)?;
    let set = s2_set(&canonical_teacher::<f64>(d.max(2))?, l)?;
    let spec = OptimizerSpec::gradient_flow(horizon, 200);
    let out = gradient_flow(&DiagonalSsm::with_unit_io(a0.to_vec())?, &Head::Identity, &set, &spec, &Probes::none())?;
    let l0 = out.log.rows[0].loss;
    let mut worst: f64 = 0.0;
    for row in &out.log.rows {
        if max_entry_gap(&row.a) <= b {
            break;
        }
        worst = worst.max(row.loss / (l0 * (-2.0 * mu * row.time).exp()));
    }
    Ok(worst)
}

fn pl_suite(seed: u64, samples: usize) -> Result<SuiteReport> {
    let (b, d, l) = (0.5, 8, 7);
    let ratio = pl_ratio(b, d, l, samples, seed)?;
    let a0 = [0.9, 0.6, 0.3, 0.1, 0.05, 0.0, -0.1, -0.2];
    let decay = pl_decay_ratio(&a0, b, l, 20.0)?;
    Ok(SuiteReport::new(
        Suite::Pl,
        vec![
            Check::new("pl_coefficient", pl_coefficient(b, d, l)?, Rule::Above, 0.0),
            Check::new("min_grad_sq_over_2mu_loss", ratio, Rule::AtLeast, 1.0),
            Check::new("flow_value_decay_ratio", decay, Rule::AtMost, 1.0 + 1e-6),
        ],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn check_rules() {
        assert!(Check::new("x", 1.0, Rule::AtMost, 1.0).passed);
        assert!(!Check::new("x", 1.0, Rule::Below, 1.0).passed);
        assert!(Check::new("x", 2.0, Rule::Above, 1.0).passed);
        assert!(!Check::new("x", f64::NAN, Rule::AtLeast, 1.0).passed);
    }

    #[test]
    fn small_dynamics_suite_passes() {
        let r = dynamics_suite(3, 10).unwrap();
        assert!(r.passed, "{:?}", r.checks);
    }
}
