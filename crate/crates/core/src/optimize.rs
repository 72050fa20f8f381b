//! Gradient flow, adaptive-step gradient descent and Adam over the training
//! loss, with per-row trajectory logging.
//!
//! Parameters are packed into one vector `[a | b | c | head]`, where `b` and
//! `c` appear only when trained and the head block only for an MLP head.

use serde::{Deserialize, Serialize};

use crate::analysis::{effective_rank_diag, w1_distance};
use crate::data::TrainingSet;
use crate::error::{Result, SsmError};
use crate::head::Head;
use crate::loss::{characterize, grad, loss};
use crate::ode::{even_grid, Control, Dopri5, OdeStats};
use crate::scalar::Scalar;
use crate::ssm::{normalized_generalization_error, DiagonalSsm};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    GradientFlow,
    AdaptiveGd,
    Adam,
}

/// `amount` evenly spaced output times ending at `last`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timestamps {
    pub last: f64,
    pub amount: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    #[serde(default = "default_lr")]
    pub base_lr: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_softening")]
    pub softening: f64,
    #[serde(default = "default_rtol")]
    pub ode_rel_tol: f64,
    #[serde(default = "default_atol")]
    pub ode_abs_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamps: Option<Timestamps>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default = "default_loss_stop")]
    pub loss_stop: f64,
    /// Iterations to run once the loss first drops below `loss_stop`. `None`
    /// keeps going until `max_iters`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra_iters_after_stop: Option<usize>,
    #[serde(default)]
    pub train_bc: bool,
    /// Gradient flow stops once the loss falls below this value.
    #[serde(default = "default_steady_loss")]
    pub steady_loss: f64,
    /// Discrete methods log every `log_every`-th iteration plus the last one.
    #[serde(default = "default_log_every")]
    pub log_every: usize,
}

fn default_lr() -> f64 {
    0.01
}
fn default_beta() -> f64 {
    0.8
}
fn default_softening() -> f64 {
    1e-6
}
fn default_rtol() -> f64 {
    1e-8
}
fn default_atol() -> f64 {
    1e-10
}
fn default_loss_stop() -> f64 {
    0.01
}
fn default_steady_loss() -> f64 {
    1e-14
}
fn default_log_every() -> usize {
    1
}

impl OptimizerSpec {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            base_lr: default_lr(),
            beta: default_beta(),
            softening: default_softening(),
            ode_rel_tol: default_rtol(),
            ode_abs_tol: default_atol(),
            timestamps: None,
            max_iters: None,
            loss_stop: default_loss_stop(),
            extra_iters_after_stop: None,
            train_bc: false,
            steady_loss: default_steady_loss(),
            log_every: default_log_every(),
        }
    }

    pub fn gradient_flow(last: f64, amount: usize) -> Self {
        Self { timestamps: Some(Timestamps { last, amount }), ..Self::new(OptimizerKind::GradientFlow) }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SsmError::InvalidArgument(m.to_string()));
        if !(self.ode_rel_tol > 0.0 && self.ode_abs_tol > 0.0) {
            return bad("optimizer.ode tolerances must be positive");
        }
        if !(0.0..1.0).contains(&self.beta) {
            return bad("optimizer.beta must lie in [0, 1)");
        }
        if !(self.softening >= 0.0) || !(self.steady_loss >= 0.0) || !self.loss_stop.is_finite() {
            return bad("optimizer.softening, steady_loss and loss_stop must be nonnegative");
        }
        if self.log_every == 0 {
            return bad("optimizer.log_every must be at least 1");
        }
        match self.kind {
            OptimizerKind::GradientFlow => match self.timestamps {
                Some(ts) if ts.amount > 0 && ts.last > 0.0 && ts.last.is_finite() => Ok(()),
                Some(_) => bad("optimizer.timestamps needs last > 0 and amount > 0"),
                None => bad("optimizer.timestamps is required for gradient_flow"),
            },
            _ => {
                if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
                    return bad("optimizer.base_lr must be positive");
                }
                if self.max_iters.is_none() {
                    return bad("optimizer.max_iters is required for discrete optimizers");
                }
                Ok(())
            }
        }
    }
}

type Probe<'a, T> = Box<dyn Fn(&DiagonalSsm<T>, &Head<T>) -> T + 'a>;

/// Quantities recorded on every log row besides the built-in columns.
pub struct Probes<'a, T> {
    generalization: Option<Probe<'a, T>>,
    extra: Vec<(String, Probe<'a, T>)>,
}

impl<'a, T: Scalar> Probes<'a, T> {
    pub fn none() -> Self {
        Self { generalization: None, extra: Vec::new() }
    }

    /// Normalized impulse-response error against `teacher` over `k` steps.
    pub fn with_teacher(teacher: &'a DiagonalSsm<T>, k: usize) -> Self {
        Self::none().generalization(move |s, _| {
            normalized_generalization_error(s, teacher, k).unwrap_or(T::nan())
        })
    }

    /// Replaces the `gen_norm` column.
    pub fn generalization(mut self, f: impl Fn(&DiagonalSsm<T>, &Head<T>) -> T + 'a) -> Self {
        self.generalization = Some(Box::new(f));
        self
    }

    pub fn add(mut self, name: &str, f: impl Fn(&DiagonalSsm<T>, &Head<T>) -> T + 'a) -> Self {
        self.extra.push((name.to_string(), Box::new(f)));
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow<T> {
    pub step: usize,
    pub time: T,
    pub loss: T,
    pub gen_norm: T,
    pub eff_rank: T,
    pub gamma0: T,
    pub w1dist: T,
    pub a: Vec<T>,
    pub extra: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog<T> {
    pub extra_names: Vec<String>,
    pub rows: Vec<LogRow<T>>,
}

impl<T: Scalar> TrajectoryLog<T> {
    /// `step,time,loss,gen_norm,eff_rank,gamma0,w1dist,a_1..a_d` followed by
    /// any extra probe names.
    pub fn header(&self, d: usize) -> Vec<String> {
        let mut h: Vec<String> = ["step", "time", "loss", "gen_norm", "eff_rank", "gamma0", "w1dist"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend((1..=d).map(|j| format!("a_{j}")));
        h.extend(self.extra_names.iter().cloned());
        h
    }

    pub fn last(&self) -> Option<&LogRow<T>> {
        self.rows.last()
    }
}

/// Parameters at the first point where the loss dropped below `loss_stop`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<T> {
    pub step: usize,
    pub time: T,
    pub loss: T,
    pub ssm: DiagonalSsm<T>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome<T> {
    pub log: TrajectoryLog<T>,
    pub ssm: DiagonalSsm<T>,
    pub head: Head<T>,
    pub final_loss: T,
    pub first_below_stop: Option<Snapshot<T>>,
    /// Iterations for discrete methods, accepted steps for gradient flow.
    pub steps: usize,
    pub ode_stats: Option<OdeStats>,
    /// Largest loss increase between consecutive accepted flow steps.
    pub max_loss_increase: T,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    d: usize,
    train_bc: bool,
    head: usize,
}

impl Layout {
    pub(crate) fn new<T: Scalar>(ssm: &DiagonalSsm<T>, head: &Head<T>, train_bc: bool) -> Self {
        Self { d: ssm.dim(), train_bc, head: head.num_params() }
    }

    pub(crate) fn len(&self) -> usize {
        self.d * if self.train_bc { 3 } else { 1 } + self.head
    }

    pub(crate) fn pack<T: Scalar>(&self, ssm: &DiagonalSsm<T>, head: &Head<T>) -> Vec<T> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&ssm.a);
        if self.train_bc {
            v.extend_from_slice(&ssm.b);
            v.extend_from_slice(&ssm.c);
        }
        if let Some(m) = head.mlp() {
            v.extend(m.flatten());
        }
        v
    }

    pub(crate) fn unpack<T: Scalar>(&self, v: &[T], ssm: &mut DiagonalSsm<T>, head: &mut Head<T>) {
        let d = self.d;
        ssm.a.copy_from_slice(&v[..d]);
        let mut off = d;
        if self.train_bc {
            ssm.b.copy_from_slice(&v[d..2 * d]);
            ssm.c.copy_from_slice(&v[2 * d..3 * d]);
            off = 3 * d;
        }
        if let Head::Mlp(m) = head {
            m.assign_flat(&v[off..]);
        }
    }

    pub(crate) fn gradient<T: Scalar>(&self, ssm: &DiagonalSsm<T>, head: &Head<T>, set: &TrainingSet<T>, out: &mut [T]) {
        let g = grad(ssm, head, set, self.train_bc);
        let d = self.d;
        out[..d].copy_from_slice(&g.da);
        let mut off = d;
        if self.train_bc {
            out[d..2 * d].copy_from_slice(&g.db);
            out[2 * d..3 * d].copy_from_slice(&g.dc);
            off = 3 * d;
        }
        if let Some(h) = g.dhead {
            for (slot, v) in out[off..].iter_mut().zip(h.flatten()) {
                *slot = v;
            }
        }
    }
}

fn make_row<T: Scalar>(
    step: usize,
    time: T,
    ssm: &DiagonalSsm<T>,
    head: &Head<T>,
    set: &TrainingSet<T>,
    probes: &Probes<'_, T>,
) -> LogRow<T> {
    let ch = characterize(ssm, head, set);
    LogRow {
        step,
        time,
        loss: loss(ssm, head, set),
        gen_norm: probes.generalization.as_ref().map_or(T::nan(), |f| f(ssm, head)),
        eff_rank: effective_rank_diag(&ssm.a).unwrap_or(T::nan()),
        gamma0: ch.gammas.first().copied().unwrap_or(T::nan()),
        w1dist: w1_distance(&ssm.a),
        a: ssm.a.clone(),
        extra: probes.extra.iter().map(|(_, f)| f(ssm, head)).collect(),
    }
}

fn check_kind(spec: &OptimizerSpec, want: OptimizerKind) -> Result<()> {
    spec.validate()?;
    if spec.kind != want {
        return Err(SsmError::InvalidArgument(format!(
            "optimizer kind is {:?}, expected {:?}",
            spec.kind, want
        )));
    }
    Ok(())
}

fn check_set<T: Scalar>(ssm: &DiagonalSsm<T>, set: &TrainingSet<T>) -> Result<()> {
    if set.is_empty() {
        return Err(SsmError::InvalidArgument("training set is empty".into()));
    }
    if ssm.dim() == 0 {
        return Err(SsmError::Dimension("state dimension must be at least 1".into()));
    }
    Ok(())
}

/// Integrates `theta' = -grad loss(theta)` and logs at the spec's timestamps.
///
/// Every accepted step is observed: the loss increase between steps is
/// tracked, the first state below `loss_stop` is kept, and integration ends
/// early once the loss is below `steady_loss` (later rows repeat that state).
pub fn gradient_flow<T: Scalar>(
    ssm0: &DiagonalSsm<T>,
    head0: &Head<T>,
    set: &TrainingSet<T>,
    spec: &OptimizerSpec,
    probes: &Probes<'_, T>,
) -> Result<RunOutcome<T>> {
    check_kind(spec, OptimizerKind::GradientFlow)?;
    check_set(ssm0, set)?;
    let layout = Layout::new(ssm0, head0, spec.train_bc);
    let ts = spec.timestamps.expect("validated");
    let mut t_eval = vec![T::zero()];
    t_eval.extend(even_grid(T::lit(ts.last), ts.amount));
    let solver = Dopri5::new(T::lit(spec.ode_rel_tol), T::lit(spec.ode_abs_tol));

    let mut rhs_ssm = ssm0.clone();
    let mut rhs_head = head0.clone();
    let rhs = |_t: T, y: &[T], dy: &mut [T]| {
        layout.unpack(y, &mut rhs_ssm, &mut rhs_head);
        layout.gradient(&rhs_ssm, &rhs_head, set, dy);
        for v in dy.iter_mut() {
            *v = -*v;
        }
    };

    let mut obs_ssm = ssm0.clone();
    let mut obs_head = head0.clone();
    let mut prev_loss = loss(ssm0, head0, set);
    let mut max_increase = T::zero();
    let mut steps = 0usize;
    let mut first_below: Option<Snapshot<T>> = None;
    let loss_stop = T::lit(spec.loss_stop);
    let steady = T::lit(spec.steady_loss);
    if prev_loss < loss_stop {
        first_below = Some(Snapshot { step: 0, time: T::zero(), loss: prev_loss, ssm: ssm0.clone() });
    }
    let observer = |t: T, y: &[T]| {
        steps += 1;
        layout.unpack(y, &mut obs_ssm, &mut obs_head);
        let l = loss(&obs_ssm, &obs_head, set);
        max_increase = max_increase.max(l - prev_loss);
        prev_loss = l;
        if first_below.is_none() && l < loss_stop {
            first_below = Some(Snapshot { step: steps, time: t, loss: l, ssm: obs_ssm.clone() });
        }
        if l < steady {
            Control::Stop
        } else {
            Control::Continue
        }
    };

    let y0 = layout.pack(ssm0, head0);
    let sol = solver.integrate(rhs, T::zero(), &y0, &t_eval, observer)?;

    let mut ssm = ssm0.clone();
    let mut head = head0.clone();
    let mut log = TrajectoryLog {
        extra_names: probes.extra.iter().map(|(n, _)| n.clone()).collect(),
        rows: Vec::with_capacity(sol.times.len()),
    };
    for (i, (t, y)) in sol.times.iter().zip(&sol.states).enumerate() {
        layout.unpack(y, &mut ssm, &mut head);
        log.rows.push(make_row(i, *t, &ssm, &head, set, probes));
    }
    let final_loss = loss(&ssm, &head, set);
    Ok(RunOutcome {
        log,
        ssm,
        head,
        final_loss,
        first_below_stop: first_below,
        steps,
        ode_stats: Some(sol.stats),
        max_loss_increase: max_increase,
    })
}

/// Per-iteration update rule of a discrete optimizer.
trait Stepper<T> {
    fn step(&mut self, theta: &mut [T], g: &[T]);
}

/// `m <- beta m + (1 - beta) |g|^2` (with `m = |g_1|^2` at the first step),
/// then `theta <- theta - lr / sqrt(m + softening) g`.
#[derive(Debug, Clone)]
pub struct AdaptiveGdState<T> {
    pub lr: T,
    pub beta: T,
    pub softening: T,
    pub m: Option<T>,
}

impl<T: Scalar> AdaptiveGdState<T> {
    pub fn new(lr: T, beta: T, softening: T) -> Self {
        Self { lr, beta, softening, m: None }
    }

    /// Updates the moving average and returns the step size for `g`.
    pub fn step_size(&mut self, g: &[T]) -> T {
        let n2: T = g.iter().map(|&v| v * v).sum();
        let m = match self.m {
            None => n2,
            Some(m) => self.beta * m + (T::one() - self.beta) * n2,
        };
        self.m = Some(m);
        self.lr / (m + self.softening).sqrt()
    }
}

impl<T: Scalar> Stepper<T> for AdaptiveGdState<T> {
    fn step(&mut self, theta: &mut [T], g: &[T]) {
        let eta = self.step_size(g);
        for (p, &gv) in theta.iter_mut().zip(g) {
            *p -= eta * gv;
        }
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub lr: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(lr: T, n: usize) -> Self {
        Self { lr, m: vec![T::zero(); n], v: vec![T::zero(); n], t: 0 }
    }
}

impl<T: Scalar> Stepper<T> for AdamState<T> {
    fn step(&mut self, theta: &mut [T], g: &[T]) {
        let (b1, b2, eps) = (T::lit(ADAM_BETA1), T::lit(ADAM_BETA2), T::lit(ADAM_EPS));
        self.t = self.t.saturating_add(1);
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g[i];
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g[i] * g[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            theta[i] -= self.lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

fn run_discrete<T: Scalar, S: Stepper<T>>(
    ssm0: &DiagonalSsm<T>,
    head0: &Head<T>,
    set: &TrainingSet<T>,
    spec: &OptimizerSpec,
    probes: &Probes<'_, T>,
    stepper: &mut S,
) -> Result<RunOutcome<T>> {
    check_set(ssm0, set)?;
    let layout = Layout::new(ssm0, head0, spec.train_bc);
    let max_iters = spec.max_iters.expect("validated");
    let loss_stop = T::lit(spec.loss_stop);
    let mut theta = layout.pack(ssm0, head0);
    let mut g = vec![T::zero(); theta.len()];
    let mut ssm = ssm0.clone();
    let mut head = head0.clone();
    let mut log = TrajectoryLog {
        extra_names: probes.extra.iter().map(|(n, _)| n.clone()).collect(),
        rows: Vec::new(),
    };
    let mut first_below: Option<Snapshot<T>> = None;
    let mut end = max_iters;
    let mut iter = 0;
    let final_loss = loop {
        layout.unpack(&theta, &mut ssm, &mut head);
        let l = loss(&ssm, &head, set);
        if !l.is_finite() {
            return Err(SsmError::Divergence { iter, loss: l.to_f64_lossy() });
        }
        if first_below.is_none() && l < loss_stop {
            first_below = Some(Snapshot { step: iter, time: T::from_usize_lossy(iter), loss: l, ssm: ssm.clone() });
            if let Some(extra) = spec.extra_iters_after_stop {
                end = end.min(iter.saturating_add(extra));
            }
        }
        let done = iter >= end;
        if done || iter % spec.log_every == 0 {
            log.rows.push(make_row(iter, T::from_usize_lossy(iter), &ssm, &head, set, probes));
        }
        if done {
            break l;
        }
        layout.gradient(&ssm, &head, set, &mut g);
        stepper.step(&mut theta, &g);
        iter += 1;
    };
    Ok(RunOutcome {
        log,
        ssm,
        head,
        final_loss,
        first_below_stop: first_below,
        steps: iter,
        ode_stats: None,
        max_loss_increase: T::zero(),
    })
}

/// Gradient descent whose step is `base_lr` over the root of a moving average
/// of squared gradient norms. Runs `max_iters` iterations, or stops
/// `extra_iters_after_stop` iterations after the loss first falls below
/// `loss_stop`.
pub fn adaptive_gd<T: Scalar>(
    ssm0: &DiagonalSsm<T>,
    head0: &Head<T>,
    set: &TrainingSet<T>,
    spec: &OptimizerSpec,
    probes: &Probes<'_, T>,
) -> Result<RunOutcome<T>> {
    check_kind(spec, OptimizerKind::AdaptiveGd)?;
    let mut st = AdaptiveGdState::new(T::lit(spec.base_lr), T::lit(spec.beta), T::lit(spec.softening));
    run_discrete(ssm0, head0, set, spec, probes, &mut st)
}

/// Adam with the same stopping rule as [`adaptive_gd`].
pub fn adam<T: Scalar>(
    ssm0: &DiagonalSsm<T>,
    head0: &Head<T>,
    set: &TrainingSet<T>,
    spec: &OptimizerSpec,
    probes: &Probes<'_, T>,
) -> Result<RunOutcome<T>> {
    check_kind(spec, OptimizerKind::Adam)?;
    let n = Layout::new(ssm0, head0, spec.train_bc).len();
    let mut st = AdamState::new(T::lit(spec.base_lr), n);
    run_discrete(ssm0, head0, set, spec, probes, &mut st)
}

/// Dispatches on `spec.kind`.
pub fn optimize<T: Scalar>(
    ssm0: &DiagonalSsm<T>,
    head0: &Head<T>,
    set: &TrainingSet<T>,
    spec: &OptimizerSpec,
    probes: &Probes<'_, T>,
) -> Result<RunOutcome<T>> {
    match spec.kind {
        OptimizerKind::GradientFlow => gradient_flow(ssm0, head0, set, spec, probes),
        OptimizerKind::AdaptiveGd => adaptive_gd(ssm0, head0, set, spec, probes),
        OptimizerKind::Adam => adam(ssm0, head0, set, spec, probes),
    }
}
