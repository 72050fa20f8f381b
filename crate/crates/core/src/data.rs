//! Teachers, training sequences, labeling and student initialization.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SsmError};
use crate::head::Head;
use crate::linalg::{inf_norm, Lu};
use crate::scalar::Scalar;
use crate::ssm::DiagonalSsm;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence<T> {
    pub x: Vec<T>,
    pub y: T,
}

/// Labeled sequences of a common length `kappa >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet<T> {
    items: Vec<LabeledSequence<T>>,
    kappa: usize,
}

impl<T: Scalar> TrainingSet<T> {
    pub fn new(items: Vec<LabeledSequence<T>>) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| SsmError::InvalidArgument("training set must be nonempty".into()))?;
        let kappa = first.x.len();
        if kappa < 2 {
            return Err(SsmError::InvalidArgument(format!(
                "sequence length must be at least 2, got {kappa}"
            )));
        }
        for (i, item) in items.iter().enumerate() {
            if item.x.len() != kappa {
                return Err(SsmError::Dimension(format!(
                    "sequence {i} has length {} but the set uses {kappa}",
                    item.x.len()
                )));
            }
            if !item.y.is_finite() || !item.x.iter().all(|v| v.is_finite()) {
                return Err(SsmError::NonFinite("training sequence"));
            }
        }
        Ok(Self { items, kappa })
    }

    pub fn items(&self) -> &[LabeledSequence<T>] {
        &self.items
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Concatenation of two sets with the same sequence length.
    pub fn union(&self, other: &Self) -> Result<Self> {
        let mut items = self.items.clone();
        items.extend(other.items.iter().cloned());
        Self::new(items)
    }
}

/// Which positions of a length-`kappa` sequence carry Gaussian entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSpec {
    pub kappa: usize,
    /// 1-based positions, as in the experiment tables.
    pub nonzero_indices: Vec<usize>,
    pub count: usize,
}

impl SequenceSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(&bad) = self
            .nonzero_indices
            .iter()
            .find(|&&i| i == 0 || i > self.kappa)
        {
            return Err(SsmError::InvalidArgument(format!(
                "index {bad} outside [1, {}]",
                self.kappa
            )));
        }
        Ok(())
    }
}

/// `count` sequences with i.i.d. standard normal entries on the chosen
/// positions and zeros elsewhere.
pub fn gaussian_sequences<T: Scalar, R: Rng + ?Sized>(
    spec: &SequenceSpec,
    rng: &mut R,
) -> Result<Vec<Vec<T>>> {
    spec.validate()?;
    Ok((0..spec.count)
        .map(|_| {
            let mut x = vec![T::zero(); spec.kappa];
            for &idx in &spec.nonzero_indices {
                let v: f64 = StandardNormal.sample(rng);
                x[idx - 1] = T::lit(v);
            }
            x
        })
        .collect())
}

/// Unit vector `e_j` (1-based) of length `kappa`.
pub fn unit_sequence<T: Scalar>(kappa: usize, j: usize) -> Vec<T> {
    let mut x = vec![T::zero(); kappa];
    x[j - 1] = T::one();
    x
}

/// The `d`-dimensional equivalent of the two-dimensional poisoning teacher:
/// `A = diag(1, 0, ..., 0)`, `B = 1`, `C = 1^T`. Its Markov parameters are
/// `(d, 1, 1, ...)`.
pub fn canonical_teacher<T: Scalar>(d: usize) -> Result<DiagonalSsm<T>> {
    if d < 2 {
        return Err(SsmError::InvalidArgument(format!("canonical teacher needs d >= 2, got {d}")));
    }
    let mut a = vec![T::zero(); d];
    a[0] = T::one();
    DiagonalSsm::with_unit_io(a)
}

/// Two-dimensional teacher `A = diag(1, 0)`, `B = C^T = (1, sqrt(d-1))`;
/// realizes the same mapping as [`canonical_teacher`]`(d)`.
pub fn two_state_teacher<T: Scalar>(d: usize) -> Result<DiagonalSsm<T>> {
    if d < 2 {
        return Err(SsmError::InvalidArgument(format!("teacher needs d >= 2, got {d}")));
    }
    let r = T::from_usize_lossy(d - 1).sqrt();
    DiagonalSsm::new(vec![T::one(), T::zero()], vec![T::one(), r], vec![T::one(), r])
}

/// Teacher `A = diag(values)`, `B = 1`, `C = 1^T`. The teacher keeps its own
/// dimension regardless of the student size.
pub fn diag_teacher<T: Scalar>(values: &[T]) -> Result<DiagonalSsm<T>> {
    DiagonalSsm::with_unit_io(values.to_vec())
}

/// Labels every sequence with the teacher SSM, optionally followed by a head.
pub fn label_set<T: Scalar>(
    teacher: &DiagonalSsm<T>,
    head: &Head<T>,
    xs: Vec<Vec<T>>,
) -> Result<TrainingSet<T>> {
    let items = xs
        .into_iter()
        .map(|x| {
            let y = head.forward(teacher.forward(&x));
            LabeledSequence { x, y }
        })
        .collect();
    TrainingSet::new(items)
}

/// `S1 = {(e_1, phi*(e_1))}`.
pub fn s1_set<T: Scalar>(teacher: &DiagonalSsm<T>, kappa: usize) -> Result<TrainingSet<T>> {
    label_set(teacher, &Head::Identity, vec![unit_sequence(kappa, 1)])
}

/// `S2 = S1 + {(e_{kappa-1}, phi*(e_{kappa-1}))}`.
pub fn s2_set<T: Scalar>(teacher: &DiagonalSsm<T>, kappa: usize) -> Result<TrainingSet<T>> {
    label_set(
        teacher,
        &Head::Identity,
        vec![unit_sequence(kappa, 1), unit_sequence(kappa, kappa - 1)],
    )
}

/// Student initialization recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub d: usize,
    pub sd_a: f64,
    /// Standard deviation for `B`, `C`; `None` fixes them at ones.
    #[serde(default)]
    pub sd_bc: Option<f64>,
    #[serde(default)]
    pub diff: f64,
    /// Entry `j+2` (1-based) is set to entry 1 minus `factor_j * diff`.
    #[serde(default)]
    pub extension_factors: Vec<f64>,
    /// Constant added to every entry of `A` and `B` after the recipe.
    #[serde(default)]
    pub shift: f64,
    /// Take absolute values of the raw draws before sorting.
    #[serde(default = "default_true")]
    pub absolute: bool,
}

fn default_true() -> bool {
    true
}

/// `0.05 * exp(power * log10(sd_a))`, the gap rule used by the experiment tables.
pub fn diff_rule(sd_a: f64, power: f64) -> f64 {
    0.05 * (power * sd_a.log10()).exp()
}

impl InitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(SsmError::InvalidArgument("init.d must be positive".into()));
        }
        if !(self.sd_a > 0.0) {
            return Err(SsmError::InvalidArgument("init.sd_a must be positive".into()));
        }
        if let Some(sd) = self.sd_bc {
            if !(sd > 0.0) {
                return Err(SsmError::InvalidArgument("init.sd_bc must be positive".into()));
            }
        }
        if !(self.diff >= 0.0) {
            return Err(SsmError::InvalidArgument("init.diff must be nonnegative".into()));
        }
        if !self.extension_factors.is_empty() && self.extension_factors.len() + 2 > self.d {
            return Err(SsmError::InvalidArgument(
                "more extension factors than entries".into(),
            ));
        }
        Ok(())
    }
}

/// Diagnostics attached to a sampled initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitReport {
    /// `a` is in `I0`: positive, strictly descending, `a_1 < 1/(2d)`.
    pub in_i0: bool,
    pub strictly_descending: bool,
    pub all_positive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitSample<T> {
    pub a: Vec<T>,
    pub b: Vec<T>,
    pub c: Vec<T>,
    pub report: InitReport,
}

impl<T: Scalar> InitSample<T> {
    pub fn into_ssm(self) -> Result<DiagonalSsm<T>> {
        DiagonalSsm::new(self.a, self.b, self.c)
    }
}

fn sorted_draw<R: Rng + ?Sized>(d: usize, sd: f64, absolute: bool, rng: &mut R) -> Vec<f64> {
    let normal = Normal::new(0.0, sd).expect("finite sd");
    let mut v: Vec<f64> = (0..d)
        .map(|_| {
            let x = normal.sample(rng);
            if absolute {
                x.abs()
            } else {
                x
            }
        })
        .collect();
    v.sort_by(|x, y| y.partial_cmp(x).expect("finite draws"));
    v
}

fn apply_gaps(v: &mut [f64], diff: f64, extension: &[f64]) {
    if v.len() >= 2 {
        v[1] = v[0] - diff;
    }
    let top = v.first().copied().unwrap_or_default();
    for (slot, &f) in v.iter_mut().skip(2).zip(extension) {
        *slot = top - f * diff;
    }
}

/// Membership in `I0 = { alpha (zeta_1..zeta_d) : alpha in (0, 1/2d), 1 = zeta_1 > ... > zeta_d > 0 }`.
pub fn i0_report<T: Scalar>(a: &[T]) -> InitReport {
    let d = a.len();
    let all_positive = a.iter().all(|&v| v > T::zero());
    let strictly_descending = a.windows(2).all(|w| w[0] > w[1]);
    let below = d > 0 && a[0] < T::one() / T::from_usize_lossy(2 * d);
    InitReport {
        in_i0: all_positive && strictly_descending && below,
        strictly_descending,
        all_positive,
    }
}

/// Near-zero sorted initialization with a controlled gap between the two
/// largest entries.
///
/// `A`: sorted (absolute) `N(0, sd_a)` draws, second entry reset to first
/// minus `diff`, further entries per `extension_factors`. `B` follows the same
/// recipe with `sd_bc`; `C` is only sorted. `shift` is then added to `A` and
/// `B`. `I0` membership is reported, never enforced.
pub fn sample_init<T: Scalar, R: Rng + ?Sized>(spec: &InitSpec, rng: &mut R) -> Result<InitSample<T>> {
    spec.validate()?;
    let d = spec.d;
    let mut a = sorted_draw(d, spec.sd_a, spec.absolute, rng);
    apply_gaps(&mut a, spec.diff, &spec.extension_factors);
    let (mut b, c) = match spec.sd_bc {
        Some(sd) => {
            let mut b = sorted_draw(d, sd, spec.absolute, rng);
            apply_gaps(&mut b, spec.diff, &spec.extension_factors);
            let c = sorted_draw(d, sd, spec.absolute, rng);
            (b, c)
        }
        None => (vec![1.0; d], vec![1.0; d]),
    };
    if spec.shift != 0.0 {
        a.iter_mut().for_each(|v| *v += spec.shift);
        if spec.sd_bc.is_some() {
            b.iter_mut().for_each(|v| *v += spec.shift);
        }
    }
    let conv = |v: Vec<f64>| v.into_iter().map(T::lit).collect::<Vec<T>>();
    let a = conv(a);
    let report = i0_report(&a);
    Ok(InitSample { a, b: conv(b), c: conv(c), report })
}

/// `n` Chebyshev points scaled into `(-radius, radius)`, in descending order.
pub fn chebyshev_nodes<T: Scalar>(n: usize, radius: T) -> Vec<T> {
    let pi = T::lit(std::f64::consts::PI);
    (0..n)
        .map(|i| {
            let theta = T::from_usize_lossy(2 * i + 1) * pi / T::from_usize_lossy(2 * n);
            radius * theta.cos()
        })
        .collect()
}

/// Default radius for Vandermonde nodes.
pub const DEFAULT_NODE_RADIUS: f64 = 0.95;

/// Systems whose condition estimate times machine epsilon exceeds this are refused.
pub const MAX_COND_TIMES_EPS: f64 = 1e-4;

/// Row `k'` holds `nodes_j^{k'}`: maps `g` to the Markov parameters of
/// `(diag(nodes), 1, g)`.
fn markov_matrix<T: Scalar>(nodes: &[T]) -> Vec<T> {
    let d = nodes.len();
    let mut m = vec![T::zero(); d * d];
    for (j, &x) in nodes.iter().enumerate() {
        let mut p = T::one();
        for row in 0..d {
            m[row * d + j] = p;
            p *= x;
        }
    }
    m
}

/// `||V||_inf ||V^{-1}||_inf` for the node matrix used by [`adversarial_zero_loss`].
pub fn vandermonde_condition<T: Scalar>(nodes: &[T]) -> Result<T> {
    let d = nodes.len();
    let m = markov_matrix(nodes);
    let norm = inf_norm(d, &m);
    let lu = Lu::factor(d, m)?;
    Ok(norm * lu.inverse_inf_norm())
}

/// An SSM that fits every length-`kappa` teacher-labeled sequence exactly and
/// yet deviates from the teacher by `eps` at Markov indices `kappa..d-1`.
///
/// The student is `(diag(nodes), 1, g)`; its first `d` Markov parameters are
/// `V^T g` with `V` the Vandermonde matrix of the nodes, so `g` solves
/// `V^T g = r` where `r` copies the teacher's first `kappa` parameters and
/// adds `eps` to the rest.
pub fn adversarial_zero_loss<T: Scalar>(
    teacher: &DiagonalSsm<T>,
    kappa: usize,
    d: usize,
    eps: T,
    nodes: &[T],
) -> Result<DiagonalSsm<T>> {
    if d <= kappa {
        return Err(SsmError::InvalidArgument(format!("need d > kappa, got d={d}, kappa={kappa}")));
    }
    if nodes.len() != d {
        return Err(SsmError::Dimension(format!("{} nodes for d={d}", nodes.len())));
    }
    if !(eps > T::zero()) {
        return Err(SsmError::InvalidArgument("eps must be positive".into()));
    }
    for i in 0..d {
        for j in i + 1..d {
            if nodes[i] == nodes[j] {
                return Err(SsmError::InvalidArgument(format!("nodes {i} and {j} coincide")));
            }
        }
    }
    let m = markov_matrix(nodes);
    let norm = inf_norm(d, &m);
    let lu = Lu::factor(d, m).map_err(|_| SsmError::IllConditioned { cond: f64::INFINITY })?;
    let cond = norm * lu.inverse_inf_norm();
    if !(cond * T::epsilon() <= T::lit(MAX_COND_TIMES_EPS)) {
        return Err(SsmError::IllConditioned { cond: cond.to_f64_lossy() });
    }
    let mut r = teacher.impulse_response(d);
    for v in r.iter_mut().skip(kappa) {
        *v += eps;
    }
    let g = lu.solve(&r);
    DiagonalSsm::new(nodes.to_vec(), vec![T::one(); d], g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use crate::ssm::generalization_error;

    #[test]
    fn canonical_teacher_values() {
        let t = canonical_teacher::<f64>(10).unwrap();
        assert_eq!(t.impulse_response(3), vec![10.0, 1.0, 1.0]);
        assert_eq!(t.forward(&unit_sequence(7, 1)), 1.0);
        assert_eq!(t.forward(&unit_sequence(7, 6)), 1.0);
        assert!(canonical_teacher::<f64>(1).is_err());
    }

    #[test]
    fn two_state_teacher_is_equivalent() {
        for d in [2, 8, 10, 20] {
            let a = two_state_teacher::<f64>(d).unwrap().impulse_response(12);
            let b = canonical_teacher::<f64>(d).unwrap().impulse_response(12);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn diag_teacher_values() {
        let t = diag_teacher::<f64>(&[0.99, 0.8]).unwrap();
        let ir = t.impulse_response(2);
        assert_eq!(ir[0], 2.0);
        assert!((ir[1] - 1.79).abs() < 1e-15);
        assert_eq!(diag_teacher(&[1.0]).unwrap().impulse_response(4), vec![1.0; 4]);
        assert_eq!(diag_teacher(&[0.99, 0.8, 0.5, 0.3]).unwrap().dim(), 4);
    }

    #[test]
    fn gaussian_sequences_respect_support() {
        let mut rng = stream(1, Stream::Data);
        let base = SequenceSpec { kappa: 6, nonzero_indices: vec![1, 2], count: 8 };
        for x in gaussian_sequences::<f64, _>(&base, &mut rng).unwrap() {
            assert!(x[2..].iter().all(|&v| v == 0.0));
            assert!(x[0] != 0.0 && x[1] != 0.0);
        }
        let special = SequenceSpec { kappa: 6, nonzero_indices: vec![5, 6], count: 10 };
        for x in gaussian_sequences::<f64, _>(&special, &mut rng).unwrap() {
            assert!(x[..4].iter().all(|&v| v == 0.0));
        }
        let empty = SequenceSpec { kappa: 6, nonzero_indices: vec![1], count: 0 };
        assert!(gaussian_sequences::<f64, _>(&empty, &mut rng).unwrap().is_empty());
        let bad = SequenceSpec { kappa: 6, nonzero_indices: vec![7], count: 1 };
        assert!(gaussian_sequences::<f64, _>(&bad, &mut rng).is_err());
    }

    #[test]
    fn s1_s2_shapes() {
        let t = canonical_teacher::<f64>(10).unwrap();
        let s1 = s1_set(&t, 7).unwrap();
        assert_eq!(s1.len(), 1);
        assert_eq!(s1.items()[0].y, 1.0);
        let s2 = s2_set(&t, 7).unwrap();
        assert_eq!(s2.items()[1].x, unit_sequence::<f64>(7, 6));
        assert_eq!(s2.items()[1].y, 1.0);
        let z = label_set(&t, &Head::Identity, vec![vec![0.0; 7]]).unwrap();
        assert_eq!(z.items()[0].y, 0.0);
    }

    #[test]
    fn training_set_validation() {
        assert!(TrainingSet::<f64>::new(vec![]).is_err());
        let short = LabeledSequence { x: vec![1.0], y: 1.0 };
        assert!(TrainingSet::new(vec![short]).is_err());
        let a = LabeledSequence { x: vec![1.0, 0.0], y: 1.0 };
        let b = LabeledSequence { x: vec![1.0, 0.0, 0.0], y: 1.0 };
        assert!(TrainingSet::new(vec![a, b]).is_err());
    }

    #[test]
    fn table8_init_gap() {
        let sd_a = 1e-3;
        let spec = InitSpec {
            d: 10,
            sd_a,
            sd_bc: None,
            diff: diff_rule(sd_a, 5.0),
            extension_factors: vec![],
            shift: 0.0,
            absolute: true,
        };
        for seed in 0..20 {
            let s: InitSample<f64> = sample_init(&spec, &mut stream(seed, Stream::Init)).unwrap();
            let gap = s.a[0] - s.a[1];
            let ulp = s.a[0] * f64::EPSILON;
            assert!((gap - spec.diff).abs() <= 4.0 * ulp, "gap {gap} vs {}", spec.diff);
            assert_eq!(s.b, vec![1.0; 10]);
            assert!(s.report.all_positive);
        }
    }

    #[test]
    fn zero_diff_is_plain_sorted_sample() {
        let spec = InitSpec {
            d: 6,
            sd_a: 0.1,
            sd_bc: None,
            diff: 0.0,
            extension_factors: vec![],
            shift: 0.0,
            absolute: true,
        };
        let s: InitSample<f64> = sample_init(&spec, &mut stream(4, Stream::Init)).unwrap();
        let mut raw: Vec<f64> = {
            let mut rng = stream(4, Stream::Init);
            let normal = Normal::new(0.0, 0.1).unwrap();
            (0..6).map(|_| { let v: f64 = normal.sample(&mut rng); v.abs() }).collect()
        };
        raw.sort_by(|x, y| y.partial_cmp(x).unwrap());
        raw[1] = raw[0];
        assert_eq!(s.a, raw);
    }

    #[test]
    fn extension_and_shift() {
        let spec = InitSpec {
            d: 6,
            sd_a: 1e-2,
            sd_bc: Some(1e-2),
            diff: 1e-3,
            extension_factors: vec![1.01, 1.05],
            shift: 0.1,
            absolute: true,
        };
        let s: InitSample<f64> = sample_init(&spec, &mut stream(2, Stream::Init)).unwrap();
        let base = s.a[0] - 0.1;
        assert!(((s.a[2] - 0.1) - (base - 1.01e-3)).abs() < 1e-15);
        assert!(((s.a[3] - 0.1) - (base - 1.05e-3)).abs() < 1e-15);
        assert!(s.b.iter().all(|&v| v >= 0.1));
        assert!(s.c.iter().all(|&v| v < 0.1));
        assert!(!s.report.in_i0);
    }

    #[test]
    fn i0_membership() {
        let d = 5;
        let alpha = 0.9 / (2.0 * d as f64);
        let zeta = [1.0, 0.8, 0.5, 0.3, 0.1];
        let a: Vec<f64> = zeta.iter().map(|z| alpha * z).collect();
        assert!(i0_report(&a).in_i0);
        let mut tie = a.clone();
        tie[2] = tie[1];
        assert!(!i0_report(&tie).in_i0);
        let big: Vec<f64> = zeta.iter().map(|z| 0.2 * z).collect();
        assert!(!i0_report(&big).in_i0);
    }

    #[test]
    fn determinism() {
        let spec = InitSpec {
            d: 8,
            sd_a: 1e-2,
            sd_bc: Some(1e-2),
            diff: 1e-4,
            extension_factors: vec![],
            shift: 0.0,
            absolute: true,
        };
        let a: InitSample<f64> = sample_init(&spec, &mut stream(99, Stream::Init)).unwrap();
        let b: InitSample<f64> = sample_init(&spec, &mut stream(99, Stream::Init)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn adversarial_construction() {
        let teacher = canonical_teacher::<f64>(2).unwrap();
        let (kappa, d, eps) = (6, 12, 0.3);
        let nodes = chebyshev_nodes(d, DEFAULT_NODE_RADIUS);
        let adv = adversarial_zero_loss(&teacher, kappa, d, eps, &nodes).unwrap();
        let ir = adv.impulse_response(d);
        let tr = teacher.impulse_response(d);
        for k in 0..kappa {
            assert!((ir[k] - tr[k]).abs() <= 1e-9);
        }
        assert!((ir[kappa] - tr[kappa] - eps).abs() <= 1e-9);
        assert!(generalization_error(&adv, &teacher, kappa) <= 1e-9);
        assert!(generalization_error(&adv, &teacher, kappa + 1) >= eps - 1e-9);
    }

    #[test]
    fn adversarial_minimal_dimension() {
        let teacher = canonical_teacher::<f64>(3).unwrap();
        let kappa = 5;
        let nodes = chebyshev_nodes(kappa + 1, DEFAULT_NODE_RADIUS);
        let adv = adversarial_zero_loss(&teacher, kappa, kappa + 1, 0.5, &nodes).unwrap();
        let mut rng = stream(8, Stream::Data);
        let spec = SequenceSpec { kappa, nonzero_indices: (1..=kappa).collect(), count: 10 };
        let xs = gaussian_sequences::<f64, _>(&spec, &mut rng).unwrap();
        for x in xs {
            let r = teacher.forward(&x) - adv.forward(&x);
            assert!(r * r <= 1e-12);
        }
    }

    #[test]
    fn adversarial_rejects_bad_nodes() {
        let teacher = canonical_teacher::<f64>(2).unwrap();
        assert!(adversarial_zero_loss(&teacher, 3, 4, 0.1, &[0.1, 0.2, 0.2, 0.3]).is_err());
        assert!(adversarial_zero_loss(&teacher, 4, 4, 0.1, &[0.1, 0.2, 0.3, 0.4]).is_err());
        let clustered: Vec<f64> = (0..30).map(|i| 0.5 + 1e-3 * i as f64).collect();
        assert!(matches!(
            adversarial_zero_loss(&teacher, 10, 30, 0.1, &clustered),
            Err(SsmError::IllConditioned { .. })
        ));
    }
}
