//! Closed-form tools for the poisoned two-example loss
//! `l(a) = 1/2 [(1 - sum a^{L-1})^2 + (1 - sum a)^2]` with unit `B`, `C`:
//! its saddle on the diagonal, the Hessian there, the linearized escape,
//! PL coefficients, plus effective rank and the distance to `span{1}`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SsmError};
use crate::scalar::Scalar;

/// Bracket width at which saddle bisection stops.
pub const SADDLE_TOL: f64 = 1e-14;

/// `exp` of the Shannon entropy of the l1-normalized input.
pub fn effective_rank<T: Scalar>(values: &[T]) -> Result<T> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(SsmError::NonFinite("effective_rank input"));
    }
    if values.iter().any(|&v| v < T::zero()) {
        return Err(SsmError::InvalidArgument("effective_rank expects nonnegative values".into()));
    }
    let total: T = values.iter().copied().sum();
    if total <= T::zero() {
        return Err(SsmError::UndefinedRank);
    }
    let entropy: T = values
        .iter()
        .filter(|&&v| v > T::zero())
        .map(|&v| {
            let p = v / total;
            -p * p.ln()
        })
        .sum();
    // Rounding can push the result a hair outside [1, n].
    let n = T::from_usize_lossy(values.iter().filter(|&&v| v > T::zero()).count());
    Ok(entropy.exp().max(T::one()).min(n))
}

/// Effective rank of `diag(a)`, i.e. of `|a_j|`.
pub fn effective_rank_diag<T: Scalar>(a: &[T]) -> Result<T> {
    let abs: Vec<T> = a.iter().map(|v| v.abs()).collect();
    effective_rank(&abs)
}

/// `||a - mean(a) 1||_2`.
pub fn w1_distance<T: Scalar>(a: &[T]) -> T {
    if a.is_empty() {
        return T::zero();
    }
    let mean = a.iter().copied().sum::<T>() / T::from_usize_lossy(a.len());
    a.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>().sqrt()
}

/// Largest pairwise gap `max a - min a`.
pub fn max_entry_gap<T: Scalar>(a: &[T]) -> T {
    let hi = a.iter().copied().fold(T::neg_infinity(), T::max);
    let lo = a.iter().copied().fold(T::infinity(), T::min);
    if a.is_empty() {
        T::zero()
    } else {
        hi - lo
    }
}

/// Eigenvalues of `(a - b) I + b 1 1^T` in dimension `d`: `a + (d-1) b` on `1`
/// and `a - b` on its complement.
pub fn rank_one_shift_eigs<T: Scalar>(a: T, b: T, d: usize) -> (T, T) {
    (a + T::from_usize_lossy(d.saturating_sub(1)) * b, a - b)
}

/// Saddle of the two-example loss restricted to `span{1}`, with its Hessian
/// spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleReport<T> {
    pub s: T,
    pub loss_at_s: T,
    pub lambda_plus: T,
    pub lambda_minus: T,
    pub d: usize,
    #[serde(rename = "L")]
    pub l: usize,
}

impl<T: Scalar> SaddleReport<T> {
    /// The invariants the saddle is known to satisfy; names of any that fail.
    pub fn violated_invariants(&self) -> Vec<&'static str> {
        let d = T::from_usize_lossy(self.d);
        let mut out = Vec::new();
        if !(self.s >= T::one() / d && self.s <= T::lit(3.0) / d) {
            out.push("s in [1/d, 3/d]");
        }
        if !(self.loss_at_s >= T::lit(0.125)) {
            out.push("loss_at_s >= 1/8");
        }
        if !(self.lambda_plus >= d - T::one()) {
            out.push("lambda_plus >= d - 1");
        }
        if !(self.lambda_minus > -T::one() && self.lambda_minus < T::zero()) {
            out.push("lambda_minus in (-1, 0)");
        }
        out
    }
}

/// Derivative of `a -> l(a 1)` up to the factor `d`:
/// `(L-1)(d a^{L-1} - 1) a^{L-2} + (d a - 1)`.
pub fn saddle_equation<T: Scalar>(a: T, d: usize, l: usize) -> T {
    let dd = T::from_usize_lossy(d);
    let lm1 = T::from_usize_lossy(l - 1);
    lm1 * (dd * a.powi(l as i32 - 1) - T::one()) * a.powi(l as i32 - 2) + (dd * a - T::one())
}

/// Value of the two-example loss at `a 1`.
pub fn s2_loss_on_diagonal<T: Scalar>(a: T, d: usize, l: usize) -> T {
    let dd = T::from_usize_lossy(d);
    let r1 = T::one() - dd * a.powi(l as i32 - 1);
    let r2 = T::one() - dd * a;
    T::lit(0.5) * (r1 * r1 + r2 * r2)
}

/// Hessian of the two-example loss at `s 1` as `(diagonal, off-diagonal)`.
pub fn s2_hessian_at_diagonal<T: Scalar>(s: T, d: usize, l: usize) -> (T, T) {
    let dd = T::from_usize_lossy(d);
    let lm1 = T::from_usize_lossy(l - 1);
    let lm2 = T::from_usize_lossy(l - 2);
    let off = lm1 * lm1 * s.powi(2 * l as i32 - 4) + T::one();
    let diag = off - (T::one() - dd * s.powi(l as i32 - 1)) * lm1 * lm2 * s.powi(l as i32 - 3);
    (diag, off)
}

/// Locates the saddle by bisection on `[1/d, 3/d]`.
///
/// Requires `d >= 8` and odd `L >= 7`; outside that range, or if the bracket
/// does not change sign, returns [`SsmError::Regime`].
pub fn find_saddle<T: Scalar>(d: usize, l: usize) -> Result<SaddleReport<T>> {
    let regime = |reason: &str| SsmError::Regime { d, l, reason: reason.to_string() };
    if d < 8 {
        return Err(regime("d must be at least 8"));
    }
    if l < 7 || l % 2 == 0 {
        return Err(regime("L must be odd and at least 7"));
    }
    let dd = T::from_usize_lossy(d);
    let mut lo = T::one() / dd;
    let mut hi = T::lit(3.0) / dd;
    let f = |a: T| saddle_equation(a, d, l);
    if !(f(lo) < T::zero() && f(hi) > T::zero()) {
        return Err(regime("no sign change of the saddle equation on [1/d, 3/d]"));
    }
    let tol = T::lit(SADDLE_TOL);
    while hi - lo > tol {
        let mid = lo + (hi - lo) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = lo + (hi - lo) / T::lit(2.0);
    let lm1 = T::from_usize_lossy(l - 1);
    let lm2 = T::from_usize_lossy(l - 2);
    let s_l1 = s.powi(l as i32 - 1);
    let s_l3 = s.powi(l as i32 - 3);
    let lambda_plus =
        lm1 * (T::from_usize_lossy(2 * l - 3) * dd * s_l1 - lm2) * s_l3 + dd;
    let lambda_minus = lm1 * lm2 * (dd * s_l1 - T::one()) * s_l3;
    Ok(SaddleReport {
        s,
        loss_at_s: s2_loss_on_diagonal(s, d, l),
        lambda_plus,
        lambda_minus,
        d,
        l,
    })
}

/// Solution of the gradient flow linearized at the saddle,
/// `A(t) = (e^{-t l+}(beta1 - s) + s) 1 + e^{-t l-} beta2 v`, where
/// `beta1 = mean(a0)` and `beta2 v = a0 - beta1 1`.
pub fn linearized_trajectory<T: Scalar>(a0: &[T], report: &SaddleReport<T>, t: T) -> Vec<T> {
    if a0.is_empty() {
        return Vec::new();
    }
    let beta1 = a0.iter().copied().sum::<T>() / T::from_usize_lossy(a0.len());
    let along = (-t * report.lambda_plus).exp() * (beta1 - report.s) + report.s;
    let across = (-t * report.lambda_minus).exp();
    a0.iter().map(|&v| along + across * (v - beta1)).collect()
}

/// `mu = 1/2 min{2d, ((L-1) b~)^2 / 4, (b^/(b^+2))^2}` with `b~ = (b/2)^{L-2}`
/// and `b^ = (b/6)^{L-2}`.
pub fn pl_coefficient<T: Scalar>(b: T, d: usize, l: usize) -> Result<T> {
    if !(b > T::zero()) {
        return Err(SsmError::InvalidArgument("pl_coefficient needs b > 0".into()));
    }
    if l < 2 {
        return Err(SsmError::InvalidArgument("pl_coefficient needs L >= 2".into()));
    }
    let p = l as i32 - 2;
    let b_tilde = (b / T::lit(2.0)).powi(p);
    let b_hat = (b / T::lit(6.0)).powi(p);
    let first = T::lit(2.0) * T::from_usize_lossy(d);
    let second = (T::from_usize_lossy(l - 1) * b_tilde).powi(2) / T::lit(4.0);
    let third = (b_hat / (b_hat + T::lit(2.0))).powi(2);
    Ok(T::lit(0.5) * first.min(second).min(third))
}

/// Lower bound on the un-normalized generalization error of the poisoned
/// flow: `min{0.1, (1 - 0.6^{1/(kappa-1)}) / (9d)}`.
pub fn poison_lower_bound<T: Scalar>(d: usize, kappa: usize) -> Result<T> {
    if d < 8 || kappa < 7 {
        return Err(SsmError::Regime {
            d,
            l: kappa,
            reason: "bound holds for d >= 8 and kappa >= 7".into(),
        });
    }
    let e = T::one() / T::from_usize_lossy(kappa - 1);
    let v = (T::one() - T::lit(0.6).powf(e)) / (T::lit(9.0) * T::from_usize_lossy(d));
    Ok(v.min(T::lit(0.1)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_rank_examples() {
        assert!((effective_rank(&[0.3f64; 7]).unwrap() - 7.0).abs() < 1e-12);
        assert_eq!(effective_rank(&[1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert!((effective_rank(&[1.0f64, 1.0, 0.0, 0.0]).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(effective_rank::<f64>(&[0.0, 0.0]), Err(SsmError::UndefinedRank));
        assert!(effective_rank(&[1.0, -1.0]).is_err());
        assert!((effective_rank_diag(&[-1.0f64, 1.0]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn w1_distance_examples() {
        assert_eq!(w1_distance(&[0.4; 5]), 0.0);
        let d = 6;
        let mut e1 = vec![0.0; d];
        e1[0] = 1.0;
        assert!((w1_distance(&e1) - (1.0 - 1.0 / d as f64).sqrt()).abs() < 1e-15);
        let shifted: Vec<f64> = e1.iter().map(|v| v + 3.0).collect();
        assert!((w1_distance(&shifted) - w1_distance(&e1)).abs() < 1e-14);
    }

    #[test]
    fn rank_one_shift_equal_entries() {
        assert_eq!(rank_one_shift_eigs(2.0, 2.0, 5), (10.0, 0.0));
    }

    #[test]
    fn saddle_report_regime_errors() {
        assert!(matches!(find_saddle::<f64>(7, 7), Err(SsmError::Regime { .. })));
        assert!(matches!(find_saddle::<f64>(8, 8), Err(SsmError::Regime { .. })));
        assert!(matches!(find_saddle::<f64>(8, 5), Err(SsmError::Regime { .. })));
    }

    #[test]
    fn saddle_d10_l7() {
        let r = find_saddle::<f64>(10, 7).unwrap();
        assert!(saddle_equation(r.s, 10, 7).abs() < 1e-12);
        assert!(r.violated_invariants().is_empty());
        let direct = 0.5 * ((1.0 - 10.0 * r.s.powi(6)).powi(2) + (1.0 - 10.0 * r.s).powi(2));
        assert_eq!(r.loss_at_s, direct);
        let (w1, w2) = s2_hessian_at_diagonal(r.s, 10, 7);
        let (p, m) = rank_one_shift_eigs(w1, w2, 10);
        assert!((p - r.lambda_plus).abs() < 1e-12 * r.lambda_plus);
        assert!((m - r.lambda_minus).abs() < 1e-12);
    }

    #[test]
    fn saddle_in_single_precision() {
        let r = find_saddle::<f32>(16, 9).unwrap();
        assert!(r.violated_invariants().is_empty());
    }

    #[test]
    fn linearized_fixed_point_and_span() {
        let r = find_saddle::<f64>(10, 7).unwrap();
        let at_s = vec![r.s; 10];
        for t in [0.0, 0.5, 4.0] {
            assert_eq!(linearized_trajectory(&at_s, &r, t), at_s);
        }
        let on_span = vec![0.05; 10];
        let late = linearized_trajectory(&on_span, &r, 50.0);
        assert!(late.iter().all(|v| (v - r.s).abs() < 1e-12));
        assert!(w1_distance(&linearized_trajectory(&on_span, &r, 1.0)) < 1e-16);
    }

    #[test]
    fn pl_coefficient_branches() {
        let d = 3;
        // Very large b drives the last two branches to their limits 1 and
        // huge, so only min(2d, 1) remains.
        let mu: f64 = pl_coefficient(1e6, d, 7).unwrap();
        assert!((mu - 0.5).abs() < 1e-9);
        let mut prev = 0.0;
        for k in 1..200 {
            let v: f64 = pl_coefficient(k as f64 * 0.05, 8, 7).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        assert!(pl_coefficient(0.0, 8, 7).is_err());
    }

    #[test]
    fn poison_bound_value() {
        let v: f64 = poison_lower_bound(10, 7).unwrap();
        let want = (1.0 - 0.6f64.powf(1.0 / 6.0)) / 90.0;
        assert_eq!(v, want);
        assert!((v - 9.0682e-4).abs() < 1e-8);
        let mut prev = v;
        for kappa in 8..60 {
            let next: f64 = poison_lower_bound(10, kappa).unwrap();
            assert!(next < prev);
            prev = next;
        }
        assert!(poison_lower_bound::<f64>(7, 7).is_err());
    }
}
