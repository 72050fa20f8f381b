//! Square loss over a training set, its analytic gradient, and the
//! per-entry equation of motion for the diagonal of `A`.
//!
//! With `q_j(x) = sum_{k'} a_j^{k'} x_{kappa-k'}` the SSM output is
//! `phi(x) = sum_j b_j c_j q_j(x)`, so
//!
//! ```text
//! d phi / d a_j = b_j c_j q_j'(a_j),   d phi / d b_j = c_j q_j,   d phi / d c_j = b_j q_j.
//! ```
//!
//! The same derivative regrouped by powers of `a_j` gives the polynomial form
//! `a_j' = b_j c_j sum_l gamma_l a_j^l` computed by [`characterize`] and
//! [`predicted_a_dot`].

use crate::data::TrainingSet;
use crate::head::{Head, HeadGradients};
use crate::scalar::Scalar;
use crate::ssm::DiagonalSsm;

/// Time-varying coefficients of the equation of motion.
#[derive(Debug, Clone, PartialEq)]
pub struct Characterization<T> {
    /// `gamma^(0) .. gamma^(kappa-2)`.
    pub gammas: Vec<T>,
    /// Residuals `y_i - prediction_i`.
    pub deltas: Vec<T>,
    /// Head input derivatives at each SSM output.
    pub xis: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle<T> {
    pub da: Vec<T>,
    pub db: Vec<T>,
    pub dc: Vec<T>,
    pub dhead: Option<HeadGradients<T>>,
}

/// `(1/n) sum_i (y_i - head(phi(x_i)))^2`.
pub fn loss<T: Scalar>(ssm: &DiagonalSsm<T>, head: &Head<T>, set: &TrainingSet<T>) -> T {
    let n = T::from_usize_lossy(set.len());
    set.items()
        .iter()
        .map(|item| {
            let r = item.y - head.forward(ssm.forward(&item.x));
            r * r
        })
        .sum::<T>()
        / n
}

/// `q(a) = sum_{lag} a^lag x_{k-1-lag}` and `q'(a)` by joint Horner evaluation.
#[inline]
fn horner_with_derivative<T: Scalar>(a: T, x: &[T]) -> (T, T) {
    let mut q = T::zero();
    let mut dq = T::zero();
    // lag runs from k-1 down to 0, i.e. x is visited front to back.
    for &xv in x {
        dq = dq * a + q;
        q = q * a + xv;
    }
    (q, dq)
}

/// Analytic gradient of [`loss`].
///
/// `dB`, `dC` are zero when `train_bc` is false. Head gradients are returned
/// whenever the head is an MLP.
pub fn grad<T: Scalar>(
    ssm: &DiagonalSsm<T>,
    head: &Head<T>,
    set: &TrainingSet<T>,
    train_bc: bool,
) -> GradientBundle<T> {
    let d = ssm.dim();
    let n = T::from_usize_lossy(set.len());
    let mut da = vec![T::zero(); d];
    let mut db = vec![T::zero(); d];
    let mut dc = vec![T::zero(); d];
    let mut dhead = head.mlp().map(|h| HeadGradients::zeros(h.width()));
    let mut q = vec![T::zero(); d];
    let mut dq = vec![T::zero(); d];

    for item in set.items() {
        let mut z = T::zero();
        for j in 0..d {
            let (qj, dqj) = horner_with_derivative(ssm.a[j], &item.x);
            q[j] = qj;
            dq[j] = dqj;
            z += ssm.b[j] * ssm.c[j] * qj;
        }
        let delta = item.y - head.forward(z);
        let xi = head.input_derivative(z);
        // d loss / d phi for this example, before the 1/n factor.
        let upstream = -T::lit(2.0) * delta * xi;
        for j in 0..d {
            da[j] += upstream * ssm.b[j] * ssm.c[j] * dq[j];
            if train_bc {
                db[j] += upstream * ssm.c[j] * q[j];
                dc[j] += upstream * ssm.b[j] * q[j];
            }
        }
        if let (Some(acc), Some(mlp)) = (dhead.as_mut(), head.mlp()) {
            acc.add_assign(&mlp.param_gradients(z, -T::lit(2.0) * delta));
        }
    }
    for v in da.iter_mut().chain(&mut db).chain(&mut dc) {
        *v /= n;
    }
    if let Some(acc) = dhead.as_mut() {
        acc.scale(T::one() / n);
    }
    GradientBundle { da, db, dc, dhead }
}

/// `gamma^(l) = (2(l+1)/n) sum_i delta_i xi_i x^(i)_{kappa-l-1}` together with
/// the residuals and head derivatives that define it.
pub fn characterize<T: Scalar>(
    ssm: &DiagonalSsm<T>,
    head: &Head<T>,
    set: &TrainingSet<T>,
) -> Characterization<T> {
    let kappa = set.kappa();
    let n = T::from_usize_lossy(set.len());
    let mut deltas = Vec::with_capacity(set.len());
    let mut xis = Vec::with_capacity(set.len());
    for item in set.items() {
        let z = ssm.forward(&item.x);
        deltas.push(item.y - head.forward(z));
        xis.push(head.input_derivative(z));
    }
    let gammas = (0..kappa - 1)
        .map(|l| {
            let s: T = set
                .items()
                .iter()
                .zip(deltas.iter().zip(&xis))
                // 1-based position kappa-l-1 is slice index kappa-l-2.
                .map(|(item, (&dl, &xi))| dl * xi * item.x[kappa - l - 2])
                .sum();
            T::lit(2.0) * T::from_usize_lossy(l + 1) * s / n
        })
        .collect();
    Characterization { gammas, deltas, xis }
}

/// `a_j' = b_j c_j sum_{l=0}^{kappa-2} gamma^(l) a_j^l`, Horner-evaluated.
pub fn predicted_a_dot<T: Scalar>(ssm: &DiagonalSsm<T>, ch: &Characterization<T>) -> Vec<T> {
    ssm.a
        .iter()
        .zip(ssm.b.iter().zip(&ssm.c))
        .map(|(&a, (&b, &c))| {
            let poly = ch
                .gammas
                .iter()
                .rev()
                .fold(T::zero(), |acc, &g| acc * a + g);
            b * c * poly
        })
        .collect()
}
