//! Diagonal state space models and their impulse responses.
//!
//! A diagonal SSM `(A, B, C)` with `A = diag(a)` maps an input sequence
//! `x in R^k` to the scalar `sum_{k'} (C A^{k'} B) x_{k-k'}`. The mapping is
//! fully determined by its Markov parameters `C A^{k'} B`.

use crate::error::{Result, SsmError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalSsm<T> {
    pub(crate) a: Vec<T>,
    pub(crate) b: Vec<T>,
    pub(crate) c: Vec<T>,
}

impl<T: Scalar> DiagonalSsm<T> {
    pub fn new(a: Vec<T>, b: Vec<T>, c: Vec<T>) -> Result<Self> {
        if a.is_empty() {
            return Err(SsmError::Dimension("state dimension must be at least 1".into()));
        }
        if a.len() != b.len() || a.len() != c.len() {
            return Err(SsmError::Dimension(format!(
                "a, b, c lengths differ: {}, {}, {}",
                a.len(),
                b.len(),
                c.len()
            )));
        }
        if !a.iter().chain(&b).chain(&c).all(|v| v.is_finite()) {
            return Err(SsmError::NonFinite("ssm parameters"));
        }
        Ok(Self { a, b, c })
    }

    /// SSM with `B = 1` and `C = 1^T`.
    pub fn with_unit_io(a: Vec<T>) -> Result<Self> {
        let d = a.len();
        Self::new(a, vec![T::one(); d], vec![T::one(); d])
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            a: vec![T::zero(); d],
            b: vec![T::zero(); d],
            c: vec![T::zero(); d],
        }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> &[T] {
        &self.a
    }

    pub fn b(&self) -> &[T] {
        &self.b
    }

    pub fn c(&self) -> &[T] {
        &self.c
    }

    /// Scales `B` by `alpha_b` and `C` by `alpha_c`.
    pub fn scaled_io(&self, alpha_b: T, alpha_c: T) -> Self {
        Self {
            a: self.a.clone(),
            b: self.b.iter().map(|&v| v * alpha_b).collect(),
            c: self.c.iter().map(|&v| v * alpha_c).collect(),
        }
    }

    /// Markov parameters `(C A^{k'} B)_{k'=0..k-1}`.
    ///
    /// Powers are accumulated as running products `p_j <- p_j * a_j`.
    pub fn impulse_response(&self, k: usize) -> Vec<T> {
        let mut p: Vec<T> = self.c.iter().zip(&self.b).map(|(&c, &b)| c * b).collect();
        let mut out = Vec::with_capacity(k);
        for step in 0..k {
            if step > 0 {
                for (pj, &aj) in p.iter_mut().zip(&self.a) {
                    *pj *= aj;
                }
            }
            out.push(p.iter().copied().sum());
        }
        out
    }

    /// Output `y = phi(x)` on a sequence `x_1..x_k` (slice index 0 holds `x_1`).
    pub fn forward(&self, x: &[T]) -> T {
        let k = x.len();
        let ir = self.impulse_response(k);
        ir.iter()
            .enumerate()
            .map(|(lag, &h)| h * x[k - 1 - lag])
            .sum()
    }
}

/// `max_{k' < k} |student_{k'} - teacher_{k'}|`.
pub fn generalization_error<T: Scalar>(
    student: &DiagonalSsm<T>,
    teacher: &DiagonalSsm<T>,
    k: usize,
) -> T {
    student
        .impulse_response(k)
        .iter()
        .zip(teacher.impulse_response(k))
        .map(|(&s, t)| (s - t).abs())
        .fold(T::zero(), T::max)
}

/// Generalization error divided by the teacher's impulse-response sup norm, so
/// that the zero mapping scores exactly one.
pub fn normalized_generalization_error<T: Scalar>(
    student: &DiagonalSsm<T>,
    teacher: &DiagonalSsm<T>,
    k: usize,
) -> Result<T> {
    let scale = teacher
        .impulse_response(k)
        .iter()
        .fold(T::zero(), |m, v| m.max(v.abs()));
    if scale == T::zero() {
        return Err(SsmError::ZeroTeacher);
    }
    Ok(generalization_error(student, teacher, k) / scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical(d: usize) -> DiagonalSsm<f64> {
        let mut a = vec![0.0; d];
        a[0] = 1.0;
        DiagonalSsm::with_unit_io(a).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(DiagonalSsm::new(vec![1.0], vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(DiagonalSsm::<f64>::new(vec![], vec![], vec![]).is_err());
        assert!(DiagonalSsm::new(vec![f64::NAN], vec![1.0], vec![1.0]).is_err());
    }

    #[test]
    fn canonical_teacher_markov() {
        assert_eq!(canonical(5).impulse_response(3), vec![5.0, 1.0, 1.0]);
    }

    #[test]
    fn zero_transition() {
        let s = DiagonalSsm::new(vec![0.0, 0.0], vec![2.0, 1.0], vec![3.0, -1.0]).unwrap();
        assert_eq!(s.impulse_response(2), vec![5.0, 0.0]);
    }

    #[test]
    fn forward_on_unit_vectors() {
        let t = canonical(4);
        let kappa = 6;
        for j in 0..kappa - 1 {
            let mut x = vec![0.0; kappa];
            x[j] = 2.5;
            assert_eq!(t.forward(&x), 2.5);
        }
        assert_eq!(t.forward(&[0.0; 6]), 0.0);
    }

    #[test]
    fn gen_error_small_case() {
        let student = DiagonalSsm::new(vec![0.5], vec![1.0], vec![1.0]).unwrap();
        let teacher = canonical(1);
        assert_eq!(generalization_error(&student, &teacher, 2), 0.5);
        assert_eq!(generalization_error(&teacher, &teacher, 10), 0.0);
    }

    #[test]
    fn normalized_error_conventions() {
        let teacher = canonical(3);
        let zero = DiagonalSsm::zeros(3);
        assert_eq!(normalized_generalization_error(&zero, &teacher, 40).unwrap(), 1.0);
        assert_eq!(normalized_generalization_error(&teacher, &teacher, 40).unwrap(), 0.0);
        assert_eq!(
            normalized_generalization_error(&teacher, &zero, 40),
            Err(SsmError::ZeroTeacher)
        );
    }

    #[test]
    fn works_in_single_precision() {
        let s = DiagonalSsm::<f32>::new(vec![0.5, 0.25], vec![1.0, 2.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(s.impulse_response(3), vec![3.0, 1.0, 0.25f32 + 0.125]);
    }
}
