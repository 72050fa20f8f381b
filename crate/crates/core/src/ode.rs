//! Dormand-Prince 5(4) integrator with PI step control and dense output.
//!
//! Coefficients, error estimator and the order-4 continuous extension follow
//! Hairer, Norsett and Wanner, *Solving ODEs I*, routine DOPRI5.

use crate::error::{Result, SsmError};
use crate::scalar::Scalar;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Returned by the per-step observer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    /// Stop integrating; remaining output times receive the current state.
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5<T> {
    pub rtol: T,
    pub atol: T,
    pub h_max: Option<T>,
    pub max_steps: usize,
    pub safety: T,
}

impl<T: Scalar> Default for Dopri5<T> {
    fn default() -> Self {
        Self::new(T::lit(1e-8), T::lit(1e-10))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    /// Time at which an observer requested an early stop, if any.
    pub stopped_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution<T> {
    pub times: Vec<T>,
    pub states: Vec<Vec<T>>,
    pub stats: OdeStats,
}

struct Stages<T> {
    k: [Vec<T>; 7],
    tmp: Vec<T>,
    y_new: Vec<T>,
    err: Vec<T>,
}

impl<T: Scalar> Dopri5<T> {
    pub fn new(rtol: T, atol: T) -> Self {
        Self { rtol, atol, h_max: None, max_steps: 50_000_000, safety: T::lit(0.9) }
    }

    fn scale(&self, y0: T, y1: T) -> T {
        self.atol + self.rtol * y0.abs().max(y1.abs())
    }

    fn error_norm(&self, err: &[T], y0: &[T], y1: &[T]) -> T {
        let n = T::from_usize_lossy(err.len().max(1));
        let s: T = err
            .iter()
            .zip(y0.iter().zip(y1))
            .map(|(&e, (&a, &b))| {
                let r = e / self.scale(a, b);
                r * r
            })
            .sum();
        (s / n).sqrt()
    }

    /// Initial step guess (Hairer's HINIT).
    fn initial_step<F>(&self, f: &mut F, t0: T, y0: &[T], f0: &[T], span: T) -> T
    where
        F: FnMut(T, &[T], &mut [T]),
    {
        let n = T::from_usize_lossy(y0.len().max(1));
        let rms = |v: &[T], w: &[T]| -> T {
            (v.iter()
                .zip(w)
                .map(|(&x, &y)| {
                    let r = x / self.scale(y, y);
                    r * r
                })
                .sum::<T>()
                / n)
                .sqrt()
        };
        let dnf = rms(f0, y0);
        let dny = rms(y0, y0);
        let mut h = if dnf <= T::lit(1e-10) || dny <= T::lit(1e-10) {
            T::lit(1e-6)
        } else {
            T::lit(0.01) * dny / dnf
        };
        h = h.min(span);
        if let Some(hm) = self.h_max {
            h = h.min(hm);
        }
        let y1: Vec<T> = y0.iter().zip(f0).map(|(&y, &d)| y + h * d).collect();
        let mut f1 = vec![T::zero(); y0.len()];
        f(t0 + h, &y1, &mut f1);
        let diff: Vec<T> = f1.iter().zip(f0).map(|(&a, &b)| a - b).collect();
        let der2 = rms(&diff, y0) / h;
        let der12 = dnf.max(der2);
        let h1 = if der12 <= T::lit(1e-15) {
            (h * T::lit(1e-3)).max(T::lit(1e-6))
        } else {
            (T::lit(0.01) / der12).powf(T::lit(0.2))
        };
        let mut out = (T::lit(100.0) * h).min(h1).min(span);
        if let Some(hm) = self.h_max {
            out = out.min(hm);
        }
        out
    }

    /// Integrates `y' = f(t, y)` from `(t0, y0)` and samples the solution at
    /// `t_eval` (sorted, all `>= t0`) through the continuous extension.
    ///
    /// `observer` sees every accepted step `(t, y)`; returning
    /// [`Control::Stop`] ends the integration and the remaining sample times
    /// are filled with the current state.
    pub fn integrate<F, O>(
        &self,
        mut f: F,
        t0: T,
        y0: &[T],
        t_eval: &[T],
        mut observer: O,
    ) -> Result<Solution<T>>
    where
        F: FnMut(T, &[T], &mut [T]),
        O: FnMut(T, &[T]) -> Control,
    {
        if t_eval.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SsmError::InvalidArgument("output times must be strictly increasing".into()));
        }
        if t_eval.first().is_some_and(|&t| t < t0) {
            return Err(SsmError::InvalidArgument("output times precede t0".into()));
        }
        let n = y0.len();
        let t_end = match t_eval.last() {
            Some(&t) => t,
            None => {
                return Ok(Solution { times: vec![], states: vec![], stats: OdeStats::default() })
            }
        };
        let mut stats = OdeStats::default();
        let mut times = Vec::with_capacity(t_eval.len());
        let mut states = Vec::with_capacity(t_eval.len());
        let mut next_out = 0;
        while next_out < t_eval.len() && t_eval[next_out] == t0 {
            times.push(t0);
            states.push(y0.to_vec());
            next_out += 1;
        }

        let zeros = || vec![T::zero(); n];
        let mut st = Stages {
            k: [zeros(), zeros(), zeros(), zeros(), zeros(), zeros(), zeros()],
            tmp: zeros(),
            y_new: zeros(),
            err: zeros(),
        };
        let mut y = y0.to_vec();
        let mut t = t0;
        f(t, &y, &mut st.k[0]);
        stats.evaluations += 1;
        let mut h = self.initial_step(&mut f, t0, &y, &st.k[0].clone(), t_end - t0);
        stats.evaluations += 1;
        let mut fac_old = T::lit(1e-4);
        let beta = T::lit(0.04);
        let expo1 = T::lit(0.2) - beta * T::lit(0.75);
        let (facc1, facc2) = (T::lit(5.0), T::lit(0.1));
        let mut last_rejected = false;
        let mut dense = [zeros(), zeros(), zeros(), zeros(), zeros()];
        let lit = T::lit;

        while next_out < t_eval.len() {
            if stats.accepted + stats.rejected >= self.max_steps {
                return Err(SsmError::Integration {
                    t: t.to_f64_lossy(),
                    h: h.to_f64_lossy(),
                    last_state: y.iter().map(|v| v.to_f64_lossy()).collect(),
                });
            }
            if let Some(hm) = self.h_max {
                h = h.min(hm);
            }
            if t + h >= t_end {
                h = t_end - t;
            }
            if h.abs() <= T::lit(16.0) * T::epsilon() * t.abs().max(T::one()) {
                return Err(SsmError::Integration {
                    t: t.to_f64_lossy(),
                    h: h.to_f64_lossy(),
                    last_state: y.iter().map(|v| v.to_f64_lossy()).collect(),
                });
            }

            let [k1, k2, k3, k4, k5, k6, k7] = &mut st.k;
            for i in 0..n {
                st.tmp[i] = y[i] + h * lit(A21) * k1[i];
            }
            f(t + lit(C2) * h, &st.tmp, k2);
            for i in 0..n {
                st.tmp[i] = y[i] + h * (lit(A31) * k1[i] + lit(A32) * k2[i]);
            }
            f(t + lit(C3) * h, &st.tmp, k3);
            for i in 0..n {
                st.tmp[i] = y[i] + h * (lit(A41) * k1[i] + lit(A42) * k2[i] + lit(A43) * k3[i]);
            }
            f(t + lit(C4) * h, &st.tmp, k4);
            for i in 0..n {
                st.tmp[i] = y[i]
                    + h * (lit(A51) * k1[i] + lit(A52) * k2[i] + lit(A53) * k3[i] + lit(A54) * k4[i]);
            }
            f(t + lit(C5) * h, &st.tmp, k5);
            for i in 0..n {
                st.tmp[i] = y[i]
                    + h * (lit(A61) * k1[i]
                        + lit(A62) * k2[i]
                        + lit(A63) * k3[i]
                        + lit(A64) * k4[i]
                        + lit(A65) * k5[i]);
            }
            let t_new = t + h;
            f(t_new, &st.tmp, k6);
            for i in 0..n {
                st.y_new[i] = y[i]
                    + h * (lit(A71) * k1[i]
                        + lit(A73) * k3[i]
                        + lit(A74) * k4[i]
                        + lit(A75) * k5[i]
                        + lit(A76) * k6[i]);
            }
            f(t_new, &st.y_new, k7);
            stats.evaluations += 6;
            for i in 0..n {
                st.err[i] = h
                    * (lit(E1) * k1[i]
                        + lit(E3) * k3[i]
                        + lit(E4) * k4[i]
                        + lit(E5) * k5[i]
                        + lit(E6) * k6[i]
                        + lit(E7) * k7[i]);
            }
            let err = self.error_norm(&st.err, &y, &st.y_new);
            if !err.is_finite() {
                stats.rejected += 1;
                h = h * T::lit(0.1);
                last_rejected = true;
                continue;
            }
            let fac11 = err.powf(expo1);
            if err <= T::one() {
                let mut fac = fac11 / fac_old.powf(beta);
                fac = facc2.max(facc1.min(fac / self.safety));
                let mut h_new = h / fac;
                if last_rejected {
                    h_new = h_new.min(h);
                }
                fac_old = err.max(T::lit(1e-4));

                for i in 0..n {
                    let ydiff = st.y_new[i] - y[i];
                    let bspl = h * k1[i] - ydiff;
                    dense[0][i] = y[i];
                    dense[1][i] = ydiff;
                    dense[2][i] = bspl;
                    dense[3][i] = ydiff - h * k7[i] - bspl;
                    dense[4][i] = h
                        * (lit(D1) * k1[i]
                            + lit(D3) * k3[i]
                            + lit(D4) * k4[i]
                            + lit(D5) * k5[i]
                            + lit(D6) * k6[i]
                            + lit(D7) * k7[i]);
                }
                let t_old = t;
                t = if t_new >= t_end { t_end } else { t_new };
                std::mem::swap(&mut y, &mut st.y_new);
                k1.clone_from(k7);
                stats.accepted += 1;
                last_rejected = false;

                while next_out < t_eval.len() && t_eval[next_out] <= t {
                    let te = t_eval[next_out];
                    let out = if te == t {
                        y.clone()
                    } else {
                        let theta = (te - t_old) / h;
                        let theta1 = T::one() - theta;
                        (0..n)
                            .map(|i| {
                                dense[0][i]
                                    + theta
                                        * (dense[1][i]
                                            + theta1
                                                * (dense[2][i]
                                                    + theta * (dense[3][i] + theta1 * dense[4][i])))
                            })
                            .collect()
                    };
                    times.push(te);
                    states.push(out);
                    next_out += 1;
                }

                if observer(t, &y) == Control::Stop {
                    stats.stopped_at = Some(t.to_f64_lossy());
                    while next_out < t_eval.len() {
                        times.push(t_eval[next_out]);
                        states.push(y.clone());
                        next_out += 1;
                    }
                    break;
                }
                h = h_new;
            } else {
                h = h / facc1.min(fac11 / self.safety);
                stats.rejected += 1;
                last_rejected = true;
            }
        }
        Ok(Solution { times, states, stats })
    }
}

/// `n` evenly spaced output times ending at `last`: `last/n, 2 last/n, ..., last`.
pub fn even_grid<T: Scalar>(last: T, n: usize) -> Vec<T> {
    (1..=n)
        .map(|i| last * T::from_usize_lossy(i) / T::from_usize_lossy(n))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let solver = Dopri5::<f64>::new(1e-10, 1e-12);
        let ts = even_grid(5.0, 50);
        let sol = solver
            .integrate(|_, y, dy| dy[0] = -y[0], 0.0, &[1.0], &ts, |_, _| Control::Continue)
            .unwrap();
        for (t, y) in sol.times.iter().zip(&sol.states) {
            assert!((y[0] - (-t).exp()).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn harmonic_oscillator_dense_output() {
        let solver = Dopri5::<f64>::new(1e-10, 1e-12);
        let ts = even_grid(10.0, 333);
        let sol = solver
            .integrate(
                |_, y, dy| {
                    dy[0] = y[1];
                    dy[1] = -y[0];
                },
                0.0,
                &[1.0, 0.0],
                &ts,
                |_, _| Control::Continue,
            )
            .unwrap();
        for (t, y) in sol.times.iter().zip(&sol.states) {
            assert!((y[0] - t.cos()).abs() < 1e-8);
            assert!((y[1] + t.sin()).abs() < 1e-8);
        }
    }

    #[test]
    fn fifth_order_convergence() {
        // Error should drop by roughly 2^5 when tolerance drops by 2^5.
        let run = |tol: f64| {
            let solver = Dopri5::<f64>::new(tol, tol);
            let sol = solver
                .integrate(|t, y, dy| dy[0] = y[0] * t.cos(), 0.0, &[1.0], &[6.0], |_, _| Control::Continue)
                .unwrap();
            (sol.states[0][0] - 6.0f64.sin().exp()).abs()
        };
        let coarse = run(1e-6);
        let fine = run(1e-6 / 32.0);
        assert!(fine < coarse / 4.0, "coarse {coarse}, fine {fine}");
    }

    #[test]
    fn early_stop_fills_remaining() {
        let solver = Dopri5::<f64>::default();
        let ts = even_grid(100.0, 10);
        let sol = solver
            .integrate(
                |_, y, dy| dy[0] = -y[0],
                0.0,
                &[1.0],
                &ts,
                |_, y| if y[0] < 1e-3 { Control::Stop } else { Control::Continue },
            )
            .unwrap();
        assert_eq!(sol.times.len(), 10);
        assert!(sol.stats.stopped_at.unwrap() < 20.0);
        assert_eq!(sol.states[9], sol.states[8]);
    }

    #[test]
    fn blow_up_reports_failure() {
        let solver = Dopri5::<f64>::default();
        let res = solver.integrate(|_, y, dy| dy[0] = y[0] * y[0], 0.0, &[1.0], &[2.0], |_, _| Control::Continue);
        match res {
            Err(SsmError::Integration { t, .. }) => assert!(t < 1.0 + 1e-6),
            other => panic!("expected integration failure, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unsorted_grid() {
        let solver = Dopri5::<f64>::default();
        assert!(solver
            .integrate(|_, _, dy| dy[0] = 0.0, 0.0, &[0.0], &[1.0, 0.5], |_, _| Control::Continue)
            .is_err());
    }

    #[test]
    fn single_precision_instantiation() {
        let solver = Dopri5::<f32>::new(1e-5, 1e-6);
        let sol = solver
            .integrate(|_, y, dy| dy[0] = -2.0 * y[0], 0.0f32, &[1.0f32], &[1.0f32], |_, _| Control::Continue)
            .unwrap();
        assert!((sol.states[0][0] - (-2.0f32).exp()).abs() < 1e-4);
    }
}
