use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use ssmlab::analysis::{effective_rank, effective_rank_diag};
use ssmlab::data::unit_sequence;
use ssmlab::ssm::DiagonalSsm;
use ssmlab::SsmError;

fn ssm_strategy() -> impl Strategy<Value = DiagonalSsm<f64>> {
    (1usize..7).prop_flat_map(|d| {
        (
            prop::collection::vec(-0.99f64..0.99, d),
            prop::collection::vec(-2.0f64..2.0, d),
            prop::collection::vec(-2.0f64..2.0, d),
        )
            .prop_map(|(a, b, c)| DiagonalSsm::new(a, b, c).unwrap())
    })
}

fn seq(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, len)
}

/// `sum_i C A^{k-1-i} B x_i` with explicit dense matrix powers.
fn dense_forward(ssm: &DiagonalSsm<f64>, x: &[f64]) -> f64 {
    let d = ssm.dim();
    let a = DMatrix::from_diagonal(&DVector::from_column_slice(ssm.a()));
    let b = DVector::from_column_slice(ssm.b());
    let c = DVector::from_column_slice(ssm.c());
    let k = x.len();
    let mut h = DVector::zeros(d);
    for (i, &xi) in x.iter().enumerate() {
        let p = a.pow((k - 1 - i) as u32);
        h += &p * &b * xi;
    }
    c.dot(&h)
}

fn close(x: f64, y: f64, tol: f64) -> bool {
    (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn forward_is_linear(ssm in ssm_strategy(), x in seq(6), y in seq(6), s in -4.0f64..4.0) {
        let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| s * u + v).collect();
        let lhs = ssm.forward(&mix);
        let rhs = s * ssm.forward(&x) + ssm.forward(&y);
        prop_assert!(close(lhs, rhs, 1e-12), "{lhs} vs {rhs}");
    }

    #[test]
    fn unit_inputs_read_off_markov_parameters(ssm in ssm_strategy(), k in 2usize..10) {
        let ir = ssm.impulse_response(k);
        for j in 1..=k {
            let y = ssm.forward(&unit_sequence(k, j));
            prop_assert!(close(y, ir[k - j], 1e-13));
        }
    }

    #[test]
    fn forward_matches_dense_matrix_powers(ssm in ssm_strategy(), x in seq(8)) {
        let fast = ssm.forward(&x);
        let dense = dense_forward(&ssm, &x);
        prop_assert!(close(fast, dense, 1e-12), "{fast} vs {dense}");
    }

    #[test]
    fn io_scaling_scales_output(ssm in ssm_strategy(), x in seq(5), p in -3.0f64..3.0, q in -3.0f64..3.0) {
        let scaled = ssm.scaled_io(p, q).forward(&x);
        prop_assert!(close(scaled, p * q * ssm.forward(&x), 1e-12));
        // Only the products b_j c_j matter.
        if p.abs() > 1e-3 {
            let balanced = ssm.scaled_io(p, 1.0 / p).forward(&x);
            prop_assert!(close(balanced, ssm.forward(&x), 1e-11));
        }
    }

    #[test]
    fn effective_rank_bounds(v in prop::collection::vec(0.0f64..10.0, 1..12)) {
        prop_assume!(v.iter().any(|&x| x > 0.0));
        let r = effective_rank(&v).unwrap();
        let support = v.iter().filter(|&&x| x > 0.0).count() as f64;
        prop_assert!(r >= 1.0 && r <= support, "{r} outside [1, {support}]");
    }

    #[test]
    fn effective_rank_scale_invariant(v in prop::collection::vec(0.01f64..10.0, 1..12), s in 1e-6f64..1e6) {
        let scaled: Vec<f64> = v.iter().map(|x| x * s).collect();
        prop_assert!(close(effective_rank(&v).unwrap(), effective_rank(&scaled).unwrap(), 1e-12));
        let signed: Vec<f64> = v.iter().enumerate().map(|(i, x)| if i % 2 == 0 { -x } else { *x }).collect();
        prop_assert!(close(effective_rank_diag(&signed).unwrap(), effective_rank(&v).unwrap(), 1e-15));
    }
}

#[test]
fn effective_rank_extremes() {
    assert!((effective_rank(&[3.0f64, 3.0, 3.0, 3.0]).unwrap() - 4.0).abs() < 1e-12);
    assert_eq!(effective_rank(&[0.0f64, 5.0, 0.0]).unwrap(), 1.0);
    assert!(matches!(effective_rank(&[0.0f64, 0.0]), Err(SsmError::UndefinedRank)));
    assert!(effective_rank(&[1.0f64, -1.0]).is_err());
    assert!(effective_rank(&[1.0, f64::NAN]).is_err());
}
