mod oracles;

use ppg_shape::spline::SplineSpec;
use proptest::prelude::*;

proptest! {
    #[test]
    fn basis_matches_recursion(d in 0usize..=5, q in 0usize..=15, t in 0.0f64..=1.0) {
        let spec = SplineSpec::new(d, q);
        let b = spec.basis_eval(t).unwrap();
        for (j, v) in b.iter().enumerate() {
            let want = oracles::bspline(spec.knots(), j, d, t);
            prop_assert!((v - want).abs() < 1e-12, "B_{} at {}: {} vs {}", j, t, v, want);
        }
    }

    #[test]
    fn partition_of_unity_and_support(d in 0usize..=5, q in 0usize..=15, t in 0.0f64..=1.0) {
        let spec = SplineSpec::new(d, q);
        let b = spec.basis_eval(t).unwrap();
        prop_assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let k = spec.knots();
        for (j, &v) in b.iter().enumerate() {
            prop_assert!(v >= -1e-15);
            if t < k[j] || t > k[j + d + 1] {
                prop_assert_eq!(v, 0.0);
            }
        }
        prop_assert!(b.iter().filter(|&&v| v != 0.0).count() <= d + 1);
    }

    #[test]
    fn constants_are_reproduced(d in 0usize..=5, q in 0usize..=15, c in -5.0f64..5.0, t in 0.0f64..=1.0) {
        let spec = SplineSpec::new(d, q);
        let coef = vec![c; spec.dim()];
        prop_assert!((spec.eval_curve(&coef, t) - c).abs() < 1e-10 * c.abs().max(1.0));
    }

    #[test]
    fn design_rows_are_basis_on_grid(d in 0usize..=4, q in 0usize..=10, r in 3usize..80) {
        let spec = SplineSpec::new(d, q);
        let h = spec.design_matrix(r);
        prop_assert_eq!(h.shape(), (r, spec.dim()));
        for k in 0..r {
            let b = spec.basis_eval(k as f64 / r as f64).unwrap();
            for (j, v) in b.iter().enumerate() {
                prop_assert_eq!(h[(k, j)], *v);
            }
        }
    }
}

#[test]
fn default_basis_dimension() {
    let spec = SplineSpec::default();
    assert_eq!(spec.dim(), 14);
    assert_eq!(spec.design_matrix(64).shape(), (64, 14));
}
