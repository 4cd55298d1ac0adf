use proptest::prelude::*;

use kernelbundle::contour::{count_zeros, Circle, LocatedZero};
use kernelbundle::frames::{laurent_coefficients, make_germ, PoleLaurent};
use kernelbundle::linalg::{self, CMatrix, CVector, C64};
use kernelbundle::shell::trace::{trace_from_laurent, TraceExpansion};
use kernelbundle::shell::{germ_from_trace, ParameterGrid};

fn cplx() -> impl Strategy<Value = C64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| C64::new(a, b))
}

fn matrix(n: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec(cplx(), n * n).prop_map(move |v| CMatrix::from_vec(n, n, v))
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 48,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn zero_count_matches_roots(roots in prop::collection::vec(cplx(), 1..6)) {
        let circle = Circle::new(C64::new(0.0, 0.0), 0.8, 256).unwrap();
        // keep roots off the contour
        prop_assume!(roots.iter().all(|r| (r.norm() - 0.8).abs() > 0.05));
        let inside = roots.iter().filter(|r| r.norm() < 0.8).count();
        let q = |z: C64| roots.iter().fold(C64::new(1.0, 0.0), |acc, r| acc * (z - r));
        prop_assert_eq!(count_zeros(q, &circle).unwrap(), inside);
    }

    #[test]
    fn svd_reconstructs(m in matrix(4)) {
        let (u, s, v) = linalg::svd(&m);
        let d = CMatrix::from_diagonal(&CVector::from_iterator(4, s.iter().map(|&x| C64::new(x, 0.0))));
        prop_assert!(linalg::max_abs(&(&u * d * v.adjoint() - &m)) < 1e-12);
        prop_assert!(s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(linalg::deviation_from_orthonormal(&u) < 1e-12);
    }

    #[test]
    fn germs_are_linear(a in cplx(), b in cplx(), p in cplx(), theta in 0.0..6.3f64) {
        let p = p * 0.25;
        let f = make_germ(|z| Ok(CVector::from_element(1, 1.0 / (z - p))), 0, C64::new(0.0, 0.0), 0.5, 128).unwrap();
        let g = make_germ(|z| Ok(CVector::from_element(1, 1.0 / ((z - p) * (z - p)))), 0, C64::new(0.0, 0.0), 0.5, 128).unwrap();
        let h = f.scale(a).add(&g.scale(b)).unwrap();
        let z = C64::from_polar(0.9, theta);
        let direct = a / (z - p) + b / ((z - p) * (z - p));
        prop_assert!((h.eval(z).unwrap()[0] - direct).norm() < 1e-10 * (1.0 + direct.norm()));
    }

    #[test]
    fn laurent_recovers_principal_parts(p in cplx(), c1 in cplx(), c2 in cplx(), k in cplx()) {
        let p = p * 0.4;
        let f = move |z: C64| c1 / (z - p) + c2 / ((z - p) * (z - p)) + k * z;
        let g = make_germ(|z| Ok(CVector::from_element(1, f(z))), 0, C64::new(0.0, 0.0), 0.8, 128).unwrap();
        let parts = laurent_coefficients(&g, &[LocatedZero { location: p, multiplicity: 2 }]).unwrap();
        prop_assert!((parts[0].coefficients[0][0] - c1).norm() < 1e-9);
        prop_assert!((parts[0].coefficients[1][0] - c2).norm() < 1e-9);
    }

    #[test]
    fn trace_map_inverts(p in cplx(), coeffs in prop::collection::vec(cplx(), 1..5)) {
        let part = PoleLaurent {
            pole: p,
            coefficients: coeffs.iter().map(|&c| CVector::from_element(1, c)).collect(),
        };
        let e = TraceExpansion {
            gamma: 2.0,
            m: 4,
            terms: trace_from_laurent(std::slice::from_ref(&part)),
            numeric_only: false,
            samples: vec![],
            agreement: None,
        };
        let back = germ_from_trace(&e);
        let nonzero = coeffs.iter().filter(|c| c.norm() > 0.0).count();
        prop_assert_eq!(e.terms.len(), nonzero);
        for (l, c) in coeffs.iter().enumerate() {
            let got = back.first().and_then(|b| b.coefficients.get(l)).map(|v| v[0]).unwrap_or_default();
            prop_assert!((got - c).norm() < 1e-13);
        }
    }

    #[test]
    fn grids_have_endpoints(lo in -5.0..0.0f64, width in 0.1..5.0f64, n in 2usize..40) {
        let g = ParameterGrid::parse(&format!("{lo}:{}:{n}", lo + width)).unwrap();
        prop_assert_eq!(g.len(), n);
        prop_assert_eq!(g.points[0][0], lo);
        prop_assert_eq!(g.points[n - 1][0], lo + width);
        prop_assert!(g.points.windows(2).all(|w| w[1][0] > w[0][0]));
    }
}
