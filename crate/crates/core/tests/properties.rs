use jungck_core::convergence::{certify_geometric_rate, is_v_cauchy, OrbitTrace};
use jungck_core::expr::{format, parse, BinaryOp, Expr, UnaryOp};
use jungck_core::lattice::{tail_supremum, LatticeElement};
use jungck_core::{Point, SMetricSpec};
use proptest::prelude::*;

fn constant() -> impl Strategy<Value = f64> {
    prop_oneof![
        (-20i32..20).prop_map(f64::from),
        prop::num::f64::NORMAL | prop::num::f64::ZERO,
        (1u32..1000).prop_map(|k| f64::from(k) / 64.0),
    ]
}

/// Constant-only trees, as allowed in exponents.
fn constant_expr() -> impl Strategy<Value = Expr> {
    constant().prop_map(Expr::Const).prop_recursive(2, 6, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Expr::unary(UnaryOp::Neg, e)),
            (inner.clone(), inner).prop_map(|(l, r)| Expr::binary(BinaryOp::Add, l, r)),
        ]
    })
}

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![constant().prop_map(Expr::Const), (0usize..10).prop_map(Expr::Var)];
    leaf.prop_recursive(5, 48, 3, |inner| {
        let op = prop_oneof![
            Just(BinaryOp::Add),
            Just(BinaryOp::Sub),
            Just(BinaryOp::Mul),
            Just(BinaryOp::Div),
            Just(BinaryOp::Min),
            Just(BinaryOp::Max),
        ];
        prop_oneof![
            inner.clone().prop_map(|e| Expr::unary(UnaryOp::Neg, e)),
            inner.clone().prop_map(|e| Expr::unary(UnaryOp::Abs, e)),
            (op, inner.clone(), inner.clone()).prop_map(|(op, l, r)| Expr::binary(op, l, r)),
            (inner, constant_expr()).prop_map(|(l, r)| Expr::binary(BinaryOp::Pow, l, r)),
        ]
    })
}

fn element(dim: usize) -> impl Strategy<Value = LatticeElement> {
    prop::collection::vec(-1e6f64..1e6, dim).prop_map(|v| LatticeElement::new(v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn format_then_parse_is_the_identity(e in expr()) {
        let text = format(&e);
        let back = parse(&text).map_err(|err| TestCaseError::fail(format!("{text:?}: {err}")))?;
        prop_assert_eq!(back, e, "text {:?}", text);
    }
}

proptest! {
    #[test]
    fn sup_and_inf_are_lattice_bounds(a in element(3), b in element(3)) {
        let s = a.sup(&b).unwrap();
        let i = a.inf(&b).unwrap();
        prop_assert!(a.leq(&s).unwrap() && b.leq(&s).unwrap());
        prop_assert!(i.leq(&a).unwrap() && i.leq(&b).unwrap());
        prop_assert_eq!(a.sup(&b).unwrap(), b.sup(&a).unwrap());
        // Absorption.
        prop_assert_eq!(a.sup(&a.inf(&b).unwrap()).unwrap(), a.clone());
        prop_assert_eq!(a.inf(&a.sup(&b).unwrap()).unwrap(), a);
    }

    #[test]
    fn leq_is_a_partial_order(a in element(2), b in element(2), c in element(2)) {
        prop_assert!(a.leq(&a).unwrap());
        if a.leq(&b).unwrap() && b.leq(&a).unwrap() {
            prop_assert_eq!(&a, &b);
        }
        if a.leq(&b).unwrap() && b.leq(&c).unwrap() {
            prop_assert!(a.leq(&c).unwrap());
        }
    }

    #[test]
    fn tail_supremum_dominates_and_is_monotone(seq in prop::collection::vec(element(2), 1..40)) {
        let mu = tail_supremum(&seq).unwrap();
        prop_assert!(mu.is_non_increasing());
        for (m, s) in mu.values.iter().zip(&seq) {
            prop_assert!(s.leq(m).unwrap());
        }
    }

    #[test]
    fn step_ok_is_monotone_in_alpha(
        start in 0.1f64..10.0,
        ratios in prop::collection::vec(0.0f64..0.95, 2..30),
        a1 in 0.0f64..0.99,
        bump in 0.0f64..0.5,
    ) {
        let mut points = vec![Point::scalar(start)];
        let mut x = start;
        let mut step = 1.0;
        for r in &ratios {
            step *= r;
            x += step;
            points.push(Point::scalar(x));
        }
        let spec = SMetricSpec::abs_sum(1);
        let trace = OrbitTrace::from_points(points, &spec).unwrap();
        let a2 = (a1 + bump).min(0.999);
        if certify_geometric_rate(&trace, a1, &spec).unwrap().step_ok {
            prop_assert!(certify_geometric_rate(&trace, a2, &spec).unwrap().step_ok);
        }
    }

    #[test]
    fn observed_sigma_certifies_its_own_trace(
        start in -5.0f64..5.0,
        first in 0.01f64..2.0,
        ratios in prop::collection::vec(0.05f64..0.9, 3..40),
    ) {
        let mut points = vec![Point::scalar(start), Point::scalar(start + first)];
        let mut step = first;
        let mut x = start + first;
        for r in &ratios {
            step *= r;
            x += step;
            points.push(Point::scalar(x));
        }
        let spec = SMetricSpec::abs_sum(1);
        let trace = OrbitTrace::from_points(points, &spec).unwrap();
        let sigma = trace.observed_sigma();
        prop_assume!(sigma < 1.0);
        prop_assert!(certify_geometric_rate(&trace, sigma, &spec).unwrap().step_ok);
    }

    #[test]
    fn geometric_traces_are_v_cauchy_at_the_geometric_bound(
        alpha in 0.05f64..0.9,
        first in 1e-3f64..10.0,
        sign in prop::bool::ANY,
    ) {
        let spec = SMetricSpec::abs_sum(1);
        let d = if sign { first } else { -first };
        let points: Vec<Point> = (0..64)
            .scan(0.0, |x, k| {
                let p = *x;
                *x += d * alpha.powi(k);
                Some(Point::scalar(p))
            })
            .collect();
        let trace = OrbitTrace::from_points(points.clone(), &spec).unwrap();
        prop_assume!(certify_geometric_rate(&trace, alpha, &spec).unwrap().step_ok);
        let s01 = spec.dist(&points[0], &points[1]).unwrap().norm_inf();
        let tol = 2.0 * alpha.powi(32) / (1.0 - alpha) * s01;
        prop_assert!(is_v_cauchy(&points, &spec, tol, 16).unwrap().holds);
    }
}
