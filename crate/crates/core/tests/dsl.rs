use hormander_core::dsl::{parse_expr, ParseErrorKind};
use hormander_core::expr::EvalErrorKind;
use hormander_core::{parse_system, Expr};
use proptest::prelude::*;

#[test]
fn parses_example21() {
    let s = parse_system("dim 2; X1 = exp(x2)*D1; X2 = exp(2*x2)*D1; X3 = x1*D2").unwrap();
    assert_eq!((s.dim(), s.count()), (2, 3));
    let p = [0.4, -0.3];
    let want = [[f64::exp(-0.3), 0.0], [f64::exp(-0.6), 0.0], [0.0, 0.4]];
    for (f, w) in s.fields().iter().zip(want) {
        let v = f.evaluate(&p).unwrap();
        assert!((v[0] - w[0]).abs() <= 1e-15 && (v[1] - w[1]).abs() <= 1e-15);
    }
}

#[test]
fn parses_identity_frame() {
    let s = parse_system("dim 2; X1 = D1; X2 = D2").unwrap();
    for (j, f) in s.fields().iter().enumerate() {
        for (k, c) in f.coeffs.iter().enumerate() {
            assert_eq!(c.as_const().map(|r| *r.numer()), Some(i64::from(j == k)));
        }
    }
}

#[test]
fn heisenberg_coefficients_at_one_one_zero() {
    let s = parse_system("dim 3; X1 = D1 - (x2/2)*D3; X2 = D2 + (x1/2)*D3").unwrap();
    let p = [1.0, 1.0, 0.0];
    assert_eq!(s.field(0).evaluate(&p).unwrap(), vec![1.0, 0.0, -0.5]);
    assert_eq!(s.field(1).evaluate(&p).unwrap(), vec![0.0, 1.0, 0.5]);
}

#[test]
fn derivative_examples() {
    let e = parse_expr("exp(x2)", 2).unwrap();
    let d = e.derivative(1);
    for p in [[0.0, 0.3], [1.0, -2.0]] {
        assert_eq!(d.evaluate(&p).unwrap(), e.evaluate(&p).unwrap());
    }
    let d = parse_expr("x1*x2", 2).unwrap().derivative(0);
    assert_eq!(d.evaluate(&[0.7, 3.5]).unwrap(), 3.5);
    let e = parse_expr("exp(2*x2)", 2).unwrap();
    let d = e.derivative(1);
    for x2 in [0.0, 0.5] {
        let h = 1e-5;
        let fd = (e.evaluate(&[0.0, x2 + h]).unwrap() - e.evaluate(&[0.0, x2 - h]).unwrap()) / (2.0 * h);
        let exact = d.evaluate(&[0.0, x2]).unwrap();
        assert!((fd - exact).abs() <= 1e-8 * exact.abs());
        assert!((exact - 2.0 * f64::exp(2.0 * x2)).abs() <= 1e-15 * exact);
    }
}

#[test]
fn evaluate_examples() {
    assert_eq!(parse_expr("exp(x2)", 2).unwrap().evaluate(&[0.3, 0.0]).unwrap(), 1.0);
    assert_eq!(parse_expr("x1*x2", 2).unwrap().evaluate(&[2.0, 3.0]).unwrap(), 6.0);
    let v = parse_expr("exp(2*x2)", 2).unwrap().evaluate(&[0.0, 0.5]).unwrap();
    assert!((v - std::f64::consts::E).abs() <= 1e-12);
}

#[test]
fn evaluation_errors() {
    let e = parse_expr("x2 + 1/(x1 - 1)", 2).unwrap();
    let err = e.evaluate(&[1.0, 0.0]).unwrap_err();
    assert_eq!(err.kind, EvalErrorKind::DivisionByZero);
    assert!(err.subexpression.contains("x1"));
    let err = parse_expr("log(x1)", 2).unwrap().evaluate(&[0.0, 0.0]).unwrap_err();
    assert_eq!(err.kind, EvalErrorKind::LogOfNonPositive);
}

#[test]
fn located_errors() {
    let cases = [
        ("dim 2; X1 = D1 +", ParseErrorKind::Syntax(String::new())),
        ("dim 2; X1 = tan(x1)*D1", ParseErrorKind::UnknownFunction("tan".into())),
        ("dim 2; X1 = x0*D1", ParseErrorKind::VariableOutOfRange { index: 0, dim: 2 }),
        ("dim 2; X1 = D3", ParseErrorKind::DirectionOutOfRange { index: 3, dim: 2 }),
    ];
    for (src, want) in cases {
        let err = parse_system(src).unwrap_err();
        assert!(err.line >= 1 && err.col >= 1);
        match (&err.kind, &want) {
            (ParseErrorKind::Syntax(_), ParseErrorKind::Syntax(_)) => {}
            (a, b) => assert_eq!(a, b),
        }
    }
}

#[test]
fn system_round_trip_through_source() {
    let src = "dim 3; X1 = D1 - (x2/2)*D3; X2 = D2 + x1^2*sin(x3)/(2 + cos(x1))*D3; step 2";
    let s = parse_system(src).unwrap();
    let back = parse_system(&s.to_source()).unwrap();
    assert_eq!(back.step_hint(), Some(2));
    let p = [0.3, -0.8, 1.7];
    for (a, b) in s.fields().iter().zip(back.fields()) {
        let (u, v) = (a.evaluate(&p).unwrap(), b.evaluate(&p).unwrap());
        for (u, v) in u.iter().zip(&v) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }
}

/// Expressions that are smooth and finite on `[-1, 1]^3`: quotients and
/// logarithms only appear with arguments bounded away from zero.
fn safe_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0usize..3).prop_map(Expr::var),
        (-5i64..=5, 1i64..=4).prop_map(|(a, b)| Expr::ratio(a, b)),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
            (inner.clone(), 0i32..4).prop_map(|(a, k)| Expr::powi(a, k)),
            inner.clone().prop_map(|a| Expr::exp(Expr::sin(a))),
            inner.clone().prop_map(Expr::sin),
            inner.clone().prop_map(Expr::cos),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a / (Expr::int(2) + Expr::cos(b))),
            inner.clone().prop_map(|a| Expr::log(Expr::int(3) + Expr::sin(a))),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn derivative_matches_central_difference(e in safe_expr(), x in point(), axis in 0usize..3) {
        let d = e.derivative(axis).evaluate(&x).unwrap();
        let h = 1e-5;
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[axis] += h;
        xm[axis] -= h;
        let fd = (e.evaluate(&xp).unwrap() - e.evaluate(&xm).unwrap()) / (2.0 * h);
        let scale = d.abs().max(e.evaluate(&x).unwrap().abs()).max(1.0);
        prop_assert!((d - fd).abs() <= 1e-6 * scale, "{} : {} vs {}", e, d, fd);
    }

    #[test]
    fn differentiation_is_linear(e1 in safe_expr(), e2 in safe_expr(), a in -3i64..=3, x in point(), axis in 0usize..3) {
        let combo = Expr::int(a) * e1.clone() + e2.clone();
        let lhs = combo.derivative(axis).evaluate(&x).unwrap();
        let rhs = a as f64 * e1.derivative(axis).evaluate(&x).unwrap() + e2.derivative(axis).evaluate(&x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0));
    }

    #[test]
    fn print_parse_round_trip_is_bitwise(e in safe_expr(), x in point()) {
        let back = parse_expr(&e.to_string(), 3).unwrap();
        prop_assert_eq!(back.to_string(), e.to_string());
        prop_assert_eq!(back.evaluate(&x).unwrap().to_bits(), e.evaluate(&x).unwrap().to_bits());
    }

    #[test]
    fn parser_is_total(src in "[ dimstepxDXY0-9.;=+*/^()#\\-\n]{0,80}") {
        let _ = parse_system(&src);
        let _ = parse_expr(&src, 3);
    }

    #[test]
    fn parser_is_total_on_near_valid_input(e in safe_expr(), cut in 0usize..200) {
        let src = format!("dim 3; X1 = ({})*D1; X2 = D2", e);
        let cut = cut.min(src.len());
        let _ = parse_system(&src[..cut]);
        prop_assert!(parse_system(&src).is_ok());
    }
}

#[test]
fn deep_nesting_is_an_error_not_a_crash() {
    let src = format!("dim 2; X1 = {}x1{}*D1", "(".repeat(5000), ")".repeat(5000));
    assert!(parse_system(&src).is_err());
    let src = format!("dim 2; X1 = {}x1*D1", "-".repeat(5000));
    assert!(parse_system(&src).is_err());
}
