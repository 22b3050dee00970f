use hormander_core::expr::Expr;
use hormander_core::lab::*;
use hormander_core::lie::{discover_basis, SamplingPlan};
use hormander_core::metric::{DistanceOracle, OracleParams};
use hormander_core::parse_system;
use hormander_core::system::{DomainSpec, VectorFieldSystem};
use num_rational::Ratio;
use proptest::prelude::*;
use std::f64::consts::PI;

const EUCLID2: &str = "dim 2; X1 = D1; X2 = D2";
const GRUSHIN: &str = "dim 2; X1 = D1; X2 = x1*D2";
const EXAMPLE21: &str = "dim 2; X1 = exp(x2)*D1; X2 = exp(2*x2)*D1; X3 = x1*D2; step 2";

fn sys(src: &str) -> VectorFieldSystem {
    parse_system(src).unwrap()
}

/// Adaptive Simpson on `[a, b]`.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 40)
}

fn std_bump_1d(t: f64) -> f64 {
    if t < 1.0 {
        (-1.0 / (1.0 - t)).exp()
    } else {
        0.0
    }
}

/// `∫ |g|^p` over the box `[lo, hi]` by the composite midpoint rule with
/// `n` cells per axis, written out independently of the library grid.
fn box_integral(g: &dyn Fn(&[f64]) -> f64, lo: [f64; 2], hi: [f64; 2], n: usize, p: f64) -> f64 {
    let (dx, dy) = ((hi[0] - lo[0]) / n as f64, (hi[1] - lo[1]) / n as f64);
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let x = [lo[0] + (i as f64 + 0.5) * dx, lo[1] + (j as f64 + 0.5) * dy];
            s += g(&x).abs().powf(p);
        }
    }
    s * dx * dy
}

#[test]
fn standard_bump_l1_matches_radial_reference() {
    let u = TestFunction::bump(&[0.0, 0.0], &[1.0, 1.0], Profile::Standard);
    let got = lp_norm(&u, 1.0, QuadPlan::for_dim(2)).unwrap();
    // ∫_{|x|<1} e^{-1/(1-|x|²)} = π ∫_0^1 e^{-1/(1-t)} dt.
    let reference = PI * simpson(&std_bump_1d, 0.0, 1.0, 1e-14);
    assert!((got.value - reference).abs() <= 1e-3 * reference, "{} vs {reference}", got.value);
    assert!(!got.flagged());
}

#[test]
fn zero_function_has_zero_norm() {
    let u = TestFunction::bump(&[0.1, 0.2], &[0.3, 0.3], Profile::Standard).scale(0.0);
    assert_eq!(lp_norm(&u, 1.0, QuadPlan::for_dim(2)).unwrap().value, 0.0);
    assert_eq!(lp_norm(&u, 2.5, QuadPlan::for_dim(2)).unwrap().value, 0.0);
}

#[test]
fn dilation_scales_norm() {
    for p in [1.0, 2.0, 3.0] {
        let u = TestFunction::bump(&[0.0, 0.0], &[1.0, 1.0], Profile::Standard);
        let us = TestFunction::bump(&[0.0, 0.0], &[0.5, 0.5], Profile::Standard);
        let a = lp_norm(&u, p, QuadPlan::for_dim(2)).unwrap().value;
        let b = lp_norm(&us, p, QuadPlan::for_dim(2)).unwrap().value;
        let want = 0.5f64.powf(2.0 / p) * a;
        assert!((b - want).abs() <= 1e-3 * want, "p={p}: {b} vs {want}");
    }
}

#[test]
fn bumps_vanish_on_the_boundary_shell() {
    for profile in [Profile::Standard, Profile::Plateau(1), Profile::Plateau(4)] {
        let u = TestFunction::bump(&[0.2, -0.1], &[0.4, 0.25], profile);
        assert!(u.boundary_max(256, 3).unwrap() <= 1e-12);
        assert!(u.inside(&DomainSpec::ball(2, 1.0)));
    }
}

#[test]
fn euclidean_derivative_norm_matches_finite_differences() {
    let s = sys(EUCLID2);
    let u = TestFunction::scaled_bump(&[0.1, 0.0], &[0.6, 0.6], Profile::Standard, Some(Expr::var(0)));
    let got = horizontal_derivative_norm(&u, &s, &[0], 2.0, QuadPlan::for_dim(2)).unwrap();
    let h = 1e-5;
    let fd = |x: &[f64]| (u.value(&[x[0] + h, x[1]]).unwrap() - u.value(&[x[0] - h, x[1]]).unwrap()) / (2.0 * h);
    let want = box_integral(&fd, [-0.5, -0.6], [0.7, 0.6], 600, 2.0).sqrt();
    assert!((got.value - want).abs() <= 5e-3 * want, "{} vs {want}", got.value);
}

#[test]
fn empty_multi_index_is_the_lp_norm() {
    let s = sys(GRUSHIN);
    let u = TestFunction::bump(&[0.3, 0.1], &[0.2, 0.4], Profile::Standard);
    let a = horizontal_derivative_norm(&u, &s, &[], 1.5, QuadPlan::for_dim(2)).unwrap();
    let b = lp_norm(&u, 1.5, QuadPlan::for_dim(2)).unwrap();
    assert_eq!(a.value.to_bits(), b.value.to_bits());
}

#[test]
fn grushin_second_field_is_weighted_vertical_derivative() {
    let s = sys(GRUSHIN);
    let u = TestFunction::bump(&[0.5, 0.0], &[0.4, 0.5], Profile::Standard);
    let got = horizontal_derivative_norm(&u, &s, &[1], 1.0, QuadPlan::for_dim(2)).unwrap();
    let h = 1e-5;
    let fd = |x: &[f64]| x[0] * (u.value(&[x[0], x[1] + h]).unwrap() - u.value(&[x[0], x[1] - h]).unwrap()) / (2.0 * h);
    let want = box_integral(&fd, [0.1, -0.5], [0.9, 0.5], 600, 1.0);
    assert!((got.value - want).abs() <= 5e-3 * want, "{} vs {want}", got.value);
}

#[test]
fn derivative_order_is_capped() {
    let s = sys(EUCLID2);
    let u = TestFunction::bump(&[0.0, 0.0], &[0.5, 0.5], Profile::Standard);
    let err = horizontal_derivative_norm(&u, &s, &[0, 1, 0, 1], 2.0, QuadPlan::for_dim(2)).unwrap_err();
    assert_eq!(err, LabError::DerivativeOrder { order: 4, max: MAX_ORDER });
    assert!(matches!(
        horizontal_derivative_norm(&u, &s, &[2], 2.0, QuadPlan::for_dim(2)),
        Err(LabError::InvalidInput(_))
    ));
}

#[test]
fn euclidean_disk_perimeter_quotient() {
    let s = sys(EUCLID2);
    for rho in [1.0, 0.3] {
        let shape = Shape { center: vec![0.2, -0.1], semi: vec![rho, rho] };
        let q = x_perimeter(&s, &shape, 1024).unwrap() / shape.volume().unwrap().sqrt();
        assert!((q - 2.0 * PI.sqrt()).abs() <= 1e-9, "{q}");
    }
}

#[test]
fn grushin_unit_disk_perimeter() {
    let s = sys(GRUSHIN);
    let shape = Shape { center: vec![0.0, 0.0], semi: vec![1.0, 1.0] };
    let got = x_perimeter(&s, &shape, PERIMETER_NODES).unwrap();
    let g = |t: f64| {
        let (c, sn) = (t.cos(), t.sin());
        (c * c + c * c * sn * sn).sqrt()
    };
    let want = simpson(&g, 0.0, 2.0 * PI, 1e-12);
    assert!((got - want).abs() <= 1e-3 * want, "{got} vs {want}");
}

#[test]
fn rayleigh_bound_on_unit_square() {
    let s = sys(EUCLID2);
    let dom = DomainSpec::new(vec![0.0, 0.0], vec![1.0, 1.0], "unit square").unwrap();
    let ctx = LabContext::new(&s, &dom, 2, Focus::isotropic(vec![0.5, 0.5]));
    let fam = ctx.family();
    let lam = rayleigh_bound(&ctx, &fam).unwrap();
    assert!(lam >= 2.0 * PI * PI, "{lam}");
    let scaled: Vec<Member> = fam.iter().map(|m| Member { u: m.u.scale(7.5), ..m.clone() }).collect();
    let lam2 = rayleigh_bound(&ctx, &scaled).unwrap();
    assert!((lam - lam2).abs() <= 1e-9 * lam);
}

#[test]
fn euclidean_sobolev_is_bounded() {
    let s = sys(EUCLID2);
    let dom = DomainSpec::ball(2, 1.0);
    let ctx = LabContext::new(&s, &dom, 2, Focus::isotropic(vec![0.0, 0.0]));
    let rep = sobolev_suite(&ctx, 1, Ratio::from_integer(1), None, &ctx.family(), None).unwrap();
    assert_eq!(rep.exponents["q"], "2");
    assert_eq!(rep.family_size, 24);
    assert_eq!(rep.verdict, Verdict::Pass, "{:?}", rep.notes);
    // Isoperimetric constant of the plane: ‖u‖_2 ≤ (4π)^{-1/2} ‖∇u‖_1.
    assert!(rep.constant <= 1.0 / (4.0 * PI).sqrt() * 1.01);
}

#[test]
fn sobolev_regimes_are_checked() {
    let s = sys(EUCLID2);
    let dom = DomainSpec::ball(2, 1.0);
    let ctx = LabContext::new(&s, &dom, 2, Focus::isotropic(vec![0.0, 0.0]));
    let fam = ctx.family();
    let err = sobolev_suite(&ctx, 1, Ratio::from_integer(3), None, &fam, None).unwrap_err();
    assert!(err.to_string().contains("requires kp <= nu_tilde"), "{err}");
    assert!(sobolev_suite(&ctx, 1, Ratio::from_integer(2), None, &fam, None).is_err());
    let rep = sobolev_suite(&ctx, 1, Ratio::from_integer(2), Some(Ratio::from_integer(4)), &fam[..4], None).unwrap();
    assert_eq!(rep.exponents["q"], "4");
}

#[test]
fn example21_sobolev_family_and_probe() {
    let s = sys(EXAMPLE21);
    let dom = DomainSpec::ball(2, 1.0);
    let ctx = LabContext::new(&s, &dom, 3, Focus { point: vec![0.0, 0.0], weights: vec![1, 2] });
    let probe = ProbeSettings { q_prime: Some(7.0), halvings: 4 };
    let rep = sobolev_suite(&ctx, 1, Ratio::from_integer(2), None, &ctx.family(), Some(probe)).unwrap();
    assert_eq!(rep.exponents["q"], "6");
    assert!(rep.extras["growth"] <= GROWTH_LIMIT);
    assert!(rep.rows.iter().all(|r| r.drift <= QUADRATURE_DRIFT));
    // Concentration raises the q' ratio at every dyadic step.
    assert_eq!(rep.extras["probe_monotone"], 1.0);
    assert!(rep.extras["probe_growth"] > 1.0);
}

#[test]
fn nash_is_rejected_in_dimension_two() {
    let s = sys(EUCLID2);
    let dom = DomainSpec::ball(2, 1.0);
    let ctx = LabContext::new(&s, &dom, 2, Focus::isotropic(vec![0.0, 0.0]));
    let err = gn_nash_moser_suite(&ctx, GnVariant::Nash, &ctx.family()).unwrap_err();
    assert!(matches!(err, LabError::Exponent(_)), "{err}");
}

#[test]
fn nash_and_moser_on_grushin() {
    let s = sys(GRUSHIN);
    let dom = DomainSpec::cube(2, 1.0);
    let ctx = LabContext::new(&s, &dom, 3, Focus { point: vec![0.0, 0.0], weights: vec![1, 2] });
    let fam = ctx.family();
    let nash = gn_nash_moser_suite(&ctx, GnVariant::Nash, &fam).unwrap();
    assert_eq!((nash.exponents["a"].as_str(), nash.exponents["b"].as_str()), ("4/3", "5/3"));
    assert_eq!(nash.verdict, Verdict::Pass);
    let moser = gn_nash_moser_suite(&ctx, GnVariant::Moser, &fam).unwrap();
    assert_eq!(moser.exponents["s2"], "10/3");
    assert_eq!(moser.verdict, Verdict::Pass);
}

#[test]
fn isoperimetric_exponents_on_example21() {
    let s = sys(EXAMPLE21);
    let dom = DomainSpec::ball(2, 1.0);
    let ctx = LabContext::new(&s, &dom, 3, Focus { point: vec![0.0, 0.0], weights: vec![1, 2] });
    let two_thirds = isoperimetric_suite(&ctx, None, ShapeFamily::Disks, 4).unwrap();
    assert_eq!(two_thirds.exponents["exponent"], "2/3");
    assert_eq!(two_thirds.verdict, Verdict::Pass);
    let three_quarters = isoperimetric_suite(&ctx, Some(Ratio::new(3, 4)), ShapeFamily::Disks, 4).unwrap();
    assert!(three_quarters.extras["decay"] >= 2.0);
    assert_eq!(three_quarters.extras["decay_monotone"], 1.0);
}

#[test]
fn log_sobolev_chain_holds() {
    for (src, dom, nu) in [(EUCLID2, DomainSpec::ball(2, 1.0), 2), (GRUSHIN, DomainSpec::cube(2, 1.0), 3)] {
        let s = sys(src);
        let ctx = LabContext::new(&s, &dom, nu, Focus::isotropic(vec![0.0, 0.0]));
        let fam = ctx.family();
        let sob = sobolev_suite(&ctx, 1, Ratio::from_integer(1), None, &fam, None).unwrap();
        let rep = log_sobolev_suite(&ctx, 1, Ratio::from_integer(1), sob.constant, None, &fam).unwrap();
        assert_eq!(rep.verdict, Verdict::Pass, "{src}: {:?}", rep.notes);
    }
}

#[test]
fn poincare_with_plateaus_on_grushin() {
    let s = sys(GRUSHIN);
    let dom = DomainSpec::cube(2, 1.0);
    let ctx = LabContext::new(&s, &dom, 3, Focus { point: vec![0.0, 0.0], weights: vec![1, 2] });
    let mut fam = ctx.family();
    fam.extend(plateau_family(&dom, &[0.0, 0.0], &default_plateau_powers(2)));
    let rep = poincare_check(&ctx, 2.0, &fam).unwrap();
    assert_eq!(rep.verdict, Verdict::Pass, "{:?}", rep.notes);
    // The supports straddle the degenerate line.
    assert!(fam.iter().any(|m| m.u.support.lo[0] < 0.0 && m.u.support.hi[0] > 0.0));
}

#[test]
fn moser_trudinger_zero_function_gives_domain_volume() {
    let s = sys(EUCLID2);
    let dom = DomainSpec::cube(2, 1.0);
    let ctx = LabContext::new(&s, &dom, 2, Focus::isotropic(vec![0.0, 0.0]));
    let zero = Member {
        label: "zero".into(),
        level: 0,
        u: TestFunction::bump(&[0.0, 0.0], &[0.5, 0.5], Profile::Standard).scale(0.0),
    };
    let rep = moser_trudinger_suite(&ctx, &[1.0, 4.0], MT_MULTIPLE, 4.0, &[zero]).unwrap();
    assert!((rep.rows[0].ratio - 1.0).abs() <= 1e-12);
    assert_eq!(rep.extras["sigma_max"], 4.0);
}

#[test]
fn holder_exponent_and_bound_on_euclid() {
    let s = sys(EUCLID2);
    let dom = DomainSpec::cube(2, 1.0);
    let ctx = LabContext::new(&s, &dom, 2, Focus::isotropic(vec![0.0, 0.0]));
    let (basis, _) = discover_basis(&s, &dom, &SamplingPlan::with_grid(5), 2).unwrap();
    let oracle = DistanceOracle::build(&s, &dom, &OracleParams::with_h(1.0 / 16.0), basis.s0()).unwrap();
    let fam: Vec<Member> = ctx.family().into_iter().step_by(3).collect();
    let rep = holder_suite(&ctx, &oracle, 1, Ratio::from_integer(3), &fam).unwrap();
    assert_eq!(rep.exponents["alpha"], "1/3");
    assert_eq!(rep.verdict, Verdict::Pass, "{:?}", rep.notes);
    let err = holder_suite(&ctx, &oracle, 1, Ratio::from_integer(2), &fam).unwrap_err();
    assert!(err.to_string().contains("requires kp > nu_tilde"));
}

#[test]
fn representation_on_euclid() {
    let s = sys(EUCLID2);
    let dom = DomainSpec::cube(2, 1.0);
    let ctx = LabContext::new(&s, &dom, 2, Focus::isotropic(vec![0.0, 0.0]));
    let (basis, _) = discover_basis(&s, &dom, &SamplingPlan::with_grid(5), 2).unwrap();
    let oracle = DistanceOracle::build(&s, &dom, &OracleParams::with_h(1.0 / 32.0), basis.s0()).unwrap();
    let fam: Vec<Member> = ctx.family().into_iter().step_by(4).collect();
    let rep = representation_check(&ctx, &oracle, &basis, &fam).unwrap();
    assert_eq!(rep.verdict, Verdict::Pass);
    assert!(rep.constant > 0.0 && rep.constant.is_finite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn lp_norm_is_absolutely_homogeneous(c in -5.0f64..5.0, p in 1.0f64..4.0) {
        let u = TestFunction::bump(&[0.1, -0.2], &[0.3, 0.5], Profile::Standard);
        let plan = QuadPlan::with_nodes(33);
        let a = lp_norm(&u, p, plan).unwrap().value;
        let b = lp_norm(&u.scale(c), p, plan).unwrap().value;
        prop_assert!((b - c.abs() * a).abs() <= 1e-6 * a);
    }

    #[test]
    fn euclidean_norms_are_translation_invariant(dx in -0.3f64..0.3, dy in -0.3f64..0.3) {
        let s = sys(EUCLID2);
        let plan = QuadPlan::with_nodes(65);
        let u = TestFunction::bump(&[0.0, 0.0], &[0.4, 0.3], Profile::Standard);
        let v = TestFunction::bump(&[dx, dy], &[0.4, 0.3], Profile::Standard);
        for j in [&[][..], &[0][..], &[1, 1][..]] {
            let a = horizontal_derivative_norm(&u, &s, j, 2.0, plan).unwrap().value;
            let b = horizontal_derivative_norm(&v, &s, j, 2.0, plan).unwrap().value;
            prop_assert!((a - b).abs() <= 1e-3 * a, "{:?}: {} vs {}", j, a, b);
        }
    }

    #[test]
    fn poincare_ratio_ignores_scaling(c in 0.1f64..10.0) {
        let s = sys(GRUSHIN);
        let dom = DomainSpec::cube(2, 1.0);
        let mut ctx = LabContext::new(&s, &dom, 3, Focus::isotropic(vec![0.0, 0.0]));
        ctx.plan = QuadPlan { nodes: 33, refine: false };
        let m = Member { label: "m".into(), level: 0, u: TestFunction::bump(&[0.1, 0.2], &[0.4, 0.3], Profile::Plateau(2)) };
        let a = poincare_check(&ctx, 2.0, &[m.clone()]).unwrap().constant;
        let b = poincare_check(&ctx, 2.0, &[Member { u: m.u.scale(c), ..m }]).unwrap().constant;
        prop_assert!((a - b).abs() <= 1e-9 * a);
    }
}
