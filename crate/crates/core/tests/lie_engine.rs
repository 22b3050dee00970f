use hormander_core::lie::{
    discover_basis, enumerate_commutators, hormander_check, lie_bracket, metivier_index,
    SamplingPlan, DEFAULT_NODE_CAP, DEFAULT_STEP_CAP, DEFAULT_ZERO_TOL,
};
use hormander_core::{parse_system, DomainSpec, VectorFieldSystem};
use proptest::prelude::*;

const EXAMPLE21: &str = "dim 2; X1 = exp(x2)*D1; X2 = exp(2*x2)*D1; X3 = x1*D2";
const HEISENBERG: &str = "dim 3; X1 = D1 - (x2/2)*D3; X2 = D2 + (x1/2)*D3";
const GRUSHIN: &str = "dim 2; X1 = D1; X2 = x1*D2";
const MARTINET: &str = "dim 3; X1 = D1; X2 = D2 + x1^2*D3";
const EUCLID2: &str = "dim 2; X1 = D1; X2 = D2";
const EUCLID3: &str = "dim 3; X1 = D1; X2 = D2; X3 = D3";

fn sys(src: &str) -> VectorFieldSystem {
    parse_system(src).unwrap()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn example21_brackets_match_hand_expansion() {
    let s = sys(EXAMPLE21);
    let b12 = lie_bracket(s.field(0), s.field(1)).unwrap();
    let b13 = lie_bracket(s.field(0), s.field(2)).unwrap();
    let b23 = lie_bracket(s.field(1), s.field(2)).unwrap();
    for &(x1, x2) in &[(0.3, -0.2), (-0.7, 0.4), (0.0, 0.9), (0.55, 0.1)] {
        let p = [x1, x2];
        let e1 = f64::exp(x2);
        let e2 = f64::exp(2.0 * x2);
        let v = b12.evaluate(&p).unwrap();
        assert_eq!(v, vec![0.0, 0.0]);
        let v = b13.evaluate(&p).unwrap();
        assert!(close(v[0], -x1 * e1, 1e-14) && close(v[1], e1, 1e-14));
        let v = b23.evaluate(&p).unwrap();
        assert!(close(v[0], -2.0 * x1 * e2, 1e-14) && close(v[1], e2, 1e-14));
    }
}

#[test]
fn example21_lambda_det_values() {
    let s = sys(EXAMPLE21);
    let b = enumerate_commutators(&s, 2, DEFAULT_NODE_CAP).unwrap();
    assert_eq!(b.len(), 3 + 9);
    // Degree-2 entries are ordered by multi-index: [X1,X1], [X1,X2], [X1,X3], ...
    let y13 = 3 + 2;
    assert_eq!(b.entries()[y13].multi, vec![0, 2]);
    let v = b.lambda_det(&[0, 2], &[0.5, 0.0]).unwrap();
    assert!(close(v, 0.5, 1e-15));
    let v = b.lambda_det(&[0, y13], &[0.0, 0.0]).unwrap();
    assert!(close(v, 1.0, 1e-15));
    assert_eq!(b.lambda_det(&[2, 0], &[0.5, 0.0]).unwrap(), -b.lambda_det(&[0, 2], &[0.5, 0.0]).unwrap());
}

#[test]
fn euclid_repeated_column_is_zero() {
    let b = enumerate_commutators(&sys(EUCLID2), 1, DEFAULT_NODE_CAP).unwrap();
    assert_eq!(b.lambda_det(&[0, 0], &[0.1, 0.2]).unwrap(), 0.0);
    assert_eq!(b.nsw_polynomial(&[0.1, 0.2], 0.3).unwrap(), 2.0 * 0.09);
}

#[test]
fn euclid_degree_two_brackets_vanish() {
    let b = enumerate_commutators(&sys(EUCLID2), 2, DEFAULT_NODE_CAP).unwrap();
    let degs: Vec<usize> = b.entries().iter().map(|e| e.degree).collect();
    assert_eq!(degs, vec![1, 1, 2, 2, 2, 2]);
    assert!(b.entries()[2..].iter().all(|e| e.field.is_structurally_zero()));
}

#[test]
fn example21_indices_on_unit_disk() {
    let s = sys(EXAMPLE21);
    let b = enumerate_commutators(&s, 2, DEFAULT_NODE_CAP).unwrap();
    assert_eq!(b.pointwise_nu(&[0.5, 0.1], DEFAULT_ZERO_TOL).unwrap(), 2);
    assert_eq!(b.pointwise_nu(&[0.0, 0.3], DEFAULT_ZERO_TOL).unwrap(), 3);
    let disk = DomainSpec::ball(2, 1.0);
    let plan = SamplingPlan::default();
    let rep = metivier_index(&b, &disk, &plan, s.is_polynomial()).unwrap();
    assert_eq!((rep.nu_tilde, rep.q, rep.s_max), (3, 4, 2));
    assert!(rep.singular_points.iter().all(|p| p[0] == 0.0));
    let h = hormander_check(&b, &disk, &plan, false).unwrap();
    assert!(h.holds);
    assert_eq!(h.s_max, Some(2));
}

#[test]
fn example21_lambda_at_origin_starts_at_cubic_order() {
    let b = enumerate_commutators(&sys(EXAMPLE21), 2, DEFAULT_NODE_CAP).unwrap();
    let prof = b.lambda_profile(&[0.0, 0.0]).unwrap();
    assert_eq!(prof.order(), Some(3));
    // Degree-3 subsets at the origin pair X1 or X2 with one of [X1,X3],
    // [X2,X3], [X3,X1], [X3,X2]; each has |det| = 1 and two orderings.
    assert!(close(prof.coeffs[3], 16.0, 1e-14));
}

#[test]
fn lambda_profile_matches_brute_force_tuple_sum() {
    // Independent route: every ordered n-tuple through the LU determinant.
    for (src, depth, x) in [
        (EXAMPLE21, 2, vec![0.31, -0.42]),
        (EXAMPLE21, 2, vec![0.0, 0.2]),
        (HEISENBERG, 2, vec![0.2, -0.7, 0.1]),
        (MARTINET, 3, vec![0.4, 0.1, -0.3]),
    ] {
        let b = enumerate_commutators(&sys(src), depth, DEFAULT_NODE_CAP).unwrap();
        let (l, n) = (b.len(), b.dim());
        let mut expected = vec![0.0; b.max_tuple_degree() + 1];
        let mut idx = vec![0usize; n];
        'outer: loop {
            let d = b.lambda_det(&idx, &x).unwrap();
            expected[b.tuple_degree(&idx)] += d.abs();
            for v in idx.iter_mut() {
                *v += 1;
                if *v < l {
                    continue 'outer;
                }
                *v = 0;
            }
            break;
        }
        let prof = b.lambda_profile(&x).unwrap();
        for (a, e) in prof.coeffs.iter().zip(&expected) {
            assert!((a - e).abs() <= 1e-12 * e.max(1.0), "{src}: {a} vs {e}");
        }
    }
}

#[test]
fn heisenberg_indices_and_lambda() {
    let s = sys(HEISENBERG);
    let b = enumerate_commutators(&s, 2, DEFAULT_NODE_CAP).unwrap();
    let y12 = b.entries().iter().position(|e| e.multi == vec![0, 1]).unwrap();
    for p in [[0.1, 0.2, 0.3], [-0.9, 0.4, 0.0], [0.5, -0.5, 0.7], [0.0, 0.0, 0.0], [0.33, 0.81, -0.6]] {
        assert_eq!(b.entries()[y12].field.evaluate(&p).unwrap(), vec![0.0, 0.0, 1.0]);
    }
    let lam = b.nsw_polynomial(&[0.3, -0.2, 0.5], 0.1).unwrap();
    assert!(close(lam, 12.0 * 1e-4, 1e-12));
    let rep = metivier_index(&b, &DomainSpec::cube(3, 1.0), &SamplingPlan::with_grid(9), true).unwrap();
    assert_eq!((rep.nu_tilde, rep.q), (4, 4));
    assert!(rep.singular_points.is_empty());
}

#[test]
fn grushin_and_martinet_indices() {
    let plan = SamplingPlan::with_grid(9);
    let (b, h) = discover_basis(&sys(GRUSHIN), &DomainSpec::cube(2, 1.0), &plan, DEFAULT_STEP_CAP).unwrap();
    assert_eq!((b.s0(), h.s_max), (2, Some(2)));
    let rep = metivier_index(&b, &DomainSpec::cube(2, 1.0), &plan, true).unwrap();
    assert_eq!((rep.nu_tilde, rep.q), (3, 3));
    let (b, _) = discover_basis(&sys(MARTINET), &DomainSpec::cube(3, 1.0), &plan, DEFAULT_STEP_CAP).unwrap();
    assert_eq!(b.s0(), 3);
    let rep = metivier_index(&b, &DomainSpec::cube(3, 1.0), &plan, true).unwrap();
    assert_eq!((rep.nu_tilde, rep.q), (5, 5));
}

#[test]
fn single_field_fails_the_bracket_condition() {
    let s = sys("dim 2; X1 = D1");
    let b = enumerate_commutators(&s, 3, DEFAULT_NODE_CAP).unwrap();
    let h = hormander_check(&b, &DomainSpec::cube(2, 1.0), &SamplingPlan::with_grid(5), true).unwrap();
    assert!(!h.holds);
    assert!(h.witness.is_some());
    assert!(discover_basis(&s, &DomainSpec::cube(2, 1.0), &SamplingPlan::with_grid(5), 3).is_err());
}

#[test]
fn euclid_indices() {
    for (src, n) in [(EUCLID2, 2), (EUCLID3, 3)] {
        let s = sys(src);
        let (b, h) = discover_basis(&s, &DomainSpec::cube(n, 1.0), &SamplingPlan::with_grid(5), 4).unwrap();
        assert_eq!(h.s_max, Some(1));
        let rep = metivier_index(&b, &DomainSpec::cube(n, 1.0), &SamplingPlan::with_grid(5), true).unwrap();
        assert_eq!((rep.nu_tilde, rep.q), (n, n));
        assert_eq!(b.pointwise_nu(&vec![0.2; n], DEFAULT_ZERO_TOL).unwrap(), n);
    }
}

fn gallery() -> Vec<(VectorFieldSystem, usize)> {
    vec![
        (sys(EUCLID2), 2),
        (sys(EUCLID3), 2),
        (sys(HEISENBERG), 2),
        (sys(GRUSHIN), 2),
        (sys(MARTINET), 3),
        (sys(EXAMPLE21), 2),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bracket_antisymmetry(model in 0usize..6, i in 0usize..16, j in 0usize..16,
                            x in prop::collection::vec(-1.0f64..1.0, 3)) {
        let (s, depth) = &gallery()[model];
        let b = enumerate_commutators(s, *depth, DEFAULT_NODE_CAP).unwrap();
        let (i, j) = (i % b.len(), j % b.len());
        let (a, c) = (&b.entries()[i].field, &b.entries()[j].field);
        let p = &x[..s.dim()];
        let u = lie_bracket(a, c).unwrap().evaluate(p).unwrap();
        let v = lie_bracket(c, a).unwrap().evaluate(p).unwrap();
        for (u, v) in u.iter().zip(&v) {
            prop_assert!((u + v).abs() <= 1e-12 * u.abs().max(1.0));
        }
    }

    #[test]
    fn jacobi_identity(model in 0usize..6, i in 0usize..16, j in 0usize..16, k in 0usize..16,
                       x in prop::collection::vec(-1.0f64..1.0, 3)) {
        let (s, depth) = &gallery()[model];
        let b = enumerate_commutators(s, *depth, DEFAULT_NODE_CAP).unwrap();
        let e = b.entries();
        let (a, bb, c) = (&e[i % e.len()].field, &e[j % e.len()].field, &e[k % e.len()].field);
        let p = &x[..s.dim()];
        let t1 = lie_bracket(a, &lie_bracket(bb, c).unwrap()).unwrap().evaluate(p).unwrap();
        let t2 = lie_bracket(bb, &lie_bracket(c, a).unwrap()).unwrap().evaluate(p).unwrap();
        let t3 = lie_bracket(c, &lie_bracket(a, bb).unwrap()).unwrap().evaluate(p).unwrap();
        for q in 0..s.dim() {
            let scale = t1[q].abs().max(t2[q].abs()).max(t3[q].abs()).max(1.0);
            prop_assert!((t1[q] + t2[q] + t3[q]).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn column_swap_negates_exactly(model in 0usize..6, t in prop::collection::vec(0usize..16, 3),
                                   x in prop::collection::vec(-1.0f64..1.0, 3)) {
        let (s, depth) = &gallery()[model];
        let b = enumerate_commutators(s, *depth, DEFAULT_NODE_CAP).unwrap();
        let n = s.dim();
        let tuple: Vec<usize> = t[..n].iter().map(|i| i % b.len()).collect();
        let mut swapped = tuple.clone();
        swapped.swap(0, 1);
        let p = &x[..n];
        prop_assert_eq!(b.lambda_det(&tuple, p).unwrap(), -b.lambda_det(&swapped, p).unwrap());
    }

    #[test]
    fn lambda_is_monotone_in_r(model in 0usize..6, x in prop::collection::vec(-1.0f64..1.0, 3),
                               r1 in 1e-4f64..1.0, f in 1.0f64..10.0) {
        let (s, depth) = &gallery()[model];
        let b = enumerate_commutators(s, *depth, DEFAULT_NODE_CAP).unwrap();
        let prof = b.lambda_profile(&x[..s.dim()]).unwrap();
        prop_assert!(prof.eval(r1) <= prof.eval(r1 * f));
    }

    #[test]
    fn nu_is_between_n_and_n_times_step(model in 0usize..6, x in prop::collection::vec(-1.0f64..1.0, 3)) {
        let (s, depth) = &gallery()[model];
        let b = enumerate_commutators(s, *depth, DEFAULT_NODE_CAP).unwrap();
        let n = s.dim();
        let a = b.analyze_point(&x[..n], DEFAULT_ZERO_TOL).unwrap();
        let (nu, step) = (a.nu.unwrap(), a.step.unwrap());
        prop_assert!(n <= nu && nu <= n * step);
    }

    #[test]
    fn small_r_slope_matches_nu(model in 0usize..6, x in prop::collection::vec(-1.0f64..1.0, 3)) {
        let (s, depth) = &gallery()[model];
        let b = enumerate_commutators(s, *depth, DEFAULT_NODE_CAP).unwrap();
        let n = s.dim();
        let nu = b.pointwise_nu(&x[..n], DEFAULT_ZERO_TOL).unwrap();
        let slope = b.lambda_profile(&x[..n]).unwrap().small_r_slope();
        prop_assert!((slope - nu as f64).abs() < 0.1, "slope {} vs nu {}", slope, nu);
    }
}

#[test]
fn fixed_window_slope_away_from_singular_sets() {
    let b = enumerate_commutators(&sys(EXAMPLE21), 2, DEFAULT_NODE_CAP).unwrap();
    for p in [[0.5, 0.1], [-0.4, 0.6], [0.0, 0.3], [0.0, -0.8]] {
        let nu = b.pointwise_nu(&p, DEFAULT_ZERO_TOL).unwrap() as f64;
        let slope = b.lambda_profile(&p).unwrap().slope_on(1e-4, 1e-2, 9);
        assert!((slope - nu).abs() < 0.1, "{p:?}: {slope}");
    }
}

#[test]
fn lambda_lower_bound_over_radii() {
    // min_x Λ(x,r)/r^ν̃ stays bounded away from zero on a dyadic sweep of (0, 1].
    let b = enumerate_commutators(&sys(EXAMPLE21), 2, DEFAULT_NODE_CAP).unwrap();
    let plan = SamplingPlan::with_grid(9);
    let pts = plan.points(&DomainSpec::ball(2, 1.0), true);
    let profiles: Vec<_> = pts.iter().map(|p| b.lambda_profile(p).unwrap()).collect();
    for k in 0..30 {
        let r = 0.5f64.powi(k);
        let m = profiles.iter().map(|pr| pr.eval(r) / r.powi(3)).fold(f64::INFINITY, f64::min);
        assert!(m > 0.1, "r = {r}: {m}");
    }
}
