use std::sync::OnceLock;

use hormander_core::lie::{discover_basis, SamplingPlan};
use hormander_core::metric::*;
use hormander_core::{parse_system, DomainSpec, VectorFieldSystem};
use proptest::prelude::*;

const EUCLID2: &str = "dim 2; X1 = D1; X2 = D2";
const GRUSHIN: &str = "dim 2; X1 = D1; X2 = x1*D2";
const HEISENBERG: &str = "dim 3; X1 = D1 - (x2/2)*D3; X2 = D2 + (x1/2)*D3";

fn sys(src: &str) -> VectorFieldSystem {
    parse_system(src).unwrap()
}

fn unit_square() -> DomainSpec {
    DomainSpec::new(vec![0.0, 0.0], vec![1.0, 1.0], "unit").unwrap()
}

fn euclid() -> &'static DistanceOracle {
    static O: OnceLock<DistanceOracle> = OnceLock::new();
    O.get_or_init(|| DistanceOracle::build(&sys(EUCLID2), &unit_square(), &OracleParams::with_h(1.0 / 32.0), 1).unwrap())
}

fn grushin() -> &'static DistanceOracle {
    static O: OnceLock<DistanceOracle> = OnceLock::new();
    O.get_or_init(|| {
        DistanceOracle::build(&sys(GRUSHIN), &DomainSpec::cube(2, 1.0), &OracleParams::with_h(1.0 / 16.0), 2).unwrap()
    })
}

#[test]
fn euclidean_example_distance() {
    let (d, err) = euclid().distance(&[0.0, 0.0], &[0.6, 0.8]).unwrap();
    assert!((d - 1.0).abs() <= 2.0 * err, "{d}");
    assert!((d - 1.0).abs() <= 1e-9, "{d}");
}

#[test]
fn euclidean_edges_are_segment_lengths() {
    let o = euclid();
    let lat = o.lattice();
    for (u, v, w) in o.edges() {
        let (a, b) = (lat.node(u as usize), lat.node(v as usize));
        let len = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        assert!((w - len).abs() <= 1e-10, "{w} vs {len}");
    }
}

#[test]
fn lattice_distance_without_shortcuts_is_close_to_euclidean() {
    let mut p = OracleParams::with_h(1.0 / 32.0);
    p.shortcut = false;
    let o = DistanceOracle::build(&sys(EUCLID2), &unit_square(), &p, 1).unwrap();
    for (x, y) in [([0.1, 0.1], [0.9, 0.35]), ([0.5, 0.05], [0.52, 0.97]), ([0.2, 0.8], [0.8, 0.2])] {
        let d = o.distance(&x, &y).unwrap().0;
        let exact = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
        assert!(d >= exact - 1e-12 && d <= 1.03 * exact, "{d} vs {exact}");
    }
}

#[test]
fn grushin_horizontal_distance_is_one() {
    let (d, err) = grushin().distance(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
    assert!((d - 1.0).abs() <= 2.0 * err, "{d}");
}

#[test]
fn grushin_vertical_distance_matches_closed_form() {
    // Geodesic from the origin: x1 = sin(λt)/λ, returning to x1 = 0 at
    // t = π/λ with x2 = π/(2λ²), so d((0,0),(0,y)) = sqrt(2π|y|).
    let g = sys(GRUSHIN);
    let dom = DomainSpec::cube(2, 1.0);
    let basis = discover_basis(&g, &dom, &SamplingPlan::with_grid(5), 4).unwrap().0;
    let lp = LocalParams::for_dim(2);
    let mut ds = Vec::new();
    for eps in [0.01, 0.04] {
        let (d, _) = local_distance(&g, &basis, &dom, &[0.0, 0.0], &[0.0, eps], &lp).unwrap();
        let exact = (2.0 * std::f64::consts::PI * eps).sqrt();
        assert!((d / exact - 1.0).abs() <= 0.05, "{d} vs {exact}");
        ds.push(d);
    }
    let ratio = ds[1] / ds[0];
    assert!((1.8..=2.2).contains(&ratio), "{ratio}");
}

#[test]
fn grushin_geodesic_leaves_the_singular_line() {
    let o = grushin();
    let path = o.approximate_geodesic(&[0.0, -0.5], &[0.0, 0.5]).unwrap();
    let excursion = path.iter().map(|p| p[0].abs()).fold(0.0, f64::max);
    assert!(excursion >= 2.0 * o.h(), "{excursion}");
}

#[test]
fn heisenberg_flow_of_first_control() {
    let h = sys(HEISENBERG);
    let flow = Flow::new(&h, 4);
    let mut w = FlowWork::default();
    let mut out = Vec::new();
    for tau in [0.01, 0.1, 0.5] {
        assert!(flow.flow(&[0.0, 0.0, 0.0], &[tau, 0.0], &mut w, &mut out));
        assert!((out[0] - tau).abs() <= 1e-15 && out[1] == 0.0 && out[2] == 0.0, "{out:?}");
    }
}

#[test]
fn heisenberg_geodesic_to_vertical_point_moves_horizontally() {
    let h = sys(HEISENBERG);
    let o = DistanceOracle::build(&h, &DomainSpec::cube(3, 0.5), &OracleParams::with_h(1.0 / 8.0), 2).unwrap();
    assert_eq!(o.component_count(), 1);
    let path = o.approximate_geodesic(&[0.0, 0.0, -0.1], &[0.0, 0.0, 0.1]).unwrap();
    let excursion = path.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max);
    assert!(excursion >= o.h(), "{excursion}");
}

#[test]
fn single_field_graph_is_disconnected() {
    let s = sys("dim 2; X1 = D1");
    let o = DistanceOracle::build(&s, &DomainSpec::cube(2, 1.0), &OracleParams::with_h(0.25), 1).unwrap();
    assert_eq!(o.component_count(), 9);
    assert!(matches!(o.distance(&[0.0, -1.0], &[0.0, 1.0]), Err(MetricError::ResolutionInsufficient)));
}

#[test]
fn grushin_graph_is_connected() {
    assert_eq!(grushin().component_count(), 1);
}

#[test]
fn coarse_lattices_are_rejected() {
    let r = DistanceOracle::build(&sys(EUCLID2), &unit_square(), &OracleParams::with_h(0.2), 1);
    assert!(matches!(r, Err(MetricError::TooCoarse { .. })));
    assert!(matches!(euclid().distance(&[0.0, 0.0], &[1.5, 0.0]), Err(MetricError::OutsideDomain(_))));
}

#[test]
fn refinement_is_consistent() {
    let g = sys(GRUSHIN);
    let dom = DomainSpec::cube(2, 1.0);
    let coarse = grushin();
    let fine = DistanceOracle::build(&g, &dom, &OracleParams::with_h(1.0 / 32.0), 2).unwrap();
    let mut rng = hormander_core::rng::stream(3, 0);
    let mut pick = || {
        use rand::Rng;
        vec![rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9)]
    };
    let calib: Vec<_> = (0..10).map(|_| (pick(), pick())).collect();
    let c2 = calibrate_error(coarse, &fine, &calib).unwrap();
    let coarse = coarse.clone().with_error_model(2.0, c2);
    let fine = fine.with_error_model(2.0, c2);
    let mut ok = 0;
    let total = 40;
    for _ in 0..total {
        let (x, y) = (pick(), pick());
        let (a, ea) = coarse.distance(&x, &y).unwrap();
        let (b, eb) = fine.distance(&x, &y).unwrap();
        if (a - b).abs() <= ea + eb {
            ok += 1;
        }
    }
    assert!(ok as f64 >= 0.95 * total as f64, "{ok}/{total}");
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.95f64..0.95, 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn metric_axioms_on_grushin(x in point(), y in point(), z in point()) {
        let o = grushin();
        let (dxy, e) = o.distance(&x, &y).unwrap();
        let dyx = o.distance(&y, &x).unwrap().0;
        let dyz = o.distance(&y, &z).unwrap().0;
        let dxz = o.distance(&x, &z).unwrap().0;
        prop_assert!((dxy - dyx).abs() <= 2.0 * e, "{} {}", dxy, dyx);
        prop_assert!(dxz <= dxy + dyz + 2.0 * e);
        prop_assert_eq!(o.distance(&x, &x).unwrap().0, 0.0);
    }

    #[test]
    fn euclidean_pairs_within_two_percent(x in prop::collection::vec(0.0f64..1.0, 2), y in prop::collection::vec(0.0f64..1.0, 2)) {
        let exact = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
        prop_assume!(exact > 0.05);
        let d = euclid().distance(&x, &y).unwrap().0;
        prop_assert!((d - exact).abs() <= 0.02 * exact);
    }
}
