mod common;

use std::f64::consts::PI;

use common::{dist, rotor, system_b};
use proptest::prelude::*;
use relayflow::error::Error;
use relayflow::events::{
    backward_tree, find_crossings, forward_tree, transversality, winding_degree, CrossingOptions, Orientation,
    TreeOptions,
};
use relayflow::expr::parse;
use relayflow::periodic::chain;

fn rotate(x: &[f64], t: f64) -> Vec<f64> {
    let (s, c) = t.sin_cos();
    vec![c * x[0] - s * x[1], s * x[0] + c * x[1]]
}

/// Closed form for the spiral of system B around `(cx, 0)`.
fn spiral(cx: f64, x: &[f64], t: f64) -> Vec<f64> {
    let r = rotate(&[x[0] - cx, x[1]], t);
    let d = (-0.5 * t).exp();
    vec![cx + d * r[0], d * r[1]]
}

fn boundary_point(center: f64, radius: f64, angle: f64) -> Vec<f64> {
    vec![center + radius * angle.cos(), radius * angle.sin()]
}

#[test]
fn rotor_flow_is_a_rotation() {
    let r = rotor();
    for k in 0..=8 {
        let t = k as f64 * 0.7;
        for x in [[1.3, 0.0], [-0.2, 2.1], [0.05, -0.4]] {
            let y = r.flow(1).flow_map(t, &x).unwrap();
            assert!(dist(&y, &rotate(&x, t)) < 1e-8, "t = {t}: {y:?}");
            let (z, jac) = r.flow(2).flow_jacobian(t, &x).unwrap();
            assert!(dist(&z, &rotate(&x, t)) < 1e-8);
            let (s, c) = t.sin_cos();
            let exact = nalgebra::DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
            assert!((jac - exact).norm() < 1e-8);
        }
    }
}

#[test]
fn system_b_flows_match_closed_form() {
    let b = system_b();
    for (k, cx) in [(1, -1.0), (2, 1.0)] {
        for t in [0.0, 0.3, 1.7, 4.0] {
            let x = [0.4, -1.1];
            let y = b.flow(k).flow_map(t, &x).unwrap();
            assert!(dist(&y, &spiral(cx, &x, t)) < 1e-8, "flow {k} t {t}");
            let back = b.flow(k).flow_map(-t, &y).unwrap();
            assert!(dist(&back, &x) < 1e-8);
        }
    }
}

#[test]
fn trajectory_interpolant_matches_flow_map() {
    let b = system_b();
    let x = [0.0, 1.0];
    let traj = b.flow(1).trajectory(3.0, &x).unwrap();
    for k in 1..=30 {
        let t = 0.1 * k as f64;
        let a = traj.eval(t).unwrap();
        assert!(dist(&a, &spiral(-1.0, &x, t)) < 1e-7);
    }
    assert!(matches!(traj.eval(3.5), Err(Error::OutOfSpan { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flow_composes(x0 in -2.0f64..2.0, x1 in -2.0f64..2.0, s in 0.0f64..2.0, t in 0.0f64..2.0) {
        let b = system_b();
        let f = b.flow(2);
        let a = f.flow_map(s + t, &[x0, x1]).unwrap();
        let c = f.flow_map(t, &f.flow_map(s, &[x0, x1]).unwrap()).unwrap();
        prop_assert!(dist(&a, &c) < 1e-8 * (1.0 + a[0].abs().max(a[1].abs())));
    }
}

#[test]
fn rotor_crossing_directions_alternate() {
    let r = rotor();
    let ev = find_crossings(r.flow(1), r.region(1), 0.0, &[1.3, 0.0], 2.0 * PI, Orientation::Forward, &CrossingOptions::default())
        .unwrap();
    assert_eq!(ev.len(), 2);
    assert_eq!((ev[0].direction, ev[1].direction), (1, -1));
    for e in &ev {
        assert!(r.region(1).level(&e.point, 0.0).unwrap().abs() < 1e-10);
        assert!(e.margin > 1e-3);
        let tv = transversality(r.flow(1), r.region(1), &e.point).unwrap();
        assert!((tv.abs() - e.margin).abs() < 1e-9);
    }

    // backward from the same point meets the surface at the mirrored times
    let back = find_crossings(r.flow(1), r.region(1), 0.0, &[1.3, 0.0], 2.0 * PI, Orientation::Backward, &CrossingOptions::default())
        .unwrap();
    assert_eq!(back.len(), 2);
    for (f, b) in ev.iter().zip(&back) {
        assert!((f.t - b.t).abs() < 1e-8);
        assert!(dist(&f.point, &[b.point[0], -b.point[1]]) < 1e-8);
    }
}

#[test]
fn tangent_orbit_is_degenerate() {
    // the circle of radius 1.3 touches dM_0 at (1.3, 0)
    let r = rotor();
    let res = find_crossings(r.flow(1), r.region(0), 0.0, &[0.0, 1.3], 2.0 * PI, Orientation::Forward, &CrossingOptions::default());
    assert!(
        matches!(res, Err(Error::DegenerateCrossing { .. }) | Err(Error::UnresolvedCrossing { .. })),
        "{res:?}"
    );
}

#[test]
fn forward_tree_leaves_land_on_the_last_surface() {
    let r = rotor();
    let lambda = r.default_lambda();
    let opts = TreeOptions {
        window_scale: 2.0,
        ..TreeOptions::default()
    };
    let root = boundary_point(1.0, 0.3, 2.0);
    let tree = forward_tree(&r, &lambda, &root, &opts).unwrap();
    assert!(tree.is_consistent());
    assert!(tree.leaf_count() > 0);
    for w in tree.switching_vectors() {
        let pts = chain(&r, &w).unwrap();
        assert!(r.region(1).level(&pts[1], 0.0).unwrap().abs() < 1e-10);
        assert!(r.region(0).level(&pts[2], 0.0).unwrap().abs() < 1e-10);
        // a rotation returns to the same circle through the origin
        let radius = |x: &[f64]| x[0].hypot(x[1]);
        assert!((radius(&pts[2]) - radius(&root)).abs() < 1e-8);
    }
}

#[test]
fn backward_tree_chains_end_at_the_root() {
    let b = system_b();
    let lambda = b.default_lambda();
    let root = boundary_point(1.0, 0.5, 2.5);
    let tree = backward_tree(&b, &lambda, &root, &TreeOptions::default()).unwrap();
    assert_eq!(tree.orientation, Orientation::Backward);
    for w in tree.switching_vectors() {
        let pts = chain(&b, &w).unwrap();
        assert!(b.region(0).level(&pts[0], 0.0).unwrap().abs() < 1e-10);
        assert!(dist(&pts[2], &root) < 1e-7, "{:?} vs {root:?}", pts[2]);
    }
}

#[test]
fn tree_root_must_lie_on_its_surface() {
    let b = system_b();
    let res = forward_tree(&b, &b.default_lambda(), &[0.0, 0.0], &TreeOptions::default());
    assert!(matches!(res, Err(Error::InvalidInput(_))), "{res:?}");
}

#[test]
fn winding_degrees_of_power_maps() {
    let map = |u: &str, v: &str| [parse(u, 2).unwrap(), parse(v, 2).unwrap()];
    assert_eq!(winding_degree(&map("x1", "x2"), 64).unwrap(), 1);
    assert_eq!(winding_degree(&map("x1^2 - x2^2", "2*x1*x2"), 64).unwrap(), 2);
    assert_eq!(winding_degree(&map("x1", "-x2"), 64).unwrap(), -1);
    assert_eq!(winding_degree(&map("x1 + 3", "x2"), 64).unwrap(), 0);
    assert!(matches!(winding_degree(&map("x1 - 1", "x2"), 64), Err(Error::VanishingImage { .. })));
}
