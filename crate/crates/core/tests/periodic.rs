mod common;

use common::{dist, rotor, system_b};
use relayflow::error::Error;
use relayflow::events::{forward_tree, CrossingOptions, TreeOptions};
use relayflow::geometry::Lambda;
use relayflow::periodic::{
    chain, continue_lambda, find_periodic, nu, orbit_distance, shooting_residual, verify_periodic, ContinuationOptions,
    PeriodicOptions, PeriodicOrbit, Seeding, SwitchingVector,
};

fn b_options() -> PeriodicOptions {
    PeriodicOptions {
        seed: 7,
        ..PeriodicOptions::default()
    }
}

fn b_orbit() -> PeriodicOrbit {
    let b = system_b();
    let found = find_periodic(&b, &b.default_lambda(), &Seeding::Auto, &b_options()).unwrap();
    found.orbits.into_iter().next().expect("an orbit")
}

#[test]
fn system_b_orbit_is_point_symmetric() {
    // x -> -x swaps the two flows and the two regions
    let b = system_b();
    let o = b_orbit();
    assert!((o.omega.t[0] - o.omega.t[1]).abs() < 1e-7, "{:?}", o.omega.t);
    let pts = chain(&b, &o.omega).unwrap();
    assert!(dist(&pts[1], &[-pts[0][0], -pts[0][1]]) < 1e-7);
    assert!(dist(&pts[2], &pts[0]) < 1e-8);
    assert!(!o.degenerate);
    assert_eq!(o.verification.crossing_indices.len(), 2);
}

#[test]
fn monodromy_determinant_matches_trace() {
    // both fields are affine with trace -1, so det = exp(-period)
    let o = b_orbit();
    let det = o.monodromy.determinant();
    let expect = (-o.period()).exp();
    assert!((det - expect).abs() < 1e-7 * expect.max(1e-3), "{det} vs {expect}");
    assert_eq!(o.verification.eigen_moduli.len(), 2);
}

#[test]
fn tree_leaves_solve_the_level_rows() {
    let b = system_b();
    let lambda = b.default_lambda();
    let root = vec![1.0 + 0.5 * 0.4f64.cos(), 0.5 * 0.4f64.sin()];
    let tree = forward_tree(&b, &lambda, &root, &TreeOptions::default()).unwrap();
    assert!(tree.leaf_count() > 0);
    for w in tree.switching_vectors() {
        let r = shooting_residual(&b, &lambda, &w).unwrap();
        assert!(r[0].abs() < 1e-10 && r[1].abs() < 1e-10, "{r:?}");
        let end = nu(&b, &lambda, &w).unwrap();
        assert!(b.region(0).level(&end, 0.0).unwrap().abs() < 1e-10);
    }
}

#[test]
fn explicit_seeds_are_deduplicated() {
    let b = system_b();
    let o = b_orbit();
    let mut shifted = o.omega.clone();
    shifted.t[0] += 1e-3;
    let seeds = vec![o.omega.clone(), o.omega.clone(), shifted];
    let found = find_periodic(&b, &b.default_lambda(), &Seeding::Explicit(seeds), &b_options()).unwrap();
    assert_eq!(found.orbits.len(), 1);
    assert_eq!(found.seeds_tried, 3);
    assert!(orbit_distance(&b, &found.orbits[0].omega, &o.omega).unwrap() < 1e-8);
}

#[test]
fn empty_explicit_seeds_do_not_converge() {
    let b = system_b();
    let res = find_periodic(&b, &b.default_lambda(), &Seeding::Explicit(Vec::new()), &b_options());
    assert!(matches!(res, Err(Error::NoConvergence(_))));
}

#[test]
fn perturbed_vector_fails_replay() {
    let b = system_b();
    let o = b_orbit();
    let mut bad = o.omega.clone();
    bad.t[0] += 0.01;
    match verify_periodic(&b, &o.lambda, &bad, &o.monodromy, &CrossingOptions::default()) {
        Err(Error::ReplayMismatch(_)) => {}
        Ok(rep) => assert!(rep.closure > 1e-3, "closure {}", rep.closure),
        Err(e) => panic!("unexpected {e}"),
    }
}

#[test]
fn continuation_to_the_same_levels_is_trivial() {
    let b = system_b();
    let o = b_orbit();
    let opts = ContinuationOptions {
        periodic: b_options(),
        ..ContinuationOptions::default()
    };
    let path = continue_lambda(&b, &o.omega, &o.lambda, &o.lambda, &opts).unwrap();
    assert_eq!(path.points.len(), 1);
    assert_eq!(path.halvings, 0);
    assert!(orbit_distance(&b, &path.endpoint.omega, &o.omega).unwrap() < 1e-8);
}

#[test]
fn continuation_stalls_on_empty_regions() {
    // f_i <= 0.25 everywhere, so there is no boundary at 0.3
    let b = system_b();
    let o = b_orbit();
    let opts = ContinuationOptions {
        steps: 4,
        periodic: b_options(),
        ..ContinuationOptions::default()
    };
    let res = continue_lambda(&b, &o.omega, &o.lambda, &Lambda::uniform(2, 0.3), &opts);
    match res {
        Err(Error::ContinuationStalled { s }) => assert!((0.0..1.0).contains(&s)),
        other => panic!("unexpected {:?}", other.map(|p| p.points.len())),
    }
}

#[test]
fn open_chain_closes_through_the_projection() {
    let b = system_b();
    let lambda = Lambda(vec![0.0, 0.0, 0.01]);
    let found = find_periodic(&b, &lambda, &Seeding::Auto, &b_options()).unwrap();
    let o = found.orbits.first().expect("an orbit");
    assert!(o.residual_norm <= 1e-8);
    assert!(o.verification.closure < 1e-6);
    let pts = chain(&b, &o.omega).unwrap();
    assert!(b.region(0).level(&pts[0], 0.0).unwrap().abs() < 1e-9);
    assert!(b.region(1).level(&pts[1], 0.0).unwrap().abs() < 1e-9);
    assert!(b.region(0).level(&pts[2], 0.01).unwrap().abs() < 1e-9);
}

#[test]
fn orbits_move_with_the_levels() {
    // raising lambda shrinks both regions, so the switch points move apart
    let b = system_b();
    let radius = |o: &PeriodicOrbit| dist(&o.chain[0], &[1.0, 0.0]);
    let at = |v: f64| {
        let found = find_periodic(&b, &Lambda::uniform(2, v), &Seeding::Auto, &b_options()).unwrap();
        found.orbits.into_iter().next().expect("an orbit")
    };
    let (lo, hi) = (at(0.0), at(0.05));
    assert!(radius(&hi) < radius(&lo));
    assert!((radius(&hi) - 0.2f64.sqrt()).abs() < 1e-8);
    assert!((radius(&lo) - 0.5).abs() < 1e-8);
}

#[test]
fn rotor_orbits_lie_on_circles() {
    let r = rotor();
    let opts = PeriodicOptions {
        seeds: 4,
        window_scale: 2.0,
        ..PeriodicOptions::default()
    };
    let found = find_periodic(&r, &r.default_lambda(), &Seeding::Auto, &opts).unwrap();
    assert!(!found.orbits.is_empty());
    for o in &found.orbits {
        let radius = |x: &[f64]| x[0].hypot(x[1]);
        let r0 = radius(&o.chain[0]);
        assert!(o.chain.iter().all(|x| (radius(x) - r0).abs() < 1e-8));
        assert!(o.omega.t.iter().all(|&t| t > 0.0 && t < 2.0 * std::f64::consts::PI));
    }
}

#[test]
fn switching_vector_round_trip() {
    let w = SwitchingVector::new(vec![0.5, -0.25], vec![1.0, 2.0]);
    let v = w.to_vec();
    assert_eq!(v, vec![0.5, -0.25, 1.0, 2.0]);
    assert_eq!(SwitchingVector::from_slice(&v, 2), w);
    assert_eq!(w.period(), 3.0);
}
