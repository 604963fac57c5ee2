mod common;

use std::f64::consts::PI;

use common::{dist, rotor, system_b};
use relayflow::error::Error;
use relayflow::relay::{
    accessible_set, check_connected, omega_limit_estimate, simulate, PointCloud, ReachOptions, SimulateOptions,
    StopCriterion, SwitchPolicy,
};

fn switches(n: usize) -> StopCriterion {
    StopCriterion {
        max_switches: Some(n),
        t_max: None,
    }
}

#[test]
fn rotor_cycles_take_a_full_turn() {
    let r = rotor();
    let q = simulate(&r, &r.default_lambda(), &[0.0, 1.0], 1, &SwitchPolicy::FirstHit, switches(7), &SimulateOptions::default())
        .unwrap();
    assert_eq!(q.switches.len(), 7);
    // once on dM_0 the relay is at the entry point of M_0, and each later
    // cycle is one whole rotation
    for pair in q.segments[1..].chunks(2).filter(|c| c.len() == 2) {
        let turn = pair[0].duration + pair[1].duration;
        assert!((turn - 2.0 * PI).abs() < 1e-7, "cycle time {turn}");
    }
    for w in q.switches.windows(2) {
        assert_eq!(w[1].from_mode, w[0].to_mode);
        assert!(w[1].time > w[0].time);
    }
    assert!(q.replay_error(&r).unwrap() < 1e-9);
    assert!((q.total_time() - q.switches.last().unwrap().time).abs() < 1e-12);
}

#[test]
fn nth_hit_takes_the_later_crossing() {
    let r = rotor();
    let q = simulate(&r, &r.default_lambda(), &[1.3, 0.0], 1, &SwitchPolicy::NthHit(2), switches(1), &SimulateOptions::default())
        .unwrap();
    let t1 = (-2.53f64 / 2.6).acos();
    let sw = &q.switches[0];
    assert_eq!(sw.crossing_index, 1);
    assert!((sw.time - (2.0 * PI - t1)).abs() < 1e-7, "{}", sw.time);
}

#[test]
fn random_hits_are_reproducible() {
    let b = system_b();
    let lambda = b.default_lambda();
    let run = |seed| {
        simulate(&b, &lambda, &[0.0, 1.0], 1, &SwitchPolicy::RandomHit(seed), switches(6), &SimulateOptions::default())
            .unwrap()
    };
    let (a, c) = (run(3), run(3));
    assert_eq!(a, c);
    assert!(a.replay_error(&b).unwrap() < 1e-9);
}

#[test]
fn time_limit_stops_mid_segment() {
    let b = system_b();
    let stop = StopCriterion {
        max_switches: None,
        t_max: Some(5.0),
    };
    let q = simulate(&b, &b.default_lambda(), &[0.0, 1.0], 1, &SwitchPolicy::FirstHit, stop, &SimulateOptions::default())
        .unwrap();
    assert!((q.total_time() - 5.0).abs() < 1e-12);
    let path = q.sample_path(&b, 0.05).unwrap();
    assert!(path.windows(2).all(|w| w[1].0 >= w[0].0));
    assert!(dist(&path.last().unwrap().2, q.end_point()) < 1e-12);
}

#[test]
fn invalid_runs_are_rejected() {
    let r = rotor();
    let lambda = r.default_lambda();
    let opts = SimulateOptions::default();
    let on_surface = simulate(&r, &lambda, &[-0.6, 0.0], 1, &SwitchPolicy::FirstHit, switches(2), &opts);
    assert!(matches!(on_surface, Err(Error::StartOnBoundary(_))), "{on_surface:?}");
    let branching = simulate(&r, &lambda, &[0.0, 1.0], 1, &SwitchPolicy::Branching(4), switches(2), &opts);
    assert!(matches!(branching, Err(Error::InvalidInput(_))));
    let zeroth = simulate(&r, &lambda, &[0.0, 1.0], 1, &SwitchPolicy::NthHit(0), switches(2), &opts);
    assert!(matches!(zeroth, Err(Error::InvalidInput(_))));
    let unbounded = simulate(&r, &lambda, &[0.0, 1.0], 1, &SwitchPolicy::FirstHit, StopCriterion::default(), &opts);
    assert!(matches!(unbounded, Err(Error::InvalidInput(_))));
    // the circle of radius 2 never meets dM_1
    let missing = simulate(&r, &lambda, &[0.0, 2.0], 1, &SwitchPolicy::FirstHit, switches(2), &opts);
    assert!(matches!(missing, Err(Error::NoCrossingWithinHorizon { mode: 1, .. })), "{missing:?}");
}

#[test]
fn accessible_sets_grow_with_depth() {
    let b = system_b();
    let lambda = b.default_lambda();
    let at = |depth| {
        let opts = ReachOptions {
            depth,
            breadth: 16,
            ..ReachOptions::default()
        };
        accessible_set(&b, &lambda, &[0.0, 1.0], 1, &opts).unwrap()
    };
    let (a1, a2, a3) = (at(1), at(2), at(3));
    assert!(a1.len() < a2.len() && a2.len() < a3.len());
    assert!(a1.is_subset_of(&a2) && a2.is_subset_of(&a3));
    assert!(!a3.is_subset_of(&a2));
    assert!(a3.arcs.iter().all(|arc| arc.level <= 3 && arc.path.len() == arc.level));
}

#[test]
fn omega_estimates_are_nested() {
    let b = system_b();
    let lambda = b.default_lambda();
    let opts = ReachOptions {
        depth: 4,
        breadth: 16,
        ..ReachOptions::default()
    };
    let clouds: Vec<PointCloud> = (0..=4)
        .map(|m| omega_limit_estimate(&b, &lambda, &[0.0, 1.0], 1, m, &opts).unwrap())
        .collect();
    for w in clouds.windows(2) {
        assert!(w[1].is_subset_of(&w[0]));
        assert!(w[1].arcs.iter().all(|a| a.level >= w[0].arcs.iter().map(|a| a.level).min().unwrap()));
    }
    let full = accessible_set(&b, &lambda, &[0.0, 1.0], 1, &opts).unwrap();
    assert_eq!(clouds[0], full);
    assert!(omega_limit_estimate(&b, &lambda, &[0.0, 1.0], 1, 5, &opts).is_err());
}

#[test]
fn connectivity_counts_components() {
    let line = |y: f64| (0..20).map(move |i| vec![0.05 * i as f64, y]);
    let cloud = PointCloud {
        dim: 2,
        spacing: 0.05,
        points: line(0.0).chain(line(1.0)).collect(),
        edges: Vec::new(),
        arcs: Vec::new(),
        pruned: 0,
    };
    assert_eq!(check_connected(&cloud, 0.06), (false, 2));
    assert_eq!(check_connected(&cloud, 0.04), (false, 40));
    assert_eq!(check_connected(&cloud, 1.01), (true, 1));
    let mut joined = cloud.clone();
    joined.edges.push((0, 20));
    assert_eq!(check_connected(&joined, 0.06), (true, 1));
}
