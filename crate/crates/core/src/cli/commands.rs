use serde::Serialize;
use serde_json::{json, Value};

use super::output::{csv, json as to_json, num};
use super::{usage, Command, Common, Failure, Outcome, EXIT_HYPOTHESIS, EXIT_OK};
use crate::events::{find_crossings, parity_survey, CrossingOptions, Orientation, TreeOptions};
use crate::geometry::{validate_system, Lambda, RelaySystem, ValidationOptions};
use crate::periodic::{
    continue_lambda, find_periodic, orbit_distance, ContinuationOptions, PeriodicOptions,
    PeriodicOrbit, Seeding, SwitchingVector, VerificationReport,
};
use crate::relay::{
    accessible_set, check_connected, omega_limit_estimate, simulate, ReachOptions,
    SimulateOptions, StopCriterion, SwitchEvent, SwitchPolicy,
};

fn parse_vector(text: &str, what: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| usage(format!("{what}: cannot parse '{}' as a number", t.trim())))
        })
        .collect()
}

fn lambda_arg(s: &RelaySystem, text: Option<&str>) -> Result<Lambda, Failure> {
    let lambda = match text {
        Some(t) => Lambda(parse_vector(t, "--lambda")?),
        None => s.default_lambda(),
    };
    s.check_lambda(&lambda)?;
    Ok(lambda)
}

fn point_arg(s: &RelaySystem, text: &str) -> Result<Vec<f64>, Failure> {
    let x = parse_vector(text, "--x0")?;
    s.check_point(&x)?;
    Ok(x)
}

fn policy_arg(text: &str, seed: u64) -> Result<SwitchPolicy, Failure> {
    match text {
        "first" => Ok(SwitchPolicy::FirstHit),
        "random" => Ok(SwitchPolicy::RandomHit(seed)),
        other => other
            .strip_prefix("nth:")
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .map(SwitchPolicy::NthHit)
            .ok_or_else(|| usage(format!("unknown policy '{other}' (first | nth:N | random)"))),
    }
}

fn coord_header(n: usize) -> impl Iterator<Item = String> {
    (1..=n).map(|i| format!("x{i}"))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

pub(crate) fn dispatch(cmd: &Command, s: &RelaySystem) -> Result<Outcome, Failure> {
    match cmd {
        Command::Validate { common, samples, grid } => validate(s, common, *samples, *grid),
        Command::Simulate {
            common,
            x0,
            k0,
            policy,
            max_switches,
            t_max,
            dt,
        } => {
            let lambda = lambda_arg(s, common.lambda.as_deref())?;
            let x0 = point_arg(s, x0)?;
            let policy = policy_arg(policy, common.seed)?;
            let stop = StopCriterion {
                max_switches: Some(*max_switches),
                t_max: *t_max,
            };
            let dt = dt.unwrap_or_else(|| {
                s.flows().iter().map(|f| f.horizon).fold(f64::INFINITY, f64::min) / 200.0
            });
            simulate_cmd(s, &lambda, &x0, *k0, &policy, stop, dt)
        }
        Command::Crossings {
            common,
            flow,
            region,
            x0,
            window,
            backward,
        } => {
            let lambda = lambda_arg(s, common.lambda.as_deref())?;
            let x0 = point_arg(s, x0)?;
            crossings(s, &lambda, *flow, *region, &x0, *window, *backward)
        }
        Command::FindPeriodic {
            common,
            seeds,
            continue_from,
            window_factor,
        } => {
            let lambda = lambda_arg(s, common.lambda.as_deref())?;
            let from = continue_from
                .as_deref()
                .map(|t| lambda_arg(s, Some(t)))
                .transpose()?;
            let opts = PeriodicOptions {
                seeds: *seeds,
                seed: common.seed,
                window_scale: *window_factor,
                ..PeriodicOptions::default()
            };
            periodic(s, &lambda, from.as_ref(), &opts)
        }
        Command::DegreeCheck { common, samples } => {
            let lambda = lambda_arg(s, common.lambda.as_deref())?;
            degree(s, &lambda, *samples, common.seed)
        }
        Command::Accessible {
            common,
            x0,
            k0,
            depth,
            breadth,
            discard,
        } => {
            let lambda = lambda_arg(s, common.lambda.as_deref())?;
            let x0 = point_arg(s, x0)?;
            let opts = ReachOptions {
                depth: *depth,
                breadth: *breadth,
                ..ReachOptions::default()
            };
            accessible(s, &lambda, &x0, *k0, *discard, &opts)
        }
    }
}

fn validate(s: &RelaySystem, common: &Common, samples: usize, grid: usize) -> Result<Outcome, Failure> {
    let lambda = lambda_arg(s, common.lambda.as_deref())?;
    let opts = ValidationOptions {
        samples,
        grid,
        seed: common.seed,
        ..ValidationOptions::default()
    };
    let report = validate_system(s, &lambda, &opts)?;
    let passed = report.passed();
    let mut metrics = to_value(&report);
    metrics["failures"] = to_value(&report.failures());
    metrics["passed"] = Value::Bool(passed);
    Ok(Outcome {
        label: if passed { "passed" } else { "hypotheses violated" }.to_string(),
        code: if passed { EXIT_OK } else { EXIT_HYPOTHESIS },
        files: vec![("validation.json".into(), to_json(&metrics))],
        metrics,
    })
}

fn simulate_cmd(
    s: &RelaySystem,
    lambda: &Lambda,
    x0: &[f64],
    k0: usize,
    policy: &SwitchPolicy,
    stop: StopCriterion,
    dt: f64,
) -> Result<Outcome, Failure> {
    let q = simulate(s, lambda, x0, k0, policy, stop, &SimulateOptions::default())?;
    let rows = q.sample_path(s, dt)?;
    let header: Vec<String> = ["t".to_string(), "mode".to_string()]
        .into_iter()
        .chain(coord_header(s.dim()))
        .collect();
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|(t, m, x)| {
            [num(*t), m.to_string()]
                .into_iter()
                .chain(x.iter().map(|v| num(*v)))
                .collect()
        })
        .collect();
    let metrics = json!({
        "switches": q.switches.len(),
        "total_time": q.total_time(),
        "samples": rows.len(),
        "end_point": q.end_point(),
        "replay_error": q.replay_error(s)?,
        "interior_visits": q.interior_visits(s, lambda, 32)?,
    });
    Ok(Outcome {
        label: format!("{} switches", q.switches.len()),
        code: EXIT_OK,
        metrics,
        files: vec![
            ("trajectory.csv".into(), csv(&header, &cells)),
            ("switches.json".into(), to_json(&q.switches)),
        ],
    })
}

fn crossings(
    s: &RelaySystem,
    lambda: &Lambda,
    flow: usize,
    region: usize,
    x0: &[f64],
    window: f64,
    backward: bool,
) -> Result<Outcome, Failure> {
    let p = s.modes();
    if !(1..=p).contains(&flow) {
        return Err(usage(format!("--flow must be in 1..={p}")));
    }
    if region > p {
        return Err(usage(format!("--region must be in 0..={p}")));
    }
    let orientation = if backward {
        Orientation::Backward
    } else {
        Orientation::Forward
    };
    let events = find_crossings(
        s.flow(flow),
        s.region(region),
        lambda.get(region),
        x0,
        window,
        orientation,
        &CrossingOptions::default(),
    )?;
    let metrics = json!({
        "count": events.len(),
        "parity": events.len() % 2,
        "times": events.iter().map(|e| e.t).collect::<Vec<_>>(),
        "min_margin": events.iter().map(|e| e.margin).fold(f64::INFINITY, f64::min),
    });
    Ok(Outcome {
        label: format!("{} crossings", events.len()),
        code: EXIT_OK,
        metrics,
        files: vec![("crossings.json".into(), to_json(&events))],
    })
}

#[derive(Serialize)]
struct OrbitFile<'a> {
    omega: &'a SwitchingVector,
    period: f64,
    lambda: &'a [f64],
    residual_norm: f64,
    chain: &'a [Vec<f64>],
    margins: &'a [f64],
    monodromy: Vec<Vec<f64>>,
    condition_number: f64,
    degenerate: bool,
    closure: f64,
    crossing_indices: &'a [usize],
    eigen_moduli: &'a [f64],
    switches: &'a [SwitchEvent],
}

fn orbit_file(o: &PeriodicOrbit) -> Vec<u8> {
    let v: &VerificationReport = &o.verification;
    let m = &o.monodromy;
    let file = OrbitFile {
        omega: &o.omega,
        period: o.period(),
        lambda: o.lambda.values(),
        residual_norm: o.residual_norm,
        chain: &o.chain,
        margins: &o.margins,
        monodromy: (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect(),
        condition_number: o.condition_number,
        degenerate: o.degenerate,
        closure: v.closure,
        crossing_indices: &v.crossing_indices,
        eigen_moduli: &v.eigen_moduli,
        switches: &v.quasisolution.switches,
    };
    to_json(&file)
}

/// Distinct failure messages with their counts, sorted by message.
fn failure_counts(failures: &[String]) -> Value {
    let mut counts = std::collections::BTreeMap::new();
    for f in failures {
        *counts.entry(f.clone()).or_insert(0usize) += 1;
    }
    to_value(&counts)
}

fn periodic(
    s: &RelaySystem,
    lambda: &Lambda,
    from: Option<&Lambda>,
    opts: &PeriodicOptions,
) -> Result<Outcome, Failure> {
    let start = from.unwrap_or(lambda);
    let search = find_periodic(s, start, &Seeding::Auto, opts)?;
    let mut orbits = Vec::new();
    let mut stalled = Vec::new();
    match from {
        None => orbits = search.orbits,
        Some(f) => {
            let copts = ContinuationOptions {
                periodic: opts.clone(),
                ..ContinuationOptions::default()
            };
            for o in &search.orbits {
                match continue_lambda(s, &o.omega, f, lambda, &copts) {
                    Ok(path) => {
                        let end = path.endpoint;
                        let mut dup = false;
                        for k in &orbits {
                            let k: &PeriodicOrbit = k;
                            if orbit_distance(s, &k.omega, &end.omega)? < opts.dedup {
                                dup = true;
                                break;
                            }
                        }
                        if !dup {
                            orbits.push(end);
                        }
                    }
                    Err(e) => stalled.push(e.to_string()),
                }
            }
            if orbits.is_empty() {
                return Err(Failure {
                    code: super::EXIT_NUMERIC,
                    message: format!(
                        "continuation failed for every orbit: {}",
                        stalled.first().map(String::as_str).unwrap_or("no orbits")
                    ),
                });
            }
        }
    }
    let metrics = json!({
        "orbits": orbits.len(),
        "seeds_tried": search.seeds_tried,
        "seed_failures": failure_counts(&search.failures),
        "continuation_failures": stalled,
        "periods": orbits.iter().map(|o| o.period()).collect::<Vec<_>>(),
        "residuals": orbits.iter().map(|o| o.residual_norm).collect::<Vec<_>>(),
        "closures": orbits.iter().map(|o| o.verification.closure).collect::<Vec<_>>(),
        "degenerate": orbits.iter().map(|o| o.degenerate).collect::<Vec<_>>(),
    });
    let files = orbits
        .iter()
        .enumerate()
        .map(|(i, o)| (format!("orbit_{}.json", i + 1), orbit_file(o)))
        .collect();
    Ok(Outcome {
        label: format!("{} orbit(s)", orbits.len()),
        code: EXIT_OK,
        metrics,
        files,
    })
}

fn degree(s: &RelaySystem, lambda: &Lambda, samples: usize, seed: u64) -> Result<Outcome, Failure> {
    let survey = parity_survey(s, lambda, samples, seed, &TreeOptions::default())?;
    let header: Vec<String> = ["map".to_string(), "index".to_string()]
        .into_iter()
        .chain(coord_header(s.dim()))
        .chain(["leaves".to_string(), "parity".to_string()])
        .collect();
    let mut rows = Vec::new();
    for (name, list) in [("nu0", &survey.nu0), ("nu1", &survey.nu1)] {
        for (i, sp) in list.iter().enumerate() {
            let mut r = vec![name.to_string(), i.to_string()];
            r.extend(sp.point.iter().map(|v| num(*v)));
            r.push(sp.leaves.map_or("degenerate".into(), |l| l.to_string()));
            r.push(sp.parity.map_or("".into(), |p| p.to_string()));
            rows.push(r);
        }
    }
    let ok = survey.parity_nu0.is_some() && survey.parity_nu1.is_some() && survey.degenerate_rate < 0.2;
    let metrics = json!({
        "samples": rows.len(),
        "parity_nu0": survey.parity_nu0,
        "parity_nu1": survey.parity_nu1,
        "degenerate_rate": survey.degenerate_rate,
        "leaves_nu0": survey.nu0.iter().map(|s| s.leaves).collect::<Vec<_>>(),
        "leaves_nu1": survey.nu1.iter().map(|s| s.leaves).collect::<Vec<_>>(),
    });
    let label = match (survey.parity_nu0, survey.parity_nu1) {
        (Some(a), Some(b)) if ok => format!("parities ({a}, {b})"),
        _ => "inconsistent parities".to_string(),
    };
    Ok(Outcome {
        label,
        code: if ok { EXIT_OK } else { EXIT_HYPOTHESIS },
        metrics,
        files: vec![("degree_samples.csv".into(), csv(&header, &rows))],
    })
}

fn accessible(
    s: &RelaySystem,
    lambda: &Lambda,
    x0: &[f64],
    k0: usize,
    discard: Option<usize>,
    opts: &ReachOptions,
) -> Result<Outcome, Failure> {
    let cloud = match discard {
        Some(m) => omega_limit_estimate(s, lambda, x0, k0, m, opts)?,
        None => accessible_set(s, lambda, x0, k0, opts)?,
    };
    let delta = 2.0 * cloud.spacing;
    let (connected, components) = check_connected(&cloud, delta);
    let header: Vec<String> = ["arc".to_string(), "level".to_string(), "mode".to_string()]
        .into_iter()
        .chain(coord_header(s.dim()))
        .collect();
    let mut rows = Vec::with_capacity(cloud.len());
    for (a, arc) in cloud.arcs.iter().enumerate() {
        for x in &cloud.points[arc.first..arc.first + arc.len] {
            let mut r = vec![a.to_string(), arc.level.to_string(), arc.mode.to_string()];
            r.extend(x.iter().map(|v| num(*v)));
            rows.push(r);
        }
    }
    let metrics = json!({
        "samples": rows.len(),
        "arcs": cloud.arcs.len(),
        "spacing": cloud.spacing,
        "delta": delta,
        "components": components,
        "connected": connected,
        "pruned": cloud.pruned,
    });
    Ok(Outcome {
        label: if connected { "connected" } else { "disconnected" }.to_string(),
        code: EXIT_OK,
        metrics,
        files: vec![("cloud.csv".into(), csv(&header, &rows))],
    })
}
