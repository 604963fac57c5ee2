use nalgebra::DMatrix;
use serde::Serialize;

use super::{chain, project_step, ProjectionOptions, SwitchingVector};
use crate::error::{Error, Result};
use crate::events::CrossingOptions;
use crate::geometry::{Lambda, RelaySystem};
use crate::relay::{mode_crossings, Quasisolution, Segment, SwitchEvent};

/// Outcome of replaying a periodic switching vector through the relay.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    /// `|x_p - x_0|`, or `|pi(x_p) - x_0|` when `lambda_p != lambda_0`.
    pub closure: f64,
    pub margins: Vec<f64>,
    /// 1-based crossing index chosen at each switch.
    pub crossing_indices: Vec<usize>,
    pub eigen_moduli: Vec<f64>,
    pub quasisolution: Quasisolution,
}

/// Re-simulates one period from `x_0` in mode 1, at each stage taking the
/// crossing whose time matches `t_i` within `1e-6`. A missing match is a
/// [`Error::ReplayMismatch`].
pub fn verify_periodic(
    s: &RelaySystem,
    lambda: &Lambda,
    omega: &SwitchingVector,
    monodromy: &DMatrix<f64>,
    opts: &CrossingOptions,
) -> Result<VerificationReport> {
    s.check_lambda(lambda)?;
    let p = s.modes();
    let mut x = omega.x.clone();
    let mut time = 0.0;
    let mut q = Quasisolution {
        initial_mode: 1 % p,
        segments: Vec::new(),
        switches: Vec::new(),
    };
    let mut margins = Vec::with_capacity(p);
    let mut indices = Vec::with_capacity(p);
    for i in 1..=p {
        let mode = i % p;
        let window = 10.0 * s.flow(i).horizon;
        let mut events = mode_crossings_at(s, lambda, i, &x, window, opts)?;
        let target = omega.t[i - 1];
        let best = events
            .iter()
            .enumerate()
            .map(|(k, e)| (k, (e.t - target).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let k = match best {
            Some((k, d)) if d <= 1e-6 => k,
            _ => {
                return Err(Error::ReplayMismatch(format!(
                    "no crossing of boundary {i} near t = {target}; found {:?}",
                    events.iter().map(|e| e.t).collect::<Vec<_>>()
                )))
            }
        };
        let ev = events.swap_remove(k);
        q.segments.push(Segment {
            mode,
            start_time: time,
            duration: ev.t,
            start_point: x.clone(),
            end_point: ev.point.clone(),
        });
        time += ev.t;
        q.switches.push(SwitchEvent {
            time,
            point: ev.point.clone(),
            from_mode: mode,
            to_mode: (mode + 1) % p,
            crossing_index: k,
            margin: ev.margin,
        });
        margins.push(ev.margin);
        indices.push(k + 1);
        x = ev.point;
    }
    let end = if lambda.is_closed() {
        x
    } else {
        project_step(s.region(0), lambda.get(0), &x, &ProjectionOptions::default())?.0
    };
    let closure = end
        .iter()
        .zip(&omega.x)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let eigen_moduli = monodromy
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .collect();
    Ok(VerificationReport {
        closure,
        margins,
        crossing_indices: indices,
        eigen_moduli,
        quasisolution: q,
    })
}

/// Crossings for stage `i` (flow `F_i`, surface `dM_i`, level `lambda_i`).
/// Stage `p` watches `dM_0` at `lambda_p`.
fn mode_crossings_at(
    s: &RelaySystem,
    lambda: &Lambda,
    stage: usize,
    x: &[f64],
    window: f64,
    opts: &CrossingOptions,
) -> Result<Vec<crate::events::CrossingEvent>> {
    if stage < s.modes() {
        return mode_crossings(s, lambda, stage, x, window, opts);
    }
    let mut shifted = lambda.0.clone();
    shifted[0] = lambda.get(stage);
    mode_crossings(s, &Lambda(shifted), 0, x, window, opts)
        .map_err(|e| match e {
            Error::DegenerateCrossing { t, margin, .. } => Error::DegenerateCrossing {
                stage,
                t,
                margin,
            },
            other => other,
        })
}

/// Points along one period: the chain points and `k` dense samples per segment.
pub(crate) fn orbit_samples(s: &RelaySystem, omega: &SwitchingVector, k: usize) -> Result<Vec<Vec<f64>>> {
    let pts = chain(s, omega)?;
    let mut out = Vec::new();
    for (i, &t) in omega.t.iter().enumerate() {
        let traj = s.flow(i + 1).trajectory(t, &pts[i])?;
        for j in 0..k {
            out.push(traj.eval(t * j as f64 / k as f64)?);
        }
    }
    out.push(pts[s.modes()].clone());
    Ok(out)
}

pub(crate) fn hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let d = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
    let one = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        a.iter()
            .map(|x| b.iter().map(|y| d(x, y)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one(a, b).max(one(b, a))
}

/// Hausdorff distance between the point sets traced by two periodic orbits,
/// each sampled at 32 points per segment.
pub fn orbit_distance(s: &RelaySystem, a: &SwitchingVector, b: &SwitchingVector) -> Result<f64> {
    Ok(hausdorff(&orbit_samples(s, a, 32)?, &orbit_samples(s, b, 32)?))
}
