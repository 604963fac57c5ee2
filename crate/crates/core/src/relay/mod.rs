//! Quasisolutions of the relay: mode-tagged flow segments joined at switches.

mod reach;

pub use reach::{accessible_set, check_connected, omega_limit_estimate, PointCloud, ReachOptions};

use rand::Rng as _;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::events::{find_crossings, CrossingEvent, CrossingOptions, Orientation};
use crate::geometry::{Lambda, RelaySystem};
use crate::rng;

/// Which crossing of the active switching surface triggers the switch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SwitchPolicy {
    FirstHit,
    /// The n-th crossing (1-based) within the horizon.
    NthHit(usize),
    /// A uniformly chosen crossing, from a seeded stream.
    RandomHit(u64),
    /// Every crossing, up to `max_breadth` branches per level; see [`accessible_set`].
    Branching(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StopCriterion {
    pub max_switches: Option<usize>,
    pub t_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOptions {
    pub crossing: CrossingOptions,
    /// Crossings are searched within `horizon_factor * T_k`.
    pub horizon_factor: f64,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        SimulateOptions {
            crossing: CrossingOptions::default(),
            horizon_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segment {
    pub mode: usize,
    pub start_time: f64,
    pub duration: f64,
    pub start_point: Vec<f64>,
    pub end_point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchEvent {
    pub time: f64,
    pub point: Vec<f64>,
    pub from_mode: usize,
    pub to_mode: usize,
    /// 0-based index of the chosen crossing among those in the horizon.
    pub crossing_index: usize,
    pub margin: f64,
}

/// A trajectory `(F, alpha)`: consecutive segments, each following a single
/// flow, with the mode advancing by one at every switch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quasisolution {
    pub initial_mode: usize,
    pub segments: Vec<Segment>,
    pub switches: Vec<SwitchEvent>,
}

impl Quasisolution {
    pub fn end_point(&self) -> &[f64] {
        &self.segments.last().expect("at least one segment").end_point
    }

    pub fn total_time(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Largest deviation between each stored segment end and a fresh
    /// integration of the segment from its start.
    pub fn replay_error(&self, s: &RelaySystem) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for seg in &self.segments {
            let y = s.flow(seg.mode).flow_map(seg.duration, &seg.start_point)?;
            let d = y
                .iter()
                .zip(&seg.end_point)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(d);
        }
        Ok(worst)
    }

    /// Samples `(t, mode, x)` every `dt` along each segment, plus segment ends.
    pub fn sample_path(&self, s: &RelaySystem, dt: f64) -> Result<Vec<(f64, usize, Vec<f64>)>> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput("sampling step must be positive".into()));
        }
        let mut rows = Vec::new();
        for seg in &self.segments {
            let flow = s.flow(seg.mode);
            if seg.duration == 0.0 {
                rows.push((seg.start_time, seg.mode, seg.start_point.clone()));
                continue;
            }
            let traj = flow.trajectory(seg.duration, &seg.start_point)?;
            let k = (seg.duration / dt).ceil().max(1.0) as usize;
            for j in 0..k {
                let t = seg.duration * j as f64 / k as f64;
                rows.push((seg.start_time + t, seg.mode, traj.eval(t)?));
            }
            rows.push((seg.start_time + seg.duration, seg.mode, seg.end_point.clone()));
        }
        Ok(rows)
    }

    /// Number of sampled points where the state in mode `k` lies in the
    /// interior of `M_k`. Reported only; quasisolutions may do this.
    pub fn interior_visits(&self, s: &RelaySystem, lambda: &Lambda, per_segment: usize) -> Result<usize> {
        let mut count = 0;
        for seg in &self.segments {
            if seg.duration == 0.0 {
                continue;
            }
            let traj = s.flow(seg.mode).trajectory(seg.duration, &seg.start_point)?;
            let region = s.region(seg.mode);
            for j in 1..per_segment.max(2) {
                let t = seg.duration * j as f64 / per_segment.max(2) as f64;
                if region.level(&traj.eval(t)?, lambda.get(seg.mode))? > 1e-9 {
                    count += 1;
                }
            }
        }
        Ok(count)
    }
}

/// Crossings of `dM_k` by the mode-`k` flow from `x` within `window`.
pub(crate) fn mode_crossings(
    s: &RelaySystem,
    lambda: &Lambda,
    mode: usize,
    x: &[f64],
    window: f64,
    opts: &CrossingOptions,
) -> Result<Vec<CrossingEvent>> {
    let flow = s.flow(mode);
    find_crossings(
        flow,
        s.region(mode),
        lambda.get(mode),
        x,
        window,
        Orientation::Forward,
        opts,
    )
    .map_err(|e| match e {
        Error::DegenerateCrossing { t, margin, .. } => Error::DegenerateCrossing {
            stage: mode,
            t,
            margin,
        },
        other => other,
    })
}

/// Runs the relay from `x0` in mode `k0`.
///
/// In mode `k` the state follows `F_k` and only `dM_k^lambda` is watched; the
/// policy picks which crossing in `(0, horizon_factor * T_k)` switches to
/// mode `k + 1`. Mode `0` uses `lambda_0` for its surface.
pub fn simulate(
    s: &RelaySystem,
    lambda: &Lambda,
    x0: &[f64],
    k0: usize,
    policy: &SwitchPolicy,
    stop: StopCriterion,
    opts: &SimulateOptions,
) -> Result<Quasisolution> {
    s.check_lambda(lambda)?;
    s.check_point(x0)?;
    if stop.max_switches.is_none() && stop.t_max.is_none() {
        return Err(Error::InvalidInput("a stop criterion is required".into()));
    }
    let mut random = match policy {
        SwitchPolicy::FirstHit => None,
        SwitchPolicy::NthHit(n) if *n >= 1 => None,
        SwitchPolicy::RandomHit(seed) => Some(rng::stream(*seed, "simulate.random_hit")),
        SwitchPolicy::NthHit(_) => {
            return Err(Error::InvalidInput("NthHit index must be at least 1".into()))
        }
        SwitchPolicy::Branching(_) => {
            return Err(Error::InvalidInput(
                "branching policies are explored with accessible_set".into(),
            ))
        }
    };
    let p = s.modes();
    let mut mode = k0 % p;
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut q = Quasisolution {
        initial_mode: mode,
        segments: Vec::new(),
        switches: Vec::new(),
    };
    loop {
        if stop.max_switches.is_some_and(|m| q.switches.len() >= m) {
            break;
        }
        let cap = opts.horizon_factor * s.flow(mode).horizon;
        let remaining = stop.t_max.map(|tm| tm - t);
        if remaining.is_some_and(|r| r <= 0.0) {
            break;
        }
        let window = remaining.map_or(cap, |r| r.min(cap));
        let events = mode_crossings(s, lambda, mode, &x, window, &opts.crossing)?;
        let chosen = match policy {
            SwitchPolicy::FirstHit => (!events.is_empty()).then_some(0),
            SwitchPolicy::NthHit(n) => (events.len() >= *n).then(|| n - 1),
            SwitchPolicy::RandomHit(_) => {
                let r = random.as_mut().expect("random stream");
                (!events.is_empty()).then(|| r.random_range(0..events.len()))
            }
            SwitchPolicy::Branching(_) => unreachable!(),
        };
        match chosen {
            Some(i) => {
                let ev = &events[i];
                let next = (mode + 1) % p;
                q.segments.push(Segment {
                    mode,
                    start_time: t,
                    duration: ev.t,
                    start_point: x.clone(),
                    end_point: ev.point.clone(),
                });
                t += ev.t;
                q.switches.push(SwitchEvent {
                    time: t,
                    point: ev.point.clone(),
                    from_mode: mode,
                    to_mode: next,
                    crossing_index: i,
                    margin: ev.margin,
                });
                x = ev.point.clone();
                mode = next;
            }
            None => match remaining {
                Some(r) if r <= cap => {
                    let end = s.flow(mode).flow_map(r, &x)?;
                    q.segments.push(Segment {
                        mode,
                        start_time: t,
                        duration: r,
                        start_point: x.clone(),
                        end_point: end,
                    });
                    break;
                }
                _ => {
                    return Err(Error::NoCrossingWithinHorizon { mode, horizon: cap });
                }
            },
        }
    }
    if q.segments.is_empty() {
        q.segments.push(Segment {
            mode,
            start_time: t,
            duration: 0.0,
            start_point: x.clone(),
            end_point: x,
        });
    }
    Ok(q)
}
