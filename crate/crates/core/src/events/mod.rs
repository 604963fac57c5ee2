//! Boundary crossings of flow trajectories, crossing trees, and degree parities.

mod tree;
mod winding;

pub use tree::{
    backward_tree, forward_tree, parity_nu0, parity_nu1, parity_survey, CrossingTree,
    ParitySurvey, SampleParity, TreeNode, TreeOptions,
};
pub use winding::winding_degree;

use serde::Serialize;

use crate::dynamics::Flow;
use crate::error::{Error, Result};
use crate::geometry::{Region, TOL_LEVEL};

/// Default transversality floor for `|grad f . V|` at a crossing.
pub const EPS_TAN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Forward,
    Backward,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Forward => 1.0,
            Orientation::Backward => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossingOptions {
    pub tol_level: f64,
    pub eps_tan: f64,
    /// Minimum root separation as a fraction of the window length.
    pub t_sep_rel: f64,
    /// Interpolant samples per accepted step.
    pub oversample: usize,
    /// Oversampling is doubled up to this value while near-tangencies remain unresolved.
    pub max_oversample: usize,
}

impl Default for CrossingOptions {
    fn default() -> Self {
        CrossingOptions {
            tol_level: TOL_LEVEL,
            eps_tan: EPS_TAN,
            t_sep_rel: 1e-7,
            oversample: 8,
            max_oversample: 64,
        }
    }
}

/// A transversal crossing of `{f = lambda}`.
///
/// `t` is the unsigned elapsed time along the search orientation, and
/// `direction` is the sign of `d/dt f` along that orientation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingEvent {
    pub t: f64,
    pub point: Vec<f64>,
    pub direction: i8,
    pub margin: f64,
}

struct Sample {
    s: f64,
    g: f64,
}

/// Evaluates `g(s) = f(x(s)) - lambda` by integrating from the stored step
/// start, so that the crossing point agrees with a fresh `flow_map` call.
struct ExactLevel<'a> {
    flow: &'a Flow,
    region: &'a Region,
    lambda: f64,
    sign: f64,
    times: &'a [f64],
    states: &'a [Vec<f64>],
    steps: usize,
}

impl ExactLevel<'_> {
    fn state(&self, s: f64) -> Result<Vec<f64>> {
        let i = self.times.partition_point(|&t| t <= s).saturating_sub(1).min(self.steps);
        if self.times[i] == s {
            return Ok(self.states[i].clone());
        }
        self.flow.advance(&self.states[i], s - self.times[i], self.sign)
    }

    fn g(&self, s: f64) -> Result<(f64, Vec<f64>)> {
        let y = self.state(s)?;
        Ok((self.region.level(&y, self.lambda)?, y))
    }
}

/// Value of the parabola through three samples at its vertex, if the vertex
/// lies between the outer samples.
fn parabola_vertex(a: &Sample, b: &Sample, c: &Sample) -> Option<(f64, f64)> {
    let (x0, x1, x2) = (a.s, b.s, c.s);
    let d01 = (b.g - a.g) / (x1 - x0);
    let d12 = (c.g - b.g) / (x2 - x1);
    let curv = (d12 - d01) / (x2 - x0);
    if curv == 0.0 {
        return None;
    }
    // g(x) = b.g + slope (x - x1) + curv (x - x1)^2 with slope at x1:
    let slope = d01 + curv * (x1 - x0);
    let xv = x1 - slope / (2.0 * curv);
    if !(x0..=x2).contains(&xv) {
        return None;
    }
    Some((xv, b.g - slope * slope / (4.0 * curv)))
}

fn golden_extremum(
    f: &dyn Fn(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    toward_zero_sign: f64,
) -> Result<(f64, f64)> {
    // minimizes toward_zero_sign * g on [a, b]
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = toward_zero_sign * f(c)?;
    let mut fd = toward_zero_sign * f(d)?;
    for _ in 0..80 {
        if (b - a).abs() <= 1e-14 * b.abs().max(1.0) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = toward_zero_sign * f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = toward_zero_sign * f(d)?;
        }
    }
    let (s, v) = if fc < fd { (c, fc) } else { (d, fd) };
    Ok((s, toward_zero_sign * v))
}

/// Illinois-modified regula falsi on a sign-change bracket.
fn polish(level: &ExactLevel<'_>, mut a: f64, mut ga: f64, mut b: f64, mut gb: f64, tol: f64) -> Result<(f64, f64, Vec<f64>)> {
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    let mut side = 0i8;
    for iter in 0..200 {
        let width = b - a;
        let mut c = b - gb * width / (gb - ga);
        if !(c > a && c < b) || iter % 8 == 7 {
            c = 0.5 * (a + b);
        }
        let (gc, y) = level.g(c)?;
        if best.as_ref().is_none_or(|(_, g, _)| gc.abs() < g.abs()) {
            best = Some((c, gc, y));
        }
        if gc.abs() <= tol * 1e-3 || width <= 4.0 * f64::EPSILON * c.abs().max(1.0) {
            break;
        }
        if (gc > 0.0) == (gb > 0.0) {
            b = c;
            gb = gc;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        } else {
            a = c;
            ga = gc;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        }
        if gc == 0.0 {
            break;
        }
    }
    Ok(best.expect("at least one iteration"))
}

/// All crossings of `{f = lambda}` by the trajectory of `flow` from `x` over
/// the open window `(0, window)`, sorted by time.
///
/// Crossings are bracketed by sign changes of `f - lambda` sampled on the
/// dense interpolant (`oversample` points per step), then polished on exact
/// integrations. Near-tangent extrema trigger denser resampling and finally a
/// golden-section search. Any located root with transversality margin at or
/// below `eps_tan`, or two roots closer than `t_sep_rel * window`, yields
/// [`Error::DegenerateCrossing`].
pub fn find_crossings(
    flow: &Flow,
    region: &Region,
    lambda: f64,
    x: &[f64],
    window: f64,
    orientation: Orientation,
    opts: &CrossingOptions,
) -> Result<Vec<CrossingEvent>> {
    if !(window > 0.0) {
        return Err(Error::InvalidInput(format!("window must be positive, got {window}")));
    }
    let g0 = region.level(x, lambda)?;
    if g0.abs() <= opts.tol_level {
        return Err(Error::StartOnBoundary(g0.abs()));
    }
    let sign = orientation.sign();
    let traj = flow.trajectory(sign * window, x)?;
    let sol = traj.solution();
    let level = ExactLevel {
        flow,
        region,
        lambda,
        sign,
        times: &sol.times,
        states: &sol.states,
        steps: sol.step_count(),
    };
    let n = sol.dim();
    let interp = |s: f64| -> Result<f64> {
        let mut y = vec![0.0; n];
        sol.eval_in_step(sol.locate(s), s, &mut y);
        region.level(&y, lambda)
    };

    let mut ns = opts.oversample.max(1);
    let (samples, suspects) = loop {
        let mut samples = Vec::with_capacity(sol.step_count() * ns + 1);
        let mut y = vec![0.0; n];
        for i in 0..sol.step_count() {
            let (a, b) = (sol.times[i], sol.times[i + 1]);
            for j in 0..ns {
                let s = if j == 0 { a } else { a + (b - a) * j as f64 / ns as f64 };
                sol.eval_in_step(i, s, &mut y);
                samples.push(Sample {
                    s,
                    g: region.level(&y, lambda)?,
                });
            }
        }
        samples.push(Sample {
            s: sol.span(),
            g: region.level(sol.last(), lambda)?,
        });
        let mut suspects = Vec::new();
        for i in 1..samples.len().saturating_sub(1) {
            let (a, b, c) = (&samples[i - 1], &samples[i], &samples[i + 1]);
            let same = (a.g > 0.0) == (b.g > 0.0) && (b.g > 0.0) == (c.g > 0.0);
            if !same || !(b.g.abs() <= a.g.abs() && b.g.abs() <= c.g.abs()) {
                continue;
            }
            if let Some((_, gv)) = parabola_vertex(a, b, c) {
                if (gv > 0.0) != (b.g > 0.0) || gv.abs() <= opts.tol_level {
                    suspects.push(i);
                }
            }
        }
        if suspects.is_empty() || ns >= opts.max_oversample {
            break (samples, suspects);
        }
        ns = (ns * 2).min(opts.max_oversample);
    };

    let mut brackets: Vec<(f64, f64, f64, f64)> = Vec::new();
    for w in samples.windows(2) {
        if (w[0].g > 0.0) != (w[1].g > 0.0) {
            brackets.push((w[0].s, w[0].g, w[1].s, w[1].g));
        }
    }
    for &i in &suspects {
        let (a, b, c) = (&samples[i - 1], &samples[i], &samples[i + 1]);
        let dir = if b.g > 0.0 { 1.0 } else { -1.0 };
        let (sm, _) = golden_extremum(&interp, a.s, c.s, dir)?;
        let (gm_exact, ym) = level.g(sm)?;
        if gm_exact.abs() <= opts.tol_level || (gm_exact > 0.0) != (b.g > 0.0) {
            let margin = transversality(flow, region, &ym)?.abs();
            if margin <= opts.eps_tan || gm_exact.abs() <= opts.tol_level {
                return Err(Error::DegenerateCrossing {
                    stage: 0,
                    t: sm,
                    margin,
                });
            }
            brackets.push((a.s, a.g, sm, gm_exact));
            brackets.push((sm, gm_exact, c.s, c.g));
        }
    }
    brackets.sort_by(|p, q| p.0.total_cmp(&q.0));

    let mut events: Vec<CrossingEvent> = Vec::with_capacity(brackets.len());
    for (a, ga, b, gb) in brackets {
        let (s, g, y) = polish(&level, a, ga, b, gb, opts.tol_level)?;
        if !(s > 0.0 && s < window) {
            continue;
        }
        if g.abs() > opts.tol_level {
            return Err(Error::UnresolvedCrossing { t: s, residual: g.abs() });
        }
        let rate = transversality(flow, region, &y)?;
        let margin = rate.abs();
        if margin <= opts.eps_tan {
            return Err(Error::DegenerateCrossing { stage: 0, t: s, margin });
        }
        events.push(CrossingEvent {
            t: s,
            point: y,
            direction: if sign * rate > 0.0 { 1 } else { -1 },
            margin,
        });
    }
    events.sort_by(|p, q| p.t.total_cmp(&q.t));
    let t_sep = opts.t_sep_rel * window;
    for w in events.windows(2) {
        if w[1].t - w[0].t <= t_sep {
            return Err(Error::DegenerateCrossing {
                stage: 0,
                t: w[0].t,
                margin: w[0].margin.min(w[1].margin),
            });
        }
    }
    Ok(events)
}

/// `grad f(y) . V(y)`.
pub fn transversality(flow: &Flow, region: &Region, y: &[f64]) -> Result<f64> {
    let grad = region.gradient(y)?;
    let v = flow.field.eval(y)?;
    Ok(grad.iter().zip(&v).map(|(a, b)| a * b).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{IntegratorSettings, VectorField};
    use crate::expr::parse;
    use std::f64::consts::PI;

    fn rotation(t: f64) -> Flow {
        let comps = vec![parse("-x2", 2).unwrap(), parse("x1", 2).unwrap()];
        Flow::new(VectorField::new(comps, 1).unwrap(), t, IntegratorSettings::default()).unwrap()
    }

    fn disk(src: &str) -> Region {
        Region::new(parse(src, 2).unwrap(), 1)
    }

    #[test]
    fn rotor_crossings_match_closed_form() {
        let t_star = (-2.53f64 / 2.6).acos();
        let f1 = disk("0.16 - ((x1+1)^2 + x2^2)");
        let ev = find_crossings(
            &rotation(PI),
            &f1,
            0.0,
            &[1.3, 0.0],
            2.0 * PI,
            Orientation::Forward,
            &CrossingOptions::default(),
        )
        .unwrap();
        assert_eq!(ev.len(), 2);
        assert!((ev[0].t - t_star).abs() < 1e-6);
        assert!((ev[1].t - (2.0 * PI - t_star)).abs() < 1e-6);
        assert_eq!(ev[0].direction, 1);
        assert_eq!(ev[1].direction, -1);
        for e in &ev {
            assert!(f1.level(&e.point, 0.0).unwrap().abs() <= 1e-10);
        }

        let half = find_crossings(
            &rotation(PI),
            &f1,
            0.0,
            &[1.3, 0.0],
            PI,
            Orientation::Forward,
            &CrossingOptions::default(),
        )
        .unwrap();
        assert_eq!(half.len(), 1);
    }

    #[test]
    fn backward_crossings_mirror_forward_ones() {
        let t_star = (-2.53f64 / 2.6).acos();
        let f1 = disk("0.16 - ((x1+1)^2 + x2^2)");
        let ev = find_crossings(
            &rotation(PI),
            &f1,
            0.0,
            &[1.3, 0.0],
            PI,
            Orientation::Backward,
            &CrossingOptions::default(),
        )
        .unwrap();
        assert_eq!(ev.len(), 1);
        assert!((ev[0].t - t_star).abs() < 1e-6);
        assert!(ev[0].point[1] < 0.0);
        assert_eq!(ev[0].direction, 1);
    }

    #[test]
    fn no_crossings_inside_region() {
        let big = disk("9 - (x1^2 + x2^2)");
        let ev = find_crossings(
            &rotation(PI),
            &big,
            0.0,
            &[1.0, 0.0],
            2.0 * PI,
            Orientation::Forward,
            &CrossingOptions::default(),
        )
        .unwrap();
        assert!(ev.is_empty());
    }

    #[test]
    fn tangency_is_degenerate() {
        // the radius-1.3 circle touches {|x - (1,0)| = 0.3} at (1.3, 0)
        let f0 = disk("0.09 - ((x1-1)^2 + x2^2)");
        let err = find_crossings(
            &rotation(PI),
            &f0,
            0.0,
            &[0.0, 1.3],
            2.0 * PI,
            Orientation::Forward,
            &CrossingOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateCrossing { .. }), "{err:?}");
    }

    #[test]
    fn start_on_boundary_is_rejected() {
        let f0 = disk("0.09 - ((x1-1)^2 + x2^2)");
        assert!(matches!(
            find_crossings(
                &rotation(PI),
                &f0,
                0.0,
                &[1.3, 0.0],
                1.0,
                Orientation::Forward,
                &CrossingOptions::default()
            ),
            Err(Error::StartOnBoundary(_))
        ));
    }

    #[test]
    fn crossing_point_agrees_with_fresh_flow_map() {
        let f1 = disk("0.16 - ((x1+1)^2 + x2^2)");
        let flow = rotation(PI);
        let ev = find_crossings(
            &flow,
            &f1,
            0.0,
            &[1.3, 0.0],
            2.0 * PI,
            Orientation::Forward,
            &CrossingOptions::default(),
        )
        .unwrap();
        for e in ev {
            let y = flow.flow_map(e.t, &[1.3, 0.0]).unwrap();
            assert!(f1.level(&y, 0.0).unwrap().abs() <= 1e-10);
        }
    }
}
