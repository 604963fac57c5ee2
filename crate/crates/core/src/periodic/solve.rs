//! Damped Newton on the shooting system, seeded from forward crossing trees.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;

use super::verify::{hausdorff, orbit_samples};
use super::{chain_margins, continue_lambda, evaluate, verify_periodic, ContinuationOptions};
use super::{SwitchingVector, VerificationReport};
use crate::error::{Error, Result};
use crate::events::{forward_tree, TreeOptions};
use crate::geometry::{sample_boundary, Lambda, RelaySystem};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicOptions {
    /// Number of boundary points used to grow seeds.
    pub seeds: usize,
    pub max_iter: usize,
    /// Newton stops once `|r| <= tol`.
    pub tol: f64,
    /// A stagnated iterate is still accepted if `|r| <= accept`.
    pub accept: f64,
    pub armijo: f64,
    pub backtrack: f64,
    /// Switching times live in `(0, window_scale * T_i)`.
    pub window_scale: f64,
    /// Orbits closer than this (Hausdorff) are duplicates.
    pub dedup: f64,
    /// Jacobians with a larger condition number are flagged degenerate.
    pub cond_max: f64,
    /// Times are kept `clamp_rel * T_i` away from the window ends.
    pub clamp_rel: f64,
    /// Largest level shift tried after a degenerate failure.
    pub perturbation: f64,
    pub seed: u64,
    pub tree: TreeOptions,
}

impl Default for PeriodicOptions {
    fn default() -> Self {
        PeriodicOptions {
            seeds: 32,
            max_iter: 40,
            tol: 1e-10,
            accept: 1e-8,
            armijo: 1e-4,
            backtrack: 0.5,
            window_scale: 1.0,
            dedup: 1e-4,
            cond_max: 1e12,
            clamp_rel: 1e-6,
            perturbation: 1e-3,
            seed: 0,
            tree: TreeOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Seeding {
    /// Leaves of forward crossing trees over sampled points of `dM_0`.
    Auto,
    Explicit(Vec<SwitchingVector>),
}

#[derive(Debug, Clone)]
pub struct PeriodicOrbit {
    pub omega: SwitchingVector,
    pub lambda: Lambda,
    pub residual_norm: f64,
    /// Switch points `x_0, .., x_p`.
    pub chain: Vec<Vec<f64>>,
    pub margins: Vec<f64>,
    pub monodromy: DMatrix<f64>,
    pub condition_number: f64,
    /// Jacobian condition number above `cond_max`: the orbit is not isolated.
    pub degenerate: bool,
    pub iterations: usize,
    pub verification: VerificationReport,
}

impl PeriodicOrbit {
    pub fn period(&self) -> f64 {
        self.omega.period()
    }
}

/// All distinct orbits found, plus counts of discarded candidates.
#[derive(Debug, Clone)]
pub struct PeriodicSearch {
    pub orbits: Vec<PeriodicOrbit>,
    pub seeds_tried: usize,
    pub failures: Vec<String>,
}

pub(crate) struct NewtonOutcome {
    pub omega: SwitchingVector,
    pub residual_norm: f64,
    pub condition: f64,
    pub iterations: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn condition(j: &DMatrix<f64>) -> f64 {
    let sv = j.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn clamp_times(s: &RelaySystem, omega: &mut SwitchingVector, opts: &PeriodicOptions) {
    for (i, t) in omega.t.iter_mut().enumerate() {
        let h = s.flow(i + 1).horizon;
        let m = opts.clamp_rel * h;
        *t = t.clamp(m, opts.window_scale * h - m);
    }
}

fn on_clamp(s: &RelaySystem, omega: &SwitchingVector, opts: &PeriodicOptions) -> Option<usize> {
    omega.t.iter().enumerate().find_map(|(i, &t)| {
        let h = s.flow(i + 1).horizon;
        let m = opts.clamp_rel * h;
        (t <= 1.5 * m || t >= opts.window_scale * h - 1.5 * m).then_some(i + 1)
    })
}

/// Minimum-norm Newton step: singular values below `1e-8 * max` are dropped.
fn newton_step(j: &DMatrix<f64>, r: &[f64]) -> Result<DVector<f64>> {
    let svd = j.clone().svd(true, true);
    let eps = 1e-8 * svd.singular_values.max();
    svd.solve(&(-DVector::from_column_slice(r)), eps)
        .map_err(|e| Error::NoConvergence(format!("least-squares step failed: {e}")))
}

/// Damped Newton from `start`, with Armijo backtracking and time clamping.
pub(crate) fn newton(
    s: &RelaySystem,
    lambda: &Lambda,
    start: &SwitchingVector,
    opts: &PeriodicOptions,
) -> Result<NewtonOutcome> {
    let n = s.dim();
    let mut omega = start.clone();
    clamp_times(s, &mut omega, opts);
    let mut ev = evaluate(s, lambda, &omega, opts.window_scale, true)?;
    let mut rn = norm(&ev.residual);
    let mut cond = condition(ev.jacobian.as_ref().expect("jacobian"));
    for it in 0..opts.max_iter {
        if rn <= opts.tol {
            return Ok(NewtonOutcome {
                omega,
                residual_norm: rn,
                condition: cond,
                iterations: it,
            });
        }
        let jac = ev.jacobian.as_ref().expect("jacobian");
        let step = newton_step(jac, &ev.residual)?;
        let base = omega.to_vec();
        let phi = 0.5 * rn * rn;
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha >= 1e-10 {
            let v: Vec<f64> = base.iter().zip(step.iter()).map(|(a, d)| a + alpha * d).collect();
            let mut trial = SwitchingVector::from_slice(&v, n);
            clamp_times(s, &mut trial, opts);
            if let Ok(e) = evaluate(s, lambda, &trial, opts.window_scale, false) {
                let tn = norm(&e.residual);
                if 0.5 * tn * tn <= (1.0 - 2.0 * opts.armijo * alpha) * phi {
                    accepted = Some(trial);
                    break;
                }
            }
            alpha *= opts.backtrack;
        }
        match accepted {
            Some(trial) => {
                omega = trial;
                ev = evaluate(s, lambda, &omega, opts.window_scale, true)?;
                rn = norm(&ev.residual);
                cond = condition(ev.jacobian.as_ref().expect("jacobian"));
            }
            None => break,
        }
    }
    if rn <= opts.accept {
        return Ok(NewtonOutcome {
            omega,
            residual_norm: rn,
            condition: cond,
            iterations: opts.max_iter,
        });
    }
    if cond > opts.cond_max {
        Err(Error::DegenerateJacobian(cond))
    } else {
        Err(Error::NoConvergence(format!("residual {rn:e} after Newton")))
    }
}

/// Builds the orbit record at a converged switching vector and replays it.
pub(crate) fn assemble(
    s: &RelaySystem,
    lambda: &Lambda,
    out: NewtonOutcome,
    opts: &PeriodicOptions,
) -> Result<PeriodicOrbit> {
    if let Some(stage) = on_clamp(s, &out.omega, opts) {
        return Err(Error::NotInWindow { stage });
    }
    let ev = evaluate(s, lambda, &out.omega, opts.window_scale, true)?;
    let monodromy = ev.monodromy.expect("monodromy");
    let margins = chain_margins(s, &ev.chain)?;
    let verification = verify_periodic(s, lambda, &out.omega, &monodromy, &opts.tree.crossing)?;
    Ok(PeriodicOrbit {
        omega: out.omega,
        lambda: lambda.clone(),
        residual_norm: out.residual_norm.max(norm(&ev.residual)),
        chain: ev.chain,
        margins,
        monodromy,
        condition_number: out.condition,
        degenerate: out.condition > opts.cond_max,
        iterations: out.iterations,
        verification,
    })
}

fn auto_seeds(s: &RelaySystem, lambda: &Lambda, opts: &PeriodicOptions) -> Result<Vec<SwitchingVector>> {
    let mut rng = rng::stream(opts.seed, "find_periodic.seeds");
    let points = sample_boundary(s.region(0), lambda.get(0), s.bbox(), opts.seeds, &mut rng)?;
    let mut tree_opts = opts.tree.clone();
    tree_opts.window_scale = opts.window_scale;
    let mut seeds = Vec::new();
    for b in points {
        // Trees through tangencies are skipped; their neighbours still seed.
        if let Ok(tree) = forward_tree(s, lambda, &b.point, &tree_opts) {
            seeds.extend(tree.switching_vectors());
        }
    }
    Ok(seeds)
}

/// Newton at a randomly shifted level vector, then continuation back to `lambda`.
fn perturbed_retry(
    s: &RelaySystem,
    lambda: &Lambda,
    start: &SwitchingVector,
    opts: &PeriodicOptions,
    rng: &mut rng::Rng,
) -> Result<NewtonOutcome> {
    let mut last = Error::NoConvergence("no admissible perturbation".into());
    for _ in 0..2 {
        let mut v: Vec<f64> = lambda
            .values()
            .iter()
            .map(|x| x + opts.perturbation * rng.random_range(-1.0..=1.0))
            .collect();
        if lambda.is_closed() {
            let p = v.len() - 1;
            v[p] = v[0];
        }
        let near = Lambda(v);
        if s.check_lambda(&near).is_err() {
            continue;
        }
        let copts = ContinuationOptions {
            steps: 4,
            periodic: opts.clone(),
            ..ContinuationOptions::default()
        };
        let attempt = newton(s, &near, start, opts)
            .and_then(|out| continue_lambda(s, &out.omega, &near, lambda, &copts))
            .and_then(|path| newton(s, lambda, &path.endpoint.omega, opts));
        match attempt {
            Ok(out) => return Ok(out),
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Finds periodic switching vectors of the relay at `lambda`.
///
/// Every returned orbit has residual at most `opts.accept`, lies strictly
/// inside the time windows, and has been replayed through the relay.
pub fn find_periodic(
    s: &RelaySystem,
    lambda: &Lambda,
    seeding: &Seeding,
    opts: &PeriodicOptions,
) -> Result<PeriodicSearch> {
    s.check_lambda(lambda)?;
    let seeds = match seeding {
        Seeding::Auto => auto_seeds(s, lambda, opts)?,
        Seeding::Explicit(v) => v.clone(),
    };
    if seeds.is_empty() {
        return Err(Error::NoConvergence("no seeds: forward crossing trees are empty".into()));
    }
    let mut search = PeriodicSearch {
        orbits: Vec::new(),
        seeds_tried: seeds.len(),
        failures: Vec::new(),
    };
    let mut samples: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut worst_cond: Option<f64> = None;
    let mut shifts = rng::stream(opts.seed, "find_periodic.perturbation");
    for seed in &seeds {
        let outcome = match newton(s, lambda, seed, opts) {
            Err(Error::DegenerateJacobian(c)) => {
                worst_cond = Some(worst_cond.map_or(c, |w: f64| w.max(c)));
                perturbed_retry(s, lambda, seed, opts, &mut shifts)
            }
            other => other,
        };
        let orbit = match outcome.and_then(|o| assemble(s, lambda, o, opts)) {
            Ok(o) => o,
            Err(e) => {
                search.failures.push(e.to_string());
                continue;
            }
        };
        let pts = orbit_samples(s, &orbit.omega, 32)?;
        if samples.iter().any(|q| hausdorff(q, &pts) < opts.dedup) {
            continue;
        }
        samples.push(pts);
        search.orbits.push(orbit);
    }
    if search.orbits.is_empty() {
        if let Some(c) = worst_cond {
            return Err(Error::DegenerateJacobian(c));
        }
        return Err(Error::NoConvergence(format!(
            "{} seeds, none converged; first failure: {}",
            seeds.len(),
            search.failures.first().map(String::as_str).unwrap_or("none")
        )));
    }
    Ok(search)
}
