use nalgebra::DVector;

use super::solve::{assemble, newton, PeriodicOptions, PeriodicOrbit};
use super::{evaluate, SwitchingVector};
use crate::error::{Error, Result};
use crate::geometry::{Lambda, RelaySystem};

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationOptions {
    /// Initial number of equal steps from `lambda_from` to `lambda_to`.
    pub steps: usize,
    /// Smallest step, as a fraction of the whole path.
    pub min_step: f64,
    pub periodic: PeriodicOptions,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            steps: 16,
            min_step: 1.0 / 1024.0,
            periodic: PeriodicOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContinuationPath {
    /// Accepted `(lambda, omega)` pairs, starting at `lambda_from`.
    pub points: Vec<(Lambda, SwitchingVector)>,
    /// Number of times the step was halved after a failed correction.
    pub halvings: usize,
    pub endpoint: PeriodicOrbit,
}

/// Tangent predictor: the level rows of the residual depend on `lambda` with
/// slope -1, the closure rows are treated as independent of it.
fn predict(
    s: &RelaySystem,
    lambda: &Lambda,
    next: &Lambda,
    omega: &SwitchingVector,
    opts: &PeriodicOptions,
) -> Result<SwitchingVector> {
    let ev = evaluate(s, lambda, omega, opts.window_scale, true)?;
    let jac = ev.jacobian.expect("jacobian");
    let n = s.dim();
    let p = s.modes();
    let levels: Vec<usize> = if lambda.is_closed() { (0..p).collect() } else { (1..=p).collect() };
    let mut rhs = DVector::zeros(n + p);
    for (row, &i) in levels.iter().enumerate() {
        rhs[row] = next.get(i) - lambda.get(i);
    }
    let svd = jac.svd(true, true);
    let eps = 1e-8 * svd.singular_values.max();
    let d = svd
        .solve(&rhs, eps)
        .map_err(|e| Error::NoConvergence(format!("predictor failed: {e}")))?;
    let v: Vec<f64> = omega.to_vec().iter().zip(d.iter()).map(|(a, b)| a + b).collect();
    Ok(SwitchingVector::from_slice(&v, n))
}

/// Follows a periodic switching vector from `lambda_from` to `lambda_to`
/// along the straight segment between them.
///
/// Each step predicts along the tangent and corrects with Newton. A failed
/// correction halves the step; below `min_step` the result is
/// [`Error::ContinuationStalled`] with the last accepted path parameter.
pub fn continue_lambda(
    s: &RelaySystem,
    omega: &SwitchingVector,
    lambda_from: &Lambda,
    lambda_to: &Lambda,
    opts: &ContinuationOptions,
) -> Result<ContinuationPath> {
    s.check_lambda(lambda_from)?;
    s.check_lambda(lambda_to)?;
    if opts.steps == 0 {
        return Err(Error::InvalidInput("continuation needs at least one step".into()));
    }
    let po = &opts.periodic;
    if lambda_from == lambda_to {
        let end = newton(s, lambda_to, omega, po)?;
        return Ok(ContinuationPath {
            points: vec![(lambda_from.clone(), omega.clone())],
            halvings: 0,
            endpoint: assemble(s, lambda_to, end, po)?,
        });
    }
    let start = newton(s, lambda_from, omega, po)?;
    let mut current = start.omega;
    let mut points = vec![(lambda_from.clone(), current.clone())];
    let base = 1.0 / opts.steps as f64;
    let mut h = base;
    let mut at = 0.0;
    let mut halvings = 0;
    while at < 1.0 {
        h = h.min(1.0 - at);
        let target = if at + h >= 1.0 { 1.0 } else { at + h };
        let lam = lambda_from.lerp(lambda_to, at);
        let next = if target == 1.0 {
            lambda_to.clone()
        } else {
            lambda_from.lerp(lambda_to, target)
        };
        let corrected = predict(s, &lam, &next, &current, po)
            .and_then(|guess| newton(s, &next, &guess, po))
            .or_else(|_| newton(s, &next, &current, po));
        match corrected {
            Ok(out) => {
                current = out.omega;
                at = target;
                points.push((next, current.clone()));
                h = (2.0 * h).min(base);
            }
            Err(_) => {
                h *= 0.5;
                halvings += 1;
                if h < opts.min_step {
                    return Err(Error::ContinuationStalled { s: at });
                }
            }
        }
    }
    let end = newton(s, lambda_to, &current, po)?;
    let endpoint = assemble(s, lambda_to, end, po)?;
    Ok(ContinuationPath {
        points,
        halvings,
        endpoint,
    })
}
