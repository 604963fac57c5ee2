//! Switching vectors, the maps `nu`, `nu_0`, `nu_1`, and the shooting system
//! whose zeros are periodic solutions of the relay.

mod continuation;
mod solve;
mod verify;

pub use continuation::{continue_lambda, ContinuationOptions, ContinuationPath};
pub use solve::{find_periodic, PeriodicOptions, PeriodicOrbit, PeriodicSearch, Seeding};
pub use verify::{orbit_distance, verify_periodic, VerificationReport};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Lambda, Region, RelaySystem, TOL_LEVEL};

/// `omega = (x_0, t_1, .., t_p)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchingVector {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
}

impl SwitchingVector {
    pub fn new(x: Vec<f64>, t: Vec<f64>) -> Self {
        SwitchingVector { x, t }
    }

    /// Flattened `(x_0, t_1, .., t_p)`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.x.iter().chain(&self.t).copied().collect()
    }

    pub fn from_slice(v: &[f64], n: usize) -> Self {
        SwitchingVector {
            x: v[..n].to_vec(),
            t: v[n..].to_vec(),
        }
    }

    pub fn period(&self) -> f64 {
        self.t.iter().sum()
    }

    fn check(&self, s: &RelaySystem, window_scale: f64) -> Result<()> {
        s.check_point(&self.x)?;
        if self.t.len() != s.modes() {
            return Err(Error::InvalidInput(format!(
                "switching vector has {} times, expected {}",
                self.t.len(),
                s.modes()
            )));
        }
        for (i, &t) in self.t.iter().enumerate() {
            let w = window_scale * s.flow(i + 1).horizon;
            if !(t > 0.0 && t < w) {
                return Err(Error::NotInWindow { stage: i + 1 });
            }
        }
        Ok(())
    }
}

/// Points `x_0, x_1 = F_1(t_1, x_0), .., x_p = F_p(t_p, x_{p-1})`.
pub fn chain(s: &RelaySystem, omega: &SwitchingVector) -> Result<Vec<Vec<f64>>> {
    let mut pts = vec![omega.x.clone()];
    for (i, &t) in omega.t.iter().enumerate() {
        let next = s.flow(i + 1).flow_map(t, &pts[i])?;
        pts.push(next);
    }
    Ok(pts)
}

/// `nu(omega) = x_p`, the end of the chain.
pub fn nu(s: &RelaySystem, lambda: &Lambda, omega: &SwitchingVector) -> Result<Vec<f64>> {
    s.check_lambda(lambda)?;
    omega.check(s, 1.0)?;
    Ok(chain(s, omega)?.pop().expect("non-empty chain"))
}

/// `nu_0(omega) = x_0`.
pub fn nu0(omega: &SwitchingVector) -> Vec<f64> {
    omega.x.clone()
}

/// `nu_1(omega) = x_p`; identical to [`nu`].
pub fn nu1(s: &RelaySystem, lambda: &Lambda, omega: &SwitchingVector) -> Result<Vec<f64>> {
    nu(s, lambda, omega)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionOptions {
    /// Largest allowed `|f(y) - lambda|` at the start.
    pub collar: f64,
    pub max_iter: usize,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        ProjectionOptions {
            collar: 0.1,
            max_iter: 50,
        }
    }
}

/// Moves `y` along the fixed direction `grad f(y)` onto `{f = lambda}`.
///
/// Points already on the level set are returned unchanged. Fails when `y` is
/// farther than `collar` in level from the target or the iteration leaves it.
pub fn project_to_boundary(
    region: &Region,
    lambda: f64,
    y: &[f64],
    opts: &ProjectionOptions,
) -> Result<Vec<f64>> {
    Ok(project_step(region, lambda, y, opts)?.0)
}

/// Returns the projected point and the step length `s` with `z = y + s grad f(y)`.
fn project_step(
    region: &Region,
    lambda: f64,
    y: &[f64],
    opts: &ProjectionOptions,
) -> Result<(Vec<f64>, f64)> {
    let (f0, d) = region.f.value_and_gradient(y)?;
    let g0 = f0 - lambda;
    if g0 == 0.0 {
        return Ok((y.to_vec(), 0.0));
    }
    if g0.abs() > opts.collar {
        return Err(Error::ProjectionDiverged(format!(
            "level offset {g0:e} exceeds the collar {:e}",
            opts.collar
        )));
    }
    let dd: f64 = d.iter().map(|v| v * v).sum();
    if !(dd > 0.0) {
        return Err(Error::ProjectionDiverged("vanishing gradient".into()));
    }
    let mut s = -g0 / dd;
    let mut z: Vec<f64> = y.iter().zip(&d).map(|(a, b)| a + s * b).collect();
    for _ in 0..opts.max_iter {
        let (fz, gz) = region.f.value_and_gradient(&z)?;
        let g = fz - lambda;
        let slope: f64 = gz.iter().zip(&d).map(|(a, b)| a * b).sum();
        if !(slope.abs() > 0.0) {
            return Err(Error::ProjectionDiverged("direction tangent to level set".into()));
        }
        let ds = -g / slope;
        s += ds;
        z = y.iter().zip(&d).map(|(a, b)| a + s * b).collect();
        if ds.abs() * dd.sqrt() <= 1e-15 * (1.0 + norm(&z)) {
            break;
        }
    }
    let g = region.f.evaluate(&z)? - lambda;
    if !(g.abs() <= TOL_LEVEL) {
        return Err(Error::ProjectionDiverged(format!("residual level {g:e}")));
    }
    Ok((z, s))
}

/// Derivative of the projection at `y`, from implicit differentiation of
/// `f(y + s(y) grad f(y)) = lambda`. The Hessian of `f` is taken by central
/// differences of exact gradients.
fn projection_jacobian(
    region: &Region,
    lambda: f64,
    y: &[f64],
    opts: &ProjectionOptions,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = y.len();
    let (z, s) = project_step(region, lambda, y, opts)?;
    let d = DVector::from_vec(region.gradient(y)?);
    let gz = DVector::from_vec(region.gradient(&z)?);
    let mut hess = DMatrix::zeros(n, n);
    for j in 0..n {
        let h = 1e-6 * (1.0 + y[j].abs());
        let mut yp = y.to_vec();
        let mut ym = y.to_vec();
        yp[j] += h;
        ym[j] -= h;
        let gp = region.gradient(&yp)?;
        let gm = region.gradient(&ym)?;
        for i in 0..n {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    let m = DMatrix::identity(n, n) + hess * s;
    let denom = gz.dot(&d);
    if denom == 0.0 {
        return Err(Error::ProjectionDiverged("direction tangent to level set".into()));
    }
    let grad_s = -(m.transpose() * &gz) / denom;
    Ok((z, m + d * grad_s.transpose()))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Residual, chain and (optionally) the Jacobian at `omega`.
pub(crate) struct Evaluation {
    pub residual: Vec<f64>,
    pub chain: Vec<Vec<f64>>,
    pub jacobian: Option<DMatrix<f64>>,
    pub monodromy: Option<DMatrix<f64>>,
}

/// Residual layout, length `n + p`:
///
/// * `lambda_p = lambda_0`: `f_i(x_i) - lambda_i` for `i = 0..p-1`, then `x_p - x_0`;
/// * otherwise: `f_i(x_i) - lambda_i` for `i = 1..p`, then `pi(x_p) - x_0` where
///   `pi` projects onto `{f_0 = lambda_0}`.
pub(crate) fn evaluate(
    s: &RelaySystem,
    lambda: &Lambda,
    omega: &SwitchingVector,
    window_scale: f64,
    with_jacobian: bool,
) -> Result<Evaluation> {
    s.check_lambda(lambda)?;
    omega.check(s, window_scale)?;
    let n = s.dim();
    let p = s.modes();
    let closed = lambda.is_closed();
    let proj = ProjectionOptions::default();

    let mut chain = vec![omega.x.clone()];
    let mut phis = Vec::new();
    for i in 1..=p {
        let flow = s.flow(i);
        if with_jacobian {
            let (y, phi) = flow.flow_jacobian(omega.t[i - 1], &chain[i - 1])?;
            chain.push(y);
            phis.push(phi);
        } else {
            chain.push(flow.flow_map(omega.t[i - 1], &chain[i - 1])?);
        }
    }

    let levels: Vec<usize> = if closed { (0..p).collect() } else { (1..=p).collect() };
    let mut residual = Vec::with_capacity(n + p);
    for &i in &levels {
        residual.push(s.region(i).level(&chain[i], lambda.get(i))?);
    }
    let xp = &chain[p];
    let (closure_point, dpi) = if closed {
        (xp.clone(), None)
    } else if with_jacobian {
        let (z, dz) = projection_jacobian(s.region(0), lambda.get(0), xp, &proj)?;
        (z, Some(dz))
    } else {
        (project_step(s.region(0), lambda.get(0), xp, &proj)?.0, None)
    };
    residual.extend(closure_point.iter().zip(&omega.x).map(|(a, b)| a - b));

    if !with_jacobian {
        return Ok(Evaluation {
            residual,
            chain,
            jacobian: None,
            monodromy: None,
        });
    }

    // d x_i / d omega, accumulated along the chain.
    let mut ds: Vec<DMatrix<f64>> = Vec::with_capacity(p + 1);
    let mut d0 = DMatrix::zeros(n, n + p);
    d0.view_mut((0, 0), (n, n)).fill_with_identity();
    ds.push(d0);
    for i in 1..=p {
        let mut di = &phis[i - 1] * &ds[i - 1];
        let v = s.flow(i).field.eval(&chain[i])?;
        for r in 0..n {
            di[(r, n + i - 1)] += v[r];
        }
        ds.push(di);
    }
    let mut jac = DMatrix::zeros(n + p, n + p);
    for (row, &i) in levels.iter().enumerate() {
        let g = DVector::from_vec(s.region(i).gradient(&chain[i])?);
        let r = g.transpose() * &ds[i];
        jac.row_mut(row).copy_from(&r);
    }
    let closure = match dpi {
        Some(dz) => dz * &ds[p] - &ds[0],
        None => &ds[p] - &ds[0],
    };
    jac.view_mut((p, 0), (n, n + p)).copy_from(&closure);
    let monodromy = ds[p].view((0, 0), (n, n)).into_owned();
    Ok(Evaluation {
        residual,
        chain,
        jacobian: Some(jac),
        monodromy: Some(monodromy),
    })
}

/// Shooting residual `r(omega)`; zeros are periodic switching vectors.
pub fn shooting_residual(s: &RelaySystem, lambda: &Lambda, omega: &SwitchingVector) -> Result<Vec<f64>> {
    Ok(evaluate(s, lambda, omega, 1.0, false)?.residual)
}

/// Exact Jacobian of [`shooting_residual`] from the variational equations.
pub fn residual_jacobian(s: &RelaySystem, lambda: &Lambda, omega: &SwitchingVector) -> Result<DMatrix<f64>> {
    Ok(evaluate(s, lambda, omega, 1.0, true)?
        .jacobian
        .expect("jacobian requested"))
}

/// Transversality margins `|grad f_i(x_i) . V_i(x_i)|` at the switch points
/// `x_1, .., x_p` of a chain.
pub(crate) fn chain_margins(s: &RelaySystem, chain: &[Vec<f64>]) -> Result<Vec<f64>> {
    (1..chain.len())
        .map(|i| {
            let g = s.region(i).gradient(&chain[i])?;
            let v = s.flow(i).field.eval(&chain[i])?;
            Ok(g.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>().abs())
        })
        .collect()
}
