//! Flows of autonomous vector fields and their space derivatives.

pub mod dopri;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expression;
use dopri::{integrate, Solution, StepControl};

/// Integrator settings for one flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: Option<f64>,
    pub dense: bool,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings {
            rtol: 1e-10,
            atol: 1e-12,
            max_step: None,
            dense: true,
        }
    }
}

impl IntegratorSettings {
    pub fn control(&self) -> StepControl {
        StepControl {
            rtol: self.rtol,
            atol: self.atol,
            max_step: self.max_step.unwrap_or(f64::INFINITY),
            ..StepControl::default()
        }
    }
}

/// The vector field `V_k`, one expression per component.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<Expression>,
    label: usize,
}

impl VectorField {
    pub fn new(components: Vec<Expression>, label: usize) -> Result<Self> {
        let n = components.len();
        if n == 0 {
            return Err(Error::InvalidInput("vector field has no components".into()));
        }
        if let Some(bad) = components.iter().position(|c| c.dimension() != n) {
            return Err(Error::InvalidInput(format!(
                "component {} of field {label} is declared over dimension {}, expected {n}",
                bad + 1,
                components[bad].dimension()
            )));
        }
        Ok(VectorField { components, label })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn components(&self) -> &[Expression] {
        &self.components
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.evaluate(x)?;
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }

    /// Value and row-major Jacobian `DV(x)`.
    fn eval_with_jacobian(&self, x: &[f64], v: &mut [f64], jac: &mut [f64]) -> Result<()> {
        let n = self.dim();
        for (i, c) in self.components.iter().enumerate() {
            let (val, grad) = c.value_and_gradient(x)?;
            v[i] = val;
            jac[i * n..(i + 1) * n].copy_from_slice(&grad);
        }
        Ok(())
    }

    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let mut v = vec![0.0; n];
        let mut jac = vec![0.0; n * n];
        self.eval_with_jacobian(x, &mut v, &mut jac)?;
        Ok(DMatrix::from_row_slice(n, n, &jac))
    }
}

/// The flow `F_k` of a vector field together with its horizon `T_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub field: VectorField,
    pub horizon: f64,
    pub settings: IntegratorSettings,
}

/// Dense trajectory of one flow from a fixed start point over `[0, t]` (or
/// `[t, 0]` for backward integration).
#[derive(Debug, Clone)]
pub struct Trajectory {
    sign: f64,
    sol: Solution,
}

impl Trajectory {
    /// Signed end time.
    pub fn end_time(&self) -> f64 {
        self.sign * self.sol.span()
    }

    /// +1 for forward integration, -1 for backward.
    pub fn orientation(&self) -> f64 {
        self.sign
    }

    pub fn end_state(&self) -> &[f64] {
        self.sol.last()
    }

    /// Interpolated state at signed time `t`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let s = t * self.sign;
        let span = self.sol.span();
        if !(0.0..=span).contains(&s) {
            let (lo, hi) = if self.sign > 0.0 { (0.0, span) } else { (-span, 0.0) };
            return Err(Error::OutOfSpan { t, lo, hi });
        }
        Ok(self.sol.eval(s))
    }

    /// Underlying solution in the unsigned time `s = |t|`.
    pub fn solution(&self) -> &Solution {
        &self.sol
    }
}

impl Flow {
    pub fn new(field: VectorField, horizon: f64, settings: IntegratorSettings) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidInput(format!(
                "horizon of flow {} must be positive, got {horizon}",
                field.label()
            )));
        }
        if !(settings.rtol > 0.0 && settings.atol > 0.0) {
            return Err(Error::InvalidInput("integrator tolerances must be positive".into()));
        }
        Ok(Flow {
            field,
            horizon,
            settings,
        })
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !t.is_finite() || t.abs() > 10.0 * self.horizon * (1.0 + 1e-12) {
            return Err(Error::Integration(format!(
                "|t| = {} exceeds the cap 10*T = {}",
                t.abs(),
                10.0 * self.horizon
            )));
        }
        Ok(())
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "point has dimension {}, expected {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Right-hand side for integration in unsigned time with orientation `sign`.
    fn rhs(&self, sign: f64) -> impl Fn(&[f64], &mut [f64]) -> Result<()> + '_ {
        move |y: &[f64], out: &mut [f64]| {
            self.field.eval_into(y, out)?;
            if sign < 0.0 {
                out.iter_mut().for_each(|v| *v = -*v);
            }
            Ok(())
        }
    }

    fn solve(&self, t: f64, x: &[f64], h_init: Option<f64>, dense: bool) -> Result<Solution> {
        let sign = if t < 0.0 { -1.0 } else { 1.0 };
        integrate(
            &self.rhs(sign),
            x,
            t.abs(),
            &self.settings.control(),
            h_init,
            dense,
        )
    }

    /// `F_k(t, x)`; negative `t` integrates `-V` forward.
    pub fn flow_map(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        self.check_time(t)?;
        if t == 0.0 {
            return Ok(x.to_vec());
        }
        Ok(self.solve(t, x, None, false)?.last().to_vec())
    }

    /// Dense trajectory from `x` to signed time `t`.
    pub fn trajectory(&self, t: f64, x: &[f64]) -> Result<Trajectory> {
        self.check_point(x)?;
        self.check_time(t)?;
        let sign = if t < 0.0 { -1.0 } else { 1.0 };
        Ok(Trajectory {
            sign,
            sol: self.solve(t, x, None, true)?,
        })
    }

    /// Continues from a stored step state with the first step forced to the
    /// whole remaining `duration` (unsigned), in orientation `sign`.
    pub(crate) fn advance(&self, x: &[f64], duration: f64, sign: f64) -> Result<Vec<f64>> {
        if duration == 0.0 {
            return Ok(x.to_vec());
        }
        let sol = integrate(
            &self.rhs(sign),
            x,
            duration,
            &self.settings.control(),
            Some(duration),
            false,
        )?;
        Ok(sol.last().to_vec())
    }

    /// End state and `D_x F^t(x)` from the variational equation `M' = DV M`.
    pub fn flow_jacobian(&self, t: f64, x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        self.check_point(x)?;
        self.check_time(t)?;
        let n = self.dim();
        if t == 0.0 {
            return Ok((x.to_vec(), DMatrix::identity(n, n)));
        }
        let sign = if t < 0.0 { -1.0 } else { 1.0 };
        let mut y0 = vec![0.0; n + n * n];
        y0[..n].copy_from_slice(x);
        for i in 0..n {
            y0[n + i * n + i] = 1.0;
        }
        let rhs = |y: &[f64], out: &mut [f64]| -> Result<()> {
            let mut jac = vec![0.0; n * n];
            let (state, rest) = out.split_at_mut(n);
            self.field.eval_with_jacobian(&y[..n], state, &mut jac)?;
            let m = &y[n..];
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        acc += jac[i * n + k] * m[k * n + j];
                    }
                    rest[i * n + j] = sign * acc;
                }
            }
            if sign < 0.0 {
                state.iter_mut().for_each(|v| *v = -*v);
            }
            Ok(())
        };
        let sol = integrate(&rhs, &y0, t.abs(), &self.settings.control(), None, false)?;
        let end = sol.last();
        Ok((
            end[..n].to_vec(),
            DMatrix::from_row_slice(n, n, &end[n..]),
        ))
    }
}
