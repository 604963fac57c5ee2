//! Dormand–Prince 5(4) with the standard 4th-order continuous extension.
//!
//! Integrates autonomous systems `y' = f(y)` forward over `[0, span]`. The step
//! sequence depends only on `y0`, `f` and the tolerances; the end of the span
//! only clips the final step. Integrating to an intermediate time therefore
//! reproduces the long run up to that point bit for bit.

use crate::error::{Error, Result};


const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            rtol: 1e-10,
            atol: 1e-12,
            max_step: f64::INFINITY,
            max_steps: 200_000,
        }
    }
}

/// Accepted steps of one integration. `times[0] = 0`, `times.last() = span`.
#[derive(Debug, Clone)]
pub struct Solution {
    dim: usize,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Five coefficient vectors per step, flattened; empty without dense output.
    dense: Vec<f64>,
}

impl Solution {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn span(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().expect("solution has at least the initial state")
    }

    pub fn step_count(&self) -> usize {
        self.times.len() - 1
    }

    pub fn has_dense(&self) -> bool {
        !self.dense.is_empty() || self.step_count() == 0
    }

    /// Index of the step containing `s` (the last step for `s == span`).
    pub fn locate(&self, s: f64) -> usize {
        let n = self.step_count();
        if n == 0 {
            return 0;
        }
        let idx = self.times.partition_point(|&t| t <= s);
        idx.saturating_sub(1).min(n - 1)
    }

    /// Continuous extension inside step `i`. Returns stored states exactly at
    /// the step ends.
    pub fn eval_in_step(&self, i: usize, s: f64, out: &mut [f64]) {
        let (a, b) = (self.times[i], self.times[i + 1]);
        if s == a {
            out.copy_from_slice(&self.states[i]);
            return;
        }
        if s == b {
            out.copy_from_slice(&self.states[i + 1]);
            return;
        }
        let theta = (s - a) / (b - a);
        let theta1 = 1.0 - theta;
        let d = self.dim;
        let base = i * 5 * d;
        let r = &self.dense[base..base + 5 * d];
        for j in 0..d {
            out[j] = r[j]
                + theta
                    * (r[d + j]
                        + theta1 * (r[2 * d + j] + theta * (r[3 * d + j] + theta1 * r[4 * d + j])));
        }
    }

    pub fn eval(&self, s: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        if self.step_count() == 0 {
            out.copy_from_slice(&self.states[0]);
        } else {
            self.eval_in_step(self.locate(s), s, &mut out);
        }
        out
    }
}

fn rms_norm(v: &[f64], scale: &[f64]) -> f64 {
    let n = v.len().max(1) as f64;
    (v.iter().zip(scale).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n).sqrt()
}

fn initial_step<F>(rhs: &F, y0: &[f64], f0: &[f64], ctl: &StepControl) -> Result<f64>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    let sk: Vec<f64> = y0.iter().map(|y| ctl.atol + ctl.rtol * y.abs()).collect();
    let d0 = rms_norm(y0, &sk);
    let d1 = rms_norm(f0, &sk);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(ctl.max_step);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    rhs(&y1, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms_norm(&diff, &sk) / h0;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dm).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(ctl.max_step))
}

/// Integrates `y' = rhs(y)` from `y0` over `[0, span]`.
///
/// `h_init` overrides the automatic initial step; `dense` keeps interpolation
/// coefficients for every accepted step.
pub fn integrate<F>(
    rhs: &F,
    y0: &[f64],
    span: f64,
    ctl: &StepControl,
    h_init: Option<f64>,
    dense: bool,
) -> Result<Solution>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    if !(span >= 0.0) || !span.is_finite() {
        return Err(Error::Integration(format!("invalid span {span}")));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Integration("non-finite initial state".into()));
    }
    let d = y0.len();
    let mut sol = Solution {
        dim: d,
        times: vec![0.0],
        states: vec![y0.to_vec()],
        dense: Vec::new(),
    };
    if span == 0.0 {
        return Ok(sol);
    }

    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; d];
    rhs(&y, &mut k1)?;
    let mut h = match h_init {
        Some(h) if h > 0.0 => h.min(ctl.max_step),
        _ => initial_step(rhs, &y, &k1, ctl)?,
    };

    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
    );
    let mut tmp = vec![0.0; d];
    let mut y_new = vec![0.0; d];
    let mut err_vec = vec![0.0; d];
    let mut scale = vec![0.0; d];

    let mut s = 0.0;
    let mut steps = 0usize;
    let mut rejected_last = false;

    while s < span {
        steps += 1;
        if steps > ctl.max_steps {
            return Err(Error::Integration(format!(
                "step budget of {} exhausted at s = {s}",
                ctl.max_steps
            )));
        }
        h = h.min(ctl.max_step);
        let last = s + h >= span;
        if s + h > span {
            h = span - s;
        }

        for j in 0..d {
            tmp[j] = y[j] + h * A21 * k1[j];
        }
        rhs(&tmp, &mut k2)?;
        for j in 0..d {
            tmp[j] = y[j] + h * (A31 * k1[j] + A32 * k2[j]);
        }
        rhs(&tmp, &mut k3)?;
        for j in 0..d {
            tmp[j] = y[j] + h * (A41 * k1[j] + A42 * k2[j] + A43 * k3[j]);
        }
        rhs(&tmp, &mut k4)?;
        for j in 0..d {
            tmp[j] = y[j] + h * (A51 * k1[j] + A52 * k2[j] + A53 * k3[j] + A54 * k4[j]);
        }
        rhs(&tmp, &mut k5)?;
        for j in 0..d {
            tmp[j] = y[j]
                + h * (A61 * k1[j] + A62 * k2[j] + A63 * k3[j] + A64 * k4[j] + A65 * k5[j]);
        }
        rhs(&tmp, &mut k6)?;
        for j in 0..d {
            y_new[j] = y[j]
                + h * (A71 * k1[j] + A73 * k3[j] + A74 * k4[j] + A75 * k5[j] + A76 * k6[j]);
        }
        rhs(&y_new, &mut k7)?;

        for j in 0..d {
            err_vec[j] = h
                * (E1 * k1[j] + E3 * k3[j] + E4 * k4[j] + E5 * k5[j] + E6 * k6[j] + E7 * k7[j]);
            scale[j] = ctl.atol + ctl.rtol * y[j].abs().max(y_new[j].abs());
        }
        let mut err = rms_norm(&err_vec, &scale);
        if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            err = f64::INFINITY;
        }

        if err <= 1.0 {
            if dense {
                sol.dense.reserve(5 * d);
                let start = sol.dense.len();
                sol.dense.resize(start + 5 * d, 0.0);
                let r = &mut sol.dense[start..];
                for j in 0..d {
                    let ydiff = y_new[j] - y[j];
                    let bspl = h * k1[j] - ydiff;
                    r[j] = y[j];
                    r[d + j] = ydiff;
                    r[2 * d + j] = bspl;
                    r[3 * d + j] = ydiff - h * k7[j] - bspl;
                    r[4 * d + j] = h
                        * (D1 * k1[j] + D3 * k3[j] + D4 * k4[j] + D5 * k5[j] + D6 * k6[j]
                            + D7 * k7[j]);
                }
            }
            s = if last { span } else { s + h };
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            sol.times.push(s);
            sol.states.push(y.clone());

            let mut fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if rejected_last {
                fac = fac.min(1.0);
            }
            rejected_last = false;
            h *= fac;
        } else {
            rejected_last = true;
            let fac = if err.is_finite() {
                (0.9 * err.powf(-0.2)).max(0.2)
            } else {
                0.2
            };
            h *= fac;
            if h < 1e-14 * s.abs().max(1.0) {
                return Err(Error::Integration(format!("step size underflow at s = {s}")));
            }
        }
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_decay(y: &[f64], out: &mut [f64]) -> Result<()> {
        out[0] = -y[0];
        Ok(())
    }

    #[test]
    fn exponential_decay() {
        let sol = integrate(&exp_decay, &[1.0], 3.0, &StepControl::default(), None, true).unwrap();
        assert!((sol.last()[0] - (-3.0f64).exp()).abs() < 1e-10);
        for s in [0.1, 0.77, 1.5, 2.999] {
            assert!((sol.eval(s)[0] - (-s).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_span_returns_initial_state() {
        let sol = integrate(&exp_decay, &[2.0], 0.0, &StepControl::default(), None, true).unwrap();
        assert_eq!(sol.last(), &[2.0]);
        assert_eq!(sol.eval(0.0), vec![2.0]);
    }

    #[test]
    fn step_endpoints_are_exact() {
        let sol = integrate(&exp_decay, &[1.0], 2.0, &StepControl::default(), None, true).unwrap();
        for (t, y) in sol.times.iter().zip(&sol.states) {
            assert_eq!(sol.eval(*t), *y);
        }
    }

    #[test]
    fn prefix_integration_is_bit_identical() {
        let rot = |y: &[f64], out: &mut [f64]| -> Result<()> {
            out[0] = -y[1];
            out[1] = y[0];
            Ok(())
        };
        let ctl = StepControl::default();
        let long = integrate(&rot, &[1.0, 0.0], 5.0, &ctl, None, false).unwrap();
        let k = long.step_count() / 2;
        let short = integrate(&rot, &[1.0, 0.0], long.times[k], &ctl, None, false).unwrap();
        assert_eq!(short.last(), long.states[k].as_slice());
    }

    #[test]
    fn blow_up_is_reported() {
        let f = |y: &[f64], out: &mut [f64]| -> Result<()> {
            out[0] = y[0] * y[0];
            Ok(())
        };
        assert!(integrate(&f, &[1.0], 2.0, &StepControl::default(), None, false).is_err());
    }
}
