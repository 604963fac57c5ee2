use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::expr::Expression;

/// Winding number of `theta -> map(cos theta, sin theta)` around the origin.
///
/// The image is sampled at `samples` (at least 64) equally spaced angles and
/// the wrapped angle increments are summed. The sampling is refined until
/// every increment is below `pi / 2`, so the result is unambiguous.
pub fn winding_degree(map: &[Expression; 2], samples: usize) -> Result<i64> {
    if map.iter().any(|e| e.dimension() != 2) {
        return Err(Error::InvalidInput("winding map must be defined on R^2".into()));
    }
    let mut m = samples.max(64);
    loop {
        let mut angles = Vec::with_capacity(m + 1);
        for k in 0..=m {
            let th = 2.0 * PI * k as f64 / m as f64;
            let x = [th.cos(), th.sin()];
            let u = map[0].evaluate(&x)?;
            let v = map[1].evaluate(&x)?;
            let r = u.hypot(v);
            if !(r > 1e-12) {
                return Err(Error::VanishingImage { angle: th });
            }
            angles.push(v.atan2(u));
        }
        let mut total = 0.0;
        let mut max_step: f64 = 0.0;
        for w in angles.windows(2) {
            let mut d = w[1] - w[0];
            while d > PI {
                d -= 2.0 * PI;
            }
            while d <= -PI {
                d += 2.0 * PI;
            }
            max_step = max_step.max(d.abs());
            total += d;
        }
        if max_step < PI / 2.0 || m >= 1 << 20 {
            return Ok((total / (2.0 * PI)).round() as i64);
        }
        m *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn map(a: &str, b: &str) -> [Expression; 2] {
        [parse(a, 2).unwrap(), parse(b, 2).unwrap()]
    }

    #[test]
    fn classic_degrees() {
        assert_eq!(winding_degree(&map("x1", "x2"), 64).unwrap(), 1);
        assert_eq!(winding_degree(&map("1", "0"), 64).unwrap(), 0);
        assert_eq!(winding_degree(&map("x1^2 - x2^2", "2*x1*x2"), 64).unwrap(), 2);
        assert_eq!(winding_degree(&map("x1", "-x2"), 64).unwrap(), -1);
        // antipodal map has degree 1 on the circle
        assert_eq!(winding_degree(&map("-x1", "-x2"), 64).unwrap(), 1);
    }

    #[test]
    fn refines_fast_maps() {
        // z^20 = (z^5)^4 turns 20 times; 64 samples are too coarse
        let a = "(x1^5 - 10*x1^3*x2^2 + 5*x1*x2^4)";
        let b = "(5*x1^4*x2 - 10*x1^2*x2^3 + x2^5)";
        let re = format!("{a}^4 - 6*{a}^2*{b}^2 + {b}^4");
        let im = format!("4*{a}^3*{b} - 4*{a}*{b}^3");
        assert_eq!(winding_degree(&map(&re, &im), 64).unwrap(), 20);
    }

    #[test]
    fn vanishing_image() {
        assert!(matches!(
            winding_degree(&map("x1 - 1", "x2"), 64),
            Err(Error::VanishingImage { .. })
        ));
    }
}
