//! Standard normal distribution helpers.

use std::f64::consts::SQRT_2;

/// Standard normal CDF.
pub fn cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse of [`cdf`] on (0, 1), by Newton steps safeguarded with bisection.
pub fn inv_cdf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    let mut x = 0.0_f64;
    for _ in 0..200 {
        let fx = cdf(x) - p;
        if fx == 0.0 {
            return x;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = pdf(x);
        let mut next = if d > 0.0 { x - fx / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs().max(1.0) {
            return next;
        }
        x = next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert_eq!(cdf(0.0), 0.5);
        // Reference values from high-precision tables.
        assert!((cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-14);
        assert!((cdf(-2.0) - 0.022_750_131_948_179_2).abs() < 1e-14);
        assert!((cdf(-8.0) - 6.220_960_574_271_78e-16).abs() < 1e-25);
        assert!(cdf(f64::NEG_INFINITY) == 0.0);
        assert!(cdf(f64::INFINITY) == 1.0);
    }

    #[test]
    fn inverse_round_trip() {
        for &p in &[1e-10, 0.001, 0.2, 0.5, 0.8, 0.975, 1.0 - 1e-9] {
            let x = inv_cdf(p);
            assert!((cdf(x) - p).abs() < 1e-13 * p.max(1e-3), "p={p}");
        }
        assert!((inv_cdf(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
    }
}
