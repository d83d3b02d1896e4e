//! Standard normal density and distribution function.

use crate::scalar::Real;

/// Abramowitz-Stegun 7.1.26 rational approximation, |error| <= 1.5e-7.
pub fn erf<T: Real>(x: T) -> T {
    let negative = x < T::zero();
    let x = x.abs();
    let p = T::from_f64_lossy(0.327_591_1);
    let a1 = T::from_f64_lossy(0.254_829_592);
    let a2 = T::from_f64_lossy(-0.284_496_736);
    let a3 = T::from_f64_lossy(1.421_413_741);
    let a4 = T::from_f64_lossy(-1.453_152_027);
    let a5 = T::from_f64_lossy(1.061_405_429);
    let t = T::one() / (T::one() + p * x);
    let poly = ((((a5 * t + a4) * t + a3) * t + a2) * t + a1) * t;
    let value = T::one() - poly * (-x * x).exp();
    if negative {
        -value
    } else {
        value
    }
}

pub fn norm_pdf<T: Real>(z: T) -> T {
    let inv_sqrt_tau = T::from_f64_lossy(1.0 / std::f64::consts::TAU.sqrt());
    inv_sqrt_tau * (-z * z * T::half()).exp()
}

pub fn norm_cdf<T: Real>(z: T) -> T {
    let inv_sqrt2 = T::from_f64_lossy(std::f64::consts::FRAC_1_SQRT_2);
    T::half() * (T::one() + erf(z * inv_sqrt2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert!((norm_cdf(0.0f64) - 0.5).abs() < 1e-7);
        assert!((norm_cdf(1.96f64) - 0.975_002_1).abs() < 1e-6);
        assert!((norm_cdf(-1.96f64) - 0.024_997_9).abs() < 1e-6);
        assert!((norm_pdf(0.0f64) - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!((erf(1.0f64) - 0.842_700_792_9).abs() < 1e-6);
    }

    #[test]
    fn cdf_is_monotone_and_bounded() {
        let mut last = 0.0f64;
        let mut z = -6.0;
        while z <= 6.0 {
            let c = norm_cdf(z);
            assert!((0.0..=1.0).contains(&c));
            assert!(c + 1e-9 >= last);
            last = c;
            z += 0.05;
        }
    }
}
