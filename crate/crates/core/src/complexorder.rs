//! Exact frequency response of the complex-order operator `s^(alpha + j beta)`.
//!
//! On the imaginary axis `(jω)^(α+jβ) = ω^α e^{−βπ/2} · e^{j(απ/2 + β ln ω)}`,
//! so the gain in dB is affine in `log10 ω` with slope `20α` and the phase is
//! affine with slope `β ln 10`. The phase is returned unwrapped.

use std::f64::consts::{FRAC_PI_2, LN_10};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// The target order `alpha + j beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexOrderTarget {
    pub alpha: f64,
    pub beta: f64,
}

impl ComplexOrderTarget {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::Parameter(format!(
                "complex order must be finite, got {alpha} + j{beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }

    /// Gain in dB: `20 α log10 ω + 20 log10 e^{−βπ/2}`.
    pub fn gain_db(&self, omega: f64) -> Result<f64> {
        check_omega(omega)?;
        Ok(20.0 * self.alpha * omega.log10() + 20.0 * (-self.beta * FRAC_PI_2).exp().log10())
    }

    /// Unwrapped phase in rad: `απ/2 + β ln 10 · log10 ω`.
    pub fn phase(&self, omega: f64) -> Result<f64> {
        check_omega(omega)?;
        Ok(self.alpha * FRAC_PI_2 + self.beta * LN_10 * omega.log10())
    }

    /// Phase slope in rad per decade.
    pub fn phase_slope(&self) -> f64 {
        self.beta * LN_10
    }
}

fn check_omega(omega: f64) -> Result<()> {
    if omega > 0.0 && omega.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "frequency must be positive and finite, got {omega}"
        )))
    }
}

/// Complex value of `(jω)^(α + jβ)`.
pub fn complex_order_response(target: &ComplexOrderTarget, omega: f64) -> Result<Complex64> {
    let modulus = omega.powf(target.alpha) * (-target.beta * FRAC_PI_2).exp();
    Ok(Complex64::from_polar(modulus, target.phase(omega)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn target(alpha: f64, beta: f64) -> ComplexOrderTarget {
        ComplexOrderTarget::new(alpha, beta).unwrap()
    }

    #[test]
    fn identity_order() {
        for w in [1e-3, 1.0, 42.0, 1e6] {
            let g = complex_order_response(&target(0.0, 0.0), w).unwrap();
            assert_relative_eq!(g.re, 1.0, epsilon = 1e-15);
            assert_eq!(g.im, 0.0);
        }
    }

    #[test]
    fn pure_derivative() {
        let t = target(1.0, 0.0);
        let g = complex_order_response(&t, 10.0).unwrap();
        assert!(g.re.abs() < 1e-14);
        assert_relative_eq!(g.im, 10.0, max_relative = 1e-14);
        assert_relative_eq!(t.gain_db(10.0).unwrap(), 20.0, max_relative = 1e-14);
        assert_relative_eq!(t.phase(10.0).unwrap(), FRAC_PI_2);
    }

    #[test]
    fn imaginary_order_phase_per_decade() {
        let t = target(0.0, 0.4);
        let d = t.phase(10.0).unwrap() - t.phase(1.0).unwrap();
        assert_relative_eq!(d, 0.921_034_037_197_618, max_relative = 1e-14);
        assert_relative_eq!(d, 0.4 * LN_10);
    }

    #[test]
    fn phase_is_not_wrapped() {
        let t = target(0.0, 2.0);
        assert!(t.phase(1e6).unwrap() > 2.0 * std::f64::consts::PI);
    }

    #[test]
    fn rejects_nonpositive_frequency() {
        let t = target(0.5, 0.1);
        assert!(matches!(complex_order_response(&t, 0.0), Err(Error::Parameter(_))));
        assert!(t.phase(-1.0).is_err());
        assert!(ComplexOrderTarget::new(f64::NAN, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn phase_affine_in_log_frequency(
            alpha in -2.0..2.0f64, beta in -2.0..2.0f64,
            l1 in -4.0..6.0f64, l2 in -4.0..6.0f64,
        ) {
            let t = target(alpha, beta);
            let (w1, w2) = (10f64.powf(l1), 10f64.powf(l2));
            let d = t.phase(w2).unwrap() - t.phase(w1).unwrap();
            prop_assert!((d - beta * LN_10 * (w2 / w1).log10()).abs() < 1e-12);
        }

        #[test]
        fn gain_flat_for_zero_real_order(beta in -2.0..2.0f64, l in -4.0..6.0f64) {
            let t = target(0.0, beta);
            let g = complex_order_response(&t, 10f64.powf(l)).unwrap();
            prop_assert!((g.norm() - (-beta * FRAC_PI_2).exp()).abs() <= 1e-12 * g.norm());
        }

        #[test]
        fn multiplicative_in_order(
            a1 in -1.5..1.5f64, b1 in -1.5..1.5f64,
            a2 in -1.5..1.5f64, b2 in -1.5..1.5f64,
            l in -3.0..5.0f64,
        ) {
            let w = 10f64.powf(l);
            let g1 = complex_order_response(&target(a1, b1), w).unwrap();
            let g2 = complex_order_response(&target(a2, b2), w).unwrap();
            let g = complex_order_response(&target(a1 + a2, b1 + b2), w).unwrap();
            prop_assert!((g - g1 * g2).norm() <= 1e-10 * g.norm());
        }
    }
}
