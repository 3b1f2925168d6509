//! Small dense-matrix helpers: conditioned inversion and the matrix exponential.

use nalgebra::{ComplexField, DMatrix};

use crate::error::{Error, Result};

/// Reciprocal condition numbers below this are treated as singular.
pub const RCOND_FLOOR: f64 = 1e-12;

fn norm1<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> f64 {
    m.column_iter()
        .map(|col| col.iter().map(|v| v.clone().modulus()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverts `m` through LU with partial pivoting, rejecting matrices whose
/// 1-norm reciprocal condition number is below [`RCOND_FLOOR`].
pub fn checked_inverse<T: ComplexField<RealField = f64>>(
    m: &DMatrix<T>,
    matrix: &'static str,
    omega: f64,
) -> Result<DMatrix<T>> {
    let singular = |rcond: f64| Error::KernelSingular { matrix, omega, rcond };
    if m.nrows() == 0 {
        return Ok(m.clone());
    }
    let inv = m.clone().lu().try_inverse().ok_or_else(|| singular(0.0))?;
    let (a, ai) = (norm1(m), norm1(&inv));
    let rcond = if a == 0.0 || !ai.is_finite() {
        0.0
    } else {
        1.0 / (a * ai)
    };
    if !(rcond >= RCOND_FLOOR) {
        return Err(singular(rcond));
    }
    Ok(inv)
}

const PADE_ORDER: usize = 6;

fn pade_coefficients() -> [f64; PADE_ORDER + 1] {
    // c_k = (2q-k)! q! / ((2q)! k! (q-k)!)
    let mut c = [0.0; PADE_ORDER + 1];
    c[0] = 1.0;
    let q = PADE_ORDER as f64;
    for k in 1..=PADE_ORDER {
        let kf = k as f64;
        c[k] = c[k - 1] * (q - kf + 1.0) / (kf * (2.0 * q - kf + 1.0));
    }
    c
}

/// Matrix exponential by scaling and squaring around a diagonal [6/6] Padé core.
///
/// The matrix is scaled so that its 1-norm is at most 1/2, where the Padé
/// truncation error is far below double precision.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return a.clone();
    }
    let norm = norm1(a);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let x = a / 2f64.powi(squarings);
    let c = pade_coefficients();
    let id = DMatrix::<f64>::identity(n, n);
    let mut num = &id * c[0];
    let mut den = &id * c[0];
    let mut power = id.clone();
    for (k, ck) in c.iter().enumerate().skip(1) {
        power = &power * &x;
        num += &power * *ck;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        den += &power * (sign * ck);
    }
    let mut result = den
        .lu()
        .solve(&num)
        .expect("Pade denominator is nonsingular for ||X|| <= 1/2");
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    #[test]
    fn expm_scalar_matches_exp() {
        for v in [-50.0, -3.0, -0.1, 0.0, 0.7, 4.0] {
            let m = DMatrix::from_element(1, 1, v);
            assert_relative_eq!(expm(&m)[(0, 0)], f64::exp(v), max_relative = 1e-13);
        }
    }

    #[test]
    fn expm_agrees_with_nalgebra() {
        let a = DMatrix::from_row_slice(3, 3, &[-2.0, 1.0, 0.3, 0.0, -7.5, 4.0, 1.2, -0.4, -0.9]);
        for scale in [0.01, 1.0, 12.0] {
            let m = &a * scale;
            let ours = expm(&m);
            let theirs = m.clone().exp();
            assert_relative_eq!(ours, theirs, max_relative = 1e-11, epsilon = 1e-14);
        }
    }

    #[test]
    fn expm_rotation_generator() {
        let t = 2.3;
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -t, t, 0.0]);
        let e = expm(&m);
        assert_relative_eq!(e[(0, 0)], t.cos(), epsilon = 1e-13);
        assert_relative_eq!(e[(1, 0)], t.sin(), epsilon = 1e-13);
    }

    #[test]
    fn inverse_rejects_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let err = checked_inverse(&m, "Lambda", 3.0).unwrap_err();
        assert!(matches!(err, Error::KernelSingular { matrix: "Lambda", .. }));
    }

    #[test]
    fn inverse_complex() {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.0, 1.0),
                Complex64::new(0.0, 2.0),
                Complex64::new(-1.0, 0.0),
                Complex64::new(3.0, -1.0),
            ],
        );
        let inv = checked_inverse(&m, "test", 1.0).unwrap();
        let id = &m * &inv;
        assert_relative_eq!(id[(0, 0)].re, 1.0, epsilon = 1e-14);
        assert!(id[(0, 1)].norm() < 1e-14);
    }
}
