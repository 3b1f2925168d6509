//! Higher-order sinusoidal-input describing functions (HOSIDF) of reset
//! elements.
//!
//! For a reset element driven by `sin(ωt)` whose state jumps by `A_rho` at
//! the instants where the reset signal `sin(ωt + φ)` crosses zero, the
//! steady-state output contains only odd harmonics. [`hosidf`] covers the
//! conventional case `φ = 0`, [`hosidf_shaped`] an arbitrary shift and
//! [`chain_hosidf`] a reset element embedded between linear filters with a
//! shaping filter on the reset branch.
//!
//! The kernels (all real `n × n` except `Θ_φ`, a complex `n`-vector):
//!
//! ```text
//! Λ   = ω²I + A²            Δ  = I + e^{(π/ω)A}      Δ_ρ = I + A_ρ e^{(π/ω)A}
//! Γ   = Δ_ρ⁻¹ A_ρ Δ Λ⁻¹     Θ  = −(2ω²/π) Δ (Γ − Λ⁻¹)
//! Ω   = Δ − Δ Δ_ρ⁻¹ A_ρ Δ   Θ_φ = (−2jω e^{jφ}/π) Ω (ωI cos φ − A sin φ) Λ⁻¹ B
//! ```
//!
//! The shaped higher harmonics carry an extra factor `e^{j(n−1)φ}` relative
//! to the bare kernel expression `C(A − jnωI)⁻¹Θ_φ`; without it the phases
//! of `n ≥ 3` disagree with time-domain simulation whenever `φ ≠ 0`, while
//! magnitudes, the first harmonic and the `φ = 0` case are unaffected.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{checked_inverse, expm};
use crate::linsys::{mag_db, unwrap_phase, FrequencyResponse};
use crate::resetsys::{ResetChain, ResetController};

/// Harmonics 1, 3, 5, 7, 9.
pub const DEFAULT_N_MAX: usize = 9;

/// Describing-function kernel matrices at one frequency and reset shift.
#[derive(Debug, Clone)]
pub struct HosidfKernels {
    pub omega: f64,
    pub phi: f64,
    pub lambda: DMatrix<f64>,
    pub delta: DMatrix<f64>,
    pub delta_rho: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub theta: DMatrix<f64>,
    pub omega_kernel: DMatrix<f64>,
    pub theta_phi: DVector<Complex64>,
}

impl HosidfKernels {
    pub fn new(rc: &ResetController, omega: f64, phi: f64) -> Result<Self> {
        check_frequency(omega)?;
        if !phi.is_finite() {
            return Err(Error::Parameter(format!("reset shift must be finite, got {phi}")));
        }
        let a = &rc.base().a;
        let b = &rc.base().b;
        let a_rho = rc.reset_matrix();
        let n = a.nrows();
        let id = DMatrix::<f64>::identity(n, n);

        let lambda = &id * (omega * omega) + a * a;
        let lambda_inv = checked_inverse(&lambda, "Lambda", omega)?;
        let e = expm(&(a * (PI / omega)));
        let delta = &id + &e;
        let delta_rho = &id + a_rho * &e;
        let delta_rho_inv = checked_inverse(&delta_rho, "Delta_rho", omega)?;

        let gamma = &delta_rho_inv * a_rho * &delta * &lambda_inv;
        // Δ_ρ − A_ρΔ = I − A_ρ, so Γ − Λ⁻¹ and Ω factor through I − A_ρ:
        // identity resets give exact zeros instead of a cancellation residue.
        let not_reset = &id - a_rho;
        let jump = &delta_rho_inv * &not_reset;
        let theta = &delta * &jump * &lambda_inv * (2.0 * omega * omega / PI);
        let omega_kernel = &delta * &jump;

        let shaped = &omega_kernel * (&id * (omega * phi.cos()) - a * phi.sin()) * &lambda_inv * b;
        let scale = Complex64::new(0.0, -2.0 * omega / PI) * Complex64::from_polar(1.0, phi);
        let theta_phi = DVector::from_iterator(n, shaped.column(0).iter().map(|v| scale * v));

        Ok(Self {
            omega,
            phi,
            lambda,
            delta,
            delta_rho,
            gamma,
            theta,
            omega_kernel,
            theta_phi,
        })
    }
}

fn check_frequency(omega: f64) -> Result<()> {
    if omega > 0.0 && omega.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("frequency must be positive, got {omega}")))
    }
}

fn odd_harmonics(n_max: usize) -> Result<Vec<usize>> {
    if n_max == 0 || n_max.is_multiple_of(2) {
        return Err(Error::Parameter(format!(
            "highest harmonic must be a positive odd integer, got {n_max}"
        )));
    }
    Ok((1..=n_max).step_by(2).collect())
}

/// `(jω I − A)⁻¹` applied to `v`.
fn resolvent(a: &DMatrix<f64>, omega: f64, v: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    let n = a.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j {
            Complex64::new(0.0, omega)
        } else {
            Complex64::new(0.0, 0.0)
        };
        diag - a[(i, j)]
    });
    Ok(checked_inverse(&m, "jnwI - A", omega)? * v)
}

fn output(rc: &ResetController, x: &DVector<Complex64>) -> Complex64 {
    rc.base().c.row(0).iter().zip(x.iter()).map(|(c, x)| x * *c).sum()
}

/// Odd-harmonic values at a single frequency, conventional reset.
pub fn hosidf(rc: &ResetController, omega: f64, n_max: usize) -> Result<HarmonicResponse> {
    let harmonics = odd_harmonics(n_max)?;
    let k = HosidfKernels::new(rc, omega, 0.0)?;
    let b = rc.base().b.column(0).map(|v| Complex64::new(v, 0.0));
    let j_theta_b = (&k.theta * &rc.base().b).column(0).map(|v| Complex64::new(0.0, v));
    let mut values = Vec::with_capacity(harmonics.len());
    for &n in &harmonics {
        let nw = n as f64 * omega;
        let h = if n == 1 {
            output(rc, &resolvent(&rc.base().a, nw, &(&b + &j_theta_b))?) + rc.base().feedthrough()
        } else {
            output(rc, &resolvent(&rc.base().a, nw, &j_theta_b)?)
        };
        values.push(vec![h]);
    }
    Ok(HarmonicResponse::from_values(vec![omega], harmonics, values))
}

/// Odd-harmonic values at a single frequency when resets happen at the zero
/// crossings of `sin(ωt + phi)`.
pub fn hosidf_shaped(rc: &ResetController, phi: f64, omega: f64, n_max: usize) -> Result<HarmonicResponse> {
    let harmonics = odd_harmonics(n_max)?;
    let k = HosidfKernels::new(rc, omega, phi)?;
    let b = rc.base().b.column(0).map(|v| Complex64::new(v, 0.0));
    let mut values = Vec::with_capacity(harmonics.len());
    for &n in &harmonics {
        let nw = n as f64 * omega;
        // C (A − jnωI)⁻¹ Θ_φ = −C (jnωI − A)⁻¹ Θ_φ
        let reset_part = -output(rc, &resolvent(&rc.base().a, nw, &k.theta_phi)?);
        let g = if n == 1 {
            reset_part + output(rc, &resolvent(&rc.base().a, omega, &b)?) + rc.base().feedthrough()
        } else {
            reset_part * Complex64::from_polar(1.0, (n as f64 - 1.0) * phi)
        };
        values.push(vec![g]);
    }
    Ok(HarmonicResponse::from_values(vec![omega], harmonics, values))
}

/// Harmonics of a full reset chain: the pre-filter scales and shifts the
/// element's input, the shaping filter sets `phi = ∠SF(jω)`, and the
/// post-filter acts on each harmonic at its own frequency.
pub fn chain_hosidf(chain: &ResetChain, omega: f64, n_max: usize) -> Result<HarmonicResponse> {
    let phi = chain.reset_phase(omega)?;
    let element = hosidf_shaped(&chain.reset, phi, omega, n_max)?;
    let pre = chain.pre.freq_response(omega)?;
    let mut values = Vec::with_capacity(element.harmonics.len());
    for (row, &n) in element.harmonics.iter().enumerate() {
        let g = element.values[row][0];
        let post = chain.post.freq_response(n as f64 * omega)?;
        let h = if n == 1 {
            post * g * pre
        } else {
            post * g * Complex64::from_polar(pre.norm(), n as f64 * pre.arg())
        };
        values.push(vec![h]);
    }
    Ok(HarmonicResponse::from_values(vec![omega], element.harmonics, values))
}

/// What to evaluate along a frequency grid.
#[derive(Debug, Clone, Copy)]
pub enum Analysis<'a> {
    Conventional(&'a ResetController),
    Shaped { rc: &'a ResetController, phi: f64 },
    Chain(&'a ResetChain),
}

impl Analysis<'_> {
    pub fn at(&self, omega: f64, n_max: usize) -> Result<HarmonicResponse> {
        match *self {
            Analysis::Conventional(rc) => hosidf(rc, omega, n_max),
            Analysis::Shaped { rc, phi } => hosidf_shaped(rc, phi, omega, n_max),
            Analysis::Chain(chain) => chain_hosidf(chain, omega, n_max),
        }
    }
}

/// Evaluates `analysis` on every grid point (in parallel) and unwraps the
/// phase of each harmonic along the grid.
pub fn sweep(analysis: Analysis<'_>, grid: &[f64], n_max: usize) -> Result<HarmonicResponse> {
    if grid.is_empty() {
        return Err(Error::Parameter("frequency grid is empty".into()));
    }
    if grid.iter().any(|w| !(*w > 0.0 && w.is_finite())) || grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Parameter(
            "frequency grid must be positive and strictly increasing".into(),
        ));
    }
    let harmonics = odd_harmonics(n_max)?;
    let points: Vec<HarmonicResponse> = grid.par_iter().map(|w| analysis.at(*w, n_max)).collect::<Result<_>>()?;
    let values = (0..harmonics.len())
        .map(|row| points.iter().map(|p| p.values[row][0]).collect())
        .collect();
    Ok(HarmonicResponse::from_values(grid.to_vec(), harmonics, values))
}

/// Complex harmonic values indexed by (harmonic row, frequency).
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicResponse {
    pub frequencies: Vec<f64>,
    /// Odd harmonic indices; even harmonics are identically zero.
    pub harmonics: Vec<usize>,
    pub values: Vec<Vec<Complex64>>,
    /// Phase in rad, unwrapped along the frequency grid per harmonic.
    pub phase_unwrapped: Vec<Vec<f64>>,
}

impl HarmonicResponse {
    fn from_values(frequencies: Vec<f64>, harmonics: Vec<usize>, values: Vec<Vec<Complex64>>) -> Self {
        let phase_unwrapped = values
            .iter()
            .map(|row: &Vec<Complex64>| unwrap_phase(&row.iter().map(|v| v.arg()).collect::<Vec<_>>()))
            .collect();
        Self {
            frequencies,
            harmonics,
            values,
            phase_unwrapped,
        }
    }

    fn row(&self, n: usize) -> Option<usize> {
        self.harmonics.iter().position(|h| *h == n)
    }

    /// Value of harmonic `n` at grid index `i`; even harmonics return zero.
    pub fn value(&self, n: usize, i: usize) -> Option<Complex64> {
        if n >= 2 && n.is_multiple_of(2) && i < self.frequencies.len() {
            return Some(Complex64::new(0.0, 0.0));
        }
        self.row(n).and_then(|r| self.values[r].get(i).copied())
    }

    pub fn harmonic(&self, n: usize) -> Option<&[Complex64]> {
        self.row(n).map(|r| self.values[r].as_slice())
    }

    pub fn harmonic_phase(&self, n: usize) -> Option<&[f64]> {
        self.row(n).map(|r| self.phase_unwrapped[r].as_slice())
    }

    pub fn first(&self) -> &[Complex64] {
        &self.values[0]
    }

    pub fn mag_db(&self, n: usize) -> Option<Vec<f64>> {
        self.harmonic(n).map(|row| row.iter().map(|v| mag_db(*v)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsys::{log_grid, RationalTF};
    use crate::resetsys::{make_cglp, make_fore, make_shaping_filter};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Closed form of the shaped describing function for a scalar FORE.
    fn fore_closed_form(omega_r: f64, gamma: f64, phi: f64, omega: f64, n: usize) -> Complex64 {
        let a = omega_r;
        let l = omega * omega + a * a;
        let e = (-PI * a / omega).exp();
        let (d, dr) = (1.0 + e, 1.0 + gamma * e);
        let om = d - d * d * gamma / dr;
        let theta = Complex64::new(0.0, -2.0 * omega / PI)
            * Complex64::from_polar(1.0, phi)
            * (om * (omega * phi.cos() + a * phi.sin()) / l * a);
        let nw = n as f64 * omega;
        let reset = theta / Complex64::new(-a, -nw);
        if n == 1 {
            reset + a / Complex64::new(a, omega)
        } else {
            reset * Complex64::from_polar(1.0, (n as f64 - 1.0) * phi)
        }
    }

    #[test]
    fn identity_reset_kernels_vanish() {
        let rc = make_fore(2.0, 1.0).unwrap();
        for w in [0.3, 2.0, 40.0, 900.0] {
            let k = HosidfKernels::new(&rc, w, 0.4).unwrap();
            assert!(k.theta.norm() < 1e-12);
            assert!(k.omega_kernel.norm() < 1e-12);
            assert!(k.theta_phi.norm() < 1e-12);
        }
    }

    #[test]
    fn identity_reset_gives_linear_response() {
        let rc = make_fore(2.0, 1.0).unwrap();
        let h = hosidf(&rc, 5.0, 7).unwrap();
        let lin = rc.base().freq_response(5.0).unwrap();
        assert!((h.first()[0] - lin).norm() < 1e-14);
        for n in [3, 5, 7] {
            assert!(h.value(n, 0).unwrap().norm() < 1e-14);
        }
    }

    #[test]
    fn clegg_limit_phase() {
        let rc = make_fore(1.0, 0.0).unwrap();
        let h1 = hosidf(&rc, 100.0, 1).unwrap().first()[0];
        let deg = h1.arg().to_degrees();
        assert!((deg + 38.1).abs() < 0.5, "phase {deg}");
    }

    #[test]
    fn harmonic_nulling_at_matching_shift() {
        for gamma in [-0.5, 0.0, 0.5] {
            let (wr, w) = (3.0, 17.0);
            let rc = make_fore(wr, gamma).unwrap();
            let g = hosidf_shaped(&rc, -(w / wr).atan(), w, 9).unwrap();
            let lin = rc.base().freq_response(w).unwrap();
            assert!((g.first()[0] - lin).norm() < 1e-12);
            for n in [3, 5, 7, 9] {
                assert!(g.value(n, 0).unwrap().norm() < 1e-12);
            }
        }
    }

    #[test]
    fn even_harmonics_report_zero() {
        let rc = make_fore(1.0, 0.0).unwrap();
        let h = hosidf(&rc, 3.0, 5).unwrap();
        assert_eq!(h.value(2, 0), Some(Complex64::new(0.0, 0.0)));
        assert_eq!(h.value(4, 0), Some(Complex64::new(0.0, 0.0)));
        assert_eq!(h.value(7, 0), None);
    }

    #[test]
    fn rejects_bad_harmonic_count() {
        let rc = make_fore(1.0, 0.0).unwrap();
        assert!(hosidf(&rc, 1.0, 4).is_err());
        assert!(hosidf(&rc, 1.0, 0).is_err());
        assert!(hosidf(&rc, 0.0, 1).is_err());
    }

    #[test]
    fn singular_delta_rho_is_reported() {
        // a pure integrator base has e^{(pi/w)A} = 1, so gamma = -1 makes
        // Delta_rho = 1 + gamma vanish
        let base = crate::linsys::StateSpace::new(
            DMatrix::from_element(1, 1, 0.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 0.0),
        )
        .unwrap();
        let rc = ResetController::new(base, DMatrix::from_element(1, 1, -1.0)).unwrap();
        let err = hosidf(&rc, 2.0, 3).unwrap_err();
        assert!(
            matches!(
                err,
                Error::KernelSingular {
                    matrix: "Delta_rho",
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn chain_with_identity_reset_is_linear_series() {
        let chain = make_cglp(10.0, 1000.0, 1.0, 1.5)
            .unwrap()
            .with_reset_signal_filter(RationalTF::lead(3.0, 30.0).unwrap())
            .unwrap();
        for w in [1.0, 25.0, 400.0] {
            let h = chain_hosidf(&chain, w, 5).unwrap();
            assert!((h.first()[0] - chain.linear_response(w).unwrap()).norm() < 1e-12);
            assert!(h.value(3, 0).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn chain_pre_filter_shifts_harmonics() {
        let pre = RationalTF::lead(5.0, 50.0).unwrap();
        let rc = make_fore(4.0, 0.0).unwrap();
        let chain = ResetChain::new(pre.clone(), rc.clone(), RationalTF::unity());
        let w = 12.0;
        let h = chain_hosidf(&chain, w, 3).unwrap();
        let g = hosidf(&rc, w, 3).unwrap();
        let p = pre.freq_response(w).unwrap();
        assert!((h.first()[0] - g.first()[0] * p).norm() < 1e-12);
        let h3 = g.value(3, 0).unwrap() * Complex64::from_polar(p.norm(), 3.0 * p.arg());
        assert!((h.value(3, 0).unwrap() - h3).norm() < 1e-12);
    }

    #[test]
    fn sweep_single_point_and_identity_bode() {
        let rc = make_fore(2.0, 0.0).unwrap();
        let one = sweep(Analysis::Conventional(&rc), &[7.0], 5).unwrap();
        assert_eq!(one, hosidf(&rc, 7.0, 5).unwrap());

        let lin = make_fore(2.0, 1.0).unwrap();
        let grid = log_grid(0.1, 100.0, 50).unwrap();
        let s = sweep(Analysis::Conventional(&lin), &grid, 3).unwrap();
        for (i, w) in grid.iter().enumerate() {
            let g = lin.base().freq_response(*w).unwrap();
            assert!((s.values[0][i] - g).norm() <= 1e-9 * g.norm());
        }
    }

    #[test]
    fn sweep_unwraps_phase() {
        let rc = make_fore(1.0, 0.0).unwrap();
        let grid = log_grid(0.01, 1000.0, 100).unwrap();
        let lag = RationalTF::from_real_roots(1.0, &[], &[-1.0, -2.0, -3.0]);
        let chain = ResetChain::new(RationalTF::unity(), rc, lag);
        let s = sweep(Analysis::Chain(&chain), &grid, 1).unwrap();
        let ph = s.harmonic_phase(1).unwrap();
        assert!(ph.last().unwrap() < &-PI, "unwrapped end phase {}", ph.last().unwrap());
        assert!(ph.windows(2).all(|p| (p[1] - p[0]).abs() < PI));
    }

    #[test]
    fn sweep_rejects_bad_grid() {
        let rc = make_fore(1.0, 0.0).unwrap();
        assert!(sweep(Analysis::Conventional(&rc), &[], 1).is_err());
        assert!(sweep(Analysis::Conventional(&rc), &[1.0, 1.0], 1).is_err());
        assert!(sweep(Analysis::Conventional(&rc), &[-1.0], 1).is_err());
    }

    #[test]
    fn shaping_filter_k_only_nulls_harmonics_across_frequency() {
        let wr = 5.0;
        let rc = make_fore(wr, 0.0).unwrap();
        let sf = make_shaping_filter(&RationalTF::unity(), wr).unwrap();
        let chain = ResetChain::new(RationalTF::unity(), rc.clone(), RationalTF::unity())
            .with_reset_signal_filter(sf)
            .unwrap();
        for w in [0.5, 5.0, 80.0] {
            let h = chain_hosidf(&chain, w, 5).unwrap();
            assert!(h.value(3, 0).unwrap().norm() < 1e-12);
            assert!((h.first()[0] - rc.base().freq_response(w).unwrap()).norm() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn shaped_reduces_to_conventional_at_zero_shift(
            gamma in -0.95..1.0f64, lw in -1.5..2.5f64, wr in 0.1..20.0f64,
        ) {
            let rc = make_fore(wr, gamma).unwrap();
            let w = wr * 10f64.powf(lw);
            let h = hosidf(&rc, w, 9).unwrap();
            let g = hosidf_shaped(&rc, 0.0, w, 9).unwrap();
            for (a, b) in h.values.iter().zip(&g.values) {
                let (a, b) = (a[0], b[0]);
                prop_assert!((a - b).norm() <= 1e-10 * a.norm().max(1e-300));
            }
        }

        #[test]
        fn second_order_base_reduction(
            gamma1 in -0.9..0.9f64, gamma2 in -0.9..0.9f64, lw in -1.0..2.0f64,
        ) {
            let base = crate::linsys::realize(
                &RationalTF::from_real_roots(6.0, &[-1.5], &[-2.0, -3.0]),
            ).unwrap();
            let reset = DMatrix::from_diagonal(&DVector::from_row_slice(&[gamma1, gamma2]));
            let rc = ResetController::new(base, reset).unwrap();
            let w = 10f64.powf(lw);
            let h = hosidf(&rc, w, 5).unwrap();
            let g = hosidf_shaped(&rc, 0.0, w, 5).unwrap();
            for (a, b) in h.values.iter().zip(&g.values) {
                prop_assert!((a[0] - b[0]).norm() <= 1e-10 * a[0].norm().max(1e-300));
            }
        }

        #[test]
        fn matrix_kernels_match_scalar_closed_form(
            gamma in -0.95..0.95f64, phi in -3.0..0.5f64, lw in -1.0..2.5f64,
        ) {
            let wr = 2.0;
            let w = wr * 10f64.powf(lw);
            let rc = make_fore(wr, gamma).unwrap();
            let g = hosidf_shaped(&rc, phi, w, 5).unwrap();
            for (row, &n) in g.harmonics.iter().enumerate() {
                let want = fore_closed_form(wr, gamma, phi, w, n);
                prop_assert!((g.values[row][0] - want).norm() <= 1e-9 * want.norm().max(1e-12));
            }
        }
    }

    #[test]
    fn first_harmonic_gain_matches_closed_form_magnitude() {
        let g = hosidf(&make_fore(1.0, 0.5).unwrap(), 3.0, 1).unwrap().first()[0];
        assert_relative_eq!(
            g.norm(),
            fore_closed_form(1.0, 0.5, 0.0, 3.0, 1).norm(),
            max_relative = 1e-12
        );
    }
}
