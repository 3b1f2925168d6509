//! Design layer: shaping-filter fitting, CgLp gain calibration, crossover
//! tuning and the complete CLOC design procedure.
//!
//! The CLOC controller is
//!
//! ```text
//! k_p (1 + ω_i/s) · (s/ω_d + 1)/(s/ω_t + 1) · FORE(ω_r, γ) · (s/(κω_r) + 1)/(s/ω_f + 1)
//! ```
//!
//! where the FORE resets on the zero crossings of its own input filtered by
//! `SF = Q(ζ, η) · 1/(s/ω_r + 1)`. The ladder ratios `ζ, η` are fitted so that
//! the CgLp first harmonic has an affine phase of slope `β ln 10` over
//! `[ω_l, ω_h]`; `κ` restores unit gain.

use std::cell::Cell;
use std::f64::consts::{FRAC_PI_2, LN_10};

use argmin::core::{CostFunction, Error as ArgminError, Executor, State, TerminationReason};
use argmin::solver::goldensectionsearch::GoldenSectionSearch;
use argmin::solver::neldermead::NelderMead;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hosidf::hosidf_shaped;
use crate::linsys::{
    log_grid, mag_db, make_crone_q, make_pid, realize, slope_per_decade, unwrap_phase, FrequencyResponse, RationalTF,
    ShapingFilterSpec,
};
use crate::resetsys::{make_fore, make_shaping_filter, Controller, ResetChain, ResetController};

/// Points of the log grid the fit objective is evaluated on.
pub const FIT_GRID_POINTS: usize = 40;
/// Objective evaluations allowed per simplex run.
pub const FIT_BUDGET: usize = 500;
/// `κ` search interval.
pub const KAPPA_BRACKET: (f64, f64) = (0.5, 5.0);
/// Values of `log10 ζ · log10 η` used to seed the simplex runs.
const SEED_PRODUCTS: [f64; 3] = [0.15, 0.4, 1.0];
const KAPPA_GRID_POINTS: usize = 60;

/// Lets a borrowed objective be handed to an argmin executor.
struct Borrowed<'a, T>(&'a T);

impl<T: CostFunction> CostFunction for Borrowed<'_, T> {
    type Param = T::Param;
    type Output = T::Output;

    fn cost(&self, p: &Self::Param) -> std::result::Result<Self::Output, ArgminError> {
        self.0.cost(p)
    }
}

// ---------------------------------------------------------------------------
// Shaping-filter fit

/// Result of [`fit_zeta_eta`].
#[derive(Debug, Clone, PartialEq)]
pub struct ZetaEtaFit {
    pub zeta: f64,
    pub eta: f64,
    /// RMS deviation (rad) of the first-harmonic phase from the best affine
    /// target of slope `β ln 10`.
    pub residual: f64,
    pub m: usize,
    pub n: usize,
    /// `κ` calibrated for the fitted ladder.
    pub kappa: f64,
    pub evaluations: usize,
}

/// Ladder ratios whose mid-band phase slope equals `slope` with `log10 ζ · log10 η = product`.
pub fn initial_guess(slope: f64, product: f64) -> Result<(f64, f64)> {
    if !(product > 0.0) || !slope.is_finite() {
        return Err(Error::Parameter(format!(
            "initial guess needs a positive product and finite slope, got {product}, {slope}"
        )));
    }
    let d = slope * product / FRAC_PI_2;
    let lz = (-d + (d * d + 4.0 * product).sqrt()) / 2.0;
    let le = product / lz;
    Ok((10f64.powf(lz), 10f64.powf(le)))
}

/// Minimal ladder lengths covering `[omega_l, omega_h]`, with `N ≥ M − 1`
/// so that `Q·K` stays proper.
pub fn ladder_spec(omega_l: f64, omega_h: f64, zeta: f64, eta: f64) -> Result<ShapingFilterSpec> {
    let cover = ShapingFilterSpec::covering(omega_l, omega_h, zeta, eta)?;
    let n = cover.n.max(cover.m.saturating_sub(1));
    ShapingFilterSpec::new(omega_l, omega_h, zeta, eta, cover.m, n)
}

/// The CgLp shaping problem on one band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CglpBand {
    pub omega_l: f64,
    pub omega_h: f64,
    pub omega_r: f64,
    pub omega_f: f64,
    pub gamma: f64,
}

impl CglpBand {
    /// Band with the step-7 corners `ω_r = ω_l`, `ω_f = 10 ω_h`.
    pub fn standard(omega_l: f64, omega_h: f64, gamma: f64) -> Result<Self> {
        if !(omega_l > 0.0 && omega_l < omega_h && omega_h.is_finite()) {
            return Err(Error::Parameter(format!(
                "band must satisfy 0 < omega_l < omega_h, got [{omega_l}, {omega_h}]"
            )));
        }
        Ok(Self {
            omega_l,
            omega_h,
            omega_r: omega_l,
            omega_f: 10.0 * omega_h,
            gamma,
        })
    }

    pub fn shaping_filter(&self, zeta: f64, eta: f64) -> Result<RationalTF> {
        let spec = ladder_spec(self.omega_l, self.omega_h, zeta, eta)?;
        make_shaping_filter(&make_crone_q(&spec), self.omega_r)
    }

    /// First-harmonic describing function of the bare FORE on `grid` with
    /// the reset shift of `sf`.
    fn element_response(&self, sf: &RationalTF, grid: &[f64]) -> Result<Vec<Complex64>> {
        let fore = make_fore(self.omega_r, self.gamma)?;
        grid.iter()
            .map(|w| Ok(hosidf_shaped(&fore, sf.phase(*w)?, *w, 1)?.first()[0]))
            .collect()
    }

    /// First harmonic of the full CgLp (FORE plus lead) for given ladder and `κ`.
    pub fn cglp_response(&self, zeta: f64, eta: f64, kappa: f64, grid: &[f64]) -> Result<Vec<Complex64>> {
        let sf = self.shaping_filter(zeta, eta)?;
        let lead = RationalTF::lead(kappa * self.omega_r, self.omega_f)?;
        self.element_response(&sf, grid)?
            .into_iter()
            .zip(grid)
            .map(|(g, w)| Ok(g * lead.freq_response(*w)?))
            .collect()
    }

    /// The CgLp as a reset chain.
    pub fn chain(&self, zeta: f64, eta: f64, kappa: f64) -> Result<ResetChain> {
        let fore = make_fore(self.omega_r, self.gamma)?;
        let lead = RationalTF::lead(kappa * self.omega_r, self.omega_f)?;
        ResetChain::new(RationalTF::unity(), fore, lead).with_reset_signal_filter(self.shaping_filter(zeta, eta)?)
    }
}

/// RMS deviation of `phase` from the best-fitting line of slope `slope` in
/// `log10 ω` (free intercept).
fn affine_residual(grid: &[f64], phase: &[f64], slope: f64) -> f64 {
    let dev: Vec<f64> = grid.iter().zip(phase).map(|(w, p)| p - slope * w.log10()).collect();
    let mean = dev.iter().sum::<f64>() / dev.len() as f64;
    (dev.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / dev.len() as f64).sqrt()
}

struct FitObjective<'a> {
    band: &'a CglpBand,
    grid: Vec<f64>,
    slope: f64,
    evaluations: Cell<usize>,
}

impl FitObjective<'_> {
    fn decode(p: &[f64]) -> (f64, f64) {
        (1.0 + p[0].exp(), 1.0 + p[1].exp())
    }

    fn evaluate(&self, zeta: f64, eta: f64) -> Result<(f64, f64)> {
        let sf = self.band.shaping_filter(zeta, eta)?;
        let element = self.band.element_response(&sf, &self.grid)?;
        let kappa = calibrate_on(self.band, &element, &self.grid)?;
        let lead = RationalTF::lead(kappa.kappa * self.band.omega_r, self.band.omega_f)?;
        let phase: Vec<f64> = element
            .iter()
            .zip(&self.grid)
            .map(|(g, w)| Ok((g * lead.freq_response(*w)?).arg()))
            .collect::<Result<_>>()?;
        Ok((
            affine_residual(&self.grid, &unwrap_phase(&phase), self.slope),
            kappa.kappa,
        ))
    }
}

impl CostFunction for FitObjective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, ArgminError> {
        self.evaluations.set(self.evaluations.get() + 1);
        let (zeta, eta) = Self::decode(p);
        // ratios too close to 1 make ladders explode in length
        if zeta < 1.05 || eta < 1.05 || zeta > 1e4 || eta > 1e4 {
            return Ok(f64::INFINITY);
        }
        Ok(self.evaluate(zeta, eta).map(|r| r.0).unwrap_or(f64::INFINITY))
    }
}

/// Fits the ladder ratios `(ζ, η)` so that the CgLp first-harmonic phase over
/// `[ω_l, ω_h]` is affine with slope `β ln 10`.
///
/// `ω_f = 10 ω_h`. Deterministic: the simplex runs start from fixed points
/// obtained by inverting the ladder slope formula.
pub fn fit_zeta_eta(beta: f64, omega_l: f64, omega_h: f64, gamma: f64, omega_r: f64) -> Result<ZetaEtaFit> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Parameter(format!("beta must be positive, got {beta}")));
    }
    let mut band = CglpBand::standard(omega_l, omega_h, gamma)?;
    band.omega_r = omega_r;
    fit_band(&band, beta)
}

/// [`fit_zeta_eta`] on an explicit band description.
pub fn fit_band(band: &CglpBand, beta: f64) -> Result<ZetaEtaFit> {
    let objective = FitObjective {
        band,
        grid: log_grid_n(band.omega_l, band.omega_h, FIT_GRID_POINTS)?,
        slope: beta * LN_10,
        evaluations: Cell::new(0),
    };
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    for product in SEED_PRODUCTS {
        let (z0, e0) = initial_guess(beta * LN_10, product)?;
        let x0 = vec![(z0 - 1.0).ln(), (e0 - 1.0).ln()];
        let simplex = vec![x0.clone(), vec![x0[0] + 0.3, x0[1]], vec![x0[0], x0[1] + 0.3]];
        let start = objective.evaluations.get();
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(1e-9)
            .map_err(|e| Error::Parameter(e.to_string()))?;
        let run = Executor::new(Borrowed(&objective), solver)
            .configure(|s| s.max_iters(FIT_BUDGET as u64))
            .run();
        let Ok(run) = run else { continue };
        let state = run.state();
        let converged = matches!(state.get_termination_reason(), Some(TerminationReason::SolverConverged))
            && objective.evaluations.get() - start <= FIT_BUDGET;
        let (Some(param), cost) = (state.get_best_param(), state.get_best_cost()) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| cost < b.1) {
            best = Some((param.clone(), cost, converged));
        }
    }
    let evaluations = objective.evaluations.get();
    let Some((param, residual, converged)) = best else {
        return Err(Error::NoConvergence {
            evaluations,
            zeta: f64::NAN,
            eta: f64::NAN,
            residual: f64::INFINITY,
        });
    };
    let (zeta, eta) = FitObjective::decode(&param);
    if !converged || !residual.is_finite() {
        return Err(Error::NoConvergence {
            evaluations,
            zeta,
            eta,
            residual,
        });
    }
    let spec = ladder_spec(band.omega_l, band.omega_h, zeta, eta)?;
    let (_, kappa) = objective.evaluate(zeta, eta)?;
    Ok(ZetaEtaFit {
        zeta,
        eta,
        residual,
        m: spec.m,
        n: spec.n,
        kappa,
        evaluations,
    })
}

fn log_grid_n(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    let (a, b) = (lo.log10(), hi.log10());
    if points < 2 || !(b > a) {
        return Err(Error::Parameter(format!(
            "cannot place {points} points on [{lo}, {hi}]"
        )));
    }
    Ok((0..points)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64))
        .collect())
}

// ---------------------------------------------------------------------------
// κ calibration

/// Result of a `κ` calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaCalibration {
    pub kappa: f64,
    /// Largest first-harmonic gain deviation from 0 dB on the calibration grid.
    pub max_deviation_db: f64,
}

struct KappaObjective<'a> {
    element: &'a [Complex64],
    grid: &'a [f64],
    omega_r: f64,
    omega_f: f64,
}

impl KappaObjective<'_> {
    fn deviation(&self, kappa: f64) -> f64 {
        let lead = |w: f64| Complex64::new(1.0, w / (kappa * self.omega_r)) / Complex64::new(1.0, w / self.omega_f);
        self.element
            .iter()
            .zip(self.grid)
            .map(|(g, w)| mag_db(g * lead(*w)).abs())
            .fold(0.0, f64::max)
    }
}

impl CostFunction for KappaObjective<'_> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, kappa: &f64) -> std::result::Result<f64, ArgminError> {
        Ok(self.deviation(*kappa))
    }
}

fn calibrate_on(band: &CglpBand, element: &[Complex64], grid: &[f64]) -> Result<KappaCalibration> {
    let objective = KappaObjective {
        element,
        grid,
        omega_r: band.omega_r,
        omega_f: band.omega_f,
    };
    let solver = GoldenSectionSearch::new(KAPPA_BRACKET.0, KAPPA_BRACKET.1)
        .and_then(|s| s.with_tolerance(1e-3))
        .map_err(|e| Error::Parameter(e.to_string()))?;
    let init = (KAPPA_BRACKET.0 * KAPPA_BRACKET.1).sqrt();
    let run = Executor::new(Borrowed(&objective), solver)
        .configure(|s| s.param(init).max_iters(200))
        .run()
        .map_err(|e| Error::Parameter(e.to_string()))?;
    let kappa = *run.state().get_best_param().unwrap_or(&init);
    Ok(KappaCalibration {
        kappa,
        max_deviation_db: objective.deviation(kappa),
    })
}

/// Calibrates `κ` so that the CgLp first-harmonic gain stays closest to
/// 0 dB (minimax) over `[ω_r, ω_f/2]`, for the reset shift `phi_profile(ω)`.
pub fn calibrate_kappa(
    omega_r: f64,
    omega_f: f64,
    gamma: f64,
    phi_profile: &dyn Fn(f64) -> f64,
) -> Result<KappaCalibration> {
    calibrate_kappa_over(omega_r, omega_f, gamma, phi_profile, omega_r, omega_f / 2.0)
}

/// [`calibrate_kappa`] over an explicit frequency range.
pub fn calibrate_kappa_over(
    omega_r: f64,
    omega_f: f64,
    gamma: f64,
    phi_profile: &dyn Fn(f64) -> f64,
    lo: f64,
    hi: f64,
) -> Result<KappaCalibration> {
    if !(omega_r > 0.0 && omega_r < omega_f && lo > 0.0 && lo < hi) {
        return Err(Error::Parameter(format!(
            "invalid calibration setup: omega_r = {omega_r}, omega_f = {omega_f}, range [{lo}, {hi}]"
        )));
    }
    let band = CglpBand {
        omega_l: lo,
        omega_h: hi,
        omega_r,
        omega_f,
        gamma,
    };
    let grid = log_grid_n(lo, hi, KAPPA_GRID_POINTS)?;
    let fore = make_fore(omega_r, gamma)?;
    let element: Vec<Complex64> = grid
        .iter()
        .map(|w| Ok(hosidf_shaped(&fore, phi_profile(*w), *w, 1)?.first()[0]))
        .collect::<Result<_>>()?;
    calibrate_on(&band, &element, &grid)
}

// ---------------------------------------------------------------------------
// Fit quality

/// How well a CgLp realizes the complex-order target over its band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CglpQuality {
    /// Least-squares phase slope (rad/decade) over the central 80% of the band.
    pub phase_slope: f64,
    pub target_slope: f64,
    pub gain_min_db: f64,
    pub gain_max_db: f64,
}

impl CglpQuality {
    pub fn slope_ratio(&self) -> f64 {
        self.phase_slope / self.target_slope
    }
}

/// Evaluates slope and gain flatness of a fitted CgLp.
pub fn cglp_quality(band: &CglpBand, beta: f64, zeta: f64, eta: f64, kappa: f64) -> Result<CglpQuality> {
    let (a, b) = (band.omega_l.log10(), band.omega_h.log10());
    let span = b - a;
    let central = log_grid_n(10f64.powf(a + 0.1 * span), 10f64.powf(b - 0.1 * span), 200)?;
    let phase = unwrap_phase(
        &band
            .cglp_response(zeta, eta, kappa, &central)?
            .iter()
            .map(|v| v.arg())
            .collect::<Vec<_>>(),
    );
    let full = log_grid(band.omega_l, band.omega_h, 100)?;
    let gains: Vec<f64> = band
        .cglp_response(zeta, eta, kappa, &full)?
        .iter()
        .map(|v| mag_db(*v))
        .collect();
    Ok(CglpQuality {
        phase_slope: slope_per_decade(&central, &phase),
        target_slope: beta * LN_10,
        gain_min_db: gains.iter().copied().fold(f64::INFINITY, f64::min),
        gain_max_db: gains.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

// ---------------------------------------------------------------------------
// Crossover tuning

/// Gain making `|k_p · controller · plant|` equal to one at `omega_c`.
///
/// Reset chains are homogeneous of degree one, so the first harmonic scales
/// linearly with `k_p` and the gain follows in closed form. The open loop
/// must be decreasing through `omega_c`.
pub fn tune_kp(controller: &Controller, plant: &RationalTF, omega_c: f64) -> Result<f64> {
    if !(omega_c > 0.0 && omega_c.is_finite()) {
        return Err(Error::Parameter(format!("omega_c must be positive, got {omega_c}")));
    }
    let gain = |w: f64| -> Result<f64> { Ok((controller.first_harmonic(w)? * plant.freq_response(w)?).norm()) };
    let at = gain(omega_c)?;
    let (below, above) = (gain(omega_c / 1.01)?, gain(omega_c * 1.01)?);
    if !(at > 0.0 && at.is_finite()) || !(below > at && at > above) {
        return Err(Error::NoCrossing { omega: omega_c });
    }
    Ok(1.0 / at)
}

/// Phase margin in degrees: `180° + ∠L(jω_c)` with the angle taken in `(−360°, 0°]`.
pub fn phase_margin_deg(controller: &Controller, plant: &RationalTF, omega_c: f64) -> Result<f64> {
    let l = controller.first_harmonic(omega_c)? * plant.freq_response(omega_c)?;
    let mut deg = l.arg().to_degrees();
    if deg > 0.0 {
        deg -= 360.0;
    }
    Ok(180.0 + deg)
}

/// Closed-loop stability of the base linear system (resets disabled) under
/// unity negative feedback.
pub fn base_linear_system_is_stable(controller: &Controller, plant: &RationalTF) -> Result<bool> {
    let open = controller.base_linear()?.series(plant);
    let ss = realize(&open)?;
    let d = ss.feedthrough();
    if (1.0 + d).abs() < 1e-12 {
        return Ok(false);
    }
    // x' = A x + B e, y = C x + D e, e = r − y  ⇒  e = (r − C x)/(1 + D)
    let a_cl = &ss.a - &ss.b * &ss.c / (1.0 + d);
    Ok(a_cl.complex_eigenvalues().iter().all(|l| l.re < 0.0))
}

// ---------------------------------------------------------------------------
// PID and CLOC designs

/// Tamed PID `k_p (1 + ω_i/s)(s/ω_d + 1)/(s/ω_t + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidDesign {
    pub omega_c: f64,
    pub omega_i: f64,
    pub omega_d: f64,
    pub omega_t: f64,
    pub k_p: f64,
}

impl PidDesign {
    /// Rule-of-thumb PID: `ω_i = ω_c/10`, `ω_d = ω_c/2.5`, `ω_t = 2.5 ω_c`,
    /// with `k_p` tuned for crossover at `ω_c`.
    pub fn rule_of_thumb(omega_c: f64, plant: &RationalTF) -> Result<Self> {
        let mut pid = PidDesign {
            omega_c,
            omega_i: omega_c / 10.0,
            omega_d: omega_c / 2.5,
            omega_t: 2.5 * omega_c,
            k_p: 1.0,
        };
        pid.k_p = tune_kp(&pid.controller()?, plant, omega_c)?;
        Ok(pid)
    }

    pub fn tf(&self) -> Result<RationalTF> {
        make_pid(self.k_p, self.omega_c, self.omega_i, self.omega_d, self.omega_t)
    }

    pub fn controller(&self) -> Result<Controller> {
        Ok(Controller::Linear(self.tf()?))
    }

    /// Same corners, `k_p` retuned for a crossover at `omega_c`.
    pub fn retuned(&self, omega_c: f64, plant: &RationalTF) -> Result<Self> {
        let unit = PidDesign { k_p: 1.0, ..*self };
        let k_p = tune_kp(&unit.controller()?, plant, omega_c)?;
        Ok(PidDesign { k_p, ..*self })
    }
}

/// A complete CLOC design.
#[derive(Debug, Clone, PartialEq)]
pub struct ClocDesign {
    pub omega_c: f64,
    pub omega_i: f64,
    pub omega_d: f64,
    pub omega_t: f64,
    pub beta: f64,
    pub omega_l: f64,
    pub omega_h: f64,
    pub omega_r: f64,
    pub omega_f: f64,
    pub kappa: f64,
    pub n: usize,
    pub m: usize,
    pub zeta: f64,
    pub eta: f64,
    pub gamma: f64,
    pub k_p: f64,
    /// RMS phase deviation of the ladder fit (rad); zero when no fit ran.
    pub fit_residual: f64,
    pub kappa_deviation_db: f64,
    pub phase_margin_deg: f64,
    pub pm_target_deg: Option<f64>,
    /// Step-8 advice when the phase-margin target is not met.
    pub guidance: Option<String>,
    pub chain: ResetChain,
}

impl ClocDesign {
    pub fn controller(&self) -> Controller {
        Controller::Reset(self.chain.clone())
    }

    /// Resets have no effect (γ = 1).
    pub fn is_linear_fallback(&self) -> bool {
        self.chain.reset.is_identity_reset()
    }

    /// Rebuilds the chain from the stored parameters.
    pub fn assemble(&self) -> Result<ResetChain> {
        assemble_chain(self)
    }

    /// Same design with `k_p` retuned for a crossover at `omega_c`.
    pub fn retuned(&self, omega_c: f64, plant: &RationalTF) -> Result<Self> {
        let unit = ClocDesign {
            k_p: 1.0,
            ..self.clone()
        };
        let k_p = tune_kp(&Controller::Reset(assemble_chain(&unit)?), plant, omega_c)?;
        let mut out = ClocDesign { k_p, ..self.clone() };
        out.chain = assemble_chain(&out)?;
        out.phase_margin_deg = phase_margin_deg(&out.controller(), plant, omega_c)?;
        Ok(out)
    }

    /// Checks every ordering invariant of the design.
    pub fn validate(&self) -> Result<()> {
        let fail = |what: &str| Err(Error::Infeasible(what.to_string()));
        if !(self.omega_i < self.omega_d && self.omega_d < self.omega_c && self.omega_c < self.omega_t) {
            return fail("corner ordering omega_i < omega_d < omega_c < omega_t violated");
        }
        if !(self.omega_l < self.omega_h) {
            return fail("empty phase-slope band");
        }
        let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs();
        if !rel(self.omega_r, self.omega_l) || !rel(self.omega_f, 10.0 * self.omega_h) {
            return fail("CgLp corners must be omega_r = omega_l and omega_f = 10 omega_h");
        }
        let spec = ShapingFilterSpec::new(self.omega_l, self.omega_h, self.zeta, self.eta, self.m, self.n)?;
        if spec.n + 1 < spec.m {
            return fail("shaping filter must be proper (N >= M - 1)");
        }
        if !(self.gamma.abs() <= 1.0) {
            return fail("|gamma| must not exceed 1");
        }
        Ok(())
    }
}

fn assemble_chain(d: &ClocDesign) -> Result<ResetChain> {
    let pre = make_pid(d.k_p, d.omega_c, d.omega_i, d.omega_d, d.omega_t)?;
    let fore: ResetController = make_fore(d.omega_r, d.gamma)?;
    let post = RationalTF::lead(d.kappa * d.omega_r, d.omega_f)?;
    let spec = ShapingFilterSpec::new(d.omega_l, d.omega_h, d.zeta, d.eta, d.m, d.n)?;
    let sf = make_shaping_filter(&make_crone_q(&spec), d.omega_r)?;
    ResetChain::new(pre, fore, post).with_reset_signal_filter(sf)
}

/// Inputs of [`design_cloc`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClocRequest {
    pub omega_c: f64,
    pub beta: f64,
    /// Half-width of the phase-slope band in decades around `ω_c`.
    pub band_half_decades: f64,
    pub gamma: f64,
    pub pm_target_deg: Option<f64>,
    pub plant: RationalTF,
}

/// Runs the eight-step CLOC design procedure.
pub fn design_cloc(req: &ClocRequest) -> Result<ClocDesign> {
    let ClocRequest {
        omega_c,
        beta,
        band_half_decades: half,
        gamma,
        pm_target_deg,
        ref plant,
    } = *req;
    if !(omega_c > 0.0 && omega_c.is_finite()) {
        return Err(Error::Parameter(format!("omega_c must be positive, got {omega_c}")));
    }
    if !(half > 0.0 && half.is_finite()) {
        return Err(Error::Parameter(format!(
            "band half-width must be positive, got {half}"
        )));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Parameter(format!("beta must be >= 0, got {beta}")));
    }
    if !(gamma.abs() <= 1.0) {
        return Err(Error::Parameter(format!("|gamma| must not exceed 1, got {gamma}")));
    }
    // steps 2, 3 and 7
    let (omega_i, omega_d, omega_t) = (omega_c / 10.0, omega_c / 1.5, 1.5 * omega_c);
    let (omega_l, omega_h) = (omega_c * 10f64.powf(-half), omega_c * 10f64.powf(half));
    let band = CglpBand::standard(omega_l, omega_h, gamma)?;

    // steps 4 to 6
    let (zeta, eta, m, n, fit_residual) = if beta > 0.0 {
        let fit = fit_band(&band, beta)?;
        (fit.zeta, fit.eta, fit.m, fit.n, fit.residual)
    } else {
        // equal ladders cancel to Q = 1: conventional shaping, zero slope
        let r = omega_h / omega_l;
        (r, r, 2, 2, 0.0)
    };
    let sf = band.shaping_filter(zeta, eta)?;
    let kappa_grid = log_grid_n(omega_l, omega_h, KAPPA_GRID_POINTS)?;
    let kappa = calibrate_on(&band, &band.element_response(&sf, &kappa_grid)?, &kappa_grid)?;

    let mut design = ClocDesign {
        omega_c,
        omega_i,
        omega_d,
        omega_t,
        beta,
        omega_l,
        omega_h,
        omega_r: band.omega_r,
        omega_f: band.omega_f,
        kappa: kappa.kappa,
        n,
        m,
        zeta,
        eta,
        gamma,
        k_p: 1.0,
        fit_residual,
        kappa_deviation_db: kappa.max_deviation_db,
        phase_margin_deg: f64::NAN,
        pm_target_deg,
        guidance: None,
        chain: ResetChain::new(
            RationalTF::unity(),
            make_fore(band.omega_r, gamma)?,
            RationalTF::unity(),
        ),
    };
    design.chain = assemble_chain(&design)?;
    design.k_p = tune_kp(&design.controller(), plant, omega_c)?;
    design.chain = assemble_chain(&design)?;
    design.validate()?;

    if !base_linear_system_is_stable(&design.controller(), plant)? {
        return Err(Error::Infeasible(format!(
            "base linear system is unstable in closed loop (omega_d = {omega_d:.4}, omega_t = {omega_t:.4} rad/s); \
             widen the linear differentiation band"
        )));
    }

    // step 8
    design.phase_margin_deg = phase_margin_deg(&design.controller(), plant, omega_c)?;
    if let Some(target) = pm_target_deg {
        if design.phase_margin_deg < target {
            design.guidance = Some(format!(
                "achieved phase margin {:.2} deg is below the target {:.2} deg; choose another gamma in (-1, 1) \
                 or go back to step 4 and correct beta accordingly",
                design.phase_margin_deg, target
            ));
        }
    }
    Ok(design)
}

/// Inputs of the reference comparison: `ω_c = 2π·100`, `β = 0.3`, a one-decade
/// band centred on `ω_c`, `γ = 0` and the unit mass plant.
pub fn reference_request() -> ClocRequest {
    ClocRequest {
        omega_c: 2.0 * std::f64::consts::PI * 100.0,
        beta: 0.3,
        band_half_decades: 0.5,
        gamma: 0.0,
        pm_target_deg: None,
        plant: RationalTF::double_integrator(1.0),
    }
}
