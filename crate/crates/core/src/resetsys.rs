//! Reset elements and reset chains.
//!
//! A reset controller is a linear base system whose state is multiplied by
//! the reset matrix `A_rho` whenever the reset signal crosses zero. A
//! [`ResetChain`] places one reset element between linear pre- and
//! post-filters and derives its reset signal by passing the element's input
//! through a shaping filter `SF(s)`; a unity shaping filter gives
//! conventional reset on input zero crossings.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linsys::{FrequencyResponse, RationalTF, StateSpace};

/// Linear base system plus diagonal reset matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ResetController {
    base: StateSpace,
    reset_matrix: DMatrix<f64>,
}

impl ResetController {
    /// Builds a reset controller. `reset_matrix` must be diagonal, match the
    /// base order and have entries in `[-1, 1]`.
    pub fn new(base: StateSpace, reset_matrix: DMatrix<f64>) -> Result<Self> {
        let n = base.order();
        if reset_matrix.shape() != (n, n) {
            return Err(Error::Parameter(format!(
                "reset matrix is {:?} but the base system has order {n}",
                reset_matrix.shape()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let v = reset_matrix[(i, j)];
                if i != j && v != 0.0 {
                    return Err(Error::Parameter(format!(
                        "reset matrix must be diagonal, found {v} at ({i}, {j})"
                    )));
                }
                if i == j && !(v.abs() <= 1.0) {
                    return Err(Error::Parameter(format!(
                        "reset coefficient {v} lies outside [-1, 1]; the reset element would diverge"
                    )));
                }
            }
        }
        Ok(Self { base, reset_matrix })
    }

    pub fn base(&self) -> &StateSpace {
        &self.base
    }

    pub fn reset_matrix(&self) -> &DMatrix<f64> {
        &self.reset_matrix
    }

    /// Diagonal of the reset matrix.
    pub fn gammas(&self) -> Vec<f64> {
        self.reset_matrix.diagonal().iter().copied().collect()
    }

    pub fn order(&self) -> usize {
        self.base.order()
    }

    /// True when the reset matrix is the identity, i.e. resets do nothing.
    pub fn is_identity_reset(&self) -> bool {
        self.gammas().iter().all(|g| *g == 1.0)
    }
}

/// Reset element between linear filters, with a shaped reset signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ResetChain {
    pub pre: RationalTF,
    pub reset: ResetController,
    pub post: RationalTF,
    /// Applied to the reset element's input to form the reset signal.
    pub reset_signal_filter: RationalTF,
}

impl ResetChain {
    /// Chain with conventional reset (unity shaping filter).
    pub fn new(pre: RationalTF, reset: ResetController, post: RationalTF) -> Self {
        Self {
            pre,
            reset,
            post,
            reset_signal_filter: RationalTF::unity(),
        }
    }

    pub fn with_reset_signal_filter(mut self, filter: RationalTF) -> Result<Self> {
        if !filter.is_proper() {
            return Err(Error::Improper {
                relative_degree: filter.relative_degree(),
            });
        }
        self.reset_signal_filter = filter;
        Ok(self)
    }

    /// Response of the linear series `pre · base · post`, i.e. the chain with
    /// resets disabled.
    pub fn linear_response(&self, omega: f64) -> Result<Complex64> {
        Ok(self.pre.freq_response(omega)? * self.reset.base.freq_response(omega)? * self.post.freq_response(omega)?)
    }

    /// Reset-instant shift `phi = ∠SF(jω)`.
    pub fn reset_phase(&self, omega: f64) -> Result<f64> {
        self.reset_signal_filter.phase(omega)
    }
}

/// A loop controller: either purely linear or a reset chain.
// Few controllers exist at a time; boxing the chain buys nothing.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum Controller {
    Linear(RationalTF),
    Reset(ResetChain),
}

impl Controller {
    /// Linear frequency response, or the first-harmonic describing function
    /// of a reset chain.
    pub fn first_harmonic(&self, omega: f64) -> Result<Complex64> {
        match self {
            Controller::Linear(tf) => tf.freq_response(omega),
            Controller::Reset(chain) => Ok(crate::hosidf::chain_hosidf(chain, omega, 1)?.first()[0]),
        }
    }

    /// The controller with its input scaled by `k` (for a reset chain the
    /// pre-filter is scaled, which leaves the reset instants unchanged).
    pub fn scaled(&self, k: f64) -> Controller {
        match self {
            Controller::Linear(tf) => Controller::Linear(tf.scaled(k)),
            Controller::Reset(chain) => Controller::Reset(ResetChain {
                pre: chain.pre.scaled(k),
                ..chain.clone()
            }),
        }
    }

    /// The controller with resets disabled.
    pub fn base_linear(&self) -> Result<RationalTF> {
        match self {
            Controller::Linear(tf) => Ok(tf.clone()),
            Controller::Reset(chain) => Ok(chain
                .pre
                .series(&state_space_tf(chain.reset.base())?)
                .series(&chain.post)),
        }
    }
}

/// Transfer function of a single-state base system `c b / (s − a) + d`.
fn state_space_tf(ss: &StateSpace) -> Result<RationalTF> {
    match ss.order() {
        0 => Ok(RationalTF::constant(ss.feedthrough())),
        1 => {
            let (a, b, c, d) = (ss.a[(0, 0)], ss.b[(0, 0)], ss.c[(0, 0)], ss.feedthrough());
            if d == 0.0 {
                Ok(RationalTF::from_real_roots(b * c, &[], &[a]))
            } else {
                // d (s − a) + c b = d (s − (a − c b / d))
                Ok(RationalTF::from_real_roots(d, &[a - c * b / d], &[a]))
            }
        }
        n => Err(Error::Parameter(format!(
            "transfer-function form is only provided for reset elements of order <= 1, got {n}"
        ))),
    }
}

/// First-order reset element: base `1/(s/omega_r + 1)`, reset matrix `[gamma]`.
///
/// `gamma = 1` is accepted as a linear fallback.
pub fn make_fore(omega_r: f64, gamma: f64) -> Result<ResetController> {
    if !(omega_r > 0.0 && omega_r.is_finite()) {
        return Err(Error::Parameter(format!("omega_r must be positive, got {omega_r}")));
    }
    if !(gamma.abs() <= 1.0) {
        return Err(Error::Parameter(format!(
            "|gamma| = {} exceeds 1; the reset element would diverge",
            gamma.abs()
        )));
    }
    let base = StateSpace::new(
        DMatrix::from_element(1, 1, -omega_r),
        DMatrix::from_element(1, 1, omega_r),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 0.0),
    )?;
    ResetController::new(base, DMatrix::from_element(1, 1, gamma))
}

/// Constant-gain lead-phase element: FORE at `omega_r` followed by the lead
/// `(s/(kappa omega_r) + 1)/(s/omega_f + 1)`.
pub fn make_cglp(omega_r: f64, omega_f: f64, gamma: f64, kappa: f64) -> Result<ResetChain> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::Parameter(format!("kappa must be positive, got {kappa}")));
    }
    if !(omega_r < omega_f) || !omega_f.is_finite() {
        return Err(Error::Parameter(format!(
            "CgLp band requires omega_r < omega_f, got {omega_r} and {omega_f}"
        )));
    }
    let fore = make_fore(omega_r, gamma)?;
    let lead = RationalTF::lead(kappa * omega_r, omega_f)?;
    Ok(ResetChain::new(RationalTF::unity(), fore, lead))
}

/// Reset-signal shaping filter `SF = Q · 1/(s/omega_r + 1)`.
pub fn make_shaping_filter(q: &RationalTF, omega_r: f64) -> Result<RationalTF> {
    let sf = q.series(&RationalTF::first_order_lag(omega_r)?);
    if !sf.is_proper() {
        return Err(Error::Improper {
            relative_degree: sf.relative_degree(),
        });
    }
    Ok(sf)
}

/// `psi = −phi − atan(omega/omega_r)`; zero means the reset jumps vanish.
pub fn psi(phi: f64, omega: f64, omega_r: f64) -> f64 {
    -phi - (omega / omega_r).atan()
}

/// True iff every eigenvalue of the reset matrix lies strictly inside the
/// unit circle.
pub fn check_open_loop_convergence(rc: &ResetController) -> bool {
    rc.reset_matrix.complex_eigenvalues().iter().all(|l| l.norm() < 1.0)
}
