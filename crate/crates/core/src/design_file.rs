//! Design files: a CLOC design, the PID it is compared with, and the plant,
//! written as configuration text in SI units.
//!
//! Keys (all required unless marked):
//!
//! | key | unit | meaning |
//! |---|---|---|
//! | `format` | – | must be `cloc-design-1` |
//! | `plant_mass` | kg | plant `1/(m s²)` |
//! | `omega_c`, `omega_i`, `omega_d`, `omega_t` | rad/s | crossover and PID corners |
//! | `beta` | – | complex order (imaginary part) |
//! | `omega_l`, `omega_h` | rad/s | phase-slope band |
//! | `omega_r`, `omega_f` | rad/s | CgLp corners |
//! | `kappa`, `zeta`, `eta`, `gamma`, `k_p` | – | CgLp and loop gains |
//! | `m`, `n` | – | shaping-filter zero and pole counts |
//! | `fit_residual` | – | RMS phase deviation of the ladder fit, rad |
//! | `kappa_deviation_db` | – | worst gain deviation after κ calibration, dB |
//! | `phase_margin` | deg | achieved first-harmonic phase margin |
//! | `pm_target` | deg | optional |
//! | `pid_omega_i`, `pid_omega_d`, `pid_omega_t` | rad/s | reference PID corners |
//! | `pid_k_p` | – | reference PID gain |
//!
//! The step-8 guidance text is a report item and is not stored.

use std::fmt::Write as _;

use crate::config::{format_quantity, Config, Dimension};
use crate::error::{Error, Result};
use crate::linsys::RationalTF;
use crate::resetsys::{make_fore, ResetChain};
use crate::synthesis::{ClocDesign, PidDesign};

pub const FORMAT_TAG: &str = "cloc-design-1";

/// Contents of a design file.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignFile {
    pub plant_mass: f64,
    pub cloc: ClocDesign,
    pub pid: PidDesign,
}

impl DesignFile {
    pub fn plant(&self) -> RationalTF {
        RationalTF::double_integrator(1.0 / self.plant_mass)
    }

    pub fn to_text(&self) -> String {
        let d = &self.cloc;
        let mut out = String::new();
        let mut put = |key: &str, value: String| {
            let _ = writeln!(out, "{key} = {value}");
        };
        let rad_s = |v: f64| format_quantity(v, "rad/s");
        let plain = |v: f64| format!("{v:?}");
        put("format", FORMAT_TAG.into());
        put("plant_mass", format_quantity(self.plant_mass, "kg"));
        put("omega_c", rad_s(d.omega_c));
        put("omega_i", rad_s(d.omega_i));
        put("omega_d", rad_s(d.omega_d));
        put("omega_t", rad_s(d.omega_t));
        put("beta", plain(d.beta));
        put("omega_l", rad_s(d.omega_l));
        put("omega_h", rad_s(d.omega_h));
        put("omega_r", rad_s(d.omega_r));
        put("omega_f", rad_s(d.omega_f));
        put("kappa", plain(d.kappa));
        put("m", d.m.to_string());
        put("n", d.n.to_string());
        put("zeta", plain(d.zeta));
        put("eta", plain(d.eta));
        put("gamma", plain(d.gamma));
        put("k_p", plain(d.k_p));
        put("fit_residual", plain(d.fit_residual));
        put("kappa_deviation_db", plain(d.kappa_deviation_db));
        put("phase_margin", format_quantity(d.phase_margin_deg, "deg"));
        if let Some(pm) = d.pm_target_deg {
            put("pm_target", format_quantity(pm, "deg"));
        }
        put("pid_omega_i", rad_s(self.pid.omega_i));
        put("pid_omega_d", rad_s(self.pid.omega_d));
        put("pid_omega_t", rad_s(self.pid.omega_t));
        put("pid_k_p", plain(self.pid.k_p));
        out
    }

    /// Parses and validates a design file; the controller chain is rebuilt
    /// from the stored parameters.
    pub fn parse(text: &str) -> Result<Self> {
        let c = Config::parse(text)?;
        let format = c.text("format")?;
        if format != FORMAT_TAG {
            return Err(Error::Config(format!(
                "unsupported design format `{format}` (expected {FORMAT_TAG})"
            )));
        }
        let w = |k: &str| c.frequency(k);
        let plant_mass = c.quantity("plant_mass", Dimension::Mass)?;
        if !(plant_mass > 0.0) {
            return Err(Error::Config(format!("plant_mass must be positive, got {plant_mass}")));
        }
        let mut cloc = ClocDesign {
            omega_c: w("omega_c")?,
            omega_i: w("omega_i")?,
            omega_d: w("omega_d")?,
            omega_t: w("omega_t")?,
            beta: c.number("beta")?,
            omega_l: w("omega_l")?,
            omega_h: w("omega_h")?,
            omega_r: w("omega_r")?,
            omega_f: w("omega_f")?,
            kappa: c.number("kappa")?,
            m: c.integer("m")?,
            n: c.integer("n")?,
            zeta: c.number("zeta")?,
            eta: c.number("eta")?,
            gamma: c.number("gamma")?,
            k_p: c.number("k_p")?,
            fit_residual: c.number("fit_residual")?,
            kappa_deviation_db: c.number("kappa_deviation_db")?,
            phase_margin_deg: c.quantity("phase_margin", Dimension::Angle)?,
            pm_target_deg: c.opt_quantity("pm_target", Dimension::Angle)?,
            guidance: None,
            chain: placeholder_chain(),
        };
        let pid = PidDesign {
            omega_c: cloc.omega_c,
            omega_i: w("pid_omega_i")?,
            omega_d: w("pid_omega_d")?,
            omega_t: w("pid_omega_t")?,
            k_p: c.number("pid_k_p")?,
        };
        c.finish()?;
        let invalid = |e: Error| Error::Config(format!("design file is inconsistent: {e}"));
        if !(cloc.kappa > 0.0 && cloc.k_p > 0.0 && pid.k_p > 0.0) {
            return Err(Error::Config("kappa, k_p and pid_k_p must be positive".into()));
        }
        if cloc.m > 64 || cloc.n > 64 {
            return Err(Error::Config(
                "shaping-filter ladders longer than 64 are not supported".into(),
            ));
        }
        cloc.validate().map_err(invalid)?;
        cloc.chain = cloc.assemble().map_err(invalid)?;
        pid.tf().map_err(invalid)?;
        Ok(Self { plant_mass, cloc, pid })
    }
}

/// Stand-in chain while the parameters are still being read.
fn placeholder_chain() -> ResetChain {
    ResetChain::new(
        RationalTF::unity(),
        make_fore(1.0, 1.0).expect("valid FORE"),
        RationalTF::unity(),
    )
}
