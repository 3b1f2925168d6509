use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use cloc::complexorder::ComplexOrderTarget;
use cloc::config::{Config, Dimension};
use cloc::design_file::DesignFile;
use cloc::export::{write_hosidf, write_records, write_resets, write_table, write_trace};
use cloc::hosidf::{sweep, Analysis, HarmonicResponse, DEFAULT_N_MAX};
use cloc::linsys::{
    log_grid, mag_db, make_crone_q, unwrap_phase, FrequencyResponse, RationalTF, DEFAULT_POINTS_PER_DECADE,
};
use cloc::resetsys::{make_cglp, make_fore, make_shaping_filter, Controller, ResetChain};
use cloc::synthesis::{design_cloc, ladder_spec, ClocDesign, ClocRequest, PidDesign};
use cloc::timesim::{self, step_metrics, Loop, Signal, SimulationTrace, MIN_SENSITIVITY_CYCLES};
use cloc::{Error, Result};

use crate::Common;

/// Default sensitivity-sweep density (points per decade).
const SENSITIVITY_POINTS_PER_DECADE: usize = 5;

type Params = Vec<(String, String)>;

fn read_config(path: &Path) -> Result<Config> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    Config::parse(&text)
}

fn read_design(cfg: &Config) -> Result<(PathBuf, DesignFile)> {
    let path = PathBuf::from(cfg.text("design_file")?);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read design file {}: {e}", path.display())))?;
    Ok((path, DesignFile::parse(&text)?))
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(out)?;
    Ok(BufWriter::new(File::create(out.join(name))?))
}

fn param(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

/// Step size from the flag, then the config, then the `dt ≤ 1/(50 f_max)` rule.
fn resolve_dt(common: &Common, cfg: &Config, loops: &[&Loop]) -> Result<f64> {
    let rule = loops.iter().map(|l| l.recommended_dt()).fold(f64::INFINITY, f64::min);
    let dt = match common.dt {
        Some(dt) => dt,
        None => cfg.opt_quantity("dt", Dimension::Time)?.unwrap_or(rule),
    };
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    if dt > rule * (1.0 + 1e-12) {
        eprintln!("warning: dt = {dt:e} s exceeds the resolution rule dt <= {rule:e} s (1/(50 f_max))");
    }
    Ok(dt)
}

fn hz_label(omega: f64) -> String {
    let hz = omega / TAU;
    if (hz - hz.round()).abs() < 1e-9 * hz.max(1.0) {
        format!("{}hz", hz.round())
    } else {
        format!("{hz:.3}hz")
    }
}

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

// ---------------------------------------------------------------------------
// bode

fn reset_filter(cfg: &Config, omega_r: f64) -> Result<(RationalTF, Params)> {
    let kind = cfg.opt_text("reset_filter")?.unwrap_or_else(|| "none".into());
    match kind.as_str() {
        "none" => Ok((RationalTF::unity(), vec![param("reset_filter", "none")])),
        "lag" => Ok((
            RationalTF::first_order_lag(omega_r)?,
            vec![param("reset_filter", "lag")],
        )),
        "ladder" => {
            let (zeta, eta) = (cfg.number("zeta")?, cfg.number("eta")?);
            let (lo, hi) = (cfg.frequency("omega_l")?, cfg.frequency("omega_h")?);
            let spec = ladder_spec(lo, hi, zeta, eta)?;
            let sf = make_shaping_filter(&make_crone_q(&spec), omega_r)?;
            Ok((
                sf,
                vec![
                    param("reset_filter", "ladder"),
                    param("zeta", zeta),
                    param("eta", eta),
                    param("omega_l_rad_s", lo),
                    param("omega_h_rad_s", hi),
                    param("m", spec.m),
                    param("n", spec.n),
                ],
            ))
        }
        other => Err(Error::Config(format!(
            "reset_filter must be none, lag or ladder, got `{other}`"
        ))),
    }
}

/// Multiplies harmonic `n` by `P(j n ω)`.
fn with_plant(mut resp: HarmonicResponse, plant: &RationalTF) -> Result<HarmonicResponse> {
    for (row, n) in resp.harmonics.clone().into_iter().enumerate() {
        for (i, w) in resp.frequencies.iter().enumerate() {
            resp.values[row][i] *= plant.freq_response(n as f64 * w)?;
        }
        let phase: Vec<f64> = resp.values[row].iter().map(|v| v.arg()).collect();
        resp.phase_unwrapped[row] = unwrap_phase(&phase);
    }
    Ok(resp)
}

fn linear_as_response(tf: &RationalTF, grid: &[f64]) -> Result<HarmonicResponse> {
    let values: Vec<_> = grid.iter().map(|w| tf.freq_response(*w)).collect::<Result<_>>()?;
    let phase = unwrap_phase(&values.iter().map(|v| v.arg()).collect::<Vec<_>>());
    Ok(HarmonicResponse {
        frequencies: grid.to_vec(),
        harmonics: vec![1],
        values: vec![values],
        phase_unwrapped: vec![phase],
    })
}

pub fn bode(common: &Common) -> Result<()> {
    let cfg = read_config(&common.config)?;
    let system = cfg.text("system")?;
    let (lo, hi) = (cfg.frequency("grid_min")?, cfg.frequency("grid_max")?);
    let ppd = common.grid.unwrap_or(DEFAULT_POINTS_PER_DECADE);
    let n_max = common.harmonics.unwrap_or(DEFAULT_N_MAX);
    let target = match (cfg.opt_number("target_alpha")?, cfg.opt_number("target_beta")?) {
        (Some(a), Some(b)) => Some(ComplexOrderTarget::new(a, b)?),
        (None, None) => None,
        _ => {
            return Err(Error::Config(
                "target_alpha and target_beta must be given together".into(),
            ))
        }
    };
    let mut params: Params = vec![param("system", &system)];
    let (chain, extra, plant): (ResetChain, Option<(String, HarmonicResponse)>, Option<RationalTF>);
    let grid = log_grid(lo, hi, ppd)?;
    match system.as_str() {
        "fore" | "cglp" => {
            let omega_r = cfg.frequency("omega_r")?;
            let gamma = cfg.number("gamma")?;
            let base = if system == "fore" {
                ResetChain::new(RationalTF::unity(), make_fore(omega_r, gamma)?, RationalTF::unity())
            } else {
                let omega_f = cfg.frequency("omega_f")?;
                let kappa = cfg.number("kappa")?;
                params.extend([param("omega_f_rad_s", omega_f), param("kappa", kappa)]);
                make_cglp(omega_r, omega_f, gamma, kappa)?
            };
            params.extend([param("omega_r_rad_s", omega_r), param("gamma", gamma)]);
            let (sf, sf_params) = reset_filter(&cfg, omega_r)?;
            params.extend(sf_params);
            cfg.finish()?;
            chain = base.with_reset_signal_filter(sf)?;
            extra = None;
            plant = None;
        }
        "design" => {
            let (path, design) = read_design(&cfg)?;
            let include_plant = cfg
                .opt_bool("include_plant")?
                .ok_or_else(|| Error::Config("missing required key `include_plant`".into()))?;
            cfg.finish()?;
            params.extend([
                param("design_file", path.display()),
                param("include_plant", include_plant),
            ]);
            chain = design.cloc.chain.clone();
            plant = include_plant.then(|| design.plant());
            let pid = linear_as_response(&design.pid.tf()?, &grid)?;
            let pid = match &plant {
                Some(p) => with_plant(pid, p)?,
                None => pid,
            };
            extra = Some(("pid.csv".into(), pid));
        }
        other => {
            return Err(Error::Config(format!(
                "system must be fore, cglp or design, got `{other}`"
            )))
        }
    }
    let mut resp = sweep(Analysis::Chain(&chain), &grid, n_max)?;
    if let Some(p) = &plant {
        resp = with_plant(resp, p)?;
    }
    finish_bode(common, params, ppd, n_max, &resp, extra, target)
}

fn finish_bode(
    common: &Common,
    mut params: Params,
    ppd: usize,
    n_max: usize,
    resp: &HarmonicResponse,
    extra: Option<(String, HarmonicResponse)>,
    target: Option<ComplexOrderTarget>,
) -> Result<()> {
    params.extend([param("points_per_decade", ppd), param("n_max", n_max)]);
    write_hosidf(create(&common.out, "hosidf.csv")?, &params, resp)?;
    if let Some((name, other)) = extra {
        write_hosidf(create(&common.out, &name)?, &params, &other)?;
    }
    if let Some(t) = target {
        let mut tp = params.clone();
        tp.extend([param("target_alpha", t.alpha), param("target_beta", t.beta)]);
        let achieved_phase = resp.harmonic_phase(1).unwrap_or(&[]);
        let rows = resp
            .frequencies
            .iter()
            .zip(resp.first())
            .zip(achieved_phase)
            .map(|((w, h), p)| -> Result<Vec<f64>> {
                Ok(vec![
                    *w,
                    t.gain_db(*w)?,
                    t.phase(*w)?.to_degrees(),
                    mag_db(*h),
                    p.to_degrees(),
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        write_table(
            create(&common.out, "target.csv")?,
            &tp,
            &[
                "omega_rad_s",
                "target_mag_db",
                "target_phase_deg",
                "achieved_mag_db",
                "achieved_phase_deg",
            ],
            rows,
        )?;
    }
    println!(
        "wrote {} frequencies x {} harmonics to {}",
        resp.frequencies.len(),
        resp.harmonics.len(),
        common.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// design

pub fn report(d: &ClocDesign, pid: &PidDesign, plant_mass: f64) -> String {
    let hz = |w: f64| w / TAU;
    let mut r = String::new();
    let mut line = |s: String| {
        let _ = writeln!(r, "{s}");
    };
    line("CLOC design report".into());
    line(format!("plant: 1/({plant_mass} s^2)"));
    line(format!(
        "step 1  crossover        omega_c = {:.6} rad/s ({:.3} Hz)",
        d.omega_c,
        hz(d.omega_c)
    ));
    line(format!(
        "step 2  PID corners      omega_i = {:.6}, omega_d = {:.6}, omega_t = {:.6} rad/s; base linear system stable",
        d.omega_i, d.omega_d, d.omega_t
    ));
    line(format!(
        "step 3  phase-slope band [{:.6}, {:.6}] rad/s",
        d.omega_l, d.omega_h
    ));
    line(format!(
        "step 4  complex order    beta = {} (target slope {:.6} rad/decade)",
        d.beta,
        d.beta * std::f64::consts::LN_10
    ));
    line(format!(
        "step 5  ladder ratios    zeta = {:.6}, eta = {:.6}, residual = {:.3e} rad",
        d.zeta, d.eta, d.fit_residual
    ));
    line(format!("step 6  ladder lengths   M = {}, N = {}", d.m, d.n));
    line(format!(
        "step 7  CgLp corners     omega_r = {:.6}, omega_f = {:.6} rad/s, kappa = {:.6} (gain within +/-{:.3} dB)",
        d.omega_r, d.omega_f, d.kappa, d.kappa_deviation_db
    ));
    line(format!("        loop gain        k_p = {:.6e}", d.k_p));
    line(format!(
        "step 8  reset factor     gamma = {}; phase margin {:.3} deg",
        d.gamma, d.phase_margin_deg
    ));
    if let Some(t) = d.pm_target_deg {
        line(format!("        target margin    {t:.3} deg"));
    }
    if let Some(g) = &d.guidance {
        line(format!("        guidance: {g}"));
    }
    if d.is_linear_fallback() {
        line("note: linear fallback (gamma = 1, resets have no effect)".into());
    }
    line(format!(
        "reference PID: omega_i = {:.6}, omega_d = {:.6}, omega_t = {:.6} rad/s, k_p = {:.6e}",
        pid.omega_i, pid.omega_d, pid.omega_t, pid.k_p
    ));
    r
}

pub fn design(common: &Common) -> Result<()> {
    let cfg = read_config(&common.config)?;
    let req = ClocRequest {
        omega_c: cfg.frequency("omega_c")?,
        beta: cfg.number("beta")?,
        band_half_decades: cfg.number("band_half_decades")?,
        gamma: cfg.number("gamma")?,
        pm_target_deg: cfg.opt_quantity("pm_target", Dimension::Angle)?,
        plant: RationalTF::unity(),
    };
    let plant_mass = cfg.quantity("plant_mass", Dimension::Mass)?;
    cfg.finish()?;
    if !(plant_mass > 0.0) {
        return Err(Error::Config(format!("plant_mass must be positive, got {plant_mass}")));
    }
    if !(req.gamma.abs() < 1.0 || req.gamma == 1.0) {
        return Err(Error::Config(format!(
            "gamma must satisfy |gamma| < 1 (or equal 1), got {}",
            req.gamma
        )));
    }
    let plant = RationalTF::double_integrator(1.0 / plant_mass);
    let req = ClocRequest {
        plant: plant.clone(),
        ..req
    };
    let cloc = design_cloc(&req)?;
    let pid = PidDesign::rule_of_thumb(req.omega_c, &plant)?;
    let text = report(&cloc, &pid, plant_mass);
    let file = DesignFile { plant_mass, cloc, pid };
    fs::create_dir_all(&common.out)?;
    fs::write(common.out.join("design.txt"), file.to_text())?;
    fs::write(common.out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

// ---------------------------------------------------------------------------
// time-domain commands

struct Pair {
    cloc: Loop,
    pid: Loop,
}

fn loops_at(design: &DesignFile, omega: f64) -> Result<Pair> {
    let plant = design.plant();
    let cloc = design.cloc.retuned(omega, &plant)?;
    let pid = design.pid.retuned(omega, &plant)?;
    Ok(Pair {
        cloc: Loop::closed(cloc.controller(), plant.clone()),
        pid: Loop::closed(Controller::Linear(pid.tf()?), plant),
    })
}

fn base_params(path: &Path, dt: f64) -> Params {
    vec![param("design_file", path.display()), param("dt_s", dt)]
}

fn write_run(out: &Path, stem: &str, params: &Params, trace: &SimulationTrace) -> Result<()> {
    write_trace(create(out, &format!("{stem}.csv"))?, params, trace)?;
    write_resets(create(out, &format!("resets_{stem}.csv"))?, params, trace)
}

pub fn step(common: &Common) -> Result<()> {
    let cfg = read_config(&common.config)?;
    let (path, design) = read_design(&cfg)?;
    let bandwidths = cfg
        .opt_quantity_list("bandwidths", Dimension::Frequency)?
        .ok_or_else(|| Error::Config("missing required key `bandwidths`".into()))?;
    let duration = cfg.quantity("duration", Dimension::Time)?;
    if bandwidths.iter().any(|w| !(*w > 0.0)) || !(duration > 0.0) {
        return Err(Error::Config("bandwidths and duration must be positive".into()));
    }
    let pairs: Vec<(f64, Pair)> = bandwidths
        .iter()
        .map(|w| Ok((*w, loops_at(&design, *w)?)))
        .collect::<Result<_>>()?;
    let all: Vec<&Loop> = pairs.iter().flat_map(|(_, p)| [&p.cloc, &p.pid]).collect();
    let dt = resolve_dt(common, &cfg, &all)?;
    cfg.finish()?;
    let mut params = base_params(&path, dt);
    params.push(param("duration_s", duration));
    let mut rows = Vec::new();
    for (omega, pair) in &pairs {
        for (name, lp) in [("cloc", &pair.cloc), ("pid", &pair.pid)] {
            let trace = timesim::simulate(lp, &Signal::unit_step(), dt, duration)?;
            let m = step_metrics(&trace);
            let mut p = params.clone();
            p.extend([param("controller", name), param("bandwidth_rad_s", omega)]);
            write_run(&common.out, &format!("step_{name}_{}", hz_label(*omega)), &p, &trace)?;
            println!(
                "{name:>4} @ {:>10}: overshoot {} %, settling {} s, rise {} s",
                hz_label(*omega),
                m.overshoot.map_or("n/a".into(), |v| format!("{v:.3}")),
                m.settling_time.map_or("n/a".into(), |v| format!("{v:.5}")),
                m.rise_time.map_or("n/a".into(), |v| format!("{v:.5}")),
            );
            rows.push(vec![
                name.to_string(),
                (omega / TAU).to_string(),
                opt_field(m.overshoot),
                opt_field(m.settling_time),
                opt_field(m.rise_time),
                m.final_value.to_string(),
                trace.reset_instants.len().to_string(),
            ]);
        }
    }
    write_records(
        create(&common.out, "step_metrics.csv")?,
        &params,
        &[
            "controller",
            "bandwidth_hz",
            "overshoot_percent",
            "settling_time_s",
            "rise_time_s",
            "final_value",
            "resets",
        ],
        rows,
    )
}

/// Peak and RMS of the second half of a signal.
fn steady_stats(signal: &[f64]) -> (f64, f64) {
    let half = &signal[signal.len() / 2..];
    let peak = half.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rms = (half.iter().map(|v| v * v).sum::<f64>() / half.len().max(1) as f64).sqrt();
    (peak, rms)
}

pub fn track(common: &Common) -> Result<()> {
    let cfg = read_config(&common.config)?;
    let (path, design) = read_design(&cfg)?;
    let omega = cfg.frequency("reference_frequency")?;
    let duration = cfg.quantity("duration", Dimension::Time)?;
    if !(omega > 0.0 && duration > 0.0) {
        return Err(Error::Config(
            "reference_frequency and duration must be positive".into(),
        ));
    }
    let pair = loops_at(&design, design.cloc.omega_c)?;
    let dt = resolve_dt(common, &cfg, &[&pair.cloc, &pair.pid])?;
    cfg.finish()?;
    let mut params = base_params(&path, dt);
    params.extend([param("reference_rad_s", omega), param("duration_s", duration)]);
    let mut rows = Vec::new();
    for (name, lp) in [("cloc", &pair.cloc), ("pid", &pair.pid)] {
        let trace = timesim::track_sine(lp, omega, dt, duration)?;
        let mut p = params.clone();
        p.push(param("controller", name));
        write_run(&common.out, &format!("track_{name}"), &p, &trace)?;
        let (peak, rms) = steady_stats(&trace.error);
        println!("{name:>4}: steady-state |e| peak {peak:.6e}, rms {rms:.6e}");
        rows.push(vec![name.to_string(), peak.to_string(), rms.to_string()]);
    }
    write_records(
        create(&common.out, "track_summary.csv")?,
        &params,
        &["controller", "steady_peak_error", "steady_rms_error"],
        rows,
    )
}

pub fn sensitivity(common: &Common) -> Result<()> {
    let cfg = read_config(&common.config)?;
    let (path, design) = read_design(&cfg)?;
    let (lo, hi) = (cfg.frequency("sweep_min")?, cfg.frequency("sweep_max")?);
    let probe = cfg.opt_frequency("probe")?;
    let cycles = cfg.opt_integer("cycles")?.unwrap_or(MIN_SENSITIVITY_CYCLES);
    let ppd = common.grid.unwrap_or(SENSITIVITY_POINTS_PER_DECADE);
    let mut grid = log_grid(lo, hi, ppd)?;
    if let Some(p) = probe {
        if !(p > 0.0) {
            return Err(Error::Config("probe must be positive".into()));
        }
        grid.push(p);
        grid.sort_by(f64::total_cmp);
        grid.dedup();
    }
    let pair = loops_at(&design, design.cloc.omega_c)?;
    let dt = resolve_dt(common, &cfg, &[&pair.cloc, &pair.pid])?;
    cfg.finish()?;
    if cycles < MIN_SENSITIVITY_CYCLES {
        return Err(Error::Config(format!(
            "cycles must be at least {MIN_SENSITIVITY_CYCLES}"
        )));
    }
    let cloc = timesim::sensitivity_sweep(&pair.cloc, &grid, cycles, dt)?;
    let pid = timesim::sensitivity_sweep(&pair.pid, &grid, cycles, dt)?;
    let mut params = base_params(&path, dt);
    params.extend([param("cycles", cycles), param("points_per_decade", ppd)]);
    let peak = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    println!("peak ratio: CLOC {:.6}, PID {:.6}", peak(&cloc), peak(&pid));
    let rows = (0..grid.len()).map(|i| vec![grid[i], grid[i] / TAU, cloc[i], pid[i]]);
    write_table(
        create(&common.out, "sensitivity.csv")?,
        &params,
        &["omega_rad_s", "frequency_hz", "ratio_cloc", "ratio_pid"],
        rows,
    )
}
