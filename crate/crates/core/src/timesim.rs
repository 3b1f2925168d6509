//! Hybrid time-domain simulation of a unity-feedback loop with a linear or
//! reset controller.
//!
//! The loop is `e = r − y`, `u = C(e)`, `y = P(u)`. All linear dynamics are
//! assembled into one state vector (controller states followed by plant
//! states) and integrated with fixed-step classical RK4. For a reset chain the
//! reset signal `x_rl = SF(v)` is formed from the reset element's input `v`;
//! whenever it changes sign inside a step the crossing is located by linear
//! interpolation, the state is advanced to it, the reset states are mapped by
//! `A_ρ`, and integration resumes for the rest of the step.
//!
//! Without a plant the controller runs open loop: `e = r` and `y = u`.

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linsys::{realize, RationalTF, StateSpace};
use crate::resetsys::Controller;

/// States whose magnitude exceeds this are reported as divergence.
pub const DIVERGENCE_GUARD: f64 = 1e12;
/// Sign changes of the reset signal with both endpoints below this are ignored.
pub const GRAZING_GUARD: f64 = 1e-12;
/// Minimum number of reference periods for a sensitivity estimate.
pub const MIN_SENSITIVITY_CYCLES: usize = 20;

/// Reference signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Signal {
    Zero,
    /// `amplitude` for `t ≥ 0`.
    Step {
        amplitude: f64,
    },
    /// `amplitude · sin(omega t + phase)`.
    Sine {
        amplitude: f64,
        omega: f64,
        phase: f64,
    },
}

impl Signal {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Signal::Zero => 0.0,
            Signal::Step { amplitude } => amplitude,
            Signal::Sine {
                amplitude,
                omega,
                phase,
            } => amplitude * (omega * t + phase).sin(),
        }
    }

    pub fn unit_step() -> Self {
        Signal::Step { amplitude: 1.0 }
    }

    pub fn sine(omega: f64) -> Self {
        Signal::Sine {
            amplitude: 1.0,
            omega,
            phase: 0.0,
        }
    }
}

/// Controller and (optional) plant of the simulated loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Loop {
    pub controller: Controller,
    pub plant: Option<RationalTF>,
}

impl Loop {
    pub fn closed(controller: Controller, plant: RationalTF) -> Self {
        Self {
            controller,
            plant: Some(plant),
        }
    }

    pub fn open(controller: Controller) -> Self {
        Self {
            controller,
            plant: None,
        }
    }

    /// Largest pole or zero magnitude of any block, in rad/s.
    pub fn fastest_corner(&self) -> f64 {
        let mut tfs: Vec<&RationalTF> = Vec::new();
        match &self.controller {
            Controller::Linear(tf) => tfs.push(tf),
            Controller::Reset(chain) => {
                tfs.extend([&chain.pre, &chain.post, &chain.reset_signal_filter]);
            }
        }
        tfs.extend(self.plant.iter());
        let mut w = tfs.iter().map(|tf| tf.fastest_corner()).fold(0.0, f64::max);
        if let Controller::Reset(chain) = &self.controller {
            let a = &chain.reset.base().a;
            if a.nrows() > 0 {
                w = w.max(a.complex_eigenvalues().iter().map(|l| l.norm()).fold(0.0, f64::max));
            }
        }
        w
    }

    /// Largest step satisfying `dt ≤ 1/(50 f_max)`.
    pub fn recommended_dt(&self) -> f64 {
        let w = self.fastest_corner();
        if w > 0.0 {
            std::f64::consts::TAU / (50.0 * w)
        } else {
            1e-3
        }
    }
}

/// Recorded signals of one run, sampled on the fixed grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulationTrace {
    pub time: Vec<f64>,
    pub reference: Vec<f64>,
    pub output: Vec<f64>,
    pub error: Vec<f64>,
    pub control: Vec<f64>,
    /// Reset signal; zero for linear controllers.
    pub reset_signal: Vec<f64>,
    pub reset_instants: Vec<f64>,
    /// Euclidean norm of the reset-state jump at each reset instant.
    pub reset_jumps: Vec<f64>,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }
}

/// Linear output map `row · x + col · r`.
#[derive(Debug, Clone)]
struct OutputMap {
    row: RowDVector<f64>,
    feed: f64,
}

impl OutputMap {
    fn eval(&self, x: &DVector<f64>, r: f64) -> f64 {
        self.row.dot(&x.transpose()) + self.feed * r
    }
}

/// The assembled linear flow `x' = A x + B r` plus the reset map.
#[derive(Debug, Clone)]
struct LoopModel {
    a: DMatrix<f64>,
    b: DVector<f64>,
    y: OutputMap,
    e: OutputMap,
    u: OutputMap,
    rl: Option<OutputMap>,
    /// Indices of the reset states and their diagonal reset factors.
    resets: Vec<(usize, f64)>,
}

/// Controller with input `e` and outputs `u` and (for reset chains) `x_rl`.
struct ControllerModel {
    a: DMatrix<f64>,
    b: DVector<f64>,
    cu: RowDVector<f64>,
    du: f64,
    rl: Option<(RowDVector<f64>, f64)>,
    resets: Vec<(usize, f64)>,
}

fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(n, n);
    let mut k = 0;
    for b in blocks {
        out.view_mut((k, k), b.shape()).copy_from(b);
        k += b.nrows();
    }
    out
}

fn row(m: &DMatrix<f64>) -> RowDVector<f64> {
    RowDVector::from_iterator(m.ncols(), m.row(0).iter().copied())
}

fn col(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.nrows(), m.column(0).iter().copied())
}

fn controller_model(controller: &Controller) -> Result<ControllerModel> {
    match controller {
        Controller::Linear(tf) => {
            let ss = realize(tf)?;
            Ok(ControllerModel {
                b: col(&ss.b),
                cu: row(&ss.c),
                du: ss.feedthrough(),
                a: ss.a,
                rl: None,
                resets: Vec::new(),
            })
        }
        Controller::Reset(chain) => {
            // states: [pre, reset element, post, shaping filter]
            let pre = realize(&chain.pre)?;
            let el: &StateSpace = chain.reset.base();
            let post = realize(&chain.post)?;
            let sf = realize(&chain.reset_signal_filter)?;
            let (n1, n2, n3, n4) = (pre.order(), el.order(), post.order(), sf.order());
            let o2 = n1;
            let o3 = n1 + n2;
            let o4 = n1 + n2 + n3;
            let mut a = block_diag(&[&pre.a, &el.a, &post.a, &sf.a]);
            let n = a.nrows();
            // v = C1 x1 + D1 e feeds the element and the shaping filter
            let d1 = pre.feedthrough();
            let mut v_row = RowDVector::zeros(n);
            v_row.columns_mut(0, n1).copy_from(&row(&pre.c));
            // w = C2 x2 + D2 v feeds the post filter
            let d2 = el.feedthrough();
            let mut w_row = &v_row * d2;
            {
                let mut view = w_row.columns_mut(o2, n2);
                view += &row(&el.c);
            }
            let w_feed = d2 * d1;
            let (b2, b3, b4) = (col(&el.b), col(&post.b), col(&sf.b));
            {
                let mut view = a.view_mut((o2, 0), (n2, n));
                view += &(&b2 * &v_row);
            }
            {
                let mut view = a.view_mut((o3, 0), (n3, n));
                view += &(&b3 * &w_row);
            }
            {
                let mut view = a.view_mut((o4, 0), (n4, n));
                view += &(&b4 * &v_row);
            }
            let mut b = DVector::zeros(n);
            b.rows_mut(0, n1).copy_from(&col(&pre.b));
            b.rows_mut(o2, n2).copy_from(&(&b2 * d1));
            b.rows_mut(o3, n3).copy_from(&(&b3 * w_feed));
            b.rows_mut(o4, n4).copy_from(&(&b4 * d1));
            let d3 = post.feedthrough();
            let mut cu = &w_row * d3;
            {
                let mut view = cu.columns_mut(o3, n3);
                view += &row(&post.c);
            }
            let du = d3 * w_feed;
            let d4 = sf.feedthrough();
            let mut crl = &v_row * d4;
            {
                let mut view = crl.columns_mut(o4, n4);
                view += &row(&sf.c);
            }
            let resets = chain
                .reset
                .gammas()
                .into_iter()
                .enumerate()
                .filter(|(_, g)| *g != 1.0)
                .map(|(i, g)| (o2 + i, g))
                .collect();
            Ok(ControllerModel {
                a,
                b,
                cu,
                du,
                rl: Some((crl, d4 * d1)),
                resets,
            })
        }
    }
}

impl LoopModel {
    fn new(lp: &Loop) -> Result<Self> {
        let c = controller_model(&lp.controller)?;
        let nc = c.a.nrows();
        let Some(plant) = &lp.plant else {
            // open loop: e = r, y = u
            let u = OutputMap {
                row: c.cu.clone(),
                feed: c.du,
            };
            return Ok(LoopModel {
                a: c.a,
                b: c.b,
                e: OutputMap {
                    row: RowDVector::zeros(nc),
                    feed: 1.0,
                },
                y: u.clone(),
                u,
                rl: c.rl.map(|(row, feed)| OutputMap { row, feed }),
                resets: c.resets,
            });
        };
        let p = realize(plant)?;
        let np = p.order();
        let n = nc + np;
        let dp = p.feedthrough();
        let s = 1.0 + c.du * dp;
        if s.abs() < 1e-12 {
            return Err(Error::Parameter("algebraic loop 1 + D_c D_p is singular".into()));
        }
        // u = (Cu xc − Du Cp xp + Du r)/s,  e = r − Cp xp − Dp u
        let mut u_row = RowDVector::zeros(n);
        u_row.columns_mut(0, nc).copy_from(&(&c.cu / s));
        u_row.columns_mut(nc, np).copy_from(&(row(&p.c) * (-c.du / s)));
        let u = OutputMap {
            row: u_row,
            feed: c.du / s,
        };
        let mut e_row = &u.row * (-dp);
        {
            let mut view = e_row.columns_mut(nc, np);
            view += &(-row(&p.c));
        }
        let e = OutputMap {
            row: e_row,
            feed: 1.0 - dp * u.feed,
        };
        let mut y_row = &u.row * dp;
        {
            let mut view = y_row.columns_mut(nc, np);
            view += &row(&p.c);
        }
        let y = OutputMap {
            row: y_row,
            feed: dp * u.feed,
        };
        let mut a = block_diag(&[&c.a, &p.a]);
        {
            let mut view = a.view_mut((0, 0), (nc, n));
            view += &(&c.b * &e.row);
        }
        let bp = col(&p.b);
        {
            let mut view = a.view_mut((nc, 0), (np, n));
            view += &(&bp * &u.row);
        }
        let mut b = DVector::zeros(n);
        b.rows_mut(0, nc).copy_from(&(&c.b * e.feed));
        b.rows_mut(nc, np).copy_from(&(&bp * u.feed));
        let rl = c.rl.map(|(crl, drl)| {
            let mut r = &e.row * drl;
            {
                let mut view = r.columns_mut(0, nc);
                view += &crl;
            }
            OutputMap {
                row: r,
                feed: drl * e.feed,
            }
        });
        Ok(LoopModel {
            a,
            b,
            y,
            e,
            u,
            rl,
            resets: c.resets,
        })
    }

    fn order(&self) -> usize {
        self.a.nrows()
    }

    /// Classical RK4 step applied column-wise to `x` with the input samples
    /// `r0 = r(t)`, `rm = r(t + h/2)`, `r1 = r(t + h)`.
    fn rk4_stages(&self, x: &DMatrix<f64>, r0: f64, rm: f64, r1: f64, h: f64) -> DMatrix<f64> {
        let f = |x: &DMatrix<f64>, r: f64| {
            let mut dx = &self.a * x;
            for mut c in dx.column_iter_mut() {
                c.axpy(r, &self.b, 1.0);
            }
            dx
        };
        let k1 = f(x, r0);
        let k2 = f(&(x + &k1 * (h / 2.0)), rm);
        let k3 = f(&(x + &k2 * (h / 2.0)), rm);
        let k4 = f(&(x + &k3 * h), r1);
        x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    }

    /// One RK4 step of length `h` from `t`.
    fn rk4(&self, x: &DVector<f64>, t: f64, h: f64, input: &Signal) -> DVector<f64> {
        let xm = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
        let out = self.rk4_stages(&xm, input.at(t), input.at(t + h / 2.0), input.at(t + h), h);
        DVector::from_column_slice(out.as_slice())
    }

    /// Step matrices `x⁺ = M x + g0 r(t) + gm r(t + h/2) + g1 r(t + h)`,
    /// obtained by superposition since the flow is linear.
    fn step_matrices(&self, h: f64) -> (DMatrix<f64>, [DVector<f64>; 3]) {
        let n = self.order();
        let m = self.rk4_stages(&DMatrix::identity(n, n), 0.0, 0.0, 0.0, h);
        let zero = DMatrix::zeros(n, 1);
        let gain = |r0, rm, r1| DVector::from_column_slice(self.rk4_stages(&zero, r0, rm, r1, h).as_slice());
        (m, [gain(1.0, 0.0, 0.0), gain(0.0, 1.0, 0.0), gain(0.0, 0.0, 1.0)])
    }
}

/// Receives the simulated samples.
trait Sink {
    fn sample(&mut self, t: f64, r: f64, y: f64, e: f64, u: f64, rl: f64);
    fn reset(&mut self, _t: f64, _jump: f64) {}
}

impl Sink for SimulationTrace {
    fn sample(&mut self, t: f64, r: f64, y: f64, e: f64, u: f64, rl: f64) {
        self.time.push(t);
        self.reference.push(r);
        self.output.push(y);
        self.error.push(e);
        self.control.push(u);
        self.reset_signal.push(rl);
    }

    fn reset(&mut self, t: f64, jump: f64) {
        self.reset_instants.push(t);
        self.reset_jumps.push(jump);
    }
}

fn check_timing(dt: f64, t_end: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite() && t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::Parameter(format!(
            "need dt > 0 and t_end >= 0, got dt = {dt}, t_end = {t_end}"
        )));
    }
    let steps = (t_end / dt).round();
    if steps > 1e9 {
        return Err(Error::Parameter(format!("{steps} steps requested; increase dt")));
    }
    Ok(steps as usize)
}

fn run(model: &LoopModel, input: &Signal, dt: f64, steps: usize, sink: &mut dyn Sink) -> Result<()> {
    let n = model.order();
    let (m, [g0, gm, g1]) = model.step_matrices(dt);
    let mut x = DVector::zeros(n);
    let mut next = DVector::zeros(n);
    let rl_of = |x: &DVector<f64>, r: f64| model.rl.as_ref().map_or(0.0, |o| o.eval(x, r));
    let emit = |sink: &mut dyn Sink, x: &DVector<f64>, t: f64, r: f64, rl: f64| {
        sink.sample(t, r, model.y.eval(x, r), model.e.eval(x, r), model.u.eval(x, r), rl);
    };

    let r0 = input.at(0.0);
    emit(sink, &x, 0.0, r0, rl_of(&x, r0));
    let mut rl_prev = rl_of(&x, r0);
    for k in 0..steps {
        let t = k as f64 * dt;
        let t1 = (k + 1) as f64 * dt;
        next.gemv(1.0, &m, &x, 0.0);
        next.axpy(input.at(t), &g0, 1.0);
        next.axpy(input.at(t + dt / 2.0), &gm, 1.0);
        next.axpy(input.at(t1), &g1, 1.0);
        if !model.resets.is_empty() {
            let rl_next = rl_of(&next, input.at(t1));
            let crossed = rl_prev * rl_next < 0.0 && (rl_prev.abs() >= GRAZING_GUARD || rl_next.abs() >= GRAZING_GUARD);
            if crossed {
                let theta = rl_prev / (rl_prev - rl_next);
                let tc = t + theta * dt;
                let mut xc = model.rk4(&x, t, theta * dt, input);
                let mut jump = 0.0;
                for &(i, g) in &model.resets {
                    jump += ((1.0 - g) * xc[i]).powi(2);
                    xc[i] *= g;
                }
                sink.reset(tc, jump.sqrt());
                next = model.rk4(&xc, tc, t1 - tc, input);
            }
        }
        std::mem::swap(&mut x, &mut next);
        if x.amax() > DIVERGENCE_GUARD || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { time: t1 });
        }
        let r = input.at(t1);
        let rl = rl_of(&x, r);
        if rl != 0.0 {
            rl_prev = rl;
        }
        emit(sink, &x, t1, r, rl);
    }
    Ok(())
}

/// Simulates `lp` driven by `input` from zero initial state over `[0, t_end]`.
pub fn simulate(lp: &Loop, input: &Signal, dt: f64, t_end: f64) -> Result<SimulationTrace> {
    let steps = check_timing(dt, t_end)?;
    let model = LoopModel::new(lp)?;
    let mut trace = SimulationTrace::default();
    run(&model, input, dt, steps, &mut trace)?;
    Ok(trace)
}

/// Simulation with the sinusoidal reference `sin(omega t)`.
pub fn track_sine(lp: &Loop, omega: f64, dt: f64, t_end: f64) -> Result<SimulationTrace> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::Parameter(format!("omega must be positive, got {omega}")));
    }
    simulate(lp, &Signal::sine(omega), dt, t_end)
}

/// Step-response figures of merit. `None` marks a metric that is unavailable
/// because the response has not settled by the end of the trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    /// Mean of the last 5% of the output.
    pub final_value: f64,
    /// Peak excess over the final value, in percent of it.
    pub overshoot: Option<f64>,
    /// Time after which the output stays within 2% of the final value.
    pub settling_time: Option<f64>,
    /// 10–90% rise time.
    pub rise_time: Option<f64>,
}

/// Computes [`StepMetrics`] from a step-response trace.
pub fn step_metrics(trace: &SimulationTrace) -> StepMetrics {
    let y = &trace.output;
    let t = &trace.time;
    let unavailable = |final_value| StepMetrics {
        final_value,
        overshoot: None,
        settling_time: None,
        rise_time: None,
    };
    if y.len() < 20 {
        return unavailable(f64::NAN);
    }
    let tail = &y[y.len() - y.len() / 20..];
    let fv = tail.iter().sum::<f64>() / tail.len() as f64;
    let band = 0.02 * fv.abs();
    if fv == 0.0 || !fv.is_finite() || tail.iter().any(|v| (v - fv).abs() > band) {
        return unavailable(fv);
    }
    let peak = y.iter().map(|v| v * fv.signum()).fold(f64::NEG_INFINITY, f64::max);
    let overshoot = ((peak - fv.abs()) / fv.abs() * 100.0).max(0.0);
    let last_out = y.iter().rposition(|v| (v - fv).abs() > band);
    let settling_time = last_out.map_or(t[0], |i| t[(i + 1).min(t.len() - 1)]);
    let crossing = |level: f64| y.iter().position(|v| v * fv.signum() >= level * fv.abs()).map(|i| t[i]);
    let rise_time = match (crossing(0.1), crossing(0.9)) {
        (Some(a), Some(b)) => Some(b - a),
        _ => None,
    };
    StepMetrics {
        final_value: fv,
        overshoot: Some(overshoot),
        settling_time: Some(settling_time),
        rise_time,
    }
}

/// Accumulates `‖e‖²` and `‖r‖²` after a start time.
struct NormSink {
    from: f64,
    e2: f64,
    r2: f64,
}

impl Sink for NormSink {
    fn sample(&mut self, t: f64, r: f64, _y: f64, e: f64, _u: f64, _rl: f64) {
        if t >= self.from {
            self.e2 += e * e;
            self.r2 += r * r;
        }
    }
}

/// `‖e‖₂/‖r‖₂` for `r = sin(omega t)` over the second half of `cycles` periods.
pub fn sensitivity_estimate(lp: &Loop, omega: f64, cycles: usize, dt: f64) -> Result<f64> {
    if cycles < MIN_SENSITIVITY_CYCLES {
        return Err(Error::Parameter(format!(
            "at least {MIN_SENSITIVITY_CYCLES} cycles are required, got {cycles}"
        )));
    }
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::Parameter(format!("omega must be positive, got {omega}")));
    }
    let period = std::f64::consts::TAU / omega;
    let t_end = cycles as f64 * period;
    let steps = check_timing(dt, t_end)?;
    let model = LoopModel::new(lp)?;
    let mut sink = NormSink {
        from: (cycles / 2) as f64 * period,
        e2: 0.0,
        r2: 0.0,
    };
    run(&model, &Signal::sine(omega), dt, steps, &mut sink)?;
    Ok((sink.e2 / sink.r2).sqrt())
}

/// [`sensitivity_estimate`] at every frequency of `omegas`, run in parallel.
pub fn sensitivity_sweep(lp: &Loop, omegas: &[f64], cycles: usize, dt: f64) -> Result<Vec<f64>> {
    omegas
        .par_iter()
        .map(|w| sensitivity_estimate(lp, *w, cycles, dt))
        .collect()
}

/// Fourier coefficients of `signal` at harmonics `n·omega`, as describing-function
/// phasors (`a sin(nωt + θ)` maps to `a e^{jθ}`), over the last `periods` whole
/// periods of the record. The sample spacing should divide the period.
pub fn extract_harmonics(
    time: &[f64],
    signal: &[f64],
    omega: f64,
    harmonics: &[usize],
    periods: usize,
) -> Result<Vec<Complex64>> {
    if time.len() != signal.len() || time.len() < 3 {
        return Err(Error::Parameter("time and signal must have equal length >= 3".into()));
    }
    let dt = time[1] - time[0];
    let span = periods as f64 * std::f64::consts::TAU / omega;
    let count = (span / dt).round() as usize;
    if periods == 0 || count + 1 > time.len() {
        return Err(Error::Parameter(format!(
            "record of {} samples is shorter than {periods} periods",
            time.len()
        )));
    }
    let start = time.len() - 1 - count;
    Ok(harmonics
        .iter()
        .map(|&n| {
            // rectangle rule over whole periods is exact for trigonometric polynomials
            let sum: Complex64 = (start..start + count)
                .map(|i| signal[i] * Complex64::from_polar(1.0, -(n as f64) * omega * time[i]))
                .sum();
            Complex64::i() * sum * (2.0 / count as f64)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hosidf::{hosidf, hosidf_shaped};
    use crate::linalg::expm;
    use crate::linsys::FrequencyResponse;
    use crate::resetsys::{make_fore, ResetChain};
    use proptest::prelude::*;
    use std::f64::consts::{PI, TAU};

    fn fore_chain(gamma: f64) -> Controller {
        Controller::Reset(ResetChain::new(
            RationalTF::unity(),
            make_fore(1.0, gamma).unwrap(),
            RationalTF::unity(),
        ))
    }

    /// A loop resembling the reference design, small enough for unit tests.
    fn reset_loop(gamma: f64) -> Loop {
        let pre = crate::linsys::make_pid(100.0, 10.0, 1.0, 5.0, 20.0).unwrap();
        let chain = ResetChain::new(
            pre,
            make_fore(5.0, gamma).unwrap(),
            RationalTF::lead(7.0, 200.0).unwrap(),
        )
        .with_reset_signal_filter(RationalTF::first_order_lag(5.0).unwrap())
        .unwrap();
        Loop::closed(Controller::Reset(chain), RationalTF::double_integrator(1.0))
    }

    /// Steady-state open-loop harmonics of a FORE driven by `sin(ωt)`.
    fn simulated_harmonics(controller: Controller, omega: f64, harmonics: &[usize]) -> Vec<Complex64> {
        let period = TAU / omega;
        let per_period = 4000;
        let periods = 40;
        let trace = simulate(
            &Loop::open(controller),
            &Signal::sine(omega),
            period / per_period as f64,
            periods as f64 * period,
        )
        .unwrap();
        extract_harmonics(&trace.time, &trace.control, omega, harmonics, 10).unwrap()
    }

    #[test]
    fn step_matrices_match_direct_rk4() {
        let plant = RationalTF::from_real_roots(3.0, &[-2.0], &[-1.0, -5.0, -7.0]);
        let model = LoopModel::new(&Loop::closed(Controller::Linear(RationalTF::constant(2.0)), plant)).unwrap();
        let h = 0.013;
        let (m, [g0, gm, g1]) = model.step_matrices(h);
        let x = DVector::from_vec(vec![0.3, -1.2, 0.7]);
        let input = Signal::Sine {
            amplitude: 1.3,
            omega: 9.0,
            phase: 0.4,
        };
        let t = 0.21;
        let fast = &m * &x + &g0 * input.at(t) + &gm * input.at(t + h / 2.0) + &g1 * input.at(t + h);
        let direct = model.rk4(&x, t, h, &input);
        assert!((fast - direct).amax() < 1e-13);
    }

    #[test]
    fn zero_input_gives_zero_trace() {
        let trace = simulate(&reset_loop(0.0), &Signal::Zero, 1e-3, 0.5).unwrap();
        assert_eq!(trace.len(), 501);
        assert!(trace
            .output
            .iter()
            .chain(&trace.control)
            .chain(&trace.reset_signal)
            .all(|v| *v == 0.0));
        assert!(trace.reset_instants.is_empty());
    }

    #[test]
    fn error_is_reference_minus_output() {
        let trace = simulate(&reset_loop(0.0), &Signal::unit_step(), 1e-4, 0.5).unwrap();
        for i in 0..trace.len() {
            assert!((trace.error[i] - (trace.reference[i] - trace.output[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_reset_matches_linear_controller() {
        let lp = reset_loop(1.0);
        let linear = Loop::closed(
            Controller::Linear(lp.controller.base_linear().unwrap()),
            lp.plant.clone().unwrap(),
        );
        let a = simulate(&lp, &Signal::unit_step(), 1e-4, 1.0).unwrap();
        let b = simulate(&linear, &Signal::unit_step(), 1e-4, 1.0).unwrap();
        assert!(a.reset_instants.is_empty());
        let scale = b.output.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (ya, yb) in a.output.iter().zip(&b.output) {
            assert!((ya - yb).abs() < 1e-9 * scale, "{ya} vs {yb}");
        }
    }

    #[test]
    fn identity_reset_matches_exact_linear_step() {
        // the step response of x' = A x + B is exactly [x; 1] ← expm(h [A B; 0 0]) [x; 1]
        let lp = reset_loop(1.0);
        let model = LoopModel::new(&lp).unwrap();
        let n = model.order();
        let h = 1e-3;
        let mut aug = DMatrix::zeros(n + 1, n + 1);
        aug.view_mut((0, 0), (n, n)).copy_from(&(&model.a * h));
        aug.view_mut((0, n), (n, 1)).copy_from(&(&model.b * h));
        let phi = expm(&aug);
        let trace = simulate(&lp, &Signal::unit_step(), 1e-5, 1.0).unwrap();
        let mut z = DVector::zeros(n + 1);
        z[n] = 1.0;
        for k in 1..=1000 {
            z = &phi * &z;
            let x = z.rows(0, n).into_owned();
            let y = model.y.eval(&x, 1.0);
            assert!(
                (y - trace.output[k * 100]).abs() < 1e-9,
                "t = {}: {y} vs {}",
                k as f64 * h,
                trace.output[k * 100]
            );
        }
    }

    #[test]
    fn fore_first_harmonic_matches_describing_function() {
        for gamma in [-0.5, 0.0, 0.5] {
            for omega in [0.5, 2.0, 10.0] {
                let sim = simulated_harmonics(fore_chain(gamma), omega, &[1, 3]);
                let df = hosidf(&make_fore(1.0, gamma).unwrap(), omega, 3).unwrap();
                for (k, n) in [1usize, 3].iter().enumerate() {
                    let h = df.value(*n, 0).unwrap();
                    let rel = (sim[k].norm() - h.norm()).abs() / h.norm();
                    let dphase = (sim[k] / h).arg().to_degrees().abs();
                    assert!(
                        rel < 0.02 && dphase < 1.0,
                        "gamma {gamma} omega {omega} n {n}: {} vs {h}",
                        sim[k]
                    );
                }
            }
        }
    }

    #[test]
    fn shaped_reset_matches_shaped_describing_function() {
        let omega = 4.0;
        let sf = RationalTF::lead(1.0, 30.0)
            .unwrap()
            .series(&RationalTF::first_order_lag(2.0).unwrap());
        let phi = sf.phase(omega).unwrap();
        let chain = ResetChain::new(RationalTF::unity(), make_fore(1.0, 0.0).unwrap(), RationalTF::unity())
            .with_reset_signal_filter(sf)
            .unwrap();
        let sim = simulated_harmonics(Controller::Reset(chain), omega, &[1, 3, 5]);
        let df = hosidf_shaped(&make_fore(1.0, 0.0).unwrap(), phi, omega, 5).unwrap();
        for (k, n) in [1usize, 3, 5].iter().enumerate() {
            let h = df.value(*n, 0).unwrap();
            assert!((sim[k] - h).norm() < 0.02 * h.norm(), "n {n}: {} vs {h}", sim[k]);
        }
    }

    #[test]
    fn even_harmonics_vanish_in_simulation() {
        let sim = simulated_harmonics(fore_chain(0.0), 3.0, &[1, 2, 4]);
        assert!(sim[1].norm() < 1e-3 * sim[0].norm());
        assert!(sim[2].norm() < 1e-3 * sim[0].norm());
    }

    #[test]
    fn reset_instants_follow_shaped_signal_phase() {
        let omega = 3.0;
        let sf = RationalTF::first_order_lag(1.0).unwrap();
        let phi = sf.phase(omega).unwrap();
        let chain = ResetChain::new(RationalTF::unity(), make_fore(1.0, 0.0).unwrap(), RationalTF::unity())
            .with_reset_signal_filter(sf)
            .unwrap();
        let dt = 1e-4;
        let trace = simulate(&Loop::open(Controller::Reset(chain)), &Signal::sine(omega), dt, 20.0).unwrap();
        let late: Vec<f64> = trace.reset_instants.iter().copied().filter(|t| *t > 10.0).collect();
        assert!(late.len() > 5);
        for t in late {
            let k = ((omega * t + phi) / PI).round();
            assert!((t - (k * PI - phi) / omega).abs() < dt, "reset at {t}");
        }
    }

    #[test]
    fn reset_instants_lie_at_sign_changes() {
        let dt = 1e-4;
        let trace = simulate(&reset_loop(0.0), &Signal::unit_step(), dt, 1.0).unwrap();
        assert!(!trace.reset_instants.is_empty());
        for t in &trace.reset_instants {
            let k = (t / dt).floor() as usize;
            assert!(
                trace.reset_signal[k] * trace.reset_signal[k + 1] <= 0.0,
                "no sign change around {t}"
            );
        }
    }

    #[test]
    fn nulling_phase_gives_vanishing_jumps() {
        let omega = 5.0;
        let chain = ResetChain::new(RationalTF::unity(), make_fore(1.0, 0.0).unwrap(), RationalTF::unity())
            .with_reset_signal_filter(RationalTF::first_order_lag(1.0).unwrap())
            .unwrap();
        let period = TAU / omega;
        let trace = simulate(
            &Loop::open(Controller::Reset(chain)),
            &Signal::sine(omega),
            period / 4000.0,
            30.0 * period,
        )
        .unwrap();
        let scale = trace.control.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let late: Vec<f64> = trace
            .reset_instants
            .iter()
            .zip(&trace.reset_jumps)
            .filter(|(t, _)| **t > 20.0 * period)
            .map(|(_, j)| *j)
            .collect();
        assert!(!late.is_empty());
        assert!(late.iter().all(|j| *j < 1e-6 * scale), "{late:?}");
    }

    #[test]
    fn linear_tracking_error_equals_sensitivity() {
        let c = crate::linsys::make_pid(100.0, 10.0, 1.0, 5.0, 20.0).unwrap();
        let plant = RationalTF::double_integrator(1.0);
        let omega = 4.0;
        let l = c.freq_response(omega).unwrap() * plant.freq_response(omega).unwrap();
        let s = (Complex64::new(1.0, 0.0) + l).inv().norm();
        let period = TAU / omega;
        let trace = track_sine(
            &Loop::closed(Controller::Linear(c), plant),
            omega,
            period / 2000.0,
            30.0 * period,
        )
        .unwrap();
        let e = extract_harmonics(&trace.time, &trace.error, omega, &[1], 10).unwrap()[0];
        assert!((e.norm() - s).abs() < 0.01 * s, "{} vs {s}", e.norm());
    }

    #[test]
    fn high_gain_sensitivity_is_small() {
        let plant = RationalTF::first_order_lag(1.0).unwrap();
        let lp = Loop::closed(Controller::Linear(RationalTF::constant(1e4)), plant);
        let ratio = sensitivity_estimate(&lp, 0.5, 20, 1e-4).unwrap();
        assert!(ratio < 2e-4, "{ratio}");
    }

    #[test]
    fn sensitivity_rejects_short_runs() {
        let lp = reset_loop(0.0);
        assert!(matches!(
            sensitivity_estimate(&lp, 1.0, 5, 1e-3),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn sweep_matches_pointwise_estimates() {
        let lp = reset_loop(0.0);
        let omegas = [2.0, 8.0];
        let sweep = sensitivity_sweep(&lp, &omegas, 20, 1e-3).unwrap();
        for (w, s) in omegas.iter().zip(&sweep) {
            assert_eq!(*s, sensitivity_estimate(&lp, *w, 20, 1e-3).unwrap());
        }
    }

    #[test]
    fn unstable_loop_reports_divergence() {
        let lp = Loop::closed(
            Controller::Linear(RationalTF::constant(-100.0)),
            RationalTF::double_integrator(1.0),
        );
        match simulate(&lp, &Signal::unit_step(), 1e-3, 100.0) {
            Err(Error::Divergence { time }) => assert!(time > 0.0 && time < 100.0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn perfect_step_has_no_overshoot() {
        let time: Vec<f64> = (0..1000).map(|i| i as f64 * 1e-3).collect();
        let trace = SimulationTrace {
            output: vec![1.0; 1000],
            reference: vec![1.0; 1000],
            error: vec![0.0; 1000],
            control: vec![0.0; 1000],
            reset_signal: vec![0.0; 1000],
            time,
            ..Default::default()
        };
        let m = step_metrics(&trace);
        assert_eq!(m.overshoot, Some(0.0));
        assert_eq!(m.settling_time, Some(0.0));
    }

    #[test]
    fn second_order_step_metrics() {
        // y = 1 − e^{−ζω t}(cos ω_d t + ζ/√(1−ζ²) sin ω_d t), overshoot e^{−πζ/√(1−ζ²)}
        let (zeta, wn) = (0.3f64, 10.0f64);
        let wd = wn * (1.0 - zeta * zeta).sqrt();
        let time: Vec<f64> = (0..40000).map(|i| i as f64 * 1e-4).collect();
        let output: Vec<f64> = time
            .iter()
            .map(|t| {
                1.0 - (-zeta * wn * t).exp() * ((wd * t).cos() + zeta / (1.0 - zeta * zeta).sqrt() * (wd * t).sin())
            })
            .collect();
        let trace = SimulationTrace {
            output,
            time,
            ..Default::default()
        };
        let m = step_metrics(&trace);
        let expected = 100.0 * (-PI * zeta / (1.0 - zeta * zeta).sqrt()).exp();
        assert!((m.overshoot.unwrap() - expected).abs() < 0.05, "{m:?} vs {expected}");
        let ts = m.settling_time.unwrap();
        assert!(ts > 1.0 && ts < 1.5, "{ts}");
        assert!(m.rise_time.unwrap() < ts);
    }

    #[test]
    fn unsettled_trace_marks_metrics_unavailable() {
        let time: Vec<f64> = (0..1000).map(|i| i as f64 * 1e-3).collect();
        let output = time.iter().map(|t| 1.0 + (50.0 * t).sin()).collect();
        let m = step_metrics(&SimulationTrace {
            output,
            time,
            ..Default::default()
        });
        assert_eq!((m.overshoot, m.settling_time, m.rise_time), (None, None, None));
    }

    #[test]
    fn extract_harmonics_recovers_phasors() {
        let omega = 3.0;
        let period = TAU / omega;
        let time: Vec<f64> = (0..=4000).map(|i| i as f64 * period / 1000.0).collect();
        let signal: Vec<f64> = time
            .iter()
            .map(|t| 2.0 * (omega * t + 0.3).sin() + 0.5 * (3.0 * omega * t - 1.0).sin())
            .collect();
        let h = extract_harmonics(&time, &signal, omega, &[1, 2, 3], 3).unwrap();
        assert!((h[0] - Complex64::from_polar(2.0, 0.3)).norm() < 1e-12);
        assert!(h[1].norm() < 1e-12);
        assert!((h[2] - Complex64::from_polar(0.5, -1.0)).norm() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn reset_loop_is_homogeneous(c in 0.1..10.0f64, gamma in -0.5..0.9f64) {
            let lp = reset_loop(gamma);
            let omega = 6.0;
            let base = simulate(&lp, &Signal::sine(omega), 1e-3, 3.0).unwrap();
            let scaled = simulate(&lp, &Signal::Sine { amplitude: c, omega, phase: 0.0 }, 1e-3, 3.0).unwrap();
            prop_assert_eq!(base.reset_instants.len(), scaled.reset_instants.len());
            let scale = base.error.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in base.error.iter().zip(&scaled.error) {
                prop_assert!((c * a - b).abs() <= 1e-9 * c * scale);
            }
        }
    }
}
