//! Real-coefficient SISO linear systems.
//!
//! Transfer functions are kept in factored form (gain, zeros, poles) so that
//! the zero/pole ladders used for reset-signal shaping never go through an
//! ill-conditioned polynomial expansion. State-space realizations are built
//! as cascades of first- and second-order sections.

use std::f64::consts::{FRAC_PI_2, LN_10};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative tolerance used to decide that a root is real or that a zero
/// cancels a pole exactly.
const ROOT_TOL: f64 = 1e-12;

/// Default density of logarithmic frequency grids.
pub const DEFAULT_POINTS_PER_DECADE: usize = 400;

fn same_root(a: Complex64, b: Complex64) -> bool {
    (a - b).norm() <= ROOT_TOL * a.norm().max(b.norm()).max(1.0)
}

fn is_real_root(r: Complex64) -> bool {
    r.im.abs() <= ROOT_TOL * r.norm().max(1.0)
}

fn check_conjugate_closed(roots: &[Complex64], what: &str) -> Result<()> {
    for r in roots {
        if !r.re.is_finite() || !r.im.is_finite() {
            return Err(Error::Parameter(format!("{what} must be finite, got {r}")));
        }
        if is_real_root(*r) {
            continue;
        }
        let count = |x: Complex64| roots.iter().filter(|q| same_root(**q, x)).count();
        if count(*r) != count(r.conj()) {
            return Err(Error::Parameter(format!(
                "{what} are not closed under conjugation ({r} has no matching conjugate)"
            )));
        }
    }
    Ok(())
}

/// Transfer function `gain * prod(s - z) / prod(s - p)` with real coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalTF {
    gain: f64,
    zeros: Vec<Complex64>,
    poles: Vec<Complex64>,
}

impl RationalTF {
    /// Builds a transfer function, validating conjugate closure and removing
    /// exactly coinciding zero/pole pairs.
    pub fn new(gain: f64, zeros: Vec<Complex64>, poles: Vec<Complex64>) -> Result<Self> {
        if !gain.is_finite() {
            return Err(Error::Parameter(format!("gain must be finite, got {gain}")));
        }
        check_conjugate_closed(&zeros, "zeros")?;
        check_conjugate_closed(&poles, "poles")?;
        Ok(Self { gain, zeros, poles }.cancelled())
    }

    pub fn from_real_roots(gain: f64, zeros: &[f64], poles: &[f64]) -> Self {
        let c = |v: &[f64]| v.iter().map(|r| Complex64::new(*r, 0.0)).collect();
        Self {
            gain,
            zeros: c(zeros),
            poles: c(poles),
        }
        .cancelled()
    }

    fn cancelled(mut self) -> Self {
        let mut i = 0;
        while i < self.zeros.len() {
            if let Some(j) = self.poles.iter().position(|p| same_root(*p, self.zeros[i])) {
                self.poles.remove(j);
                self.zeros.remove(i);
            } else {
                i += 1;
            }
        }
        self
    }

    pub fn constant(gain: f64) -> Self {
        Self {
            gain,
            zeros: Vec::new(),
            poles: Vec::new(),
        }
    }

    pub fn unity() -> Self {
        Self::constant(1.0)
    }

    /// `1 / (s/omega + 1)`.
    pub fn first_order_lag(omega: f64) -> Result<Self> {
        positive(omega, "lag corner")?;
        Ok(Self::from_real_roots(omega, &[], &[-omega]))
    }

    /// `(s/omega_zero + 1) / (s/omega_pole + 1)`.
    pub fn lead(omega_zero: f64, omega_pole: f64) -> Result<Self> {
        positive(omega_zero, "lead zero")?;
        positive(omega_pole, "lead pole")?;
        Ok(Self::from_real_roots(
            omega_pole / omega_zero,
            &[-omega_zero],
            &[-omega_pole],
        ))
    }

    /// `1 + omega_i / s`; collapses to unity for `omega_i = 0`.
    pub fn integral_action(omega_i: f64) -> Result<Self> {
        if !(omega_i >= 0.0) || !omega_i.is_finite() {
            return Err(Error::Parameter(format!(
                "integrator corner must be >= 0, got {omega_i}"
            )));
        }
        Ok(Self::from_real_roots(1.0, &[-omega_i], &[0.0]))
    }

    /// `gain / s^2`, the mass plant.
    pub fn double_integrator(gain: f64) -> Self {
        Self::from_real_roots(gain, &[], &[0.0, 0.0])
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn zeros(&self) -> &[Complex64] {
        &self.zeros
    }

    pub fn poles(&self) -> &[Complex64] {
        &self.poles
    }

    /// Number of poles minus number of zeros.
    pub fn relative_degree(&self) -> i64 {
        self.poles.len() as i64 - self.zeros.len() as i64
    }

    pub fn is_proper(&self) -> bool {
        self.relative_degree() >= 0
    }

    /// Series connection: zero and pole lists concatenate, gains multiply.
    pub fn series(&self, other: &RationalTF) -> RationalTF {
        let mut zeros = self.zeros.clone();
        zeros.extend_from_slice(&other.zeros);
        let mut poles = self.poles.clone();
        poles.extend_from_slice(&other.poles);
        RationalTF {
            gain: self.gain * other.gain,
            zeros,
            poles,
        }
        .cancelled()
    }

    pub fn scaled(&self, k: f64) -> RationalTF {
        RationalTF {
            gain: self.gain * k,
            ..self.clone()
        }
    }

    /// Evaluates at an arbitrary complex point (no pole check).
    pub fn eval(&self, s: Complex64) -> Complex64 {
        let mut acc = Complex64::new(self.gain, 0.0);
        for i in 0..self.zeros.len().max(self.poles.len()) {
            if let Some(z) = self.zeros.get(i) {
                acc *= s - z;
            }
            if let Some(p) = self.poles.get(i) {
                acc /= s - p;
            }
        }
        acc
    }

    /// Largest pole or zero modulus, used to pick integration steps and grids.
    pub fn fastest_corner(&self) -> f64 {
        self.zeros
            .iter()
            .chain(&self.poles)
            .map(|r| r.norm())
            .fold(0.0, f64::max)
    }

    /// Wrapped phase of `G(j omega)`.
    pub fn phase(&self, omega: f64) -> Result<f64> {
        Ok(self.freq_response(omega)?.arg())
    }
}

fn positive(v: f64, what: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{what} must be positive, got {v}")))
    }
}

/// Systems with a complex frequency response `G(j omega)`.
pub trait FrequencyResponse {
    fn freq_response(&self, omega: f64) -> Result<Complex64>;
}

impl FrequencyResponse for RationalTF {
    fn freq_response(&self, omega: f64) -> Result<Complex64> {
        positive(omega, "frequency")?;
        let s = Complex64::new(0.0, omega);
        if self.poles.iter().any(|p| (s - p).norm() <= ROOT_TOL * omega.max(1.0)) {
            return Err(Error::Singularity { omega });
        }
        Ok(self.eval(s))
    }
}

/// SISO state-space model `x' = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let ok = a.ncols() == n && b.shape() == (n, 1) && c.shape() == (1, n) && d.shape() == (1, 1);
        if !ok {
            return Err(Error::Parameter(format!(
                "inconsistent state-space dimensions: A {:?}, B {:?}, C {:?}, D {:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    pub fn static_gain(k: f64) -> Self {
        Self {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, 1),
            c: DMatrix::zeros(1, 0),
            d: DMatrix::from_element(1, 1, k),
        }
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn feedthrough(&self) -> f64 {
        self.d[(0, 0)]
    }

    /// Cascade `self` followed by `next`.
    pub fn series(&self, next: &StateSpace) -> StateSpace {
        let (n1, n2) = (self.order(), next.order());
        let n = n1 + n2;
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, n1), (n2, n2)).copy_from(&next.a);
        a.view_mut((n1, 0), (n2, n1)).copy_from(&(&next.b * &self.c));
        let mut b = DMatrix::zeros(n, 1);
        b.view_mut((0, 0), (n1, 1)).copy_from(&self.b);
        b.view_mut((n1, 0), (n2, 1)).copy_from(&(&next.b * &self.d));
        let mut c = DMatrix::zeros(1, n);
        c.view_mut((0, 0), (1, n1)).copy_from(&(&next.d * &self.c));
        c.view_mut((0, n1), (1, n2)).copy_from(&next.c);
        let d = &next.d * &self.d;
        StateSpace { a, b, c, d }
    }

    /// Diagonal similarity (powers of two) equalizing row and column norms
    /// of the augmented matrix `[A B; C 0]` (Osborne iteration).
    pub fn balanced(mut self) -> StateSpace {
        let n = self.order();
        for _ in 0..100 {
            let mut changed = false;
            for i in 0..n {
                let col: f64 =
                    (0..n).filter(|j| *j != i).map(|j| self.a[(j, i)].abs()).sum::<f64>() + self.c[(0, i)].abs();
                let row: f64 =
                    (0..n).filter(|j| *j != i).map(|j| self.a[(i, j)].abs()).sum::<f64>() + self.b[(i, 0)].abs();
                if col == 0.0 || row == 0.0 {
                    continue;
                }
                let f = 2f64.powi(((row / col).log2() / 2.0).round() as i32);
                if f != 1.0 {
                    changed = true;
                    for j in 0..n {
                        if j != i {
                            self.a[(j, i)] *= f;
                            self.a[(i, j)] /= f;
                        }
                    }
                    self.c[(0, i)] *= f;
                    self.b[(i, 0)] /= f;
                }
            }
            if !changed {
                break;
            }
        }
        self
    }

    /// True when every eigenvalue of `A` has strictly negative real part.
    pub fn is_stable(&self) -> bool {
        self.order() == 0 || self.a.complex_eigenvalues().iter().all(|l| l.re < 0.0)
    }
}

impl FrequencyResponse for StateSpace {
    fn freq_response(&self, omega: f64) -> Result<Complex64> {
        positive(omega, "frequency")?;
        let n = self.order();
        if n == 0 {
            return Ok(Complex64::new(self.feedthrough(), 0.0));
        }
        let jw = Complex64::new(0.0, omega);
        let x = match self.cascade_blocks() {
            Some(blocks) => self.solve_cascade(&blocks, jw)?,
            None => {
                let m = DMatrix::from_fn(n, n, |i, j| {
                    let diag = if i == j { jw } else { Complex64::new(0.0, 0.0) };
                    diag - self.a[(i, j)]
                });
                let b = self.b.map(|v| Complex64::new(v, 0.0));
                let x =
                    crate::linalg::checked_inverse(&m, "jwI - A", omega).map_err(|_| Error::Singularity { omega })? * b;
                x.iter().copied().collect()
            }
        };
        let cx: Complex64 = (0..n).map(|i| x[i] * self.c[(0, i)]).sum();
        Ok(cx + self.feedthrough())
    }
}

impl StateSpace {
    /// Diagonal block sizes when `A` is block lower triangular with 1×1 and
    /// 2×2 blocks, which is the shape [`realize`] and [`StateSpace::series`]
    /// produce for cascades.
    fn cascade_blocks(&self) -> Option<Vec<usize>> {
        let n = self.order();
        let mut blocks = Vec::new();
        let mut i = 0;
        while i < n {
            let size = if i + 1 < n && self.a[(i, i + 1)] != 0.0 { 2 } else { 1 };
            for r in i..i + size {
                if (i + size..n).any(|c| self.a[(r, c)] != 0.0) {
                    return None;
                }
            }
            blocks.push(size);
            i += size;
        }
        Some(blocks)
    }

    /// Block forward substitution for `(jωI − A) x = B`. Unlike pivoted LU it
    /// keeps the cascade ordering, so each section sees its own input.
    fn solve_cascade(&self, blocks: &[usize], jw: Complex64) -> Result<Vec<Complex64>> {
        let omega = jw.im;
        let zero = Complex64::new(0.0, 0.0);
        let mut x = vec![zero; self.order()];
        let mut i = 0;
        for &size in blocks {
            let rhs = |r: usize, x: &[Complex64]| {
                (0..i).fold(Complex64::new(self.b[(r, 0)], 0.0), |acc, c| {
                    acc + self.a[(r, c)] * x[c]
                })
            };
            if size == 1 {
                let pivot = jw - self.a[(i, i)];
                if pivot.norm() <= f64::EPSILON * self.a[(i, i)].abs() || pivot == zero {
                    return Err(Error::Singularity { omega });
                }
                x[i] = rhs(i, &x) / pivot;
            } else {
                let (m00, m01) = (jw - self.a[(i, i)], -Complex64::from(self.a[(i, i + 1)]));
                let (m10, m11) = (-Complex64::from(self.a[(i + 1, i)]), jw - self.a[(i + 1, i + 1)]);
                let det = m00 * m11 - m01 * m10;
                let scale = (m00 * m11).norm().max((m01 * m10).norm());
                if det == zero || det.norm() <= 1e3 * f64::EPSILON * scale {
                    return Err(Error::Singularity { omega });
                }
                let (r0, r1) = (rhs(i, &x), rhs(i + 1, &x));
                x[i] = (m11 * r0 - m01 * r1) / det;
                x[i + 1] = (m00 * r1 - m10 * r0) / det;
            }
            i += size;
        }
        Ok(x)
    }
}

/// Polynomial in ascending powers of `s`.
type Poly = Vec<f64>;

fn poly_mul(a: &[f64], b: &[f64]) -> Poly {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Real factors (degree 1 or 2, monic) of a conjugate-closed root list,
/// each kind sorted by root magnitude so zeros pair with nearby poles.
fn real_factors(roots: &[Complex64]) -> (Vec<Poly>, Vec<Poly>) {
    let mut quadratic = Vec::new();
    let mut linear = Vec::new();
    let mut sorted = roots.to_vec();
    sorted.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    for r in &sorted {
        if is_real_root(*r) {
            linear.push(vec![-r.re, 1.0]);
        } else if r.im > 0.0 {
            quadratic.push(vec![r.norm_sqr(), -2.0 * r.re, 1.0]);
        }
    }
    (quadratic, linear)
}

struct Section {
    num: Poly,
    den: Poly,
}

impl Section {
    fn capacity(&self) -> usize {
        (self.den.len() - 1).saturating_sub(self.num.len() - 1)
    }

    fn realize(&self) -> StateSpace {
        let mut num = self.num.clone();
        num.resize(self.den.len(), 0.0);
        let order = self.den.len() - 1;
        let lead = num[order];
        // strictly proper remainder: num - lead * den
        let rem: Vec<f64> = (0..order).map(|i| num[i] - lead * self.den[i]).collect();
        let mut a = DMatrix::zeros(order, order);
        for i in 0..order.saturating_sub(1) {
            a[(i, i + 1)] = 1.0;
        }
        for j in 0..order {
            a[(order - 1, j)] = -self.den[j];
        }
        let mut b = DMatrix::zeros(order, 1);
        b[(order - 1, 0)] = 1.0;
        let c = DMatrix::from_row_slice(1, order, &rem);
        let d = DMatrix::from_element(1, 1, lead);
        // Rescale state k by corner^(k - order) so every entry of A, B sits
        // near the section's corner frequency instead of its powers.
        let corner = self.den[0].abs().powf(1.0 / order as f64);
        if !(corner.is_finite() && corner > 0.0) {
            return StateSpace { a, b, c, d };
        }
        let t: Vec<f64> = (0..order).map(|k| corner.powi(k as i32 - order as i32)).collect();
        let a = DMatrix::from_fn(order, order, |i, j| a[(i, j)] * t[j] / t[i]);
        let b = DMatrix::from_fn(order, 1, |i, _| b[(i, 0)] / t[i]);
        let c = DMatrix::from_fn(1, order, |_, j| c[(0, j)] * t[j]);
        StateSpace { a, b, c, d }
    }
}

/// Orders normalized sections so that running products of feedthrough gains
/// stay near one. The cascade's A and C rows contain those products, and the
/// low-frequency response is recovered from them by cancellation, so a long
/// run of high-gain leads costs roughly eps times its product in accuracy.
/// Strictly proper sections cut the run; biproper ones are split into
/// balanced groups between them, lags first within each group.
fn order_sections(sections: Vec<Section>) -> Vec<Section> {
    let (mut strict, biproper): (Vec<Section>, Vec<Section>) =
        sections.into_iter().partition(|s| s.num.len() < s.den.len());
    let log_d = |s: &Section| (s.num[s.num.len() - 1] / s.den[s.den.len() - 1]).abs().ln();
    let mut groups: Vec<(f64, Vec<Section>)> = (0..=strict.len()).map(|_| (0.0, Vec::new())).collect();
    let mut pending: Vec<(f64, Section)> = biproper.into_iter().map(|s| (log_d(&s), s)).collect();
    pending.sort_by(|a, b| b.0.abs().total_cmp(&a.0.abs()));
    for (l, s) in pending {
        // place where the group's accumulated log gain ends closest to zero
        let target = groups
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 .0 + l).abs().total_cmp(&(b.1 .0 + l).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        groups[target].0 += l;
        groups[target].1.push(s);
    }
    let mut out = Vec::new();
    for (_, mut group) in groups {
        group.sort_by(|a, b| log_d(a).total_cmp(&log_d(b)));
        out.extend(group);
        if let Some(s) = strict.pop() {
            out.push(s);
        }
    }
    out
}

/// Minimal state-space realization of a proper transfer function.
pub fn realize(tf: &RationalTF) -> Result<StateSpace> {
    if !tf.is_proper() {
        return Err(Error::Improper {
            relative_degree: tf.relative_degree(),
        });
    }
    let (zq, zl) = real_factors(&tf.zeros);
    let (pq, pl) = real_factors(&tf.poles);
    let mut sections: Vec<Section> = pq
        .into_iter()
        .chain(pl)
        .map(|den| Section { num: vec![1.0], den })
        .collect();

    for z in zq {
        let slot = match sections.iter().position(|s| s.capacity() >= 2) {
            Some(i) => i,
            None => {
                // merge two untouched first-order sections into one quadratic
                let firsts: Vec<usize> = sections
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.den.len() == 2 && s.num.len() == 1)
                    .map(|(i, _)| i)
                    .take(2)
                    .collect();
                let [i, j] = firsts[..] else {
                    return Err(Error::Improper {
                        relative_degree: tf.relative_degree(),
                    });
                };
                let second = sections.remove(j);
                sections[i].den = poly_mul(&sections[i].den, &second.den);
                i
            }
        };
        sections[slot].num = poly_mul(&sections[slot].num, &z);
    }
    for z in zl {
        let Some(slot) = sections.iter().position(|s| s.capacity() >= 1) else {
            return Err(Error::Improper {
                relative_degree: tf.relative_degree(),
            });
        };
        sections[slot].num = poly_mul(&sections[slot].num, &z);
    }

    // Normalize every section to unit DC gain (or unit gain at its corner
    // when it has a root at the origin). Ladders with a large high-frequency
    // gain otherwise produce their low-frequency output by cancellation.
    let mut residual = tf.gain;
    for s in &mut sections {
        if s.num[0] != 0.0 && s.den[0] != 0.0 {
            let factor = (s.num[0] / s.den[0]).abs();
            s.num.iter_mut().for_each(|c| *c /= factor);
            residual *= factor;
            continue;
        }
        let corner = match s.den.as_slice() {
            [a0, _] if *a0 != 0.0 => a0.abs(),
            [a0, _, _] if *a0 != 0.0 => a0.abs().sqrt(),
            [_, a1, _] if *a1 != 0.0 => a1.abs(),
            _ => 1.0,
        };
        let eval = |p: &[f64]| {
            let s = Complex64::new(0.0, corner);
            p.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * s + c)
        };
        let factor = eval(&s.num).norm() / eval(&s.den).norm();
        if factor.is_finite() && factor > 0.0 {
            s.num.iter_mut().for_each(|c| *c /= factor);
            residual *= factor;
        }
    }
    let mut ss = StateSpace::static_gain(residual);
    for s in &order_sections(sections) {
        ss = ss.series(&s.realize());
    }
    Ok(ss)
}

/// Validated parameters of the zero/pole ladder `Q(s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapingFilterSpec {
    pub omega_l: f64,
    pub omega_h: f64,
    pub zeta: f64,
    pub eta: f64,
    pub m: usize,
    pub n: usize,
}

impl ShapingFilterSpec {
    pub fn new(omega_l: f64, omega_h: f64, zeta: f64, eta: f64, m: usize, n: usize) -> Result<Self> {
        positive(omega_l, "omega_l")?;
        positive(omega_h, "omega_h")?;
        if omega_h < omega_l {
            return Err(Error::Parameter(format!(
                "omega_h ({omega_h}) must not be below omega_l ({omega_l})"
            )));
        }
        if !(zeta > 1.0 && eta > 1.0) || !zeta.is_finite() || !eta.is_finite() {
            return Err(Error::Parameter(format!(
                "zeta and eta must exceed 1, got zeta = {zeta}, eta = {eta}"
            )));
        }
        if m == 0 || n == 0 {
            return Err(Error::Parameter("M and N must be positive".into()));
        }
        let spec = Self {
            omega_l,
            omega_h,
            zeta,
            eta,
            m,
            n,
        };
        let (wz, wp) = (spec.zero_frequencies(), spec.pole_frequencies());
        let covers = |w: &[f64]| w.last().is_some_and(|x| *x >= omega_h * (1.0 - 1e-12));
        if !covers(&wz) || !covers(&wp) {
            return Err(Error::Parameter(format!(
                "ladder does not cover omega_h = {omega_h}: last zero {}, last pole {}",
                wz[m - 1],
                wp[n - 1]
            )));
        }
        Ok(spec)
    }

    /// Builds the spec with the smallest `M`, `N` that satisfy coverage.
    pub fn covering(omega_l: f64, omega_h: f64, zeta: f64, eta: f64) -> Result<Self> {
        let m = coverage_count(omega_l, omega_h, zeta)?;
        let n = coverage_count(omega_l, omega_h, eta)?;
        Self::new(omega_l, omega_h, zeta, eta, m, n)
    }

    pub fn zero_frequencies(&self) -> Vec<f64> {
        geometric(self.omega_l, self.zeta, self.m)
    }

    pub fn pole_frequencies(&self) -> Vec<f64> {
        geometric(self.omega_l, self.eta, self.n)
    }
}

fn geometric(start: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start * ratio.powi(k as i32)).collect()
}

/// Smallest ladder length whose last corner `omega_l * ratio^(k-1)` reaches `omega_h`.
pub fn coverage_count(omega_l: f64, omega_h: f64, ratio: f64) -> Result<usize> {
    positive(omega_l, "omega_l")?;
    if !(ratio > 1.0) || !ratio.is_finite() {
        return Err(Error::Parameter(format!("ladder ratio must exceed 1, got {ratio}")));
    }
    if omega_h <= omega_l {
        return Ok(1);
    }
    let steps = ((omega_h / omega_l).ln() / ratio.ln() - 1e-9).ceil().max(0.0) as usize;
    Ok(steps + 1)
}

/// The CRONE-style ladder `prod(1 + s/w_z) / prod(1 + s/w_p)`, unit DC gain.
pub fn make_crone_q(spec: &ShapingFilterSpec) -> RationalTF {
    let wz = spec.zero_frequencies();
    let wp = spec.pole_frequencies();
    let log_gain: f64 = wp.iter().map(|w| w.ln()).sum::<f64>() - wz.iter().map(|w| w.ln()).sum::<f64>();
    let neg = |w: &[f64]| w.iter().map(|x| -x).collect::<Vec<_>>();
    RationalTF::from_real_roots(log_gain.exp(), &neg(&wz), &neg(&wp))
}

/// Mid-band phase slope of the ladder in rad/decade.
pub fn phase_slope(zeta: f64, eta: f64) -> Result<f64> {
    if !(zeta > 1.0 && eta > 1.0) {
        return Err(Error::Parameter(format!(
            "zeta and eta must exceed 1, got zeta = {zeta}, eta = {eta}"
        )));
    }
    Ok(FRAC_PI_2 / zeta.log10() - FRAC_PI_2 / eta.log10())
}

/// `k_p (1 + w_i/s) (s/w_d + 1) / (s/w_t + 1)`.
pub fn make_pid(k_p: f64, omega_c: f64, omega_i: f64, omega_d: f64, omega_t: f64) -> Result<RationalTF> {
    if !k_p.is_finite() || k_p == 0.0 {
        return Err(Error::Parameter(format!("k_p must be finite and nonzero, got {k_p}")));
    }
    positive(omega_d, "omega_d")?;
    positive(omega_t, "omega_t")?;
    let collapsed_td = omega_d == omega_t;
    let ordered = omega_i >= 0.0 && omega_i < omega_d && (collapsed_td || (omega_d < omega_c && omega_c < omega_t));
    if !ordered {
        return Err(Error::Parameter(format!(
            "PID corners must satisfy 0 < w_i < w_d < w_c < w_t, got w_i = {omega_i}, \
             w_d = {omega_d}, w_c = {omega_c}, w_t = {omega_t}"
        )));
    }
    Ok(RationalTF::integral_action(omega_i)?
        .series(&RationalTF::lead(omega_d, omega_t)?)
        .scaled(k_p))
}

/// Recursive (Oustaloup) approximation of `s^alpha` over `[omega_l, omega_h]`
/// with `order` zero/pole pairs, normalized to unit gain at the band's
/// geometric centre.
///
/// The recursive corners are spread over the band widened by one decade on
/// each side; the end corners otherwise bend the response inside the band.
pub fn make_oustaloup(alpha: f64, omega_l: f64, omega_h: f64, order: usize) -> Result<RationalTF> {
    if !(alpha > -2.0 && alpha < 2.0) {
        return Err(Error::Parameter(format!("alpha must lie in (-2, 2), got {alpha}")));
    }
    positive(omega_l, "omega_l")?;
    if !(omega_h > omega_l) || !omega_h.is_finite() {
        return Err(Error::Parameter(format!(
            "empty approximation band [{omega_l}, {omega_h}]"
        )));
    }
    if order == 0 {
        return Err(Error::Parameter("approximation order must be positive".into()));
    }
    let (lo, hi) = (omega_l / OUSTALOUP_MARGIN, omega_h * OUSTALOUP_MARGIN);
    let ratio = hi / lo;
    let n = order as f64;
    let corner = |k: usize, sign: f64| lo * ratio.powf((k as f64 + 0.5 + sign * 0.5 * alpha) / n);
    let zeros: Vec<f64> = (0..order).map(|k| -corner(k, -1.0)).collect();
    let poles: Vec<f64> = (0..order).map(|k| -corner(k, 1.0)).collect();
    let raw = RationalTF::from_real_roots(1.0, &zeros, &poles);
    let centre = (omega_l * omega_h).sqrt();
    let scale = centre.powf(alpha) / raw.eval(Complex64::new(0.0, centre)).norm();
    Ok(raw.scaled(scale))
}

const OUSTALOUP_MARGIN: f64 = 10.0;

/// Logarithmic grid over `[lo, hi]`, both ends included.
pub fn log_grid(lo: f64, hi: f64, points_per_decade: usize) -> Result<Vec<f64>> {
    positive(lo, "grid start")?;
    if !(hi >= lo) || !hi.is_finite() {
        return Err(Error::Parameter(format!("grid end {hi} is below start {lo}")));
    }
    if points_per_decade == 0 {
        return Err(Error::Parameter("grid density must be positive".into()));
    }
    if hi == lo {
        return Ok(vec![lo]);
    }
    let decades = (hi / lo).log10();
    let count = ((decades * points_per_decade as f64).ceil() as usize).max(1) + 1;
    let step = decades / (count - 1) as f64;
    let (l0, l1) = (lo.log10(), hi.log10());
    Ok((0..count)
        .map(|i| match i {
            0 => lo,
            _ if i == count - 1 => hi,
            _ => 10f64.powf(l0 + step * i as f64).min(10f64.powf(l1)),
        })
        .collect())
}

/// Continues each phase sample by the multiple of 2π nearest its predecessor.
pub fn unwrap_phase(phases: &[f64]) -> Vec<f64> {
    let tau = std::f64::consts::TAU;
    let mut out = Vec::with_capacity(phases.len());
    let mut offset = 0.0;
    for (i, p) in phases.iter().enumerate() {
        if i > 0 {
            let prev: f64 = out[i - 1];
            offset += ((prev - (p + offset)) / tau).round() * tau;
        }
        out.push(p + offset);
    }
    out
}

pub fn mag_db(value: Complex64) -> f64 {
    20.0 * value.norm().log10()
}

/// Least-squares slope of `y` against `log10(omega)`.
pub fn slope_per_decade(omegas: &[f64], y: &[f64]) -> f64 {
    let x: Vec<f64> = omegas.iter().map(|w| w.log10()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// `beta * ln 10`: the phase slope in rad/decade of `s^(j beta)`.
pub fn target_phase_slope(beta: f64) -> f64 {
    beta * LN_10
}
