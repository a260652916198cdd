//! Time-domain data generation.
//!
//! Everything here produces the sampled input/output records the estimation
//! stage consumes: the discrete recurrence `E x_{j+1} = A x_j + B u_j`, a
//! fixed-step integrator for state-delay systems, sparse multi-sine
//! excitations and a handful of validation inputs.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{to_complex, CVector};
use crate::systems::StructuredSystem;

/// Uniformly sampled scalar input/output record, `t_j = j·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    dt: f64,
    u: Vec<f64>,
    y: Vec<f64>,
}

impl TimeSeries {
    pub fn new(dt: f64, u: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::domain(format!(
                "time step must be positive, got {dt}"
            )));
        }
        if u.len() != y.len() {
            return Err(Error::domain(format!(
                "input has {} samples but output has {}",
                u.len(),
                y.len()
            )));
        }
        if u.len() < 2 {
            return Err(Error::domain("a time series needs at least two samples"));
        }
        Ok(TimeSeries { dt, u, y })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Number of steps `N`; the record holds `N + 1` samples.
    pub fn steps(&self) -> usize {
        self.u.len() - 1
    }

    pub fn final_time(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    /// Writes `t,u,y` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        writeln!(w, "t,u,y")?;
        for (j, (u, y)) in self.u.iter().zip(&self.y).enumerate() {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", self.time(j), u, y)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a `t,u,y` file. The grid must be uniform and start at zero.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty time-series file".into()))??;
        if header.trim() != "t,u,y" {
            return Err(Error::Parse(format!(
                "expected header `t,u,y`, got `{header}`"
            )));
        }
        let (mut t, mut u, mut y) = (Vec::new(), Vec::new(), Vec::new());
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields = parse_row::<3>(&line, row + 2)?;
            t.push(fields[0]);
            u.push(fields[1]);
            y.push(fields[2]);
        }
        if t.len() < 2 {
            return Err(Error::Parse("time series needs at least two rows".into()));
        }
        let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
        if t[0].abs() > 1e-9 * dt {
            return Err(Error::Parse(format!(
                "time grid must start at 0, got {}",
                t[0]
            )));
        }
        if let Some(j) = (0..t.len()).find(|&j| (t[j] - j as f64 * dt).abs() > 1e-6 * dt) {
            return Err(Error::Parse(format!(
                "non-uniform time grid at row {}",
                j + 2
            )));
        }
        TimeSeries::new(dt, u, y)
    }
}

pub(crate) fn parse_row<const M: usize>(line: &str, row: usize) -> Result<[f64; M]> {
    let mut out = [0.0; M];
    let mut fields = line.split(',');
    for slot in out.iter_mut() {
        let field = fields
            .next()
            .ok_or_else(|| Error::Parse(format!("row {row}: expected {M} columns")))?;
        *slot = field
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("row {row}: `{field}`: {e}")))?;
    }
    if fields.next().is_some() {
        return Err(Error::Parse(format!("row {row}: expected {M} columns")));
    }
    Ok(out)
}

/// `E x_{j+1} = A x_j + B u_j`, `y_j = C x_j`, `x_0 = 0`.
#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    e: DMatrix<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: DVector<f64>,
    // E^{-1}A and E^{-1}B
    step: DMatrix<f64>,
    gain: DVector<f64>,
}

impl DiscreteSystem {
    pub fn new(e: DMatrix<f64>, a: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>) -> Result<Self> {
        let n = b.len();
        if n == 0 || e.shape() != (n, n) || a.shape() != (n, n) || c.len() != n {
            return Err(Error::domain("inconsistent discrete system dimensions"));
        }
        let lu = e.clone().lu();
        let step = lu
            .solve(&a)
            .ok_or_else(|| Error::Factorization("E is singular".into()))?;
        let gain = lu
            .solve(&b)
            .ok_or_else(|| Error::Factorization("E is singular".into()))?;
        if step.iter().chain(gain.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Factorization("E is numerically singular".into()));
        }
        Ok(DiscreteSystem {
            e,
            a,
            b,
            c,
            step,
            gain,
        })
    }

    pub fn order(&self) -> usize {
        self.b.len()
    }

    /// `E^{-1} A`, whose spectral radius governs the decay of the impulse response.
    pub fn step_matrix(&self) -> &DMatrix<f64> {
        &self.step
    }

    /// `C (zE - A)^{-1} B`.
    pub fn transfer(&self, z: Complex64) -> Result<Complex64> {
        let pencil = to_complex(&self.e) * z - to_complex(&self.a);
        let b =
            CVector::from_iterator(self.order(), self.b.iter().map(|&x| Complex64::new(x, 0.0)));
        let x = pencil
            .lu()
            .solve(&b)
            .ok_or(Error::Singular { s: z, rcond: 0.0 })?;
        Ok(self.c.iter().zip(x.iter()).map(|(&c, x)| x * c).sum())
    }
}

pub fn simulate_discrete(sys: &DiscreteSystem, u: &[f64]) -> Vec<f64> {
    let mut x = DVector::zeros(sys.order());
    let mut y = Vec::with_capacity(u.len());
    for &uj in u {
        y.push(sys.c.dot(&x));
        x = &sys.step * &x + &sys.gain * uj;
    }
    y
}

/// `h_0 = 0`, `h_i = C (E^{-1}A)^{i-1} E^{-1}B`.
pub fn impulse_response(sys: &DiscreteSystem, j_max: usize) -> Vec<f64> {
    let mut h = Vec::with_capacity(j_max + 1);
    h.push(0.0);
    let mut v = sys.gain.clone();
    for _ in 1..=j_max {
        h.push(sys.c.dot(&v));
        v = &sys.step * &v;
    }
    h
}

/// Fixed-step schemes for delay systems `M_1 x' = M_2 x + M_3 x(t - τ) + B u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    /// Trapezoidal rule in `x`, with the delayed state and the input averaged
    /// over the step. Second order, A-stable.
    #[default]
    Trapezoidal,
    /// Implicit Euler in `x` with the delayed state and the input taken at
    /// the start of the step:
    /// `M_1 (x_{j+1} - x_j)/dt = M_2 x_{j+1} + M_3 x(t_j - τ) + B u(t_j)`.
    /// First order.
    ImexEuler,
}

impl Integrator {
    pub fn name(self) -> &'static str {
        match self {
            Integrator::Trapezoidal => "trapezoidal",
            Integrator::ImexEuler => "imex-euler",
        }
    }

    /// Nominal convergence order.
    pub fn order(self) -> u32 {
        match self {
            Integrator::Trapezoidal => 2,
            Integrator::ImexEuler => 1,
        }
    }
}

impl std::str::FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trapezoidal" => Ok(Integrator::Trapezoidal),
            "imex-euler" => Ok(Integrator::ImexEuler),
            _ => Err(Error::domain(format!(
                "unknown integrator `{s}` (expected trapezoidal or imex-euler)"
            ))),
        }
    }
}

/// How a sparse multi-sine drives the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Excitation {
    /// The real cosine sum; its spectrum also occupies the mirror indices `N - k_i`.
    #[default]
    Real,
    /// The complex exponential sum, realized as two real runs driven by its
    /// cosine and sine parts.
    Complex,
}

impl Excitation {
    pub fn name(self) -> &'static str {
        match self {
            Excitation::Real => "real",
            Excitation::Complex => "complex",
        }
    }
}

impl std::str::FromStr for Excitation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Excitation::Real),
            "complex" => Ok(Excitation::Complex),
            _ => Err(Error::domain(format!(
                "unknown excitation `{s}` (expected real or complex)"
            ))),
        }
    }
}

/// Records produced by a sparse multi-sine experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum Records {
    Real(TimeSeries),
    Complex { cos: TimeSeries, sin: TimeSeries },
}

impl Records {
    /// The record driven by the cosine part.
    pub fn primary(&self) -> &TimeSeries {
        match self {
            Records::Real(ts) => ts,
            Records::Complex { cos, .. } => cos,
        }
    }
}

/// Simulates a delay system under the sparse multi-sine `input` over `[0, tf]`.
pub fn simulate_sparse(
    sys: &StructuredSystem,
    input: &SparseInput,
    tf: f64,
    dt: f64,
    scheme: Integrator,
    excitation: Excitation,
) -> Result<Records> {
    match excitation {
        Excitation::Real => Ok(Records::Real(simulate_delay_with(
            sys,
            |t| input.at(t, tf),
            tf,
            dt,
            scheme,
        )?)),
        Excitation::Complex => {
            let (cos, sin) = rayon::join(
                || simulate_delay_with(sys, |t| input.at(t, tf), tf, dt, scheme),
                || simulate_delay_with(sys, |t| input.at_sin(t, tf), tf, dt, scheme),
            );
            Ok(Records::Complex {
                cos: cos?,
                sin: sin?,
            })
        }
    }
}

/// [`simulate_delay_with`] using the trapezoidal rule.
pub fn simulate_delay<F>(sys: &StructuredSystem, u: F, tf: f64, dt: f64) -> Result<TimeSeries>
where
    F: Fn(f64) -> f64,
{
    simulate_delay_with(sys, u, tf, dt, Integrator::Trapezoidal)
}

/// Fixed-step integration of a `delay`-family system
/// `M_1 x'(t) = M_2 x(t) + M_3 x(t - τ) + B u(t)` with zero history on
/// `[-τ, 0]`. Output is sampled at `t_j = j·dt`, `j = 0..=N`, `N = round(tf/dt)`.
///
/// Delayed states are read back from the stored trajectory; a delay that is
/// not a multiple of `dt` is resolved by linear interpolation between the two
/// neighbouring steps. Requires `τ >= dt`.
pub fn simulate_delay_with<F>(
    sys: &StructuredSystem,
    u: F,
    tf: f64,
    dt: f64,
    scheme: Integrator,
) -> Result<TimeSeries>
where
    F: Fn(f64) -> f64,
{
    if !sys.family().is_delay() {
        return Err(Error::domain(format!(
            "delay integrator needs the `delay` family, got `{}`",
            sys.family().name()
        )));
    }
    if !(dt > 0.0) || !(tf > 0.0) {
        return Err(Error::domain(format!(
            "need tf > 0 and dt > 0, got tf={tf}, dt={dt}"
        )));
    }
    let steps_f = tf / dt;
    let steps = steps_f.round() as usize;
    if steps == 0 || (steps_f - steps as f64).abs() > 1e-6 * steps_f.max(1.0) {
        return Err(Error::domain(format!(
            "tf = {tf} is not an integer multiple of dt = {dt}"
        )));
    }
    let tau = sys.params()[0];
    let lag = tau / dt;
    if lag < 1.0 - 1e-9 {
        return Err(Error::domain(format!(
            "delay {tau} is shorter than the time step {dt}"
        )));
    }
    let (lag_steps, lag_frac) = if (lag - lag.round()).abs() <= 1e-9 * lag {
        (lag.round() as usize, 0.0)
    } else {
        (lag.floor() as usize, lag - lag.floor())
    };

    let n = sys.order();
    let [m1, m2, m3] = [&sys.matrices()[0], &sys.matrices()[1], &sys.matrices()[2]];
    let b = DMatrix::from_column_slice(n, 1, sys.b().as_slice());
    // S x_{j+1} = R x_j + M_3 (w_0 d_j + w_1 d_{j+1}) + B (w_0 u_j + w_1 u_{j+1})
    let (lhs, rhs, w0, w1) = match scheme {
        Integrator::Trapezoidal => (m1 / dt - m2 * 0.5, m1 / dt + m2 * 0.5, 0.5, 0.5),
        Integrator::ImexEuler => (m1 / dt - m2, m1 / dt, 1.0, 0.0),
    };
    let lu = lhs.lu();
    let solve = |rhs: &DMatrix<f64>| {
        lu.solve(rhs)
            .filter(|x| x.iter().all(|v| v.is_finite()))
            .ok_or_else(|| {
                Error::Factorization(format!("{} step matrix is singular", scheme.name()))
            })
    };
    let prop = solve(&rhs)?;
    let delayed = solve(m3)?;
    let forcing = solve(&b)?;

    // row-major copies for the inner loop
    let prop: Vec<f64> = prop.transpose().as_slice().to_vec();
    let delayed: Vec<f64> = delayed.transpose().as_slice().to_vec();
    let forcing: Vec<f64> = forcing.as_slice().to_vec();
    let c = sys.c().as_slice();
    let has_delay = delayed.iter().any(|&v| v != 0.0);

    let cap = lag_steps + 3;
    let mut history = vec![0.0; cap * n];
    let state = |hist: &[f64], j: isize, out: &mut [f64]| {
        if j < 0 {
            out.fill(0.0);
        } else {
            let slot = j as usize % cap;
            out.copy_from_slice(&hist[slot * n..(slot + 1) * n]);
        }
    };
    // x(t_j - τ), linearly interpolated when the lag is fractional
    let delayed_state = |hist: &[f64], j: usize, out: &mut [f64], tmp: &mut [f64]| {
        let base = j as isize - lag_steps as isize;
        state(hist, base, out);
        if lag_frac != 0.0 {
            state(hist, base - 1, tmp);
            for (o, t) in out.iter_mut().zip(tmp.iter()) {
                *o = (1.0 - lag_frac) * *o + lag_frac * t;
            }
        }
    };

    let mut us = Vec::with_capacity(steps + 1);
    let mut ys = Vec::with_capacity(steps + 1);
    let mut x = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut d_now = vec![0.0; n];
    let mut d_next = vec![0.0; n];
    let mut d_sum = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    let mut u_now = u(0.0);
    us.push(u_now);
    ys.push(0.0);
    for j in 0..steps {
        let t_next = (j + 1) as f64 * dt;
        let u_next = u(t_next);
        let u_sum = w0 * u_now + w1 * u_next;
        if has_delay {
            delayed_state(&history, j, &mut d_now, &mut tmp);
            if w1 != 0.0 {
                delayed_state(&history, j + 1, &mut d_next, &mut tmp);
            }
            for i in 0..n {
                d_sum[i] = w0 * d_now[i] + w1 * d_next[i];
            }
        }
        for i in 0..n {
            let row = &prop[i * n..(i + 1) * n];
            let mut acc = forcing[i] * u_sum;
            for k in 0..n {
                acc += row[k] * x[k];
            }
            if has_delay {
                let drow = &delayed[i * n..(i + 1) * n];
                for k in 0..n {
                    acc += drow[k] * d_sum[k];
                }
            }
            next[i] = acc;
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Instability {
                step: j + 1,
                t: t_next,
            });
        }
        std::mem::swap(&mut x, &mut next);
        let slot = (j + 1) % cap;
        history[slot * n..(slot + 1) * n].copy_from_slice(&x);
        us.push(u_next);
        ys.push(c.iter().zip(&x).map(|(c, x)| c * x).sum());
        u_now = u_next;
    }
    TimeSeries::new(dt, us, ys)
}

/// Multi-sine excitation that is sparse in the Fourier domain:
/// `u_j = (1/N) Σ_i cos(2π k_i j / N)`, the real part of the complex
/// exponential sum `(1/N) Σ_i q_{k_i}^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseInput {
    n: usize,
    ks: Vec<usize>,
}

/// Where to evaluate a [`SparseInput`].
#[derive(Debug, Clone, Copy)]
pub enum InputMode {
    /// Sample index `j ∈ [0, N]`.
    Discrete(usize),
    /// Time `t ∈ [0, tf]` of the continuous form.
    Continuous { t: f64, tf: f64 },
}

impl SparseInput {
    pub fn new(n: usize, ks: &[usize]) -> Result<Self> {
        let mut sorted = ks.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::domain("duplicate frequency index in sparse input"));
        }
        if let Some(&k) = sorted.iter().find(|&&k| k == 0 || k >= n) {
            return Err(Error::domain(format!(
                "frequency index {k} outside [1, {n})"
            )));
        }
        Ok(SparseInput { n, ks: ks.to_vec() })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.ks.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.ks
    }

    pub fn sample(&self, j: usize) -> f64 {
        let n = self.n as f64;
        self.ks
            .iter()
            .map(|&k| (2.0 * PI * ((k * j) % self.n) as f64 / n).cos())
            .sum::<f64>()
            / n
    }

    /// The complex exponential sum before taking the real part.
    pub fn complex_sample(&self, j: usize) -> Complex64 {
        let n = self.n as f64;
        self.ks
            .iter()
            .map(|&k| Complex64::from_polar(1.0, 2.0 * PI * ((k * j) % self.n) as f64 / n))
            .sum::<Complex64>()
            / n
    }

    /// `u(t) = (dt/tf) Σ_i cos(2π k_i t / tf)` with `tf = N·dt`.
    pub fn at(&self, t: f64, tf: f64) -> f64 {
        let scale = 1.0 / self.n as f64;
        self.ks
            .iter()
            .map(|&k| (2.0 * PI * k as f64 * (t / tf)).cos())
            .sum::<f64>()
            * scale
    }

    /// Quadrature companion of [`SparseInput::at`]: `(dt/tf) Σ_i sin(2π k_i t / tf)`.
    pub fn at_sin(&self, t: f64, tf: f64) -> f64 {
        let scale = 1.0 / self.n as f64;
        self.ks
            .iter()
            .map(|&k| (2.0 * PI * k as f64 * (t / tf)).sin())
            .sum::<f64>()
            * scale
    }

    pub fn eval(&self, mode: InputMode) -> Result<f64> {
        match mode {
            InputMode::Discrete(j) if j <= self.n => Ok(self.sample(j)),
            InputMode::Discrete(j) => {
                Err(Error::domain(format!("sample {j} beyond N = {}", self.n)))
            }
            InputMode::Continuous { t, tf } if (0.0..=tf).contains(&t) => Ok(self.at(t, tf)),
            InputMode::Continuous { t, tf } => {
                Err(Error::domain(format!("time {t} outside [0, {tf}]")))
            }
        }
    }
}

/// Free-function form of [`SparseInput::eval`].
pub fn sparse_input(n: usize, ks: &[usize], mode: InputMode) -> Result<f64> {
    SparseInput::new(n, ks)?.eval(mode)
}

/// The three validation signals of the delay case study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationInput {
    /// `sin t`
    Sine,
    /// `2(t - ½⌊2t + ½⌋)(-1)^{⌊2t + ½⌋} + 1`
    Triangle,
    /// `t exp(-t²)`
    Pulse,
}

impl ValidationInput {
    pub const ALL: [ValidationInput; 3] = [Self::Sine, Self::Triangle, Self::Pulse];

    pub fn from_index(which: usize) -> Result<Self> {
        match which {
            1 => Ok(Self::Sine),
            2 => Ok(Self::Triangle),
            3 => Ok(Self::Pulse),
            _ => Err(Error::domain(format!(
                "validation input must be 1, 2 or 3, got {which}"
            ))),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Self::Sine => 1,
            Self::Triangle => 2,
            Self::Pulse => 3,
        }
    }

    pub fn eval(self, t: f64) -> f64 {
        match self {
            Self::Sine => t.sin(),
            Self::Triangle => {
                let m = (2.0 * t + 0.5).floor();
                let sign = if (m as i64) % 2 == 0 { 1.0 } else { -1.0 };
                2.0 * (t - 0.5 * m) * sign + 1.0
            }
            Self::Pulse => t * (-t * t).exp(),
        }
    }
}

pub fn validation_input(which: ValidationInput, t: f64) -> f64 {
    which.eval(t)
}
