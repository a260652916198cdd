//! Least-squares transfer function estimation.
//!
//! For a record driven by an input that is sparse in the Fourier domain, the
//! output tail satisfies approximately
//!
//! ```text
//! y_j ≈ (1/N) Σ_i û_{k_i} H(q_{k_i}) q_{k_i}^j,     j = j_min..=N,
//! ```
//!
//! with `q_k = exp(2πi k/N)`. Stacking these rows gives a tall Fourier matrix
//! `F`; the transfer estimates are the truncated-SVD least-squares solution
//! of `F Ĥ ≈ Y`. Discarding the first `j_min` samples removes the start-up
//! transient that the plain ratio `ŷ_k / û_k` (ETFE) suffers from.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{truncated_pinv_solve, CMatrix, CVector};
use crate::persist::fmt17;
use crate::sim::{parse_row, Records, TimeSeries};

/// Default fraction of the record used for the least-squares fit.
pub const DEFAULT_FIT_FRACTION: f64 = 0.75;
/// Default relative singular-value cutoff.
pub const DEFAULT_REL_THRESHOLD: f64 = 1e-10;
/// Above this many matrix entries the Fourier matrix is never materialized.
pub const MAX_DENSE_ENTRIES: usize = 200_000_000;
/// Fourier coefficients below this fraction of the largest one count as zero.
pub const EXCITATION_FLOOR: f64 = 1e-12;
/// Rows generated per block; each block restarts its powers from an exact exponential.
const BLOCK_ROWS: usize = 1 << 16;

/// Discrete Fourier transform `X_k = Σ_j x_j exp(-2πi jk/N)` of any length.
pub fn dft(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    if buf.is_empty() {
        return buf;
    }
    FftPlanner::new()
        .plan_fft_forward(buf.len())
        .process(&mut buf);
    buf
}

pub fn dft_real(x: &[f64]) -> Vec<Complex64> {
    let buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    dft(&buf)
}

/// `exp(2πi k j / N)` with the phase reduced modulo `N` first.
fn unit_power(k: usize, j: usize, n: usize) -> Complex64 {
    let phase = ((k as u128 * j as u128) % n as u128) as f64 / n as f64;
    Complex64::from_polar(1.0, 2.0 * PI * phase)
}

fn excitation_floor(u_hat: &[Complex64]) -> f64 {
    EXCITATION_FLOOR * u_hat.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Empirical transfer function estimate `ŷ_k / û_k` over the first `N`
/// samples, for every `k` where the input is excited.
pub fn etfe_ratio(ts: &TimeSeries) -> Result<BTreeMap<usize, Complex64>> {
    let n = ts.steps();
    let u_hat = dft_real(&ts.u()[..n]);
    let y_hat = dft_real(&ts.y()[..n]);
    let floor = excitation_floor(&u_hat);
    let ratios: BTreeMap<_, _> = u_hat
        .iter()
        .zip(&y_hat)
        .enumerate()
        .filter(|(_, (u, _))| u.norm() > floor)
        .map(|(k, (u, y))| (k, y / u))
        .collect();
    if ratios.is_empty() {
        return Err(Error::NoExcitation);
    }
    Ok(ratios)
}

/// Frequencies at which a record of length `tf = N·dt` can be resolved,
/// snapped from log-spaced requests to the Fourier grid `2π k / tf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencySelection {
    /// Requested angular frequencies (imaginary parts of the requested points).
    pub requested: Vec<f64>,
    /// Distinct Fourier indices, ascending.
    pub ks: Vec<usize>,
    pub tf: f64,
    pub dt: f64,
    pub n: usize,
    /// Every request collapsed onto `k = 1` because `f_max·tf/2π < 1`.
    pub collapsed: bool,
}

impl FrequencySelection {
    /// Builds a selection directly from Fourier indices.
    pub fn from_indices(ks: &[usize], tf: f64, dt: f64) -> Result<Self> {
        let n = steps_for(tf, dt)?;
        let mut sorted = ks.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.is_empty() || sorted[0] == 0 || *sorted.last().unwrap() >= n {
            return Err(Error::domain(format!(
                "Fourier indices must lie in [1, {n})"
            )));
        }
        Ok(FrequencySelection {
            requested: sorted.iter().map(|&k| 2.0 * PI * k as f64 / tf).collect(),
            ks: sorted,
            tf,
            dt,
            n,
            collapsed: false,
        })
    }

    pub fn len(&self) -> usize {
        self.ks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ks.is_empty()
    }

    /// Angular frequencies `ω_i = 2π k_i / tf`.
    pub fn omegas(&self) -> Vec<f64> {
        self.ks
            .iter()
            .map(|&k| 2.0 * PI * k as f64 / self.tf)
            .collect()
    }

    /// `λ_i = i ω_i`.
    pub fn frequencies(&self) -> Vec<Complex64> {
        self.omegas()
            .into_iter()
            .map(|w| Complex64::new(0.0, w))
            .collect()
    }

    /// `q_{k_i} = exp(λ_i dt) = exp(2πi k_i / N)`.
    pub fn unit_points(&self) -> Vec<Complex64> {
        self.ks.iter().map(|&k| unit_power(k, 1, self.n)).collect()
    }
}

fn steps_for(tf: f64, dt: f64) -> Result<usize> {
    if !(tf > 0.0) || !(dt > 0.0) {
        return Err(Error::domain(format!(
            "need tf > 0 and dt > 0, got tf={tf}, dt={dt}"
        )));
    }
    let steps = (tf / dt).round();
    if steps < 1.0 || ((tf / dt) - steps).abs() > 1e-6 * steps {
        return Err(Error::domain(format!(
            "tf = {tf} is not an integer multiple of dt = {dt}"
        )));
    }
    Ok(steps as usize)
}

/// Log-spaces `count` requests on `[f_min, f_max]` (rad/s, both endpoints
/// included), snaps each to the nearest Fourier index `k ≥ 1` and removes
/// duplicates.
pub fn select_frequencies(
    f_min: f64,
    f_max: f64,
    count: usize,
    tf: f64,
    dt: f64,
) -> Result<FrequencySelection> {
    if !(f_min > 0.0) || !(f_max.is_finite()) {
        return Err(Error::domain(format!(
            "frequency bounds must be positive, got [{f_min}, {f_max}]"
        )));
    }
    if f_min > f_max {
        return Err(Error::domain(format!(
            "f_min = {f_min} exceeds f_max = {f_max}"
        )));
    }
    if count == 0 {
        return Err(Error::domain("at least one frequency must be requested"));
    }
    let n = steps_for(tf, dt)?;
    let (lo, hi) = (f_min.log10(), f_max.log10());
    let requested: Vec<f64> = (0..count)
        .map(|i| {
            if count == 1 {
                f_min
            } else if i + 1 == count {
                f_max
            } else {
                10f64.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64)
            }
        })
        .collect();
    // f64::round rounds half away from zero
    let mut ks: Vec<usize> = requested
        .iter()
        .map(|&w| ((w * tf / (2.0 * PI)).round() as usize).max(1))
        .collect();
    ks.dedup();
    if let Some(&k) = ks.iter().find(|&&k| k >= n) {
        return Err(Error::domain(format!(
            "frequency index {k} is not resolvable with N = {n} samples"
        )));
    }
    let collapsed = f_max * tf / (2.0 * PI) < 1.0;
    if collapsed {
        log::warn!("f_max·tf/2π < 1: every requested frequency collapses onto k = 1");
    }
    Ok(FrequencySelection {
        requested,
        ks,
        tf,
        dt,
        n,
        collapsed,
    })
}

/// Column `i` of the Fourier matrix: `û_{k_i} q_{k_i}^j / N` for `j = j_min..=N`.
#[derive(Debug, Clone, Copy)]
struct FourierColumn {
    k: usize,
    coeff: Complex64,
}

fn fourier_columns(u_hat: &[Complex64], ks: &[usize]) -> Result<Vec<FourierColumn>> {
    let floor = excitation_floor(u_hat);
    ks.iter()
        .map(|&k| match u_hat.get(k) {
            Some(&c) if c.norm() > floor && c.norm() > 0.0 => Ok(FourierColumn { k, coeff: c }),
            _ => Err(Error::MissingExcitation { k }),
        })
        .collect()
}

impl FourierColumn {
    /// Writes `out.len()` consecutive entries starting at row index `j0`.
    /// Powers advance by running product from an exact exponential at `j0`.
    fn fill(&self, n: usize, j0: usize, out: &mut [Complex64]) {
        let step = unit_power(self.k, 1, n);
        let mut q = unit_power(self.k, j0, n) * (self.coeff / n as f64);
        for slot in out {
            *slot = q;
            q *= step;
        }
    }
}

/// Dense Fourier matrix with rows `j = j_min..=N` and one column per index in
/// `ks`, entry `û_k q_k^j / N`.
pub fn assemble_f(u_hat: &[Complex64], ks: &[usize], j_min: usize, n: usize) -> Result<CMatrix> {
    if j_min > n {
        return Err(Error::domain(format!("j_min = {j_min} exceeds N = {n}")));
    }
    if u_hat.len() != n {
        return Err(Error::domain(format!(
            "expected {n} Fourier coefficients, got {}",
            u_hat.len()
        )));
    }
    let cols = fourier_columns(u_hat, ks)?;
    let rows = n - j_min + 1;
    let mut f = CMatrix::zeros(rows, cols.len());
    // column-major storage: column c occupies one contiguous run of `rows` entries
    for (col, column) in cols.iter().zip(f.as_mut_slice().chunks_mut(rows.max(1))) {
        column
            .par_chunks_mut(BLOCK_ROWS)
            .enumerate()
            .for_each(|(b, block)| col.fill(n, j_min + b * BLOCK_ROWS, block));
    }
    Ok(f)
}

/// Effective relative cutoff: never below the rounding level of the factorization.
fn effective_floor(rel_threshold: f64, dims: usize) -> f64 {
    rel_threshold.max(dims as f64 * f64::EPSILON)
}

/// Minimum-norm least-squares solution of `F x ≈ Y` on the span of the
/// singular vectors whose singular values are at least
/// `rel_threshold·σ_max`. Tall systems are reduced by a Householder QR first;
/// singular values at the rounding level of the factorization are always dropped.
pub fn solve_regularized_ls(f: &CMatrix, y: &[f64], rel_threshold: f64) -> Result<Vec<Complex64>> {
    let rhs = CVector::from_iterator(y.len(), y.iter().map(|&v| Complex64::new(v, 0.0)));
    solve_regularized_ls_complex(f, &rhs, rel_threshold)
}

pub(crate) fn solve_regularized_ls_complex(
    f: &CMatrix,
    rhs: &CVector,
    rel_threshold: f64,
) -> Result<Vec<Complex64>> {
    let (m, r) = f.shape();
    if rhs.len() != m {
        return Err(Error::domain(format!(
            "F has {m} rows but Y has {}",
            rhs.len()
        )));
    }
    if !(0.0..1.0).contains(&rel_threshold) {
        return Err(Error::domain(format!(
            "threshold {rel_threshold} outside [0, 1)"
        )));
    }
    if r == 0 || m == 0 {
        return Err(Error::Degenerate);
    }
    let floor = effective_floor(rel_threshold, m.max(r));
    let x = if m > r {
        let qr = f.clone().qr();
        let mut qty = rhs.clone();
        qr.q_tr_mul(&mut qty);
        let head = qty.rows(0, r).into_owned();
        truncated_pinv_solve(&qr.r(), &head, floor).ok_or(Error::Degenerate)?
    } else {
        truncated_pinv_solve(f, rhs, floor).ok_or(Error::Degenerate)?
    };
    Ok(x.iter().copied().collect())
}

/// Neumaier-compensated complex accumulator.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: Complex64,
    comp: Complex64,
}

impl CompensatedSum {
    fn add(&mut self, v: Complex64) {
        fn step(sum: &mut f64, comp: &mut f64, v: f64) {
            let t = *sum + v;
            if sum.abs() >= v.abs() {
                *comp += (*sum - t) + v;
            } else {
                *comp += (v - t) + *sum;
            }
            *sum = t;
        }
        step(&mut self.sum.re, &mut self.comp.re, v.re);
        step(&mut self.sum.im, &mut self.comp.im, v.im);
    }

    fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    fn value(&self) -> Complex64 {
        self.sum + self.comp
    }
}

/// `FᴴF` and `FᴴY` accumulated block by block without storing `F`.
/// Blocks are reduced in index order, so the result does not depend on the
/// number of worker threads.
fn streamed_normal_equations(
    cols: &[FourierColumn],
    n: usize,
    j_min: usize,
    y: Samples<'_>,
) -> (CMatrix, CVector) {
    let r = cols.len();
    let rows = n - j_min + 1;
    let blocks = rows.div_ceil(BLOCK_ROWS);
    let partials: Vec<(Vec<CompensatedSum>, Vec<CompensatedSum>)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let j0 = j_min + b * BLOCK_ROWS;
            let len = BLOCK_ROWS.min(rows - b * BLOCK_ROWS);
            // column-major block: entry (row, c) at c * len + row
            let mut buf = vec![Complex64::new(0.0, 0.0); len * r];
            for (col, out) in cols.iter().zip(buf.chunks_mut(len)) {
                col.fill(n, j0, out);
            }
            let mut f = vec![Complex64::new(0.0, 0.0); r];
            let mut gram = vec![CompensatedSum::default(); r * r];
            let mut proj = vec![CompensatedSum::default(); r];
            for row in 0..len {
                for (c, slot) in f.iter_mut().enumerate() {
                    *slot = buf[c * len + row];
                }
                let yj = y.at(j0 + row);
                for a in 0..r {
                    let fa = f[a].conj();
                    proj[a].add(fa * yj);
                    for c in a..r {
                        gram[a * r + c].add(fa * f[c]);
                    }
                }
            }
            (gram, proj)
        })
        .collect();
    let mut gram = vec![CompensatedSum::default(); r * r];
    let mut proj = vec![CompensatedSum::default(); r];
    for (g, p) in &partials {
        for (acc, v) in gram.iter_mut().zip(g) {
            acc.merge(v);
        }
        for (acc, v) in proj.iter_mut().zip(p) {
            acc.merge(v);
        }
    }
    let mut g = CMatrix::zeros(r, r);
    for a in 0..r {
        for c in a..r {
            let v = gram[a * r + c].value();
            g[(a, c)] = v;
            g[(c, a)] = v.conj();
        }
    }
    (g, DVector::from_iterator(r, proj.iter().map(|p| p.value())))
}

fn solve_normal_equations(
    g: &CMatrix,
    rhs: &CVector,
    rel_threshold: f64,
) -> Result<Vec<Complex64>> {
    // σ(FᴴF) = σ(F)²; below √ε·σ_max the Gram matrix carries no information
    let floor = rel_threshold.max((g.nrows() as f64 * f64::EPSILON).sqrt());
    let x = truncated_pinv_solve(g, rhs, floor * floor).ok_or(Error::Degenerate)?;
    Ok(x.iter().copied().collect())
}

/// How the least-squares problem is solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsOptions {
    pub rel_threshold: f64,
    /// Materialize `F` only while `rows·cols` stays at or below this.
    pub max_dense_entries: usize,
}

impl Default for LsOptions {
    fn default() -> Self {
        LsOptions {
            rel_threshold: DEFAULT_REL_THRESHOLD,
            max_dense_entries: MAX_DENSE_ENTRIES,
        }
    }
}

/// Provenance of a [`TransferEstimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateMeta {
    pub tf: f64,
    pub dt: f64,
    pub j_min: usize,
    pub threshold: f64,
    pub ks: Vec<usize>,
}

/// Transfer values `(λ_i, Ĥ_i)` at distinct points `λ_i = iω_i`, `ω_i > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferEstimate {
    points: Vec<(Complex64, Complex64)>,
    meta: Option<EstimateMeta>,
}

impl TransferEstimate {
    pub fn new(points: Vec<(Complex64, Complex64)>, meta: Option<EstimateMeta>) -> Result<Self> {
        for (i, (lam, _)) in points.iter().enumerate() {
            if lam.re != 0.0 || !(lam.im > 0.0) {
                return Err(Error::domain(format!(
                    "estimate frequency {i} = {lam} is not on the positive imaginary axis"
                )));
            }
            if points[..i].iter().any(|(other, _)| other == lam) {
                return Err(Error::domain(format!("duplicate estimate frequency {lam}")));
            }
        }
        Ok(TransferEstimate { points, meta })
    }

    pub fn points(&self) -> &[(Complex64, Complex64)] {
        &self.points
    }

    pub fn meta(&self) -> Option<&EstimateMeta> {
        self.meta.as_ref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        writeln!(w, "omega,re,im")?;
        for (lam, h) in &self.points {
            writeln!(w, "{},{},{}", fmt17(lam.im), fmt17(h.re), fmt17(h.im))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty estimate file".into()))??;
        if header.trim() != "omega,re,im" {
            return Err(Error::Parse(format!(
                "expected header `omega,re,im`, got `{header}`"
            )));
        }
        let mut points = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let [w, re, im] = parse_row::<3>(&line, row + 2)?;
            points.push((Complex64::new(0.0, w), Complex64::new(re, im)));
        }
        TransferEstimate::new(points, None)
    }

    /// JSON sidecar with the provenance metadata.
    pub fn write_meta_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, &self.meta)?;
        Ok(())
    }

    pub fn with_meta_json<R: Read>(mut self, reader: R) -> Result<Self> {
        self.meta = serde_json::from_reader(reader)?;
        Ok(self)
    }
}

/// `j_min = ⌊(1 - fit_fraction)·N⌋`.
pub fn first_fit_index(n: usize, fit_fraction: f64) -> Result<usize> {
    if !(fit_fraction > 0.0 && fit_fraction < 1.0) {
        return Err(Error::domain(format!(
            "fit fraction {fit_fraction} outside (0, 1)"
        )));
    }
    Ok(((1.0 - fit_fraction) * n as f64).floor() as usize)
}

/// Estimates the transfer function at the selected frequencies from a record
/// excited by a sparse multi-sine. The Fourier matrix gets one column per
/// excited index `k_i` and, for real records, one for its mirror `N - k_i`.
pub fn lstfe_pipeline(
    ts: &TimeSeries,
    sel: &FrequencySelection,
    fit_fraction: f64,
    rel_threshold: f64,
) -> Result<TransferEstimate> {
    lstfe_with_options(
        ts,
        sel,
        fit_fraction,
        LsOptions {
            rel_threshold,
            ..LsOptions::default()
        },
    )
}

pub fn lstfe_with_options(
    ts: &TimeSeries,
    sel: &FrequencySelection,
    fit_fraction: f64,
    opts: LsOptions,
) -> Result<TransferEstimate> {
    check_record(ts, sel)?;
    let n = sel.n;
    let u_hat = dft_real(&ts.u()[..n]);
    let floor = excitation_floor(&u_hat);
    let mut ks = sel.ks.clone();
    for &k in &sel.ks {
        let mirror = n - k;
        if mirror != k && u_hat[mirror].norm() > floor && !sel.ks.contains(&mirror) {
            ks.push(mirror);
        }
    }
    estimate(&u_hat, &ks, Samples::Real(ts.y()), sel, fit_fraction, opts)
}

/// Estimate from a complex excitation `Σ q_{k_i}^j / N`, supplied as the two
/// real records driven by its real (cosine) and imaginary (sine) parts. By
/// linearity their combination `y_cos + i·y_sin` is the response to the
/// complex input, whose spectrum has no mirror components.
pub fn lstfe_analytic(
    cos_record: &TimeSeries,
    sin_record: &TimeSeries,
    sel: &FrequencySelection,
    fit_fraction: f64,
    opts: LsOptions,
) -> Result<TransferEstimate> {
    check_record(cos_record, sel)?;
    check_record(sin_record, sel)?;
    let n = sel.n;
    let u: Vec<Complex64> = cos_record.u()[..n]
        .iter()
        .zip(&sin_record.u()[..n])
        .map(|(&re, &im)| Complex64::new(re, im))
        .collect();
    let u_hat = dft(&u);
    estimate(
        &u_hat,
        &sel.ks,
        Samples::Complex(cos_record.y(), sin_record.y()),
        sel,
        fit_fraction,
        opts,
    )
}

/// Dispatches on the kind of experiment.
pub fn lstfe_records(
    records: &Records,
    sel: &FrequencySelection,
    fit_fraction: f64,
    opts: LsOptions,
) -> Result<TransferEstimate> {
    match records {
        Records::Real(ts) => lstfe_with_options(ts, sel, fit_fraction, opts),
        Records::Complex { cos, sin } => lstfe_analytic(cos, sin, sel, fit_fraction, opts),
    }
}

fn check_record(ts: &TimeSeries, sel: &FrequencySelection) -> Result<()> {
    if sel.n != ts.steps() {
        return Err(Error::domain(format!(
            "selection was made for N = {} but the record has N = {}",
            sel.n,
            ts.steps()
        )));
    }
    if (sel.dt - ts.dt()).abs() > 1e-9 * ts.dt() {
        return Err(Error::domain(
            "selection and record use different time steps",
        ));
    }
    Ok(())
}

/// Output samples, real or split into real and imaginary parts.
#[derive(Clone, Copy)]
enum Samples<'a> {
    Real(&'a [f64]),
    Complex(&'a [f64], &'a [f64]),
}

impl Samples<'_> {
    fn at(&self, j: usize) -> Complex64 {
        match self {
            Samples::Real(y) => Complex64::new(y[j], 0.0),
            Samples::Complex(re, im) => Complex64::new(re[j], im[j]),
        }
    }
}

fn estimate(
    u_hat: &[Complex64],
    ks: &[usize],
    y: Samples<'_>,
    sel: &FrequencySelection,
    fit_fraction: f64,
    opts: LsOptions,
) -> Result<TransferEstimate> {
    let n = sel.n;
    let j_min = first_fit_index(n, fit_fraction)?;
    let cols = fourier_columns(u_hat, ks)?;
    let rows = n - j_min + 1;

    let h = if rows * cols.len() <= opts.max_dense_entries {
        let f = assemble_f(u_hat, ks, j_min, n)?;
        let rhs = CVector::from_iterator(rows, (j_min..=n).map(|j| y.at(j)));
        solve_regularized_ls_complex(&f, &rhs, opts.rel_threshold)?
    } else {
        let (g, rhs) = streamed_normal_equations(&cols, n, j_min, y);
        solve_normal_equations(&g, &rhs, opts.rel_threshold)?
    };

    let points = sel
        .frequencies()
        .into_iter()
        .zip(h.iter().copied())
        .collect();
    TransferEstimate::new(
        points,
        Some(EstimateMeta {
            tf: sel.tf,
            dt: sel.dt,
            j_min,
            threshold: opts.rel_threshold,
            ks: sel.ks.clone(),
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SparseInput;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn dft_of_impulse_is_flat() {
        let mut x = vec![c(0.0, 0.0); 12];
        x[0] = c(1.0, 0.0);
        assert!(dft(&x).iter().all(|&z| (z - c(1.0, 0.0)).norm() < 1e-15));
        assert!(dft(&[]).is_empty());
    }

    #[test]
    fn dft_of_complex_sparse_input_picks_its_index() {
        let s = SparseInput::new(64, &[5]).unwrap();
        let x: Vec<_> = (0..64).map(|j| s.complex_sample(j)).collect();
        let x_hat = dft(&x);
        for (k, z) in x_hat.iter().enumerate() {
            let expected = if k == 5 { 1.0 } else { 0.0 };
            assert!((z - c(expected, 0.0)).norm() < 1e-13, "k={k}: {z}");
        }
    }

    #[test]
    fn dft_of_real_sparse_input_splits_into_mirrors() {
        let s = SparseInput::new(8, &[1, 3]).unwrap();
        let x: Vec<f64> = (0..8).map(|j| s.sample(j)).collect();
        let x_hat = dft_real(&x);
        for (k, z) in x_hat.iter().enumerate() {
            let expected = if [1, 3, 5, 7].contains(&k) { 0.5 } else { 0.0 };
            assert!((z - c(expected, 0.0)).norm() < 1e-15, "k={k}: {z}");
        }
        let x: Vec<_> = (0..8).map(|j| s.complex_sample(j)).collect();
        for (k, z) in dft(&x).iter().enumerate() {
            let expected = if [1, 3].contains(&k) { 1.0 } else { 0.0 };
            assert!((z - c(expected, 0.0)).norm() < 1e-15, "k={k}: {z}");
        }
    }

    #[test]
    fn etfe_of_identity_is_one() {
        let u: Vec<f64> = (0..32).map(|j| ((j * j) as f64 * 0.37).sin()).collect();
        let ts = TimeSeries::new(0.1, u.clone(), u).unwrap();
        let h = etfe_ratio(&ts).unwrap();
        assert!(!h.is_empty());
        assert!(h.values().all(|&z| (z - c(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn etfe_skips_unexcited_index() {
        let s = SparseInput::new(16, &[1, 2]).unwrap();
        let u: Vec<f64> = (0..=16).map(|j| s.sample(j)).collect();
        let ts = TimeSeries::new(1.0, u.clone(), u).unwrap();
        let h = etfe_ratio(&ts).unwrap();
        assert_eq!(h.keys().copied().collect::<Vec<_>>(), vec![1, 2, 14, 15]);
        assert!(!h.contains_key(&3));

        let ts = TimeSeries::new(1.0, vec![0.0; 8], vec![1.0; 8]).unwrap();
        assert!(matches!(etfe_ratio(&ts), Err(Error::NoExcitation)));
    }

    #[test]
    fn reference_interpolation_frequencies() {
        let sel = select_frequencies(1e-4, 1.0, 10, 10_000.0, 5e-3).unwrap();
        assert_eq!(sel.ks, vec![1, 3, 10, 27, 74, 206, 572, 1592]);
        assert_eq!(sel.requested.len(), 10);
        assert_eq!(sel.n, 2_000_000);
        assert!(!sel.collapsed);
        let printed = [
            6.28e-4, 1.88e-3, 6.28e-3, 1.70e-2, 4.65e-2, 1.29e-1, 3.59e-1, 1.00028,
        ];
        for (w, p) in sel.omegas().iter().zip(printed) {
            assert!((w - p).abs() / p < 5e-3, "{w} vs {p}");
        }
    }

    #[test]
    fn reference_test_frequencies() {
        let sel = select_frequencies(10f64.powf(0.3), 10.0, 6, 40.0, 1e-5).unwrap();
        assert_eq!(sel.ks, vec![13, 18, 24, 33, 46, 64]);
        let printed = [2.042, 2.827, 3.770, 5.184, 7.226, 10.053];
        for (w, p) in sel.omegas().iter().zip(printed) {
            assert!((w - p).abs() / p < 1e-3, "{w} vs {p}");
        }
    }

    #[test]
    fn selection_collapses_and_rejects() {
        let tf = 100.0;
        let w = 2.0 * PI / tf;
        let sel = select_frequencies(w, w, 5, tf, 0.5).unwrap();
        assert_eq!(sel.ks, vec![1]);

        let sel = select_frequencies(1e-4, 1e-3, 3, tf, 0.5).unwrap();
        assert!(sel.collapsed);
        assert_eq!(sel.ks, vec![1]);

        assert!(select_frequencies(2.0, 1.0, 3, tf, 0.5).is_err());
        assert!(select_frequencies(1.0, 2.0, 0, tf, 0.5).is_err());
    }

    #[test]
    fn unit_points_lie_on_circle() {
        let sel = select_frequencies(1e-4, 1.0, 10, 10_000.0, 5e-3).unwrap();
        for (q, lam) in sel.unit_points().iter().zip(sel.frequencies()) {
            assert!((q.norm() - 1.0).abs() < 1e-15);
            assert!((q - (lam * sel.dt).exp()).norm() < 1e-12);
        }
    }

    #[test]
    fn single_row_fourier_matrix() {
        let n = 8;
        let mut u_hat = vec![c(0.0, 0.0); n];
        u_hat[3] = c(2.0, -1.0);
        let f = assemble_f(&u_hat, &[3], n, n).unwrap();
        assert_eq!(f.shape(), (1, 1));
        let expected = c(2.0, -1.0) * unit_power(3, n, n) / n as f64;
        assert!((f[(0, 0)] - expected).norm() < 1e-15);
    }

    #[test]
    fn fourier_matrix_matches_direct_exponentials() {
        let n = 8;
        let u_hat = vec![c(1.0, 0.5); n];
        let f = assemble_f(&u_hat, &[1, 3], 6, n).unwrap();
        assert_eq!(f.shape(), (3, 2));
        for (row, j) in (6..=8).enumerate() {
            for (col, k) in [1usize, 3].iter().enumerate() {
                let direct =
                    c(1.0, 0.5) * c(0.0, 2.0 * PI * (*k * j) as f64 / n as f64).exp() / n as f64;
                assert!((f[(row, col)] - direct).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn missing_excitation_names_index() {
        let mut u_hat = vec![c(0.0, 0.0); 8];
        u_hat[1] = c(1.0, 0.0);
        match assemble_f(&u_hat, &[1, 3], 0, 8) {
            Err(Error::MissingExcitation { k }) => assert_eq!(k, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn least_squares_small_cases() {
        let f = CMatrix::from_element(2, 1, c(1.0, 0.0));
        let x = solve_regularized_ls(&f, &[1.0, 3.0], 0.0).unwrap();
        assert!((x[0] - c(2.0, 0.0)).norm() < 1e-14);

        let f =
            CMatrix::from_row_slice(2, 2, &[c(2.0, 1.0), c(0.0, 1.0), c(1.0, 0.0), c(3.0, -1.0)]);
        let y = [1.0, -2.0];
        let x = solve_regularized_ls(&f, &y, 0.0).unwrap();
        let back = &f * CVector::from_vec(x);
        assert!((back[0] - c(1.0, 0.0)).norm() < 1e-12);
        assert!((back[1] - c(-2.0, 0.0)).norm() < 1e-12);

        let zero = CMatrix::zeros(3, 2);
        assert!(matches!(
            solve_regularized_ls(&zero, &[1.0; 3], 0.1),
            Err(Error::Degenerate)
        ));
        assert!(solve_regularized_ls(&f, &[1.0; 3], 0.1).is_err());
        assert!(solve_regularized_ls(&f, &y, 1.0).is_err());
    }

    #[test]
    fn identity_plant_estimates_one() {
        let sel = FrequencySelection::from_indices(&[2, 5, 9], 40.0, 0.1).unwrap();
        let input = SparseInput::new(sel.n, &sel.ks).unwrap();
        let u: Vec<f64> = (0..=sel.n).map(|j| input.sample(j)).collect();
        let ts = TimeSeries::new(0.1, u.clone(), u).unwrap();
        let est = lstfe_pipeline(&ts, &sel, 0.75, 1e-10).unwrap();
        assert_eq!(est.len(), 3);
        for (_, h) in est.points() {
            assert!((h - c(1.0, 0.0)).norm() < 1e-10, "{h}");
        }
        assert_eq!(est.meta().unwrap().j_min, 100);
    }

    #[test]
    fn streamed_and_dense_paths_agree() {
        let sel = FrequencySelection::from_indices(&[3, 7], 200.0, 0.01).unwrap();
        let input = SparseInput::new(sel.n, &sel.ks).unwrap();
        let u: Vec<f64> = (0..=sel.n).map(|j| input.sample(j)).collect();
        // a crude first-order lag as the plant
        let mut y = vec![0.0; u.len()];
        for j in 1..u.len() {
            y[j] = 0.995 * y[j - 1] + 0.01 * u[j - 1];
        }
        let ts = TimeSeries::new(0.01, u, y).unwrap();
        let dense = lstfe_pipeline(&ts, &sel, 0.75, 1e-10).unwrap();
        let streamed = lstfe_with_options(
            &ts,
            &sel,
            0.75,
            LsOptions {
                rel_threshold: 1e-10,
                max_dense_entries: 0,
            },
        )
        .unwrap();
        for ((_, a), (_, b)) in dense.points().iter().zip(streamed.points()) {
            assert!((a - b).norm() < 1e-9 * a.norm(), "{a} vs {b}");
        }
    }

    #[test]
    fn estimate_csv_round_trip() {
        let est = TransferEstimate::new(
            vec![
                (c(0.0, 0.5), c(1.0 / 3.0, -0.25)),
                (c(0.0, 2.0), c(1e-9, 7.0)),
            ],
            Some(EstimateMeta {
                tf: 10.0,
                dt: 0.01,
                j_min: 250,
                threshold: 1e-10,
                ks: vec![1, 3],
            }),
        )
        .unwrap();
        let mut buf = Vec::new();
        est.write_csv(&mut buf).unwrap();
        let mut meta = Vec::new();
        est.write_meta_json(&mut meta).unwrap();
        let back = TransferEstimate::read_csv(&buf[..])
            .unwrap()
            .with_meta_json(&meta[..])
            .unwrap();
        assert_eq!(back, est);
    }

    #[test]
    fn estimate_rejects_off_axis_or_duplicate_points() {
        assert!(TransferEstimate::new(vec![(c(1.0, 1.0), c(1.0, 0.0))], None).is_err());
        assert!(TransferEstimate::new(vec![(c(0.0, -1.0), c(1.0, 0.0))], None).is_err());
        let p = (c(0.0, 1.0), c(1.0, 0.0));
        assert!(TransferEstimate::new(vec![p, p], None).is_err());
    }
}
