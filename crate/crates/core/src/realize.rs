//! Structured realizations that interpolate transfer-function data.
//!
//! Given points `(λ_i, θ_i)` and a family `{h_1, …, h_K}`, the construction
//! closes the data under complex conjugation, splits it into `K` blocks of
//! `n` points, solves one small `K×K` system per matrix entry and maps the
//! complex result to real matrices with the block-diagonal unitary `T`.
//! Redundant directions are removed afterwards by projecting onto the
//! common row and column spaces of the `Ã_k`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    complex_singular_values, numerical_rank, real_svd, solve_with_rcond, to_complex, CMatrix,
    CVector,
};
use crate::lstfe::TransferEstimate;
use crate::persist::{f17_rows, f17_vec, F17};
use crate::systems::{FunctionFamily, StructuredSystem};

/// Entry systems whose reciprocal condition number falls below this violate
/// the Haar condition.
pub const HAAR_RCOND: f64 = 1e-13;
/// Allowed imaginary residue after the realifying transform, relative to `1 + max |Re|`.
pub const REALNESS_TOL: f64 = 1e-10;
/// Relative singular-value cutoff used for rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;
/// Post-truncation interpolation deviation that is always tolerated.
pub const TRUNCATION_VERIFY_TOL: f64 = 1e-6;

/// Interpolation pairs `(λ_i, θ_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationData {
    points: Vec<(Complex64, Complex64)>,
    conjugate_closed: bool,
}

impl InterpolationData {
    /// Open (not yet conjugate-closed) data with pairwise distinct frequencies.
    pub fn new(points: Vec<(Complex64, Complex64)>) -> Result<Self> {
        for (i, (lam, _)) in points.iter().enumerate() {
            if points[..i].iter().any(|(other, _)| other == lam) {
                return Err(Error::domain(format!(
                    "duplicate interpolation frequency {lam}"
                )));
            }
        }
        Ok(InterpolationData {
            points,
            conjugate_closed: false,
        })
    }

    pub fn from_estimate(est: &TransferEstimate) -> Self {
        InterpolationData {
            points: est.points().to_vec(),
            conjugate_closed: false,
        }
    }

    pub fn points(&self) -> &[(Complex64, Complex64)] {
        &self.points
    }

    pub fn frequencies(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn is_conjugate_closed(&self) -> bool {
        self.conjugate_closed
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Sorts by ascending `|Im λ|` (stable).
    pub fn sorted(mut self) -> Self {
        self.points
            .sort_by(|a, b| a.0.im.abs().total_cmp(&b.0.im.abs()));
        self
    }

    /// The first `m` points.
    pub fn truncated(&self, m: usize) -> Self {
        InterpolationData {
            points: self.points[..m.min(self.len())].to_vec(),
            conjugate_closed: self.conjugate_closed,
        }
    }

    fn check_nonzero(&self) -> Result<()> {
        match self
            .points
            .iter()
            .position(|(_, th)| *th == Complex64::new(0.0, 0.0) || !th.is_finite())
        {
            Some(index) => Err(Error::ZeroValue { index }),
            None => Ok(()),
        }
    }
}

/// Interleaves every point with its conjugate: `(λ, θ), (λ̄, θ̄), …`.
pub fn close_under_conjugation(data: &InterpolationData) -> Result<InterpolationData> {
    if data.conjugate_closed {
        return Err(Error::domain("data is already closed under conjugation"));
    }
    let mut points = Vec::with_capacity(2 * data.len());
    for (i, &(lam, th)) in data.points.iter().enumerate() {
        if !(lam.im > 0.0) {
            return Err(Error::domain(format!(
                "frequency {i} = {lam} must have positive imaginary part"
            )));
        }
        if data.points[..i].iter().any(|(other, _)| *other == lam) {
            return Err(Error::domain(format!(
                "duplicate interpolation frequency {lam}"
            )));
        }
        points.push((lam, th));
        points.push((lam.conj(), th.conj()));
    }
    Ok(InterpolationData {
        points,
        conjugate_closed: true,
    })
}

/// Data split into `⌈K/2⌉` left blocks `(μ, f)` and `⌊K/2⌋` right blocks
/// `(σ, g)` of `n` points each.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub n: usize,
    pub mu: Vec<Vec<Complex64>>,
    pub f: Vec<Vec<Complex64>>,
    pub sigma: Vec<Vec<Complex64>>,
    pub g: Vec<Vec<Complex64>>,
    /// Trailing points that did not fit into `K·n`.
    pub unused: usize,
}

impl Partition {
    pub fn used(&self) -> usize {
        self.n * (self.mu.len() + self.sigma.len())
    }
}

/// Chooses the largest even `n` with `K·n ≤ M` and slices the data
/// contiguously: left block `q` takes points `2qn..2qn+n`, right block `q`
/// takes points `(2q+1)n..(2q+2)n` (0-based).
pub fn partition_data(data: &InterpolationData, k: usize) -> Result<Partition> {
    let m = data.len();
    if k == 0 {
        return Err(Error::domain("family must have at least one function"));
    }
    if m < 2 * k {
        return Err(Error::InsufficientData {
            needed: 2 * k,
            got: m,
        });
    }
    let n = (m / k) & !1;
    let (q_f, q_g) = (k.div_ceil(2), k / 2);
    let block = |start: usize| {
        let pts = &data.points[start..start + n];
        (
            pts.iter().map(|p| p.0).collect::<Vec<_>>(),
            pts.iter().map(|p| p.1).collect::<Vec<_>>(),
        )
    };
    let (mu, f): (Vec<_>, Vec<_>) = (0..q_f).map(|q| block(2 * q * n)).unzip();
    let (sigma, g): (Vec<_>, Vec<_>) = (0..q_g).map(|q| block((2 * q + 1) * n)).unzip();
    if m > k * n {
        log::info!(
            "{} of {m} interpolation points unused (K = {k}, n = {n})",
            m - k * n
        );
    }
    Ok(Partition {
        n,
        mu,
        f,
        sigma,
        g,
        unused: m - k * n,
    })
}

/// `blkdiag((1/√2)[[1, -i], [1, i]], …)`.
pub fn build_t(n: usize) -> Result<CMatrix> {
    if n % 2 != 0 {
        return Err(Error::domain(format!(
            "realifying transform needs even order, got {n}"
        )));
    }
    let s = FRAC_1_SQRT_2;
    let mut t = CMatrix::zeros(n, n);
    for b in (0..n).step_by(2) {
        t[(b, b)] = Complex64::new(s, 0.0);
        t[(b, b + 1)] = Complex64::new(0.0, -s);
        t[(b + 1, b)] = Complex64::new(s, 0.0);
        t[(b + 1, b + 1)] = Complex64::new(0.0, s);
    }
    Ok(t)
}

/// Complex matrices `A_1..A_K` defined entry-wise: entry `(i, j)` solves
///
/// ```text
/// diag(f_{1;i}, …, f_{Q_F;i}, g_{1;j}, …, g_{Q_G;j}) · H_{ij} · a = 1,
/// ```
///
/// where row `q` of `H_{ij}` holds `h_k(μ_{q;i})` (left blocks) or
/// `h_k(σ_{q;j})` (right blocks).
pub fn solve_haar_entries(
    family: &FunctionFamily,
    p: &[f64],
    part: &Partition,
) -> Result<Vec<CMatrix>> {
    let k = family.size();
    if part.mu.len() + part.sigma.len() != k {
        return Err(Error::domain(format!(
            "partition has {} blocks but the family has {k} functions",
            part.mu.len() + part.sigma.len()
        )));
    }
    let n = part.n;
    for (block, values) in part.f.iter().chain(&part.g).enumerate() {
        if let Some(i) = values.iter().position(|v| *v == Complex64::new(0.0, 0.0)) {
            return Err(Error::ZeroValue {
                index: block * n + i,
            });
        }
    }
    // scaled rows θ·h(λ) per block and position
    let rows =
        |pts: &[Vec<Complex64>], vals: &[Vec<Complex64>]| -> Result<Vec<Vec<Vec<Complex64>>>> {
            pts.iter()
                .zip(vals)
                .map(|(lams, ths)| {
                    lams.iter()
                        .zip(ths)
                        .map(|(&lam, &th)| {
                            Ok(family.eval(lam, p)?.into_iter().map(|h| h * th).collect())
                        })
                        .collect()
                })
                .collect()
        };
    let left = rows(&part.mu, &part.f)?;
    let right = rows(&part.sigma, &part.g)?;
    let ones = CVector::from_element(k, Complex64::new(1.0, 0.0));

    let entries: Vec<Vec<Complex64>> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            let system = CMatrix::from_fn(k, k, |r, c| {
                if r < left.len() {
                    left[r][i][c]
                } else {
                    right[r - left.len()][j][c]
                }
            });
            match solve_with_rcond(&system, &ones) {
                Some((x, rcond)) if rcond >= HAAR_RCOND => Ok(x.iter().copied().collect()),
                Some((_, rcond)) => Err(Error::HaarViolation { i, j, rcond }),
                None => Err(Error::HaarViolation { i, j, rcond: 0.0 }),
            }
        })
        .collect::<Result<_>>()?;

    Ok((0..k)
        .map(|m| CMatrix::from_fn(n, n, |i, j| entries[i * n + j][m]))
        .collect())
}

/// How a realization came about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// FNV-1a digest of the interpolation points that were used.
    pub data_digest: String,
    pub points_used: usize,
    pub points_unused: usize,
    /// Order before truncation.
    pub full_order: usize,
    /// Index (0-based, into the used conjugate-closed data) of the truncation pivot.
    pub pivot_index: Option<usize>,
    pub rank_tol: f64,
    pub ranks: Option<RankProfile>,
    /// Largest relative interpolation deviation of the final system over the used data.
    #[serde(default)]
    pub max_deviation: Option<f64>,
}

/// Real structured realization `(Ã_1..Ã_K, B̃, C̃)` with its family and parameter.
#[derive(Debug, Clone)]
pub struct Realization {
    system: StructuredSystem,
    provenance: Provenance,
}

impl Realization {
    pub fn new(system: StructuredSystem, provenance: Provenance) -> Self {
        Realization { system, provenance }
    }

    pub fn system(&self) -> &StructuredSystem {
        &self.system
    }

    pub fn into_system(self) -> StructuredSystem {
        self.system
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn order(&self) -> usize {
        self.system.order()
    }

    pub fn transfer(&self, s: Complex64) -> Result<Complex64> {
        self.system.transfer(s)
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        #[derive(Serialize)]
        struct Out<'a> {
            family: &'a str,
            parameters: Vec<F17>,
            n: usize,
            #[serde(rename = "A")]
            a: Vec<Vec<Vec<F17>>>,
            #[serde(rename = "B")]
            b: Vec<F17>,
            #[serde(rename = "C")]
            c: Vec<F17>,
            provenance: &'a Provenance,
        }
        let sys = &self.system;
        let out = Out {
            family: sys.family().name(),
            parameters: f17_vec(sys.params()),
            n: sys.order(),
            a: sys.matrices().iter().map(f17_rows).collect(),
            b: f17_vec(sys.b().as_slice()),
            c: f17_vec(sys.c().as_slice()),
            provenance: &self.provenance,
        };
        serde_json::to_writer_pretty(writer, &out)?;
        Ok(())
    }

    /// Reads a realization of a built-in family.
    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct In {
            family: String,
            parameters: Vec<f64>,
            n: usize,
            #[serde(rename = "A")]
            a: Vec<Vec<Vec<f64>>>,
            #[serde(rename = "B")]
            b: Vec<f64>,
            #[serde(rename = "C")]
            c: Vec<f64>,
            provenance: Provenance,
        }
        let raw: In = serde_json::from_reader(reader)?;
        let n = raw.n;
        let matrices = raw
            .a
            .iter()
            .map(|rows| {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Parse(format!("matrix is not {n}×{n}")));
                }
                Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            })
            .collect::<Result<Vec<_>>>()?;
        let system = StructuredSystem::new(
            matrices,
            DVector::from_vec(raw.b),
            DVector::from_vec(raw.c),
            FunctionFamily::from_name(&raw.family)?,
            raw.parameters,
        )?;
        Ok(Realization {
            system,
            provenance: raw.provenance,
        })
    }
}

/// `Ã_k = TᴴA_kT`, `B̃ = Tᴴ·1`, `C̃ = B̃ᵀ`, certified real and stored as real matrices.
pub fn realify(
    matrices: &[CMatrix],
    family: &FunctionFamily,
    p: &[f64],
) -> Result<StructuredSystem> {
    let n = matrices
        .first()
        .map(|a| a.nrows())
        .ok_or_else(|| Error::domain("no matrices to realify"))?;
    let t = build_t(n)?;
    let t_adj = t.adjoint();
    let ones = CVector::from_element(n, Complex64::new(1.0, 0.0));
    let b = &t_adj * ones;

    let certify = |m: &CMatrix| -> Result<DMatrix<f64>> {
        let re_max = m.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
        let im_max = m.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        let allowed = REALNESS_TOL * (1.0 + re_max);
        if !(im_max <= allowed) {
            return Err(Error::RealnessViolation {
                residue: im_max,
                allowed,
            });
        }
        Ok(m.map(|z| z.re))
    };
    let real: Vec<DMatrix<f64>> = matrices
        .iter()
        .map(|a| certify(&(&t_adj * a * &t)))
        .collect::<Result<_>>()?;
    let b_real = certify(&CMatrix::from_column_slice(n, 1, b.as_slice()))?;
    let b_real = DVector::from_column_slice(b_real.as_slice());
    StructuredSystem::new(real, b_real.clone(), b_real, family.clone(), p.to_vec())
}

/// Per-point interpolation deviations `|H̃(λ_i) - θ_i| / |θ_i|`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationReport {
    /// `None` where the realization's pencil is singular at `λ_i`.
    pub deviations: Vec<Option<f64>>,
    pub max_deviation: f64,
    pub tol: f64,
}

impl InterpolationReport {
    pub fn passed(&self) -> bool {
        self.deviations.iter().all(|d| d.is_some()) && self.max_deviation <= self.tol
    }
}

pub fn verify_interpolation(
    system: &StructuredSystem,
    data: &InterpolationData,
    tol: f64,
) -> InterpolationReport {
    let deviations: Vec<Option<f64>> = data
        .points()
        .iter()
        .map(|&(lam, th)| {
            system
                .transfer(lam)
                .ok()
                .map(|h| (h - th).norm() / th.norm())
        })
        .collect();
    let max_deviation = deviations
        .iter()
        .map(|d| d.unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    InterpolationReport {
        deviations,
        max_deviation,
        tol,
    }
}

/// Numerical ranks entering the truncation condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankProfile {
    /// Rank of `Σ h_k(λ_pivot) Ã_k`.
    pub pivot: usize,
    /// Rank of `[Ã_1 … Ã_K]`.
    pub row: usize,
    /// Rank of `[Ã_1; …; Ã_K]`.
    pub col: usize,
}

impl RankProfile {
    pub fn consistent(&self) -> bool {
        self.pivot == self.row && self.pivot == self.col
    }
}

fn wide_stack(mats: &[DMatrix<f64>], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, mats.len() * n, |i, j| mats[j / n][(i, j % n)])
}

fn tall_stack(mats: &[DMatrix<f64>], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(mats.len() * n, n, |i, j| mats[i / n][(i % n, j)])
}

pub fn rank_profile(
    system: &StructuredSystem,
    pivot: Complex64,
    rank_tol: f64,
) -> Result<RankProfile> {
    let n = system.order();
    let mats = system.matrices();
    let rank = |m: DMatrix<f64>| {
        let (_, s, _) = real_svd(&m).ok_or(Error::Degenerate)?;
        Ok::<_, Error>(numerical_rank(s.as_slice(), rank_tol))
    };
    Ok(RankProfile {
        pivot: numerical_rank(&complex_singular_values(&system.pencil(pivot)?), rank_tol),
        row: rank(wide_stack(mats, n))?,
        col: rank(tall_stack(mats, n))?,
    })
}

fn leading(svals: &DVector<f64>, r: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..svals.len()).collect();
    idx.sort_by(|&a, &b| svals[b].total_cmp(&svals[a]));
    idx.truncate(r);
    idx
}

/// Projects onto the `r` leading left singular vectors of `[Ã_1 … Ã_K]` and
/// the `r` leading right singular vectors of `[Ã_1; …; Ã_K]`. Both bases are
/// real, so the result stays real. Interpolation of `data` is re-checked.
pub fn project_to_rank(
    system: &StructuredSystem,
    data: &InterpolationData,
    r: usize,
) -> Result<StructuredSystem> {
    let out = project(system, r)?;
    // the full-order pencil may be singular at the data when it is redundant
    let before = verify_interpolation(system, data, 0.0)
        .deviations
        .into_iter()
        .flatten()
        .fold(0.0, f64::max);
    let after = verify_interpolation(&out, data, 0.0).max_deviation;
    let tol = TRUNCATION_VERIFY_TOL.max(10.0 * before);
    if !(after <= tol) {
        return Err(Error::Verification {
            deviation: after,
            tol,
        });
    }
    Ok(out)
}

/// The projection of [`project_to_rank`] without the interpolation check.
pub fn project(system: &StructuredSystem, r: usize) -> Result<StructuredSystem> {
    let n = system.order();
    if r == 0 || r > n {
        return Err(Error::domain(format!("reduced order {r} outside 1..={n}")));
    }
    if r == n {
        return Ok(system.clone());
    }
    let mats = system.matrices();
    let (u, wide_s, _) = real_svd(&wide_stack(mats, n)).ok_or(Error::Degenerate)?;
    let (_, tall_s, v) = real_svd(&tall_stack(mats, n)).ok_or(Error::Degenerate)?;
    let w1 = DMatrix::from_columns(
        &leading(&wide_s, r)
            .into_iter()
            .map(|i| u.column(i))
            .collect::<Vec<_>>(),
    );
    let v1 = DMatrix::from_columns(
        &leading(&tall_s, r)
            .into_iter()
            .map(|i| v.column(i))
            .collect::<Vec<_>>(),
    );
    let w1_t = w1.transpose();
    let reduced: Vec<DMatrix<f64>> = mats.iter().map(|a| &w1_t * a * &v1).collect();
    let b = &w1_t * system.b();
    let c = v1.transpose() * system.c();
    StructuredSystem::new(
        reduced,
        b,
        c,
        system.family().clone(),
        system.params().to_vec(),
    )
}

/// Removes redundant directions. The rank of `Σ h_k(λ_pivot) Ã_k` must equal
/// the ranks of `[Ã_1 … Ã_K]` and `[Ã_1; …; Ã_K]`; the realization is then
/// reduced to that rank with [`project_to_rank`].
pub fn truncate(
    system: &StructuredSystem,
    data: &InterpolationData,
    pivot_index: usize,
    rank_tol: f64,
) -> Result<StructuredSystem> {
    let pivot = pivot_at(data, pivot_index)?;
    let ranks = rank_profile(system, pivot, rank_tol)?;
    if !ranks.consistent() {
        return Err(Error::TruncationUnsafe {
            pivot_rank: ranks.pivot,
            row_rank: ranks.row,
            col_rank: ranks.col,
        });
    }
    project_to_rank(system, data, ranks.pivot)
}

fn pivot_at(data: &InterpolationData, pivot_index: usize) -> Result<Complex64> {
    data.points()
        .get(pivot_index)
        .map(|p| p.0)
        .ok_or_else(|| Error::domain(format!("pivot index {pivot_index} out of range")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizationOptions {
    /// 0-based index into the conjugate-closed data.
    pub pivot_index: usize,
    pub rank_tol: f64,
    /// Fail when the three ranks of the truncation condition disagree. Otherwise
    /// the system is reduced to the pivot rank if that keeps interpolation, and
    /// to the smaller of the stacked ranks if not; the achieved deviation is
    /// recorded in the provenance.
    pub strict_rank: bool,
    /// Reduce to exactly this order instead of the pivot rank.
    pub order: Option<usize>,
}

impl Default for RealizationOptions {
    fn default() -> Self {
        RealizationOptions {
            pivot_index: 0,
            rank_tol: DEFAULT_RANK_TOL,
            strict_rank: false,
            order: None,
        }
    }
}

fn digest(points: &[(Complex64, Complex64)]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for (lam, th) in points {
        for v in [lam.re, lam.im, th.re, th.im] {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
    format!("{h:016x}")
}

/// Full construction: sort, close under conjugation, partition, solve the
/// entry systems, realify, truncate and check the reduced pencil at every used point.
pub fn structured_realization(
    data: &InterpolationData,
    family: &FunctionFamily,
    p: &[f64],
) -> Result<Realization> {
    structured_realization_with(data, family, p, RealizationOptions::default())
}

pub fn structured_realization_with(
    data: &InterpolationData,
    family: &FunctionFamily,
    p: &[f64],
    opts: RealizationOptions,
) -> Result<Realization> {
    family.check_params(p)?;
    data.check_nonzero()?;
    let closed = close_under_conjugation(&data.clone().sorted())?;
    let part = partition_data(&closed, family.size())?;
    let used = closed.truncated(part.used());
    let complex = solve_haar_entries(family, p, &part)?;
    let full = realify(&complex, family, p)?;
    let ranks = rank_profile(&full, pivot_at(&used, opts.pivot_index)?, opts.rank_tol)?;
    if opts.order.is_none() && !ranks.consistent() {
        if opts.strict_rank {
            return Err(Error::TruncationUnsafe {
                pivot_rank: ranks.pivot,
                row_rank: ranks.row,
                col_rank: ranks.col,
            });
        }
        log::info!(
            "rank condition fails (pivot {}, row {}, column {}); reducing to the pivot rank",
            ranks.pivot,
            ranks.row,
            ranks.col
        );
    }
    // a prescribed order is an approximation and is reported, not checked
    let reduced = match opts.order {
        Some(r) => project(&full, r)?,
        None if opts.strict_rank => project_to_rank(&full, &used, ranks.pivot)?,
        None => match project_to_rank(&full, &used, ranks.pivot) {
            Ok(sys) => sys,
            Err(Error::Verification { deviation, .. }) => {
                // only drop directions in a common kernel of all Ã_k
                let r = ranks.row.min(ranks.col).max(1);
                log::warn!(
                    "reduction to the pivot rank {} breaks interpolation (deviation {deviation:.2e}); reducing to order {r}",
                    ranks.pivot
                );
                project(&full, r)?
            }
            Err(e) => return Err(e),
        },
    };
    let k_tol = crate::systems::SINGULAR_RCOND;
    for (lam, _) in used.points() {
        let pencil = reduced.pencil(*lam)?;
        let rhs = CVector::zeros(pencil.nrows());
        match solve_with_rcond(&pencil, &rhs) {
            Some((_, rcond)) if rcond >= k_tol => {}
            Some((_, rcond)) => return Err(Error::Singular { s: *lam, rcond }),
            None => {
                return Err(Error::Singular {
                    s: *lam,
                    rcond: 0.0,
                })
            }
        }
    }
    let max_deviation = verify_interpolation(&reduced, &used, 0.0).max_deviation;
    Ok(Realization {
        system: reduced,
        provenance: Provenance {
            data_digest: digest(used.points()),
            points_used: used.len(),
            points_unused: part.unused,
            full_order: part.n,
            pivot_index: Some(opts.pivot_index),
            rank_tol: opts.rank_tol,
            ranks: Some(ranks),
            max_deviation: Some(max_deviation),
        },
    })
}

/// Converts real matrices to complex storage.
pub fn complexify(system: &StructuredSystem) -> Vec<CMatrix> {
    system.matrices().iter().map(to_complex).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn lag_family() -> FunctionFamily {
        FunctionFamily::custom("s,1", 2, vec![], |s, _| vec![s, c(1.0, 0.0)])
    }

    #[test]
    fn conjugate_closure_interleaves() {
        let data = InterpolationData::new(vec![(c(0.0, 1.0), c(1.0, 1.0))]).unwrap();
        let closed = close_under_conjugation(&data).unwrap();
        assert_eq!(
            closed.points(),
            &[(c(0.0, 1.0), c(1.0, 1.0)), (c(0.0, -1.0), c(1.0, -1.0))]
        );
        assert!(closed.is_conjugate_closed());
        assert!(close_under_conjugation(&closed).is_err());

        let real_axis = InterpolationData::new(vec![(c(1.0, 0.0), c(1.0, 0.0))]).unwrap();
        assert!(close_under_conjugation(&real_axis).is_err());
        assert!(InterpolationData::new(vec![(c(0.0, 1.0), c(1.0, 0.0)); 2]).is_err());
    }

    fn closed_data(m: usize) -> InterpolationData {
        let open = InterpolationData::new(
            (1..=m / 2)
                .map(|i| (c(0.0, i as f64), c(1.0, i as f64)))
                .collect(),
        )
        .unwrap();
        close_under_conjugation(&open).unwrap()
    }

    #[test]
    fn partition_sizes() {
        let p = partition_data(&closed_data(16), 3).unwrap();
        assert_eq!((p.n, p.used(), p.unused), (4, 12, 4));
        assert_eq!((p.mu.len(), p.sigma.len()), (2, 1));
        let all: Vec<_> = closed_data(16).frequencies().collect();
        assert_eq!(p.mu[0], all[0..4]);
        assert_eq!(p.sigma[0], all[4..8]);
        assert_eq!(p.mu[1], all[8..12]);

        let p = partition_data(&closed_data(4), 2).unwrap();
        assert_eq!((p.n, p.unused), (2, 0));
        let all: Vec<_> = closed_data(4).frequencies().collect();
        assert_eq!(p.mu[0], all[0..2]);
        assert_eq!(p.sigma[0], all[2..4]);

        let p = partition_data(&closed_data(6), 1).unwrap();
        assert_eq!((p.n, p.mu.len(), p.sigma.len()), (6, 1, 0));

        assert!(matches!(
            partition_data(&closed_data(4), 3),
            Err(Error::InsufficientData { needed: 6, got: 4 })
        ));
    }

    #[test]
    fn t_blocks() {
        let t = build_t(2).unwrap();
        let s = FRAC_1_SQRT_2;
        assert_eq!(t[(0, 0)], c(s, 0.0));
        assert_eq!(t[(0, 1)], c(0.0, -s));
        assert_eq!(t[(1, 0)], c(s, 0.0));
        assert_eq!(t[(1, 1)], c(0.0, s));
        let t4 = build_t(4).unwrap();
        assert_eq!(t4.view((2, 2), (2, 2)), t.view((0, 0), (2, 2)));
        assert_eq!(t4[(0, 2)], c(0.0, 0.0));
        assert!(build_t(3).is_err());
    }

    #[test]
    fn constant_data_gives_reciprocal_entries() {
        let fam = FunctionFamily::custom("one", 1, vec![], |_, _| vec![c(1.0, 0.0)]);
        let theta = c(0.5, 0.25);
        let open =
            InterpolationData::new(vec![(c(0.0, 1.0), theta), (c(0.0, 2.0), theta)]).unwrap();
        let closed = close_under_conjugation(&open).unwrap();
        // conjugate values differ, so feed constant complex data directly
        let part = Partition {
            n: 4,
            mu: vec![closed.frequencies().collect()],
            f: vec![vec![theta; 4]],
            sigma: vec![],
            g: vec![],
            unused: 0,
        };
        let a = solve_haar_entries(&fam, &[], &part).unwrap();
        assert!(a[0]
            .iter()
            .all(|z| (z - c(1.0, 0.0) / theta).norm() < 1e-15));
    }

    #[test]
    fn first_order_lag_is_recovered() {
        // H(s) = 1/(s + 1) sampled at ±i, ±2i
        let h = |s: Complex64| 1.0 / (s + 1.0);
        let open = InterpolationData::new(
            [1.0, 2.0]
                .iter()
                .map(|&w| (c(0.0, w), h(c(0.0, w))))
                .collect(),
        )
        .unwrap();
        let rz = structured_realization(&open, &lag_family(), &[]).unwrap();
        let closed = close_under_conjugation(&open).unwrap();
        let report = verify_interpolation(rz.system(), &closed, 1e-10);
        assert!(report.passed(), "{report:?}");
        assert_eq!(rz.provenance().points_used, 4);
    }

    #[test]
    fn zero_value_is_rejected() {
        let open =
            InterpolationData::new(vec![(c(0.0, 1.0), c(1.0, 0.0)), (c(0.0, 2.0), c(0.0, 0.0))])
                .unwrap();
        assert!(matches!(
            structured_realization(&open, &lag_family(), &[]),
            Err(Error::ZeroValue { index: 1 })
        ));
    }

    #[test]
    fn realify_rejects_non_conjugate_structure() {
        let a =
            CMatrix::from_row_slice(2, 2, &[c(1.0, 1.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 1.0)]);
        let fam = FunctionFamily::custom("one", 1, vec![], |_, _| vec![c(1.0, 0.0)]);
        assert!(matches!(
            realify(&[a], &fam, &[]),
            Err(Error::RealnessViolation { .. })
        ));
    }

    #[test]
    fn realify_conjugate_pattern_is_real() {
        let (a, b) = (c(1.5, -0.5), c(0.25, 2.0));
        let m = CMatrix::from_row_slice(2, 2, &[a, b, b.conj(), a.conj()]);
        let fam = FunctionFamily::custom("one", 1, vec![], |_, _| vec![c(1.0, 0.0)]);
        let sys = realify(&[m], &fam, &[]).unwrap();
        assert!((sys.b()[0] - 2f64.sqrt()).abs() < 1e-15);
        assert!(sys.b()[1].abs() < 1e-15);
        assert_eq!(sys.b(), sys.c());
    }

    #[test]
    fn verify_empty_data() {
        let open = InterpolationData::new(
            [1.0, 2.0]
                .iter()
                .map(|&w| (c(0.0, w), 1.0 / c(1.0, w)))
                .collect(),
        )
        .unwrap();
        let rz = structured_realization(&open, &lag_family(), &[]).unwrap();
        let empty = InterpolationData::new(vec![]).unwrap();
        let report = verify_interpolation(rz.system(), &empty, 1e-8);
        assert!(report.deviations.is_empty());
        assert!(report.passed());
    }
}
