//! Fitting free parameters of the function family (such as a delay) by
//! minimizing the squared mismatch between realizations and held-out data.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::persist::{fmt17, F17};
use crate::realize::{
    structured_realization, structured_realization_with, InterpolationData, Realization,
    RealizationOptions,
};
use crate::systems::FunctionFamily;

/// Grid points used to bracket the minimizer.
pub const BRACKET_POINTS: usize = 21;
/// Absolute tolerance on the parameter for golden-section search.
pub const GOLDEN_TOL: f64 = 1e-6;

/// Held-out transfer samples `(ζ_j, ψ_j)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TestData {
    points: Vec<(Complex64, Complex64)>,
}

impl TestData {
    pub fn new(points: Vec<(Complex64, Complex64)>) -> Result<Self> {
        for (i, (z, _)) in points.iter().enumerate() {
            if points[..i].iter().any(|(other, _)| other == z) {
                return Err(Error::domain(format!("duplicate test frequency {z}")));
            }
        }
        Ok(TestData { points })
    }

    pub fn points(&self) -> &[(Complex64, Complex64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Fails when a test frequency also appears in the interpolation data.
    pub fn check_disjoint(&self, interp: &InterpolationData) -> Result<()> {
        for (z, _) in &self.points {
            if interp.frequencies().any(|l| l == *z || l == z.conj()) {
                return Err(Error::domain(format!(
                    "test frequency {z} is also an interpolation frequency"
                )));
            }
        }
        Ok(())
    }
}

impl From<&crate::lstfe::TransferEstimate> for TestData {
    fn from(est: &crate::lstfe::TransferEstimate) -> Self {
        TestData {
            points: est.points().to_vec(),
        }
    }
}

/// `Σ_j |ψ_j - H̃(ζ_j, p)|²`, or the construction error. The realization
/// order is chosen at `p` from its pivot rank.
pub fn try_cost(
    p: &[f64],
    interp: &InterpolationData,
    test: &TestData,
    family: &FunctionFamily,
) -> Result<f64> {
    try_cost_with(p, interp, test, family, RealizationOptions::default())
}

pub fn try_cost_with(
    p: &[f64],
    interp: &InterpolationData,
    test: &TestData,
    family: &FunctionFamily,
    opts: RealizationOptions,
) -> Result<f64> {
    let rz = structured_realization_with(interp, family, p, opts)?;
    test.points
        .iter()
        .map(|&(z, psi)| Ok((psi - rz.transfer(z)?).norm_sqr()))
        .sum()
}

/// Like [`try_cost`] but maps every failure to `+∞`, so optimizers can route
/// around parameters where no realization exists.
pub fn cost(
    p: &[f64],
    interp: &InterpolationData,
    test: &TestData,
    family: &FunctionFamily,
) -> f64 {
    cost_with(p, interp, test, family, RealizationOptions::default())
}

pub fn cost_with(
    p: &[f64],
    interp: &InterpolationData,
    test: &TestData,
    family: &FunctionFamily,
    opts: RealizationOptions,
) -> f64 {
    match try_cost_with(p, interp, test, family, opts) {
        Ok(c) => c,
        Err(e) => {
            log::debug!("cost at p = {p:?} undefined: {e}");
            f64::INFINITY
        }
    }
}

/// Smallest realization order over `grid`, or `None` if no realization exists
/// there. The pivot rank drops at parameters that explain the data with fewer
/// states; holding this order fixed keeps the cost continuous in `p`.
pub fn common_order(
    grid: &[Vec<f64>],
    interp: &InterpolationData,
    family: &FunctionFamily,
) -> Option<usize> {
    grid.par_iter()
        .filter_map(|p| {
            structured_realization(interp, family, p)
                .ok()
                .map(|rz| rz.order())
        })
        .min()
}

fn fixed_order(order: Option<usize>) -> RealizationOptions {
    RealizationOptions {
        order,
        ..RealizationOptions::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostSample {
    pub p: Vec<f64>,
    /// `+∞` when the realization could not be built.
    pub cost: f64,
    /// `"ok"` or the error message.
    pub status: String,
}

impl CostSample {
    pub fn is_ok(&self) -> bool {
        self.cost.is_finite()
    }
}

/// Evaluates the cost at every grid point in parallel; order is preserved.
/// All realizations share the [`common_order`] of the grid.
pub fn sample_cost(
    grid: &[Vec<f64>],
    interp: &InterpolationData,
    test: &TestData,
    family: &FunctionFamily,
) -> Vec<CostSample> {
    let opts = fixed_order(common_order(grid, interp, family));
    grid.par_iter()
        .map(|p| match try_cost_with(p, interp, test, family, opts) {
            Ok(cost) => CostSample {
                p: p.clone(),
                cost,
                status: "ok".into(),
            },
            Err(e) => CostSample {
                p: p.clone(),
                cost: f64::INFINITY,
                status: e.to_string(),
            },
        })
        .collect()
}

/// `count` equally spaced points from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count)
            .map(|i| {
                if i + 1 == count {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

pub fn write_sweep_csv<W: Write>(samples: &[CostSample], mut writer: W) -> Result<()> {
    writeln!(writer, "p,cost,status")?;
    for s in samples {
        let p: Vec<String> = s.p.iter().map(|&x| fmt17(x)).collect();
        let cost = if s.cost.is_finite() {
            fmt17(s.cost)
        } else {
            "inf".into()
        };
        let status = s.status.replace([',', '\n'], ";");
        writeln!(writer, "{},{cost},{status}", p.join(" "))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub p_star: f64,
    pub cost: f64,
    pub evaluations: usize,
    /// Final golden-section bracket.
    pub bracket: (f64, f64),
    /// Realization order held fixed during the search, if any.
    #[serde(default)]
    pub order: Option<usize>,
}

impl FitResult {
    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        #[derive(Serialize)]
        struct Out {
            p_star: F17,
            cost: F17,
            evaluations: usize,
            bracket: [F17; 2],
            order: Option<usize>,
        }
        serde_json::to_writer_pretty(
            writer,
            &Out {
                p_star: F17(self.p_star),
                cost: F17(self.cost),
                evaluations: self.evaluations,
                bracket: [F17(self.bracket.0), F17(self.bracket.1)],
                order: self.order,
            },
        )?;
        Ok(())
    }
}

/// Minimizes a scalar function on `[lo, hi]`: the best of a
/// [`BRACKET_POINTS`]-point grid (plus `start`) brackets the minimizer
/// between its grid neighbours, then golden-section search narrows the
/// bracket to `tol`.
pub fn minimize_scalar<F>(f: F, lo: f64, hi: f64, start: f64, tol: f64) -> Result<FitResult>
where
    F: Fn(f64) -> f64 + Sync,
{
    if !(lo < hi) || !(lo..=hi).contains(&start) {
        return Err(Error::domain(format!(
            "need lo < hi and start in [lo, hi], got [{lo}, {hi}] and {start}"
        )));
    }
    let mut grid = uniform_grid(lo, hi, BRACKET_POINTS);
    if !grid.contains(&start) {
        grid.push(start);
        grid.sort_by(f64::total_cmp);
    }
    let values: Vec<f64> = grid.par_iter().map(|&p| f(p)).collect();
    let mut evaluations = grid.len();
    let best = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Optimization("no finite cost on the bracketing grid".into()))?;
    let (mut a, mut b) = (
        grid[best.saturating_sub(1)],
        grid[(best + 1).min(grid.len() - 1)],
    );
    let (mut p_best, mut f_best) = (grid[best], values[best]);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    evaluations += 2;
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        evaluations += 1;
    }
    for (p, v) in [(c, fc), (d, fd)] {
        if v < f_best {
            p_best = p;
            f_best = v;
        }
    }
    Ok(FitResult {
        p_star: p_best,
        cost: f_best,
        evaluations,
        bracket: (a, b),
        order: None,
    })
}

/// Fits the single free parameter of `family` on `bounds`, holding the
/// realization order at the [`common_order`] of the bracketing grid.
pub fn minimize_cost(
    bounds: (f64, f64),
    start: f64,
    interp: &InterpolationData,
    test: &TestData,
    family: &FunctionFamily,
) -> Result<FitResult> {
    if family.param_dim() != 1 {
        return Err(Error::domain(format!(
            "scalar fit needs one free parameter, family {} has {}",
            family.name(),
            family.param_dim()
        )));
    }
    test.check_disjoint(interp)?;
    let mut grid = uniform_grid(bounds.0, bounds.1, BRACKET_POINTS);
    grid.push(start);
    let grid: Vec<Vec<f64>> = grid.into_iter().map(|p| vec![p]).collect();
    let order = common_order(&grid, interp, family);
    let opts = fixed_order(order);
    let mut fit = minimize_scalar(
        |p| cost_with(&[p], interp, test, family, opts),
        bounds.0,
        bounds.1,
        start,
        GOLDEN_TOL,
    )?;
    fit.order = order;
    Ok(fit)
}

/// Realization at `p_star` that interpolates the merged interpolation and test data.
pub fn refit_with_all_data(
    p_star: &[f64],
    interp: &InterpolationData,
    test: &TestData,
    family: &FunctionFamily,
) -> Result<Realization> {
    let merged = merge(interp, test)?;
    structured_realization(&merged, family, p_star)
}

/// Union of both sets, sorted by ascending `|Im λ|`.
pub fn merge(interp: &InterpolationData, test: &TestData) -> Result<InterpolationData> {
    let mut points = interp.points().to_vec();
    points.extend_from_slice(test.points());
    Ok(InterpolationData::new(points)?.sorted())
}
