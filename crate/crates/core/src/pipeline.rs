//! End-to-end orchestration: two estimation runs, the realization with a
//! fixed parameter, the delay fit, the refit on all data and the time-domain
//! validation, with every intermediate written to an output directory.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lstfe::{
    lstfe_records, select_frequencies, FrequencySelection, LsOptions, TransferEstimate,
};
use crate::paramfit::{
    minimize_cost, refit_with_all_data, sample_cost, uniform_grid, write_sweep_csv, FitResult,
    TestData,
};
use crate::persist::{fmt17, F17};
use crate::realize::{structured_realization, InterpolationData, Realization};
use crate::sim::{
    simulate_delay_with, simulate_sparse, Excitation, Integrator, Records, SparseInput, TimeSeries,
    ValidationInput,
};
use crate::systems::{make_delay_benchmark, FunctionFamily, StructuredSystem};

/// Parameters of one estimation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub tf: f64,
    pub dt: f64,
    pub f_min: f64,
    pub f_max: f64,
    /// Number of requested frequencies `r̃`.
    pub count: usize,
    /// Trailing fraction of the record used for the fit.
    pub fit_fraction: f64,
    pub threshold: f64,
    /// Recorded `t,u,y` file to use instead of simulating.
    pub data: Option<PathBuf>,
    /// Companion record driven by the sine part of a complex excitation.
    pub data_sin: Option<PathBuf>,
}

impl RunConfig {
    /// Interpolation run of the delay case study.
    pub fn interpolation() -> Self {
        RunConfig {
            tf: 1e4,
            dt: 5e-3,
            f_min: 1e-4,
            f_max: 1.0,
            count: 10,
            fit_fraction: 0.75,
            threshold: 1e-10,
            data: None,
            data_sin: None,
        }
    }

    /// Test run of the delay case study.
    pub fn test() -> Self {
        RunConfig {
            tf: 40.0,
            dt: 1e-5,
            f_min: 10f64.powf(0.3),
            f_max: 10.0,
            count: 6,
            ..Self::interpolation()
        }
    }

    pub fn selection(&self) -> Result<FrequencySelection> {
        select_frequencies(self.f_min, self.f_max, self.count, self.tf, self.dt)
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.count == 0 {
            return Err(Error::domain(format!("{name}.count must be at least 1")));
        }
        if !(self.f_min > 0.0 && self.f_max > 0.0) {
            return Err(Error::domain(format!(
                "{name} frequency bounds must be positive"
            )));
        }
        let steps = self.tf / self.dt;
        if !(steps >= 1.0) || (steps - steps.round()).abs() > 1e-6 * steps {
            return Err(Error::domain(format!(
                "{name}.tf = {} is not an integer multiple of {name}.dt = {}",
                self.tf, self.dt
            )));
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "tf" => self.tf = parse(key, value)?,
            "dt" => self.dt = parse(key, value)?,
            "f_min" => self.f_min = parse(key, value)?,
            "f_max" => self.f_max = parse(key, value)?,
            "count" => self.count = parse(key, value)?,
            "fit_fraction" => self.fit_fraction = parse(key, value)?,
            "threshold" => self.threshold = parse(key, value)?,
            "data" => self.data = optional_path(value),
            "data_sin" => self.data_sin = optional_path(value),
            _ => return Err(Error::Parse(format!("unknown run key `{key}`"))),
        }
        Ok(())
    }

    fn entries(&self, prefix: &str) -> Vec<(String, String)> {
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map_or("none".into(), |p| p.display().to_string())
        };
        [
            ("tf", self.tf.to_string()),
            ("dt", self.dt.to_string()),
            ("f_min", self.f_min.to_string()),
            ("f_max", self.f_max.to_string()),
            ("count", self.count.to_string()),
            ("fit_fraction", self.fit_fraction.to_string()),
            ("threshold", self.threshold.to_string()),
            ("data", path(&self.data)),
            ("data_sin", path(&self.data_sin)),
        ]
        .into_iter()
        .map(|(k, v)| (format!("{prefix}.{k}"), v))
        .collect()
    }
}

/// The benchmark delay model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchmarkModel {
    pub n: usize,
    pub tau: f64,
    pub zeta: f64,
    pub nu: f64,
}

impl Default for BenchmarkModel {
    fn default() -> Self {
        BenchmarkModel {
            n: 12,
            tau: 1.0,
            zeta: 0.01,
            nu: 5.0,
        }
    }
}

impl BenchmarkModel {
    pub fn build(&self) -> Result<StructuredSystem> {
        make_delay_benchmark(self.n, self.tau, self.zeta, self.nu)
    }
}

/// Everything a pipeline run needs. Read from a flat `key = value` file and
/// overridden key by key with [`PipelineConfig::set`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    /// `None` when the runs are read from recorded files.
    pub model: Option<BenchmarkModel>,
    pub interp: RunConfig,
    /// `None` skips the fit: only the fixed-parameter realization is built.
    pub test: Option<RunConfig>,
    pub family: String,
    /// Parameter of the fixed-parameter realization.
    pub param: Vec<f64>,
    /// Search interval of the fit; `[0.5, 1.5]` times the fixed parameter by default.
    pub bounds: (f64, f64),
    pub start: f64,
    pub sweep_points: usize,
    /// Decimal places to which the fitted parameter is rounded before the refit.
    pub round: Option<u32>,
    pub integrator: Integrator,
    pub excitation: Excitation,
    pub validation_inputs: Vec<usize>,
    pub validation_horizon: f64,
    pub validation_dt: f64,
    /// Frequency grid of the transfer plot data: `[lo, hi]` and point count.
    pub plot_range: (f64, f64),
    pub plot_points: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            model: Some(BenchmarkModel::default()),
            interp: RunConfig::interpolation(),
            test: Some(RunConfig::test()),
            family: "delay".into(),
            param: vec![1.0],
            bounds: (0.5, 1.5),
            start: 0.98,
            sweep_points: 41,
            round: None,
            integrator: Integrator::Trapezoidal,
            excitation: Excitation::Real,
            validation_inputs: vec![1, 2, 3],
            validation_horizon: 10.0,
            validation_dt: 1e-3,
            plot_range: (1e-4, 1e2),
            plot_points: 400,
        }
    }
}

impl PipelineConfig {
    /// The delay case study with the reference settings: IMEX Euler steps, complex
    /// excitation and the fitted delay rounded to three decimals.
    pub fn case_study() -> Self {
        PipelineConfig {
            integrator: Integrator::ImexEuler,
            excitation: Excitation::Complex,
            round: Some(3),
            ..Self::default()
        }
    }

    /// Parses `key = value` lines on top of the defaults. `#` starts a comment.
    /// `preset = case-study` as the first entry switches the base to [`Self::case_study`].
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", no + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Parse(format!("line {}: {e}", no + 1)))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Sets one field by its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some(sub) = key.strip_prefix("interp.") {
            return self.interp.set(sub, value);
        }
        if let Some(sub) = key.strip_prefix("test.") {
            let run = self.test.get_or_insert_with(RunConfig::test);
            return run.set(sub, value);
        }
        if let Some(sub) = key.strip_prefix("model.") {
            let model = self.model.get_or_insert_with(BenchmarkModel::default);
            match sub {
                "n" => model.n = parse(key, value)?,
                "tau" => model.tau = parse(key, value)?,
                "zeta" => model.zeta = parse(key, value)?,
                "nu" => model.nu = parse(key, value)?,
                _ => return Err(Error::Parse(format!("unknown key `{key}`"))),
            }
            return Ok(());
        }
        match key {
            "preset" => match value {
                "case-study" => *self = Self::case_study(),
                "default" => *self = Self::default(),
                _ => return Err(Error::Parse(format!("unknown preset `{value}`"))),
            },
            "model" => match value {
                "benchmark" => self.model = Some(self.model.unwrap_or_default()),
                "none" | "external" => self.model = None,
                _ => {
                    return Err(Error::Parse(format!(
                        "model must be `benchmark` or `none`, got `{value}`"
                    )))
                }
            },
            "test" => match value {
                "none" => self.test = None,
                "default" => self.test = Some(RunConfig::test()),
                _ => {
                    return Err(Error::Parse(format!(
                        "test must be `none` or `default`, got `{value}`"
                    )))
                }
            },
            "family" => self.family = value.to_string(),
            "param" => self.param = parse_list(key, value)?,
            "bounds" => match parse_list::<f64>(key, value)?.as_slice() {
                &[lo, hi] => self.bounds = (lo, hi),
                _ => return Err(Error::Parse("bounds needs two values `lo, hi`".into())),
            },
            "start" => self.start = parse(key, value)?,
            "sweep_points" => self.sweep_points = parse(key, value)?,
            "round" => {
                self.round = match value {
                    "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "integrator" => self.integrator = value.parse()?,
            "excitation" => self.excitation = value.parse()?,
            "validation.inputs" => {
                self.validation_inputs = if value == "none" {
                    vec![]
                } else {
                    parse_list(key, value)?
                }
            }
            "validation.horizon" => self.validation_horizon = parse(key, value)?,
            "validation.dt" => self.validation_dt = parse(key, value)?,
            "plot.range" => match parse_list::<f64>(key, value)?.as_slice() {
                &[lo, hi] => self.plot_range = (lo, hi),
                _ => return Err(Error::Parse("plot.range needs two values `lo, hi`".into())),
            },
            "plot.points" => self.plot_points = parse(key, value)?,
            _ => return Err(Error::Parse(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply<'a>(&mut self, overrides: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for item in overrides {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("override `{item}` is not `key=value`")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.interp.validate("interp")?;
        if let Some(test) = &self.test {
            test.validate("test")?;
            if !(self.bounds.0 < self.bounds.1)
                || !(self.bounds.0..=self.bounds.1).contains(&self.start)
            {
                return Err(Error::domain(format!(
                    "need bounds lo < hi with start inside, got [{}, {}] and {}",
                    self.bounds.0, self.bounds.1, self.start
                )));
            }
        }
        let family = FunctionFamily::from_name(&self.family)?;
        family.check_params(&self.param)?;
        for &i in &self.validation_inputs {
            ValidationInput::from_index(i)?;
        }
        if !(self.validation_dt > 0.0 && self.validation_horizon > self.validation_dt) {
            return Err(Error::domain("validation needs 0 < dt < horizon"));
        }
        if self.model.is_none()
            && (self.interp.data.is_none() || self.test.as_ref().is_some_and(|t| t.data.is_none()))
        {
            return Err(Error::domain(
                "without a model every run needs a `data` file",
            ));
        }
        Ok(())
    }

    /// The config as `key = value` lines that [`PipelineConfig::parse`] reads back.
    pub fn to_text(&self) -> String {
        let mut entries: Vec<(String, String)> = Vec::new();
        match &self.model {
            Some(m) => {
                entries.push(("model".into(), "benchmark".into()));
                entries.push(("model.n".into(), m.n.to_string()));
                entries.push(("model.tau".into(), m.tau.to_string()));
                entries.push(("model.zeta".into(), m.zeta.to_string()));
                entries.push(("model.nu".into(), m.nu.to_string()));
            }
            None => entries.push(("model".into(), "none".into())),
        }
        entries.extend(self.interp.entries("interp"));
        match &self.test {
            Some(t) => entries.extend(t.entries("test")),
            None => entries.push(("test".into(), "none".into())),
        }
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ");
        entries.push(("family".into(), self.family.clone()));
        entries.push(("param".into(), list(&self.param)));
        entries.push(("bounds".into(), list(&[self.bounds.0, self.bounds.1])));
        entries.push(("start".into(), self.start.to_string()));
        entries.push(("sweep_points".into(), self.sweep_points.to_string()));
        entries.push((
            "round".into(),
            self.round.map_or("none".into(), |r| r.to_string()),
        ));
        entries.push(("integrator".into(), self.integrator.name().into()));
        entries.push(("excitation".into(), self.excitation.name().into()));
        let inputs = if self.validation_inputs.is_empty() {
            "none".to_string()
        } else {
            self.validation_inputs
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        };
        entries.push(("validation.inputs".into(), inputs));
        entries.push((
            "validation.horizon".into(),
            self.validation_horizon.to_string(),
        ));
        entries.push(("validation.dt".into(), self.validation_dt.to_string()));
        entries.push((
            "plot.range".into(),
            list(&[self.plot_range.0, self.plot_range.1]),
        ));
        entries.push(("plot.points".into(), self.plot_points.to_string()));
        entries
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Parse(format!("`{key}`: cannot parse `{value}`: {e}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (value != "none" && !value.is_empty()).then(|| PathBuf::from(value))
}

/// Rounds to `decimals` decimal places.
pub fn round_to(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (x * scale).round() / scale
}

/// Time-domain error measures of one validation input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMetrics {
    /// `‖u‖_{L2}`.
    pub u_l2: f64,
    /// `‖y - ỹ‖_{L∞} / ‖u‖_{L2}`.
    pub linf_ratio: f64,
    /// `‖y - ỹ‖_{L2} / ‖u‖_{L2}`.
    pub l2_ratio: f64,
}

/// `L2` norm of samples on a uniform grid by the trapezoidal rule.
pub fn l2_norm(x: &[f64], dt: f64) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = x[1..n - 1].iter().map(|v| v * v).sum();
    (dt * (inner + 0.5 * (x[0] * x[0] + x[n - 1] * x[n - 1]))).sqrt()
}

pub fn error_metrics(y: &[f64], y_rom: &[f64], u: &[f64], dt: f64) -> Result<ErrorMetrics> {
    if y.len() != y_rom.len() || y.len() != u.len() {
        return Err(Error::domain(format!(
            "sample counts differ: y {}, ỹ {}, u {}",
            y.len(),
            y_rom.len(),
            u.len()
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::domain(format!(
            "time step must be positive, got {dt}"
        )));
    }
    let u_l2 = l2_norm(u, dt);
    if u_l2 == 0.0 {
        return Err(Error::domain(
            "input has zero L2 norm; error ratios are undefined",
        ));
    }
    let diff: Vec<f64> = y.iter().zip(y_rom).map(|(a, b)| a - b).collect();
    let linf = diff.iter().fold(0.0, |m, d| f64::max(m, d.abs()));
    Ok(ErrorMetrics {
        u_l2,
        linf_ratio: linf / u_l2,
        l2_ratio: l2_norm(&diff, dt) / u_l2,
    })
}

/// Validation of one realization against the reference model.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationCase {
    pub input: ValidationInput,
    pub metrics: ErrorMetrics,
    pub reference: TimeSeries,
    pub reduced: TimeSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub label: String,
    pub cases: Vec<ValidationCase>,
}

impl ValidationReport {
    /// `input,u_l2,linf_ratio,l2_ratio` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        writeln!(w, "input,u_l2,linf_ratio,l2_ratio")?;
        for c in &self.cases {
            writeln!(
                w,
                "u{},{},{},{}",
                c.input.index(),
                fmt17(c.metrics.u_l2),
                fmt17(c.metrics.linf_ratio),
                fmt17(c.metrics.l2_ratio)
            )?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-sample overlay `t,u,y,y_rom,error` of one case.
    pub fn write_series_csv<W: Write>(case: &ValidationCase, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        writeln!(w, "t,u,y,y_rom,error")?;
        let (r, m) = (&case.reference, &case.reduced);
        for j in 0..r.u().len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt17(r.time(j)),
                fmt17(r.u()[j]),
                fmt17(r.y()[j]),
                fmt17(m.y()[j]),
                fmt17(r.y()[j] - m.y()[j])
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulates `reference` and `reduced` under each input on `[0, horizon]` and
/// compares the outputs.
pub fn validate(
    label: &str,
    reference: &StructuredSystem,
    reduced: &StructuredSystem,
    inputs: &[ValidationInput],
    horizon: f64,
    dt: f64,
    scheme: Integrator,
) -> Result<ValidationReport> {
    let cases = inputs
        .iter()
        .map(|&input| {
            let (r, m) = rayon::join(
                || simulate_delay_with(reference, |t| input.eval(t), horizon, dt, scheme),
                || simulate_delay_with(reduced, |t| input.eval(t), horizon, dt, scheme),
            );
            let (r, m) = (r?, m?);
            let metrics = error_metrics(r.y(), m.y(), r.u(), dt)?;
            Ok(ValidationCase {
                input,
                metrics,
                reference: r,
                reduced: m,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ValidationReport {
        label: label.to_string(),
        cases,
    })
}

/// Simulates the sparse multi-sine experiment of `run` or reads its records.
pub fn acquire_records(
    run: &RunConfig,
    model: Option<&StructuredSystem>,
    scheme: Integrator,
    excitation: Excitation,
) -> Result<Records> {
    if let Some(path) = &run.data {
        let cos = TimeSeries::read_csv(File::open(path)?)?;
        return Ok(match &run.data_sin {
            Some(sin) => Records::Complex {
                cos,
                sin: TimeSeries::read_csv(File::open(sin)?)?,
            },
            None => Records::Real(cos),
        });
    }
    let model =
        model.ok_or_else(|| Error::domain("no model to simulate and no data file given"))?;
    let sel = run.selection()?;
    let input = SparseInput::new(sel.n, &sel.ks)?;
    simulate_sparse(model, &input, run.tf, run.dt, scheme, excitation)
}

/// Estimates the transfer function from the records of `run`.
pub fn estimate_run(run: &RunConfig, records: &Records) -> Result<TransferEstimate> {
    let opts = LsOptions {
        rel_threshold: run.threshold,
        ..LsOptions::default()
    };
    lstfe_records(records, &run.selection()?, run.fit_fraction, opts)
}

/// `omega,true_abs,<label>_abs…` rows on a log-spaced grid, with the
/// estimates appended as `omega,estimate_abs` in a second file.
pub fn write_transfer_plot<W: Write>(
    writer: W,
    reference: Option<&StructuredSystem>,
    realizations: &[(&str, &Realization)],
    range: (f64, f64),
    points: usize,
) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let mut header = vec!["omega".to_string()];
    if reference.is_some() {
        header.push("true_abs".into());
    }
    header.extend(realizations.iter().map(|(l, _)| format!("{l}_abs")));
    writeln!(w, "{}", header.join(","))?;
    let (lo, hi) = (range.0.log10(), range.1.log10());
    for i in 0..points {
        let t = if points > 1 {
            i as f64 / (points - 1) as f64
        } else {
            0.0
        };
        let omega = 10f64.powf(lo + (hi - lo) * t);
        let s = Complex64::new(0.0, omega);
        let mut row = vec![fmt17(omega)];
        if let Some(sys) = reference {
            row.push(abs_or_nan(sys.transfer(s)));
        }
        for (_, rz) in realizations {
            row.push(abs_or_nan(rz.transfer(s)));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn abs_or_nan(h: Result<Complex64>) -> String {
    h.map_or("nan".into(), |h| fmt17(h.norm()))
}

/// Key numbers of a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineSummary {
    pub interp_frequencies: usize,
    pub interp_max_error: Option<f64>,
    pub test_frequencies: Option<usize>,
    pub test_max_error: Option<f64>,
    pub fixed_order: usize,
    pub fit: Option<FitSummary>,
    pub validation: Vec<ValidationSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub p_star: f64,
    pub cost: f64,
    pub p_used: f64,
    pub refit_order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationSummary {
    pub realization: String,
    pub input: usize,
    pub u_l2: f64,
    pub linf_ratio: f64,
    pub l2_ratio: f64,
}

impl PipelineSummary {
    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        #[derive(Serialize)]
        struct Fit {
            p_star: F17,
            cost: F17,
            p_used: F17,
            refit_order: usize,
        }
        #[derive(Serialize)]
        struct Val<'a> {
            realization: &'a str,
            input: usize,
            u_l2: F17,
            linf_ratio: F17,
            l2_ratio: F17,
        }
        #[derive(Serialize)]
        struct Out<'a> {
            interp_frequencies: usize,
            interp_max_error: Option<F17>,
            test_frequencies: Option<usize>,
            test_max_error: Option<F17>,
            fixed_order: usize,
            fit: Option<Fit>,
            validation: Vec<Val<'a>>,
        }
        let out = Out {
            interp_frequencies: self.interp_frequencies,
            interp_max_error: self.interp_max_error.map(F17),
            test_frequencies: self.test_frequencies,
            test_max_error: self.test_max_error.map(F17),
            fixed_order: self.fixed_order,
            fit: self.fit.as_ref().map(|f| Fit {
                p_star: F17(f.p_star),
                cost: F17(f.cost),
                p_used: F17(f.p_used),
                refit_order: f.refit_order,
            }),
            validation: self
                .validation
                .iter()
                .map(|v| Val {
                    realization: &v.realization,
                    input: v.input,
                    u_l2: F17(v.u_l2),
                    linf_ratio: F17(v.linf_ratio),
                    l2_ratio: F17(v.l2_ratio),
                })
                .collect(),
        };
        serde_json::to_writer_pretty(writer, &out)?;
        Ok(())
    }
}

/// In-memory results of [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub interp: TransferEstimate,
    pub test: Option<TransferEstimate>,
    pub fixed: Realization,
    pub fit: Option<FitResult>,
    pub refit: Option<Realization>,
    pub validation: Vec<ValidationReport>,
    pub summary: PipelineSummary,
}

fn create(out: &Path, name: &str) -> Result<File> {
    Ok(File::create(out.join(name))?)
}

fn max_error(est: &TransferEstimate, model: Option<&StructuredSystem>) -> Result<Option<f64>> {
    let Some(sys) = model else { return Ok(None) };
    let mut worst: f64 = 0.0;
    for (lam, h) in est.points() {
        worst = worst.max((h - sys.transfer(*lam)?).norm());
    }
    Ok(Some(worst))
}

fn write_estimate(out: &Path, stem: &str, est: &TransferEstimate) -> Result<()> {
    est.write_csv(create(out, &format!("{stem}.csv"))?)?;
    est.write_meta_json(create(out, &format!("{stem}.json"))?)
}

/// Runs every stage and writes its artifacts to `out`. A failing stage is
/// reported with its name; files written before it are kept.
pub fn run_pipeline(config: &PipelineConfig, out: &Path) -> Result<PipelineOutput> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.txt"), config.to_text())?;
    let family = FunctionFamily::from_name(&config.family)?;
    let model = config
        .model
        .map(|m| m.build())
        .transpose()
        .map_err(|e| e.in_stage("model"))?;

    let stage = |name: &'static str| move |e: Error| e.in_stage(name);
    let interp = acquire_records(
        &config.interp,
        model.as_ref(),
        config.integrator,
        config.excitation,
    )
    .and_then(|r| estimate_run(&config.interp, &r))
    .map_err(stage("interpolation estimate"))?;
    write_estimate(out, "interp_estimate", &interp)?;
    let interp_data = InterpolationData::from_estimate(&interp);

    let fixed =
        structured_realization(&interp_data, &family, &config.param).map_err(stage("realize"))?;
    fixed.write_json(create(out, "realization_fixed.json")?)?;

    let mut test_est = None;
    let mut fit = None;
    let mut refit = None;
    if let Some(run) = &config.test {
        let est = acquire_records(run, model.as_ref(), config.integrator, config.excitation)
            .and_then(|r| estimate_run(run, &r))
            .map_err(stage("test estimate"))?;
        write_estimate(out, "test_estimate", &est)?;
        let test = TestData::from(&est);

        let grid: Vec<Vec<f64>> =
            uniform_grid(config.bounds.0, config.bounds.1, config.sweep_points)
                .into_iter()
                .map(|p| vec![p])
                .collect();
        let sweep = sample_cost(&grid, &interp_data, &test, &family);
        write_sweep_csv(&sweep, create(out, "cost_sweep.csv")?)?;

        let result = minimize_cost(config.bounds, config.start, &interp_data, &test, &family)
            .map_err(stage("fit"))?;
        result.write_json(create(out, "fit.json")?)?;
        let p_used = config
            .round
            .map_or(result.p_star, |d| round_to(result.p_star, d));
        let rz =
            refit_with_all_data(&[p_used], &interp_data, &test, &family).map_err(stage("refit"))?;
        rz.write_json(create(out, "realization_fit.json")?)?;
        test_est = Some(est);
        fit = Some(result);
        refit = Some(rz);
    }

    let mut plotted = vec![("fixed", &fixed)];
    if let Some(rz) = &refit {
        plotted.push(("fit", rz));
    }
    write_transfer_plot(
        create(out, "transfer_plot.csv")?,
        model.as_ref(),
        &plotted,
        config.plot_range,
        config.plot_points,
    )?;

    let mut validation = Vec::new();
    if let Some(reference) = &model {
        let inputs = config
            .validation_inputs
            .iter()
            .map(|&i| ValidationInput::from_index(i))
            .collect::<Result<Vec<_>>>()?;
        for (label, rz) in &plotted {
            let report = validate(
                label,
                reference,
                rz.system(),
                &inputs,
                config.validation_horizon,
                config.validation_dt,
                config.integrator,
            )
            .map_err(stage("validate"))?;
            report.write_csv(create(out, &format!("validation_{label}.csv"))?)?;
            for case in &report.cases {
                let name = format!("series_{label}_u{}.csv", case.input.index());
                ValidationReport::write_series_csv(case, create(out, &name)?)?;
            }
            validation.push(report);
        }
    } else if !config.validation_inputs.is_empty() {
        log::info!("no reference model: skipping time-domain validation");
    }

    let summary = PipelineSummary {
        interp_frequencies: interp.len(),
        interp_max_error: max_error(&interp, model.as_ref())?,
        test_frequencies: test_est.as_ref().map(TransferEstimate::len),
        test_max_error: match &test_est {
            Some(est) => max_error(est, model.as_ref())?,
            None => None,
        },
        fixed_order: fixed.order(),
        fit: fit.as_ref().zip(refit.as_ref()).map(|(f, rz)| FitSummary {
            p_star: f.p_star,
            cost: f.cost,
            p_used: rz.system().params()[0],
            refit_order: rz.order(),
        }),
        validation: validation
            .iter()
            .flat_map(|r| {
                r.cases.iter().map(|c| ValidationSummary {
                    realization: r.label.clone(),
                    input: c.input.index(),
                    u_l2: c.metrics.u_l2,
                    linf_ratio: c.metrics.linf_ratio,
                    l2_ratio: c.metrics.l2_ratio,
                })
            })
            .collect(),
    };
    summary.write_json(create(out, "summary.json")?)?;

    Ok(PipelineOutput {
        interp,
        test: test_est,
        fixed,
        fit,
        refit,
        validation,
        summary,
    })
}
