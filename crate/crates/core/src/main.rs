use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

use struct_realize::lstfe::TransferEstimate;
use struct_realize::paramfit::{
    minimize_cost, refit_with_all_data, sample_cost, uniform_grid, write_sweep_csv, TestData,
};
use struct_realize::pipeline::{
    acquire_records, estimate_run, round_to, run_pipeline, validate, PipelineConfig,
    PipelineOutput, RunConfig, ValidationReport,
};
use struct_realize::realize::{
    structured_realization, verify_interpolation, InterpolationData, Realization,
};
use struct_realize::reference;
use struct_realize::sim::{simulate_delay_with, Records, ValidationInput};
use struct_realize::systems::FunctionFamily;
use struct_realize::{Error, Result};

#[derive(Parser)]
#[command(
    name = "struct-realize",
    version,
    about = "Structured realizations from input/output data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Flat `key = value` config file applied on top of the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set test.count=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Time integrator: trapezoidal or imex-euler.
    #[arg(long)]
    integrator: Option<String>,
    /// Multi-sine excitation: real or complex.
    #[arg(long)]
    excitation: Option<String>,
    /// Round the fitted parameter to this many decimals before the refit.
    #[arg(long)]
    round: Option<u32>,
    /// Time step of the validation simulations.
    #[arg(long)]
    validation_dt: Option<f64>,
}

impl Common {
    fn config(&self, base: PipelineConfig) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let mut cfg = base;
                let text = fs::read_to_string(path)?;
                for line in text.lines() {
                    let line = line.split('#').next().unwrap_or("").trim();
                    if !line.is_empty() {
                        cfg.apply([line])?;
                    }
                }
                cfg
            }
            None => base,
        };
        cfg.apply(self.overrides.iter().map(String::as_str))?;
        if let Some(v) = &self.integrator {
            cfg.integrator = v.parse()?;
        }
        if let Some(v) = &self.excitation {
            cfg.excitation = v.parse()?;
        }
        if self.round.is_some() {
            cfg.round = self.round;
        }
        if let Some(dt) = self.validation_dt {
            cfg.validation_dt = dt;
        }
        fs::create_dir_all(&self.out)?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Run {
    Interp,
    Test,
}

impl Run {
    fn name(self) -> &'static str {
        match self {
            Run::Interp => "interp",
            Run::Test => "test",
        }
    }

    fn config(self, cfg: &PipelineConfig) -> RunConfig {
        match self {
            Run::Interp => cfg.interp.clone(),
            Run::Test => cfg.test.clone().unwrap_or_else(RunConfig::test),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the model under a sparse multi-sine or a validation input.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "interp")]
        run: Run,
        /// Validation input 1, 2 or 3 instead of the multi-sine.
        #[arg(long)]
        input: Option<usize>,
    },
    /// Estimate the transfer function from records (simulated if none given).
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "interp")]
        run: Run,
        /// `t,u,y` record (the cosine-driven one for complex excitation).
        #[arg(long)]
        records: Option<PathBuf>,
        /// `t,u,y` record driven by the sine part of a complex excitation.
        #[arg(long)]
        records_sin: Option<PathBuf>,
    },
    /// Build a structured realization from an estimate CSV.
    Realize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        estimate: PathBuf,
        /// Family parameters, comma separated (defaults to the config's `param`).
        #[arg(long, value_delimiter = ',')]
        param: Option<Vec<f64>>,
    },
    /// Fit the family parameter against test data and refit on all data.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        interp: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Search interval `lo,hi`.
        #[arg(long, value_parser = parse_bounds)]
        bounds: (f64, f64),
        #[arg(long)]
        start: Option<f64>,
    },
    /// Compare a realization with the model in the time domain.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        realization: PathBuf,
    },
    /// Run every stage from a config.
    Pipeline {
        #[command(flatten)]
        common: Common,
    },
    /// Run the delay case study and compare against the reference values.
    ReproducePaper {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("STRUCT_REALIZE_THREADS") else {
        return Ok(());
    };
    let n: usize = value.trim().parse().map_err(|_| {
        Error::Parse(format!(
            "STRUCT_REALIZE_THREADS must be a positive integer, got `{value}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build_global()
        .map_err(|e| Error::Parse(e.to_string()))
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate { common, run, input } => simulate(&common, run, input),
        Command::Estimate {
            common,
            run,
            records,
            records_sin,
        } => estimate(&common, run, records, records_sin),
        Command::Realize {
            common,
            estimate,
            param,
        } => realize(&common, &estimate, param),
        Command::Fit {
            common,
            interp,
            test,
            bounds,
            start,
        } => fit(&common, &interp, &test, bounds, start),
        Command::Validate {
            common,
            realization,
        } => validate_cmd(&common, &realization),
        Command::Pipeline { common } => {
            let cfg = common.config(PipelineConfig::default())?;
            let run = run_pipeline(&cfg, &common.out)?;
            print_summary(&run);
            Ok(())
        }
        Command::ReproducePaper { common } => reproduce(&common),
    }
}

fn model(cfg: &PipelineConfig) -> Result<struct_realize::systems::StructuredSystem> {
    cfg.model
        .ok_or_else(|| Error::Parse("this command needs a model (`model = benchmark`)".into()))?
        .build()
}

fn simulate(common: &Common, run: Run, input: Option<usize>) -> Result<()> {
    let cfg = common.config(PipelineConfig::default())?;
    let sys = model(&cfg)?;
    if let Some(i) = input {
        let which = ValidationInput::from_index(i)?;
        let ts = simulate_delay_with(
            &sys,
            |t| which.eval(t),
            cfg.validation_horizon,
            cfg.validation_dt,
            cfg.integrator,
        )?;
        let path = common.out.join(format!("validation_u{i}.csv"));
        ts.write_csv(File::create(&path)?)?;
        println!("wrote {}", path.display());
        return Ok(());
    }
    let rc = run.config(&cfg);
    let sel = rc.selection()?;
    println!(
        "{}: {} frequencies, k = {:?}",
        run.name(),
        sel.len(),
        sel.ks
    );
    let records = acquire_records(&rc, Some(&sys), cfg.integrator, cfg.excitation)?;
    let series = match &records {
        Records::Real(ts) => vec![("", ts)],
        Records::Complex { cos, sin } => vec![("", cos), ("_sin", sin)],
    };
    for (suffix, ts) in series {
        let path = common
            .out
            .join(format!("records_{}{suffix}.csv", run.name()));
        ts.write_csv(File::create(&path)?)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn estimate(
    common: &Common,
    run: Run,
    records: Option<PathBuf>,
    records_sin: Option<PathBuf>,
) -> Result<()> {
    let cfg = common.config(PipelineConfig::default())?;
    let mut rc = run.config(&cfg);
    if records.is_some() {
        rc.data = records;
        rc.data_sin = records_sin;
    }
    let sys = cfg.model.map(|m| m.build()).transpose()?;
    let recs = acquire_records(&rc, sys.as_ref(), cfg.integrator, cfg.excitation)?;
    let est = estimate_run(&rc, &recs)?;
    let stem = format!("{}_estimate", run.name());
    est.write_csv(File::create(common.out.join(format!("{stem}.csv")))?)?;
    est.write_meta_json(File::create(common.out.join(format!("{stem}.json")))?)?;
    println!("{:>14} {:>24} {:>11}", "omega", "estimate", "error");
    for (lam, h) in est.points() {
        let err = sys
            .as_ref()
            .map(|s| s.transfer(*lam).map(|t| (h - t).norm()))
            .transpose()?;
        println!(
            "{:>14.6e} {:>11.4e} {:+11.4e}i {:>11}",
            lam.im,
            h.re,
            h.im,
            err.map_or("-".into(), |e| format!("{e:.3e}"))
        );
    }
    Ok(())
}

fn read_estimate(path: &Path) -> Result<TransferEstimate> {
    TransferEstimate::read_csv(File::open(path)?)
}

fn realize(common: &Common, estimate: &Path, param: Option<Vec<f64>>) -> Result<()> {
    let cfg = common.config(PipelineConfig::default())?;
    let family = FunctionFamily::from_name(&cfg.family)?;
    let p = param.unwrap_or(cfg.param);
    let data = InterpolationData::from_estimate(&read_estimate(estimate)?);
    let rz = structured_realization(&data, &family, &p)?;
    let path = common.out.join("realization.json");
    rz.write_json(File::create(&path)?)?;
    let report = verify_interpolation(rz.system(), &data, 0.0);
    println!(
        "order {} (full {}), max relative interpolation deviation {:.3e}; wrote {}",
        rz.order(),
        rz.provenance().full_order,
        report.max_deviation,
        path.display()
    );
    Ok(())
}

fn parse_bounds(text: &str) -> std::result::Result<(f64, f64), String> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [lo, hi] => {
            let lo: f64 = lo.parse().map_err(|e| format!("{e}"))?;
            let hi: f64 = hi.parse().map_err(|e| format!("{e}"))?;
            if lo < hi {
                Ok((lo, hi))
            } else {
                Err(format!("need lo < hi, got {lo},{hi}"))
            }
        }
        _ => Err("expected `lo,hi`".into()),
    }
}

fn fit(
    common: &Common,
    interp: &Path,
    test: &Path,
    bounds: (f64, f64),
    start: Option<f64>,
) -> Result<()> {
    let cfg = common.config(PipelineConfig::default())?;
    let family = FunctionFamily::from_name(&cfg.family)?;
    let interp = InterpolationData::from_estimate(&read_estimate(interp)?);
    let test = TestData::from(&read_estimate(test)?);
    let start = start.unwrap_or(0.5 * (bounds.0 + bounds.1));
    let grid: Vec<Vec<f64>> = uniform_grid(bounds.0, bounds.1, cfg.sweep_points)
        .into_iter()
        .map(|p| vec![p])
        .collect();
    write_sweep_csv(
        &sample_cost(&grid, &interp, &test, &family),
        File::create(common.out.join("cost_sweep.csv"))?,
    )?;
    let result = minimize_cost(bounds, start, &interp, &test, &family)?;
    result.write_json(File::create(common.out.join("fit.json"))?)?;
    let p_used = cfg
        .round
        .map_or(result.p_star, |d| round_to(result.p_star, d));
    let rz = refit_with_all_data(&[p_used], &interp, &test, &family)?;
    rz.write_json(File::create(common.out.join("realization_fit.json"))?)?;
    println!(
        "p* = {:.6}, cost {:.4e} ({} evaluations); refit at {p_used} has order {}",
        result.p_star,
        result.cost,
        result.evaluations,
        rz.order()
    );
    Ok(())
}

fn validate_cmd(common: &Common, realization: &Path) -> Result<()> {
    let cfg = common.config(PipelineConfig::default())?;
    let sys = model(&cfg)?;
    let rz = Realization::read_json(File::open(realization)?)?;
    let inputs = cfg
        .validation_inputs
        .iter()
        .map(|&i| ValidationInput::from_index(i))
        .collect::<Result<Vec<_>>>()?;
    let report = validate(
        "rom",
        &sys,
        rz.system(),
        &inputs,
        cfg.validation_horizon,
        cfg.validation_dt,
        cfg.integrator,
    )?;
    report.write_csv(File::create(common.out.join("validation.csv"))?)?;
    for case in &report.cases {
        let name = format!("series_u{}.csv", case.input.index());
        ValidationReport::write_series_csv(case, File::create(common.out.join(name))?)?;
    }
    print_validation(&report);
    Ok(())
}

fn print_validation(report: &ValidationReport) {
    println!(
        "{:>6} {:>5} {:>10} {:>12} {:>12}",
        "rom", "input", "|u|_L2", "Linf ratio", "L2 ratio"
    );
    for c in &report.cases {
        println!(
            "{:>6} {:>5} {:>10.4} {:>12.3e} {:>12.3e}",
            report.label,
            c.input.index(),
            c.metrics.u_l2,
            c.metrics.linf_ratio,
            c.metrics.l2_ratio
        );
    }
}

fn print_summary(run: &PipelineOutput) {
    let s = &run.summary;
    match s.interp_max_error {
        Some(e) => println!(
            "interpolation estimate: {} frequencies, max error {e:.3e}",
            s.interp_frequencies
        ),
        None => println!(
            "interpolation estimate: {} frequencies",
            s.interp_frequencies
        ),
    }
    if let Some(n) = s.test_frequencies {
        match s.test_max_error {
            Some(e) => println!("test estimate: {n} frequencies, max error {e:.3e}"),
            None => println!("test estimate: {n} frequencies"),
        }
    }
    println!("fixed-parameter realization: order {}", s.fixed_order);
    if let Some(f) = &s.fit {
        println!(
            "fit: p* = {:.6}, cost {:.4e}; refit at {} has order {}",
            f.p_star, f.cost, f.p_used, f.refit_order
        );
    }
    for report in &run.validation {
        print_validation(report);
    }
}

struct Row {
    metric: String,
    reference: f64,
    ours: f64,
}

fn reproduce(common: &Common) -> Result<()> {
    let cfg = common.config(PipelineConfig::case_study())?;
    let run = run_pipeline(&cfg, &common.out)?;
    print_summary(&run);

    let sys = model(&cfg)?;
    let mut rows = Vec::new();
    let mut errors = |est: &TransferEstimate, expected: &[f64], label: &str| -> Result<()> {
        for ((lam, h), &p) in est.points().iter().zip(expected) {
            rows.push(Row {
                metric: format!("{label} error at omega={:.3e}", lam.im),
                reference: p,
                ours: (h - sys.transfer(Complex64::new(0.0, lam.im))?).norm(),
            });
        }
        Ok(())
    };
    errors(&run.interp, &reference::INTERP_ERRORS, "interpolation")?;
    if let Some(test) = &run.test {
        errors(test, &reference::TEST_ERRORS, "test")?;
    }
    if let Some(fit) = &run.fit {
        rows.push(Row {
            metric: "tau*".into(),
            reference: reference::TAU_STAR,
            ours: fit.p_star,
        });
        rows.push(Row {
            metric: "cost at tau*".into(),
            reference: reference::COST_AT_TAU_STAR,
            ours: fit.cost,
        });
    }
    for report in &run.validation {
        let expected = if report.label == "fixed" {
            &reference::VALIDATION_TRUE_TAU
        } else {
            &reference::VALIDATION_FITTED_TAU
        };
        for c in &report.cases {
            let i = c.input.index() - 1;
            if report.label == "fixed" {
                rows.push(Row {
                    metric: format!("|u{}|_L2", i + 1),
                    reference: reference::INPUT_NORMS[i],
                    ours: c.metrics.u_l2,
                });
            }
            rows.push(Row {
                metric: format!("{} u{} Linf ratio", report.label, i + 1),
                reference: expected[i].0,
                ours: c.metrics.linf_ratio,
            });
            rows.push(Row {
                metric: format!("{} u{} L2 ratio", report.label, i + 1),
                reference: expected[i].1,
                ours: c.metrics.l2_ratio,
            });
        }
    }

    let mut csv = String::from("metric,reference,ours,ratio\n");
    println!(
        "\n{:<40} {:>12} {:>12} {:>8}",
        "quantity", "reference", "ours", "ratio"
    );
    for r in &rows {
        let ratio = r.ours / r.reference;
        println!(
            "{:<40} {:>12.4e} {:>12.4e} {:>8.3}",
            r.metric, r.reference, r.ours, ratio
        );
        csv.push_str(&format!(
            "{},{:e},{:e},{:e}\n",
            r.metric, r.reference, r.ours, ratio
        ));
    }
    fs::write(common.out.join("comparison.csv"), csv)?;
    println!("artifacts in {}", common.out.display());
    Ok(())
}
