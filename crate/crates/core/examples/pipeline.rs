//! The delay case study end to end: both estimation runs, the realization
//! with the true delay, the fit, the refit on all data and the time-domain
//! validation. Artifacts go to the directory given as the first argument.
//!
//! `cargo run --release --example pipeline -- /tmp/delay-run [case-study|default]`

use std::path::PathBuf;

use struct_realize::pipeline::{run_pipeline, PipelineConfig};

fn main() -> struct_realize::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "pipeline-out".into()));
    let config = match args.next().as_deref() {
        Some("default") => PipelineConfig::default(),
        _ => PipelineConfig::case_study(),
    };
    let run = run_pipeline(&config, &out)?;
    let s = &run.summary;
    println!(
        "interpolation: {} frequencies, max error {:.3e}",
        s.interp_frequencies,
        s.interp_max_error.unwrap_or(f64::NAN)
    );
    if let (Some(n), Some(e)) = (s.test_frequencies, s.test_max_error) {
        println!("test:          {n} frequencies, max error {e:.3e}");
    }
    println!("fixed-parameter realization: order {}", s.fixed_order);
    if let Some(f) = &s.fit {
        println!(
            "fit: p* = {:.6}, cost {:.3e}; refit at {} has order {}",
            f.p_star, f.cost, f.p_used, f.refit_order
        );
    }
    println!(
        "{:>6} {:>5} {:>10} {:>12} {:>12}",
        "rom", "input", "|u|_L2", "Linf ratio", "L2 ratio"
    );
    for v in &s.validation {
        println!(
            "{:>6} {:>5} {:>10.4} {:>12.3e} {:>12.3e}",
            v.realization, v.input, v.u_l2, v.linf_ratio, v.l2_ratio
        );
    }
    println!("artifacts in {}", out.display());
    Ok(())
}
