//! Estimate the delay benchmark's transfer function from simulated data and
//! compare against the exact values.
//!
//! `cargo run --release --example estimate_transfer [interp|test] [trapezoidal|imex-euler] [real|complex]`

use std::time::Instant;

use struct_realize::lstfe::{lstfe_records, select_frequencies, LsOptions};
use struct_realize::sim::{simulate_sparse, Excitation, Integrator, SparseInput};
use struct_realize::systems::make_delay_benchmark;

fn main() -> struct_realize::Result<()> {
    let which = std::env::args().nth(1).unwrap_or_else(|| "interp".into());
    let scheme: Integrator = std::env::args()
        .nth(2)
        .as_deref()
        .unwrap_or("trapezoidal")
        .parse()?;
    let excitation: Excitation = std::env::args()
        .nth(3)
        .as_deref()
        .unwrap_or("real")
        .parse()?;
    let (tf, dt, fmin, fmax, count) = match which.as_str() {
        "test" => (40.0, 1e-5, 10f64.powf(0.3), 10.0, 6),
        _ => (10_000.0, 5e-3, 1e-4, 1.0, 10),
    };
    let sys = make_delay_benchmark(12, 1.0, 0.01, 5.0)?;
    let sel = select_frequencies(fmin, fmax, count, tf, dt)?;
    println!(
        "requested {count}, resolved {} frequencies: k = {:?}",
        sel.len(),
        sel.ks
    );

    let input = SparseInput::new(sel.n, &sel.ks)?;
    let start = Instant::now();
    let records = simulate_sparse(&sys, &input, tf, dt, scheme, excitation)?;
    println!(
        "simulated {} steps in {:.2?}",
        records.primary().steps(),
        start.elapsed()
    );

    let start = Instant::now();
    let est = lstfe_records(&records, &sel, 0.75, LsOptions::default())?;
    println!("estimated in {:.2?}", start.elapsed());

    println!(
        "{:>12} {:>26} {:>26} {:>10}",
        "omega", "true", "estimate", "error"
    );
    for (lam, h) in est.points() {
        let exact = sys.transfer(*lam)?;
        println!(
            "{:>12.5e} {:>12.4e}{:+12.4e}i {:>12.4e}{:+12.4e}i {:>10.3e}",
            lam.im,
            exact.re,
            exact.im,
            h.re,
            h.im,
            (h - exact).norm()
        );
    }
    Ok(())
}
