//! Recover the benchmark's delay from simulated data: estimate the transfer
//! function on a low-frequency and a high-frequency run, sweep the mismatch
//! over candidate delays and minimize it.
//!
//! `cargo run --release --example fit_delay`

use struct_realize::lstfe::{lstfe_records, select_frequencies, LsOptions, TransferEstimate};
use struct_realize::paramfit::{
    minimize_cost, refit_with_all_data, sample_cost, uniform_grid, TestData,
};
use struct_realize::realize::InterpolationData;
use struct_realize::sim::{simulate_sparse, Excitation, Integrator, SparseInput};
use struct_realize::systems::{make_delay_benchmark, FunctionFamily, StructuredSystem};

fn estimate(
    sys: &StructuredSystem,
    tf: f64,
    dt: f64,
    fmin: f64,
    fmax: f64,
    count: usize,
) -> struct_realize::Result<TransferEstimate> {
    let sel = select_frequencies(fmin, fmax, count, tf, dt)?;
    let input = SparseInput::new(sel.n, &sel.ks)?;
    let records = simulate_sparse(
        sys,
        &input,
        tf,
        dt,
        Integrator::ImexEuler,
        Excitation::Complex,
    )?;
    lstfe_records(&records, &sel, 0.75, LsOptions::default())
}

fn main() -> struct_realize::Result<()> {
    let sys = make_delay_benchmark(12, 1.0, 0.01, 5.0)?;
    let interp = InterpolationData::from_estimate(&estimate(&sys, 10_000.0, 5e-3, 1e-4, 1.0, 10)?);
    let test = TestData::from(&estimate(&sys, 40.0, 1e-5, 10f64.powf(0.3), 10.0, 6)?);
    let family = FunctionFamily::delay();

    let grid: Vec<Vec<f64>> = uniform_grid(0.9, 1.1, 41)
        .into_iter()
        .map(|t| vec![t])
        .collect();
    for s in sample_cost(&grid, &interp, &test, &family) {
        println!("tau {:.3}  cost {:.4e}  {}", s.p[0], s.cost, s.status);
    }
    let fit = minimize_cost((0.9, 1.1), 0.98, &interp, &test, &family)?;
    println!(
        "tau* = {:.6}, cost = {:.4e} after {} evaluations (order held at {:?})",
        fit.p_star, fit.cost, fit.evaluations, fit.order
    );

    let merged = refit_with_all_data(&[fit.p_star], &interp, &test, &family)?;
    println!(
        "refit order {} from {} points",
        merged.order(),
        merged.provenance().points_used
    );
    Ok(())
}
