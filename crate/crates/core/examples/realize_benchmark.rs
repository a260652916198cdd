//! Build a delay-structured realization of the benchmark from exact transfer
//! values (or from lsTFE estimates with `estimate` or `case-study`) and compare it against
//! the true system away from the data.
//!
//! `cargo run --release --example realize_benchmark [exact|estimate|case-study]`

use num_complex::Complex64;
use struct_realize::lstfe::{lstfe_records, select_frequencies, LsOptions};
use struct_realize::realize::{
    close_under_conjugation, structured_realization, verify_interpolation, InterpolationData,
};
use struct_realize::sim::{simulate_sparse, Excitation, Integrator, SparseInput};
use struct_realize::systems::{make_delay_benchmark, FunctionFamily};

fn main() -> struct_realize::Result<()> {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "exact".into());
    let sys = make_delay_benchmark(12, 1.0, 0.01, 5.0)?;
    let (tf, dt) = (10_000.0, 5e-3);
    let sel = select_frequencies(1e-4, 1.0, 10, tf, dt)?;

    let data = if mode != "exact" {
        let (scheme, excitation) = if mode == "case-study" {
            (Integrator::ImexEuler, Excitation::Complex)
        } else {
            (Integrator::Trapezoidal, Excitation::Real)
        };
        let input = SparseInput::new(sel.n, &sel.ks)?;
        let records = simulate_sparse(&sys, &input, tf, dt, scheme, excitation)?;
        InterpolationData::from_estimate(&lstfe_records(
            &records,
            &sel,
            0.75,
            LsOptions::default(),
        )?)
    } else {
        let pts = sel
            .frequencies()
            .into_iter()
            .map(|lam| Ok((lam, sys.transfer(lam)?)))
            .collect::<struct_realize::Result<Vec<_>>>()?;
        InterpolationData::new(pts)?
    };

    let rz = structured_realization(&data, &FunctionFamily::delay(), &[1.0])?;
    println!(
        "order {} (full {}), provenance {:?}",
        rz.order(),
        rz.provenance().full_order,
        rz.provenance()
    );
    let used = close_under_conjugation(&data)?.truncated(rz.provenance().points_used);
    let report = verify_interpolation(rz.system(), &used, 1e-8);
    println!("max interpolation deviation {:.3e}", report.max_deviation);

    for w in [1e-3, 0.05, 0.5, 1.0, 2.0, 2.83, 5.0, 10.0] {
        let s = Complex64::new(0.0, w);
        let (h, g) = (sys.transfer(s)?, rz.transfer(s)?);
        println!(
            "omega {w:>8}: |H| {:.4e}  |H~ - H| {:.3e}",
            h.norm(),
            (h - g).norm()
        );
    }
    Ok(())
}
