//! lsTFE on a discrete-time system started from rest. The plain ETFE of a
//! short record is biased by the transient; fitting the tail of the record
//! with the transient modelled removes that bias.
//!
//! `cargo run --release --example discrete_lstfe`

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use struct_realize::lstfe::{etfe_ratio, lstfe_pipeline, FrequencySelection};
use struct_realize::sim::{simulate_discrete, DiscreteSystem, SparseInput, TimeSeries};

fn main() -> struct_realize::Result<()> {
    // slowly decaying modes: spectral radius 0.97
    let a = DMatrix::from_row_slice(3, 3, &[0.97, 0.1, 0.0, -0.1, 0.9, 0.05, 0.0, 0.0, 0.5]);
    let sys = DiscreteSystem::new(
        DMatrix::identity(3, 3),
        a,
        DVector::from_vec(vec![1.0, 0.5, 1.0]),
        DVector::from_vec(vec![1.0, -1.0, 0.5]),
    )?;

    let n = 512;
    let ks = [3, 17, 40, 101];
    let input = SparseInput::new(n, &ks)?;
    let u: Vec<f64> = (0..=n).map(|j| input.sample(j)).collect();
    let y = simulate_discrete(&sys, &u);
    let record = TimeSeries::new(1.0, u, y)?;

    let etfe = etfe_ratio(&record)?;
    let sel = FrequencySelection::from_indices(&ks, n as f64, 1.0)?;
    let ls = lstfe_pipeline(&record, &sel, 0.75, 1e-10)?;

    println!("{:>4} {:>12} {:>12}", "k", "ETFE error", "lsTFE error");
    for (&k, (_, h_ls)) in ks.iter().zip(ls.points()) {
        let q = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64);
        let h = sys.transfer(q)?;
        println!(
            "{k:>4} {:>12.3e} {:>12.3e}",
            (etfe[&k] - h).norm(),
            (h_ls - h).norm()
        );
    }
    Ok(())
}
