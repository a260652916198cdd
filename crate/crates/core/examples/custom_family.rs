//! A user-defined function family. The data come from a damped oscillator with
//! a distributed memory term, `M x'' + D x' + K x + G ∫₀^∞ e^{-a θ} x(t-θ) dθ = B u`,
//! whose transfer function uses `{s², s, 1, 1/(s + a)}`. The memory rate `a` is
//! the family parameter. The realization built from a handful of transfer
//! values reproduces the system elsewhere on the imaginary axis.
//!
//! `cargo run --release --example custom_family`

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use struct_realize::realize::structured_realization;
use struct_realize::realize::InterpolationData;
use struct_realize::systems::{FunctionFamily, StructuredSystem};

fn memory_family() -> FunctionFamily {
    FunctionFamily::custom("memory", 4, vec![(0.0, f64::INFINITY)], |s, p| {
        let one = Complex64::new(1.0, 0.0);
        vec![s * s, s, one, one / (s + p[0])]
    })
}

fn main() -> struct_realize::Result<()> {
    let family = memory_family();
    let a = 0.5;
    let n = 3;
    let chain = |diag: f64, off: f64| {
        DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => diag,
            1 => off,
            _ => 0.0,
        })
    };
    let truth = StructuredSystem::new(
        vec![
            DMatrix::identity(n, n),
            chain(0.2, -0.05),
            chain(2.0, -1.0),
            chain(0.3, 0.0),
        ],
        DVector::from_vec(vec![1.0, 0.0, 0.0]),
        DVector::from_vec(vec![0.0, 0.0, 1.0]),
        family.clone(),
        vec![a],
    )?;

    let omegas = [0.05, 0.1, 0.2, 0.3, 0.45, 0.6, 0.8, 1.0, 1.3, 1.6, 2.0, 3.0];
    let data = InterpolationData::new(
        omegas
            .iter()
            .map(|&w| {
                let s = Complex64::new(0.0, w);
                Ok((s, truth.transfer(s)?))
            })
            .collect::<struct_realize::Result<Vec<_>>>()?,
    )?;
    let rz = structured_realization(&data, &family, &[a])?;
    println!(
        "realization of order {} from {} points (full order {})",
        rz.order(),
        rz.provenance().points_used,
        rz.provenance().full_order
    );

    for w in [0.05, 0.2, 0.5, 1.0, 1.5, 2.5, 4.0] {
        let s = Complex64::new(0.0, w);
        let (h, g) = (truth.transfer(s)?, rz.transfer(s)?);
        println!(
            "omega {w:>5}: |H| {:.4e}  rel. error {:.2e}",
            h.norm(),
            (h - g).norm() / h.norm()
        );
    }
    Ok(())
}
