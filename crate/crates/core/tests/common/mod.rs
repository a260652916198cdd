//! Randomized checks shared by the property suite and the acceptance test.
//! Each check takes a seed and returns the measured quantity.

#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use struct_realize::lstfe::{dft, etfe_ratio, solve_regularized_ls};
use struct_realize::realize::{
    build_t, close_under_conjugation, complexify, partition_data, realify, solve_haar_entries,
    structured_realization, truncate, verify_interpolation, InterpolationData, RealizationOptions,
};
use struct_realize::sim::{
    impulse_response, simulate_discrete, DiscreteSystem, SparseInput, TimeSeries,
};
use struct_realize::systems::{FunctionFamily, StructuredSystem};

pub type CMatrix = DMatrix<Complex64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn real_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn real_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

pub fn complex_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

fn real_rhs(rng: &mut ChaCha8Rng, rows: usize) -> (Vec<f64>, DVector<Complex64>) {
    let y: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
    let yc = DVector::from_iterator(rows, y.iter().map(|&v| Complex64::new(v, 0.0)));
    (y, yc)
}

fn max_diff<'a>(
    a: impl IntoIterator<Item = &'a Complex64>,
    b: impl IntoIterator<Item = &'a Complex64>,
) -> f64 {
    a.into_iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// `K = 1` uses `{s}`, `K = 2` the standard pencil, `K = 3` a state delay.
pub fn family_for(k: usize) -> (FunctionFamily, Vec<f64>) {
    match k {
        1 => (
            FunctionFamily::custom("s", 1, vec![], |s, _| vec![s]),
            vec![],
        ),
        2 => (FunctionFamily::standard(), vec![]),
        _ => (FunctionFamily::delay(), vec![0.7]),
    }
}

pub fn random_system(
    rng: &mut ChaCha8Rng,
    family: &FunctionFamily,
    p: &[f64],
    order: usize,
) -> StructuredSystem {
    let mats = (0..family.size())
        .map(|i| {
            let m = real_matrix(rng, order, order);
            if i == 0 {
                DMatrix::identity(order, order) * 2.0 + m
            } else {
                m
            }
        })
        .collect();
    let b = real_vector(rng, order);
    let c = real_vector(rng, order);
    StructuredSystem::new(mats, b, c, family.clone(), p.to_vec()).unwrap()
}

/// `count` positive frequencies on the imaginary axis, spread geometrically
/// with random gaps so that no two nearly coincide.
pub fn frequencies(rng: &mut ChaCha8Rng, count: usize) -> Vec<Complex64> {
    let mut w = rng.random_range(0.05..0.2);
    (0..count)
        .map(|_| {
            let s = Complex64::new(0.0, w);
            w *= rng.random_range(1.4..2.0);
            s
        })
        .collect()
}

pub fn sample(system: &StructuredSystem, points: &[Complex64]) -> InterpolationData {
    InterpolationData::new(
        points
            .iter()
            .map(|&s| (s, system.transfer(s).unwrap()))
            .collect(),
    )
    .unwrap()
}

/// Random stable `E x_{j+1} = A x_j + B u_j` whose step matrix has a single
/// dominant real eigenvalue `rho`; the others lie below `rho / 2` in modulus.
pub fn dominant_discrete(rng: &mut ChaCha8Rng, n: usize, rho: f64) -> DiscreteSystem {
    let mut eig = vec![rho];
    eig.extend((1..n).map(|_| rng.random_range(-0.5..0.5) * rho));
    let s = DMatrix::identity(n, n) + real_matrix(rng, n, n) * 0.3;
    let s_inv = s.clone().try_inverse().unwrap();
    let step = &s * DMatrix::from_diagonal(&DVector::from_vec(eig)) * s_inv;
    let e = DMatrix::identity(n, n) * 2.0 + real_matrix(rng, n, n) * 0.3;
    let a = &e * step;
    DiscreteSystem::new(e, a, real_vector(rng, n), real_vector(rng, n)).unwrap()
}

/// Largest relative deviation of a realization built from exact data with
/// `n` points per block.
pub fn interpolation_deviation(seed: u64, k: usize, n: usize) -> f64 {
    let mut r = rng(seed);
    let (family, p) = family_for(k);
    // a K = 1 system can only produce data of the form γ / h(s)
    let true_order = if k == 1 { r.random_range(1..=n) } else { n + 2 };
    let system = random_system(&mut r, &family, &p, true_order);
    let data = sample(&system, &frequencies(&mut r, k * n / 2));
    let rz = structured_realization(&data, &family, &p).unwrap();
    let closed = close_under_conjugation(&data).unwrap();
    let report = verify_interpolation(rz.system(), &closed, 0.0);
    if report.deviations.iter().any(Option::is_none) {
        f64::INFINITY
    } else {
        report.max_deviation
    }
}

/// Largest `|H̃(s̄) - conj H̃(s)| / max(|H̃(s)|, 1)` of a realization over 20 random points.
pub fn realized_conjugate_asymmetry(seed: u64, k: usize) -> f64 {
    let mut r = rng(seed);
    let (family, p) = family_for(k);
    let system = random_system(&mut r, &family, &p, 6);
    let data = sample(&system, &frequencies(&mut r, 3 * k));
    let rz = structured_realization(&data, &family, &p).unwrap();
    conjugate_asymmetry(&mut r, |s| rz.transfer(s).ok(), 20, 1.0, 10.0)
}

/// The same measure for a random structured system over 100 points.
pub fn system_conjugate_asymmetry(seed: u64, k: usize, order: usize) -> f64 {
    let mut r = rng(seed);
    let (family, p) = family_for(k);
    let system = random_system(&mut r, &family, &p, order);
    conjugate_asymmetry(&mut r, |s| system.transfer(s).ok(), 100, 2.0, 20.0)
}

fn conjugate_asymmetry<F>(r: &mut ChaCha8Rng, h: F, count: usize, re: f64, im: f64) -> f64
where
    F: Fn(Complex64) -> Option<Complex64>,
{
    (0..count)
        .filter_map(|_| {
            let s = Complex64::new(r.random_range(-re..re), r.random_range(-im..im));
            let (v, vc) = (h(s)?, h(s.conj())?);
            Some((vc - v.conj()).norm() / v.norm().max(1.0))
        })
        .fold(0.0, f64::max)
}

/// Largest imaginary part left in the realified matrices, read back in complex form.
pub fn realified_imaginary_part(seed: u64, k: usize) -> f64 {
    let mut r = rng(seed);
    let (family, p) = family_for(k);
    let system = random_system(&mut r, &family, &p, 5);
    let data = close_under_conjugation(&sample(&system, &frequencies(&mut r, 2 * k))).unwrap();
    let part = partition_data(&data, family.size()).unwrap();
    let entries = solve_haar_entries(&family, &p, &part).unwrap();
    let real = realify(&entries, &family, &p).unwrap();
    complexify(&real)
        .iter()
        .flat_map(|m| m.iter().map(|z| z.im.abs()))
        .fold(0.0, f64::max)
}

/// Deviations `(before, after)` of a redundant realization and its
/// truncation, or `None` when the rank condition rejects truncation.
pub fn truncation_deviations(seed: u64, k: usize, true_order: usize) -> Option<(f64, f64)> {
    let mut r = rng(seed);
    let (family, p) = family_for(k);
    let system = random_system(&mut r, &family, &p, true_order);
    // n = 6 points per block, redundant for a system of order at most 3
    let data = close_under_conjugation(&sample(&system, &frequencies(&mut r, 3 * k))).unwrap();
    let part = partition_data(&data, family.size()).unwrap();
    let full = realify(
        &solve_haar_entries(&family, &p, &part).unwrap(),
        &family,
        &p,
    )
    .unwrap();
    let before = verify_interpolation(&full, &data, 0.0).max_deviation;
    let reduced = truncate(&full, &data, 0, RealizationOptions::default().rank_tol).ok()?;
    Some((
        before,
        verify_interpolation(&reduced, &data, 0.0).max_deviation,
    ))
}

/// `max ‖TᴴT - I‖` entrywise.
pub fn t_unitarity_error(n: usize) -> f64 {
    let t = build_t(n).unwrap();
    (t.adjoint() * &t - CMatrix::identity(n, n))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Largest gap between the FFT and the defining sum.
pub fn fft_error(seed: u64, len: usize) -> f64 {
    let mut r = rng(seed);
    let x: Vec<Complex64> = (0..len)
        .map(|_| Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
        .collect();
    let direct: Vec<Complex64> = (0..len)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(j, v)| {
                    v * Complex64::from_polar(1.0, -2.0 * PI * ((j * k) % len) as f64 / len as f64)
                })
                .sum()
        })
        .collect();
    max_diff(&dft(&x), &direct)
}

/// Gap between the regularized solve and the normal equations on a full-rank problem.
pub fn ls_normal_equations_error(seed: u64, rows: usize, cols: usize) -> f64 {
    let mut r = rng(seed);
    let f = complex_matrix(&mut r, rows, cols);
    let (y, yc) = real_rhs(&mut r, rows);
    let x = solve_regularized_ls(&f, &y, 1e-12).unwrap();
    let fh = f.adjoint();
    let normal = (&fh * &f).lu().solve(&(&fh * yc)).unwrap();
    max_diff(&x, normal.iter())
}

/// Gap between the solution with threshold 0 and the pseudo-inverse on a 5×3
/// rank-2 problem. `F = LR` with full-rank factors, so `F⁺ = Rᴴ(RRᴴ)⁻¹(LᴴL)⁻¹Lᴴ`.
pub fn minimum_norm_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let left = complex_matrix(&mut r, 5, 2);
    let right = complex_matrix(&mut r, 2, 3);
    let f = &left * &right;
    let (y, yc) = real_rhs(&mut r, 5);
    let x = solve_regularized_ls(&f, &y, 0.0).unwrap();
    let ly = (left.adjoint() * &left)
        .lu()
        .solve(&(left.adjoint() * yc))
        .unwrap();
    let expected = right.adjoint() * (&right * right.adjoint()).lu().solve(&ly).unwrap();
    max_diff(&x, expected.iter())
}

/// `min over perturbations of ‖Fv - Y‖ - ‖Fx - Y‖`; never below `-1e-10` for an optimal `x`.
pub fn residual_margin(seed: u64, rows: usize, cols: usize) -> f64 {
    let mut r = rng(seed);
    let f = complex_matrix(&mut r, rows, cols);
    let (y, yc) = real_rhs(&mut r, rows);
    let x = DVector::from_vec(solve_regularized_ls(&f, &y, 0.0).unwrap());
    let best = (&f * &x - &yc).norm();
    (0..20)
        .map(|_| {
            let v = &x
                + DVector::from_fn(cols, |_, _| {
                    Complex64::new(r.random_range(-0.1..0.1), r.random_range(-0.1..0.1))
                });
            (&f * v - &yc).norm() - best
        })
        .fold(f64::INFINITY, f64::min)
}

/// Solution norms for increasing thresholds on a problem with graded singular values.
pub fn norms_by_threshold(seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let (rows, cols) = (20, 5);
    let u = complex_matrix(&mut r, rows, cols).qr().q();
    let v = complex_matrix(&mut r, cols, cols).qr().q();
    let sigma = DMatrix::from_diagonal(&DVector::from_fn(cols, |i, _| {
        Complex64::new(10f64.powi(-2 * i as i32), 0.0)
    }));
    let f = &u * sigma * v.adjoint();
    let (y, _) = real_rhs(&mut r, rows);
    [0.0, 1e-9, 1e-7, 1e-5, 1e-3, 1e-1]
        .iter()
        .map(|&t| {
            let x = solve_regularized_ls(&f, &y, t).unwrap();
            x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
        })
        .collect()
}

/// Relative gap between the ETFE of one steady-state period and `H(q_k)`.
pub fn periodic_etfe_error(seed: u64, order: usize) -> f64 {
    let mut r = rng(seed);
    let rho = r.random_range(0.1..0.5);
    let sys = dominant_discrete(&mut r, order, rho);
    let n = 64;
    let ks = [1usize, 5, 11, 20];
    let input = SparseInput::new(n, &ks).unwrap();
    // run until the transient has died out, then keep one period
    let periods = 40;
    let u: Vec<f64> = (0..periods * n).map(|j| input.sample(j % n)).collect();
    let y = simulate_discrete(&sys, &u);
    let tail = (periods - 1) * n;
    let mut u_last = u[tail..].to_vec();
    let mut y_last = y[tail..].to_vec();
    u_last.push(u_last[0]);
    y_last.push(y_last[0]);
    let ratios = etfe_ratio(&TimeSeries::new(1.0, u_last, y_last).unwrap()).unwrap();
    ks.iter()
        .map(|&k| {
            let q = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64);
            let h = sys.transfer(q).unwrap();
            (ratios[&k] - h).norm() / h.norm().max(1.0)
        })
        .fold(0.0, f64::max)
}

/// Least-squares slope of `log |H_j(q_1) - H(q_1)|` over `j ∈ [20, 200]`,
/// with `log ρ` of the step matrix.
pub fn convergence_slope(seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let rho = r.random_range(0.88..0.95);
    let sys = dominant_discrete(&mut r, 4, rho);
    let h = impulse_response(&sys, 200);
    let q1 = Complex64::from_polar(1.0, 2.0 * PI / 64.0);
    let exact = sys.transfer(q1).unwrap();
    let mut partial = Complex64::new(0.0, 0.0);
    let mut points = vec![];
    for (i, &hi) in h.iter().enumerate() {
        partial += hi * q1.powi(-(i as i32));
        if i >= 20 {
            points.push((i as f64, (partial - exact).norm().ln()));
        }
    }
    let m = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / m, sy / m);
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    (slope, rho.ln())
}
