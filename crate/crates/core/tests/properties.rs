//! Invariants checked on randomized inputs.

mod common;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

use common::*;
use struct_realize::paramfit::{
    common_order, cost, cost_with, minimize_cost, uniform_grid, TestData,
};
use struct_realize::realize::{structured_realization, InterpolationData, RealizationOptions};
use struct_realize::sim::{
    impulse_response, simulate_delay_with, simulate_discrete, Integrator, SparseInput,
};
use struct_realize::systems::{make_delay_benchmark, FunctionFamily};

proptest! {
    #![proptest_config(ProptestConfig { cases: 50, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn realization_interpolates_exact_data(seed in any::<u64>(), k in 1usize..=3, half in 1usize..=3) {
        let dev = interpolation_deviation(seed, k, 2 * half);
        prop_assert!(dev <= 1e-8, "K = {k}, n = {}: deviation {dev:e}", 2 * half);
    }

    #[test]
    fn realized_transfer_is_conjugate_symmetric(seed in any::<u64>(), k in 2usize..=3) {
        prop_assert!(realized_conjugate_asymmetry(seed, k) <= 1e-12);
    }

    #[test]
    fn structured_transfer_is_conjugate_symmetric(seed in any::<u64>(), k in 1usize..=3, order in 1usize..=8) {
        prop_assert!(system_conjugate_asymmetry(seed, k, order) <= 1e-13);
    }

    #[test]
    fn realify_keeps_conjugate_patterned_matrices_real(seed in any::<u64>(), k in 2usize..=3) {
        prop_assert_eq!(realified_imaginary_part(seed, k), 0.0);
    }

    #[test]
    fn truncation_keeps_interpolation(seed in any::<u64>(), k in 2usize..=3, true_order in 1usize..=3) {
        let dev = truncation_deviations(seed, k, true_order);
        prop_assume!(dev.is_some());
        let (before, after) = dev.unwrap();
        prop_assert!(after <= (10.0 * before).max(1e-6), "{after:e} vs {before:e}");
    }

    #[test]
    fn fft_matches_direct_sum(seed in any::<u64>(), len in 1usize..=1024) {
        prop_assert!(fft_error(seed, len) <= 1e-9);
    }

    #[test]
    fn least_squares_matches_normal_equations(seed in any::<u64>(), rows in 8usize..40, cols in 1usize..6) {
        prop_assert!(ls_normal_equations_error(seed, rows, cols) <= 1e-10);
    }

    #[test]
    fn least_squares_residual_is_optimal(seed in any::<u64>(), rows in 6usize..30, cols in 1usize..5) {
        prop_assert!(residual_margin(seed, rows, cols) >= -1e-10);
    }

    #[test]
    fn minimum_norm_on_rank_deficient_problems(seed in any::<u64>()) {
        prop_assert!(minimum_norm_error(seed) <= 1e-10);
    }

    #[test]
    fn larger_threshold_never_grows_the_solution(seed in any::<u64>()) {
        let norms = norms_by_threshold(seed);
        prop_assert!(norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), "{norms:?}");
    }

    #[test]
    fn periodic_etfe_is_exact(seed in any::<u64>(), order in 1usize..=5) {
        prop_assert!(periodic_etfe_error(seed, order) <= 1e-10);
    }

    #[test]
    fn sparse_input_continuous_form_matches_samples(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(16..2000);
        let mut ks: Vec<usize> = (0..r.random_range(1..6)).map(|_| r.random_range(1..n)).collect();
        ks.sort_unstable();
        ks.dedup();
        let dt = r.random_range(1e-3..1.0);
        let input = SparseInput::new(n, &ks).unwrap();
        let tf = n as f64 * dt;
        for j in 0..=n {
            prop_assert!((input.at(j as f64 * dt, tf) - input.sample(j)).abs() <= 1e-14);
        }
    }
}

#[test]
fn etfe_partial_sums_converge_at_spectral_radius() {
    for seed in 0..10 {
        let (slope, expected) = convergence_slope(seed);
        assert!(
            (slope - expected).abs() <= 0.1 * expected.abs(),
            "seed {seed}: slope {slope} vs log ρ = {expected}"
        );
    }
}

#[test]
fn convolution_matches_state_space_simulation() {
    let mut r = rng(7);
    let sys = dominant_discrete(&mut r, 5, 0.8);
    let u: Vec<f64> = (0..300).map(|_| r.random_range(-1.0..1.0)).collect();
    let y = simulate_discrete(&sys, &u);
    let h = impulse_response(&sys, u.len());
    for j in 0..u.len() {
        let conv: f64 = (0..=j).map(|i| h[i] * u[j - i]).sum();
        assert!((conv - y[j]).abs() <= 1e-12, "j = {j}");
    }
}

#[test]
fn realifying_transform_is_unitary() {
    for n in (2..=64).step_by(2) {
        let err = t_unitarity_error(n);
        assert!(err <= 1e-15, "n = {n}: {err:e}");
    }
    assert!(struct_realize::realize::build_t(3).is_err());
}

fn convergence_order(scheme: Integrator) -> f64 {
    let system = make_delay_benchmark(6, 1.0, 0.01, 5.0).unwrap();
    let (tf, dt) = (3.0, 0.01);
    let fine = dt / 32.0;
    let run = |step: f64| simulate_delay_with(&system, f64::sin, tf, step, scheme).unwrap();
    let reference = run(fine);
    let error = |step: f64| {
        let stride = (step / fine).round() as usize;
        run(step)
            .y()
            .iter()
            .enumerate()
            .map(|(j, y)| (y - reference.y()[j * stride]).abs())
            .fold(0.0, f64::max)
    };
    (error(dt) / error(dt / 2.0)).log2()
}

#[test]
fn integrators_converge_at_their_nominal_order() {
    for scheme in [Integrator::Trapezoidal, Integrator::ImexEuler] {
        let observed = convergence_order(scheme);
        let nominal = scheme.order() as f64;
        assert!(
            (observed - nominal).abs() <= 0.2 * nominal,
            "{}: observed order {observed}",
            scheme.name()
        );
    }
}

fn benchmark_data() -> (InterpolationData, TestData, FunctionFamily) {
    let system = make_delay_benchmark(12, 1.0, 0.01, 5.0).unwrap();
    let at = |ws: &[f64]| -> Vec<(Complex64, Complex64)> {
        ws.iter()
            .map(|&w| {
                let s = Complex64::new(0.0, w);
                (s, system.transfer(s).unwrap())
            })
            .collect()
    };
    let interp =
        InterpolationData::new(at(&[6e-4, 2e-3, 6e-3, 2e-2, 5e-2, 0.13, 0.36, 1.0])).unwrap();
    let test = TestData::new(at(&[2.0, 2.8, 3.8, 5.2, 7.2, 10.0])).unwrap();
    (interp, test, FunctionFamily::delay())
}

#[test]
fn cost_is_nonnegative_and_smallest_at_the_true_delay() {
    let (interp, test, family) = benchmark_data();
    let at_truth = cost(&[1.0], &interp, &test, &family);
    for tau in uniform_grid(0.5, 1.5, 21) {
        let c = cost(&[tau], &interp, &test, &family);
        assert!(c >= 0.0, "τ = {tau}: {c}");
        assert!(at_truth <= c, "τ = {tau}: {c:e} below {at_truth:e}");
    }
}

#[test]
fn fit_brackets_tightly_and_refinement_never_raises_the_minimum() {
    let (interp, test, family) = benchmark_data();
    let fit = minimize_cost((0.9, 1.1), 1.0, &interp, &test, &family).unwrap();
    assert!(fit.bracket.1 - fit.bracket.0 <= 2e-6);
    assert!((fit.p_star - 1.0).abs() <= 1e-4, "τ* = {}", fit.p_star);

    let coarse: Vec<Vec<f64>> = uniform_grid(0.8, 1.2, 9)
        .into_iter()
        .map(|p| vec![p])
        .collect();
    let fine: Vec<Vec<f64>> = uniform_grid(0.8, 1.2, 17)
        .into_iter()
        .map(|p| vec![p])
        .collect();
    let opts = RealizationOptions {
        order: common_order(&fine, &interp, &family),
        ..RealizationOptions::default()
    };
    let min_over = |grid: &[Vec<f64>]| {
        grid.iter()
            .map(|p| cost_with(p, &interp, &test, &family, opts))
            .fold(f64::INFINITY, f64::min)
    };
    assert!(min_over(&fine) <= min_over(&coarse));
}

#[test]
fn realization_fails_cleanly_on_zero_data() {
    let data = InterpolationData::new(vec![
        (Complex64::new(0.0, 1.0), Complex64::new(0.0, 0.0)),
        (Complex64::new(0.0, 2.0), Complex64::new(1.0, 0.0)),
    ])
    .unwrap();
    assert!(structured_realization(&data, &FunctionFamily::standard(), &[]).is_err());
}
