//! Reference results of the delay case study, used by `reproduce-paper` and
//! the acceptance tests to compare against.

/// Fourier indices of the interpolation run (`t_f = 10⁴`, `δ_t = 5·10⁻³`).
pub const INTERP_KS: [usize; 8] = [1, 3, 10, 27, 74, 206, 572, 1592];
/// Fourier indices of the test run (`t_f = 40`, `δ_t = 10⁻⁵`).
pub const TEST_KS: [usize; 6] = [13, 18, 24, 33, 46, 64];

/// `(ω, Re H(iω), Im H(iω))` at the interpolation frequencies, 3 significant digits.
pub const INTERP_TRUE: [(f64, f64, f64); 8] = [
    (6.28e-4, 2.97e-2, 9.05e-6),
    (1.88e-3, 2.97e-2, 2.71e-5),
    (6.28e-3, 2.97e-2, 9.05e-5),
    (1.70e-2, 2.97e-2, 2.44e-4),
    (4.65e-2, 2.97e-2, 6.70e-4),
    (1.29e-1, 2.97e-2, 1.87e-3),
    (3.59e-1, 2.98e-2, 5.24e-3),
    (1.00e0, 3.01e-2, 1.58e-2),
];
/// `(ω, Re H(iω), Im H(iω))` at the test frequencies.
pub const TEST_TRUE: [(f64, f64, f64); 6] = [
    (2.04e0, 3.26e-2, 4.89e-2),
    (2.83e0, 6.16e-2, 2.23e-1),
    (3.77e0, 2.60e-2, -8.19e-2),
    (5.18e0, 2.79e-2, -1.89e-2),
    (7.23e0, 3.19e-2, 1.31e-2),
    (1.01e1, 1.88e-2, -7.06e-2),
];

/// `|Ĥ - H|` of the estimates at the interpolation frequencies.
pub const INTERP_ERRORS: [f64; 8] = [
    4.71e-8, 1.41e-7, 4.71e-7, 1.27e-6, 3.49e-6, 9.75e-6, 2.79e-5, 9.86e-5,
];
/// `|Ĥ - H|` of the estimates at the test frequencies.
pub const TEST_ERRORS: [f64; 6] = [2.32e-3, 1.47e-2, 6.48e-3, 1.35e-3, 1.07e-3, 5.80e-4];

pub const TAU_STAR: f64 = 0.996883;
pub const COST_AT_TAU_STAR: f64 = 5.99e-3;
pub const TAU_STAR_ROUNDED: f64 = 0.997;

/// `‖u‖_{L2}` of the validation inputs on `[0, 10]`.
pub const INPUT_NORMS: [f64; 3] = [2.18, 3.29, 0.396];
/// `(L∞ ratio, L2 ratio)` per input for the realization with the true delay.
pub const VALIDATION_TRUE_TAU: [(f64, f64); 3] =
    [(6.96e-4, 1.26e-3), (3.73e-3, 3.51e-3), (7.69e-3, 1.01e-2)];
/// `(L∞ ratio, L2 ratio)` per input for the refit at the rounded fitted delay.
pub const VALIDATION_FITTED_TAU: [(f64, f64); 3] =
    [(1.31e-3, 1.77e-3), (2.43e-3, 3.79e-3), (1.43e-2, 1.04e-2)];
