//! Standard normal distribution function and quantile.

use crate::real::Real;

// Rational minimax coefficients for the error function (Cody's CALERF
// segmentation; double-precision accuracy).
const ERF_A: [f64; 5] = [
    3.16112374387056560e0,
    1.13864154151050156e2,
    3.77485237685302021e2,
    3.20937758913846947e3,
    1.85777706184603153e-1,
];
const ERF_B: [f64; 4] = [
    2.36012909523441209e1,
    2.44024637934444173e2,
    1.28261652607737228e3,
    2.84423683343917062e3,
];
const ERF_C: [f64; 9] = [
    5.64188496988670089e-1,
    8.88314979438837594e0,
    6.61191906371416295e1,
    2.98635138197400131e2,
    8.81952221241769090e2,
    1.71204761263407058e3,
    2.05107837782607147e3,
    1.23033935479799725e3,
    2.15311535474403846e-8,
];
const ERF_D: [f64; 8] = [
    1.57449261107098347e1,
    1.17693950891312499e2,
    5.37181101862009858e2,
    1.62138957456669019e3,
    3.29079923573345963e3,
    4.36261909014324716e3,
    3.43936767414372164e3,
    1.23033935480374942e3,
];
const ERF_P: [f64; 6] = [
    3.05326634961232344e-1,
    3.60344899949804439e-1,
    1.25781726111229246e-1,
    1.60837851487422766e-2,
    6.58749161529837803e-4,
    1.63153871373020978e-2,
];
const ERF_Q: [f64; 5] = [
    2.56852019228982242e0,
    1.87295284992346047e0,
    5.27905102951428412e-1,
    6.05183413124413191e-2,
    2.33520497626869185e-3,
];
const INV_SQRT_PI: f64 = 5.6418958354775628695e-1;

/// `erf` on `[-0.46875, 0.46875]`.
fn erf_small<F: Real>(x: F) -> F {
    let z = x * x;
    let mut num = F::from_f64_lossy(ERF_A[4]) * z;
    let mut den = z;
    for i in 0..3 {
        num = (num + F::from_f64_lossy(ERF_A[i])) * z;
        den = (den + F::from_f64_lossy(ERF_B[i])) * z;
    }
    x * (num + F::from_f64_lossy(ERF_A[3])) / (den + F::from_f64_lossy(ERF_B[3]))
}

/// `erfc` for nonnegative arguments.
fn erfc_positive<F: Real>(y: F) -> F {
    let threshold = F::from_f64_lossy(0.46875);
    if y <= threshold {
        return F::one() - erf_small(y);
    }
    if y > F::from_f64_lossy(26.6) {
        return F::zero();
    }
    if y <= F::from_f64_lossy(4.0) {
        let mut num = F::from_f64_lossy(ERF_C[8]) * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + F::from_f64_lossy(ERF_C[i])) * y;
            den = (den + F::from_f64_lossy(ERF_D[i])) * y;
        }
        (-y * y).exp() * (num + F::from_f64_lossy(ERF_C[7])) / (den + F::from_f64_lossy(ERF_D[7]))
    } else {
        let z = F::one() / (y * y);
        let mut num = F::from_f64_lossy(ERF_P[5]) * z;
        let mut den = z;
        for i in 0..4 {
            num = (num + F::from_f64_lossy(ERF_P[i])) * z;
            den = (den + F::from_f64_lossy(ERF_Q[i])) * z;
        }
        let r = z * (num + F::from_f64_lossy(ERF_P[4])) / (den + F::from_f64_lossy(ERF_Q[4]));
        (-y * y).exp() * (F::from_f64_lossy(INV_SQRT_PI) - r) / y
    }
}

/// Complementary error function.
pub fn erfc<F: Real>(x: F) -> F {
    if x < F::zero() {
        F::from_f64_lossy(2.0) - erfc_positive(-x)
    } else {
        erfc_positive(x)
    }
}

/// Standard normal CDF.
pub fn cdf<F: Real>(x: F) -> F {
    let half = F::from_f64_lossy(0.5);
    half * erfc(-x / F::from_f64_lossy(std::f64::consts::SQRT_2))
}

/// Standard normal quantile (Acklam's rational approximation, relative error
/// below 1.2e-9).
pub fn quantile<F: Real>(p: F) -> F {
    let p64 = p.to_f64_lossy();
    if p64 <= 0.0 {
        return F::neg_infinity();
    }
    if p64 >= 1.0 {
        return F::infinity();
    }

    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];

    let p_low = 0.02425;
    let x = if p64 < p_low {
        let q = (-2.0 * p64.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p64 <= 1.0 - p_low {
        let q = p64 - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p64).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    F::from_f64_lossy(x)
}

/// Two-sided p-value for a standard-normal statistic.
pub fn p_two_sided<F: Real>(t: F) -> F {
    erfc(t.abs() / F::from_f64_lossy(std::f64::consts::SQRT_2))
}
