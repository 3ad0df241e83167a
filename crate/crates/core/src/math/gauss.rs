//! Gaussian tail probability Q and its inverse.

use crate::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Tail probability of the standard normal distribution,
/// `Q(x) = P(Z > x)`, evaluated through the complementary error function.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Standard normal density.
fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Inverse of [`q_function`] on (0, 1).
///
/// A rational initial guess (Acklam's approximation of the normal quantile,
/// relative error below 1.2e-9) is polished with safeguarded Newton steps on
/// `Q(x) - p`, bringing `|Q(q_inverse(p)) - p|` under 1e-10 across
/// `p ∈ [1e-12, 1 - 1e-12]`.
pub fn q_inverse(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "q_inverse requires p in (0, 1), got {p}"
        )));
    }
    // Acklam's rational approximation to the lower-tail quantile at 1 - p,
    // i.e. an initial x with Q(x) ~= p.
    let mut x = -acklam_quantile(p);
    // Safeguarded Newton on f(x) = Q(x) - p, f'(x) = -phi(x). Far in the
    // tails the density underflows; the rational guess is already at full
    // attainable absolute accuracy there and the step is skipped.
    for _ in 0..3 {
        let d = phi(x);
        if d < 1e-280 {
            break;
        }
        let step = (q_function(x) - p) / d;
        let clamped = step.clamp(-1.0, 1.0);
        x += clamped;
        if clamped.abs() < 1e-14 * x.abs().max(1.0) {
            break;
        }
    }
    Ok(x)
}

/// Acklam's approximation of the standard normal quantile at probability `q`
/// (lower tail).
fn acklam_quantile(q: f64) -> f64 {
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
    const Q_LOW: f64 = 0.02425;

    // The tail is computed at 1 - q via symmetry so that p close to 1 keeps
    // full precision in the subtraction.
    if q < Q_LOW {
        let r = (-2.0 * q.ln()).sqrt();
        (((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    } else if q > 1.0 - Q_LOW {
        -acklam_quantile(1.0 - q)
    } else {
        let u = q - 0.5;
        let r = u * u;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * u
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}
