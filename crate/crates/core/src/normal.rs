//! Standard normal helpers shared by the acquisition functions.

use statrs::function::erf::erfc;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Density of the standard normal.
pub fn pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Distribution function of the standard normal.
pub fn cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - cdf(z)`, accurate for large positive `z`.
pub fn sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// `f(z) = z * cdf(z) + pdf(z)`, the expected positive part `E[(z + Z)^+]`.
pub fn expected_positive_part(z: f64) -> f64 {
    log_expected_positive_part(z).exp()
}

/// Natural log of [`expected_positive_part`], finite for every finite `z`.
///
/// For `z < -10` the direct formula loses all precision; there the Mills
/// ratio expansion `f(z) = pdf(z) * (1/z^2 - 3/z^4 + 15/z^6 - 105/z^8 + 945/z^10)`
/// is used instead.
pub fn log_expected_positive_part(z: f64) -> f64 {
    if z >= -10.0 {
        let v = z * cdf(z) + pdf(z);
        return v.max(f64::MIN_POSITIVE).ln();
    }
    let inv2 = 1.0 / (z * z);
    let series = inv2 * (1.0 - inv2 * (3.0 - inv2 * (15.0 - inv2 * (105.0 - inv2 * 945.0))));
    -0.5 * z * z - LN_SQRT_2PI + series.ln()
}

/// `ln(exp(-a) - exp(-b))` for `0 <= a <= b`, computed without forming either
/// exponential. Returns `-inf` when `a == b`.
pub fn log_exp_diff(a: f64, b: f64) -> f64 {
    debug_assert!(b >= a);
    let d = b - a;
    if d <= 0.0 {
        return f64::NEG_INFINITY;
    }
    // exp(-a) * (1 - exp(-d)) = exp(-a) * -expm1(-d)
    -a + (-(-d).exp_m1()).ln()
}

/// Stable `ln(sum(exp(x_i)))`; empty or all `-inf` input yields `-inf`.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
