//! Standard normal distribution function, density and quantile.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use statrs::function::gamma::ln_gamma;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Φ(x), with full relative precision in the lower tail.
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// 1 − Φ(x), with full relative precision in the upper tail.
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// E|Z|^p.
pub fn abs_moment(p: f64) -> f64 {
    (0.5 * p * std::f64::consts::LN_2 + ln_gamma(0.5 * (p + 1.0)) - 0.5 * std::f64::consts::PI.ln())
        .exp()
}

/// Φ⁻¹(p) for p in (0,1): rational approximation followed by one Newton step.
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        -lower(1.0 - p)
    } else {
        lower(p)
    }
}

/// Φ⁻¹(p) for p ≤ 1/2, polished by Newton on the lower tail.
fn lower(p: f64) -> f64 {
    let x = -SQRT_2 * erfc_inv(2.0 * p);
    let d = pdf(x);
    if d > 0.0 {
        x - (cdf(x) - p) / d
    } else {
        x
    }
}

/// Φ⁻¹(1 − s) computed from `s` directly.
pub fn upper_quantile(s: f64) -> f64 {
    if s <= 0.5 {
        -lower(s)
    } else {
        lower(1.0 - s)
    }
}

/// Φ⁻¹(s) for small `s` without cancellation.
pub fn lower_quantile(s: f64) -> f64 {
    if s <= 0.5 {
        lower(s)
    } else {
        -lower(1.0 - s)
    }
}
