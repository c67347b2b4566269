//! The deviation functions ξ₁, ξ₂ with their inverses and closed-form inverse
//! bounds, the constant C₀, the iterated logarithm count, and the two-sided
//! estimates for power and power-log integrals.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numeric::{self, adaptive_simpson, golden_max, logaddexp, logspace};

/// Selects ξ₁(t) = e^t(1−t) on [0,1] or ξ₂(t) = e^{−t}(1+t) on [0,∞).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XiKind {
    Xi1,
    Xi2,
}

/// Evaluates ξ₁ or ξ₂ at `t`.
pub fn xi_eval(kind: XiKind, t: f64) -> Result<f64> {
    match kind {
        XiKind::Xi1 if (0.0..=1.0).contains(&t) => Ok(t.exp() * (1.0 - t)),
        XiKind::Xi2 if t >= 0.0 && !t.is_nan() => {
            if t.is_infinite() {
                Ok(0.0)
            } else {
                Ok((-t).exp() * (1.0 + t))
            }
        }
        XiKind::Xi1 => domain(format!("xi1 is defined on [0,1], got {t}")),
        XiKind::Xi2 => domain(format!("xi2 is defined on [0,inf), got {t}")),
    }
}

/// 1 − ξ(t), accurate when ξ(t) is close to 1.
fn one_minus_xi(kind: XiKind, t: f64) -> f64 {
    if t < 0.1 {
        let sign = match kind {
            XiKind::Xi1 => 1.0,
            XiKind::Xi2 => -1.0,
        };
        let mut term = t; // t^k / k!
        let mut sum = 0.0;
        for k in 2..30 {
            let k = k as f64;
            term *= sign * t / k;
            sum += (k - 1.0) * term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        // the running terms carry sign^{k-1}; ξ₂ needs (−1)^k
        sign * sum
    } else {
        match kind {
            XiKind::Xi1 => t * t.exp() - t.exp_m1(),
            XiKind::Xi2 => -(-t).exp_m1() - t * (-t).exp(),
        }
    }
}

/// Numerical inverse of ξ₁ or ξ₂ by monotone bisection to bracket width `tol`.
pub fn xi_inverse(kind: XiKind, y: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return domain(format!("tolerance must be positive, got {tol}"));
    }
    let (lo, mut hi) = match kind {
        XiKind::Xi1 => {
            if !(0.0..=1.0).contains(&y) {
                return Err(Error::Range(format!("xi1 takes values in [0,1], got {y}")));
            }
            if y == 0.0 {
                return Ok(1.0);
            }
            (0.0, 1.0)
        }
        XiKind::Xi2 => {
            if !(y > 0.0 && y <= 1.0) {
                return Err(Error::Range(format!("xi2 takes values in (0,1], got {y}")));
            }
            (0.0, 2.0 * (1.0 / y).ln() + 2.0)
        }
    };
    if y == 1.0 {
        return Ok(0.0);
    }
    let above = |t: f64| -> bool {
        if y >= 0.5 {
            one_minus_xi(kind, t) < 1.0 - y
        } else {
            match kind {
                XiKind::Xi1 => t.exp() * (1.0 - t) > y,
                XiKind::Xi2 => (-t).exp() * (1.0 + t) > y,
            }
        }
    };
    while kind == XiKind::Xi2 && above(hi) {
        hi *= 2.0;
    }
    let (a, b) = numeric::bisect(above, lo, hi, tol);
    Ok(0.5 * (a + b))
}

/// 1 − ξ₁⁻¹(y), keeping full relative accuracy as y → 0.
pub fn xi1_inverse_complement(y: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&y) {
        return Err(Error::Range(format!("xi1 takes values in [0,1], got {y}")));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    if y >= 0.5 {
        return Ok(1.0 - xi_inverse(XiKind::Xi1, y, 1e-15)?);
    }
    // u e^{1-u} = y; Newton on ln u + 1 − u − ln y climbs monotonically from y/e
    let ly = y.ln();
    let mut u = y / std::f64::consts::E;
    for _ in 0..100 {
        let h = u.ln() + 1.0 - u - ly;
        let step = h / (1.0 / u - 1.0);
        let next = u - step;
        if !(next > u) {
            break;
        }
        u = next;
        if step.abs() <= 1e-16 * u {
            break;
        }
    }
    Ok(u)
}

/// Closed-form upper bounds for ξ₁⁻¹ and ξ₂⁻¹.
///
/// ξ₁⁻¹(y) ≤ min{√(2(1−y)), 1−y/e} on [0,1];
/// ξ₂⁻¹(y) ≤ L + log(1+4L) for y < 2/e and √(2L + 10L^{3/2}) for y ≥ 2/e,
/// where L = log(1/y).
pub fn xi_inverse_bound(kind: XiKind, y: f64) -> Result<f64> {
    match kind {
        XiKind::Xi1 => {
            if !(0.0..=1.0).contains(&y) {
                return domain(format!("xi1 bound needs y in [0,1], got {y}"));
            }
            Ok((2.0 * (1.0 - y)).sqrt().min(1.0 - y / std::f64::consts::E))
        }
        XiKind::Xi2 => {
            if !(y > 0.0 && y <= 1.0) {
                return domain(format!("xi2 bound needs y in (0,1], got {y}"));
            }
            let l = -y.ln();
            if y < 2.0 / std::f64::consts::E {
                Ok(l + (4.0 * l).ln_1p())
            } else {
                Ok((2.0 * l + 10.0 * l.powf(1.5)).sqrt())
            }
        }
    }
}

fn c0_objective(s: f64) -> f64 {
    let l = logaddexp(1.0, s + s.ln());
    1.0 / ((1.0 + s) * (-s).exp() + s * (1.0 + s) / (l * l))
}

/// Location and value of the supremum defining C₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C0 {
    pub argmax: f64,
    pub value: f64,
}

/// Computes C₀ = sup_s (e^s/(1+s))·[1 + s e^s/(log(e + s e^s))²]^{−1} by a
/// log-spaced scan of `grid` points over [1e−6, 1e3] followed by
/// golden-section refinement in log s.
pub fn c0_search(grid: usize, refine_tol: f64) -> Result<C0> {
    if grid < 1000 {
        return domain(format!("grid must be at least 1000, got {grid}"));
    }
    if !(refine_tol > 0.0) {
        return domain("refine_tol must be positive");
    }
    let pts = logspace(1e-6, 1e3, grid);
    let (imax, _) = pts
        .iter()
        .map(|&s| c0_objective(s))
        .enumerate()
        .fold((0, f64::MIN), |b, (i, v)| if v > b.1 { (i, v) } else { b });
    let lo = pts[imax.saturating_sub(1)].ln();
    let hi = pts[(imax + 1).min(grid - 1)].ln();
    let (u, v) = golden_max(|u| c0_objective(u.exp()), lo, hi, refine_tol);
    Ok(C0 {
        argmax: u.exp(),
        value: v,
    })
}

/// The constant C₀; see [`c0_search`].
pub fn c0_constant(grid: usize, refine_tol: f64) -> Result<f64> {
    c0_search(grid, refine_tol).map(|c| c.value)
}

/// Number of iterations of x ↦ max{ln x, 1} needed to bring `n` to at most `cq`.
/// Returns 0 when `n <= cq`.
pub fn ln_star(n: f64, cq: f64) -> u32 {
    if n <= cq {
        return 0;
    }
    let limit = cq * (1.0 + 8.0 * f64::EPSILON);
    let mut x = n;
    let mut j = 0;
    loop {
        let next = x.ln().max(1.0);
        j += 1;
        if next <= limit || next >= x {
            return j;
        }
        x = next;
    }
}

/// The closed-form upper estimate of an integral next to its quadrature value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralBounds {
    pub closed_upper: f64,
    pub quadrature: f64,
}

impl IntegralBounds {
    pub fn ratio(&self) -> f64 {
        self.quadrature / self.closed_upper
    }
}

/// Estimates for ∫_a^b x^{−r} dx (`weighted = false`) or
/// ∫_a^b x^{−r}(log 1/x)^{−2} dx (`weighted = true`), with the closed form
/// evaluated at constant 1.
pub fn integral_bound_pair(a: f64, b: f64, r: f64, weighted: bool) -> Result<IntegralBounds> {
    if !(a > 0.0 && a <= b && b.is_finite() && r.is_finite()) {
        return domain(format!("need 0 < a <= b < inf, got a={a}, b={b}, r={r}"));
    }
    let ln_ba = (b / a).ln();
    if !weighted {
        let m = if r == 1.0 {
            ln_ba
        } else {
            (1.0 / (1.0 - r).abs()).min(ln_ba)
        };
        let closed_upper = m * (a.powf(1.0 - r) + b.powf(1.0 - r));
        let f = |u: f64| ((1.0 - r) * u).exp();
        let quadrature = integrate_log_scale(f, a, b)?;
        return Ok(IntegralBounds {
            closed_upper,
            quadrature,
        });
    }
    if !(b < (-1.0f64).exp() && r > 1.0) {
        return domain(format!(
            "weighted form needs b < 1/e and r > 1, got b={b}, r={r}"
        ));
    }
    let la = -a.ln();
    let lb = -b.ln();
    let first = 1f64.min((la / lb).ln()) / lb;
    let inv = 1.0 / (r - 1.0);
    let second = inv.min(ln_ba) * (inv + la).powi(-2) * a.powf(1.0 - r);
    let f = |u: f64| ((1.0 - r) * u).exp() / (u * u);
    let quadrature = integrate_log_scale(f, a, b)?;
    Ok(IntegralBounds {
        closed_upper: first + second,
        quadrature,
    })
}

fn integrate_log_scale<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64> {
    let (ua, ub) = (a.ln(), b.ln());
    let rough = numeric::GaussLegendre::new(16).composite(&f, ua, ub, 32);
    let tol = 1e-10 * rough.abs().max(1.0);
    adaptive_simpson(f, ua, ub, tol, numeric::MAX_INTERVALS)
}
