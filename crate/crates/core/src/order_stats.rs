//! Binomial Chernoff tails, the Rényi representation of uniform order
//! statistics, order-statistic envelopes and upper bounds for trimmed sums of
//! i.i.d. samples.

use std::f64::consts::{E, PI};

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::distributions::{ModelSpec, QuantileModel};
use crate::error::{config, domain, Result};
use crate::numeric::{adaptive_simpson, logspace, GaussLegendre, MAX_INTERVALS};
use crate::special::{c0_constant, xi1_inverse_complement, xi_inverse, xi_inverse_bound, XiKind};

const XI_TOL: f64 = 1e-14;

/// Chernoff bound (np/s)^s ((n−np)/(n−s))^{n−s} for P{B ≥ s}, B ~ Bin(n, p).
pub fn binomial_chernoff(n: u64, p: f64, s: f64) -> Result<f64> {
    let nf = n as f64;
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("success probability must lie in (0,1), got {p}"));
    }
    let np = nf * p;
    if !(s >= np && s < nf) {
        return domain(format!("need np <= s < n, got np={np}, s={s}, n={n}"));
    }
    let first = if s == 0.0 { 0.0 } else { s * (np / s).ln() };
    let second = (nf - s) * ((nf - np) / (nf - s)).ln();
    Ok((first + second).exp().min(1.0))
}

/// Fills `out` with S_k = Σ_{j≤k} Z_j/(n−j+1) for i.i.d. standard exponentials
/// Z_j, so that γ_(k) = 1 − e^{−S_k} are uniform order statistics.
pub fn renyi_log_survivals<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    let n = out.len();
    let mut acc = 0.0;
    for (j, s) in out.iter_mut().enumerate() {
        let z: f64 = rng.sample(Exp1);
        acc += z / (n - j) as f64;
        *s = acc;
    }
}

/// Uniform order statistics γ_(1) ≤ … ≤ γ_(n) from the Rényi representation.
pub fn renyi_sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; n];
    renyi_log_survivals(rng, &mut out);
    for s in out.iter_mut() {
        *s = -(-*s).exp_m1();
    }
    out
}

/// Parameters of the order-statistic envelopes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeParams {
    pub n: usize,
    pub t: f64,
    #[serde(default = "default_renyi_big")]
    pub renyi_big_c: f64,
    #[serde(default = "default_renyi_small")]
    pub renyi_c: f64,
    /// Use the closed-form bounds on ξ⁻¹ instead of the numerical inverses.
    #[serde(default)]
    pub closed_form: bool,
}

fn default_renyi_big() -> f64 {
    4.0
}

fn default_renyi_small() -> f64 {
    0.125
}

impl EnvelopeParams {
    pub fn new(n: usize, t: f64) -> Self {
        EnvelopeParams {
            n,
            t,
            renyi_big_c: 4.0,
            renyi_c: 0.125,
            closed_form: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return domain("n must be at least 1");
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return domain(format!("t must be positive, got {}", self.t));
        }
        if !(self.renyi_big_c >= 1.0) {
            return domain(format!(
                "renyi_big_c must be at least 1, got {}",
                self.renyi_big_c
            ));
        }
        if !(self.renyi_c > 0.0 && self.renyi_c <= 1.0) {
            return domain(format!("renyi_c must lie in (0,1], got {}", self.renyi_c));
        }
        Ok(())
    }

    /// Failure probability (π²/3)e^{−t²/2} of the joint top/bottom envelope.
    pub fn joint_probability(&self) -> f64 {
        PI * PI / 3.0 * (-0.5 * self.t * self.t).exp()
    }

    /// Failure probability C e^{−t²/2} of the Rényi envelope.
    pub fn renyi_probability(&self) -> f64 {
        self.renyi_big_c * (-0.5 * self.t * self.t).exp()
    }
}

/// Per-k upper envelopes for γ_(k), k = 1..n, all clamped to [0,1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelopes {
    pub top: Vec<f64>,
    pub bottom: Vec<f64>,
    /// 1 − bottom[k] before clamping, kept separately because it drops below
    /// the resolution of 1 − ε long before it reaches zero.
    pub bottom_margin: Vec<f64>,
    pub renyi: Vec<f64>,
    pub renyi_linear: Vec<f64>,
}

impl Envelopes {
    /// min(top[k], bottom[k]).
    pub fn joint(&self) -> Vec<f64> {
        self.top
            .iter()
            .zip(&self.bottom)
            .map(|(a, b)| a.min(*b))
            .collect()
    }
}

fn ladder_level(t: f64, m: f64) -> f64 {
    ((-t * t - 4.0 * m.ln()) / (2.0 * m)).exp()
}

fn xi2_inv(y: f64, closed_form: bool) -> Result<f64> {
    if y == 0.0 {
        return Ok(f64::INFINITY);
    }
    if closed_form {
        xi_inverse_bound(XiKind::Xi2, y)
    } else {
        xi_inverse(XiKind::Xi2, y, XI_TOL)
    }
}

/// 1 − ξ₁⁻¹(y), or its closed-form lower bound.
fn xi1_gap(y: f64, closed_form: bool) -> Result<f64> {
    if closed_form {
        Ok(1.0 - xi_inverse_bound(XiKind::Xi1, y)?)
    } else {
        xi1_inverse_complement(y)
    }
}

fn clamp01(x: f64) -> f64 {
    if x.is_nan() {
        1.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

/// Computes the top, bottom and Rényi envelopes.
pub fn orderstat_envelope(params: &EnvelopeParams) -> Result<Envelopes> {
    params.validate()?;
    let n = params.n;
    let nf = n as f64;
    let t = params.t;
    let mut env = Envelopes {
        top: Vec::with_capacity(n),
        bottom: Vec::with_capacity(n),
        bottom_margin: Vec::with_capacity(n),
        renyi: Vec::with_capacity(n),
        renyi_linear: Vec::with_capacity(n),
    };
    for k in 1..=n {
        let kf = k as f64;
        let top = kf / (nf + 1.0) * (1.0 + xi2_inv(ladder_level(t, kf), params.closed_form)?);
        env.top.push(clamp01(top));

        let m = (n - k + 1) as f64;
        let gap = xi1_gap(ladder_level(t, m), params.closed_form)?;
        let margin = m / (nf + 1.0) * gap;
        env.bottom_margin.push(margin);
        env.bottom.push(clamp01(1.0 - margin));

        let lk = kf.ln();
        let spread = ((t + lk.sqrt()) * kf.sqrt() / (nf * m).sqrt()).max((t * t + lk) / m);
        let c = params.renyi_c;
        let rest = (nf - kf) / nf;
        env.renyi.push(clamp01(1.0 - rest * (-c * spread).exp()));
        env.renyi_linear.push(clamp01(kf / nf + c * rest * spread));
    }
    Ok(env)
}

/// 2 exp(−c min{(r/|a|₂)², r/|a|_∞}).
pub fn subexp_sum_bound(a: &[f64], r: f64, c: f64) -> Result<f64> {
    let l2 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let linf = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if !(l2 > 0.0) {
        return domain("coefficient vector must be nonzero");
    }
    if !(r > 0.0) {
        return domain(format!("r must be positive, got {r}"));
    }
    let e = ((r / l2) * (r / l2)).min(r / linf);
    Ok(2.0 * (-c * e).exp())
}

/// Σ_{i=n−k}^{n−j} y_(i) for an ascending sample `sorted` (1-based order statistics).
pub fn trimmed_sum(sorted: &[f64], j: usize, k: usize) -> f64 {
    let n = sorted.len();
    assert!(j <= k && k < n, "need 0 <= j <= k < n");
    sorted[n - k - 1..n - j].iter().sum()
}

/// Successive weakenings of the trimmed-sum bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrimmedBoundVariant {
    /// The quantile integral along the bottom envelope.
    Quadrature {},
    /// The integral after the change of variables z = s^{−1}e^{−s}, with C₀.
    Replacio {},
    /// The three-term bound under the growth condition H*(δx) ≥ T⁻¹δ^{−1/p}H*(x).
    Productiones {
        p: f64,
        #[serde(rename = "T")]
        t: f64,
        #[serde(default = "unit")]
        c: f64,
    },
    /// Closed form for Pareto tails with a single constant C.
    ParetoClosed {
        #[serde(rename = "C")]
        c: f64,
    },
    /// The explicit bound 12p(es)^{1/p}n/(p−1) with probability s^{−k}.
    Glptj {},
}

fn unit() -> f64 {
    1.0
}

/// A threshold together with the probability with which it may be exceeded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrimmedBound {
    pub threshold: f64,
    pub probability: f64,
}

/// exp(−1 − 2/e), the factor lost when ξ₁⁻¹ and k^{−2/k} are bounded below.
fn shrink() -> f64 {
    (-1.0 - 2.0 / E).exp()
}

/// Upper bound for Σ_{i=n−k}^{n−j} Y_(i) with Y_i i.i.d. from `model`.
pub fn trimmed_sum_bound(
    model: &QuantileModel,
    n: usize,
    j: usize,
    k: usize,
    lambda: f64,
    variant: TrimmedBoundVariant,
) -> Result<TrimmedBound> {
    if !(j <= k && k < n) {
        return domain(format!("need 0 <= j <= k < n, got j={j}, k={k}, n={n}"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return domain(format!("lambda must be positive, got {lambda}"));
    }
    let ladder = PI * PI / 3.0 * (-0.5 * lambda * lambda).exp();
    match variant {
        TrimmedBoundVariant::Quadrature {}
        | TrimmedBoundVariant::Replacio {}
        | TrimmedBoundVariant::Productiones { .. }
            if lambda < 2.0 =>
        {
            domain(format!("lambda must be at least 2, got {lambda}"))
        }
        TrimmedBoundVariant::Quadrature {} => Ok(TrimmedBound {
            threshold: quadrature_bound(model, n, j, k, lambda)?,
            probability: ladder,
        }),
        TrimmedBoundVariant::Replacio {} => Ok(TrimmedBound {
            threshold: replacio_bound(model, n, j, k, lambda)?,
            probability: ladder,
        }),
        TrimmedBoundVariant::Productiones { p, t, c } => {
            check_growth(model, p, t)?;
            Ok(TrimmedBound {
                threshold: productiones_bound(model, n, j, k, lambda, p, t, c)?,
                probability: ladder,
            })
        }
        TrimmedBoundVariant::ParetoClosed { c } => {
            let p = pareto_exponent(model)?;
            Ok(TrimmedBound {
                threshold: pareto_closed(p, n, j, lambda, c),
                probability: (-0.5 * lambda * lambda).exp(),
            })
        }
        TrimmedBoundVariant::Glptj {} => {
            let p = pareto_exponent(model)?;
            let kk = (j + 1) as f64;
            let s = (lambda * lambda / (2.0 * kk)).exp();
            Ok(glptj_bound(p, n, j + 1, s))
        }
    }
}

fn pareto_exponent(model: &QuantileModel) -> Result<f64> {
    match model.spec() {
        ModelSpec::ParetoTail { p } => Ok(*p),
        other => config(format!(
            "this bound needs a pareto_tail model, got {other:?}"
        )),
    }
}

/// Threshold 12p(es)^{1/p}n/(p−1) for Σ_{i=1}^{n−k+1} Y_(i), exceeded with
/// probability at most s^{−k}.
pub fn glptj_bound(p: f64, n: usize, k: usize, s: f64) -> TrimmedBound {
    TrimmedBound {
        threshold: 12.0 * p * (E * s).powf(1.0 / p) * n as f64 / (p - 1.0),
        probability: s.powf(-(k as f64)),
    }
}

fn pareto_closed(p: f64, n: usize, j: usize, lambda: f64, c: f64) -> f64 {
    let nf = n as f64;
    let jj = (j + 1) as f64;
    let x = lambda * lambda / (p * jj);
    let bracket = 1.0 + jj * (x * x).min(1.0 / x);
    c * (p * nf / (p - 1.0)
        + bracket * (nf / jj).powf(1.0 / p) * (lambda * lambda / (2.0 * p * jj)).exp())
}

fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64> {
    if a >= b {
        return Ok(0.0);
    }
    let rough = GaussLegendre::new(8).composite(&f, a, b, 8);
    adaptive_simpson(&f, a, b, 1e-11 * rough.abs().max(1.0), MAX_INTERVALS)
}

fn quadrature_bound(
    model: &QuantileModel,
    n: usize,
    j: usize,
    k: usize,
    lambda: f64,
) -> Result<f64> {
    let n1 = (n + 1) as f64;
    let level =
        |m: f64| -> Result<f64> { Ok(m / n1 * xi1_inverse_complement(ladder_level(lambda, m))?) };
    let jj = (j + 1) as f64;
    let head = model.upper_quantile(level(jj)?);
    // (n+1)∫ over t ∈ [(j+1)/(n+1), (k+1)/(n+1)] becomes ∫ over m = (n+1)t
    let body = integrate(
        |m| model.upper_quantile(level(m).unwrap_or(f64::NAN)),
        jj,
        (k + 1) as f64,
    )?;
    Ok(head + body)
}

fn replacio_bound(model: &QuantileModel, n: usize, j: usize, k: usize, lambda: f64) -> Result<f64> {
    let n1 = (n + 1) as f64;
    let l2 = lambda * lambda;
    let jj = (j + 1) as f64;
    let head = model.upper_quantile(jj / n1 / E * ladder_level(lambda, jj));
    let z_at = |m: f64| 2.0 * m / l2 * (-l2 / (2.0 * m)).exp();
    let scale = shrink() * l2 / (2.0 * n1);
    let c0 = c0_constant(2000, 1e-12)?;
    // integrate in v = ln z
    let body = integrate(
        |v| {
            let z = v.exp();
            let w = (E + 1.0 / z).ln();
            model.upper_quantile(scale * z) * (1.0 + 1.0 / (z * w * w)) * z
        },
        z_at(jj).ln(),
        z_at((k + 1) as f64).ln(),
    )?;
    Ok(head + 0.5 * c0 * l2 * body)
}

/// Checks H*(δx) ≥ T⁻¹δ^{−1/p}H*(x) on a 20 × 20 grid of (δ, x).
fn check_growth(model: &QuantileModel, p: f64, t: f64) -> Result<()> {
    if !(p > 0.0 && t >= 1.0) {
        return config(format!(
            "growth condition needs p > 0 and T >= 1, got p={p}, T={t}"
        ));
    }
    let grid = logspace(1e-6, 0.999, 20);
    for &d in &grid {
        for &x in &grid {
            let lhs = model.upper_quantile(d * x);
            let rhs = d.powf(-1.0 / p) * model.upper_quantile(x) / t;
            if lhs < rhs * (1.0 - 1e-12) - 1e-300 {
                return config(format!(
                    "growth condition fails at delta={d:e}, x={x:e} for p={p}, T={t}"
                ));
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn productiones_bound(
    model: &QuantileModel,
    n: usize,
    j: usize,
    k: usize,
    lambda: f64,
    p: f64,
    t: f64,
    c: f64,
) -> Result<f64> {
    let n1 = (n + 1) as f64;
    let l2 = lambda * lambda;
    let jj = (j + 1) as f64;
    let kk = (k + 1) as f64;
    let a = if l2 / 2.0 <= jj {
        0.0
    } else {
        let cap = (l2 / 2.0).min(kk);
        let first = c.powf(1.0 + 1.0 / p) * p.min(l2 * (1.0 / jj - 1.0 / cap))
            / (p + 1.0 + l2 / jj).powi(2);
        let r = l2 / (2.0 * jj);
        let second = c * (cap / jj).ln().min(1.0) * (r * r.exp()).powf(-1.0 / p) / (1.0 + l2 / kk);
        first + second
    };
    let head = model.upper_quantile(shrink() * jj / n1 * (-l2 / (2.0 * jj)).exp());
    let x_at = |m: f64| m / n1 * (-l2 / (2.0 * m) - 1.0 - 2.0 / E).exp();
    let body = integrate(
        |v| {
            let x = v.exp();
            model.upper_quantile(x) * x
        },
        x_at(jj).ln(),
        x_at(kk).ln(),
    )?;
    Ok((1.0 + t * l2 * a) * head + c * n as f64 * body)
}
