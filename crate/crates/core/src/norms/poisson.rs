//! The norm [a]_δ = E max_{0≤j≤N} Σ|a_i|X_i^{(j)} with N ~ Pois(1/δ) and
//! X^{(0)} = 0, evaluated by quadrature against a quantile of S = Σ|a_i|X_i
//! or by direct simulation of the point process.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::distributions::{sample_quantile, QuantileModel};
use crate::error::{config, domain, Error, Result};
use crate::montecarlo::{map_chunks, SimulationPlan, TailEstimate};
use crate::numeric::GaussLegendre;

/// Two-sided normal quantile at level 1 − 10⁻³, used for every half-width.
pub const Z_999: f64 = 3.290_526_731_491_926;

const BATCHES: usize = 10;
const TRUNCATION: f64 = 40.0;
const SUBSTITUTION_POWER: i32 = 4;

fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Where the quantile function of S comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QuantileSource {
    /// Sorted simulated values of S with linear interpolation.
    MonteCarlo {
        #[serde(rename = "R")]
        r: u64,
        seed: u64,
        #[serde(default = "default_workers")]
        worker_hint: usize,
    },
    /// The model's own quantile; only for a single coordinate.
    Analytic {},
}

/// δ, nonnegative weights, the i.i.d. coordinate model and a quantile source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonNormParams {
    pub delta: f64,
    pub weights: Vec<f64>,
    pub model: QuantileModel,
    pub quantile_source: QuantileSource,
}

impl PoissonNormParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return domain(format!("delta must lie in (0, 1/2), got {}", self.delta));
        }
        if self.weights.is_empty() || self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return domain("weights must be finite and nonnegative");
        }
        if self.weights.iter().all(|w| *w == 0.0) {
            return domain("weights must not all vanish");
        }
        if let QuantileSource::MonteCarlo { r, .. } = self.quantile_source {
            if r < BATCHES as u64 {
                return domain(format!(
                    "need at least {BATCHES} draws for the quantile source, got {r}"
                ));
            }
        }
        Ok(())
    }
}

/// How [a]_δ is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PoissonMethod {
    /// δ⁻¹∫₀¹ max{F_S⁻¹(1−s), 0} e^{−s/δ} ds.
    Quadrature {},
    /// Mean of max{0, S⁽¹⁾, …, S⁽ᴺ⁾} over `R2` simulated point processes.
    DirectMc {
        #[serde(rename = "R2")]
        r2: u64,
        seed: u64,
        #[serde(default = "default_workers")]
        worker_hint: usize,
    },
}

/// A value with a half-width at confidence 1 − 10⁻³ (zero when exact).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub half_width: f64,
}

/// One draw of S = Σ w_i X_i.
fn draw_sum<R: Rng + ?Sized>(model: &QuantileModel, weights: &[f64], rng: &mut R) -> f64 {
    weights
        .iter()
        .map(|w| {
            if *w == 0.0 {
                0.0
            } else {
                w * model.sample(rng)
            }
        })
        .sum()
}

/// `r` draws of S from the stream `(seed, tag)`, in stream order.
fn raw_sums(
    model: &QuantileModel,
    weights: &[f64],
    r: u64,
    seed: u64,
    tag: &str,
    workers: usize,
) -> Vec<f64> {
    let plan = SimulationPlan {
        seed,
        replications: r,
        chunk_size: 1 << 14,
        worker_hint: workers,
    };
    map_chunks(&plan, tag, |rng, _, len| {
        (0..len)
            .map(|_| draw_sum(model, weights, rng))
            .collect::<Vec<f64>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// `r` sorted draws of S from the stream `(seed, tag)`.
pub fn sample_sums(
    model: &QuantileModel,
    weights: &[f64],
    r: u64,
    seed: u64,
    tag: &str,
    workers: usize,
) -> Vec<f64> {
    let mut all = raw_sums(model, weights, r, seed, tag, workers);
    all.sort_by(f64::total_cmp);
    all
}

/// δ⁻¹∫₀¹ max{Q(s), 0} e^{−s/δ} ds for an upper-tail quantile Q(s) = F⁻¹(1−s).
///
/// With s = δw the integral runs over w ∈ (0, min{40, 1/δ}), and w = W v⁴
/// smooths the endpoint singularity of heavy-tailed quantiles.
pub fn exponential_quantile_integral<Q: Fn(f64) -> f64>(q: Q, delta: f64) -> f64 {
    let w_max = TRUNCATION.min(1.0 / delta);
    let k = SUBSTITUTION_POWER;
    let rule = GaussLegendre::new(20);
    rule.composite(
        |v| {
            let vk = v.powi(k);
            let w = w_max * vk;
            let s = (delta * w).min(1.0);
            if s <= 0.0 {
                return 0.0;
            }
            let jac = w_max * k as f64 * v.powi(k - 1);
            q(s).max(0.0) * (-w).exp() * jac
        },
        0.0,
        1.0,
        200,
    )
}

/// Poisson-hull norm [a]_δ.
pub fn poisson_hull_norm(
    params: &PoissonNormParams,
    method: PoissonMethod,
) -> Result<NormEstimate> {
    params.validate()?;
    match method {
        PoissonMethod::Quadrature {} => quadrature(params),
        PoissonMethod::DirectMc {
            r2,
            seed,
            worker_hint,
        } => direct_mc(params, r2, seed, worker_hint),
    }
}

fn quadrature(params: &PoissonNormParams) -> Result<NormEstimate> {
    let delta = params.delta;
    match params.quantile_source {
        QuantileSource::Analytic {} => {
            let active: Vec<f64> = params
                .weights
                .iter()
                .copied()
                .filter(|w| *w != 0.0)
                .collect();
            if active.len() != 1 {
                return config("the analytic quantile source needs exactly one nonzero weight");
            }
            let w = active[0];
            let value =
                exponential_quantile_integral(|s| w * params.model.upper_quantile(s), delta);
            Ok(NormEstimate {
                value,
                half_width: 0.0,
            })
        }
        QuantileSource::MonteCarlo {
            r,
            seed,
            worker_hint,
        } => {
            let mut all = raw_sums(
                &params.model,
                &params.weights,
                r,
                seed,
                "poisson-quantile",
                worker_hint,
            );
            let batch_values = batch_integrals(&all, delta);
            all.sort_by(f64::total_cmp);
            let value = exponential_quantile_integral(|s| sample_quantile(&all, 1.0 - s), delta);
            Ok(NormEstimate {
                value,
                half_width: Z_999 * batch_spread(&batch_values),
            })
        }
    }
}

/// The quadrature repeated on each of ten disjoint batches of the draws.
fn batch_integrals(draws: &[f64], delta: f64) -> Vec<f64> {
    let size = draws.len() / BATCHES;
    (0..BATCHES)
        .map(|b| {
            let mut part = draws[b * size..(b + 1) * size].to_vec();
            part.sort_by(f64::total_cmp);
            exponential_quantile_integral(|s| sample_quantile(&part, 1.0 - s), delta)
        })
        .collect()
}

/// Standard error of the full-sample value estimated from batch values.
fn batch_spread(values: &[f64]) -> f64 {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (var / m).sqrt()
}

fn direct_mc(
    params: &PoissonNormParams,
    r2: u64,
    seed: u64,
    workers: usize,
) -> Result<NormEstimate> {
    if r2 < 2 {
        return domain("need at least two outer replications");
    }
    let pois = Poisson::new(1.0 / params.delta)
        .map_err(|e| Error::Config(format!("poisson intensity: {e}")))?;
    let plan = SimulationPlan {
        seed,
        replications: r2,
        chunk_size: 1 << 12,
        worker_hint: workers,
    };
    let parts = map_chunks(&plan, "poisson-direct", |rng, _, len| {
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for _ in 0..len {
            let count = pois.sample(rng) as u64;
            let mut best = 0.0f64;
            for _ in 0..count {
                best = best.max(draw_sum(&params.model, &params.weights, rng));
            }
            s1 += best;
            s2 += best * best;
        }
        (s1, s2)
    });
    let (s1, s2) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let m = r2 as f64;
    let mean = s1 / m;
    let var = ((s2 - m * mean * mean) / (m - 1.0)).max(0.0);
    Ok(NormEstimate {
        value: mean,
        half_width: Z_999 * (var / m).sqrt(),
    })
}

/// R = δ⁻¹∫_{1−δ}^1 F⁻¹(t) dt / F⁻¹(1−δ) for an upper-tail quantile Q(s) = F⁻¹(1−s).
pub fn quantile_ratio<Q: Fn(f64) -> f64>(q: Q, delta: f64) -> f64 {
    let rule = GaussLegendre::new(20);
    let k = SUBSTITUTION_POWER;
    // s = δ v⁴ on (0, δ)
    let tail = rule.composite(
        |v| q(delta * v.powi(k)) * k as f64 * v.powi(k - 1),
        0.0,
        1.0,
        200,
    );
    tail / q(delta)
}

/// Empirical check of the two quantile inequalities for [a]_δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileComparison {
    pub norm: f64,
    pub ratio_r: f64,
    /// P{S > 2[a]_δ}, to be compared with δ log 2.
    pub p_upper: TailEstimate,
    pub upper_budget: f64,
    /// P{S ≥ (1+R)⁻¹[a]_δ}, to be compared with δ.
    pub p_lower: TailEstimate,
    pub lower_budget: f64,
}

/// Estimates P{S > 2[a]_δ} and P{S ≥ (1+R)⁻¹[a]_δ} from `r` fresh draws of S.
///
/// [a]_δ and R are computed from the quantile source in `params`; the
/// exceedances are counted on an independent stream.
pub fn norm_quantile_comparison(
    params: &PoissonNormParams,
    r: u64,
    seed: u64,
) -> Result<QuantileComparison> {
    params.validate()?;
    if r < 10_000 {
        return domain(format!("need at least 10^4 draws, got {r}"));
    }
    let (norm, ratio_r, workers) = match params.quantile_source {
        QuantileSource::MonteCarlo {
            r: rq,
            seed: sq,
            worker_hint,
        } => {
            let all = sample_sums(
                &params.model,
                &params.weights,
                rq,
                sq,
                "poisson-quantile",
                worker_hint,
            );
            let norm =
                exponential_quantile_integral(|s| sample_quantile(&all, 1.0 - s), params.delta);
            let ratio = quantile_ratio(|s| sample_quantile(&all, 1.0 - s), params.delta);
            (norm, ratio, worker_hint)
        }
        QuantileSource::Analytic {} => {
            let est = quadrature(params)?;
            let w = params.weights.iter().copied().fold(0.0, f64::max);
            let ratio = quantile_ratio(|s| w * params.model.upper_quantile(s), params.delta);
            (est.value, ratio, default_workers())
        }
    };
    let fresh = sample_sums(
        &params.model,
        &params.weights,
        r,
        seed,
        "poisson-compare",
        workers,
    );
    let upper_level = 2.0 * norm;
    let lower_level = norm / (1.0 + ratio_r);
    let above_upper = fresh.len() - fresh.partition_point(|v| *v <= upper_level);
    let at_least_lower = fresh.len() - fresh.partition_point(|v| *v < lower_level);
    Ok(QuantileComparison {
        norm,
        ratio_r,
        p_upper: TailEstimate::new(above_upper as u64, r),
        upper_budget: params.delta * std::f64::consts::LN_2,
        p_lower: TailEstimate::new(at_least_lower as u64, r),
        lower_budget: params.delta,
    })
}
