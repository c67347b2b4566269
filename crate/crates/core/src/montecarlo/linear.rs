//! Replications of S = Σ a_i X_i with X_i = F_i⁻¹(U_i).

use serde::{Deserialize, Serialize};

use super::{map_chunks, SimulationPlan, TailEstimate};
use crate::distributions::{sample_quantile, ModelSet};
use crate::error::{domain, Result};

/// Largest replication count for which the full sorted sample is kept.
pub const FULL_SAMPLE_LIMIT: u64 = 10_000_000;

const SKETCH_BUCKETS: usize = 4096;
const MAIN_TAG: &str = "linear-sum";
const PILOT_TAG: &str = "linear-sum-pilot";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// |S − median| > threshold.
    TwoSidedAboutMedian,
    /// S > threshold.
    UpperOnly,
}

/// Fixed-size histogram whose bucket edges are quantiles of a pilot sample.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileSketch {
    edges: Vec<f64>,
    counts: Vec<u64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl QuantileSketch {
    fn from_pilot(pilot: &[f64]) -> Self {
        let edges: Vec<f64> = (1..SKETCH_BUCKETS)
            .map(|i| sample_quantile(pilot, i as f64 / SKETCH_BUCKETS as f64))
            .collect();
        QuantileSketch {
            edges,
            counts: vec![0; SKETCH_BUCKETS],
            lo: vec![f64::INFINITY; SKETCH_BUCKETS],
            hi: vec![f64::NEG_INFINITY; SKETCH_BUCKETS],
        }
    }

    fn empty_like(&self) -> Self {
        QuantileSketch {
            edges: self.edges.clone(),
            counts: vec![0; self.counts.len()],
            lo: vec![f64::INFINITY; self.counts.len()],
            hi: vec![f64::NEG_INFINITY; self.counts.len()],
        }
    }

    fn insert(&mut self, x: f64) {
        let b = self.edges.partition_point(|&e| e < x);
        self.counts[b] += 1;
        self.lo[b] = self.lo[b].min(x);
        self.hi[b] = self.hi[b].max(x);
    }

    fn merge(&mut self, other: &QuantileSketch) {
        for b in 0..self.counts.len() {
            self.counts[b] += other.counts[b];
            self.lo[b] = self.lo[b].min(other.lo[b]);
            self.hi[b] = self.hi[b].max(other.hi[b]);
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let target = u.clamp(0.0, 1.0) * self.total() as f64;
        let mut seen = 0.0;
        let mut last = f64::NAN;
        for b in 0..self.counts.len() {
            let c = self.counts[b] as f64;
            if c == 0.0 {
                continue;
            }
            if seen + c >= target {
                let f = ((target - seen) / c).clamp(0.0, 1.0);
                return self.lo[b] + f * (self.hi[b] - self.lo[b]);
            }
            seen += c;
            last = self.hi[b];
        }
        last
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Sorted(Vec<f64>),
    Sketch(QuantileSketch),
}

/// Result of a linear-sum simulation: the pilot median plus quantile access.
#[derive(Debug, Clone)]
pub struct LinearSumSummary {
    pub median: f64,
    pub trials: u64,
    models: ModelSet,
    terms: Vec<(usize, f64)>,
    plan: SimulationPlan,
    storage: Storage,
}

fn nonzero_terms(models: &ModelSet, a: &[f64]) -> Result<Vec<(usize, f64)>> {
    if a.is_empty() || a.iter().any(|x| !x.is_finite()) {
        return domain("coefficients must be a nonempty finite vector");
    }
    models.check_len(a.len())?;
    Ok(a.iter()
        .enumerate()
        .filter(|(_, &c)| c != 0.0)
        .map(|(i, &c)| (i, c))
        .collect())
}

/// The `len` sums of one chunk, filled coordinate by coordinate.
fn chunk_sums(
    models: &ModelSet,
    terms: &[(usize, f64)],
    rng: &mut rand_chacha::ChaCha8Rng,
    len: usize,
) -> Vec<f64> {
    let mut acc = vec![0.0; len];
    let mut buf = vec![0.0; len];
    for &(i, c) in terms {
        models.get(i).fill(rng, &mut buf);
        for (s, x) in acc.iter_mut().zip(&buf) {
            *s += c * x;
        }
    }
    acc
}

fn sorted_sample(
    models: &ModelSet,
    terms: &[(usize, f64)],
    plan: &SimulationPlan,
    tag: &str,
) -> Vec<f64> {
    let mut all: Vec<f64> =
        map_chunks(plan, tag, |rng, _, len| chunk_sums(models, terms, rng, len))
            .into_iter()
            .flatten()
            .collect();
    all.sort_unstable_by(f64::total_cmp);
    all
}

/// Simulates `plan.replications` copies of Σ a_i X_i, keeping the full
/// sample up to [`FULL_SAMPLE_LIMIT`] replications.
pub fn simulate_linear_sum(
    models: &ModelSet,
    a: &[f64],
    plan: &SimulationPlan,
) -> Result<LinearSumSummary> {
    simulate_linear_sum_limited(models, a, plan, FULL_SAMPLE_LIMIT)
}

/// As [`simulate_linear_sum`] with an explicit limit for keeping the sample.
pub fn simulate_linear_sum_limited(
    models: &ModelSet,
    a: &[f64],
    plan: &SimulationPlan,
    keep_limit: u64,
) -> Result<LinearSumSummary> {
    plan.validate()?;
    if plan.replications < 1000 {
        return domain(format!(
            "need at least 1000 replications, got {}",
            plan.replications
        ));
    }
    let terms = nonzero_terms(models, a)?;
    let pilot_plan = plan.with_replications(plan.replications / 10);
    let pilot = sorted_sample(models, &terms, &pilot_plan, PILOT_TAG);
    let median = sample_quantile(&pilot, 0.5);
    let storage = if plan.replications <= keep_limit {
        Storage::Sorted(sorted_sample(models, &terms, plan, MAIN_TAG))
    } else {
        let base = QuantileSketch::from_pilot(&pilot);
        let parts = map_chunks(plan, MAIN_TAG, |rng, _, len| {
            let mut s = base.empty_like();
            for x in chunk_sums(models, &terms, rng, len) {
                s.insert(x);
            }
            s
        });
        let mut sketch = base;
        for p in &parts {
            sketch.merge(p);
        }
        Storage::Sketch(sketch)
    };
    Ok(LinearSumSummary {
        median,
        trials: plan.replications,
        models: models.clone(),
        terms,
        plan: *plan,
        storage,
    })
}

impl PartialEq for LinearSumSummary {
    fn eq(&self, other: &Self) -> bool {
        let key = |s: &Self| (s.plan.seed, s.plan.replications, s.plan.chunk_size);
        self.median.to_bits() == other.median.to_bits()
            && self.trials == other.trials
            && self.models == other.models
            && self.terms == other.terms
            && key(self) == key(other)
            && self.storage == other.storage
    }
}

impl LinearSumSummary {
    pub fn is_exact(&self) -> bool {
        matches!(self.storage, Storage::Sorted(_))
    }

    pub fn sorted_sample(&self) -> Option<&[f64]> {
        match &self.storage {
            Storage::Sorted(v) => Some(v),
            Storage::Sketch(_) => None,
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match &self.storage {
            Storage::Sorted(v) => sample_quantile(v, u),
            Storage::Sketch(s) => s.quantile(u),
        }
    }

    /// Number of replications in the event defined by `side` and `threshold`.
    pub fn count(&self, threshold: f64, side: Side) -> u64 {
        let m = self.median;
        match &self.storage {
            Storage::Sorted(v) => match side {
                Side::UpperOnly => (v.len() - v.partition_point(|&x| x <= threshold)) as u64,
                Side::TwoSidedAboutMedian => {
                    let above = v.len() - v.partition_point(|&x| x - m <= threshold);
                    let below = v.partition_point(|&x| m - x > threshold);
                    (above + below) as u64
                }
            },
            Storage::Sketch(_) => self
                .replay(|xs| match side {
                    Side::UpperOnly => xs.iter().filter(|&&x| x > threshold).count() as u64,
                    Side::TwoSidedAboutMedian => {
                        xs.iter().filter(|&&x| (x - m).abs() > threshold).count() as u64
                    }
                })
                .into_iter()
                .sum(),
        }
    }

    fn replay<T: Send, F: Fn(&[f64]) -> T + Sync>(&self, f: F) -> Vec<T> {
        map_chunks(&self.plan, MAIN_TAG, |rng, _, len| {
            f(&chunk_sums(&self.models, &self.terms, rng, len))
        })
    }

    /// The `k` largest event statistics in decreasing order: |S − median| for
    /// the two-sided event and S for the upper one.
    pub fn largest(&self, k: usize, side: Side) -> Vec<f64> {
        let m = self.median;
        let stat = |x: f64| match side {
            Side::UpperOnly => x,
            Side::TwoSidedAboutMedian => (x - m).abs(),
        };
        let k = k.min(self.trials as usize);
        let mut top: Vec<f64> = match &self.storage {
            Storage::Sorted(v) => match side {
                Side::UpperOnly => v.iter().rev().take(k).copied().collect(),
                Side::TwoSidedAboutMedian => {
                    let (mut i, mut j) = (0usize, v.len());
                    let mut out = Vec::with_capacity(k);
                    while out.len() < k {
                        let lo = m - v[i];
                        let hi = v[j - 1] - m;
                        if hi >= lo {
                            out.push(hi.abs());
                            j -= 1;
                        } else {
                            out.push(lo.abs());
                            i += 1;
                        }
                    }
                    out
                }
            },
            Storage::Sketch(_) => self
                .replay(|xs| keep_top(xs.iter().map(|&x| stat(x)).collect(), k))
                .into_iter()
                .flatten()
                .collect(),
        };
        top.sort_unstable_by(|a, b| b.total_cmp(a));
        top.truncate(k);
        top
    }
}

fn keep_top(mut v: Vec<f64>, k: usize) -> Vec<f64> {
    if v.len() > k && k > 0 {
        v.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
        v.truncate(k);
    } else if k == 0 {
        v.clear();
    }
    v
}

/// Exceedance estimate for the event defined by `side` and `threshold`.
pub fn tail_estimate(
    summary: &LinearSumSummary,
    threshold: f64,
    side: Side,
) -> Result<TailEstimate> {
    if !(threshold >= 0.0) {
        return domain(format!("threshold must be nonnegative, got {threshold}"));
    }
    Ok(TailEstimate::new(
        summary.count(threshold, side),
        summary.trials,
    ))
}
