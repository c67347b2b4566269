//! Deterministic parallel simulation: seeded chunk streams, linear-sum
//! sampling through the Gaussian quantile transform, exceedance estimates,
//! certificate verification and constant calibration.

mod linear;
mod rng;
mod tail;
mod verify;

pub use linear::{
    simulate_linear_sum, simulate_linear_sum_limited, tail_estimate, LinearSumSummary,
    QuantileSketch, Side, FULL_SAMPLE_LIMIT,
};
pub use rng::{domain_key, stream};
pub use tail::{clopper_pearson, TailEstimate, CI_ALPHA};
pub use verify::{
    calibrate, calibrate_summary, verify_certificate, verify_summary, CalibrationResult, ReportRow,
    VerificationReport, MAX_C_DEV,
};

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Seed, size and chunking of a simulation. Results depend on
/// `(seed, replications, chunk_size)` only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationPlan {
    pub seed: u64,
    pub replications: u64,
    #[serde(default = "default_chunk")]
    pub chunk_size: u64,
    #[serde(default = "default_workers")]
    pub worker_hint: usize,
}

fn default_chunk() -> u64 {
    1 << 14
}

fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

impl SimulationPlan {
    pub fn new(seed: u64, replications: u64) -> Self {
        SimulationPlan {
            seed,
            replications,
            chunk_size: default_chunk(),
            worker_hint: default_workers(),
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.worker_hint = workers;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_replications(mut self, replications: u64) -> Self {
        self.replications = replications;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return domain("replications must be positive");
        }
        if self.chunk_size == 0 {
            return domain("chunk_size must be positive");
        }
        Ok(())
    }

    pub fn chunks(&self) -> u64 {
        self.replications.div_ceil(self.chunk_size)
    }
}

/// Runs `f(rng, start, len)` on every chunk of the plan, in parallel on
/// `worker_hint` threads, and returns the results in chunk order.
pub fn map_chunks<T, F>(plan: &SimulationPlan, tag: &str, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, u64, usize) -> T + Sync,
{
    let cs = plan.chunk_size.max(1);
    let total = plan.replications;
    let job = |c: u64| {
        let mut rng = stream(plan.seed, tag, c);
        let start = c * cs;
        let len = cs.min(total - start) as usize;
        f(&mut rng, start, len)
    };
    let chunks = total.div_ceil(cs);
    let workers = plan.worker_hint.max(1);
    if workers == 1 {
        return (0..chunks).map(job).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| (0..chunks).into_par_iter().map(job).collect()),
        Err(_) => (0..chunks).map(job).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn chunk_results_ignore_worker_count() {
        let plan = SimulationPlan {
            seed: 5,
            replications: 10_007,
            chunk_size: 1000,
            worker_hint: 1,
        };
        let run = |w: usize| {
            map_chunks(&plan.with_workers(w), "t", |rng, start, len| {
                (start, (0..len).map(|_| rng.next_u64() >> 40).sum::<u64>())
            })
        };
        let one = run(1);
        assert_eq!(one.len(), 11);
        assert_eq!(one.last().unwrap().0, 10_000);
        assert_eq!(one, run(2));
        assert_eq!(one, run(8));
    }
}
