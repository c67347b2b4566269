//! Exceedance counts with exact binomial confidence intervals.

use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, inv_beta_reg};

/// Two-sided level of every interval reported by the harness.
pub const CI_ALPHA: f64 = 1e-3;

/// Empirical exceedance probability with its Clopper–Pearson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub successes: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl TailEstimate {
    pub fn new(successes: u64, trials: u64) -> Self {
        assert!(
            trials > 0 && successes <= trials,
            "need 0 <= successes <= trials, trials > 0"
        );
        let (ci_low, ci_high) = clopper_pearson(successes, trials, CI_ALPHA);
        TailEstimate {
            successes,
            trials,
            p_hat: successes as f64 / trials as f64,
            ci_low,
            ci_high,
        }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }
}

/// Exact binomial interval at confidence 1 − `alpha`.
pub fn clopper_pearson(x: u64, n: u64, alpha: f64) -> (f64, f64) {
    let nf = n as f64;
    let xf = x as f64;
    let half = 0.5 * alpha;
    let lo = if x == 0 {
        0.0
    } else if x == n {
        half.powf(1.0 / nf)
    } else {
        beta_quantile(xf, nf - xf + 1.0, half)
    };
    let hi = if x == n {
        1.0
    } else if x == 0 {
        // 1 − (α/2)^{1/n} without cancellation
        -(half.ln() / nf).exp_m1()
    } else {
        beta_quantile(xf + 1.0, nf - xf, 1.0 - half)
    };
    (lo, hi)
}

/// Solves I_p(a, b) = target for p by bisection, started from statrs' estimate.
fn beta_quantile(a: f64, b: f64, target: f64) -> f64 {
    let below = |p: f64| beta_reg(a, b, p) < target;
    let guess = inv_beta_reg(a, b, target);
    let (mut lo, mut hi) = if guess > 0.0 && guess < 1.0 {
        let mut lo = 0.5 * guess;
        let mut hi = (2.0 * guess).min(1.0);
        while lo > 0.0 && !below(lo) {
            lo *= 0.5;
            if lo < 1e-300 {
                lo = 0.0;
            }
        }
        while hi < 1.0 && below(hi) {
            hi = (2.0 * hi).min(1.0);
        }
        (lo, hi)
    } else {
        (0.0, 1.0)
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || (hi - lo) <= 1e-17 * hi {
            break;
        }
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
