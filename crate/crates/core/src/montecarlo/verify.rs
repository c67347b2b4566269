//! Calibration of certificate constants and verification reports.

use serde::{Deserialize, Serialize};

use super::linear::{simulate_linear_sum, tail_estimate, LinearSumSummary, Side};
use super::{clopper_pearson, SimulationPlan, TailEstimate, CI_ALPHA};
use crate::certificates::DeviationCertificate;
use crate::distributions::ModelSet;
use crate::error::{domain, Result};

/// Calibration gives up above this deviation multiplier.
pub const MAX_C_DEV: f64 = 1e6;

/// One t of a calibration or verification run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub t: f64,
    pub threshold: f64,
    pub successes: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub budget: f64,
    pub pass: bool,
}

impl ReportRow {
    fn new(t: f64, threshold: f64, est: TailEstimate, budget: f64, pass: bool) -> Self {
        ReportRow {
            t,
            threshold,
            successes: est.successes,
            trials: est.trials,
            p_hat: est.p_hat,
            ci_low: est.ci_low,
            ci_high: est.ci_high,
            budget,
            pass,
        }
    }

    pub fn estimate(&self) -> TailEstimate {
        TailEstimate {
            successes: self.successes,
            trials: self.trials,
            p_hat: self.p_hat,
            ci_low: self.ci_low,
            ci_high: self.ci_high,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub c_dev: f64,
    pub c_prob: f64,
    pub median: f64,
    /// Rows use `pass = ci_high ≤ budget`.
    pub grid: Vec<ReportRow>,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub c_dev: f64,
    pub c_prob: f64,
    pub median: f64,
    /// Rows use `pass = ci_low ≤ budget`.
    pub rows: Vec<ReportRow>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return domain("t grid is empty");
    }
    if t_grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return domain("t grid values must be positive and finite");
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return domain("t grid must be increasing");
    }
    Ok(())
}

/// Largest k with Clopper–Pearson upper limit at most `budget`, if any.
fn max_successes(trials: u64, budget: f64) -> Option<u64> {
    let upper = |k: u64| clopper_pearson(k, trials, CI_ALPHA).1;
    if upper(0) > budget {
        return None;
    }
    let (mut lo, mut hi) = (0u64, trials);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if upper(mid) <= budget {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Some(lo)
}

/// Smallest c_dev for which every t in the grid has ci_high ≤ c_prob·e^{−t²/2},
/// using a fresh simulation under `plan`.
pub fn calibrate(
    cert: &DeviationCertificate,
    models: &ModelSet,
    plan: &SimulationPlan,
    t_grid: &[f64],
    c_prob_target: f64,
) -> Result<CalibrationResult> {
    check_grid(t_grid)?;
    let summary = simulate_linear_sum(models, cert.coefficients(), plan)?;
    calibrate_summary(cert, &summary, t_grid, c_prob_target)
}

/// [`calibrate`] on an existing simulation.
///
/// The exceedance count at c_dev is a step function of c_dev that jumps at
/// the order statistics of |S − median|, so the smallest admissible value is
/// read off the sorted deviations directly.
pub fn calibrate_summary(
    cert: &DeviationCertificate,
    summary: &LinearSumSummary,
    t_grid: &[f64],
    c_prob_target: f64,
) -> Result<CalibrationResult> {
    check_grid(t_grid)?;
    if !(c_prob_target > 0.0 && c_prob_target.is_finite()) {
        return domain(format!(
            "probability multiplier must be positive, got {c_prob_target}"
        ));
    }
    let trials = summary.trials;
    let budgets: Vec<f64> = t_grid
        .iter()
        .map(|t| c_prob_target * (-0.5 * t * t).exp())
        .collect();
    let allowed: Vec<Option<u64>> = budgets.iter().map(|&b| max_successes(trials, b)).collect();
    let mut feasible = allowed.iter().all(Option::is_some);
    let mut multiplier = 0f64;
    if feasible {
        let need = allowed.iter().map(|k| k.unwrap()).max().unwrap() as usize + 1;
        let top = summary.largest(need, Side::TwoSidedAboutMedian);
        for (&t, k) in t_grid.iter().zip(&allowed) {
            let k = k.unwrap() as usize;
            if k < top.len() {
                multiplier = multiplier.max(top[k] / cert.shape_at(t)?);
            }
        }
    }
    let exponent = cert.exponent();
    let mut c_dev = (multiplier.powf(1.0 / exponent) * (1.0 + 1e-12)).max(1e-12);
    if !feasible || c_dev > MAX_C_DEV {
        feasible = false;
        c_dev = MAX_C_DEV;
    }
    let mut grid = evaluate(cert, summary, t_grid, c_dev, c_prob_target, |e, b| {
        e.ci_high <= b
    })?;
    let mut bumps = 0;
    while feasible && !grid.iter().all(|r| r.pass) && c_dev < MAX_C_DEV && bumps < 100 {
        bumps += 1;
        c_dev = (c_dev * 1.01).min(MAX_C_DEV);
        grid = evaluate(cert, summary, t_grid, c_dev, c_prob_target, |e, b| {
            e.ci_high <= b
        })?;
    }
    feasible = feasible && grid.iter().all(|r| r.pass);
    Ok(CalibrationResult {
        c_dev,
        c_prob: c_prob_target,
        median: summary.median,
        grid,
        feasible,
    })
}

fn evaluate<P: Fn(&TailEstimate, f64) -> bool>(
    cert: &DeviationCertificate,
    summary: &LinearSumSummary,
    t_grid: &[f64],
    c_dev: f64,
    c_prob: f64,
    pass: P,
) -> Result<Vec<ReportRow>> {
    let scale = c_dev.powf(cert.exponent());
    t_grid
        .iter()
        .map(|&t| {
            let threshold = scale * cert.shape_at(t)?;
            let est = tail_estimate(summary, threshold, Side::TwoSidedAboutMedian)?;
            let budget = c_prob * (-0.5 * t * t).exp();
            Ok(ReportRow::new(
                t,
                threshold,
                est,
                budget,
                pass(&est, budget),
            ))
        })
        .collect()
}

/// Checks the certificate's guarantee on a fresh simulation: a grid point
/// fails only when ci_low exceeds c_prob·e^{−t²/2}.
pub fn verify_certificate(
    cert: &DeviationCertificate,
    models: &ModelSet,
    plan: &SimulationPlan,
    t_grid: &[f64],
) -> Result<VerificationReport> {
    check_grid(t_grid)?;
    let summary = simulate_linear_sum(models, cert.coefficients(), plan)?;
    verify_summary(cert, &summary, t_grid, cert.c_dev())
}

/// [`verify_certificate`] on an existing simulation with an explicit c_dev,
/// which may be 0.
pub fn verify_summary(
    cert: &DeviationCertificate,
    summary: &LinearSumSummary,
    t_grid: &[f64],
    c_dev: f64,
) -> Result<VerificationReport> {
    check_grid(t_grid)?;
    if !(c_dev >= 0.0 && c_dev.is_finite()) {
        return domain(format!("c_dev must be nonnegative, got {c_dev}"));
    }
    let rows = evaluate(cert, summary, t_grid, c_dev, cert.c_prob(), |e, b| {
        e.ci_low <= b
    })?;
    Ok(VerificationReport {
        c_dev,
        c_prob: cert.c_prob(),
        median: summary.median,
        rows,
    })
}
