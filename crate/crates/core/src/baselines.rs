//! Comparison functionals: Latała's moment functional, the optimized Markov
//! envelope, a nonuniform Berry–Esseen envelope and the BCR deviation bound.

use serde::{Deserialize, Serialize};

use crate::distributions::{normal, QuantileModel};
use crate::error::{config, domain, Error, Result};
use crate::numeric::GaussLegendre;

/// inf{t > 0 : Σ_i ln E[(|1 + X_i/t|^p + |1 − X_i/t|^p)/2] ≤ p}.
pub fn latala_norm(models: &[QuantileModel], p: f64, tol: f64) -> Result<f64> {
    if models.is_empty() {
        return domain("need at least one model");
    }
    if !(p >= 2.0 && p.is_finite()) {
        return domain(format!("p must be at least 2, got {p}"));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return domain(format!("tolerance must lie in (0,1), got {tol}"));
    }
    let mut groups: Vec<(&QuantileModel, f64)> = Vec::new();
    for m in models {
        if !m.is_symmetric() {
            return config(format!("model {:?} is not symmetric", m.spec()));
        }
        match groups.iter_mut().find(|(g, _)| *g == m) {
            Some(entry) => entry.1 += 1.0,
            None => groups.push((m, 1.0)),
        }
    }
    if groups.iter().any(|(m, _)| p >= m.tail_exponent()) {
        return Err(Error::Range(format!(
            "the p-th moment diverges for p = {p}"
        )));
    }
    let phi = |t: f64| -> f64 {
        groups
            .iter()
            .map(|(m, count)| {
                let e = m.expectation(
                    |x| 0.5 * ((1.0 + x / t).abs().powf(p) + (1.0 - x / t).abs().powf(p)),
                    p,
                );
                count * e.ln()
            })
            .sum()
    };
    let ok = |t: f64| {
        let v = phi(t);
        v.is_finite() && v <= p
    };
    let (mut lo, mut hi) = (1.0f64, 1.0f64);
    while ok(lo) {
        lo *= 0.5;
        if lo < 1e-300 {
            return Ok(0.0);
        }
    }
    while !ok(hi) {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Numerical(
                "no finite t satisfies the moment condition".into(),
            ));
        }
    }
    while hi / lo - 1.0 > tol {
        let mid = (lo * hi).sqrt();
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// p-grid for moment tables: geometric refinement towards the tail exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PGrid {
    pub points: usize,
    /// Smallest distance to the tail exponent, relative to its distance from 2.
    pub closest: f64,
    /// Upper end of the grid when every moment is finite.
    pub p_max: f64,
}

impl Default for PGrid {
    fn default() -> Self {
        PGrid {
            points: 300,
            closest: 1e-4,
            p_max: 200.0,
        }
    }
}

impl PGrid {
    pub fn values(&self, tail_exponent: f64) -> Result<Vec<f64>> {
        if self.points < 2 || !(self.closest > 0.0 && self.closest < 1.0) || !(self.p_max > 2.0) {
            return domain("p grid needs at least 2 points, closest in (0,1) and p_max > 2");
        }
        if tail_exponent <= 2.0 {
            return domain(format!(
                "tail exponent {tail_exponent} leaves no finite moments above 2"
            ));
        }
        let n = self.points;
        if tail_exponent.is_finite() {
            let rho = self.closest.powf(1.0 / (n - 1) as f64);
            Ok((0..n)
                .map(|k| tail_exponent - (tail_exponent - 2.0) * rho.powi(k as i32))
                .collect())
        } else {
            let r = (self.p_max / 2.0).powf(1.0 / (n - 1) as f64);
            Ok((0..n).map(|k| 2.0 * r.powi(k as i32)).collect())
        }
    }
}

/// E|X|^p on a p-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    pub model: QuantileModel,
    pub p: Vec<f64>,
    pub moments: Vec<f64>,
}

impl MomentTable {
    pub fn new(model: &QuantileModel, grid: &PGrid) -> Result<Self> {
        let p = grid.values(model.tail_exponent())?;
        let moments = p.iter().map(|&p| model.moment(p)).collect();
        Ok(MomentTable {
            model: model.clone(),
            p,
            moments,
        })
    }

    /// (min_p t^{−p} E|X|^p, minimizing p).
    pub fn envelope(&self, t: f64) -> Result<(f64, f64)> {
        if !(t > 1.0) {
            return domain(format!("t must exceed 1, got {t}"));
        }
        let lt = t.ln();
        let mut best = (f64::INFINITY, f64::NAN);
        for (&p, &m) in self.p.iter().zip(&self.moments) {
            if !(m.is_finite() && m > 0.0) {
                continue;
            }
            let v = (m.ln() - p * lt).exp();
            if v < best.0 {
                best = (v, p);
            }
        }
        Ok(best)
    }
}

/// min over the grid of t^{−p} E|X|^p.
pub fn markov_envelope(model: &QuantileModel, t: f64, grid: &PGrid) -> Result<f64> {
    MomentTable::new(model, grid)?.envelope(t).map(|(v, _)| v)
}

/// P{|X| > t}.
pub fn exact_two_sided_tail(model: &QuantileModel, t: f64) -> f64 {
    model.sf(t) + model.cdf(-t)
}

/// Cr (1+|x|)^{−r} (n^{−1/2} m3 + n^{−(r−2)/2} mr).
pub fn berry_esseen_nonuniform(r: f64, n: u64, x: f64, m3: f64, mr: f64, cr: f64) -> Result<f64> {
    if !(r >= 3.0 && r.is_finite()) {
        return domain(format!("r must be at least 3, got {r}"));
    }
    if n == 0 || !(m3 > 0.0 && mr > 0.0 && cr > 0.0) || !x.is_finite() {
        return domain("need n ≥ 1 and positive moments and constant");
    }
    let nf = n as f64;
    Ok(cr * (1.0 + x.abs()).powf(-r) * (m3 / nf.sqrt() + mr * nf.powf(-(r - 2.0) / 2.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationPair {
    pub deviation: f64,
    pub probability: f64,
}

/// (t n^{1/α}, C_α (log t / t)^α) for t > e.
pub fn bcr_bound(alpha: f64, n: u64, t: f64, c_alpha: f64) -> Result<DeviationPair> {
    if !(alpha > 0.0 && alpha.is_finite()) || n == 0 || !(c_alpha > 0.0) {
        return domain("need alpha > 0, n ≥ 1 and a positive constant");
    }
    if !(t > std::f64::consts::E && t.is_finite()) {
        return domain(format!("t must exceed e, got {t}"));
    }
    Ok(DeviationPair {
        deviation: t * (n as f64).powf(1.0 / alpha),
        probability: c_alpha * (t.ln() / t).powf(alpha),
    })
}

/// The linear-functional form: deviation C q^{−1} t² e^{t²/2q} n^{1/q},
/// probability C e^{−t²/2}.
pub fn bcr_linear_comparison(q: f64, n: u64, t: f64, c: f64) -> Result<DeviationPair> {
    if !(q > 0.0 && q.is_finite()) || n == 0 || !(c > 0.0) || !(t > 0.0 && t.is_finite()) {
        return domain("need q > 0, n ≥ 1, t > 0 and a positive constant");
    }
    Ok(DeviationPair {
        deviation: c / q * t * t * (t * t / (2.0 * q)).exp() * (n as f64).powf(1.0 / q),
        probability: c * (-0.5 * t * t).exp(),
    })
}

/// The t with c_prob e^{−t²/2} = probability.
pub fn gaussian_level(probability: f64, c_prob: f64) -> Result<f64> {
    if !(probability > 0.0 && probability < c_prob) {
        return domain(format!(
            "probability {probability} must lie in (0, {c_prob})"
        ));
    }
    Ok((2.0 * (c_prob / probability).ln()).sqrt())
}

/// E|Z + h|^p for standard normal Z.
fn shifted_normal_moment(rule: &GaussLegendre, p: f64, h: f64) -> f64 {
    let h = h.abs();
    let inv = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let f = |y: f64| {
        let a = y - h;
        let b = y + h;
        y.powf(p) * inv * ((-0.5 * a * a).exp() + (-0.5 * b * b).exp())
    };
    let lo = (h - 40.0).max(0.0);
    rule.composite(f, lo, h + 40.0, 80)
}

/// E|W|^p for W = Z′ + U·H with P{U = 1} = ε and P{|H| > t} = t^{−10}.
pub fn mixture_moment(p: f64, eps: f64) -> Result<f64> {
    if !(0.0..10.0).contains(&p) {
        return domain(format!("p must lie in [0, 10), got {p}"));
    }
    if !(0.0..=1.0).contains(&eps) {
        return domain(format!("eps must lie in [0,1], got {eps}"));
    }
    let h = QuantileModel::pure_pareto_h(10.0)?;
    let rule = GaussLegendre::new(20);
    let heavy = if eps > 0.0 {
        h.expectation(|x| shifted_normal_moment(&rule, p, x), p)
    } else {
        0.0
    };
    Ok((1.0 - eps) * normal::abs_moment(p) + eps * heavy)
}

/// (E|W|^p)^{1/p} / (1 + ε^{1/p}/(10 − p)^{1/p}).
pub fn mixture_moment_ratio(p: f64, eps: f64) -> Result<f64> {
    let norm = mixture_moment(p, eps)?.powf(1.0 / p);
    Ok(norm / (1.0 + (eps / (10.0 - p)).powf(1.0 / p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::ModelSet;
    use crate::montecarlo::{simulate_linear_sum, SimulationPlan};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs()
    }

    #[test]
    fn latala_rademacher_closed_form() {
        let v = latala_norm(&[QuantileModel::rademacher()], 2.0, 1e-10).unwrap();
        assert!(close(v, 0.395623106946075, 1e-8), "{v}");
        let e = QuantileModel::empirical(vec![-1.0, 1.0]).unwrap();
        let w = latala_norm(&[e], 2.0, 1e-10).unwrap();
        assert!(close(w, v, 1e-9));
    }

    #[test]
    fn latala_scaling() {
        let base = QuantileModel::empirical(vec![-2.0, -0.5, 0.5, 2.0]).unwrap();
        let scaled = QuantileModel::empirical(vec![-6.0, -1.5, 1.5, 6.0]).unwrap();
        let a = latala_norm(&[base.clone(), base], 3.0, 1e-10).unwrap();
        let b = latala_norm(&[scaled.clone(), scaled], 3.0, 1e-10).unwrap();
        assert!(close(b, 3.0 * a, 1e-8));
    }

    #[test]
    fn latala_errors() {
        let pareto = QuantileModel::pareto_tail(3.0).unwrap();
        assert!(matches!(
            latala_norm(&[pareto], 2.0, 1e-8),
            Err(Error::Config(_))
        ));
        let heavy = QuantileModel::symmetric_power_law(3.0).unwrap();
        assert!(matches!(
            latala_norm(&[heavy], 4.0, 1e-8),
            Err(Error::Range(_))
        ));
        assert!(latala_norm(&[], 2.0, 1e-8).is_err());
        assert!(latala_norm(&[QuantileModel::rademacher()], 1.5, 1e-8).is_err());
    }

    #[test]
    fn latala_sandwich() {
        let lower = (std::f64::consts::E - 1.0) / (2.0 * std::f64::consts::E.powi(2));
        let e = std::f64::consts::E;
        for &p in &[2.0, 4.0] {
            let heavy = QuantileModel::symmetric_power_law(p + 1.5).unwrap();
            for model in [QuantileModel::rademacher(), heavy] {
                for &n in &[1usize, 4, 16] {
                    let norm = latala_norm(&vec![model.clone(); n], p, 1e-8).unwrap();
                    let set = ModelSet::Iid(model.clone());
                    let s = simulate_linear_sum(
                        &set,
                        &vec![1.0; n],
                        &SimulationPlan::new(n as u64, 200_000),
                    )
                    .unwrap();
                    let xs: Vec<f64> = s
                        .sorted_sample()
                        .unwrap()
                        .iter()
                        .map(|x| x.abs().powf(p))
                        .collect();
                    let r = xs.len() as f64;
                    let mean = xs.iter().sum::<f64>() / r;
                    let se =
                        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0) / r).sqrt();
                    let hi = (mean + 3.0 * se).powf(1.0 / p);
                    let lo = (mean - 3.0 * se).max(0.0).powf(1.0 / p);
                    assert!(
                        hi >= lower * norm && lo <= e * norm,
                        "p={p} n={n} {:?}",
                        model.spec()
                    );
                }
            }
        }
    }

    #[test]
    fn latala_dominates_rademacher_l2() {
        for &n in &[1usize, 4, 16, 64] {
            let norm = latala_norm(&vec![QuantileModel::rademacher(); n], 2.0, 1e-10).unwrap();
            assert!(std::f64::consts::E * norm >= (n as f64).sqrt());
        }
    }

    #[test]
    fn moment_table_matches_closed_form() {
        let h = QuantileModel::pure_pareto_h(10.0).unwrap();
        let table = MomentTable::new(&h, &PGrid::default()).unwrap();
        for (&p, &m) in table.p.iter().zip(&table.moments) {
            if p < 9.9 {
                assert!(close(m, 10.0 / (10.0 - p), 1e-8), "p={p} {m}");
            }
        }
    }

    #[test]
    fn markov_pareto_example() {
        let h = QuantileModel::pure_pareto_h(10.0).unwrap();
        let v = markov_envelope(&h, 10.0, &PGrid::default()).unwrap();
        assert!(close(v, 6.259075216766395e-9, 0.05), "{v}");
        assert!(v >= 1e-10);
    }

    #[test]
    fn markov_dominates_and_decreases() {
        let grid = PGrid::default();
        for model in [
            QuantileModel::standard_normal(),
            QuantileModel::pure_pareto_h(10.0).unwrap(),
            QuantileModel::symmetric_power_law(5.0).unwrap(),
        ] {
            let table = MomentTable::new(&model, &grid).unwrap();
            let mut prev = f64::INFINITY;
            for k in 1..60 {
                let t = 1.0 + 0.25 * k as f64;
                let (env, _) = table.envelope(t).unwrap();
                assert!(
                    env >= exact_two_sided_tail(&model, t) * (1.0 - 1e-9),
                    "{:?} t={t}",
                    model.spec()
                );
                assert!(env <= prev * (1.0 + 1e-12));
                prev = env;
            }
        }
        let h = QuantileModel::pure_pareto_h(10.0).unwrap();
        let table = MomentTable::new(&h, &grid).unwrap();
        let mut prev = 0.0;
        for &t in &[10.0, 100.0, 1e3, 1e4] {
            let over = table.envelope(t).unwrap().0 / exact_two_sided_tail(&h, t);
            let shape = 10.0 * std::f64::consts::E * f64::ln(t);
            assert!(close(over, shape, 0.05), "t={t} {over} {shape}");
            assert!(over > prev);
            prev = over;
        }
        assert!(table.envelope(1.0).is_err());
    }

    #[test]
    fn berry_esseen_examples() {
        let v = berry_esseen_nonuniform(4.0, 16, 0.0, 2.0, 3.0, 1.0).unwrap();
        assert!(close(v, 2.0 / 4.0 + 3.0 / 16.0, 1e-15));
        let a = berry_esseen_nonuniform(3.0, 9, 0.0, 1.0, 1.0, 1.0).unwrap();
        assert!(close(a, 2.0 / 3.0, 1e-15));
        let b = berry_esseen_nonuniform(5.0, 9, 2.0, 1.0, 1.0, 1.0).unwrap();
        let c = berry_esseen_nonuniform(5.0, 9, -2.0, 1.0, 1.0, 1.0).unwrap();
        let d = berry_esseen_nonuniform(5.0, 9, 0.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(b, c);
        assert!(close(b, d * 3f64.powi(-5), 1e-14));
        assert!(berry_esseen_nonuniform(2.0, 9, 0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn bcr_examples() {
        let b = bcr_bound(3.0, 8, 5.0, 1.0).unwrap();
        assert!(close(b.deviation, 10.0, 1e-15));
        assert!(bcr_bound(3.0, 8, 2.0, 1.0).is_err());
        let mut prev = 1.0;
        for k in 1..50 {
            let t = 3.0 * 1.3f64.powi(k);
            let p = bcr_bound(2.5, 1, t, 1.0).unwrap().probability;
            assert!(p < prev);
            prev = p;
        }
        let lin = bcr_linear_comparison(4.0, 16, 2.0, 1.0).unwrap();
        assert!(close(lin.deviation, 0.25 * 4.0 * 0.5f64.exp() * 2.0, 1e-15));
    }

    #[test]
    fn bcr_exceeds_main_certificate_for_large_t() {
        use crate::certificates::{CertificateKind, DeviationCertificate};
        let q = 4.0;
        let cert = DeviationCertificate::from_tag(CertificateKind::Main, q, "e1:1").unwrap();
        for &t in &[1e3, 1e5, 1e8] {
            let b = bcr_bound(q, 1, t, 1.0).unwrap();
            let s = gaussian_level(b.probability, 1.0).unwrap();
            assert!(b.deviation >= cert.bound_at(s).unwrap(), "t={t}");
        }
    }

    #[test]
    fn normal_moments() {
        assert!(close(normal::abs_moment(2.0), 1.0, 1e-14));
        assert!(close(normal::abs_moment(4.0), 3.0, 1e-14));
        assert!(close(
            normal::abs_moment(1.0),
            (2.0 / std::f64::consts::PI).sqrt(),
            1e-14
        ));
    }

    #[test]
    fn mixture_moment_matches_simulation() {
        use rand::{Rng, SeedableRng};
        let h = QuantileModel::pure_pareto_h(10.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let eps = 0.1;
        let r = 400_000;
        let draws: Vec<f64> = (0..r)
            .map(|_| {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                let u = rng.random::<f64>() < eps;
                z + if u { h.sample(&mut rng) } else { 0.0 }
            })
            .collect();
        for &p in &[2.0, 3.0, 4.0] {
            let xs: Vec<f64> = draws.iter().map(|w| w.abs().powf(p)).collect();
            let mean = xs.iter().sum::<f64>() / r as f64;
            let se =
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / r as f64 / r as f64).sqrt();
            let exact = mixture_moment(p, eps).unwrap();
            assert!((mean - exact).abs() < 4.0 * se, "p={p} {mean} {exact} {se}");
        }
    }

    #[test]
    fn mixture_ratio_window() {
        for &eps in &[0.1, 0.01] {
            for k in 0..15 {
                let p = 2.0 + 0.5 * k as f64;
                let r = mixture_moment_ratio(p, eps).unwrap();
                assert!((0.25..=4.0).contains(&r), "eps={eps} p={p} {r}");
            }
        }
        assert!(mixture_moment(10.0, 0.1).is_err());
    }
}
