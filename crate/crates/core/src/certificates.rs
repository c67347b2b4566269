//! Deviation certificates for linear combinations of heavy-tailed variables.
//!
//! A certificate pairs a coefficient vector `a` with a bound family
//! `t ↦ B(t)` and the guarantee `P{|Σ a_i X_i − M| > B(t)} ≤ c_prob·e^{−t²/2}`.

use serde::{Deserialize, Serialize};

use crate::distributions::normal;
use crate::error::{config, domain, Error, Result};
use crate::norms::rearrangement;
use crate::special::ln_star;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    Main,
    SpecialDirection,
    AllDirections,
}

impl std::str::FromStr for CertificateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "main" => Ok(CertificateKind::Main),
            "special" | "special_direction" => Ok(CertificateKind::SpecialDirection),
            "all" | "all_directions" => Ok(CertificateKind::AllDirections),
            other => config(format!("unknown certificate kind {other:?}")),
        }
    }
}

/// Σ i^{−1+2/q} a_{[i]}² over the nonincreasing rearrangement of |a|.
pub fn lorentz_weight(a: &[f64], q: f64) -> f64 {
    weight_sorted(&rearrangement(a), q)
}

fn weight_sorted(sorted: &[f64], q: f64) -> f64 {
    let e = -1.0 + 2.0 / q;
    sorted
        .iter()
        .enumerate()
        .map(|(i, v)| ((i + 1) as f64).powf(e) * v * v)
        .sum()
}

/// cq^{1 + (1−2/q)·ln*(n, cq)}.
pub fn all_directions_coefficient(n: usize, q: f64, cq: f64) -> f64 {
    cq.powf(all_directions_exponent(n, q, cq))
}

fn all_directions_exponent(n: usize, q: f64, cq: f64) -> f64 {
    1.0 + (1.0 - 2.0 / q) * ln_star(n as f64, cq) as f64
}

/// Expand a coefficient tag into a vector.
///
/// Accepted tags: `e1:n`, `uniform:n` (all ones), `unit:n` (all n^{−1/2}),
/// `critical:n` (i^{−1/q}) and `critical(s):n` (i^{−1/s}).
pub fn coefficients_from_tag(tag: &str, q: f64) -> Result<Vec<f64>> {
    let (head, count) = match tag.rsplit_once(':') {
        Some(parts) => parts,
        None => return config(format!("coefficient tag {tag:?} lacks a ':n' suffix")),
    };
    let n: usize = match count.trim().parse() {
        Ok(n) if n >= 1 => n,
        _ => return config(format!("bad dimension in coefficient tag {tag:?}")),
    };
    let head = head.trim();
    let v = match head {
        "e1" => {
            let mut v = vec![0.0; n];
            v[0] = 1.0;
            v
        }
        "uniform" | "ones" => vec![1.0; n],
        "unit" => vec![(n as f64).powf(-0.5); n],
        "critical" => critical_direction(n, q),
        _ => match head
            .strip_prefix("critical(")
            .and_then(|s| s.strip_suffix(')'))
        {
            Some(s) => match s.trim().parse::<f64>() {
                Ok(s) if s > 0.0 => critical_direction(n, s),
                _ => return config(format!("bad exponent in coefficient tag {tag:?}")),
            },
            None => return config(format!("unknown coefficient tag {tag:?}")),
        },
    };
    Ok(v)
}

/// a_i = i^{−1/q}.
pub fn critical_direction(n: usize, q: f64) -> Vec<f64> {
    (1..=n).map(|i| (i as f64).powf(-1.0 / q)).collect()
}

/// JSON form of a certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSpec {
    pub kind: CertificateKind,
    pub q: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default = "one")]
    pub c_dev: f64,
    #[serde(default = "one")]
    pub c_prob: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iter_base: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CertificateSpec", into = "CertificateSpec")]
pub struct DeviationCertificate {
    kind: CertificateKind,
    q: f64,
    a: Vec<f64>,
    generator: Option<String>,
    c_dev: f64,
    c_prob: f64,
    iter_base: f64,
    sorted: Vec<f64>,
    norm2: f64,
    norm_q: f64,
    lorentz: f64,
}

impl DeviationCertificate {
    pub fn new(kind: CertificateKind, q: f64, a: Vec<f64>) -> Result<Self> {
        Self::build(kind, q, a, None)
    }

    pub fn from_tag(kind: CertificateKind, q: f64, tag: &str) -> Result<Self> {
        if !(q > 2.0 && q.is_finite()) {
            return domain(format!("q must exceed 2, got {q}"));
        }
        let a = coefficients_from_tag(tag, q)?;
        Self::build(kind, q, a, Some(tag.to_string()))
    }

    fn build(
        kind: CertificateKind,
        q: f64,
        a: Vec<f64>,
        generator: Option<String>,
    ) -> Result<Self> {
        if !(q > 2.0 && q.is_finite()) {
            return domain(format!("q must exceed 2, got {q}"));
        }
        if a.is_empty() || a.iter().any(|x| !x.is_finite()) {
            return domain("coefficients must be a nonempty finite vector");
        }
        if a.iter().all(|&x| x == 0.0) {
            return domain("coefficient vector is zero");
        }
        if kind == CertificateKind::SpecialDirection {
            let target = critical_direction(a.len(), q);
            if a.iter()
                .zip(&target)
                .any(|(x, y)| (x - y).abs() > 1e-12 * y)
            {
                return config("special-direction certificate needs a_i = i^(-1/q)");
            }
        }
        let sorted = rearrangement(&a);
        let norm2 = sorted.iter().map(|v| v * v).sum::<f64>().sqrt();
        let top = sorted[0];
        let norm_q = top
            * sorted
                .iter()
                .map(|v| (v / top).powf(q))
                .sum::<f64>()
                .powf(1.0 / q);
        let lorentz = weight_sorted(&sorted, q);
        Ok(DeviationCertificate {
            kind,
            q,
            a,
            generator,
            c_dev: 1.0,
            c_prob: 1.0,
            iter_base: 2.0,
            sorted,
            norm2,
            norm_q,
            lorentz,
        })
    }

    pub fn with_constants(mut self, c_dev: f64, c_prob: f64) -> Result<Self> {
        if !(c_dev > 0.0 && c_dev.is_finite() && c_prob > 0.0 && c_prob.is_finite()) {
            return domain(format!(
                "constants must be positive, got c_dev={c_dev}, c_prob={c_prob}"
            ));
        }
        self.c_dev = c_dev;
        self.c_prob = c_prob;
        Ok(self)
    }

    pub fn with_iter_base(mut self, base: f64) -> Result<Self> {
        if !(base > 1.0 && base.is_finite()) {
            return domain(format!("iteration base must exceed 1, got {base}"));
        }
        self.iter_base = base;
        Ok(self)
    }

    pub fn kind(&self) -> CertificateKind {
        self.kind
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.a
    }

    pub fn generator(&self) -> Option<&str> {
        self.generator.as_deref()
    }

    /// Nonincreasing rearrangement of |a|.
    pub fn rearranged(&self) -> &[f64] {
        &self.sorted
    }

    pub fn c_dev(&self) -> f64 {
        self.c_dev
    }

    pub fn c_prob(&self) -> f64 {
        self.c_prob
    }

    pub fn iter_base(&self) -> f64 {
        self.iter_base
    }

    pub fn norm2(&self) -> f64 {
        self.norm2
    }

    pub fn norm_q(&self) -> f64 {
        self.norm_q
    }

    pub fn lorentz_weight(&self) -> f64 {
        self.lorentz
    }

    /// Power of c_dev used by the bound (1 except for the all-directions kind).
    pub fn exponent(&self) -> f64 {
        match self.kind {
            CertificateKind::AllDirections => {
                all_directions_exponent(self.n(), self.q, self.iter_base)
            }
            _ => 1.0,
        }
    }

    /// The multiplier in front of t(·), i.e. c_dev raised to `exponent()`.
    pub fn multiplier(&self) -> f64 {
        self.c_dev.powf(self.exponent())
    }

    /// (light, heavy) with B(t) = multiplier·t·(light + e^{t²/2q}·heavy).
    pub fn terms(&self) -> (f64, f64) {
        let q = self.q;
        match self.kind {
            CertificateKind::Main => (self.norm2, self.lorentz.sqrt()),
            CertificateKind::SpecialDirection => {
                let n = self.n() as f64;
                (n.powf(0.5 - 1.0 / q), n.ln().powf(1.0 / q))
            }
            CertificateKind::AllDirections => (self.norm2, self.norm_q),
        }
    }

    /// B(t) with unit multiplier.
    pub fn shape_at(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t.is_finite()) {
            return domain(format!("t must be positive, got {t}"));
        }
        let (light, heavy) = self.terms();
        Ok(t * (light + (t * t / (2.0 * self.q)).exp() * heavy))
    }

    pub fn bound_at(&self, t: f64) -> Result<f64> {
        Ok(self.multiplier() * self.shape_at(t)?)
    }

    /// c_prob·e^{−t²/2}.
    pub fn probability_at(&self, t: f64) -> f64 {
        self.c_prob * (-0.5 * t * t).exp()
    }

    pub fn spec(&self) -> CertificateSpec {
        let (a, generator) = match &self.generator {
            Some(tag) => (None, Some(tag.clone())),
            None => (Some(self.a.clone()), None),
        };
        CertificateSpec {
            kind: self.kind,
            q: self.q,
            n: Some(self.n()),
            c_dev: self.c_dev,
            c_prob: self.c_prob,
            a,
            generator,
            iter_base: (self.kind == CertificateKind::AllDirections).then_some(self.iter_base),
        }
    }
}

impl TryFrom<CertificateSpec> for DeviationCertificate {
    type Error = Error;

    fn try_from(spec: CertificateSpec) -> Result<Self> {
        let cert = match (spec.a, spec.generator) {
            (Some(a), None) => DeviationCertificate::new(spec.kind, spec.q, a)?,
            (None, Some(tag)) => DeviationCertificate::from_tag(spec.kind, spec.q, &tag)?,
            (Some(_), Some(_)) => return config("give either `a` or `generator`, not both"),
            (None, None) => return config("certificate needs `a` or `generator`"),
        };
        if let Some(n) = spec.n {
            if n != cert.n() {
                return config(format!(
                    "n = {n} but the coefficient vector has length {}",
                    cert.n()
                ));
            }
        }
        let cert = cert.with_constants(spec.c_dev, spec.c_prob)?;
        match spec.iter_base {
            Some(b) => cert.with_iter_base(b),
            None => Ok(cert),
        }
    }
}

impl From<DeviationCertificate> for CertificateSpec {
    fn from(cert: DeviationCertificate) -> Self {
        cert.spec()
    }
}

/// ln(min{Φ(z), 1 − Φ(z)}), accurate far into the tail.
fn ln_tail_mass(z: f64) -> f64 {
    let x = z.abs();
    let m = normal::sf(x);
    if m > 1e-300 {
        return m.ln();
    }
    let x2 = x * x;
    -0.5 * x2 - (x * (2.0 * std::f64::consts::PI).sqrt()).ln()
        + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
}

/// m^{−2/q}·ln(1/m) with m = min{Φ(z), 1 − Φ(z)}.
pub fn envelope_weight(q: f64, z: f64) -> f64 {
    let lm = ln_tail_mass(z);
    (-2.0 / q * lm).exp() * (-lm)
}

/// (Σ a_i² m(z_i)^{−2/q} ln(1/m(z_i)))^{1/2}.
pub fn gradient_envelope(a: &[f64], q: f64, z: &[f64]) -> Result<f64> {
    if a.len() != z.len() {
        return domain(format!(
            "{} coefficients but {} Gaussian coordinates",
            a.len(),
            z.len()
        ));
    }
    Ok(a.iter()
        .zip(z)
        .map(|(ai, &zi)| ai * ai * envelope_weight(q, zi))
        .sum::<f64>()
        .sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Compression {
    /// Every stage, starting with the sorted input.
    pub levels: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Sum of |v|₁ over the stages that were compressed.
    pub l1_accumulated: f64,
    pub terminal: Vec<f64>,
}

/// Repeated dyadic level-set compression of a nonnegative vector.
pub fn dyadic_compress(x: &[f64], q: f64, min_dim: usize) -> Result<Compression> {
    if !(q > 2.0 && q.is_finite()) {
        return domain(format!("q must exceed 2, got {q}"));
    }
    if min_dim < 1 {
        return domain("min_dim must be at least 1");
    }
    if x.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return domain("entries must be finite and nonnegative");
    }
    if x.iter().all(|&v| v == 0.0) {
        return domain("cannot compress the zero vector");
    }
    let mut v = x.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let mut levels = vec![v];
    let mut l1 = 0.0;
    while levels.last().unwrap().len() > min_dim {
        let cur = levels.last().unwrap();
        l1 += cur.iter().sum::<f64>();
        levels.push(compress_stage(cur, q));
    }
    let terminal = levels.last().unwrap().clone();
    Ok(Compression {
        iterations: levels.len() - 1,
        levels,
        l1_accumulated: l1,
        terminal,
    })
}

fn compress_stage(v: &[f64], q: f64) -> Vec<f64> {
    let m = v.len();
    let big_j = (usize::BITS - (m - 1).leading_zeros()) as usize;
    let top = v[0];
    let half_q = q / 2.0;
    let mut sums = vec![0.0; big_j.max(1)];
    let mut j = 1;
    for &x in v {
        if x == 0.0 {
            break;
        }
        while j < big_j && x <= top * 0.5f64.powi(j as i32) {
            j += 1;
        }
        sums[j - 1] += (x / top).powf(half_q);
    }
    let mut w: Vec<f64> = sums
        .into_iter()
        .filter(|s| *s > 0.0)
        .map(|s| top * s.powf(2.0 / q))
        .collect();
    w.sort_by(|a, b| b.total_cmp(a));
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::QuantileModel;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn lorentz_weight_examples() {
        assert_eq!(lorentz_weight(&[0.0, 1.0, 0.0], 4.0), 1.0);
        let w = lorentz_weight(&[1.0; 4], 4.0);
        assert!(close(w, 2.784457050376173, 1e-14));
        let a = [0.3, -2.0, 1.1, 0.0, -0.7];
        let b = [-1.1, 0.7, 0.0, 2.0, -0.3];
        assert!(close(
            lorentz_weight(&a, 3.0),
            lorentz_weight(&b, 3.0),
            1e-15
        ));
    }

    #[test]
    fn main_bound_example() {
        let cert = DeviationCertificate::new(CertificateKind::Main, 4.0, vec![0.5; 4]).unwrap();
        let b = cert.bound_at(2.0).unwrap();
        assert!(close(b, 4.751170478571298, 1e-13), "{b}");
        assert!(cert.bound_at(1e-9).unwrap() < 1e-8);
        assert!(cert.bound_at(0.0).is_err());
    }

    #[test]
    fn main_bound_flat_direction_shape() {
        for &q in &[3.0, 4.0, 8.0] {
            for &n in &[10usize, 1000, 100_000] {
                let cert =
                    DeviationCertificate::from_tag(CertificateKind::Main, q, &format!("unit:{n}"))
                        .unwrap();
                let (light, heavy) = cert.terms();
                assert!(close(light, 1.0, 1e-12));
                let ratio = heavy / (n as f64).powf(1.0 / q - 0.5);
                assert!(
                    ratio >= 1.0 && ratio <= (q / 2.0).sqrt() + 1e-12,
                    "q={q} n={n} {ratio}"
                );
            }
        }
    }

    #[test]
    fn special_direction_bound() {
        let cert = DeviationCertificate::from_tag(
            CertificateKind::SpecialDirection,
            3.0,
            "critical:10000",
        )
        .unwrap();
        let n = 1e4f64;
        let expect =
            4.0 * (n.powf(0.5 - 1.0 / 3.0) + (16.0f64 / 6.0).exp() * n.ln().powf(1.0 / 3.0));
        assert!(close(cert.bound_at(4.0).unwrap(), expect, 1e-13));
        let bad = DeviationCertificate::new(CertificateKind::SpecialDirection, 3.0, vec![1.0, 1.0]);
        assert!(matches!(bad, Err(Error::Config(_))));
        let tagged = DeviationCertificate::from_tag(
            CertificateKind::SpecialDirection,
            4.0,
            "critical(4):50",
        );
        assert!(tagged.is_ok());
    }

    #[test]
    fn special_direction_beats_main_on_its_direction() {
        let main =
            DeviationCertificate::from_tag(CertificateKind::Main, 3.0, "critical:10000").unwrap();
        let special = DeviationCertificate::from_tag(
            CertificateKind::SpecialDirection,
            3.0,
            "critical:10000",
        )
        .unwrap();
        let t = 4.0;
        assert!(special.bound_at(t).unwrap() < main.bound_at(t).unwrap());
    }

    #[test]
    fn all_directions_coefficient_values() {
        assert_eq!(all_directions_coefficient(2, 4.0, 2.0), 2.0);
        assert!(close(
            all_directions_coefficient(1_000_000, 4.0, 2.0),
            2f64.powf(2.5),
            1e-15
        ));
        let mut prev = 0.0;
        for k in 0..40 {
            let n = (1.6f64.powi(k)) as usize + 1;
            let c = all_directions_coefficient(n, 5.0, 1.5);
            assert!(c >= prev);
            prev = c;
        }
        let cert =
            DeviationCertificate::from_tag(CertificateKind::AllDirections, 4.0, "uniform:1000000")
                .unwrap()
                .with_constants(2.0, 1.0)
                .unwrap();
        assert!(close(cert.multiplier(), 2f64.powf(2.5), 1e-15));
    }

    #[test]
    fn sign_vectors_heavy_terms_agree_up_to_constant() {
        for &q in &[2.5, 3.0, 4.0, 10.0] {
            for k in 1..200usize {
                let mut a = vec![0.0; k + 3];
                for (i, x) in a.iter_mut().enumerate().take(k) {
                    *x = if i % 3 == 0 { -1.0 } else { 1.0 };
                }
                let main = DeviationCertificate::new(CertificateKind::Main, q, a.clone()).unwrap();
                let all = DeviationCertificate::new(CertificateKind::AllDirections, q, a).unwrap();
                let r = main.terms().1.powi(2) / all.terms().1.powi(2);
                assert!(r >= 1.0 - 1e-12 && r <= q / 2.0 + 1e-12, "q={q} k={k} {r}");
                assert_eq!(main.terms().0, all.terms().0);
            }
        }
    }

    #[test]
    fn lorentz_weight_invariant_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.random_range(1..60);
            let q = rng.random_range(2.1..12.0);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let c = DeviationCertificate::new(CertificateKind::Main, q, a).unwrap();
            let harmonic: f64 = (1..=n).map(|i| (i as f64).powf(-1.0 + 2.0 / q)).sum();
            let top = c.rearranged()[0];
            assert!(c.lorentz_weight() <= c.norm2().powi(2) * harmonic * (1.0 + 1e-12));
            assert!(c.lorentz_weight() >= top * top * (1.0 - 1e-12));
        }
    }

    #[test]
    fn construction_errors() {
        assert!(DeviationCertificate::new(CertificateKind::Main, 2.0, vec![1.0]).is_err());
        assert!(DeviationCertificate::new(CertificateKind::Main, 3.0, vec![0.0, 0.0]).is_err());
        assert!(DeviationCertificate::new(CertificateKind::Main, 3.0, vec![]).is_err());
        let c = DeviationCertificate::new(CertificateKind::Main, 3.0, vec![1.0]).unwrap();
        assert!(c.clone().with_constants(0.0, 1.0).is_err());
        assert!(c.clone().with_constants(1.0, -1.0).is_err());
        assert!(c.with_iter_base(1.0).is_err());
        assert!(coefficients_from_tag("bogus:3", 3.0).is_err());
        assert!(coefficients_from_tag("unit", 3.0).is_err());
        assert!(coefficients_from_tag("unit:0", 3.0).is_err());
        assert!(coefficients_from_tag("critical(x):3", 3.0).is_err());
        assert_eq!(
            coefficients_from_tag("e1:3", 3.0).unwrap(),
            vec![1.0, 0.0, 0.0]
        );
        assert_eq!(
            "special".parse::<CertificateKind>().unwrap(),
            CertificateKind::SpecialDirection
        );
    }

    #[test]
    fn json_round_trip() {
        let c = DeviationCertificate::from_tag(CertificateKind::AllDirections, 4.0, "critical:20")
            .unwrap()
            .with_constants(1.7, 3.0)
            .unwrap()
            .with_iter_base(2.5)
            .unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"generator\":\"critical:20\""));
        let back: DeviationCertificate = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        let d =
            DeviationCertificate::new(CertificateKind::Main, 3.0, vec![0.1, -0.4, 2.0]).unwrap();
        let back: DeviationCertificate =
            serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
        let bad = r#"{"kind":"main","q":3.0,"a":[1.0],"extra":1}"#;
        assert!(serde_json::from_str::<DeviationCertificate>(bad).is_err());
        let mismatch = r#"{"kind":"main","q":3.0,"n":2,"a":[1.0]}"#;
        assert!(serde_json::from_str::<DeviationCertificate>(mismatch).is_err());
        let minimal: DeviationCertificate =
            serde_json::from_str(r#"{"kind":"main","q":4,"generator":"unit:4"}"#).unwrap();
        assert!(close(
            minimal.bound_at(2.0).unwrap(),
            4.751170478571298,
            1e-13
        ));
    }

    #[test]
    fn gradient_envelope_examples() {
        let a = [0.3, -1.2, 2.0];
        let v = gradient_envelope(&a, 4.0, &[0.0; 3]).unwrap();
        let norm2 = (0.09f64 + 1.44 + 4.0).sqrt();
        assert!(close(
            v,
            norm2 * (2f64.sqrt() * std::f64::consts::LN_2).sqrt(),
            1e-14
        ));
        let v = gradient_envelope(&[1.0], 2.0, &[0.0]).unwrap();
        assert!(close(v, (2.0 * std::f64::consts::LN_2).sqrt(), 1e-15));
        assert!(gradient_envelope(&a, 4.0, &[0.0]).is_err());
        let mut prev = 0.0;
        for k in 0..400 {
            let z = k as f64 * 0.1;
            let w = envelope_weight(3.0, z);
            assert!(w.is_finite() && w >= prev, "z={z}");
            assert_eq!(w, envelope_weight(3.0, -z));
            prev = w;
        }
    }

    fn ks_statistic(mut x: Vec<f64>, mut y: Vec<f64>) -> f64 {
        x.sort_by(f64::total_cmp);
        y.sort_by(f64::total_cmp);
        let (n, m) = (x.len() as f64, y.len() as f64);
        let (mut i, mut j, mut d) = (0, 0, 0f64);
        while i < x.len() && j < y.len() {
            let v = x[i].min(y[j]);
            while i < x.len() && x[i] <= v {
                i += 1;
            }
            while j < y.len() && y[j] <= v {
                j += 1;
            }
            d = d.max((i as f64 / n - j as f64 / m).abs());
        }
        d
    }

    #[test]
    fn gradient_envelope_matches_u_envelope_law() {
        let q = 3.0;
        let a = [1.0, -0.5, 0.25, 2.0];
        let model = QuantileModel::u_envelope(q).unwrap();
        let r = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let from_z: Vec<f64> = (0..r)
            .map(|_| {
                let z: Vec<f64> = (0..a.len()).map(|_| rng.sample(StandardNormal)).collect();
                gradient_envelope(&a, q, &z).unwrap()
            })
            .collect();
        let from_u: Vec<f64> = (0..r)
            .map(|_| {
                a.iter()
                    .map(|ai| ai * ai * model.sample(&mut rng))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let d = ks_statistic(from_z, from_u);
        let scaled = d * (r as f64 / 2.0).sqrt();
        assert!(scaled < 4.0, "KS scaled statistic {scaled}");
    }

    #[test]
    fn compress_flat_and_single() {
        let c = dyadic_compress(&[1.0; 16], 4.0, 1).unwrap();
        assert_eq!(c.iterations, 1);
        assert!(close(c.terminal[0], 4.0, 1e-14));
        assert_eq!(c.terminal.len(), 1);
        assert!(close(c.l1_accumulated, 16.0, 1e-15));
        let c = dyadic_compress(&[0.0, 0.0, 3.5, 0.0], 3.0, 1).unwrap();
        assert_eq!(c.iterations, 1);
        assert_eq!(c.terminal, vec![3.5]);
        let c = dyadic_compress(&[2.0], 3.0, 1).unwrap();
        assert_eq!(c.iterations, 0);
        assert!(dyadic_compress(&[0.0, 0.0], 3.0, 1).is_err());
        assert!(dyadic_compress(&[1.0, -1.0], 3.0, 1).is_err());
        assert!(dyadic_compress(&[1.0], 3.0, 0).is_err());
    }

    #[test]
    fn compress_critical_direction() {
        let q = 4.0;
        let x: Vec<f64> = (1..=1024).map(|i| (i as f64).powf(-2.0 / q)).collect();
        let c = dyadic_compress(&x, q, 1).unwrap();
        assert!(c.iterations >= 2, "{}", c.iterations);
        assert!(c.terminal.iter().sum::<f64>() <= x.iter().sum::<f64>());
        for w in c.levels.windows(2) {
            assert!(w[1].len() <= ((w[0].len() as f64).log2().ceil() as usize).max(1));
        }
    }

    #[test]
    fn compress_residual_goes_to_last_level() {
        let c = dyadic_compress(&[1.0, 1e-6, 1e-9, 1e-12], 4.0, 2).unwrap();
        assert_eq!(c.levels[1].len(), 2);
        let tail = (1e-12f64 + 1e-18 + 1e-24).sqrt();
        assert!(close(c.levels[1][1], tail, 1e-12));
    }

    fn norm_p(v: &[f64], p: f64) -> f64 {
        v.iter().map(|x| x.powf(p)).sum::<f64>().powf(1.0 / p)
    }

    #[test]
    fn compress_contractions_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let n = rng.random_range(1..300);
            let q = rng.random_range(2.05..9.0);
            let x: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.random::<f64>() < 0.2 {
                        0.0
                    } else {
                        rng.random::<f64>().powi(4) * 10.0
                    }
                })
                .collect();
            if x.iter().all(|&v| v == 0.0) {
                continue;
            }
            let c = dyadic_compress(&x, q, 1).unwrap();
            for s in c.levels.windows(2) {
                let (v, w) = (&s[0], &s[1]);
                assert!(w.iter().sum::<f64>() <= v.iter().sum::<f64>() + 1e-9);
                assert!(norm_p(w, q / 2.0) <= norm_p(v, q / 2.0) + 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn bound_monotone_and_homogeneous(
            a in proptest::collection::vec(-5.0f64..5.0, 1..20),
            q in 2.2f64..10.0,
            s in 0.1f64..10.0,
            t in 0.05f64..6.0,
        ) {
            prop_assume!(a.iter().any(|x| x.abs() > 1e-6));
            for kind in [CertificateKind::Main, CertificateKind::AllDirections] {
                let c = DeviationCertificate::new(kind, q, a.clone()).unwrap().with_constants(1.3, 1.0).unwrap();
                let scaled: Vec<f64> = a.iter().map(|x| x * s).collect();
                let cs = DeviationCertificate::new(kind, q, scaled).unwrap().with_constants(1.3, 1.0).unwrap();
                let b = c.bound_at(t).unwrap();
                prop_assert!((cs.bound_at(t).unwrap() - s * b).abs() <= 1e-10 * s * b);
                prop_assert!(c.bound_at(t * 1.01).unwrap() > b);
            }
            let sp = DeviationCertificate::new(CertificateKind::SpecialDirection, q, critical_direction(a.len(), q)).unwrap();
            prop_assert!(sp.bound_at(t * 1.01).unwrap() > sp.bound_at(t).unwrap());
        }

        #[test]
        fn lorentz_weight_rearrangement_invariant(
            a in proptest::collection::vec(-5.0f64..5.0, 1..30),
            q in 2.1f64..10.0,
        ) {
            let mut b: Vec<f64> = a.iter().rev().map(|x| -x).collect();
            let mid = b.len() / 2;
            b.rotate_left(mid);
            let (wa, wb) = (lorentz_weight(&a, q), lorentz_weight(&b, q));
            prop_assert!((wa - wb).abs() <= 1e-12 * wa.max(1.0));
        }
    }
}
