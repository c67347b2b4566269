//! One-dimensional distribution models exposed through distribution
//! function, tail quantiles and an inverse-transform sampler.

pub mod normal;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};
use crate::numeric::{self, GaussLegendre};

/// JSON description of a model, e.g. `{"kind": "symmetric_power_law", "q": 4.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Survival min{1, t^{−p}} on [1, ∞).
    ParetoTail {
        p: f64,
    },
    /// Symmetric with P{|Y| > t} = (1+t)^{−q}.
    SymmetricPowerLaw {
        q: f64,
    },
    /// Quantile ((1−t)/2)^{−2/q}·log(2/(1−t)).
    UEnvelope {
        q: f64,
    },
    StandardNormal {},
    /// Symmetric with P{|H| > t} = t^{−exponent} for t ≥ 1.
    PureParetoH {
        exponent: f64,
    },
    /// Uniform distribution on the listed values.
    Empirical {
        sample: Vec<f64>,
    },
}

/// A validated distribution model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpec", into = "ModelSpec")]
pub struct QuantileModel {
    spec: ModelSpec,
    tail_exponent: f64,
}

impl TryFrom<ModelSpec> for QuantileModel {
    type Error = Error;

    fn try_from(spec: ModelSpec) -> Result<Self> {
        QuantileModel::new(spec)
    }
}

impl From<QuantileModel> for ModelSpec {
    fn from(m: QuantileModel) -> Self {
        m.spec
    }
}

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

/// Uniform on (0,1) from the top 53 bits, never 0 or 1.
#[inline]
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * TWO_POW_M53
}

#[inline]
fn signed(bits: u64, x: f64) -> f64 {
    if bits & 1 == 1 {
        -x
    } else {
        x
    }
}

impl QuantileModel {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let (spec, tail_exponent) = match spec {
            ModelSpec::ParetoTail { p } if p > 1.0 && p.is_finite() => (spec, p),
            ModelSpec::SymmetricPowerLaw { q } if q > 2.0 && q.is_finite() => (spec, q),
            ModelSpec::UEnvelope { q } if q > 2.0 && q.is_finite() => (spec, q / 2.0),
            ModelSpec::StandardNormal {} => (spec, f64::INFINITY),
            ModelSpec::PureParetoH { exponent } if exponent > 2.0 && exponent.is_finite() => {
                (spec, exponent)
            }
            ModelSpec::Empirical { mut sample } => {
                if sample.is_empty() || sample.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Config(
                        "empirical sample must be nonempty and finite".into(),
                    ));
                }
                sample.sort_by(f64::total_cmp);
                (ModelSpec::Empirical { sample }, f64::INFINITY)
            }
            other => {
                return Err(Error::Config(format!(
                    "invalid model parameters: {other:?}"
                )))
            }
        };
        Ok(QuantileModel {
            spec,
            tail_exponent,
        })
    }

    pub fn pareto_tail(p: f64) -> Result<Self> {
        Self::new(ModelSpec::ParetoTail { p })
    }

    pub fn symmetric_power_law(q: f64) -> Result<Self> {
        Self::new(ModelSpec::SymmetricPowerLaw { q })
    }

    pub fn u_envelope(q: f64) -> Result<Self> {
        Self::new(ModelSpec::UEnvelope { q })
    }

    pub fn standard_normal() -> Self {
        QuantileModel {
            spec: ModelSpec::StandardNormal {},
            tail_exponent: f64::INFINITY,
        }
    }

    pub fn pure_pareto_h(exponent: f64) -> Result<Self> {
        Self::new(ModelSpec::PureParetoH { exponent })
    }

    pub fn empirical(sample: Vec<f64>) -> Result<Self> {
        Self::new(ModelSpec::Empirical { sample })
    }

    /// The Rademacher distribution on {−1, +1}.
    pub fn rademacher() -> Self {
        Self::new(ModelSpec::Empirical {
            sample: vec![-1.0, 1.0],
        })
        .expect("valid sample")
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Supremum of the p for which E|X|^p is finite.
    pub fn tail_exponent(&self) -> f64 {
        self.tail_exponent
    }

    pub fn is_symmetric(&self) -> bool {
        match &self.spec {
            ModelSpec::ParetoTail { .. } | ModelSpec::UEnvelope { .. } => false,
            ModelSpec::Empirical { sample } => {
                let n = sample.len();
                let scale = sample
                    .iter()
                    .fold(0f64, |m, x| m.max(x.abs()))
                    .max(f64::MIN_POSITIVE);
                (0..n).all(|i| (sample[i] + sample[n - 1 - i]).abs() <= 1e-12 * scale)
            }
            _ => true,
        }
    }

    /// P{X ≤ x}.
    pub fn cdf(&self, x: f64) -> f64 {
        match &self.spec {
            ModelSpec::ParetoTail { p } => {
                if x < 1.0 {
                    0.0
                } else {
                    -(-p * x.ln()).exp_m1()
                }
            }
            ModelSpec::SymmetricPowerLaw { q } => {
                let h = 0.5 * (1.0 + x.abs()).powf(-q);
                if x >= 0.0 {
                    1.0 - h
                } else {
                    h
                }
            }
            ModelSpec::UEnvelope { .. } => 1.0 - self.sf(x),
            ModelSpec::StandardNormal {} => normal::cdf(x),
            ModelSpec::PureParetoH { exponent } => {
                if x <= -1.0 {
                    0.5 * (-x).powf(-exponent)
                } else if x < 1.0 {
                    0.5
                } else {
                    1.0 - 0.5 * x.powf(-exponent)
                }
            }
            ModelSpec::Empirical { sample } => {
                sample.partition_point(|&v| v <= x) as f64 / sample.len() as f64
            }
        }
    }

    /// P{X > x}.
    pub fn sf(&self, x: f64) -> f64 {
        match &self.spec {
            ModelSpec::ParetoTail { p } => x.max(1.0).powf(-p),
            ModelSpec::SymmetricPowerLaw { .. } | ModelSpec::PureParetoH { .. } => self.cdf(-x),
            ModelSpec::UEnvelope { q } => {
                let e = 2.0 / q;
                let x0 = 2f64.powf(e) * std::f64::consts::LN_2;
                if x <= x0 {
                    return 1.0;
                }
                // solve v^{-e} log(1/v) = x for v in (0, 1/2] on the log scale
                let target = x.ln();
                let g = |lv: f64| -e * lv + (-lv).ln();
                let mut lo = -std::f64::consts::LN_2;
                let mut hi = lo;
                while g(hi) < target {
                    hi *= 2.0;
                }
                while lo - hi > 1e-15 * hi.abs() {
                    let mid = 0.5 * (lo + hi);
                    if mid >= lo || mid <= hi {
                        break;
                    }
                    if g(mid) < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                2.0 * (0.5 * (lo + hi)).exp()
            }
            ModelSpec::StandardNormal {} => normal::sf(x),
            ModelSpec::Empirical { .. } => 1.0 - self.cdf(x),
        }
    }

    /// Generalized inverse F⁻¹(u) = inf{t : F(t) ≥ u}.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return domain(format!("quantile level must lie in (0,1), got {u}"));
        }
        Ok(if u > 0.5 {
            self.upper_quantile(1.0 - u)
        } else {
            self.lower_quantile(u)
        })
    }

    /// F⁻¹(1 − s), accurate for small `s`.
    pub fn upper_quantile(&self, s: f64) -> f64 {
        match &self.spec {
            ModelSpec::ParetoTail { p } => s.powf(-1.0 / p),
            ModelSpec::SymmetricPowerLaw { q } => {
                if s <= 0.5 {
                    (-(2.0 * s).ln() / q).exp_m1()
                } else {
                    -(-(2.0 * (1.0 - s)).ln() / q).exp_m1()
                }
            }
            ModelSpec::UEnvelope { q } => {
                let v = 0.5 * s;
                v.powf(-2.0 / q) * (1.0 / v).ln()
            }
            ModelSpec::StandardNormal {} => normal::upper_quantile(s),
            ModelSpec::PureParetoH { exponent } => {
                if s < 0.5 {
                    (2.0 * s).powf(-1.0 / exponent)
                } else {
                    -(2.0 * (1.0 - s)).powf(-1.0 / exponent)
                }
            }
            ModelSpec::Empirical { sample } => step_quantile(sample, 1.0 - s),
        }
    }

    /// F⁻¹(s), accurate for small `s`.
    pub fn lower_quantile(&self, s: f64) -> f64 {
        match &self.spec {
            ModelSpec::ParetoTail { p } => (-(-s).ln_1p() / p).exp(),
            ModelSpec::SymmetricPowerLaw { .. } => -self.upper_quantile(s),
            ModelSpec::UEnvelope { q } => {
                let v = 0.5 * (1.0 - s);
                v.powf(-2.0 / q) * (1.0 / v).ln()
            }
            ModelSpec::StandardNormal {} => normal::lower_quantile(s),
            ModelSpec::PureParetoH { exponent } => {
                if s <= 0.5 {
                    -(2.0 * s).powf(-1.0 / exponent)
                } else {
                    (2.0 * (1.0 - s)).powf(-1.0 / exponent)
                }
            }
            ModelSpec::Empirical { sample } => step_quantile(sample, s),
        }
    }

    /// Quantile used for smoothness checks: for empirical models the linear
    /// interpolation through the points ((i − 1/2)/N, x₍ᵢ₎), elsewhere the
    /// ordinary quantile.
    pub fn interpolated_quantile(&self, u: f64) -> f64 {
        match &self.spec {
            ModelSpec::Empirical { sample } => sample_quantile(sample, u),
            _ => {
                if u > 0.5 {
                    self.upper_quantile(1.0 - u)
                } else {
                    self.lower_quantile(u)
                }
            }
        }
    }

    fn interpolated_upper(&self, s: f64) -> f64 {
        match &self.spec {
            ModelSpec::Empirical { sample } => sample_quantile(sample, 1.0 - s),
            _ => self.upper_quantile(s),
        }
    }

    fn interpolated_lower(&self, s: f64) -> f64 {
        match &self.spec {
            ModelSpec::Empirical { sample } => sample_quantile(sample, s),
            _ => self.lower_quantile(s),
        }
    }

    /// Maps 64 random bits to a draw: 53 bits give a uniform level and the
    /// lowest bit picks the side for symmetric models.
    #[inline]
    pub fn draw(&self, bits: u64) -> f64 {
        let m = open_unit(bits);
        match &self.spec {
            ModelSpec::ParetoTail { p } => m.powf(-1.0 / p),
            ModelSpec::SymmetricPowerLaw { q } => signed(bits, power_minus_one(m, *q)),
            ModelSpec::UEnvelope { q } => {
                let v = 0.5 * m;
                v.powf(-2.0 / q) * (1.0 / v).ln()
            }
            ModelSpec::StandardNormal {} => signed(bits, -normal::lower_quantile(0.5 * m)),
            ModelSpec::PureParetoH { exponent } => signed(bits, m.powf(-1.0 / exponent)),
            ModelSpec::Empirical { sample } => {
                let i = ((m * sample.len() as f64) as usize).min(sample.len() - 1);
                sample[i]
            }
        }
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        self.draw(rng.next_u64())
    }

    /// Fills `out` with independent draws.
    pub fn fill<R: RngCore + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.spec {
            ModelSpec::SymmetricPowerLaw { q } if *q == 4.0 => {
                for x in out.iter_mut() {
                    let bits = rng.next_u64();
                    let m = open_unit(bits);
                    *x = signed(bits, 1.0 / m.sqrt().sqrt() - 1.0);
                }
            }
            ModelSpec::SymmetricPowerLaw { q } if *q == 3.0 => {
                for x in out.iter_mut() {
                    let bits = rng.next_u64();
                    let m = open_unit(bits);
                    *x = signed(bits, inv_cbrt(m) - 1.0);
                }
            }
            _ => {
                for x in out.iter_mut() {
                    *x = self.draw(rng.next_u64());
                }
            }
        }
    }

    /// ∫₀¹ g(F⁻¹(u)) du, where `growth` is the power at which g grows so the
    /// endpoint substitution can absorb the quantile singularity.
    pub fn expectation<G: Fn(f64) -> f64>(&self, g: G, growth: f64) -> f64 {
        if let ModelSpec::Empirical { sample } = &self.spec {
            return sample.iter().map(|&x| g(x)).sum::<f64>() / sample.len() as f64;
        }
        let ratio = if self.tail_exponent.is_finite() {
            growth / self.tail_exponent
        } else {
            0.0
        };
        if ratio >= 1.0 {
            return f64::INFINITY;
        }
        // d = w^k/2 turns a d^{-ratio} singularity into the polynomial w^{m-1}
        let m = (4.0 * (1.0 - ratio)).ceil().max(2.0);
        let k = m / (1.0 - ratio);
        let rule = gauss_rule();
        let mut total = 0.0;
        for side in [Side::Lower, Side::Upper] {
            total += rule.composite(
                |w| {
                    let d = 0.5 * w.powf(k);
                    if d <= 0.0 {
                        return 0.0;
                    }
                    let x = match side {
                        Side::Lower => self.lower_quantile(d),
                        Side::Upper => self.upper_quantile(d),
                    };
                    let v = g(x) * 0.5 * k * w.powf(k - 1.0);
                    if v.is_finite() {
                        v
                    } else {
                        0.0
                    }
                },
                0.0,
                1.0,
                QUAD_PANELS,
            );
        }
        total
    }

    /// E|X|^p, or +∞ when p reaches the tail exponent.
    pub fn moment(&self, p: f64) -> f64 {
        if p >= self.tail_exponent {
            return f64::INFINITY;
        }
        match self.spec {
            ModelSpec::ParetoTail { p: a } | ModelSpec::PureParetoH { exponent: a } => a / (a - p),
            ModelSpec::SymmetricPowerLaw { q } => {
                (q.ln() + ln_gamma(q - p) + ln_gamma(p + 1.0) - ln_gamma(q + 1.0)).exp()
            }
            ModelSpec::StandardNormal {} => normal::abs_moment(p),
            _ => self.expectation(|x| x.abs().powf(p), p),
        }
    }
}

#[derive(Clone, Copy)]
enum Side {
    Lower,
    Upper,
}

const QUAD_ORDER: usize = 20;
const QUAD_PANELS: usize = 250;

fn gauss_rule() -> &'static GaussLegendre {
    static RULE: std::sync::OnceLock<GaussLegendre> = std::sync::OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(QUAD_ORDER))
}

#[inline]
fn power_minus_one(m: f64, q: f64) -> f64 {
    m.powf(-1.0 / q) - 1.0
}

/// m^{−1/3} from a bit-level estimate and four Newton steps (within 2 ulp).
#[inline]
fn inv_cbrt(m: f64) -> f64 {
    let mut y = f64::from_bits(0x553e_f0ff_289d_d796u64.wrapping_sub(m.to_bits() / 3));
    for _ in 0..4 {
        y *= (4.0 - m * y * y * y) / 3.0;
    }
    y
}

fn step_quantile(sample: &[f64], u: f64) -> f64 {
    let n = sample.len();
    let i = (u * n as f64).ceil() as usize;
    sample[i.clamp(1, n) - 1]
}

/// Linear interpolation through the points ((i − 1/2)/N, x₍ᵢ₎) of an ascending sample.
pub fn sample_quantile(sample: &[f64], u: f64) -> f64 {
    let n = sample.len();
    let pos = u * n as f64 - 0.5;
    if pos <= 0.0 {
        return sample[0];
    }
    if pos >= (n - 1) as f64 {
        return sample[n - 1];
    }
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    sample[i] + f * (sample[i + 1] - sample[i])
}

/// Either one model shared by every coordinate or one model per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSet {
    Iid(QuantileModel),
    Each(Vec<QuantileModel>),
}

impl ModelSet {
    pub fn get(&self, i: usize) -> &QuantileModel {
        match self {
            ModelSet::Iid(m) => m,
            ModelSet::Each(v) => &v[i],
        }
    }

    /// Checks that the set can serve `n` coordinates.
    pub fn check_len(&self, n: usize) -> Result<()> {
        match self {
            ModelSet::Each(v) if v.len() != n => Err(Error::Config(format!(
                "model list has {} entries but there are {n} coefficients",
                v.len()
            ))),
            _ => Ok(()),
        }
    }
}

/// The coordinatewise quantile transform (F_i⁻¹(Φ(z_i)))_i.
pub fn gaussian_transform_sample(models: &[QuantileModel], z: &[f64]) -> Result<Vec<f64>> {
    if models.len() != z.len() {
        return domain(format!(
            "{} models but {} Gaussian coordinates",
            models.len(),
            z.len()
        ));
    }
    Ok(models
        .iter()
        .zip(z)
        .map(|(m, &z)| transform_one(m, z))
        .collect())
}

/// F⁻¹(Φ(z)) evaluated through whichever tail keeps full precision.
pub fn transform_one(model: &QuantileModel, z: f64) -> f64 {
    match model.spec {
        ModelSpec::StandardNormal {} => z,
        _ => {
            if z > 0.0 {
                model.upper_quantile(normal::cdf(-z))
            } else {
                model.lower_quantile(normal::cdf(z))
            }
        }
    }
}

/// Outcome of [`lipschitz_envelope`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEnvelope {
    pub passes: bool,
    pub smallest_cq: f64,
}

/// Smallest grid level at which the Lipschitz check is evaluated.
pub const LIPSCHITZ_MIN_LEVEL: f64 = 1e-12;

/// Checks Lip(F⁻¹, s) ≤ C_q·min{s, 1−s}^{−1−1/q} on a grid refined toward both
/// endpoints. The smallest admissible C_q on the grid is returned; the check
/// fails when the required constant is still growing over the outermost decade
/// of the grid on either side.
pub fn lipschitz_envelope(model: &QuantileModel, q: f64, grid: usize) -> Result<LipschitzEnvelope> {
    if grid < 1000 {
        return domain(format!("grid must be at least 1000, got {grid}"));
    }
    if !(q > 0.0) {
        return domain(format!("q must be positive, got {q}"));
    }
    let per_side = grid / 2;
    let levels = numeric::logspace(LIPSCHITZ_MIN_LEVEL, 0.5, per_side);
    let mut smallest = 0f64;
    let mut passes = true;
    for side in [Side::Lower, Side::Upper] {
        let mut outer = 0f64;
        let mut inner = 0f64;
        for &d in &levels {
            let h = 1e-3 * d;
            let (a, b) = match side {
                Side::Lower => (
                    model.interpolated_lower(d - h),
                    model.interpolated_lower(d + h),
                ),
                Side::Upper => (
                    model.interpolated_upper(d - h),
                    model.interpolated_upper(d + h),
                ),
            };
            let lip = (b - a).abs() / (2.0 * h);
            if !lip.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite quantile slope at level {d}"
                )));
            }
            let ratio = lip * d.powf(1.0 + 1.0 / q);
            smallest = smallest.max(ratio);
            if d <= 10.0 * LIPSCHITZ_MIN_LEVEL {
                outer = outer.max(ratio);
            } else if d <= 100.0 * LIPSCHITZ_MIN_LEVEL {
                inner = inner.max(ratio);
            }
        }
        if outer > 1.02 * inner && outer > 1e-300 {
            passes = false;
        }
    }
    Ok(LipschitzEnvelope {
        passes,
        smallest_cq: smallest,
    })
}
