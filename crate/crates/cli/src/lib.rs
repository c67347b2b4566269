//! Command-line front end: builds models and certificates from flags or a
//! JSON config, runs the computation and writes a CSV or JSON report.
//!
//! Exit codes: 0 on success, 1 when a verification or calibration fails,
//! 2 on configuration and input errors.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use polycert::baselines::{berry_esseen_nonuniform, MomentTable, PGrid};
use polycert::certificates::{coefficients_from_tag, CertificateKind, DeviationCertificate};
use polycert::distributions::{normal, ModelSet, QuantileModel};
use polycert::montecarlo::{
    calibrate, simulate_linear_sum, tail_estimate, verify_certificate, verify_summary, Side,
    SimulationPlan,
};
use polycert::norms::{
    dual_norm_rq, lorentz_comparison, poisson_hull_norm, primal_norm_rq, PoissonMethod,
    PoissonNormParams, PrimalMethod, RQParams,
};
use polycert::order_stats::{
    orderstat_envelope, trimmed_sum_bound, EnvelopeParams, TrimmedBoundVariant,
};
use polycert::special::{c0_search, xi_inverse, xi_inverse_bound, XiKind};

#[derive(Debug, Parser)]
#[command(
    name = "polycert",
    version,
    about = "Deviation certificates for heavy-tailed linear combinations"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Emit JSON instead of CSV.
    #[arg(long, global = true)]
    json: bool,
    /// Override the simulation seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the number of replications.
    #[arg(long, global = true)]
    replications: Option<u64>,
    /// Worker threads (does not change results).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Numerical and closed-form inverses of ξ₁, ξ₂.
    Xi {
        #[arg(long, default_value = "xi2")]
        kind: String,
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_hyphen_values = true
        )]
        y: Vec<f64>,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// The constant C₀.
    C0 {
        #[arg(long, default_value_t = 2000)]
        grid: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Order-statistic envelopes.
    Orderstats {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        closed_form: bool,
    },
    /// Bounds for trimmed sums of order statistics.
    Trimmed {
        /// Pareto exponent for a pareto_tail model.
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        j: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        /// quadrature, replacio, glptj or pareto_closed.
        #[arg(long, default_value = "quadrature")]
        variant: String,
        /// Constant for pareto_closed.
        #[arg(long)]
        c: Option<f64>,
    },
    /// The polytope norm (rq) or the Poisson-hull norm (poisson, config only).
    Norm {
        #[arg(long, default_value = "rq")]
        kind: String,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Vec<f64>,
    },
    /// Evaluate a certificate bound.
    Bound {
        #[arg(long, default_value = "main")]
        kind: String,
        #[arg(long)]
        q: Option<f64>,
        /// Coefficient tag such as unit:100 or critical:50.
        #[arg(long)]
        coeff: Option<String>,
        /// Explicit coefficients.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        a: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        t: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        cdev: f64,
        #[arg(long, default_value_t = 1.0)]
        cprob: f64,
        #[arg(long)]
        iter_base: Option<f64>,
    },
    /// Simulate a linear sum and estimate exceedance probabilities.
    Simulate,
    /// Calibrate c_dev for a certificate.
    Calibrate {
        /// Write the calibrated certificate here.
        #[arg(long)]
        cert_out: Option<PathBuf>,
    },
    /// Verify a certificate on a fresh simulation.
    Verify {
        /// Replace the certificate's c_dev (0 is allowed).
        #[arg(long)]
        cdev: Option<f64>,
    },
    /// Compare the certificate with Markov, Berry–Esseen and BCR.
    Compare,
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

impl From<polycert::Error> for Failure {
    fn from(e: polycert::Error) -> Self {
        input_error(e.to_string())
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Coefficients given either as a tag or as an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficients {
    Tag(String),
    List(Vec<f64>),
}

impl Coefficients {
    fn resolve(&self, q: Option<f64>) -> Outcome<Vec<f64>> {
        match self {
            Coefficients::List(v) => Ok(v.clone()),
            Coefficients::Tag(tag) => {
                let q = match q {
                    Some(q) => q,
                    None if tag.trim_start().starts_with("critical:") => {
                        return Err(input_error(
                            "tag `critical:n` needs q; write `critical(q):n`",
                        ))
                    }
                    None => f64::NAN,
                };
                Ok(coefficients_from_tag(tag, q)?)
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub models: ModelSet,
    pub coefficients: Coefficients,
    pub plan: SimulationPlan,
    pub thresholds: Vec<f64>,
    #[serde(default = "two_sided")]
    pub side: Side,
}

fn two_sided() -> Side {
    Side::TwoSidedAboutMedian
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    pub certificate: DeviationCertificate,
    pub models: ModelSet,
    pub plan: SimulationPlan,
    pub t_grid: Vec<f64>,
    pub c_prob_target: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub certificate: DeviationCertificate,
    pub models: ModelSet,
    pub plan: SimulationPlan,
    pub t_grid: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrimmedConfig {
    pub model: QuantileModel,
    pub n: usize,
    pub j: usize,
    pub k: usize,
    pub lambda: f64,
    pub variant: TrimmedBoundVariant,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonConfig {
    pub params: PoissonNormParams,
    pub method: PoissonMethod,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    pub certificate: DeviationCertificate,
    pub t_grid: Vec<f64>,
}

/// Sum n^{−1/2} Σ X_i of `n` i.i.d. copies of `model`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub model: QuantileModel,
    pub n: usize,
    pub q: f64,
    pub t_grid: Vec<f64>,
    pub plan: SimulationPlan,
    #[serde(default = "one")]
    pub c_dev: f64,
    #[serde(default = "one")]
    pub c_prob: f64,
    #[serde(default = "one")]
    pub c_r: f64,
    #[serde(default = "one")]
    pub c_alpha: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiRow {
    pub kind: String,
    pub y: f64,
    pub inverse: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C0Row {
    pub argmax: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub k: usize,
    pub top: f64,
    pub bottom: f64,
    pub bottom_margin: f64,
    pub joint: f64,
    pub renyi: f64,
    pub renyi_linear: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrimmedRow {
    pub variant: String,
    pub threshold: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RqRow {
    pub primal: f64,
    pub dual: f64,
    pub dual_restricted: f64,
    pub lorentz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonRow {
    pub value: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub t: f64,
    pub bound: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRow {
    pub threshold: f64,
    pub median: f64,
    pub successes: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub t: f64,
    pub threshold: f64,
    pub mc_tail: f64,
    pub markov: Option<f64>,
    pub berry_esseen: Option<f64>,
    pub bcr: Option<f64>,
    pub certificate: f64,
}

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn read_config<C: DeserializeOwned>(path: Option<&Path>) -> Outcome<C> {
    let path = path.ok_or_else(|| input_error("this command needs --config <path>"))?;
    let text = fs::read_to_string(path)
        .map_err(|e| input_error(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| input_error(format!("config {}: {e}", path.display())))
}

fn apply_overrides(plan: &mut SimulationPlan, common: &Common) {
    if let Some(s) = common.seed {
        plan.seed = s;
    }
    if let Some(r) = common.replications {
        plan.replications = r;
    }
    if let Some(w) = common.threads {
        plan.worker_hint = w.max(1);
    }
}

fn need<T>(v: Option<T>, flag: &str) -> Outcome<T> {
    v.ok_or_else(|| input_error(format!("missing --{flag} (or give --config)")))
}

fn execute(cli: &Cli) -> Outcome<i32> {
    let common = &cli.common;
    let cfg = common.config.as_deref();
    let mut code = 0;
    let rows: Vec<Value> = match &cli.command {
        Command::Xi { kind, y, tol } => {
            let xk = match kind.to_ascii_lowercase().as_str() {
                "xi1" | "1" => XiKind::Xi1,
                "xi2" | "2" => XiKind::Xi2,
                other => return Err(input_error(format!("unknown xi kind {other:?}"))),
            };
            let mut out = Vec::new();
            for &yv in y {
                out.push(XiRow {
                    kind: kind.to_ascii_lowercase(),
                    y: yv,
                    inverse: xi_inverse(xk, yv, *tol)?,
                    bound: xi_inverse_bound(xk, yv)?,
                });
            }
            to_values(&out)?
        }
        Command::C0 { grid, tol } => {
            let c = c0_search(*grid, *tol)?;
            to_values(&[C0Row {
                argmax: c.argmax,
                value: c.value,
            }])?
        }
        Command::Orderstats { n, t, closed_form } => {
            let params = match cfg {
                Some(_) => read_config::<EnvelopeParams>(cfg)?,
                None => {
                    let mut p = EnvelopeParams::new(need(*n, "n")?, need(*t, "t")?);
                    p.closed_form = *closed_form;
                    p
                }
            };
            let env = orderstat_envelope(&params)?;
            let joint = env.joint();
            let out: Vec<EnvelopeRow> = (0..params.n)
                .map(|i| EnvelopeRow {
                    k: i + 1,
                    top: env.top[i],
                    bottom: env.bottom[i],
                    bottom_margin: env.bottom_margin[i],
                    joint: joint[i],
                    renyi: env.renyi[i],
                    renyi_linear: env.renyi_linear[i],
                })
                .collect();
            to_values(&out)?
        }
        Command::Trimmed {
            p,
            n,
            j,
            k,
            lambda,
            variant,
            c,
        } => {
            let config = match cfg {
                Some(_) => read_config::<TrimmedConfig>(cfg)?,
                None => {
                    let variant = match variant.as_str() {
                        "quadrature" => TrimmedBoundVariant::Quadrature {},
                        "replacio" => TrimmedBoundVariant::Replacio {},
                        "glptj" => TrimmedBoundVariant::Glptj {},
                        "pareto_closed" => TrimmedBoundVariant::ParetoClosed { c: need(*c, "c")? },
                        other => {
                            return Err(input_error(format!(
                                "variant {other:?} needs --config (or is unknown)"
                            )))
                        }
                    };
                    TrimmedConfig {
                        model: QuantileModel::pareto_tail(need(*p, "p")?)?,
                        n: need(*n, "n")?,
                        j: need(*j, "j")?,
                        k: need(*k, "k")?,
                        lambda: need(*lambda, "lambda")?,
                        variant,
                    }
                }
            };
            let b = trimmed_sum_bound(
                &config.model,
                config.n,
                config.j,
                config.k,
                config.lambda,
                config.variant,
            )?;
            let name = serde_json::to_value(config.variant)
                .ok()
                .and_then(|v| v.get("kind").and_then(Value::as_str).map(str::to_string))
                .unwrap_or_default();
            to_values(&[TrimmedRow {
                variant: name,
                threshold: b.threshold,
                probability: b.probability,
            }])?
        }
        Command::Norm { kind, r, q, x } => match kind.as_str() {
            "rq" => {
                if x.is_empty() {
                    return Err(input_error("missing --x"));
                }
                let (r, q) = (need(*r, "r")?, need(*q, "q")?);
                let params = RQParams::new(r, q, x.len())?;
                to_values(&[RqRow {
                    primal: primal_norm_rq(x, &params, PrimalMethod::Lp)?,
                    dual: dual_norm_rq(x, &params, false)?,
                    dual_restricted: dual_norm_rq(x, &params, true)?,
                    lorentz: lorentz_comparison(x, r, q),
                }])?
            }
            "poisson" => {
                let config: PoissonConfig = read_config(cfg)?;
                let est = poisson_hull_norm(&config.params, config.method)?;
                to_values(&[PoissonRow {
                    value: est.value,
                    half_width: est.half_width,
                }])?
            }
            other => return Err(input_error(format!("unknown norm kind {other:?}"))),
        },
        Command::Bound {
            kind,
            q,
            coeff,
            a,
            t,
            cdev,
            cprob,
            iter_base,
        } => {
            let (cert, grid) = match cfg {
                Some(_) => {
                    let b: BoundConfig = read_config(cfg)?;
                    (b.certificate, b.t_grid)
                }
                None => {
                    let kind: CertificateKind = kind.parse()?;
                    let q = need(*q, "q")?;
                    let cert = match (coeff, a.is_empty()) {
                        (Some(tag), true) => DeviationCertificate::from_tag(kind, q, tag)?,
                        (None, false) => DeviationCertificate::new(kind, q, a.clone())?,
                        _ => return Err(input_error("give exactly one of --coeff and --a")),
                    };
                    let mut cert = cert.with_constants(*cdev, *cprob)?;
                    if let Some(b) = iter_base {
                        cert = cert.with_iter_base(*b)?;
                    }
                    if t.is_empty() {
                        return Err(input_error("missing --t"));
                    }
                    (cert, t.clone())
                }
            };
            let mut out = Vec::new();
            for &tv in &grid {
                out.push(BoundRow {
                    t: tv,
                    bound: cert.bound_at(tv)?,
                    probability: cert.probability_at(tv),
                });
            }
            to_values(&out)?
        }
        Command::Simulate => {
            let mut config: SimulateConfig = read_config(cfg)?;
            apply_overrides(&mut config.plan, common);
            let a = config.coefficients.resolve(None)?;
            let summary = simulate_linear_sum(&config.models, &a, &config.plan)?;
            let mut out = Vec::new();
            for &thr in &config.thresholds {
                let e = tail_estimate(&summary, thr, config.side)?;
                out.push(SimulateRow {
                    threshold: thr,
                    median: summary.median,
                    successes: e.successes,
                    trials: e.trials,
                    p_hat: e.p_hat,
                    ci_low: e.ci_low,
                    ci_high: e.ci_high,
                });
            }
            to_values(&out)?
        }
        Command::Calibrate { cert_out } => {
            let mut config: CalibrateConfig = read_config(cfg)?;
            apply_overrides(&mut config.plan, common);
            let res = calibrate(
                &config.certificate,
                &config.models,
                &config.plan,
                &config.t_grid,
                config.c_prob_target,
            )?;
            eprintln!(
                "c_dev = {:.16e}, c_prob = {:.16e}, feasible = {}",
                res.c_dev, res.c_prob, res.feasible
            );
            if let Some(path) = cert_out {
                let cert = config
                    .certificate
                    .clone()
                    .with_constants(res.c_dev, res.c_prob)?;
                let text =
                    serde_json::to_string_pretty(&cert).map_err(|e| input_error(e.to_string()))?;
                fs::write(path, text + "\n")
                    .map_err(|e| input_error(format!("cannot write {}: {e}", path.display())))?;
            }
            if !res.feasible {
                code = 1;
            }
            to_values(&res.grid)?
        }
        Command::Verify { cdev } => {
            let mut config: VerifyConfig = read_config(cfg)?;
            apply_overrides(&mut config.plan, common);
            let rep = match cdev {
                Some(c) => {
                    let summary = simulate_linear_sum(
                        &config.models,
                        config.certificate.coefficients(),
                        &config.plan,
                    )?;
                    verify_summary(&config.certificate, &summary, &config.t_grid, *c)?
                }
                None => verify_certificate(
                    &config.certificate,
                    &config.models,
                    &config.plan,
                    &config.t_grid,
                )?,
            };
            if !rep.passed() {
                code = 1;
            }
            to_values(&rep.rows)?
        }
        Command::Compare => {
            let mut config: CompareConfig = read_config(cfg)?;
            apply_overrides(&mut config.plan, common);
            to_values(&compare(&config)?)?
        }
    };
    emit(&rows, common)?;
    Ok(code)
}

fn compare(config: &CompareConfig) -> Outcome<Vec<CompareRow>> {
    let n = config.n;
    if n == 0 {
        return Err(input_error("n must be at least 1"));
    }
    let model = &config.model;
    if !model.is_symmetric() {
        return Err(input_error("compare needs a symmetric model"));
    }
    let cert =
        DeviationCertificate::from_tag(CertificateKind::Main, config.q, &format!("unit:{n}"))?
            .with_constants(config.c_dev, config.c_prob)?;
    let summary = simulate_linear_sum(
        &ModelSet::Iid(model.clone()),
        cert.coefficients(),
        &config.plan,
    )?;
    let grid = PGrid::default();
    let table = MomentTable::new(model, &grid)?;
    let sample = summary.sorted_sample();
    let m2 = model.moment(2.0);
    let sigma = m2.sqrt();
    let m3 = model.moment(3.0) / (m2 * sigma);
    let alpha = model.tail_exponent();
    let nf = n as f64;
    let mut out = Vec::new();
    for &t in &config.t_grid {
        let x = cert.bound_at(t)?;
        let mc = tail_estimate(&summary, x, Side::TwoSidedAboutMedian)?;
        let markov = if n == 1 {
            if x > 1.0 {
                Some(table.envelope(x)?.0.min(1.0))
            } else {
                None
            }
        } else {
            sample.map(|s| empirical_markov(s, summary.median, x, &table.p))
        };
        let berry_esseen = if m3.is_finite() && sigma > 0.0 {
            let z = x / sigma;
            let be = berry_esseen_nonuniform(3.0, n as u64, z, m3, m3, config.c_r)?;
            Some((2.0 * normal::sf(z) + 2.0 * be).min(1.0))
        } else {
            None
        };
        let bcr = if alpha.is_finite() {
            let tb = x * nf.sqrt() / nf.powf(1.0 / alpha);
            (tb > std::f64::consts::E)
                .then(|| (config.c_alpha * (tb.ln() / tb).powf(alpha)).min(1.0))
        } else {
            None
        };
        out.push(CompareRow {
            t,
            threshold: x,
            mc_tail: mc.p_hat,
            markov,
            berry_esseen,
            bcr,
            certificate: cert.probability_at(t),
        });
    }
    Ok(out)
}

/// min over p of x^{−p}·mean|S − m|^p on the simulated sample.
fn empirical_markov(sample: &[f64], m: f64, x: f64, ps: &[f64]) -> f64 {
    let r = sample.len() as f64;
    let mut best = 1f64;
    for &p in ps {
        let mean = sample
            .iter()
            .map(|s| ((s - m).abs() / x).powf(p))
            .sum::<f64>()
            / r;
        if mean.is_finite() {
            best = best.min(mean);
        }
    }
    best
}

fn to_values<R: Serialize>(rows: &[R]) -> Outcome<Vec<Value>> {
    rows.iter()
        .map(|r| serde_json::to_value(r).map_err(|e| input_error(e.to_string())))
        .collect()
}

fn format_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) if !n.is_f64() => u.to_string(),
            (_, Some(i)) if !n.is_f64() => i.to_string(),
            _ => format!("{:.16e}", n.as_f64().unwrap_or(f64::NAN)),
        },
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// CSV with a header taken from the first row's keys.
fn rows_to_csv(rows: &[Value]) -> Outcome<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if let Some(Value::Object(first)) = rows.first() {
        w.write_record(first.keys())
            .map_err(|e| input_error(e.to_string()))?;
    }
    for row in rows {
        if let Value::Object(map) = row {
            w.write_record(map.values().map(format_cell))
                .map_err(|e| input_error(e.to_string()))?;
        }
    }
    w.into_inner().map_err(|e| input_error(e.to_string()))
}

fn emit(rows: &[Value], common: &Common) -> Outcome<()> {
    let bytes = if common.json {
        let mut s = serde_json::to_string_pretty(rows).map_err(|e| input_error(e.to_string()))?;
        s.push('\n');
        s.into_bytes()
    } else {
        rows_to_csv(rows)?
    };
    match &common.out {
        Some(path) => fs::write(path, bytes)
            .map_err(|e| input_error(format!("cannot write {}: {e}", path.display()))),
        None => io::stdout()
            .write_all(&bytes)
            .map_err(|e| input_error(e.to_string())),
    }
}
