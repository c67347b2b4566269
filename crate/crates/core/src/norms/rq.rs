//! The norm whose unit ball is the convex hull of the normalized sign vectors
//! max{|u|₁, r|u|_q}⁻¹u, u ∈ {0,±1}ⁿ, and its dual.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Parameters r ≥ 1, q > 1 and dimension n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RQParams {
    pub r: f64,
    pub q: f64,
    pub n: usize,
}

impl RQParams {
    pub fn new(r: f64, q: f64, n: usize) -> Result<Self> {
        let p = RQParams { r, q, n };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 1.0 && self.r.is_finite()) {
            return domain(format!("r must be at least 1, got {}", self.r));
        }
        if !(self.q > 1.0 && self.q.is_finite()) {
            return domain(format!("q must exceed 1, got {}", self.q));
        }
        if self.n == 0 {
            return domain("n must be positive");
        }
        Ok(())
    }

    /// r^{q/(q−1)}, where k and r k^{1/q} cross.
    pub fn crossover(&self) -> f64 {
        self.r.powf(self.q / (self.q - 1.0))
    }

    /// max{k, r k^{1/q}}: the norm of any vector in {0,±1}ⁿ with k nonzeros.
    pub fn budget(&self, k: usize) -> f64 {
        let kf = k as f64;
        kf.max(self.r * kf.powf(1.0 / self.q))
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n {
            return domain(format!(
                "expected a vector of length {}, got {}",
                self.n,
                v.len()
            ));
        }
        Ok(())
    }
}

/// Absolute values sorted in nonincreasing order.
pub fn rearrangement(v: &[f64]) -> Vec<f64> {
    let mut a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    a.sort_by(|x, y| y.total_cmp(x));
    a
}

/// Dual norm of `y`. Unrestricted: sup_k max{k, r k^{1/q}}⁻¹ Σ_{i≤k} y_[i].
/// Restricted: sup over k ≤ min{r^{q/(q−1)}, n} of r⁻¹k^{−1/q} Σ_{i≤k} y_[i].
pub fn dual_norm_rq(y: &[f64], params: &RQParams, restricted: bool) -> Result<f64> {
    params.validate()?;
    params.check_len(y)?;
    let ys = rearrangement(y);
    if ys.first().copied().unwrap_or(0.0) == 0.0 {
        return domain("dual norm of the zero vector");
    }
    let limit = if restricted {
        ((params.crossover() + 1e-9).floor() as usize).clamp(1, params.n)
    } else {
        params.n
    };
    let mut best = 0.0f64;
    let mut acc = 0.0;
    for (i, v) in ys.iter().take(limit).enumerate() {
        acc += v;
        let k = i + 1;
        let denom = if restricted {
            params.r * (k as f64).powf(1.0 / params.q)
        } else {
            params.budget(k)
        };
        best = best.max(acc / denom);
    }
    Ok(best)
}

/// How the primal norm is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimalMethod {
    /// Linear program over the sorted cone of the dual ball.
    Lp,
    /// max{|x|₁, r|x|_q}, valid on {0,±1}ⁿ.
    SignFormula,
}

/// Primal norm of `x`.
pub fn primal_norm_rq(x: &[f64], params: &RQParams, method: PrimalMethod) -> Result<f64> {
    params.validate()?;
    params.check_len(x)?;
    let xs = rearrangement(x);
    if xs[0] == 0.0 {
        return domain("primal norm of the zero vector");
    }
    match method {
        PrimalMethod::SignFormula => {
            if xs.iter().any(|&v| v != 0.0 && v != 1.0) {
                return domain("the sign formula needs x in {0,±1}^n");
            }
            let k = xs.iter().filter(|&&v| v == 1.0).count();
            Ok(params.budget(k))
        }
        PrimalMethod::Lp => primal_lp(&xs, params),
    }
}

/// Maximizes Σ x_[i] y_i over y₁ ≥ … ≥ y_n ≥ 0 with Σ_{i≤k} y_i ≤ max{k, r k^{1/q}}.
///
/// Written in the prefix sums S_k = Σ_{i≤k} y_i, the objective is
/// Σ (x_[k] − x_[k+1]) S_k, the caps become variable bounds and monotonicity
/// of y becomes concavity of S.
fn primal_lp(xs: &[f64], params: &RQParams) -> Result<f64> {
    let n = xs.len();
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = (0..n)
        .map(|k| {
            let next = if k + 1 < n { xs[k + 1] } else { 0.0 };
            lp.add_var(xs[k] - next, (0.0, params.budget(k + 1)))
        })
        .collect();
    // y_k ≥ y_{k+1}: S_k − S_{k−1} ≥ S_{k+1} − S_k, with S_0 = 0
    for k in 0..n.saturating_sub(1) {
        let mut terms = vec![(vars[k], 2.0), (vars[k + 1], -1.0)];
        if k > 0 {
            terms.push((vars[k - 1], -1.0));
        }
        lp.add_constraint(&terms[..], ComparisonOp::Ge, 0.0);
    }
    if n > 1 {
        lp.add_constraint(
            &[(vars[n - 1], 1.0), (vars[n - 2], -1.0)][..],
            ComparisonOp::Ge,
            0.0,
        );
    }
    let sol = lp
        .solve()
        .map_err(|e| Error::Numerical(format!("linear program failed: {e}")))?;
    Ok(sol.objective())
}

/// |x|₁ + r Σ i^{−1+1/q} x_[i].
pub fn lorentz_comparison(x: &[f64], r: f64, q: f64) -> f64 {
    let xs = rearrangement(x);
    let l1: f64 = xs.iter().sum();
    let weighted: f64 = xs
        .iter()
        .enumerate()
        .map(|(i, v)| ((i + 1) as f64).powf(-1.0 + 1.0 / q) * v)
        .sum();
    l1 + r * weighted
}

/// Extremes of primal_norm_rq(x) / (|x|₁ + r Σ i^{−1+1/q} x_[i]) over random x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Whether every sample satisfied |x| ≤ 4q⁻¹(…) ≤ 16|x|.
    pub displayed_constants_hold: bool,
}

/// Samples mixed sparse, dense, heavy and flat profiles and records the ratio window.
pub fn sandwich_report<R: Rng + ?Sized>(
    params: &RQParams,
    samples: usize,
    rng: &mut R,
) -> Result<SandwichReport> {
    params.validate()?;
    if samples < 100 {
        return domain(format!("need at least 100 samples, got {samples}"));
    }
    let n = params.n;
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    let mut holds = true;
    for s in 0..samples {
        let mut x = vec![0.0; n];
        match s % 4 {
            0 => {
                let k = rng.random_range(1..=n.min(3));
                for v in x.iter_mut().take(k) {
                    *v = rng.random::<f64>() + 0.01;
                }
            }
            1 => x.iter_mut().for_each(|v| *v = rng.random::<f64>() + 0.01),
            2 => {
                let a: f64 = rng.random_range(0.1..3.0);
                for (i, v) in x.iter_mut().enumerate() {
                    *v = ((i + 1) as f64).powf(-a);
                }
            }
            _ => {
                let k = rng.random_range(1..=n);
                for v in x.iter_mut().take(k) {
                    *v = 1.0;
                }
            }
        }
        let num = primal_norm_rq(&x, params, PrimalMethod::Lp)?;
        let den = lorentz_comparison(&x, params.r, params.q);
        let ratio = num / den;
        lo = lo.min(ratio);
        hi = hi.max(ratio);
        let middle = 4.0 / params.q * den;
        if !(num <= middle * (1.0 + 1e-9) && middle <= 16.0 * num * (1.0 + 1e-9)) {
            holds = false;
        }
    }
    Ok(SandwichReport {
        min_ratio: lo,
        max_ratio: hi,
        displayed_constants_hold: holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(n: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    }

    #[test]
    fn dual_examples() {
        let p = RQParams::new(2.0, 2.0, 4).unwrap();
        assert!((dual_norm_rq(&unit(4, 0), &p, false).unwrap() - 0.5).abs() < 1e-15);
        assert!((dual_norm_rq(&[1.0; 4], &p, false).unwrap() - 1.0).abs() < 1e-15);
        let y = [0.3, -1.2, 0.7, 2.0];
        let y2: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        assert!(
            (dual_norm_rq(&y2, &p, false).unwrap() - 2.0 * dual_norm_rq(&y, &p, false).unwrap())
                .abs()
                < 1e-14
        );
        assert!(dual_norm_rq(&[0.0; 4], &p, false).is_err());
        assert!(dual_norm_rq(&[1.0; 3], &p, false).is_err());
    }

    #[test]
    fn primal_examples() {
        let p = RQParams::new(3.0, 2.0, 5).unwrap();
        assert!((primal_norm_rq(&unit(5, 2), &p, PrimalMethod::Lp).unwrap() - 3.0).abs() < 1e-9);
        let p = RQParams::new(2.0, 2.0, 6).unwrap();
        let x = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        assert!(
            (primal_norm_rq(&x, &p, PrimalMethod::Lp).unwrap() - 2.0 * 3f64.sqrt()).abs() < 1e-9
        );
        assert!(
            (primal_norm_rq(&x, &p, PrimalMethod::SignFormula).unwrap() - 2.0 * 3f64.sqrt()).abs()
                < 1e-15
        );
        assert!(primal_norm_rq(
            &[0.5, 0.0, 0.0, 0.0, 0.0, 0.0],
            &p,
            PrimalMethod::SignFormula
        )
        .is_err());
        assert!(primal_norm_rq(&[0.0; 6], &p, PrimalMethod::Lp).is_err());
    }

    #[test]
    fn sign_vectors_match_formula() {
        for n in 1..=6 {
            for &(r, q) in &[(1.0, 2.0), (2.0, 2.0), (1.5, 3.0), (4.0, 1.5), (10.0, 4.0)] {
                let p = RQParams::new(r, q, n).unwrap();
                for code in 1..3usize.pow(n as u32) {
                    let mut c = code;
                    let x: Vec<f64> = (0..n)
                        .map(|_| {
                            let d = c % 3;
                            c /= 3;
                            [0.0, 1.0, -1.0][d]
                        })
                        .collect();
                    let lp = primal_norm_rq(&x, &p, PrimalMethod::Lp).unwrap();
                    let f = primal_norm_rq(&x, &p, PrimalMethod::SignFormula).unwrap();
                    assert!(
                        (lp - f).abs() <= 1e-9 * f.max(1.0),
                        "n={n} r={r} q={q} x={x:?}: {lp} vs {f}"
                    );
                }
            }
        }
    }

    /// Vertices of the dual ball {y : ⟨v, y⟩ ≤ 1 for all v ∈ V} by brute force.
    fn dual_ball_vertices(p: &RQParams) -> Vec<Vec<f64>> {
        let n = p.n;
        let mut normals = Vec::new();
        for code in 1..3usize.pow(n as u32) {
            let mut c = code;
            let u: Vec<f64> = (0..n)
                .map(|_| {
                    let d = c % 3;
                    c /= 3;
                    [0.0, 1.0, -1.0][d]
                })
                .collect();
            let k = u.iter().filter(|v| **v != 0.0).count();
            let b = p.budget(k);
            normals.push(u.iter().map(|v| v / b).collect::<Vec<f64>>());
        }
        let m = normals.len();
        let mut out = Vec::new();
        let mut idx = vec![0usize; n];
        fn rec(
            start: usize,
            depth: usize,
            idx: &mut Vec<usize>,
            m: usize,
            f: &mut dyn FnMut(&[usize]),
        ) {
            if depth == idx.len() {
                f(idx);
                return;
            }
            for i in start..m {
                idx[depth] = i;
                rec(i + 1, depth + 1, idx, m, f);
            }
        }
        rec(0, 0, &mut idx, m, &mut |rows: &[usize]| {
            // Gaussian elimination on the n × n system
            let mut a: Vec<Vec<f64>> = rows
                .iter()
                .map(|&r| {
                    let mut row = normals[r].clone();
                    row.push(1.0);
                    row
                })
                .collect();
            for col in 0..n {
                let piv = (col..n)
                    .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                    .unwrap();
                if a[piv][col].abs() < 1e-12 {
                    return;
                }
                a.swap(col, piv);
                for i in 0..n {
                    if i != col {
                        let f = a[i][col] / a[col][col];
                        let pivot = a[col].clone();
                        for (x, p) in a[i][col..=n].iter_mut().zip(&pivot[col..=n]) {
                            *x -= f * p;
                        }
                    }
                }
            }
            let y: Vec<f64> = (0..n).map(|i| a[i][n] / a[i][i]).collect();
            if normals
                .iter()
                .all(|v| v.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() <= 1.0 + 1e-12)
            {
                out.push(y);
            }
        });
        out
    }

    #[test]
    fn lp_matches_brute_force_dual_vertices() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in 1..=3 {
            for &(r, q) in &[(1.0, 2.0), (1.3, 2.0), (2.0, 3.0), (5.0, 1.5)] {
                let p = RQParams::new(r, q, n).unwrap();
                let verts = dual_ball_vertices(&p);
                for _ in 0..50 {
                    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                    let brute = verts
                        .iter()
                        .map(|y| y.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>())
                        .fold(f64::NEG_INFINITY, f64::max);
                    let lp = primal_norm_rq(&x, &p, PrimalMethod::Lp).unwrap();
                    assert!(
                        (lp - brute).abs() < 1e-9 * brute.max(1.0),
                        "n={n} r={r} q={q}: {lp} vs {brute}"
                    );
                }
            }
        }
    }

    #[test]
    fn dual_factor_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..1000 {
            let n = rng.random_range(1..40);
            let r = rng.random_range(1.0..6.0);
            let q = rng.random_range(1.2..5.0);
            let p = RQParams::new(r, q, n).unwrap();
            let y: Vec<f64> = (0..n)
                .map(|_| rng.random_range(-1.0..1.0) * rng.random::<f64>().powi(3))
                .collect();
            let full = dual_norm_rq(&y, &p, false).unwrap();
            let part = dual_norm_rq(&y, &p, true).unwrap();
            assert!(full <= 2.0 * part * (1.0 + 1e-12) && part <= full * (1.0 + 1e-12));
        }
    }

    #[test]
    fn sandwich_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for &n in &[8usize, 32, 128] {
            for &(r, q) in &[(1.0, 2.0), (3.0, 2.0), (2.0, 4.0)] {
                let p = RQParams::new(r, q, n).unwrap();
                let rep = sandwich_report(&p, 200, &mut rng).unwrap();
                assert!(
                    rep.min_ratio > 0.1 && rep.max_ratio <= 1.0 + 1e-9,
                    "n={n} r={r} q={q}: {rep:?}"
                );
            }
        }
        // x = e₁ gives max{1, r}/(1 + r)
        let p = RQParams::new(3.0, 2.0, 4).unwrap();
        let e1 = unit(4, 0);
        let ratio =
            primal_norm_rq(&e1, &p, PrimalMethod::Lp).unwrap() / lorentz_comparison(&e1, 3.0, 2.0);
        assert!((ratio - 0.75).abs() < 1e-9);
        // the displayed constant 4/q fails at e₁ once 4(1 + r)/q < r
        let p = RQParams::new(2.0, 10.0, 4).unwrap();
        assert!(
            !sandwich_report(&p, 100, &mut rng)
                .unwrap()
                .displayed_constants_hold
        );
    }

    proptest! {
        #[test]
        fn primal_norm_axioms(
            r in 1.0f64..5.0,
            q in 1.2f64..6.0,
            x in prop::collection::vec(-3.0f64..3.0, 1..24),
            seed in any::<u64>(),
            lambda in 0.01f64..100.0,
        ) {
            prop_assume!(x.iter().any(|v| *v != 0.0));
            let n = x.len();
            let p = RQParams::new(r, q, n).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let nx = primal_norm_rq(&x, &p, PrimalMethod::Lp).unwrap();
            let scaled: Vec<f64> = x.iter().map(|v| lambda * v).collect();
            let ns = primal_norm_rq(&scaled, &p, PrimalMethod::Lp).unwrap();
            prop_assert!((ns - lambda * nx).abs() <= 1e-9 * ns.max(1.0));
            let nz = primal_norm_rq(&z, &p, PrimalMethod::Lp).unwrap();
            let sum: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a + b).collect();
            if sum.iter().any(|v| *v != 0.0) {
                let nsum = primal_norm_rq(&sum, &p, PrimalMethod::Lp).unwrap();
                prop_assert!(nsum <= nx + nz + 1e-9 * (nx + nz));
            }
            let dual = dual_norm_rq(&z, &p, false).unwrap();
            let inner: f64 = x.iter().zip(&z).map(|(a, b)| a * b).sum();
            prop_assert!(inner <= nx * dual + 1e-9 * (nx * dual).max(1.0));
        }
    }
}
