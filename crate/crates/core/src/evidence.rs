//! Log marginal likelihood by warped bridge sampling, and Bayes factors.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::mcmc::{median, Draws, ModelTarget, Target};
use crate::model::{Dataset, ModelSpec};

/// How posterior draws are moved towards the standard normal proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Warp {
    /// Centre at the posterior mean.
    Warp1,
    /// Centre and whiten by the posterior covariance.
    Warp2,
    /// Centre, whiten and symmetrize.
    #[default]
    Warp3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BridgeConfig {
    pub warp: Warp,
    pub tol: f64,
    pub max_iter: usize,
    /// Proposal draws per posterior draw.
    pub proposal_ratio: f64,
    pub exec: Exec,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self { warp: Warp::Warp3, tol: 1e-10, max_iter: 1000, proposal_ratio: 1.0, exec: Exec::Parallel }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeResult {
    /// Natural-log evidence.
    pub lml: f64,
    pub n_iterations: usize,
    pub rel_change: f64,
    pub converged: bool,
    pub n_posterior: usize,
    pub n_proposal: usize,
    /// Whitening fell back to the diagonal of the posterior covariance.
    pub diagonal_whitening: bool,
}

struct Whitening {
    mean: DVector<f64>,
    l: DMatrix<f64>,
    l_inv: DMatrix<f64>,
    log_det: f64,
    diagonal: bool,
}

fn fit_whitening(rows: &[&[f64]], warp: Warp) -> Result<Whitening> {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = DVector::zeros(d);
    for r in rows {
        mean += DVector::from_column_slice(r);
    }
    mean /= n;
    if warp == Warp::Warp1 {
        let eye = DMatrix::identity(d, d);
        return Ok(Whitening { mean, l: eye.clone(), l_inv: eye, log_det: 0.0, diagonal: false });
    }
    let mut cov = DMatrix::zeros(d, d);
    for r in rows {
        let c = DVector::from_column_slice(r) - &mean;
        cov += &c * c.transpose();
    }
    cov /= n - 1.0;
    let eig = cov.clone().symmetric_eigen();
    let (lo, hi) = eig.eigenvalues.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v.abs())));
    let ill = !(lo > 0.0) || hi / lo > 1e12;
    let chol = if ill { None } else { cov.clone().cholesky() };
    let (l, diagonal) = match chol {
        Some(c) => (c.l(), false),
        None => {
            let sd = DVector::from_iterator(d, (0..d).map(|k| cov[(k, k)].max(1e-300).sqrt()));
            (DMatrix::from_diagonal(&sd), true)
        }
    };
    let log_det = l.diagonal().iter().map(|v| v.ln()).sum();
    let l_inv = l.clone().try_inverse().ok_or_else(|| Error::Invalid("posterior covariance is singular".into()))?;
    Ok(Whitening { mean, l, l_inv, log_det, diagonal })
}

fn std_normal_ln_pdf(xi: &DVector<f64>) -> f64 {
    -0.5 * xi.norm_squared() - 0.5 * xi.len() as f64 * (2.0 * std::f64::consts::PI).ln()
}

fn log_mean_exp2(a: f64, b: f64) -> f64 {
    crate::special::log_add_exp(a, b) - std::f64::consts::LN_2
}

/// Bridge-sampling estimate of `ln ∫ exp(log_target(x)) dx` from posterior
/// samples `rows`, split by chain: the first half of every chain fits the
/// warp, the second half enters the fixed-point iteration.
pub fn bridge_lml<F, R>(chains: &[Vec<Vec<f64>>], log_target: F, cfg: &BridgeConfig, rng: &mut R) -> Result<BridgeResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
    R: Rng + ?Sized,
{
    let mut fit_rows: Vec<&[f64]> = Vec::new();
    let mut iter_rows: Vec<&[f64]> = Vec::new();
    for c in chains {
        let h = c.len() / 2;
        fit_rows.extend(c[..h].iter().map(Vec::as_slice));
        iter_rows.extend(c[h..].iter().map(Vec::as_slice));
    }
    let d = iter_rows.first().map_or(0, |r| r.len());
    if d == 0 || fit_rows.len() < d + 2 || iter_rows.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2 * (d + 2), got: fit_rows.len() + iter_rows.len() });
    }
    let w = fit_whitening(&fit_rows, cfg.warp)?;
    let n1 = iter_rows.len();
    let n2 = ((n1 + fit_rows.len()) as f64 * cfg.proposal_ratio).round().max(2.0) as usize;

    // warped log-density at xi, given the target at m + L xi (and m - L xi).
    let warped = |xi: &DVector<f64>, at_plus: Option<f64>| -> f64 {
        let plus = at_plus.unwrap_or_else(|| log_target((&w.mean + &w.l * xi).as_slice()));
        match cfg.warp {
            Warp::Warp1 | Warp::Warp2 => w.log_det + plus,
            Warp::Warp3 => {
                let minus = log_target((&w.mean - &w.l * xi).as_slice());
                w.log_det + log_mean_exp2(plus, minus)
            }
        }
    };

    let l1: Vec<f64> = cfg.exec.map(n1, |i| {
        let theta = DVector::from_column_slice(iter_rows[i]);
        let xi = &w.l_inv * (theta - &w.mean);
        warped(&xi, Some(log_target(iter_rows[i]))) - std_normal_ln_pdf(&xi)
    });
    let proposals: Vec<DVector<f64>> =
        (0..n2).map(|_| DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))).collect();
    let l2: Vec<f64> = cfg.exec.map(n2, |i| warped(&proposals[i], None) - std_normal_ln_pdf(&proposals[i]));

    let l1: Vec<f64> = l1.into_iter().map(|v| if v.is_nan() { f64::NEG_INFINITY } else { v }).collect();
    let l2: Vec<f64> = l2.into_iter().map(|v| if v.is_nan() { f64::NEG_INFINITY } else { v }).collect();
    let lstar = median(&l1);
    if !lstar.is_finite() {
        return Err(Error::Invalid("posterior draws have non-finite log target".into()));
    }
    let s1 = n1 as f64 / (n1 + n2) as f64;
    let s2 = n2 as f64 / (n1 + n2) as f64;
    let e1: Vec<f64> = l1.iter().map(|v| v - lstar).collect();
    let e2: Vec<f64> = l2.iter().map(|v| v - lstar).collect();

    let mut r = 1.0f64;
    let mut rel = f64::INFINITY;
    let mut it = 0;
    while it < cfg.max_iter {
        it += 1;
        let num = e2.iter().map(|&a| 1.0 / (s1 + s2 * r * (-a).exp())).sum::<f64>() / n2 as f64;
        let den = e1.iter().map(|&a| 1.0 / (s1 * a.exp() + s2 * r)).sum::<f64>() / n1 as f64;
        let next = num / den;
        if !(next.is_finite() && next > 0.0) {
            return Err(Error::Invalid(format!("bridge iteration produced {next}")));
        }
        rel = ((next - r) / next).abs();
        r = next;
        if rel <= cfg.tol {
            break;
        }
    }
    Ok(BridgeResult {
        lml: r.ln() + lstar,
        n_iterations: it,
        rel_change: rel,
        converged: rel <= cfg.tol,
        n_posterior: n1,
        n_proposal: n2,
        diagonal_whitening: w.diagonal,
    })
}

/// Evidence of a fitted copula regression model from its draws.
pub fn model_lml<R: Rng + ?Sized>(
    draws: &Draws,
    data: &Dataset,
    spec: &ModelSpec,
    cfg: &BridgeConfig,
    rng: &mut R,
) -> Result<BridgeResult> {
    let target = ModelTarget::new(data, spec);
    let tf = target.transform();
    if draws.names != tf.layout.names() {
        return Err(Error::Invalid("draws do not match the model's parameter layout".into()));
    }
    let mut chains = vec![Vec::new(); draws.n_chains];
    for s in 0..draws.len() {
        chains[draws.chain_of(s)].push(tf.forward(draws.row(s))?);
    }
    bridge_lml(&chains, |z| target.log_density(z), cfg, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedModel {
    pub rank: usize,
    pub model: String,
    pub lml: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseFactor {
    pub better: String,
    pub worse: String,
    pub delta_lml: f64,
    pub bayes_factor: f64,
    /// `delta_lml >= 2`, i.e. a Bayes factor of at least e².
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesFactorReport {
    pub ranking: Vec<RankedModel>,
    pub pairs: Vec<PairwiseFactor>,
}

/// Ranks models by evidence and lists every pairwise log Bayes factor.
pub fn bayes_factor_report(lmls: &[(String, f64)]) -> Result<BayesFactorReport> {
    if lmls.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: lmls.len() });
    }
    let mut sorted = lmls.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1));
    let ranking = sorted
        .iter()
        .enumerate()
        .map(|(i, (m, l))| RankedModel { rank: i + 1, model: m.clone(), lml: *l })
        .collect();
    let mut pairs = Vec::new();
    for i in 0..sorted.len() {
        for j in i + 1..sorted.len() {
            let delta = sorted[i].1 - sorted[j].1;
            pairs.push(PairwiseFactor {
                better: sorted[i].0.clone(),
                worse: sorted[j].0.clone(),
                delta_lml: delta,
                bayes_factor: delta.exp(),
                positive: delta >= 2.0,
            });
        }
    }
    Ok(BayesFactorReport { ranking, pairs })
}

impl BayesFactorReport {
    pub fn to_text(&self) -> String {
        let w = self.ranking.iter().map(|r| r.model.len()).max().unwrap_or(5).max(5);
        let mut s = String::new();
        let _ = writeln!(s, "{:>4}  {:<w$}  {:>12}", "rank", "model", "LML");
        for r in &self.ranking {
            let _ = writeln!(s, "{:>4}  {:<w$}  {:>12.3}", r.rank, r.model, r.lml);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<w$}  {:<w$}  {:>9}  {:>12}  evidence", "better", "worse", "dLML", "BF");
        for p in &self.pairs {
            let _ = writeln!(
                s,
                "{:<w$}  {:<w$}  {:>9.3}  {:>12.4e}  {}",
                p.better,
                p.worse,
                p.delta_lml,
                p.bayes_factor,
                if p.positive { "positive" } else { "-" }
            );
        }
        s
    }
}
