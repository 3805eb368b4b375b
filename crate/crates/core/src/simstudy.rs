//! Frequentist calibration harness: simulate, refit, summarize.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{mix_seed, stream_rng, Exec};
use crate::mcmc::{posterior_summary, run_chains, ChainConfig};
use crate::model::{simulate_dataset, Covariates, Design, ModelSpec, ParameterState, RandomEffectsMode, Variant};
use crate::special::logit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub phi1: f64,
    pub phi2: f64,
    pub tau: f64,
    pub n: usize,
    pub n_replicates: usize,
    pub variant: Variant,
    /// Overrides the default regression truth; `phi`/`tau` above still apply.
    pub truth: Option<ParameterState>,
    pub chains: ChainConfig,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            phi1: 0.05,
            phi2: 0.05,
            tau: 0.25,
            n: 300,
            n_replicates: 50,
            variant: Variant::RectBetaGauss,
            truth: None,
            chains: ChainConfig { exec: Exec::Sequential, ..ChainConfig::desk() },
            seed: 1,
        }
    }
}

impl Scenario {
    pub fn new(phi1: f64, phi2: f64, tau: f64, n: usize) -> Self {
        Self { phi1, phi2, tau, n, ..Self::default() }
    }

    /// Intercept plus a balanced binary covariate `i mod 2` in both margins.
    pub fn covariates(&self) -> Result<Covariates> {
        let xs: Vec<f64> = (0..self.n).map(|i| (i % 2) as f64).collect();
        let x = Design::with_intercept(&[&xs], self.n)?;
        Covariates::ungrouped(x.clone(), x)
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec::variant(self.variant, 2, 2, false)
    }

    pub fn truth(&self) -> ParameterState {
        let mut t = self.truth.clone().unwrap_or(ParameterState {
            beta1: vec![logit(0.30), 0.3],
            beta2: vec![logit(0.60), -0.3],
            phi1: 0.0,
            phi2: 0.0,
            rho1: 50.0,
            rho2: 50.0,
            tau: 0.0,
            sigma1: 1.0,
            sigma2: 1.0,
            b1: vec![],
            b2: vec![],
        });
        t.phi1 = self.phi1;
        t.phi2 = self.phi2;
        t.tau = self.tau;
        t
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::Invalid(format!("scenario n = {} is below 10", self.n)));
        }
        if self.n_replicates == 0 {
            return Err(Error::Invalid("scenario needs at least one replicate".into()));
        }
        self.chains.validate()?;
        self.truth().validate(&self.spec(), 0)
    }
}

/// Accuracy of one parameter across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStats {
    pub param: String,
    pub truth: f64,
    pub bias: f64,
    pub rmse: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub phi1: f64,
    pub phi2: f64,
    pub tau: f64,
    pub n: usize,
    pub n_ok: usize,
    pub n_failed: usize,
    pub params: Vec<ParamStats>,
}

impl StudySummary {
    pub fn get(&self, param: &str) -> Option<&ParamStats> {
        self.params.iter().find(|p| p.param == param)
    }
}

/// Point estimate and 95% HPD bounds of every parameter from one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFit {
    pub estimate: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// `beta1_0` becomes `beta11`; other names are kept.
fn table_label(name: &str) -> String {
    match name.strip_prefix("beta").and_then(|r| r.split_once('_')) {
        Some((j, c)) => match c.parse::<usize>() {
            Ok(c) => format!("beta{j}{}", c + 1),
            Err(_) => name.to_string(),
        },
        None => name.to_string(),
    }
}

/// Bias, RMSE and coverage from successful fits.
pub fn aggregate(names: &[String], truth: &[f64], fits: &[ReplicateFit]) -> Vec<ParamStats> {
    let r = fits.len() as f64;
    names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let t = truth[k];
            let err: Vec<f64> = fits.iter().map(|f| f.estimate[k] - t).collect();
            let covered = fits.iter().filter(|f| f.lo[k] <= t && t <= f.hi[k]).count() as f64;
            ParamStats {
                param: table_label(name),
                truth: t,
                bias: err.iter().sum::<f64>() / r,
                rmse: (err.iter().map(|e| e * e).sum::<f64>() / r).sqrt(),
                coverage: covered / r,
            }
        })
        .collect()
}

/// Simulates and refits one replicate; `None` when the fit fails.
pub fn run_replicate(sc: &Scenario, r: usize) -> Option<ReplicateFit> {
    let spec = sc.spec();
    let cov = sc.covariates().ok()?;
    let mut rng = stream_rng(mix_seed(sc.seed, 2 * r as u64), 0);
    let data = simulate_dataset(&sc.truth(), &spec, &cov, RandomEffectsMode::Supplied, &mut rng).ok()?;
    let cfg = ChainConfig { seed: mix_seed(sc.seed, 2 * r as u64 + 1), ..sc.chains.clone() };
    let draws = run_chains(&data, &spec, &cfg).ok()?;
    let summary = posterior_summary(&draws).ok()?;
    let fit = ReplicateFit {
        estimate: summary.iter().map(|s| s.median).collect(),
        lo: summary.iter().map(|s| s.hpd_lo).collect(),
        hi: summary.iter().map(|s| s.hpd_hi).collect(),
    };
    fit.estimate.iter().chain(&fit.lo).chain(&fit.hi).all(|v| v.is_finite()).then_some(fit)
}

/// Runs every replicate of `sc`, `exec` spreading replicates over workers.
/// Results are aggregated in replicate order.
pub fn run_scenario(sc: &Scenario, exec: Exec) -> Result<StudySummary> {
    sc.validate()?;
    summarize(sc, exec.map(sc.n_replicates, |r| run_replicate(sc, r)))
}

/// Aggregates per-replicate outcomes (`None` for a failed fit) in order.
pub fn summarize(sc: &Scenario, fits: Vec<Option<ReplicateFit>>) -> Result<StudySummary> {
    let layout = crate::model::ParamLayout::new(&sc.spec(), 0);
    let n_total = fits.len();
    let ok: Vec<ReplicateFit> = fits.into_iter().flatten().collect();
    let n_failed = n_total - ok.len();
    if ok.is_empty() {
        return Err(Error::Invalid(format!("all {n_total} replicates failed")));
    }
    Ok(StudySummary {
        phi1: sc.phi1,
        phi2: sc.phi2,
        tau: sc.tau,
        n: sc.n,
        n_ok: ok.len(),
        n_failed,
        params: aggregate(&layout.names(), &layout.flatten(&sc.truth()), &ok),
    })
}

pub const TABLE_HEADER: &str = "phi1,phi2,tau,Param,True,Bias,RMSE,CP,n";

/// Long format, one row per scenario, sample size and parameter.
pub fn summary_to_table<W: Write>(summaries: &[StudySummary], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{TABLE_HEADER}")?;
    for s in summaries {
        for p in &s.params {
            writeln!(w, "{},{},{},{},{},{},{},{},{}", s.phi1, s.phi2, s.tau, p.param, p.truth, p.bias, p.rmse, p.coverage, s.n)?;
        }
    }
    Ok(())
}

/// Parses [`summary_to_table`] output; replicate counts are not stored and
/// come back as zero.
pub fn table_from_csv<R: BufRead>(r: R) -> Result<Vec<StudySummary>> {
    let mut lines = r.lines();
    let io = |e: std::io::Error| Error::Invalid(format!("reading summary table: {e}"));
    let header = lines.next().transpose().map_err(io)?.unwrap_or_default();
    if header.trim_end() != TABLE_HEADER {
        return Err(Error::Invalid(format!("summary table must start with '{TABLE_HEADER}'")));
    }
    let mut out: Vec<StudySummary> = Vec::new();
    for (ln, line) in lines.enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim_end().split(',').collect();
        let bad = || Error::Invalid(format!("summary table line {}: malformed row", ln + 2));
        if f.len() != 9 {
            return Err(bad());
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
        let (phi1, phi2, tau, n) = (num(0)?, num(1)?, num(2)?, f[8].parse::<usize>().map_err(|_| bad())?);
        let p = ParamStats { param: f[3].to_string(), truth: num(4)?, bias: num(5)?, rmse: num(6)?, coverage: num(7)? };
        match out.last_mut() {
            Some(s) if (s.phi1, s.phi2, s.tau, s.n) == (phi1, phi2, tau, n) => s.params.push(p),
            _ => out.push(StudySummary { phi1, phi2, tau, n, n_ok: 0, n_failed: 0, params: vec![p] }),
        }
    }
    Ok(out)
}

/// The six `(phi1, phi2, tau)` settings at `n`.
pub fn standard_grid(n: usize) -> Vec<Scenario> {
    let mut v = Vec::new();
    for (p1, p2) in [(0.05, 0.05), (0.20, 0.05), (0.20, 0.20)] {
        for tau in [0.0, 0.25] {
            v.push(Scenario::new(p1, p2, tau, n));
        }
    }
    v
}
