//! Convergence diagnostics and posterior summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::norm_quantile;

use super::draws::Draws;

/// Average ranks (1-based) with ties sharing the mean rank.
fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// Classic potential scale reduction on equal-length chains.
fn rhat_basic(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = mean(&chains.iter().map(|c| var(c)).collect::<Vec<_>>());
    let b_over_n = var(&means);
    if !(w > 0.0) {
        return 1.0;
    }
    (((n - 1.0) / n * w + b_over_n) / w).sqrt()
}

/// Each chain cut into first and last halves (a middle draw is dropped
/// when the length is odd).
fn split(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let half = chains.iter().map(Vec::len).min().unwrap_or(0) / 2;
    let mut split = Vec::with_capacity(2 * chains.len());
    for c in chains {
        split.push(c[..half].to_vec());
        split.push(c[c.len() - half..].to_vec());
    }
    split
}

fn split_rank_normalized(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let split = split(chains);
    let half = split[0].len();
    let pooled: Vec<f64> = split.concat();
    let s = pooled.len() as f64;
    let z: Vec<f64> = average_ranks(&pooled).into_iter().map(|r| norm_quantile((r - 0.375) / (s + 0.25))).collect();
    z.chunks(half).map(<[f64]>::to_vec).collect()
}

/// Rank-normalized split-R̂: the largest of the bulk, folded and raw-scale
/// split statistics. Rank normalization alone saturates near 1.83 for two
/// fully separated chains, so the raw statistic is kept as well. Constant
/// input gives exactly 1.
pub fn psrf_chains(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: chains.len() });
    }
    let shortest = chains.iter().map(Vec::len).min().unwrap_or(0);
    if shortest < 10 {
        return Err(Error::TooFewSamples { needed: 10, got: shortest });
    }
    let first = chains[0][0];
    if chains.iter().flatten().all(|&v| v == first) {
        return Ok(1.0);
    }
    let bulk = rhat_basic(&split_rank_normalized(chains));
    let pooled: Vec<f64> = chains.concat();
    let med = median(&pooled);
    let folded: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|v| (v - med).abs()).collect()).collect();
    let tail = rhat_basic(&split_rank_normalized(&folded));
    let raw = rhat_basic(&split(chains));
    Ok(bulk.max(tail).max(raw))
}

pub fn psrf(draws: &Draws, param: &str) -> Result<f64> {
    psrf_chains(&draws.chains_at(draws.index_of(param)?))
}

pub fn median(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Shortest window of the sorted samples holding `ceil(level * S)` points;
/// the earliest such window wins ties.
pub fn hpd_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Invalid(format!("HPD level {level} outside (0,1)")));
    }
    if samples.len() < 20 {
        return Err(Error::TooFewSamples { needed: 20, got: samples.len() });
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let m = ((level * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut best = 0;
    let mut width = f64::INFINITY;
    for i in 0..=n - m {
        let w = s[i + m - 1] - s[i];
        if w < width {
            width = w;
            best = i;
        }
    }
    Ok((s[best], s[best + m - 1]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub hpd_lo: f64,
    pub hpd_hi: f64,
    /// Absent with fewer than 2 chains or 10 draws per chain.
    pub psrf: Option<f64>,
}

/// Median, 95% HPD and PSRF of every parameter, in draw column order.
pub fn posterior_summary(draws: &Draws) -> Result<Vec<ParamSummary>> {
    summary_at_level(draws, 0.95)
}

pub fn summary_at_level(draws: &Draws, level: f64) -> Result<Vec<ParamSummary>> {
    (0..draws.dim())
        .map(|k| {
            let x = draws.column_at(k);
            let (hpd_lo, hpd_hi) = hpd_interval(&x, level)?;
            Ok(ParamSummary {
                name: draws.names[k].clone(),
                mean: mean(&x),
                sd: if x.len() > 1 { var(&x).sqrt() } else { 0.0 },
                median: median(&x),
                hpd_lo,
                hpd_hi,
                psrf: psrf_chains(&draws.chains_at(k)).ok(),
            })
        })
        .collect()
}
