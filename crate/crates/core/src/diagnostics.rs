//! Posterior-predictive residual checks and copula goodness-of-fit curves.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::copulas::{CopulaFamily, CopulaSpec};
use crate::error::{Error, Result};
use crate::exec::{mix_seed, stream_rng, Exec};
use crate::mcmc::Draws;
use crate::model::{margin_mean, Dataset, ModelSpec, ParameterState, RandomEffectsMode};
use crate::rectbeta::RectBetaParams;
use crate::special::ln_gamma;

/// Minimum number of posterior draws behind a residual set.
pub const MIN_RESIDUAL_DRAWS: usize = 250;

/// `{0.05, 0.10, ..., 0.95}`.
pub fn default_grid() -> Vec<f64> {
    (1..=19).map(|k| k as f64 * 0.05).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResidualConfig {
    /// Conditional replication reuses each draw's group intercepts.
    pub re_mode: RandomEffectsMode,
    /// Null residual sets for the dispersion test.
    pub n_null: usize,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        Self { re_mode: RandomEffectsMode::Supplied, n_null: 500, seed: 1, exec: Exec::Parallel }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginTests {
    pub uniformity: f64,
    pub dispersion: f64,
    pub outlier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSet {
    /// Scaled rank residuals, `[margin 1, margin 2]` per unit.
    pub r: Vec<[f64; 2]>,
    /// Replicates strictly below the observation, per unit and margin.
    pub rank: Vec<[usize; 2]>,
    pub s: usize,
    pub tests: [MarginTests; 2],
}

impl ResidualSet {
    pub fn margin(&self, j: usize) -> Vec<f64> {
        self.r.iter().map(|r| r[j]).collect()
    }
}

/// `(count + u) / (S + 1)`.
pub fn scaled_rank(count: usize, s: usize, u: f64) -> f64 {
    (count as f64 + u) / (s + 1) as f64
}

/// Margin parameters for unit `i` at `state` with intercepts `b`.
fn margin_at(state: &ParameterState, data: &Dataset, spec: &ModelSpec, b: &[Vec<f64>; 2], j: usize, i: usize) -> Option<RectBetaParams> {
    let cov = &data.covariates;
    let bb = if spec.random_intercepts { b[j][cov.group[i]] } else { 0.0 };
    let mu = margin_mean(state.beta(j), cov.design(j).row(i), bb);
    RectBetaParams::new(mu, state.phi(j), state.rho(j)).ok()
}

/// Simulation-based residuals `R_ji = (#{replicate < y_ji} + u_ji) / (S + 1)`.
///
/// A replicate `Y~ = F^{-1}(U~)` falls below `y` exactly when `U~ < F(y)`,
/// so replicates are compared on the PIT scale without inverting the CDF.
pub fn scaled_rank_residuals(data: &Dataset, spec: &ModelSpec, draws: &Draws, cfg: &ResidualConfig) -> Result<ResidualSet> {
    let s_total = draws.len();
    if s_total < MIN_RESIDUAL_DRAWS {
        return Err(Error::TooFewSamples { needed: MIN_RESIDUAL_DRAWS, got: s_total });
    }
    let n = data.n();
    let per_draw: Vec<Result<Vec<[bool; 2]>>> = cfg.exec.map(s_total, |s| {
        let mut rng = stream_rng(cfg.seed, s as u64);
        let state = draws.state(s)?;
        let copula = state.copula(spec)?;
        let b = if spec.random_intercepts && cfg.re_mode == RandomEffectsMode::Redraw {
            let mut fresh = [Vec::new(), Vec::new()];
            for (j, f) in fresh.iter_mut().enumerate() {
                let nd = Normal::new(0.0, state.sigma(j)).map_err(|e| Error::Domain(e.to_string()))?;
                *f = (0..data.covariates.n_groups).map(|_| nd.sample(&mut rng)).collect();
            }
            fresh
        } else {
            [state.b1.clone(), state.b2.clone()]
        };
        let mut below = vec![[false; 2]; n];
        for (i, flag) in below.iter_mut().enumerate() {
            let (u1, u2) = copula.sample_pair(&mut rng);
            for (j, u) in [u1, u2].into_iter().enumerate() {
                let m = margin_at(&state, data, spec, &b, j, i)
                    .ok_or_else(|| Error::Domain(format!("draw {s} has an invalid margin at unit {i}")))?;
                flag[j] = u < m.cdf(data.y(j)[i])?;
            }
        }
        Ok(below)
    });
    let mut rank = vec![[0usize; 2]; n];
    for d in per_draw {
        for (acc, f) in rank.iter_mut().zip(d?) {
            acc[0] += f[0] as usize;
            acc[1] += f[1] as usize;
        }
    }
    let mut jitter = stream_rng(mix_seed(cfg.seed, 1), 0);
    let r: Vec<[f64; 2]> = rank
        .iter()
        .map(|k| {
            let u1: f64 = jitter.random();
            let u2: f64 = jitter.random();
            [scaled_rank(k[0], s_total, u1), scaled_rank(k[1], s_total, u2)]
        })
        .collect();
    let null = null_residual_sets(n, cfg.n_null, mix_seed(cfg.seed, 2));
    let tests = [0, 1].map(|j| {
        let rj: Vec<f64> = r.iter().map(|v| v[j]).collect();
        let boundary = rank.iter().filter(|k| k[j] == 0 || k[j] == s_total).count();
        MarginTests {
            uniformity: uniformity_test(&rj),
            dispersion: dispersion_test(&rj, &null),
            outlier: binomial_test_two_sided(boundary, n, 2.0 / (s_total + 1) as f64),
        }
    });
    Ok(ResidualSet { r, rank, s: s_total, tests })
}

/// Residual sets under the fitted model: i.i.d. Uniform(0,1), since a
/// uniform rank plus uniform jitter over `S + 1` cells is exactly uniform.
pub fn null_residual_sets(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, 0);
    (0..count).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect()
}

/// Kolmogorov-Smirnov distance to Uniform(0,1).
pub fn ks_statistic(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = v.clamp(0.0, 1.0);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// `P(D_n >= d)` for the one-sample KS statistic: exact
/// (Marsaglia-Tsang-Wang) unless the upper tail is tiny, where the
/// limiting form is accurate.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    if d <= 0.0 {
        return 1.0;
    }
    if d >= 1.0 {
        return 0.0;
    }
    let nf = n as f64;
    let s = d * d * nf;
    if s > 7.24 || (s > 3.76 && n > 99) {
        return (2.0 * (-(2.000071 + 0.331 / nf.sqrt() + 1.409 / nf) * s).exp()).clamp(0.0, 1.0);
    }
    (1.0 - mtw_cdf(n, d)).clamp(0.0, 1.0)
}

/// `P(D_n < d)` by the Marsaglia-Tsang-Wang matrix power.
fn mtw_cdf(n: usize, d: f64) -> f64 {
    let nd = n as f64 * d;
    let k = nd.floor() as usize + 1;
    let m = 2 * k - 1;
    let h = k as f64 - nd;
    let mut hm = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            if i + 1 >= j {
                hm[(i, j)] = 1.0;
            }
        }
    }
    for i in 0..m {
        hm[(i, 0)] -= h.powi(i as i32 + 1);
        hm[(m - 1, i)] -= h.powi((m - i) as i32);
    }
    if 2.0 * h - 1.0 > 0.0 {
        hm[(m - 1, 0)] += (2.0 * h - 1.0).powi(m as i32);
    }
    for i in 0..m {
        for j in 0..m {
            if i + 1 > j {
                for g in 1..=(i + 1 - j) {
                    hm[(i, j)] /= g as f64;
                }
            }
        }
    }
    let (q, mut e) = mat_pow_scaled(&hm, n);
    let mut s = q[(k - 1, k - 1)];
    for i in 1..=n {
        s = s * i as f64 / n as f64;
        if s < 1e-140 {
            s *= 1e140;
            e -= 140;
        }
    }
    s * 10f64.powi(e)
}

/// `A^n` as a mantissa matrix and a power-of-ten exponent.
fn mat_pow_scaled(a: &DMatrix<f64>, n: usize) -> (DMatrix<f64>, i32) {
    if n == 1 {
        return (a.clone(), 0);
    }
    let (half, e_half) = mat_pow_scaled(a, n / 2);
    let mut v = &half * &half;
    let mut e = 2 * e_half;
    if n % 2 == 1 {
        v = a * v;
    }
    let mid = v.nrows() / 2;
    if v[(mid, mid)] > 1e140 {
        v *= 1e-140;
        e += 140;
    }
    (v, e)
}

/// KS test of uniformity on (0,1).
pub fn uniformity_test(residuals: &[f64]) -> f64 {
    ks_pvalue(ks_statistic(residuals), residuals.len())
}

fn sample_var(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Two-sided Monte Carlo rank test of `Var(residuals)` against the variances
/// of `simulated` sets: `2 min(P_upper, P_lower)` clipped to `(0, 1]`, each
/// tail counting the observed value as one of `N + 1`.
pub fn dispersion_test(residuals: &[f64], simulated: &[Vec<f64>]) -> f64 {
    let v = sample_var(residuals);
    let sims: Vec<f64> = simulated.iter().map(|s| sample_var(s)).collect();
    let n = sims.len() as f64;
    let ge = sims.iter().filter(|&&x| x >= v).count() as f64;
    let le = sims.iter().filter(|&&x| x <= v).count() as f64;
    (2.0 * ((1.0 + ge) / (n + 1.0)).min((1.0 + le) / (n + 1.0))).min(1.0)
}

fn binom_ln_pmf(k: usize, n: usize, p: f64) -> f64 {
    let (kf, nf) = (k as f64, n as f64);
    ln_gamma(nf + 1.0) - ln_gamma(kf + 1.0) - ln_gamma(nf - kf + 1.0) + kf * p.ln() + (nf - kf) * (-p).ln_1p()
}

/// Exact two-sided binomial test: the total probability of outcomes no
/// more likely than `k`.
pub fn binomial_test_two_sided(k: usize, n: usize, p: f64) -> f64 {
    let pk = binom_ln_pmf(k, n, p);
    let tol: f64 = 1.0 + 1e-7;
    let total: f64 = (0..=n)
        .map(|i| binom_ln_pmf(i, n, p))
        .filter(|&l| l <= pk + tol.ln())
        .map(f64::exp)
        .sum();
    total.min(1.0)
}

/// Counts-based outlier test: residuals whose raw rank is 0 or `S`
/// against the expected rate `2/(S+1)`.
pub fn outlier_test(set: &ResidualSet, margin: usize) -> f64 {
    let boundary = set.rank.iter().filter(|k| k[margin] == 0 || k[margin] == set.s).count();
    binomial_test_two_sided(boundary, set.rank.len(), 2.0 / (set.s + 1) as f64)
}

/// PITs of every observation under every draw's margin parameters,
/// including that draw's group intercepts.
pub fn pit_pairs(data: &Dataset, spec: &ModelSpec, draws: &Draws, exec: Exec) -> Result<Vec<Vec<(f64, f64)>>> {
    exec.map(draws.len(), |s| {
        let state = draws.state(s)?;
        let b = [state.b1.clone(), state.b2.clone()];
        (0..data.n())
            .map(|i| {
                let f = |j: usize| -> Result<f64> {
                    margin_at(&state, data, spec, &b, j, i)
                        .ok_or_else(|| Error::Domain(format!("draw {s} has an invalid margin at unit {i}")))?
                        .cdf(data.y(j)[i])
                };
                Ok((f(0)?, f(1)?))
            })
            .collect()
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Curve {
    /// Upper-tail `chi(u)`.
    Chi,
    /// Lower-tail `chi_L(u)`.
    ChiL,
    /// Quadrant probability `K(u)`.
    K,
}

impl Curve {
    pub const ALL: [Curve; 3] = [Curve::Chi, Curve::ChiL, Curve::K];

    pub fn name(self) -> &'static str {
        match self {
            Curve::Chi => "chi",
            Curve::ChiL => "chi_L",
            Curve::K => "K",
        }
    }

    /// Curves reported for a copula family, K always included.
    pub fn for_family(family: CopulaFamily) -> Vec<Curve> {
        match family {
            CopulaFamily::Clayton => vec![Curve::ChiL, Curve::K],
            _ => vec![Curve::Chi, Curve::K],
        }
    }
}

/// Empirical curves of one sample of pairs on `grid`; `None` where the
/// conditioning set is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCurves {
    pub chi: Vec<Option<f64>>,
    pub chi_l: Vec<Option<f64>>,
    pub k: Vec<Option<f64>>,
}

impl EmpiricalCurves {
    pub fn get(&self, c: Curve) -> &[Option<f64>] {
        match c {
            Curve::Chi => &self.chi,
            Curve::ChiL => &self.chi_l,
            Curve::K => &self.k,
        }
    }
}

pub fn empirical_curves(pairs: &[(f64, f64)], grid: &[f64]) -> EmpiricalCurves {
    let n = pairs.len();
    let mut out = EmpiricalCurves { chi: Vec::new(), chi_l: Vec::new(), k: Vec::new() };
    for &u in grid {
        let (mut up2, mut up_both, mut lo2, mut lo_both) = (0usize, 0usize, 0usize, 0usize);
        for &(a, b) in pairs {
            if b > 1.0 - u {
                up2 += 1;
                up_both += (a > 1.0 - u) as usize;
            }
            if b <= u {
                lo2 += 1;
                lo_both += (a <= u) as usize;
            }
        }
        out.chi.push((up2 > 0).then(|| up_both as f64 / up2 as f64));
        out.chi_l.push((lo2 > 0).then(|| lo_both as f64 / lo2 as f64));
        out.k.push((n > 0).then(|| lo_both as f64 / n as f64));
    }
    out
}

/// Pointwise 2.5% and 97.5% quantiles, `None` where no replicate is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub lo: Vec<Option<f64>>,
    pub hi: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelopes {
    pub b: usize,
    pub chi: Envelope,
    pub chi_l: Envelope,
    pub k: Envelope,
}

impl Envelopes {
    pub fn get(&self, c: Curve) -> &Envelope {
        match c {
            Curve::Chi => &self.chi,
            Curve::ChiL => &self.chi_l,
            Curve::K => &self.k,
        }
    }
}

/// Linear-interpolation sample quantile of sorted data.
fn quantile_sorted(s: &[f64], p: f64) -> f64 {
    let h = (s.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

fn envelope_of(reps: &[EmpiricalCurves], c: Curve, len: usize) -> Envelope {
    let mut lo = Vec::with_capacity(len);
    let mut hi = Vec::with_capacity(len);
    for g in 0..len {
        let mut v: Vec<f64> = reps.iter().filter_map(|r| r.get(c)[g]).collect();
        if v.is_empty() {
            lo.push(None);
            hi.push(None);
        } else {
            v.sort_by(f64::total_cmp);
            lo.push(Some(quantile_sorted(&v, 0.025)));
            hi.push(Some(quantile_sorted(&v, 0.975)));
        }
    }
    Envelope { lo, hi }
}

/// Posterior predictive envelopes: each of `b` replicates draws `tau` from
/// `tau_draws`, simulates `n` copula pairs and recomputes the curves.
pub fn predictive_envelopes(
    family: CopulaFamily,
    tau_draws: &[f64],
    n: usize,
    b: usize,
    grid: &[f64],
    seed: u64,
    exec: Exec,
) -> Result<Envelopes> {
    if tau_draws.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let reps: Vec<Result<EmpiricalCurves>> = exec.map(b, |r| {
        let mut rng = stream_rng(seed, r as u64);
        let tau = tau_draws[rng.random_range(0..tau_draws.len())];
        let spec = if family.has_tau() { CopulaSpec::new(family, tau)? } else { CopulaSpec::independence() };
        Ok(empirical_curves(&spec.sample_pairs(n, &mut rng), grid))
    });
    let reps: Vec<EmpiricalCurves> = reps.into_iter().collect::<Result<_>>()?;
    Ok(Envelopes {
        b,
        chi: envelope_of(&reps, Curve::Chi, grid.len()),
        chi_l: envelope_of(&reps, Curve::ChiL, grid.len()),
        k: envelope_of(&reps, Curve::K, grid.len()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceCurves {
    pub grid: Vec<f64>,
    /// Posterior means over draws, skipping draws where a value is undefined.
    pub mean: EmpiricalCurves,
    pub envelopes: Option<Envelopes>,
}

pub fn dependence_curves(pits: &[Vec<(f64, f64)>], grid: &[f64]) -> DependenceCurves {
    let per: Vec<EmpiricalCurves> = pits.iter().map(|p| empirical_curves(p, grid)).collect();
    let avg = |c: Curve| -> Vec<Option<f64>> {
        (0..grid.len())
            .map(|g| {
                let v: Vec<f64> = per.iter().filter_map(|e| e.get(c)[g]).collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            })
            .collect()
    };
    DependenceCurves {
        grid: grid.to_vec(),
        mean: EmpiricalCurves { chi: avg(Curve::Chi), chi_l: avg(Curve::ChiL), k: avg(Curve::K) },
        envelopes: None,
    }
}

impl DependenceCurves {
    /// Fraction of defined grid points where the mean curve leaves the
    /// envelope.
    pub fn violation_fraction(&self, c: Curve) -> Option<f64> {
        let env = self.envelopes.as_ref()?.get(c);
        let mut total = 0;
        let mut out = 0;
        for (g, m) in self.mean.get(c).iter().enumerate() {
            if let (Some(m), Some(lo), Some(hi)) = (m, env.lo[g], env.hi[g]) {
                total += 1;
                out += (*m < lo || *m > hi) as usize;
            }
        }
        (total > 0).then(|| out as f64 / total as f64)
    }

    /// Plot-ready rows `u,curve,mean,lo,hi`; undefined values are empty.
    pub fn write_csv<W: Write>(&self, curves: &[Curve], mut w: W) -> std::io::Result<()> {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(w, "u,curve,mean,lo,hi")?;
        for &c in curves {
            for (g, u) in self.grid.iter().enumerate() {
                let (lo, hi) = match &self.envelopes {
                    Some(e) => (e.get(c).lo[g], e.get(c).hi[g]),
                    None => (None, None),
                };
                writeln!(w, "{u},{},{},{},{}", c.name(), cell(self.mean.get(c)[g]), cell(lo), cell(hi))?;
            }
        }
        Ok(())
    }
}
