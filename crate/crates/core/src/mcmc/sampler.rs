//! Adaptive random-walk Metropolis-within-Gibbs.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{stream_rng, Exec};
use crate::model::{Dataset, ModelSpec};

use super::draws::{BlockAcceptance, Draws};
use super::target::{ModelTarget, Target};

/// Post-burn-in acceptance rates outside this band are reported.
pub const ACCEPT_BAND: (f64, f64) = (0.1, 0.8);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub n_chains: usize,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub target_accept: f64,
    /// Iterations between proposal-covariance refreshes of vector blocks
    /// during burn-in.
    pub adapt_window: usize,
    /// Standard deviation of the per-chain jitter added to the starting
    /// point on the unconstrained scale.
    pub init_jitter: f64,
    pub exec: Exec,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_chains: 4,
            n_iter: 40_000,
            burn_in: 15_000,
            thin: 25,
            seed: 1,
            target_accept: 0.44,
            adapt_window: 100,
            init_jitter: 0.1,
            exec: Exec::Parallel,
        }
    }
}

impl ChainConfig {
    /// 4 chains of 4000 iterations, burn-in 1500, thin 5.
    pub fn desk() -> Self {
        Self { n_iter: 4000, burn_in: 1500, thin: 5, ..Self::default() }
    }

    pub fn retained_per_chain(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.n_chains == 0 {
            return bad("n_chains must be at least 1".into());
        }
        if self.burn_in >= self.n_iter {
            return bad(format!("burn_in ({}) must be below n_iter ({})", self.burn_in, self.n_iter));
        }
        if self.thin == 0 {
            return bad("thin must be at least 1".into());
        }
        if self.retained_per_chain() == 0 {
            return bad("no draws retained: (n_iter - burn_in) / thin is 0".into());
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad(format!("target_accept {} outside (0,1)", self.target_accept));
        }
        if self.adapt_window == 0 {
            return bad("adapt_window must be at least 1".into());
        }
        if !(self.init_jitter >= 0.0) {
            return bad("init_jitter must be non-negative".into());
        }
        Ok(())
    }
}

struct BlockState {
    indices: Vec<usize>,
    log_scale: f64,
    /// Lower Cholesky factor of the proposal shape, for vector blocks.
    chol: Option<DMatrix<f64>>,
    adapted_shape: bool,
    n_prop: usize,
    accepted: usize,
    proposed: usize,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
    n_obs: usize,
}

impl BlockState {
    fn new(indices: Vec<usize>) -> Self {
        let d = indices.len();
        Self {
            log_scale: (0.1f64).ln(),
            chol: (d > 1).then(|| DMatrix::identity(d, d)),
            adapted_shape: false,
            n_prop: 0,
            accepted: 0,
            proposed: 0,
            mean: DVector::zeros(d),
            m2: DMatrix::zeros(d, d),
            n_obs: 0,
            indices,
        }
    }

    fn observe(&mut self, x: &[f64]) {
        let v = DVector::from_iterator(self.indices.len(), self.indices.iter().map(|&k| x[k]));
        self.n_obs += 1;
        let delta = &v - &self.mean;
        self.mean += &delta / self.n_obs as f64;
        let delta2 = &v - &self.mean;
        self.m2 += &delta * delta2.transpose();
    }

    fn refresh_shape(&mut self) {
        let d = self.indices.len();
        if self.n_obs < 2 * d + 10 {
            return;
        }
        let cov = &self.m2 / (self.n_obs - 1) as f64;
        let scaled = cov * (2.38f64.powi(2) / d as f64) + DMatrix::identity(d, d) * 1e-10;
        if let Some(ch) = scaled.cholesky() {
            self.chol = Some(ch.l());
            if !self.adapted_shape {
                self.adapted_shape = true;
                self.log_scale = 0.0;
            }
        }
    }
}

/// Retained unconstrained draws from one chain.
struct ChainOutput {
    rows: Vec<Vec<f64>>,
    iters: Vec<usize>,
    acceptance: Vec<f64>,
}

fn run_one<T: Target>(target: &T, x0: Vec<f64>, cfg: &ChainConfig, chain: usize, rng: &mut ChaCha8Rng) -> Result<ChainOutput> {
    let mut x = x0;
    let (mut lp, mut cache) = target.init(&x);
    if !lp.is_finite() {
        return Err(Error::NonFiniteInit { chain });
    }
    let mut scratch = cache.clone();
    let mut blocks: Vec<BlockState> = target.blocks().into_iter().map(|b| BlockState::new(b.indices)).collect();
    let mut prop = x.clone();
    let adapt_start = cfg.burn_in / 4;
    let mut out = ChainOutput { rows: Vec::new(), iters: Vec::new(), acceptance: Vec::new() };

    for t in 0..cfg.n_iter {
        let adapting = t < cfg.burn_in;
        for (b, bs) in blocks.iter_mut().enumerate() {
            let scale = bs.log_scale.exp();
            match &bs.chol {
                None => {
                    let k = bs.indices[0];
                    prop[k] = x[k] + scale * rng.sample::<f64, _>(StandardNormal);
                }
                Some(l) => {
                    let z = DVector::from_fn(bs.indices.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                    let step = l * z * scale;
                    for (a, &k) in bs.indices.iter().enumerate() {
                        prop[k] = x[k] + step[a];
                    }
                }
            }
            let lp_new = target.propose(&prop, b, &cache, &mut scratch);
            let log_alpha = lp_new - lp;
            let alpha = if log_alpha.is_nan() { 0.0 } else { log_alpha.min(0.0).exp() };
            let accept = rng.random::<f64>() < alpha;
            if accept {
                target.commit(b, &mut cache, &mut scratch);
                lp = lp_new;
                for &k in &bs.indices {
                    x[k] = prop[k];
                }
            } else {
                for &k in &bs.indices {
                    prop[k] = x[k];
                }
            }
            if adapting {
                bs.n_prop += 1;
                let gamma = (bs.n_prop as f64).powf(-0.6);
                bs.log_scale += gamma * (alpha - cfg.target_accept);
            } else {
                bs.proposed += 1;
                bs.accepted += accept as usize;
            }
        }
        // Re-sum the cached terms once per sweep so incremental updates
        // cannot drift.
        lp = target.resum(&x, &mut cache);

        if adapting {
            if t >= adapt_start {
                for bs in blocks.iter_mut().filter(|b| b.chol.is_some()) {
                    bs.observe(&x);
                }
            }
            if (t + 1) % cfg.adapt_window == 0 {
                for bs in blocks.iter_mut().filter(|b| b.chol.is_some()) {
                    bs.refresh_shape();
                }
            }
        } else if (t + 1 - cfg.burn_in) % cfg.thin == 0 {
            out.rows.push(x.clone());
            out.iters.push(t + 1);
        }
    }
    out.acceptance = blocks.iter().map(|b| b.accepted as f64 / b.proposed.max(1) as f64).collect();
    Ok(out)
}

/// Runs `cfg.n_chains` chains on `target` and returns the retained draws on
/// the target's own scale. `init(chain, rng)` supplies each starting point.
pub fn sample_target<T, I>(target: &T, names: Vec<String>, init: I, cfg: &ChainConfig) -> Result<Draws>
where
    T: Target,
    I: Fn(usize, &mut ChaCha8Rng) -> Vec<f64> + Sync,
{
    cfg.validate()?;
    if names.len() != target.dim() {
        return Err(Error::Invalid(format!("{} names for a {}-dimensional target", names.len(), target.dim())));
    }
    let outputs = cfg.exec.map(cfg.n_chains, |c| {
        let mut rng = stream_rng(cfg.seed, c as u64);
        let x0 = init(c, &mut rng);
        run_one(target, x0, cfg, c, &mut rng)
    });
    let block_names: Vec<String> = target.blocks().into_iter().map(|b| b.name).collect();
    let mut draws = Draws::empty(names, cfg.n_chains);
    for (c, out) in outputs.into_iter().enumerate() {
        let out = out?;
        for (row, it) in out.rows.into_iter().zip(out.iters) {
            draws.push(c, it, &row);
        }
        for (name, rate) in block_names.iter().zip(out.acceptance) {
            draws.acceptance.push(BlockAcceptance { chain: c, block: name.clone(), rate });
        }
    }
    draws.warnings = draws
        .acceptance
        .iter()
        .filter(|a| !(ACCEPT_BAND.0..=ACCEPT_BAND.1).contains(&a.rate))
        .map(|a| format!("chain {} block {}: acceptance rate {:.3} outside [0.1, 0.8]", a.chain, a.block, a.rate))
        .collect();
    Ok(draws)
}

/// Posterior sampling for a copula regression model. Draws are returned in
/// the natural parameterization.
pub fn run_chains(data: &Dataset, spec: &ModelSpec, cfg: &ChainConfig) -> Result<Draws> {
    spec.check_covariates(&data.covariates)?;
    let target = ModelTarget::new(data, spec);
    let tf = target.transform();
    let z0 = tf.forward(&tf.layout.flatten(&target.initial_state()))?;
    let jitter = cfg.init_jitter;
    let mut draws = sample_target(
        &target,
        tf.layout.names(),
        |_, rng| z0.iter().map(|z| z + jitter * rng.sample::<f64, _>(StandardNormal)).collect(),
        cfg,
    )?;
    let d = tf.dim();
    let mut nat = vec![0.0; d];
    for s in 0..draws.len() {
        tf.inverse_into(draws.row(s), &mut nat);
        draws.row_mut(s).copy_from_slice(&nat);
    }
    draws.spec = Some(spec.clone());
    draws.n_groups = data.covariates.n_groups;
    Ok(draws)
}
