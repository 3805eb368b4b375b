//! Block-structured log targets.
//!
//! A target exposes a partition of its coordinates into update blocks and a
//! cache of reusable work, so a Metropolis step on one block only recomputes
//! the terms that block touches.

use crate::copulas::{coords, CopulaSpec};
use crate::model::{
    linear_predictor, log_prior, margin_term_logs, random_effects_ln_density, Dataset, ModelSpec, ParameterState,
};
use crate::special::{inv_logit, logit};

use super::transform::Transform;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub indices: Vec<usize>,
}

pub trait Target: Sync {
    type Cache: Clone + Send;

    fn dim(&self) -> usize;
    fn blocks(&self) -> Vec<Block>;

    /// Log target and a fresh cache at `x`.
    fn init(&self, x: &[f64]) -> (f64, Self::Cache);

    /// Log target at `x`, which differs from the cached point only in
    /// `block`. Work needed by `commit` goes into `scratch`.
    fn propose(&self, x: &[f64], block: usize, cache: &Self::Cache, scratch: &mut Self::Cache) -> f64;

    fn commit(&self, block: usize, cache: &mut Self::Cache, scratch: &mut Self::Cache);

    /// Log target at the cached point `x`, re-summed from the cache.
    fn resum(&self, x: &[f64], cache: &mut Self::Cache) -> f64 {
        let (lp, fresh) = self.init(x);
        *cache = fresh;
        lp
    }

    /// Uncached evaluation.
    fn log_density(&self, x: &[f64]) -> f64 {
        self.init(x).0
    }
}

/// A plain closure target, one block per coordinate unless given.
pub struct FnTarget<F> {
    dim: usize,
    f: F,
    blocks: Vec<Block>,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnTarget<F> {
    pub fn new(dim: usize, f: F) -> Self {
        let blocks = (0..dim).map(|k| Block { name: format!("x{k}"), indices: vec![k] }).collect();
        Self { dim, f, blocks }
    }

    pub fn with_blocks(dim: usize, f: F, blocks: Vec<Block>) -> Self {
        Self { dim, f, blocks }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Target for FnTarget<F> {
    type Cache = ();

    fn dim(&self) -> usize {
        self.dim
    }
    fn blocks(&self) -> Vec<Block> {
        self.blocks.clone()
    }
    fn init(&self, x: &[f64]) -> (f64, ()) {
        ((self.f)(x), ())
    }
    fn propose(&self, x: &[f64], _: usize, _: &(), _: &mut ()) -> f64 {
        (self.f)(x)
    }
    fn commit(&self, _: usize, _: &mut (), _: &mut ()) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    /// beta_j, phi_j or rho_j: every unit of margin j.
    Margin(usize),
    /// sigma_j: only the random-effect and prior terms.
    Global,
    Tau,
    /// b_jk: units of group k in margin j.
    Group(usize, usize),
}

/// Per-unit terms of the complete-data likelihood. `w` holds the copula
/// coordinates of each PIT.
#[derive(Debug, Clone)]
pub struct UnitCache {
    lf: [Vec<f64>; 2],
    w: [Vec<[f64; 2]>; 2],
    lc: Vec<f64>,
    sum_lf: [f64; 2],
    sum_lc: f64,
}

impl UnitCache {
    fn new(n: usize) -> Self {
        Self {
            lf: [vec![0.0; n], vec![0.0; n]],
            w: [vec![[0.0; 2]; n], vec![[0.0; 2]; n]],
            lc: vec![0.0; n],
            sum_lf: [0.0; 2],
            sum_lc: 0.0,
        }
    }

    fn units_sum(&self) -> f64 {
        self.sum_lf[0] + self.sum_lf[1] + self.sum_lc
    }
}

/// Log posterior of a copula regression model on the unconstrained scale,
/// including the log-Jacobian.
pub struct ModelTarget<'a> {
    data: &'a Dataset,
    spec: &'a ModelSpec,
    tf: Transform,
    members: Vec<Vec<usize>>,
    blocks: Vec<Block>,
    roles: Vec<Role>,
    ln_y: [Vec<f64>; 2],
    ln_1my: [Vec<f64>; 2],
    with_cdf: bool,
}

impl<'a> ModelTarget<'a> {
    pub fn new(data: &'a Dataset, spec: &'a ModelSpec) -> Self {
        let cov = &data.covariates;
        let tf = Transform::new(spec, cov.n_groups);
        let names = tf.layout.names();
        let pos = |name: &str| names.iter().position(|n| n == name);
        let mut blocks = Vec::new();
        let mut roles = Vec::new();
        let mut push = |name: String, indices: Vec<usize>, role: Role| {
            blocks.push(Block { name, indices });
            roles.push(role);
        };
        let mut start = 0;
        for j in 0..2 {
            let p = spec.p(j);
            push(format!("beta{}", j + 1), (start..start + p).collect(), Role::Margin(j));
            start += p;
        }
        for j in 0..2 {
            if let Some(k) = pos(&format!("phi{}", j + 1)) {
                push(format!("phi{}", j + 1), vec![k], Role::Margin(j));
            }
        }
        for j in 0..2 {
            let name = format!("rho{}", j + 1);
            push(name.clone(), vec![pos(&name).unwrap()], Role::Margin(j));
        }
        if spec.random_intercepts {
            for j in 0..2 {
                let name = format!("sigma{}", j + 1);
                push(name.clone(), vec![pos(&name).unwrap()], Role::Global);
            }
        }
        if let Some(k) = pos("tau") {
            push("tau".into(), vec![k], Role::Tau);
        }
        if spec.random_intercepts {
            for j in 0..2 {
                for k in 0..cov.n_groups {
                    let name = format!("b{}_{}", j + 1, k + 1);
                    push(name.clone(), vec![pos(&name).unwrap()], Role::Group(j, k));
                }
            }
        }
        let logs = |f: fn(f64) -> f64, j: usize| data.y(j).iter().map(|&y| f(y)).collect::<Vec<_>>();
        Self {
            data,
            spec,
            tf,
            members: cov.members(),
            blocks,
            roles,
            ln_y: [logs(f64::ln, 0), logs(f64::ln, 1)],
            ln_1my: [logs(|y| (-y).ln_1p(), 0), logs(|y| (-y).ln_1p(), 1)],
            with_cdf: spec.copula.has_tau(),
        }
    }

    pub fn transform(&self) -> &Transform {
        &self.tf
    }

    pub fn state(&self, z: &[f64]) -> ParameterState {
        self.tf.layout.unflatten(&self.tf.inverse(z)).expect("dimension checked by the sampler")
    }

    /// Starting point: least squares of `logit(y)` on the design for each
    /// `beta_j`, then fixed values inside every domain.
    pub fn initial_state(&self) -> ParameterState {
        let cov = &self.data.covariates;
        let beta = |j: usize| {
            let x = cov.design(j);
            let p = x.cols();
            let mut xtx = nalgebra::DMatrix::<f64>::zeros(p, p);
            let mut xty = nalgebra::DVector::<f64>::zeros(p);
            for i in 0..x.rows() {
                let r = x.row(i);
                let t = logit(self.data.y(j)[i]);
                for a in 0..p {
                    xty[a] += r[a] * t;
                    for b in 0..p {
                        xtx[(a, b)] += r[a] * r[b];
                    }
                }
            }
            match xtx.cholesky() {
                Some(ch) => ch.solve(&xty).iter().copied().collect(),
                None => vec![0.0; p],
            }
        };
        let has_tau = self.spec.copula.has_tau();
        let tau = match self.spec.copula {
            crate::copulas::CopulaFamily::Gaussian => 0.0,
            _ if has_tau => 0.1,
            _ => 0.0,
        };
        let g = if self.spec.random_intercepts { cov.n_groups } else { 0 };
        ParameterState {
            beta1: beta(0),
            beta2: beta(1),
            phi1: if self.spec.has_phi(0) { 0.1 } else { 0.0 },
            phi2: if self.spec.has_phi(1) { 0.1 } else { 0.0 },
            rho1: 10.0,
            rho2: 10.0,
            tau,
            sigma1: 0.5,
            sigma2: 0.5,
            b1: vec![0.0; g],
            b2: vec![0.0; g],
        }
    }

    fn rest(&self, z: &[f64], st: &ParameterState) -> f64 {
        let lp = log_prior(st, self.spec);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        let re = if self.spec.random_intercepts { random_effects_ln_density(st) } else { 0.0 };
        lp + re + self.tf.log_jacobian(z)
    }

    fn copula(&self, st: &ParameterState) -> Option<CopulaSpec> {
        st.copula(self.spec).ok()
    }

    /// Margin-`j` terms for unit `i` into `out`; false if invalid.
    #[inline]
    fn margin_only(&self, st: &ParameterState, j: usize, i: usize, out: &mut UnitCache) -> bool {
        let cov = &self.data.covariates;
        let b = st.intercept(self.spec, j, cov.group[i]);
        let mu = inv_logit(linear_predictor(st.beta(j), cov.design(j).row(i)) + b);
        let y = self.data.y(j)[i];
        match margin_term_logs(mu, st.phi(j), st.rho(j), y, self.ln_y[j][i], self.ln_1my[j][i], self.with_cdf) {
            Some((lf, u, _)) => {
                out.lf[j][i] = lf;
                if self.with_cdf {
                    out.w[j][i] = coords(self.spec.copula, u);
                }
                true
            }
            None => false,
        }
    }

    /// Margin-`j` and copula terms for unit `i`, the other margin's
    /// coordinates taken as `other`.
    #[inline]
    fn unit_margin(&self, st: &ParameterState, copula: &CopulaSpec, j: usize, i: usize, other: [f64; 2], out: &mut UnitCache) -> bool {
        if !self.margin_only(st, j, i, out) {
            return false;
        }
        out.lc[i] = if !self.with_cdf {
            0.0
        } else if j == 0 {
            copula.log_density_coords(out.w[0][i], other)
        } else {
            copula.log_density_coords(other, out.w[1][i])
        };
        true
    }

    fn finish(&self, units: f64, rest: f64) -> f64 {
        let v = units + rest;
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }
}

impl Target for ModelTarget<'_> {
    type Cache = UnitCache;

    fn dim(&self) -> usize {
        self.tf.dim()
    }

    fn blocks(&self) -> Vec<Block> {
        self.blocks.clone()
    }

    fn init(&self, z: &[f64]) -> (f64, UnitCache) {
        let n = self.data.n();
        let mut c = UnitCache::new(n);
        let st = self.state(z);
        let rest = self.rest(z, &st);
        let Some(copula) = self.copula(&st) else {
            return (f64::NEG_INFINITY, c);
        };
        if rest == f64::NEG_INFINITY {
            return (rest, c);
        }
        for i in 0..n {
            if !self.margin_only(&st, 0, i, &mut c) {
                return (f64::NEG_INFINITY, c);
            }
            let w1 = c.w[0][i];
            if !self.unit_margin(&st, &copula, 1, i, w1, &mut c) {
                return (f64::NEG_INFINITY, c);
            }
        }
        c.sum_lf = [c.lf[0].iter().sum(), c.lf[1].iter().sum()];
        c.sum_lc = c.lc.iter().sum();
        (self.finish(c.units_sum(), rest), c)
    }

    fn propose(&self, z: &[f64], block: usize, cache: &UnitCache, scratch: &mut UnitCache) -> f64 {
        let st = self.state(z);
        let rest = self.rest(z, &st);
        if rest == f64::NEG_INFINITY {
            return rest;
        }
        let Some(copula) = self.copula(&st) else {
            return f64::NEG_INFINITY;
        };
        match self.roles[block] {
            Role::Global => {
                scratch.sum_lf = cache.sum_lf;
                scratch.sum_lc = cache.sum_lc;
                self.finish(cache.units_sum(), rest)
            }
            Role::Margin(j) => {
                let o = 1 - j;
                for i in 0..self.data.n() {
                    if !self.unit_margin(&st, &copula, j, i, cache.w[o][i], scratch) {
                        return f64::NEG_INFINITY;
                    }
                }
                scratch.sum_lf[j] = scratch.lf[j].iter().sum();
                scratch.sum_lf[o] = cache.sum_lf[o];
                scratch.sum_lc = scratch.lc.iter().sum();
                self.finish(scratch.sum_lf[0] + scratch.sum_lf[1] + scratch.sum_lc, rest)
            }
            Role::Tau => {
                for i in 0..self.data.n() {
                    scratch.lc[i] = copula.log_density_coords(cache.w[0][i], cache.w[1][i]);
                }
                scratch.sum_lf = cache.sum_lf;
                scratch.sum_lc = scratch.lc.iter().sum();
                self.finish(scratch.units_sum(), rest)
            }
            Role::Group(j, k) => {
                let o = 1 - j;
                let (mut dlf, mut dlc) = (0.0, 0.0);
                for &i in &self.members[k] {
                    if !self.unit_margin(&st, &copula, j, i, cache.w[o][i], scratch) {
                        return f64::NEG_INFINITY;
                    }
                    dlf += scratch.lf[j][i] - cache.lf[j][i];
                    dlc += scratch.lc[i] - cache.lc[i];
                }
                scratch.sum_lf = cache.sum_lf;
                scratch.sum_lf[j] += dlf;
                scratch.sum_lc = cache.sum_lc + dlc;
                self.finish(scratch.units_sum(), rest)
            }
        }
    }

    fn resum(&self, z: &[f64], cache: &mut UnitCache) -> f64 {
        cache.sum_lf = [cache.lf[0].iter().sum(), cache.lf[1].iter().sum()];
        cache.sum_lc = cache.lc.iter().sum();
        let st = self.state(z);
        self.finish(cache.units_sum(), self.rest(z, &st))
    }

    fn commit(&self, block: usize, cache: &mut UnitCache, scratch: &mut UnitCache) {
        match self.roles[block] {
            Role::Global => {}
            Role::Margin(j) => {
                std::mem::swap(&mut cache.lf[j], &mut scratch.lf[j]);
                std::mem::swap(&mut cache.w[j], &mut scratch.w[j]);
                std::mem::swap(&mut cache.lc, &mut scratch.lc);
            }
            Role::Tau => std::mem::swap(&mut cache.lc, &mut scratch.lc),
            Role::Group(j, k) => {
                for &i in &self.members[k] {
                    cache.lf[j][i] = scratch.lf[j][i];
                    cache.w[j][i] = scratch.w[j][i];
                    cache.lc[i] = scratch.lc[i];
                }
            }
        }
        cache.sum_lf = scratch.sum_lf;
        cache.sum_lc = scratch.sum_lc;
    }
}
