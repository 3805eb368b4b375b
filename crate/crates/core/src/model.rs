//! Copula mixed-effects regression for paired proportions.
//!
//! Each margin has a logit-link mean `mu_ji = inv_logit(x_ji' beta_j + b_jk(i))`
//! with per-margin group intercepts, constant `(phi_j, rho_j)`, and the two
//! margins are coupled by a one-parameter copula on the PIT scale.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::copulas::{CopulaFamily, CopulaSpec};
use crate::error::{domain, Error, Result};
use crate::rectbeta::RectBetaParams;
use crate::special::{inv_logit, ln_gamma};

/// PITs are clamped into this interval before the copula is evaluated.
pub const PIT_CLAMP: f64 = 1e-12;

/// Row-major design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Design {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Invalid(format!(
                "design has {} values, expected {rows} x {cols}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "non-finite design value at row {}, column {}",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Invalid("ragged design rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Intercept column followed by `columns`.
    pub fn with_intercept(columns: &[&[f64]], rows: usize) -> Result<Self> {
        let cols = columns.len() + 1;
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            data.push(1.0);
            for c in columns {
                data.push(c[i]);
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Covariates and grouping, without responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    pub x1: Design,
    pub x2: Design,
    /// Zero-based group index per unit.
    pub group: Vec<usize>,
    pub n_groups: usize,
}

impl Covariates {
    pub fn new(x1: Design, x2: Design, group: Vec<usize>) -> Result<Self> {
        let n = x1.rows();
        if x2.rows() != n || group.len() != n {
            return Err(Error::Invalid(format!(
                "row count mismatch: x1 {}, x2 {}, group {}",
                n,
                x2.rows(),
                group.len()
            )));
        }
        let n_groups = group.iter().max().map_or(0, |g| g + 1);
        let mut seen = vec![false; n_groups];
        for &g in &group {
            seen[g] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Invalid(format!("group indices are not dense: group {missing} is empty")));
        }
        Ok(Self { x1, x2, group, n_groups })
    }

    /// All units in a single group.
    pub fn ungrouped(x1: Design, x2: Design) -> Result<Self> {
        let n = x1.rows();
        Self::new(x1, x2, vec![0; n])
    }

    pub fn n(&self) -> usize {
        self.x1.rows()
    }

    pub fn design(&self, margin: usize) -> &Design {
        if margin == 0 {
            &self.x1
        } else {
            &self.x2
        }
    }

    /// Units belonging to each group.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.n_groups];
        for (i, &g) in self.group.iter().enumerate() {
            m[g].push(i);
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub covariates: Covariates,
}

impl Dataset {
    pub fn new(y1: Vec<f64>, y2: Vec<f64>, covariates: Covariates) -> Result<Self> {
        let n = covariates.n();
        if y1.len() != n || y2.len() != n {
            return Err(Error::Invalid(format!(
                "response lengths ({}, {}) do not match {n} covariate rows",
                y1.len(),
                y2.len()
            )));
        }
        for (j, y) in [&y1, &y2].into_iter().enumerate() {
            if let Some(i) = y.iter().position(|&v| !(v > 0.0 && v < 1.0)) {
                return Err(Error::Invalid(format!(
                    "response y{} at unit {i} is {}, must lie in (0,1)",
                    j + 1,
                    y[i]
                )));
            }
        }
        Ok(Self { y1, y2, covariates })
    }

    pub fn n(&self) -> usize {
        self.y1.len()
    }

    pub fn y(&self, margin: usize) -> &[f64] {
        if margin == 0 {
            &self.y1
        } else {
            &self.y2
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginFamily {
    /// Mean-precision beta (`phi` pinned at 0).
    Beta,
    RectBeta,
}

impl FromStr for MarginFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "beta" => Ok(MarginFamily::Beta),
            "rect-beta" | "rectbeta" | "r-beta" => Ok(MarginFamily::RectBeta),
            other => Err(Error::Invalid(format!("unknown margin family '{other}' (expected beta or rect-beta)"))),
        }
    }
}

/// Prior hyperparameters; the defaults are the weakly informative choices
/// used throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    /// Normal(0, beta_sd²) on every fixed effect.
    pub beta_sd: f64,
    /// Half-t(df, 0, scale) on every random-intercept SD.
    pub sigma_df: f64,
    pub sigma_scale: f64,
    /// Gamma(shape, rate) on every precision.
    pub rho_shape: f64,
    pub rho_rate: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { beta_sd: 100.0, sigma_df: 3.0, sigma_scale: 2.5, rho_shape: 1e-4, rho_rate: 1e-4 }
    }
}

/// The five model variants compared in practice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "Beta_Indep")]
    BetaIndep,
    #[serde(rename = "RectBeta_Indep")]
    RectBetaIndep,
    #[serde(rename = "RectBeta_Gauss")]
    RectBetaGauss,
    #[serde(rename = "RectBeta_Gumbel")]
    RectBetaGumbel,
    #[serde(rename = "RectBeta_Clayton")]
    RectBetaClayton,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::BetaIndep,
        Variant::RectBetaIndep,
        Variant::RectBetaGauss,
        Variant::RectBetaGumbel,
        Variant::RectBetaClayton,
    ];

    pub fn margin(self) -> MarginFamily {
        match self {
            Variant::BetaIndep => MarginFamily::Beta,
            _ => MarginFamily::RectBeta,
        }
    }

    pub fn copula(self) -> CopulaFamily {
        match self {
            Variant::BetaIndep | Variant::RectBetaIndep => CopulaFamily::Independence,
            Variant::RectBetaGauss => CopulaFamily::Gaussian,
            Variant::RectBetaGumbel => CopulaFamily::Gumbel,
            Variant::RectBetaClayton => CopulaFamily::Clayton,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::BetaIndep => "Beta_Indep",
            Variant::RectBetaIndep => "RectBeta_Indep",
            Variant::RectBetaGauss => "RectBeta_Gauss",
            Variant::RectBetaGumbel => "RectBeta_Gumbel",
            Variant::RectBetaClayton => "RectBeta_Clayton",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['_', '-'], "");
        Variant::ALL
            .into_iter()
            .find(|v| v.to_string().to_ascii_lowercase().replace('_', "") == key)
            .ok_or_else(|| Error::Invalid(format!("unknown model variant '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub margins: [MarginFamily; 2],
    pub copula: CopulaFamily,
    pub p1: usize,
    pub p2: usize,
    pub random_intercepts: bool,
    #[serde(default)]
    pub priors: PriorConfig,
}

impl ModelSpec {
    pub fn new(margins: [MarginFamily; 2], copula: CopulaFamily, p1: usize, p2: usize, random_intercepts: bool) -> Self {
        Self { margins, copula, p1, p2, random_intercepts, priors: PriorConfig::default() }
    }

    pub fn variant(v: Variant, p1: usize, p2: usize, random_intercepts: bool) -> Self {
        Self::new([v.margin(); 2], v.copula(), p1, p2, random_intercepts)
    }

    /// The variant name when the spec is one of the five variants,
    /// otherwise `<margin1>/<margin2>_<copula>`.
    pub fn label(&self) -> String {
        let short = |m: MarginFamily| if m == MarginFamily::Beta { "Beta" } else { "RectBeta" };
        if let Some(v) = Variant::ALL.into_iter().find(|v| [v.margin(); 2] == self.margins && v.copula() == self.copula) {
            return v.to_string();
        }
        let cop = match self.copula {
            CopulaFamily::Independence => "Indep",
            CopulaFamily::Gaussian => "Gauss",
            CopulaFamily::Gumbel => "Gumbel",
            CopulaFamily::Clayton => "Clayton",
        };
        if self.margins[0] == self.margins[1] {
            format!("{}_{cop}", short(self.margins[0]))
        } else {
            format!("{}/{}_{cop}", short(self.margins[0]), short(self.margins[1]))
        }
    }

    pub fn p(&self, margin: usize) -> usize {
        if margin == 0 {
            self.p1
        } else {
            self.p2
        }
    }

    pub fn has_phi(&self, margin: usize) -> bool {
        self.margins[margin] == MarginFamily::RectBeta
    }

    pub fn check_covariates(&self, cov: &Covariates) -> Result<()> {
        if cov.x1.cols() != self.p1 || cov.x2.cols() != self.p2 {
            return Err(Error::Invalid(format!(
                "design has ({}, {}) columns but the model expects ({}, {})",
                cov.x1.cols(),
                cov.x2.cols(),
                self.p1,
                self.p2
            )));
        }
        Ok(())
    }
}

/// A full point in parameter space.
///
/// `phi_j` is ignored (and must be 0) for beta margins, `tau` for the
/// independence copula, and `sigma_j`, `b_j` when there are no random
/// intercepts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub phi1: f64,
    pub phi2: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub tau: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
}

impl ParameterState {
    pub fn beta(&self, margin: usize) -> &[f64] {
        if margin == 0 {
            &self.beta1
        } else {
            &self.beta2
        }
    }
    pub fn phi(&self, margin: usize) -> f64 {
        if margin == 0 {
            self.phi1
        } else {
            self.phi2
        }
    }
    pub fn rho(&self, margin: usize) -> f64 {
        if margin == 0 {
            self.rho1
        } else {
            self.rho2
        }
    }
    pub fn sigma(&self, margin: usize) -> f64 {
        if margin == 0 {
            self.sigma1
        } else {
            self.sigma2
        }
    }
    pub fn b(&self, margin: usize) -> &[f64] {
        if margin == 0 {
            &self.b1
        } else {
            &self.b2
        }
    }

    /// Random intercept of margin `j` for group `k`, 0 without random effects.
    #[inline]
    pub fn intercept(&self, spec: &ModelSpec, margin: usize, k: usize) -> f64 {
        if spec.random_intercepts {
            self.b(margin)[k]
        } else {
            0.0
        }
    }

    pub fn copula(&self, spec: &ModelSpec) -> Result<CopulaSpec> {
        if spec.copula.has_tau() {
            CopulaSpec::new(spec.copula, self.tau)
        } else {
            Ok(CopulaSpec::independence())
        }
    }

    /// Checks dimensions and domains against `spec`.
    pub fn validate(&self, spec: &ModelSpec, n_groups: usize) -> Result<()> {
        if self.beta1.len() != spec.p1 || self.beta2.len() != spec.p2 {
            return Err(Error::Invalid(format!(
                "coefficient lengths ({}, {}) do not match ({}, {})",
                self.beta1.len(),
                self.beta2.len(),
                spec.p1,
                spec.p2
            )));
        }
        for j in 0..2 {
            let phi = self.phi(j);
            if spec.has_phi(j) {
                if !(0.0..1.0).contains(&phi) {
                    return Err(domain!("phi{} = {phi} outside [0,1)", j + 1));
                }
            } else if phi != 0.0 {
                return Err(domain!("phi{} must be 0 for a beta margin", j + 1));
            }
            if !(self.rho(j) > 0.0) {
                return Err(domain!("rho{} = {} must be positive", j + 1, self.rho(j)));
            }
            if spec.random_intercepts {
                if !(self.sigma(j) > 0.0) {
                    return Err(domain!("sigma{} = {} must be positive", j + 1, self.sigma(j)));
                }
                if self.b(j).len() != n_groups {
                    return Err(Error::Invalid(format!(
                        "b{} has {} entries, expected {n_groups}",
                        j + 1,
                        self.b(j).len()
                    )));
                }
            }
        }
        if spec.copula.has_tau() && !spec.copula.tau_in_range(self.tau) {
            return Err(domain!("tau = {} outside the {} range", self.tau, spec.copula));
        }
        Ok(())
    }
}

/// Natural-space parameter layout: names and flattening order.
///
/// Order: beta1, beta2, phi1, phi2, rho1, rho2, sigma1, sigma2, tau, b1, b2,
/// with absent components skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub spec: ModelSpec,
    pub n_groups: usize,
}

impl ParamLayout {
    pub fn new(spec: &ModelSpec, n_groups: usize) -> Self {
        Self { spec: spec.clone(), n_groups }
    }

    pub fn names(&self) -> Vec<String> {
        let s = &self.spec;
        let mut names = Vec::new();
        for j in 0..2 {
            for c in 0..s.p(j) {
                names.push(format!("beta{}_{c}", j + 1));
            }
        }
        for j in 0..2 {
            if s.has_phi(j) {
                names.push(format!("phi{}", j + 1));
            }
        }
        names.push("rho1".into());
        names.push("rho2".into());
        if s.random_intercepts {
            names.push("sigma1".into());
            names.push("sigma2".into());
        }
        if s.copula.has_tau() {
            names.push("tau".into());
        }
        if s.random_intercepts {
            for j in 0..2 {
                for k in 0..self.n_groups {
                    names.push(format!("b{}_{}", j + 1, k + 1));
                }
            }
        }
        names
    }

    pub fn dim(&self) -> usize {
        let s = &self.spec;
        s.p1 + s.p2
            + s.has_phi(0) as usize
            + s.has_phi(1) as usize
            + 2
            + if s.random_intercepts { 2 + 2 * self.n_groups } else { 0 }
            + s.copula.has_tau() as usize
    }

    pub fn flatten(&self, st: &ParameterState) -> Vec<f64> {
        let s = &self.spec;
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&st.beta1);
        v.extend_from_slice(&st.beta2);
        for j in 0..2 {
            if s.has_phi(j) {
                v.push(st.phi(j));
            }
        }
        v.push(st.rho1);
        v.push(st.rho2);
        if s.random_intercepts {
            v.push(st.sigma1);
            v.push(st.sigma2);
        }
        if s.copula.has_tau() {
            v.push(st.tau);
        }
        if s.random_intercepts {
            v.extend_from_slice(&st.b1);
            v.extend_from_slice(&st.b2);
        }
        v
    }

    pub fn unflatten(&self, v: &[f64]) -> Result<ParameterState> {
        if v.len() != self.dim() {
            return Err(Error::Invalid(format!("parameter vector has {} entries, expected {}", v.len(), self.dim())));
        }
        let s = &self.spec;
        let mut it = v.iter().copied();
        let mut take = |n: usize| -> Vec<f64> { (&mut it).take(n).collect() };
        let beta1 = take(s.p1);
        let beta2 = take(s.p2);
        let phi1 = if s.has_phi(0) { take(1)[0] } else { 0.0 };
        let phi2 = if s.has_phi(1) { take(1)[0] } else { 0.0 };
        let rho = take(2);
        let (sigma1, sigma2) = if s.random_intercepts {
            let sg = take(2);
            (sg[0], sg[1])
        } else {
            (1.0, 1.0)
        };
        let tau = if s.copula.has_tau() { take(1)[0] } else { 0.0 };
        let (b1, b2) = if s.random_intercepts {
            (take(self.n_groups), take(self.n_groups))
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(ParameterState { beta1, beta2, phi1, phi2, rho1: rho[0], rho2: rho[1], tau, sigma1, sigma2, b1, b2 })
    }
}

/// `inv_logit(x' beta + b)`.
pub fn margin_mean(beta: &[f64], x: &[f64], b: f64) -> f64 {
    inv_logit(linear_predictor(beta, x) + b)
}

#[inline]
pub(crate) fn linear_predictor(beta: &[f64], x: &[f64]) -> f64 {
    beta.iter().zip(x).map(|(b, x)| b * x).sum()
}

/// Margin parameters `psi_ji = (mu_ji, phi_j, rho_j)` for unit `i`.
pub fn unit_margin(
    state: &ParameterState,
    cov: &Covariates,
    spec: &ModelSpec,
    margin: usize,
    i: usize,
) -> Result<RectBetaParams> {
    let b = state.intercept(spec, margin, cov.group[i]);
    let mu = margin_mean(state.beta(margin), cov.design(margin).row(i), b);
    RectBetaParams::new(mu, state.phi(margin), state.rho(margin))
}

/// Log-density and clamped PIT of one response, `None` when the margin is
/// numerically invalid (mean at 0 or 1, non-finite density).
#[inline]
pub(crate) fn margin_term(mu: f64, phi: f64, rho: f64, y: f64) -> Option<(f64, f64, bool)> {
    margin_term_logs(mu, phi, rho, y, y.ln(), (-y).ln_1p(), true)
}

/// As [`margin_term`] with precomputed logs; the PIT is NaN unless
/// `with_cdf`.
#[inline]
pub(crate) fn margin_term_logs(mu: f64, phi: f64, rho: f64, y: f64, ln_y: f64, ln_1my: f64, with_cdf: bool) -> Option<(f64, f64, bool)> {
    let p = RectBetaParams::new(mu, phi, rho).ok()?;
    let (lf, raw) = p.eval_with_logs(y, ln_y, ln_1my, with_cdf);
    if !lf.is_finite() {
        return None;
    }
    if !with_cdf {
        return Some((lf, raw, false));
    }
    let u = raw.clamp(PIT_CLAMP, 1.0 - PIT_CLAMP);
    Some((lf, u, u != raw))
}

#[inline]
pub(crate) fn normal_ln_pdf(x: f64, sd: f64) -> f64 {
    -0.5 * (x / sd).powi(2) - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Complete-data log-likelihood with the count of clamped PITs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoglikEval {
    pub value: f64,
    pub clamp_events: usize,
}

pub fn joint_loglik_eval(state: &ParameterState, data: &Dataset, spec: &ModelSpec) -> LoglikEval {
    let cov = &data.covariates;
    let copula = match state.copula(spec) {
        Ok(c) => c,
        Err(_) => return LoglikEval { value: f64::NEG_INFINITY, clamp_events: 0 },
    };
    let mut total = 0.0;
    let mut clamps = 0;
    for i in 0..data.n() {
        let mut us = [0.0; 2];
        for j in 0..2 {
            let b = state.intercept(spec, j, cov.group[i]);
            let mu = margin_mean(state.beta(j), cov.design(j).row(i), b);
            match margin_term(mu, state.phi(j), state.rho(j), data.y(j)[i]) {
                Some((lf, u, clamped)) => {
                    total += lf;
                    us[j] = u;
                    clamps += clamped as usize;
                }
                None => return LoglikEval { value: f64::NEG_INFINITY, clamp_events: clamps },
            }
        }
        total += copula.log_density_unchecked(us[0], us[1]);
    }
    if spec.random_intercepts {
        total += random_effects_ln_density(state);
    }
    LoglikEval { value: if total.is_nan() { f64::NEG_INFINITY } else { total }, clamp_events: clamps }
}

/// Sum of the copula, margin and random-effect log-densities.
pub fn joint_loglik(state: &ParameterState, data: &Dataset, spec: &ModelSpec) -> f64 {
    joint_loglik_eval(state, data, spec).value
}

pub(crate) fn random_effects_ln_density(state: &ParameterState) -> f64 {
    let mut s = 0.0;
    for j in 0..2 {
        let sd = state.sigma(j);
        if !(sd > 0.0) {
            return f64::NEG_INFINITY;
        }
        s += state.b(j).iter().map(|&b| normal_ln_pdf(b, sd)).sum::<f64>();
    }
    s
}

/// Log-density of the half-t distribution with `df` degrees of freedom.
pub(crate) fn half_t_ln_pdf(x: f64, df: f64, scale: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    let z = x / scale;
    std::f64::consts::LN_2 + ln_gamma((df + 1.0) / 2.0)
        - ln_gamma(df / 2.0)
        - 0.5 * (df * std::f64::consts::PI).ln()
        - (df + 1.0) / 2.0 * (z * z / df).ln_1p()
        - scale.ln()
}

pub(crate) fn gamma_ln_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Prior log-density; `-inf` outside the support.
pub fn log_prior(state: &ParameterState, spec: &ModelSpec) -> f64 {
    let pr = &spec.priors;
    let mut lp = 0.0;
    for j in 0..2 {
        lp += state.beta(j).iter().map(|&b| normal_ln_pdf(b, pr.beta_sd)).sum::<f64>();
        let phi = state.phi(j);
        if spec.has_phi(j) {
            if !(0.0..1.0).contains(&phi) {
                return f64::NEG_INFINITY;
            }
        } else if phi != 0.0 {
            return f64::NEG_INFINITY;
        }
        lp += gamma_ln_pdf(state.rho(j), pr.rho_shape, pr.rho_rate);
        if spec.random_intercepts {
            lp += half_t_ln_pdf(state.sigma(j), pr.sigma_df, pr.sigma_scale);
        }
    }
    match spec.copula {
        CopulaFamily::Independence => {}
        CopulaFamily::Gaussian => {
            if !(state.tau > -1.0 && state.tau < 1.0) {
                return f64::NEG_INFINITY;
            }
            lp -= std::f64::consts::LN_2;
        }
        CopulaFamily::Gumbel | CopulaFamily::Clayton => {
            if !(0.0..1.0).contains(&state.tau) {
                return f64::NEG_INFINITY;
            }
        }
    }
    if lp.is_nan() {
        f64::NEG_INFINITY
    } else {
        lp
    }
}

pub fn log_posterior_unnormalized(state: &ParameterState, data: &Dataset, spec: &ModelSpec) -> f64 {
    let lp = log_prior(state, spec);
    if lp == f64::NEG_INFINITY {
        return lp;
    }
    lp + joint_loglik(state, data, spec)
}

/// How group intercepts are chosen when simulating responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RandomEffectsMode {
    /// Use the intercepts stored in the state.
    #[default]
    Supplied,
    /// Draw fresh intercepts from N(0, sigma_j²).
    Redraw,
}

/// Simulates responses at `cov` under `truth`.
pub fn simulate_dataset<R: Rng + ?Sized>(
    truth: &ParameterState,
    spec: &ModelSpec,
    cov: &Covariates,
    re_mode: RandomEffectsMode,
    rng: &mut R,
) -> Result<Dataset> {
    spec.check_covariates(cov)?;
    let mut state = truth.clone();
    if spec.random_intercepts && (re_mode == RandomEffectsMode::Redraw || truth.b1.len() != cov.n_groups) {
        for j in 0..2 {
            let normal = Normal::new(0.0, state.sigma(j)).map_err(|e| domain!("sigma{}: {e}", j + 1))?;
            let b: Vec<f64> = (0..cov.n_groups).map(|_| normal.sample(rng)).collect();
            if j == 0 {
                state.b1 = b;
            } else {
                state.b2 = b;
            }
        }
    }
    state.validate(spec, cov.n_groups)?;
    let copula = state.copula(spec)?;
    let n = cov.n();
    let mut y1 = Vec::with_capacity(n);
    let mut y2 = Vec::with_capacity(n);
    for i in 0..n {
        let (u, v) = copula.sample_pair(rng);
        y1.push(unit_margin(&state, cov, spec, 0, i)?.quantile(u)?);
        y2.push(unit_margin(&state, cov, spec, 1, i)?.quantile(v)?);
    }
    Dataset::new(y1, y2, cov.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::logit;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_cov(n: usize, groups: usize) -> Covariates {
        let xs: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let x = Design::with_intercept(&[&xs], n).unwrap();
        Covariates::new(x.clone(), x, (0..n).map(|i| i % groups).collect()).unwrap()
    }

    fn state(spec: &ModelSpec, groups: usize) -> ParameterState {
        ParameterState {
            beta1: vec![logit(0.3), 0.3],
            beta2: vec![logit(0.6), -0.3],
            phi1: if spec.has_phi(0) { 0.1 } else { 0.0 },
            phi2: if spec.has_phi(1) { 0.2 } else { 0.0 },
            rho1: 30.0,
            rho2: 20.0,
            tau: if spec.copula.has_tau() { 0.3 } else { 0.0 },
            sigma1: 0.4,
            sigma2: 0.3,
            b1: (0..groups).map(|k| 0.1 * k as f64 - 0.2).collect(),
            b2: (0..groups).map(|k| -0.05 * k as f64 + 0.1).collect(),
        }
    }

    #[test]
    fn margin_mean_examples() {
        assert_eq!(margin_mean(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0], 0.0), 0.5);
        assert_abs_diff_eq!(margin_mean(&[-0.8473, 0.3], &[1.0, 0.0], 0.0), 0.30, epsilon = 1e-4);
        let expect = 1.0 / (1.0 + 0.5473f64.exp());
        assert_abs_diff_eq!(margin_mean(&[-0.8473, 0.3], &[1.0, 1.0], 0.0), expect, epsilon = 1e-15);
        assert_abs_diff_eq!(expect, 0.366491, epsilon = 1e-6);
    }

    #[test]
    fn independence_beta_reduction_single_unit() {
        let spec = ModelSpec::variant(Variant::BetaIndep, 2, 2, true);
        let cov = toy_cov(1, 1);
        let data = Dataset::new(vec![0.35], vec![0.55], cov).unwrap();
        let st = state(&spec, 1);
        let expected: f64 = (0..2)
            .map(|j| {
                let mu = inv_logit(st.beta(j)[0] + st.b(j)[0]);
                RectBetaParams::beta(mu, st.rho(j)).unwrap().log_pdf(data.y(j)[0]).unwrap()
                    + normal_ln_pdf(st.b(j)[0], st.sigma(j))
            })
            .sum();
        assert_abs_diff_eq!(joint_loglik(&st, &data, &spec), expected, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_tau_zero_equals_independence() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cov = toy_cov(40, 4);
        let gspec = ModelSpec::variant(Variant::RectBetaGauss, 2, 2, true);
        let ispec = ModelSpec::variant(Variant::RectBetaIndep, 2, 2, true);
        let mut st = state(&gspec, 4);
        let data = simulate_dataset(&st, &gspec, &cov, RandomEffectsMode::Supplied, &mut rng).unwrap();
        st.tau = 0.0;
        let a = joint_loglik(&st, &data, &gspec);
        let b = joint_loglik(&st, &data, &ispec);
        assert!((a - b).abs() <= 1e-10);
    }

    #[test]
    fn single_unit_matches_term_by_term() {
        for v in Variant::ALL {
            let spec = ModelSpec::variant(v, 2, 2, true);
            let cov = toy_cov(1, 1);
            let data = Dataset::new(vec![0.21], vec![0.74], cov.clone()).unwrap();
            let st = state(&spec, 1);
            let m1 = unit_margin(&st, &cov, &spec, 0, 0).unwrap();
            let m2 = unit_margin(&st, &cov, &spec, 1, 0).unwrap();
            let cop = st.copula(&spec).unwrap();
            let reference = cop.log_density(m1.cdf(0.21).unwrap(), m2.cdf(0.74).unwrap()).unwrap()
                + m1.log_pdf(0.21).unwrap()
                + m2.log_pdf(0.74).unwrap()
                + normal_ln_pdf(st.b1[0], st.sigma1)
                + normal_ln_pdf(st.b2[0], st.sigma2);
            assert_abs_diff_eq!(joint_loglik(&st, &data, &spec), reference, epsilon = 1e-10);
        }
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in Variant::ALL {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
            assert_eq!(ModelSpec::variant(v, 1, 1, false).label(), v.to_string());
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{v}\""));
        }
        assert_eq!("rectbeta-gumbel".parse::<Variant>().unwrap(), Variant::RectBetaGumbel);
        let mixed = ModelSpec::new([MarginFamily::Beta, MarginFamily::RectBeta], CopulaFamily::Clayton, 1, 1, false);
        assert_eq!(mixed.label(), "Beta/RectBeta_Clayton");
        assert!("gauss".parse::<Variant>().is_err());
    }

    #[test]
    fn loglik_invariant_to_unit_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = ModelSpec::variant(Variant::RectBetaClayton, 2, 2, true);
        let cov = toy_cov(30, 3);
        let st = state(&spec, 3);
        let data = simulate_dataset(&st, &spec, &cov, RandomEffectsMode::Supplied, &mut rng).unwrap();
        let perm: Vec<usize> = (0..30).rev().collect();
        let pick = |v: &[f64]| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let rows = |d: &Design| Design::from_rows(&perm.iter().map(|&i| d.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
        let cov2 = Covariates::new(rows(&cov.x1), rows(&cov.x2), perm.iter().map(|&i| cov.group[i]).collect()).unwrap();
        let data2 = Dataset::new(pick(&data.y1), pick(&data.y2), cov2).unwrap();
        let a = joint_loglik(&st, &data, &spec);
        let b = joint_loglik(&st, &data2, &spec);
        assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn prior_closed_form() {
        let spec = ModelSpec::variant(Variant::RectBetaGauss, 2, 2, true);
        let st = ParameterState {
            beta1: vec![0.0, 0.0],
            beta2: vec![0.0, 0.0],
            phi1: 0.5,
            phi2: 0.5,
            rho1: 1.0,
            rho2: 1.0,
            tau: 0.0,
            sigma1: 1.0,
            sigma2: 1.0,
            b1: vec![0.0],
            b2: vec![0.0],
        };
        let ln_normal0 = -(100.0f64).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        // half-t3(0, 2.5) at 1: 2 * Γ(2) / (Γ(1.5) sqrt(3π)) * (1 + 0.16/3)^-2 / 2.5, Γ(1.5) = sqrt(π)/2
        let t3 = 2.0 * 1.0 / ((std::f64::consts::PI.sqrt() / 2.0) * (3.0 * std::f64::consts::PI).sqrt())
            * (1.0 + 0.16 / 3.0f64).powi(-2)
            / 2.5;
        // Gamma(a, a) at 1: a ln a - lnΓ(a) - a
        let a = 1e-4f64;
        let gam = a * a.ln() - ln_gamma(a) - a;
        let expected = 4.0 * ln_normal0 + 2.0 * t3.ln() + 2.0 * gam - std::f64::consts::LN_2;
        assert_abs_diff_eq!(log_prior(&st, &spec), expected, epsilon = 1e-10);

        let mut bad = st.clone();
        bad.sigma1 = -0.1;
        assert_eq!(log_prior(&bad, &spec), f64::NEG_INFINITY);
        let gspec = ModelSpec::variant(Variant::RectBetaGumbel, 2, 2, true);
        let mut bad = st.clone();
        bad.tau = -0.5;
        assert_eq!(log_prior(&bad, &gspec), f64::NEG_INFINITY);
    }

    #[test]
    fn posterior_is_sum() {
        let spec = ModelSpec::variant(Variant::RectBetaGumbel, 2, 2, true);
        let cov = toy_cov(12, 3);
        let st = state(&spec, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = simulate_dataset(&st, &spec, &cov, RandomEffectsMode::Supplied, &mut rng).unwrap();
        let lp = log_posterior_unnormalized(&st, &data, &spec);
        assert_abs_diff_eq!(lp, joint_loglik(&st, &data, &spec) + log_prior(&st, &spec), epsilon = 1e-12);
        let mut bad = st;
        bad.rho1 = 0.0;
        assert_eq!(log_posterior_unnormalized(&bad, &data, &spec), f64::NEG_INFINITY);
    }

    #[test]
    fn simulation_is_deterministic() {
        let spec = ModelSpec::variant(Variant::RectBetaGauss, 2, 2, true);
        let cov = toy_cov(50, 5);
        let st = state(&spec, 5);
        let a = simulate_dataset(&st, &spec, &cov, RandomEffectsMode::Redraw, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let b = simulate_dataset(&st, &spec, &cov, RandomEffectsMode::Redraw, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn layout_roundtrip_and_names() {
        let spec = ModelSpec::variant(Variant::RectBetaClayton, 2, 3, true);
        let layout = ParamLayout::new(&spec, 2);
        let mut st = state(&spec, 2);
        st.beta2 = vec![0.1, 0.2, 0.3];
        let v = layout.flatten(&st);
        assert_eq!(v.len(), layout.dim());
        assert_eq!(layout.unflatten(&v).unwrap(), st);
        let names = layout.names();
        assert_eq!(&names[..5], &["beta1_0", "beta1_1", "beta2_0", "beta2_1", "beta2_2"]);
        assert_eq!(&names[5..12], &["phi1", "phi2", "rho1", "rho2", "sigma1", "sigma2", "tau"]);
        assert_eq!(names.len(), layout.dim());

        let beta = ParamLayout::new(&ModelSpec::variant(Variant::BetaIndep, 2, 2, false), 1);
        assert_eq!(beta.names(), ["beta1_0", "beta1_1", "beta2_0", "beta2_1", "rho1", "rho2"]);
    }

    #[test]
    fn dataset_validation() {
        let cov = toy_cov(3, 1);
        assert!(Dataset::new(vec![0.1, 0.0, 0.3], vec![0.5; 3], cov.clone()).is_err());
        assert!(Dataset::new(vec![0.1, 0.2], vec![0.5; 3], cov.clone()).is_err());
        assert_eq!(Dataset::new(vec![0.1, 0.2, 0.3], vec![0.5; 3], cov).unwrap().n(), 3);
        let x = Design::with_intercept(&[], 3).unwrap();
        assert!(Covariates::new(x.clone(), x, vec![0, 2, 2]).is_err());
    }
}
