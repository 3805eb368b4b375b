//! Rectangular-beta distribution: a mixture of a Uniform(0,1) and a
//! mean-precision beta whose mixture weight depends on the mean, so the
//! mixture keeps mean `mu`.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::special::{beta_inc_front, beta_inc_with, beta_ln_pdf_with, ln_beta, log_add_exp};

const CORE_MEAN_TOL: f64 = 1e-12;

/// Uniform-mixture weight `omega = phi * (1 - |2 mu - 1|)`.
pub fn mixture_weight(mu: f64, phi: f64) -> Result<f64> {
    check_mu_phi(mu, phi)?;
    Ok(omega(mu, phi))
}

/// Mean of the beta core, `(mu - omega / 2) / (1 - omega)`.
pub fn core_mean(mu: f64, phi: f64) -> Result<f64> {
    check_mu_phi(mu, phi)?;
    let delta = delta(mu, omega(mu, phi));
    if !(delta > -CORE_MEAN_TOL && delta < 1.0 + CORE_MEAN_TOL) {
        return Err(domain!("core mean {delta} outside (0,1) for mu={mu}, phi={phi}"));
    }
    Ok(delta.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))
}

#[inline]
fn omega(mu: f64, phi: f64) -> f64 {
    phi * (1.0 - (2.0 * mu - 1.0).abs())
}

#[inline]
fn delta(mu: f64, omega: f64) -> f64 {
    (mu - 0.5 * omega) / (1.0 - omega)
}

fn check_mu_phi(mu: f64, phi: f64) -> Result<()> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(domain!("mean mu={mu} must lie in (0,1)"));
    }
    if !(0.0..1.0).contains(&phi) {
        return Err(domain!("mixture weight phi={phi} must lie in [0,1)"));
    }
    Ok(())
}

/// One margin's `(mu, phi, rho)` with the derived mixture quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct RectBetaParams {
    mu: f64,
    phi: f64,
    rho: f64,
    omega: f64,
    delta: f64,
    kappa1: f64,
    kappa2: f64,
    ln_beta: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    mu: f64,
    phi: f64,
    rho: f64,
}

impl TryFrom<RawParams> for RectBetaParams {
    type Error = Error;
    fn try_from(r: RawParams) -> Result<Self> {
        RectBetaParams::new(r.mu, r.phi, r.rho)
    }
}

impl From<RectBetaParams> for RawParams {
    fn from(p: RectBetaParams) -> Self {
        RawParams { mu: p.mu, phi: p.phi, rho: p.rho }
    }
}

impl RectBetaParams {
    pub fn new(mu: f64, phi: f64, rho: f64) -> Result<Self> {
        check_mu_phi(mu, phi)?;
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(domain!("precision rho={rho} must be positive"));
        }
        let omega = omega(mu, phi);
        let delta = core_mean(mu, phi)?;
        let kappa1 = rho * delta;
        let kappa2 = rho * (1.0 - delta);
        if !(kappa1 > 0.0 && kappa2 > 0.0) {
            return Err(domain!("degenerate beta core ({kappa1}, {kappa2})"));
        }
        Ok(Self { mu, phi, rho, omega, delta, kappa1, kappa2, ln_beta: ln_beta(kappa1, kappa2) })
    }

    /// Mean-precision beta, the `phi = 0` member.
    pub fn beta(mu: f64, rho: f64) -> Result<Self> {
        Self::new(mu, 0.0, rho)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn phi(&self) -> f64 {
        self.phi
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn omega(&self) -> f64 {
        self.omega
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn kappa(&self) -> (f64, f64) {
        (self.kappa1, self.kappa2)
    }

    /// Mean of the distribution; identically `mu`.
    pub fn mean(&self) -> f64 {
        self.mu
    }

    /// Log-density on the open unit interval.
    pub fn log_pdf(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y < 1.0) {
            return Err(domain!("y={y} outside (0,1)"));
        }
        Ok(self.log_pdf_unchecked(y))
    }

    #[inline]
    pub(crate) fn log_pdf_unchecked(&self, y: f64) -> f64 {
        let core = beta_ln_pdf_with(y, self.kappa1, self.kappa2, self.ln_beta);
        if self.omega == 0.0 {
            core
        } else {
            log_add_exp(self.omega.ln(), (-self.omega).ln_1p() + core)
        }
    }

    /// Log-density and, when `with_cdf`, the CDF at `y` in (0,1), reusing
    /// precomputed `ln y` and `ln(1-y)`. The CDF slot is NaN otherwise.
    #[inline]
    pub(crate) fn eval_with_logs(&self, y: f64, ln_y: f64, ln_1my: f64, with_cdf: bool) -> (f64, f64) {
        let core = (self.kappa1 - 1.0) * ln_y + (self.kappa2 - 1.0) * ln_1my - self.ln_beta;
        let lf = if self.omega == 0.0 {
            core
        } else {
            log_add_exp(self.omega.ln(), (-self.omega).ln_1p() + core)
        };
        if !with_cdf {
            return (lf, f64::NAN);
        }
        let front = core + ln_y + ln_1my;
        let inc = beta_inc_front(y, self.kappa1, self.kappa2, front);
        (lf, (self.omega * y + (1.0 - self.omega) * inc).clamp(0.0, 1.0))
    }

    pub fn pdf(&self, y: f64) -> Result<f64> {
        self.log_pdf(y).map(f64::exp)
    }

    pub fn cdf(&self, y: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&y) {
            return Err(domain!("y={y} outside [0,1]"));
        }
        Ok(self.cdf_unchecked(y))
    }

    #[inline]
    pub(crate) fn cdf_unchecked(&self, y: f64) -> f64 {
        let core = beta_inc_with(y, self.kappa1, self.kappa2, self.ln_beta);
        (self.omega * y + (1.0 - self.omega) * core).clamp(0.0, 1.0)
    }

    /// Inverse CDF to within `1e-10` in probability.
    ///
    /// Safeguarded Newton inside a shrinking bisection bracket, started from
    /// the point where the beta core alone would reach `q`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(domain!("probability q={q} outside (0,1)"));
        }
        const MAX_ITER: usize = 200;
        const TOL: f64 = 1e-10;
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        let mut y = self.core_start(q);
        for _ in 0..MAX_ITER {
            let f = self.cdf_unchecked(y) - q;
            if f.abs() <= TOL * 0.01 {
                return Ok(y);
            }
            if f < 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            if hi - lo <= f64::EPSILON * 4.0 {
                return Ok(y);
            }
            let dens = self.log_pdf_unchecked(y).exp();
            let newton = y - f / dens;
            y = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        let f = self.cdf_unchecked(y) - q;
        if f.abs() <= TOL {
            Ok(y)
        } else {
            Err(Error::Convergence { what: "rectangular-beta quantile", iterations: MAX_ITER })
        }
    }

    fn core_start(&self, q: f64) -> f64 {
        // Bisection on the beta core only, coarse: a warm start is enough.
        let target = ((q - self.omega * q) / (1.0 - self.omega)).clamp(1e-12, 1.0 - 1e-12);
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..20 {
            let mid = 0.5 * (lo + hi);
            if beta_inc_with(mid, self.kappa1, self.kappa2, self.ln_beta) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// One draw: uniform with probability `omega`, otherwise from the core.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        if u < self.omega {
            rng.random::<f64>().max(f64::MIN_POSITIVE)
        } else {
            let core = Beta::new(self.kappa1, self.kappa2).expect("validated shape parameters");
            core.sample(rng).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }
}
