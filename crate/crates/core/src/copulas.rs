//! One-parameter bivariate copulas indexed by Kendall's tau.
//!
//! The natural parameter `theta` is always derived from `tau`; a
//! [`CopulaSpec`] cannot hold an inconsistent pair.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::special::{bvn_cdf, log_add_exp, norm_cdf, norm_quantile};

/// Below this tau the Clayton copula is treated as the independence copula.
pub const CLAYTON_TAU_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CopulaFamily {
    Independence,
    Gaussian,
    Gumbel,
    Clayton,
}

impl CopulaFamily {
    pub const ALL: [CopulaFamily; 4] = [
        CopulaFamily::Independence,
        CopulaFamily::Gaussian,
        CopulaFamily::Gumbel,
        CopulaFamily::Clayton,
    ];

    /// Whether the family carries a free dependence parameter.
    pub fn has_tau(self) -> bool {
        self != CopulaFamily::Independence
    }

    /// Admissible Kendall's tau interval `(lo, hi)`; `lo` is attained only
    /// for Gumbel and Clayton, where tau = 0 is the independence limit.
    pub fn tau_range(self) -> (f64, f64) {
        match self {
            CopulaFamily::Independence => (0.0, 0.0),
            CopulaFamily::Gaussian => (-1.0, 1.0),
            CopulaFamily::Gumbel | CopulaFamily::Clayton => (0.0, 1.0),
        }
    }

    pub fn tau_in_range(self, tau: f64) -> bool {
        match self {
            CopulaFamily::Independence => tau == 0.0,
            CopulaFamily::Gaussian => tau > -1.0 && tau < 1.0,
            CopulaFamily::Gumbel | CopulaFamily::Clayton => (0.0..1.0).contains(&tau),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CopulaFamily::Independence => "independence",
            CopulaFamily::Gaussian => "gaussian",
            CopulaFamily::Gumbel => "gumbel",
            CopulaFamily::Clayton => "clayton",
        }
    }
}

impl fmt::Display for CopulaFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CopulaFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "independence" | "indep" => Ok(CopulaFamily::Independence),
            "gaussian" | "gauss" | "normal" => Ok(CopulaFamily::Gaussian),
            "gumbel" => Ok(CopulaFamily::Gumbel),
            "clayton" => Ok(CopulaFamily::Clayton),
            other => Err(Error::Invalid(format!(
                "unknown copula family '{other}' (expected independence, gaussian, gumbel or clayton)"
            ))),
        }
    }
}

/// Natural parameter from Kendall's tau.
pub fn theta_from_tau(family: CopulaFamily, tau: f64) -> Result<f64> {
    if !family.tau_in_range(tau) {
        return Err(domain!("tau={tau} outside the {family} range {:?}", family.tau_range()));
    }
    Ok(match family {
        CopulaFamily::Independence => 0.0,
        CopulaFamily::Gaussian => (PI * tau / 2.0).sin(),
        CopulaFamily::Gumbel => 1.0 / (1.0 - tau),
        CopulaFamily::Clayton => 2.0 * tau / (1.0 - tau),
    })
}

/// Kendall's tau from the natural parameter.
pub fn tau_from_theta(family: CopulaFamily, theta: f64) -> Result<f64> {
    match family {
        CopulaFamily::Independence if theta == 0.0 => Ok(0.0),
        CopulaFamily::Gaussian if theta > -1.0 && theta < 1.0 => Ok(2.0 * theta.asin() / PI),
        CopulaFamily::Gumbel if theta >= 1.0 && theta.is_finite() => Ok(1.0 - 1.0 / theta),
        CopulaFamily::Clayton if theta >= 0.0 && theta.is_finite() => Ok(theta / (theta + 2.0)),
        _ => Err(domain!("theta={theta} outside the {family} range")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct CopulaSpec {
    family: CopulaFamily,
    tau: f64,
    theta: f64,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    family: CopulaFamily,
    tau: f64,
}

impl TryFrom<RawSpec> for CopulaSpec {
    type Error = Error;
    fn try_from(r: RawSpec) -> Result<Self> {
        CopulaSpec::new(r.family, r.tau)
    }
}

impl From<CopulaSpec> for RawSpec {
    fn from(s: CopulaSpec) -> Self {
        RawSpec { family: s.family, tau: s.tau }
    }
}

impl CopulaSpec {
    pub fn new(family: CopulaFamily, tau: f64) -> Result<Self> {
        let theta = theta_from_tau(family, tau)?;
        Ok(Self { family, tau, theta })
    }

    pub fn independence() -> Self {
        Self { family: CopulaFamily::Independence, tau: 0.0, theta: 0.0 }
    }

    pub fn family(&self) -> CopulaFamily {
        self.family
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }

    fn is_independent(&self) -> bool {
        match self.family {
            CopulaFamily::Independence => true,
            CopulaFamily::Gaussian => self.theta == 0.0,
            CopulaFamily::Gumbel => self.theta == 1.0,
            CopulaFamily::Clayton => self.tau < CLAYTON_TAU_FLOOR,
        }
    }

    /// Copula log-density on the open unit square.
    pub fn log_density(&self, u: f64, v: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0 && v > 0.0 && v < 1.0) {
            return Err(domain!("copula density needs (u, v) in (0,1)², got ({u}, {v})"));
        }
        Ok(self.log_density_unchecked(u, v))
    }

    #[inline]
    pub(crate) fn log_density_unchecked(&self, u: f64, v: f64) -> f64 {
        self.log_density_coords(coords(self.family, u), coords(self.family, v))
    }

    /// Log-density from per-margin [`coords`].
    #[inline]
    pub(crate) fn log_density_coords(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        if self.is_independent() {
            return 0.0;
        }
        let th = self.theta;
        match self.family {
            CopulaFamily::Independence => 0.0,
            CopulaFamily::Gaussian => {
                let (z1, z2) = (a[0], b[0]);
                let one_m = 1.0 - th * th;
                -0.5 * one_m.ln() - (z1 * z1 - 2.0 * th * z1 * z2 + z2 * z2) / (2.0 * one_m)
                    + 0.5 * (z1 * z1 + z2 * z2)
            }
            CopulaFamily::Gumbel => {
                let ([x, lx], [y, ly]) = (a, b);
                let ls = log_add_exp(th * lx, th * ly);
                let a = (ls / th).exp();
                -a + x + y + (th - 1.0) * (lx + ly) + (1.0 / th - 2.0) * ls + (a + th - 1.0).ln()
            }
            CopulaFamily::Clayton => {
                let (lu, lv) = (a[0], b[0]);
                let t = log_add_exp(-th * lu, -th * lv);
                let ln_sum = t + (-(-t).exp_m1()).ln();
                th.ln_1p() - (1.0 + th) * (lu + lv) - (2.0 + 1.0 / th) * ln_sum
            }
        }
    }

    /// Copula CDF on the closed unit square.
    pub fn cdf(&self, u: f64, v: f64) -> Result<f64> {
        if !((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v)) {
            return Err(domain!("copula cdf needs (u, v) in [0,1]², got ({u}, {v})"));
        }
        if u == 0.0 || v == 0.0 {
            return Ok(0.0);
        }
        if u == 1.0 {
            return Ok(v);
        }
        if v == 1.0 {
            return Ok(u);
        }
        if self.is_independent() {
            return Ok(u * v);
        }
        let th = self.theta;
        let c = match self.family {
            CopulaFamily::Independence => u * v,
            CopulaFamily::Gaussian => bvn_cdf(norm_quantile(u), norm_quantile(v), th),
            CopulaFamily::Gumbel => {
                let ls = log_add_exp(th * (-u.ln()).ln(), th * (-v.ln()).ln());
                (-(ls / th).exp()).exp()
            }
            CopulaFamily::Clayton => {
                let t = log_add_exp(-th * u.ln(), -th * v.ln());
                let ln_sum = t + (-(-t).exp_m1()).ln();
                (-ln_sum / th).exp()
            }
        };
        Ok(c.clamp((u + v - 1.0).max(0.0), u.min(v)))
    }

    /// Lower and upper tail-dependence coefficients.
    pub fn tail_coefficients(&self) -> (f64, f64) {
        match self.family {
            CopulaFamily::Independence | CopulaFamily::Gaussian => (0.0, 0.0),
            CopulaFamily::Gumbel => (0.0, 2.0 - 2f64.powf(1.0 / self.theta)),
            CopulaFamily::Clayton => {
                if self.is_independent() {
                    (0.0, 0.0)
                } else {
                    (2f64.powf(-1.0 / self.theta), 0.0)
                }
            }
        }
    }

    /// One `(u, v)` draw. Gaussian pairs come from correlated normals,
    /// Clayton and Gumbel from gamma and positive-stable frailties.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let (u, v) = if self.is_independent() {
            (rng.random::<f64>(), rng.random::<f64>())
        } else {
            let th = self.theta;
            match self.family {
                CopulaFamily::Independence => unreachable!(),
                CopulaFamily::Gaussian => {
                    let z1: f64 = rng.sample(StandardNormal);
                    let e: f64 = rng.sample(StandardNormal);
                    let z2 = th * z1 + (1.0 - th * th).sqrt() * e;
                    (norm_cdf(z1), norm_cdf(z2))
                }
                CopulaFamily::Clayton => {
                    let frailty: f64 = Gamma::new(1.0 / th, 1.0).expect("positive shape").sample(rng);
                    let e1: f64 = rng.sample(Exp1);
                    let e2: f64 = rng.sample(Exp1);
                    let g = |e: f64| (-(e / frailty).ln_1p() / th).exp();
                    (g(e1), g(e2))
                }
                CopulaFamily::Gumbel => {
                    let alpha = 1.0 / th;
                    let s = positive_stable(alpha, rng);
                    let e1: f64 = rng.sample(Exp1);
                    let e2: f64 = rng.sample(Exp1);
                    let g = |e: f64| (-(e / s).powf(alpha)).exp();
                    (g(e1), g(e2))
                }
            }
        };
        (open_unit(u), open_unit(v))
    }

    pub fn sample_pairs<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<(f64, f64)> {
        (0..n).map(|_| self.sample_pair(rng)).collect()
    }
}

/// The parameter-free per-margin transform each family's density is built
/// from: `Φ⁻¹(u)` (Gaussian), `(-ln u, ln(-ln u))` (Gumbel), `ln u` (Clayton).
#[inline]
pub(crate) fn coords(family: CopulaFamily, u: f64) -> [f64; 2] {
    match family {
        CopulaFamily::Independence => [0.0, 0.0],
        CopulaFamily::Gaussian => [norm_quantile(u), 0.0],
        CopulaFamily::Gumbel => {
            let x = -u.ln();
            [x, x.ln()]
        }
        CopulaFamily::Clayton => [u.ln(), 0.0],
    }
}

#[inline]
fn open_unit(x: f64) -> f64 {
    x.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Positive stable variate with Laplace transform `exp(-t^alpha)`,
/// `0 < alpha <= 1` (Kanter's representation).
fn positive_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    if alpha >= 1.0 {
        return 1.0;
    }
    let w = PI * rng.random::<f64>();
    let e: f64 = rng.sample(Exp1);
    let a = (alpha * w).sin() / w.sin().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * w).sin() / e).powf((1.0 - alpha) / alpha);
    a * b
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(f: CopulaFamily, tau: f64) -> CopulaSpec {
        CopulaSpec::new(f, tau).unwrap()
    }

    fn kendall(pairs: &[(f64, f64)]) -> f64 {
        let n = pairs.len();
        let mut s = 0i64;
        for i in 0..n {
            for j in (i + 1)..n {
                let a = (pairs[i].0 - pairs[j].0) * (pairs[i].1 - pairs[j].1);
                s += (a > 0.0) as i64 - (a < 0.0) as i64;
            }
        }
        s as f64 / (n * (n - 1) / 2) as f64
    }

    #[test]
    fn theta_map_examples() {
        use CopulaFamily::*;
        assert_abs_diff_eq!(theta_from_tau(Gaussian, 0.5).unwrap(), 0.7071067811865476, epsilon = 1e-15);
        assert_abs_diff_eq!(theta_from_tau(Gumbel, 0.5).unwrap(), 2.0, epsilon = 1e-15);
        let tiny = theta_from_tau(Clayton, 1e-9).unwrap();
        assert!(tiny > 0.0 && tiny < 1e-8);
        assert!(theta_from_tau(Gumbel, -0.1).is_err());
        assert!(theta_from_tau(Clayton, -0.1).is_err());
        assert!(theta_from_tau(Gaussian, 1.0).is_err());
        assert!(theta_from_tau(Independence, 0.2).is_err());
    }

    #[test]
    fn tau_map_examples() {
        use CopulaFamily::*;
        assert_abs_diff_eq!(tau_from_theta(Gaussian, 0.7071067811).unwrap(), 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(tau_from_theta(Clayton, 2.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(tau_from_theta(Gumbel, 1.0).unwrap(), 0.0);
        assert!(tau_from_theta(Gumbel, 0.5).is_err());
    }

    #[test]
    fn log_density_examples() {
        let g = spec(CopulaFamily::Gaussian, 0.5);
        assert_abs_diff_eq!(g.log_density(0.5, 0.5).unwrap(), -0.5 * 0.5f64.ln(), epsilon = 1e-12);
        for f in [CopulaFamily::Gaussian, CopulaFamily::Gumbel, CopulaFamily::Clayton] {
            assert_eq!(spec(f, 0.0).log_density(0.3, 0.8).unwrap(), 0.0);
        }
        assert!(g.log_density(0.0, 0.5).is_err());
        assert!(g.log_density(0.5, 1.0).is_err());
    }

    fn mixed_partial(s: &CopulaSpec, u: f64, v: f64, h: f64) -> f64 {
        let c = |a, b| s.cdf(a, b).unwrap();
        (c(u + h, v + h) - c(u + h, v - h) - c(u - h, v + h) + c(u - h, v - h)) / (4.0 * h * h)
    }

    #[test]
    fn density_is_mixed_partial_of_cdf() {
        let cl = CopulaSpec::new(CopulaFamily::Clayton, 0.5).unwrap();
        assert_abs_diff_eq!(cl.theta(), 2.0, epsilon = 1e-15);
        let fd = mixed_partial(&cl, 0.5, 0.5, 1e-5);
        assert_abs_diff_eq!(cl.log_density(0.5, 0.5).unwrap().exp(), fd, epsilon = 1e-4);
        for f in [CopulaFamily::Gaussian, CopulaFamily::Gumbel, CopulaFamily::Clayton] {
            for &tau in &[0.1, 0.4, 0.7] {
                let s = spec(f, tau);
                for &(u, v) in &[(0.2, 0.3), (0.6, 0.9), (0.85, 0.15)] {
                    let fd = mixed_partial(&s, u, v, 1e-4);
                    let d = s.log_density(u, v).unwrap().exp();
                    assert!((d - fd).abs() < 1e-4 * d.max(1.0), "{f} tau={tau} ({u},{v}): {d} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn cdf_examples() {
        assert_abs_diff_eq!(spec(CopulaFamily::Gumbel, 0.0).cdf(0.5, 0.5).unwrap(), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(
            spec(CopulaFamily::Clayton, 0.5).cdf(0.5, 0.5).unwrap(),
            7f64.powf(-0.5),
            epsilon = 1e-14
        );
        // theta = 0.5 means tau = 2 asin(0.5) / pi = 1/3
        let g = spec(CopulaFamily::Gaussian, 1.0 / 3.0);
        assert_abs_diff_eq!(g.theta(), 0.5, epsilon = 1e-14);
        let exact = 0.25 + 0.5f64.asin() / (2.0 * PI);
        assert_abs_diff_eq!(g.cdf(0.5, 0.5).unwrap(), exact, epsilon = 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000_000;
        let mut hits = 0usize;
        for _ in 0..n {
            let z1: f64 = rng.sample(StandardNormal);
            let e: f64 = rng.sample(StandardNormal);
            let z2: f64 = 0.5 * z1 + 0.75f64.sqrt() * e;
            hits += (z1 <= 0.0 && z2 <= 0.0) as usize;
        }
        let p = hits as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((g.cdf(0.5, 0.5).unwrap() - p).abs() < 3.0 * se);
    }

    #[test]
    fn cdf_is_grounded() {
        for f in [CopulaFamily::Gaussian, CopulaFamily::Gumbel, CopulaFamily::Clayton] {
            let s = spec(f, 0.4);
            assert_eq!(s.cdf(0.3, 0.0).unwrap(), 0.0);
            assert_eq!(s.cdf(0.3, 1.0).unwrap(), 0.3);
            assert_eq!(s.cdf(1.0, 0.7).unwrap(), 0.7);
        }
    }

    #[test]
    fn tail_coefficient_examples() {
        let (l, u) = spec(CopulaFamily::Gumbel, 0.5).tail_coefficients();
        assert_eq!(l, 0.0);
        assert_abs_diff_eq!(u, 0.5857864376269049, epsilon = 1e-15);
        let (l, u) = spec(CopulaFamily::Clayton, 0.5).tail_coefficients();
        assert_abs_diff_eq!(l, 0.7071067811865476, epsilon = 1e-15);
        assert_eq!(u, 0.0);
        assert_eq!(spec(CopulaFamily::Gaussian, 0.8).tail_coefficients(), (0.0, 0.0));
    }

    #[test]
    fn sampled_pairs_recover_tau() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (f, tau) in [(CopulaFamily::Gaussian, 0.4), (CopulaFamily::Clayton, 0.25), (CopulaFamily::Gumbel, 0.4)] {
            let s = spec(f, tau);
            let pairs = s.sample_pairs(20_000, &mut rng);
            let t = kendall(&pairs);
            assert!((t - tau).abs() < 0.02, "{f}: {t}");
        }
        assert_abs_diff_eq!(spec(CopulaFamily::Clayton, 0.25).theta(), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn sampled_margins_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for f in [CopulaFamily::Gaussian, CopulaFamily::Gumbel, CopulaFamily::Clayton] {
            let pairs = spec(f, 0.5).sample_pairs(100_000, &mut rng);
            for coord in 0..2 {
                let mut xs: Vec<f64> = pairs.iter().map(|p| if coord == 0 { p.0 } else { p.1 }).collect();
                xs.sort_by(f64::total_cmp);
                let n = xs.len() as f64;
                let d = xs
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
                    .fold(0.0, f64::max);
                assert!(d < 1.628 / n.sqrt(), "{f} coord {coord}: D = {d}");
            }
        }
    }

    #[test]
    fn family_parsing() {
        assert_eq!("Gumbel".parse::<CopulaFamily>().unwrap(), CopulaFamily::Gumbel);
        assert!("frank".parse::<CopulaFamily>().is_err());
        let s: CopulaSpec = serde_json::from_str(r#"{"family":"clayton","tau":0.5}"#).unwrap();
        assert_eq!(s.theta(), 2.0);
    }
}
