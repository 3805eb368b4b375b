//! Bijection between the natural parameter layout and R^d.

use crate::copulas::CopulaFamily;
use crate::error::{domain, Result};
use crate::model::{ModelSpec, ParamLayout, ParameterState};
use crate::special::{inv_logit, logit};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Identity,
    /// Positive reals.
    Log,
    /// Unit interval.
    Logit,
    /// (-1, 1) through `2 inv_logit(z) - 1`.
    SymLogit,
}

impl Link {
    pub fn forward(self, x: f64) -> Result<f64> {
        let z = match self {
            Link::Identity => x,
            Link::Log => {
                if !(x > 0.0) {
                    return Err(domain!("log link needs a positive value, got {x}"));
                }
                x.ln()
            }
            Link::Logit => {
                if !(x > 0.0 && x < 1.0) {
                    return Err(domain!("logit link needs a value in (0,1), got {x}"));
                }
                logit(x)
            }
            Link::SymLogit => {
                if !(x > -1.0 && x < 1.0) {
                    return Err(domain!("symmetric logit link needs a value in (-1,1), got {x}"));
                }
                logit((x + 1.0) / 2.0)
            }
        };
        if z.is_finite() {
            Ok(z)
        } else {
            Err(domain!("value {x} maps to a non-finite unconstrained coordinate"))
        }
    }

    #[inline]
    pub fn inverse(self, z: f64) -> f64 {
        match self {
            Link::Identity => z,
            Link::Log => z.exp(),
            Link::Logit => inv_logit(z),
            Link::SymLogit => 2.0 * inv_logit(z) - 1.0,
        }
    }

    /// `ln |dx/dz|` at `z`.
    #[inline]
    pub fn log_jacobian(self, z: f64) -> f64 {
        match self {
            Link::Identity => 0.0,
            Link::Log => z,
            Link::Logit => -softplus(z) - softplus(-z),
            Link::SymLogit => std::f64::consts::LN_2 - softplus(z) - softplus(-z),
        }
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Per-coordinate links for a model's parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Transform {
    pub layout: ParamLayout,
    links: Vec<Link>,
}

impl Transform {
    pub fn new(spec: &ModelSpec, n_groups: usize) -> Self {
        let layout = ParamLayout::new(spec, n_groups);
        let links = layout
            .names()
            .iter()
            .map(|name| match name.as_str() {
                "phi1" | "phi2" => Link::Logit,
                "rho1" | "rho2" | "sigma1" | "sigma2" => Link::Log,
                "tau" if spec.copula == CopulaFamily::Gaussian => Link::SymLogit,
                "tau" => Link::Logit,
                _ => Link::Identity,
            })
            .collect();
        Self { layout, links }
    }

    pub fn dim(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn forward(&self, natural: &[f64]) -> Result<Vec<f64>> {
        natural.iter().zip(&self.links).map(|(&x, l)| l.forward(x)).collect()
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.links).map(|(&z, l)| l.inverse(z)).collect()
    }

    pub fn inverse_into(&self, z: &[f64], out: &mut [f64]) {
        for ((o, &z), l) in out.iter_mut().zip(z).zip(&self.links) {
            *o = l.inverse(z);
        }
    }

    pub fn log_jacobian(&self, z: &[f64]) -> f64 {
        z.iter().zip(&self.links).map(|(&z, l)| l.log_jacobian(z)).sum()
    }
}

/// Unconstrained coordinates of `state`; errors on boundary values such as
/// `phi = 0` for a rect-beta margin.
pub fn to_unconstrained(state: &ParameterState, spec: &ModelSpec, n_groups: usize) -> Result<Vec<f64>> {
    state.validate(spec, n_groups)?;
    let tf = Transform::new(spec, n_groups);
    tf.forward(&tf.layout.flatten(state))
}

pub fn from_unconstrained(z: &[f64], spec: &ModelSpec, n_groups: usize) -> Result<ParameterState> {
    let tf = Transform::new(spec, n_groups);
    tf.layout.unflatten(&tf.inverse(z))
}
