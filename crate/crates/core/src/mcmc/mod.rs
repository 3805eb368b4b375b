//! Posterior sampling and convergence summaries.

mod draws;
mod sampler;
mod summary;
mod target;
mod transform;

pub use draws::{BlockAcceptance, Draws};
pub use sampler::{run_chains, sample_target, ChainConfig, ACCEPT_BAND};
pub use summary::{hpd_interval, median, posterior_summary, psrf, psrf_chains, summary_at_level, ParamSummary};
pub use target::{Block, FnTarget, ModelTarget, Target, UnitCache};
pub use transform::{from_unconstrained, to_unconstrained, Link, Transform};
