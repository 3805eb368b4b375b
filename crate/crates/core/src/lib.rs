pub mod copulas;
pub mod diagnostics;
pub mod error;
pub mod evidence;
pub mod exec;
pub mod mcmc;
pub mod model;
pub mod rectbeta;
pub mod simstudy;
pub mod special;

pub use error::{Error, Result};
