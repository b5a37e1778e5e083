//! Generalized Gaussian mechanisms and a sampled PRV accountant.

pub mod accountant;
pub mod calibrate;
pub mod dist;
pub mod error;
pub mod exec;
pub mod mechanisms;
pub mod prv;
pub mod simulate;
pub mod special;
pub mod stats;

pub use dist::GGParams;
pub use error::{Error, Result};
pub use prv::{LossSampleDirection, MechanismSpec};
