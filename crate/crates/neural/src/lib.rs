//! Attention policies for the location and interdiction agents, adversarial
//! REINFORCE training and surrogate-ensemble inference.

pub mod checkpoint;
pub mod decoder;
pub mod encoder;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod linalg;
pub mod optim;
pub mod params;
pub mod policy;
pub mod trainer;

pub use error::{Error, Result};
pub use params::{init_params, PolicyDims, PolicyParams, Role};
pub use policy::{log_prob_of, rollout, DecodeMode, PolicyContext, Rollout};
