//! Tabular solver and learner for MDPs with a static Value-at-Risk objective.

pub mod dp;
pub mod error;
pub mod exec;
pub mod mdp;
pub mod oracle;
pub mod qlearn;
pub mod risk;
pub mod scalar;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Real;

pub type Mdp64 = mdp::Mdp<f64>;
pub type Mdp32 = mdp::Mdp<f32>;
pub type QTensor64 = dp::QTensor<f64>;
pub type QTensor32 = dp::QTensor<f32>;
