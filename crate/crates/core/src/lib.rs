//! Index selection with a masked-action TD3 learner over an analytic
//! what-if cost model.

pub mod agent;
pub mod baselines;
pub mod candidates;
pub mod costmodel;
pub mod env;
pub mod error;
pub mod nn;
pub mod schema;
pub mod workload;

pub use error::{Error, Result};
