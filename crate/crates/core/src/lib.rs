//! Self-adaptive log-normal evolutionary optimization over mixed search
//! spaces, with fixed-budget benchmarking, pairwise ranking, and a harness for
//! black-box L-infinity attacks on image detectors.

pub mod attack;
pub mod cli;
pub mod error;
pub mod harness;
pub mod modifiers;
pub mod optim;
pub mod problems;
pub mod space;

pub use error::{Error, Result};
