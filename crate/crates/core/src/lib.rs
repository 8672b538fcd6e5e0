//! Simulation-based inference for exponential random graph models.
//!
//! The crate covers the whole pipeline: summary statistics and their change
//! statistics ([`stats`]), MH network simulation ([`sim`]), exact enumeration
//! for tiny graphs ([`exact`]), the exchange algorithm ([`exchange`]), a
//! masked autoregressive flow ([`flow`]), amortised and sequential neural
//! posterior estimation ([`npe`]) and the bias-evaluation protocols
//! ([`harness`]).

pub mod dataset;
pub mod error;
pub mod exact;
pub mod exchange;
pub mod flow;
pub mod gaussian;
pub mod graph;
pub mod harness;
pub mod npe;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod theta;

pub use dataset::{TrainingPair, TrainingSet};
pub use error::{Error, Result};
pub use gaussian::{MvNormal, PriorSpec, ProposalSpec};
pub use graph::Graph;
pub use sim::{InitGraph, SimConfig};
pub use stats::{StatKind, StatsConfig, SummaryStats};
pub use theta::ThetaVector;
