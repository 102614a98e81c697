//! Distributed consensus ADMM over overlapping agent components, with an exact
//! linear convergence rate for the iterates.
//!
//! The crate is organised bottom-up: [`linalg`] holds the dense kernels,
//! [`topology`] the component structures and their mixing matrices,
//! [`objectives`] the per-agent oracles, [`engine`] the iteration itself and
//! [`rate`] the spectral rate analysis. [`experiments`] wires them together
//! behind JSON configurations.

pub mod engine;
pub mod exec;
pub mod experiments;
pub mod linalg;
pub mod objectives;
pub mod rate;
pub mod topology;

pub use engine::{AdmmConfig, AdmmState, Form, InitPlan, Trajectory};
pub use exec::Execution;
pub use linalg::{DenseMatrix, Spectrum, Vector};
pub use objectives::{ObjectiveOracle, ProblemInstance};
pub use rate::{RateAnalyzer, RateReport};
pub use topology::ComponentStructure;
