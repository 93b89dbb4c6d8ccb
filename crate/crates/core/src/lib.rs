//! Quantum-inspired Min-d-Cut solver: simulated imaginary-time evolution on
//! real product states of d-level qudits with an adaptively chosen
//! single-qudit generator per step.
//!
//! - [`qudit`]: product states, the generator pool, exact rotations, rounding.
//! - [`problem`]: instances, costs, capacity penalty, instance generation.
//! - [`expectation`]: closed-form `⟨H⟩`, `⟨[G, H]⟩` and `⟨G²⟩`.
//! - [`solver`]: the stepping loop and run records.
//! - [`qubo`]: one-hot binary export (LP and JSON) for external solvers.
//! - [`harness`]: batch generation, solving, AR tables, histograms, timing.
//! - [`oracle`]: dense full-Hilbert-space reference computations.

pub mod error;
pub mod expectation;
pub mod harness;
pub mod oracle;
pub mod problem;
pub mod qubo;
pub mod qudit;
pub mod solver;

pub use error::{Error, Result};
pub use problem::{generate_instance, MinDCutInstance, PenaltyConfig, WeightedGraph};
pub use qudit::{build_pool, PoolOperator, ProductState};
pub use solver::{solve, RunRecord, SolverConfig};
