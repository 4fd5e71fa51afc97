//! Join-order optimization as a QUBO, solved by annealing-style samplers
//! under a time budget.
//!
//! Pipeline: a workload ([`catalog`]) is turned into a join graph
//! ([`joingraph`]), encoded as a QUBO ([`qubo`]), sampled ([`sampler`]) either
//! directly, through iterative correlation relaxation ([`relax`]), or through
//! decomposition and composition ([`decomp`]), and decoded into a plan and a
//! `Leading(...)` hint ([`cli::hint`]). [`orchestrator`] routes and budgets
//! the whole thing.

pub mod catalog;
pub mod cli;
pub mod clock;
pub mod decomp;
pub mod error;
pub mod joingraph;
pub mod orchestrator;
pub mod qubo;
pub mod relax;
pub mod sampler;

pub use catalog::{load_workload, Catalog, PlanTree, QuerySpec};
pub use error::{Error, Result};
pub use orchestrator::{solve, Solution, SolveConfig, Strategy};
