//! Scheduling of reconfigurable active distribution networks with DG, ESS and
//! wind units, covering two operating modes: normal operation (minimize line
//! losses) and emergency islanded operation (minimize load shedding).
//!
//! The crate builds a convexified mixed-integer second-order-cone model of the
//! line-flow-based AC power flow, solves it with an embedded branch-and-bound
//! solver using outer-approximation cuts over a dual-simplex LP core, and
//! cross-checks every solution with model-free verifiers (union-find radiality
//! check, backward/forward sweep power flow).
//!
//! Modules:
//! - [`case`]: network case ingestion, validation, per-unit conversion.
//! - [`model`]: model construction (variables, rows, cone blocks, objective)
//!   and solution decoding.
//! - [`solver`]: branch-and-bound MISOCP solver with cone cuts and LP core.
//! - [`radiality`]: union-find radiality/connectivity verdicts and a
//!   brute-force spanning-tree enumerator.
//! - [`sweep`]: backward/forward sweep power flow used as an independent
//!   physics oracle.
//! - [`mps`]: model export/import in MPS format with quadratic-constraint
//!   sections.
//! - [`verify`]: the solution invariant battery.
//! - [`run`]: end-to-end pipeline (normalizer pre-solves, joint solve,
//!   loss-minimal polish, decoding, verification).

pub mod case;
pub mod model;
pub mod mps;
pub mod radiality;
pub mod run;
pub mod solver;
pub mod sweep;
pub mod verify;

pub use case::{load_case, to_per_unit, NetworkCase, PuNetwork};
pub use model::{build_model, BuildOptions, Mode, ModelInstance, Schedule};
pub use run::{solve_case, RunArtifacts};
pub use solver::{solve, SolveResult, SolveStatus, SolverOptions};
