//! Time-dependent critical link identification for road networks.
//!
//! Observed link travel times are turned into a per-timestep network delay
//! index (NDI), the worst-case `k`-link disruption is cast as a QUBO energy
//! minimisation, and the QUBO is solved with exact enumeration, an analytic
//! top-k solver, or simulated annealing. Horizon-level analytics (selection
//! frequencies, k-sweeps, high-risk windows, first differences, timings) sit
//! on top.
//!
//! The pipeline, bottom-up:
//!
//! - [`ingest`]: parse observation tables, build the directed topology,
//!   assemble complete per-step snapshots, check connectivity, generate
//!   synthetic networks.
//! - [`delay`]: free-flow times, disrupted travel times, link delay and the
//!   NDI oracle.
//! - [`qubo`]: coefficient extraction, penalty calibration, energy.
//! - [`solver`]: brute force, top-k, simulated annealing, repair.
//! - [`temporal`]: horizon sweeps and analytics.
//! - [`report`]: run configuration, persisted artifacts, GeoJSON and SVG
//!   output used by the `critlink` binary.

pub mod delay;
pub mod ingest;
pub mod qubo;
pub mod report;
pub mod solver;
pub mod temporal;

pub use delay::{AdditiveNdi, DelayError, DelayParams, DisruptionVector, FreeFlowTable, NdiOracle};
pub use ingest::{
    ColumnMap, ConnectivityReport, IngestError, LinkObservation, NetworkTopology, RepairPolicy,
    SnapshotSeries,
};
pub use qubo::{CoefficientSet, PairMode, PenaltyConfig, QuboError, QuboProblem};
pub use solver::{AnnealMode, AnnealSchedule, Method, SolveError, SolveResult};
pub use temporal::{HorizonResult, SolverConfig};
