//! Link-level traffic observations: parsing, topology, snapshots,
//! connectivity and synthetic data.

mod connectivity;
mod parse;
mod snapshots;
mod synthetic;
mod topology;

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

pub use connectivity::{connectivity_report, ConnectivityReport};
pub use parse::{parse_observations, write_observations, ParseOutcome, RejectedRow};
pub use snapshots::{assemble_snapshots, RepairPolicy, SnapshotSeries};
pub use synthetic::{generate_synthetic, series_to_observations, SyntheticNetwork};
pub use topology::{build_topology, Link, LinkGeometry, NetworkTopology};

/// Opaque node identifier as it appears in the source table.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_owned())
    }
}

/// One (link, time step) traffic record.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkObservation {
    pub from_node: NodeId,
    pub to_node: NodeId,
    pub lat_from: f64,
    pub lon_from: f64,
    pub lat_to: f64,
    pub lon_to: f64,
    /// Minutes, strictly positive.
    pub travel_time: f64,
    /// km/h, strictly positive.
    pub speed: f64,
    pub time_step: u32,
}

/// Maps logical fields onto header names of the source table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub from_node: String,
    pub to_node: String,
    pub lat_from: String,
    pub lon_from: String,
    pub lat_to: String,
    pub lon_to: String,
    pub travel_time_min: String,
    pub speed_kmh: String,
    pub time_step: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            from_node: "from_node".into(),
            to_node: "to_node".into(),
            lat_from: "lat_from".into(),
            lon_from: "lon_from".into(),
            lat_to: "lat_to".into(),
            lon_to: "lon_to".into(),
            travel_time_min: "travel_time_min".into(),
            speed_kmh: "speed_kmh".into(),
            time_step: "time_step".into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unreadable source: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed table: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing mandatory column `{column}`")]
    MissingColumn { column: String },
    #[error(
        "{rejected} of {total} rows rejected; the column mapping probably does not match the input"
    )]
    TooManyRejected { rejected: usize, total: usize },
    #[error("no observations")]
    Empty,
    #[error("link {link} ({from} -> {to}) is missing at {missing} of {steps} time steps")]
    IncompleteLink {
        link: usize,
        from: NodeId,
        to: NodeId,
        missing: usize,
        steps: usize,
    },
    #[error("observation refers to link {from} -> {to} which is not in the topology")]
    UnknownLink { from: NodeId, to: NodeId },
    #[error("infeasible synthetic network: {0}")]
    InfeasibleSynthetic(String),
    #[error("invalid snapshot data: {0}")]
    InvalidSeries(String),
}

/// Row, duplicate and repair counts for one ingest run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub observations: usize,
    pub rejected_rows: usize,
    pub duplicate_rows: usize,
    pub nodes: usize,
    pub links: usize,
    pub self_loops: usize,
    pub snapshots: usize,
    pub first_time_step: Option<u32>,
    pub last_time_step: Option<u32>,
    pub repair_policy: RepairPolicy,
    pub repaired_cells: usize,
    pub connectivity: ConnectivityReport,
    /// First few rejected rows with reasons, for diagnostics.
    pub rejected_sample: Vec<RejectedRow>,
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    debug_assert!(!values.is_empty());
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
