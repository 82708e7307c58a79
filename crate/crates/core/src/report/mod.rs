//! Run configuration, persisted artifacts and output bundles for the
//! `critlink` command-line tool.

mod artifacts;
mod bundle;
mod commands;
mod geojson;
mod svg;

pub use artifacts::{load_dataset, Dataset, DatasetSource};
pub use bundle::{BundleFile, Manifest};
pub use commands::{
    cmd_export_geojson, cmd_generate, cmd_ingest, cmd_ksweep, cmd_solve, cmd_sweep, SweepOutcome,
};
pub use geojson::{export_geojson, GeoJsonInput};

use crate::delay::{DelayError, DelayParams};
use crate::ingest::{ColumnMap, IngestError, RepairPolicy};
use crate::qubo::{PairMode, PenaltyConfig, QuboError};
use crate::solver::{Method, SolveError, SolveOptions};
use crate::temporal::{AnalysisError, SolverConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Process exit status for each failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Validation = 1,
    PartialFailure = 2,
    Io = 3,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Ingest {
        path: String,
        #[source]
        source: IngestError,
    },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Qubo(#[from] QuboError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Io { .. } => ExitCode::Io,
            CliError::Ingest {
                source: IngestError::Io(_),
                ..
            } => ExitCode::Io,
            _ => ExitCode::Validation,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn format(path: &Path, message: impl Into<String>) -> Self {
        CliError::Format {
            path: path.display().to_string(),
            message: message.into(),
        }
    }
}

/// Shape of a generated synthetic network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub nodes: usize,
    pub links: usize,
    pub steps: usize,
}

/// Every parameter of a run. Loaded from a JSON file, overridden by flags,
/// and echoed into each output bundle.
///
/// `out_dir` and `workers` are not echoed and do not enter the config hash:
/// neither changes any result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Observation table or ingest artifact directory.
    pub input: Option<PathBuf>,
    /// Used when `input` is absent.
    pub synthetic: Option<SyntheticSpec>,
    pub columns: ColumnMap,
    pub delimiter: char,
    pub repair_policy: RepairPolicy,
    pub gamma: f64,
    pub k: usize,
    pub k_list: Vec<usize>,
    pub method: Method,
    pub sweeps: Option<usize>,
    pub restarts: Option<usize>,
    pub initial_temperature: Option<f64>,
    pub final_temperature: Option<f64>,
    pub safety_factor: f64,
    pub pair_mode: PairMode,
    pub percentiles: Vec<f64>,
    pub seed: u64,
    /// Rows in the top-frequency table.
    pub top_m: usize,
    /// Step for `solve`, fixed step for `ksweep` (all steps when absent).
    pub time_step: Option<u32>,
    /// Emit SVG plots next to the data files.
    pub plots: bool,
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
    #[serde(skip_serializing)]
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: None,
            synthetic: None,
            columns: ColumnMap::default(),
            delimiter: ',',
            repair_policy: RepairPolicy::default(),
            gamma: DelayParams::DEFAULT_GAMMA,
            k: 20,
            k_list: vec![20, 30, 40, 50, 60, 70, 80],
            method: Method::AnnealSwap,
            sweeps: None,
            restarts: None,
            initial_temperature: None,
            final_temperature: None,
            safety_factor: PenaltyConfig::DEFAULT_SAFETY_FACTOR,
            pair_mode: PairMode::Auto,
            percentiles: vec![90.0, 95.0],
            seed: 0,
            top_m: 20,
            time_step: None,
            plots: true,
            out_dir: PathBuf::from("out"),
            workers: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("reading config {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        DelayParams::new(self.gamma).map_err(|e| CliError::Validation(e.to_string()))?;
        if !(self.safety_factor.is_finite() && self.safety_factor >= 1.0) {
            return Err(CliError::Validation(format!(
                "safety factor must be >= 1, got {}",
                self.safety_factor
            )));
        }
        if let Some(p) = self
            .percentiles
            .iter()
            .find(|p| !(**p > 0.0 && **p < 100.0))
        {
            return Err(CliError::Validation(format!(
                "percentile {p} outside (0, 100)"
            )));
        }
        if !self.delimiter.is_ascii() {
            return Err(CliError::Validation("delimiter must be ASCII".into()));
        }
        if self.input.is_none() && self.synthetic.is_none() {
            return Err(CliError::Validation(
                "no input: pass --input or configure a synthetic network".into(),
            ));
        }
        Ok(())
    }

    /// Canonical JSON of the echoed fields.
    pub fn echo_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// First 16 hex digits of the SHA-256 of [`Self::echo_json`].
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.echo_json().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            gamma: self.gamma,
            options: SolveOptions {
                method: self.method,
                sweeps: self.sweeps,
                restarts: self.restarts,
                initial_temperature: self.initial_temperature,
                final_temperature: self.final_temperature,
            },
            penalty: PenaltyConfig {
                safety_factor: self.safety_factor,
            },
            pairs: self.pair_mode,
            seed: self.seed,
            workers: self.workers,
        }
    }

    pub(crate) fn meta(&self) -> Meta {
        Meta {
            config_hash: self.config_hash(),
            seed: self.seed,
        }
    }
}

/// Provenance stamped into every output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub config_hash: String,
    pub seed: u64,
}

impl Meta {
    pub(crate) fn csv_comment(&self) -> String {
        format!("# config_hash={} seed={}\n", self.config_hash, self.seed)
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// followed by a rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::io(format!("creating temp file in {}", dir.display()), e))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.flush())
        .map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    tmp.persist(path)
        .map_err(|e| CliError::io(format!("renaming into {}", path.display()), e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_out_dir_and_workers() {
        let a = RunConfig::default();
        let b = RunConfig {
            out_dir: "elsewhere".into(),
            workers: 7,
            ..RunConfig::default()
        };
        assert_eq!(a.config_hash(), b.config_hash());
        let c = RunConfig {
            seed: 1,
            ..RunConfig::default()
        };
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn echo_round_trips() {
        let cfg = RunConfig {
            synthetic: Some(SyntheticSpec {
                nodes: 10,
                links: 12,
                steps: 3,
            }),
            k: 4,
            ..RunConfig::default()
        };
        let back: RunConfig = serde_json::from_str(&cfg.echo_json()).unwrap();
        assert_eq!(back.config_hash(), cfg.config_hash());
        assert_eq!(back.k, 4);
    }

    #[test]
    fn validation() {
        let mut cfg = RunConfig {
            synthetic: Some(SyntheticSpec {
                nodes: 10,
                links: 12,
                steps: 3,
            }),
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_ok());
        cfg.gamma = 1.0;
        assert!(cfg.validate().is_err());
        cfg.gamma = 2.0;
        cfg.percentiles = vec![100.0];
        assert!(cfg.validate().is_err());
        cfg.percentiles = vec![90.0];
        cfg.synthetic = None;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_config_field_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"gama": 2.0}"#).is_err());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
