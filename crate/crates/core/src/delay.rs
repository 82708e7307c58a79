//! Free-flow travel times, disruption-conditional delays and the
//! time-dependent Network Delay Index (NDI).
//!
//! All quantities are in minutes. A disrupted link's observed travel time is
//! multiplied by the severity factor `gamma > 1`; its delay is the
//! (possibly disrupted) travel time minus its free-flow time, and the NDI of
//! a snapshot is the sum of link delays.

use crate::ingest::{NetworkTopology, SnapshotSeries};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DelayError {
    #[error("severity gamma must be a finite value > 1, got {0}")]
    InvalidGamma(f64),
    #[error("disruption vector has {got} entries, network has {expected} links")]
    LengthMismatch { expected: usize, got: usize },
    #[error("unknown time step {0}")]
    UnknownTimeStep(u32),
    #[error("series has {series} links but topology has {topology}")]
    LinkCountMismatch { series: usize, topology: usize },
}

/// Disruption severity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayParams {
    gamma: f64,
}

impl DelayParams {
    pub const DEFAULT_GAMMA: f64 = 2.0;

    pub fn new(gamma: f64) -> Result<Self, DelayError> {
        if gamma.is_finite() && gamma > 1.0 {
            Ok(DelayParams { gamma })
        } else {
            Err(DelayError::InvalidGamma(gamma))
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

impl Default for DelayParams {
    fn default() -> Self {
        DelayParams {
            gamma: Self::DEFAULT_GAMMA,
        }
    }
}

/// Per-link free-flow quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeFlowTable {
    /// `min(t0_speed, t0_time)`, minutes.
    pub t0: Vec<f64>,
    /// Length over the fastest observed speed, minutes.
    pub t0_speed: Vec<f64>,
    /// Fastest observed travel time, minutes.
    pub t0_time: Vec<f64>,
    /// Fastest observed speed, km/h.
    pub v_free: Vec<f64>,
}

impl FreeFlowTable {
    pub fn link_count(&self) -> usize {
        self.t0.len()
    }
}

pub fn free_flow_times(
    series: &SnapshotSeries,
    topology: &NetworkTopology,
) -> Result<FreeFlowTable, DelayError> {
    let links = topology.link_count();
    if series.link_count() != links {
        return Err(DelayError::LinkCountMismatch {
            series: series.link_count(),
            topology: links,
        });
    }
    let mut v_free = vec![f64::NEG_INFINITY; links];
    let mut t0_time = vec![f64::INFINITY; links];
    for idx in 0..series.step_count() {
        for (s, (&t, &v)) in series
            .travel_times(idx)
            .iter()
            .zip(series.speeds(idx))
            .enumerate()
        {
            v_free[s] = v_free[s].max(v);
            t0_time[s] = t0_time[s].min(t);
        }
    }
    let t0_speed: Vec<f64> = topology
        .links()
        .iter()
        .zip(&v_free)
        .map(|(l, &v)| l.length_km / v * 60.0)
        .collect();
    let t0 = t0_speed
        .iter()
        .zip(&t0_time)
        .map(|(&a, &b)| a.min(b))
        .collect();
    Ok(FreeFlowTable {
        t0,
        t0_speed,
        t0_time,
        v_free,
    })
}

/// Travel time of a link given its disruption state.
pub fn disrupted_travel_time(observed: f64, disrupted: bool, params: DelayParams) -> f64 {
    if disrupted {
        params.gamma * observed
    } else {
        observed
    }
}

/// Delay of a link relative to its free-flow time.
pub fn link_delay(observed: f64, disrupted: bool, params: DelayParams, free_flow: f64) -> f64 {
    disrupted_travel_time(observed, disrupted, params) - free_flow
}

/// Binary disruption decision over all links, with its target cardinality.
///
/// Serialised sparsely as `{len, k, selected}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "SparseDisruption", try_from = "SparseDisruption")]
pub struct DisruptionVector {
    bits: Vec<bool>,
    k: usize,
}

impl DisruptionVector {
    pub fn new(bits: Vec<bool>, k: usize) -> Self {
        DisruptionVector { bits, k }
    }

    pub fn zeros(len: usize, k: usize) -> Self {
        DisruptionVector {
            bits: vec![false; len],
            k,
        }
    }

    /// Vector of length `len` with exactly the listed links set.
    pub fn from_indices(len: usize, selected: &[usize], k: usize) -> Self {
        let mut bits = vec![false; len];
        for &s in selected {
            bits[s] = true;
        }
        DisruptionVector { bits, k }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_feasible(&self) -> bool {
        self.popcount() == self.k
    }

    /// Selected link indices in increasing order.
    pub fn selected(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct SparseDisruption {
    len: usize,
    k: usize,
    selected: Vec<usize>,
}

impl From<DisruptionVector> for SparseDisruption {
    fn from(u: DisruptionVector) -> Self {
        SparseDisruption {
            len: u.len(),
            k: u.k,
            selected: u.selected(),
        }
    }
}

impl TryFrom<SparseDisruption> for DisruptionVector {
    type Error = String;
    fn try_from(s: SparseDisruption) -> Result<Self, Self::Error> {
        if let Some(bad) = s.selected.iter().find(|&&i| i >= s.len) {
            return Err(format!(
                "selected link {bad} out of range for {} links",
                s.len
            ));
        }
        Ok(DisruptionVector::from_indices(s.len, &s.selected, s.k))
    }
}

/// Evaluates the NDI of a disruption vector at a time step.
///
/// Implementations must return the baseline (undisrupted) NDI for the
/// all-zeros vector.
pub trait NdiOracle: Sync {
    fn link_count(&self) -> usize;

    /// Time steps the oracle can evaluate, strictly increasing.
    fn time_steps(&self) -> &[u32];

    fn ndi(&self, disrupted: &[bool], time_step: u32) -> Result<f64, DelayError>;

    /// True when NDI decomposes into independent per-link terms, in which
    /// case every pairwise interaction is exactly zero.
    fn is_additive(&self) -> bool {
        false
    }
}

/// The sum-of-link-delays NDI.
#[derive(Debug, Clone, Copy)]
pub struct AdditiveNdi<'a> {
    series: &'a SnapshotSeries,
    free_flow: &'a FreeFlowTable,
    params: DelayParams,
}

impl<'a> AdditiveNdi<'a> {
    pub fn new(
        series: &'a SnapshotSeries,
        free_flow: &'a FreeFlowTable,
        params: DelayParams,
    ) -> Result<Self, DelayError> {
        if series.link_count() != free_flow.link_count() {
            return Err(DelayError::LinkCountMismatch {
                series: series.link_count(),
                topology: free_flow.link_count(),
            });
        }
        Ok(AdditiveNdi {
            series,
            free_flow,
            params,
        })
    }

    pub fn params(&self) -> DelayParams {
        self.params
    }

    pub fn series(&self) -> &'a SnapshotSeries {
        self.series
    }

    pub fn free_flow(&self) -> &'a FreeFlowTable {
        self.free_flow
    }

    fn position(&self, time_step: u32) -> Result<usize, DelayError> {
        self.series
            .index_of(time_step)
            .ok_or(DelayError::UnknownTimeStep(time_step))
    }

    /// Observed travel times at `time_step`.
    pub fn travel_times(&self, time_step: u32) -> Result<&'a [f64], DelayError> {
        Ok(self.series.travel_times(self.position(time_step)?))
    }

    /// NDI with no link disrupted.
    pub fn baseline(&self, time_step: u32) -> Result<f64, DelayError> {
        let times = self.travel_times(time_step)?;
        Ok(times
            .iter()
            .zip(&self.free_flow.t0)
            .map(|(&t, &t0)| t - t0)
            .sum())
    }
}

impl NdiOracle for AdditiveNdi<'_> {
    fn link_count(&self) -> usize {
        self.series.link_count()
    }

    fn time_steps(&self) -> &[u32] {
        self.series.time_steps()
    }

    fn ndi(&self, disrupted: &[bool], time_step: u32) -> Result<f64, DelayError> {
        network_delay_index(
            disrupted,
            time_step,
            self.series,
            self.free_flow,
            self.params,
        )
    }

    fn is_additive(&self) -> bool {
        true
    }
}

/// Sum over all links of [`link_delay`] at `time_step`.
pub fn network_delay_index(
    disrupted: &[bool],
    time_step: u32,
    series: &SnapshotSeries,
    free_flow: &FreeFlowTable,
    params: DelayParams,
) -> Result<f64, DelayError> {
    if disrupted.len() != series.link_count() {
        return Err(DelayError::LengthMismatch {
            expected: series.link_count(),
            got: disrupted.len(),
        });
    }
    let idx = series
        .index_of(time_step)
        .ok_or(DelayError::UnknownTimeStep(time_step))?;
    Ok(series
        .travel_times(idx)
        .iter()
        .zip(disrupted)
        .zip(&free_flow.t0)
        .map(|((&t, &u), &t0)| link_delay(t, u, params, t0))
        .sum())
}
