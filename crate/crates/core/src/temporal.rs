//! Horizon-level runs and analytics: per-step critical sets, selection
//! frequencies, k-sweeps, high-risk windows, first differences and solve
//! timings.

use crate::delay::{DelayError, NdiOracle};
use crate::ingest::NetworkTopology;
use crate::qubo::{build_qubo, PairMode, PenaltyConfig, QuboError};
use crate::solver::{solve, Method, SolveError, SolveOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("k = {k} exceeds the number of links ({links})")]
    KTooLarge { k: usize, links: usize },
    #[error("unknown time step {requested}; available: {available}")]
    UnknownTimeStep { requested: u32, available: String },
    #[error("series is empty")]
    Empty,
    #[error("need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("percentile must lie in (0, 100), got {0}")]
    InvalidPercentile(f64),
    #[error("failed to start worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error(transparent)]
    Qubo(#[from] QuboError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Everything needed to turn one snapshot into a solved critical set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub gamma: f64,
    pub options: SolveOptions,
    pub penalty: PenaltyConfig,
    pub pairs: PairMode,
    /// Base seed; the solve at time step `t` uses `seed ^ t`.
    pub seed: u64,
    /// Worker threads for per-step solves; 0 picks the rayon default.
    pub workers: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            gamma: crate::delay::DelayParams::DEFAULT_GAMMA,
            options: SolveOptions::default(),
            penalty: PenaltyConfig::default(),
            pairs: PairMode::Auto,
            seed: 0,
            workers: 0,
        }
    }
}

impl SolverConfig {
    pub fn step_seed(&self, time_step: u32) -> u64 {
        self.seed ^ u64::from(time_step)
    }
}

/// Solved critical set for one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSolution {
    pub time_step: u32,
    pub k: usize,
    /// Selected links, increasing index order.
    pub selected: Vec<usize>,
    /// NDI of the selected disruption, minutes.
    pub ndi_abs: f64,
    /// NDI with nothing disrupted.
    pub baseline: f64,
    /// `ndi_abs - baseline`.
    pub ndi_gain: f64,
    pub energy: f64,
    pub feasible: bool,
    pub method: Method,
    pub seed: u64,
    /// Seconds; excluded from serialisation.
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFailure {
    pub time_step: u32,
    pub error: String,
}

/// One entry per snapshot that solved, plus the failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonResult {
    pub k: usize,
    pub link_count: usize,
    pub steps: Vec<StepSolution>,
    pub failures: Vec<StepFailure>,
}

impl HorizonResult {
    /// `(time_step, absolute NDI)` per solved step.
    pub fn ndi_series(&self) -> Vec<(u32, f64)> {
        self.steps
            .iter()
            .map(|s| (s.time_step, s.ndi_abs))
            .collect()
    }

    pub fn gain_series(&self) -> Vec<(u32, f64)> {
        self.steps
            .iter()
            .map(|s| (s.time_step, s.ndi_gain))
            .collect()
    }

    pub fn total_wall_time(&self) -> f64 {
        self.steps.iter().map(|s| s.wall_time).sum()
    }
}

/// Builds and solves the problem for one time step. The reported NDI is
/// recomputed from the oracle for the returned set.
pub fn solve_step<O: NdiOracle + ?Sized>(
    oracle: &O,
    time_step: u32,
    k: usize,
    config: &SolverConfig,
) -> Result<StepSolution, AnalysisError> {
    let n = oracle.link_count();
    if k > n {
        return Err(AnalysisError::KTooLarge { k, links: n });
    }
    let problem = build_qubo(
        oracle,
        time_step,
        k,
        &config.penalty,
        config.pairs,
        Some(config.gamma),
    )?;
    let seed = config.step_seed(time_step);
    let result = solve(&problem, &config.options, seed)?;
    let baseline = oracle.ndi(&vec![false; n], time_step)?;
    let ndi_abs = oracle.ndi(result.bits.bits(), time_step)?;
    Ok(StepSolution {
        time_step,
        k,
        selected: result.selected(),
        ndi_abs,
        baseline,
        ndi_gain: ndi_abs - baseline,
        energy: result.energy,
        feasible: result.feasible,
        method: result.method,
        seed,
        wall_time: result.wall_time,
    })
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, AnalysisError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| AnalysisError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

fn solve_many<O: NdiOracle + ?Sized>(
    oracle: &O,
    steps: &[u32],
    k: usize,
    config: &SolverConfig,
) -> Result<Vec<Result<StepSolution, AnalysisError>>, AnalysisError> {
    with_pool(config.workers, || {
        steps
            .par_iter()
            .map(|&t| solve_step(oracle, t, k, config))
            .collect()
    })
}

/// Solves every snapshot independently. A failing step is recorded and the
/// rest continue.
pub fn sweep_horizon<O: NdiOracle + ?Sized>(
    oracle: &O,
    k: usize,
    config: &SolverConfig,
) -> Result<HorizonResult, AnalysisError> {
    let n = oracle.link_count();
    if k > n {
        return Err(AnalysisError::KTooLarge { k, links: n });
    }
    let steps = oracle.time_steps().to_vec();
    let mut solved = Vec::with_capacity(steps.len());
    let mut failures = Vec::new();
    for (t, outcome) in steps.iter().zip(solve_many(oracle, &steps, k, config)?) {
        match outcome {
            Ok(s) => solved.push(s),
            Err(e) => {
                log::warn!("time step {t} failed: {e}");
                failures.push(StepFailure {
                    time_step: *t,
                    error: e.to_string(),
                })
            }
        }
    }
    Ok(HorizonResult {
        k,
        link_count: n,
        steps: solved,
        failures,
    })
}

/// Per-link count of snapshots in which the link was selected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub k: usize,
    pub snapshot_count: usize,
    pub counts: Vec<usize>,
}

impl FrequencyTable {
    /// `(link, count)` by decreasing count, ties by increasing link index.
    pub fn ranked(&self) -> Vec<(usize, usize)> {
        let mut rows: Vec<(usize, usize)> = self.counts.iter().copied().enumerate().collect();
        rows.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        rows
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn link_frequency(horizon: &HorizonResult) -> Result<FrequencyTable, AnalysisError> {
    if horizon.steps.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut counts = vec![0usize; horizon.link_count];
    for step in &horizon.steps {
        for &s in &step.selected {
            counts[s] += 1;
        }
    }
    Ok(FrequencyTable {
        k: horizon.k,
        snapshot_count: horizon.steps.len(),
        counts,
    })
}

/// One row of the ranked frequency table with link geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub rank: usize,
    pub link_id: usize,
    pub from_node: String,
    pub to_node: String,
    pub frequency: usize,
    pub lat_from: f64,
    pub lon_from: f64,
    pub lat_to: f64,
    pub lon_to: f64,
}

/// The first `m` ranked rows (all rows if `m` exceeds the link count).
pub fn top_frequency_links(
    table: &FrequencyTable,
    topology: &NetworkTopology,
    m: usize,
) -> Vec<FrequencyRow> {
    table
        .ranked()
        .into_iter()
        .take(m)
        .enumerate()
        .map(|(i, (link, frequency))| {
            let l = &topology.links()[link];
            FrequencyRow {
                rank: i + 1,
                link_id: link,
                from_node: l.from.to_string(),
                to_node: l.to.to_string(),
                frequency,
                lat_from: l.geometry.lat_from,
                lon_from: l.geometry.lon_from,
                lat_to: l.geometry.lat_to,
                lon_to: l.geometry.lon_to,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSelection {
    All,
    Fixed(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweepEntry {
    pub k: usize,
    pub steps: Vec<StepSolution>,
}

/// Whether the set for `k_small` is contained in the set for `k_large` at
/// every swept step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestingCheck {
    pub k_small: usize,
    pub k_large: usize,
    pub nested: bool,
    pub violating_steps: Vec<u32>,
    /// NDI did not decrease from `k_small` to `k_large` at any step.
    pub ndi_non_decreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweepResult {
    pub k_list: Vec<usize>,
    pub time_steps: Vec<u32>,
    pub entries: Vec<KSweepEntry>,
    /// One check per consecutive pair in `k_list` order.
    pub nesting: Vec<NestingCheck>,
}

impl KSweepResult {
    pub fn all_nested(&self) -> bool {
        self.nesting.iter().all(|c| c.nested)
    }

    pub fn ndi_monotone(&self) -> bool {
        self.nesting.iter().all(|c| c.ndi_non_decreasing)
    }
}

/// Solves each `k` in `k_list` at the selected steps, holding everything
/// else fixed.
pub fn k_sweep<O: NdiOracle + ?Sized>(
    oracle: &O,
    steps: StepSelection,
    k_list: &[usize],
    config: &SolverConfig,
) -> Result<KSweepResult, AnalysisError> {
    let n = oracle.link_count();
    if let Some(&k) = k_list.iter().find(|&&k| k > n) {
        return Err(AnalysisError::KTooLarge { k, links: n });
    }
    let time_steps = match steps {
        StepSelection::All => oracle.time_steps().to_vec(),
        StepSelection::Fixed(t) => {
            if oracle.time_steps().binary_search(&t).is_err() {
                return Err(unknown_step(t, oracle.time_steps()));
            }
            vec![t]
        }
    };
    let mut entries = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let solved = solve_many(oracle, &time_steps, k, config)?
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        entries.push(KSweepEntry { k, steps: solved });
    }
    let nesting = entries
        .windows(2)
        .map(|w| {
            let (small, large) = (&w[0], &w[1]);
            let mut violating = Vec::new();
            let mut monotone = true;
            for (a, b) in small.steps.iter().zip(&large.steps) {
                let big: BTreeSet<usize> = b.selected.iter().copied().collect();
                if !a.selected.iter().all(|s| big.contains(s)) {
                    violating.push(a.time_step);
                }
                if b.ndi_abs < a.ndi_abs {
                    monotone = false;
                }
            }
            NestingCheck {
                k_small: small.k,
                k_large: large.k,
                nested: violating.is_empty(),
                violating_steps: violating,
                ndi_non_decreasing: monotone,
            }
        })
        .collect();
    Ok(KSweepResult {
        k_list: k_list.to_vec(),
        time_steps,
        entries,
        nesting,
    })
}

pub(crate) fn unknown_step(requested: u32, available: &[u32]) -> AnalysisError {
    let shown: Vec<String> = available.iter().take(20).map(u32::to_string).collect();
    let mut list = shown.join(", ");
    if available.len() > 20 {
        list.push_str(&format!(", ... ({} total)", available.len()));
    }
    AnalysisError::UnknownTimeStep {
        requested,
        available: list,
    }
}

/// Maximal block of adjacent flagged snapshots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Run {
    pub start_step: u32,
    pub end_step: u32,
    pub length: usize,
}

/// Steps in the top `100 - percentile` percent of the series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskBand {
    pub percentile: f64,
    /// Nearest-rank threshold: the `expected_count`-th largest value.
    pub threshold: f64,
    /// `ceil((100 - percentile) / 100 * T)`.
    pub expected_count: usize,
    pub flagged_steps: Vec<u32>,
    /// Runs of at least two adjacent flagged steps.
    pub runs: Vec<Run>,
    /// Flagged steps with no flagged neighbour.
    pub singletons: Vec<u32>,
    /// More steps flagged than `expected_count` because of ties.
    pub ties_at_threshold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskWindows {
    pub bands: Vec<RiskBand>,
    /// Every value in the series is identical.
    pub constant_series: bool,
}

impl RiskWindows {
    pub fn band(&self, percentile: f64) -> Option<&RiskBand> {
        self.bands.iter().find(|b| b.percentile == percentile)
    }
}

/// Flags high-risk steps for each percentile with nearest-rank thresholds.
/// Adjacency for runs is position in `series`.
pub fn risk_windows(
    series: &[(u32, f64)],
    percentiles: &[f64],
) -> Result<RiskWindows, AnalysisError> {
    if series.is_empty() {
        return Err(AnalysisError::Empty);
    }
    if let Some(&p) = percentiles.iter().find(|p| !(**p > 0.0 && **p < 100.0)) {
        return Err(AnalysisError::InvalidPercentile(p));
    }
    let total = series.len();
    let mut descending: Vec<f64> = series.iter().map(|s| s.1).collect();
    descending.sort_by(|a, b| b.total_cmp(a));
    let constant_series = descending.first() == descending.last();

    let bands = percentiles
        .iter()
        .map(|&p| {
            let share = (100.0 - p) * total as f64 / 100.0;
            let expected_count = ((share - 1e-9).ceil() as usize).clamp(1, total);
            let threshold = descending[expected_count - 1];
            let flags: Vec<bool> = series.iter().map(|s| s.1 >= threshold).collect();
            let flagged_steps: Vec<u32> = series
                .iter()
                .zip(&flags)
                .filter(|(_, &f)| f)
                .map(|(s, _)| s.0)
                .collect();
            let (runs, singletons) = split_runs(series, &flags);
            RiskBand {
                percentile: p,
                threshold,
                expected_count,
                ties_at_threshold: flagged_steps.len() > expected_count,
                flagged_steps,
                runs,
                singletons,
            }
        })
        .collect();
    Ok(RiskWindows {
        bands,
        constant_series,
    })
}

fn split_runs(series: &[(u32, f64)], flags: &[bool]) -> (Vec<Run>, Vec<u32>) {
    let mut runs = Vec::new();
    let mut singletons = Vec::new();
    let mut i = 0;
    while i < flags.len() {
        if !flags[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < flags.len() && flags[i] {
            i += 1;
        }
        let length = i - start;
        if length >= 2 {
            runs.push(Run {
                start_step: series[start].0,
                end_step: series[i - 1].0,
                length,
            });
        } else {
            singletons.push(series[start].0);
        }
    }
    (runs, singletons)
}

/// First differences of an NDI series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSeries {
    /// `(time_step, value(time_step) - value(previous step))`.
    pub deltas: Vec<(u32, f64)>,
}

impl DeltaSeries {
    pub fn sum(&self) -> f64 {
        self.deltas.iter().map(|d| d.1).sum()
    }
}

pub fn delta_series(series: &[(u32, f64)]) -> Result<DeltaSeries, AnalysisError> {
    if series.len() < 2 {
        return Err(AnalysisError::TooShort {
            needed: 2,
            got: series.len(),
        });
    }
    Ok(DeltaSeries {
        deltas: series
            .windows(2)
            .map(|w| (w[1].0, w[1].1 - w[0].1))
            .collect(),
    })
}

/// Summary statistics of per-step solve times (seconds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub count: usize,
    pub median: f64,
    pub p95: f64,
    pub max: f64,
    pub mean: f64,
    /// Least-squares slope of time against step position (seconds per step).
    pub slope: f64,
}

impl TimingStats {
    pub fn from_times(times: &[f64]) -> Self {
        if times.is_empty() {
            return TimingStats {
                count: 0,
                median: 0.0,
                p95: 0.0,
                max: 0.0,
                mean: 0.0,
                slope: 0.0,
            };
        }
        let n = times.len();
        let mut sorted = times.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        let mean = times.iter().sum::<f64>() / n as f64;
        let x_mean = (n - 1) as f64 / 2.0;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (i, &t) in times.iter().enumerate() {
            let dx = i as f64 - x_mean;
            sxy += dx * (t - mean);
            sxx += dx * dx;
        }
        TimingStats {
            count: n,
            median,
            p95: sorted[rank - 1],
            max: sorted[n - 1],
            mean,
            slope: if sxx > 0.0 { sxy / sxx } else { 0.0 },
        }
    }

    /// `|slope|` relative to the median step time.
    pub fn relative_slope(&self) -> f64 {
        if self.median > 0.0 {
            self.slope.abs() / self.median
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KTiming {
    pub k: usize,
    pub stats: TimingStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub per_step: Vec<(u32, f64)>,
    pub overall: TimingStats,
    pub per_k: Vec<KTiming>,
}

pub fn timing_report(horizon: &HorizonResult, sweep: Option<&KSweepResult>) -> TimingReport {
    let per_step: Vec<(u32, f64)> = horizon
        .steps
        .iter()
        .map(|s| (s.time_step, s.wall_time))
        .collect();
    let times: Vec<f64> = per_step.iter().map(|p| p.1).collect();
    let per_k = sweep
        .map(|sw| {
            sw.entries
                .iter()
                .map(|e| KTiming {
                    k: e.k,
                    stats: TimingStats::from_times(
                        &e.steps.iter().map(|s| s.wall_time).collect::<Vec<_>>(),
                    ),
                })
                .collect()
        })
        .unwrap_or_default();
    TimingReport {
        overall: TimingStats::from_times(&times),
        per_step,
        per_k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: &[f64]) -> Vec<(u32, f64)> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as u32 * 5, v))
            .collect()
    }

    #[test]
    fn ten_steps_top_ten_percent_is_the_maximum() {
        let s = series(&[3.0, 1.0, 4.0, 1.5, 9.0, 2.6, 5.0, 3.5, 8.0, 7.0]);
        let w = risk_windows(&s, &[90.0, 95.0]).unwrap();
        let top10 = w.band(90.0).unwrap();
        assert_eq!(top10.expected_count, 1);
        assert_eq!(top10.flagged_steps, vec![20]);
        assert_eq!(top10.threshold, 9.0);
        assert_eq!(top10.singletons, vec![20]);
        assert_eq!(w.band(95.0).unwrap().flagged_steps, vec![20]);
    }

    #[test]
    fn tied_maximum_flags_all_ties() {
        let s = series(&[9.0, 1.0, 9.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let top10 = risk_windows(&s, &[90.0]).unwrap().bands.remove(0);
        assert_eq!(top10.flagged_steps, vec![0, 10]);
        assert!(top10.ties_at_threshold);
    }

    #[test]
    fn constant_series_flags_everything() {
        let s = series(&[2.0; 8]);
        let w = risk_windows(&s, &[90.0]).unwrap();
        assert!(w.constant_series);
        assert_eq!(w.bands[0].flagged_steps.len(), 8);
        assert_eq!(w.bands[0].runs.len(), 1);
        assert_eq!(w.bands[0].runs[0].length, 8);
    }

    #[test]
    fn fifty_steps_flag_five() {
        let values: Vec<f64> = (0..50).map(|i| ((i * 37) % 50) as f64).collect();
        let w = risk_windows(&series(&values), &[90.0, 95.0]).unwrap();
        assert_eq!(w.band(90.0).unwrap().flagged_steps.len(), 5);
        assert_eq!(w.band(95.0).unwrap().flagged_steps.len(), 3);
    }

    #[test]
    fn percentile_validation() {
        assert!(risk_windows(&series(&[1.0]), &[100.0]).is_err());
        assert!(risk_windows(&series(&[1.0]), &[0.0]).is_err());
        assert!(risk_windows(&[], &[90.0]).is_err());
    }

    #[test]
    fn runs_and_singletons() {
        let s = series(&[10.0, 0.0, 10.0, 10.0, 10.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let w = risk_windows(&s, &[60.0]).unwrap();
        let b = &w.bands[0];
        assert_eq!(b.expected_count, 4);
        assert_eq!(b.singletons, vec![0]);
        assert_eq!(
            b.runs,
            vec![Run {
                start_step: 10,
                end_step: 20,
                length: 3
            }]
        );
    }

    #[test]
    fn delta_examples() {
        let d = delta_series(&series(&[10.0, 12.0, 11.0])).unwrap();
        assert_eq!(d.deltas, vec![(5, 2.0), (10, -1.0)]);
        assert_eq!(d.sum(), 11.0 - 10.0);
        let d = delta_series(&series(&[4.0; 5])).unwrap();
        assert!(d.deltas.iter().all(|x| x.1 == 0.0));
        assert!(matches!(
            delta_series(&series(&[1.0])),
            Err(AnalysisError::TooShort { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn timing_stats_constant_and_trend() {
        let s = TimingStats::from_times(&[0.5; 134]);
        assert_eq!(s.slope, 0.0);
        assert_eq!(s.count, 134);
        assert_eq!(s.median, 0.5);
        let s = TimingStats::from_times(&[1.0, 2.0, 3.0, 4.0]);
        assert!((s.slope - 1.0).abs() < 1e-12);
        assert_eq!(s.p95, 4.0);
        assert_eq!(s.median, 2.5);
    }

    #[test]
    fn frequency_ranking_ties_by_index() {
        let t = FrequencyTable {
            k: 1,
            snapshot_count: 6,
            counts: vec![1, 3, 0, 3, 2],
        };
        assert_eq!(t.ranked(), vec![(1, 3), (3, 3), (4, 2), (0, 1), (2, 0)]);
        assert_eq!(t.total(), 9);
    }
}
