//! One function per CLI subcommand. Each validates the configuration,
//! loads the dataset, computes, and writes its bundle atomically file by
//! file with the manifest last.

use super::artifacts::{load_dataset, Dataset, INGEST_REPORT_FILE, SNAPSHOTS_FILE, TOPOLOGY_FILE};
use super::bundle::{num, BundleWriter, Manifest};
use super::geojson::{export_geojson, GeoJsonInput};
use super::svg::LineChart;
use super::{write_atomic, CliError, RunConfig};
use crate::delay::AdditiveNdi;
use crate::ingest::{series_to_observations, write_observations};
use crate::qubo::build_qubo;
use crate::solver::solve;
use crate::temporal::{
    delta_series, k_sweep, link_frequency, risk_windows, sweep_horizon, timing_report,
    top_frequency_links, unknown_step, FrequencyRow, HorizonResult, KSweepResult, StepFailure,
    StepSelection,
};
use serde::Serialize;
use std::path::{Path, PathBuf};

pub(crate) const RUN_CONFIG_FILE: &str = "run_config.json";

fn start(config: &RunConfig, command: &str) -> Result<BundleWriter, CliError> {
    let mut bundle = BundleWriter::new(&config.out_dir, config.meta(), command)?;
    let mut echo = config.echo_json();
    echo.push('\n');
    bundle.text(RUN_CONFIG_FILE, &echo, false)?;
    Ok(bundle)
}

fn check_k(k: usize, dataset: &Dataset) -> Result<(), CliError> {
    let n = dataset.topology.link_count();
    if k == 0 || k > n {
        return Err(CliError::Validation(format!(
            "k must lie in 1..={n} for this network, got {k}"
        )));
    }
    Ok(())
}

/// Link gains at one step, `(gamma - 1) * t_s(t)` for the additive NDI.
fn gains(oracle: &AdditiveNdi<'_>, t: u32) -> Result<Vec<f64>, CliError> {
    let g = oracle.params().gamma() - 1.0;
    Ok(oracle.travel_times(t)?.iter().map(|x| g * x).collect())
}

const SET_HEADER: [&str; 10] = [
    "time_step",
    "rank",
    "link_id",
    "from_node",
    "to_node",
    "c_minutes",
    "lat_from",
    "lon_from",
    "lat_to",
    "lon_to",
];

/// Rows of a critical set ranked by decreasing gain, ties by link id.
fn set_rows(dataset: &Dataset, t: u32, selected: &[usize], c: &[f64]) -> Vec<Vec<String>> {
    let mut order = selected.to_vec();
    order.sort_by(|&a, &b| c[b].total_cmp(&c[a]).then(a.cmp(&b)));
    order
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            let link = &dataset.topology.links()[l];
            let g = &link.geometry;
            vec![
                t.to_string(),
                (i + 1).to_string(),
                l.to_string(),
                link.from.to_string(),
                link.to.to_string(),
                num(c[l]),
                num(g.lat_from),
                num(g.lon_from),
                num(g.lat_to),
                num(g.lon_to),
            ]
        })
        .collect()
}

/// Writes a synthetic observation table.
pub fn cmd_generate(config: &RunConfig) -> Result<Manifest, CliError> {
    let spec = config.synthetic.ok_or_else(|| {
        CliError::Validation("generate needs a synthetic network specification".into())
    })?;
    config.validate()?;
    let dataset = Dataset::synthetic(spec, config.seed)?;
    let observations = series_to_observations(&dataset.topology, &dataset.series);
    let mut bundle = start(config, "generate")?;
    let mut bytes = bundle.meta().csv_comment().into_bytes();
    write_observations(
        &mut bytes,
        &observations,
        &config.columns,
        config.delimiter as u8,
    )
    .map_err(|e| CliError::Ingest {
        path: "observations.csv".into(),
        source: e,
    })?;
    bundle.write("observations.csv", &bytes, false)?;
    bundle.json(INGEST_REPORT_FILE, "report", &dataset.report, false)?;
    bundle.finish()
}

/// Parses, validates and repairs the input, then persists topology,
/// snapshots and the ingest report for later subcommands.
pub fn cmd_ingest(config: &RunConfig) -> Result<Manifest, CliError> {
    config.validate()?;
    let dataset = load_dataset(config)?;
    let mut bundle = start(config, "ingest")?;
    let meta = bundle.meta().clone();
    bundle.text(TOPOLOGY_FILE, &dataset.topology_csv(&meta), false)?;
    bundle.text(SNAPSHOTS_FILE, &dataset.snapshots_csv(&meta), false)?;
    bundle.json(INGEST_REPORT_FILE, "report", &dataset.report, false)?;
    let r = &dataset.report;
    log::info!(
        "ingested {} links over {} nodes and {} snapshots ({} rejected rows, {} repaired cells, {} weak components)",
        r.links,
        r.nodes,
        r.snapshots,
        r.rejected_rows,
        r.repaired_cells,
        r.connectivity.component_count
    );
    bundle.finish()
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    time_step: u32,
    k: usize,
    lambda: f64,
    degenerate_penalty: bool,
    baseline: f64,
    ndi_abs: f64,
    result: &'a crate::solver::SolveResult,
}

/// Solves the critical-set problem at one time step (the first when none
/// is configured).
pub fn cmd_solve(config: &RunConfig) -> Result<Manifest, CliError> {
    config.validate()?;
    let dataset = load_dataset(config)?;
    check_k(config.k, &dataset)?;
    let oracle = dataset.oracle(config.gamma)?;
    let steps = dataset.series.time_steps();
    let t = match config.time_step {
        Some(t) if dataset.series.index_of(t).is_none() => {
            return Err(unknown_step(t, steps).into())
        }
        Some(t) => t,
        None => *steps
            .first()
            .ok_or_else(|| CliError::Validation("the dataset has no time steps".into()))?,
    };
    let solver = config.solver_config();
    let problem = build_qubo(
        &oracle,
        t,
        config.k,
        &solver.penalty,
        solver.pairs,
        Some(config.gamma),
    )?;
    let mut result = solve(&problem, &solver.options, solver.step_seed(t))?;
    let baseline = oracle.baseline(t)?;
    let ndi_abs = crate::delay::NdiOracle::ndi(&oracle, result.bits.bits(), t)?;
    result.ndi = Some(ndi_abs);

    let mut bundle = start(config, "solve")?;
    let c = gains(&oracle, t)?;
    bundle.csv(
        &format!("critical_set_t{t}.csv"),
        &SET_HEADER,
        set_rows(&dataset, t, &result.selected(), &c),
        false,
    )?;
    bundle.json(
        &format!("solve_result_t{t}.json"),
        "solve",
        &SolveSummary {
            time_step: t,
            k: config.k,
            lambda: problem.lambda(),
            degenerate_penalty: problem.degenerate_penalty(),
            baseline,
            ndi_abs,
            result: &result,
        },
        false,
    )?;
    let mut qubo = Vec::new();
    problem.write_to(&mut qubo)?;
    bundle.write(&format!("qubo_t{t}.txt"), &qubo, false)?;
    bundle.csv(
        &format!("solve_timing_t{t}.csv"),
        &["time_step", "solve_time_s"],
        [vec![t.to_string(), num(result.wall_time)]],
        true,
    )?;
    log::info!(
        "t={t}: selected {} links, NDI {ndi_abs:.3} (baseline {baseline:.3}), {:.3}s",
        result.selected().len(),
        result.wall_time
    );
    bundle.finish()
}

/// Result of a full-horizon sweep.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub manifest: Manifest,
    pub horizon: HorizonResult,
    pub failures: Vec<StepFailure>,
}

impl SweepOutcome {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    k: usize,
    link_count: usize,
    steps_solved: usize,
    steps_failed: usize,
    failures: &'a [StepFailure],
    ndi_mean: f64,
    ndi_max: f64,
    ndi_max_step: Option<u32>,
    frequency_total: usize,
    delta_sum: Option<f64>,
    all_feasible: bool,
}

fn frequency_row(r: FrequencyRow) -> Vec<String> {
    vec![
        r.rank.to_string(),
        r.link_id.to_string(),
        r.from_node,
        r.to_node,
        r.frequency.to_string(),
        num(r.lat_from),
        num(r.lon_from),
        num(r.lat_to),
        num(r.lon_to),
    ]
}

const FREQUENCY_HEADER: [&str; 9] = [
    "rank",
    "link_id",
    "from_node",
    "to_node",
    "frequency",
    "lat_from",
    "lon_from",
    "lat_to",
    "lon_to",
];

/// Solves every snapshot at fixed `k` and writes the temporal analysis.
pub fn cmd_sweep(config: &RunConfig) -> Result<SweepOutcome, CliError> {
    config.validate()?;
    let dataset = load_dataset(config)?;
    check_k(config.k, &dataset)?;
    let oracle = dataset.oracle(config.gamma)?;
    let horizon = sweep_horizon(&oracle, config.k, &config.solver_config())?;
    if horizon.steps.is_empty() {
        return Err(CliError::Validation(format!(
            "every time step failed; first error: {}",
            horizon
                .failures
                .first()
                .map(|f| f.error.as_str())
                .unwrap_or("none")
        )));
    }
    let mut bundle = start(config, "sweep")?;

    bundle.csv(
        "ndi_series.csv",
        &[
            "time_step",
            "ndi_abs",
            "ndi_gain",
            "baseline",
            "energy",
            "feasible",
        ],
        horizon.steps.iter().map(|s| {
            vec![
                s.time_step.to_string(),
                num(s.ndi_abs),
                num(s.ndi_gain),
                num(s.baseline),
                num(s.energy),
                s.feasible.to_string(),
            ]
        }),
        false,
    )?;

    let mut set_lines = Vec::new();
    for s in &horizon.steps {
        let c = gains(&oracle, s.time_step)?;
        set_lines.extend(set_rows(&dataset, s.time_step, &s.selected, &c));
    }
    bundle.csv("critical_sets.csv", &SET_HEADER, set_lines, false)?;

    let table = link_frequency(&horizon)?;
    let all_rows = top_frequency_links(&table, &dataset.topology, table.counts.len());
    bundle.csv(
        "frequency.csv",
        &FREQUENCY_HEADER,
        all_rows.iter().cloned().map(frequency_row),
        false,
    )?;
    bundle.csv(
        "top_links.csv",
        &FREQUENCY_HEADER,
        all_rows
            .iter()
            .take(config.top_m)
            .cloned()
            .map(frequency_row),
        false,
    )?;

    let series = horizon.ndi_series();
    let windows = risk_windows(&series, &config.percentiles)?;
    bundle.json("risk_windows.json", "risk_windows", &windows, false)?;

    let deltas = delta_series(&series).ok();
    bundle.csv(
        "delta.csv",
        &["time_step", "delta_ndi"],
        deltas
            .iter()
            .flat_map(|d| d.deltas.iter())
            .map(|&(t, d)| vec![t.to_string(), num(d)]),
        false,
    )?;

    let timing = timing_report(&horizon, None);
    bundle.csv(
        "timing.csv",
        &["time_step", "solve_time_s"],
        timing
            .per_step
            .iter()
            .map(|&(t, s)| vec![t.to_string(), num(s)]),
        true,
    )?;
    bundle.json("timing.json", "timing", &timing, true)?;

    let (max_step, ndi_max) = series
        .iter()
        .fold((None, f64::NEG_INFINITY), |(bt, bv), &(t, v)| {
            if v > bv {
                (Some(t), v)
            } else {
                (bt, bv)
            }
        });
    bundle.json(
        "summary.json",
        "summary",
        &SweepSummary {
            k: config.k,
            link_count: horizon.link_count,
            steps_solved: horizon.steps.len(),
            steps_failed: horizon.failures.len(),
            failures: &horizon.failures,
            ndi_mean: series.iter().map(|s| s.1).sum::<f64>() / series.len() as f64,
            ndi_max,
            ndi_max_step: max_step,
            frequency_total: table.total(),
            delta_sum: deltas.as_ref().map(|d| d.sum()),
            all_feasible: horizon.steps.iter().all(|s| s.feasible),
        },
        false,
    )?;

    if config.plots {
        let pts: Vec<(f64, f64)> = series.iter().map(|&(t, v)| (f64::from(t), v)).collect();
        let ndi = LineChart::new(
            &format!("Network delay index of the critical set, k = {}", config.k),
            "time step",
            "NDI (minutes)",
        )
        .with_series("NDI", pts.clone());
        bundle.text("ndi.svg", &ndi.render(), false)?;

        if let Some(d) = &deltas {
            let delta = LineChart::new(
                "Step-to-step change in NDI",
                "time step",
                "delta NDI (minutes)",
            )
            .with_series(
                "delta",
                d.deltas.iter().map(|&(t, v)| (f64::from(t), v)).collect(),
            );
            bundle.text("delta.svg", &delta.render(), false)?;
        }

        let mut risk = LineChart::new("High-risk windows", "time step", "NDI (minutes)")
            .with_series("NDI", pts);
        for band in &windows.bands {
            risk.thresholds
                .push((format!("p{}", band.percentile), band.threshold));
        }
        if let Some(band) = windows.bands.first() {
            for run in &band.runs {
                risk.bands
                    .push((f64::from(run.start_step), f64::from(run.end_step)));
            }
            for &s in &band.singletons {
                risk.bands.push((f64::from(s), f64::from(s)));
            }
        }
        bundle.text("risk.svg", &risk.render(), false)?;

        let time = LineChart::new("Solve time per step", "time step", "seconds").with_series(
            "solve time",
            timing
                .per_step
                .iter()
                .map(|&(t, s)| (f64::from(t), s))
                .collect(),
        );
        bundle.text("timing.svg", &time.render(), true)?;
    }

    let failures = horizon.failures.clone();
    let manifest = bundle.finish()?;
    Ok(SweepOutcome {
        manifest,
        horizon,
        failures,
    })
}

/// Solves each `k` in the configured list and checks nesting.
pub fn cmd_ksweep(config: &RunConfig) -> Result<(Manifest, KSweepResult), CliError> {
    config.validate()?;
    if config.k_list.is_empty() {
        return Err(CliError::Validation("k list is empty".into()));
    }
    let dataset = load_dataset(config)?;
    let mut k_list = config.k_list.clone();
    k_list.sort_unstable();
    k_list.dedup();
    for &k in &k_list {
        check_k(k, &dataset)?;
    }
    let oracle = dataset.oracle(config.gamma)?;
    let selection = config
        .time_step
        .map_or(StepSelection::All, StepSelection::Fixed);
    let result = k_sweep(&oracle, selection, &k_list, &config.solver_config())?;
    let mut bundle = start(config, "ksweep")?;

    let rows = |f: &dyn Fn(usize, &crate::temporal::StepSolution) -> Vec<Vec<String>>| {
        result
            .entries
            .iter()
            .flat_map(|e| e.steps.iter().flat_map(move |s| f(e.k, s)))
            .collect::<Vec<_>>()
    };
    bundle.csv(
        "ksweep.csv",
        &["k", "time_step", "ndi_abs", "ndi_gain"],
        rows(&|k, s| {
            vec![vec![
                k.to_string(),
                s.time_step.to_string(),
                num(s.ndi_abs),
                num(s.ndi_gain),
            ]]
        }),
        false,
    )?;
    bundle.csv(
        "ksweep_sets.csv",
        &["k", "time_step", "link_id"],
        rows(&|k, s| {
            s.selected
                .iter()
                .map(|l| vec![k.to_string(), s.time_step.to_string(), l.to_string()])
                .collect()
        }),
        false,
    )?;
    bundle.json("nesting.json", "nesting", &result.nesting, false)?;
    bundle.csv(
        "ksweep_timing.csv",
        &["k", "time_step", "solve_time_s"],
        rows(&|k, s| {
            vec![vec![
                k.to_string(),
                s.time_step.to_string(),
                num(s.wall_time),
            ]]
        }),
        true,
    )?;

    if config.plots {
        let mean: Vec<(f64, f64)> = result
            .entries
            .iter()
            .map(|e| {
                let total: f64 = e.steps.iter().map(|s| s.ndi_abs).sum();
                (e.k as f64, total / e.steps.len().max(1) as f64)
            })
            .collect();
        let chart = LineChart::new("NDI against critical-set size", "k", "mean NDI (minutes)")
            .with_series("mean NDI", mean);
        bundle.text("ksweep.svg", &chart.render(), false)?;
    }
    if !result.all_nested() {
        log::warn!("critical sets are not nested across the k list");
    }
    Ok((bundle.finish()?, result))
}

/// Converts a frequency or critical-set CSV to GeoJSON. Writes to `output`
/// or, when absent, next to the other outputs under the input's stem.
pub fn cmd_export_geojson(
    config: &RunConfig,
    table: &Path,
    output: Option<&Path>,
) -> Result<PathBuf, CliError> {
    config.validate()?;
    let dataset = load_dataset(config)?;
    let input = GeoJsonInput::read(table)?;
    let value = export_geojson(&dataset, &input, config.gamma, &config.meta())?;
    let path = match output {
        Some(p) => p.to_owned(),
        None => {
            let stem = table
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("links");
            config.out_dir.join(format!("{stem}.geojson"))
        }
    };
    let mut text = serde_json::to_string_pretty(&value).expect("geojson serialises");
    text.push('\n');
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}
