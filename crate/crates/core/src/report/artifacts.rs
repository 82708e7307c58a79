use super::{CliError, Meta, RunConfig, SyntheticSpec};
use crate::delay::{free_flow_times, AdditiveNdi, DelayParams, FreeFlowTable};
use crate::ingest::{
    assemble_snapshots, build_topology, connectivity_report, generate_synthetic,
    parse_observations, IngestReport, LinkGeometry, NetworkTopology, NodeId, RepairPolicy,
    SnapshotSeries,
};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub(crate) const TOPOLOGY_FILE: &str = "topology.csv";
pub(crate) const SNAPSHOTS_FILE: &str = "snapshots.csv";
pub(crate) const INGEST_REPORT_FILE: &str = "ingest_report.json";
pub(crate) use super::bundle::MANIFEST_FILE;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Observations(PathBuf),
    Artifacts(PathBuf),
    Synthetic { spec: SyntheticSpec, seed: u64 },
}

/// A loaded network with its complete snapshot series and free-flow table.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub topology: NetworkTopology,
    pub series: SnapshotSeries,
    pub free_flow: FreeFlowTable,
    pub report: IngestReport,
    pub source: DatasetSource,
}

impl Dataset {
    fn assemble(
        topology: NetworkTopology,
        series: SnapshotSeries,
        report: IngestReport,
        source: DatasetSource,
    ) -> Result<Self, CliError> {
        let free_flow = free_flow_times(&series, &topology)?;
        Ok(Dataset {
            topology,
            series,
            free_flow,
            report,
            source,
        })
    }

    pub fn oracle(&self, gamma: f64) -> Result<AdditiveNdi<'_>, CliError> {
        let params = DelayParams::new(gamma)?;
        Ok(AdditiveNdi::new(&self.series, &self.free_flow, params)?)
    }

    /// Parses an observation table and assembles it.
    pub fn from_observations(path: &Path, config: &RunConfig) -> Result<Self, CliError> {
        let ingest_err = |source| CliError::Ingest {
            path: path.display().to_string(),
            source,
        };
        let file = std::fs::File::open(path)
            .map_err(|e| CliError::io(format!("opening {}", path.display()), e))?;
        let parsed = parse_observations(
            std::io::BufReader::new(file),
            &config.columns,
            config.delimiter as u8,
        )
        .map_err(ingest_err)?;
        let topology = build_topology(&parsed.observations).map_err(ingest_err)?;
        let series = assemble_snapshots(&parsed.observations, &topology, config.repair_policy)
            .map_err(ingest_err)?;
        let connectivity = connectivity_report(&topology).map_err(ingest_err)?;
        let report = IngestReport {
            rows_read: parsed.rows_read,
            observations: parsed.observations.len(),
            rejected_rows: parsed.rejected.len(),
            duplicate_rows: parsed.duplicates,
            nodes: topology.node_count(),
            links: topology.link_count(),
            self_loops: topology.self_loop_count(),
            snapshots: series.step_count(),
            first_time_step: series.time_steps().first().copied(),
            last_time_step: series.time_steps().last().copied(),
            repair_policy: config.repair_policy,
            repaired_cells: series.repaired_count(),
            connectivity,
            rejected_sample: parsed.rejected.into_iter().take(20).collect(),
        };
        Self::assemble(
            topology,
            series,
            report,
            DatasetSource::Observations(path.to_owned()),
        )
    }

    pub fn synthetic(spec: SyntheticSpec, seed: u64) -> Result<Self, CliError> {
        let net = generate_synthetic(spec.nodes, spec.links, spec.steps, seed).map_err(|e| {
            CliError::Ingest {
                path: "<synthetic>".into(),
                source: e,
            }
        })?;
        let report = summary_report(&net.topology, &net.series, RepairPolicy::Strict)?;
        Self::assemble(
            net.topology,
            net.series,
            report,
            DatasetSource::Synthetic { spec, seed },
        )
    }

    pub(crate) fn topology_csv(&self, meta: &Meta) -> String {
        let mut out = meta.csv_comment();
        out.push_str("link_id,from_node,to_node,lat_from,lon_from,lat_to,lon_to,length_km\n");
        let mut w = csv_writer();
        for (i, l) in self.topology.links().iter().enumerate() {
            w.write_record([
                i.to_string(),
                l.from.to_string(),
                l.to.to_string(),
                l.geometry.lat_from.to_string(),
                l.geometry.lon_from.to_string(),
                l.geometry.lat_to.to_string(),
                l.geometry.lon_to.to_string(),
                l.length_km.to_string(),
            ])
            .expect("in-memory write");
        }
        out.push_str(&finish(w));
        out
    }

    pub(crate) fn snapshots_csv(&self, meta: &Meta) -> String {
        let mut out = meta.csv_comment();
        out.push_str("time_step,link_id,travel_time_min,speed_kmh,repaired\n");
        for (idx, step) in self.series.time_steps().iter().enumerate() {
            let times = self.series.travel_times(idx);
            let speeds = self.series.speeds(idx);
            for link in 0..self.series.link_count() {
                let _ = writeln!(
                    out,
                    "{step},{link},{},{},{}",
                    times[link],
                    speeds[link],
                    u8::from(self.series.is_repaired(idx, link))
                );
            }
        }
        out
    }
}

fn summary_report(
    topology: &NetworkTopology,
    series: &SnapshotSeries,
    policy: RepairPolicy,
) -> Result<IngestReport, CliError> {
    let connectivity = connectivity_report(topology).map_err(|e| CliError::Ingest {
        path: "<topology>".into(),
        source: e,
    })?;
    let cells = series.step_count() * series.link_count();
    Ok(IngestReport {
        rows_read: cells,
        observations: cells,
        rejected_rows: 0,
        duplicate_rows: 0,
        nodes: topology.node_count(),
        links: topology.link_count(),
        self_loops: topology.self_loop_count(),
        snapshots: series.step_count(),
        first_time_step: series.time_steps().first().copied(),
        last_time_step: series.time_steps().last().copied(),
        repair_policy: policy,
        repaired_cells: series.repaired_count(),
        connectivity,
        rejected_sample: Vec::new(),
    })
}

pub(crate) fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new())
}

pub(crate) fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

#[derive(Deserialize)]
struct TopologyRow {
    link_id: usize,
    from_node: String,
    to_node: String,
    lat_from: f64,
    lon_from: f64,
    lat_to: f64,
    lon_to: f64,
    length_km: f64,
}

#[derive(Deserialize)]
struct SnapshotRow {
    time_step: u32,
    link_id: usize,
    travel_time_min: f64,
    speed_kmh: f64,
    repaired: u8,
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::io(format!("opening {}", path.display()), e))?;
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(file))
}

/// Reloads the artifacts written by `ingest`.
pub(crate) fn load_artifacts(dir: &Path) -> Result<Dataset, CliError> {
    let topo_path = dir.join(TOPOLOGY_FILE);
    let mut links = Vec::new();
    for (i, row) in reader(&topo_path)?.deserialize::<TopologyRow>().enumerate() {
        let row = row.map_err(|e| CliError::format(&topo_path, e.to_string()))?;
        if row.link_id != i {
            return Err(CliError::format(
                &topo_path,
                format!(
                    "link ids must be dense and ordered; found {} at row {i}",
                    row.link_id
                ),
            ));
        }
        links.push((
            NodeId(row.from_node),
            NodeId(row.to_node),
            LinkGeometry {
                lat_from: row.lat_from,
                lon_from: row.lon_from,
                lat_to: row.lat_to,
                lon_to: row.lon_to,
            },
            row.length_km,
        ));
    }
    let topology = NetworkTopology::from_links(links).map_err(|e| CliError::Ingest {
        path: topo_path.display().to_string(),
        source: e,
    })?;

    let snap_path = dir.join(SNAPSHOTS_FILE);
    let n = topology.link_count();
    type Cell = Option<(f64, f64, bool)>;
    let mut rows: BTreeMap<u32, Vec<Cell>> = BTreeMap::new();
    for row in reader(&snap_path)?.deserialize::<SnapshotRow>() {
        let row = row.map_err(|e| CliError::format(&snap_path, e.to_string()))?;
        if row.link_id >= n {
            return Err(CliError::format(
                &snap_path,
                format!("link id {} out of range", row.link_id),
            ));
        }
        rows.entry(row.time_step).or_insert_with(|| vec![None; n])[row.link_id] =
            Some((row.travel_time_min, row.speed_kmh, row.repaired != 0));
    }
    let time_steps: Vec<u32> = rows.keys().copied().collect();
    let mut tt = Vec::with_capacity(time_steps.len() * n);
    let mut sp = Vec::with_capacity(tt.capacity());
    let mut repaired = Vec::with_capacity(tt.capacity());
    for (step, cells) in rows {
        for (link, cell) in cells.into_iter().enumerate() {
            let (t, v, r) = cell.ok_or_else(|| {
                CliError::format(
                    &snap_path,
                    format!("no value for link {link} at step {step}"),
                )
            })?;
            tt.push(t);
            sp.push(v);
            repaired.push(r);
        }
    }
    let series = SnapshotSeries::from_flat(time_steps, n, tt, sp, repaired).map_err(|e| {
        CliError::Ingest {
            path: snap_path.display().to_string(),
            source: e,
        }
    })?;

    let report_path = dir.join(INGEST_REPORT_FILE);
    let report = match std::fs::read_to_string(&report_path) {
        Ok(text) => {
            #[derive(Deserialize)]
            struct Stamped {
                report: IngestReport,
            }
            serde_json::from_str::<Stamped>(&text)
                .map_err(|e| CliError::format(&report_path, e.to_string()))?
                .report
        }
        Err(_) => summary_report(&topology, &series, RepairPolicy::Strict)?,
    };
    Dataset::assemble(
        topology,
        series,
        report,
        DatasetSource::Artifacts(dir.to_owned()),
    )
}

/// Resolves the configured input: an artifact directory, an observation
/// table, or a synthetic network.
pub fn load_dataset(config: &RunConfig) -> Result<Dataset, CliError> {
    match (&config.input, config.synthetic) {
        (Some(path), _) if path.is_dir() => {
            if !path.join(MANIFEST_FILE).exists() && !path.join(TOPOLOGY_FILE).exists() {
                return Err(CliError::Validation(format!(
                    "{} is a directory without ingest artifacts; run `critlink ingest` first",
                    path.display()
                )));
            }
            load_artifacts(path)
        }
        (Some(path), _) => Dataset::from_observations(path, config),
        (None, Some(spec)) => Dataset::synthetic(spec, config.seed),
        (None, None) => Err(CliError::Validation(
            "no input: pass --input or configure a synthetic network".into(),
        )),
    }
}
