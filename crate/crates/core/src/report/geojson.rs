use super::artifacts::Dataset;
use super::{CliError, Meta};
use crate::qubo::single_link_coefficient;
use serde_json::{json, Map, Value};
use std::path::Path;

/// Link list read back from a results CSV.
#[derive(Debug, Clone, PartialEq)]
pub enum GeoJsonInput {
    /// `(link_id, frequency)` rows from a frequency table.
    Frequency(Vec<(usize, usize)>),
    /// `(time_step, link_id)` rows from a critical-set table.
    CriticalSet(Vec<(u32, usize)>),
}

impl GeoJsonInput {
    /// Reads a frequency or critical-set CSV, telling them apart by header.
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let file = std::fs::File::open(path)
            .map_err(|e| CliError::io(format!("opening {}", path.display()), e))?;
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(file);
        let headers = reader
            .headers()
            .map_err(|e| CliError::format(path, e.to_string()))?
            .clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let link =
            col("link_id").ok_or_else(|| CliError::format(path, "missing column `link_id`"))?;
        let parse_err = |line: usize, what: &str, v: &str| {
            CliError::format(path, format!("row {line}: invalid {what} `{v}`"))
        };
        let mut rows = Vec::new();
        if let Some(freq) = col("frequency") {
            for (line, rec) in reader.records().enumerate() {
                let rec = rec.map_err(|e| CliError::format(path, e.to_string()))?;
                let l = field(path, &rec, link, line)?;
                let f = field(path, &rec, freq, line)?;
                rows.push((
                    l.parse().map_err(|_| parse_err(line, "link_id", l))?,
                    f.parse().map_err(|_| parse_err(line, "frequency", f))?,
                ));
            }
            return Ok(GeoJsonInput::Frequency(rows));
        }
        let step = col("time_step").ok_or_else(|| {
            CliError::format(
                path,
                "expected a frequency table (`frequency` column) or a critical set (`time_step` column)",
            )
        })?;
        let mut sets = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| CliError::format(path, e.to_string()))?;
            let t = field(path, &rec, step, line)?;
            let l = field(path, &rec, link, line)?;
            sets.push((
                t.parse().map_err(|_| parse_err(line, "time_step", t))?,
                l.parse().map_err(|_| parse_err(line, "link_id", l))?,
            ));
        }
        Ok(GeoJsonInput::CriticalSet(sets))
    }
}

fn field<'r>(
    path: &Path,
    rec: &'r csv::StringRecord,
    i: usize,
    line: usize,
) -> Result<&'r str, CliError> {
    rec.get(i)
        .ok_or_else(|| CliError::format(path, format!("short record at row {line}")))
}

/// Builds a FeatureCollection with one LineString (or Point, for a
/// self-loop) per listed link. Coordinates are `[lon, lat]`.
pub fn export_geojson(
    dataset: &Dataset,
    input: &GeoJsonInput,
    gamma: f64,
    meta: &Meta,
) -> Result<Value, CliError> {
    let topo = &dataset.topology;
    let oracle = dataset.oracle(gamma)?;
    let link_count = topo.link_count();
    let check = |l: usize| {
        if l >= link_count {
            Err(CliError::Validation(format!(
                "link id {l} out of range for a network of {link_count} links"
            )))
        } else {
            Ok(())
        }
    };
    let feature = |l: usize, mut props: Map<String, Value>| {
        let link = &topo.links()[l];
        let g = &link.geometry;
        props.insert("link_id".into(), json!(l));
        props.insert("from".into(), json!(link.from.to_string()));
        props.insert("to".into(), json!(link.to.to_string()));
        let geometry = if link.is_self_loop() {
            json!({"type": "Point", "coordinates": [g.lon_from, g.lat_from]})
        } else {
            json!({
                "type": "LineString",
                "coordinates": [[g.lon_from, g.lat_from], [g.lon_to, g.lat_to]],
            })
        };
        json!({"type": "Feature", "geometry": geometry, "properties": props})
    };

    let mut features = Vec::new();
    match input {
        GeoJsonInput::Frequency(rows) => {
            for &(l, f) in rows {
                check(l)?;
                let mut props = Map::new();
                props.insert("frequency".into(), json!(f));
                features.push(feature(l, props));
            }
        }
        GeoJsonInput::CriticalSet(rows) => {
            for &(t, l) in rows {
                check(l)?;
                if dataset.series.index_of(t).is_none() {
                    return Err(
                        crate::temporal::unknown_step(t, dataset.series.time_steps()).into(),
                    );
                }
                let mut props = Map::new();
                props.insert("time_step".into(), json!(t));
                props.insert(
                    "c_minutes".into(),
                    json!(single_link_coefficient(&oracle, l, t)?),
                );
                features.push(feature(l, props));
            }
        }
    }
    Ok(json!({
        "type": "FeatureCollection",
        "metadata": {"config_hash": meta.config_hash, "seed": meta.seed},
        "features": features,
    }))
}
