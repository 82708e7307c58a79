use super::{ColumnMap, IngestError, LinkObservation, NodeId};
use indexmap::map::Entry;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Result of parsing an observation table.
#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    /// Accepted observations, one per distinct (from, to, time_step).
    pub observations: Vec<LinkObservation>,
    /// Data rows read, excluding the header.
    pub rows_read: usize,
    pub rejected: Vec<RejectedRow>,
    /// Rows that repeated an earlier (from, to, time_step) key. The last
    /// occurrence wins.
    pub duplicates: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

struct ColumnIndex {
    from_node: usize,
    to_node: usize,
    lat_from: usize,
    lon_from: usize,
    lat_to: usize,
    lon_to: usize,
    travel_time: usize,
    speed: usize,
    time_step: usize,
}

impl ColumnIndex {
    fn resolve(headers: &csv::StringRecord, map: &ColumnMap) -> Result<Self, IngestError> {
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| IngestError::MissingColumn {
                    column: name.to_owned(),
                })
        };
        Ok(ColumnIndex {
            from_node: find(&map.from_node)?,
            to_node: find(&map.to_node)?,
            lat_from: find(&map.lat_from)?,
            lon_from: find(&map.lon_from)?,
            lat_to: find(&map.lat_to)?,
            lon_to: find(&map.lon_to)?,
            travel_time: find(&map.travel_time_min)?,
            speed: find(&map.speed_kmh)?,
            time_step: find(&map.time_step)?,
        })
    }
}

/// Parses a delimited observation table with a header row.
///
/// Rows with unparsable fields, out-of-range coordinates or non-positive
/// travel time / speed are rejected individually. If more than half of the
/// rows are rejected the whole parse fails, since that almost always means
/// the column mapping is wrong.
pub fn parse_observations<R: Read>(
    source: R,
    columns: &ColumnMap,
    delimiter: u8,
) -> Result<ParseOutcome, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let index = ColumnIndex::resolve(&headers, columns)?;

    let mut rows_read = 0usize;
    let mut rejected = Vec::new();
    let mut duplicates = 0usize;
    let mut keyed: IndexMap<(NodeId, NodeId, u32), LinkObservation> = IndexMap::new();

    let mut record = csv::StringRecord::new();
    loop {
        let line = reader.position().line();
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(e) => {
                rows_read += 1;
                rejected.push(RejectedRow {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        }
        rows_read += 1;
        let line = record.position().map_or(line, |p| p.line());
        match parse_row(&record, &index) {
            Ok(obs) => {
                let key = (obs.from_node.clone(), obs.to_node.clone(), obs.time_step);
                match keyed.entry(key) {
                    Entry::Occupied(mut slot) => {
                        duplicates += 1;
                        slot.insert(obs);
                    }
                    Entry::Vacant(slot) => {
                        slot.insert(obs);
                    }
                }
            }
            Err(reason) => rejected.push(RejectedRow { line, reason }),
        }
    }

    if rows_read > 0 && rejected.len() * 2 > rows_read {
        return Err(IngestError::TooManyRejected {
            rejected: rejected.len(),
            total: rows_read,
        });
    }

    Ok(ParseOutcome {
        observations: keyed.into_values().collect(),
        rows_read,
        rejected,
        duplicates,
    })
}

fn parse_row(record: &csv::StringRecord, idx: &ColumnIndex) -> Result<LinkObservation, String> {
    let field = |i: usize, name: &str| -> Result<&str, String> {
        record
            .get(i)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| format!("missing value for {name}"))
    };
    let number = |i: usize, name: &str| -> Result<f64, String> {
        let raw = field(i, name)?;
        let v: f64 = raw
            .parse()
            .map_err(|_| format!("{name}: cannot parse `{raw}` as a number"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("{name}: non-finite value"))
        }
    };

    let from_node = NodeId(field(idx.from_node, "from_node")?.to_owned());
    let to_node = NodeId(field(idx.to_node, "to_node")?.to_owned());
    let lat_from = number(idx.lat_from, "lat_from")?;
    let lon_from = number(idx.lon_from, "lon_from")?;
    let lat_to = number(idx.lat_to, "lat_to")?;
    let lon_to = number(idx.lon_to, "lon_to")?;
    for (name, lat) in [("lat_from", lat_from), ("lat_to", lat_to)] {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(format!("{name} {lat} outside [-90, 90]"));
        }
    }
    for (name, lon) in [("lon_from", lon_from), ("lon_to", lon_to)] {
        if !(-180.0..=180.0).contains(&lon) {
            return Err(format!("{name} {lon} outside [-180, 180]"));
        }
    }
    let travel_time = number(idx.travel_time, "travel_time")?;
    if travel_time <= 0.0 {
        return Err(format!("non-positive travel time {travel_time}"));
    }
    let speed = number(idx.speed, "speed")?;
    if speed <= 0.0 {
        return Err(format!("non-positive speed {speed}"));
    }
    let step_raw = field(idx.time_step, "time_step")?;
    let time_step = match step_raw.parse::<u32>() {
        Ok(v) => v,
        Err(_) => {
            // tolerate integral floats such as "5.0"
            let v: f64 = step_raw
                .parse()
                .map_err(|_| format!("time_step: cannot parse `{step_raw}`"))?;
            if v >= 0.0 && v.fract() == 0.0 && v <= f64::from(u32::MAX) {
                v as u32
            } else {
                return Err(format!(
                    "time_step `{step_raw}` is not a non-negative integer"
                ));
            }
        }
    };

    Ok(LinkObservation {
        from_node,
        to_node,
        lat_from,
        lon_from,
        lat_to,
        lon_to,
        travel_time,
        speed,
        time_step,
    })
}

/// Writes observations in the same tabular layout `parse_observations`
/// reads. Floats use the shortest representation that parses back exactly.
pub fn write_observations<W: Write>(
    sink: W,
    observations: &[LinkObservation],
    columns: &ColumnMap,
    delimiter: u8,
) -> Result<(), IngestError> {
    let mut writer = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_writer(sink);
    writer.write_record([
        &columns.from_node,
        &columns.to_node,
        &columns.lat_from,
        &columns.lon_from,
        &columns.lat_to,
        &columns.lon_to,
        &columns.travel_time_min,
        &columns.speed_kmh,
        &columns.time_step,
    ])?;
    for o in observations {
        writer.write_record([
            o.from_node.as_str(),
            o.to_node.as_str(),
            &o.lat_from.to_string(),
            &o.lon_from.to_string(),
            &o.lat_to.to_string(),
            &o.lon_to.to_string(),
            &o.travel_time.to_string(),
            &o.speed.to_string(),
            &o.time_step.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str =
        "from_node,to_node,lat_from,lon_from,lat_to,lon_to,travel_time_min,speed_kmh,time_step\n";

    fn parse(body: &str) -> Result<ParseOutcome, IngestError> {
        let text = format!("{HEADER}{body}");
        parse_observations(text.as_bytes(), &ColumnMap::default(), b',')
    }

    #[test]
    fn header_only_is_empty() {
        let out = parse("").unwrap();
        assert!(out.observations.is_empty());
        assert_eq!(out.rows_read, 0);
        assert!(out.rejected.is_empty());
    }

    #[test]
    fn zero_speed_row_is_rejected() {
        let mut body = String::new();
        for step in 0..10 {
            let speed = if step == 4 { 0.0 } else { 40.0 };
            body.push_str(&format!(
                "A,B,25.5,-80.3,25.6,-80.2,1.5,{speed},{}\n",
                step * 5
            ));
        }
        let out = parse(&body).unwrap();
        assert_eq!(out.observations.len(), 9);
        assert_eq!(out.rejected.len(), 1);
        // header is line 1, first data row line 2
        assert_eq!(out.rejected[0].line, 6);
        assert!(out.rejected[0].reason.contains("speed"));
    }

    #[test]
    fn missing_column_is_named() {
        let text = "from_node,to_node,lat_from,lon_from,lat_to,lon_to,speed_kmh,time_step\n";
        let err = parse_observations(text.as_bytes(), &ColumnMap::default(), b',').unwrap_err();
        match err {
            IngestError::MissingColumn { column } => assert_eq!(column, "travel_time_min"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn majority_rejected_is_fatal() {
        let body = "A,B,25.5,-80.3,25.6,-80.2,-1,40,0\nA,B,25.5,-80.3,25.6,-80.2,1,40,5\nA,B,25.5,-80.3,25.6,-80.2,x,40,10\n";
        assert!(matches!(
            parse(body),
            Err(IngestError::TooManyRejected {
                rejected: 2,
                total: 3
            })
        ));
    }

    #[test]
    fn half_rejected_is_tolerated() {
        let body = "A,B,25.5,-80.3,25.6,-80.2,-1,40,0\nA,B,25.5,-80.3,25.6,-80.2,1,40,5\n";
        let out = parse(body).unwrap();
        assert_eq!(out.observations.len(), 1);
    }

    #[test]
    fn duplicate_key_keeps_last() {
        let body = "A,B,25.5,-80.3,25.6,-80.2,1.0,40,0\nB,C,25.5,-80.3,25.6,-80.2,2.0,40,0\nA,B,25.5,-80.3,25.6,-80.2,3.0,40,0\n";
        let out = parse(body).unwrap();
        assert_eq!(out.duplicates, 1);
        assert_eq!(out.observations.len(), 2);
        assert_eq!(out.observations[0].from_node.as_str(), "A");
        assert_eq!(out.observations[0].travel_time, 3.0);
    }

    #[test]
    fn bad_coordinates_rejected() {
        let body = "A,B,95.0,-80.3,25.6,-80.2,1.0,40,0\nA,B,25.0,-80.3,25.6,-80.2,1.0,40,5\nA,B,25.0,-80.3,25.6,-80.2,1.0,40,10\n";
        let out = parse(body).unwrap();
        assert_eq!(out.rejected.len(), 1);
        assert!(out.rejected[0].reason.contains("lat_from"));
    }

    #[test]
    fn self_loops_retained() {
        let out = parse("A,A,25.5,-80.3,25.5,-80.3,1.0,40,0\n").unwrap();
        assert_eq!(out.observations.len(), 1);
    }

    #[test]
    fn custom_mapping_and_delimiter() {
        let text = "o;d;la1;lo1;la2;lo2;tt;v;step\nA;B;25.5;-80.3;25.6;-80.2;1.0;40;5.0\n";
        let map = ColumnMap {
            from_node: "o".into(),
            to_node: "d".into(),
            lat_from: "la1".into(),
            lon_from: "lo1".into(),
            lat_to: "la2".into(),
            lon_to: "lo2".into(),
            travel_time_min: "tt".into(),
            speed_kmh: "v".into(),
            time_step: "step".into(),
        };
        let out = parse_observations(text.as_bytes(), &map, b';').unwrap();
        assert_eq!(out.observations[0].time_step, 5);
    }
}
