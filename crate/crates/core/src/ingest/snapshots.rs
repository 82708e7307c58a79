use super::{median, IngestError, LinkObservation, NetworkTopology};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// How cells with no observation are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepairPolicy {
    /// Any missing cell is an error.
    Strict,
    /// Copy the link's value from the previous step; leading gaps take the
    /// first observed value.
    #[default]
    ForwardFill,
    /// Use the median of the link's observed values.
    LinkMedian,
}

impl fmt::Display for RepairPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RepairPolicy::Strict => "strict",
            RepairPolicy::ForwardFill => "forward-fill",
            RepairPolicy::LinkMedian => "link-median",
        })
    }
}

impl FromStr for RepairPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(RepairPolicy::Strict),
            "forward-fill" => Ok(RepairPolicy::ForwardFill),
            "link-median" => Ok(RepairPolicy::LinkMedian),
            other => Err(format!("unknown repair policy `{other}`")),
        }
    }
}

/// Complete per-step link travel times and speeds.
///
/// Storage is step-major: row `i` holds every link's value at
/// `time_steps()[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSeries {
    time_steps: Vec<u32>,
    link_count: usize,
    travel_time: Vec<f64>,
    speed: Vec<f64>,
    repaired: Vec<bool>,
}

impl SnapshotSeries {
    /// Builds a series from step-major rows. Every row must have one entry
    /// per link, time steps must be strictly increasing and all values must
    /// be finite and positive.
    pub fn from_rows(
        time_steps: Vec<u32>,
        travel_time: Vec<Vec<f64>>,
        speed: Vec<Vec<f64>>,
    ) -> Result<Self, IngestError> {
        let link_count = travel_time.first().map_or(0, Vec::len);
        let repaired = vec![false; time_steps.len() * link_count];
        Self::from_flat(
            time_steps,
            link_count,
            travel_time.into_iter().flatten().collect(),
            speed.into_iter().flatten().collect(),
            repaired,
        )
    }

    pub(crate) fn from_flat(
        time_steps: Vec<u32>,
        link_count: usize,
        travel_time: Vec<f64>,
        speed: Vec<f64>,
        repaired: Vec<bool>,
    ) -> Result<Self, IngestError> {
        if time_steps.is_empty() || link_count == 0 {
            return Err(IngestError::InvalidSeries(
                "no time steps or no links".into(),
            ));
        }
        if time_steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(IngestError::InvalidSeries(
                "time steps must be strictly increasing".into(),
            ));
        }
        let cells = time_steps.len() * link_count;
        if travel_time.len() != cells || speed.len() != cells || repaired.len() != cells {
            return Err(IngestError::InvalidSeries(format!(
                "expected {cells} cells ({} steps x {link_count} links)",
                time_steps.len()
            )));
        }
        if let Some(bad) = travel_time
            .iter()
            .chain(speed.iter())
            .find(|v| !(v.is_finite() && **v > 0.0))
        {
            return Err(IngestError::InvalidSeries(format!(
                "non-positive or non-finite value {bad}"
            )));
        }
        Ok(SnapshotSeries {
            time_steps,
            link_count,
            travel_time,
            speed,
            repaired,
        })
    }

    pub fn time_steps(&self) -> &[u32] {
        &self.time_steps
    }

    pub fn step_count(&self) -> usize {
        self.time_steps.len()
    }

    pub fn link_count(&self) -> usize {
        self.link_count
    }

    /// Position of `time_step` in [`Self::time_steps`].
    pub fn index_of(&self, time_step: u32) -> Option<usize> {
        self.time_steps.binary_search(&time_step).ok()
    }

    /// Travel times (minutes) of every link at snapshot position `idx`.
    pub fn travel_times(&self, idx: usize) -> &[f64] {
        &self.travel_time[idx * self.link_count..(idx + 1) * self.link_count]
    }

    /// Speeds (km/h) of every link at snapshot position `idx`.
    pub fn speeds(&self, idx: usize) -> &[f64] {
        &self.speed[idx * self.link_count..(idx + 1) * self.link_count]
    }

    pub fn is_repaired(&self, idx: usize, link: usize) -> bool {
        self.repaired[idx * self.link_count + link]
    }

    pub fn repaired_count(&self) -> usize {
        self.repaired.iter().filter(|r| **r).count()
    }
}

/// Lays observations out as a complete (time step x link) grid.
///
/// Time steps are the distinct `time_step` values present in the data.
pub fn assemble_snapshots(
    observations: &[LinkObservation],
    topology: &NetworkTopology,
    policy: RepairPolicy,
) -> Result<SnapshotSeries, IngestError> {
    if observations.is_empty() {
        return Err(IngestError::Empty);
    }
    let steps: Vec<u32> = observations
        .iter()
        .map(|o| o.time_step)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let step_pos: BTreeMap<u32, usize> = steps.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let links = topology.link_count();
    let cells = steps.len() * links;

    let mut tt: Vec<Option<f64>> = vec![None; cells];
    let mut sp: Vec<Option<f64>> = vec![None; cells];
    for o in observations {
        let link = topology
            .find_link(&o.from_node, &o.to_node)
            .ok_or_else(|| IngestError::UnknownLink {
                from: o.from_node.clone(),
                to: o.to_node.clone(),
            })?;
        let cell = step_pos[&o.time_step] * links + link;
        tt[cell] = Some(o.travel_time);
        sp[cell] = Some(o.speed);
    }

    let mut repaired = vec![false; cells];
    for link in 0..links {
        let column: Vec<usize> = (0..steps.len()).map(|i| i * links + link).collect();
        let missing = column.iter().filter(|&&c| tt[c].is_none()).count();
        if missing == 0 {
            continue;
        }
        let l = &topology.links()[link];
        if policy == RepairPolicy::Strict || missing == steps.len() {
            return Err(IngestError::IncompleteLink {
                link,
                from: l.from.clone(),
                to: l.to.clone(),
                missing,
                steps: steps.len(),
            });
        }
        match policy {
            RepairPolicy::Strict => unreachable!(),
            RepairPolicy::ForwardFill => {
                let first = column.iter().copied().find(|&c| tt[c].is_some()).unwrap();
                let mut last = (tt[first].unwrap(), sp[first].unwrap());
                for &c in &column {
                    match (tt[c], sp[c]) {
                        (Some(t), Some(s)) => last = (t, s),
                        _ => {
                            tt[c] = Some(last.0);
                            sp[c] = Some(last.1);
                            repaired[c] = true;
                        }
                    }
                }
            }
            RepairPolicy::LinkMedian => {
                let mut times: Vec<f64> = column.iter().filter_map(|&c| tt[c]).collect();
                let mut speeds: Vec<f64> = column.iter().filter_map(|&c| sp[c]).collect();
                let fill = (median(&mut times), median(&mut speeds));
                for &c in &column {
                    if tt[c].is_none() {
                        tt[c] = Some(fill.0);
                        sp[c] = Some(fill.1);
                        repaired[c] = true;
                    }
                }
            }
        }
    }

    SnapshotSeries::from_flat(
        steps,
        links,
        tt.into_iter().map(Option::unwrap).collect(),
        sp.into_iter().map(Option::unwrap).collect(),
        repaired,
    )
}
