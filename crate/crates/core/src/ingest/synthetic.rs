use super::{IngestError, LinkGeometry, LinkObservation, NetworkTopology, NodeId, SnapshotSeries};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

// Bounding box of the reference study area (Greater Miami).
const LAT_RANGE: (f64, f64) = (25.1707, 25.8714);
const LON_RANGE: (f64, f64) = (-80.5067, -80.1203);
/// Spacing of synthetic time step values, matching 5-minute indexing.
pub const SYNTHETIC_STEP_SPACING: u32 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticNetwork {
    pub topology: NetworkTopology,
    pub series: SnapshotSeries,
}

/// Generates a weakly connected directed network with per-link travel-time
/// series shaped like link-level probe data.
///
/// A random spanning tree guarantees connectivity; the remaining links are
/// distinct random directed pairs. Each link gets a free-flow speed and a
/// congestion profile made of a link-specific peak, a shared network-wide
/// peak late in the horizon, and small noise. Travel time never drops below
/// the free-flow time, and `speed * time / 60` equals the link length.
/// Output is a pure function of the arguments.
pub fn generate_synthetic(
    node_count: usize,
    link_count: usize,
    step_count: usize,
    seed: u64,
) -> Result<SyntheticNetwork, IngestError> {
    if node_count < 2 {
        return Err(IngestError::InfeasibleSynthetic(
            "need at least two nodes".into(),
        ));
    }
    if link_count + 1 < node_count {
        return Err(IngestError::InfeasibleSynthetic(format!(
            "{link_count} links cannot connect {node_count} nodes"
        )));
    }
    let max_links = node_count * (node_count - 1);
    if link_count > max_links {
        return Err(IngestError::InfeasibleSynthetic(format!(
            "at most {max_links} distinct directed links between {node_count} nodes"
        )));
    }
    if step_count == 0 {
        return Err(IngestError::InfeasibleSynthetic(
            "need at least one time step".into(),
        ));
    }
    if step_count > (u32::MAX / SYNTHETIC_STEP_SPACING) as usize {
        return Err(IngestError::InfeasibleSynthetic(
            "too many time steps".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<(f64, f64)> = (0..node_count)
        .map(|_| {
            (
                rng.random_range(LAT_RANGE.0..LAT_RANGE.1),
                rng.random_range(LON_RANGE.0..LON_RANGE.1),
            )
        })
        .collect();

    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(link_count);
    let mut seen: HashSet<(usize, usize)> = HashSet::with_capacity(link_count);
    for i in 1..node_count {
        let j = rng.random_range(0..i);
        let pair = if rng.random_bool(0.5) { (i, j) } else { (j, i) };
        seen.insert(pair);
        pairs.push(pair);
    }
    let remaining = link_count - pairs.len();
    if remaining * 2 <= max_links - pairs.len() {
        while pairs.len() < link_count {
            let a = rng.random_range(0..node_count);
            let b = rng.random_range(0..node_count);
            if a != b && seen.insert((a, b)) {
                pairs.push((a, b));
            }
        }
    } else {
        // dense request: enumerate the free pairs and draw without replacement
        let mut free: Vec<(usize, usize)> = (0..node_count)
            .flat_map(|a| (0..node_count).map(move |b| (a, b)))
            .filter(|&(a, b)| a != b && !seen.contains(&(a, b)))
            .collect();
        free.shuffle(&mut rng);
        pairs.extend(free.into_iter().take(remaining));
    }

    let node = |i: usize| NodeId(format!("n{i}"));
    let mut lengths = Vec::with_capacity(link_count);
    let mut records = Vec::with_capacity(link_count);
    for &(a, b) in &pairs {
        let (lat_a, lon_a) = coords[a];
        let (lat_b, lon_b) = coords[b];
        let detour = rng.random_range(1.05..1.35);
        let length = (haversine_km(lat_a, lon_a, lat_b, lon_b) * detour).max(0.05);
        lengths.push(length);
        records.push((
            node(a),
            node(b),
            LinkGeometry {
                lat_from: lat_a,
                lon_from: lon_a,
                lat_to: lat_b,
                lon_to: lon_b,
            },
            length,
        ));
    }
    let topology = NetworkTopology::from_links(records)?;

    struct Profile {
        free_flow_minutes: f64,
        amplitude: f64,
        centre: f64,
        width: f64,
        shared: f64,
    }
    let profiles: Vec<Profile> = lengths
        .iter()
        .map(|&length| {
            let v_free = rng.random_range(25.0..90.0);
            let heavy = rng.random_bool(0.15);
            Profile {
                free_flow_minutes: length / v_free * 60.0,
                amplitude: if heavy {
                    rng.random_range(0.6..2.0)
                } else {
                    rng.random_range(0.02..0.5)
                },
                centre: rng.random_range(0.1..0.95),
                width: rng.random_range(0.05..0.25),
                shared: rng.random_range(0.0..0.6),
            }
        })
        .collect();

    let time_steps: Vec<u32> = (0..step_count as u32)
        .map(|i| i * SYNTHETIC_STEP_SPACING)
        .collect();
    let horizon = (step_count.max(2) - 1) as f64;
    let mut travel_time = Vec::with_capacity(step_count * link_count);
    let mut speed = Vec::with_capacity(step_count * link_count);
    for i in 0..step_count {
        let x = i as f64 / horizon;
        let network_peak = bump(x, 0.8, 0.1);
        for (p, &length) in profiles.iter().zip(&lengths) {
            let noise = rng.random_range(-0.03..0.08);
            let factor =
                (1.0 + p.amplitude * bump(x, p.centre, p.width) + p.shared * network_peak + noise)
                    .max(1.0);
            let tt = p.free_flow_minutes * factor;
            travel_time.push(tt);
            speed.push(length / tt * 60.0);
        }
    }
    let repaired = vec![false; travel_time.len()];
    let series = SnapshotSeries::from_flat(time_steps, link_count, travel_time, speed, repaired)?;
    Ok(SyntheticNetwork { topology, series })
}

fn bump(x: f64, centre: f64, width: f64) -> f64 {
    let z = (x - centre) / width;
    (-z * z).exp()
}

fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    const EARTH_RADIUS_KM: f64 = 6371.0088;
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().asin()
}

/// Flattens a series back into observation records, step-major in link
/// index order.
pub fn series_to_observations(
    topology: &NetworkTopology,
    series: &SnapshotSeries,
) -> Vec<LinkObservation> {
    let mut out = Vec::with_capacity(series.step_count() * series.link_count());
    for (idx, &step) in series.time_steps().iter().enumerate() {
        let times = series.travel_times(idx);
        let speeds = series.speeds(idx);
        for (link, l) in topology.links().iter().enumerate() {
            out.push(LinkObservation {
                from_node: l.from.clone(),
                to_node: l.to.clone(),
                lat_from: l.geometry.lat_from,
                lon_from: l.geometry.lon_from,
                lat_to: l.geometry.lat_to,
                lon_to: l.geometry.lon_to,
                travel_time: times[link],
                speed: speeds[link],
                time_step: step,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::connectivity_report;

    #[test]
    fn deterministic_for_seed() {
        let a = generate_synthetic(150, 200, 50, 7).unwrap();
        let b = generate_synthetic(150, 200, 50, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(150, 200, 50, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn exact_link_count_and_positive_values() {
        let net = generate_synthetic(150, 200, 50, 7).unwrap();
        assert_eq!(net.topology.link_count(), 200);
        assert_eq!(net.topology.node_count(), 150);
        for i in 0..net.series.step_count() {
            assert!(net.series.travel_times(i).iter().all(|&t| t > 0.0));
            assert!(net.series.speeds(i).iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn infeasible_counts() {
        assert!(generate_synthetic(10, 8, 5, 1).is_err());
        assert!(generate_synthetic(3, 7, 5, 1).is_err());
        assert!(generate_synthetic(1, 1, 5, 1).is_err());
        assert!(generate_synthetic(5, 5, 0, 1).is_err());
    }

    #[test]
    fn dense_and_tree_extremes() {
        let dense = generate_synthetic(5, 20, 3, 3).unwrap();
        assert_eq!(dense.topology.link_count(), 20);
        let tree = generate_synthetic(40, 39, 3, 3).unwrap();
        assert_eq!(
            connectivity_report(&tree.topology).unwrap().component_count,
            1
        );
    }

    #[test]
    fn haversine_one_degree_latitude() {
        let d = haversine_km(0.0, 0.0, 1.0, 0.0);
        assert!((d - 111.19).abs() < 0.01, "{d}");
    }
}
