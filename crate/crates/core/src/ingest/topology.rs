use super::{median, IngestError, LinkObservation, NodeId};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    pub lat_from: f64,
    pub lon_from: f64,
    pub lat_to: f64,
    pub lon_to: f64,
}

/// A directed link with its dense index position implied by its place in
/// [`NetworkTopology::links`].
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub from: NodeId,
    pub to: NodeId,
    pub from_index: usize,
    pub to_index: usize,
    pub geometry: LinkGeometry,
    /// Physical length in km.
    pub length_km: f64,
}

impl Link {
    pub fn is_self_loop(&self) -> bool {
        self.from_index == self.to_index
    }
}

/// Directed road network with dense node and link indices.
///
/// Indices follow first appearance in the input and never change for the
/// lifetime of the value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetworkTopology {
    nodes: Vec<NodeId>,
    node_lookup: HashMap<NodeId, usize>,
    links: Vec<Link>,
    link_lookup: HashMap<(usize, usize), usize>,
}

impl NetworkTopology {
    /// Builds a topology from explicit link records. Nodes are registered in
    /// order of first appearance. Duplicate directed pairs are an error.
    pub fn from_links(
        links: impl IntoIterator<Item = (NodeId, NodeId, LinkGeometry, f64)>,
    ) -> Result<Self, IngestError> {
        let mut topo = NetworkTopology::default();
        for (from, to, geometry, length_km) in links {
            let (a, b) = (topo.intern(from.clone()), topo.intern(to.clone()));
            if topo.link_lookup.contains_key(&(a, b)) {
                return Err(IngestError::InvalidSeries(format!(
                    "duplicate link {from} -> {to}"
                )));
            }
            topo.link_lookup.insert((a, b), topo.links.len());
            topo.links.push(Link {
                from,
                to,
                from_index: a,
                to_index: b,
                geometry,
                length_km,
            });
        }
        if topo.links.is_empty() {
            return Err(IngestError::Empty);
        }
        Ok(topo)
    }

    fn intern(&mut self, id: NodeId) -> usize {
        if let Some(&i) = self.node_lookup.get(&id) {
            return i;
        }
        let i = self.nodes.len();
        self.node_lookup.insert(id.clone(), i);
        self.nodes.push(id);
        i
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, index: usize) -> Option<&Link> {
        self.links.get(index)
    }

    pub fn node_index(&self, id: &NodeId) -> Option<usize> {
        self.node_lookup.get(id).copied()
    }

    /// Dense index of the directed link `from -> to`.
    pub fn find_link(&self, from: &NodeId, to: &NodeId) -> Option<usize> {
        let a = self.node_index(from)?;
        let b = self.node_index(to)?;
        self.link_lookup.get(&(a, b)).copied()
    }

    pub fn self_loop_count(&self) -> usize {
        self.links.iter().filter(|l| l.is_self_loop()).count()
    }
}

/// One link per distinct directed (from, to) pair.
///
/// Geometry comes from the first observation of each link. Length is the
/// median over observations of `speed * travel_time / 60` (km), since the
/// tables carry speed and time but not length.
pub fn build_topology(observations: &[LinkObservation]) -> Result<NetworkTopology, IngestError> {
    if observations.is_empty() {
        return Err(IngestError::Empty);
    }
    let mut order: Vec<(NodeId, NodeId, LinkGeometry)> = Vec::new();
    let mut lookup: HashMap<(&NodeId, &NodeId), usize> = HashMap::new();
    let mut lengths: Vec<Vec<f64>> = Vec::new();
    for o in observations {
        let slot = *lookup.entry((&o.from_node, &o.to_node)).or_insert_with(|| {
            order.push((
                o.from_node.clone(),
                o.to_node.clone(),
                LinkGeometry {
                    lat_from: o.lat_from,
                    lon_from: o.lon_from,
                    lat_to: o.lat_to,
                    lon_to: o.lon_to,
                },
            ));
            lengths.push(Vec::new());
            order.len() - 1
        });
        lengths[slot].push(o.speed * o.travel_time / 60.0);
    }
    NetworkTopology::from_links(
        order
            .into_iter()
            .zip(lengths.iter_mut())
            .map(|((from, to, geom), samples)| (from, to, geom, median(samples))),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn obs(from: &str, to: &str, tt: f64, speed: f64, step: u32) -> LinkObservation {
        LinkObservation {
            from_node: from.into(),
            to_node: to.into(),
            lat_from: 25.5,
            lon_from: -80.3,
            lat_to: 25.6,
            lon_to: -80.2,
            travel_time: tt,
            speed,
            time_step: step,
        }
    }

    #[test]
    fn same_pair_collapses_to_one_link() {
        let o: Vec<_> = [0, 5, 10]
            .iter()
            .map(|&s| obs("A", "B", 1.0, 60.0, s))
            .collect();
        let t = build_topology(&o).unwrap();
        assert_eq!(t.link_count(), 1);
        assert_eq!(t.node_count(), 2);
    }

    #[test]
    fn direction_matters() {
        let o = vec![obs("A", "B", 1.0, 60.0, 0), obs("B", "A", 1.0, 60.0, 0)];
        let t = build_topology(&o).unwrap();
        assert_eq!(t.link_count(), 2);
        assert_eq!(t.node_count(), 2);
        assert_eq!(t.find_link(&"B".into(), &"A".into()), Some(1));
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(build_topology(&[]), Err(IngestError::Empty)));
    }

    #[test]
    fn length_is_median_of_speed_times_time() {
        // 60 km/h * 1 min = 1 km, 30 km/h * 4 min = 2 km, 45 km/h * 4 min = 3 km
        let o = vec![
            obs("A", "B", 1.0, 60.0, 0),
            obs("A", "B", 4.0, 30.0, 5),
            obs("A", "B", 4.0, 45.0, 10),
        ];
        let t = build_topology(&o).unwrap();
        assert!((t.links()[0].length_km - 2.0).abs() < 1e-12);
    }

    #[test]
    fn doubled_input_gives_same_topology() {
        let mut o = vec![
            obs("A", "B", 1.0, 60.0, 0),
            obs("A", "B", 2.0, 50.0, 5),
            obs("B", "C", 1.5, 40.0, 0),
        ];
        let single = build_topology(&o).unwrap();
        o.extend(o.clone());
        assert_eq!(build_topology(&o).unwrap(), single);
    }

    #[test]
    fn self_loop_counted() {
        let t = build_topology(&[obs("A", "A", 1.0, 60.0, 0)]).unwrap();
        assert_eq!(t.self_loop_count(), 1);
        assert_eq!(t.node_count(), 1);
    }
}
