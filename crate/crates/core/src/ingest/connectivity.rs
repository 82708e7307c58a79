use super::{IngestError, NetworkTopology};
use petgraph::algo::kosaraju_scc;
use petgraph::graph::DiGraph;
use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

/// Component structure of the undirected projection of the network, plus the
/// strongly connected component count of the directed graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectivityReport {
    pub node_count: usize,
    pub component_count: usize,
    pub giant_component_size: usize,
    /// Nodes with no link to any other node.
    pub isolated_nodes: usize,
    /// Sizes of all weak components, largest first.
    pub component_sizes: Vec<usize>,
    /// Reported only; not required to be 1.
    pub strong_component_count: usize,
}

impl ConnectivityReport {
    pub fn is_connected(&self) -> bool {
        self.component_count == 1
    }
}

pub fn connectivity_report(topology: &NetworkTopology) -> Result<ConnectivityReport, IngestError> {
    let n = topology.node_count();
    if n == 0 || topology.link_count() == 0 {
        return Err(IngestError::Empty);
    }
    let mut uf = UnionFind::<usize>::new(n);
    let mut graph = DiGraph::<(), ()>::with_capacity(n, topology.link_count());
    let handles: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for link in topology.links() {
        uf.union(link.from_index, link.to_index);
        graph.add_edge(handles[link.from_index], handles[link.to_index], ());
    }

    let mut sizes = vec![0usize; n];
    for node in 0..n {
        sizes[uf.find(node)] += 1;
    }
    let mut component_sizes: Vec<usize> = sizes.into_iter().filter(|&s| s > 0).collect();
    component_sizes.sort_unstable_by(|a, b| b.cmp(a));

    Ok(ConnectivityReport {
        node_count: n,
        component_count: component_sizes.len(),
        giant_component_size: component_sizes[0],
        isolated_nodes: component_sizes.iter().filter(|&&s| s == 1).count(),
        component_sizes,
        strong_component_count: kosaraju_scc(&graph).len(),
    })
}
