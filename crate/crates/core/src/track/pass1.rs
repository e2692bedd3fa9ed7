//! First tracking pass: shortest paths from each component's root.

use std::collections::BTreeSet;

use rayon::prelude::*;

use super::{edge_weight, EdgeWeightParams};
use crate::graph::{Graph, NodeId, ShortestPaths};
use crate::skeleton::UnionGraph;

/// Output of the first pass, as subgraphs sharing the input's ids.
#[derive(Debug, Clone)]
pub struct Pass1 {
    /// Union of weighted paths from each root to the component's end nodes.
    pub end_phase: UnionGraph,
    /// `end_phase` plus unit-weight paths to dense junctions.
    pub graph: UnionGraph,
}

fn add_path(out: &mut UnionGraph, src: &UnionGraph, path: &[NodeId]) {
    for &n in path {
        out.insert_from(src, n);
    }
    for w in path.windows(2) {
        out.add_edge(w[0], w[1]);
    }
}

fn paths_from(
    g: &UnionGraph,
    src: NodeId,
    targets: &[NodeId],
    workers: usize,
    weight: &(dyn Fn(NodeId, NodeId) -> f64 + Sync),
) -> Vec<Vec<NodeId>> {
    if workers > 1 {
        targets
            .par_iter()
            .filter_map(|&t| g.dijkstra(src, Some(t), weight).path_to(t))
            .collect()
    } else {
        let sp: ShortestPaths = g.dijkstra(src, None, weight);
        targets.iter().filter_map(|&t| sp.path_to(t)).collect()
    }
}

/// Traces every component of the contracted graph.
///
/// Components are handled largest first. The root is the ONH when present,
/// otherwise the first end node. With `workers > 1` the per-target searches
/// run concurrently; the result is identical to the serial run.
pub fn trace_pass1(g: &UnionGraph, onh: NodeId, params: &EdgeWeightParams, workers: usize) -> Pass1 {
    let mut comps = g.components();
    comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));

    let eq1 = |a: NodeId, b: NodeId| edge_weight(g.node(a), g.node(b), params);
    let unit = |_: NodeId, _: NodeId| 1.0;

    let mut end_phase: UnionGraph = g.empty_like();
    let mut queue_paths: Vec<Vec<NodeId>> = Vec::new();
    for comp in &comps {
        let ends: Vec<NodeId> = comp.iter().copied().filter(|&n| g.degree(n) == 1).collect();
        let src = if comp.binary_search(&onh).is_ok() {
            onh
        } else {
            ends.first().copied().unwrap_or(comp[0])
        };
        end_phase.insert_from(g, src);
        let targets: Vec<NodeId> = ends.iter().copied().filter(|&t| t != src).collect();
        for p in paths_from(g, src, &targets, workers, &eq1) {
            add_path(&mut end_phase, g, &p);
        }
        let dense: Vec<NodeId> = comp
            .iter()
            .copied()
            .filter(|&n| n != src && g.degree(n) >= 3 && g.k_hop_ball([n], 3).len() >= 6)
            .collect();
        queue_paths.extend(paths_from(g, src, &dense, workers, &unit));
    }
    let mut graph = end_phase.clone();
    for p in &queue_paths {
        add_path(&mut graph, g, p);
    }
    Pass1 { end_phase, graph }
}

/// Nodes of a traced subgraph.
pub(crate) fn node_set(g: &Graph<crate::skeleton::UnionNode>) -> BTreeSet<NodeId> {
    g.node_ids().collect()
}
