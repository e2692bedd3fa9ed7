//! Junction contraction of the union skeleton graph.

use std::collections::{BTreeMap, BTreeSet};

use crate::graph::NodeId;
use crate::grid::Pixel;
use crate::skeleton::UnionGraph;

/// Node ids of the given pixels, skipping pixels that are not in `g`.
pub fn ids_of_pixels(g: &UnionGraph, pixels: &[Pixel]) -> BTreeSet<NodeId> {
    let index: BTreeMap<Pixel, NodeId> = g.node_ids().map(|id| (g.node(id).pixel, id)).collect();
    pixels.iter().filter_map(|p| index.get(p).copied()).collect()
}

/// Absorbs the pixel neighbors of every junction into the junction.
///
/// Junctions (degree > 2 in `g`) are visited by increasing likelihood, ties
/// by pixel order. Each unprotected 8-neighbor still present is removed after
/// its other neighbors are linked to the junction. Connectivity and the
/// protected nodes are preserved.
pub fn contract(g: &UnionGraph, protected: &BTreeSet<NodeId>) -> UnionGraph {
    let mut branches: Vec<NodeId> = g.node_ids().filter(|&n| g.degree(n) > 2).collect();
    branches.sort_by_key(|&n| (g.node(n).likelihood, g.node(n).pixel));

    let mut gc = g.clone();
    for b in branches {
        if !gc.contains(b) {
            continue;
        }
        let bp = g.node(b).pixel;
        let nbrs: Vec<NodeId> = gc
            .neighbors(b)
            .filter(|&n| !protected.contains(&n) && g.node(n).pixel.is_8_adjacent(&bp))
            .collect();
        for n in nbrs {
            if !gc.contains(n) || !gc.has_edge(b, n) {
                continue;
            }
            let others: Vec<NodeId> = gc.neighbors(n).filter(|&m| m != b).collect();
            for m in others {
                gc.add_edge(b, m);
            }
            gc.remove_node(n);
        }
    }
    gc
}

/// True for edges added by contraction rather than pixel adjacency.
pub fn is_shortcut(g: &UnionGraph, a: NodeId, b: NodeId) -> bool {
    !g.node(a).pixel.is_8_adjacent(&g.node(b).pixel)
}
