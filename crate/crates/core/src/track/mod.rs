//! Vessel tracking on the contracted skeleton graph.

mod onh;
mod pass1;
mod pass2;

pub use onh::detect_onh;
pub use pass1::{trace_pass1, Pass1};
pub use pass2::{bw_adjust, trace_pass2};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::graph::{Graph, NodeId, Point};
use crate::grid::delta_e_2000;
use crate::skeleton::{UnionGraph, UnionNode};

/// Exponents of the tracking edge weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeWeightParams {
    pub w_v: f64,
    pub w_c: f64,
    pub w_w: f64,
}

impl Default for EdgeWeightParams {
    fn default() -> Self {
        Self { w_v: 5.0, w_c: 1.0, w_w: 11.0 }
    }
}

/// `exp(w_v ln(1+p*) + w_c ln(1+c*) + w_w ln(1+w*))`, always >= 1.
///
/// p* is 255 minus the mean likelihood, c* the CIEDE2000 difference of the
/// two colors and w* the summed distance-to-background.
pub fn edge_weight(a: &UnionNode, b: &UnionNode, p: &EdgeWeightParams) -> f64 {
    let pv = 255.0 - (a.likelihood as f64 + b.likelihood as f64) / 2.0;
    let pc = delta_e_2000(a.lab, b.lab);
    let pw = a.bw_dist + b.bw_dist;
    (p.w_v * pv.ln_1p() + p.w_c * pc.ln_1p() + p.w_w * pw.ln_1p()).exp()
}

/// A node of the traced vessel graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VesselNode {
    pub pos: Point,
    pub likelihood: f64,
    pub bw_dist: f64,
    /// (artery, vein) expectation.
    pub av: [f64; 2],
}

impl VesselNode {
    pub fn from_union(n: &UnionNode) -> Self {
        Self {
            pos: n.pixel.into(),
            likelihood: n.likelihood as f64,
            bw_dist: n.bw_dist,
            av: [0.5, 0.5],
        }
    }
}

/// Undirected traced vessel graph with a designated optic-nerve-head node.
#[derive(Debug, Clone, PartialEq)]
pub struct VesselGraph {
    pub graph: Graph<VesselNode>,
    pub onh: NodeId,
    /// Set once resampling and smoothing have run.
    pub refined: bool,
}

impl VesselGraph {
    pub fn pos(&self, id: NodeId) -> Point {
        self.graph.node(id).pos
    }

    /// Degree-1 nodes.
    pub fn end_nodes(&self) -> Vec<NodeId> {
        self.graph.node_ids().filter(|&n| self.graph.degree(n) == 1).collect()
    }

    /// Degree > 2 nodes.
    pub fn branch_nodes(&self) -> Vec<NodeId> {
        self.graph.node_ids().filter(|&n| self.graph.degree(n) > 2).collect()
    }

    /// Maximal degree-2 paths; the ONH always ends a segment.
    pub fn segments(&self) -> Vec<Vec<NodeId>> {
        segments_of(&self.graph, &BTreeSet::from([self.onh]))
    }

    /// Renumbers nodes densely, keeping the ONH.
    pub fn compacted(&self) -> VesselGraph {
        let (g, map) = self.graph.compact();
        VesselGraph { graph: g, onh: map[self.onh].expect("onh removed"), refined: self.refined }
    }
}

/// Builds a vessel graph from a traced subgraph of the contracted graph.
pub fn to_vessel_graph(traced: &UnionGraph, onh_node: &UnionNode) -> VesselGraph {
    let mut g = Graph::new();
    let mut map = vec![None; traced.capacity()];
    let mut onh = None;
    for id in traced.node_ids() {
        let n = traced.node(id);
        let new = g.add_node(VesselNode::from_union(n));
        map[id] = Some(new);
        if n.pixel == onh_node.pixel {
            onh = Some(new);
        }
    }
    for (a, b) in traced.edges() {
        g.add_edge(map[a].unwrap(), map[b].unwrap());
    }
    let onh = onh.unwrap_or_else(|| g.add_node(VesselNode::from_union(onh_node)));
    VesselGraph { graph: g, onh, refined: false }
}

/// Walks from `start` through `first` until a terminal node (or back to
/// `start`). The result begins with `start`.
pub fn walk_segment<N>(
    g: &Graph<N>,
    is_terminal: &dyn Fn(NodeId) -> bool,
    start: NodeId,
    first: NodeId,
) -> Vec<NodeId> {
    let mut path = vec![start, first];
    let mut prev = start;
    let mut cur = first;
    while cur != start && !is_terminal(cur) && g.degree(cur) == 2 {
        let next = g.neighbors(cur).find(|&n| n != prev).expect("degree-2 node");
        path.push(next);
        prev = cur;
        cur = next;
    }
    path
}

/// Edge-partitioning maximal degree-2 paths. Nodes with degree != 2 and the
/// `extra` nodes are terminals; terminal-free cycles start at their smallest id.
pub fn segments_of<N>(g: &Graph<N>, extra: &BTreeSet<NodeId>) -> Vec<Vec<NodeId>> {
    let is_terminal = |n: NodeId| g.degree(n) != 2 || extra.contains(&n);
    let mut used: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    let key = |a: NodeId, b: NodeId| (a.min(b), a.max(b));
    let mut out = Vec::new();
    let take = |seg: Vec<NodeId>, used: &mut BTreeSet<(NodeId, NodeId)>, out: &mut Vec<Vec<NodeId>>| {
        for w in seg.windows(2) {
            used.insert(key(w[0], w[1]));
        }
        out.push(seg);
    };
    for t in g.node_ids().filter(|&n| is_terminal(n)).collect::<Vec<_>>() {
        for n in g.neighbors(t).collect::<Vec<_>>() {
            if used.contains(&key(t, n)) {
                continue;
            }
            let seg = walk_segment(g, &is_terminal, t, n);
            take(seg, &mut used, &mut out);
        }
    }
    for v in g.node_ids().collect::<Vec<_>>() {
        for n in g.neighbors(v).collect::<Vec<_>>() {
            if used.contains(&key(v, n)) {
                continue;
            }
            let seg = walk_segment(g, &|_| false, v, n);
            take(seg, &mut used, &mut out);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Lab, Pixel};

    fn un(l: u8, bw: f64) -> UnionNode {
        UnionNode { pixel: Pixel::new(0, 0), likelihood: l, lab: Lab::new(50.0, 10.0, 10.0), bw_dist: bw }
    }

    #[test]
    fn weight_anchor() {
        let w = edge_weight(&un(255, 2.0), &un(255, 3.0), &EdgeWeightParams::default());
        assert!((w / 6f64.powi(11) - 1.0).abs() < 1e-12);
        assert!(edge_weight(&un(255, 0.0), &un(255, 0.0), &EdgeWeightParams::default()) >= 1.0);
    }

    #[test]
    fn segments_partition_edges() {
        // a Y with a tail loop: 0-1-2-3, 3-4, 3-5-6-7-5
        let mut g: Graph<()> = Graph::new();
        for _ in 0..8 {
            g.add_node(());
        }
        for (a, b) in [(0, 1), (1, 2), (2, 3), (3, 4), (3, 5), (5, 6), (6, 7), (7, 5)] {
            g.add_edge(a, b);
        }
        let segs = segments_of(&g, &BTreeSet::new());
        let total: usize = segs.iter().map(|s| s.len() - 1).sum();
        assert_eq!(total, g.edge_count());
        assert!(segs.contains(&vec![0, 1, 2, 3]));
        assert!(segs.contains(&vec![5, 6, 7, 5]));
    }

    #[test]
    fn pure_cycle_is_one_segment() {
        let mut g: Graph<()> = Graph::new();
        for _ in 0..4 {
            g.add_node(());
        }
        for (a, b) in [(0, 1), (1, 2), (2, 3), (3, 0)] {
            g.add_edge(a, b);
        }
        assert_eq!(segments_of(&g, &BTreeSet::new()), vec![vec![0, 1, 2, 3, 0]]);
    }
}
