//! Label propagation along the estimated topology.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::flow::{route, DirectedVesselGraph};
use crate::graph::NodeId;
use crate::topo::{find_sinks, graph_cost, onh_distances, subtrees_meet, Cost, CostParams, HloParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropParams {
    pub max_passes: usize,
    /// A pass must lower the cost by more than this to trigger another.
    pub min_improvement: f64,
}

impl Default for PropParams {
    fn default() -> Self {
        Self { max_passes: 20, min_improvement: 1e-9 }
    }
}

/// Sources (outside the checkpoints) whose outgoing sub-trees reconverge.
pub fn find_stop_points(g: &DirectedVesselGraph) -> BTreeSet<NodeId> {
    g.graph
        .node_ids()
        .filter(|&n| !g.checkpoints.contains(&n) && subtrees_meet(g, n))
        .collect()
}

// Replaces the non-stop nodes of `path` (without its first node) by their mean.
fn homogenize(g: &mut DirectedVesselGraph, path: &[NodeId], stops: &BTreeSet<NodeId>) {
    crate::topo::homogenize_path(g, &path[1..], stops);
}

fn by_onh_distance(g: &DirectedVesselGraph, mut nodes: Vec<NodeId>) -> Vec<NodeId> {
    let d = onh_distances(g);
    nodes.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    nodes
}

/// Homogenizes every routed path that feeds a node in `targets`.
fn incoming_pass(g: &mut DirectedVesselGraph, targets: &[NodeId], stops: &BTreeSet<NodeId>) {
    for &s in targets {
        for i in g.in_neighbors(s) {
            let path = route(&g.graph, s, i, stops);
            homogenize(g, &path, stops);
        }
    }
}

/// Runs `pass` repeatedly while it lowers the cost. A pass that raises the
/// cost is undone. Returns the cost after each kept pass.
fn repeat_passes(
    g: &mut DirectedVesselGraph,
    p: &CostParams,
    pp: &PropParams,
    mut pass: impl FnMut(&mut DirectedVesselGraph),
) -> Vec<Cost> {
    let mut cost = graph_cost(g, p);
    let mut trace = Vec::new();
    for _ in 0..pp.max_passes {
        let mut next = g.clone();
        pass(&mut next);
        let c = graph_cost(&next, p);
        let gain = c.gain_over(&cost);
        if gain < 0.0 {
            break;
        }
        *g = next;
        cost = c;
        trace.push(c);
        if gain <= pp.min_improvement {
            break;
        }
    }
    trace
}

/// Homogenizes the incoming routes of every sink, nearest to the ONH
/// first, then keeps sweeping the incoming routes of all other branches
/// while the cost improves. Stop points block the routes.
pub fn propagate_from_sinks(g: &DirectedVesselGraph, p: &CostParams, hp: &HloParams, pp: &PropParams) -> DirectedVesselGraph {
    let mut out = g.clone();
    let stops = out.route_stops();
    let sinks = find_sinks(&out, p, hp);
    if sinks.is_empty() {
        return out;
    }
    repeat_passes(&mut out, p, &PropParams { max_passes: 1, ..*pp }, |x| incoming_pass(x, &sinks, &stops));
    let sink_set: BTreeSet<NodeId> = sinks.iter().copied().collect();
    let rest: Vec<NodeId> = out
        .graph
        .node_ids()
        .filter(|&n| out.graph.degree(n) > 2 && !sink_set.contains(&n) && !stops.contains(&n))
        .collect();
    let rest = by_onh_distance(&out, rest);
    repeat_passes(&mut out, p, pp, |x| incoming_pass(x, &rest, &stops));
    out
}

/// Routes from every end node toward the checkpoints and replaces each
/// path by its mean; passes repeat while the cost improves.
pub fn propagate_from_ends(g: &DirectedVesselGraph, p: &CostParams, pp: &PropParams) -> DirectedVesselGraph {
    let mut out = g.clone();
    let stops = out.route_stops();
    let ends: Vec<NodeId> =
        out.graph.node_ids().filter(|&n| out.graph.degree(n) == 1 && !stops.contains(&n)).collect();
    let ends = by_onh_distance(&out, ends);
    repeat_passes(&mut out, p, pp, |x| {
        for &e in &ends {
            let nbr = x.graph.neighbors(e).next().unwrap();
            let path = route(&x.graph, e, nbr, &stops);
            crate::topo::homogenize_path(x, &path, &stops);
        }
    });
    out
}

/// Stop points, then sink propagation, then end propagation.
pub fn propagate(g: &DirectedVesselGraph, p: &CostParams, hp: &HloParams, pp: &PropParams) -> DirectedVesselGraph {
    let mut d = g.clone();
    d.stop_points = find_stop_points(&d);
    let d = propagate_from_sinks(&d, p, hp, pp);
    propagate_from_ends(&d, p, pp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topo::hlo_tests::{split_crossing, Builder};
    use crate::topo::tests::{A, V};

    #[test]
    fn tree_has_no_stop_points() {
        let mut b = Builder::new();
        let onh = b.node(0.0, 0.0, A);
        let x = b.node(0.0, 30.0, A);
        b.line(onh, x, 5.0, A);
        let l = b.node(-20.0, 50.0, A);
        let r = b.node(20.0, 50.0, A);
        b.line(x, l, 5.0, A);
        b.line(x, r, 5.0, A);
        assert!(find_stop_points(&b.build(onh)).is_empty());
    }

    fn diamond(b: &mut Builder, from: NodeId, col: f64) -> NodeId {
        let s = b.node(0.0, col, A);
        b.line(from, s, 5.0, A);
        let u = b.node(-10.0, col + 15.0, A);
        let d = b.node(10.0, col + 15.0, A);
        let m = b.node(0.0, col + 30.0, A);
        b.line(s, u, 5.0, A);
        b.line(s, d, 5.0, A);
        b.line(u, m, 5.0, A);
        b.line(d, m, 5.0, A);
        let _ = m;
        s
    }

    #[test]
    fn diamonds_give_stop_points() {
        let mut b = Builder::new();
        let onh = b.node(0.0, 0.0, A);
        let s1 = diamond(&mut b, onh, 20.0);
        let m1 = b.g.node_ids().last().unwrap();
        let s2 = diamond(&mut b, m1, 80.0);
        let g = b.build(onh);
        assert_eq!(find_stop_points(&g), BTreeSet::from([s1, s2]));
    }

    #[test]
    fn sink_paths_keep_their_own_labels() {
        let (mut g, p, _) = split_crossing(4.0);
        // noisy but distinct inflows
        for n in g.graph.node_ids().collect::<Vec<_>>() {
            let av = g.graph.node(n).av;
            if av == A {
                g.graph.node_mut(n).av = if n % 3 == 0 { [0.8, 0.2] } else { [0.95, 0.05] };
            } else if av == V {
                g.graph.node_mut(n).av = if n % 3 == 0 { [0.2, 0.8] } else { [0.05, 0.95] };
            }
        }
        let cp = CostParams::default();
        let out = propagate_from_sinks(&g, &cp, &HloParams::default(), &PropParams::default());
        let ins = out.in_neighbors(p);
        let la: Vec<bool> = ins.iter().map(|&i| out.graph.node(i).av[0] > 0.5).collect();
        assert_ne!(la[0], la[1]);
        assert!(graph_cost(&out, &cp).total_cmp(&graph_cost(&g, &cp)).is_le());
        for n in out.graph.node_ids() {
            let av = out.graph.node(n).av;
            assert!((av[0] + av[1] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn no_sinks_is_a_no_op() {
        let mut b = Builder::new();
        let onh = b.node(0.0, 0.0, A);
        let x = b.node(0.0, 30.0, A);
        b.line(onh, x, 5.0, A);
        let g = b.build(onh);
        let out = propagate_from_sinks(&g, &CostParams::default(), &HloParams::default(), &PropParams::default());
        assert_eq!(out, g);
    }

    #[test]
    fn single_path_tail_is_flipped() {
        let mut b = Builder::new();
        let onh = b.node(0.0, 0.0, A);
        let e = b.node(0.0, 15.0, A);
        let ids = b.line(onh, e, 5.0, A);
        b.g.node_mut(e).av = V;
        let g = b.build(onh);
        let cp = CostParams::default();
        let out = propagate_from_ends(&g, &cp, &PropParams::default());
        // route from the end stops at the ONH, which keeps its own value
        let mean = (2.0 * 1.0 + 0.0) / 3.0;
        for &n in &ids[1..] {
            assert!((out.graph.node(n).av[0] - mean).abs() < 1e-12);
        }
        let again = propagate_from_ends(&out, &cp, &PropParams::default());
        assert_eq!(again, out);
    }

    #[test]
    fn flipped_continuation_is_repaired() {
        let mut b = Builder::new();
        let onh = b.node(0.0, 0.0, A);
        let x = b.node(0.0, 60.0, A);
        b.line(onh, x, 5.0, A);
        let r = b.node(0.0, 80.0, V);
        let straight = b.line(x, r, 5.0, V);
        let l = b.node(-30.0, 80.0, A);
        b.line(x, l, 5.0, A);
        let g = b.build(onh);
        let cp = CostParams::default();
        let out = propagate_from_ends(&g, &cp, &PropParams::default());
        for &n in &straight[1..] {
            assert!(out.graph.node(n).av[0] > 0.5, "node {n} still vein");
        }
        assert!(graph_cost(&out, &cp).total_cmp(&graph_cost(&g, &cp)).is_lt());
    }

    #[test]
    fn stop_point_blocks_route() {
        let mut b = Builder::new();
        let onh = b.node(0.0, 0.0, A);
        let s = diamond(&mut b, onh, 20.0);
        let m = b.g.node_ids().last().unwrap();
        let t = b.node(0.0, 80.0, V);
        b.line(m, t, 5.0, V);
        let mut g = b.build(onh);
        g.stop_points = find_stop_points(&g);
        let stops = g.route_stops();
        let path = route(&g.graph, t, g.graph.neighbors(t).next().unwrap(), &stops);
        assert!(!path.contains(&onh));
        let i = path.iter().position(|&n| n == s);
        assert!(i.is_none_or(|i| i == path.len() - 1));
    }
}
