//! Second tracking pass: reconnect untraced pieces between traced nodes.

use std::collections::{BTreeMap, BTreeSet};

use super::pass1::node_set;
use super::{edge_weight, walk_segment, EdgeWeightParams};
use crate::graph::{dijkstra, NodeId, Point};
use crate::skeleton::UnionGraph;
use crate::spatial::PointIndex;

/// Weights for unvisited nodes fall below this only when they would be zero.
const MIN_UNVISITED_WEIGHT: f64 = 1e-12;

type EdgeKey = (NodeId, NodeId);

fn key(a: NodeId, b: NodeId) -> EdgeKey {
    (a.min(b), a.max(b))
}

/// Reweights edges whose endpoints are both outside the current topology:
/// `(255 - mean likelihood) / exp(gamma (d1 + d2))` where `d` is the distance
/// to the nearest topology node. Results are floored at 1e-12.
pub fn bw_adjust(
    g: &UnionGraph,
    weights: &mut BTreeMap<EdgeKey, f64>,
    topology: &BTreeSet<NodeId>,
    topo_index: &PointIndex,
    gamma: f64,
) {
    let mut dist: BTreeMap<NodeId, f64> = BTreeMap::new();
    let mut d = |n: NodeId| -> f64 {
        *dist.entry(n).or_insert_with(|| {
            topo_index.nearest(&Point::from(g.node(n).pixel)).map(|(_, d)| d).unwrap_or(0.0)
        })
    };
    for (&(a, b), w) in weights.iter_mut() {
        if topology.contains(&a) || topology.contains(&b) {
            continue;
        }
        let mean = (g.node(a).likelihood as f64 + g.node(b).likelihood as f64) / 2.0;
        let v = (255.0 - mean) / (gamma * (d(a) + d(b))).exp();
        *w = v.max(MIN_UNVISITED_WEIGHT);
    }
}

fn topology_length(topo: &UnionGraph, s: NodeId, targets: &[NodeId]) -> Vec<f64> {
    let sp = topo.dijkstra(s, None, |a, b| {
        Point::from(topo.node(a).pixel).dist(&Point::from(topo.node(b).pixel))
    });
    targets.iter().map(|&t| sp.dist[t]).collect()
}

/// Segments of `topo` traversed by `path`, as edge keys.
fn touched_segment_edges(topo: &UnionGraph, path: &[NodeId]) -> BTreeSet<EdgeKey> {
    let is_terminal = |n: NodeId| topo.degree(n) != 2;
    let mut out = BTreeSet::new();
    let walk_from = |a: NodeId, b: NodeId, out: &mut BTreeSet<EdgeKey>| {
        if out.contains(&key(a, b)) {
            return;
        }
        out.insert(key(a, b));
        for (from, to) in [(a, b), (b, a)] {
            if is_terminal(to) {
                continue;
            }
            let seg = walk_segment(topo, &is_terminal, from, to);
            for w in seg.windows(2) {
                out.insert(key(w[0], w[1]));
            }
        }
    };
    for w in path.windows(2) {
        walk_from(w[0], w[1], &mut out);
    }
    for &end in [path.first(), path.last()].iter().flatten() {
        if topo.degree(*end) == 2 {
            for n in topo.neighbors(*end).collect::<Vec<_>>() {
                walk_from(*end, n, &mut out);
            }
        }
    }
    out
}

/// Splices untraced regions of `g` into `pass1` over `iterations` rounds.
///
/// For each connected piece of `g` outside the current topology, the two
/// boundary nodes farthest apart through the topology are joined by a local
/// shortest path when that path has positive cost.
pub fn trace_pass2(
    g: &UnionGraph,
    pass1: &UnionGraph,
    params: &EdgeWeightParams,
    iterations: usize,
    k: usize,
    gamma: f64,
) -> UnionGraph {
    let mut topo = pass1.clone();
    for _ in 0..iterations {
        let visited = node_set(&topo);
        let outside: BTreeSet<NodeId> = g.node_ids().filter(|n| !visited.contains(n)).collect();
        if outside.is_empty() {
            break;
        }
        let rest = g.induced(&outside);
        let mut changed = false;
        for comp in rest.components() {
            let current = node_set(&topo);
            let bz: Vec<NodeId> = comp
                .iter()
                .flat_map(|&n| g.neighbors(n))
                .filter(|n| current.contains(n))
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            if bz.len() < 2 {
                continue;
            }

            let mut pairs: Vec<(f64, NodeId, NodeId)> = Vec::new();
            for (i, &s) in bz.iter().enumerate() {
                let lens = topology_length(&topo, s, &bz[i + 1..]);
                for (j, len) in lens.into_iter().enumerate() {
                    pairs.push((len, s, bz[i + 1 + j]));
                }
            }
            pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
            let (_, s, t) = pairs[0];

            let local = g.k_hop_ball(comp.iter().copied().chain(bz.iter().copied()), k);
            let mut weights: BTreeMap<EdgeKey, f64> = BTreeMap::new();
            for &a in &local {
                for b in g.neighbors(a) {
                    if a < b && local.contains(&b) {
                        weights.insert((a, b), edge_weight(g.node(a), g.node(b), params));
                    }
                }
            }
            let index = PointIndex::from_points(
                16.0,
                current.iter().map(|&n| (Point::from(g.node(n).pixel), n)),
            );
            bw_adjust(g, &mut weights, &current, &index, gamma);

            let topo_path = topo.dijkstra(s, Some(t), |_, _| 1.0).path_to(t);
            if let Some(p) = topo_path {
                for e in touched_segment_edges(&topo, &p) {
                    if let Some(w) = weights.get_mut(&e) {
                        *w = 0.0;
                    }
                }
            }
            for &b in local.iter().filter(|&&n| current.contains(&n) && topo.degree(n) > 2) {
                for n in g.neighbors(b) {
                    if let Some(w) = weights.get_mut(&key(b, n)) {
                        *w = 0.0;
                    }
                }
            }

            let sp = dijkstra(g.capacity(), s, Some(t), |u, visit| {
                for v in g.neighbors(u) {
                    if let Some(&w) = weights.get(&key(u, v)) {
                        visit(v, w);
                    }
                }
            });
            if let Some(path) = sp.path_to(t) {
                if sp.dist[t] > 0.0 {
                    for &n in &path {
                        topo.insert_from(g, n);
                    }
                    for w in path.windows(2) {
                        topo.add_edge(w[0], w[1]);
                    }
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    topo
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, Lab};
    use crate::skeleton::build_union_graph;

    #[test]
    fn bw_adjust_anchor() {
        let m = Grid::from_fn(5, 1, |_, _| true);
        let g = build_union_graph(&m, &Grid::filled(5, 1, 0u8), &Grid::filled(5, 1, Lab::default()), &Grid::filled(5, 1, 1.0))
            .unwrap();
        // topology = {0, 4}; nodes 1 and 3 are one pixel away
        let topo: BTreeSet<NodeId> = [0, 4].into();
        let idx = PointIndex::from_points(4.0, topo.iter().map(|&n| (Point::from(g.node(n).pixel), n)));
        let mut w: BTreeMap<EdgeKey, f64> = [((0, 1), 9.0), ((1, 2), 9.0), ((2, 3), 9.0), ((3, 4), 9.0)].into();
        bw_adjust(&g, &mut w, &topo, &idx, 1.0);
        assert_eq!(w[&(0, 1)], 9.0);
        assert!((w[&(1, 2)] - 255.0 / 3f64.exp()).abs() < 1e-12);
        let mut w2: BTreeMap<EdgeKey, f64> = [((1, 3), 0.0)].into();
        bw_adjust(&g, &mut w2, &topo, &idx, 1.0);
        assert!((w2[&(1, 3)] - 255.0 / 2f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn h_crossbar_is_restored() {
        let rows = ["#...#", "#...#", "#####", "#...#", "#...#"];
        let m = Grid::from_fn(5, 5, |r, c| rows[r].as_bytes()[c] == b'#');
        let g = build_union_graph(&m, &Grid::filled(5, 5, 200u8), &Grid::filled(5, 5, Lab::default()), &Grid::filled(5, 5, 1.0))
            .unwrap();
        // pass 1 kept only the two verticals
        let verticals: BTreeSet<NodeId> =
            g.node_ids().filter(|&n| g.node(n).pixel.col == 0 || g.node(n).pixel.col == 4).collect();
        let mut p1 = g.induced(&verticals);
        for (a, b) in g.edges() {
            let (pa, pb) = (g.node(a).pixel, g.node(b).pixel);
            if verticals.contains(&a) && verticals.contains(&b) && pa.col != pb.col {
                p1.remove_edge(a, b);
            }
        }
        let out = trace_pass2(&g, &p1, &EdgeWeightParams::default(), 3, 3, 1.0);
        assert_eq!(out.component_count(), 1);
        for n in g.node_ids() {
            assert!(out.contains(n));
        }
        for n in verticals {
            assert!(out.contains(n));
        }
    }
}
