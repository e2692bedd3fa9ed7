//! Graph cleaning after tracking.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::graph::{angle_between, NodeId, Point};
use crate::track::{VesselGraph, VesselNode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CleanParams {
    /// Nodes within this distance of the ONH are merged into it.
    pub onh_radius: f64,
    /// Leaf segments and cycles with fewer / at most this many nodes go.
    pub min_len: usize,
    /// Turning angle (degrees) above which a degree-2 node is cut.
    pub corner_angle: f64,
    /// Longer edges are resampled to this spacing.
    pub spacing: f64,
    pub refine: bool,
}

impl Default for CleanParams {
    fn default() -> Self {
        Self { onh_radius: 50.0, min_len: 11, corner_angle: 100.0, spacing: 5.0, refine: true }
    }
}

/// Full cleaning sequence. Topological steps run to a fixed point; the
/// resampling and smoothing steps run once per graph.
pub fn clean(g: &VesselGraph, p: &CleanParams) -> VesselGraph {
    let mut g = g.clone();
    contract_onh(&mut g, p.onh_radius);
    drop_isolated(&mut g);
    loop {
        let mut changed = false;
        changed |= drop_short_leaves(&mut g, p.min_len);
        changed |= drop_small_cycles(&mut g, p.min_len);
        changed |= cut_corners(&mut g, p.corner_angle);
        changed |= drop_isolated(&mut g);
        if !changed {
            break;
        }
    }
    if p.refine && !g.refined {
        resample(&mut g, p.spacing);
        smooth(&mut g, p.onh_radius, p.corner_angle);
        g.refined = true;
    }
    g.compacted()
}

/// Merges every node within `radius` of the ONH into the ONH.
pub fn contract_onh(g: &mut VesselGraph, radius: f64) {
    let c = g.pos(g.onh);
    let inner: BTreeSet<NodeId> =
        g.graph.node_ids().filter(|&n| n != g.onh && g.pos(n).dist(&c) <= radius).collect();
    let mut links = BTreeSet::new();
    for &n in &inner {
        for m in g.graph.neighbors(n) {
            if m != g.onh && !inner.contains(&m) {
                links.insert(m);
            }
        }
    }
    for n in inner {
        g.graph.remove_node(n);
    }
    for m in links {
        g.graph.add_edge(g.onh, m);
    }
}

/// Removes isolated nodes other than the ONH.
pub fn drop_isolated(g: &mut VesselGraph) -> bool {
    let iso: Vec<NodeId> = g.graph.node_ids().filter(|&n| n != g.onh && g.graph.degree(n) == 0).collect();
    for &n in &iso {
        g.graph.remove_node(n);
    }
    !iso.is_empty()
}

/// Removes dangling segments with fewer than `min_len` nodes.
pub fn drop_short_leaves(g: &mut VesselGraph, min_len: usize) -> bool {
    let mut changed = false;
    for seg in g.segments() {
        if seg.len() >= min_len || seg.first() == seg.last() {
            continue;
        }
        let (a, b) = (seg[0], *seg.last().unwrap());
        if !g.graph.contains(a) || !g.graph.contains(b) {
            continue;
        }
        let da = g.graph.degree(a);
        let db = g.graph.degree(b);
        let leaf_a = da == 1 && a != g.onh;
        let leaf_b = db == 1 && b != g.onh;
        let remove: Vec<NodeId> = match (leaf_a, leaf_b) {
            (true, true) => seg.clone(),
            (true, false) => seg[..seg.len() - 1].to_vec(),
            (false, true) => seg[1..].to_vec(),
            (false, false) => continue,
        };
        if remove.iter().any(|&n| !g.graph.contains(n)) {
            continue;
        }
        for n in remove {
            g.graph.remove_node(n);
        }
        changed = true;
    }
    changed
}

// Shortest cycle through edge (u, v) with at most `max_nodes` nodes.
fn short_cycle(g: &VesselGraph, u: NodeId, v: NodeId, max_nodes: usize) -> Option<Vec<NodeId>> {
    let mut prev = std::collections::BTreeMap::new();
    prev.insert(u, u);
    let mut q = VecDeque::from([(u, 1usize)]);
    while let Some((x, depth)) = q.pop_front() {
        if depth >= max_nodes {
            continue;
        }
        for y in g.graph.neighbors(x) {
            if x == u && y == v {
                continue;
            }
            if prev.contains_key(&y) {
                continue;
            }
            prev.insert(y, x);
            if y == v {
                let mut path = vec![v];
                let mut cur = v;
                while cur != u {
                    cur = prev[&cur];
                    path.push(cur);
                }
                return Some(path);
            }
            q.push_back((y, depth + 1));
        }
    }
    None
}

/// Collapses cycles with at most `max_nodes` nodes into one node at their
/// centroid (the ONH stays put), keeping every outside connection. Crossings
/// and junction blobs thus become single junctions.
pub fn drop_small_cycles(g: &mut VesselGraph, max_nodes: usize) -> bool {
    let mut changed = false;
    loop {
        let mut found = None;
        for (u, v) in g.graph.edges() {
            if let Some(c) = short_cycle(g, u, v, max_nodes) {
                found = Some(c);
                break;
            }
        }
        let Some(cycle) = found else { break };
        changed = true;
        let members: BTreeSet<NodeId> = cycle.iter().copied().collect();
        let keep = if members.contains(&g.onh) { g.onh } else { *members.first().unwrap() };
        let k = members.len() as f64;
        let mut merged = *g.graph.node(keep);
        if keep != g.onh {
            let mut pos = Point::new(0.0, 0.0);
            let (mut lik, mut bw, mut av) = (0.0, 0.0, [0.0, 0.0]);
            for &m in &members {
                let x = g.graph.node(m);
                pos = pos.add(&x.pos);
                lik += x.likelihood;
                bw += x.bw_dist;
                av[0] += x.av[0];
                av[1] += x.av[1];
            }
            merged = VesselNode { pos: pos.scale(1.0 / k), likelihood: lik / k, bw_dist: bw / k, av: [av[0] / k, av[1] / k] };
        }
        let outside: BTreeSet<NodeId> =
            members.iter().flat_map(|&m| g.graph.neighbors(m).collect::<Vec<_>>()).filter(|x| !members.contains(x)).collect();
        for &m in &members {
            if m != keep {
                g.graph.remove_node(m);
            }
        }
        *g.graph.node_mut(keep) = merged;
        for x in outside {
            g.graph.add_edge(keep, x);
        }
    }
    changed
}

const CORNER_REACH: f64 = 6.0;

fn turn_angle(a: Point, n: Point, c: Point) -> f64 {
    angle_between(&n.sub(&a), &c.sub(&n))
}

/// Point on the path leaving `n` through `m`, the first node at least
/// [`CORNER_REACH`] away, stopping early at junctions and ends.
fn reach(g: &VesselGraph, n: NodeId, m: NodeId) -> Point {
    let origin = g.pos(n);
    let (mut prev, mut cur) = (n, m);
    loop {
        if g.pos(cur).dist(&origin) >= CORNER_REACH || g.graph.degree(cur) != 2 || cur == n {
            return g.pos(cur);
        }
        let Some(next) = g.graph.neighbors(cur).find(|&x| x != prev) else { return g.pos(cur) };
        prev = cur;
        cur = next;
    }
}

/// Cuts degree-2 nodes whose turning angle exceeds `max_angle` degrees.
/// The angle is taken over a few pixels on each side so that pixel jitter
/// left over from junction blobs does not count as a corner.
pub fn cut_corners(g: &mut VesselGraph, max_angle: f64) -> bool {
    let mut changed = false;
    for n in g.graph.node_ids().collect::<Vec<_>>() {
        if n == g.onh || g.graph.degree(n) != 2 {
            continue;
        }
        let nb: Vec<NodeId> = g.graph.neighbors(n).collect();
        if turn_angle(reach(g, n, nb[0]), g.pos(n), reach(g, n, nb[1])) > max_angle {
            g.graph.remove_edge(n, nb[1]);
            changed = true;
        }
    }
    changed
}

/// Splits edges longer than `spacing` into evenly spaced pieces. Edges at
/// the ONH are left alone.
pub fn resample(g: &mut VesselGraph, spacing: f64) {
    for (a, b) in g.graph.edges().collect::<Vec<_>>() {
        if a == g.onh || b == g.onh {
            continue;
        }
        let (na, nb) = (*g.graph.node(a), *g.graph.node(b));
        let len = na.pos.dist(&nb.pos);
        if len <= spacing {
            continue;
        }
        let pieces = (len / spacing).ceil() as usize;
        g.graph.remove_edge(a, b);
        let mut prev = a;
        for k in 1..pieces {
            let t = k as f64 / pieces as f64;
            let node = VesselNode {
                pos: na.pos.add(&nb.pos.sub(&na.pos).scale(t)),
                likelihood: na.likelihood + (nb.likelihood - na.likelihood) * t,
                bw_dist: na.bw_dist + (nb.bw_dist - na.bw_dist) * t,
                av: [na.av[0] + (nb.av[0] - na.av[0]) * t, na.av[1] + (nb.av[1] - na.av[1]) * t],
            };
            let id = g.graph.add_node(node);
            g.graph.add_edge(prev, id);
            prev = id;
        }
        g.graph.add_edge(prev, b);
    }
}

/// One 3-tap moving average over degree-2 nodes away from the ONH. Moves
/// that would enter the ONH disc or create a corner are undone.
pub fn smooth(g: &mut VesselGraph, onh_radius: f64, max_angle: f64) {
    let c = g.pos(g.onh);
    let old: Vec<(NodeId, Point)> = g.graph.node_ids().map(|n| (n, g.pos(n))).collect();
    let movable: Vec<NodeId> = g
        .graph
        .node_ids()
        .filter(|&n| n != g.onh && g.graph.degree(n) == 2 && !g.graph.has_edge(n, g.onh))
        .collect();
    let mut moved = Vec::new();
    for &n in &movable {
        let nb: Vec<NodeId> = g.graph.neighbors(n).collect();
        let p = g.pos(nb[0]).add(&g.pos(n)).add(&g.pos(nb[1])).scale(1.0 / 3.0);
        moved.push((n, p));
    }
    let original = |n: NodeId| old.binary_search_by_key(&n, |x| x.0).map(|i| old[i].1).unwrap();
    for (n, p) in moved {
        if p.dist(&c) > onh_radius {
            g.graph.node_mut(n).pos = p;
        }
    }
    loop {
        let mut bad = BTreeSet::new();
        for &n in &movable {
            for x in std::iter::once(n).chain(g.graph.neighbors(n)) {
                if x == g.onh || g.graph.degree(x) != 2 {
                    continue;
                }
                let nb: Vec<NodeId> = g.graph.neighbors(x).collect();
                if turn_angle(g.pos(nb[0]), g.pos(x), g.pos(nb[1])) > max_angle {
                    bad.extend(std::iter::once(x).chain(nb).filter(|&y| g.pos(y) != original(y)));
                }
            }
        }
        if bad.is_empty() {
            break;
        }
        for x in bad {
            g.graph.node_mut(x).pos = original(x);
        }
    }
}
