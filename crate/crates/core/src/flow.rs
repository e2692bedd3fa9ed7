//! Edge orientation away from the ONH.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{angle_between, Graph, NodeId, Point};
use crate::track::{segments_of, walk_segment, VesselGraph, VesselNode};

/// Number of steps averaged for a segment direction.
pub const DIRECTION_WINDOW: usize = 5;

/// A vessel graph with one direction per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedVesselGraph {
    pub graph: Graph<VesselNode>,
    /// Directed edges (from, to); exactly one per undirected edge.
    pub forward: BTreeSet<(NodeId, NodeId)>,
    pub onh: NodeId,
    pub checkpoints: BTreeSet<NodeId>,
    /// Route terminal -> number of routes ending there.
    pub tally: BTreeMap<NodeId, usize>,
    pub route_calls: usize,
    pub stop_points: BTreeSet<NodeId>,
    pub refined: bool,
}

impl DirectedVesselGraph {
    pub fn pos(&self, n: NodeId) -> Point {
        self.graph.node(n).pos
    }

    pub fn is_forward(&self, a: NodeId, b: NodeId) -> bool {
        self.forward.contains(&(a, b))
    }

    pub fn in_neighbors(&self, n: NodeId) -> Vec<NodeId> {
        self.graph.neighbors(n).filter(|&m| self.is_forward(m, n)).collect()
    }

    pub fn out_neighbors(&self, n: NodeId) -> Vec<NodeId> {
        self.graph.neighbors(n).filter(|&m| self.is_forward(n, m)).collect()
    }

    /// Route terminals: ONH, pseudo-ONHs and stop points.
    pub fn route_stops(&self) -> BTreeSet<NodeId> {
        self.checkpoints.union(&self.stop_points).copied().collect()
    }

    /// Segments with the ONH and checkpoints as extra terminals.
    pub fn segments(&self) -> Vec<Vec<NodeId>> {
        segments_of(&self.graph, &self.checkpoints)
    }

    /// Segment starting at `a` through `b`, up to the next terminal.
    pub fn segment_from(&self, a: NodeId, b: NodeId) -> Vec<NodeId> {
        let cp = &self.checkpoints;
        walk_segment(&self.graph, &|n| cp.contains(&n), a, b)
    }

    /// Sets every edge of `path` to point along it.
    pub fn orient_path(&mut self, path: &[NodeId]) {
        for w in path.windows(2) {
            self.forward.remove(&(w[1], w[0]));
            self.forward.insert((w[0], w[1]));
        }
    }

    /// Nodes reachable from a checkpoint along forward edges.
    pub fn reachable(&self) -> BTreeSet<NodeId> {
        let mut seen: BTreeSet<NodeId> = self.checkpoints.iter().copied().filter(|&c| self.graph.contains(c)).collect();
        let mut q: VecDeque<NodeId> = seen.iter().copied().collect();
        while let Some(n) = q.pop_front() {
            for m in self.out_neighbors(n) {
                if seen.insert(m) {
                    q.push_back(m);
                }
            }
        }
        seen
    }

    pub fn to_undirected(&self) -> VesselGraph {
        VesselGraph { graph: self.graph.clone(), onh: self.onh, refined: self.refined }
    }

    /// Rebuilds from an undirected graph plus explicit directions.
    pub fn from_parts(
        g: VesselGraph,
        forward: BTreeSet<(NodeId, NodeId)>,
        checkpoints: BTreeSet<NodeId>,
    ) -> Result<Self> {
        for &(a, b) in &forward {
            if !g.graph.contains(a) || !g.graph.contains(b) || !g.graph.has_edge(a, b) {
                return Err(Error::Input(format!("directed edge ({a}, {b}) is not an edge of the graph")));
            }
            if forward.contains(&(b, a)) {
                return Err(Error::Input(format!("edge ({a}, {b}) has both directions")));
            }
        }
        if forward.len() != g.graph.edge_count() {
            return Err(Error::Input("some edges have no direction".into()));
        }
        let mut checkpoints = checkpoints;
        checkpoints.insert(g.onh);
        Ok(Self {
            onh: g.onh,
            refined: g.refined,
            graph: g.graph,
            forward,
            checkpoints,
            tally: BTreeMap::new(),
            route_calls: 0,
            stop_points: BTreeSet::new(),
        })
    }
}

fn is_stop(g: &Graph<VesselNode>, stops: &BTreeSet<NodeId>, n: NodeId) -> bool {
    g.degree(n) != 2 || stops.contains(&n)
}

/// Mean unit step along the path from `b` through `n`, up to `steps` steps
/// and stopping at terminals. `toward_b` flips it to point at `b`.
fn mean_direction(g: &Graph<VesselNode>, stops: &BTreeSet<NodeId>, b: NodeId, n: NodeId, toward_b: bool) -> Point {
    let mut sum = Point::new(0.0, 0.0);
    let (mut prev, mut cur) = (b, n);
    for k in 0..DIRECTION_WINDOW {
        let step = g.node(cur).pos.sub(&g.node(prev).pos);
        sum = sum.add(&step.unit());
        if k + 1 == DIRECTION_WINDOW || cur == b || is_stop(g, stops, cur) {
            break;
        }
        let Some(next) = g.neighbors(cur).find(|&m| m != prev) else { break };
        prev = cur;
        cur = next;
    }
    if toward_b {
        sum.scale(-1.0)
    } else {
        sum
    }
}

/// Turning angle in degrees when continuing from neighbor `i` through `b`
/// into neighbor `j`. Zero is a straight continuation.
pub fn straightness_with(g: &Graph<VesselNode>, stops: &BTreeSet<NodeId>, i: NodeId, b: NodeId, j: NodeId) -> Result<f64> {
    if i == j {
        return Err(Error::InvalidArgument(format!("straightness needs two distinct neighbors, got {i} twice")));
    }
    if !g.has_edge(i, b) || !g.has_edge(j, b) {
        return Err(Error::InvalidArgument(format!("{i} and {j} must both be neighbors of {b}")));
    }
    let din = mean_direction(g, stops, b, i, true);
    let dout = mean_direction(g, stops, b, j, false);
    Ok(angle_between(&din, &dout))
}

pub fn straightness(g: &Graph<VesselNode>, i: NodeId, b: NodeId, j: NodeId) -> Result<f64> {
    straightness_with(g, &BTreeSet::new(), i, b, j)
}

/// `exp(coeff * 180 / (1 + s_theta))`.
pub fn branch_forward_cost(s_theta: f64, theta_coeff: f64) -> f64 {
    (theta_coeff * 180.0 / (1.0 + s_theta)).exp()
}

/// Follows the segment from `b` through `i`, continuing straight through
/// branches, until a checkpoint, a dead end or an already visited branch.
pub fn route(g: &Graph<VesselNode>, b: NodeId, i: NodeId, checkpoints: &BTreeSet<NodeId>) -> Vec<NodeId> {
    route_by(g, b, i, checkpoints, &|into, end, j| straightness_with(g, checkpoints, into, end, j).unwrap())
}

/// [`route`] with a custom continuation score `score(into, branch, next)`;
/// the lowest score wins, ties to the smaller id.
pub fn route_by(
    g: &Graph<VesselNode>,
    b: NodeId,
    i: NodeId,
    checkpoints: &BTreeSet<NodeId>,
    score: &dyn Fn(NodeId, NodeId, NodeId) -> f64,
) -> Vec<NodeId> {
    let mut path = vec![b];
    let mut visited = BTreeSet::from([b]);
    let (mut from, mut first) = (b, i);
    loop {
        let seg = walk_segment(g, &|n| checkpoints.contains(&n), from, first);
        path.extend_from_slice(&seg[1..]);
        let end = *seg.last().unwrap();
        if checkpoints.contains(&end) || !visited.insert(end) || g.degree(end) < 2 {
            return path;
        }
        let into = seg[seg.len() - 2];
        let next = g
            .neighbors(end)
            .filter(|&j| j != into)
            .map(|j| (score(into, end, j), j))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        match next {
            Some((_, j)) => {
                from = end;
                first = j;
            }
            None => return path,
        }
    }
}

/// ONH plus, for each component without it, the end node closest to the
/// ONH (any node if the component has no ends).
pub fn find_checkpoints(g: &VesselGraph) -> BTreeSet<NodeId> {
    let c = g.pos(g.onh);
    let mut out = BTreeSet::from([g.onh]);
    for comp in g.graph.components() {
        if comp.contains(&g.onh) {
            continue;
        }
        let ends: Vec<NodeId> = comp.iter().copied().filter(|&n| g.graph.degree(n) <= 1).collect();
        let pool = if ends.is_empty() { comp } else { ends };
        let best = pool
            .into_iter()
            .min_by(|&a, &b| g.pos(a).dist(&c).total_cmp(&g.pos(b).dist(&c)).then(a.cmp(&b)))
            .unwrap();
        out.insert(best);
    }
    out
}

/// Orients every edge of a cleaned graph away from its checkpoint.
pub fn assign_flow(g: &VesselGraph) -> DirectedVesselGraph {
    let checkpoints = find_checkpoints(g);
    let gr = &g.graph;

    let starts: Vec<(NodeId, NodeId)> = gr
        .node_ids()
        .filter(|&n| gr.degree(n) != 2)
        .flat_map(|n| gr.neighbors(n).map(move |m| (n, m)))
        .collect();
    let ends: Vec<NodeId> = starts.par_iter().map(|&(n, m)| *route(gr, n, m, &checkpoints).last().unwrap()).collect();
    let mut tally: BTreeMap<NodeId, usize> = checkpoints.iter().map(|&c| (c, 0)).collect();
    for e in ends {
        *tally.entry(e).or_default() += 1;
    }

    let dead_end = |n: NodeId| gr.degree(n) == 1 && !checkpoints.contains(&n);
    let segs = segments_of(gr, &checkpoints);
    let oriented: Vec<Vec<NodeId>> = segs
        .par_iter()
        .map(|seg| {
            let n = seg.len();
            let f1 = route(gr, seg[0], seg[1], &checkpoints);
            let f2 = route(gr, seg[n - 1], seg[n - 2], &checkpoints);
            let score = |f: &[NodeId], far: NodeId| {
                let hits = *tally.get(f.last().unwrap()).unwrap_or(&0) as f64;
                hits * if dead_end(far) { 0.0 } else { 1.0 } + 1.0 / f.len() as f64
            };
            let s1 = score(&f1, seg[n - 1]);
            let s2 = score(&f2, seg[0]);
            if s1 > s2 {
                seg.iter().rev().copied().collect()
            } else {
                seg.clone()
            }
        })
        .collect();

    let mut d = DirectedVesselGraph {
        graph: gr.clone(),
        forward: BTreeSet::new(),
        onh: g.onh,
        checkpoints,
        route_calls: starts.len(),
        tally,
        stop_points: BTreeSet::new(),
        refined: g.refined,
    };
    for seg in &oriented {
        d.orient_path(seg);
    }
    repair_reachability(&mut d, &segs);
    d
}

/// Flips segments so that every node hangs below a checkpoint. Each flip
/// points a segment away from an already reached end, so the reached set
/// only grows.
pub fn repair_reachability(d: &mut DirectedVesselGraph, segs: &[Vec<NodeId>]) {
    loop {
        let reached = d.reachable();
        if reached.len() == d.graph.node_count() {
            return;
        }
        let mut flipped = false;
        for seg in segs {
            let n = seg.len();
            if seg.iter().all(|x| reached.contains(x)) {
                continue;
            }
            if reached.contains(&seg[0]) {
                d.orient_path(seg);
                flipped = true;
            } else if reached.contains(&seg[n - 1]) {
                let rev: Vec<NodeId> = seg.iter().rev().copied().collect();
                d.orient_path(&rev);
                flipped = true;
            }
            if flipped {
                break;
            }
        }
        if !flipped {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn node(r: f64, c: f64) -> VesselNode {
        VesselNode { pos: Point::new(r, c), likelihood: 200.0, bw_dist: 1.0, av: [0.5, 0.5] }
    }

    fn chain(g: &mut Graph<VesselNode>, from: Option<NodeId>, pts: &[(f64, f64)]) -> Vec<NodeId> {
        let mut ids = Vec::new();
        let mut prev = from;
        for &(r, c) in pts {
            let id = g.add_node(node(r, c));
            if let Some(p) = prev {
                g.add_edge(p, id);
            }
            prev = Some(id);
            ids.push(id);
        }
        ids
    }

    fn ray(start: (f64, f64), deg: f64, n: usize, step: f64) -> Vec<(f64, f64)> {
        let (s, c) = deg.to_radians().sin_cos();
        (1..=n).map(|k| (start.0 + s * step * k as f64, start.1 + c * step * k as f64)).collect()
    }

    #[test]
    fn straightness_oracle() {
        let mut g = Graph::new();
        let a = chain(&mut g, None, &[(0.0, 0.0), (0.0, 1.0), (0.0, 2.0)]);
        let b = a[2];
        let out = chain(&mut g, Some(b), &ray((0.0, 2.0), 30.0, 3, 1.0));
        let straight = chain(&mut g, Some(b), &ray((0.0, 2.0), 0.0, 3, 1.0));
        let perp = chain(&mut g, Some(b), &ray((0.0, 2.0), 90.0, 3, 1.0));
        assert!((straightness(&g, a[1], b, out[0]).unwrap() - 30.0).abs() < 1.0);
        assert!(straightness(&g, a[1], b, straight[0]).unwrap().abs() < 1e-9);
        assert!((straightness(&g, a[1], b, perp[0]).unwrap() - 90.0).abs() < 1e-9);
        assert!(straightness(&g, a[1], b, a[1]).is_err());
    }

    #[test]
    fn forward_cost_plugins() {
        assert_eq!(branch_forward_cost(0.0, 2.0), (360.0f64).exp());
        assert!((branch_forward_cost(179.0, 2.0) - 2f64.exp()).abs() < 1e-12);
        let mut last = f64::INFINITY;
        for s in 0..=180 {
            let v = branch_forward_cost(s as f64, 2.0);
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn route_prefers_straight_continuation() {
        // onh at left; a branch point with a straight path back and an 80 degree turn elsewhere
        let mut g = Graph::new();
        let trunk = chain(&mut g, None, &(0..6).map(|c| (0.0, c as f64 * 2.0)).collect::<Vec<_>>());
        let onh = trunk[0];
        let b = *trunk.last().unwrap();
        let ahead = chain(&mut g, Some(b), &ray((0.0, 10.0), 0.0, 5, 2.0));
        let side = chain(&mut g, Some(b), &ray((0.0, 10.0), 100.0, 5, 2.0));
        let cps = BTreeSet::from([onh]);
        let p = route(&g, *ahead.last().unwrap(), ahead[3], &cps);
        assert_eq!(*p.last().unwrap(), onh);
        let q = route(&g, *side.last().unwrap(), side[3], &cps);
        // from the side branch the straightest continuation is still one of the two others
        assert!(q.contains(&b));
    }

    fn binary_tree(depth: usize) -> (VesselGraph, Vec<(NodeId, NodeId)>) {
        let mut g = Graph::new();
        let onh = g.add_node(node(0.0, 0.0));
        let mut parents = vec![(onh, 0.0f64)];
        let mut truth = Vec::new();
        for level in 0..depth {
            let mut next = Vec::new();
            for &(p, ang) in &parents {
                let kids: Vec<f64> = if level == 0 { vec![ang] } else { vec![ang - 35.0, ang + 35.0] };
                for a in kids {
                    let start = g.node(p).pos;
                    let pts = ray((start.row, start.col), a, 6, 3.0);
                    let ids = chain(&mut g, Some(p), &pts);
                    truth.push((p, ids[0]));
                    for w in ids.windows(2) {
                        truth.push((w[0], w[1]));
                    }
                    next.push((*ids.last().unwrap(), a));
                }
            }
            parents = next;
        }
        (VesselGraph { graph: g, onh, refined: true }, truth)
    }

    #[test]
    fn tree_orientation_matches_bfs() {
        let (g, truth) = binary_tree(4);
        let d = assign_flow(&g);
        let want: BTreeSet<_> = truth.into_iter().collect();
        assert_eq!(d.forward, want);
        assert_eq!(d.tally.values().sum::<usize>(), d.route_calls);
        assert_eq!(d.reachable().len(), d.graph.node_count());
    }

    #[test]
    fn two_components_get_own_checkpoints() {
        let mut g = Graph::new();
        let a = chain(&mut g, None, &(0..8).map(|c| (0.0, c as f64)).collect::<Vec<_>>());
        let b = chain(&mut g, None, &(20..30).map(|c| (0.0, c as f64)).collect::<Vec<_>>());
        let vg = VesselGraph { graph: g, onh: a[0], refined: true };
        let d = assign_flow(&vg);
        assert_eq!(d.checkpoints, BTreeSet::from([a[0], b[0]]));
        for w in b.windows(2) {
            assert!(d.is_forward(w[0], w[1]));
        }
        for w in a.windows(2) {
            assert!(d.is_forward(w[0], w[1]));
        }
        assert_eq!(d.tally.values().sum::<usize>(), d.route_calls);
        assert_eq!(d.tally[&a[0]], 1);
    }
}
