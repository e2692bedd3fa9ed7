//! Sink/source detection and local graph edits.

use std::cmp::Ordering;
use std::collections::{BTreeSet, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    arm_expectation, av_straightness, branch_terms, graph_cost, hard_label, propagation_score, segment_expectation,
    Cost, CostParams,
};
use crate::error::{Error, Result};
use crate::flow::{route, route_by, straightness_with, DirectedVesselGraph};
use crate::graph::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HloParams {
    /// Scale of the first path in the propagation score.
    pub z: f64,
    /// Propagation score a conflict must exceed.
    pub t_av: f64,
    /// Minimum cost drop for accepting an edit.
    pub delta: f64,
    /// Longest segment (pixels along the path) an edit may collapse.
    pub max_merge_len: f64,
    pub max_edits: usize,
}

impl Default for HloParams {
    fn default() -> Self {
        Self { z: 1.0, t_av: 0.75, delta: 3.0, max_merge_len: 15.0, max_edits: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HloKind {
    ShiftUp,
    ShiftDown,
    ReverseShiftUp,
    ReverseShiftDown,
    ShiftSourceDown,
}

impl HloKind {
    pub const SINK: [HloKind; 4] =
        [HloKind::ShiftUp, HloKind::ShiftDown, HloKind::ReverseShiftUp, HloKind::ReverseShiftDown];

    /// Number of primitive edits (reversal plus shift counts two).
    pub fn edits(self) -> usize {
        match self {
            HloKind::ReverseShiftUp | HloKind::ReverseShiftDown => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditRecord {
    pub site: NodeId,
    pub row: f64,
    pub col: f64,
    pub kind: HloKind,
    /// Surviving node the collapsed segment was merged into.
    pub merged_into: NodeId,
    pub cost_before: f64,
    pub cost_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyState {
    pub graph: DirectedVesselGraph,
    pub cost: Cost,
    pub edit_log: Vec<EditRecord>,
    /// Incumbent cost after each accepted edit, starting with the input.
    pub cost_trace: Vec<Cost>,
}

/// Path length from the ONH along edges (either direction); nodes in other
/// components get infinity.
pub fn onh_distances(g: &DirectedVesselGraph) -> Vec<f64> {
    g.graph.dijkstra(g.onh, None, |a, b| g.pos(a).dist(&g.pos(b))).dist
}

fn sort_by_onh(g: &DirectedVesselGraph, mut nodes: Vec<NodeId>) -> Vec<NodeId> {
    let d = onh_distances(g);
    let c = g.pos(g.onh);
    nodes.sort_by(|&a, &b| {
        d[a].total_cmp(&d[b]).then(g.pos(a).dist(&c).total_cmp(&g.pos(b).dist(&c))).then(a.cmp(&b))
    });
    nodes
}

// Mean expectation of the label-aware route from `b` through `n`, without `b`.
fn path_expectation(g: &DirectedVesselGraph, stops: &BTreeSet<NodeId>, b: NodeId, n: NodeId, p: &CostParams) -> [f64; 2] {
    let path = route_by(&g.graph, b, n, stops, &|into, end, j| {
        let s = straightness_with(&g.graph, stops, into, end, j).unwrap();
        av_straightness(s, arm_expectation(g, end, into), arm_expectation(g, end, j), p)
    });
    segment_expectation(g, &path[1..])
}

// Largest propagation score over neighbor pairs with different hard labels.
fn conflict_score(g: &DirectedVesselGraph, b: NodeId, nbrs: &[NodeId], p: &CostParams, hp: &HloParams) -> Option<f64> {
    let labels: Vec<_> = nbrs.iter().map(|&n| hard_label(arm_expectation(g, b, n))).collect();
    let stops = g.route_stops();
    let mut paths: Vec<Option<[f64; 2]>> = vec![None; nbrs.len()];
    let mut best: Option<f64> = None;
    for x in 0..nbrs.len() {
        for y in 0..nbrs.len() {
            let (Some(lx), Some(ly)) = (labels[x], labels[y]) else { continue };
            if x == y || lx == ly {
                continue;
            }
            for k in [x, y] {
                if paths[k].is_none() {
                    paths[k] = Some(path_expectation(g, &stops, b, nbrs[k], p));
                }
            }
            let r = propagation_score(paths[x].unwrap(), paths[y].unwrap(), hp.z);
            best = Some(best.map_or(r, |v: f64| v.max(r)));
        }
    }
    best
}

/// Nodes whose incoming segments carry different labels with propagation
/// score above `t_av`, nearest to the ONH first. Route stops are never sites.
pub fn find_sinks(g: &DirectedVesselGraph, p: &CostParams, hp: &HloParams) -> Vec<NodeId> {
    let stops = g.route_stops();
    let cand: Vec<NodeId> =
        g.graph.node_ids().filter(|&n| !stops.contains(&n) && g.in_neighbors(n).len() >= 2).collect();
    let hits: Vec<NodeId> = cand
        .par_iter()
        .copied()
        .filter(|&n| conflict_score(g, n, &g.in_neighbors(n), p, hp).is_some_and(|r| r > hp.t_av))
        .collect();
    sort_by_onh(g, hits)
}

/// Nodes whose outgoing segments carry different labels with score above
/// `t_av`, or whose outgoing sub-graphs meet downstream.
pub fn find_sources(g: &DirectedVesselGraph, p: &CostParams, hp: &HloParams) -> Vec<NodeId> {
    let stops = g.route_stops();
    let cand: Vec<NodeId> =
        g.graph.node_ids().filter(|&n| !stops.contains(&n) && g.out_neighbors(n).len() >= 2).collect();
    let hits: Vec<NodeId> = cand
        .par_iter()
        .copied()
        .filter(|&n| {
            subtrees_meet(g, n) || conflict_score(g, n, &g.out_neighbors(n), p, hp).is_some_and(|r| r > hp.t_av)
        })
        .collect();
    sort_by_onh(g, hits)
}

/// True when two out-neighbors of `b` reach a common node downstream.
pub fn subtrees_meet(g: &DirectedVesselGraph, b: NodeId) -> bool {
    let outs = g.out_neighbors(b);
    if outs.len() < 2 {
        return false;
    }
    let mut owner: std::collections::BTreeMap<NodeId, NodeId> = std::collections::BTreeMap::new();
    for &o in &outs {
        let mut seen = BTreeSet::from([o]);
        let mut q = VecDeque::from([o]);
        while let Some(x) = q.pop_front() {
            if let Some(&prev) = owner.get(&x) {
                if prev != o {
                    return true;
                }
            }
            owner.insert(x, o);
            for y in g.out_neighbors(x) {
                if y != b && seen.insert(y) {
                    q.push_back(y);
                }
            }
        }
    }
    false
}

fn path_length(g: &DirectedVesselGraph, seg: &[NodeId]) -> f64 {
    seg.windows(2).map(|w| g.pos(w[0]).dist(&g.pos(w[1]))).sum()
}

// Shortest collapsible segment from `site` through one of `nbrs`.
fn pick_segment(g: &DirectedVesselGraph, site: NodeId, nbrs: &[NodeId], hp: &HloParams) -> Option<Vec<NodeId>> {
    let stops = g.route_stops();
    nbrs.iter()
        .map(|&n| g.segment_from(site, n))
        .filter(|seg| {
            let t = *seg.last().unwrap();
            t != site
                && g.graph.degree(t) >= 3
                && seg.iter().all(|x| !stops.contains(x))
                && path_length(g, seg) <= hp.max_merge_len
        })
        .min_by(|a, b| path_length(g, a).total_cmp(&path_length(g, b)).then(a[1].cmp(&b[1])))
}

fn remove_node(g: &mut DirectedVesselGraph, x: NodeId) {
    for y in g.graph.neighbors(x).collect::<Vec<_>>() {
        g.forward.remove(&(x, y));
        g.forward.remove(&(y, x));
    }
    g.graph.remove_node(x);
}

/// Merges every node of `seg` into its middle node, keeping the direction
/// of each outside edge. Returns the surviving node.
fn collapse(g: &mut DirectedVesselGraph, seg: &[NodeId]) -> NodeId {
    let m = seg[seg.len() / 2];
    let inside: BTreeSet<NodeId> = seg.iter().copied().collect();
    let mut links: Vec<(NodeId, bool)> = Vec::new();
    for &x in seg {
        for y in g.graph.neighbors(x) {
            if !inside.contains(&y) {
                links.push((y, g.is_forward(y, x)));
            }
        }
    }
    for &x in &inside {
        if x != m {
            remove_node(g, x);
        }
    }
    for (y, incoming) in links {
        if g.graph.add_edge(y, m) {
            g.forward.insert(if incoming { (y, m) } else { (m, y) });
        }
    }
    normalize_segments(g);
    m
}

/// Gives every segment a single direction, following the majority of its
/// edges (ties follow the first edge).
fn normalize_segments(g: &mut DirectedVesselGraph) {
    for seg in g.segments() {
        let fw = seg.windows(2).filter(|w| g.is_forward(w[0], w[1])).count();
        let n = seg.len() - 1;
        if fw == 0 || fw == n {
            continue;
        }
        if 2 * fw > n || (2 * fw == n && g.is_forward(seg[0], seg[1])) {
            g.orient_path(&seg);
        } else {
            let rev: Vec<NodeId> = seg.iter().rev().copied().collect();
            g.orient_path(&rev);
        }
    }
}

/// Applies one edit at `site`. Returns the edited graph and the node the
/// collapsed segment was merged into.
pub fn apply_hlo(
    g: &DirectedVesselGraph,
    site: NodeId,
    kind: HloKind,
    p: &CostParams,
    hp: &HloParams,
) -> Result<(DirectedVesselGraph, NodeId)> {
    if !g.graph.contains(site) {
        return Err(Error::MalformedSite(format!("node {site} does not exist")));
    }
    let mut out = g.clone();
    if matches!(kind, HloKind::ReverseShiftUp | HloKind::ReverseShiftDown) {
        let mut best: Option<(f64, NodeId, Vec<NodeId>)> = None;
        for i in g.in_neighbors(site) {
            let seg = g.segment_from(site, i);
            let t = *seg.last().unwrap();
            let score = if g.graph.degree(t) >= 3 && t != site { branch_terms(g, t, p).cr_pair } else { 0.0 };
            if best.as_ref().is_none_or(|b| score > b.0) {
                best = Some((score, i, seg));
            }
        }
        let Some((_, _, seg)) = best else {
            return Err(Error::MalformedSite(format!("node {site} has no incoming segment to reverse")));
        };
        out.orient_path(&seg);
    }
    let nbrs = match kind {
        HloKind::ShiftUp | HloKind::ReverseShiftUp => out.out_neighbors(site),
        HloKind::ShiftDown | HloKind::ReverseShiftDown | HloKind::ShiftSourceDown => out.in_neighbors(site),
    };
    let Some(seg) = pick_segment(&out, site, &nbrs, hp) else {
        return Err(Error::MalformedSite(format!("no collapsible segment at node {site} for {kind:?}")));
    };
    let m = collapse(&mut out, &seg);
    Ok((out, m))
}

/// Replaces the expectation along each route leaving `m` by the route mean.
pub fn propagate_from_node(g: &mut DirectedVesselGraph, m: NodeId) {
    let stops = g.route_stops();
    for n in g.graph.neighbors(m).collect::<Vec<_>>() {
        let path = route(&g.graph, m, n, &stops);
        homogenize_path(g, &path[1..], &stops);
    }
}

/// Sets every non-stop node of `path` to the mean over those nodes.
pub fn homogenize_path(g: &mut DirectedVesselGraph, path: &[NodeId], stops: &BTreeSet<NodeId>) {
    let nodes: Vec<NodeId> = path.iter().copied().filter(|n| !stops.contains(n)).collect();
    if nodes.is_empty() {
        return;
    }
    let e = segment_expectation(g, &nodes);
    for n in nodes {
        g.graph.node_mut(n).av = e;
    }
}

struct Candidate {
    cost: Cost,
    site: NodeId,
    kind: HloKind,
}

fn sites(g: &DirectedVesselGraph, p: &CostParams, hp: &HloParams) -> Vec<(NodeId, HloKind)> {
    let mut out = Vec::new();
    for s in find_sinks(g, p, hp) {
        out.extend(HloKind::SINK.iter().map(|&k| (s, k)));
    }
    for s in find_sources(g, p, hp) {
        out.push((s, HloKind::ShiftSourceDown));
    }
    out
}

fn evaluate(g: &DirectedVesselGraph, site: NodeId, kind: HloKind, p: &CostParams, hp: &HloParams) -> Option<(DirectedVesselGraph, NodeId, Cost)> {
    let (mut e, m) = apply_hlo(g, site, kind, p, hp).ok()?;
    propagate_from_node(&mut e, m);
    let c = graph_cost(&e, p);
    Some((e, m, c))
}

fn best_candidate(g: &DirectedVesselGraph, p: &CostParams, hp: &HloParams) -> Option<Candidate> {
    let cands: Vec<Candidate> = sites(g, p, hp)
        .par_iter()
        .filter_map(|&(site, kind)| evaluate(g, site, kind, p, hp).map(|(_, _, cost)| Candidate { cost, site, kind }))
        .collect();
    cands.into_iter().min_by(|a, b| {
        a.cost
            .total_cmp(&b.cost)
            .then(a.kind.edits().cmp(&b.kind.edits()))
            .then(g.pos(a.site).lex_cmp(&g.pos(b.site)))
            .then(a.site.cmp(&b.site))
            .then(a.kind.cmp(&b.kind))
    })
}

/// The single edit with the largest cost drop, if any edit applies.
pub fn best_single_edit(g: &DirectedVesselGraph, p: &CostParams, hp: &HloParams) -> Option<(NodeId, HloKind, f64)> {
    let base = graph_cost(g, p);
    best_candidate(g, p, hp).map(|c| (c.site, c.kind, c.cost.gain_over(&base)))
}

/// Greedy edit search: every round costs all edits at all current sinks
/// and sources and keeps the cheapest when it beats the incumbent by more
/// than `delta`.
pub fn optimize(g: &DirectedVesselGraph, p: &CostParams, hp: &HloParams) -> TopologyState {
    let mut cur = g.clone();
    let mut cost = graph_cost(&cur, p);
    let mut log = Vec::new();
    let mut trace = vec![cost];
    while log.len() < hp.max_edits {
        let Some(best) = best_candidate(&cur, p, hp) else { break };
        if best.cost.gain_over(&cost).partial_cmp(&hp.delta) != Some(Ordering::Greater) {
            break;
        }
        let (next, m, c) = evaluate(&cur, best.site, best.kind, p, hp).expect("candidate re-evaluates");
        let pos = cur.pos(best.site);
        log.push(EditRecord {
            site: best.site,
            row: pos.row,
            col: pos.col,
            kind: best.kind,
            merged_into: m,
            cost_before: cost.value(),
            cost_after: c.value(),
        });
        log::debug!("edit {:?} at {} ({:.1}, {:.1}): {:?} -> {:?}", best.kind, best.site, pos.row, pos.col, cost, c);
        cur = next;
        cost = c;
        trace.push(cost);
    }
    TopologyState { graph: cur, cost, edit_log: log, cost_trace: trace }
}
