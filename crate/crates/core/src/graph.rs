//! Undirected graph storage with stable node ids, plus deterministic
//! shortest-path and component utilities.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::grid::Pixel;

pub type NodeId = usize;

/// Sub-pixel position.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub row: f64,
    pub col: f64,
}

impl Point {
    pub fn new(row: f64, col: f64) -> Self {
        Self { row, col }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        ((self.row - other.row).powi(2) + (self.col - other.col).powi(2)).sqrt()
    }

    pub fn sub(&self, other: &Point) -> Point {
        Point::new(self.row - other.row, self.col - other.col)
    }

    pub fn add(&self, other: &Point) -> Point {
        Point::new(self.row + other.row, self.col + other.col)
    }

    pub fn scale(&self, s: f64) -> Point {
        Point::new(self.row * s, self.col * s)
    }

    pub fn norm(&self) -> f64 {
        (self.row * self.row + self.col * self.col).sqrt()
    }

    pub fn unit(&self) -> Point {
        let n = self.norm();
        if n == 0.0 {
            *self
        } else {
            self.scale(1.0 / n)
        }
    }

    pub fn dot(&self, other: &Point) -> f64 {
        self.row * other.row + self.col * other.col
    }

    /// Nearest pixel, clamped at zero.
    pub fn pixel(&self) -> Pixel {
        Pixel { row: self.row.round().max(0.0) as u32, col: self.col.round().max(0.0) as u32 }
    }

    /// Total order by (row, col) used for lexicographic tie-breaks.
    pub fn lex_cmp(&self, other: &Point) -> Ordering {
        self.row.total_cmp(&other.row).then(self.col.total_cmp(&other.col))
    }
}

impl From<Pixel> for Point {
    fn from(p: Pixel) -> Self {
        Point::new(p.row as f64, p.col as f64)
    }
}

/// Angle in degrees in [0, 180] between two vectors; 90 when either is zero.
pub fn angle_between(u: &Point, v: &Point) -> f64 {
    let nu = u.norm();
    let nv = v.norm();
    if nu == 0.0 || nv == 0.0 {
        return 90.0;
    }
    let c = (u.dot(v) / (nu * nv)).clamp(-1.0, 1.0);
    c.acos().to_degrees()
}

/// Undirected simple graph. Removing a node leaves a hole so ids stay valid.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph<N> {
    nodes: Vec<Option<N>>,
    adj: Vec<BTreeSet<NodeId>>,
    live: usize,
    edges: usize,
}

impl<N> Default for Graph<N> {
    fn default() -> Self {
        Self { nodes: Vec::new(), adj: Vec::new(), live: 0, edges: 0 }
    }
}

impl<N> Graph<N> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, data: N) -> NodeId {
        self.nodes.push(Some(data));
        self.adj.push(BTreeSet::new());
        self.live += 1;
        self.nodes.len() - 1
    }

    /// Removes a node and its incident edges. Returns the node data.
    pub fn remove_node(&mut self, id: NodeId) -> Option<N> {
        let data = self.nodes.get_mut(id)?.take()?;
        let nbrs = std::mem::take(&mut self.adj[id]);
        for n in nbrs {
            self.adj[n].remove(&id);
            self.edges -= 1;
        }
        self.live -= 1;
        Some(data)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        matches!(self.nodes.get(id), Some(Some(_)))
    }

    pub fn node(&self, id: NodeId) -> &N {
        self.nodes[id].as_ref().expect("node was removed")
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut N {
        self.nodes[id].as_mut().expect("node was removed")
    }

    pub fn try_node(&self, id: NodeId) -> Option<&N> {
        self.nodes.get(id).and_then(|n| n.as_ref())
    }

    /// Adds an undirected edge. Self-loops and duplicates are ignored.
    pub fn add_edge(&mut self, a: NodeId, b: NodeId) -> bool {
        assert!(self.contains(a) && self.contains(b), "edge endpoint missing");
        if a == b || self.adj[a].contains(&b) {
            return false;
        }
        self.adj[a].insert(b);
        self.adj[b].insert(a);
        self.edges += 1;
        true
    }

    pub fn remove_edge(&mut self, a: NodeId, b: NodeId) -> bool {
        if a < self.adj.len() && self.adj[a].remove(&b) {
            self.adj[b].remove(&a);
            self.edges -= 1;
            true
        } else {
            false
        }
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.adj.get(a).is_some_and(|s| s.contains(&b))
    }

    /// Neighbors in ascending id order.
    pub fn neighbors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adj[id].iter().copied()
    }

    pub fn neighbor_set(&self, id: NodeId) -> &BTreeSet<NodeId> {
        &self.adj[id]
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.adj[id].len()
    }

    /// Live node ids in ascending order.
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().enumerate().filter(|(_, n)| n.is_some()).map(|(i, _)| i)
    }

    pub fn node_count(&self) -> usize {
        self.live
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    /// Upper bound on node ids plus one.
    pub fn capacity(&self) -> usize {
        self.nodes.len()
    }

    /// Edges as (low, high) pairs in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(a, s)| s.range(a + 1..).map(move |&b| (a, b)))
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<NodeId>> {
        let mut seen = vec![false; self.capacity()];
        let mut out = Vec::new();
        for s in self.node_ids() {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut stack = vec![s];
            while let Some(u) = stack.pop() {
                for v in self.neighbors(u) {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                        stack.push(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn component_count(&self) -> usize {
        self.components().len()
    }

    /// Hop distances from `src` (usize::MAX when unreachable).
    pub fn bfs_hops(&self, src: NodeId) -> Vec<usize> {
        let mut d = vec![usize::MAX; self.capacity()];
        d[src] = 0;
        let mut q = VecDeque::from([src]);
        while let Some(u) = q.pop_front() {
            for v in self.neighbors(u) {
                if d[v] == usize::MAX {
                    d[v] = d[u] + 1;
                    q.push_back(v);
                }
            }
        }
        d
    }

    /// All nodes within `k` hops of any seed.
    pub fn k_hop_ball(&self, seeds: impl IntoIterator<Item = NodeId>, k: usize) -> BTreeSet<NodeId> {
        let mut out: BTreeSet<NodeId> = BTreeSet::new();
        let mut frontier: Vec<NodeId> = Vec::new();
        for s in seeds {
            if out.insert(s) {
                frontier.push(s);
            }
        }
        for _ in 0..k {
            let mut next = Vec::new();
            for u in frontier {
                for v in self.neighbors(u) {
                    if out.insert(v) {
                        next.push(v);
                    }
                }
            }
            frontier = next;
        }
        out
    }

    /// Shortest paths from `src` with the given edge weight.
    pub fn dijkstra(
        &self,
        src: NodeId,
        target: Option<NodeId>,
        weight: impl Fn(NodeId, NodeId) -> f64,
    ) -> ShortestPaths {
        dijkstra(self.capacity(), src, target, |u, visit| {
            for v in self.neighbors(u) {
                visit(v, weight(u, v));
            }
        })
    }
}

impl<N: Clone> Graph<N> {
    /// Copy keeping only `keep`; ids are preserved.
    pub fn induced(&self, keep: &BTreeSet<NodeId>) -> Graph<N> {
        let mut g = Graph {
            nodes: vec![None; self.capacity()],
            adj: vec![BTreeSet::new(); self.capacity()],
            live: 0,
            edges: 0,
        };
        for &id in keep {
            if self.contains(id) {
                g.nodes[id] = self.nodes[id].clone();
                g.live += 1;
            }
        }
        for (a, b) in self.edges() {
            if g.contains(a) && g.contains(b) {
                g.add_edge(a, b);
            }
        }
        g
    }

    /// Same id space with no nodes.
    pub fn empty_like(&self) -> Graph<N> {
        Graph {
            nodes: vec![None; self.capacity()],
            adj: vec![BTreeSet::new(); self.capacity()],
            live: 0,
            edges: 0,
        }
    }

    /// Inserts a node copied from `src` at the same id, if absent.
    pub fn insert_from(&mut self, src: &Graph<N>, id: NodeId) {
        if self.nodes.len() < src.capacity() {
            self.nodes.resize(src.capacity(), None);
            self.adj.resize(src.capacity(), BTreeSet::new());
        }
        if self.nodes[id].is_none() {
            self.nodes[id] = Some(src.node(id).clone());
            self.live += 1;
        }
    }

    /// Renumbers live nodes densely in id order. Returns the new graph and
    /// the old-to-new map.
    pub fn compact(&self) -> (Graph<N>, Vec<Option<NodeId>>) {
        let mut map = vec![None; self.capacity()];
        let mut g = Graph::new();
        for id in self.node_ids() {
            map[id] = Some(g.add_node(self.node(id).clone()));
        }
        for (a, b) in self.edges() {
            g.add_edge(map[a].unwrap(), map[b].unwrap());
        }
        (g, map)
    }
}

/// Result of a single-source shortest path search.
#[derive(Debug, Clone)]
pub struct ShortestPaths {
    pub src: NodeId,
    pub dist: Vec<f64>,
    pub pred: Vec<Option<NodeId>>,
}

impl ShortestPaths {
    pub fn reached(&self, t: NodeId) -> bool {
        self.dist[t].is_finite()
    }

    /// Node sequence from the source to `t`.
    pub fn path_to(&self, t: NodeId) -> Option<Vec<NodeId>> {
        if !self.reached(t) {
            return None;
        }
        let mut path = vec![t];
        let mut cur = t;
        while cur != self.src {
            cur = self.pred[cur]?;
            path.push(cur);
        }
        path.reverse();
        Some(path)
    }
}

#[derive(PartialEq)]
struct HeapItem(f64, NodeId);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    // min-heap on (dist, id)
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Dijkstra over an implicit graph.
///
/// Among equal-cost predecessors the smallest id wins, so the resulting tree
/// does not depend on exploration order or early termination. `expand` calls
/// its visitor once per (neighbor, weight); weights must be non-negative.
pub fn dijkstra<F>(capacity: usize, src: NodeId, target: Option<NodeId>, mut expand: F) -> ShortestPaths
where
    F: FnMut(NodeId, &mut dyn FnMut(NodeId, f64)),
{
    let mut dist = vec![f64::INFINITY; capacity];
    let mut pred: Vec<Option<NodeId>> = vec![None; capacity];
    let mut done = vec![false; capacity];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(HeapItem(0.0, src));
    while let Some(HeapItem(d, u)) = heap.pop() {
        if done[u] || d > dist[u] {
            continue;
        }
        done[u] = true;
        if Some(u) == target {
            break;
        }
        expand(u, &mut |v, w| {
            debug_assert!(w >= 0.0, "negative edge weight");
            if done[v] {
                return;
            }
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                pred[v] = Some(u);
                heap.push(HeapItem(nd, v));
            } else if nd == dist[v] && pred[v].is_some_and(|p| u < p) {
                pred[v] = Some(u);
            }
        });
    }
    ShortestPaths { src, dist, pred }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph(n: usize) -> Graph<()> {
        let mut g = Graph::new();
        for _ in 0..n {
            g.add_node(());
        }
        for i in 1..n {
            g.add_edge(i - 1, i);
        }
        g
    }

    #[test]
    fn remove_node_keeps_ids() {
        let mut g = path_graph(4);
        g.remove_node(1);
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.components(), vec![vec![0], vec![2, 3]]);
        let (c, map) = g.compact();
        assert_eq!(c.node_count(), 3);
        assert_eq!(map[3], Some(2));
    }

    #[test]
    fn dijkstra_prefers_smaller_predecessor_on_ties() {
        // square 0-1-3, 0-2-3: both routes cost 2
        let mut g: Graph<()> = Graph::new();
        for _ in 0..4 {
            g.add_node(());
        }
        g.add_edge(0, 1);
        g.add_edge(0, 2);
        g.add_edge(1, 3);
        g.add_edge(2, 3);
        let sp = g.dijkstra(0, None, |_, _| 1.0);
        assert_eq!(sp.path_to(3).unwrap(), vec![0, 1, 3]);
        let early = g.dijkstra(0, Some(3), |_, _| 1.0);
        assert_eq!(early.path_to(3).unwrap(), vec![0, 1, 3]);
    }

    #[test]
    fn k_hop_ball_grows_by_hops() {
        let g = path_graph(10);
        let b = g.k_hop_ball([5], 2);
        assert_eq!(b.into_iter().collect::<Vec<_>>(), vec![3, 4, 5, 6, 7]);
    }

    #[test]
    fn angle_between_vectors() {
        assert!((angle_between(&Point::new(0.0, 1.0), &Point::new(1.0, 0.0)) - 90.0).abs() < 1e-12);
        assert!((angle_between(&Point::new(0.0, 1.0), &Point::new(0.0, -2.0)) - 180.0).abs() < 1e-12);
    }
}
