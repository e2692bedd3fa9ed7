//! Sampling the A/V prior onto graph nodes.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::flow::DirectedVesselGraph;
use crate::graph::{NodeId, Point};
use crate::grid::AvPriorGrid;

/// Half-width of the sampling tube in pixels.
pub const TUBE_RADIUS: f64 = 1.0;

// Pixels within the tube around a node and the first half of each incident edge.
fn sample_pixels(g: &DirectedVesselGraph, n: NodeId, w: usize, h: usize) -> BTreeSet<(usize, usize)> {
    let p = g.pos(n);
    let mut out = BTreeSet::new();
    let mut visit = |a: Point, b: Point| {
        let r0 = (a.row.min(b.row) - TUBE_RADIUS).floor().max(0.0) as i64;
        let r1 = (a.row.max(b.row) + TUBE_RADIUS).ceil().min(h as f64 - 1.0) as i64;
        let c0 = (a.col.min(b.col) - TUBE_RADIUS).floor().max(0.0) as i64;
        let c1 = (a.col.max(b.col) + TUBE_RADIUS).ceil().min(w as f64 - 1.0) as i64;
        let d = b.sub(&a);
        let len2 = d.dot(&d);
        for r in r0..=r1 {
            for c in c0..=c1 {
                let q = Point::new(r as f64, c as f64);
                let t = if len2 > 0.0 { (q.sub(&a).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
                if q.dist(&a.add(&d.scale(t))) <= TUBE_RADIUS {
                    out.insert((r as usize, c as usize));
                }
            }
        }
    };
    visit(p, p);
    for m in g.graph.neighbors(n) {
        let mid = p.add(&g.pos(m).sub(&p).scale(0.5));
        visit(p, mid);
    }
    out
}

/// Sets each node's (artery, vein) expectation from the prior mass under
/// its half of each incident edge. Nodes over no vessel mass get (0.5, 0.5).
pub fn map_av_prior(g: &DirectedVesselGraph, prior: &AvPriorGrid) -> Result<DirectedVesselGraph> {
    let (w, h) = prior.dims();
    let mut out = g.clone();
    for n in g.graph.node_ids() {
        let p = g.pos(n);
        if p.row < -0.5 || p.col < -0.5 || p.row > h as f64 - 0.5 || p.col > w as f64 - 0.5 {
            return Err(Error::Input(format!(
                "node {n} at ({:.1}, {:.1}) lies outside the {w}x{h} prior",
                p.row, p.col
            )));
        }
        let (mut sa, mut sv) = (0.0, 0.0);
        for (r, c) in sample_pixels(g, n, w, h) {
            let pr = prior.probs(r, c);
            sa += pr[1];
            sv += pr[2];
        }
        out.graph.node_mut(n).av = if sa + sv > 0.0 { [sa / (sa + sv), sv / (sa + sv)] } else { [0.5, 0.5] };
    }
    Ok(out)
}

/// Unweighted mean expectation of the given nodes; (0.5, 0.5) when empty.
pub fn segment_expectation(g: &DirectedVesselGraph, nodes: &[NodeId]) -> [f64; 2] {
    if nodes.is_empty() {
        return [0.5, 0.5];
    }
    let mut s = [0.0, 0.0];
    for &n in nodes {
        let av = g.graph.node(n).av;
        s[0] += av[0];
        s[1] += av[1];
    }
    let k = nodes.len() as f64;
    [s[0] / k, s[1] / k]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::grid::{AvLabel, Grid};
    use crate::topo::tests::vnode;
    use std::collections::BTreeMap;

    fn row_graph(cols: &[f64]) -> (DirectedVesselGraph, Vec<NodeId>) {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = cols.iter().map(|&c| g.add_node(vnode(5.0, c, [0.5, 0.5]))).collect();
        let mut fwd = BTreeSet::new();
        for w in ids.windows(2) {
            g.add_edge(w[0], w[1]);
            fwd.insert((w[0], w[1]));
        }
        let d = DirectedVesselGraph {
            graph: g,
            forward: fwd,
            onh: ids[0],
            checkpoints: BTreeSet::from([ids[0]]),
            tally: BTreeMap::new(),
            route_calls: 0,
            stop_points: BTreeSet::new(),
            refined: true,
        };
        (d, ids)
    }

    fn prior(f: impl Fn(usize) -> AvLabel) -> AvPriorGrid {
        AvPriorGrid::from_labels(&Grid::from_fn(30, 11, |r, c| if (4..=6).contains(&r) { f(c) } else { AvLabel::Background }))
    }

    #[test]
    fn all_artery_segment() {
        let (g, ids) = row_graph(&[0.0, 5.0, 10.0, 15.0, 20.0]);
        let m = map_av_prior(&g, &prior(|_| AvLabel::Artery)).unwrap();
        assert_eq!(segment_expectation(&m, &ids), [1.0, 0.0]);
    }

    #[test]
    fn half_and_half() {
        let (g, ids) = row_graph(&[0.0, 5.0, 10.0, 15.0, 20.0]);
        let m = map_av_prior(&g, &prior(|c| if c % 2 == 0 { AvLabel::Artery } else { AvLabel::Vein })).unwrap();
        let e = segment_expectation(&m, &ids[1..4]);
        assert!((e[0] - 0.5).abs() < 0.1 && (e[1] - 0.5).abs() < 0.1);
        // exact split: artery on the left half of every node's window
        let pr = AvPriorGrid::from_labels(&Grid::from_fn(30, 11, |r, _| match r {
            4 => AvLabel::Artery,
            6 => AvLabel::Vein,
            _ => AvLabel::Background,
        }));
        let m = map_av_prior(&g, &pr).unwrap();
        assert_eq!(segment_expectation(&m, &ids), [0.5, 0.5]);
    }

    #[test]
    fn counting_oracle() {
        let (g, ids) = row_graph(&[0.0, 5.0, 10.0, 15.0, 20.0]);
        let m = map_av_prior(&g, &prior(|c| if c <= 12 { AvLabel::Artery } else { AvLabel::Vein })).unwrap();
        let e = segment_expectation(&m, &ids);
        assert!((e[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn no_vessel_mass_is_neutral() {
        let (g, _) = row_graph(&[0.0, 5.0]);
        let m = map_av_prior(&g, &AvPriorGrid::from_labels(&Grid::filled(30, 11, AvLabel::Background))).unwrap();
        assert!(m.graph.node_ids().all(|n| m.graph.node(n).av == [0.5, 0.5]));
    }
}
