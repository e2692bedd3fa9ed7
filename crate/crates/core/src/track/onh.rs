//! Optic nerve head localisation by path frequency.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{edge_weight, EdgeWeightParams};
use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::skeleton::UnionGraph;

/// The node lying on most shortest paths between random end-node pairs.
///
/// Ties go to the larger distance-to-background, then to pixel order.
pub fn detect_onh(g: &UnionGraph, params: &EdgeWeightParams, pairs: usize, seed: u64) -> Result<NodeId> {
    let ends: Vec<NodeId> = g.node_ids().filter(|&n| g.degree(n) == 1).collect();
    if ends.len() < 2 {
        return Err(Error::DegenerateGraph(format!("{} end nodes, need at least 2", ends.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_src: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for _ in 0..pairs {
        let i = rng.gen_range(0..ends.len());
        let mut j = rng.gen_range(0..ends.len() - 1);
        if j >= i {
            j += 1;
        }
        by_src.entry(ends[i]).or_default().push(ends[j]);
    }
    let work: Vec<(NodeId, Vec<NodeId>)> = by_src.into_iter().collect();
    let partial: Vec<Vec<NodeId>> = work
        .par_iter()
        .map(|(src, targets)| {
            let sp = g.dijkstra(*src, None, |a, b| edge_weight(g.node(a), g.node(b), params));
            let mut hits = Vec::new();
            for &t in targets {
                if let Some(path) = sp.path_to(t) {
                    hits.extend(path);
                }
            }
            hits
        })
        .collect();
    let mut count = vec![0usize; g.capacity()];
    for hits in partial {
        for n in hits {
            count[n] += 1;
        }
    }
    let best = g
        .node_ids()
        .max_by(|&a, &b| {
            count[a]
                .cmp(&count[b])
                .then(g.node(a).bw_dist.total_cmp(&g.node(b).bw_dist))
                .then(g.node(b).pixel.cmp(&g.node(a).pixel))
        })
        .expect("graph has end nodes");
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, Lab};
    use crate::skeleton::build_union_graph;

    fn star() -> UnionGraph {
        // plus-shaped skeleton; the contracted hub should win
        let n = 21;
        let m = Grid::from_fn(n, n, |r, c| r == 10 || c == 10);
        let bw = Grid::from_fn(n, n, |r, c| if r == 10 && c == 10 { 3.0 } else { 1.0 });
        let g = build_union_graph(&m, &Grid::filled(n, n, 250u8), &Grid::filled(n, n, Lab::default()), &bw).unwrap();
        crate::contract::contract(&g, &Default::default())
    }

    #[test]
    fn center_of_star() {
        let g = star();
        let onh = detect_onh(&g, &EdgeWeightParams::default(), 250, 1).unwrap();
        let hubs: Vec<NodeId> = g.node_ids().filter(|&n| g.degree(n) > 2).collect();
        assert_eq!(hubs, vec![onh]);
    }

    #[test]
    fn single_path_picks_widest() {
        let m = Grid::from_fn(9, 1, |_, _| true);
        let bw = Grid::from_fn(9, 1, |_, c| if c == 6 { 2.0 } else { 1.0 });
        let g = build_union_graph(&m, &Grid::filled(9, 1, 200u8), &Grid::filled(9, 1, Lab::default()), &bw).unwrap();
        let onh = detect_onh(&g, &EdgeWeightParams::default(), 50, 9).unwrap();
        assert_eq!(g.node(onh).pixel.col, 6);
    }

    #[test]
    fn too_few_ends() {
        let m = Grid::from_fn(2, 2, |_, _| true);
        let g = build_union_graph(&m, &Grid::filled(2, 2, 200u8), &Grid::filled(2, 2, Lab::default()), &Grid::filled(2, 2, 1.0))
            .unwrap();
        assert!(matches!(detect_onh(&g, &EdgeWeightParams::default(), 10, 0), Err(Error::DegenerateGraph(_))));
    }
}
