//! Multi-level skeletonization and the union skeleton graph.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::grid::{
    threshold, BinaryGrid, DistanceGrid, Grid, Lab, LabGrid, LikelihoodGrid, Pixel, NEIGHBORS_8,
};

/// Descending thresholds `start, start - step, ...` strictly above `stop`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdSchedule {
    pub start: u8,
    pub stop: u8,
    pub step: u8,
}

impl Default for ThresholdSchedule {
    fn default() -> Self {
        Self { start: 255, stop: 25, step: 20 }
    }
}

impl ThresholdSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.step == 0 {
            return Err(Error::Config("threshold step must be positive".into()));
        }
        if self.start <= self.stop {
            return Err(Error::Config(format!(
                "threshold start {} must exceed stop {}",
                self.start, self.stop
            )));
        }
        Ok(())
    }

    /// Thresholds in processing order; the last one is the lowest.
    pub fn thresholds(&self) -> Vec<u8> {
        let mut out = Vec::new();
        if self.step == 0 {
            return out;
        }
        let mut t = self.start as i32;
        while t > self.stop as i32 {
            out.push(t as u8);
            t -= self.step as i32;
        }
        out
    }
}

fn ring(img: &BinaryGrid, r: usize, c: usize) -> [bool; 8] {
    let mut x = [false; 8];
    for (k, (dr, dc)) in NEIGHBORS_8.iter().enumerate() {
        x[k] = img.checked(r as i64 + dr, c as i64 + dc).copied().unwrap_or(false);
    }
    x
}

fn transitions(x: &[bool; 8]) -> usize {
    (0..8).filter(|&k| !x[k] && x[(k + 1) % 8]).count()
}

// 8-connectivity number; 1 means removing the pixel keeps local topology.
fn yokoi8(x: &[bool; 8]) -> i32 {
    let n = |k: usize| if x[k % 8] { 0 } else { 1 };
    [0usize, 2, 4, 6].iter().map(|&k| n(k) - n(k) * n(k + 1) * n(k + 2)).sum()
}

fn zs_deletable(img: &BinaryGrid, r: usize, c: usize, second: bool) -> bool {
    if !*img.get(r, c) {
        return false;
    }
    let x = ring(img, r, c);
    let b = x.iter().filter(|&&v| v).count();
    if !(2..=6).contains(&b) || transitions(&x) != 1 {
        return false;
    }
    // x[0]=N x[2]=E x[4]=S x[6]=W
    let (n, e, s, w) = (x[0], x[2], x[4], x[6]);
    if !second {
        !(n && e && s) && !(e && s && w)
    } else {
        !(n && e && w) && !(n && s && w)
    }
}

/// Zhang-Suen thinning with 8-connectivity.
///
/// Candidates of each sub-iteration are re-checked as they are removed, so
/// two-pixel-thick structures cannot vanish. A final pass strips pixels of
/// remaining 2x2 blocks where that keeps local topology.
#[must_use]
pub fn thin(mask: &BinaryGrid) -> BinaryGrid {
    let mut img = mask.clone();
    let (w, h) = img.dims();
    loop {
        let mut changed = false;
        for second in [false, true] {
            let mut cands = Vec::new();
            for r in 0..h {
                for c in 0..w {
                    if zs_deletable(&img, r, c, second) {
                        cands.push((r, c));
                    }
                }
            }
            for (r, c) in cands {
                if zs_deletable(&img, r, c, second) {
                    img.set(r, c, false);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    loop {
        let mut changed = false;
        for r in 0..h.saturating_sub(1) {
            for c in 0..w.saturating_sub(1) {
                if !(*img.get(r, c) && *img.get(r, c + 1) && *img.get(r + 1, c) && *img.get(r + 1, c + 1)) {
                    continue;
                }
                for (pr, pc) in [(r, c), (r, c + 1), (r + 1, c), (r + 1, c + 1)] {
                    let x = ring(&img, pr, pc);
                    let b = x.iter().filter(|&&v| v).count();
                    if b >= 2 && yokoi8(&x) == 1 {
                        img.set(pr, pc, false);
                        changed = true;
                        break;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    img
}

/// Skeleton of `threshold(grid, t)` for every threshold in the schedule.
pub fn skeleton_levels(grid: &LikelihoodGrid, sched: &ThresholdSchedule) -> Vec<(u8, BinaryGrid)> {
    use rayon::prelude::*;
    sched.thresholds().into_par_iter().map(|t| (t, thin(&threshold(grid, t)))).collect()
}

/// Union of per-threshold skeletons.
#[must_use]
pub fn multilevel_skeletonize(grid: &LikelihoodGrid, sched: &ThresholdSchedule) -> BinaryGrid {
    union_of(grid.dims(), &skeleton_levels(grid, sched))
}

pub fn union_of(dims: (usize, usize), levels: &[(u8, BinaryGrid)]) -> BinaryGrid {
    let mut out = Grid::filled(dims.0, dims.1, false);
    for (_, s) in levels {
        out = out.union(s);
    }
    out
}

/// True pixels with exactly one 8-neighbor.
pub fn end_pixels(skel: &BinaryGrid) -> Vec<Pixel> {
    skel.true_pixels()
        .into_iter()
        .filter(|p| ring(skel, p.row as usize, p.col as usize).iter().filter(|&&v| v).count() == 1)
        .collect()
}

/// Attributes of a skeleton pixel node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnionNode {
    pub pixel: Pixel,
    pub likelihood: u8,
    pub lab: Lab,
    pub bw_dist: f64,
}

/// One node per skeleton pixel; ids follow (row, col) order.
pub type UnionGraph = Graph<UnionNode>;

/// Builds the pixel graph of a skeleton with 8-adjacency edges.
pub fn build_union_graph(
    skel: &BinaryGrid,
    likelihood: &LikelihoodGrid,
    lab: &LabGrid,
    bw_dist: &DistanceGrid,
) -> Result<UnionGraph> {
    crate::grid::check_same_dims(&[
        ("skeleton", skel.dims()),
        ("likelihood", likelihood.dims()),
        ("lab", lab.dims()),
        ("distance", bw_dist.dims()),
    ])?;
    let mut g = Graph::new();
    let mut ids: Grid<Option<usize>> = Grid::filled(skel.width(), skel.height(), None);
    for p in skel.true_pixels() {
        let (r, c) = (p.row as usize, p.col as usize);
        let id = g.add_node(UnionNode {
            pixel: p,
            likelihood: *likelihood.get(r, c),
            lab: *lab.get(r, c),
            bw_dist: *bw_dist.get(r, c),
        });
        ids.set(r, c, Some(id));
    }
    for id in g.node_ids().collect::<Vec<_>>() {
        let p = g.node(id).pixel;
        // forward half of the neighborhood
        for (dr, dc) in [(0i64, 1i64), (1, -1), (1, 0), (1, 1)] {
            if let Some(Some(other)) = ids.checked(p.row as i64 + dr, p.col as i64 + dc) {
                g.add_edge(id, *other);
            }
        }
    }
    Ok(g)
}

/// Drops components whose bounding-box diagonal is below `d`.
pub fn filter_small_components(g: &UnionGraph, d: f64) -> UnionGraph {
    let mut out = g.clone();
    for comp in g.components() {
        let (mut r0, mut r1, mut c0, mut c1) = (u32::MAX, 0u32, u32::MAX, 0u32);
        for &id in &comp {
            let p = g.node(id).pixel;
            r0 = r0.min(p.row);
            r1 = r1.max(p.row);
            c0 = c0.min(p.col);
            c1 = c1.max(p.col);
        }
        let diag = (((r1 - r0) as f64).powi(2) + ((c1 - c0) as f64).powi(2)).sqrt();
        if diag < d {
            for id in comp {
                out.remove_node(id);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_from(rows: &[&str]) -> BinaryGrid {
        let h = rows.len();
        let w = rows[0].len();
        Grid::from_fn(w, h, |r, c| rows[r].as_bytes()[c] == b'#')
    }

    fn components8(img: &BinaryGrid) -> usize {
        let mut seen = Grid::filled(img.width(), img.height(), false);
        let mut n = 0;
        for p in img.true_pixels() {
            let (r, c) = (p.row as usize, p.col as usize);
            if *seen.get(r, c) {
                continue;
            }
            n += 1;
            let mut stack = vec![(r, c)];
            seen.set(r, c, true);
            while let Some((r, c)) = stack.pop() {
                for (dr, dc) in NEIGHBORS_8 {
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    if img.checked(rr, cc) == Some(&true) && !*seen.get(rr as usize, cc as usize) {
                        seen.set(rr as usize, cc as usize, true);
                        stack.push((rr as usize, cc as usize));
                    }
                }
            }
        }
        n
    }

    // Textbook parallel Zhang-Suen, used as a reference.
    fn reference_zs(mask: &BinaryGrid) -> BinaryGrid {
        let mut img = mask.clone();
        loop {
            let mut changed = false;
            for second in [false, true] {
                let del: Vec<(usize, usize)> = (0..img.height())
                    .flat_map(|r| (0..img.width()).map(move |c| (r, c)))
                    .filter(|&(r, c)| zs_deletable(&img, r, c, second))
                    .collect();
                changed |= !del.is_empty();
                for (r, c) in del {
                    img.set(r, c, false);
                }
            }
            if !changed {
                return img;
            }
        }
    }

    #[test]
    fn schedule_excludes_stop() {
        let s = ThresholdSchedule::default();
        let t = s.thresholds();
        assert_eq!(t.first(), Some(&255));
        assert_eq!(t.last(), Some(&35));
        assert_eq!(t.len(), 12);
        assert!(ThresholdSchedule { start: 10, stop: 20, step: 5 }.validate().is_err());
        assert!(ThresholdSchedule { start: 30, stop: 20, step: 0 }.validate().is_err());
    }

    #[test]
    fn rectangle_thins_to_centerline() {
        let m = Grid::from_fn(26, 11, |r, c| (3..8).contains(&r) && (3..23).contains(&c));
        let s = thin(&m);
        let reference = reference_zs(&m).true_pixels();
        let px = s.true_pixels();
        assert!(px.iter().all(|p| p.row == 5), "{px:?}");
        assert!(reference.iter().all(|p| p.row == 5));
        assert!(reference.iter().all(|p| px.contains(p)));
        assert!((16..=20).contains(&px.len()), "{}", px.len());
    }

    #[test]
    fn two_by_two_block_survives() {
        let m = grid_from(&["....", ".##.", ".##.", "...."]);
        let s = thin(&m);
        assert!(s.count_true() >= 1);
        assert_eq!(components8(&s), 1);
    }

    #[test]
    fn thin_keeps_single_pixel_lines() {
        let m = grid_from(&["#......", ".#.....", "..#####"]);
        assert_eq!(thin(&m), m);
    }

    #[test]
    fn union_graph_of_block() {
        let m = grid_from(&["##", "##"]);
        let l = Grid::filled(2, 2, 200u8);
        let lab = Grid::filled(2, 2, Lab::default());
        let d = Grid::filled(2, 2, 1.0);
        let g = build_union_graph(&m, &l, &lab, &d).unwrap();
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.edge_count(), 6);
        assert_eq!(g.node(0).pixel, Pixel::new(0, 0));
    }

    #[test]
    fn small_components_are_dropped() {
        let mut rows = vec![String::from("#.............")];
        rows.push(".#............".into());
        rows.push("..............".into());
        rows.push("##############".into());
        let refs: Vec<&str> = rows.iter().map(|s| s.as_str()).collect();
        let m = grid_from(&refs);
        let (w, h) = m.dims();
        let g = build_union_graph(
            &m,
            &Grid::filled(w, h, 1u8),
            &Grid::filled(w, h, Lab::default()),
            &Grid::filled(w, h, 1.0),
        )
        .unwrap();
        let f = filter_small_components(&g, 10.0);
        assert_eq!(f.node_count(), 14);
        assert_eq!(f.component_count(), 1);
    }

    #[test]
    fn end_pixels_of_line() {
        let m = grid_from(&["#####"]);
        assert_eq!(end_pixels(&m), vec![Pixel::new(0, 0), Pixel::new(0, 4)]);
    }

    pub(crate) fn random_blob(seed: u64, w: usize, h: usize) -> BinaryGrid {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut m = Grid::filled(w, h, false);
        for _ in 0..rng.gen_range(1..5) {
            let (r0, c0) = (rng.gen_range(0..h), rng.gen_range(0..w));
            let (r1, c1) = (rng.gen_range(0..h), rng.gen_range(0..w));
            let rad = rng.gen_range(0.5..3.0f64);
            for r in 0..h {
                for c in 0..w {
                    let (pr, pc) = (r as f64, c as f64);
                    let (ar, ac) = (r0 as f64, c0 as f64);
                    let (br, bc) = (r1 as f64 - ar, c1 as f64 - ac);
                    let l2 = br * br + bc * bc;
                    let t = if l2 == 0.0 { 0.0 } else { (((pr - ar) * br + (pc - ac) * bc) / l2).clamp(0.0, 1.0) };
                    let d = ((pr - ar - t * br).powi(2) + (pc - ac - t * bc).powi(2)).sqrt();
                    if d <= rad {
                        m.set(r, c, true);
                    }
                }
            }
        }
        m
    }

    proptest::proptest! {
        #[test]
        fn thin_is_subset_and_keeps_components(seed in 0u64..10_000) {
            let m = random_blob(seed, 24, 24);
            let s = thin(&m);
            for (a, b) in s.data().iter().zip(m.data()) {
                proptest::prop_assert!(!*a || *b);
            }
            proptest::prop_assert_eq!(components8(&s), components8(&m));
            for r in 0..23 {
                for c in 0..23 {
                    let block = *s.get(r, c) && *s.get(r, c + 1) && *s.get(r + 1, c) && *s.get(r + 1, c + 1);
                    proptest::prop_assert!(!block, "2x2 block at {},{}", r, c);
                }
            }
        }
    }
}
