//! Label rendering and precision/recall/F1 at node, vessel-pixel and image level.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::flow::DirectedVesselGraph;
use crate::graph::{NodeId, Point};
use crate::grid::{check_same_dims, AvLabel, AvPriorGrid, BinaryGrid, Grid};
use crate::spatial::PointIndex;

/// Distance within which an off-vessel node is matched to a labeled pixel.
pub const NODE_SNAP_RADIUS: f64 = 2.0;

/// Hard label of a node; ties go to artery.
pub fn node_label(av: [f64; 2]) -> AvLabel {
    if av[1] > av[0] {
        AvLabel::Vein
    } else {
        AvLabel::Artery
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    G,
    Iseg,
    Seg,
}

impl Level {
    pub fn name(self) -> &'static str {
        match self {
            Level::G => "g",
            Level::Iseg => "iseg",
            Level::Seg => "seg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub label: AvLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub level: Level,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when there was nothing to score; the metrics are then 0.
    pub undefined: bool,
    /// counts[truth][pred] over (background, artery, vein).
    pub confusion: [[u64; 3]; 3],
    pub per_class: Vec<ClassStats>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p == r {
        p
    } else if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn class_stats(c: &[[u64; 3]; 3], classes: &[AvLabel]) -> Vec<ClassStats> {
    let total: u64 = classes.iter().flat_map(|t| classes.iter().map(move |p| c[t.index()][p.index()])).sum();
    classes
        .iter()
        .map(|&k| {
            let i = k.index();
            let tp = c[i][i];
            let pred: u64 = classes.iter().map(|t| c[t.index()][i]).sum();
            let truth: u64 = classes.iter().map(|p| c[i][p.index()]).sum();
            let tn = total + tp - pred - truth;
            let precision = ratio(tp, pred);
            let recall = ratio(tp, truth);
            ClassStats {
                label: k,
                precision,
                recall,
                f1: harmonic(precision, recall),
                sensitivity: recall,
                specificity: ratio(tn, total - truth),
            }
        })
        .collect()
}

/// Macro average over artery and vein.
pub fn macro_report(level: Level, confusion: [[u64; 3]; 3]) -> MetricsReport {
    let classes = [AvLabel::Artery, AvLabel::Vein];
    let per_class = class_stats(&confusion, &classes);
    let support: u64 = classes.iter().flat_map(|t| classes.iter().map(move |p| confusion[t.index()][p.index()])).sum();
    let k = per_class.len() as f64;
    MetricsReport {
        level,
        precision: per_class.iter().map(|s| s.precision).sum::<f64>() / k,
        recall: per_class.iter().map(|s| s.recall).sum::<f64>() / k,
        f1: per_class.iter().map(|s| s.f1).sum::<f64>() / k,
        support,
        undefined: support == 0,
        confusion,
        per_class,
    }
}

/// Micro average over background, artery and vein.
pub fn micro_report(level: Level, confusion: [[u64; 3]; 3]) -> MetricsReport {
    let classes = [AvLabel::Background, AvLabel::Artery, AvLabel::Vein];
    let tp: u64 = (0..3).map(|i| confusion[i][i]).sum();
    let total: u64 = confusion.iter().flatten().sum();
    // every pixel is one prediction and one truth, so both denominators are the total
    let fp_den: u64 = (0..3).map(|p| (0..3).map(|t| confusion[t][p]).sum::<u64>()).sum();
    let fn_den: u64 = (0..3).map(|t| (0..3).map(|p| confusion[t][p]).sum::<u64>()).sum();
    let precision = ratio(tp, fp_den);
    let recall = ratio(tp, fn_den);
    MetricsReport {
        level,
        precision,
        recall,
        f1: harmonic(precision, recall),
        support: total,
        undefined: total == 0,
        confusion,
        per_class: class_stats(&confusion, &classes),
    }
}

/// Labels each mask pixel with the hard label of the nearest node.
/// Equidistant nodes resolve by position, then id.
pub fn render_mask(g: &DirectedVesselGraph, seg_mask: &BinaryGrid) -> AvPriorGrid {
    let (w, h) = seg_mask.dims();
    if g.graph.node_count() == 0 {
        log::warn!("rendering an empty graph; mask is all background");
        return AvPriorGrid::from_labels(&Grid::filled(w, h, AvLabel::Background));
    }
    let index = PointIndex::from_points(8.0, g.graph.node_ids().map(|n| (g.pos(n), n)));
    let rows: Vec<Vec<AvLabel>> = (0..h)
        .into_par_iter()
        .map(|r| {
            (0..w)
                .map(|c| {
                    if !*seg_mask.get(r, c) {
                        return AvLabel::Background;
                    }
                    let (n, _) = index.nearest(&Point::new(r as f64, c as f64)).unwrap();
                    node_label(g.graph.node(n).av)
                })
                .collect()
        })
        .collect();
    let labels = Grid::from_vec(w, h, rows.into_iter().flatten().collect()).expect("row lengths match");
    AvPriorGrid::from_labels(&labels)
}

// Ground-truth label for a node: the pixel under it, or the nearest labeled
// pixel within the snap radius.
fn gt_label_near(gt: &Grid<AvLabel>, p: Point) -> Option<AvLabel> {
    let (w, h) = gt.dims();
    let (r0, c0) = (p.row.round() as i64, p.col.round() as i64);
    let rad = NODE_SNAP_RADIUS.ceil() as i64;
    let mut best: Option<(f64, i64, i64, AvLabel)> = None;
    for r in r0 - rad..=r0 + rad {
        for c in c0 - rad..=c0 + rad {
            if r < 0 || c < 0 || r >= h as i64 || c >= w as i64 {
                continue;
            }
            let l = *gt.get(r as usize, c as usize);
            if !l.is_vessel() {
                continue;
            }
            let d = ((r - r0).pow(2) as f64 + (c - c0).pow(2) as f64).sqrt();
            if d > NODE_SNAP_RADIUS {
                continue;
            }
            if best.is_none_or(|b| (d, r, c) < (b.0, b.1, b.2)) {
                best = Some((d, r, c, l));
            }
        }
    }
    best.map(|b| b.3)
}

/// Node-level scores: each node's hard label against the ground truth at
/// its position. Nodes with no labeled pixel nearby are skipped.
pub fn node_metrics(g: &DirectedVesselGraph, av_gt: &AvPriorGrid) -> MetricsReport {
    let gt = av_gt.labels();
    let mut c = [[0u64; 3]; 3];
    for n in g.graph.node_ids() {
        if let Some(t) = gt_label_near(&gt, g.pos(n)) {
            let p = node_label(g.graph.node(n).av);
            c[t.index()][p.index()] += 1;
        }
    }
    macro_report(Level::G, c)
}

/// Labeled nodes with their ground truth, for per-node inspection.
pub fn node_matches(g: &DirectedVesselGraph, av_gt: &AvPriorGrid) -> Vec<(NodeId, AvLabel, AvLabel)> {
    let gt = av_gt.labels();
    g.graph
        .node_ids()
        .filter_map(|n| gt_label_near(&gt, g.pos(n)).map(|t| (n, t, node_label(g.graph.node(n).av))))
        .collect()
}

/// Artery/vein scores on pixels that are vessel in both the prediction and
/// `gt_seg` and carry a vessel label in the ground truth.
pub fn iseg_metrics(pred: &AvPriorGrid, gt: &AvPriorGrid, gt_seg: &BinaryGrid) -> Result<MetricsReport> {
    check_same_dims(&[("prediction", pred.dims()), ("ground truth", gt.dims()), ("ground-truth mask", gt_seg.dims())])?;
    let (pl, gl) = (pred.labels(), gt.labels());
    let mut c = [[0u64; 3]; 3];
    for ((p, t), &s) in pl.data().iter().zip(gl.data()).zip(gt_seg.data()) {
        if s && p.is_vessel() && t.is_vessel() {
            c[t.index()][p.index()] += 1;
        }
    }
    Ok(macro_report(Level::Iseg, c))
}

/// Three-class micro scores over every pixel.
pub fn seg_metrics(pred: &AvPriorGrid, gt: &AvPriorGrid) -> Result<MetricsReport> {
    check_same_dims(&[("prediction", pred.dims()), ("ground truth", gt.dims())])?;
    let mut c = [[0u64; 3]; 3];
    for (p, t) in pred.labels().data().iter().zip(gt.labels().data()) {
        c[t.index()][p.index()] += 1;
    }
    Ok(micro_report(Level::Seg, c))
}

/// Aligned text table, one row per report.
pub fn format_table(reports: &[MetricsReport]) -> String {
    let mut s = format!("{:<6} {:>9} {:>9} {:>9} {:>9}\n", "level", "P", "R", "F1", "support");
    for r in reports {
        s.push_str(&format!(
            "{:<6} {:>9.4} {:>9.4} {:>9.4} {:>9}{}\n",
            r.level.name(),
            r.precision,
            r.recall,
            r.f1,
            r.support,
            if r.undefined { "  (no support)" } else { "" }
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topo::hlo_tests::Builder;
    use crate::topo::tests::{A, V};
    use proptest::prelude::*;

    const AA: usize = 1;
    const VV: usize = 2;

    #[test]
    fn macro_precision_oracle() {
        let mut c = [[0u64; 3]; 3];
        c[AA][AA] = 8;
        c[AA][VV] = 2;
        c[VV][VV] = 9;
        c[VV][AA] = 1;
        let r = macro_report(Level::G, c);
        assert!((r.precision - (8.0 / 9.0 + 9.0 / 11.0) / 2.0).abs() < 1e-12);
        assert!((r.recall - (0.8 + 0.9) / 2.0).abs() < 1e-12);
        let f = |p: f64, r: f64| 2.0 * p * r / (p + r);
        assert!((r.f1 - (f(8.0 / 9.0, 0.8) + f(9.0 / 11.0, 0.9)) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_report_is_flagged() {
        let r = macro_report(Level::G, [[0; 3]; 3]);
        assert!(r.undefined);
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
    }

    fn labels(w: usize, h: usize, v: &[u8]) -> AvPriorGrid {
        AvPriorGrid::from_labels(&Grid::from_vec(w, h, v.iter().map(|&x| AvLabel::from_index(x as usize)).collect()).unwrap())
    }

    #[test]
    fn seg_counting_oracle() {
        let truth: Vec<u8> = (0..100).map(|i| (i % 3) as u8).collect();
        let mut pred = truth.clone();
        for i in [3, 50, 77] {
            pred[i] = (pred[i] + 1) % 3;
        }
        let r = seg_metrics(&labels(10, 10, &pred), &labels(10, 10, &truth)).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.97, 0.97, 0.97));
    }

    #[test]
    fn iseg_flip_oracle() {
        let truth: Vec<u8> = vec![1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 0, 0];
        let mut pred = truth.clone();
        pred[0] = 2;
        let seg = Grid::from_vec(12, 1, truth.iter().map(|&x| x != 0).collect()).unwrap();
        let r = iseg_metrics(&labels(12, 1, &pred), &labels(12, 1, &truth), &seg).unwrap();
        assert_eq!(r.support, 10);
        assert!((r.precision - (1.0 + 5.0 / 6.0) / 2.0).abs() < 1e-12);
        assert!((r.recall - (0.8 + 1.0) / 2.0).abs() < 1e-12);
        let disjoint = Grid::filled(12, 1, false);
        assert!(iseg_metrics(&labels(12, 1, &pred), &labels(12, 1, &truth), &disjoint).unwrap().undefined);
    }

    #[test]
    fn render_ties_and_bisector() {
        let mut b = Builder::new();
        let a = b.node(0.0, 0.0, A);
        b.node(0.0, 10.0, V);
        let g = b.build(a);
        let mask = Grid::from_fn(11, 1, |_, _| true);
        let out = render_mask(&g, &mask).labels();
        for c in 0..11 {
            let want = if c <= 5 { AvLabel::Artery } else { AvLabel::Vein };
            assert_eq!(*out.get(0, c), want, "col {c}");
        }
        let mut bg = Grid::filled(11, 1, false);
        bg.set(0, 2, true);
        assert_eq!(*render_mask(&g, &bg).labels().get(0, 3), AvLabel::Background);
    }

    #[test]
    fn node_snapping() {
        let mut b = Builder::new();
        let on = b.node(1.0, 1.0, A);
        let near = b.node(1.0, 4.0, V);
        let far = b.node(1.0, 9.0, A);
        let g = b.build(on);
        let gt = AvPriorGrid::from_labels(&Grid::from_fn(12, 3, |_, c| if c <= 2 { AvLabel::Artery } else { AvLabel::Background }));
        let m = node_matches(&g, &gt);
        assert_eq!(m, vec![(on, AvLabel::Artery, AvLabel::Artery), (near, AvLabel::Artery, AvLabel::Vein)]);
        let _ = far;
    }

    proptest! {
        #[test]
        fn micro_identity(v in proptest::collection::vec((0u8..3, 0u8..3), 1..200)) {
            let (p, t): (Vec<u8>, Vec<u8>) = v.into_iter().unzip();
            let n = p.len();
            let r = seg_metrics(&labels(n, 1, &p), &labels(n, 1, &t)).unwrap();
            prop_assert_eq!(r.precision, r.recall);
            prop_assert_eq!(r.recall, r.f1);
        }

        #[test]
        fn swap_swaps_precision_and_recall(v in proptest::collection::vec((1u8..3, 1u8..3), 1..100)) {
            let (p, t): (Vec<u8>, Vec<u8>) = v.into_iter().unzip();
            let n = p.len();
            let seg = Grid::filled(n, 1, true);
            let a = iseg_metrics(&labels(n, 1, &p), &labels(n, 1, &t), &seg).unwrap();
            let b = iseg_metrics(&labels(n, 1, &t), &labels(n, 1, &p), &seg).unwrap();
            for (x, y) in a.per_class.iter().zip(&b.per_class) {
                prop_assert_eq!(x.precision, y.recall);
                prop_assert_eq!(x.recall, y.precision);
            }
            prop_assert!((0.0..=1.0).contains(&a.f1));
        }
    }
}
