//! Artery/vein topology cost and graph edits.

mod hlo;
mod map;

pub use hlo::{
    apply_hlo, best_single_edit, find_sinks, find_sources, homogenize_path, onh_distances, optimize, propagate_from_node,
    subtrees_meet, EditRecord, HloKind, HloParams, TopologyState,
};
#[cfg(test)]
pub(crate) use hlo::tests as hlo_tests;
pub use map::{map_av_prior, segment_expectation};

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::flow::{straightness_with, DirectedVesselGraph};
use crate::graph::NodeId;

/// Weights of the four cost terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub a_th: f64,
    pub a_ce: f64,
    pub cr_div: f64,
    pub eps: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self { a1: 1.0, a2: 1.0, a3: 0.5, a4: 0.5, a_th: 0.2, a_ce: 0.8, cr_div: 1.9, eps: 1e-6 }
    }
}

/// Probability clamp used by the cross-entropy.
pub const PROB_CLAMP: f64 = 1e-6;

/// Hard label of an (artery, vein) expectation; `None` on an exact tie.
pub fn hard_label(e: [f64; 2]) -> Option<Label> {
    match e[0].total_cmp(&e[1]) {
        Ordering::Greater => Some(Label::Artery),
        Ordering::Less => Some(Label::Vein),
        Ordering::Equal => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Artery,
    Vein,
}

/// Crossing pairing cost from the artery and vein segment counts.
pub fn cr_pair(degree: usize, arteries: usize, veins: usize, p: &CostParams) -> f64 {
    let (a, v) = (arteries as f64, veins as f64);
    let c = if degree == 3 { 3.0 - a.max(v) } else { (a - v).abs() / p.cr_div };
    p.a1 * c
}

/// Label ambiguity cost of one expectation.
pub fn cr_prob(e_a: f64, e_v: f64, p: &CostParams) -> f64 {
    p.a2 * (1.0 - (e_a - e_v).abs())
}

/// Branchness from directed degrees and the widest turning angle among
/// in-neighbor and out-neighbor pairs (only used when that degree is >= 2).
pub fn branchness(d_in: usize, d_out: usize, max_in_angle: f64, max_out_angle: f64, p: &CostParams) -> f64 {
    let mut gc = vec![p.eps];
    if d_in >= 2 {
        gc.push(max_in_angle / 360.0);
    }
    if d_out >= 2 {
        gc.push(max_out_angle / 360.0);
    }
    let ratio = d_in as f64 / (d_out as f64 + p.eps);
    p.a3 * (ratio * ratio + gc.iter().sum::<f64>() / gc.len() as f64)
}

/// Cross-entropy of `q` under `p` with both clamped away from 0 and 1.
pub fn cross_entropy(p: [f64; 2], q: [f64; 2]) -> f64 {
    let c = |x: f64| x.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(c(p[0]) * c(q[0]).ln() + c(p[1]) * c(q[1]).ln())
}

/// Label-aware forward measure for a turn of `s_theta` degrees between
/// segments with expectations `e_in` and `e_out`.
pub fn av_straightness(s_theta: f64, e_in: [f64; 2], e_out: [f64; 2], p: &CostParams) -> f64 {
    (p.a_th * s_theta.ln_1p() + p.a_ce * cross_entropy(e_in, e_out).ln_1p()).exp()
}

/// Confidence that two paths carry different labels; in [0.5, 1].
pub fn propagation_score(v1: [f64; 2], v2: [f64; 2], z: f64) -> f64 {
    let ma = z * v1[0] + 1.0 - v2[0];
    let mv = z * v1[1] + 1.0 - v2[1];
    // max(softmax) = 1 / (1 + exp(-|ma - mv|))
    1.0 / (1.0 + (-(ma - mv).abs()).exp())
}

/// Cost that survives exponent overflow: terms that overflow f64 are
/// counted instead of summed. Ordered by overflow count, then the sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Cost {
    pub overflow: usize,
    pub finite: f64,
}

impl Cost {
    pub fn push_exp(&mut self, x: f64) {
        let v = x.exp();
        if v.is_finite() {
            self.finite += v;
        } else {
            self.overflow += 1;
        }
    }

    /// Plain value; infinite when any term overflowed.
    pub fn value(&self) -> f64 {
        if self.overflow > 0 {
            f64::INFINITY
        } else {
            self.finite
        }
    }

    /// How much cheaper `self` is than `other` (infinite across overflow counts).
    pub fn gain_over(&self, other: &Cost) -> f64 {
        match self.overflow.cmp(&other.overflow) {
            Ordering::Less => f64::INFINITY,
            Ordering::Greater => f64::NEG_INFINITY,
            Ordering::Equal => other.finite - self.finite,
        }
    }

    pub fn total_cmp(&self, other: &Cost) -> Ordering {
        self.overflow.cmp(&other.overflow).then(self.finite.total_cmp(&other.finite))
    }
}

/// The four per-branch terms before exponentiation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchTerms {
    pub cr_pair: f64,
    pub cr_prob: f64,
    pub br: f64,
    pub fw: f64,
}

/// Expectation of the segment leaving `b` through `n`: interior nodes when
/// there are any, otherwise the far end.
pub fn arm_expectation(g: &DirectedVesselGraph, b: NodeId, n: NodeId) -> [f64; 2] {
    let seg = g.segment_from(b, n);
    let inner = if seg.len() > 2 { &seg[1..seg.len() - 1] } else { &seg[1..] };
    segment_expectation(g, inner)
}

fn max_pair_angle(g: &DirectedVesselGraph, b: NodeId, nbrs: &[NodeId]) -> f64 {
    let mut best: f64 = 0.0;
    for &i in nbrs {
        for &j in nbrs {
            if i != j {
                best = best.max(straightness_with(&g.graph, &g.checkpoints, i, b, j).unwrap());
            }
        }
    }
    best
}

/// Cost terms at branch `b` (undirected degree > 2).
pub fn branch_terms(g: &DirectedVesselGraph, b: NodeId, p: &CostParams) -> BranchTerms {
    let nbrs: Vec<NodeId> = g.graph.neighbors(b).collect();
    let arms: Vec<[f64; 2]> = nbrs.iter().map(|&n| arm_expectation(g, b, n)).collect();

    let (mut a, mut v) = (0, 0);
    for e in &arms {
        match hard_label(*e) {
            Some(Label::Artery) => a += 1,
            Some(Label::Vein) => v += 1,
            None => {}
        }
    }
    let pair = cr_pair(nbrs.len(), a, v, p);
    let prob = arms.iter().map(|e| cr_prob(e[0], e[1], p)).sum::<f64>() / arms.len() as f64;

    let ins: Vec<NodeId> = g.in_neighbors(b);
    let outs: Vec<NodeId> = g.out_neighbors(b);
    let br = branchness(ins.len(), outs.len(), max_pair_angle(g, b, &ins), max_pair_angle(g, b, &outs), p);

    let fw = if ins.is_empty() {
        0.0
    } else {
        let mut sum = 0.0;
        for &i in &ins {
            let ei = arms[nbrs.iter().position(|&x| x == i).unwrap()];
            let best = nbrs
                .iter()
                .enumerate()
                .filter(|&(_, &j)| j != i)
                .map(|(k, &j)| (straightness_with(&g.graph, &g.checkpoints, i, b, j).unwrap(), j, k))
                .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)))
                .unwrap();
            sum += av_straightness(best.0, ei, arms[best.2], p);
        }
        p.a4 * sum / ins.len() as f64
    };
    BranchTerms { cr_pair: pair, cr_prob: prob, br, fw }
}

/// Sum over branches of `exp` of each of the four terms.
pub fn graph_cost(g: &DirectedVesselGraph, p: &CostParams) -> Cost {
    let mut c = Cost::default();
    for b in g.graph.node_ids().filter(|&n| g.graph.degree(n) > 2) {
        let t = branch_terms(g, b, p);
        for x in [t.cr_pair, t.cr_prob, t.br, t.fw] {
            c.push_exp(x);
        }
    }
    c
}
