//! Synthetic artery/vein trees with known topology.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::DirectedVesselGraph;
use crate::graph::{angle_between, Graph, NodeId, Point};
use crate::grid::{AvLabel, AvPriorGrid, BinaryGrid, Grid, LikelihoodGrid, RgbGrid};
use crate::track::VesselNode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    /// Segment levels per tree; 1 gives a single trunk.
    pub depth: usize,
    /// Range of the angle (degrees) between a child and its parent direction.
    pub branch_angle: (f64, f64),
    pub crossings: usize,
    pub seed: u64,
    /// (row, col) of the optic nerve head.
    pub onh: (f64, f64),
    /// Directions (degrees from +col toward +row) of the artery trunks
    /// leaving the ONH; all trunks of one label form one tree.
    pub artery_trunks: Vec<f64>,
    pub vein_trunks: Vec<f64>,
    /// Length of the trunks leaving the ONH.
    pub trunk_length: f64,
    /// Length ratio between consecutive levels.
    pub length_decay: f64,
    /// Gaussian profile width at the ONH.
    pub sigma: f64,
    /// Width ratio between consecutive levels (also the taper along a segment).
    pub sigma_decay: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            width: 565,
            height: 584,
            depth: 4,
            branch_angle: (25.0, 40.0),
            crossings: 3,
            seed: 0,
            onh: (292.0, 100.0),
            artery_trunks: vec![-80.0, -15.0, 80.0],
            vein_trunks: vec![-50.0, 15.0, 50.0],
            trunk_length: 120.0,
            length_decay: 0.72,
            sigma: 2.5,
            sigma_decay: 0.8,
        }
    }
}

impl PhantomSpec {
    /// Parses a TOML table; missing keys take their defaults.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::InvalidArgument("phantom depth must be at least 1".into()));
        }
        if self.artery_trunks.is_empty() || self.vein_trunks.is_empty() {
            return Err(Error::InvalidArgument("phantom needs at least one artery and one vein trunk".into()));
        }
        if self.width < 32 || self.height < 32 {
            return Err(Error::InvalidArgument("phantom must be at least 32x32".into()));
        }
        let (a, b) = self.branch_angle;
        if !(0.0..=90.0).contains(&a) || !(a..=90.0).contains(&b) {
            return Err(Error::InvalidArgument(format!("branch angle range ({a}, {b}) must lie in [0, 90]")));
        }
        if self.sigma <= 0.0 || !(0.0..=1.0).contains(&self.sigma_decay) || self.trunk_length <= 0.0 {
            return Err(Error::InvalidArgument("phantom widths and lengths must be positive".into()));
        }
        Ok(())
    }
}

/// One straight vessel piece, drawn from `a` (upstream) to `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthSegment {
    pub a: Point,
    pub b: Point,
    pub sigma_a: f64,
    pub sigma_b: f64,
    pub label: AvLabel,
    pub level: usize,
    pub parent: Option<usize>,
}

impl TruthSegment {
    pub fn dir(&self) -> Point {
        self.b.sub(&self.a).unit()
    }

    // (distance, parameter along the segment)
    fn project(&self, q: &Point) -> (f64, f64) {
        let d = self.b.sub(&self.a);
        let len2 = d.dot(&d);
        let t = if len2 > 0.0 { (q.sub(&self.a).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
        (q.dist(&self.a.add(&d.scale(t))), t)
    }

    pub fn dist(&self, q: &Point) -> f64 {
        self.project(q).0
    }

    /// Profile width at the point nearest `q`.
    pub fn sigma_at(&self, q: &Point) -> f64 {
        let t = self.project(q).1;
        self.sigma_a + (self.sigma_b - self.sigma_a) * t
    }

    pub fn max_sigma(&self) -> f64 {
        self.sigma_a.max(self.sigma_b)
    }
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub spec: PhantomSpec,
    pub segments: Vec<TruthSegment>,
    pub truth: DirectedVesselGraph,
    pub likelihood: LikelihoodGrid,
    pub fundus: RgbGrid,
    pub av_gt: AvPriorGrid,
    pub av_prior: AvPriorGrid,
    pub seg_gt: BinaryGrid,
    /// Index + 1 of the segment owning each vessel pixel, 0 elsewhere.
    pub owner: Grid<u32>,
}

/// Likelihood threshold for the ground-truth vessel mask.
pub const MASK_LEVEL: f64 = 128.0;
const MARGIN: f64 = 12.0;
const LAYOUT_TRIES: usize = 60;
/// Vessels run on at least this far past a crossing, so cleaning keeps all
/// four arms.
const CROSSING_ARM: f64 = 35.0;
const NODE_SPACING: f64 = 5.0;

fn seg_seg_dist(s: &TruthSegment, t: &TruthSegment) -> f64 {
    if intersection(s, t).is_some() {
        return 0.0;
    }
    s.dist(&t.a).min(s.dist(&t.b)).min(t.dist(&s.a)).min(t.dist(&s.b))
}

/// Proper intersection point of two segments.
fn intersection(s: &TruthSegment, t: &TruthSegment) -> Option<Point> {
    let r = s.b.sub(&s.a);
    let q = t.b.sub(&t.a);
    let cross = |u: &Point, v: &Point| u.row * v.col - u.col * v.row;
    let den = cross(&r, &q);
    if den.abs() < 1e-12 {
        return None;
    }
    let w = t.a.sub(&s.a);
    let u = cross(&w, &q) / den;
    let v = cross(&w, &r) / den;
    if u > 0.0 && u < 1.0 && v > 0.0 && v < 1.0 {
        Some(s.a.add(&r.scale(u)))
    } else {
        None
    }
}

fn clearance(s: &TruthSegment, t: &TruthSegment) -> f64 {
    3.0 * s.max_sigma() + 3.0 * t.max_sigma() + 6.0
}

fn ray(from: Point, deg: f64, len: f64) -> Point {
    let (s, c) = deg.to_radians().sin_cos();
    Point::new(from.row + s * len, from.col + c * len)
}

fn heading(d: Point) -> f64 {
    d.row.atan2(d.col).to_degrees()
}

struct Layout<'a> {
    spec: &'a PhantomSpec,
    segs: Vec<TruthSegment>,
    onh: Point,
}

impl Layout<'_> {
    fn in_bounds(&self, p: &Point) -> bool {
        p.row >= MARGIN
            && p.col >= MARGIN
            && p.row <= self.spec.height as f64 - 1.0 - MARGIN
            && p.col <= self.spec.width as f64 - 1.0 - MARGIN
    }

    fn shares_end(s: &TruthSegment, t: &TruthSegment) -> bool {
        let close = |a: &Point, b: &Point| a.dist(b) < 1e-9;
        close(&s.a, &t.a) || close(&s.a, &t.b) || close(&s.b, &t.a) || close(&s.b, &t.b)
    }

    /// New segment keeps clear of everything except `allowed` and pieces
    /// sharing an endpoint with it.
    fn fits(&self, s: &TruthSegment, allowed: &[usize]) -> bool {
        if !self.in_bounds(&s.b) {
            return false;
        }
        self.segs.iter().enumerate().all(|(i, t)| {
            allowed.contains(&i) || Self::shares_end(s, t) || seg_seg_dist(s, t) >= clearance(s, t)
        })
    }

    /// Grows all trees breadth first so they compete for space evenly.
    fn grow(&mut self, rng: &mut ChaCha8Rng, trunks: &[(AvLabel, f64)]) {
        let sp = self.spec;
        let mut queue = VecDeque::new();
        for &(label, angle) in trunks {
            // trunks heading for a nearby border stop short of it
            let mut len = sp.trunk_length;
            while len > 1.0 && !self.in_bounds(&ray(self.onh, angle, len)) {
                len -= 1.0;
            }
            let trunk = TruthSegment {
                a: self.onh,
                b: ray(self.onh, angle, len),
                sigma_a: sp.sigma,
                sigma_b: sp.sigma * sp.sigma_decay,
                label,
                level: 0,
                parent: None,
            };
            if self.fits(&trunk, &[]) {
                self.segs.push(trunk);
                queue.push_back(self.segs.len() - 1);
            }
        }
        while let Some(pi) = queue.pop_front() {
            let parent = self.segs[pi];
            if parent.level + 1 >= sp.depth {
                continue;
            }
            let h = heading(parent.dir());
            let len = sp.trunk_length * sp.length_decay.powi(parent.level as i32 + 1);
            for _ in 0..30 {
                let kids: Vec<TruthSegment> = [-1.0, 1.0]
                    .iter()
                    .map(|&side| {
                        let turn = rng.gen_range(sp.branch_angle.0..=sp.branch_angle.1);
                        let l = len * rng.gen_range(0.85..1.15);
                        TruthSegment {
                            a: parent.b,
                            b: ray(parent.b, h + side * turn, l),
                            sigma_a: parent.sigma_b,
                            sigma_b: parent.sigma_b * sp.sigma_decay,
                            label: parent.label,
                            level: parent.level + 1,
                            parent: Some(pi),
                        }
                    })
                    .collect();
                let clear_pair = seg_seg_dist(&kids[0], &kids[1]) > 0.0 || Self::shares_end(&kids[0], &kids[1]);
                if clear_pair && self.fits(&kids[0], &[]) && self.fits(&kids[1], &[]) {
                    for k in kids {
                        self.segs.push(k);
                        queue.push_back(self.segs.len() - 1);
                    }
                    break;
                }
            }
        }
    }

    fn trunk_of(&self, mut i: usize) -> usize {
        while let Some(p) = self.segs[i].parent {
            i = p;
        }
        i
    }

    /// Trunks sorted by angle are paired up (first with second, third with
    /// fourth, ...) and only partners may cross, so most trunk pairs stay
    /// connected through the ONH alone.
    fn partners(&self, i: usize, j: usize) -> bool {
        let mut trunks: Vec<usize> = (0..self.segs.len()).filter(|&k| self.segs[k].parent.is_none()).collect();
        trunks.sort_by(|&a, &b| heading(self.segs[a].dir()).total_cmp(&heading(self.segs[b].dir())));
        let rank = |k: usize| trunks.iter().position(|&t| t == self.trunk_of(k)).expect("every segment has a trunk");
        rank(i) / 2 == rank(j) / 2
    }

    fn leaves(&self, label: AvLabel) -> Vec<usize> {
        let parents: BTreeSet<usize> = self.segs.iter().filter_map(|s| s.parent).collect();
        (0..self.segs.len()).filter(|i| !parents.contains(i) && self.segs[*i].label == label).collect()
    }

    /// Adds a branch that crosses exactly one segment of the other tree. The
    /// branch leaves from a leaf tip or from inside a segment, which is then
    /// split at the branch point.
    fn add_crossing(&mut self, rng: &mut ChaCha8Rng) -> bool {
        for label in [AvLabel::Vein, AvLabel::Artery] {
            let leaves: BTreeSet<usize> = self.leaves(label).into_iter().collect();
            let mut hosts: Vec<usize> = (0..self.segs.len()).filter(|&i| self.segs[i].label == label).collect();
            hosts.shuffle(rng);
            for hi in hosts {
                let host = self.segs[hi];
                for _ in 0..40 {
                    let t = if leaves.contains(&hi) && rng.gen_bool(0.5) { 1.0 } else { rng.gen_range(0.3..0.7) };
                    let start = host.a.add(&host.b.sub(&host.a).scale(t));
                    if start.dist(&self.onh) < 60.0 {
                        continue;
                    }
                    let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    let turn = if t == 1.0 { rng.gen_range(-40.0..=40.0) } else { side * rng.gen_range(30.0..=60.0) };
                    let sigma = host.sigma_a + (host.sigma_b - host.sigma_a) * t;
                    let s = TruthSegment {
                        a: start,
                        b: ray(start, heading(host.dir()) + turn, rng.gen_range(40.0..=200.0)),
                        sigma_a: sigma,
                        sigma_b: sigma * self.spec.sigma_decay,
                        label,
                        level: host.level + 1,
                        parent: Some(hi),
                    };
                    let hits: Vec<(usize, Point)> = self
                        .segs
                        .iter()
                        .enumerate()
                        .filter_map(|(i, o)| intersection(&s, o).map(|x| (i, x)))
                        .collect();
                    let [(ti, x)] = hits[..] else { continue };
                    let other = self.segs[ti];
                    if other.label == label || !self.partners(hi, ti) {
                        continue;
                    }
                    let cross = angle_between(&s.dir(), &other.dir());
                    if cross.min(180.0 - cross) < 50.0 {
                        continue;
                    }
                    let gap = (2.0 * s.max_sigma() + 2.0 * other.max_sigma() + 8.0).max(CROSSING_ARM);
                    if [other.a, other.b, s.a, s.b].iter().any(|e| e.dist(&x) < gap) || x.dist(&self.onh) < 80.0 {
                        continue;
                    }
                    if !self.fits(&s, &[hi, ti]) {
                        continue;
                    }
                    if t < 1.0 {
                        self.split(hi, t);
                    }
                    self.segs.push(s);
                    return true;
                }
            }
        }
        false
    }

    /// Cuts segment `i` at parameter `t`; the tail becomes a new child and
    /// inherits the children of `i`.
    fn split(&mut self, i: usize, t: f64) {
        let s = self.segs[i];
        let m = s.a.add(&s.b.sub(&s.a).scale(t));
        let sm = s.sigma_a + (s.sigma_b - s.sigma_a) * t;
        let tail = self.segs.len();
        for o in self.segs.iter_mut() {
            if o.parent == Some(i) {
                o.parent = Some(tail);
            }
        }
        self.segs[i].b = m;
        self.segs[i].sigma_b = sm;
        self.segs.push(TruthSegment { a: m, b: s.b, sigma_a: sm, sigma_b: s.sigma_b, level: s.level, parent: Some(i), ..s });
    }
}

fn profile(d: f64, sigma: f64) -> f64 {
    255.0 * (-(d * d) / (2.0 * sigma * sigma)).exp()
}

/// Builds a phantom. The prior equals the ground truth.
pub fn generate(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let onh = Point::new(spec.onh.0, spec.onh.1);
    let trunks: Vec<(AvLabel, f64)> = spec
        .artery_trunks
        .iter()
        .map(|&a| (AvLabel::Artery, a))
        .chain(spec.vein_trunks.iter().map(|&a| (AvLabel::Vein, a)))
        .collect();
    // keep drawing layouts until every trunk grows a full tree; lopsided
    // trees are accepted only as a last resort
    let full = trunks.len() * ((1usize << spec.depth) - 1);
    let mut fallback = None;
    let mut placed = 0;
    for _ in 0..LAYOUT_TRIES {
        let mut lay = Layout { spec, segs: Vec::new(), onh };
        lay.grow(&mut rng, &trunks);
        if !lay.segs.iter().any(|s| s.label == AvLabel::Artery) || !lay.segs.iter().any(|s| s.label == AvLabel::Vein) {
            return Err(Error::DegenerateGraph("phantom trunks do not fit in the image".into()));
        }
        let complete = lay.segs.len() == full;
        let k = (0..spec.crossings).take_while(|_| lay.add_crossing(&mut rng)).count();
        placed = placed.max(k);
        if k < spec.crossings {
            continue;
        }
        if complete {
            return Ok(render(spec.clone(), lay.segs));
        }
        fallback.get_or_insert(lay.segs);
    }
    match fallback {
        Some(segments) => Ok(render(spec.clone(), segments)),
        None => Err(Error::DegenerateGraph(format!("placed only {placed} of {} crossings", spec.crossings))),
    }
}

fn render(spec: PhantomSpec, segments: Vec<TruthSegment>) -> Phantom {
    let (w, h) = (spec.width, spec.height);
    // best (value, segment) per class
    let mut best: Grid<[(f64, u32); 2]> = Grid::filled(w, h, [(0.0, 0); 2]);
    for (i, s) in segments.iter().enumerate() {
        let reach = 4.0 * s.max_sigma() + 1.0;
        let r0 = (s.a.row.min(s.b.row) - reach).floor().max(0.0) as usize;
        let r1 = ((s.a.row.max(s.b.row) + reach).ceil() as usize).min(h - 1);
        let c0 = (s.a.col.min(s.b.col) - reach).floor().max(0.0) as usize;
        let c1 = ((s.a.col.max(s.b.col) + reach).ceil() as usize).min(w - 1);
        let k = if s.label == AvLabel::Artery { 0 } else { 1 };
        for r in r0..=r1 {
            for c in c0..=c1 {
                let q = Point::new(r as f64, c as f64);
                let v = profile(s.dist(&q), s.sigma_at(&q));
                let cell = &mut best.get_mut(r, c)[k];
                if v > cell.0 {
                    *cell = (v, i as u32 + 1);
                }
            }
        }
    }
    let likelihood = best.map(|b| b[0].0.max(b[1].0).round() as u8);
    let labels = best.map(|b| {
        let (a, v) = (b[0].0, b[1].0);
        if a.max(v) < MASK_LEVEL {
            AvLabel::Background
        } else if a >= v {
            AvLabel::Artery
        } else {
            AvLabel::Vein
        }
    });
    let owner = Grid::from_fn(w, h, |r, c| match labels.get(r, c) {
        AvLabel::Background => 0,
        AvLabel::Artery => best.get(r, c)[0].1,
        AvLabel::Vein => best.get(r, c)[1].1,
    });
    let seg_gt = labels.map(|l| l.is_vessel());
    let fundus = best.map(|b| {
        let bg = [200.0, 90.0, 50.0];
        let art = [175.0, 45.0, 35.0];
        let vein = [105.0, 20.0, 30.0];
        let (a, v) = (b[0].0 / 255.0, b[1].0 / 255.0);
        let mut px = [0u8; 3];
        for ch in 0..3 {
            let mut x = bg[ch];
            x = x + (art[ch] - x) * a;
            x = x + (vein[ch] - x) * v;
            px[ch] = x.round().clamp(0.0, 255.0) as u8;
        }
        px
    });
    let av_gt = AvPriorGrid::from_labels(&labels);
    let truth = truth_graph(&segments, Point::new(spec.onh.0, spec.onh.1));
    Phantom { spec, segments, truth, likelihood, fundus, av_prior: av_gt.clone(), av_gt, seg_gt, owner }
}

fn truth_graph(segments: &[TruthSegment], onh: Point) -> DirectedVesselGraph {
    let mut g: Graph<VesselNode> = Graph::new();
    let mut fwd = BTreeSet::new();
    let mut at: BTreeMap<(i64, i64), NodeId> = BTreeMap::new();
    let key = |p: &Point| ((p.row * 1e6).round() as i64, (p.col * 1e6).round() as i64);
    let av_of = |l: AvLabel| if l == AvLabel::Artery { [1.0, 0.0] } else { [0.0, 1.0] };
    let mut node_at = |g: &mut Graph<VesselNode>, p: Point, s: &TruthSegment| {
        *at.entry(key(&p)).or_insert_with(|| {
            g.add_node(VesselNode { pos: p, likelihood: 255.0, bw_dist: s.sigma_at(&p), av: av_of(s.label) })
        })
    };
    let root = node_at(&mut g, onh, &segments[0]);
    g.node_mut(root).av = [0.5, 0.5];
    for s in segments {
        let k = (s.a.dist(&s.b) / NODE_SPACING).ceil().max(1.0) as usize;
        let mut prev = node_at(&mut g, s.a, s);
        for i in 1..=k {
            let p = s.a.add(&s.b.sub(&s.a).scale(i as f64 / k as f64));
            let id = if i == k {
                node_at(&mut g, p, s)
            } else {
                g.add_node(VesselNode { pos: p, likelihood: 255.0, bw_dist: s.sigma_at(&p), av: av_of(s.label) })
            };
            g.add_edge(prev, id);
            fwd.insert((prev, id));
            prev = id;
        }
    }
    DirectedVesselGraph {
        graph: g,
        forward: fwd,
        onh: root,
        checkpoints: BTreeSet::from([root]),
        tally: BTreeMap::new(),
        route_calls: 0,
        stop_points: BTreeSet::new(),
        refined: true,
    }
}

/// Swaps artery and vein on every region (pixels sharing an `owner` value)
/// with probability `flip_rate`. Returns the prior and the flipped regions.
pub fn corrupt_prior(prior: &AvPriorGrid, owner: &Grid<u32>, flip_rate: f64, seed: u64) -> Result<(AvPriorGrid, BTreeSet<u32>)> {
    if !(0.0..=1.0).contains(&flip_rate) {
        return Err(Error::InvalidArgument(format!("flip rate {flip_rate} outside [0, 1]")));
    }
    crate::grid::check_same_dims(&[("prior", prior.dims()), ("segment owners", owner.dims())])?;
    let regions: BTreeSet<u32> = owner.data().iter().copied().filter(|&o| o > 0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flipped: BTreeSet<u32> = regions.into_iter().filter(|_| rng.gen_bool(flip_rate)).collect();
    let (w, h) = prior.dims();
    let probs = Grid::from_fn(w, h, |r, c| {
        let p = prior.probs(r, c);
        if flipped.contains(owner.get(r, c)) {
            [p[0], p[2], p[1]]
        } else {
            p
        }
    });
    Ok((AvPriorGrid::from_probs(probs)?, flipped))
}

impl Phantom {
    /// Copy with a corrupted prior.
    pub fn with_corruption(&self, flip_rate: f64, seed: u64) -> Result<Phantom> {
        let (prior, _) = corrupt_prior(&self.av_gt, &self.owner, flip_rate, seed)?;
        Ok(Phantom { av_prior: prior, ..self.clone() })
    }

    /// Connected overlap regions of the artery and vein tubes outside the ONH disc.
    pub fn overlap_loci(&self, onh_radius: f64) -> usize {
        let (w, h) = (self.spec.width, self.spec.height);
        let onh = Point::new(self.spec.onh.0, self.spec.onh.1);
        let class_mask = |label: AvLabel| {
            let mut m = Grid::filled(w, h, false);
            for s in self.segments.iter().filter(|s| s.label == label) {
                let reach = 2.0 * s.max_sigma() + 1.0;
                let r0 = (s.a.row.min(s.b.row) - reach).floor().max(0.0) as usize;
                let r1 = ((s.a.row.max(s.b.row) + reach).ceil() as usize).min(h - 1);
                let c0 = (s.a.col.min(s.b.col) - reach).floor().max(0.0) as usize;
                let c1 = ((s.a.col.max(s.b.col) + reach).ceil() as usize).min(w - 1);
                for r in r0..=r1 {
                    for c in c0..=c1 {
                        let q = Point::new(r as f64, c as f64);
                        if profile(s.dist(&q), s.sigma_at(&q)) >= MASK_LEVEL {
                            m.set(r, c, true);
                        }
                    }
                }
            }
            m
        };
        let (a, v) = (class_mask(AvLabel::Artery), class_mask(AvLabel::Vein));
        let both = Grid::from_fn(w, h, |r, c| {
            *a.get(r, c) && *v.get(r, c) && Point::new(r as f64, c as f64).dist(&onh) > onh_radius
        });
        count_components(&both)
    }

    /// Fraction of `g`'s directed edges that agree with the flow of the
    /// truth segment they follow; edges far from every segment are skipped.
    /// Returns (agreeing, matched).
    pub fn direction_agreement(&self, g: &DirectedVesselGraph) -> (usize, usize) {
        let mut ok = 0;
        let mut total = 0;
        for &(u, v) in &g.forward {
            let (pu, pv) = (g.pos(u), g.pos(v));
            let d = pv.sub(&pu);
            if d.norm() == 0.0 {
                continue;
            }
            let mid = pu.add(&d.scale(0.5));
            let best = self
                .segments
                .iter()
                .filter(|s| s.dist(&mid) <= 2.0 * s.sigma_at(&mid) + 3.0)
                .max_by(|a, b| {
                    let ca = a.dir().dot(&d.unit()).abs();
                    let cb = b.dir().dot(&d.unit()).abs();
                    ca.total_cmp(&cb).then(b.dist(&mid).total_cmp(&a.dist(&mid)))
                });
            if let Some(s) = best {
                total += 1;
                if s.dir().dot(&d) > 0.0 {
                    ok += 1;
                }
            }
        }
        (ok, total)
    }
}

fn count_components(m: &BinaryGrid) -> usize {
    let (w, h) = m.dims();
    let mut seen = Grid::filled(w, h, false);
    let mut n = 0;
    for r in 0..h {
        for c in 0..w {
            if !*m.get(r, c) || *seen.get(r, c) {
                continue;
            }
            n += 1;
            let mut stack = vec![(r, c)];
            seen.set(r, c, true);
            while let Some((y, x)) = stack.pop() {
                for (dy, dx) in crate::grid::NEIGHBORS_8 {
                    let (ny, nx) = (y as i64 + dy, x as i64 + dx);
                    if ny < 0 || nx < 0 || ny >= h as i64 || nx >= w as i64 {
                        continue;
                    }
                    let (ny, nx) = (ny as usize, nx as usize);
                    if *m.get(ny, nx) && !*seen.get(ny, nx) {
                        seen.set(ny, nx, true);
                        stack.push((ny, nx));
                    }
                }
            }
        }
    }
    n
}
