//! Raster, graph and overlay files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::node_label;
use crate::flow::DirectedVesselGraph;
use crate::graph::{Graph, NodeId, Point};
use crate::grid::{AvLabel, AvPriorGrid, BinaryGrid, Grid, LikelihoodGrid, RgbGrid};
use crate::phantom::{Phantom, PhantomSpec, TruthSegment};
use crate::track::{VesselGraph, VesselNode};

pub const GRAPH_FORMAT: &str = "retitopo-graph/1";

fn open(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))
}

pub fn load_gray(path: &Path) -> Result<LikelihoodGrid> {
    let img = open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    Grid::from_vec(w as usize, h as usize, img.into_raw())
}

pub fn load_rgb(path: &Path) -> Result<RgbGrid> {
    let img = open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect();
    Grid::from_vec(w as usize, h as usize, data)
}

/// Pixels brighter than mid-gray are true.
pub fn load_mask(path: &Path) -> Result<BinaryGrid> {
    Ok(load_gray(path)?.map(|&v| v > 127))
}

/// Red artery, blue vein, green or black background.
pub fn load_prior(path: &Path) -> Result<AvPriorGrid> {
    Ok(AvPriorGrid::from_rgb(&load_rgb(path)?))
}

/// Rasters are always written as PNG, whatever the extension.
pub fn save_gray(path: &Path, g: &LikelihoodGrid) -> Result<()> {
    let img = image::GrayImage::from_raw(g.width() as u32, g.height() as u32, g.data().to_vec())
        .expect("buffer matches dimensions");
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn save_rgb(path: &Path, g: &RgbGrid) -> Result<()> {
    let raw: Vec<u8> = g.data().iter().flat_map(|p| p.iter().copied()).collect();
    let img = image::RgbImage::from_raw(g.width() as u32, g.height() as u32, raw).expect("buffer matches dimensions");
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn save_mask(path: &Path, m: &BinaryGrid) -> Result<()> {
    save_gray(path, &m.map(|&v| if v { 255 } else { 0 }))
}

pub fn save_prior(path: &Path, p: &AvPriorGrid) -> Result<()> {
    save_rgb(path, &p.to_rgb())
}

/// Hard labels in display colors.
pub fn save_labels(path: &Path, p: &AvPriorGrid) -> Result<()> {
    save_rgb(path, &p.labels().map(|l| l.rgb()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NodeDoc {
    id: NodeId,
    row: f64,
    col: f64,
    likelihood: f64,
    bw_dist: f64,
    av: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EdgeDoc {
    src: NodeId,
    dst: NodeId,
    directed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GraphDoc {
    format: String,
    directed: bool,
    onh: NodeId,
    refined: bool,
    nodes: Vec<NodeDoc>,
    edges: Vec<EdgeDoc>,
    #[serde(default)]
    checkpoints: Vec<NodeId>,
    #[serde(default)]
    stop_points: Vec<NodeId>,
    /// (terminal, count) pairs.
    #[serde(default)]
    tally: Vec<(NodeId, usize)>,
    #[serde(default)]
    route_calls: usize,
}

/// A serialized graph: traced and cleaned, or with flow directions.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphFile {
    Undirected(VesselGraph),
    Directed(DirectedVesselGraph),
}

fn node_docs(g: &Graph<VesselNode>) -> Vec<NodeDoc> {
    g.node_ids()
        .map(|id| {
            let n = g.node(id);
            NodeDoc { id, row: n.pos.row, col: n.pos.col, likelihood: n.likelihood, bw_dist: n.bw_dist, av: n.av }
        })
        .collect()
}

fn to_doc(f: &GraphFile) -> GraphDoc {
    match f {
        GraphFile::Undirected(g) => GraphDoc {
            format: GRAPH_FORMAT.into(),
            directed: false,
            onh: g.onh,
            refined: g.refined,
            nodes: node_docs(&g.graph),
            edges: g.graph.edges().map(|(a, b)| EdgeDoc { src: a, dst: b, directed: false }).collect(),
            checkpoints: Vec::new(),
            stop_points: Vec::new(),
            tally: Vec::new(),
            route_calls: 0,
        },
        GraphFile::Directed(d) => GraphDoc {
            format: GRAPH_FORMAT.into(),
            directed: true,
            onh: d.onh,
            refined: d.refined,
            nodes: node_docs(&d.graph),
            edges: d.forward.iter().map(|&(a, b)| EdgeDoc { src: a, dst: b, directed: true }).collect(),
            checkpoints: d.checkpoints.iter().copied().collect(),
            stop_points: d.stop_points.iter().copied().collect(),
            tally: d.tally.iter().map(|(&k, &v)| (k, v)).collect(),
            route_calls: d.route_calls,
        },
    }
}

fn from_doc(doc: GraphDoc) -> Result<GraphFile> {
    let bad = |m: String| Error::Input(format!("graph file: {m}"));
    if doc.format != GRAPH_FORMAT {
        return Err(bad(format!("unknown format {:?}", doc.format)));
    }
    let mut by_id: BTreeMap<NodeId, VesselNode> = BTreeMap::new();
    for n in &doc.nodes {
        let node = VesselNode { pos: Point::new(n.row, n.col), likelihood: n.likelihood, bw_dist: n.bw_dist, av: n.av };
        if by_id.insert(n.id, node).is_some() {
            return Err(bad(format!("duplicate node id {}", n.id)));
        }
    }
    // recreate ids exactly, leaving holes where nodes are missing
    let mut g: Graph<VesselNode> = Graph::new();
    let max = by_id.keys().next_back().copied().map_or(0, |m| m + 1);
    let filler = VesselNode { pos: Point::default(), likelihood: 0.0, bw_dist: 0.0, av: [0.5, 0.5] };
    for id in 0..max {
        g.add_node(by_id.get(&id).copied().unwrap_or(filler));
    }
    for id in 0..max {
        if !by_id.contains_key(&id) {
            g.remove_node(id);
        }
    }
    let known = |id: NodeId| by_id.contains_key(&id);
    if !known(doc.onh) {
        return Err(bad(format!("onh {} is not a node", doc.onh)));
    }
    let mut forward = BTreeSet::new();
    for e in &doc.edges {
        if !known(e.src) || !known(e.dst) || e.src == e.dst {
            return Err(bad(format!("edge {} -> {} has an unknown or repeated endpoint", e.src, e.dst)));
        }
        if e.directed != doc.directed {
            return Err(bad(format!("edge {} -> {} directed flag disagrees with the graph", e.src, e.dst)));
        }
        if !g.add_edge(e.src, e.dst) {
            return Err(bad(format!("edge {} - {} listed twice", e.src, e.dst)));
        }
        forward.insert((e.src, e.dst));
    }
    let vg = VesselGraph { graph: g, onh: doc.onh, refined: doc.refined };
    if !doc.directed {
        return Ok(GraphFile::Undirected(vg));
    }
    let mut d = DirectedVesselGraph::from_parts(vg, forward, doc.checkpoints.iter().copied().collect())
        .map_err(|e| bad(e.to_string()))?;
    d.stop_points = doc.stop_points.into_iter().collect();
    d.tally = doc.tally.into_iter().collect();
    d.route_calls = doc.route_calls;
    if let Some(&s) = d.stop_points.iter().find(|&&s| !known(s)) {
        return Err(bad(format!("stop point {s} is not a node")));
    }
    Ok(GraphFile::Directed(d))
}

impl GraphFile {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&to_doc(self)).expect("graph documents serialize");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: GraphDoc = serde_json::from_str(s).map_err(|e| Error::Input(format!("graph file: {e}")))?;
        from_doc(doc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn directed(self) -> Result<DirectedVesselGraph> {
        match self {
            GraphFile::Directed(d) => Ok(d),
            GraphFile::Undirected(_) => Err(Error::Input("expected a directed graph".into())),
        }
    }

    pub fn undirected(self) -> VesselGraph {
        match self {
            GraphFile::Undirected(g) => g,
            GraphFile::Directed(d) => d.to_undirected(),
        }
    }
}

/// Vector overlay: edges colored by node label, arrows along the flow.
pub fn overlay_svg(g: &DirectedVesselGraph, width: usize, height: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    s.push_str(
        r#"<defs><marker id="arrow" viewBox="0 0 6 6" refX="5" refY="3" markerWidth="4" markerHeight="4" orient="auto"><path d="M0,0 L6,3 L0,6 z" fill="context-stroke"/></marker></defs>"#,
    );
    s.push('\n');
    s.push_str(r#"<rect width="100%" height="100%" fill="black"/>"#);
    s.push('\n');
    let color = |l: AvLabel| match l {
        AvLabel::Artery => "#ff3030",
        AvLabel::Vein => "#3060ff",
        AvLabel::Background => "#a0a0a0",
    };
    for &(a, b) in &g.forward {
        let (pa, pb) = (g.pos(a), g.pos(b));
        let ea = g.graph.node(a).av;
        let eb = g.graph.node(b).av;
        let c = color(node_label([(ea[0] + eb[0]) / 2.0, (ea[1] + eb[1]) / 2.0]));
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{c}" stroke-width="1.5" marker-end="url(#arrow)"/>"#,
            pa.col, pa.row, pb.col, pb.row
        );
    }
    for &n in &g.checkpoints {
        let p = g.pos(n);
        let r = if n == g.onh { 6 } else { 3 };
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="{r}" fill="none" stroke="yellow"/>"#, p.col, p.row);
    }
    for &n in &g.stop_points {
        let p = g.pos(n);
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="magenta"/>"#, p.col, p.row);
    }
    s.push_str("</svg>\n");
    s
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PhantomDoc {
    spec: PhantomSpec,
    segments: Vec<TruthSegment>,
}

/// File names inside a phantom bundle directory.
pub mod bundle {
    pub const FUNDUS: &str = "fundus.png";
    pub const LIKELIHOOD: &str = "likelihood.png";
    pub const AV_PRIOR: &str = "av_prior.png";
    pub const AV_GT: &str = "av_gt.png";
    pub const SEG_GT: &str = "seg_gt.png";
    pub const TRUTH: &str = "truth.json";
    pub const SEGMENTS: &str = "phantom.json";
}

pub fn write_bundle(p: &Phantom, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_rgb(&dir.join(bundle::FUNDUS), &p.fundus)?;
    save_gray(&dir.join(bundle::LIKELIHOOD), &p.likelihood)?;
    save_prior(&dir.join(bundle::AV_PRIOR), &p.av_prior)?;
    save_prior(&dir.join(bundle::AV_GT), &p.av_gt)?;
    save_mask(&dir.join(bundle::SEG_GT), &p.seg_gt)?;
    GraphFile::Directed(p.truth.clone()).save(&dir.join(bundle::TRUTH))?;
    let doc = PhantomDoc { spec: p.spec.clone(), segments: p.segments.clone() };
    std::fs::write(dir.join(bundle::SEGMENTS), serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::generate;
    use crate::topo::hlo_tests::Builder;
    use crate::topo::tests::{A, V};

    fn sample() -> DirectedVesselGraph {
        let mut b = Builder::new();
        let onh = b.node(0.0, 0.0, A);
        let x = b.node(0.1, 30.3, [0.3, 0.7]);
        b.line(onh, x, 5.0, A);
        let y = b.node(20.0, 45.0, V);
        b.line(x, y, 5.0, V);
        let mut g = b.build(onh);
        g.tally.insert(y, 3);
        g.route_calls = 3;
        g.graph.remove_node(y);
        g.forward.retain(|&(a, b)| a != y && b != y);
        g
    }

    #[test]
    fn directed_json_round_trip_is_byte_identical() {
        let g = sample();
        let f = GraphFile::Directed(g.clone());
        let s = f.to_json();
        let back = GraphFile::from_json(&s).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_json(), s);
    }

    #[test]
    fn undirected_round_trip() {
        let f = GraphFile::Undirected(sample().to_undirected());
        let s = f.to_json();
        assert_eq!(GraphFile::from_json(&s).unwrap().to_json(), s);
    }

    #[test]
    fn rejects_malformed() {
        let s = GraphFile::Directed(sample()).to_json();
        assert!(GraphFile::from_json(&s.replace(GRAPH_FORMAT, "other/1")).is_err());
        assert!(GraphFile::from_json("{").is_err());
        let mut v: serde_json::Value = serde_json::from_str(&s).unwrap();
        v["edges"][0]["dst"] = serde_json::json!(9999);
        assert!(GraphFile::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn png_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::from_fn(7, 5, |r, c| (r * 40 + c) as u8);
        save_gray(&dir.path().join("g.png"), &g).unwrap();
        assert_eq!(load_gray(&dir.path().join("g.png")).unwrap(), g);
        let labels = Grid::from_fn(7, 5, |r, c| AvLabel::from_index((r + c) % 3));
        let p = AvPriorGrid::from_labels(&labels);
        save_prior(&dir.path().join("p.png"), &p).unwrap();
        assert_eq!(load_prior(&dir.path().join("p.png")).unwrap().labels(), labels);
        assert!(load_gray(&dir.path().join("missing.png")).unwrap_err().is_input());
    }

    #[test]
    fn bundle_files_load_back() {
        let p = generate(&PhantomSpec { crossings: 1, seed: 5, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&p, dir.path()).unwrap();
        assert_eq!(load_gray(&dir.path().join(bundle::LIKELIHOOD)).unwrap(), p.likelihood);
        assert_eq!(load_prior(&dir.path().join(bundle::AV_GT)).unwrap().labels(), p.av_gt.labels());
        assert_eq!(load_mask(&dir.path().join(bundle::SEG_GT)).unwrap(), p.seg_gt);
        let t = GraphFile::load(&dir.path().join(bundle::TRUTH)).unwrap().directed().unwrap();
        assert_eq!(t, p.truth);
        let svg = overlay_svg(&t, p.spec.width, p.spec.height);
        assert_eq!(svg.matches("<line").count(), t.forward.len());
    }
}
