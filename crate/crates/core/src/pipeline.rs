//! End-to-end run from likelihood maps to a labeled, directed vessel graph.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::clean::clean;
use crate::config::PipelineConfig;
use crate::contract::{contract, ids_of_pixels};
use crate::error::{Error, Result};
use crate::eval::{format_table, iseg_metrics, node_metrics, render_mask, seg_metrics, MetricsReport};
use crate::flow::{assign_flow, DirectedVesselGraph};
use crate::grid::{
    check_same_dims, distance_transform, rgb_to_lab_grid, threshold, AvLabel, AvPriorGrid, BinaryGrid, Grid, LikelihoodGrid, RgbGrid,
};
use crate::io::{self, GraphFile};
use crate::prop::propagate;
use crate::skeleton::{build_union_graph, end_pixels, filter_small_components, skeleton_levels, union_of};
use crate::topo::{map_av_prior, optimize, EditRecord, TopologyState};
use crate::track::{detect_onh, to_vessel_graph, trace_pass1, trace_pass2, VesselGraph};

/// Rasters the pipeline consumes. Without a fundus photo the color term of
/// the edge weights is zero.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub likelihood: LikelihoodGrid,
    pub fundus: Option<RgbGrid>,
    pub av_prior: Option<AvPriorGrid>,
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub av: AvPriorGrid,
    pub seg: Option<BinaryGrid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Scores of one labeling (the prior or the final graph).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSet {
    pub labels: String,
    pub reports: Vec<MetricsReport>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub skeleton: BinaryGrid,
    pub traced: VesselGraph,
    pub flow: DirectedVesselGraph,
    /// Everything below is absent in topology-only runs.
    pub mapped: Option<DirectedVesselGraph>,
    pub optimized: Option<TopologyState>,
    pub labeled: Option<DirectedVesselGraph>,
    pub av_mask: Option<AvPriorGrid>,
    pub metrics: Vec<MetricsSet>,
    pub timings: Vec<StageTiming>,
}

impl PipelineOutput {
    /// The most processed graph available.
    pub fn final_graph(&self) -> &DirectedVesselGraph {
        self.labeled.as_ref().unwrap_or(&self.flow)
    }

    pub fn edit_log(&self) -> &[EditRecord] {
        self.optimized.as_ref().map_or(&[], |s| &s.edit_log)
    }
}

fn stage_err(stage: &str, e: Error) -> Error {
    if e.is_input() {
        e
    } else {
        Error::Stage { stage: stage.to_string(), message: e.to_string() }
    }
}

struct Clock {
    timings: Vec<StageTiming>,
}

impl Clock {
    fn run<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        log::info!("stage {stage}");
        let out = f().map_err(|e| stage_err(stage, e))?;
        self.timings.push(StageTiming { stage: stage.to_string(), seconds: t.elapsed().as_secs_f64() });
        Ok(out)
    }
}

/// Multilevel skeleton: per-threshold skeletons and their union.
pub fn skeletonize(likelihood: &LikelihoodGrid, cfg: &PipelineConfig) -> Result<(Vec<(u8, BinaryGrid)>, BinaryGrid)> {
    let sched = cfg.schedule();
    sched.validate()?;
    let levels = skeleton_levels(likelihood, &sched);
    let union = union_of(likelihood.dims(), &levels);
    Ok((levels, union))
}

fn lab_of(fundus: Option<&RgbGrid>, dims: (usize, usize)) -> crate::grid::LabGrid {
    match fundus {
        Some(rgb) => rgb_to_lab_grid(rgb),
        None => rgb_to_lab_grid(&Grid::filled(dims.0, dims.1, [128, 128, 128])),
    }
}

/// Skeleton to cleaned undirected vessel graph.
pub fn trace(inputs: &Inputs, cfg: &PipelineConfig) -> Result<(BinaryGrid, VesselGraph)> {
    let mut clock = Clock { timings: Vec::new() };
    trace_timed(inputs, cfg, &mut clock)
}

fn trace_timed(inputs: &Inputs, cfg: &PipelineConfig, clock: &mut Clock) -> Result<(BinaryGrid, VesselGraph)> {
    let lik = &inputs.likelihood;
    if let Some(f) = &inputs.fundus {
        check_same_dims(&[("likelihood", lik.dims()), ("fundus", f.dims())])?;
    }
    let (levels, union) = clock.run("skeletonize", || skeletonize(lik, cfg))?;
    let gc = clock.run("union_graph", || {
        let lab = lab_of(inputs.fundus.as_ref(), lik.dims());
        let bw = distance_transform(&threshold(lik, cfg.seg_threshold));
        let ug = build_union_graph(&union, lik, &lab, &bw)?;
        let ug = filter_small_components(&ug, cfg.d);
        let lowest = &levels.last().expect("schedule has a level").1;
        let protected = ids_of_pixels(&ug, &end_pixels(lowest));
        let gc = contract(&ug, &protected);
        if gc.node_count() == 0 {
            return Err(Error::DegenerateGraph("no vessel pixels survive skeletonization".into()));
        }
        Ok(gc)
    })?;
    let ew = cfg.edge_weights();
    let onh = clock.run("onh", || detect_onh(&gc, &ew, cfg.onh_pairs, cfg.seed))?;
    let p1 = clock.run("pass1", || Ok(trace_pass1(&gc, onh, &ew, cfg.workers)))?;
    let p2 = clock.run("pass2", || Ok(trace_pass2(&gc, &p1.graph, &ew, cfg.d_i, cfg.k, cfg.gamma)))?;
    let cleaned = clock.run("clean", || {
        let vg = to_vessel_graph(&p2, gc.node(onh));
        let c = clean(&vg, &cfg.clean_params());
        if c.graph.edge_count() == 0 {
            return Err(Error::DegenerateGraph("cleaning removed every edge".into()));
        }
        Ok(c)
    })?;
    Ok((union, cleaned))
}

/// Label stages on a directed graph: prior mapping, HLO search, propagation.
pub fn label(flow: &DirectedVesselGraph, prior: &AvPriorGrid, cfg: &PipelineConfig) -> Result<(DirectedVesselGraph, TopologyState, DirectedVesselGraph)> {
    let mut clock = Clock { timings: Vec::new() };
    label_timed(flow, prior, cfg, &mut clock)
}

fn label_timed(
    flow: &DirectedVesselGraph,
    prior: &AvPriorGrid,
    cfg: &PipelineConfig,
    clock: &mut Clock,
) -> Result<(DirectedVesselGraph, TopologyState, DirectedVesselGraph)> {
    let (cp, hp, pp) = (cfg.cost_params(), cfg.hlo_params(), cfg.prop_params());
    let mapped = clock.run("map_prior", || map_av_prior(flow, prior))?;
    let state = clock.run("optimize", || Ok(optimize(&mapped, &cp, &hp)))?;
    let labeled = clock.run("propagate", || Ok(propagate(&state.graph, &cp, &hp, &pp)))?;
    Ok((mapped, state, labeled))
}

/// Prior labels restricted to the vessel mask.
pub fn prior_mask(prior: &AvPriorGrid, seg_mask: &BinaryGrid) -> AvPriorGrid {
    let labels = prior.labels();
    let (w, h) = prior.dims();
    AvPriorGrid::from_labels(&Grid::from_fn(w, h, |r, c| {
        let l = *labels.get(r, c);
        if *seg_mask.get(r, c) && l.is_vessel() {
            l
        } else {
            AvLabel::Background
        }
    }))
}

fn score(labels: &str, g: &DirectedVesselGraph, mask: &AvPriorGrid, gt: &GroundTruth) -> Result<MetricsSet> {
    let mut reports = vec![node_metrics(g, &gt.av)];
    if let Some(seg) = &gt.seg {
        reports.push(iseg_metrics(mask, &gt.av, seg)?);
    }
    reports.push(seg_metrics(mask, &gt.av)?);
    Ok(MetricsSet { labels: labels.to_string(), reports })
}

/// Runs every stage in memory.
pub fn run(inputs: &Inputs, cfg: &PipelineConfig, gt: Option<&GroundTruth>, topology_only: bool) -> Result<PipelineOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_inner(inputs, cfg, gt, topology_only, &mut |_, _| Ok(())))
}

type Sink<'a> = dyn FnMut(&str, &PipelineOutput) -> Result<()> + 'a;

fn run_inner(
    inputs: &Inputs,
    cfg: &PipelineConfig,
    gt: Option<&GroundTruth>,
    topology_only: bool,
    checkpoint: &mut Sink,
) -> Result<PipelineOutput> {
    let mut clock = Clock { timings: Vec::new() };
    let lik = &inputs.likelihood;
    if let Some(p) = &inputs.av_prior {
        check_same_dims(&[("likelihood", lik.dims()), ("av prior", p.dims())])?;
    }
    if let Some(g) = gt {
        check_same_dims(&[("likelihood", lik.dims()), ("ground truth", g.av.dims())])?;
        if let Some(s) = &g.seg {
            check_same_dims(&[("likelihood", lik.dims()), ("ground-truth mask", s.dims())])?;
        }
    }
    let (skeleton, traced) = trace_timed(inputs, cfg, &mut clock)?;
    let flow = clock.run("flow", || Ok(assign_flow(&traced)))?;
    let mut out = PipelineOutput {
        skeleton,
        traced,
        flow,
        mapped: None,
        optimized: None,
        labeled: None,
        av_mask: None,
        metrics: Vec::new(),
        timings: Vec::new(),
    };
    checkpoint("flow", &out)?;
    if topology_only {
        out.timings = clock.timings;
        return Ok(out);
    }
    let prior = inputs
        .av_prior
        .as_ref()
        .ok_or_else(|| Error::Input("an artery/vein prior is required unless running topology-only".into()))?;
    let (mapped, state, labeled) = label_timed(&out.flow, prior, cfg, &mut clock)?;
    out.mapped = Some(mapped);
    out.optimized = Some(state);
    out.labeled = Some(labeled);
    checkpoint("label", &out)?;
    let seg_mask = threshold(lik, cfg.seg_threshold);
    let mask = clock.run("render", || Ok(render_mask(out.labeled.as_ref().unwrap(), &seg_mask)))?;
    out.av_mask = Some(mask);
    if let Some(g) = gt {
        let sets = clock.run("metrics", || {
            let before = score("prior", out.mapped.as_ref().unwrap(), &prior_mask(prior, &seg_mask), g)?;
            let after = score("final", out.labeled.as_ref().unwrap(), out.av_mask.as_ref().unwrap(), g)?;
            Ok(vec![before, after])
        })?;
        out.metrics = sets;
    }
    out.timings = clock.timings;
    Ok(out)
}

/// Output file names.
pub mod artifact {
    pub const GRAPH: &str = "graph.json";
    pub const TRACED: &str = "traced.json";
    pub const AV_MASK: &str = "av_mask.png";
    pub const OVERLAY: &str = "overlay.svg";
    pub const EDITS: &str = "edits.json";
    pub const METRICS: &str = "metrics.json";
    pub const METRICS_TABLE: &str = "metrics.txt";
    pub const TIMING: &str = "timing.json";
    pub const PARTIAL: &str = "partial";
}

fn partial(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.{}", artifact::PARTIAL))
}

/// Table with one row per labeling and level.
pub fn metrics_table(sets: &[MetricsSet]) -> String {
    let mut s = String::new();
    for set in sets {
        s.push_str(&format!("[{}]\n", set.labels));
        s.push_str(&format_table(&set.reports));
    }
    s
}

/// Runs the pipeline and writes its artifacts into `out_dir`. Intermediate
/// files carry a `.partial` suffix until the run succeeds; after a failure
/// they stay behind for inspection.
pub fn run_to_dir(
    inputs: &Inputs,
    cfg: &PipelineConfig,
    gt: Option<&GroundTruth>,
    topology_only: bool,
    out_dir: &Path,
    debug_dumps: bool,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut written: Vec<&'static str> = Vec::new();
    let mut sink = |stage: &str, o: &PipelineOutput| -> Result<()> {
        match stage {
            "flow" => {
                GraphFile::Undirected(o.traced.clone()).save(&partial(out_dir, artifact::TRACED))?;
                GraphFile::Directed(o.flow.clone()).save(&partial(out_dir, artifact::GRAPH))?;
                written.extend([artifact::TRACED, artifact::GRAPH]);
                if debug_dumps {
                    let dbg = out_dir.join("debug");
                    std::fs::create_dir_all(&dbg)?;
                    io::save_mask(&dbg.join("skeleton_union.png"), &o.skeleton)?;
                    for (t, s) in skeletonize(&inputs.likelihood, cfg)?.0 {
                        io::save_mask(&dbg.join(format!("skeleton_{t:03}.png")), &s)?;
                    }
                    GraphFile::Directed(o.flow.clone()).save(&dbg.join("flow.json"))?;
                }
            }
            "label" => {
                GraphFile::Directed(o.final_graph().clone()).save(&partial(out_dir, artifact::GRAPH))?;
                std::fs::write(partial(out_dir, artifact::EDITS), serde_json::to_string_pretty(o.edit_log())? + "\n")?;
                written.push(artifact::EDITS);
                if debug_dumps {
                    let dbg = out_dir.join("debug");
                    GraphFile::Directed(o.mapped.clone().unwrap()).save(&dbg.join("mapped.json"))?;
                    GraphFile::Directed(o.optimized.as_ref().unwrap().graph.clone()).save(&dbg.join("optimized.json"))?;
                }
            }
            _ => {}
        }
        Ok(())
    };
    let out = pool.install(|| run_inner(inputs, cfg, gt, topology_only, &mut sink))?;
    let (w, h) = inputs.likelihood.dims();
    std::fs::write(partial(out_dir, artifact::OVERLAY), io::overlay_svg(out.final_graph(), w, h))?;
    written.push(artifact::OVERLAY);
    if let Some(mask) = &out.av_mask {
        io::save_labels(&partial(out_dir, artifact::AV_MASK), mask)?;
        written.push(artifact::AV_MASK);
    }
    if !out.metrics.is_empty() {
        std::fs::write(partial(out_dir, artifact::METRICS), serde_json::to_string_pretty(&out.metrics)? + "\n")?;
        std::fs::write(partial(out_dir, artifact::METRICS_TABLE), metrics_table(&out.metrics))?;
        written.extend([artifact::METRICS, artifact::METRICS_TABLE]);
    }
    std::fs::write(partial(out_dir, artifact::TIMING), serde_json::to_string_pretty(&out.timings)? + "\n")?;
    written.push(artifact::TIMING);
    for name in written {
        std::fs::rename(partial(out_dir, name), out_dir.join(name))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate, PhantomSpec};

    fn inputs(p: &crate::phantom::Phantom) -> Inputs {
        Inputs { likelihood: p.likelihood.clone(), fundus: Some(p.fundus.clone()), av_prior: Some(p.av_prior.clone()) }
    }

    #[test]
    fn opposite_trunks_give_two_segments() {
        let spec = PhantomSpec { depth: 1, crossings: 0, onh: (292.0, 282.0), artery_trunks: vec![0.0], vein_trunks: vec![180.0], trunk_length: 150.0, ..Default::default() };
        let p = generate(&spec).unwrap();
        let out = run(&inputs(&p), &PipelineConfig::default(), None, true).unwrap();
        assert_eq!(out.flow.segments().len(), 2);
        assert!(out.labeled.is_none());
    }

    #[test]
    fn missing_prior_is_an_input_error() {
        let p = generate(&PhantomSpec { crossings: 0, depth: 2, ..Default::default() }).unwrap();
        let mut i = inputs(&p);
        i.av_prior = None;
        let e = run(&i, &PipelineConfig::default(), None, false).unwrap_err();
        assert!(e.is_input());
    }

    #[test]
    fn mismatched_rasters_rejected() {
        let p = generate(&PhantomSpec { crossings: 0, depth: 2, ..Default::default() }).unwrap();
        let mut i = inputs(&p);
        i.fundus = Some(Grid::filled(10, 10, [0, 0, 0]));
        assert!(run(&i, &PipelineConfig::default(), None, false).unwrap_err().is_input());
    }

    #[test]
    fn blank_likelihood_fails_in_a_stage() {
        let i = Inputs { likelihood: Grid::filled(64, 64, 0), fundus: None, av_prior: None };
        let e = run(&i, &PipelineConfig::default(), None, true).unwrap_err();
        assert!(matches!(e, Error::Stage { .. }), "{e}");
    }
}
