//! Command-line front end: the full pipeline plus one subcommand per stage
//! working on serialized intermediates.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use retitopo::config::PipelineConfig;
use retitopo::eval::{format_table, iseg_metrics, node_metrics, render_mask, seg_metrics};
use retitopo::flow::assign_flow;
use retitopo::grid::threshold;
use retitopo::io::{self, GraphFile};
use retitopo::phantom::{generate, PhantomSpec};
use retitopo::pipeline::{self, GroundTruth, Inputs};
use retitopo::prop::propagate;
use retitopo::topo::{map_av_prior, optimize};
use retitopo::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "retitopo", version, about = "Retinal vessel topology and artery/vein labeling")]
struct Cli {
    /// TOML file with pipeline parameters.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the worker count from the config.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run every stage and write the artifact bundle.
    Extract(ExtractArgs),
    /// Write the union skeleton (and per-threshold skeletons) as PNGs.
    Skeletonize {
        #[arg(long)]
        likelihood: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trace and clean the undirected vessel graph.
    Trace {
        #[arg(long)]
        likelihood: PathBuf,
        #[arg(long)]
        fundus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign flow directions to a traced graph.
    Flow {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Map the AV prior onto a directed graph and run the HLO search.
    Optimize {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        av_prior: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the accepted edits as JSON.
        #[arg(long)]
        edits: Option<PathBuf>,
    },
    /// Propagate labels along a labeled directed graph.
    Propagate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a labeled graph to an AV mask and/or an SVG overlay.
    Render {
        #[arg(long)]
        graph: PathBuf,
        /// Likelihood map whose thresholded mask receives the labels.
        #[arg(long)]
        likelihood: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Score a labeled graph against ground truth.
    Eval {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        gt_av: PathBuf,
        /// Enables the pixel-level scores.
        #[arg(long)]
        likelihood: Option<PathBuf>,
        #[arg(long)]
        gt_seg: Option<PathBuf>,
        /// Also write the reports as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic phantom bundle.
    Phantom {
        #[arg(long)]
        out: PathBuf,
        /// TOML phantom parameters; missing keys take defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        crossings: Option<usize>,
        /// Per-segment label flip rate of the AV prior.
        #[arg(long, default_value_t = 0.0)]
        corrupt: f64,
    },
}

#[derive(Args, Debug)]
struct ExtractArgs {
    #[arg(long)]
    likelihood: PathBuf,
    #[arg(long)]
    fundus: Option<PathBuf>,
    #[arg(long)]
    av_prior: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Stop after flow assignment; no AV prior needed.
    #[arg(long)]
    topology_only: bool,
    #[arg(long)]
    gt_av: Option<PathBuf>,
    #[arg(long)]
    gt_seg: Option<PathBuf>,
    /// Keep per-stage skeletons and graphs under `<out>/debug`.
    #[arg(long)]
    debug_dumps: bool,
}

fn config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_ground_truth(av: Option<&Path>, seg: Option<&Path>) -> Result<Option<GroundTruth>> {
    match (av, seg) {
        (Some(av), seg) => Ok(Some(GroundTruth { av: io::load_prior(av)?, seg: seg.map(io::load_mask).transpose()? })),
        (None, Some(_)) => Err(Error::Input("--gt-seg needs --gt-av".into())),
        (None, None) => Ok(None),
    }
}

fn parent_dir(path: &Path) -> Result<()> {
    if let Some(d) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(d)?;
    }
    Ok(())
}

fn save_graph(g: GraphFile, path: &Path) -> Result<()> {
    parent_dir(path)?;
    g.save(path)
}

fn extract(a: &ExtractArgs, cfg: &PipelineConfig) -> Result<()> {
    let inputs = Inputs {
        likelihood: io::load_gray(&a.likelihood)?,
        fundus: a.fundus.as_deref().map(io::load_rgb).transpose()?,
        av_prior: a.av_prior.as_deref().map(io::load_prior).transpose()?,
    };
    let gt = load_ground_truth(a.gt_av.as_deref(), a.gt_seg.as_deref())?;
    let out = pipeline::run_to_dir(&inputs, cfg, gt.as_ref(), a.topology_only, &a.out, a.debug_dumps)?;
    let g = out.final_graph();
    println!("nodes {} edges {} edits {}", g.graph.node_count(), g.graph.edge_count(), out.edit_log().len());
    if !out.metrics.is_empty() {
        print!("{}", pipeline::metrics_table(&out.metrics));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = config(cli)?;
    match &cli.cmd {
        Cmd::Extract(a) => extract(a, &cfg)?,
        Cmd::Skeletonize { likelihood, out } => {
            let (levels, union) = pipeline::skeletonize(&io::load_gray(likelihood)?, &cfg)?;
            std::fs::create_dir_all(out)?;
            io::save_mask(&out.join("skeleton_union.png"), &union)?;
            for (t, s) in &levels {
                io::save_mask(&out.join(format!("skeleton_{t:03}.png")), s)?;
            }
        }
        Cmd::Trace { likelihood, fundus, out } => {
            let inputs = Inputs {
                likelihood: io::load_gray(likelihood)?,
                fundus: fundus.as_deref().map(io::load_rgb).transpose()?,
                av_prior: None,
            };
            let (_, g) = pipeline::trace(&inputs, &cfg)?;
            save_graph(GraphFile::Undirected(g), out)?;
        }
        Cmd::Flow { graph, out } => {
            let g = GraphFile::load(graph)?.undirected();
            save_graph(GraphFile::Directed(assign_flow(&g)), out)?;
        }
        Cmd::Optimize { graph, av_prior, out, edits } => {
            let g = GraphFile::load(graph)?.directed()?;
            let mapped = map_av_prior(&g, &io::load_prior(av_prior)?)?;
            let state = optimize(&mapped, &cfg.cost_params(), &cfg.hlo_params());
            log::info!("{} edits accepted", state.edit_log.len());
            if let Some(p) = edits {
                parent_dir(p)?;
                std::fs::write(p, serde_json::to_string_pretty(&state.edit_log)? + "\n")?;
            }
            save_graph(GraphFile::Directed(state.graph), out)?;
        }
        Cmd::Propagate { graph, out } => {
            let g = GraphFile::load(graph)?.directed()?;
            let labeled = propagate(&g, &cfg.cost_params(), &cfg.hlo_params(), &cfg.prop_params());
            save_graph(GraphFile::Directed(labeled), out)?;
        }
        Cmd::Render { graph, likelihood, mask, svg } => {
            if mask.is_none() && svg.is_none() {
                return Err(Error::Input("render needs --mask and/or --svg".into()));
            }
            let g = GraphFile::load(graph)?.directed()?;
            let lik = io::load_gray(likelihood)?;
            if let Some(p) = mask {
                parent_dir(p)?;
                io::save_labels(p, &render_mask(&g, &threshold(&lik, cfg.seg_threshold)))?;
            }
            if let Some(p) = svg {
                parent_dir(p)?;
                let (w, h) = lik.dims();
                std::fs::write(p, io::overlay_svg(&g, w, h))?;
            }
        }
        Cmd::Eval { graph, gt_av, likelihood, gt_seg, out } => {
            let g = GraphFile::load(graph)?.directed()?;
            let gt = io::load_prior(gt_av)?;
            let mut reports = vec![node_metrics(&g, &gt)];
            if let Some(l) = likelihood {
                let mask = render_mask(&g, &threshold(&io::load_gray(l)?, cfg.seg_threshold));
                if let Some(s) = gt_seg {
                    reports.push(iseg_metrics(&mask, &gt, &io::load_mask(s)?)?);
                }
                reports.push(seg_metrics(&mask, &gt)?);
            } else if gt_seg.is_some() {
                return Err(Error::Input("--gt-seg needs --likelihood".into()));
            }
            print!("{}", format_table(&reports));
            if let Some(p) = out {
                parent_dir(p)?;
                std::fs::write(p, serde_json::to_string_pretty(&reports)? + "\n")?;
            }
        }
        Cmd::Phantom { out, spec, depth, crossings, corrupt } => {
            let mut s = match spec {
                Some(p) => PhantomSpec::from_toml_str(
                    &std::fs::read_to_string(p).map_err(|e| Error::Input(format!("cannot read {}: {e}", p.display())))?,
                )?,
                None => PhantomSpec::default(),
            };
            s.seed = cli.seed.unwrap_or(s.seed);
            s.depth = depth.unwrap_or(s.depth);
            s.crossings = crossings.unwrap_or(s.crossings);
            let p = generate(&s)?.with_corruption(*corrupt, s.seed.wrapping_add(1))?;
            io::write_bundle(&p, out)?;
            println!("{} segments, {} crossings", p.segments.len(), s.crossings);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input() { 1 } else { 2 })
        }
    }
}
