// SPDX-License-Identifier: Apache-2.0

//! `hiermp` command line: place a design, generate synthetic benchmarks and
//! render placements as SVG.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use hiermp::io;
use hiermp::pipeline::{self, BenchSpec, GeneratedDesign, PipelineError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "hiermp", version, about = "Hierarchical macro placer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Place the macros of a design.
    Place(Box<PlaceArgs>),
    /// Write a synthetic hierarchical design (netlist, library, floorplan).
    GenBench(GenBenchArgs),
    /// Draw a placement file as SVG.
    Render(RenderArgs),
}

#[derive(Args, Debug)]
struct DesignFiles {
    #[arg(long)]
    netlist: PathBuf,
    #[arg(long)]
    lib: PathBuf,
    #[arg(long)]
    floorplan: PathBuf,
}

#[derive(Args, Debug)]
struct PlaceArgs {
    #[command(flatten)]
    design: DesignFiles,
    /// Placement output file.
    #[arg(long)]
    out: PathBuf,
    /// Metrics output file (default: `<out>.metrics`).
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Also render the result to this SVG file.
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Cluster outline depth drawn in the SVG.
    #[arg(long, default_value_t = 1)]
    level: usize,
    /// Record wall time in the metrics file (makes reruns differ).
    #[arg(long)]
    record_time: bool,
    #[command(flatten)]
    flags: PlaceFlags,
}

#[derive(Args, Debug)]
struct PlaceFlags {
    #[arg(long)]
    num_level: Option<usize>,
    #[arg(long)]
    level_ratio: Option<f64>,
    #[arg(long)]
    num_segment: Option<usize>,
    #[arg(long)]
    epsilon_net: Option<f64>,
    #[arg(long)]
    num_hop_thr: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    min_ar: Option<f64>,
    #[arg(long)]
    tiny_thr: Option<usize>,
    #[arg(long)]
    macro_halo: Option<f64>,
    #[arg(long)]
    sa_moves: Option<usize>,
    #[arg(long)]
    sa_iters: Option<usize>,
    #[arg(long)]
    sa_workers: Option<usize>,
    #[arg(long)]
    w_area: Option<f64>,
    #[arg(long)]
    w_wl: Option<f64>,
    #[arg(long)]
    w_outline: Option<f64>,
    #[arg(long)]
    w_bias: Option<f64>,
    #[arg(long)]
    w_blockage: Option<f64>,
    #[arg(long)]
    w_guidance: Option<f64>,
    #[arg(long)]
    w_notch: Option<f64>,
    #[arg(long)]
    pin_access_depth: Option<f64>,
    #[arg(long)]
    notch_min_dim: Option<f64>,
    /// Stop the util / dead-space sweep after this many trials.
    #[arg(long)]
    max_trials: Option<usize>,
}

impl PlaceFlags {
    fn config(&self) -> RunConfig {
        let mut c = RunConfig {
            seed: self.seed,
            ..RunConfig::default()
        };
        macro_rules! set {
            ($flag:ident => $($field:ident).+) => {
                if let Some(v) = self.$flag {
                    c.$($field).+ = v;
                }
            };
        }
        set!(num_level => cluster.num_level);
        set!(level_ratio => cluster.level_ratio);
        set!(num_segment => cluster.num_segment);
        set!(epsilon_net => cluster.epsilon_net);
        set!(num_hop_thr => cluster.num_hop_thr);
        set!(min_ar => shaping.min_ar);
        set!(tiny_thr => cluster.tiny_thr);
        set!(macro_halo => shaping.macro_halo);
        set!(sa_moves => schedule.moves_per_iter);
        set!(sa_iters => schedule.num_iters);
        set!(sa_workers => schedule.num_workers);
        set!(w_area => placer.weights.area);
        set!(w_wl => placer.weights.wl);
        set!(w_outline => placer.weights.outline);
        set!(w_bias => placer.weights.bias);
        set!(w_blockage => placer.weights.blockage);
        set!(w_guidance => placer.weights.guidance);
        set!(w_notch => placer.weights.notch);
        set!(max_trials => max_trials);
        c.placer.pin_access_depth = self.pin_access_depth;
        c.placer.notch_min_dim = self.notch_min_dim;
        c
    }
}

#[derive(Args, Debug)]
struct GenBenchArgs {
    /// Spec file with `key value` lines; flags below override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    num_macros: Option<usize>,
    #[arg(long)]
    hier_depth: Option<usize>,
    #[arg(long)]
    fanout: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Footprints as `WxH,WxH,...`.
    #[arg(long)]
    macro_dims: Option<String>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    placement: PathBuf,
    #[arg(long)]
    svg: PathBuf,
    #[command(flatten)]
    design: DesignFiles,
    #[arg(long, default_value_t = 1)]
    level: usize,
}

/// Failure with its process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 1, error }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure {
            code: e.exit_code() as u8,
            error: e.into(),
        }
    }
}

fn place(args: &PlaceArgs) -> Result<(), Failure> {
    let mut config = args.flags.config();
    config.record_wall_time = args.record_time;
    config.validate()?;
    let d = &args.design;
    let db = io::parse_design(&d.netlist, &d.lib, &d.floorplan).map_err(PipelineError::from)?;
    let result = pipeline::run(&db, &config)?;
    io::write_placement(&result, &args.out).context("writing placement")?;
    let metrics = args.metrics.clone().unwrap_or_else(|| with_suffix(&args.out, "metrics"));
    io::write_metrics(&result.metrics, &metrics).context("writing metrics")?;
    if let Some(svg) = &args.svg {
        io::write_svg(&db, &result, svg, args.level).context("writing svg")?;
    }
    eprintln!(
        "placed {} macros in {} trial(s) (util {}, dead space {}), hpwl {:.3}",
        result.macro_placements.len(),
        result.metrics.num_trials,
        result.metrics.util,
        result.metrics.t_dead_space,
        result.metrics.hpwl
    );
    Ok(())
}

fn with_suffix(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn gen_bench(args: &GenBenchArgs) -> Result<(), Failure> {
    let mut spec = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))?;
            BenchSpec::parse(&text)?
        }
        None => BenchSpec::default(),
    };
    if let Some(v) = args.num_macros {
        spec.num_macros = v;
    }
    if let Some(v) = args.hier_depth {
        spec.hier_depth = v;
    }
    if let Some(v) = args.fanout {
        spec.fanout = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    if let Some(d) = &args.macro_dims {
        spec = BenchSpec::parse(&format!("macro_dims {d}")).map(|s| BenchSpec {
            macro_dims: s.macro_dims,
            ..spec
        })?;
    }
    let design = pipeline::generate_benchmark(&spec)?;
    design.write_to(&args.out_dir).map_err(PipelineError::from)?;
    eprintln!(
        "wrote {}, {}, {} to {}",
        GeneratedDesign::NETLIST,
        GeneratedDesign::LIBRARY,
        GeneratedDesign::FLOORPLAN,
        args.out_dir.display()
    );
    Ok(())
}

fn render(args: &RenderArgs) -> Result<(), Failure> {
    let d = &args.design;
    let db = io::parse_design(&d.netlist, &d.lib, &d.floorplan).map_err(PipelineError::from)?;
    let result = io::parse_placement(&args.placement).map_err(PipelineError::from)?;
    io::write_svg(&db, &result, &args.svg, args.level).map_err(PipelineError::from)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Place(a) => place(a),
        Command::GenBench(a) => gen_bench(a),
        Command::Render(a) => render(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
