// SPDX-License-Identifier: Apache-2.0

//! End-to-end flow: autocluster, coarse shaping, then a top-down sweep over
//! target utilization and dead space until every level places legally.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::annealer::SaSchedule;
use crate::clustering::{multilevel_autocluster, ClusterParams, ClusteringError};
use crate::io::{self, IoError, MacroPlacement, MetricsReport, PlacementResult, RegionRecord};
use crate::model::{
    union_area, ClusterGraph, ClusterId, ClusterKind, DesignDatabase, InstId, PhysicalHierarchy,
    PinRef, Rect,
};
use crate::placer::{
    place_children, place_macros, wirelength, ClusterPlacementProblem, MacroPlacementProblem,
    PlacedMacro, PlacerParams,
};
use crate::shaping::{coarse_shape, fine_shape, ShapingError, ShapingParams};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no valid floorplan after {trials} trials; best attempt: {best}")]
    NoValidFloorplan { trials: usize, best: String },
}

impl PipelineError {
    /// Process exit code: 2 when the design could not be placed, 1 for bad
    /// inputs or configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::NoValidFloorplan { .. } => 2,
            _ => 1,
        }
    }
}

/// Target utilizations 0.25, 0.35, ..., 0.95.
pub fn default_utils() -> Vec<f64> {
    (0..8).map(|k| (25 + 10 * k) as f64 / 100.0).collect()
}

/// Target dead space 0.05, 0.10, ..., 0.95. A dead space of 1 would leave
/// no room for standard cells and is left out.
pub fn default_dead_spaces() -> Vec<f64> {
    (1..20).map(|k| (5 * k) as f64 / 100.0).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub cluster: ClusterParams,
    pub shaping: ShapingParams,
    pub placer: PlacerParams,
    pub schedule: SaSchedule,
    pub utils: Vec<f64>,
    pub dead_spaces: Vec<f64>,
    pub max_trials: usize,
    /// Master seed; overrides the clustering and annealing seeds.
    pub seed: u64,
    /// Record wall time in the metrics (breaks byte-identical reruns).
    pub record_wall_time: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let utils = default_utils();
        let dead_spaces = default_dead_spaces();
        RunConfig {
            cluster: ClusterParams::default(),
            shaping: ShapingParams::default(),
            placer: PlacerParams::default(),
            schedule: SaSchedule::default(),
            max_trials: utils.len() * dead_spaces.len(),
            utils,
            dead_spaces,
            seed: 0,
            record_wall_time: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        for (name, list) in [("util", &self.utils), ("dead space", &self.dead_spaces)] {
            if list.is_empty() {
                return bad(format!("{name} sweep list is empty"));
            }
            if let Some(v) = list.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
                return bad(format!("{name} value {v} outside (0, 1]"));
            }
        }
        if self.dead_spaces.iter().any(|&t| t >= 1.0) {
            return bad("dead space 1.0 leaves no room for standard cells".into());
        }
        if self.max_trials == 0 {
            return bad("max_trials must be at least 1".into());
        }
        if !(self.shaping.min_ar > 0.0 && self.shaping.min_ar <= 1.0) {
            return bad(format!("min_ar {} outside (0, 1]", self.shaping.min_ar));
        }
        if self.shaping.macro_halo < 0.0 || self.placer.macro_halo < 0.0 {
            return bad("macro halo must be non-negative".into());
        }
        if self.schedule.moves_per_iter == 0 || self.schedule.num_iters == 0 {
            return bad("annealing schedule needs at least one move and one iteration".into());
        }
        let w = self.placer.weights.as_array();
        if w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return bad("penalty weights must be finite and non-negative".into());
        }
        self.cluster.validate()?;
        Ok(())
    }

    /// The (util, dead space) pairs in sweep order, capped at `max_trials`.
    pub fn trials(&self) -> Vec<(f64, f64)> {
        self.utils
            .iter()
            .flat_map(|&u| self.dead_spaces.iter().map(move |&t| (u, t)))
            .take(self.max_trials)
            .collect()
    }

    fn seeded(&self) -> RunConfig {
        let mut c = self.clone();
        c.cluster.seed = self.seed;
        c.schedule.seed = self.seed;
        c.shaping.tiny_thr = self.cluster.tiny_thr;
        c.placer.macro_halo = self.shaping.macro_halo;
        c
    }
}

/// Everything a successful run produced, for callers that need more than
/// the on-disk result.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub result: PlacementResult,
    pub hierarchy: PhysicalHierarchy,
    pub graph: ClusterGraph,
    pub macros: Vec<PlacedMacro>,
}

struct TrialFailure {
    /// Number of placement problems solved before the failure.
    progress: usize,
    reason: String,
}

struct TrialSuccess {
    hierarchy: PhysicalHierarchy,
    macros: Vec<PlacedMacro>,
    cost_per_level: Vec<f64>,
}

fn sub_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_add((k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Run the full flow on a parsed design.
pub fn run(db: &DesignDatabase, config: &RunConfig) -> Result<PlacementResult, PipelineError> {
    run_detailed(db, config).map(|o| o.result)
}

pub fn run_detailed(db: &DesignDatabase, config: &RunConfig) -> Result<RunOutput, PipelineError> {
    config.validate()?;
    let start = Instant::now();
    let config = config.seeded();
    let canvas = db.canvas.rect();

    let (mut h, graph) = multilevel_autocluster(db, &config.cluster)?;
    coarse_shape(db, &mut h, (canvas.width(), canvas.height()), &config.shaping, &config.schedule)
        .map_err(|e| match e {
            ShapingError::Unplaceable { .. } | ShapingError::NonUniform { .. } => {
                PipelineError::NoValidFloorplan {
                    trials: 0,
                    best: e.to_string(),
                }
            }
        })?;
    let root = h.root;
    h.get_mut(root).placed_rect = Some(canvas);
    for b in h.io_bundles() {
        let p = h.get(b).bundle.as_ref().map(|b| b.position);
        if let Some((x, y)) = p {
            h.get_mut(b).placed_rect = Some(Rect::point(x, y));
        }
    }
    let inst_leaf = h.instance_to_leaf(db.instances.len());

    let trials = config.trials();
    let mut best: Option<TrialFailure> = None;
    for (k, &(util, tds)) in trials.iter().enumerate() {
        match run_trial(db, &h, &graph, &inst_leaf, util, tds, &config) {
            Ok(ok) => {
                let mut metrics = report_metrics(db, &ok.hierarchy, &graph, &ok.macros);
                metrics.num_trials = k + 1;
                metrics.util = util;
                metrics.t_dead_space = tds;
                metrics.cost_per_level = ok.cost_per_level;
                metrics.seed = config.seed;
                if config.record_wall_time {
                    metrics.wall_time = Some(start.elapsed().as_secs_f64());
                }
                let result = build_result(db, &ok.hierarchy, &ok.macros, metrics);
                return Ok(RunOutput {
                    result,
                    hierarchy: ok.hierarchy,
                    graph,
                    macros: ok.macros,
                });
            }
            Err(f) => {
                if best.as_ref().is_none_or(|b| f.progress > b.progress) {
                    best = Some(TrialFailure {
                        progress: f.progress,
                        reason: format!("util {util:.2}, dead space {tds:.2}: {}", f.reason),
                    });
                }
            }
        }
    }
    Err(PipelineError::NoValidFloorplan {
        trials: trials.len(),
        best: best.map(|b| b.reason).unwrap_or_default(),
    })
}

/// Parse the three input files and run.
pub fn run_files(
    netlist: &Path,
    library: &Path,
    floorplan: &Path,
    config: &RunConfig,
) -> Result<(DesignDatabase, PlacementResult), PipelineError> {
    let db = io::parse_design(netlist, library, floorplan)?;
    let r = run(&db, config)?;
    Ok((db, r))
}

/// Extra annealing attempts, with fresh seeds, for a parent whose children
/// found no legal placement before the trial is given up.
const PLACE_RETRIES: usize = 2;

fn run_trial(
    db: &DesignDatabase,
    base: &PhysicalHierarchy,
    graph: &ClusterGraph,
    inst_leaf: &[Option<ClusterId>],
    util: f64,
    tds: f64,
    config: &RunConfig,
) -> Result<TrialSuccess, TrialFailure> {
    let mut h = base.clone();
    let mut cost_per_level = vec![0.0; h.max_depth()];
    let mut progress = 0;
    let fail = |progress, reason: String| TrialFailure { progress, reason };
    let order = h.preorder();

    for (k, &c) in order.iter().enumerate() {
        let cl = h.get(c);
        if cl.is_io() || cl.is_leaf() {
            continue;
        }
        let name = cl.name.clone();
        if !fine_shape(&mut h, c, &db.canvas.blockages, util, tds, &config.shaping) {
            return Err(fail(progress, format!("children of `{name}` do not fit its outline")));
        }
        let problem = ClusterPlacementProblem::for_parent(db, &h, graph, c, &config.placer)
            .map_err(|e| fail(progress, e.to_string()))?;
        if problem.is_empty() {
            continue;
        }
        let mut placed = place_children(&problem, &config.schedule.with_seed(sub_seed(config.seed, k)));
        for attempt in 1..=PLACE_RETRIES {
            if placed.valid {
                break;
            }
            let seed = sub_seed(config.seed ^ (attempt as u64).wrapping_mul(0xc2b2_ae35), k);
            placed = place_children(&problem, &config.schedule.with_seed(seed));
        }
        for (&child, rect) in problem.children.iter().zip(&placed.rects) {
            h.get_mut(child).placed_rect = Some(*rect);
        }
        let depth = h.depth(c);
        if depth < cost_per_level.len() {
            cost_per_level[depth] += placed.total_cost;
        }
        if !placed.valid {
            return Err(fail(progress, format!("no legal placement of the children of `{name}`")));
        }
        progress += 1;
    }

    let mut macros = Vec::new();
    for (k, &c) in order.iter().enumerate() {
        let cl = h.get(c);
        if !(cl.is_leaf() && cl.kind == ClusterKind::Macro) {
            continue;
        }
        let problem = MacroPlacementProblem::for_leaf(db, &h, c, inst_leaf, &config.placer)
            .map_err(|e| fail(progress, e.to_string()))?;
        let sched = config.schedule.with_seed(sub_seed(config.seed ^ 0x5bd1_e995, k));
        let placed = place_macros(&problem, &sched).map_err(|e| fail(progress, e.to_string()))?;
        macros.extend(placed);
        progress += 1;
    }
    macros.sort_by_key(|m| m.inst);

    let rects: Vec<(InstId, Rect)> = macros.iter().map(|m| (m.inst, m.rect)).collect();
    if let Some(v) = legality_violations(db, &rects).into_iter().next() {
        return Err(fail(progress, v));
    }
    Ok(TrialSuccess {
        hierarchy: h,
        macros,
        cost_per_level,
    })
}

/// Slack allowed by the legality check, matching the three decimals written
/// to placement files.
pub const LEGALITY_TOL: f64 = 1e-3;

/// Problems with a set of movable macro rectangles: missing or duplicated
/// macros, macros outside the canvas, and overlaps with each other or with
/// blockages (preplaced macros included).
pub fn legality_violations(db: &DesignDatabase, placed: &[(InstId, Rect)]) -> Vec<String> {
    let mut out = Vec::new();
    let name = |i: InstId| db.instances[i.index()].name.as_str();
    let mut count = vec![0usize; db.instances.len()];
    for &(i, _) in placed {
        count[i.index()] += 1;
    }
    for m in db.movable_macros() {
        match count[m.index()] {
            1 => {}
            0 => out.push(format!("macro `{}` is not placed", name(m))),
            n => out.push(format!("macro `{}` is placed {n} times", name(m))),
        }
    }
    let canvas = db.canvas.rect();
    let overlaps = |a: &Rect, b: &Rect| {
        a.ux.min(b.ux) - a.lx.max(b.lx) > LEGALITY_TOL && a.uy.min(b.uy) - a.ly.max(b.ly) > LEGALITY_TOL
    };
    for &(i, r) in placed {
        if !canvas.contains_rect(&r, LEGALITY_TOL) {
            out.push(format!("macro `{}` crosses the canvas boundary", name(i)));
        }
        if db.canvas.blockages.iter().any(|b| overlaps(&r, b)) {
            out.push(format!("macro `{}` overlaps a blockage", name(i)));
        }
    }
    let mut by_x: Vec<&(InstId, Rect)> = placed.iter().collect();
    by_x.sort_by(|a, b| a.1.lx.total_cmp(&b.1.lx));
    for (k, a) in by_x.iter().enumerate() {
        for b in &by_x[k + 1..] {
            if b.1.lx >= a.1.ux - LEGALITY_TOL {
                break;
            }
            if overlaps(&a.1, &b.1) {
                out.push(format!("macros `{}` and `{}` overlap", name(a.0), name(b.0)));
            }
        }
    }
    out
}

/// Legality of a written placement, checked from the file data alone.
pub fn check_placement(db: &DesignDatabase, result: &PlacementResult) -> Vec<String> {
    let mut placed = Vec::new();
    let mut out = Vec::new();
    for m in &result.macro_placements {
        let Some(&i) = db.inst_by_name.get(&m.inst) else {
            out.push(format!("unknown macro `{}`", m.inst));
            continue;
        };
        if db.is_preplaced(i) {
            continue;
        }
        let ms = &db.masters[db.instances[i.index()].master.index()];
        placed.push((i, Rect::from_size(m.lx, m.ly, ms.width, ms.height)));
    }
    out.extend(legality_violations(db, &placed));
    out
}

fn build_result(
    db: &DesignDatabase,
    h: &PhysicalHierarchy,
    macros: &[PlacedMacro],
    metrics: MetricsReport,
) -> PlacementResult {
    let mut placements: Vec<(InstId, MacroPlacement)> = macros
        .iter()
        .map(|m| {
            (
                m.inst,
                MacroPlacement {
                    inst: db.instances[m.inst.index()].name.clone(),
                    lx: m.rect.lx,
                    ly: m.rect.ly,
                    orientation: m.orientation,
                },
            )
        })
        .collect();
    for p in &db.canvas.preplaced {
        placements.push((
            p.inst,
            MacroPlacement {
                inst: db.instances[p.inst.index()].name.clone(),
                lx: p.rect.lx,
                ly: p.rect.ly,
                orientation: p.orientation,
            },
        ));
    }
    placements.sort_by_key(|p| p.0);
    let regions = h
        .preorder()
        .into_iter()
        .filter(|&c| c != h.root && !h.get(c).is_io())
        .filter_map(|c| {
            let cl = h.get(c);
            cl.placed_rect.map(|rect| RegionRecord {
                cluster: cl.label.clone(),
                rect,
            })
        })
        .collect();
    PlacementResult {
        canvas: (db.canvas.width, db.canvas.height),
        macro_placements: placements.into_iter().map(|p| p.1).collect(),
        stdcell_regions: regions,
        metrics,
    }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Pin position of every instance: macros at their placed center, standard
/// cells at the center of their leaf cluster.
pub fn instance_positions(
    db: &DesignDatabase,
    h: &PhysicalHierarchy,
    macros: &[PlacedMacro],
) -> Vec<Option<(f64, f64)>> {
    let mut pos: Vec<Option<(f64, f64)>> = h
        .instance_to_leaf(db.instances.len())
        .into_iter()
        .map(|leaf| leaf.and_then(|c| h.get(c).placed_rect).map(|r| r.center()))
        .collect();
    for m in macros {
        pos[m.inst.index()] = Some(m.rect.center());
    }
    for p in &db.canvas.preplaced {
        pos[p.inst.index()] = Some(p.rect.center());
    }
    pos
}

/// Bitwidth-weighted half-perimeter wirelength over all nets. Pins without
/// a position are skipped.
pub fn design_hpwl(db: &DesignDatabase, positions: &[Option<(f64, f64)>]) -> f64 {
    let at = |p: &PinRef| match p {
        PinRef::Inst(i) => positions.get(i.index()).copied().flatten(),
        PinRef::Io(io) => db.canvas.io_pins.get(io.index()).map(|q| (q.x, q.y)),
    };
    db.nets
        .iter()
        .map(|n| {
            let pts: Vec<(f64, f64)> = std::iter::once(&n.driver)
                .chain(&n.sinks)
                .filter_map(at)
                .collect();
            if pts.len() < 2 {
                return 0.0;
            }
            let (mut lx, mut ly, mut ux, mut uy) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
            for (x, y) in pts {
                lx = lx.min(x);
                ly = ly.min(y);
                ux = ux.max(x);
                uy = uy.max(y);
            }
            n.bitwidth as f64 * ((ux - lx) + (uy - ly))
        })
        .sum()
}

/// Cluster-graph wirelength over leaf centers, through the placer's own
/// wirelength so both agree by construction.
pub fn cluster_hpwl(h: &PhysicalHierarchy, graph: &ClusterGraph) -> f64 {
    let positions: Vec<Option<(f64, f64)>> = h
        .clusters
        .iter()
        .map(|c| match &c.bundle {
            Some(b) => Some(b.position),
            None => c.placed_rect.map(|r| r.center()),
        })
        .collect();
    let edges: Vec<(usize, usize, f64)> = graph
        .iter()
        .filter(|(a, b, _)| positions[a.index()].is_some() && positions[b.index()].is_some())
        .map(|(a, b, w)| (a.index(), b.index(), w.total()))
        .collect();
    wirelength(&positions, &edges).unwrap_or(0.0)
}

/// Wirelength and dead-space figures of a final placement. Trial count,
/// sweep point and per-level costs are filled in by the caller.
pub fn report_metrics(
    db: &DesignDatabase,
    h: &PhysicalHierarchy,
    graph: &ClusterGraph,
    macros: &[PlacedMacro],
) -> MetricsReport {
    let pos = instance_positions(db, h, macros);
    let leaves: Vec<Rect> = h
        .leaves()
        .into_iter()
        .filter(|&c| !h.get(c).is_io())
        .filter_map(|c| h.get(c).placed_rect)
        .collect();
    let canvas_area = db.canvas.width * db.canvas.height;
    let dead = if canvas_area > 0.0 {
        (1.0 - union_area(&leaves) / canvas_area).clamp(0.0, 1.0)
    } else {
        0.0
    };
    MetricsReport {
        hpwl: design_hpwl(db, &pos),
        cluster_hpwl: cluster_hpwl(h, graph),
        dead_space_frac: dead,
        ..MetricsReport::default()
    }
}

// ---------------------------------------------------------------------------
// Benchmark generator
// ---------------------------------------------------------------------------

/// Shape of a synthetic hierarchical design.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchSpec {
    pub num_macros: usize,
    /// Macro footprints; banks cycle through them.
    pub macro_dims: Vec<(u32, u32)>,
    /// Depth of the module tree below the top module.
    pub hier_depth: usize,
    /// Children per non-leaf module.
    pub fanout: usize,
    pub seed: u64,
    /// Standard cells generated per macro.
    pub std_per_macro: usize,
    /// (macro area + standard-cell area) / canvas area.
    pub target_util: f64,
    /// Standard-cell share of the canvas area.
    pub std_fraction: f64,
    /// IO pins per canvas edge.
    pub pins_per_edge: usize,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            num_macros: 16,
            macro_dims: vec![(40, 30), (30, 30)],
            hier_depth: 2,
            fanout: 3,
            seed: 1,
            std_per_macro: 40,
            target_util: 0.62,
            std_fraction: 0.06,
            pins_per_edge: 8,
        }
    }
}

impl BenchSpec {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.macro_dims.is_empty() || self.macro_dims.iter().any(|d| d.0 == 0 || d.1 == 0) {
            return bad("macro_dims needs at least one positive footprint");
        }
        if self.hier_depth == 0 || self.fanout == 0 {
            return bad("hier_depth and fanout must be at least 1");
        }
        if !(self.target_util > 0.0 && self.target_util < 1.0) {
            return bad("target_util must lie in (0, 1)");
        }
        if !(self.std_fraction > 0.0 && self.std_fraction < self.target_util) {
            return bad("std_fraction must lie in (0, target_util)");
        }
        Ok(())
    }

    /// Parse `key value` lines (`#` comments allowed). Keys are the field
    /// names; `macro_dims` takes `WxH` items separated by commas.
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let mut s = BenchSpec::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| PipelineError::Config(format!("bench spec line {}: {m}", no + 1));
            let (k, v) = line
                .split_once(char::is_whitespace)
                .map(|(k, v)| (k, v.trim()))
                .ok_or_else(|| err(format!("expected `key value`, got `{line}`")))?;
            let num = |v: &str| v.parse::<f64>().map_err(|_| err(format!("bad number `{v}`")));
            let int = |v: &str| v.parse::<usize>().map_err(|_| err(format!("bad integer `{v}`")));
            match k {
                "num_macros" => s.num_macros = int(v)?,
                "hier_depth" => s.hier_depth = int(v)?,
                "fanout" => s.fanout = int(v)?,
                "seed" => s.seed = v.parse().map_err(|_| err(format!("bad seed `{v}`")))?,
                "std_per_macro" => s.std_per_macro = int(v)?,
                "target_util" => s.target_util = num(v)?,
                "std_fraction" => s.std_fraction = num(v)?,
                "pins_per_edge" => s.pins_per_edge = int(v)?,
                "macro_dims" => {
                    s.macro_dims = v
                        .split(',')
                        .map(|d| {
                            let (w, h) = d
                                .trim()
                                .split_once('x')
                                .ok_or_else(|| err(format!("bad footprint `{d}`")))?;
                            Ok((
                                w.parse().map_err(|_| err(format!("bad width `{w}`")))?,
                                h.parse().map_err(|_| err(format!("bad height `{h}`")))?,
                            ))
                        })
                        .collect::<Result<_, PipelineError>>()?;
                }
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratedDesign {
    pub netlist: String,
    pub library: String,
    pub floorplan: String,
}

impl GeneratedDesign {
    pub const NETLIST: &'static str = "design.net";
    pub const LIBRARY: &'static str = "design.lib";
    pub const FLOORPLAN: &'static str = "design.fp";

    pub fn write_to(&self, dir: &Path) -> Result<(), IoError> {
        std::fs::create_dir_all(dir).map_err(|source| IoError::File {
            path: dir.to_path_buf(),
            source,
        })?;
        for (name, text) in [
            (Self::NETLIST, &self.netlist),
            (Self::LIBRARY, &self.library),
            (Self::FLOORPLAN, &self.floorplan),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|source| IoError::File { path, source })?;
        }
        Ok(())
    }

    pub fn parse(&self) -> Result<DesignDatabase, IoError> {
        io::parse_design_str(&self.netlist, &self.library, &self.floorplan)
    }
}

struct GenModule {
    path: String,
    tag: String,
    parent: Option<usize>,
    children: Vec<usize>,
    /// Cell names; every fourth one is a register.
    cells: Vec<String>,
    macros: Vec<String>,
}

impl GenModule {
    fn reg(&self, k: usize) -> Option<&str> {
        let regs = self.cells.len().div_ceil(4);
        (regs > 0).then(|| self.cells[4 * (k % regs)].as_str())
    }
}

/// Deterministic synthetic design: a balanced module tree with banks of
/// equal macros in most leaves, register-bounded logic around every macro,
/// buses between sibling modules and IO pins feeding the top level.
pub fn generate_benchmark(spec: &BenchSpec) -> Result<GeneratedDesign, PipelineError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Module tree.
    let mut mods = vec![GenModule {
        path: "top".into(),
        tag: "t".into(),
        parent: None,
        children: Vec::new(),
        cells: Vec::new(),
        macros: Vec::new(),
    }];
    let mut frontier = vec![0usize];
    for _ in 0..spec.hier_depth {
        let mut next = Vec::new();
        for &p in &frontier {
            for k in 0..spec.fanout {
                let id = mods.len();
                let (path, tag) = (format!("{}/m{k}", mods[p].path), format!("{}{k}", mods[p].tag));
                mods.push(GenModule {
                    path,
                    tag,
                    parent: Some(p),
                    children: Vec::new(),
                    cells: Vec::new(),
                    macros: Vec::new(),
                });
                mods[p].children.push(id);
                next.push(id);
            }
        }
        frontier = next;
    }
    let leaves = frontier;

    // Macro banks: about three quarters of the leaves hold macros.
    let mut hosts = leaves.clone();
    hosts.shuffle(&mut rng);
    let nhosts = ((leaves.len() * 3).div_ceil(4)).clamp(1, spec.num_macros.max(1));
    hosts.truncate(nhosts);
    hosts.sort_unstable();
    let mut macro_master = Vec::new();
    for k in 0..spec.num_macros {
        let host = hosts[k % hosts.len()];
        let bank = mods[host].macros.len() / 16;
        let dim = (hosts.iter().position(|&h| h == host).unwrap() + bank) % spec.macro_dims.len();
        let name = format!("{}_ram{}", mods[host].tag, mods[host].macros.len());
        mods[host].macros.push(name);
        macro_master.push(dim);
    }

    // Standard cells: 90 % in leaves, the rest as glue in inner modules.
    // Logic-only leaves weigh three times a macro leaf.
    let num_std = (spec.num_macros * spec.std_per_macro).max(leaves.len() * 8);
    let inner: Vec<usize> = (0..mods.len()).filter(|m| !mods[*m].children.is_empty()).collect();
    let glue = if inner.is_empty() { 0 } else { num_std / 10 };
    let weight = |m: usize| if mods[m].macros.is_empty() { 3 } else { 1 };
    let total_weight: usize = leaves.iter().map(|&l| weight(l)).sum();
    let mut counts = vec![0usize; mods.len()];
    for &l in &leaves {
        counts[l] = (num_std - glue) * weight(l) / total_weight;
    }
    let assigned: usize = leaves.iter().map(|&l| counts[l]).sum();
    counts[leaves[0]] += num_std - glue - assigned;
    for (k, &m) in inner.iter().enumerate() {
        counts[m] = glue / inner.len() + usize::from(k < glue % inner.len());
    }
    for (m, &n) in counts.iter().enumerate() {
        let tag = mods[m].tag.clone();
        mods[m].cells = (0..n).map(|k| format!("{tag}_c{k}")).collect();
    }

    // Library and canvas sized from the macro area.
    let macro_area: f64 = macro_master
        .iter()
        .map(|&d| (spec.macro_dims[d].0 * spec.macro_dims[d].1) as f64)
        .sum();
    let canvas_area = macro_area / (spec.target_util - spec.std_fraction);
    let std_cell_area = spec.std_fraction * canvas_area / num_std.max(1) as f64;
    let side = canvas_area.sqrt().ceil();

    let mut lib = String::new();
    for (k, d) in spec.macro_dims.iter().enumerate() {
        let _ = writeln!(lib, "MACRO SRAM{k} {} {}", d.0, d.1);
    }
    let _ = writeln!(lib, "STDCELL INV {std_cell_area:.6}");
    let _ = writeln!(lib, "STDCELL DFF {std_cell_area:.6} FF");

    let mut net = String::new();
    for m in &mods {
        let parent = m.parent.map_or("-".to_string(), |p| mods[p].path.clone());
        let _ = writeln!(net, "MODULE {} PARENT {parent}", m.path);
    }
    let mut mi = 0;
    for m in &mods {
        for (k, c) in m.cells.iter().enumerate() {
            let master = if k % 4 == 0 { "DFF" } else { "INV" };
            let _ = writeln!(net, "INST {c} {master} {}", m.path);
        }
        for r in &m.macros {
            let _ = writeln!(net, "INST {r} SRAM{} {}", macro_master[mi], m.path);
            mi += 1;
        }
    }

    let mut nets = 0usize;
    let mut add = |text: &mut String, w: u32, driver: &str, sinks: &[&str]| {
        let _ = write!(text, "NET n{nets} WIDTH {w} {driver}");
        for s in sinks {
            let _ = write!(text, " {s}");
        }
        text.push('\n');
        nets += 1;
    };
    for m in &mods {
        // Local logic: each cell is driven from a short window behind it.
        for k in 1..m.cells.len() {
            let lo = k.saturating_sub(8);
            let d = rng.gen_range(lo..k);
            let mut sinks = vec![format!("{}.i", m.cells[k])];
            if rng.gen_bool(0.3) {
                let e = rng.gen_range(lo..k + 1).min(m.cells.len() - 1);
                if e != k && e != d {
                    sinks.push(format!("{}.i2", m.cells[e]));
                }
            }
            let sinks: Vec<&str> = sinks.iter().map(String::as_str).collect();
            add(&mut net, 1, &format!("{}.o", m.cells[d]), &sinks);
        }
        // Register-bounded macro access.
        for (k, r) in m.macros.iter().enumerate() {
            if let (Some(a), Some(b)) = (m.reg(2 * k), m.reg(2 * k + 1)) {
                add(&mut net, 32, &format!("{a}.q"), &[&format!("{r}.d")]);
                add(&mut net, 32, &format!("{r}.q"), &[&format!("{b}.d")]);
            }
        }
    }
    // Buses between siblings and from each child to its parent's glue.
    for p in 0..mods.len() {
        let ch = mods[p].children.clone();
        for w in ch.windows(2) {
            if let (Some(a), Some(b)) = (mods[w[0]].reg(1), mods[w[1]].reg(2)) {
                add(&mut net, 16, &format!("{a}.q"), &[&format!("{b}.d")]);
            }
        }
        for &c in &ch {
            if let (Some(a), Some(b)) = (mods[c].reg(3), mods[p].reg(c)) {
                add(&mut net, 8, &format!("{a}.q"), &[&format!("{b}.d")]);
            }
        }
    }

    let mut fp = format!("CANVAS {side} {side}\n");
    let per_edge = spec.pins_per_edge;
    let mut pin = 0usize;
    let firsts: Vec<usize> = mods[0].children.clone();
    for edge in 0..4 {
        for k in 0..per_edge {
            let t = side * (k as f64 + 0.5) / per_edge as f64;
            let (x, y) = match edge {
                0 => (t, 0.0),
                1 => (side, t),
                2 => (t, side),
                _ => (0.0, t),
            };
            let name = format!("p{pin}");
            let _ = writeln!(fp, "IOPIN {name} {x:.3} {y:.3}");
            // Pins on each edge talk to one top-level module.
            let target = firsts[(edge * firsts.len() / 4).min(firsts.len() - 1)];
            let leafish = descend(&mods, target, k);
            if let Some(r) = mods[leafish].reg(k + 5) {
                if pin.is_multiple_of(2) {
                    add(&mut net, 8, &format!("PIN {name}"), &[&format!("{r}.d")]);
                } else {
                    add(&mut net, 8, &format!("{r}.q"), &[&format!("PIN {name}")]);
                }
            }
            pin += 1;
        }
    }

    Ok(GeneratedDesign {
        netlist: net,
        library: lib,
        floorplan: fp,
    })
}

/// Follow child `k mod fanout` down to a leaf.
fn descend(mods: &[GenModule], mut m: usize, k: usize) -> usize {
    while !mods[m].children.is_empty() {
        let ch = &mods[m].children;
        m = ch[k % ch.len()];
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModuleId;

    fn fast_config() -> RunConfig {
        RunConfig {
            schedule: SaSchedule {
                moves_per_iter: 60,
                num_iters: 40,
                num_workers: 2,
                ..SaSchedule::default()
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn sweep_lists() {
        let u = default_utils();
        assert_eq!(u.len(), 8);
        assert_eq!((u[0], u[7]), (0.25, 0.95));
        let t = default_dead_spaces();
        assert_eq!(t.len(), 19);
        assert_eq!((t[0], t[18]), (0.05, 0.95));
        let c = RunConfig::default();
        let trials = c.trials();
        assert_eq!(trials.len(), 152);
        // Dead space varies fastest.
        assert_eq!(trials[1], (0.25, 0.10));
        assert_eq!(trials[19], (0.35, 0.05));
    }

    #[test]
    fn config_validation() {
        let mut c = RunConfig::default();
        c.utils.clear();
        assert!(matches!(c.validate(), Err(PipelineError::Config(_))));
        let c = RunConfig { dead_spaces: vec![1.0], ..RunConfig::default() };
        assert!(c.validate().is_err());
        let c = RunConfig { utils: vec![1.2], ..RunConfig::default() };
        assert!(c.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }

    #[test]
    fn generator_counts_and_determinism() {
        let spec = BenchSpec {
            num_macros: 133,
            hier_depth: 3,
            fanout: 3,
            ..BenchSpec::default()
        };
        let a = generate_benchmark(&spec).unwrap();
        assert_eq!(a, generate_benchmark(&spec).unwrap());
        let db = a.parse().unwrap();
        assert_eq!(db.movable_macros().len(), 133);
        assert_eq!(db.num_std_cells(), 133 * spec.std_per_macro);
        let depth = |mut m: ModuleId| {
            let mut d = 0;
            while let Some(p) = db.modules[m.index()].parent {
                m = p;
                d += 1;
            }
            d
        };
        let max = (0..db.modules.len()).map(|m| depth(ModuleId(m))).max().unwrap();
        assert_eq!(max, 3);
        let other = generate_benchmark(&BenchSpec { seed: 2, ..spec }).unwrap();
        assert_ne!(a.netlist, other.netlist);
    }

    #[test]
    fn generator_density() {
        let spec = BenchSpec::default();
        let db = generate_benchmark(&spec).unwrap().parse().unwrap();
        let used: f64 = db.instances.iter().map(|i| db.masters[i.master.index()].area()).sum();
        let u = used / (db.canvas.width * db.canvas.height);
        assert!((0.6..=0.75).contains(&u), "utilization {u}");
    }

    #[test]
    fn bench_spec_parsing() {
        let s = BenchSpec::parse("num_macros 7\nmacro_dims 10x20, 5x5\n# c\nhier_depth 2\nfanout 2\nseed 9\n").unwrap();
        assert_eq!(s.num_macros, 7);
        assert_eq!(s.macro_dims, vec![(10, 20), (5, 5)]);
        assert_eq!(s.seed, 9);
        assert!(BenchSpec::parse("bogus 1\n").is_err());
        assert!(BenchSpec::parse("macro_dims 10by20\n").is_err());
    }

    #[test]
    fn hpwl_of_two_point_net() {
        let db = io::parse_design_str(
            "MODULE top PARENT -\nNET n WIDTH 2 PIN a PIN b\n",
            "STDCELL INV 1\n",
            "CANVAS 10 10\nIOPIN a 0 2\nIOPIN b 10 7\n",
        )
        .unwrap();
        assert_eq!(design_hpwl(&db, &[]), 2.0 * (10.0 + 5.0));
        let empty = io::parse_design_str("MODULE top PARENT -\n", "STDCELL INV 1\n", "CANVAS 10 10\n").unwrap();
        assert_eq!(design_hpwl(&empty, &[]), 0.0);
    }

    #[test]
    fn small_generated_design_places_legally() {
        let spec = BenchSpec::default();
        let db = generate_benchmark(&spec).unwrap().parse().unwrap();
        let out = run_detailed(&db, &fast_config()).unwrap();
        assert!(check_placement(&db, &out.result).is_empty());
        assert_eq!(out.result.macro_placements.len(), 16);
        assert!(out.result.metrics.num_trials >= 1);
        assert!(out.result.metrics.hpwl > 0.0);
        let again = run(&db, &fast_config()).unwrap();
        assert_eq!(io::format_placement(&again), io::format_placement(&out.result));
        assert_eq!(io::format_metrics(&again.metrics), io::format_metrics(&out.result.metrics));
    }

    #[test]
    fn macro_larger_than_canvas_fails() {
        let db = io::parse_design_str(
            "MODULE top PARENT -\nINST r BIG top\nINST c INV top\nNET n c.o r.d\n",
            "MACRO BIG 200 50\nSTDCELL INV 1\n",
            "CANVAS 100 100\n",
        )
        .unwrap();
        let e = run(&db, &fast_config()).unwrap_err();
        assert_eq!(e.exit_code(), 2, "{e}");
    }

    #[test]
    fn trivial_design_succeeds_first_trial() {
        let db = io::parse_design_str(
            "MODULE top PARENT -\nINST r RAM top\nINST c INV top\nNET n c.o r.d\n",
            "MACRO RAM 10 10\nSTDCELL INV 1\n",
            "CANVAS 100 100\nIOPIN a 0 50\n",
        )
        .unwrap();
        let r = run(&db, &fast_config()).unwrap();
        assert_eq!(r.metrics.num_trials, 1);
        assert!(check_placement(&db, &r).is_empty());
    }

    #[test]
    fn legality_catches_overlaps() {
        let db = io::parse_design_str(
            "MODULE top PARENT -\nINST a RAM top\nINST b RAM top\n",
            "MACRO RAM 10 10\n",
            "CANVAS 100 100\nBLOCKAGE 80 80 100 100\n",
        )
        .unwrap();
        let ok = [(InstId(0), Rect::from_size(0.0, 0.0, 10.0, 10.0)), (InstId(1), Rect::from_size(10.0, 0.0, 10.0, 10.0))];
        assert!(legality_violations(&db, &ok).is_empty());
        let bad = [(InstId(0), Rect::from_size(0.0, 0.0, 10.0, 10.0)), (InstId(1), Rect::from_size(5.0, 5.0, 10.0, 10.0))];
        assert_eq!(legality_violations(&db, &bad).len(), 1);
        let out = [(InstId(0), Rect::from_size(95.0, 0.0, 10.0, 10.0)), (InstId(1), Rect::from_size(85.0, 85.0, 10.0, 10.0))];
        assert_eq!(legality_violations(&db, &out).len(), 2);
        assert_eq!(legality_violations(&db, &ok[..1]).len(), 1);
    }
}
