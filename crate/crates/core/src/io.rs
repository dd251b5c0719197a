// SPDX-License-Identifier: Apache-2.0

//! Text formats: library, netlist, floorplan, placement, metrics, and SVG
//! rendering.
//!
//! All inputs are line oriented. Blank lines and lines starting with `#` are
//! ignored. Coordinates are written with three decimals.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::{
    star_decompose, DesignDatabase, Guidance, GuidanceTarget, InstId, Instance, IoPin,
    IoPinId, LogicalModule, Master, MasterId, MasterKind, ModuleId, Net, NetId, Orientation,
    PinRef, PreplacedMacro, Rect,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{file}:{line}:{col}: syntax error: {msg}")]
    Syntax {
        file: String,
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("{file}:{line}: unknown {kind} `{name}`")]
    Dangling {
        file: String,
        line: usize,
        kind: &'static str,
        name: String,
    },
    #[error("{file}:{line}: duplicate {kind} `{name}`")]
    Duplicate {
        file: String,
        line: usize,
        kind: &'static str,
        name: String,
    },
    #[error("io pin `{pin}` at ({x}, {y}) is off the canvas boundary")]
    PinOffBoundary { pin: String, x: f64, y: f64 },
    #[error("{what} lies outside the canvas")]
    OutsideCanvas { what: String },
    #[error("module `{module}` declares {declared} instances but holds {actual}")]
    CountMismatch {
        module: String,
        declared: usize,
        actual: usize,
    },
    #[error("invalid design: {0}")]
    Invalid(String),
    #[error("render level {level} is deeper than the hierarchy ({depth})")]
    LevelTooDeep { level: usize, depth: usize },
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn read(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Whitespace tokens of a line with their 1-based columns.
fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s + 1, &line[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

struct Line<'a> {
    file: &'a str,
    no: usize,
    toks: Vec<(usize, &'a str)>,
    end_col: usize,
}

impl<'a> Line<'a> {
    fn err(&self, col: usize, msg: impl Into<String>) -> IoError {
        IoError::Syntax {
            file: self.file.to_string(),
            line: self.no,
            col,
            msg: msg.into(),
        }
    }

    fn keyword(&self) -> &'a str {
        self.toks[0].1
    }

    fn tok(&self, k: usize, what: &str) -> Result<&'a str, IoError> {
        self.toks
            .get(k)
            .map(|t| t.1)
            .ok_or_else(|| self.err(self.end_col, format!("expected {what}")))
    }

    fn num(&self, k: usize, what: &str) -> Result<f64, IoError> {
        let s = self.tok(k, what)?;
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(self.toks[k].0, format!("expected number for {what}, got `{s}`"))),
        }
    }

    fn count(&self, k: usize, what: &str) -> Result<usize, IoError> {
        let s = self.tok(k, what)?;
        s.parse::<usize>()
            .map_err(|_| self.err(self.toks[k].0, format!("expected integer for {what}, got `{s}`")))
    }

    fn arity(&self, min: usize, max: usize) -> Result<(), IoError> {
        let n = self.toks.len();
        if n < min {
            return Err(self.err(self.end_col, "too few fields"));
        }
        if n > max {
            return Err(self.err(self.toks[max].0, "unexpected field"));
        }
        Ok(())
    }

    fn dangling(&self, kind: &'static str, name: &str) -> IoError {
        IoError::Dangling {
            file: self.file.to_string(),
            line: self.no,
            kind,
            name: name.to_string(),
        }
    }

    fn duplicate(&self, kind: &'static str, name: &str) -> IoError {
        IoError::Duplicate {
            file: self.file.to_string(),
            line: self.no,
            kind,
            name: name.to_string(),
        }
    }
}

fn lines<'a>(file: &'a str, text: &'a str) -> impl Iterator<Item = Line<'a>> {
    text.lines().enumerate().filter_map(move |(k, raw)| {
        let trimmed = raw.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            return None;
        }
        Some(Line {
            file,
            no: k + 1,
            toks: tokens(raw),
            end_col: raw.trim_end().len() + 1,
        })
    })
}

fn positive(line: &Line, k: usize, what: &str) -> Result<f64, IoError> {
    let v = line.num(k, what)?;
    if v <= 0.0 {
        return Err(line.err(line.toks[k].0, format!("{what} must be positive")));
    }
    Ok(v)
}

fn parse_library(db: &mut DesignDatabase, file: &str, text: &str) -> Result<(), IoError> {
    for line in lines(file, text) {
        let master = match line.keyword() {
            "MACRO" => {
                line.arity(4, 4)?;
                Master {
                    name: line.tok(1, "name")?.to_string(),
                    kind: MasterKind::Macro,
                    width: positive(&line, 2, "width")?,
                    height: positive(&line, 3, "height")?,
                    is_register: false,
                }
            }
            "STDCELL" => {
                line.arity(3, 4)?;
                let area = positive(&line, 2, "area")?;
                let is_register = match line.toks.get(3) {
                    None => false,
                    Some(&(_, "FF")) => true,
                    Some(&(col, other)) => {
                        return Err(line.err(col, format!("expected `FF`, got `{other}`")))
                    }
                };
                Master {
                    name: line.tok(1, "name")?.to_string(),
                    kind: MasterKind::StdCell,
                    width: area.sqrt(),
                    height: area.sqrt(),
                    is_register,
                }
            }
            other => return Err(line.err(line.toks[0].0, format!("unknown record `{other}`"))),
        };
        if db.master_by_name.contains_key(&master.name) {
            return Err(line.duplicate("master", &master.name));
        }
        db.master_by_name
            .insert(master.name.clone(), MasterId(db.masters.len()));
        db.masters.push(master);
    }
    Ok(())
}

struct FloorplanRaw<'a> {
    lines: Vec<Line<'a>>,
}

fn parse_floorplan_canvas<'a>(
    db: &mut DesignDatabase,
    file: &'a str,
    text: &'a str,
) -> Result<FloorplanRaw<'a>, IoError> {
    let mut deferred = Vec::new();
    let mut canvas_seen = false;
    let mut pin_names: BTreeMap<String, ()> = BTreeMap::new();
    for line in lines(file, text) {
        match line.keyword() {
            "CANVAS" => {
                line.arity(3, 3)?;
                if canvas_seen {
                    return Err(line.err(1, "duplicate CANVAS"));
                }
                canvas_seen = true;
                db.canvas.width = positive(&line, 1, "width")?;
                db.canvas.height = positive(&line, 2, "height")?;
            }
            "IOPIN" => {
                line.arity(4, 4)?;
                let name = line.tok(1, "pin name")?.to_string();
                if pin_names.insert(name.clone(), ()).is_some() {
                    return Err(line.duplicate("io pin", &name));
                }
                db.canvas.io_pins.push(IoPin {
                    name,
                    x: line.num(2, "x")?,
                    y: line.num(3, "y")?,
                });
            }
            "BLOCKAGE" => {
                line.arity(5, 5)?;
                let r = Rect::new(
                    line.num(1, "lx")?,
                    line.num(2, "ly")?,
                    line.num(3, "ux")?,
                    line.num(4, "uy")?,
                );
                if !r.is_valid() {
                    return Err(line.err(line.toks[1].0, "blockage has lx > ux or ly > uy"));
                }
                db.canvas.blockages.push(r);
            }
            "PREPLACED" | "GUIDANCE" => deferred.push(line),
            other => return Err(line.err(line.toks[0].0, format!("unknown record `{other}`"))),
        }
    }
    if !canvas_seen {
        return Err(IoError::Syntax {
            file: file.to_string(),
            line: 0,
            col: 0,
            msg: "missing CANVAS record".into(),
        });
    }
    let canvas = db.canvas.clone();
    for p in &canvas.io_pins {
        if !canvas.on_boundary(p.x, p.y) {
            return Err(IoError::PinOffBoundary {
                pin: p.name.clone(),
                x: p.x,
                y: p.y,
            });
        }
    }
    for b in &canvas.blockages {
        if !canvas.rect().contains_rect(b, 1e-9) {
            return Err(IoError::OutsideCanvas {
                what: format!("blockage ({}, {}, {}, {})", b.lx, b.ly, b.ux, b.uy),
            });
        }
    }
    Ok(FloorplanRaw { lines: deferred })
}

fn resolve_floorplan_refs(db: &mut DesignDatabase, raw: FloorplanRaw) -> Result<(), IoError> {
    for line in raw.lines {
        match line.keyword() {
            "PREPLACED" => {
                line.arity(5, 5)?;
                let name = line.tok(1, "instance")?;
                let inst = *db
                    .inst_by_name
                    .get(name)
                    .ok_or_else(|| line.dangling("instance", name))?;
                let m = &db.masters[db.instances[inst.index()].master.index()];
                if m.kind != MasterKind::Macro {
                    return Err(line.err(line.toks[1].0, format!("`{name}` is not a macro")));
                }
                let orient_tok = line.tok(4, "orientation")?;
                let orientation = Orientation::parse(orient_tok).ok_or_else(|| {
                    line.err(line.toks[4].0, format!("bad orientation `{orient_tok}`"))
                })?;
                let rect = Rect::from_size(line.num(2, "lx")?, line.num(3, "ly")?, m.width, m.height);
                if !db.canvas.rect().contains_rect(&rect, 1e-9) {
                    return Err(IoError::OutsideCanvas {
                        what: format!("preplaced macro `{name}`"),
                    });
                }
                if db.canvas.preplaced.iter().any(|p| p.inst == inst) {
                    return Err(line.duplicate("preplaced macro", name));
                }
                db.canvas.preplaced.push(PreplacedMacro {
                    inst,
                    rect,
                    orientation,
                });
                db.canvas.blockages.push(rect);
            }
            "GUIDANCE" => {
                line.arity(6, 6)?;
                let name = line.tok(1, "target")?;
                let target = if let Some(&i) = db.inst_by_name.get(name) {
                    GuidanceTarget::Instance(i)
                } else if let Some(&m) = db.module_by_name.get(name) {
                    GuidanceTarget::Module(m)
                } else {
                    return Err(line.dangling("guidance target", name));
                };
                let rect = Rect::new(
                    line.num(2, "lx")?,
                    line.num(3, "ly")?,
                    line.num(4, "ux")?,
                    line.num(5, "uy")?,
                );
                if !rect.is_valid() {
                    return Err(line.err(line.toks[2].0, "guidance has lx > ux or ly > uy"));
                }
                db.canvas.guidance.push(Guidance { target, rect });
            }
            _ => unreachable!(),
        }
    }
    Ok(())
}

fn parse_pin(
    line: &Line,
    k: &mut usize,
    db: &DesignDatabase,
    pins: &BTreeMap<&str, IoPinId>,
) -> Result<PinRef, IoError> {
    let tok = line.tok(*k, "pin")?;
    if tok == "PIN" {
        let name = line.tok(*k + 1, "io pin name")?;
        *k += 2;
        let id = pins
            .get(name)
            .ok_or_else(|| line.dangling("io pin", name))?;
        return Ok(PinRef::Io(*id));
    }
    *k += 1;
    let inst_name = tok.rsplit_once('.').map_or(tok, |(i, _)| i);
    let inst = db
        .inst_by_name
        .get(inst_name)
        .or_else(|| db.inst_by_name.get(tok))
        .ok_or_else(|| line.dangling("instance", inst_name))?;
    Ok(PinRef::Inst(*inst))
}

fn parse_netlist(db: &mut DesignDatabase, file: &str, text: &str) -> Result<(), IoError> {
    let all: Vec<Line> = lines(file, text).collect();
    let mut declared: Vec<(ModuleId, usize)> = Vec::new();
    let mut parents: Vec<(ModuleId, String, usize)> = Vec::new();

    // Modules first so that records may appear in any order.
    for line in all.iter().filter(|l| l.keyword() == "MODULE") {
        line.arity(4, 6)?;
        if line.tok(2, "PARENT")? != "PARENT" {
            return Err(line.err(line.toks[2].0, "expected `PARENT`"));
        }
        let name = line.tok(1, "module path")?.to_string();
        if db.module_by_name.contains_key(&name) {
            return Err(line.duplicate("module", &name));
        }
        let id = ModuleId(db.modules.len());
        if line.toks.len() > 4 {
            if line.tok(4, "INSTS")? != "INSTS" {
                return Err(line.err(line.toks[4].0, "expected `INSTS`"));
            }
            declared.push((id, line.count(5, "instance count")?));
        }
        parents.push((id, line.tok(3, "parent")?.to_string(), line.no));
        db.module_by_name.insert(name.clone(), id);
        db.modules.push(LogicalModule {
            name,
            ..Default::default()
        });
    }
    let mut root = None;
    for (id, parent, no) in &parents {
        if parent == "-" {
            if root.is_some() {
                return Err(IoError::Invalid(format!(
                    "{file}:{no}: second root module `{}`",
                    db.modules[id.index()].name
                )));
            }
            root = Some(*id);
            continue;
        }
        let p = *db.module_by_name.get(parent).ok_or_else(|| IoError::Dangling {
            file: file.to_string(),
            line: *no,
            kind: "module",
            name: parent.clone(),
        })?;
        db.modules[id.index()].parent = Some(p);
        db.modules[p.index()].children.push(*id);
    }
    db.root_module = root.ok_or_else(|| IoError::Invalid("netlist has no root module".into()))?;
    // Every module must hang off the root (no cycles).
    for m in 0..db.modules.len() {
        let mut cur = ModuleId(m);
        let mut steps = 0;
        while let Some(p) = db.modules[cur.index()].parent {
            cur = p;
            steps += 1;
            if steps > db.modules.len() {
                return Err(IoError::Invalid(format!(
                    "module `{}` is in a parent cycle",
                    db.modules[m].name
                )));
            }
        }
    }

    for line in all.iter().filter(|l| l.keyword() == "INST") {
        line.arity(4, 4)?;
        let name = line.tok(1, "instance name")?.to_string();
        let master_name = line.tok(2, "master")?;
        let master = *db
            .master_by_name
            .get(master_name)
            .ok_or_else(|| line.dangling("master", master_name))?;
        let module_name = line.tok(3, "module")?;
        let module = *db
            .module_by_name
            .get(module_name)
            .ok_or_else(|| line.dangling("module", module_name))?;
        if db.inst_by_name.contains_key(&name) {
            return Err(line.duplicate("instance", &name));
        }
        let id = InstId(db.instances.len());
        db.inst_by_name.insert(name.clone(), id);
        db.modules[module.index()].instances.push(id);
        db.instances.push(Instance {
            name,
            master,
            module,
        });
    }

    let pins: BTreeMap<&str, IoPinId> = db
        .canvas
        .io_pins
        .iter()
        .enumerate()
        .map(|(k, p)| (p.name.as_str(), IoPinId(k)))
        .collect();
    let mut nets = Vec::new();
    let mut net_names: BTreeMap<String, ()> = BTreeMap::new();
    for line in all.iter() {
        match line.keyword() {
            "MODULE" | "INST" => continue,
            "NET" => {}
            other => return Err(line.err(line.toks[0].0, format!("unknown record `{other}`"))),
        }
        let name = line.tok(1, "net name")?.to_string();
        let mut k = 2;
        let mut bitwidth = 1u32;
        if line.tok(2, "driver")? == "WIDTH" {
            let w = line.count(3, "bitwidth")?;
            if w == 0 {
                return Err(line.err(line.toks[3].0, "bitwidth must be at least 1"));
            }
            bitwidth = w as u32;
            k = 4;
        }
        let driver = parse_pin(line, &mut k, db, &pins)?;
        let mut sinks = Vec::new();
        while k < line.toks.len() {
            sinks.push(parse_pin(line, &mut k, db, &pins)?);
        }
        if net_names.insert(name.clone(), ()).is_some() {
            return Err(line.duplicate("net", &name));
        }
        nets.push(Net {
            name,
            bitwidth,
            driver,
            sinks,
        });
    }
    db.nets = nets;

    for (id, n) in declared {
        let actual = db.module_subtree_instances(id).len();
        if actual != n {
            return Err(IoError::CountMismatch {
                module: db.modules[id.index()].name.clone(),
                declared: n,
                actual,
            });
        }
    }
    Ok(())
}

/// Parse and link a design from in-memory text.
pub fn parse_design_str(
    netlist: &str,
    library: &str,
    floorplan: &str,
) -> Result<DesignDatabase, IoError> {
    parse_named("netlist", netlist, "library", library, "floorplan", floorplan)
}

fn parse_named(
    net_file: &str,
    netlist: &str,
    lib_file: &str,
    library: &str,
    fp_file: &str,
    floorplan: &str,
) -> Result<DesignDatabase, IoError> {
    let mut db = DesignDatabase::default();
    parse_library(&mut db, lib_file, library)?;
    let raw = parse_floorplan_canvas(&mut db, fp_file, floorplan)?;
    parse_netlist(&mut db, net_file, netlist)?;
    resolve_floorplan_refs(&mut db, raw)?;
    db.arcs = db
        .nets
        .iter()
        .enumerate()
        .flat_map(|(k, n)| star_decompose(NetId(k), n))
        .collect();
    Ok(db)
}

pub fn parse_design(
    netlist_path: &Path,
    library_path: &Path,
    floorplan_path: &Path,
) -> Result<DesignDatabase, IoError> {
    let netlist = read(netlist_path)?;
    let library = read(library_path)?;
    let floorplan = read(floorplan_path)?;
    parse_named(
        &netlist_path.display().to_string(),
        &netlist,
        &library_path.display().to_string(),
        &library,
        &floorplan_path.display().to_string(),
        &floorplan,
    )
}

// ---------------------------------------------------------------------------
// Placement and metrics
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct MacroPlacement {
    pub inst: String,
    pub lx: f64,
    pub ly: f64,
    pub orientation: Orientation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionRecord {
    /// Dotted child-index path of the cluster.
    pub cluster: String,
    pub rect: Rect,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct MetricsReport {
    pub hpwl: f64,
    pub cluster_hpwl: f64,
    pub dead_space_frac: f64,
    pub num_trials: usize,
    pub util: f64,
    pub t_dead_space: f64,
    /// Placement cost of the winning trial, summed per hierarchy level.
    pub cost_per_level: Vec<f64>,
    pub seed: u64,
    /// Only written when requested, so that metrics files stay reproducible.
    pub wall_time: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct PlacementResult {
    pub canvas: (f64, f64),
    pub macro_placements: Vec<MacroPlacement>,
    pub stdcell_regions: Vec<RegionRecord>,
    pub metrics: MetricsReport,
}

/// Round to the three decimals used on disk.
pub fn round3(v: f64) -> f64 {
    let r = (v * 1000.0).round() / 1000.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

pub fn format_placement(result: &PlacementResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# hiermp placement");
    let _ = writeln!(s, "CANVAS {:.3} {:.3}", result.canvas.0, result.canvas.1);
    for m in &result.macro_placements {
        let _ = writeln!(s, "MACRO {} {:.3} {:.3} {}", m.inst, m.lx, m.ly, m.orientation);
    }
    for r in &result.stdcell_regions {
        let _ = writeln!(
            s,
            "REGION {} {:.3} {:.3} {:.3} {:.3}",
            r.cluster, r.rect.lx, r.rect.ly, r.rect.ux, r.rect.uy
        );
    }
    s
}

pub fn write_placement(result: &PlacementResult, path: &Path) -> Result<(), IoError> {
    write(path, &format_placement(result))
}

/// Parse a placement file. Metrics are not part of it and come back default.
pub fn parse_placement_str(text: &str) -> Result<PlacementResult, IoError> {
    let mut r = PlacementResult::default();
    for line in lines("placement", text) {
        match line.keyword() {
            "CANVAS" => {
                line.arity(3, 3)?;
                r.canvas = (line.num(1, "width")?, line.num(2, "height")?);
            }
            "MACRO" => {
                line.arity(5, 5)?;
                let o = line.tok(4, "orientation")?;
                r.macro_placements.push(MacroPlacement {
                    inst: line.tok(1, "instance")?.to_string(),
                    lx: line.num(2, "lx")?,
                    ly: line.num(3, "ly")?,
                    orientation: Orientation::parse(o)
                        .ok_or_else(|| line.err(line.toks[4].0, format!("bad orientation `{o}`")))?,
                });
            }
            "REGION" => {
                line.arity(6, 6)?;
                r.stdcell_regions.push(RegionRecord {
                    cluster: line.tok(1, "cluster id")?.to_string(),
                    rect: Rect::new(
                        line.num(2, "lx")?,
                        line.num(3, "ly")?,
                        line.num(4, "ux")?,
                        line.num(5, "uy")?,
                    ),
                });
            }
            other => return Err(line.err(line.toks[0].0, format!("unknown record `{other}`"))),
        }
    }
    Ok(r)
}

pub fn parse_placement(path: &Path) -> Result<PlacementResult, IoError> {
    parse_placement_str(&read(path)?)
}

pub fn format_metrics(m: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "hpwl={:.3}", m.hpwl);
    let _ = writeln!(s, "cluster_hpwl={:.3}", m.cluster_hpwl);
    let _ = writeln!(s, "dead_space_frac={:.6}", m.dead_space_frac);
    let _ = writeln!(s, "num_trials={}", m.num_trials);
    let _ = writeln!(s, "util={:.2}", m.util);
    let _ = writeln!(s, "t_dead_space={:.2}", m.t_dead_space);
    for (k, c) in m.cost_per_level.iter().enumerate() {
        let _ = writeln!(s, "cost_level_{}={:.6}", k + 1, c);
    }
    let _ = writeln!(s, "seed={}", m.seed);
    if let Some(t) = m.wall_time {
        let _ = writeln!(s, "wall_time={t:.3}");
    }
    s
}

pub fn write_metrics(m: &MetricsReport, path: &Path) -> Result<(), IoError> {
    write(path, &format_metrics(m))
}

/// Key/value view of a metrics file.
pub fn parse_metrics_str(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

// ---------------------------------------------------------------------------
// SVG
// ---------------------------------------------------------------------------

fn macro_dims(db: &DesignDatabase, name: &str) -> Result<(f64, f64), IoError> {
    let inst = db.inst_by_name.get(name).ok_or_else(|| IoError::Dangling {
        file: "placement".into(),
        line: 0,
        kind: "instance",
        name: name.to_string(),
    })?;
    let m = &db.masters[db.instances[inst.index()].master.index()];
    Ok((m.width, m.height))
}

/// Render the canvas frame, blockages, macros and the cluster regions whose
/// labels have `level` components. Level 0 draws no cluster outlines.
pub fn render_svg(db: &DesignDatabase, result: &PlacementResult, level: usize) -> Result<String, IoError> {
    let depth = result
        .stdcell_regions
        .iter()
        .map(|r| r.cluster.split('.').count())
        .max()
        .unwrap_or(0);
    if level > depth {
        return Err(IoError::LevelTooDeep { level, depth });
    }
    let (cw, ch) = (db.canvas.width, db.canvas.height);
    // Corners are rounded as on disk first, so a placement re-read from its
    // file draws identically.
    let flip = |r: &Rect| {
        let (lx, ly, ux, uy) = (round3(r.lx), round3(r.ly), round3(r.ux), round3(r.uy));
        (lx, ch - uy, ux - lx, uy - ly)
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {cw:.3} {ch:.3}" width="800" height="{:.0}">"#,
        800.0 * ch / cw
    );
    let _ = writeln!(
        s,
        r#"<rect class="canvas" x="0" y="0" width="{cw:.3}" height="{ch:.3}" fill="white" stroke="black" stroke-width="{:.3}"/>"#,
        cw.max(ch) * 0.002
    );
    for b in &db.canvas.blockages {
        let (x, y, w, h) = flip(b);
        let _ = writeln!(
            s,
            r##"<rect class="blockage" x="{x:.3}" y="{y:.3}" width="{w:.3}" height="{h:.3}" fill="#bbbbbb"/>"##
        );
    }
    if level > 0 {
        for r in result
            .stdcell_regions
            .iter()
            .filter(|r| r.cluster.split('.').count() == level)
        {
            let (x, y, w, h) = flip(&r.rect);
            let _ = writeln!(
                s,
                r##"<rect class="cluster" data-id="{}" x="{x:.3}" y="{y:.3}" width="{w:.3}" height="{h:.3}" fill="none" stroke="#1f77b4" stroke-width="{:.3}"/>"##,
                r.cluster,
                cw.max(ch) * 0.002
            );
        }
    }
    for m in &result.macro_placements {
        let (w, h) = macro_dims(db, &m.inst)?;
        let (x, y, w, h) = flip(&Rect::from_size(round3(m.lx), round3(m.ly), w, h));
        let _ = writeln!(
            s,
            r##"<rect class="macro" data-inst="{}" x="{x:.3}" y="{y:.3}" width="{w:.3}" height="{h:.3}" fill="#d62728" fill-opacity="0.6"/>"##,
            m.inst
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write_svg(db: &DesignDatabase, result: &PlacementResult, path: &Path, level: usize) -> Result<(), IoError> {
    write(path, &render_svg(db, result, level)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LIB: &str = "MACRO RAM 10 20\nSTDCELL INV 1\nSTDCELL DFF 2 FF\n";

    #[test]
    fn minimal_design() {
        let db = parse_design_str(
            "MODULE top PARENT -\nINST m1 RAM top\nINST m2 RAM top\nNET n m1.o m2.i\n",
            LIB,
            "CANVAS 100 100\n",
        )
        .unwrap();
        assert_eq!(db.instances.len(), 2);
        assert_eq!(db.arcs.len(), 1);
        assert!(!db.is_register(db.inst_by_name["m1"]));
    }

    #[test]
    fn four_pin_net_three_arcs() {
        let db = parse_design_str(
            "MODULE top PARENT -\nINST a INV top\nINST b INV top\nINST c INV top\n\
             NET n WIDTH 4 a.y b.a c.a PIN p\n",
            LIB,
            "CANVAS 100 100\nIOPIN p 0 3\n",
        )
        .unwrap();
        assert_eq!(db.arcs.len(), 3);
        assert!(db.arcs.iter().all(|a| a.bitwidth == 4));
    }

    #[test]
    fn pin_off_boundary() {
        let err = parse_design_str("MODULE top PARENT -\n", LIB, "CANVAS 100 100\nIOPIN p 50 120\n")
            .unwrap_err();
        assert!(matches!(err, IoError::PinOffBoundary { .. }), "{err}");
        assert!(err.to_string().contains("off the canvas boundary"));
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_design_str("MODULE top PARENT -\n", "MACRO RAM ten 20\n", "CANVAS 1 1\n")
            .unwrap_err();
        match err {
            IoError::Syntax { line, col, .. } => assert_eq!((line, col), (1, 11)),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn dangling_master() {
        let err = parse_design_str("MODULE top PARENT -\nINST a NOPE top\n", LIB, "CANVAS 1 1\n")
            .unwrap_err();
        assert!(matches!(err, IoError::Dangling { kind: "master", .. }));
    }

    #[test]
    fn declared_counts_checked() {
        let net = "MODULE top PARENT - INSTS 3\nMODULE top/a PARENT top INSTS 1\n\
                   INST x INV top\nINST y INV top/a\n";
        let err = parse_design_str(net, LIB, "CANVAS 10 10\n").unwrap_err();
        assert!(matches!(err, IoError::CountMismatch { declared: 3, actual: 2, .. }));
        let ok = net.replace("INSTS 3", "INSTS 2");
        assert!(parse_design_str(&ok, LIB, "CANVAS 10 10\n").is_ok());
    }

    #[test]
    fn preplaced_becomes_blockage() {
        let db = parse_design_str(
            "MODULE top PARENT -\nINST m RAM top\n",
            LIB,
            "CANVAS 100 100\nPREPLACED m 5 5 MX\n",
        )
        .unwrap();
        assert_eq!(db.canvas.blockages, vec![Rect::new(5.0, 5.0, 15.0, 25.0)]);
        assert!(db.movable_macros().is_empty());
    }

    #[test]
    fn empty_placement_has_header_only() {
        let r = PlacementResult {
            canvas: (10.0, 10.0),
            ..Default::default()
        };
        let text = format_placement(&r);
        assert!(!text.contains("MACRO"));
        assert_eq!(parse_placement_str(&text).unwrap(), r);
    }

    #[test]
    fn macro_record_format() {
        let r = PlacementResult {
            canvas: (10.0, 10.0),
            macro_placements: vec![MacroPlacement {
                inst: "m1".into(),
                lx: 0.0,
                ly: 0.0,
                orientation: Orientation::R0,
            }],
            ..Default::default()
        };
        assert!(format_placement(&r).contains("MACRO m1 0.000 0.000 R0\n"));
    }

    fn svg_db() -> DesignDatabase {
        parse_design_str("MODULE top PARENT -\nINST m1 RAM top\n", LIB, "CANVAS 100 100\n").unwrap()
    }

    #[test]
    fn svg_canvas_only() {
        let db = svg_db();
        let svg = render_svg(&db, &PlacementResult::default(), 0).unwrap();
        assert_eq!(svg.matches("<rect").count(), 1);
        assert!(svg.contains(r#"class="canvas""#));
    }

    #[test]
    fn svg_one_macro() {
        let db = svg_db();
        let r = PlacementResult {
            macro_placements: vec![MacroPlacement {
                inst: "m1".into(),
                lx: 5.0,
                ly: 5.0,
                orientation: Orientation::R0,
            }],
            ..Default::default()
        };
        let svg = render_svg(&db, &r, 0).unwrap();
        let line = svg.lines().find(|l| l.contains(r#"class="macro""#)).unwrap();
        assert!(line.contains(r#"width="10.000" height="20.000""#));
    }

    #[test]
    fn svg_level_outlines_and_depth_error() {
        let db = svg_db();
        let region = |id: &str| RegionRecord {
            cluster: id.into(),
            rect: Rect::new(0.0, 0.0, 10.0, 10.0),
        };
        let r = PlacementResult {
            stdcell_regions: vec![region("1"), region("2"), region("3"), region("1.1")],
            ..Default::default()
        };
        let svg = render_svg(&db, &r, 1).unwrap();
        assert_eq!(svg.matches(r#"class="cluster""#).count(), 3);
        assert!(matches!(
            render_svg(&db, &r, 3),
            Err(IoError::LevelTooDeep { level: 3, depth: 2 })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn coord() -> impl Strategy<Value = f64> {
            (0i64..10_000_000).prop_map(|k| k as f64 / 1000.0)
        }

        fn orient() -> impl Strategy<Value = Orientation> {
            prop::sample::select(Orientation::ALL.to_vec())
        }

        fn result() -> impl Strategy<Value = PlacementResult> {
            (
                (coord(), coord()),
                prop::collection::vec(("[a-z][a-z0-9_/]{0,8}", coord(), coord(), orient()), 0..8),
                prop::collection::vec(("[1-9](\\.[1-9]){0,2}", coord(), coord(), coord(), coord()), 0..8),
            )
                .prop_map(|(canvas, ms, rs)| PlacementResult {
                    canvas,
                    macro_placements: ms
                        .into_iter()
                        .map(|(inst, lx, ly, orientation)| MacroPlacement { inst, lx, ly, orientation })
                        .collect(),
                    stdcell_regions: rs
                        .into_iter()
                        .map(|(cluster, a, b, c, d)| RegionRecord {
                            cluster,
                            rect: Rect::new(a, b, c, d),
                        })
                        .collect(),
                    metrics: MetricsReport::default(),
                })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]
            #[test]
            fn placement_round_trip(r in result()) {
                let text = format_placement(&r);
                let back = parse_placement_str(&text).unwrap();
                prop_assert_eq!(&back, &r);
                prop_assert_eq!(format_placement(&back), text);
            }
        }
    }
}
