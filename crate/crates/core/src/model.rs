// SPDX-License-Identifier: Apache-2.0

//! Core design and cluster types shared by every stage of the flow.
//!
//! The netlist side ([`DesignDatabase`]) is immutable once parsed. The
//! physical side ([`PhysicalHierarchy`]) is an arena of clusters addressed by
//! [`ClusterId`]; clustering mutates it, later stages only annotate shapes and
//! placed rectangles.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::shaping::ShapeCurve;

macro_rules! index_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub usize);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0
            }
        }
    };
}

index_type!(
    /// Index into [`DesignDatabase::masters`].
    MasterId
);
index_type!(
    /// Index into [`DesignDatabase::instances`].
    InstId
);
index_type!(
    /// Index into [`DesignDatabase::modules`].
    ModuleId
);
index_type!(
    /// Index into [`DesignDatabase::nets`].
    NetId
);
index_type!(
    /// Index into [`Canvas::io_pins`].
    IoPinId
);
index_type!(
    /// Index into [`PhysicalHierarchy::clusters`].
    ClusterId
);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("instance `{instance}` references an unresolved master")]
    UnresolvedMaster { instance: String },
    #[error("cluster {0:?} does not exist")]
    UnknownCluster(ClusterId),
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// Axis-aligned rectangle in abstract length units.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Rect {
    pub lx: f64,
    pub ly: f64,
    pub ux: f64,
    pub uy: f64,
}

impl Rect {
    pub fn new(lx: f64, ly: f64, ux: f64, uy: f64) -> Self {
        Rect { lx, ly, ux, uy }
    }

    pub fn from_size(lx: f64, ly: f64, width: f64, height: f64) -> Self {
        Rect::new(lx, ly, lx + width, ly + height)
    }

    pub fn point(x: f64, y: f64) -> Self {
        Rect::new(x, y, x, y)
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.ux - self.lx
    }

    #[inline]
    pub fn height(&self) -> f64 {
        self.uy - self.ly
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    #[inline]
    pub fn center(&self) -> (f64, f64) {
        ((self.lx + self.ux) * 0.5, (self.ly + self.uy) * 0.5)
    }

    pub fn is_valid(&self) -> bool {
        self.lx <= self.ux && self.ly <= self.uy
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let r = Rect::new(
            self.lx.max(other.lx),
            self.ly.max(other.ly),
            self.ux.min(other.ux),
            self.uy.min(other.uy),
        );
        (r.lx < r.ux && r.ly < r.uy).then_some(r)
    }

    #[inline]
    pub fn overlap_area(&self, other: &Rect) -> f64 {
        let w = self.ux.min(other.ux) - self.lx.max(other.lx);
        let h = self.uy.min(other.uy) - self.ly.max(other.ly);
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.lx && x <= self.ux && y >= self.ly && y <= self.uy
    }

    /// True when `other` lies inside `self` up to `eps`.
    pub fn contains_rect(&self, other: &Rect, eps: f64) -> bool {
        other.lx >= self.lx - eps
            && other.ly >= self.ly - eps
            && other.ux <= self.ux + eps
            && other.uy <= self.uy + eps
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Rect {
        Rect::new(self.lx + dx, self.ly + dy, self.ux + dx, self.uy + dy)
    }

    pub fn union_bbox(&self, other: &Rect) -> Rect {
        Rect::new(
            self.lx.min(other.lx),
            self.ly.min(other.ly),
            self.ux.max(other.ux),
            self.uy.max(other.uy),
        )
    }

    /// Manhattan distance from a point to this rectangle (0 inside).
    pub fn manhattan_distance_to(&self, x: f64, y: f64) -> f64 {
        let dx = (self.lx - x).max(0.0).max(x - self.ux);
        let dy = (self.ly - y).max(0.0).max(y - self.uy);
        dx + dy
    }
}

/// Exact area of the union of a set of rectangles (coordinate compression).
pub fn union_area(rects: &[Rect]) -> f64 {
    let rects: Vec<&Rect> = rects.iter().filter(|r| r.area() > 0.0).collect();
    match rects.len() {
        0 => return 0.0,
        1 => return rects[0].area(),
        _ => {}
    }
    let mut xs: Vec<f64> = rects.iter().flat_map(|r| [r.lx, r.ux]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut total = 0.0;
    let mut spans: Vec<(f64, f64)> = Vec::with_capacity(rects.len());
    for w in xs.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        spans.clear();
        spans.extend(
            rects
                .iter()
                .filter(|r| r.lx <= x0 && r.ux >= x1)
                .map(|r| (r.ly, r.uy)),
        );
        if spans.is_empty() {
            continue;
        }
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut covered = 0.0;
        let (mut cur_lo, mut cur_hi) = spans[0];
        for &(lo, hi) in &spans[1..] {
            if lo > cur_hi {
                covered += cur_hi - cur_lo;
                cur_lo = lo;
                cur_hi = hi;
            } else if hi > cur_hi {
                cur_hi = hi;
            }
        }
        covered += cur_hi - cur_lo;
        total += covered * (x1 - x0);
    }
    total
}

/// Area of `target` covered by the union of `cover`.
pub fn covered_area(target: &Rect, cover: &[Rect]) -> f64 {
    let clipped: Vec<Rect> = cover.iter().filter_map(|c| target.intersection(c)).collect();
    union_area(&clipped)
}

/// Macro orientation. Only mirroring and 180° rotation are legal, so the
/// footprint is preserved under every value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Orientation {
    #[default]
    R0,
    MX,
    MY,
    R180,
}

/// Mirror axis used by the flip operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlipAxis {
    /// Mirror about the x axis (top/bottom swap).
    X,
    /// Mirror about the y axis (left/right swap).
    Y,
}

impl Orientation {
    pub const ALL: [Orientation; 4] =
        [Orientation::R0, Orientation::MX, Orientation::MY, Orientation::R180];

    fn bits(self) -> (bool, bool) {
        match self {
            Orientation::R0 => (false, false),
            Orientation::MX => (true, false),
            Orientation::MY => (false, true),
            Orientation::R180 => (true, true),
        }
    }

    fn from_bits(mx: bool, my: bool) -> Self {
        match (mx, my) {
            (false, false) => Orientation::R0,
            (true, false) => Orientation::MX,
            (false, true) => Orientation::MY,
            (true, true) => Orientation::R180,
        }
    }

    /// Compose with a mirror about `axis`. Each axis flip is an involution.
    pub fn flip(self, axis: FlipAxis) -> Self {
        let (mx, my) = self.bits();
        match axis {
            FlipAxis::X => Orientation::from_bits(!mx, my),
            FlipAxis::Y => Orientation::from_bits(mx, !my),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Orientation::R0 => "R0",
            Orientation::MX => "MX",
            Orientation::MY => "MY",
            Orientation::R180 => "R180",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "R0" => Some(Orientation::R0),
            "MX" => Some(Orientation::MX),
            "MY" => Some(Orientation::MY),
            "R180" => Some(Orientation::R180),
            _ => None,
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

// ---------------------------------------------------------------------------
// Netlist
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MasterKind {
    Macro,
    StdCell,
}

/// A library cell. Standard cells only ever contribute area; their footprint
/// is stored as a square of the same area.
#[derive(Clone, Debug, PartialEq)]
pub struct Master {
    pub name: String,
    pub kind: MasterKind,
    pub width: f64,
    pub height: f64,
    /// Sequential (flip-flop / latch) standard cell.
    pub is_register: bool,
}

impl Master {
    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub name: String,
    pub master: MasterId,
    pub module: ModuleId,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct LogicalModule {
    /// Full hierarchical path, e.g. `top/core/alu`.
    pub name: String,
    pub parent: Option<ModuleId>,
    pub children: Vec<ModuleId>,
    pub instances: Vec<InstId>,
}

/// One end of a net.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PinRef {
    Inst(InstId),
    Io(IoPinId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Net {
    pub name: String,
    pub bitwidth: u32,
    pub driver: PinRef,
    pub sinks: Vec<PinRef>,
}

/// Driver-to-sink two-pin arc of the directed star model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arc {
    pub net: NetId,
    pub from: PinRef,
    pub to: PinRef,
    pub bitwidth: u32,
}

/// Star decomposition: a k-pin net yields exactly k-1 driver-to-sink arcs.
pub fn star_decompose(net_id: NetId, net: &Net) -> impl Iterator<Item = Arc> + '_ {
    net.sinks.iter().map(move |&sink| Arc {
        net: net_id,
        from: net.driver,
        to: sink,
        bitwidth: net.bitwidth,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct IoPin {
    pub name: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreplacedMacro {
    pub inst: InstId,
    pub rect: Rect,
    pub orientation: Orientation,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GuidanceTarget {
    Instance(InstId),
    Module(ModuleId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Guidance {
    pub target: GuidanceTarget,
    pub rect: Rect,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Canvas {
    pub width: f64,
    pub height: f64,
    pub io_pins: Vec<IoPin>,
    /// Hard placement blockages, including the footprints of preplaced macros.
    pub blockages: Vec<Rect>,
    pub preplaced: Vec<PreplacedMacro>,
    pub guidance: Vec<Guidance>,
}

impl Canvas {
    pub fn rect(&self) -> Rect {
        Rect::new(0.0, 0.0, self.width, self.height)
    }

    pub fn on_boundary(&self, x: f64, y: f64) -> bool {
        const EPS: f64 = 1e-9;
        let inside = x >= -EPS && x <= self.width + EPS && y >= -EPS && y <= self.height + EPS;
        let on_edge = x.abs() <= EPS
            || (x - self.width).abs() <= EPS
            || y.abs() <= EPS
            || (y - self.height).abs() <= EPS;
        inside && on_edge
    }
}

/// Fully linked design: library, netlist, logical hierarchy and floorplan.
#[derive(Clone, Debug, Default)]
pub struct DesignDatabase {
    pub masters: Vec<Master>,
    pub instances: Vec<Instance>,
    pub modules: Vec<LogicalModule>,
    pub root_module: ModuleId,
    pub nets: Vec<Net>,
    /// Star-decomposed arcs of every net, in net order.
    pub arcs: Vec<Arc>,
    pub canvas: Canvas,
    pub master_by_name: BTreeMap<String, MasterId>,
    pub inst_by_name: BTreeMap<String, InstId>,
    pub module_by_name: BTreeMap<String, ModuleId>,
}

impl DesignDatabase {
    pub fn master_of(&self, inst: InstId) -> Result<&Master, ModelError> {
        let instance = &self.instances[inst.index()];
        self.masters
            .get(instance.master.index())
            .ok_or_else(|| ModelError::UnresolvedMaster {
                instance: instance.name.clone(),
            })
    }

    pub fn is_macro(&self, inst: InstId) -> bool {
        self.master_of(inst)
            .map(|m| m.kind == MasterKind::Macro)
            .unwrap_or(false)
    }

    pub fn is_register(&self, inst: InstId) -> bool {
        self.master_of(inst).map(|m| m.is_register).unwrap_or(false)
    }

    pub fn is_preplaced(&self, inst: InstId) -> bool {
        self.canvas.preplaced.iter().any(|p| p.inst == inst)
    }

    /// Macro instances that the placer has to place (preplaced ones excluded).
    pub fn movable_macros(&self) -> Vec<InstId> {
        (0..self.instances.len())
            .map(InstId)
            .filter(|&i| self.is_macro(i) && !self.is_preplaced(i))
            .collect()
    }

    pub fn num_std_cells(&self) -> usize {
        (0..self.instances.len())
            .filter(|&i| !self.is_macro(InstId(i)))
            .count()
    }

    /// All instances in the subtree of `module`, in pre-order.
    pub fn module_subtree_instances(&self, module: ModuleId) -> Vec<InstId> {
        let mut out = Vec::new();
        let mut stack = vec![module];
        while let Some(m) = stack.pop() {
            let lm = &self.modules[m.index()];
            out.extend(lm.instances.iter().copied());
            stack.extend(lm.children.iter().rev().copied());
        }
        out
    }

    pub fn module_is_ancestor(&self, ancestor: ModuleId, mut module: ModuleId) -> bool {
        loop {
            if module == ancestor {
                return true;
            }
            match self.modules[module.index()].parent {
                Some(p) => module = p,
                None => return false,
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Physical hierarchy
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClusterKind {
    StdCell,
    Macro,
    Mixed,
    IoBundle,
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ClusterStats {
    pub num_std_cell: usize,
    pub num_macro: usize,
    pub std_cell_area: f64,
    pub macro_area: f64,
}

impl ClusterStats {
    pub fn add(&mut self, other: &ClusterStats) {
        self.num_std_cell += other.num_std_cell;
        self.num_macro += other.num_macro;
        self.std_cell_area += other.std_cell_area;
        self.macro_area += other.macro_area;
    }

    pub fn kind(&self) -> ClusterKind {
        match (self.num_std_cell > 0, self.num_macro > 0) {
            (_, false) => ClusterKind::StdCell,
            (false, true) => ClusterKind::Macro,
            (true, true) => ClusterKind::Mixed,
        }
    }
}

/// A zero-area stand-in for every IO pin lying on one boundary segment.
#[derive(Clone, Debug, PartialEq)]
pub struct BundledPin {
    /// 0 = bottom, 1 = right, 2 = top, 3 = left.
    pub edge: usize,
    pub segment: usize,
    pub position: (f64, f64),
    /// Extent of the boundary segment the bundle stands for.
    pub segment_span: (f64, f64),
    pub pins: Vec<IoPinId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalCluster {
    pub id: ClusterId,
    pub name: String,
    /// Dotted child-index path from the root ("" for the root, "2.1" for the
    /// first child of the second top-level cluster). Assigned once the
    /// hierarchy is final.
    pub label: String,
    pub kind: ClusterKind,
    pub parent: Option<ClusterId>,
    pub children: Vec<ClusterId>,
    /// Instances owned directly by this cluster (not through children).
    pub instances: Vec<InstId>,
    /// Logical module this cluster was created from, if any.
    pub module: Option<ModuleId>,
    /// Logical module the cluster's content belongs to (merge criterion).
    pub logical_parent: Option<ModuleId>,
    pub stats: ClusterStats,
    pub coarse_curve: ShapeCurve,
    pub shape_curve: ShapeCurve,
    pub placed_rect: Option<Rect>,
    pub is_tiny: bool,
    pub bundle: Option<BundledPin>,
    pub alive: bool,
}

impl PhysicalCluster {
    pub fn new(id: ClusterId, name: impl Into<String>) -> Self {
        PhysicalCluster {
            id,
            name: name.into(),
            label: String::new(),
            kind: ClusterKind::StdCell,
            parent: None,
            children: Vec::new(),
            instances: Vec::new(),
            module: None,
            logical_parent: None,
            stats: ClusterStats::default(),
            coarse_curve: ShapeCurve::Zero,
            shape_curve: ShapeCurve::Zero,
            placed_rect: None,
            is_tiny: false,
            bundle: None,
            alive: true,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn is_io(&self) -> bool {
        self.kind == ClusterKind::IoBundle
    }
}

/// The cluster tree T_P, stored as an arena. Removed clusters stay in the
/// arena with `alive = false` so ids remain stable.
#[derive(Clone, Debug)]
pub struct PhysicalHierarchy {
    pub clusters: Vec<PhysicalCluster>,
    pub root: ClusterId,
    pub num_level: usize,
    pub level_ratio: f64,
}

impl PhysicalHierarchy {
    pub fn new(num_level: usize, level_ratio: f64) -> Self {
        let root = PhysicalCluster::new(ClusterId(0), "root");
        PhysicalHierarchy {
            clusters: vec![root],
            root: ClusterId(0),
            num_level,
            level_ratio,
        }
    }

    pub fn get(&self, id: ClusterId) -> &PhysicalCluster {
        &self.clusters[id.index()]
    }

    pub fn get_mut(&mut self, id: ClusterId) -> &mut PhysicalCluster {
        &mut self.clusters[id.index()]
    }

    pub fn add_cluster(&mut self, name: impl Into<String>) -> ClusterId {
        let id = ClusterId(self.clusters.len());
        self.clusters.push(PhysicalCluster::new(id, name));
        id
    }

    pub fn children(&self, id: ClusterId) -> &[ClusterId] {
        &self.get(id).children
    }

    pub fn attach(&mut self, parent: ClusterId, child: ClusterId) {
        self.get_mut(child).parent = Some(parent);
        self.get_mut(parent).children.push(child);
    }

    pub fn detach(&mut self, child: ClusterId) {
        if let Some(p) = self.get(child).parent {
            self.get_mut(p).children.retain(|&c| c != child);
        }
        self.get_mut(child).parent = None;
    }

    /// Detach and mark the whole subtree dead.
    pub fn remove_subtree(&mut self, id: ClusterId) {
        self.detach(id);
        let mut stack = vec![id];
        while let Some(c) = stack.pop() {
            let cl = self.get_mut(c);
            cl.alive = false;
            stack.extend(cl.children.iter().copied());
        }
    }

    pub fn depth(&self, mut id: ClusterId) -> usize {
        let mut d = 0;
        while let Some(p) = self.get(id).parent {
            d += 1;
            id = p;
        }
        d
    }

    /// Alias of [`depth`](Self::depth): the root sits at level 0.
    pub fn level_of(&self, id: ClusterId) -> usize {
        self.depth(id)
    }

    /// Path from the root down to `id`, inclusive.
    pub fn path_from_root(&self, mut id: ClusterId) -> Vec<ClusterId> {
        let mut path = vec![id];
        while let Some(p) = self.get(id).parent {
            path.push(p);
            id = p;
        }
        path.reverse();
        path
    }

    pub fn lowest_common_ancestor(&self, ids: &[ClusterId]) -> Option<ClusterId> {
        let mut iter = ids.iter();
        let first = iter.next()?;
        let mut common = self.path_from_root(*first);
        for &id in iter {
            let path = self.path_from_root(id);
            let shared = common
                .iter()
                .zip(path.iter())
                .take_while(|(a, b)| a == b)
                .count();
            common.truncate(shared);
        }
        common.last().copied()
    }

    pub fn is_ancestor(&self, ancestor: ClusterId, mut id: ClusterId) -> bool {
        loop {
            if id == ancestor {
                return true;
            }
            match self.get(id).parent {
                Some(p) => id = p,
                None => return false,
            }
        }
    }

    /// Live clusters in pre-order starting at the root.
    pub fn preorder(&self) -> Vec<ClusterId> {
        self.preorder_from(self.root)
    }

    pub fn preorder_from(&self, start: ClusterId) -> Vec<ClusterId> {
        let mut out = Vec::new();
        let mut stack = vec![start];
        while let Some(c) = stack.pop() {
            out.push(c);
            stack.extend(self.get(c).children.iter().rev().copied());
        }
        out
    }

    /// Live leaf clusters (io bundles included) in pre-order.
    pub fn leaves(&self) -> Vec<ClusterId> {
        self.preorder()
            .into_iter()
            .filter(|&c| self.get(c).is_leaf() && c != self.root)
            .collect()
    }

    /// Every instance in the subtree of `id`.
    pub fn subtree_instances(&self, id: ClusterId) -> Vec<InstId> {
        self.preorder_from(id)
            .into_iter()
            .flat_map(|c| self.get(c).instances.iter().copied())
            .collect()
    }

    /// Maximum depth of any live cluster.
    pub fn max_depth(&self) -> usize {
        self.preorder()
            .into_iter()
            .map(|c| self.depth(c))
            .max()
            .unwrap_or(0)
    }

    /// Recompute stats and kinds bottom-up for the whole tree.
    pub fn refresh_stats(&mut self, db: &DesignDatabase) -> Result<(), ModelError> {
        self.refresh_subtree(db, self.root)
    }

    pub fn refresh_subtree(&mut self, db: &DesignDatabase, id: ClusterId) -> Result<(), ModelError> {
        let order = self.preorder_from(id);
        for &c in order.iter().rev() {
            let mut stats = own_stats(db, &self.get(c).instances)?;
            for &child in &self.get(c).children {
                stats.add(&self.get(child).stats);
            }
            let cl = self.get_mut(c);
            cl.stats = stats;
            if cl.kind != ClusterKind::IoBundle {
                cl.kind = stats.kind();
            }
        }
        Ok(())
    }

    /// Map from every instance to the leaf cluster holding it.
    pub fn instance_to_leaf(&self, num_instances: usize) -> Vec<Option<ClusterId>> {
        let mut map = vec![None; num_instances];
        for leaf in self.leaves() {
            for &i in &self.get(leaf).instances {
                map[i.index()] = Some(leaf);
            }
        }
        map
    }

    /// Io bundle clusters (children of the root).
    pub fn io_bundles(&self) -> Vec<ClusterId> {
        self.get(self.root)
            .children
            .iter()
            .copied()
            .filter(|&c| self.get(c).is_io())
            .collect()
    }

    /// Assign dotted labels: non-io children are numbered from 1 in child
    /// order, io bundles are labelled `io<edge>_<segment>`.
    pub fn assign_labels(&mut self) {
        let order = self.preorder();
        self.get_mut(self.root).label = String::new();
        for c in order {
            let children = self.get(c).children.clone();
            let prefix = self.get(c).label.clone();
            let mut k = 0;
            for child in children {
                let label = if let Some(b) = &self.get(child).bundle {
                    format!("io{}_{}", b.edge, b.segment)
                } else {
                    k += 1;
                    if prefix.is_empty() {
                        k.to_string()
                    } else {
                        format!("{prefix}.{k}")
                    }
                };
                self.get_mut(child).label = label;
            }
        }
    }

    pub fn find_by_label(&self, label: &str) -> Option<ClusterId> {
        self.preorder()
            .into_iter()
            .find(|&c| self.get(c).label == label)
    }
}

fn own_stats(db: &DesignDatabase, instances: &[InstId]) -> Result<ClusterStats, ModelError> {
    let mut s = ClusterStats::default();
    for &i in instances {
        let m = db.master_of(i)?;
        match m.kind {
            MasterKind::Macro => {
                s.num_macro += 1;
                s.macro_area += m.area();
            }
            MasterKind::StdCell => {
                s.num_std_cell += 1;
                s.std_cell_area += m.area();
            }
        }
    }
    Ok(s)
}

/// Recursive counts and areas over every instance contained in `cluster`.
pub fn compute_cluster_stats(
    db: &DesignDatabase,
    hierarchy: &PhysicalHierarchy,
    cluster: ClusterId,
) -> Result<ClusterStats, ModelError> {
    if cluster.index() >= hierarchy.clusters.len() {
        return Err(ModelError::UnknownCluster(cluster));
    }
    let mut stats = own_stats(db, &hierarchy.get(cluster).instances)?;
    for &child in hierarchy.children(cluster) {
        stats.add(&compute_cluster_stats(db, hierarchy, child)?);
    }
    Ok(stats)
}

// ---------------------------------------------------------------------------
// Cluster connectivity
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct EdgeWeight {
    /// Bitwidth-weighted count of real nets between the two clusters.
    pub real: f64,
    /// Accumulated virtual (dataflow / co-location) weight.
    pub virtual_weight: f64,
}

impl EdgeWeight {
    pub fn total(&self) -> f64 {
        self.real + self.virtual_weight
    }

    pub fn is_real(&self) -> bool {
        self.real > 0.0
    }

    pub fn is_virtual(&self) -> bool {
        self.virtual_weight > 0.0
    }
}

/// Undirected weighted connections between clusters. Keys are stored with the
/// smaller id first; self loops are dropped.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClusterGraph {
    pub edges: BTreeMap<(ClusterId, ClusterId), EdgeWeight>,
}

impl ClusterGraph {
    fn key(a: ClusterId, b: ClusterId) -> Option<(ClusterId, ClusterId)> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some((a, b)),
            std::cmp::Ordering::Greater => Some((b, a)),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn add_real(&mut self, a: ClusterId, b: ClusterId, w: f64) {
        if let Some(k) = Self::key(a, b) {
            self.edges.entry(k).or_default().real += w;
        }
    }

    pub fn add_virtual(&mut self, a: ClusterId, b: ClusterId, w: f64) {
        if w <= 0.0 {
            return;
        }
        if let Some(k) = Self::key(a, b) {
            self.edges.entry(k).or_default().virtual_weight += w;
        }
    }

    pub fn edge(&self, a: ClusterId, b: ClusterId) -> Option<&EdgeWeight> {
        Self::key(a, b).and_then(|k| self.edges.get(&k))
    }

    pub fn weight(&self, a: ClusterId, b: ClusterId) -> f64 {
        self.edge(a, b).map(EdgeWeight::total).unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClusterId, ClusterId, &EdgeWeight)> {
        self.edges.iter().map(|(&(a, b), w)| (a, b, w))
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}
