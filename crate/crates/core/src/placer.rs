// SPDX-License-Identifier: Apache-2.0

//! Fixed-outline placement of child clusters and of macros inside leaf
//! macro clusters, both driven by the sequence-pair annealer.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use thiserror::Error;

use crate::annealer::{
    choose_op, evaluate_sequence_pair, multi_start, SaProblem, SaSchedule, SequencePair, Terms,
    DEFAULT_OP_PROBS, MAX_TERMS,
};
use crate::model::{
    covered_area, BundledPin, ClusterGraph, ClusterId, ClusterKind, DesignDatabase, FlipAxis,
    GuidanceTarget, InstId, ModelError, Orientation, PhysicalHierarchy, PinRef, Rect,
};
use crate::shaping::ShapeCurve;

#[derive(Debug, Error)]
pub enum PlacerError {
    #[error("edge {edge} has an unplaced endpoint")]
    Unplaced { edge: usize },
    #[error("cluster `{0}` has no placed outline")]
    NoOutline(String),
    #[error("macros of `{0}` do not fit in its outline")]
    MacrosDoNotFit(String),
    #[error("macro cluster `{0}` mixes macro footprints")]
    NonUniform(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub const AREA: usize = 0;
pub const WL: usize = 1;
pub const OUTLINE: usize = 2;
pub const BIAS: usize = 3;
pub const BLOCKAGE: usize = 4;
pub const GUIDANCE: usize = 5;
pub const NOTCH: usize = 6;
const NUM_CLUSTER_TERMS: usize = 7;

/// Weights of the cluster placement cost.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyWeights {
    pub area: f64,
    pub wl: f64,
    pub outline: f64,
    pub bias: f64,
    pub blockage: f64,
    pub guidance: f64,
    pub notch: f64,
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        PenaltyWeights {
            area: 0.1,
            wl: 1.0,
            outline: 10.0,
            bias: 0.05,
            blockage: 10.0,
            guidance: 1.0,
            notch: 1.0,
        }
    }
}

impl PenaltyWeights {
    pub fn as_array(&self) -> [f64; NUM_CLUSTER_TERMS] {
        [
            self.area,
            self.wl,
            self.outline,
            self.bias,
            self.blockage,
            self.guidance,
            self.notch,
        ]
    }

    pub fn scaled(&self, k: f64) -> Self {
        PenaltyWeights {
            area: self.area * k,
            wl: self.wl * k,
            outline: self.outline * k,
            bias: self.bias * k,
            blockage: self.blockage * k,
            guidance: self.guidance * k,
            notch: self.notch * k,
        }
    }
}

/// Weights of the macro placement cost (kept apart from the cluster ones).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MacroWeights {
    pub area: f64,
    pub wl: f64,
    pub outline: f64,
    pub guidance: f64,
}

impl Default for MacroWeights {
    fn default() -> Self {
        MacroWeights {
            area: 0.1,
            wl: 1.0,
            outline: 10.0,
            guidance: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlacerParams {
    pub weights: PenaltyWeights,
    pub macro_weights: MacroWeights,
    /// Depth of the keep-out in front of each pin segment; `None` means
    /// 0.02 of the smaller canvas dimension.
    pub pin_access_depth: Option<f64>,
    /// Narrowest usable whitespace; `None` means 0.05 of the smaller
    /// dimension of each outline.
    pub notch_min_dim: Option<f64>,
    pub macro_halo: f64,
}

impl Default for PlacerParams {
    fn default() -> Self {
        PlacerParams {
            weights: PenaltyWeights::default(),
            macro_weights: MacroWeights::default(),
            pin_access_depth: None,
            notch_min_dim: None,
            macro_halo: 0.0,
        }
    }
}

/// Raw terms of the cluster cost together with their normalizers.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct CostVector {
    pub area: f64,
    pub wl: f64,
    pub p_outline: f64,
    pub p_bias: f64,
    pub p_blockage: f64,
    pub p_guidance: f64,
    pub p_notch: f64,
    pub normalizers: [f64; NUM_CLUSTER_TERMS],
}

impl CostVector {
    pub fn from_terms(terms: &Terms, normalizers: &Terms) -> Self {
        let mut n = [1.0; NUM_CLUSTER_TERMS];
        n.copy_from_slice(&normalizers[..NUM_CLUSTER_TERMS]);
        CostVector {
            area: terms[AREA],
            wl: terms[WL],
            p_outline: terms[OUTLINE],
            p_bias: terms[BIAS],
            p_blockage: terms[BLOCKAGE],
            p_guidance: terms[GUIDANCE],
            p_notch: terms[NOTCH],
            normalizers: n,
        }
    }

    pub fn raw(&self) -> [f64; NUM_CLUSTER_TERMS] {
        [
            self.area,
            self.wl,
            self.p_outline,
            self.p_bias,
            self.p_blockage,
            self.p_guidance,
            self.p_notch,
        ]
    }

    /// Weighted sum of the normalized terms. A zero normalizer disables its
    /// term.
    pub fn weighted(&self, w: &PenaltyWeights) -> f64 {
        weighted_sum(&self.raw(), &self.normalizers, &w.as_array())
    }
}

fn weighted_sum(terms: &[f64], norms: &[f64], weights: &[f64]) -> f64 {
    terms
        .iter()
        .zip(norms)
        .zip(weights)
        .filter(|((_, &n), _)| n > 0.0)
        .map(|((&t, &n), &w)| w * t / n)
        .sum()
}

// ---------------------------------------------------------------------------
// Cost terms
// ---------------------------------------------------------------------------

/// Weighted Manhattan distance over `(a, b, weight)` edges between point
/// positions.
pub fn wirelength(
    positions: &[Option<(f64, f64)>],
    edges: &[(usize, usize, f64)],
) -> Result<f64, PlacerError> {
    let mut total = 0.0;
    for (k, &(a, b, w)) in edges.iter().enumerate() {
        let pa = positions.get(a).copied().flatten();
        let pb = positions.get(b).copied().flatten();
        let (Some(pa), Some(pb)) = (pa, pb) else {
            return Err(PlacerError::Unplaced { edge: k });
        };
        total += w * manhattan(pa, pb);
    }
    Ok(total)
}

#[inline]
fn manhattan(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).abs() + (a.1 - b.1).abs()
}

/// Total area of the rectangles lying outside the outline.
pub fn penalty_outline(rects: &[Rect], outline: &Rect) -> f64 {
    rects
        .iter()
        .map(|r| (r.area() - r.overlap_area(outline)).max(0.0))
        .sum()
}

fn holds_macros(kind: ClusterKind) -> bool {
    matches!(kind, ClusterKind::Macro | ClusterKind::Mixed)
}

fn half_perimeter(r: &Rect) -> f64 {
    (r.width() + r.height()).max(f64::MIN_POSITIVE)
}

/// Distance from each macro-holding cluster to the nearest outline edge,
/// summed and divided by the outline half-perimeter.
pub fn penalty_bias(rects: &[Rect], kinds: &[ClusterKind], outline: &Rect) -> f64 {
    let mut total = 0.0;
    for (r, &k) in rects.iter().zip(kinds) {
        if !holds_macros(k) {
            continue;
        }
        let d = (r.lx - outline.lx)
            .min(outline.ux - r.ux)
            .min(r.ly - outline.ly)
            .min(outline.uy - r.uy);
        total += d.max(0.0);
    }
    total / half_perimeter(outline)
}

/// Overlap of macro-holding clusters with the union of blockages and pin
/// keep-outs, divided by the outline area.
pub fn penalty_blockage(
    rects: &[Rect],
    kinds: &[ClusterKind],
    blockages: &[Rect],
    keepouts: &[Rect],
    outline: &Rect,
) -> f64 {
    if blockages.is_empty() && keepouts.is_empty() {
        return 0.0;
    }
    let cover: Vec<Rect> = blockages.iter().chain(keepouts).copied().collect();
    let overlap: f64 = rects
        .iter()
        .zip(kinds)
        .filter(|(_, &k)| holds_macros(k))
        .map(|(r, _)| covered_area(r, &cover))
        .sum();
    overlap / outline.area().max(f64::MIN_POSITIVE)
}

/// Manhattan distance from each guided cluster's center to its region,
/// divided by the outline half-perimeter.
pub fn penalty_guidance(rects: &[Rect], guidance: &[Option<Rect>], outline: &Rect) -> f64 {
    let total: f64 = rects
        .iter()
        .zip(guidance)
        .filter_map(|(r, g)| {
            let (x, y) = r.center();
            g.as_ref().map(|g| g.manhattan_distance_to(x, y))
        })
        .sum();
    total / half_perimeter(outline)
}

/// Largest raster the notch penalty builds; the cell grows beyond this.
const MAX_NOTCH_CELLS: usize = 1 << 16;

/// Area of whitespace components too thin to use, divided by the outline
/// area. Whitespace is rasterized with cells of `notch_min_dim / 2`; a cell
/// is free when any of it is uncovered, and only its uncovered part counts.
pub fn penalty_notch(rects: &[Rect], outline: &Rect, notch_min_dim: f64) -> f64 {
    let (w, h) = (outline.width(), outline.height());
    if notch_min_dim <= 0.0 || w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let mut cell = notch_min_dim / 2.0;
    let (mut nx, mut ny);
    loop {
        nx = ((w / cell).ceil() as usize).max(1);
        ny = ((h / cell).ceil() as usize).max(1);
        if nx * ny <= MAX_NOTCH_CELLS {
            break;
        }
        cell *= 2.0;
    }
    let col = |i: usize| {
        let a = outline.lx + i as f64 * cell;
        (a, (a + cell).min(outline.ux))
    };
    let row = |j: usize| {
        let a = outline.ly + j as f64 * cell;
        (a, (a + cell).min(outline.uy))
    };

    let mut free = vec![0.0f64; nx * ny];
    for j in 0..ny {
        let (y0, y1) = row(j);
        for i in 0..nx {
            let (x0, x1) = col(i);
            free[j * nx + i] = (x1 - x0) * (y1 - y0);
        }
    }
    for r in rects {
        let Some(c) = r.intersection(outline) else {
            continue;
        };
        if c.area() <= 0.0 {
            continue;
        }
        let i0 = ((c.lx - outline.lx) / cell).floor().max(0.0) as usize;
        let i1 = (((c.ux - outline.lx) / cell).ceil() as usize).min(nx);
        let j0 = ((c.ly - outline.ly) / cell).floor().max(0.0) as usize;
        let j1 = (((c.uy - outline.ly) / cell).ceil() as usize).min(ny);
        for j in j0..j1 {
            let (y0, y1) = row(j);
            let oy = c.uy.min(y1) - c.ly.max(y0);
            if oy <= 0.0 {
                continue;
            }
            for i in i0..i1 {
                let (x0, x1) = col(i);
                let ox = c.ux.min(x1) - c.lx.max(x0);
                if ox > 0.0 {
                    free[j * nx + i] -= ox * oy;
                }
            }
        }
    }

    let tiny = 1e-9 * cell * cell;
    let mut seen = vec![false; nx * ny];
    let mut stack = Vec::new();
    let mut notch_area = 0.0;
    for start in 0..nx * ny {
        if seen[start] || free[start] <= tiny {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut imin, mut imax, mut jmin, mut jmax) = (usize::MAX, 0, usize::MAX, 0);
        let mut area = 0.0;
        while let Some(k) = stack.pop() {
            let (i, j) = (k % nx, k / nx);
            imin = imin.min(i);
            imax = imax.max(i);
            jmin = jmin.min(j);
            jmax = jmax.max(j);
            area += free[k];
            let mut visit = |n: usize| {
                if !seen[n] && free[n] > tiny {
                    seen[n] = true;
                    stack.push(n);
                }
            };
            if i > 0 {
                visit(k - 1);
            }
            if i + 1 < nx {
                visit(k + 1);
            }
            if j > 0 {
                visit(k - nx);
            }
            if j + 1 < ny {
                visit(k + nx);
            }
        }
        let bw = col(imax).1 - col(imin).0;
        let bh = row(jmax).1 - row(jmin).0;
        let eps = 1e-9 * notch_min_dim;
        if bw < notch_min_dim - eps || bh < notch_min_dim - eps {
            notch_area += area;
        }
    }
    notch_area / outline.area()
}

/// Keep-out rectangles of depth `depth` in front of every pin segment that
/// carries at least one pin.
pub fn pin_access_keepouts<'a>(
    canvas: (f64, f64),
    bundles: impl IntoIterator<Item = &'a BundledPin>,
    depth: f64,
) -> Vec<Rect> {
    let (w, h) = canvas;
    bundles
        .into_iter()
        .filter(|b| !b.pins.is_empty() && depth > 0.0)
        .map(|b| {
            let (a, c) = b.segment_span;
            match b.edge {
                0 => Rect::new(a, 0.0, c, depth.min(h)),
                1 => Rect::new((w - depth).max(0.0), a, w, c),
                2 => Rect::new(a, (h - depth).max(0.0), c, h),
                _ => Rect::new(0.0, a, depth.min(w), c),
            }
        })
        .collect()
}

/// Bounding box of every guidance region applying to a macro instance.
pub fn macro_guidance(db: &DesignDatabase, inst: InstId) -> Option<Rect> {
    let module = db.instances[inst.index()].module;
    db.canvas
        .guidance
        .iter()
        .filter(|g| match g.target {
            GuidanceTarget::Instance(i) => i == inst,
            GuidanceTarget::Module(m) => db.module_is_ancestor(m, module),
        })
        .map(|g| g.rect)
        .reduce(|a, b| a.union_bbox(&b))
}

/// Sequence pair packing `n` equal blocks row-major into `cols` columns,
/// row 0 at the bottom.
pub fn grid_sequence_pair(n: usize, cols: usize) -> SequencePair {
    let cols = cols.max(1);
    let rows = n.div_ceil(cols);
    let mut pos = Vec::with_capacity(n);
    let mut neg = Vec::with_capacity(n);
    for r in (0..rows).rev() {
        pos.extend((r * cols..((r + 1) * cols).min(n)).collect::<Vec<_>>());
    }
    for r in 0..rows {
        neg.extend(r * cols..((r + 1) * cols).min(n));
    }
    SequencePair { pos, neg }
}

// ---------------------------------------------------------------------------
// Cluster placement
// ---------------------------------------------------------------------------

/// Children of one parent cluster to be packed inside its outline.
#[derive(Clone, Debug)]
pub struct ClusterPlacementProblem {
    pub outline: Rect,
    /// Hierarchy ids of the movable children (empty for synthetic problems).
    pub children: Vec<ClusterId>,
    pub curves: Vec<ShapeCurve>,
    pub kinds: Vec<ClusterKind>,
    pub guidance: Vec<Option<Rect>>,
    /// Edges between movable children.
    pub edges: Vec<(usize, usize, f64)>,
    /// Fixed terminal positions (reference clusters and io bundles).
    pub terminals: Vec<(f64, f64)>,
    /// Edges from a movable child to a terminal.
    pub terminal_edges: Vec<(usize, usize, f64)>,
    /// Hard blockages intersecting the outline.
    pub blockages: Vec<Rect>,
    /// Pin-access keep-outs intersecting the outline.
    pub keepouts: Vec<Rect>,
    pub weights: PenaltyWeights,
    pub notch_min_dim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterState {
    pub sp: SequencePair,
    pub shapes: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct ChildPlacement {
    pub rects: Vec<Rect>,
    pub state: ClusterState,
    pub cost: CostVector,
    pub total_cost: f64,
    pub valid: bool,
}

impl ClusterPlacementProblem {
    /// Problem with no nets, blockages or guidance and default weights.
    pub fn new(outline: Rect, curves: Vec<ShapeCurve>, kinds: Vec<ClusterKind>) -> Self {
        let n = curves.len();
        ClusterPlacementProblem {
            outline,
            children: Vec::new(),
            curves,
            kinds,
            guidance: vec![None; n],
            edges: Vec::new(),
            terminals: Vec::new(),
            terminal_edges: Vec::new(),
            blockages: Vec::new(),
            keepouts: Vec::new(),
            weights: PenaltyWeights::default(),
            notch_min_dim: 0.05 * outline.width().min(outline.height()),
        }
    }

    /// Build the problem for the non-io children of `parent` from its
    /// placed rectangle. Clusters off the root path are fixed terminals.
    pub fn for_parent(
        db: &DesignDatabase,
        h: &PhysicalHierarchy,
        graph: &ClusterGraph,
        parent: ClusterId,
        params: &PlacerParams,
    ) -> Result<Self, PlacerError> {
        let pc = h.get(parent);
        let outline = pc
            .placed_rect
            .ok_or_else(|| PlacerError::NoOutline(pc.name.clone()))?;
        let children: Vec<ClusterId> = pc
            .children
            .iter()
            .copied()
            .filter(|&c| !h.get(c).is_io())
            .collect();

        #[derive(Clone, Copy)]
        enum Slot {
            Movable(usize),
            Fixed(usize),
        }
        let mut slot: HashMap<ClusterId, Slot> = HashMap::new();
        for (k, &c) in children.iter().enumerate() {
            slot.insert(c, Slot::Movable(k));
        }
        let mut terminals = Vec::new();
        let mut add_terminal = |c: ClusterId, slot: &mut HashMap<ClusterId, Slot>| {
            let cl = h.get(c);
            let at = match &cl.bundle {
                Some(b) => Some(b.position),
                None => cl.placed_rect.map(|r| r.center()),
            };
            if let Some(p) = at {
                slot.insert(c, Slot::Fixed(terminals.len()));
                terminals.push(p);
            }
        };
        for &c in &pc.children {
            if h.get(c).is_io() {
                add_terminal(c, &mut slot);
            }
        }
        let path = h.path_from_root(parent);
        for w in path.windows(2) {
            for &c in &h.get(w[0]).children {
                if c != w[1] {
                    add_terminal(c, &mut slot);
                }
            }
        }

        let mut resolved: HashMap<ClusterId, Option<Slot>> = HashMap::new();
        let mut resolve = |leaf: ClusterId| -> Option<Slot> {
            if let Some(&s) = resolved.get(&leaf) {
                return s;
            }
            let mut cur = Some(leaf);
            let mut found = None;
            while let Some(c) = cur {
                if let Some(&s) = slot.get(&c) {
                    found = Some(s);
                    break;
                }
                cur = h.get(c).parent;
            }
            resolved.insert(leaf, found);
            found
        };
        let mut edges: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut term_edges: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (a, b, ew) in graph.iter() {
            let w = ew.total();
            if w <= 0.0 {
                continue;
            }
            match (resolve(a), resolve(b)) {
                (Some(Slot::Movable(i)), Some(Slot::Movable(j))) if i != j => {
                    *edges.entry((i.min(j), i.max(j))).or_default() += w;
                }
                (Some(Slot::Movable(i)), Some(Slot::Fixed(t)))
                | (Some(Slot::Fixed(t)), Some(Slot::Movable(i))) => {
                    *term_edges.entry((i, t)).or_default() += w;
                }
                _ => {}
            }
        }

        let guidance = children
            .iter()
            .map(|&c| {
                h.subtree_instances(c)
                    .into_iter()
                    .filter(|&i| db.is_macro(i))
                    .filter_map(|i| macro_guidance(db, i))
                    .reduce(|a, b| a.union_bbox(&b))
            })
            .collect();

        let canvas = (db.canvas.width, db.canvas.height);
        let depth = params
            .pin_access_depth
            .unwrap_or(0.02 * canvas.0.min(canvas.1));
        let bundles: Vec<&BundledPin> = h
            .io_bundles()
            .into_iter()
            .filter_map(|c| h.get(c).bundle.as_ref())
            .collect();
        let touches = |r: &Rect| r.overlap_area(&outline) > 0.0;
        let keepouts = pin_access_keepouts(canvas, bundles, depth)
            .into_iter()
            .filter(touches)
            .collect();
        let blockages = db.canvas.blockages.iter().copied().filter(touches).collect();

        Ok(ClusterPlacementProblem {
            outline,
            curves: children.iter().map(|&c| h.get(c).shape_curve.clone()).collect(),
            kinds: children.iter().map(|&c| h.get(c).kind).collect(),
            children,
            guidance,
            edges: edges.into_iter().map(|((a, b), w)| (a, b, w)).collect(),
            terminals,
            terminal_edges: term_edges.into_iter().map(|((a, t), w)| (a, t, w)).collect(),
            blockages,
            keepouts,
            weights: params.weights,
            notch_min_dim: params
                .notch_min_dim
                .unwrap_or(0.05 * outline.width().min(outline.height())),
        })
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    /// Near-square grid of the children at their default shapes.
    pub fn initial(&self) -> ClusterState {
        let n = self.len();
        let cols = (n as f64).sqrt().ceil() as usize;
        ClusterState {
            sp: grid_sequence_pair(n, cols),
            shapes: self.curves.iter().map(|c| c.default_shape()).collect(),
        }
    }

    pub fn rects(&self, state: &ClusterState) -> Vec<Rect> {
        let p = evaluate_sequence_pair(&state.sp, &state.shapes);
        state
            .shapes
            .iter()
            .enumerate()
            .map(|(i, &(w, h))| {
                Rect::from_size(self.outline.lx + p.x[i], self.outline.ly + p.y[i], w, h)
            })
            .collect()
    }

    fn tolerance(&self) -> f64 {
        1e-9 * self.outline.area().max(1.0)
    }

    /// Area of macro-holding children outside the outline. Standard-cell
    /// children only guide cell placement, so they may stick out and are
    /// clipped afterwards.
    pub fn macro_outside(&self, rects: &[Rect]) -> f64 {
        rects
            .iter()
            .zip(&self.kinds)
            .filter(|(_, &k)| holds_macros(k))
            .map(|(r, _)| (r.area() - r.overlap_area(&self.outline)).max(0.0))
            .sum()
    }

    /// Standard-cell rectangles cut down to the outline (a rectangle fully
    /// outside collapses onto the nearest outline point).
    pub fn clip_soft(&self, rects: &mut [Rect]) {
        let o = &self.outline;
        for (r, &k) in rects.iter_mut().zip(&self.kinds) {
            if holds_macros(k) {
                continue;
            }
            *r = r.intersection(o).unwrap_or_else(|| {
                let (x, y) = r.center();
                Rect::point(x.clamp(o.lx, o.ux), y.clamp(o.ly, o.uy))
            });
        }
    }

    /// Overlap of macro-holding children with hard blockages only.
    pub fn hard_overlap(&self, rects: &[Rect]) -> f64 {
        if self.blockages.is_empty() {
            return 0.0;
        }
        rects
            .iter()
            .zip(&self.kinds)
            .filter(|(_, &k)| holds_macros(k))
            .map(|(r, _)| covered_area(r, &self.blockages))
            .sum()
    }

    pub fn terms_of(&self, rects: &[Rect]) -> (Terms, bool) {
        let mut t = [0.0; MAX_TERMS];
        let (mut lx, mut ly, mut ux, mut uy) = (self.outline.lx, self.outline.ly, f64::MIN, f64::MIN);
        for r in rects {
            lx = lx.min(r.lx);
            ly = ly.min(r.ly);
            ux = ux.max(r.ux);
            uy = uy.max(r.uy);
        }
        if !rects.is_empty() {
            t[AREA] = (ux - lx) * (uy - ly);
        }
        let centers: Vec<(f64, f64)> = rects.iter().map(|r| r.center()).collect();
        t[WL] = self
            .edges
            .iter()
            .map(|&(a, b, w)| w * manhattan(centers[a], centers[b]))
            .chain(
                self.terminal_edges
                    .iter()
                    .map(|&(a, k, w)| w * manhattan(centers[a], self.terminals[k])),
            )
            .sum();
        t[OUTLINE] = penalty_outline(rects, &self.outline);
        t[BIAS] = penalty_bias(rects, &self.kinds, &self.outline);
        t[BLOCKAGE] = penalty_blockage(rects, &self.kinds, &self.blockages, &self.keepouts, &self.outline);
        t[GUIDANCE] = penalty_guidance(rects, &self.guidance, &self.outline);
        if self.weights.notch > 0.0 {
            t[NOTCH] = penalty_notch(rects, &self.outline, self.notch_min_dim);
        }
        let tol = self.tolerance();
        let feasible = self.macro_outside(rects) <= tol && self.hard_overlap(rects) <= tol;
        (t, feasible)
    }
}

impl SaProblem for ClusterPlacementProblem {
    type State = ClusterState;

    fn num_terms(&self) -> usize {
        NUM_CLUSTER_TERMS
    }

    fn evaluate(&self, state: &ClusterState) -> (Terms, bool) {
        self.terms_of(&self.rects(state))
    }

    fn cost(&self, terms: &Terms, normalizers: &Terms) -> f64 {
        weighted_sum(
            &terms[..NUM_CLUSTER_TERMS],
            &normalizers[..NUM_CLUSTER_TERMS],
            &self.weights.as_array(),
        )
    }

    fn perturb<R: Rng>(&self, state: &mut ClusterState, rng: &mut R) {
        let op = choose_op(&DEFAULT_OP_PROBS, rng);
        if op < 3 {
            state.sp.perturb(op, rng);
            return;
        }
        // Resize: a random child whose curve offers a choice.
        let resizable: Vec<usize> = (0..self.len())
            .filter(|&i| match &self.curves[i] {
                ShapeCurve::Zero => false,
                ShapeCurve::Discrete(p) => p.len() > 1,
                c => c.intervals().iter().any(|&(lo, hi)| hi > lo) || c.intervals().len() > 1,
            })
            .collect();
        if resizable.is_empty() {
            state.sp.perturb(2, rng);
            return;
        }
        let i = resizable[rng.gen_range(0..resizable.len())];
        state.shapes[i] = self.curves[i].sample(rng);
    }

    fn fallback_normalizer(&self, term: usize) -> f64 {
        let area = self.outline.area().max(1.0);
        match term {
            AREA | OUTLINE => area,
            WL => {
                let w: f64 = self
                    .edges
                    .iter()
                    .map(|e| e.2)
                    .chain(self.terminal_edges.iter().map(|e| e.2))
                    .sum();
                (w * half_perimeter(&self.outline)).max(1.0)
            }
            _ => 1.0,
        }
    }
}

/// Anneal the children inside the outline. The result is valid when every
/// child lies inside and no macro-holding child overlaps a hard blockage.
pub fn place_children(problem: &ClusterPlacementProblem, schedule: &SaSchedule) -> ChildPlacement {
    let initial = problem.initial();
    let (state, terms, normalizers) = if problem.len() <= 1 && !has_choice(problem) {
        let (t, _) = problem.evaluate(&initial);
        let norms = std::array::from_fn(|k| {
            if k < NUM_CLUSTER_TERMS {
                problem.fallback_normalizer(k)
            } else {
                1.0
            }
        });
        (initial, t, norms)
    } else {
        let start = legal_start(problem, initial, schedule);
        let r = multi_start(problem, &start, schedule);
        (r.state, r.terms, r.normalizers)
    };
    let mut rects = problem.rects(&state);
    let (_, valid) = problem.terms_of(&rects);
    problem.clip_soft(&mut rects);
    let cost = CostVector::from_terms(&terms, &normalizers);
    ChildPlacement {
        total_cost: problem.cost(&terms, &normalizers),
        rects,
        state,
        cost,
        valid,
    }
}

/// Starting state for the full anneal. An illegal start is first replaced by
/// the result of a packing-only anneal (area, outline and blockage terms);
/// since the annealer keeps the best feasible state it visits, a legal start
/// guarantees a legal result.
fn legal_start(
    problem: &ClusterPlacementProblem,
    initial: ClusterState,
    schedule: &SaSchedule,
) -> ClusterState {
    if problem.evaluate(&initial).1 {
        return initial;
    }
    let mut packing = problem.clone();
    packing.weights = PenaltyWeights {
        area: 1.0,
        wl: 0.0,
        outline: 10.0,
        bias: 0.0,
        blockage: 10.0,
        guidance: 0.0,
        notch: 0.0,
    };
    let sched = schedule.with_seed(schedule.seed ^ 0x9e37_79b9_7f4a_7c15);
    let r = multi_start(&packing, &initial, &sched);
    if r.feasible {
        r.state
    } else {
        initial
    }
}

fn has_choice(p: &ClusterPlacementProblem) -> bool {
    p.curves.iter().any(|c| match c {
        ShapeCurve::Zero => false,
        ShapeCurve::Discrete(pts) => pts.len() > 1,
        _ => true,
    })
}

// ---------------------------------------------------------------------------
// Macro placement
// ---------------------------------------------------------------------------

pub const M_AREA: usize = 0;
pub const M_WL: usize = 1;
pub const M_OUTLINE: usize = 2;
pub const M_GUIDANCE: usize = 3;

/// Macros of one leaf macro cluster, all sharing one footprint.
#[derive(Clone, Debug)]
pub struct MacroPlacementProblem {
    pub name: String,
    pub outline: Rect,
    pub macros: Vec<InstId>,
    /// Macro width and height (without halo).
    pub footprint: (f64, f64),
    pub halo: f64,
    pub edges: Vec<(usize, usize, f64)>,
    pub terminals: Vec<(f64, f64)>,
    pub terminal_edges: Vec<(usize, usize, f64)>,
    pub guidance: Vec<Option<Rect>>,
    pub weights: MacroWeights,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MacroState {
    pub sp: SequencePair,
    pub orientations: Vec<Orientation>,
    /// Number of flip moves applied; selects the next mirror axis.
    pub flips: usize,
}

impl MacroState {
    /// Mirror every macro, alternating the y and x axes.
    pub fn flip_all(&mut self) {
        let axis = if self.flips.is_multiple_of(2) {
            FlipAxis::Y
        } else {
            FlipAxis::X
        };
        flip_orientations(&mut self.orientations, axis);
        self.flips += 1;
    }
}

pub fn flip_orientations(orientations: &mut [Orientation], axis: FlipAxis) {
    for o in orientations {
        *o = o.flip(axis);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlacedMacro {
    pub inst: InstId,
    /// Macro footprint (halo excluded).
    pub rect: Rect,
    pub orientation: Orientation,
}

impl MacroPlacementProblem {
    /// Build the problem for leaf macro cluster `leaf`. `inst_leaf` maps
    /// every instance to its leaf cluster.
    pub fn for_leaf(
        db: &DesignDatabase,
        h: &PhysicalHierarchy,
        leaf: ClusterId,
        inst_leaf: &[Option<ClusterId>],
        params: &PlacerParams,
    ) -> Result<Self, PlacerError> {
        let cl = h.get(leaf);
        let outline = cl
            .placed_rect
            .ok_or_else(|| PlacerError::NoOutline(cl.name.clone()))?;
        let macros: Vec<InstId> = cl.instances.iter().copied().filter(|&i| db.is_macro(i)).collect();
        let mut footprint = None;
        for &m in &macros {
            let ms = db.master_of(m)?;
            let fp = (ms.width, ms.height);
            match footprint {
                None => footprint = Some(fp),
                Some(f) if f != fp => return Err(PlacerError::NonUniform(cl.name.clone())),
                _ => {}
            }
        }
        let local: HashMap<InstId, usize> = macros.iter().enumerate().map(|(k, &m)| (m, k)).collect();

        let mut term_index: BTreeMap<(u64, u64), usize> = BTreeMap::new();
        let mut terminals = Vec::new();
        let mut edges: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut term_edges: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let position = |p: PinRef| -> Option<(f64, f64)> {
            match p {
                PinRef::Io(io) => db.canvas.io_pins.get(io.index()).map(|q| (q.x, q.y)),
                PinRef::Inst(i) => {
                    if let Some(pp) = db.canvas.preplaced.iter().find(|pp| pp.inst == i) {
                        return Some(pp.rect.center());
                    }
                    inst_leaf
                        .get(i.index())
                        .copied()
                        .flatten()
                        .and_then(|c| h.get(c).placed_rect)
                        .map(|r| r.center())
                }
            }
        };
        for arc in &db.arcs {
            let w = arc.bitwidth as f64;
            let end = |p: PinRef| match p {
                PinRef::Inst(i) => local.get(&i).copied(),
                PinRef::Io(_) => None,
            };
            match (end(arc.from), end(arc.to)) {
                (Some(a), Some(b)) if a != b => {
                    *edges.entry((a.min(b), a.max(b))).or_default() += w;
                }
                (Some(_), Some(_)) | (None, None) => {}
                (Some(a), None) | (None, Some(a)) => {
                    let other = if end(arc.from).is_some() { arc.to } else { arc.from };
                    let Some(p) = position(other) else {
                        continue;
                    };
                    let key = (p.0.to_bits(), p.1.to_bits());
                    let t = *term_index.entry(key).or_insert_with(|| {
                        terminals.push(p);
                        terminals.len() - 1
                    });
                    *term_edges.entry((a, t)).or_default() += w;
                }
            }
        }

        Ok(MacroPlacementProblem {
            name: cl.name.clone(),
            outline,
            guidance: macros.iter().map(|&m| macro_guidance(db, m)).collect(),
            macros,
            footprint: footprint.unwrap_or((0.0, 0.0)),
            halo: params.macro_halo,
            edges: edges.into_iter().map(|((a, b), w)| (a, b, w)).collect(),
            terminals,
            terminal_edges: term_edges.into_iter().map(|((a, t), w)| (a, t, w)).collect(),
            weights: params.macro_weights,
        })
    }

    /// Problem with no connectivity or guidance.
    pub fn new(outline: Rect, macros: Vec<InstId>, footprint: (f64, f64)) -> Self {
        let n = macros.len();
        MacroPlacementProblem {
            name: String::new(),
            outline,
            macros,
            footprint,
            halo: 0.0,
            edges: Vec::new(),
            terminals: Vec::new(),
            terminal_edges: Vec::new(),
            guidance: vec![None; n],
            weights: MacroWeights::default(),
        }
    }

    /// Footprint including the halo on every side.
    pub fn slot(&self) -> (f64, f64) {
        (
            self.footprint.0 + 2.0 * self.halo,
            self.footprint.1 + 2.0 * self.halo,
        )
    }

    /// Row-major grid filling the outline's width.
    pub fn initial(&self) -> MacroState {
        let n = self.macros.len();
        let (sw, _) = self.slot();
        let cols = if sw > 0.0 {
            ((self.outline.width() + 1e-9 * sw) / sw).floor() as usize
        } else {
            n
        };
        MacroState {
            sp: grid_sequence_pair(n, cols.clamp(1, n.max(1))),
            orientations: vec![Orientation::R0; n],
            flips: 0,
        }
    }

    /// Halo-inclusive slots of the macros.
    pub fn slots(&self, state: &MacroState) -> Vec<Rect> {
        let s = self.slot();
        let shapes = vec![s; self.macros.len()];
        let p = evaluate_sequence_pair(&state.sp, &shapes);
        (0..self.macros.len())
            .map(|i| Rect::from_size(self.outline.lx + p.x[i], self.outline.ly + p.y[i], s.0, s.1))
            .collect()
    }

    fn terms_of(&self, slots: &[Rect]) -> (Terms, bool) {
        let mut t = [0.0; MAX_TERMS];
        if slots.is_empty() {
            return (t, true);
        }
        let bbox = slots.iter().skip(1).fold(slots[0], |a, b| a.union_bbox(b));
        t[M_AREA] = (bbox.ux - self.outline.lx) * (bbox.uy - self.outline.ly);
        let c: Vec<(f64, f64)> = slots.iter().map(|r| r.center()).collect();
        t[M_WL] = self
            .edges
            .iter()
            .map(|&(a, b, w)| w * manhattan(c[a], c[b]))
            .chain(
                self.terminal_edges
                    .iter()
                    .map(|&(a, k, w)| w * manhattan(c[a], self.terminals[k])),
            )
            .sum();
        t[M_OUTLINE] = penalty_outline(slots, &self.outline);
        t[M_GUIDANCE] = penalty_guidance(slots, &self.guidance, &self.outline);
        let feasible = t[M_OUTLINE] <= 1e-9 * self.outline.area().max(1.0);
        (t, feasible)
    }
}

impl SaProblem for MacroPlacementProblem {
    type State = MacroState;

    fn num_terms(&self) -> usize {
        4
    }

    fn evaluate(&self, state: &MacroState) -> (Terms, bool) {
        self.terms_of(&self.slots(state))
    }

    fn cost(&self, t: &Terms, n: &Terms) -> f64 {
        let w = &self.weights;
        weighted_sum(&t[..4], &n[..4], &[w.area, w.wl, w.outline, w.guidance])
    }

    fn perturb<R: Rng>(&self, state: &mut MacroState, rng: &mut R) {
        let op = choose_op(&DEFAULT_OP_PROBS, rng);
        if op < 3 {
            state.sp.perturb(op, rng);
        } else {
            state.flip_all();
        }
    }

    fn fallback_normalizer(&self, term: usize) -> f64 {
        let area = self.outline.area().max(1.0);
        match term {
            M_AREA | M_OUTLINE => area,
            M_WL => {
                let w: f64 = self
                    .edges
                    .iter()
                    .map(|e| e.2)
                    .chain(self.terminal_edges.iter().map(|e| e.2))
                    .sum();
                (w * half_perimeter(&self.outline)).max(1.0)
            }
            _ => 1.0,
        }
    }
}

/// Anneal the macros inside their cluster outline. Fails only when no
/// visited state keeps every macro inside.
pub fn place_macros(
    problem: &MacroPlacementProblem,
    schedule: &SaSchedule,
) -> Result<Vec<PlacedMacro>, PlacerError> {
    let initial = problem.initial();
    let (state, feasible) = if problem.macros.len() <= 1 {
        let f = problem.evaluate(&initial).1;
        (initial, f)
    } else {
        let r = multi_start(problem, &initial, schedule);
        (r.state, r.feasible)
    };
    if !feasible {
        return Err(PlacerError::MacrosDoNotFit(problem.name.clone()));
    }
    let h = problem.halo;
    Ok(problem
        .slots(&state)
        .into_iter()
        .zip(&problem.macros)
        .zip(&state.orientations)
        .map(|((s, &inst), &orientation)| PlacedMacro {
            inst,
            rect: Rect::from_size(s.lx + h, s.ly + h, problem.footprint.0, problem.footprint.1),
            orientation,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sq(x: f64, y: f64, s: f64) -> Rect {
        Rect::from_size(x, y, s, s)
    }

    fn quick(seed: u64) -> SaSchedule {
        SaSchedule {
            moves_per_iter: 60,
            num_iters: 60,
            num_workers: 2,
            seed,
            ..SaSchedule::default()
        }
    }

    #[test]
    fn wirelength_examples() {
        let pos = [Some((0.0, 0.0)), Some((3.0, 4.0))];
        assert_eq!(wirelength(&pos, &[(0, 1, 2.0)]).unwrap(), 14.0);
        let same = [Some((5.0, 5.0)), Some((5.0, 5.0))];
        assert_eq!(wirelength(&same, &[(0, 1, 3.0)]).unwrap(), 0.0);
        let line = [Some((0.0, 0.0)), Some((2.0, 0.0)), Some((7.0, 0.0))];
        let all = [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)];
        assert_eq!(wirelength(&line, &all).unwrap(), 2.0 + 5.0 + 7.0);
        let missing = [Some((0.0, 0.0)), None];
        assert!(matches!(
            wirelength(&missing, &[(0, 1, 1.0)]),
            Err(PlacerError::Unplaced { edge: 0 })
        ));
    }

    #[test]
    fn outline_examples() {
        let o = Rect::new(0.0, 0.0, 100.0, 100.0);
        assert_eq!(penalty_outline(&[sq(10.0, 10.0, 20.0)], &o), 0.0);
        assert_eq!(penalty_outline(&[Rect::new(90.0, 0.0, 110.0, 10.0)], &o), 100.0);
    }

    #[test]
    fn bias_examples() {
        let o = Rect::new(0.0, 0.0, 100.0, 100.0);
        let hp = 200.0;
        let flush = penalty_bias(&[sq(0.0, 30.0, 20.0)], &[ClusterKind::Macro], &o);
        assert_eq!(flush, 0.0);
        let centered = penalty_bias(&[sq(40.0, 40.0, 20.0)], &[ClusterKind::Mixed], &o);
        assert!((centered * hp - (100.0 - 20.0) / 2.0).abs() < 1e-9);
        let std = penalty_bias(&[sq(40.0, 40.0, 20.0)], &[ClusterKind::StdCell], &o);
        assert_eq!(std, 0.0);
    }

    #[test]
    fn blockage_examples() {
        let o = Rect::new(0.0, 0.0, 100.0, 100.0);
        let b = [Rect::new(0.0, 0.0, 50.0, 50.0)];
        let k = [ClusterKind::Macro];
        assert_eq!(penalty_blockage(&[sq(60.0, 60.0, 10.0)], &k, &b, &[], &o), 0.0);
        let full = penalty_blockage(&[sq(10.0, 10.0, 20.0)], &k, &b, &[], &o);
        assert!((full * o.area() - 400.0).abs() < 1e-9);
        let std = penalty_blockage(&[sq(10.0, 10.0, 20.0)], &[ClusterKind::StdCell], &b, &[], &o);
        assert_eq!(std, 0.0);
        // Overlapping blockage and keep-out count once.
        let ko = [Rect::new(0.0, 0.0, 20.0, 100.0)];
        let u = penalty_blockage(&[sq(10.0, 10.0, 20.0)], &k, &b, &ko, &o);
        assert!((u * o.area() - 400.0).abs() < 1e-9);
    }

    #[test]
    fn guidance_examples() {
        let o = Rect::new(-50.0, -50.0, 50.0, 50.0);
        let g = Some(Rect::new(10.0, 10.0, 20.0, 20.0));
        let at_origin = penalty_guidance(&[sq(-1.0, -1.0, 2.0)], &[g], &o);
        assert!((at_origin * 200.0 - 20.0).abs() < 1e-9);
        assert_eq!(penalty_guidance(&[sq(14.0, 14.0, 2.0)], &[g], &o), 0.0);
        assert_eq!(penalty_guidance(&[sq(0.0, 0.0, 2.0)], &[None], &o), 0.0);
    }

    #[test]
    fn notch_examples() {
        let o = Rect::new(0.0, 0.0, 100.0, 100.0);
        assert_eq!(penalty_notch(&[o], &o, 5.0), 0.0);
        assert_eq!(penalty_notch(&[], &o, 5.0), 0.0);
        let slot = [Rect::new(0.0, 0.0, 50.0, 100.0), Rect::new(51.0, 0.0, 100.0, 100.0)];
        let p = penalty_notch(&slot, &o, 5.0);
        assert!((p * o.area() - 100.0).abs() < 1e-9, "got {}", p * o.area());
        // A wide gap is usable whitespace.
        let wide = [Rect::new(0.0, 0.0, 40.0, 100.0), Rect::new(60.0, 0.0, 100.0, 100.0)];
        assert_eq!(penalty_notch(&wide, &o, 5.0), 0.0);
    }

    #[test]
    fn keepouts_face_inward() {
        let b = |edge, span: (f64, f64), pins: usize| BundledPin {
            edge,
            segment: 0,
            position: (0.0, 0.0),
            segment_span: span,
            pins: (0..pins).map(crate::model::IoPinId).collect(),
        };
        let bs = [b(0, (0.0, 25.0), 1), b(1, (0.0, 50.0), 2), b(2, (25.0, 50.0), 0), b(3, (50.0, 100.0), 1)];
        let k = pin_access_keepouts((100.0, 200.0), &bs, 2.0);
        assert_eq!(
            k,
            vec![
                Rect::new(0.0, 0.0, 25.0, 2.0),
                Rect::new(98.0, 0.0, 100.0, 50.0),
                Rect::new(0.0, 50.0, 2.0, 100.0),
            ]
        );
    }

    /// Unit-cell raster oracle for integer rectangles.
    fn raster_cells(r: &Rect) -> Vec<(i64, i64)> {
        let mut v = Vec::new();
        for x in r.lx as i64..r.ux as i64 {
            for y in r.ly as i64..r.uy as i64 {
                v.push((x, y));
            }
        }
        v
    }

    fn int_rect() -> impl Strategy<Value = Rect> {
        (-10i64..60, -10i64..60, 1i64..30, 1i64..30)
            .prop_map(|(x, y, w, h)| Rect::from_size(x as f64, y as f64, w as f64, h as f64))
    }

    /// Exact notch oracle on the grid induced by every rectangle edge.
    fn notch_exact(rects: &[Rect], o: &Rect, d: f64) -> f64 {
        let clip: Vec<Rect> = rects.iter().filter_map(|r| r.intersection(o)).collect();
        let mut xs: Vec<f64> = clip.iter().flat_map(|r| [r.lx, r.ux]).chain([o.lx, o.ux]).collect();
        let mut ys: Vec<f64> = clip.iter().flat_map(|r| [r.ly, r.uy]).chain([o.ly, o.uy]).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        ys.sort_by(f64::total_cmp);
        ys.dedup();
        let (nx, ny) = (xs.len() - 1, ys.len() - 1);
        let free = |i: usize, j: usize| {
            let (cx, cy) = ((xs[i] + xs[i + 1]) / 2.0, (ys[j] + ys[j + 1]) / 2.0);
            !clip.iter().any(|r| r.contains_point(cx, cy))
        };
        let mut comp = vec![usize::MAX; nx * ny];
        let mut total = 0.0;
        for s in 0..nx * ny {
            if comp[s] != usize::MAX || !free(s % nx, s / nx) {
                continue;
            }
            let mut q = vec![s];
            comp[s] = s;
            let (mut bx0, mut bx1, mut by0, mut by1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
            let mut area = 0.0;
            while let Some(k) = q.pop() {
                let (i, j) = (k % nx, k / nx);
                bx0 = bx0.min(xs[i]);
                bx1 = bx1.max(xs[i + 1]);
                by0 = by0.min(ys[j]);
                by1 = by1.max(ys[j + 1]);
                area += (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j]);
                let mut nb = Vec::new();
                if i > 0 {
                    nb.push(k - 1);
                }
                if i + 1 < nx {
                    nb.push(k + 1);
                }
                if j > 0 {
                    nb.push(k - nx);
                }
                if j + 1 < ny {
                    nb.push(k + nx);
                }
                for n in nb {
                    if comp[n] == usize::MAX && free(n % nx, n / nx) {
                        comp[n] = s;
                        q.push(n);
                    }
                }
            }
            if bx1 - bx0 < d || by1 - by0 < d {
                total += area;
            }
        }
        total / o.area()
    }

    proptest! {
        #[test]
        fn outline_matches_raster(rects in prop::collection::vec(int_rect(), 1..6)) {
            let o = Rect::new(0.0, 0.0, 50.0, 50.0);
            let mut outside = 0usize;
            for r in &rects {
                outside += raster_cells(r)
                    .into_iter()
                    .filter(|&(x, y)| !(0..50).contains(&x) || !(0..50).contains(&y))
                    .count();
            }
            prop_assert!((penalty_outline(&rects, &o) - outside as f64).abs() < 1e-9);
        }

        #[test]
        fn blockage_matches_raster(
            rects in prop::collection::vec(int_rect(), 1..5),
            blocks in prop::collection::vec(int_rect(), 0..4),
            keep in prop::collection::vec(int_rect(), 0..3),
        ) {
            let o = Rect::new(0.0, 0.0, 50.0, 50.0);
            let kinds: Vec<ClusterKind> = (0..rects.len())
                .map(|i| if i % 3 == 2 { ClusterKind::StdCell } else { ClusterKind::Macro })
                .collect();
            let mut hit = 0usize;
            for (r, k) in rects.iter().zip(&kinds) {
                if *k == ClusterKind::StdCell {
                    continue;
                }
                hit += raster_cells(r)
                    .into_iter()
                    .filter(|&(x, y)| {
                        let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                        blocks.iter().chain(&keep).any(|b| b.contains_point(cx, cy))
                    })
                    .count();
            }
            let p = penalty_blockage(&rects, &kinds, &blocks, &keep, &o) * o.area();
            prop_assert!((p - hit as f64).abs() < 1e-6);
        }

        #[test]
        fn notch_matches_exact_on_aligned_rects(
            cells in prop::collection::vec((0u32..20, 0u32..20, 1u32..8, 1u32..8), 0..6),
        ) {
            // Cell size 2.5 with notch_min_dim 5, rectangles on the cell grid.
            let o = Rect::new(0.0, 0.0, 50.0, 50.0);
            let rects: Vec<Rect> = cells
                .iter()
                .map(|&(x, y, w, h)| Rect::from_size(x as f64 * 2.5, y as f64 * 2.5, w as f64 * 2.5, h as f64 * 2.5))
                .collect();
            let got = penalty_notch(&rects, &o, 5.0);
            let want = notch_exact(&rects, &o, 5.0);
            prop_assert!((got - want).abs() < 1e-9, "raster {got} exact {want}");
        }

        #[test]
        fn penalties_are_nonnegative(rects in prop::collection::vec(int_rect(), 0..6)) {
            let o = Rect::new(0.0, 0.0, 50.0, 50.0);
            let kinds = vec![ClusterKind::Mixed; rects.len()];
            let guid = vec![Some(Rect::new(5.0, 5.0, 10.0, 10.0)); rects.len()];
            prop_assert!(penalty_outline(&rects, &o) >= 0.0);
            prop_assert!(penalty_bias(&rects, &kinds, &o) >= 0.0);
            prop_assert!(penalty_blockage(&rects, &kinds, &[Rect::new(0.0, 0.0, 9.0, 9.0)], &[], &o) >= 0.0);
            prop_assert!(penalty_guidance(&rects, &guid, &o) >= 0.0);
            prop_assert!(penalty_notch(&rects, &o, 2.5) >= 0.0);
        }
    }

    fn sample_problem() -> ClusterPlacementProblem {
        let o = Rect::new(0.0, 0.0, 100.0, 80.0);
        let curves = vec![
            ShapeCurve::Discrete(vec![(30.0, 20.0), (20.0, 30.0)]),
            ShapeCurve::Soft { area: 900.0, min_ar: 0.33, max_ar: 3.0 },
            ShapeCurve::Piecewise { area: 1200.0, intervals: vec![(0.5, 0.8), (1.2, 2.0)] },
            ShapeCurve::Zero,
            ShapeCurve::Discrete(vec![(40.0, 10.0)]),
        ];
        let kinds = vec![
            ClusterKind::Macro,
            ClusterKind::StdCell,
            ClusterKind::Mixed,
            ClusterKind::StdCell,
            ClusterKind::Macro,
        ];
        let mut p = ClusterPlacementProblem::new(o, curves, kinds);
        p.edges = vec![(0, 1, 8.0), (1, 2, 3.0), (2, 4, 5.0), (3, 4, 1.0)];
        p.terminals = vec![(0.0, 40.0), (100.0, 10.0)];
        p.terminal_edges = vec![(0, 0, 4.0), (4, 1, 2.0)];
        p.blockages = vec![Rect::new(70.0, 50.0, 100.0, 80.0)];
        p.keepouts = vec![Rect::new(0.0, 0.0, 2.0, 80.0)];
        p.guidance[2] = Some(Rect::new(80.0, 60.0, 90.0, 70.0));
        p
    }

    #[test]
    fn argmin_invariant_under_weight_scaling() {
        let p = sample_problem();
        let mut q = p.clone();
        q.weights = p.weights.scaled(7.3);
        let cal = crate::annealer::calibrate(&p, &p.initial(), &SaSchedule::default());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut s = p.initial();
        let mut costs = Vec::new();
        for _ in 0..2000 {
            p.perturb(&mut s, &mut rng);
            let t = p.evaluate(&s).0;
            costs.push((p.cost(&t, &cal.normalizers), q.cost(&t, &cal.normalizers)));
        }
        for pair in costs.chunks(2) {
            let (a, b) = (pair[0], pair[1]);
            assert_eq!(a.0.partial_cmp(&b.0), a.1.partial_cmp(&b.1));
        }
    }

    #[test]
    fn cost_invariant_under_relabeling() {
        let p = sample_problem();
        let perm = [3usize, 0, 4, 1, 2]; // new index k holds old child perm[k]
        let mut inv = [0usize; 5];
        for (k, &o) in perm.iter().enumerate() {
            inv[o] = k;
        }
        let mut q = p.clone();
        q.curves = perm.iter().map(|&o| p.curves[o].clone()).collect();
        q.kinds = perm.iter().map(|&o| p.kinds[o]).collect();
        q.guidance = perm.iter().map(|&o| p.guidance[o]).collect();
        q.edges = p.edges.iter().map(|&(a, b, w)| (inv[a], inv[b], w)).collect();
        q.terminal_edges = p.terminal_edges.iter().map(|&(a, t, w)| (inv[a], t, w)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = p.initial();
        for _ in 0..200 {
            p.perturb(&mut s, &mut rng);
            let relabeled = ClusterState {
                sp: SequencePair {
                    pos: s.sp.pos.iter().map(|&b| inv[b]).collect(),
                    neg: s.sp.neg.iter().map(|&b| inv[b]).collect(),
                },
                shapes: perm.iter().map(|&o| s.shapes[o]).collect(),
            };
            let (a, fa) = p.evaluate(&s);
            let (b, fb) = q.evaluate(&relabeled);
            assert_eq!(fa, fb);
            for k in 0..NUM_CLUSTER_TERMS {
                assert!((a[k] - b[k]).abs() <= 1e-9 * a[k].abs().max(1.0), "term {k}");
            }
        }
    }

    #[test]
    fn zero_cases_on_constructive_placement() {
        let o = Rect::new(0.0, 0.0, 100.0, 100.0);
        let rects = [Rect::new(0.0, 0.0, 50.0, 100.0), Rect::new(50.0, 0.0, 100.0, 100.0)];
        let kinds = [ClusterKind::Macro, ClusterKind::Mixed];
        assert_eq!(penalty_outline(&rects, &o), 0.0);
        assert_eq!(penalty_bias(&rects, &kinds, &o), 0.0);
        assert_eq!(penalty_blockage(&rects, &kinds, &[], &[], &o), 0.0);
        assert_eq!(penalty_guidance(&rects, &[Some(rects[0]), Some(rects[1])], &o), 0.0);
        assert_eq!(penalty_notch(&rects, &o, 5.0), 0.0);
    }

    #[test]
    fn single_child_is_valid() {
        let o = Rect::new(0.0, 0.0, 100.0, 100.0);
        let p = ClusterPlacementProblem::new(o, vec![ShapeCurve::Discrete(vec![(40.0, 30.0)])], vec![ClusterKind::Macro]);
        let r = place_children(&p, &quick(0));
        assert!(r.valid);
        assert_eq!(r.cost.p_outline, 0.0);
    }

    #[test]
    fn two_large_squares_never_fit() {
        let o = Rect::new(0.0, 0.0, 100.0, 100.0);
        let c = ShapeCurve::Discrete(vec![(60.0, 60.0)]);
        let p = ClusterPlacementProblem::new(o, vec![c.clone(), c], vec![ClusterKind::Macro; 2]);
        // Exhaustive enumeration of the four sequence pairs.
        for pos in [[0, 1], [1, 0]] {
            for neg in [[0, 1], [1, 0]] {
                let s = ClusterState {
                    sp: SequencePair { pos: pos.to_vec(), neg: neg.to_vec() },
                    shapes: vec![(60.0, 60.0); 2],
                };
                assert!(!p.evaluate(&s).1);
            }
        }
        assert!(!place_children(&p, &quick(1)).valid);
    }

    #[test]
    fn placement_respects_hard_blockage() {
        let o = Rect::new(0.0, 0.0, 100.0, 100.0);
        let mut p = ClusterPlacementProblem::new(
            o,
            vec![ShapeCurve::Discrete(vec![(40.0, 40.0)]), ShapeCurve::Soft { area: 1600.0, min_ar: 0.5, max_ar: 2.0 }],
            vec![ClusterKind::Macro, ClusterKind::StdCell],
        );
        p.blockages = vec![Rect::new(0.0, 0.0, 50.0, 50.0)];
        let r = place_children(&p, &quick(4));
        assert!(r.valid);
        assert!(covered_area(&r.rects[0], &p.blockages) <= 1e-9);
    }

    /// Statistical expectation, not a hard property: a dominant edge pulls
    /// its two clusters together in most seeds.
    #[test]
    fn dominant_edge_pulls_clusters_together() {
        let o = Rect::new(0.0, 0.0, 100.0, 100.0);
        let c = ShapeCurve::Discrete(vec![(30.0, 30.0)]);
        let mut p = ClusterPlacementProblem::new(o, vec![c; 4], vec![ClusterKind::StdCell; 4]);
        p.edges = vec![(0, 3, 100.0), (0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)];
        p.weights.notch = 0.0;
        let touching = |a: &Rect, b: &Rect| {
            let gx = (a.lx.max(b.lx) - a.ux.min(b.ux)).max(0.0);
            let gy = (a.ly.max(b.ly) - a.uy.min(b.uy)).max(0.0);
            gx + gy <= 1e-9
        };
        let mut hits = 0;
        for seed in 0..100 {
            let sched = SaSchedule { num_workers: 1, ..quick(seed) };
            let r = place_children(&p, &sched);
            if touching(&r.rects[0], &r.rects[3]) {
                hits += 1;
            }
        }
        assert!(hits >= 80, "adjacent in {hits}/100 runs");
    }

    #[test]
    fn grid_sequence_pair_tiles() {
        let sp = grid_sequence_pair(5, 2);
        let p = evaluate_sequence_pair(&sp, &[(2.0, 3.0); 5]);
        for k in 0..5 {
            assert_eq!((p.x[k], p.y[k]), ((k % 2) as f64 * 2.0, (k / 2) as f64 * 3.0));
        }
    }

    #[test]
    fn single_macro_at_origin() {
        let o = Rect::new(10.0, 20.0, 60.0, 70.0);
        let p = MacroPlacementProblem::new(o, vec![InstId(7)], (50.0, 50.0));
        let r = place_macros(&p, &quick(0)).unwrap();
        assert_eq!(r[0].rect, Rect::new(10.0, 20.0, 60.0, 70.0));
        assert_eq!(r[0].inst, InstId(7));
    }

    #[test]
    fn four_macros_fill_two_by_two() {
        let o = Rect::new(0.0, 0.0, 100.0, 60.0);
        let mut p = MacroPlacementProblem::new(o, (0..4).map(InstId).collect(), (50.0, 30.0));
        p.terminals = vec![(0.0, 0.0)];
        p.terminal_edges = vec![(2, 0, 5.0)];
        let r = place_macros(&p, &quick(2)).unwrap();
        let mut corners: Vec<(f64, f64)> = r.iter().map(|m| (m.rect.lx, m.rect.ly)).collect();
        corners.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(corners, vec![(0.0, 0.0), (0.0, 30.0), (50.0, 0.0), (50.0, 30.0)]);
        // The connected macro sits next to its terminal.
        assert_eq!((r[2].rect.lx, r[2].rect.ly), (0.0, 0.0));
    }

    #[test]
    fn macros_that_cannot_fit_fail() {
        let o = Rect::new(0.0, 0.0, 100.0, 30.0);
        let p = MacroPlacementProblem::new(o, (0..3).map(InstId).collect(), (50.0, 30.0));
        assert!(matches!(place_macros(&p, &quick(0)), Err(PlacerError::MacrosDoNotFit(_))));
    }

    #[test]
    fn flips_are_involutions() {
        let start = vec![Orientation::R0, Orientation::MX, Orientation::R180];
        for axis in [FlipAxis::X, FlipAxis::Y] {
            let mut o = start.clone();
            flip_orientations(&mut o, axis);
            assert_ne!(o, start);
            flip_orientations(&mut o, axis);
            assert_eq!(o, start);
        }
        // The alternating operator cycles R0 -> MY -> R180 -> MX -> R0.
        let mut s = MacroState { sp: SequencePair::identity(1), orientations: vec![Orientation::R0], flips: 0 };
        let mut seen = Vec::new();
        for _ in 0..4 {
            s.flip_all();
            seen.push(s.orientations[0]);
        }
        assert_eq!(seen, vec![Orientation::MY, Orientation::R180, Orientation::MX, Orientation::R0]);
    }
}
