// SPDX-License-Identifier: Apache-2.0

//! Shape curves: bottom-up coarse shaping and top-down fine shaping.

use rand::Rng;
use thiserror::Error;

use crate::annealer::{
    choose_op, multi_start, SaProblem, SaSchedule, SequencePair, SpEvaluator, Packing, Terms,
    DEFAULT_OP_PROBS, MAX_TERMS,
};
use crate::model::{
    covered_area, ClusterId, ClusterKind, DesignDatabase, PhysicalCluster, PhysicalHierarchy, Rect,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapingError {
    #[error("macro cluster `{cluster}` unplaceable: no tiling fits the canvas")]
    Unplaceable { cluster: String },
    #[error("macro cluster `{cluster}` mixes macro footprints")]
    NonUniform { cluster: String },
}

/// Allowed realizations of a cluster. Aspect ratio is height / width.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum ShapeCurve {
    /// Zero-area cluster (io bundles, tiny clusters).
    #[default]
    Zero,
    /// Explicit (w, h) points sorted by width.
    Discrete(Vec<(f64, f64)>),
    /// Fixed area with aspect ratio anywhere in `[min_ar, max_ar]`.
    Soft { area: f64, min_ar: f64, max_ar: f64 },
    /// Fixed area with aspect ratio in any of the sorted disjoint intervals.
    Piecewise { area: f64, intervals: Vec<(f64, f64)> },
}

#[inline]
pub fn shape_for_ar(area: f64, ar: f64) -> (f64, f64) {
    ((area / ar).sqrt(), (area * ar).sqrt())
}

impl ShapeCurve {
    pub fn is_zero(&self) -> bool {
        matches!(self, ShapeCurve::Zero)
    }

    pub fn min_area(&self) -> f64 {
        match self {
            ShapeCurve::Zero => 0.0,
            ShapeCurve::Discrete(pts) => pts.iter().map(|p| p.0 * p.1).fold(f64::INFINITY, f64::min),
            ShapeCurve::Soft { area, .. } | ShapeCurve::Piecewise { area, .. } => *area,
        }
    }

    /// Aspect-ratio intervals of a continuous curve.
    pub fn intervals(&self) -> Vec<(f64, f64)> {
        match self {
            ShapeCurve::Soft { min_ar, max_ar, .. } => vec![(*min_ar, *max_ar)],
            ShapeCurve::Piecewise { intervals, .. } => intervals.clone(),
            _ => Vec::new(),
        }
    }

    /// Number of distinct choices for the discrete case (1 otherwise).
    pub fn num_points(&self) -> usize {
        match self {
            ShapeCurve::Discrete(p) => p.len(),
            _ => 1,
        }
    }

    /// Deterministic starting shape: the most square realization.
    pub fn default_shape(&self) -> (f64, f64) {
        match self {
            ShapeCurve::Zero => (0.0, 0.0),
            ShapeCurve::Discrete(pts) => pts
                .iter()
                .copied()
                .min_by(|a, b| {
                    let ka = (a.1 / a.0).ln().abs();
                    let kb = (b.1 / b.0).ln().abs();
                    ka.total_cmp(&kb)
                })
                .unwrap_or((0.0, 0.0)),
            ShapeCurve::Soft { area, .. } | ShapeCurve::Piecewise { area, .. } => {
                let ar = self
                    .intervals()
                    .iter()
                    .map(|&(lo, hi)| 1.0f64.clamp(lo, hi))
                    .min_by(|a, b| a.ln().abs().total_cmp(&b.ln().abs()))
                    .unwrap_or(1.0);
                shape_for_ar(*area, ar)
            }
        }
    }

    /// Random realization: a uniform interval, then a uniform aspect ratio in
    /// it; or a uniform discrete point.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match self {
            ShapeCurve::Zero => (0.0, 0.0),
            ShapeCurve::Discrete(pts) => {
                if pts.is_empty() {
                    (0.0, 0.0)
                } else {
                    pts[rng.gen_range(0..pts.len())]
                }
            }
            ShapeCurve::Soft { area, .. } | ShapeCurve::Piecewise { area, .. } => {
                let iv = self.intervals();
                if iv.is_empty() {
                    return shape_for_ar(*area, 1.0);
                }
                let (lo, hi) = iv[rng.gen_range(0..iv.len())];
                let ar = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
                shape_for_ar(*area, ar)
            }
        }
    }

    /// True when the realization `(w, h)` belongs to this curve.
    pub fn contains(&self, w: f64, h: f64, eps: f64) -> bool {
        match self {
            ShapeCurve::Zero => w.abs() <= eps && h.abs() <= eps,
            ShapeCurve::Discrete(pts) => pts
                .iter()
                .any(|p| (p.0 - w).abs() <= eps && (p.1 - h).abs() <= eps),
            ShapeCurve::Soft { area, .. } | ShapeCurve::Piecewise { area, .. } => {
                let ar = h / w;
                (w * h - area).abs() <= eps * area.max(1.0)
                    && self
                        .intervals()
                        .iter()
                        .any(|&(lo, hi)| ar >= lo * (1.0 - eps) && ar <= hi * (1.0 + eps))
            }
        }
    }
}

/// Remove dominated points (both coordinates no smaller than another point)
/// and sort by width.
pub fn pareto_prune(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    let mut out: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        if out.iter().any(|q| q.0 <= p.0 && q.1 <= p.1) {
            continue;
        }
        out.push(p);
    }
    out
}

/// Grid tilings of `n` identical macros: every `r` rows by `c = ceil(n/r)`
/// columns that does not leave an empty row, fitting the canvas.
pub fn grid_tilings(
    n: usize,
    footprint: (f64, f64),
    halo: f64,
    canvas: (f64, f64),
) -> Vec<(f64, f64)> {
    let (w, h) = (footprint.0 + 2.0 * halo, footprint.1 + 2.0 * halo);
    let mut pts = Vec::new();
    for r in 1..=n.max(1) {
        let c = n.div_ceil(r).max(1);
        if n.div_ceil(c) < r {
            continue;
        }
        let (tw, th) = (c as f64 * w, r as f64 * h);
        if tw <= canvas.0 + 1e-9 && th <= canvas.1 + 1e-9 {
            pts.push((tw, th));
        }
    }
    pareto_prune(&pts)
}

/// Tilings of a footprint-uniform leaf macro cluster.
pub fn macro_tilings(
    db: &DesignDatabase,
    hierarchy: &PhysicalHierarchy,
    cluster: ClusterId,
    canvas: (f64, f64),
    halo: f64,
) -> Result<Vec<(f64, f64)>, ShapingError> {
    let cl = hierarchy.get(cluster);
    let macros: Vec<_> = hierarchy
        .subtree_instances(cluster)
        .into_iter()
        .filter(|&i| db.is_macro(i))
        .collect();
    let dims = |i: crate::model::InstId| {
        let m = &db.masters[db.instances[i.index()].master.index()];
        (m.width, m.height)
    };
    let Some(&first) = macros.first() else {
        return Ok(Vec::new());
    };
    let fp = dims(first);
    if macros.iter().any(|&i| dims(i) != fp) {
        return Err(ShapingError::NonUniform {
            cluster: cl.name.clone(),
        });
    }
    let t = grid_tilings(macros.len(), fp, halo, canvas);
    if t.is_empty() {
        return Err(ShapingError::Unplaceable {
            cluster: cl.name.clone(),
        });
    }
    Ok(t)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapingParams {
    pub min_ar: f64,
    pub tiny_thr: usize,
    pub macro_halo: f64,
    /// Tilings within this relative area of the best one are kept.
    pub tiling_area_slack: f64,
}

impl Default for ShapingParams {
    fn default() -> Self {
        ShapingParams {
            min_ar: 0.33,
            tiny_thr: 50,
            macro_halo: 0.0,
            tiling_area_slack: 1.0,
        }
    }
}

/// Packing of child blocks with discrete shape choices, minimizing the
/// bounding area under the canvas limits.
pub struct TilingProblem {
    pub choices: Vec<Vec<(f64, f64)>>,
    pub canvas: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct TilingState {
    pub sp: SequencePair,
    pub pick: Vec<usize>,
}

impl TilingProblem {
    pub fn initial(&self) -> TilingState {
        TilingState {
            sp: SequencePair::identity(self.choices.len()),
            pick: vec![0; self.choices.len()],
        }
    }

    pub fn pack(&self, state: &TilingState) -> Packing {
        let shapes: Vec<(f64, f64)> = state
            .pick
            .iter()
            .enumerate()
            .map(|(b, &k)| self.choices[b][k])
            .collect();
        let mut out = Packing::default();
        SpEvaluator::default().evaluate_into(&state.sp, &shapes, &mut out);
        out
    }
}

impl SaProblem for TilingProblem {
    type State = TilingState;

    fn num_terms(&self) -> usize {
        2
    }

    fn evaluate(&self, state: &TilingState) -> (Terms, bool) {
        let p = self.pack(state);
        let mut t = [0.0; MAX_TERMS];
        t[0] = p.width * p.height;
        let ex = (p.width - self.canvas.0).max(0.0);
        let ey = (p.height - self.canvas.1).max(0.0);
        t[1] = ex * p.height + ey * p.width;
        t[2] = p.width;
        t[3] = p.height;
        (t, ex <= 1e-9 && ey <= 1e-9)
    }

    fn cost(&self, t: &Terms, n: &Terms) -> f64 {
        t[0] / n[0] + 10.0 * t[1] / n[1]
    }

    fn perturb<R: Rng>(&self, state: &mut TilingState, rng: &mut R) {
        let op = choose_op(&DEFAULT_OP_PROBS, rng);
        if op < 3 {
            state.sp.perturb(op, rng);
        } else {
            let b = rng.gen_range(0..self.choices.len());
            state.pick[b] = rng.gen_range(0..self.choices[b].len());
        }
    }

    fn fallback_normalizer(&self, term: usize) -> f64 {
        match term {
            0 | 1 => (self.canvas.0 * self.canvas.1).max(1.0),
            _ => 1.0,
        }
    }

    fn sample_point(&self, t: &Terms, feasible: bool) -> Option<(f64, f64)> {
        feasible.then_some((t[2], t[3]))
    }
}

/// Tilings of the child blocks of a cluster holding macros. Standard-cell
/// area is ignored: only discrete child curves take part.
pub fn mixed_tilings(
    children: &[ShapeCurve],
    canvas: (f64, f64),
    min_ar: f64,
    slack: f64,
    schedule: &SaSchedule,
) -> Vec<(f64, f64)> {
    let choices: Vec<Vec<(f64, f64)>> = children
        .iter()
        .filter_map(|c| match c {
            ShapeCurve::Discrete(p) if !p.is_empty() => Some(p.clone()),
            _ => None,
        })
        .collect();
    let fits = |p: &(f64, f64)| p.0 <= canvas.0 + 1e-9 && p.1 <= canvas.1 + 1e-9;
    let candidates = match choices.len() {
        0 => return Vec::new(),
        1 => pareto_prune(&choices[0].iter().copied().filter(fits).collect::<Vec<_>>()),
        _ => {
            let problem = TilingProblem { choices, canvas };
            let init = problem.initial();
            let r = multi_start(&problem, &init, schedule);
            if r.pareto.is_empty() {
                let p = problem.pack(&r.state);
                vec![(p.width, p.height)]
            } else {
                r.pareto
            }
        }
    };
    select_tilings(&candidates, min_ar, slack)
}

/// Keep near-minimal-area tilings and, when more than one survives, prefer
/// those inside the aspect-ratio band.
fn select_tilings(candidates: &[(f64, f64)], min_ar: f64, slack: f64) -> Vec<(f64, f64)> {
    if candidates.is_empty() {
        return Vec::new();
    }
    let best = candidates.iter().map(|p| p.0 * p.1).fold(f64::INFINITY, f64::min);
    let kept: Vec<(f64, f64)> = candidates
        .iter()
        .copied()
        .filter(|p| p.0 * p.1 <= best * (1.0 + slack) + 1e-9)
        .collect();
    let kept = pareto_prune(&kept);
    if kept.len() > 1 {
        let in_band: Vec<(f64, f64)> = kept
            .iter()
            .copied()
            .filter(|p| {
                let ar = p.1 / p.0;
                ar >= min_ar - 1e-12 && ar <= 1.0 / min_ar + 1e-12
            })
            .collect();
        if !in_band.is_empty() {
            return in_band;
        }
    }
    kept
}

/// Coarse curve of a child as seen by its parent's tiling. Fine shaping
/// sizes a non-leaf macro or mixed cluster at its minimum tiling plus its
/// standard-cell area, so tilings larger than that can never be realized
/// and are not offered to the parent.
fn realizable_curve(cl: &PhysicalCluster) -> ShapeCurve {
    match (&cl.coarse_curve, cl.kind) {
        (ShapeCurve::Discrete(pts), ClusterKind::Macro | ClusterKind::Mixed) if !cl.is_leaf() => {
            let min = pts.iter().map(|p| p.0 * p.1).fold(f64::INFINITY, f64::min);
            let limit = min + cl.stats.std_cell_area;
            ShapeCurve::Discrete(
                pts.iter()
                    .copied()
                    .filter(|p| p.0 * p.1 <= limit * (1.0 + 1e-12))
                    .collect(),
            )
        }
        (c, _) => c.clone(),
    }
}

/// Bottom-up rough shape functions for every cluster. Both `coarse_curve`
/// and `shape_curve` are set.
pub fn coarse_shape(
    db: &DesignDatabase,
    hierarchy: &mut PhysicalHierarchy,
    canvas: (f64, f64),
    params: &ShapingParams,
    schedule: &SaSchedule,
) -> Result<(), ShapingError> {
    let order = hierarchy.preorder();
    for (k, &c) in order.iter().enumerate().rev() {
        let cl = hierarchy.get(c);
        let curve = match cl.kind {
            ClusterKind::IoBundle => ShapeCurve::Zero,
            ClusterKind::StdCell => {
                if cl.stats.std_cell_area > 0.0 {
                    ShapeCurve::Soft {
                        area: cl.stats.std_cell_area,
                        min_ar: params.min_ar,
                        max_ar: 1.0 / params.min_ar,
                    }
                } else {
                    ShapeCurve::Zero
                }
            }
            ClusterKind::Macro | ClusterKind::Mixed if cl.is_leaf() => {
                if cl.kind == ClusterKind::Mixed {
                    // Leaf mixed clusters are split during clustering; treat
                    // any leftover as a macro block of its macros.
                    return Err(ShapingError::NonUniform {
                        cluster: cl.name.clone(),
                    });
                }
                ShapeCurve::Discrete(macro_tilings(db, hierarchy, c, canvas, params.macro_halo)?)
            }
            ClusterKind::Macro | ClusterKind::Mixed => {
                let child_curves: Vec<ShapeCurve> = cl
                    .children
                    .iter()
                    .map(|&ch| realizable_curve(hierarchy.get(ch)))
                    .collect();
                let sched = schedule.with_seed(schedule.seed.wrapping_add(k as u64 * 7919));
                let t = mixed_tilings(
                    &child_curves,
                    canvas,
                    params.min_ar,
                    params.tiling_area_slack,
                    &sched,
                );
                if t.is_empty() {
                    return Err(ShapingError::Unplaceable {
                        cluster: cl.name.clone(),
                    });
                }
                ShapeCurve::Discrete(t)
            }
        };
        let cl = hierarchy.get_mut(c);
        cl.coarse_curve = curve.clone();
        cl.shape_curve = curve;
    }
    Ok(())
}

/// Intervals `[h^2/area, area/w^2]` for each tiling, with empty ones dropped
/// and overlapping ones merged.
pub fn tiling_intervals(tilings: &[(f64, f64)], area: f64) -> Vec<(f64, f64)> {
    let mut iv: Vec<(f64, f64)> = tilings
        .iter()
        .map(|&(w, h)| (h * h / area, area / (w * w)))
        .filter(|&(lo, hi)| lo <= hi * (1.0 + 1e-12))
        .map(|(lo, hi)| (lo, hi.max(lo)))
        .collect();
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in iv {
        match merged.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    merged
}

/// `parent_std_area / (avail_area * (1 - t_dead_space))`.
#[inline]
pub fn inflat_ratio(parent_std_area: f64, avail_area: f64, t_dead_space: f64) -> f64 {
    parent_std_area / (avail_area * (1.0 - t_dead_space))
}

/// Fine shape functions for the children of `parent` inside its placed
/// rectangle. Returns false when the children cannot fit.
pub fn fine_shape(
    hierarchy: &mut PhysicalHierarchy,
    parent: ClusterId,
    blockages: &[Rect],
    util: f64,
    t_dead_space: f64,
    params: &ShapingParams,
) -> bool {
    let Some(outline) = hierarchy.get(parent).placed_rect else {
        return false;
    };
    let mut avail = outline.area() - covered_area(&outline, blockages);
    let fits = |p: &(f64, f64)| p.0 <= outline.width() + 1e-9 && p.1 <= outline.height() + 1e-9;

    let children = hierarchy.get(parent).children.clone();
    for &c in &children {
        let cl = hierarchy.get(c);
        match cl.kind {
            ClusterKind::Macro if cl.is_leaf() => {
                let ShapeCurve::Discrete(pts) = &cl.coarse_curve else {
                    continue;
                };
                let kept: Vec<(f64, f64)> = pts.iter().copied().filter(fits).collect();
                if kept.is_empty() {
                    return false;
                }
                avail -= kept.iter().map(|p| p.0 * p.1).fold(f64::INFINITY, f64::min);
                hierarchy.get_mut(c).shape_curve = ShapeCurve::Discrete(kept);
            }
            ClusterKind::Macro | ClusterKind::Mixed => {
                let ShapeCurve::Discrete(pts) = &cl.coarse_curve else {
                    continue;
                };
                let kept: Vec<(f64, f64)> = pts.iter().copied().filter(fits).collect();
                if kept.is_empty() {
                    return false;
                }
                let min_tiling = kept.iter().map(|p| p.0 * p.1).fold(f64::INFINITY, f64::min);
                let mut area = min_tiling + cl.stats.std_cell_area / util;
                let mut intervals = tiling_intervals(&kept, area);
                if intervals.is_empty() {
                    // Every tiling is larger than the inflated area: fall back
                    // to the tightest tiling as a single aspect ratio.
                    let p = kept
                        .iter()
                        .copied()
                        .min_by(|a, b| (a.0 * a.1).total_cmp(&(b.0 * b.1)))
                        .unwrap();
                    area = p.0 * p.1;
                    intervals = vec![(p.1 / p.0, p.1 / p.0)];
                }
                avail -= area;
                hierarchy.get_mut(c).shape_curve = ShapeCurve::Piecewise { area, intervals };
            }
            _ => {}
        }
    }

    let parent_std = hierarchy.get(parent).stats.std_cell_area;
    if parent_std <= 0.0 {
        return true;
    }
    if avail <= 0.0 {
        return false;
    }
    let ratio = inflat_ratio(parent_std, avail, t_dead_space);
    for &c in &children {
        let cl = hierarchy.get(c);
        if cl.kind != ClusterKind::StdCell {
            continue;
        }
        let curve = if cl.is_tiny || cl.stats.std_cell_area <= 0.0 {
            ShapeCurve::Zero
        } else {
            ShapeCurve::Soft {
                area: cl.stats.std_cell_area / ratio,
                min_ar: params.min_ar,
                max_ar: 1.0 / params.min_ar,
            }
        };
        hierarchy.get_mut(c).shape_curve = curve;
    }
    true
}
