// SPDX-License-Identifier: Apache-2.0

//! Multilevel autoclustering.
//!
//! The logical module tree is copied one-to-one into a [`PhysicalHierarchy`],
//! IO pins are bundled per boundary segment, and the tree is then refined
//! level by level: clusters above the level's size limits are dissolved into
//! their logical children (or bipartitioned when flat), clusters below the
//! minimum are merged by connection signature. Mixed leaves are finally split
//! into a standard-cell half and a macro half, macros are regrouped by
//! signature and footprint, and the cluster graph gets its real and virtual
//! edges.

use std::collections::{BTreeMap, HashMap, VecDeque};

use thiserror::Error;

use crate::dataflow::{
    add_virtual_edges, build_sequential_graph, compute_hops, dataflow_sources, SeqVertex,
};
use crate::model::{
    BundledPin, Canvas, ClusterGraph, ClusterId, ClusterKind, ClusterStats, DesignDatabase,
    InstId, IoPinId, MasterKind, ModelError, ModuleId, NetId, PhysicalHierarchy, PinRef,
};
use crate::partition::{instance_nets, recursive_bipartition, PartitionError};

#[derive(Debug, Error)]
pub enum ClusteringError {
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid clustering parameter: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterParams {
    pub num_level: usize,
    pub level_ratio: f64,
    pub num_segment: usize,
    pub epsilon_net: f64,
    pub num_hop_thr: u32,
    /// Two candidates have similar buses when, for every reference they are
    /// both strongly connected to, the larger net count is at most this
    /// multiple of the smaller one.
    pub bus_similarity: f64,
    /// Virtual weight between the halves of a split mixed leaf, as a multiple
    /// of `epsilon_net`.
    pub split_edge_factor: f64,
    pub tiny_thr: usize,
    pub balance: f64,
    pub seed: u64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            num_level: 2,
            level_ratio: 10.0,
            num_segment: 4,
            epsilon_net: 50.0,
            num_hop_thr: 4,
            bus_similarity: 2.0,
            split_edge_factor: 10.0,
            tiny_thr: 50,
            balance: 0.55,
            seed: 0,
        }
    }
}

impl ClusterParams {
    // Negated comparisons so that NaN is rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ClusteringError> {
        let bad = |msg: &str| Err(ClusteringError::InvalidParams(msg.to_string()));
        if self.num_level == 0 {
            return bad("num_level must be at least 1");
        }
        if !(self.level_ratio > 1.0) || !self.level_ratio.is_finite() {
            return bad("level_ratio must be a finite value above 1");
        }
        if self.num_segment == 0 {
            return bad("num_segment must be at least 1");
        }
        if !(self.epsilon_net >= 0.0) {
            return bad("epsilon_net must be non-negative");
        }
        if !(self.bus_similarity >= 1.0) {
            return bad("bus_similarity must be at least 1");
        }
        if !(self.balance > 0.5 && self.balance < 1.0) {
            return bad("balance must lie in (0.5, 1)");
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Size thresholds
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SizeThresholds {
    pub max_num_inst: usize,
    pub min_num_inst: f64,
    pub max_num_macro: usize,
    pub min_num_macro: f64,
}

impl SizeThresholds {
    pub fn is_oversized(&self, s: &ClusterStats) -> bool {
        s.num_macro > self.max_num_macro || s.num_std_cell > self.max_num_inst
    }

    /// Below both minimums: a merge candidate.
    pub fn is_undersized(&self, s: &ClusterStats) -> bool {
        (s.num_macro as f64) < self.min_num_macro && (s.num_std_cell as f64) < self.min_num_inst
    }
}

/// Limits for clusters created at `level_id` (the root's children are level 1).
pub fn size_thresholds(
    level_id: usize,
    total_inst: usize,
    total_macro: usize,
    level_ratio: f64,
) -> SizeThresholds {
    let div = level_ratio.powi(level_id as i32);
    // Shave a few ulps so exact quotients are not bumped up by rounding.
    let cap = |total: usize| ((total as f64 / div * (1.0 - 1e-12)).ceil() as usize).max(1);
    let max_num_inst = cap(total_inst);
    let max_num_macro = cap(total_macro);
    SizeThresholds {
        max_num_inst,
        min_num_inst: max_num_inst as f64 / 2.0,
        max_num_macro,
        min_num_macro: max_num_macro as f64 / 2.0,
    }
}

// ---------------------------------------------------------------------------
// Connection signatures
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConnectionSignature {
    pub bits: Vec<bool>,
}

impl ConnectionSignature {
    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Index of the only set bit, if exactly one is set.
    pub fn single(&self) -> Option<usize> {
        if self.count_ones() == 1 {
            self.bits.iter().position(|&b| b)
        } else {
            None
        }
    }
}

/// Bit `i` is set when the real net count between `c` and `references[i]`
/// exceeds `epsilon_net`. Virtual weight is ignored.
pub fn connection_signature(
    c: ClusterId,
    references: &[ClusterId],
    graph: &ClusterGraph,
    epsilon_net: f64,
) -> ConnectionSignature {
    ConnectionSignature {
        bits: references
            .iter()
            .map(|&r| graph.edge(c, r).map_or(0.0, |e| e.real) > epsilon_net)
            .collect(),
    }
}

/// Reference clusters for a candidate set: the children of every cluster on
/// the root path down to (not including) the candidates' lowest common
/// ancestor, minus the path itself. When that set is empty (the ancestor is
/// the root) the ancestor's non-candidate children are used instead.
pub fn reference_clusters(h: &PhysicalHierarchy, candidates: &[ClusterId]) -> Vec<ClusterId> {
    let Some(lca) = h.lowest_common_ancestor(candidates) else {
        return Vec::new();
    };
    let path = h.path_from_root(lca);
    let mut refs = Vec::new();
    for pair in path.windows(2) {
        let (v, next) = (pair[0], pair[1]);
        refs.extend(h.children(v).iter().copied().filter(|&u| u != next));
    }
    if refs.is_empty() {
        refs.extend(
            h.children(lca)
                .iter()
                .copied()
                .filter(|c| !candidates.contains(c)),
        );
    }
    refs
}

/// Real connection counts between the subtrees of `clusters`. A net adds its
/// bitwidth once for every distinct sink cluster other than the driver's.
pub fn signature_graph(
    db: &DesignDatabase,
    h: &PhysicalHierarchy,
    clusters: &[ClusterId],
) -> ClusterGraph {
    let mut inst_group = vec![None; db.instances.len()];
    let mut io_group = vec![None; db.canvas.io_pins.len()];
    for &c in clusters {
        for i in h.subtree_instances(c) {
            inst_group[i.index()] = Some(c);
        }
        if let Some(b) = &h.get(c).bundle {
            for p in &b.pins {
                io_group[p.index()] = Some(c);
            }
        }
    }
    let group = |p: &PinRef| match p {
        PinRef::Inst(i) => inst_group[i.index()],
        PinRef::Io(p) => io_group[p.index()],
    };
    let mut graph = ClusterGraph::default();
    for net in &db.nets {
        let Some(d) = group(&net.driver) else { continue };
        let mut sinks: Vec<ClusterId> = net.sinks.iter().filter_map(group).collect();
        sinks.sort_unstable();
        sinks.dedup();
        for s in sinks {
            graph.add_real(d, s, f64::from(net.bitwidth));
        }
    }
    graph
}

// ---------------------------------------------------------------------------
// Bundled pins
// ---------------------------------------------------------------------------

/// Edge id and coordinate along the edge for a boundary point. Edges are
/// numbered bottom, right, top, left; corners go to the first match.
fn boundary_edge(canvas: &Canvas, x: f64, y: f64) -> Option<(usize, f64)> {
    let tol = 1e-9 * canvas.width.max(canvas.height).max(1.0);
    if y.abs() <= tol {
        Some((0, x))
    } else if (x - canvas.width).abs() <= tol {
        Some((1, y))
    } else if (y - canvas.height).abs() <= tol {
        Some((2, x))
    } else if x.abs() <= tol {
        Some((3, y))
    } else {
        None
    }
}

/// Split every edge into `num_segment` equal segments and bundle the IO pins
/// of each. Returns `4 * num_segment` bundles, edge-major.
pub fn create_bundled_pins(canvas: &Canvas, num_segment: usize) -> Vec<BundledPin> {
    let ns = num_segment.max(1);
    let (w, h) = (canvas.width, canvas.height);
    let mut out = Vec::with_capacity(4 * ns);
    for edge in 0..4 {
        let seg = if edge % 2 == 0 { w } else { h } / ns as f64;
        for k in 0..ns {
            let (a, b) = (k as f64 * seg, (k + 1) as f64 * seg);
            let mid = 0.5 * (a + b);
            let position = match edge {
                0 => (mid, 0.0),
                1 => (w, mid),
                2 => (mid, h),
                _ => (0.0, mid),
            };
            out.push(BundledPin {
                edge,
                segment: k,
                position,
                segment_span: (a, b),
                pins: Vec::new(),
            });
        }
    }
    for (p, pin) in canvas.io_pins.iter().enumerate() {
        if let Some((edge, coord)) = boundary_edge(canvas, pin.x, pin.y) {
            let seg = if edge % 2 == 0 { w } else { h } / ns as f64;
            let k = ((coord / seg).floor().max(0.0) as usize).min(ns - 1);
            out[edge * ns + k].pins.push(IoPinId(p));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Tree surgery
// ---------------------------------------------------------------------------

fn instance_stats(db: &DesignDatabase, instances: &[InstId]) -> Result<ClusterStats, ModelError> {
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

fn sub_seed(seed: u64, c: ClusterId) -> u64 {
    seed ^ (c.index() as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Working state for one clustering run. Tracks which cluster directly owns
/// each instance and IO pin so signature counts never rescan the whole tree.
struct Clusterer<'a> {
    db: &'a DesignDatabase,
    h: &'a mut PhysicalHierarchy,
    params: &'a ClusterParams,
    inst_nets: Vec<Vec<NetId>>,
    owner: Vec<Option<ClusterId>>,
    io_owner: Vec<Option<ClusterId>>,
    total_std: usize,
    total_macro: usize,
}

impl<'a> Clusterer<'a> {
    fn new(db: &'a DesignDatabase, h: &'a mut PhysicalHierarchy, params: &'a ClusterParams) -> Self {
        let mut owner = vec![None; db.instances.len()];
        let mut io_owner = vec![None; db.canvas.io_pins.len()];
        for c in h.preorder() {
            let cl = h.get(c);
            for &i in &cl.instances {
                owner[i.index()] = Some(c);
            }
            if let Some(b) = &cl.bundle {
                for p in &b.pins {
                    io_owner[p.index()] = Some(c);
                }
            }
        }
        let movable = db.movable_macros();
        Clusterer {
            inst_nets: instance_nets(db),
            total_std: db.num_std_cells(),
            total_macro: movable.len(),
            db,
            h,
            params,
            owner,
            io_owner,
        }
    }

    fn thresholds(&self, level: usize) -> SizeThresholds {
        size_thresholds(level, self.total_std, self.total_macro, self.params.level_ratio)
    }

    fn give(&mut self, c: ClusterId, insts: Vec<InstId>) {
        for &i in &insts {
            self.owner[i.index()] = Some(c);
        }
        self.h.get_mut(c).instances.extend(insts);
    }

    /// Recompute the stats of `c` from its own instances and its children.
    fn refresh_node(&mut self, c: ClusterId) -> Result<(), ClusteringError> {
        let mut s = instance_stats(self.db, &self.h.get(c).instances)?;
        for &k in self.h.children(c) {
            s.add(&self.h.get(k).stats);
        }
        let cl = self.h.get_mut(c);
        cl.stats = s;
        if cl.kind != ClusterKind::IoBundle {
            cl.kind = s.kind();
        }
        Ok(())
    }

    /// Refresh `c` and every ancestor.
    fn refresh_up(&mut self, c: ClusterId) -> Result<(), ClusteringError> {
        let mut cur = Some(c);
        while let Some(x) = cur {
            self.refresh_node(x)?;
            cur = self.h.get(x).parent;
        }
        Ok(())
    }

    fn new_child(
        &mut self,
        parent: ClusterId,
        name: String,
        insts: Vec<InstId>,
        logical_parent: Option<ModuleId>,
    ) -> Result<ClusterId, ClusteringError> {
        let id = self.h.add_cluster(name);
        self.h.attach(parent, id);
        self.h.get_mut(id).logical_parent = logical_parent;
        self.give(id, insts);
        self.refresh_node(id)?;
        Ok(id)
    }

    fn kill(&mut self, c: ClusterId) {
        self.h.detach(c);
        self.h.get_mut(c).alive = false;
    }

    /// Pull every instance of the subtree into `c` and drop its descendants.
    fn flatten(&mut self, c: ClusterId) -> Result<(), ClusteringError> {
        if self.h.get(c).children.is_empty() {
            return Ok(());
        }
        let insts = self.h.subtree_instances(c);
        for k in self.h.get(c).children.clone() {
            self.h.remove_subtree(k);
        }
        self.h.get_mut(c).instances.clear();
        self.give(c, insts);
        self.refresh_node(c)
    }

    /// Move the direct instances and children of `src` into `dst`.
    fn absorb(&mut self, dst: ClusterId, src: ClusterId) -> Result<(), ClusteringError> {
        let insts = std::mem::take(&mut self.h.get_mut(src).instances);
        self.give(dst, insts);
        for k in std::mem::take(&mut self.h.get_mut(src).children) {
            self.h.get_mut(k).parent = Some(dst);
            self.h.get_mut(dst).children.push(k);
        }
        let name = format!("{}+{}", self.h.get(dst).name, self.h.get(src).name);
        self.h.get_mut(dst).name = name;
        let old_parent = self.h.get(src).parent;
        self.kill(src);
        if let Some(p) = old_parent {
            self.refresh_up(p)?;
        }
        self.refresh_up(dst)
    }

    fn logical_home(&self, c: ClusterId) -> Option<ModuleId> {
        let cl = self.h.get(c);
        cl.module.or(cl.logical_parent)
    }

    /// Bipartition the instances of a flat cluster until every part holds
    /// fewer than `max_num_inst` standard cells.
    fn partition_parts(
        &self,
        c: ClusterId,
        max_num_inst: usize,
    ) -> Result<Vec<Vec<InstId>>, ClusteringError> {
        Ok(recursive_bipartition(
            self.db,
            &self.inst_nets,
            &self.h.get(c).instances,
            max_num_inst,
            self.params.balance,
            sub_seed(self.params.seed, c),
        )?)
    }

    // -----------------------------------------------------------------------
    // Single level
    // -----------------------------------------------------------------------

    fn single_level(&mut self, parent: ClusterId, thr: &SizeThresholds) -> Result<(), ClusteringError> {
        let stats = self.h.get(parent).stats;
        if parent != self.h.root && !thr.is_oversized(&stats) {
            // Already small enough for this level: it stays a leaf.
            return self.flatten(parent);
        }
        let io: Vec<ClusterId> = self
            .h
            .children(parent)
            .iter()
            .copied()
            .filter(|&c| self.h.get(c).is_io())
            .collect();
        let inner: Vec<ClusterId> = self
            .h
            .children(parent)
            .iter()
            .copied()
            .filter(|&c| !self.h.get(c).is_io())
            .collect();

        if inner.is_empty() {
            if stats.num_std_cell > thr.max_num_inst {
                let parts = self.partition_parts(parent, thr.max_num_inst)?;
                if parts.len() > 1 {
                    self.h.get_mut(parent).instances.clear();
                    let home = self.logical_home(parent);
                    let base = self.h.get(parent).name.clone();
                    for (k, part) in parts.into_iter().enumerate() {
                        self.new_child(parent, format!("{base}/p{k}"), part, home)?;
                    }
                    self.refresh_node(parent)?;
                }
            }
            // The root never owns instances: a small flat top module becomes
            // a single child.
            if parent == self.h.root && !self.h.get(parent).instances.is_empty() {
                let insts = std::mem::take(&mut self.h.get_mut(parent).instances);
                let home = self.logical_home(parent);
                let name = format!("{}/glue", self.h.get(parent).name);
                self.new_child(parent, name, insts, home)?;
                self.refresh_node(parent)?;
            }
            return Ok(());
        }

        if !self.h.get(parent).instances.is_empty() {
            let insts = std::mem::take(&mut self.h.get_mut(parent).instances);
            let home = self.logical_home(parent);
            let name = format!("{}/glue", self.h.get(parent).name);
            self.new_child(parent, name, insts, home)?;
        }

        let mut queue: VecDeque<ClusterId> = self
            .h
            .children(parent)
            .iter()
            .copied()
            .filter(|&c| !self.h.get(c).is_io())
            .collect();
        let mut kept = Vec::new();
        let mut candidates = Vec::new();
        while let Some(c) = queue.pop_front() {
            let s = self.h.get(c).stats;
            if thr.is_oversized(&s) {
                if !self.h.get(c).children.is_empty() {
                    let lifted = self.dissolve(c, parent)?;
                    for &l in lifted.iter().rev() {
                        queue.push_front(l);
                    }
                    continue;
                }
                // Flat: split on standard cells only; surplus macros are
                // regrouped after the levels are built.
                if s.num_std_cell > thr.max_num_inst {
                    kept.extend(self.split_child(c, parent, thr.max_num_inst)?);
                    continue;
                }
                kept.push(c);
            } else {
                if thr.is_undersized(&s) {
                    candidates.push(c);
                }
                kept.push(c);
            }
        }
        let mut order = kept;
        order.extend(io);
        debug_assert_eq!(order.len(), self.h.children(parent).len());
        self.h.get_mut(parent).children = order;

        if !candidates.is_empty() {
            self.merge_candidates(&candidates)?;
        }
        Ok(())
    }

    /// Replace `c` by its children (and a glue cluster for its own
    /// instances) under `parent`. Returns the lifted clusters.
    fn dissolve(&mut self, c: ClusterId, parent: ClusterId) -> Result<Vec<ClusterId>, ClusteringError> {
        let home = self.logical_home(c);
        let insts = std::mem::take(&mut self.h.get_mut(c).instances);
        let mut lifted = Vec::new();
        for k in std::mem::take(&mut self.h.get_mut(c).children) {
            self.h.get_mut(k).parent = Some(parent);
            self.h.get_mut(parent).children.push(k);
            lifted.push(k);
        }
        if !insts.is_empty() {
            let name = format!("{}/glue", self.h.get(c).name);
            lifted.push(self.new_child(parent, name, insts, home)?);
        }
        self.kill(c);
        Ok(lifted)
    }

    /// Replace a flat child by its partition parts.
    fn split_child(
        &mut self,
        c: ClusterId,
        parent: ClusterId,
        max_num_inst: usize,
    ) -> Result<Vec<ClusterId>, ClusteringError> {
        let parts = self.partition_parts(c, max_num_inst)?;
        if parts.len() <= 1 {
            return Ok(vec![c]);
        }
        let home = self.logical_home(c);
        let base = self.h.get(c).name.clone();
        self.h.get_mut(c).instances.clear();
        let mut out = Vec::new();
        for (k, part) in parts.into_iter().enumerate() {
            out.push(self.new_child(parent, format!("{base}/p{k}"), part, home)?);
        }
        self.kill(c);
        Ok(out)
    }

    // -----------------------------------------------------------------------
    // Signature merging
    // -----------------------------------------------------------------------

    fn group_of(&self, pin: &PinRef, groups: &HashMap<ClusterId, usize>) -> Option<usize> {
        let mut c = match pin {
            PinRef::Inst(i) => self.owner[i.index()]?,
            PinRef::Io(p) => self.io_owner[p.index()]?,
        };
        loop {
            if let Some(&g) = groups.get(&c) {
                return Some(g);
            }
            c = self.h.get(c).parent?;
        }
    }

    /// Real counts between each candidate and each reference. Only nets
    /// touching a candidate are visited.
    fn reference_graph(&self, candidates: &[ClusterId], refs: &[ClusterId]) -> ClusterGraph {
        let k = candidates.len();
        let ids: Vec<ClusterId> = candidates.iter().chain(refs).copied().collect();
        let groups: HashMap<ClusterId, usize> =
            ids.iter().enumerate().map(|(g, &c)| (c, g)).collect();
        let mut nets: Vec<NetId> = candidates
            .iter()
            .flat_map(|&c| self.h.subtree_instances(c))
            .flat_map(|i| self.inst_nets[i.index()].iter().copied())
            .collect();
        nets.sort_unstable();
        nets.dedup();
        let mut graph = ClusterGraph::default();
        let mut sinks = Vec::new();
        for n in nets {
            let net = &self.db.nets[n.index()];
            let Some(d) = self.group_of(&net.driver, &groups) else {
                continue;
            };
            sinks.clear();
            sinks.extend(net.sinks.iter().filter_map(|p| self.group_of(p, &groups)));
            sinks.sort_unstable();
            sinks.dedup();
            for &s in &sinks {
                if (d < k) != (s < k) {
                    graph.add_real(ids[d], ids[s], f64::from(net.bitwidth));
                }
            }
        }
        graph
    }

    fn similar_buses(
        &self,
        graph: &ClusterGraph,
        a: ClusterId,
        b: ClusterId,
        refs: &[ClusterId],
        sig: &ConnectionSignature,
    ) -> bool {
        let ratio = self.params.bus_similarity;
        refs.iter().zip(&sig.bits).filter(|(_, &bit)| bit).all(|(&r, _)| {
            let x = graph.edge(a, r).map_or(0.0, |e| e.real);
            let y = graph.edge(b, r).map_or(0.0, |e| e.real);
            x.max(y) <= ratio * x.min(y)
        })
    }

    /// Merge candidates into their sole strongly-connected reference, then
    /// merge the rest by equal signature. Returns the surviving candidates.
    fn merge_candidates(&mut self, candidates: &[ClusterId]) -> Result<Vec<ClusterId>, ClusteringError> {
        let refs = reference_clusters(self.h, candidates);
        let graph = self.reference_graph(candidates, &refs);
        let sigs: Vec<ConnectionSignature> = candidates
            .iter()
            .map(|&c| connection_signature(c, &refs, &graph, self.params.epsilon_net))
            .collect();

        let mut remaining = Vec::new();
        for (k, &c) in candidates.iter().enumerate() {
            match sigs[k].single().map(|j| refs[j]) {
                Some(r) if !self.h.get(r).is_io() => self.merge_into_reference(c, r)?,
                _ => remaining.push(k),
            }
        }

        // Equal signature and same logical module, then union by bus
        // similarity inside each bucket.
        let mut buckets: BTreeMap<(&ConnectionSignature, Option<ModuleId>), Vec<usize>> =
            BTreeMap::new();
        for &k in &remaining {
            let home = self.h.get(candidates[k]).logical_parent;
            buckets.entry((&sigs[k], home)).or_default().push(k);
        }
        let mut survivors = Vec::new();
        let mut merges: Vec<(usize, Vec<usize>)> = Vec::new();
        for ((sig, _), members) in &buckets {
            let mut uf: Vec<usize> = (0..members.len()).collect();
            fn find(uf: &mut [usize], mut x: usize) -> usize {
                while uf[x] != x {
                    uf[x] = uf[uf[x]];
                    x = uf[x];
                }
                x
            }
            for a in 0..members.len() {
                for b in a + 1..members.len() {
                    let (ca, cb) = (candidates[members[a]], candidates[members[b]]);
                    if self.similar_buses(&graph, ca, cb, &refs, sig) {
                        let (ra, rb) = (find(&mut uf, a), find(&mut uf, b));
                        if ra != rb {
                            uf[ra.max(rb)] = ra.min(rb);
                        }
                    }
                }
            }
            let mut comps: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (a, &m) in members.iter().enumerate() {
                let root = find(&mut uf, a);
                comps.entry(root).or_default().push(m);
            }
            for (_, comp) in comps {
                merges.push((comp[0], comp[1..].to_vec()));
            }
        }
        merges.sort();
        for (head, rest) in merges {
            for k in rest {
                self.absorb(candidates[head], candidates[k])?;
            }
            survivors.push(candidates[head]);
        }
        Ok(survivors)
    }

    fn merge_into_reference(&mut self, c: ClusterId, r: ClusterId) -> Result<(), ClusteringError> {
        self.flatten(c)?;
        if self.h.get(r).children.is_empty() {
            return self.absorb(r, c);
        }
        let old_parent = self.h.get(c).parent;
        self.h.detach(c);
        self.h.attach(r, c);
        if let Some(p) = old_parent {
            self.refresh_up(p)?;
        }
        self.refresh_up(r)
    }

    // -----------------------------------------------------------------------
    // Levels and post-processing
    // -----------------------------------------------------------------------

    fn autocluster(&mut self, c: ClusterId, level: usize) -> Result<(), ClusteringError> {
        if level > self.params.num_level {
            return self.flatten(c);
        }
        let thr = self.thresholds(level);
        self.single_level(c, &thr)?;
        let kids: Vec<ClusterId> = self
            .h
            .children(c)
            .iter()
            .copied()
            .filter(|&k| !self.h.get(k).is_io())
            .collect();
        for k in kids {
            if self.h.get(k).alive && self.h.get(k).parent == Some(c) {
                self.autocluster(k, level + 1)?;
            }
        }
        Ok(())
    }

    /// Split every mixed leaf into a standard-cell child and a macro child.
    /// Returns `(mixed leaf, std half)` pairs.
    fn split_mixed_leaves(&mut self) -> Result<Vec<(ClusterId, ClusterId)>, ClusteringError> {
        let mut pairs = Vec::new();
        for leaf in self.h.leaves() {
            if self.h.get(leaf).kind != ClusterKind::Mixed {
                continue;
            }
            let insts = std::mem::take(&mut self.h.get_mut(leaf).instances);
            let (macros, std): (Vec<InstId>, Vec<InstId>) =
                insts.into_iter().partition(|&i| self.db.is_macro(i));
            let home = self.logical_home(leaf);
            let name = self.h.get(leaf).name.clone();
            let s = self.new_child(leaf, format!("{name}/std"), std, home)?;
            self.new_child(leaf, format!("{name}/macro"), macros, home)?;
            self.refresh_node(leaf)?;
            pairs.push((leaf, s));
        }
        Ok(pairs)
    }

    /// Regroup the macros of every macro leaf by signature, then by
    /// footprint. Groups become children of the leaf, or its siblings when
    /// the leaf already sits below the last level.
    fn regroup_macros(&mut self) -> Result<(), ClusteringError> {
        for x in self.h.leaves() {
            let cl = self.h.get(x);
            if cl.kind != ClusterKind::Macro || cl.instances.len() < 2 {
                continue;
            }
            let home = self.logical_home(x);
            let base = cl.name.clone();
            let insts = std::mem::take(&mut self.h.get_mut(x).instances);
            let mut singles = Vec::with_capacity(insts.len());
            for &i in &insts {
                let name = format!("{base}/{}", self.db.instances[i.index()].name);
                singles.push(self.new_child(x, name, vec![i], home)?);
            }
            let refs = reference_clusters(self.h, &singles);
            let graph = self.reference_graph(&singles, &refs);
            let mut groups: Vec<((ConnectionSignature, u64, u64), Vec<ClusterId>)> = Vec::new();
            for (&c, &i) in singles.iter().zip(&insts) {
                let sig = connection_signature(c, &refs, &graph, self.params.epsilon_net);
                let m = self.db.master_of(i)?;
                let key = (sig, m.width.to_bits(), m.height.to_bits());
                match groups.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, g)) => g.push(c),
                    None => groups.push((key, vec![c])),
                }
            }
            if groups.len() == 1 {
                for &c in &singles {
                    self.kill(c);
                }
                self.give(x, insts);
                self.refresh_node(x)?;
                continue;
            }
            let below_last = self.h.depth(x) > self.params.num_level;
            let host = if below_last { self.h.get(x).parent.unwrap_or(x) } else { x };
            for (k, (_, members)) in groups.into_iter().enumerate() {
                let head = members[0];
                for &m in &members[1..] {
                    let mi = std::mem::take(&mut self.h.get_mut(m).instances);
                    self.give(head, mi);
                    self.kill(m);
                }
                self.h.get_mut(head).name = format!("{base}/g{k}");
                if host != x {
                    self.h.detach(head);
                    self.h.attach(host, head);
                }
                self.refresh_node(head)?;
            }
            if host != x {
                self.kill(x);
            }
            self.refresh_up(host)?;
        }
        Ok(())
    }

    /// Real leaf-to-leaf connections.
    fn leaf_graph(&self) -> ClusterGraph {
        let mut graph = ClusterGraph::default();
        let owner = |p: &PinRef| match p {
            PinRef::Inst(i) => self.owner[i.index()],
            PinRef::Io(p) => self.io_owner[p.index()],
        };
        let mut sinks = Vec::new();
        for net in &self.db.nets {
            let Some(d) = owner(&net.driver) else { continue };
            sinks.clear();
            sinks.extend(net.sinks.iter().filter_map(owner));
            sinks.sort_unstable();
            sinks.dedup();
            for &s in &sinks {
                graph.add_real(d, s, f64::from(net.bitwidth));
            }
        }
        graph
    }
}

// ---------------------------------------------------------------------------
// Public entry points
// ---------------------------------------------------------------------------

/// One physical cluster per non-empty logical module, plus the IO bundles
/// as children of the root. Preplaced macros stay out of the tree.
pub fn logical_to_physical(
    db: &DesignDatabase,
    params: &ClusterParams,
) -> Result<PhysicalHierarchy, ClusteringError> {
    let mut h = PhysicalHierarchy::new(params.num_level, params.level_ratio);
    let movable = |i: &InstId| !db.is_preplaced(*i);
    let root = h.root;
    {
        let top = &db.modules[db.root_module.index()];
        let r = h.get_mut(root);
        r.name = top.name.clone();
        r.module = Some(db.root_module);
        r.instances = top.instances.iter().copied().filter(movable).collect();
    }
    let mut stack: Vec<(ModuleId, ClusterId)> = vec![(db.root_module, root)];
    while let Some((m, c)) = stack.pop() {
        let mut created = Vec::new();
        for &child in &db.modules[m.index()].children {
            if !db.module_subtree_instances(child).iter().any(movable) {
                continue;
            }
            let lm = &db.modules[child.index()];
            let id = h.add_cluster(lm.name.clone());
            h.attach(c, id);
            let cl = h.get_mut(id);
            cl.module = Some(child);
            cl.logical_parent = Some(m);
            cl.instances = lm.instances.iter().copied().filter(movable).collect();
            created.push((child, id));
        }
        stack.extend(created.into_iter().rev());
    }
    for b in create_bundled_pins(&db.canvas, params.num_segment) {
        let id = h.add_cluster(format!("io{}_{}", b.edge, b.segment));
        h.attach(root, id);
        let cl = h.get_mut(id);
        cl.kind = ClusterKind::IoBundle;
        cl.bundle = Some(b);
    }
    h.refresh_stats(db)?;
    Ok(h)
}

/// Merge `candidates` (siblings or cousins below the level minimums) by
/// connection signature. Returns the candidates that survive as clusters.
pub fn merge_by_signature(
    db: &DesignDatabase,
    h: &mut PhysicalHierarchy,
    candidates: &[ClusterId],
    params: &ClusterParams,
) -> Result<Vec<ClusterId>, ClusteringError> {
    Clusterer::new(db, h, params).merge_candidates(candidates)
}

/// Refine the children of `parent` against `thresholds`: dissolve or split
/// oversized children, merge undersized ones.
pub fn single_level_autocluster(
    db: &DesignDatabase,
    h: &mut PhysicalHierarchy,
    parent: ClusterId,
    thresholds: &SizeThresholds,
    params: &ClusterParams,
) -> Result<(), ClusteringError> {
    h.refresh_stats(db)?;
    Clusterer::new(db, h, params).single_level(parent, thresholds)
}

/// Logical mapping, IO bundling and the per-level refinement: the cluster
/// tree before leaves are split by content.
pub fn build_levels(db: &DesignDatabase, params: &ClusterParams) -> Result<PhysicalHierarchy, ClusteringError> {
    params.validate()?;
    let mut h = logical_to_physical(db, params)?;
    {
        let mut cl = Clusterer::new(db, &mut h, params);
        let root = cl.h.root;
        cl.autocluster(root, 1)?;
    }
    h.refresh_stats(db)?;
    h.assign_labels();
    Ok(h)
}

/// Full autoclustering: the cluster tree plus the leaf-level cluster graph
/// carrying real, co-location and dataflow edges.
pub fn multilevel_autocluster(
    db: &DesignDatabase,
    params: &ClusterParams,
) -> Result<(PhysicalHierarchy, ClusterGraph), ClusteringError> {
    params.validate()?;
    let mut h = logical_to_physical(db, params)?;
    let graph = {
        let mut cl = Clusterer::new(db, &mut h, params);
        let root = cl.h.root;
        cl.autocluster(root, 1)?;
        let pairs = cl.split_mixed_leaves()?;
        cl.regroup_macros()?;

        let mut graph = cl.leaf_graph();
        let w = params.split_edge_factor * params.epsilon_net;
        for (leaf, std_half) in pairs {
            for m in cl.h.preorder_from(leaf) {
                let c = cl.h.get(m);
                if c.is_leaf() && c.kind == ClusterKind::Macro {
                    graph.add_virtual(std_half, m, w);
                }
            }
        }
        let sg = build_sequential_graph(db);
        let sources = dataflow_sources(db, &sg);
        let hops = compute_hops(&sg, &sources, params.num_hop_thr);
        let vertex_cluster: Vec<Option<ClusterId>> = sg
            .vertices
            .iter()
            .map(|v| match v {
                SeqVertex::Inst(i) => cl.owner[i.index()],
                SeqVertex::Io(p) => cl.io_owner[p.index()],
            })
            .collect();
        add_virtual_edges(&mut graph, &hops, &vertex_cluster);
        graph
    };
    h.refresh_stats(db)?;
    for c in h.preorder() {
        let cl = h.get_mut(c);
        cl.is_tiny = cl.is_leaf()
            && cl.kind == ClusterKind::StdCell
            && cl.stats.num_std_cell < params.tiny_thr;
    }
    h.assign_labels();
    Ok((h, graph))
}

#[cfg(test)]
#[path = "../tests/common/fixtures.rs"]
mod fixtures;
