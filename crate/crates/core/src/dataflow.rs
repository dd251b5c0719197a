// SPDX-License-Identifier: Apache-2.0

//! Sequential graph extraction and hop-based virtual connection weights.

use std::collections::{HashMap, HashSet, VecDeque};

use rayon::prelude::*;

use crate::model::{ClusterGraph, ClusterId, DesignDatabase, InstId, IoPinId, PinRef};

/// A registered vertex: flip-flop, macro or IO pin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SeqVertex {
    Inst(InstId),
    Io(IoPinId),
}

/// Directed graph over registered vertices. An arc `u -> v` means a purely
/// combinational path leads from `u` to `v`; its weight is the widest net
/// arriving at `v` along such a path.
#[derive(Clone, Debug, Default)]
pub struct SequentialGraph {
    pub vertices: Vec<SeqVertex>,
    pub succ: Vec<Vec<(usize, u32)>>,
    pub pred: Vec<Vec<(usize, u32)>>,
    pub index: HashMap<SeqVertex, usize>,
}

impl SequentialGraph {
    /// Build from an explicit arc list (parallel arcs keep the widest one).
    pub fn from_arcs(vertices: Vec<SeqVertex>, arcs: &[(usize, usize, u32)]) -> Self {
        let n = vertices.len();
        let mut g = SequentialGraph {
            index: vertices.iter().enumerate().map(|(k, &v)| (v, k)).collect(),
            vertices,
            succ: vec![Vec::new(); n],
            pred: vec![Vec::new(); n],
        };
        let mut best: HashMap<(usize, usize), u32> = HashMap::new();
        for &(u, v, w) in arcs {
            if u != v {
                let e = best.entry((u, v)).or_insert(0);
                *e = (*e).max(w);
            }
        }
        let mut list: Vec<_> = best.into_iter().collect();
        list.sort_unstable();
        for ((u, v), w) in list {
            g.succ[u].push((v, w));
            g.pred[v].push((u, w));
        }
        g
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    pub fn has_arc(&self, u: usize, v: usize) -> bool {
        self.succ[u].iter().any(|&(x, _)| x == v)
    }

    pub fn vertex_id(&self, v: SeqVertex) -> Option<usize> {
        self.index.get(&v).copied()
    }
}

fn is_registered(db: &DesignDatabase, p: PinRef) -> bool {
    match p {
        PinRef::Io(_) => true,
        PinRef::Inst(i) => db.is_macro(i) || db.is_register(i),
    }
}

fn as_vertex(p: PinRef) -> SeqVertex {
    match p {
        PinRef::Inst(i) => SeqVertex::Inst(i),
        PinRef::Io(io) => SeqVertex::Io(io),
    }
}

/// Collapse combinational logic: one arc per (register, register) pair
/// joined by a path through combinational instances only.
pub fn build_sequential_graph(db: &DesignDatabase) -> SequentialGraph {
    let mut vertices: Vec<SeqVertex> = (0..db.canvas.io_pins.len())
        .map(|k| SeqVertex::Io(IoPinId(k)))
        .collect();
    vertices.extend(
        (0..db.instances.len())
            .map(InstId)
            .filter(|&i| is_registered(db, PinRef::Inst(i)))
            .map(SeqVertex::Inst),
    );
    let index: HashMap<SeqVertex, usize> =
        vertices.iter().enumerate().map(|(k, &v)| (v, k)).collect();

    // Fan-out per driver pin.
    let mut fanout: HashMap<PinRef, Vec<(PinRef, u32)>> = HashMap::new();
    for a in &db.arcs {
        fanout.entry(a.from).or_default().push((a.to, a.bitwidth));
    }

    let arcs: Vec<(usize, usize, u32)> = vertices
        .par_iter()
        .enumerate()
        .flat_map_iter(|(u, &v)| {
            let start = match v {
                SeqVertex::Inst(i) => PinRef::Inst(i),
                SeqVertex::Io(io) => PinRef::Io(io),
            };
            let mut found: Vec<(usize, usize, u32)> = Vec::new();
            let mut visited: HashSet<PinRef> = HashSet::new();
            let mut stack = vec![start];
            while let Some(x) = stack.pop() {
                let Some(outs) = fanout.get(&x) else { continue };
                for &(y, w) in outs {
                    if is_registered(db, y) {
                        found.push((u, index[&as_vertex(y)], w));
                    } else if visited.insert(y) {
                        stack.push(y);
                    }
                }
            }
            found
        })
        .collect();
    SequentialGraph::from_arcs(vertices, &arcs)
}

/// Shortest register-stage distance and the bitwidth carried along
/// shortest-hop arcs into the target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HopEntry {
    pub source: usize,
    pub target: usize,
    pub hops: u32,
    pub flow: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct HopTable {
    pub num_hop_thr: u32,
    /// Entries grouped by source, targets in ascending vertex order.
    pub entries: Vec<HopEntry>,
}

impl HopTable {
    pub fn get(&self, source: usize, target: usize) -> Option<&HopEntry> {
        self.entries
            .iter()
            .find(|e| e.source == source && e.target == target)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Bounded breadth-first search from every source. Only targets within
/// `num_hop_thr` stages are stored.
pub fn compute_hops(g: &SequentialGraph, sources: &[usize], num_hop_thr: u32) -> HopTable {
    let n = g.num_vertices();
    let per_source: Vec<Vec<HopEntry>> = sources
        .par_iter()
        .map(|&s| {
            let mut out = Vec::new();
            if num_hop_thr == 0 {
                return out;
            }
            let mut dist = vec![u32::MAX; n];
            let mut order = Vec::new();
            let mut queue = VecDeque::new();
            dist[s] = 0;
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                if dist[u] >= num_hop_thr {
                    continue;
                }
                for &(v, _) in &g.succ[u] {
                    if dist[v] == u32::MAX {
                        dist[v] = dist[u] + 1;
                        order.push(v);
                        queue.push_back(v);
                    }
                }
            }
            order.sort_unstable();
            for t in order {
                let flow: f64 = g.pred[t]
                    .iter()
                    .filter(|&&(u, _)| dist[u] != u32::MAX && dist[u] + 1 == dist[t])
                    .map(|&(_, w)| w as f64)
                    .sum();
                out.push(HopEntry {
                    source: s,
                    target: t,
                    hops: dist[t],
                    flow,
                });
            }
            out
        })
        .collect();
    HopTable {
        num_hop_thr,
        entries: per_source.into_iter().flatten().collect(),
    }
}

/// `flow / 2^hops`, or 0 past the hop threshold.
pub fn virtual_weight(information_flow: f64, num_hops: u32, num_hop_thr: u32) -> f64 {
    if num_hops > num_hop_thr {
        return 0.0;
    }
    information_flow / 2f64.powi(num_hops as i32)
}

/// Sources for virtual connections: every macro and IO pin vertex.
pub fn dataflow_sources(db: &DesignDatabase, g: &SequentialGraph) -> Vec<usize> {
    g.vertices
        .iter()
        .enumerate()
        .filter(|(_, v)| match v {
            SeqVertex::Io(_) => true,
            SeqVertex::Inst(i) => db.is_macro(*i),
        })
        .map(|(k, _)| k)
        .collect()
}

/// Add hop-decayed virtual weights between the clusters holding each hop
/// entry's endpoints. `vertex_cluster` maps graph vertices to clusters.
pub fn add_virtual_edges(
    graph: &mut ClusterGraph,
    hops: &HopTable,
    vertex_cluster: &[Option<ClusterId>],
) {
    for e in &hops.entries {
        let (Some(a), Some(b)) = (vertex_cluster[e.source], vertex_cluster[e.target]) else {
            continue;
        };
        if a == b {
            continue;
        }
        graph.add_virtual(a, b, virtual_weight(e.flow, e.hops, hops.num_hop_thr));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::parse_design_str;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LIB: &str = "MACRO RAM 10 10\nSTDCELL INV 1\nSTDCELL DFF 2 FF\n";

    fn graph_of(netlist: &str, floorplan: &str) -> (DesignDatabase, SequentialGraph) {
        let db = parse_design_str(netlist, LIB, floorplan).unwrap();
        let g = build_sequential_graph(&db);
        (db, g)
    }

    fn vid(db: &DesignDatabase, g: &SequentialGraph, name: &str) -> usize {
        if let Some(&i) = db.inst_by_name.get(name) {
            return g.vertex_id(SeqVertex::Inst(i)).unwrap();
        }
        let k = db.canvas.io_pins.iter().position(|p| p.name == name).unwrap();
        g.vertex_id(SeqVertex::Io(IoPinId(k))).unwrap()
    }

    #[test]
    fn comb_stage_between_flops() {
        let (db, g) = graph_of(
            "MODULE top PARENT -\nINST f1 DFF top\nINST c INV top\nINST f2 DFF top\n\
             NET a f1.q c.a\nNET b c.y f2.d\n",
            "CANVAS 100 100\n",
        );
        assert!(g.has_arc(vid(&db, &g, "f1"), vid(&db, &g, "f2")));
        assert_eq!(g.num_arcs(), 1);
    }

    #[test]
    fn register_breaks_path() {
        let (db, g) = graph_of(
            "MODULE top PARENT -\nINST m1 RAM top\nINST f DFF top\nINST m2 RAM top\n\
             NET a m1.o f.d\nNET b f.q m2.i\n",
            "CANVAS 100 100\n",
        );
        let (m1, f, m2) = (vid(&db, &g, "m1"), vid(&db, &g, "f"), vid(&db, &g, "m2"));
        assert!(g.has_arc(m1, f));
        assert!(g.has_arc(f, m2));
        assert!(!g.has_arc(m1, m2));
        let t = compute_hops(&g, &[m1], 4);
        assert_eq!(t.get(m1, m2).unwrap().hops, 2);
    }

    #[test]
    fn io_through_comb_cloud() {
        let (db, g) = graph_of(
            "MODULE top PARENT -\nINST c1 INV top\nINST c2 INV top\n\
             NET a PIN pi c1.a\nNET b c1.y c2.a\nNET c c2.y PIN po\n",
            "CANVAS 100 100\nIOPIN pi 0 10\nIOPIN po 100 10\n",
        );
        assert!(g.has_arc(vid(&db, &g, "pi"), vid(&db, &g, "po")));
    }

    #[test]
    fn weight_examples() {
        assert_eq!(virtual_weight(8.0, 2, 4), 2.0);
        assert_eq!(virtual_weight(1.0, 1, 4), 0.5);
        assert_eq!(virtual_weight(16.0, 5, 4), 0.0);
    }

    #[test]
    fn long_chain_past_threshold_has_no_entry() {
        // s -> r1 -> r2 -> r3 -> r4 -> t : 5 hops.
        let v: Vec<SeqVertex> = (0..6).map(|k| SeqVertex::Inst(InstId(k))).collect();
        let arcs: Vec<(usize, usize, u32)> = (0..5).map(|k| (k, k + 1, 1)).collect();
        let g = SequentialGraph::from_arcs(v, &arcs);
        let t = compute_hops(&g, &[0], 4);
        assert!(t.get(0, 5).is_none());
        assert_eq!(t.get(0, 4).unwrap().hops, 4);
    }

    #[test]
    fn io_two_registers_macro() {
        let (db, g) = graph_of(
            "MODULE top PARENT -\nINST f1 DFF top\nINST f2 DFF top\nINST m RAM top\n\
             NET a WIDTH 8 PIN pi f1.d\nNET b WIDTH 8 f1.q f2.d\nNET c WIDTH 8 f2.q m.i\n",
            "CANVAS 100 100\nIOPIN pi 0 50\n",
        );
        let (pi, m) = (vid(&db, &g, "pi"), vid(&db, &g, "m"));
        let t = compute_hops(&g, &[pi], 4);
        let e = t.get(pi, m).unwrap();
        assert_eq!((e.hops, e.flow), (3, 8.0));
        let mut cg = ClusterGraph::default();
        let mut vc = vec![None; g.num_vertices()];
        vc[pi] = Some(ClusterId(1));
        vc[m] = Some(ClusterId(2));
        add_virtual_edges(&mut cg, &t, &vc);
        assert_eq!(cg.weight(ClusterId(1), ClusterId(2)), 1.0);
    }

    #[test]
    fn same_cluster_adds_nothing() {
        let v: Vec<SeqVertex> = (0..2).map(|k| SeqVertex::Inst(InstId(k))).collect();
        let g = SequentialGraph::from_arcs(v, &[(0, 1, 4)]);
        let t = compute_hops(&g, &[0], 4);
        let mut cg = ClusterGraph::default();
        add_virtual_edges(&mut cg, &t, &[Some(ClusterId(3)), Some(ClusterId(3))]);
        assert!(cg.is_empty());
        add_virtual_edges(&mut cg, &t, &[Some(ClusterId(3)), Some(ClusterId(4))]);
        assert_eq!(cg.weight(ClusterId(3), ClusterId(4)), 2.0);
    }

    /// Floyd-Warshall distances plus flow by definition.
    fn oracle(n: usize, arcs: &[(usize, usize, u32)], s: usize, thr: u32) -> Vec<(usize, u32, f64)> {
        const INF: u32 = u32::MAX / 4;
        let mut w = vec![vec![0u32; n]; n];
        let mut d = vec![vec![INF; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0;
        }
        for &(u, v, bw) in arcs {
            if u != v {
                d[u][v] = 1;
                w[u][v] = w[u][v].max(bw);
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        (0..n)
            .filter(|&t| t != s && d[s][t] <= thr && thr > 0)
            .map(|t| {
                let flow = (0..n)
                    .filter(|&u| w[u][t] > 0 && d[s][u] + 1 == d[s][t])
                    .map(|u| w[u][t] as f64)
                    .sum();
                (t, d[s][t], flow)
            })
            .collect()
    }

    #[test]
    fn matches_floyd_warshall_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let n = rng.gen_range(2..=20);
            let m = rng.gen_range(0..3 * n);
            let arcs: Vec<(usize, usize, u32)> = (0..m)
                .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(1..9)))
                .collect();
            let v: Vec<SeqVertex> = (0..n).map(|k| SeqVertex::Inst(InstId(k))).collect();
            let g = SequentialGraph::from_arcs(v, &arcs);
            for thr in [0, 1, 4] {
                let table = compute_hops(&g, &(0..n).collect::<Vec<_>>(), thr);
                for s in 0..n {
                    let got: Vec<(usize, u32, f64)> = table
                        .entries
                        .iter()
                        .filter(|e| e.source == s)
                        .map(|e| (e.target, e.hops, e.flow))
                        .collect();
                    assert_eq!(got, oracle(n, &arcs, s, thr));
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn weight_monotone_and_linear(flow in 0.0f64..1e6, h in 1u32..8, k in 0.0f64..10.0) {
                prop_assert!(virtual_weight(flow, h + 1, 10) <= virtual_weight(flow, h, 10));
                let a = virtual_weight(flow * k, h, 10);
                let b = k * virtual_weight(flow, h, 10);
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
        }
    }
}
