// SPDX-License-Identifier: Apache-2.0

//! Fiduccia-Mattheyses min-cut bipartitioning with gain buckets.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{DesignDatabase, InstId, NetId, PinRef};

const NIL: usize = usize::MAX;
const MAX_PASSES: usize = 10;
const NUM_STARTS: u64 = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("bipartitioning needs at least two vertices, got {0}")]
    TooFewVertices(usize),
    #[error("vertex {vertex} of weight {weight} exceeds the balance bound {bound}")]
    Infeasible { vertex: usize, weight: f64, bound: f64 },
    #[error("balance {0} outside (0.5, 1.0)")]
    BadBalance(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartitionProblem {
    pub weights: Vec<f64>,
    pub hyperedges: Vec<Vec<usize>>,
    /// Maximum part weight as a fraction of the total.
    pub balance: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bipartition {
    pub part0: Vec<usize>,
    pub part1: Vec<usize>,
    pub cutsize: usize,
}

/// Number of hyperedges with pins on both sides.
pub fn cutsize(hyperedges: &[Vec<usize>], side: &[u8]) -> usize {
    hyperedges
        .iter()
        .filter(|e| {
            let mut seen = [false; 2];
            for &v in e.iter() {
                seen[side[v] as usize] = true;
            }
            seen[0] && seen[1]
        })
        .count()
}

struct Buckets {
    offset: i64,
    head: [Vec<usize>; 2],
    next: Vec<usize>,
    prev: Vec<usize>,
    max: [i64; 2],
}

impl Buckets {
    fn new(n: usize, max_gain: i64) -> Self {
        let size = (2 * max_gain + 1) as usize;
        Buckets {
            offset: max_gain,
            head: [vec![NIL; size], vec![NIL; size]],
            next: vec![NIL; n],
            prev: vec![NIL; n],
            max: [-max_gain - 1; 2],
        }
    }

    fn insert(&mut self, s: usize, v: usize, gain: i64) {
        let b = (gain + self.offset) as usize;
        let h = self.head[s][b];
        self.next[v] = h;
        self.prev[v] = NIL;
        if h != NIL {
            self.prev[h] = v;
        }
        self.head[s][b] = v;
        if gain > self.max[s] {
            self.max[s] = gain;
        }
    }

    fn remove(&mut self, s: usize, v: usize, gain: i64) {
        let b = (gain + self.offset) as usize;
        let (p, n) = (self.prev[v], self.next[v]);
        if p != NIL {
            self.next[p] = n;
        } else {
            self.head[s][b] = n;
        }
        if n != NIL {
            self.prev[n] = p;
        }
        self.next[v] = NIL;
        self.prev[v] = NIL;
    }

    /// Highest-gain vertex on side `s` passing `ok`.
    fn best(&mut self, s: usize, ok: impl Fn(usize) -> bool) -> Option<(usize, i64)> {
        while self.max[s] >= -self.offset && self.head[s][(self.max[s] + self.offset) as usize] == NIL {
            self.max[s] -= 1;
        }
        let mut g = self.max[s];
        while g >= -self.offset {
            let mut v = self.head[s][(g + self.offset) as usize];
            while v != NIL {
                if ok(v) {
                    return Some((v, g));
                }
                v = self.next[v];
            }
            g -= 1;
        }
        None
    }
}

struct PassOutcome {
    /// Cut reduction of the kept prefix; only the tests read it.
    #[cfg_attr(not(test), allow(dead_code))]
    gain: i64,
    improved: bool,
}

struct Fm<'a> {
    p: &'a PartitionProblem,
    incident: Vec<Vec<usize>>,
    bound: f64,
}

impl<'a> Fm<'a> {
    fn gains(&self, side: &[u8], count: &[[u32; 2]]) -> Vec<i64> {
        (0..side.len())
            .map(|v| {
                let f = side[v] as usize;
                self.incident[v]
                    .iter()
                    .map(|&e| {
                        let mut g = 0;
                        if count[e][f] == 1 {
                            g += 1;
                        }
                        if count[e][1 - f] == 0 {
                            g -= 1;
                        }
                        g
                    })
                    .sum()
            })
            .collect()
    }

    fn counts(&self, side: &[u8]) -> Vec<[u32; 2]> {
        self.p
            .hyperedges
            .iter()
            .map(|e| {
                let mut c = [0u32; 2];
                for &v in e {
                    c[side[v] as usize] += 1;
                }
                c
            })
            .collect()
    }

    /// One FM pass, rolled back to its best prefix. Reaching the balance
    /// bound outranks any cut gain.
    fn pass(&self, side: &mut [u8], part_w: &mut [f64; 2]) -> PassOutcome {
        let n = side.len();
        let mut count = self.counts(side);
        let mut gain = self.gains(side, &count);
        let max_deg = self.incident.iter().map(Vec::len).max().unwrap_or(0) as i64;
        let mut buckets = Buckets::new(n, max_deg.max(1));
        for v in 0..n {
            buckets.insert(side[v] as usize, v, gain[v]);
        }
        let mut locked = vec![false; n];
        let mut moves: Vec<usize> = Vec::with_capacity(n);
        let feasible = |pw: &[f64; 2]| pw[0] <= self.bound && pw[1] <= self.bound;
        let (mut cum, mut best_cum, mut best_len) = (0i64, 0i64, 0usize);
        let mut best_imbalance = (part_w[0] - part_w[1]).abs();
        let mut best_feasible = feasible(part_w);
        let start_feasible = best_feasible;

        loop {
            let w = &self.p.weights;
            let bound = self.bound;
            let pw = *part_w;
            // A move must respect the bound, or at least shrink an overweight side.
            let legal = |from: usize, v: usize| {
                let to = 1 - from;
                pw[to] + w[v] <= bound || (pw[from] > bound && pw[to] + w[v] < pw[from])
            };
            let c0 = buckets.best(0, |v| legal(0, v));
            let c1 = buckets.best(1, |v| legal(1, v));
            let (v, g) = match (c0, c1) {
                (None, None) => break,
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (Some(a), Some(b)) => {
                    if a.1 > b.1 || (a.1 == b.1 && pw[0] >= pw[1]) {
                        a
                    } else {
                        b
                    }
                }
            };
            let f = side[v] as usize;
            let t = 1 - f;
            buckets.remove(f, v, g);
            locked[v] = true;

            for &e in &self.incident[v] {
                let pins = &self.p.hyperedges[e];
                if count[e][t] == 0 {
                    for &u in pins {
                        if !locked[u] {
                            buckets.remove(side[u] as usize, u, gain[u]);
                            gain[u] += 1;
                            buckets.insert(side[u] as usize, u, gain[u]);
                        }
                    }
                } else if count[e][t] == 1 {
                    for &u in pins {
                        if !locked[u] && side[u] as usize == t {
                            buckets.remove(t, u, gain[u]);
                            gain[u] -= 1;
                            buckets.insert(t, u, gain[u]);
                        }
                    }
                }
                count[e][f] -= 1;
                count[e][t] += 1;
                if count[e][f] == 0 {
                    for &u in pins {
                        if !locked[u] && u != v {
                            buckets.remove(side[u] as usize, u, gain[u]);
                            gain[u] -= 1;
                            buckets.insert(side[u] as usize, u, gain[u]);
                        }
                    }
                } else if count[e][f] == 1 {
                    for &u in pins {
                        if !locked[u] && u != v && side[u] as usize == f {
                            buckets.remove(f, u, gain[u]);
                            gain[u] += 1;
                            buckets.insert(f, u, gain[u]);
                        }
                    }
                }
            }

            side[v] = t as u8;
            part_w[f] -= w[v];
            part_w[t] += w[v];
            cum += g;
            moves.push(v);
            let imbalance = (part_w[0] - part_w[1]).abs();
            let ok = feasible(part_w);
            let better = match (ok, best_feasible) {
                (true, false) => true,
                (false, true) => false,
                _ => cum > best_cum || (cum == best_cum && imbalance < best_imbalance - 1e-12),
            };
            if better {
                best_cum = cum;
                best_len = moves.len();
                best_imbalance = imbalance;
                best_feasible = ok;
            }
        }

        for &v in moves[best_len..].iter().rev() {
            let f = side[v] as usize;
            side[v] = (1 - f) as u8;
            part_w[f] -= self.p.weights[v];
            part_w[1 - f] += self.p.weights[v];
        }
        PassOutcome {
            gain: best_cum,
            improved: best_cum > 0 || (best_feasible && !start_feasible),
        }
    }

    fn run(&self, seed: u64) -> (Vec<u8>, bool, usize) {
        let n = self.p.weights.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order.sort_by(|&a, &b| self.p.weights[b].total_cmp(&self.p.weights[a]));
        let mut side = vec![0u8; n];
        let mut part_w = [0.0f64; 2];
        for v in order {
            let s = if part_w[0] <= part_w[1] { 0 } else { 1 };
            side[v] = s as u8;
            part_w[s] += self.p.weights[v];
        }
        for _ in 0..MAX_PASSES {
            if !self.pass(&mut side, &mut part_w).improved {
                break;
            }
        }
        let cut = cutsize(&self.p.hyperedges, &side);
        let ok = part_w[0] <= self.bound && part_w[1] <= self.bound;
        (side, ok, cut)
    }
}

/// Min-cut bipartition with area balance. Deterministic for a given seed.
pub fn fm_bipartition(p: &PartitionProblem) -> Result<Bipartition, PartitionError> {
    let n = p.weights.len();
    if n < 2 {
        return Err(PartitionError::TooFewVertices(n));
    }
    if !(p.balance > 0.5 && p.balance < 1.0) {
        return Err(PartitionError::BadBalance(p.balance));
    }
    let total: f64 = p.weights.iter().sum();
    let bound = p.balance * total;
    if let Some((v, &w)) = p
        .weights
        .iter()
        .enumerate()
        .find(|(_, &w)| w > bound)
    {
        return Err(PartitionError::Infeasible {
            vertex: v,
            weight: w,
            bound,
        });
    }
    let mut incident = vec![Vec::new(); n];
    for (e, pins) in p.hyperedges.iter().enumerate() {
        for &v in pins {
            incident[v].push(e);
        }
    }
    let fm = Fm {
        p,
        incident,
        bound,
    };
    let (side, _, cut) = (0..NUM_STARTS)
        .map(|k| fm.run(p.seed.wrapping_mul(NUM_STARTS).wrapping_add(k)))
        .min_by_key(|(_, ok, cut)| (!*ok, *cut))
        .unwrap();
    let part0 = (0..n).filter(|&v| side[v] == 0).collect();
    let part1 = (0..n).filter(|&v| side[v] == 1).collect();
    Ok(Bipartition {
        part0,
        part1,
        cutsize: cut,
    })
}

/// Nets touching each instance, for restricting hyperedges to a subset.
pub fn instance_nets(db: &DesignDatabase) -> Vec<Vec<NetId>> {
    let mut out = vec![Vec::new(); db.instances.len()];
    for (k, net) in db.nets.iter().enumerate() {
        for p in std::iter::once(&net.driver).chain(net.sinks.iter()) {
            if let PinRef::Inst(i) = p {
                let list = &mut out[i.index()];
                if list.last() != Some(&NetId(k)) {
                    list.push(NetId(k));
                }
            }
        }
    }
    out
}

/// Build the partition problem for `instances`: vertices weighted by area
/// (macros by the mean standard-cell area), hyperedges are nets with at
/// least two pins inside the set.
pub fn problem_for(
    db: &DesignDatabase,
    inst_nets: &[Vec<NetId>],
    instances: &[InstId],
    balance: f64,
    seed: u64,
) -> PartitionProblem {
    let local: HashMap<InstId, usize> = instances.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let std_areas: Vec<f64> = instances
        .iter()
        .filter(|&&i| !db.is_macro(i))
        .map(|&i| db.masters[db.instances[i.index()].master.index()].area())
        .collect();
    let mean_std = if std_areas.is_empty() {
        1.0
    } else {
        std_areas.iter().sum::<f64>() / std_areas.len() as f64
    };
    let weights = instances
        .iter()
        .map(|&i| {
            if db.is_macro(i) {
                mean_std
            } else {
                db.masters[db.instances[i.index()].master.index()].area()
            }
        })
        .collect();
    let mut nets: Vec<NetId> = instances
        .iter()
        .flat_map(|i| inst_nets[i.index()].iter().copied())
        .collect();
    nets.sort_unstable();
    nets.dedup();
    let hyperedges = nets
        .into_iter()
        .filter_map(|n| {
            let net = &db.nets[n.index()];
            let mut pins: Vec<usize> = std::iter::once(&net.driver)
                .chain(net.sinks.iter())
                .filter_map(|p| match p {
                    PinRef::Inst(i) => local.get(i).copied(),
                    PinRef::Io(_) => None,
                })
                .collect();
            pins.sort_unstable();
            pins.dedup();
            (pins.len() >= 2).then_some(pins)
        })
        .collect();
    PartitionProblem {
        weights,
        hyperedges,
        balance,
        seed,
    }
}

/// Split `instances` until every part holds fewer than `max_num_inst`
/// standard cells. Macros ride along but do not count.
pub fn recursive_bipartition(
    db: &DesignDatabase,
    inst_nets: &[Vec<NetId>],
    instances: &[InstId],
    max_num_inst: usize,
    balance: f64,
    seed: u64,
) -> Result<Vec<Vec<InstId>>, PartitionError> {
    let num_std = instances.iter().filter(|&&i| !db.is_macro(i)).count();
    if num_std < max_num_inst || instances.len() <= 1 {
        return Ok(vec![instances.to_vec()]);
    }
    let problem = problem_for(db, inst_nets, instances, balance, seed);
    let bp = fm_bipartition(&problem)?;
    let a: Vec<InstId> = bp.part0.iter().map(|&k| instances[k]).collect();
    let b: Vec<InstId> = bp.part1.iter().map(|&k| instances[k]).collect();
    let mut out = recursive_bipartition(db, inst_nets, &a, max_num_inst, balance, seed.wrapping_mul(2).wrapping_add(1))?;
    out.extend(recursive_bipartition(db, inst_nets, &b, max_num_inst, balance, seed.wrapping_mul(2).wrapping_add(2))?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Minimum cut over every balanced assignment.
    fn exhaustive(p: &PartitionProblem) -> usize {
        let n = p.weights.len();
        let total: f64 = p.weights.iter().sum();
        let bound = p.balance * total;
        let mut best = usize::MAX;
        for mask in 0u32..(1 << n) {
            let side: Vec<u8> = (0..n).map(|v| ((mask >> v) & 1) as u8).collect();
            let w1: f64 = (0..n).filter(|&v| side[v] == 1).map(|v| p.weights[v]).sum();
            if w1 > bound || total - w1 > bound {
                continue;
            }
            best = best.min(cutsize(&p.hyperedges, &side));
        }
        best
    }

    fn edges(pairs: &[(usize, usize)]) -> Vec<Vec<usize>> {
        pairs.iter().map(|&(a, b)| vec![a, b]).collect()
    }

    #[test]
    fn two_cliques_cut_one() {
        let mut pairs = Vec::new();
        for base in [0, 4] {
            for a in 0..4 {
                for b in a + 1..4 {
                    pairs.push((base + a, base + b));
                }
            }
        }
        pairs.push((3, 4));
        let p = PartitionProblem {
            weights: vec![1.0; 8],
            hyperedges: edges(&pairs),
            balance: 0.55,
            seed: 1,
        };
        let r = fm_bipartition(&p).unwrap();
        assert_eq!(r.cutsize, 1);
        assert_eq!(exhaustive(&p), 1);
    }

    #[test]
    fn disconnected_pair() {
        let p = PartitionProblem {
            weights: vec![1.0, 1.0],
            hyperedges: vec![],
            balance: 0.55,
            seed: 0,
        };
        let r = fm_bipartition(&p).unwrap();
        assert_eq!(r.cutsize, 0);
        assert_eq!((r.part0.len(), r.part1.len()), (1, 1));
    }

    #[test]
    fn triangle() {
        let p = PartitionProblem {
            weights: vec![1.0; 3],
            hyperedges: edges(&[(0, 1), (1, 2), (0, 2)]),
            balance: 0.67,
            seed: 0,
        };
        assert_eq!(fm_bipartition(&p).unwrap().cutsize, 2);
        assert_eq!(exhaustive(&p), 2);
    }

    #[test]
    fn heavy_vertex_is_infeasible() {
        let p = PartitionProblem {
            weights: vec![10.0, 1.0, 1.0],
            hyperedges: vec![],
            balance: 0.55,
            seed: 0,
        };
        assert!(matches!(fm_bipartition(&p), Err(PartitionError::Infeasible { vertex: 0, .. })));
    }

    fn random_problem(rng: &mut ChaCha8Rng, n: usize) -> PartitionProblem {
        let m = rng.gen_range(n..3 * n);
        let hyperedges = (0..m)
            .map(|_| {
                let k = rng.gen_range(2..=4.min(n));
                let mut e: Vec<usize> = (0..n).collect();
                e.shuffle(rng);
                e.truncate(k);
                e.sort_unstable();
                e
            })
            .collect();
        PartitionProblem {
            weights: (0..n).map(|_| rng.gen_range(1..4) as f64).collect(),
            hyperedges,
            balance: 0.55,
            seed: rng.gen(),
        }
    }

    #[test]
    fn balanced_exhaustive_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..40 {
            let n = rng.gen_range(4..=12);
            let p = random_problem(&mut rng, n);
            let r = fm_bipartition(&p).unwrap();
            let total: f64 = p.weights.iter().sum();
            let optimum = exhaustive(&p);
            if optimum == usize::MAX {
                // No balanced split exists for these weights.
                continue;
            }
            for part in [&r.part0, &r.part1] {
                let w: f64 = part.iter().map(|&v| p.weights[v]).sum();
                assert!(w <= p.balance * total + 1e-9);
            }
            assert_eq!(r.part0.len() + r.part1.len(), n);
            let mut side = vec![0u8; n];
            for &v in &r.part1 {
                side[v] = 1;
            }
            assert_eq!(cutsize(&p.hyperedges, &side), r.cutsize);
            assert!(r.cutsize >= optimum);
            assert_eq!(fm_bipartition(&p).unwrap(), r);
        }
    }

    #[test]
    fn beats_random_balanced_partitions() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let p = random_problem(&mut rng, 40);
            let r = fm_bipartition(&p).unwrap();
            let total: f64 = p.weights.iter().sum();
            let mut tried = 0;
            while tried < 100 {
                let side: Vec<u8> = (0..40).map(|_| rng.gen_range(0..2)).collect();
                let w1: f64 = (0..40).filter(|&v| side[v] == 1).map(|v| p.weights[v]).sum();
                if w1 > p.balance * total || total - w1 > p.balance * total {
                    continue;
                }
                tried += 1;
                assert!(r.cutsize <= cutsize(&p.hyperedges, &side));
            }
        }
    }

    #[test]
    fn pass_never_worsens_cut() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let p = random_problem(&mut rng, 30);
            let mut incident = vec![Vec::new(); 30];
            for (e, pins) in p.hyperedges.iter().enumerate() {
                for &v in pins {
                    incident[v].push(e);
                }
            }
            let total: f64 = p.weights.iter().sum();
            let fm = Fm {
                p: &p,
                incident,
                bound: p.balance * total,
            };
            let mut side: Vec<u8> = (0..30).map(|v| (v % 2) as u8).collect();
            let mut pw = [0.0; 2];
            for v in 0..30 {
                pw[side[v] as usize] += p.weights[v];
            }
            let mut cut = cutsize(&p.hyperedges, &side);
            for _ in 0..MAX_PASSES {
                let was_feasible = pw[0] <= fm.bound && pw[1] <= fm.bound;
                let out = fm.pass(&mut side, &mut pw);
                let new_cut = cutsize(&p.hyperedges, &side);
                assert_eq!(cut as i64 - new_cut as i64, out.gain);
                if was_feasible {
                    assert!(new_cut <= cut);
                }
                cut = new_cut;
            }
        }
    }
}
