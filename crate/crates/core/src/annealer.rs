// SPDX-License-Identifier: Apache-2.0

//! Sequence-pair packing and a generic multi-start simulated annealer.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Probabilities of the four move classes: swap in the positive sequence,
/// swap in the negative sequence, swap in both, and the problem-specific
/// fourth move (resize or flip).
pub const DEFAULT_OP_PROBS: [f64; 4] = [0.3, 0.3, 0.3, 0.1];

/// Upper bound on the number of raw cost terms a problem may report.
pub const MAX_TERMS: usize = 8;

pub type Terms = [f64; MAX_TERMS];

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SequencePair {
    pub pos: Vec<usize>,
    pub neg: Vec<usize>,
}

impl SequencePair {
    pub fn identity(n: usize) -> Self {
        SequencePair {
            pos: (0..n).collect(),
            neg: (0..n).collect(),
        }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut pos: Vec<usize> = (0..n).collect();
        let mut neg: Vec<usize> = (0..n).collect();
        pos.shuffle(rng);
        neg.shuffle(rng);
        SequencePair { pos, neg }
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }

    pub fn is_valid(&self) -> bool {
        let n = self.pos.len();
        if self.neg.len() != n {
            return false;
        }
        let mut seen = vec![0u8; n];
        for &b in &self.pos {
            if b >= n {
                return false;
            }
            seen[b] |= 1;
        }
        for &b in &self.neg {
            if b >= n {
                return false;
            }
            seen[b] |= 2;
        }
        seen.iter().all(|&s| s == 3)
    }

    /// Swap two blocks in both sequences.
    pub fn swap_blocks(&mut self, a: usize, b: usize) {
        for seq in [&mut self.pos, &mut self.neg] {
            let ia = seq.iter().position(|&x| x == a).unwrap();
            let ib = seq.iter().position(|&x| x == b).unwrap();
            seq.swap(ia, ib);
        }
    }

    /// Apply one of the three sequence moves (`op` in 0..3) with random
    /// operands. Does nothing for fewer than two blocks.
    pub fn perturb<R: Rng + ?Sized>(&mut self, op: usize, rng: &mut R) {
        let n = self.len();
        if n < 2 {
            return;
        }
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        match op {
            0 => self.pos.swap(i, j),
            1 => self.neg.swap(i, j),
            _ => self.swap_blocks(i, j),
        }
    }
}

/// Block positions (lower-left corners) and tight bounding box of a packing.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Packing {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub width: f64,
    pub height: f64,
}

/// Reusable buffers for O(n log n) sequence-pair evaluation.
#[derive(Clone, Debug, Default)]
pub struct SpEvaluator {
    neg_index: Vec<usize>,
    tree: Vec<f64>,
}

impl SpEvaluator {
    fn tree_reset(&mut self, n: usize) {
        self.tree.clear();
        self.tree.resize(n + 1, 0.0);
    }

    /// Max over indices < `i`.
    fn prefix_max(&self, i: usize) -> f64 {
        let mut i = i;
        let mut best = 0.0f64;
        while i > 0 {
            best = best.max(self.tree[i]);
            i &= i - 1;
        }
        best
    }

    fn update(&mut self, i: usize, v: f64) {
        let mut i = i + 1;
        while i < self.tree.len() {
            if self.tree[i] < v {
                self.tree[i] = v;
            }
            i += i & i.wrapping_neg();
        }
    }

    /// Pack `sp` with per-block `(w, h)` into `out`.
    pub fn evaluate_into(&mut self, sp: &SequencePair, shapes: &[(f64, f64)], out: &mut Packing) {
        let n = sp.len();
        self.neg_index.clear();
        self.neg_index.resize(n, 0);
        for (k, &b) in sp.neg.iter().enumerate() {
            self.neg_index[b] = k;
        }
        out.x.clear();
        out.x.resize(n, 0.0);
        out.y.clear();
        out.y.resize(n, 0.0);

        self.tree_reset(n);
        let mut width = 0.0f64;
        for &b in &sp.pos {
            let j = self.neg_index[b];
            let x = self.prefix_max(j);
            out.x[b] = x;
            let right = x + shapes[b].0;
            width = width.max(right);
            self.update(j, right);
        }

        self.tree_reset(n);
        let mut height = 0.0f64;
        for &b in sp.pos.iter().rev() {
            let j = self.neg_index[b];
            let y = self.prefix_max(j);
            out.y[b] = y;
            let top = y + shapes[b].1;
            height = height.max(top);
            self.update(j, top);
        }
        out.width = width;
        out.height = height;
    }
}

/// Evaluate a sequence pair: `a` is left of `b` when `a` precedes `b` in both
/// sequences, `a` is below `b` when `a` follows `b` in the positive sequence
/// and precedes it in the negative one.
pub fn evaluate_sequence_pair(sp: &SequencePair, shapes: &[(f64, f64)]) -> Packing {
    let mut out = Packing::default();
    SpEvaluator::default().evaluate_into(sp, shapes, &mut out);
    out
}

/// Pick a move class according to `probs` (need not sum to one).
pub fn choose_op<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let mut r = rng.gen::<f64>() * total;
    for (k, &p) in probs.iter().enumerate() {
        if r < p {
            return k;
        }
        r -= p;
    }
    probs.len() - 1
}

// ---------------------------------------------------------------------------
// Annealing
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct SaSchedule {
    pub moves_per_iter: usize,
    pub num_iters: usize,
    pub init_accept_prob: f64,
    pub t_min: f64,
    pub calibration_samples: usize,
    pub num_workers: usize,
    pub seed: u64,
}

impl Default for SaSchedule {
    fn default() -> Self {
        SaSchedule {
            moves_per_iter: 500,
            num_iters: 200,
            init_accept_prob: 0.9,
            t_min: 1e-10,
            calibration_samples: 100,
            num_workers: 10,
            seed: 0,
        }
    }
}

impl SaSchedule {
    pub fn with_seed(&self, seed: u64) -> Self {
        SaSchedule {
            seed,
            ..self.clone()
        }
    }

    /// Geometric cooling factor taking `t_init` to `t_min` over the schedule.
    pub fn cooling_factor(&self, t_init: f64) -> f64 {
        if t_init <= self.t_min || self.num_iters < 2 {
            return 1.0;
        }
        (self.t_min / t_init).powf(1.0 / (self.num_iters - 1) as f64)
    }
}

/// An optimization problem the annealer can drive. The state is cloned to
/// snapshot it, so perturbations need not be reversible in place.
pub trait SaProblem: Sync {
    type State: Clone + Send + Sync;

    /// Number of raw cost terms reported by [`evaluate`](Self::evaluate).
    fn num_terms(&self) -> usize;

    /// Raw (unnormalized) cost terms and a feasibility flag.
    fn evaluate(&self, state: &Self::State) -> (Terms, bool);

    /// Combine normalized terms into a scalar cost.
    fn cost(&self, terms: &Terms, normalizers: &Terms) -> f64;

    /// Apply one random move.
    fn perturb<R: Rng>(&self, state: &mut Self::State, rng: &mut R);

    /// Scale used when a term averages zero over the calibration walk.
    fn fallback_normalizer(&self, _term: usize) -> f64 {
        1.0
    }

    /// Optional 2-D point to keep on a Pareto front of visited states.
    fn sample_point(&self, _terms: &Terms, _feasible: bool) -> Option<(f64, f64)> {
        None
    }
}

#[derive(Clone, Debug)]
pub struct Calibration {
    pub t_init: f64,
    pub normalizers: Terms,
}

#[derive(Clone, Debug)]
pub struct AnnealResult<S> {
    pub state: S,
    pub cost: f64,
    pub terms: Terms,
    pub feasible: bool,
    pub normalizers: Terms,
    /// Best cost after each iteration.
    pub history: Vec<f64>,
    /// Pareto front of [`SaProblem::sample_point`] values, sorted by x.
    pub pareto: Vec<(f64, f64)>,
    pub worker: usize,
}

/// Random-walk calibration: the normalizers are the mean raw terms over the
/// sampled states and `t_init` accepts the mean uphill step with the
/// schedule's initial probability.
pub fn calibrate<P: SaProblem>(
    problem: &P,
    initial: &P::State,
    schedule: &SaSchedule,
) -> Calibration {
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    rng.set_stream(1);
    let k = problem.num_terms();
    let samples = schedule.calibration_samples.max(1);
    let mut state = initial.clone();
    let mut walk = Vec::with_capacity(samples + 1);
    walk.push(problem.evaluate(&state).0);
    for _ in 0..samples {
        problem.perturb(&mut state, &mut rng);
        walk.push(problem.evaluate(&state).0);
    }

    let mut normalizers = [1.0; MAX_TERMS];
    for (t, norm) in normalizers.iter_mut().enumerate().take(k) {
        let mean = walk[1..].iter().map(|terms| terms[t]).sum::<f64>() / samples as f64;
        *norm = if mean > 0.0 && mean.is_finite() {
            mean
        } else {
            problem.fallback_normalizer(t)
        };
    }

    let costs: Vec<f64> = walk.iter().map(|t| problem.cost(t, &normalizers)).collect();
    let (mut up_sum, mut up_n) = (0.0, 0usize);
    for w in costs.windows(2) {
        let d = w[1] - w[0];
        if d > 0.0 {
            up_sum += d;
            up_n += 1;
        }
    }
    let t_init = if up_n == 0 {
        schedule.t_min
    } else {
        -(up_sum / up_n as f64) / schedule.init_accept_prob.ln()
    };
    Calibration {
        t_init: t_init.max(schedule.t_min),
        normalizers,
    }
}

fn pareto_insert(front: &mut Vec<(f64, f64)>, p: (f64, f64)) {
    if front.iter().any(|q| q.0 <= p.0 && q.1 <= p.1) {
        return;
    }
    front.retain(|q| !(p.0 <= q.0 && p.1 <= q.1));
    let at = front.partition_point(|q| q.0 < p.0);
    front.insert(at, p);
}

/// One annealing run from `initial` with a given calibration.
pub fn anneal_calibrated<P: SaProblem>(
    problem: &P,
    initial: &P::State,
    schedule: &SaSchedule,
    calibration: &Calibration,
    worker: usize,
) -> AnnealResult<P::State> {
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed.wrapping_add(worker as u64));
    let norms = &calibration.normalizers;

    let mut current = initial.clone();
    let (mut cur_terms, mut cur_feasible) = problem.evaluate(&current);
    let mut cur_cost = problem.cost(&cur_terms, norms);

    let mut best = (current.clone(), cur_cost, cur_terms, cur_feasible);
    let mut best_feasible = cur_feasible.then(|| best.clone());
    let mut pareto = Vec::new();
    if let Some(p) = problem.sample_point(&cur_terms, cur_feasible) {
        pareto_insert(&mut pareto, p);
    }

    let mut temp = calibration.t_init;
    let factor = schedule.cooling_factor(temp);
    let mut candidate = current.clone();
    let mut history = Vec::with_capacity(schedule.num_iters);
    for _ in 0..schedule.num_iters {
        for _ in 0..schedule.moves_per_iter {
            candidate.clone_from(&current);
            problem.perturb(&mut candidate, &mut rng);
            let (terms, feasible) = problem.evaluate(&candidate);
            let cost = problem.cost(&terms, norms);
            let delta = cost - cur_cost;
            let accept = delta <= 0.0 || rng.gen::<f64>() < (-delta / temp).exp();
            if !accept {
                continue;
            }
            std::mem::swap(&mut current, &mut candidate);
            cur_cost = cost;
            cur_terms = terms;
            cur_feasible = feasible;
            if let Some(p) = problem.sample_point(&cur_terms, cur_feasible) {
                pareto_insert(&mut pareto, p);
            }
            if cur_cost < best.1 {
                best = (current.clone(), cur_cost, cur_terms, cur_feasible);
            }
            if cur_feasible && best_feasible.as_ref().is_none_or(|b| cur_cost < b.1) {
                best_feasible = Some((current.clone(), cur_cost, cur_terms, cur_feasible));
            }
        }
        history.push(best_feasible.as_ref().map_or(best.1, |b| b.1));
        temp *= factor;
    }

    let (state, cost, terms, feasible) = best_feasible.unwrap_or(best);
    AnnealResult {
        state,
        cost,
        terms,
        feasible,
        normalizers: *norms,
        history,
        pareto,
        worker,
    }
}

/// Single annealing run (calibration included).
pub fn anneal<P: SaProblem>(
    problem: &P,
    initial: &P::State,
    schedule: &SaSchedule,
) -> AnnealResult<P::State> {
    let cal = calibrate(problem, initial, schedule);
    anneal_calibrated(problem, initial, schedule, &cal, 0)
}

/// `num_workers` independent runs sharing one calibration, seeded
/// `seed + worker`. Feasible results beat infeasible ones, then lower cost,
/// then lower worker index.
pub fn multi_start<P: SaProblem>(
    problem: &P,
    initial: &P::State,
    schedule: &SaSchedule,
) -> AnnealResult<P::State> {
    let cal = calibrate(problem, initial, schedule);
    let workers = schedule.num_workers.max(1);
    let results: Vec<AnnealResult<P::State>> = (0..workers)
        .into_par_iter()
        .map(|w| anneal_calibrated(problem, initial, schedule, &cal, w))
        .collect();
    let mut pareto = Vec::new();
    for r in &results {
        for &p in &r.pareto {
            pareto_insert(&mut pareto, p);
        }
    }
    let mut best = results
        .into_iter()
        .min_by(|a, b| {
            (!a.feasible, a.cost, a.worker)
                .partial_cmp(&(!b.feasible, b.cost, b.worker))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .expect("at least one worker");
    best.pareto = pareto;
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Explicit constraint-graph evaluation, quadratic in the block count.
    fn oracle(sp: &SequencePair, shapes: &[(f64, f64)]) -> (Vec<f64>, Vec<f64>, f64, f64) {
        let n = sp.len();
        let mut pi = vec![0; n];
        let mut ni = vec![0; n];
        for (k, &b) in sp.pos.iter().enumerate() {
            pi[b] = k;
        }
        for (k, &b) in sp.neg.iter().enumerate() {
            ni[b] = k;
        }
        let mut x = vec![0.0f64; n];
        let mut y = vec![0.0f64; n];
        // Relax n times; graph is acyclic so n rounds suffice.
        for _ in 0..n {
            for a in 0..n {
                for b in 0..n {
                    if pi[a] < pi[b] && ni[a] < ni[b] {
                        x[b] = x[b].max(x[a] + shapes[a].0);
                    }
                    if pi[a] > pi[b] && ni[a] < ni[b] {
                        y[b] = y[b].max(y[a] + shapes[a].1);
                    }
                }
            }
        }
        let w = (0..n).map(|b| x[b] + shapes[b].0).fold(0.0, f64::max);
        let h = (0..n).map(|b| y[b] + shapes[b].1).fold(0.0, f64::max);
        (x, y, w, h)
    }

    #[test]
    fn left_of_relation() {
        let sp = SequencePair {
            pos: vec![0, 1],
            neg: vec![0, 1],
        };
        let p = evaluate_sequence_pair(&sp, &[(1.0, 1.0), (1.0, 1.0)]);
        assert_eq!((p.x, p.y), (vec![0.0, 1.0], vec![0.0, 0.0]));
        assert_eq!((p.width, p.height), (2.0, 1.0));
    }

    #[test]
    fn above_relation() {
        let sp = SequencePair {
            pos: vec![0, 1],
            neg: vec![1, 0],
        };
        let p = evaluate_sequence_pair(&sp, &[(1.0, 1.0), (1.0, 1.0)]);
        assert_eq!((p.x, p.y), (vec![0.0, 0.0], vec![1.0, 0.0]));
        assert_eq!((p.width, p.height), (1.0, 2.0));
    }

    #[test]
    fn matches_oracle_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let n = rng.gen_range(1..=12);
            let sp = SequencePair::random(n, &mut rng);
            let shapes: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.gen_range(1..10) as f64, rng.gen_range(1..10) as f64))
                .collect();
            let p = evaluate_sequence_pair(&sp, &shapes);
            let (x, y, w, h) = oracle(&sp, &shapes);
            assert_eq!(p.x, x);
            assert_eq!(p.y, y);
            assert_eq!((p.width, p.height), (w, h));
        }
    }

    #[test]
    fn choose_op_respects_zero_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_ne!(choose_op(&[0.5, 0.0, 0.5], &mut rng), 1);
        }
    }

    #[test]
    fn cooling_reaches_t_min() {
        let s = SaSchedule::default();
        let f = s.cooling_factor(10.0);
        let t_last = 10.0 * f.powi(s.num_iters as i32 - 1);
        assert!((t_last / s.t_min - 1.0).abs() < 1e-6);
    }

    struct Constant;
    impl SaProblem for Constant {
        type State = u32;
        fn num_terms(&self) -> usize {
            1
        }
        fn evaluate(&self, _s: &u32) -> (Terms, bool) {
            let mut t = [0.0; MAX_TERMS];
            t[0] = 5.0;
            (t, true)
        }
        fn cost(&self, t: &Terms, n: &Terms) -> f64 {
            t[0] / n[0]
        }
        fn perturb<R: Rng>(&self, s: &mut u32, rng: &mut R) {
            *s = rng.gen_range(0..100);
        }
    }

    #[test]
    fn constant_cost_returns_initial_cost() {
        let sched = SaSchedule {
            moves_per_iter: 20,
            num_iters: 5,
            ..Default::default()
        };
        let r = anneal(&Constant, &3, &sched);
        assert_eq!(r.cost, 1.0);
        // Strict improvement is required, so the incumbent is kept.
        assert_eq!(r.state, 3);
    }

    /// Minimize |x - 17| over integers by +-1 steps.
    struct Valley;
    impl SaProblem for Valley {
        type State = i64;
        fn num_terms(&self) -> usize {
            1
        }
        fn evaluate(&self, s: &i64) -> (Terms, bool) {
            let mut t = [0.0; MAX_TERMS];
            t[0] = (*s - 17).abs() as f64;
            (t, true)
        }
        fn cost(&self, t: &Terms, n: &Terms) -> f64 {
            t[0] / n[0]
        }
        fn perturb<R: Rng>(&self, s: &mut i64, rng: &mut R) {
            *s += if rng.gen::<bool>() { 1 } else { -1 };
        }
    }

    #[test]
    fn descends_and_history_is_monotone() {
        let sched = SaSchedule {
            moves_per_iter: 50,
            num_iters: 40,
            num_workers: 3,
            seed: 11,
            ..Default::default()
        };
        let r = multi_start(&Valley, &-20, &sched);
        assert_eq!(r.state, 17);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn multi_start_single_worker_equals_anneal() {
        let sched = SaSchedule {
            moves_per_iter: 30,
            num_iters: 10,
            num_workers: 1,
            seed: 5,
            ..Default::default()
        };
        let a = anneal(&Valley, &0, &sched);
        let b = multi_start(&Valley, &0, &sched);
        assert_eq!(a.state, b.state);
        assert_eq!(a.cost, b.cost);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn pareto_front_keeps_nondominated() {
        let mut f = Vec::new();
        for p in [(3.0, 3.0), (1.0, 5.0), (5.0, 1.0), (2.0, 2.0), (4.0, 4.0)] {
            pareto_insert(&mut f, p);
        }
        assert_eq!(f, vec![(1.0, 5.0), (2.0, 2.0), (5.0, 1.0)]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn sp_and_shapes() -> impl Strategy<Value = (SequencePair, Vec<(f64, f64)>)> {
            (1usize..=12).prop_flat_map(|n| {
                (
                    Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
                    Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
                    proptest::collection::vec((1u32..20, 1u32..20), n),
                )
                    .prop_map(|(pos, neg, s)| {
                        (
                            SequencePair { pos, neg },
                            s.into_iter().map(|(w, h)| (w as f64, h as f64)).collect(),
                        )
                    })
            })
        }

        proptest! {
            #[test]
            fn no_overlaps((sp, shapes) in sp_and_shapes()) {
                let p = evaluate_sequence_pair(&sp, &shapes);
                let n = sp.len();
                for a in 0..n {
                    for b in a + 1..n {
                        let ox = (p.x[a] + shapes[a].0).min(p.x[b] + shapes[b].0) - p.x[a].max(p.x[b]);
                        let oy = (p.y[a] + shapes[a].1).min(p.y[b] + shapes[b].1) - p.y[a].max(p.y[b]);
                        prop_assert!(ox <= 0.0 || oy <= 0.0);
                    }
                }
            }

            #[test]
            fn transpose_symmetry((sp, shapes) in sp_and_shapes()) {
                // Reversing both sequences and swapping w/h transposes the packing.
                let p = evaluate_sequence_pair(&sp, &shapes);
                let t_sp = SequencePair {
                    pos: sp.pos.iter().rev().copied().collect(),
                    neg: sp.neg.clone(),
                };
                let t_shapes: Vec<(f64, f64)> = shapes.iter().map(|&(w, h)| (h, w)).collect();
                let q = evaluate_sequence_pair(&t_sp, &t_shapes);
                prop_assert_eq!(p.width * p.height, q.width * q.height);
                prop_assert_eq!(&p.x, &q.y);
                prop_assert_eq!(&p.y, &q.x);
            }
        }
    }
}
