//! Kingman's n-coalescent: direct simulation and the observables read off a
//! trajectory (block counts, frequencies, jump chain, coalescence metric).
//!
//! Labels are `1..=n`. A block is identified by its smallest label, so when two
//! blocks merge the result keeps the smaller identifier.

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::rng::exponential;

/// Where a trajectory's randomness came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SeedRecord {
    pub master: u64,
    pub replicate: u64,
}

/// A partition of `{1..n}` into disjoint nonempty blocks.
///
/// Blocks are kept sorted internally and ordered by their smallest element, so
/// two equal partitions compare equal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPartition {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl LabeledPartition {
    pub fn new(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        if n == 0 {
            return invalid("partition of an empty ground set");
        }
        let mut seen = vec![false; n + 1];
        let mut blocks = blocks;
        for block in &mut blocks {
            if block.is_empty() {
                return invalid("empty block");
            }
            block.sort_unstable();
            for &label in block.iter() {
                if label == 0 || label > n {
                    return invalid(format!("label {label} outside 1..={n}"));
                }
                if seen[label] {
                    return invalid(format!("label {label} appears twice"));
                }
                seen[label] = true;
            }
        }
        if seen[1..].iter().any(|s| !s) {
            return invalid("blocks do not cover the ground set");
        }
        blocks.sort_unstable_by_key(|b| b[0]);
        Ok(Self { n, blocks })
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            n,
            blocks: (1..=n).map(|i| vec![i]).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// True when every block of `finer` sits inside a block of `self`.
    pub fn is_coarser_than(&self, finer: &LabeledPartition) -> bool {
        if self.n != finer.n {
            return false;
        }
        let mut owner = vec![0usize; self.n + 1];
        for (b, block) in self.blocks.iter().enumerate() {
            for &label in block {
                owner[label] = b;
            }
        }
        finer
            .blocks
            .iter()
            .all(|block| block.iter().all(|&l| owner[l] == owner[block[0]]))
    }
}

/// Nonnegative masses together with their total.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassVector {
    masses: Vec<f64>,
    total: f64,
}

impl MassVector {
    pub fn new(masses: Vec<f64>, total: f64) -> Result<Self> {
        if masses.iter().any(|m| !(*m >= 0.0)) {
            return invalid("negative or NaN mass");
        }
        let sum: f64 = masses.iter().sum();
        if (sum - total).abs() > 1e-12 * total.abs().max(1.0) {
            return invalid(format!("masses sum to {sum}, expected {total}"));
        }
        Ok(Self { masses, total })
    }

    pub fn from_masses(masses: Vec<f64>) -> Result<Self> {
        let total = masses.iter().sum();
        Self::new(masses, total)
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn largest(&self) -> f64 {
        self.masses.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MergeEvent {
    pub time: f64,
    /// Identifiers of the merged blocks, smaller first. The merged block keeps
    /// `pair.0`.
    pub pair: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoalescentTrajectory {
    n: usize,
    events: Vec<MergeEvent>,
    seed: Option<SeedRecord>,
}

impl CoalescentTrajectory {
    /// Builds a trajectory after checking that event times strictly increase
    /// and every pair names two distinct blocks alive at that moment.
    pub fn new(n: usize, events: Vec<MergeEvent>) -> Result<Self> {
        if n == 0 {
            return invalid("n must be positive");
        }
        if events.len() >= n {
            return invalid("more merges than blocks");
        }
        let mut alive = vec![true; n + 1];
        alive[0] = false;
        let mut last = f64::NEG_INFINITY;
        for ev in &events {
            if !(ev.time > last) || ev.time < 0.0 {
                return invalid(format!("event time {} not strictly increasing", ev.time));
            }
            last = ev.time;
            let (a, b) = ev.pair;
            if a >= b || b > n || !alive[a] || !alive[b] {
                return invalid(format!("invalid merge pair {a},{b}"));
            }
            alive[b] = false;
        }
        Ok(Self {
            n,
            events,
            seed: None,
        })
    }

    pub fn with_seed(mut self, seed: SeedRecord) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn events(&self) -> &[MergeEvent] {
        &self.events
    }

    pub fn seed(&self) -> Option<SeedRecord> {
        self.seed
    }

    pub fn is_complete(&self) -> bool {
        self.events.len() + 1 == self.n
    }

    pub fn replay(&self) -> PartitionReplay<'_> {
        PartitionReplay::new(self)
    }

    /// Waiting times, as `(block count, entry time, holding time)`, for every
    /// block count whose holding period ended before the trajectory stopped.
    pub fn holding_times(&self) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::with_capacity(self.events.len());
        let mut entered = 0.0;
        for (j, ev) in self.events.iter().enumerate() {
            out.push((self.n - j, entered, ev.time - entered));
            entered = ev.time;
        }
        out
    }

    /// Entry time of block count `k`, if the trajectory reached it.
    pub fn entry_time(&self, k: usize) -> Option<f64> {
        if k == self.n {
            return Some(0.0);
        }
        if k == 0 || k > self.n {
            return None;
        }
        self.events.get(self.n - k - 1).map(|e| e.time)
    }
}

/// Runs Kingman's coalescent on `n` singletons: with `k` blocks the next merge
/// comes after an Exp(k(k-1)/2) wait and joins a uniformly chosen pair.
/// Stops at `horizon` when one is given.
pub fn simulate_kingman<R: Rng + ?Sized>(
    n: usize,
    horizon: Option<f64>,
    rng: &mut R,
) -> Result<CoalescentTrajectory> {
    if n == 0 {
        return invalid("n must be at least 1");
    }
    let horizon = horizon.unwrap_or(f64::INFINITY);
    let mut active: Vec<usize> = (1..=n).collect();
    let mut events = Vec::with_capacity(n - 1);
    let mut time = 0.0;
    while active.len() > 1 {
        let k = active.len();
        time += exponential(rng, (k * (k - 1)) as f64 / 2.0);
        if time > horizon {
            break;
        }
        let i = rng.random_range(0..k);
        let mut j = rng.random_range(0..k - 1);
        if j >= i {
            j += 1;
        }
        let (keep, gone) = if active[i] < active[j] { (i, j) } else { (j, i) };
        events.push(MergeEvent {
            time,
            pair: (active[keep], active[gone]),
        });
        active.swap_remove(gone);
    }
    Ok(CoalescentTrajectory {
        n,
        events,
        seed: None,
    })
}

/// Incremental replay of a trajectory's partition.
#[derive(Debug, Clone)]
pub struct PartitionReplay<'a> {
    traj: &'a CoalescentTrajectory,
    parent: Vec<usize>,
    size: Vec<usize>,
    applied: usize,
}

impl<'a> PartitionReplay<'a> {
    fn new(traj: &'a CoalescentTrajectory) -> Self {
        let n = traj.n;
        Self {
            traj,
            parent: (0..=n).collect(),
            size: vec![1; n + 1],
            applied: 0,
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn apply_next(&mut self) {
        let (a, b) = self.traj.events[self.applied].pair;
        // a and b are block identifiers, hence their own roots.
        self.parent[b] = a;
        self.size[a] += self.size[b];
        self.size[b] = 0;
        self.applied += 1;
    }

    /// Applies every event with time ≤ `t`. Time only moves forward.
    pub fn advance_to(&mut self, t: f64) {
        while self.applied < self.traj.events.len() && self.traj.events[self.applied].time <= t {
            self.apply_next();
        }
    }

    /// Applies events until `k` blocks remain (or the trajectory ends).
    pub fn advance_to_count(&mut self, k: usize) {
        while self.block_count() > k && self.applied < self.traj.events.len() {
            self.apply_next();
        }
    }

    pub fn block_count(&self) -> usize {
        self.traj.n - self.applied
    }

    pub fn block_of(&mut self, label: usize) -> usize {
        self.find(label)
    }

    pub fn size_of_block_containing(&mut self, label: usize) -> usize {
        let root = self.find(label);
        self.size[root]
    }

    /// Sizes of the current blocks, ordered by block identifier.
    pub fn block_sizes(&self) -> Vec<usize> {
        self.size[1..].iter().copied().filter(|&s| s > 0).collect()
    }

    pub fn frequencies(&self) -> MassVector {
        let n = self.traj.n as f64;
        let masses: Vec<f64> = self.block_sizes().into_iter().map(|s| s as f64 / n).collect();
        MassVector { total: 1.0, masses }
    }

    pub fn partition(&mut self) -> LabeledPartition {
        let n = self.traj.n;
        let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
        for label in 1..=n {
            let r = self.find(label);
            by_root[r].push(label);
        }
        let blocks = by_root.into_iter().filter(|b| !b.is_empty()).collect();
        LabeledPartition { n, blocks }
    }
}

pub fn block_count(traj: &CoalescentTrajectory, t: f64) -> usize {
    let merged = traj.events.partition_point(|e| e.time <= t);
    traj.n - merged
}

/// Size of the block containing `label` at time `t`, divided by `n`.
pub fn frequency_containing(traj: &CoalescentTrajectory, label: usize, t: f64) -> Result<f64> {
    if label == 0 || label > traj.n {
        return invalid(format!("label {label} outside 1..={}", traj.n));
    }
    let mut replay = traj.replay();
    replay.advance_to(t);
    Ok(replay.size_of_block_containing(label) as f64 / traj.n as f64)
}

/// Number of blocks at time `t` whose frequency exceeds `x`.
pub fn blocks_larger_than(traj: &CoalescentTrajectory, t: f64, x: f64) -> usize {
    let mut replay = traj.replay();
    replay.advance_to(t);
    let n = traj.n as f64;
    replay
        .block_sizes()
        .into_iter()
        .filter(|&s| s as f64 / n > x)
        .count()
}

/// Block frequencies at every block count, from `n` down to 1.
///
/// Memory is quadratic in `n`; use [`jump_chain_state`] when only a few block
/// counts are needed.
pub fn jump_chain(traj: &CoalescentTrajectory) -> Result<Vec<MassVector>> {
    if !traj.is_complete() {
        return invalid("jump chain needs a trajectory that reaches one block");
    }
    let mut replay = traj.replay();
    let mut out = Vec::with_capacity(traj.n);
    out.push(replay.frequencies());
    for _ in 0..traj.events.len() {
        replay.apply_next();
        out.push(replay.frequencies());
    }
    Ok(out)
}

/// Index of the pair merged when leaving `k` blocks, among the `k(k-1)/2`
/// pairs of block identifiers listed in lexicographic order.
pub fn merge_category_at(traj: &CoalescentTrajectory, k: usize) -> Option<usize> {
    if k < 2 || k > traj.n {
        return None;
    }
    let idx = traj.n - k;
    let event = traj.events.get(idx)?;
    let mut alive = vec![true; traj.n + 1];
    for ev in &traj.events[..idx] {
        alive[ev.pair.1] = false;
    }
    let ids: Vec<usize> = (1..=traj.n).filter(|&i| alive[i]).collect();
    let a = ids.binary_search(&event.pair.0).ok()?;
    let b = ids.binary_search(&event.pair.1).ok()?;
    // pairs (i, j), i < j, before (a, b)
    Some(a * (2 * k - a - 1) / 2 + (b - a - 1))
}

/// Block frequencies while exactly `k` blocks exist.
pub fn jump_chain_state(traj: &CoalescentTrajectory, k: usize) -> Result<MassVector> {
    if k == 0 || k > traj.n {
        return invalid(format!("block count {k} outside 1..={}", traj.n));
    }
    if traj.n - traj.events.len() > k {
        return invalid(format!("trajectory never reaches {k} blocks"));
    }
    let mut replay = traj.replay();
    replay.advance_to_count(k);
    Ok(replay.frequencies())
}

/// Symmetric matrix of pairwise coalescence times among labels `1..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalescenceMetric {
    m: usize,
    d: Vec<f64>,
}

impl CoalescenceMetric {
    pub fn m(&self) -> usize {
        self.m
    }

    /// Distance between labels `i` and `j` (1-based).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[(i - 1) * self.m + (j - 1)]
    }

    pub fn is_ultrametric(&self) -> bool {
        let m = self.m;
        for i in 1..=m {
            if self.get(i, i) != 0.0 {
                return false;
            }
            for j in 1..=m {
                if self.get(i, j) != self.get(j, i) {
                    return false;
                }
                for k in 1..=m {
                    if self.get(i, k) > self.get(i, j).max(self.get(j, k)) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

pub fn coalescence_metric(traj: &CoalescentTrajectory, m: usize) -> Result<CoalescenceMetric> {
    if m > traj.n {
        return invalid(format!("sample size {m} exceeds n = {}", traj.n));
    }
    if !traj.is_complete() {
        return invalid("coalescence metric needs a trajectory that reaches one block");
    }
    let n = traj.n;
    let mut members: Vec<Vec<usize>> = (0..=n)
        .map(|i| if i >= 1 && i <= m { vec![i] } else { Vec::new() })
        .collect();
    let mut d = vec![0.0; m * m];
    for ev in &traj.events {
        let (a, b) = ev.pair;
        let moved = std::mem::take(&mut members[b]);
        for &i in &members[a] {
            for &j in &moved {
                d[(i - 1) * m + (j - 1)] = ev.time;
                d[(j - 1) * m + (i - 1)] = ev.time;
            }
        }
        members[a].extend(moved);
    }
    Ok(CoalescenceMetric { m, d })
}

/// Smallest and largest block frequency at time `t`.
pub fn extremal_blocks(traj: &CoalescentTrajectory, t: f64) -> (f64, f64) {
    let mut replay = traj.replay();
    replay.advance_to(t);
    extremes(&replay)
}

pub(crate) fn extremes(replay: &PartitionReplay<'_>) -> (f64, f64) {
    let n = replay.traj.n as f64;
    let sizes = replay.block_sizes();
    let min = sizes.iter().copied().min().unwrap_or(0) as f64 / n;
    let max = sizes.iter().copied().max().unwrap_or(0) as f64 / n;
    (min, max)
}

impl std::fmt::Display for LabeledPartition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self
            .blocks
            .iter()
            .map(|b| {
                let inner: Vec<String> = b.iter().map(|x| x.to_string()).collect();
                format!("{{{}}}", inner.join(","))
            })
            .collect();
        write!(f, "({})", parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replicate_rng;
    use crate::stats::{chi_square_gof, ks_one_sample, EmpiricalSample};

    fn traj(n: usize, seed: u64) -> CoalescentTrajectory {
        simulate_kingman(n, None, &mut replicate_rng(seed, "kingman-test", 0)).unwrap()
    }

    #[test]
    fn rejects_empty_ground_set() {
        assert!(simulate_kingman(0, None, &mut replicate_rng(0, "k", 0)).is_err());
    }

    #[test]
    fn two_blocks_merge_at_rate_one() {
        let reps = 10_000;
        let mean = (0..reps)
            .map(|r| {
                let t = simulate_kingman(2, None, &mut replicate_rng(11, "n2", r)).unwrap();
                assert_eq!(t.events().len(), 1);
                t.events()[0].time
            })
            .sum::<f64>()
            / reps as f64;
        assert!((mean - 1.0).abs() < 0.03, "mean {mean}");
    }

    #[test]
    fn full_coalescence_time_of_three() {
        let reps = 20_000;
        let mean = (0..reps)
            .map(|r| {
                let t = simulate_kingman(3, None, &mut replicate_rng(12, "n3", r)).unwrap();
                t.events().last().unwrap().time
            })
            .sum::<f64>()
            / reps as f64;
        assert!((mean - 4.0 / 3.0).abs() < 0.03, "mean {mean}");
    }

    #[test]
    fn full_coalescence_time_approaches_two() {
        let n = 200;
        let expected = 2.0 * (1.0 - 1.0 / n as f64);
        let reps = 4000;
        let mean = (0..reps)
            .map(|r| {
                let t = simulate_kingman(n, None, &mut replicate_rng(13, "tmrca", r)).unwrap();
                t.events().last().unwrap().time
            })
            .sum::<f64>()
            / reps as f64;
        // sd of the TMRCA is about 1.07
        assert!((mean - expected).abs() < 0.06, "mean {mean}");
    }

    #[test]
    fn block_count_edges() {
        let t = traj(50, 1);
        assert_eq!(block_count(&t, 0.0), 50);
        assert_eq!(block_count(&t, t.events().last().unwrap().time + 1.0), 1);
        let e = t.events();
        let mid = 0.5 * (e[9].time + e[10].time);
        assert_eq!(block_count(&t, mid), 50 - 10);
    }

    #[test]
    fn frequency_of_singletons_and_bad_label() {
        let t = traj(40, 2);
        assert_eq!(frequency_containing(&t, 7, 0.0).unwrap(), 1.0 / 40.0);
        assert!(frequency_containing(&t, 0, 0.1).is_err());
        assert!(frequency_containing(&t, 41, 0.1).is_err());
        assert_eq!(frequency_containing(&t, 40, 1e9).unwrap(), 1.0);
    }

    #[test]
    fn typical_block_is_gamma_two() {
        let (n, t, reps) = (10_000, 0.02, 2000);
        let scaled: Vec<f64> = (0..reps)
            .map(|r| {
                let tr = simulate_kingman(n, Some(t), &mut replicate_rng(14, "cor2", r)).unwrap();
                2.0 * frequency_containing(&tr, 1, t).unwrap() / t
            })
            .collect();
        let mean = scaled.iter().sum::<f64>() / reps as f64;
        assert!((mean - 2.0).abs() < 0.1, "mean {mean}");
        let above = scaled.iter().filter(|&&x| x > 1.0).count() as f64 / reps as f64;
        assert!((above - 2.0 * (-1.0f64).exp()).abs() < 0.03, "P(>1) {above}");
    }

    #[test]
    fn aldous_counts_at_small_time() {
        let (n, t, reps) = (10_000, 0.02, 200);
        let (mut k0, mut k1) = (0.0, 0.0);
        for r in 0..reps {
            let tr = simulate_kingman(n, Some(t), &mut replicate_rng(15, "aldous", r)).unwrap();
            k0 += t / 2.0 * blocks_larger_than(&tr, t, 0.0) as f64;
            k1 += t / 2.0 * blocks_larger_than(&tr, t, t / 2.0) as f64;
        }
        k0 /= reps as f64;
        k1 /= reps as f64;
        assert!((k0 - 1.0).abs() < 0.05, "{k0}");
        assert!((k1 - (-1.0f64).exp()).abs() < 0.02, "{k1}");
    }

    #[test]
    fn nothing_exceeds_full_mass_while_split() {
        let t = traj(100, 3);
        assert_eq!(blocks_larger_than(&t, 0.3, 1.0), 0);
    }

    #[test]
    fn jump_chain_shape() {
        let t = traj(30, 4);
        let chain = jump_chain(&t).unwrap();
        assert_eq!(chain.len(), 30);
        for (idx, state) in chain.iter().enumerate() {
            let k = 30 - idx;
            assert_eq!(state.len(), k);
            assert!((state.masses().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(chain.last().unwrap().masses(), &[1.0]);
        let truncated = simulate_kingman(30, Some(0.01), &mut replicate_rng(4, "x", 0)).unwrap();
        assert!(jump_chain(&truncated).is_err());
    }

    #[test]
    fn two_block_split_matches_stick_breaking() {
        let reps = 10_000;
        let chain_mean = (0..reps)
            .map(|r| {
                let tr = simulate_kingman(5000, None, &mut replicate_rng(16, "jc2", r)).unwrap();
                jump_chain_state(&tr, 2).unwrap().largest()
            })
            .sum::<f64>()
            / reps as f64;
        // Independent route: uniform stick broken once.
        let mut rng = replicate_rng(16, "stick", 0);
        let stick_mean = (0..reps)
            .map(|_| {
                let u: f64 = rng.random();
                u.max(1.0 - u)
            })
            .sum::<f64>()
            / reps as f64;
        assert!((chain_mean - 0.75).abs() < 0.01, "{chain_mean}");
        assert!((stick_mean - 0.75).abs() < 0.01, "{stick_mean}");
        assert!((chain_mean - stick_mean).abs() < 0.01);
    }

    #[test]
    fn metric_is_an_ultrametric() {
        for seed in 0..20 {
            let t = traj(25, seed);
            let d = coalescence_metric(&t, 25).unwrap();
            assert!(d.is_ultrametric());
            assert_eq!(d.get(3, 3), 0.0);
        }
    }

    #[test]
    fn metric_of_two_is_exponential() {
        let reps = 10_000;
        let mean = (0..reps)
            .map(|r| {
                let t = simulate_kingman(2, None, &mut replicate_rng(17, "d12", r)).unwrap();
                coalescence_metric(&t, 2).unwrap().get(1, 2)
            })
            .sum::<f64>()
            / reps as f64;
        assert!((mean - 1.0).abs() < 0.03);
    }

    #[test]
    fn extremes_after_full_coalescence() {
        let t = traj(60, 5);
        assert_eq!(extremal_blocks(&t, 1e6), (1.0, 1.0));
        let (lo, hi) = extremal_blocks(&t, 0.0);
        assert_eq!((lo, hi), (1.0 / 60.0, 1.0 / 60.0));
    }

    #[test]
    fn partition_stays_valid_after_every_event() {
        let t = traj(40, 6);
        let mut replay = t.replay();
        let mut previous = replay.partition();
        for (j, ev) in t.events().iter().enumerate() {
            replay.advance_to(ev.time);
            let p = replay.partition();
            LabeledPartition::new(40, p.blocks().to_vec()).unwrap();
            assert_eq!(p.len(), 40 - j - 1);
            assert!(p.is_coarser_than(&previous));
            let f = replay.frequencies();
            assert!((f.masses().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            previous = p;
        }
    }

    #[test]
    fn rescaled_waiting_times_are_standard_exponential() {
        let mut values = Vec::new();
        let mut r = 0;
        while values.len() < 2000 {
            let t = simulate_kingman(10, None, &mut replicate_rng(18, "ks", r)).unwrap();
            for (k, _, w) in t.holding_times() {
                values.push(w * (k * (k - 1)) as f64 / 2.0);
            }
            r += 1;
        }
        values.truncate(2000);
        let (_, p) = ks_one_sample(&EmpiricalSample::new(values), |x| 1.0 - (-x).exp()).unwrap();
        assert!(p > 0.001, "p = {p}");
    }

    #[test]
    fn merging_pair_is_uniform_at_four_blocks() {
        let mut counts = [0u64; 6];
        for r in 0..6000 {
            let t = simulate_kingman(8, None, &mut replicate_rng(19, "pairs", r)).unwrap();
            let mut replay = t.replay();
            replay.advance_to_count(4);
            let mut ids: Vec<usize> = (1..=8).filter(|&l| replay.block_of(l) == l).collect();
            ids.sort_unstable();
            let ev = t.events()[8 - 4];
            let category = pair_category(&ids, ev.pair);
            assert_eq!(merge_category_at(&t, 4), Some(category));
            counts[category] += 1;
        }
        let (_, _, p) = chi_square_gof(&counts, &[1000.0; 6]).unwrap();
        assert!(p > 0.001, "p = {p}");
    }

    fn pair_category(ids: &[usize], pair: (usize, usize)) -> usize {
        let a = ids.iter().position(|&x| x == pair.0).unwrap();
        let b = ids.iter().position(|&x| x == pair.1).unwrap();
        let (a, b) = (a.min(b), a.max(b));
        // (0,1) (0,2) (0,3) (1,2) (1,3) (2,3)
        [[0, 0, 1, 2], [0, 0, 3, 4], [0, 0, 0, 5], [0; 4]][a][b]
    }

    #[test]
    fn trajectory_validation() {
        let ok = CoalescentTrajectory::new(
            3,
            vec![
                MergeEvent { time: 0.1, pair: (1, 3) },
                MergeEvent { time: 0.4, pair: (1, 2) },
            ],
        );
        assert!(ok.unwrap().is_complete());
        let reused = CoalescentTrajectory::new(
            3,
            vec![
                MergeEvent { time: 0.1, pair: (1, 3) },
                MergeEvent { time: 0.4, pair: (2, 3) },
            ],
        );
        assert!(reused.is_err());
        let unordered = CoalescentTrajectory::new(
            3,
            vec![
                MergeEvent { time: 0.4, pair: (1, 3) },
                MergeEvent { time: 0.4, pair: (1, 2) },
            ],
        );
        assert!(unordered.is_err());
    }

    #[test]
    fn partition_validation() {
        assert!(LabeledPartition::new(3, vec![vec![1, 2], vec![3]]).is_ok());
        assert!(LabeledPartition::new(3, vec![vec![1, 2], vec![2, 3]]).is_err());
        assert!(LabeledPartition::new(3, vec![vec![1, 2]]).is_err());
        assert!(LabeledPartition::new(3, vec![vec![1, 2, 3], vec![]]).is_err());
    }
}
