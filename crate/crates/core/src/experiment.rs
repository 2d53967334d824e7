//! Registry of the simulation experiments and the reports they produce.
//!
//! Every replicate draws from its own stream keyed by the master seed, so the
//! reports depend only on the spec and the seed, never on the worker count.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::excursion::{
    heavy_count, hat_coalescent, lattice_size, local_time_profile, reduced_tree_counts, sample_conditioned_excursion,
    sample_reflected_forest, scan_down, site_of_level, splits_between, LatticeExcursion, LocalTimeProfile, Reference,
};
use crate::feller::feller_euler_maruyama;
use crate::kingman::{blocks_larger_than, frequency_containing, merge_category_at, simulate_kingman, CoalescentTrajectory};
use crate::rng::{replicate_rng, StreamRng};
use crate::stats::{
    chi_square_gof, ks_one_sample, ks_two_sample, mean, regression_slope, EmpiricalSample, TestReport,
};
use crate::yule::{
    dim_thick, dim_thin, kesten_stigum_w, largest_fragments, poissonized_reversed_chain, simulate_yule,
    simulate_yule_resolved, spectrum_parameters,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Theorem1,
    Prop1,
    Cor2,
    Aldous,
    LemmaExc,
    RayKnight,
    YuleEmbed,
    KestenStigum,
    Duality,
    Spectrum,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::Theorem1,
        Experiment::Prop1,
        Experiment::Cor2,
        Experiment::Aldous,
        Experiment::LemmaExc,
        Experiment::RayKnight,
        Experiment::YuleEmbed,
        Experiment::KestenStigum,
        Experiment::Duality,
        Experiment::Spectrum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Theorem1 => "theorem1",
            Experiment::Prop1 => "prop1",
            Experiment::Cor2 => "cor2",
            Experiment::Aldous => "aldous",
            Experiment::LemmaExc => "lemma-exc",
            Experiment::RayKnight => "rayknight",
            Experiment::YuleEmbed => "yule-embed",
            Experiment::KestenStigum => "kesten-stigum",
            Experiment::Duality => "duality",
            Experiment::Spectrum => "spectrum",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

/// Parameters of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    /// Lattice step of the sampled paths.
    pub h: f64,
    pub replicates: usize,
    /// Sample size of the direct Kingman runs (aldous, spectrum) or the
    /// initial block count of the reversed jump chain (duality).
    pub n: usize,
    /// Times swept by yule-embed, duality and spectrum.
    pub t_grid: Vec<f64>,
}

/// Local time at level 1 below which paths are redrawn in the fixed-time
/// experiments. Given the profile the construction is exactly Kingman, so
/// conditioning on it leaves the target law unchanged while cutting off the
/// few-atom paths whose lattice error dominates at small `t`.
pub const MIN_TOP_LOCAL_TIME: f64 = 1.0;

/// Geometric grid from `start` to `stop` with `count` points, endpoints included.
pub fn geometric_grid(start: f64, stop: f64, count: usize) -> Result<Vec<f64>> {
    if !(start > 0.0 && stop >= start) || count == 0 {
        return invalid("geometric grid needs 0 < start ≤ stop and count ≥ 1");
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    let ratio = (stop / start).ln() / (count - 1) as f64;
    Ok((0..count)
        .map(|i| if i + 1 == count { stop } else { start * (ratio * i as f64).exp() })
        .collect())
}

impl ExperimentSpec {
    /// Spec with the default parameters of `experiment`.
    pub fn new(experiment: Experiment) -> Self {
        let (h, replicates, n, t_grid) = match experiment {
            Experiment::Cor2 => (1.0 / 1000.0, 2000, 0, vec![]),
            Experiment::Aldous => (1.0 / 1000.0, 200, 10_000, vec![]),
            Experiment::YuleEmbed => (1.0 / 400.0, 2000, 0, vec![0.5, 1.0, 2.0]),
            Experiment::Duality => (1.0 / 400.0, 2000, 5000, vec![0.5, 1.0]),
            Experiment::Spectrum => (
                1.0 / 400.0,
                200,
                20_000,
                geometric_grid(0.005, 0.05, 10).expect("static grid"),
            ),
            _ => (1.0 / 400.0, 2000, 0, vec![]),
        };
        Self {
            experiment,
            h,
            replicates,
            n,
            t_grid,
        }
    }

    pub fn named(name: &str) -> Result<Self> {
        Ok(Self::new(name.parse()?))
    }

    pub fn validate(&self) -> Result<()> {
        lattice_size(self.h)?;
        if self.replicates == 0 {
            return invalid("replicates must be at least 1");
        }
        if self.t_grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return invalid("grid times must be positive and finite");
        }
        if self.t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("grid must be strictly increasing");
        }
        match self.experiment {
            Experiment::Aldous | Experiment::Duality if self.n < 2 => invalid("n must be at least 2"),
            Experiment::Spectrum if self.n < 2 => invalid("n must be at least 2"),
            Experiment::Spectrum if self.t_grid.len() < 3 => invalid("spectrum needs at least three grid times"),
            Experiment::YuleEmbed | Experiment::Duality if self.t_grid.is_empty() => invalid("grid must not be empty"),
            _ => Ok(()),
        }
    }
}

/// Runs an experiment and returns its reports in a fixed order.
pub fn run_experiment(spec: &ExperimentSpec, seed: u64) -> Result<Vec<TestReport>> {
    spec.validate()?;
    match spec.experiment {
        Experiment::Theorem1 => theorem1(spec, seed),
        Experiment::Prop1 => prop1(spec, seed),
        Experiment::Cor2 => cor2(spec, seed),
        Experiment::Aldous => aldous(spec, seed),
        Experiment::LemmaExc => lemma_exc(spec, seed),
        Experiment::RayKnight => rayknight(spec, seed),
        Experiment::YuleEmbed => yule_embed(spec, seed),
        Experiment::KestenStigum => kesten_stigum(spec, seed),
        Experiment::Duality => duality(spec, seed),
        Experiment::Spectrum => Ok(spectrum_table(spec, seed)?.reports),
    }
}

/// Maps replicates `0..count` in parallel, keeping replicate order.
fn replicates<T: Send>(
    seed: u64,
    label: &str,
    count: usize,
    f: impl Fn(&mut StreamRng) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| f(&mut replicate_rng(seed, label, i)))
        .collect()
}

const KS_BLOCK_COUNTS: std::ops::RangeInclusive<usize> = 3..=8;
const PAIR_CATEGORY_BLOCKS: usize = 4;

fn ks_exp_reports(prefix: &str, waits: &[Vec<f64>], seed: u64, reps: usize) -> Result<Vec<TestReport>> {
    KS_BLOCK_COUNTS
        .zip(waits)
        .map(|(k, w)| {
            let (d, p) = ks_one_sample(&EmpiricalSample::new(w.clone()), |x| 1.0 - (-x.max(0.0)).exp())?;
            Ok(TestReport::from_p_value(format!("{prefix}/ks-k{k}"), d, p, seed, reps as u64))
        })
        .collect()
}

fn pair_uniformity_report(prefix: &str, categories: &[usize], seed: u64, reps: usize) -> Result<TestReport> {
    let pairs = PAIR_CATEGORY_BLOCKS * (PAIR_CATEGORY_BLOCKS - 1) / 2;
    let mut counts = vec![0u64; pairs];
    for &c in categories {
        counts[c] += 1;
    }
    let expected = vec![categories.len() as f64 / pairs as f64; pairs];
    let (stat, _, p) = chi_square_gof(&counts, &expected)?;
    Ok(TestReport::from_p_value(
        format!("{prefix}/pair-uniform-k{PAIR_CATEGORY_BLOCKS}"),
        stat,
        p,
        seed,
        reps as u64,
    ))
}

fn require_grid_sample(name: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return invalid(format!("{name}: no observations; raise the replicate count"));
    }
    Ok(())
}

// ---------------------------------------------------------------- theorem 1

const RATE_WINDOWS: [(f64, f64); 4] = [(0.5, 0.6), (0.6, 0.7), (0.7, 0.8), (0.8, 0.9)];
const LOOKDOWN_WINDOW: (f64, f64) = (0.5, 0.9);

struct ExcursionReplicate {
    /// Holding times rescaled by `k(k-1)/2`, indexed by `k - 3`.
    waits: Vec<Option<f64>>,
    category: Option<usize>,
    window_events: Vec<u32>,
    window_compensator: Vec<f64>,
    pair_events: u32,
    pair_expected: f64,
}

/// `∫_a^b C(N(s), 2) 4/Z(s) ds` with `N(s) = 1 + #{gaps with merge level ≤ s}`.
fn merge_compensator(profile: &LocalTimeProfile, levels: &[Option<f64>], a: f64, b: f64) -> Result<f64> {
    let mut n = 1 + levels.iter().filter(|l| l.is_none_or(|l| l <= a)).count();
    let mut inside: Vec<f64> = levels.iter().flatten().copied().filter(|&l| l > a && l <= b).collect();
    inside.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut lo = a;
    for l in inside.into_iter().chain(std::iter::once(b)) {
        total += (n * (n - 1) / 2) as f64 * profile.integral_between(lo, l)?;
        lo = l;
        n += 1; // one more block above each merge level
    }
    Ok(total)
}

fn theorem1_replicate(h: f64, rng: &mut StreamRng) -> Result<ExcursionReplicate> {
    let path = sample_conditioned_excursion(h, rng)?;
    let profile = local_time_profile(&path);
    let reference = Reference::new(&path, path.top_site())?;
    let levels = reference.merge_levels(h, rng);
    let traj = scan_down(&profile, &reference, &levels)?;

    let mut waits = vec![None; KS_BLOCK_COUNTS.count()];
    for (k, _, wait) in traj.holding_times() {
        if KS_BLOCK_COUNTS.contains(&k) {
            waits[k - 3] = Some(wait * (k * (k - 1) / 2) as f64);
        }
    }
    let mut window_events = Vec::with_capacity(RATE_WINDOWS.len());
    let mut window_compensator = Vec::with_capacity(RATE_WINDOWS.len());
    for (a, b) in RATE_WINDOWS {
        window_events.push(levels.iter().flatten().filter(|&&l| l > a && l <= b).count() as u32);
        window_compensator.push(merge_compensator(&profile, &levels, a, b)?);
    }

    // Going down, a merge among N blocks is the rank (1, 2) pair with chance
    // 1/C(N, 2), so those merges have intensity 4/Z while N ≥ 2, i.e. above
    // the lowest merge level.
    let (u1, u2) = LOOKDOWN_WINDOW;
    let pair_events = splits_between(&reference, &levels, u1, u2)
        .iter()
        .filter(|e| e.survivor == 1 && e.new_rank == 2)
        .count() as u32;
    let lowest = levels.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let pair_expected = if lowest < u2 {
        profile.integral_between(u1.max(lowest), u2)?
    } else {
        0.0
    };

    Ok(ExcursionReplicate {
        waits,
        category: merge_category_at(&traj, PAIR_CATEGORY_BLOCKS),
        window_events,
        window_compensator,
        pair_events,
        pair_expected,
    })
}

fn theorem1(spec: &ExperimentSpec, seed: u64) -> Result<Vec<TestReport>> {
    let reps = spec.replicates;
    let runs = replicates(seed, "theorem1", reps, |rng| theorem1_replicate(spec.h, rng))?;
    let waits: Vec<Vec<f64>> = (0..KS_BLOCK_COUNTS.count())
        .map(|i| runs.iter().filter_map(|r| r.waits[i]).collect())
        .collect();
    let mut reports = ks_exp_reports("theorem1", &waits, seed, reps)?;
    let categories: Vec<usize> = runs.iter().filter_map(|r| r.category).collect();
    reports.push(pair_uniformity_report("theorem1", &categories, seed, reps)?);

    let errors: Vec<f64> = (0..RATE_WINDOWS.len())
        .map(|w| {
            let events: f64 = runs.iter().map(|r| f64::from(r.window_events[w])).sum();
            let comp: f64 = runs.iter().map(|r| r.window_compensator[w]).sum();
            (events / comp - 1.0).abs()
        })
        .collect();
    reports.push(TestReport::within("theorem1/merge-rate-error", mean(&errors), 0.0, 0.10, seed, reps as u64));

    let events: f64 = runs.iter().map(|r| f64::from(r.pair_events)).sum();
    let expected: f64 = runs.iter().map(|r| r.pair_expected).sum();
    reports.push(TestReport::within_relative(
        "theorem1/lookdown-pair-rate",
        events / expected,
        1.0,
        0.10,
        seed,
        reps as u64,
    ));
    Ok(reports)
}

// ---------------------------------------------------------- proposition 1

const PROP1_HORIZON: f64 = 0.5;

struct ForestReplicate {
    /// Probability integral transforms of completed holding times, indexed by
    /// `k - 3`.
    pits: Vec<Option<f64>>,
    category: Option<usize>,
}

fn prop1_replicate(h: f64, rng: &mut StreamRng) -> Result<ForestReplicate> {
    let path = sample_reflected_forest(h, rng)?;
    let ec = hat_coalescent(&path, PROP1_HORIZON, rng)?;
    let mut pits = vec![None; KS_BLOCK_COUNTS.count()];
    for (k, entry, wait) in ec.trajectory.holding_times() {
        if KS_BLOCK_COUNTS.contains(&k) {
            // only holding times ending before the horizon are seen, so the
            // transform is that of the exponential truncated at the time left
            let rate = (k * (k - 1) / 2) as f64;
            let cap = -(-rate * (ec.horizon - entry)).exp_m1();
            pits[k - 3] = Some(-(-rate * wait).exp_m1() / cap);
        }
    }
    Ok(ForestReplicate {
        pits,
        category: merge_category_at(&ec.trajectory, PAIR_CATEGORY_BLOCKS),
    })
}

fn prop1(spec: &ExperimentSpec, seed: u64) -> Result<Vec<TestReport>> {
    let reps = spec.replicates;
    let runs = replicates(seed, "prop1", reps, |rng| prop1_replicate(spec.h, rng))?;
    let mut reports = Vec::new();
    let mut pooled = Vec::new();
    for (i, k) in KS_BLOCK_COUNTS.enumerate() {
        let pits: Vec<f64> = runs.iter().filter_map(|r| r.pits[i]).collect();
        require_grid_sample("prop1", &pits)?;
        pooled.extend_from_slice(&pits);
        let (d, p) = ks_one_sample(&EmpiricalSample::new(pits), |x| x.clamp(0.0, 1.0))?;
        reports.push(TestReport::from_p_value(format!("prop1/ks-k{k}"), d, p, seed, reps as u64));
    }
    let (d, p) = ks_one_sample(&EmpiricalSample::new(pooled), |x| x.clamp(0.0, 1.0))?;
    reports.push(TestReport::from_p_value("prop1/ks-pooled", d, p, seed, reps as u64));
    let categories: Vec<usize> = runs.iter().filter_map(|r| r.category).collect();
    reports.push(pair_uniformity_report("prop1", &categories, seed, reps)?);
    Ok(reports)
}

// ------------------------------------------------- fixed-time experiments

const FIXED_TIME: f64 = 0.02;
const ALDOUS_X: [f64; 4] = [0.0, 0.5, 1.0, 2.0];

/// Conditioned excursion whose local time at level 1 is at least
/// [`MIN_TOP_LOCAL_TIME`], with its coalescent.
fn sufficient_excursion(h: f64, rng: &mut StreamRng) -> Result<CoalescentTrajectory> {
    loop {
        let path = sample_conditioned_excursion(h, rng)?;
        if top_local_time(&path) >= MIN_TOP_LOCAL_TIME {
            let profile = local_time_profile(&path);
            let reference = Reference::new(&path, path.top_site())?;
            let levels = reference.merge_levels(h, rng);
            return scan_down(&profile, &reference, &levels);
        }
    }
}

fn top_local_time(path: &LatticeExcursion) -> f64 {
    let top = path.top_site();
    path.values().iter().filter(|&&v| v == top).count() as f64 * path.h()
}

fn cor2(spec: &ExperimentSpec, seed: u64) -> Result<Vec<TestReport>> {
    let reps = spec.replicates;
    let t = FIXED_TIME;
    let values = replicates(seed, "cor2", reps, |rng| {
        let traj = sufficient_excursion(spec.h, rng)?;
        Ok(2.0 * frequency_containing(&traj, 1, t)? / t)
    })?;
    let m = mean(&values);
    let (d, p) = ks_one_sample(&EmpiricalSample::new(values), |x| {
        let x = x.max(0.0);
        1.0 - (1.0 + x) * (-x).exp()
    })?;
    Ok(vec![
        TestReport::from_p_value("cor2/ks-gamma2", d, p, seed, reps as u64),
        TestReport::within("cor2/mean", m, 2.0, 0.1, seed, reps as u64),
    ])
}

fn aldous_counts(traj: &CoalescentTrajectory, t: f64) -> Vec<f64> {
    ALDOUS_X
        .iter()
        .map(|x| 0.5 * t * blocks_larger_than(traj, t, 0.5 * t * x) as f64)
        .collect()
}

fn aldous(spec: &ExperimentSpec, seed: u64) -> Result<Vec<TestReport>> {
    let reps = spec.replicates;
    let t = FIXED_TIME;
    let direct = replicates(seed, "aldous-kingman", reps, |rng| {
        Ok(aldous_counts(&simulate_kingman(spec.n, Some(t), rng)?, t))
    })?;
    let excursion = replicates(seed, "aldous-excursion", reps, |rng| {
        Ok(aldous_counts(&sufficient_excursion(spec.h, rng)?, t))
    })?;
    let mut reports = Vec::new();
    for (label, runs) in [("kingman", &direct), ("excursion", &excursion)] {
        for (i, x) in ALDOUS_X.iter().enumerate() {
            let est = runs.iter().map(|r| r[i]).sum::<f64>() / reps as f64;
            reports.push(TestReport::within_relative(
                format!("aldous/{label}-x{x}"),
                est,
                (-x).exp(),
                0.10,
                seed,
                reps as u64,
            ));
        }
    }
    Ok(reports)
}

// ------------------------------------------------- excursions near level 1

const LEMMA_U: f64 = 0.05;
const LEMMA_X: [f64; 3] = [0.0, 1.0, 2.0];

struct LemmaReplicate {
    z_top: f64,
    z_base: f64,
    counts: Vec<f64>,
}

fn lemma_exc(spec: &ExperimentSpec, seed: u64) -> Result<Vec<TestReport>> {
    let reps = spec.replicates;
    let u = LEMMA_U;
    let runs = replicates(seed, "lemma-exc", reps, |rng| {
        let path = sample_conditioned_excursion(spec.h, rng)?;
        let profile = local_time_profile(&path);
        let counts = LEMMA_X
            .iter()
            .map(|x| heavy_count(&path, u, 2.0 * u * x).map(|c| c as f64))
            .collect::<Result<Vec<f64>>>()?;
        Ok(LemmaReplicate {
            z_top: profile.at_site(path.top_site()),
            z_base: profile.at_site(site_of_level(1.0 - u, spec.h)),
            counts,
        })
    })?;
    let z_top: f64 = runs.iter().map(|r| r.z_top).sum();
    let mut reports = Vec::new();
    for (i, x) in LEMMA_X.iter().enumerate() {
        let n: f64 = runs.iter().map(|r| r.counts[i]).sum();
        reports.push(TestReport::within_relative(
            format!("lemma-exc/ratio-x{x}"),
            2.0 * u * n / z_top,
            (-x).exp(),
            0.05,
            seed,
            reps as u64,
        ));
    }
    for (i, x) in LEMMA_X.iter().enumerate() {
        // given the local time at the base, the count is Poisson
        let (mut dev, mut lambda) = (0.0, 0.0);
        for r in &runs {
            let l = r.z_base * (-x).exp() / (2.0 * u);
            dev += (r.counts[i] - l).powi(2);
            lambda += l;
        }
        reports.push(TestReport::within(
            format!("lemma-exc/dispersion-x{x}"),
            dev / lambda,
            1.0,
            0.1,
            seed,
            reps as u64,
        ));
    }
    Ok(reports)
}

// ------------------------------------------------------------- Ray–Knight

const RAY_KNIGHT_LEVELS: [f64; 3] = [0.25, 0.5, 1.0];
/// Noise scale matching local time normalized as occupation density; the
/// diffusion then has variance `4t` at level `t`.
const RAY_KNIGHT_SIGMA: f64 = 2.0;
const EULER_STEP: f64 = 1e-4;

fn rayknight(spec: &ExperimentSpec, seed: u64) -> Result<Vec<TestReport>> {
    let reps = spec.replicates;
    let lattice = replicates(seed, "rayknight-forest", reps, |rng| {
        let path = sample_reflected_forest(spec.h, rng)?;
        let profile = local_time_profile(&path);
        Ok(RAY_KNIGHT_LEVELS
            .iter()
            .map(|l| profile.at_site(site_of_level(*l, spec.h)))
            .collect::<Vec<f64>>())
    })?;
    let diffusion = replicates(seed, "rayknight-feller", reps, |rng| {
        feller_euler_maruyama(1.0, RAY_KNIGHT_SIGMA, &RAY_KNIGHT_LEVELS, EULER_STEP, rng)
    })?;
    RAY_KNIGHT_LEVELS
        .iter()
        .enumerate()
        .map(|(i, level)| {
            let a = EmpiricalSample::new(lattice.iter().map(|r| r[i]).collect());
            let b = EmpiricalSample::new(diffusion.iter().map(|r| r[i]).collect());
            let (d, p) = ks_two_sample(&a, &b)?;
            Ok(TestReport::from_p_value(format!("rayknight/ks-level{level}"), d, p, seed, reps as u64))
        })
        .collect()
}

// ------------------------------------------------------------------ Yule

const YULE_MEAN_LEVEL: f64 = 0.5;

fn yule_embed(spec: &ExperimentSpec, seed: u64) -> Result<Vec<TestReport>> {
    let reps = spec.replicates;
    // the mean check at level u needs the time -ln(1 - u) as well
    let mean_time = -(1.0 - YULE_MEAN_LEVEL).ln();
    let mut times = spec.t_grid.clone();
    times.push(mean_time);
    let order: Vec<usize> = {
        let mut idx: Vec<usize> = (0..times.len()).collect();
        idx.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        idx
    };
    let sorted: Vec<f64> = order.iter().map(|&i| times[i]).collect();
    let unsort = |v: Vec<usize>| -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (pos, &i) in order.iter().enumerate() {
            out[i] = v[pos] as f64;
        }
        out
    };

    let lattice = replicates(seed, "yule-embed-path", reps, |rng| {
        let path = sample_conditioned_excursion(spec.h, rng)?;
        Ok(unsort(reduced_tree_counts(&path, &sorted)?))
    })?;
    let t_max = sorted.last().copied().unwrap_or(0.0);
    let trees = replicates(seed, "yule-embed-tree", reps, |rng| {
        let tree = simulate_yule(t_max, rng)?;
        let pops = sorted
            .iter()
            .map(|&t| tree.population(t).map(|p| p as usize))
            .collect::<Result<Vec<usize>>>()?;
        Ok(unsort(pops))
    })?;

    let mut reports = Vec::new();
    for (i, t) in spec.t_grid.iter().enumerate() {
        let a = EmpiricalSample::new(lattice.iter().map(|r| r[i]).collect());
        let b = EmpiricalSample::new(trees.iter().map(|r| r[i]).collect());
        let (d, p) = ks_two_sample(&a, &b)?;
        reports.push(TestReport::from_p_value(format!("yule-embed/ks-t{t}"), d, p, seed, reps as u64));
    }
    let last = times.len() - 1;
    let m = lattice.iter().map(|r| r[last]).sum::<f64>() / reps as f64;
    reports.push(TestReport::within_relative(
        format!("yule-embed/mean-u{YULE_MEAN_LEVEL}"),
        m,
        1.0 / (1.0 - YULE_MEAN_LEVEL),
        0.05,
        seed,
        reps as u64,
    ));
    Ok(reports)
}

const KESTEN_STIGUM_HORIZON: f64 = 12.0;

fn kesten_stigum(spec: &ExperimentSpec, seed: u64) -> Result<Vec<TestReport>> {
    let reps = spec.replicates;
    let values = replicates(seed, "kesten-stigum", reps, |rng| {
        let tree = simulate_yule(KESTEN_STIGUM_HORIZON, rng)?;
        kesten_stigum_w(&tree, tree.root())
    })?;
    let m = mean(&values);
    let (d, p) = ks_one_sample(&EmpiricalSample::new(values), |x| 1.0 - (-x.max(0.0)).exp())?;
    Ok(vec![
        TestReport::from_p_value("kesten-stigum/ks-exp1", d, p, seed, reps as u64),
        TestReport::within("kesten-stigum/mean", m, 1.0, 0.05, seed, reps as u64),
    ])
}

const DUALITY_W: f64 = 1.0;
const DUALITY_BIN: f64 = 0.05;
/// Trees simulated per replicate; about 3.7% land in the W bin.
const DUALITY_TREES_PER_REPLICATE: usize = 30;

fn duality(spec: &ExperimentSpec, seed: u64) -> Result<Vec<TestReport>> {
    let reps = spec.replicates;
    let frag_times: Vec<f64> = spec.t_grid.iter().map(|t| t.ln_1p()).collect();
    let resolved = frag_times.last().copied().unwrap_or(0.0);
    // largest fragment over total mass; dividing by W removes the spread of W
    // within the bin, which would otherwise smear the atom at one fragment
    let trees = replicates(seed, "duality-tree", reps * DUALITY_TREES_PER_REPLICATE, |rng| {
        let tree = simulate_yule_resolved(KESTEN_STIGUM_HORIZON, resolved, rng)?;
        let w = kesten_stigum_w(&tree, tree.root())?;
        if (w - DUALITY_W).abs() > DUALITY_BIN {
            return Ok(None);
        }
        Ok(Some(largest_fragments(&tree, &frag_times)?.into_iter().map(|g| g / w).collect::<Vec<f64>>()))
    })?;
    let trees: Vec<Vec<f64>> = trees.into_iter().flatten().collect();
    let chain = replicates(seed, "duality-chain", reps, |rng| {
        Ok(poissonized_reversed_chain(DUALITY_W, &spec.t_grid, spec.n, rng)?
            .iter()
            .map(|m| m.largest() / m.total())
            .collect::<Vec<f64>>())
    })?;
    if trees.is_empty() {
        return invalid("duality: no tree fell in the W bin; raise the replicate count");
    }
    spec.t_grid
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let a = EmpiricalSample::new(trees.iter().map(|r| r[i]).collect());
            let b = EmpiricalSample::new(chain.iter().map(|r| r[i]).collect());
            let (d, p) = ks_two_sample(&a, &b)?;
            Ok(TestReport::from_p_value(format!("duality/ks-largest-t{t}"), d, p, seed, reps as u64))
        })
        .collect()
}

// -------------------------------------------------------------- spectrum

/// Mean extreme block frequencies of Kingman's coalescent over a time grid,
/// with the log-log slopes and the reports built from them.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumTable {
    pub t: Vec<f64>,
    pub min_freq_mean: Vec<f64>,
    pub max_freq_mean: Vec<f64>,
    pub min_slope: f64,
    pub min_slope_se: f64,
    pub max_slope: f64,
    pub max_slope_se: f64,
    pub reports: Vec<TestReport>,
}

const THICK_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
const THIN_GRID: [f64; 5] = [1.1, 1.25, 1.5, 1.75, 2.0];

pub fn spectrum_table(spec: &ExperimentSpec, seed: u64) -> Result<SpectrumTable> {
    spec.validate()?;
    let reps = spec.replicates;
    let grid = &spec.t_grid;
    let t_max = *grid.last().expect("validated grid");
    let runs = replicates(seed, "spectrum", reps, |rng| {
        let traj = simulate_kingman(spec.n, Some(t_max), rng)?;
        let mut replay = traj.replay();
        let n = spec.n as f64;
        Ok(grid
            .iter()
            .map(|&t| {
                replay.advance_to(t);
                let sizes = replay.block_sizes();
                let lo = sizes.iter().copied().min().unwrap_or(0) as f64 / n;
                let hi = sizes.iter().copied().max().unwrap_or(0) as f64 / n;
                (lo, hi)
            })
            .collect::<Vec<(f64, f64)>>())
    })?;
    let column = |f: fn(&(f64, f64)) -> f64| -> Vec<f64> {
        (0..grid.len())
            .map(|i| runs.iter().map(|r| f(&r[i])).sum::<f64>() / reps as f64)
            .collect()
    };
    let min_freq_mean = column(|p| p.0);
    let max_freq_mean = column(|p| p.1);
    let log_t: Vec<f64> = grid.iter().map(|t| t.ln()).collect();
    let logs = |v: &[f64]| v.iter().map(|x| x.ln()).collect::<Vec<f64>>();
    let (min_slope, min_slope_se) = regression_slope(&log_t, &logs(&min_freq_mean))?;
    let (max_slope, max_slope_se) = regression_slope(&log_t, &logs(&max_freq_mean))?;

    let p = spectrum_parameters();
    let param_gap = [p.a - 1.0, p.m - std::f64::consts::E, p.r - 1.0, p.tau - 1.0]
        .iter()
        .fold(0.0f64, |acc, g| acc.max(g.abs()));
    let mut dim_gap = 0.0f64;
    for theta in THICK_GRID {
        let d = dim_thick(theta)?.ok_or_else(|| Error::OutOfRange(format!("θ = {theta}")))?;
        dim_gap = dim_gap.max((d - (1.0 - theta)).abs());
    }
    for gamma in THIN_GRID {
        let d = dim_thin(gamma)?.ok_or_else(|| Error::OutOfRange(format!("γ = {gamma}")))?;
        dim_gap = dim_gap.max((d - (2.0 / gamma - 1.0)).abs());
    }
    let r = reps as u64;
    let reports = vec![
        TestReport::within("spectrum/min-freq-slope", min_slope, 2.0, 0.3, seed, r),
        TestReport::within("spectrum/max-freq-slope", max_slope, 1.0, 0.15, seed, r),
        TestReport::within("spectrum/parameters", param_gap, 0.0, 0.0, seed, r),
        TestReport::within("spectrum/dimension-formulas", dim_gap, 0.0, 1e-12, seed, r),
    ];
    Ok(SpectrumTable {
        t: grid.clone(),
        min_freq_mean,
        max_freq_mean,
        min_slope,
        min_slope_se,
        max_slope,
        max_slope_se,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!(matches!("nope".parse::<Experiment>(), Err(Error::UnknownExperiment(_))));
    }

    #[test]
    fn geometric_grid_endpoints() {
        let g = geometric_grid(0.005, 0.05, 10).unwrap();
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], 0.005);
        assert_eq!(g[9], 0.05);
        assert!((g[1] / g[0] - g[5] / g[4]).abs() < 1e-12);
        assert!(geometric_grid(0.0, 1.0, 3).is_err());
    }

    #[test]
    fn zero_replicates_rejected() {
        let mut spec = ExperimentSpec::new(Experiment::KestenStigum);
        spec.replicates = 0;
        assert!(run_experiment(&spec, 1).is_err());
        let mut spec = ExperimentSpec::new(Experiment::Theorem1);
        spec.h = 0.3;
        assert!(run_experiment(&spec, 1).is_err());
    }

    #[test]
    fn compensator_of_constant_profile() {
        let profile = LocalTimeProfile::new(0.1, vec![4.0; 11]).unwrap();
        // one merge at 0.55, one below the window: N = 2 on (0.5, 0.55], 3 above
        let levels = [Some(0.55), Some(0.2)];
        let c = merge_compensator(&profile, &levels, 0.5, 0.6).unwrap();
        assert!((c - (1.0 * 0.05 + 3.0 * 0.05)).abs() < 1e-12);
    }
}
