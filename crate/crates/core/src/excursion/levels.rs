use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::kingman::LabeledPartition;

use super::sample::LatticeExcursion;

/// Visits of a path to a reference site and how they connect below it.
///
/// Visit `g` carries local time `h` at the reference level. Consecutive visits
/// `g`, `g+1` lie in the same excursion above site `s` exactly when
/// `dips[g] > s`; an excursion above the reference between them has dip equal
/// to the reference itself.
#[derive(Debug, Clone)]
pub(crate) struct Reference {
    pub r: i32,
    pub visits: Vec<usize>,
    pub dips: Vec<i32>,
    /// Peak of the excursion above `r` started right after the visit, or `r`.
    pub peaks: Vec<i32>,
    /// Rank of each visit by following peak, highest first, ties to the
    /// earlier visit; 1-based.
    pub ranks: Vec<usize>,
}

impl Reference {
    pub fn new(path: &LatticeExcursion, r: i32) -> Result<Self> {
        if r < 1 {
            return invalid("reference site must be positive");
        }
        let values = path.values();
        let mut visits = Vec::new();
        let mut dips = Vec::new();
        let mut peaks = Vec::new();
        let mut low = i32::MAX;
        let mut high = i32::MIN;
        for (i, &v) in values.iter().enumerate() {
            if v == r {
                if let Some(last) = peaks.last_mut() {
                    *last = high.max(r);
                    dips.push(low.min(r));
                }
                visits.push(i);
                peaks.push(r);
                low = i32::MAX;
                high = i32::MIN;
            } else if !visits.is_empty() {
                low = low.min(v);
                if low > r {
                    high = high.max(v);
                }
            }
        }
        if visits.is_empty() {
            return invalid(format!("path never visits site {r}"));
        }
        let mut order: Vec<usize> = (0..visits.len()).collect();
        order.sort_by(|&a, &b| peaks[b].cmp(&peaks[a]).then(a.cmp(&b)));
        let mut ranks = vec![0; visits.len()];
        for (pos, &g) in order.iter().enumerate() {
            ranks[g] = pos + 1;
        }
        Ok(Self {
            r,
            visits,
            dips,
            peaks,
            ranks,
        })
    }

    pub fn len(&self) -> usize {
        self.visits.len()
    }

    /// Number of excursions above `r` started from a visit.
    pub fn excursions_above(&self) -> usize {
        self.peaks.iter().filter(|&&p| p > self.r).count()
    }

    /// Runs of visits (inclusive ranges) forming the excursions above site `s`.
    pub fn runs_above(&self, s: i32) -> Vec<(usize, usize)> {
        let mut runs = Vec::new();
        let mut start = 0;
        for (g, &d) in self.dips.iter().enumerate() {
            if d <= s {
                runs.push((start, g));
                start = g + 1;
            }
        }
        runs.push((start, self.len() - 1));
        runs
    }

    pub fn count_above(&self, s: i32) -> usize {
        1 + self.dips.iter().filter(|&&d| d <= s).count()
    }

    /// Level at which each gap joins its neighbours, going down: uniform in
    /// the open cell `((d-1)h, dh)` below its dip `d`. Gaps through 0 never
    /// join.
    pub fn merge_levels<R: Rng + ?Sized>(&self, h: f64, rng: &mut R) -> Vec<Option<f64>> {
        self.dips
            .iter()
            .map(|&d| {
                let jitter: f64 = rng.random();
                (d >= 1).then(|| ((d - 1) as f64 + jitter.max(f64::MIN_POSITIVE)) * h)
            })
            .collect()
    }
}

/// Site whose excursions above correspond to "above level `u`".
pub(crate) fn site_of_level(u: f64, h: f64) -> i32 {
    (u / h + 1e-9).floor() as i32
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcursionRecord {
    pub start: usize,
    pub end: usize,
    /// Height of the excursion above its base level.
    pub height: f64,
    /// Local time the excursion accumulates at level 1.
    pub mass_at_1: f64,
}

/// Excursions above a level that reach level 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelDecomposition {
    pub u: f64,
    /// Ordered by height, highest first, ties to the earlier start.
    pub excursions: Vec<ExcursionRecord>,
    /// `phi[i]` is the index in `excursions` of the one containing the
    /// `(i+1)`-th highest excursion above level 1.
    pub phi: Vec<usize>,
}

impl LevelDecomposition {
    pub fn len(&self) -> usize {
        self.excursions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.excursions.is_empty()
    }
}

fn top_reference(path: &LatticeExcursion) -> Result<Reference> {
    let r = path.top_site();
    if path.max_site() < r {
        return invalid("path does not reach level 1");
    }
    Reference::new(path, r)
}

/// Decomposition of the part of `path` above `u` into excursions reaching 1.
pub fn decompose_above(path: &LatticeExcursion, u: f64) -> Result<LevelDecomposition> {
    if !(0.0..1.0).contains(&u) {
        return invalid(format!("level {u} outside [0, 1)"));
    }
    let reference = top_reference(path)?;
    decompose_with(path, &reference, u)
}

pub(crate) fn decompose_with(path: &LatticeExcursion, reference: &Reference, u: f64) -> Result<LevelDecomposition> {
    let h = path.h();
    let s = site_of_level(u, h);
    let values = path.values();
    let runs = reference.runs_above(s);
    let mut records = Vec::with_capacity(runs.len());
    let mut owner = vec![0usize; reference.len()];
    for (b, &(a, z)) in runs.iter().enumerate() {
        let mut start = reference.visits[a];
        while start > 0 && values[start - 1] > s {
            start -= 1;
        }
        let mut end = reference.visits[z];
        while end + 1 < values.len() && values[end + 1] > s {
            end += 1;
        }
        let peak = reference.peaks[a..=z].iter().copied().max().unwrap();
        records.push((
            peak,
            ExcursionRecord {
                start,
                end,
                height: (peak - s) as f64 * h,
                mass_at_1: (z - a + 1) as f64 * h,
            },
        ));
        owner[a..=z].fill(b);
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&x, &y| records[y].0.cmp(&records[x].0).then(records[x].1.start.cmp(&records[y].1.start)));
    let mut position = vec![0; records.len()];
    for (pos, &b) in order.iter().enumerate() {
        position[b] = pos;
    }
    let tops = reference.excursions_above();
    let mut phi = vec![0; tops];
    for (g, &rank) in reference.ranks.iter().enumerate() {
        if rank <= tops {
            phi[rank - 1] = position[owner[g]];
        }
    }
    let excursions = order.into_iter().map(|b| records[b].1.clone()).collect();
    Ok(LevelDecomposition { u, excursions, phi })
}

/// Partition of the `m_track` highest excursions above level 1 (all of them
/// if fewer exist) by the excursion above `u` containing them.
pub fn partition_at_level(path: &LatticeExcursion, u: f64, m_track: usize) -> Result<LabeledPartition> {
    let decomposition = decompose_above(path, u)?;
    partition_from_phi(&decomposition.phi, m_track)
}

pub(crate) fn partition_from_phi(phi: &[usize], m_track: usize) -> Result<LabeledPartition> {
    let m = m_track.min(phi.len());
    if m == 0 {
        return invalid("no excursions above the reference level to label");
    }
    let groups = phi[..m].iter().copied().max().unwrap() + 1;
    let mut blocks = vec![Vec::new(); groups];
    for (i, &k) in phi[..m].iter().enumerate() {
        blocks[k].push(i + 1);
    }
    LabeledPartition::new(m, blocks.into_iter().filter(|b| !b.is_empty()).collect())
}

/// Number of excursions above `1 - e^{-t}` reaching level 1, for each `t`.
pub fn reduced_tree_counts(path: &LatticeExcursion, t_grid: &[f64]) -> Result<Vec<usize>> {
    if t_grid.iter().any(|t| !(*t >= 0.0)) {
        return invalid("times must be nonnegative");
    }
    if t_grid.windows(2).any(|w| w[1] < w[0]) {
        return invalid("time grid must be increasing");
    }
    let reference = top_reference(path)?;
    let h = path.h();
    Ok(t_grid
        .iter()
        .map(|&t| {
            let s = site_of_level(1.0 - (-t).exp(), h).min(reference.r - 1);
            reference.count_above(s)
        })
        .collect())
}

/// Excursions above `1 - u` reaching level 1 whose local time at 1 exceeds
/// `x`.
pub fn heavy_count(path: &LatticeExcursion, u: f64, x: f64) -> Result<usize> {
    if !(u > 0.0 && u < 1.0) {
        return invalid(format!("u = {u} outside (0, 1)"));
    }
    if !(x >= 0.0) {
        return invalid("threshold must be nonnegative");
    }
    let reference = top_reference(path)?;
    let s = site_of_level(1.0 - u, path.h());
    let h = path.h();
    Ok(reference
        .runs_above(s)
        .into_iter()
        .filter(|&(a, z)| (z - a + 1) as f64 * h > x)
        .count())
}
