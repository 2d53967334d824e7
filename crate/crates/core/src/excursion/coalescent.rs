use std::collections::BTreeSet;

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::kingman::{CoalescentTrajectory, LabeledPartition, MergeEvent};

use super::levels::{decompose_with, partition_from_phi, site_of_level, Reference};
use super::profile::{local_time_profile, LocalTimeProfile};
use super::sample::{LatticeExcursion, PathKind};

/// Coalescent read off a path below a reference site, with its time horizon.
#[derive(Debug, Clone)]
pub struct ExcursionCoalescent {
    pub trajectory: CoalescentTrajectory,
    pub profile: LocalTimeProfile,
    /// Reference level the atoms sit on.
    pub reference_level: f64,
    /// Time at which level 0 is reached; infinite for a conditioned excursion.
    pub horizon: f64,
}

/// Scans levels down from site `r`, turning every junction of two excursions
/// into a merge event at time `I(rh) - I(level)`.
///
/// Atoms are the visits to `r` (each carries local time `h` there) and are
/// labelled by the rank of the excursion above `r` that follows them. Within a
/// lattice cell the junction level is drawn uniformly, which orders junctions
/// sharing a cell at random instead of by path position.
pub(crate) fn scan_down(
    profile: &LocalTimeProfile,
    reference: &Reference,
    levels: &[Option<f64>],
) -> Result<CoalescentTrajectory> {
    let top = profile.integral_from_zero(reference.r as f64 * profile.h())?;
    let mut gaps: Vec<(usize, f64)> = levels
        .iter()
        .enumerate()
        .filter_map(|(g, l)| l.map(|l| (g, l)))
        .collect();
    gaps.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let n = reference.len();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut id: Vec<usize> = reference.ranks.clone();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut events = Vec::with_capacity(gaps.len());
    let mut last = 0.0;
    for (g, level) in gaps {
        let a = find(&mut parent, g);
        let b = find(&mut parent, g + 1);
        let (keep, gone) = if id[a] < id[b] { (a, b) } else { (b, a) };
        let mut time = top - profile.integral_from_zero(level)?;
        if time <= last {
            time = f64::from_bits(last.to_bits() + 1);
        }
        last = time;
        events.push(MergeEvent {
            time,
            pair: (id[keep], id[gone]),
        });
        parent[gone] = keep;
        id[gone] = id[keep];
    }
    CoalescentTrajectory::new(n, events)
}

/// The coalescent of excursions above a decreasing level that reach level 1,
/// run in the time scale `t = ∫_u^1 4/Z`.
pub fn excursion_coalescent<R: Rng + ?Sized>(path: &LatticeExcursion, rng: &mut R) -> Result<ExcursionCoalescent> {
    if path.kind() != PathKind::ConditionedExcursion {
        return invalid("excursion coalescent needs a conditioned excursion");
    }
    let r = path.top_site();
    if path.max_site() < r {
        return invalid("path does not reach level 1");
    }
    let profile = local_time_profile(path);
    let reference = Reference::new(path, r)?;
    let levels = reference.merge_levels(path.h(), rng);
    let trajectory = scan_down(&profile, &reference, &levels)?;
    Ok(ExcursionCoalescent {
        trajectory,
        profile,
        reference_level: 1.0,
        horizon: f64::INFINITY,
    })
}

/// Reference site for the reflected construction run for time `horizon`:
/// the lattice site just below `V(T)`.
fn hat_reference_site(profile: &LocalTimeProfile, horizon: f64) -> Result<i32> {
    if !(horizon > 0.0) {
        return invalid("horizon must be positive");
    }
    let v = profile.inverse_integral(horizon)?;
    let r = site_of_level(v, profile.h());
    if r < 1 {
        return Err(Error::OutOfRange(format!("V({horizon}) = {v} is below the first lattice site")));
    }
    Ok(r)
}

/// Coalescent of excursions of a reflected forest above a decreasing level
/// that reach `V(T)`, in the time scale `t = I(V(T)) - I(level)`.
///
/// The reference level is rounded down to the lattice, so the returned
/// horizon `I(rh)` is at most `T`.
pub fn hat_coalescent<R: Rng + ?Sized>(
    path: &LatticeExcursion,
    horizon: f64,
    rng: &mut R,
) -> Result<ExcursionCoalescent> {
    if path.kind() != PathKind::ReflectedForest {
        return invalid("hat coalescent needs a reflected forest");
    }
    let profile = local_time_profile(path);
    let r = hat_reference_site(&profile, horizon)?;
    let reference = Reference::new(path, r)?;
    let levels = reference.merge_levels(path.h(), rng);
    let trajectory = scan_down(&profile, &reference, &levels)?;
    let h = path.h();
    Ok(ExcursionCoalescent {
        horizon: profile.integral_from_zero(r as f64 * h)?,
        trajectory,
        profile,
        reference_level: r as f64 * h,
    })
}

/// Partition at time `t` of the `m_track` highest excursions above `V(T)`,
/// grouped by the excursion above `V(T - t)` containing them.
pub fn hat_partition(path: &LatticeExcursion, horizon: f64, t: f64, m_track: usize) -> Result<LabeledPartition> {
    if path.kind() != PathKind::ReflectedForest {
        return invalid("hat partition needs a reflected forest");
    }
    if !(0.0..=horizon).contains(&t) {
        return invalid(format!("time {t} outside [0, {horizon}]"));
    }
    let profile = local_time_profile(path);
    let r = hat_reference_site(&profile, horizon)?;
    let h = path.h();
    let reference = Reference::new(path, r)?;
    let top = profile.integral_from_zero(r as f64 * h)?;
    let s = if t == 0.0 {
        r
    } else {
        site_of_level(profile.inverse_integral((top - t).max(0.0))?, h).min(r)
    };
    if s == r {
        let tops = reference.excursions_above();
        return partition_from_phi(&(0..tops).collect::<Vec<_>>(), m_track);
    }
    // the decomposition is relative to the reference site r
    let decomposition = decompose_with(path, &reference, s as f64 * h)?;
    partition_from_phi(&decomposition.phi, m_track)
}

/// One split of an excursion as the level rises.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitEvent {
    pub level: f64,
    /// Height rank of the part that keeps the higher top.
    pub survivor: usize,
    /// Height rank of the new part, after the split; ranks from here up shift
    /// by one.
    pub new_rank: usize,
}

/// Splits of excursions reaching level 1 as the level rises from `u1` to
/// `u2`, with ranks by height among the excursions present just after each
/// split.
pub fn lookdown_split_events<R: Rng + ?Sized>(
    path: &LatticeExcursion,
    u1: f64,
    u2: f64,
    rng: &mut R,
) -> Result<Vec<SplitEvent>> {
    if !(0.0 <= u1 && u1 < u2 && u2 < 1.0) {
        return invalid(format!("need 0 ≤ u1 < u2 < 1, got {u1}, {u2}"));
    }
    if path.kind() != PathKind::ConditionedExcursion {
        return invalid("lookdown events need a conditioned excursion");
    }
    let r = path.top_site();
    if path.max_site() < r {
        return invalid("path does not reach level 1");
    }
    let reference = Reference::new(path, r)?;
    let levels = reference.merge_levels(path.h(), rng);
    Ok(splits_between(&reference, &levels, u1, u2))
}

pub(crate) fn splits_between(reference: &Reference, levels: &[Option<f64>], u1: f64, u2: f64) -> Vec<SplitEvent> {
    let n = reference.len();
    // gaps currently separating two excursions
    let mut cuts: BTreeSet<usize> = levels
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_none_or(|l| l <= u1))
        .map(|(g, _)| g)
        .collect();
    let min_rank = |a: usize, b: usize| reference.ranks[a..=b].iter().copied().min().unwrap();
    let mut keys: Vec<usize> = Vec::new();
    let mut start = 0;
    for &g in &cuts {
        keys.push(min_rank(start, g));
        start = g + 1;
    }
    keys.push(min_rank(start, n - 1));
    keys.sort_unstable();

    let mut pending: Vec<(usize, f64)> = levels
        .iter()
        .enumerate()
        .filter_map(|(g, l)| l.filter(|&l| l > u1 && l <= u2).map(|l| (g, l)))
        .collect();
    pending.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    let mut events = Vec::with_capacity(pending.len());
    for (g, level) in pending {
        let lo = cuts.range(..g).next_back().map_or(0, |&c| c + 1);
        let hi = cuts.range(g..).next().copied().unwrap_or(n - 1);
        let left = min_rank(lo, g);
        let right = min_rank(g + 1, hi);
        let (survivor_key, new_key) = if left < right { (left, right) } else { (right, left) };
        let pos = keys.partition_point(|&k| k < new_key);
        keys.insert(pos, new_key);
        let survivor = keys.partition_point(|&k| k < survivor_key) + 1;
        events.push(SplitEvent {
            level,
            survivor,
            new_rank: pos + 1,
        });
        cuts.insert(g);
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::excursion::levels::decompose_above;
    use crate::excursion::profile::level_to_time;
    use crate::excursion::sample::{sample_conditioned_excursion, sample_reflected_forest};
    use crate::kingman::block_count;
    use crate::rng::replicate_rng;

    #[test]
    fn conditioned_trajectory_is_complete_and_consistent() {
        let mut rng = replicate_rng(11, "coal-test", 0);
        let path = sample_conditioned_excursion(1.0 / 100.0, &mut rng).unwrap();
        let ec = excursion_coalescent(&path, &mut rng).unwrap();
        assert!(ec.trajectory.is_complete());
        let z1 = ec.profile.at_site(100);
        assert!((ec.trajectory.n() as f64 * 0.01 - z1).abs() < 1e-9);
        // at a lattice level the blocks are exactly the excursions above it
        for k in [20, 50, 90] {
            let u = k as f64 / 100.0;
            let t = level_to_time(&ec.profile, u).unwrap();
            let d = decompose_above(&path, u).unwrap();
            assert_eq!(block_count(&ec.trajectory, t), d.len());
            let mut replay = ec.trajectory.replay();
            replay.advance_to(t);
            let mut from_traj: Vec<f64> = replay.frequencies().masses().to_vec();
            let mut from_path: Vec<f64> = d.excursions.iter().map(|e| e.mass_at_1 / z1).collect();
            from_traj.sort_by(f64::total_cmp);
            from_path.sort_by(f64::total_cmp);
            for (a, b) in from_traj.iter().zip(&from_path) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn hat_trajectory_respects_horizon() {
        let mut rng = replicate_rng(11, "coal-test", 1);
        let path = sample_reflected_forest(1.0 / 100.0, &mut rng).unwrap();
        let ec = hat_coalescent(&path, 0.5, &mut rng).unwrap();
        assert!(ec.horizon <= 0.5 + 1e-12);
        assert!(ec.trajectory.events().iter().all(|e| e.time <= ec.horizon));
        let p0 = hat_partition(&path, 0.5, 0.0, 64).unwrap();
        assert_eq!(p0, LabeledPartition::singletons(p0.n()));
        let p_end = hat_partition(&path, 0.5, 0.5, 64).unwrap();
        assert!(p_end.is_coarser_than(&p0));
    }

    #[test]
    fn lookdown_counts_and_shift_rule() {
        let mut rng = replicate_rng(11, "coal-test", 2);
        for _ in 0..5 {
            let path = sample_conditioned_excursion(1.0 / 100.0, &mut rng).unwrap();
            let (u1, u2) = (0.3, 0.8);
            let events = lookdown_split_events(&path, u1, u2, &mut rng).unwrap();
            let n1 = decompose_above(&path, u1).unwrap().len();
            let n2 = decompose_above(&path, u2).unwrap().len();
            assert_eq!(events.len(), n2 - n1);
            let mut count = n1;
            for e in &events {
                count += 1;
                assert!(e.survivor < e.new_rank && e.new_rank <= count);
                assert!(e.level > u1 && e.level <= u2);
            }
        }
    }
}
