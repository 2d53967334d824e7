use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::rng::open_unit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathKind {
    /// Excursion from 0 conditioned to reach level 1.
    ConditionedExcursion,
    /// Reflected walk stopped when the local time at 0 reaches 1.
    ReflectedForest,
}

/// A lattice path with space step `h` and time step `h²`.
///
/// `values` are sites (position divided by `h`). Excursions strictly above
/// `ceiling` are stored collapsed: a single entry `ceiling + H` at the peak,
/// with the path returning to `ceiling` at the next entry. Nothing below the
/// ceiling depends on the shape of such an excursion, only on its height.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeExcursion {
    h: f64,
    values: Vec<i32>,
    kind: PathKind,
    ceiling: i32,
}

/// Returns `M` when `h = 1/M` for an integer `M ≥ 2`.
pub fn lattice_size(h: f64) -> Result<i32> {
    if !(h > 0.0 && h <= 0.5) {
        return invalid(format!("space step {h} must lie in (0, 1/2]"));
    }
    let m = (1.0 / h).round();
    if (m * h - 1.0).abs() > 1e-9 || m > 1e6 {
        return invalid(format!("space step {h} is not of the form 1/M"));
    }
    Ok(m as i32)
}

impl LatticeExcursion {
    /// Checks the lattice step rule and the invariants of `kind`.
    pub fn new(h: f64, values: Vec<i32>, kind: PathKind, ceiling: i32) -> Result<Self> {
        let m = lattice_size(h)?;
        if ceiling < m {
            return invalid("ceiling must be at least 1/h");
        }
        if values.len() < 3 {
            return invalid("path too short");
        }
        if values[0] != 0 || *values.last().unwrap() != 0 {
            return invalid("path must start and end at 0");
        }
        for w in values.windows(2) {
            let (a, b) = (w[0], w[1]);
            let ok = (a - b).abs() == 1 || (a == ceiling && b > ceiling + 1) || (b == ceiling && a > ceiling + 1);
            if !ok {
                return invalid(format!("illegal step {a} -> {b}"));
            }
        }
        match kind {
            PathKind::ConditionedExcursion => {
                if values[1..values.len() - 1].iter().any(|&v| v <= 0) {
                    return invalid("excursion must stay positive between its endpoints");
                }
                if values.iter().copied().max().unwrap() < m {
                    return invalid("excursion does not reach level 1");
                }
            }
            PathKind::ReflectedForest => {
                if values.iter().any(|&v| v < 0) {
                    return invalid("reflected path must be nonnegative");
                }
            }
        }
        Ok(Self {
            h,
            values,
            kind,
            ceiling,
        })
    }

    /// Builds a path from sites, inferring the kind and the collapse ceiling.
    pub fn infer(h: f64, values: Vec<i32>) -> Result<Self> {
        let m = lattice_size(h)?;
        let interior_positive = values.len() > 2 && values[1..values.len() - 1].iter().all(|&v| v > 0);
        let kind = if interior_positive {
            PathKind::ConditionedExcursion
        } else {
            PathKind::ReflectedForest
        };
        // without a collapse jump the ceiling is 1/h, unless the path climbs
        // further than a height-one collapsed peak could
        let jump = values.windows(2).find(|w| (w[0] - w[1]).abs() > 1).map(|w| w[0].min(w[1]));
        let top = values.iter().copied().max().unwrap_or(0);
        let ceiling = jump.unwrap_or(if top <= m + 1 { m } else { top });
        Self::new(h, values, kind, ceiling)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn values(&self) -> &[i32] {
        &self.values
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    pub fn ceiling(&self) -> i32 {
        self.ceiling
    }

    /// Site of level 1.
    pub fn top_site(&self) -> i32 {
        (1.0 / self.h).round() as i32
    }

    pub fn max_site(&self) -> i32 {
        self.values.iter().copied().max().unwrap_or(0)
    }

    /// Time spent at or below the ceiling.
    pub fn duration(&self) -> f64 {
        let steps = self.values.iter().filter(|&&v| v <= self.ceiling).count() - 1;
        steps as f64 * self.h * self.h
    }
}

/// Height above the ceiling of a collapsed excursion started by an up-step
/// from it: gambler's ruin gives `P(H ≥ j) = 1/j`.
fn collapsed_height<R: Rng + ?Sized>(rng: &mut R) -> i64 {
    let h = (1.0 / open_unit(rng)).floor();
    h.min(1e15) as i64
}

/// Collapsed peak entry, saturating at the largest storable site.
fn collapsed_peak<R: Rng + ?Sized>(ceiling: i32, rng: &mut R) -> i32 {
    (i64::from(ceiling) + collapsed_height(rng)).min(i64::from(i32::MAX)) as i32
}

/// Simple random walk from `from` until it is absorbed at 0, collapsing
/// excursions above `ceiling`.
fn walk_to_zero<R: Rng + ?Sized>(values: &mut Vec<i32>, from: i32, ceiling: i32, rng: &mut R) {
    let mut x = from;
    // 64 steps per random word
    let mut bits = 0u64;
    let mut left = 0u32;
    while x > 0 {
        if left == 0 {
            bits = rng.random();
            left = 64;
        }
        let up = (bits & 1) as i32;
        bits >>= 1;
        left -= 1;
        if x == ceiling && up == 1 {
            values.push(collapsed_peak(ceiling, rng));
            values.push(ceiling);
            continue;
        }
        x += 2 * up - 1;
        values.push(x);
    }
}

/// Up-probability from site `k` of the walk conditioned to hit a high site
/// before 0.
pub(crate) fn up_probability(k: i32) -> f64 {
    (k + 1) as f64 / (2 * k) as f64
}

/// Lattice excursion conditioned to reach level 1.
///
/// From site 1 the walk is the Doob transform of simple random walk by the
/// harmonic function `x`, stepping up from `k` with probability `(k+1)/(2k)`,
/// until it hits `M = 1/h`; from there it is simple random walk killed at 0.
pub fn sample_conditioned_excursion<R: Rng + ?Sized>(h: f64, rng: &mut R) -> Result<LatticeExcursion> {
    let m = lattice_size(h)?;
    let mut values = Vec::with_capacity((3 * m * m) as usize);
    values.push(0);
    // up-step thresholds on the scale of a random u64
    let thresholds: Vec<u64> = (0..m)
        .map(|k| if k == 0 { 0 } else { (up_probability(k).min(1.0) * u64::MAX as f64) as u64 })
        .collect();
    let mut x = 1i32;
    values.push(x);
    while x < m {
        let up = (rng.random::<u64>() <= thresholds[x as usize]) as i32;
        x += 2 * up - 1;
        values.push(x);
    }
    walk_to_zero(&mut values, m, m, rng);
    Ok(LatticeExcursion {
        h,
        values,
        kind: PathKind::ConditionedExcursion,
        ceiling: m,
    })
}

/// Reflected walk from 0 made of `⌈1/(2h)⌉` excursions from 0, so that the
/// local time at 0 is 1. Each excursion starts with a forced step to 1.
pub fn sample_reflected_forest<R: Rng + ?Sized>(h: f64, rng: &mut R) -> Result<LatticeExcursion> {
    let m = lattice_size(h)?;
    let count = (1.0 / (2.0 * h)).ceil() as usize;
    let mut values = Vec::with_capacity(count * m as usize);
    values.push(0);
    for _ in 0..count {
        values.push(1);
        walk_to_zero(&mut values, 1, m, rng);
    }
    Ok(LatticeExcursion {
        h,
        values,
        kind: PathKind::ReflectedForest,
        ceiling: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replicate_rng;

    /// Sums the probabilities of all walk paths from `x` that hit `m` before
    /// 0 within `depth` steps.
    fn enumerate_hits(x: i32, m: i32, depth: u32) -> f64 {
        if x == m {
            return 1.0;
        }
        if x == 0 || depth == 0 {
            return 0.0;
        }
        0.5 * (enumerate_hits(x + 1, m, depth - 1) + enumerate_hits(x - 1, m, depth - 1))
    }

    #[test]
    fn transform_matches_enumerated_conditioning() {
        let m = 3;
        for k in 1..m {
            let up = 0.5 * enumerate_hits(k + 1, m, 60) / enumerate_hits(k, m, 60);
            assert!((up - up_probability(k)).abs() < 1e-9);
        }
        assert_eq!(up_probability(1), 1.0);
        assert_eq!(up_probability(2), 0.75);
    }

    #[test]
    fn conditioned_paths_are_valid() {
        let mut rng = replicate_rng(1, "sample-test", 0);
        for _ in 0..20 {
            let p = sample_conditioned_excursion(1.0 / 50.0, &mut rng).unwrap();
            let again = LatticeExcursion::new(p.h, p.values.clone(), p.kind, p.ceiling).unwrap();
            assert_eq!(again, p);
            assert!(p.max_site() >= 50);
        }
    }

    #[test]
    fn forest_has_the_requested_returns() {
        let mut rng = replicate_rng(1, "sample-test", 1);
        let p = sample_reflected_forest(1.0 / 40.0, &mut rng).unwrap();
        let returns = p.values[1..].iter().filter(|&&v| v == 0).count();
        assert_eq!(returns, 20);
        LatticeExcursion::new(p.h, p.values.clone(), p.kind, p.ceiling).unwrap();
    }

    #[test]
    fn step_size_validation() {
        assert!(lattice_size(0.3).is_err());
        assert!(lattice_size(0.0).is_err());
        assert!(lattice_size(-0.5).is_err());
        assert_eq!(lattice_size(0.0025).unwrap(), 400);
        assert!(LatticeExcursion::new(0.5, vec![0, 2, 0], PathKind::ConditionedExcursion, 2).is_err());
        assert!(LatticeExcursion::new(0.5, vec![0, 1, 0], PathKind::ConditionedExcursion, 2).is_err());
        assert!(LatticeExcursion::new(0.5, vec![0, 1, 2, 1, 0], PathKind::ConditionedExcursion, 2).is_ok());
    }

    #[test]
    fn collapsed_heights_follow_the_ruin_law() {
        let mut rng = replicate_rng(3, "sample-test", 2);
        let n = 20_000;
        let hs: Vec<i64> = (0..n).map(|_| collapsed_height(&mut rng)).collect();
        for j in [1i64, 2, 4, 10] {
            let frac = hs.iter().filter(|&&x| x >= j).count() as f64 / n as f64;
            assert!((frac - 1.0 / j as f64).abs() < 0.015, "j={j} frac={frac}");
        }
    }
}
