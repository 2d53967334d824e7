use crate::error::{invalid, Error, Result};

use super::sample::{lattice_size, LatticeExcursion, PathKind};

/// Local time of a lattice path at each site, `z[k] ≈ Z_{kh}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTimeProfile {
    h: f64,
    z: Vec<f64>,
    /// `cum[k] = ∫_0^{kh} 4/z`, defined up to the highest site the integrand
    /// stays finite on.
    cum: Vec<f64>,
}

impl LocalTimeProfile {
    /// Profile from explicit values on the grid `0, h, 2h, ...`.
    pub fn new(h: f64, z: Vec<f64>) -> Result<Self> {
        lattice_size(h)?;
        if z.len() < 2 {
            return invalid("profile needs at least two levels");
        }
        if z.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return invalid("local times must be finite and nonnegative");
        }
        let cum = cumulative(h, &z);
        Ok(Self { h, z, cum })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    /// Local time at site `k`, zero above the profile.
    pub fn at_site(&self, k: i32) -> f64 {
        usize::try_from(k).ok().and_then(|k| self.z.get(k)).copied().unwrap_or(0.0)
    }

    /// Local time at level `x`, by linear interpolation between sites.
    pub fn at_level(&self, x: f64) -> f64 {
        let s = x / self.h;
        let k = s.floor();
        let frac = s - k;
        let k = k as i32;
        (1.0 - frac) * self.at_site(k) + frac * self.at_site(k + 1)
    }

    /// Highest level where `∫_0^s 4/z` is finite.
    pub fn integrable_top(&self) -> f64 {
        (self.cum.len() - 1) as f64 * self.h
    }

    /// `I(s) = ∫_0^s 4/z du`, piecewise linear between sites.
    pub fn integral_from_zero(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::OutOfRange(format!("level {s} is negative")));
        }
        let pos = s / self.h;
        let k = pos.floor() as usize;
        if k + 1 >= self.cum.len() {
            if k + 1 == self.cum.len() && pos - k as f64 <= 1e-9 {
                return Ok(self.cum[k]);
            }
            return Err(Error::OutOfRange(format!(
                "level {s} beyond the integrable range {}",
                self.integrable_top()
            )));
        }
        let frac = pos - k as f64;
        Ok(self.cum[k] + frac * (self.cum[k + 1] - self.cum[k]))
    }

    /// `∫_a^b 4/z du` for `a ≤ b`.
    pub fn integral_between(&self, a: f64, b: f64) -> Result<f64> {
        Ok(self.integral_from_zero(b)? - self.integral_from_zero(a)?)
    }

    /// Level `s` with `I(s) = t`, the inverse of [`Self::integral_from_zero`].
    pub fn inverse_integral(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::OutOfRange(format!("time {t} is negative")));
        }
        let last = *self.cum.last().unwrap();
        if t > last {
            return Err(Error::OutOfRange(format!("time {t} beyond the total integral {last}")));
        }
        // first cell whose right end reaches t
        let k = self.cum.partition_point(|&c| c < t);
        if k == 0 {
            return Ok(0.0);
        }
        let (lo, hi) = (self.cum[k - 1], self.cum[k]);
        let frac = if hi > lo { (t - lo) / (hi - lo) } else { 0.0 };
        Ok(((k - 1) as f64 + frac) * self.h)
    }
}

/// Cell `[kh, (k+1)h]` carries the integrand `4 / z_mid` with `z_mid` the
/// average of the endpoint values; cells stop at the first site with zero
/// local time above the base.
fn cumulative(h: f64, z: &[f64]) -> Vec<f64> {
    let mut cum = vec![0.0];
    for k in 0..z.len() - 1 {
        if z[k + 1] <= 0.0 {
            break;
        }
        let mid = 0.5 * (z[k] + z[k + 1]);
        cum.push(cum[k] + 4.0 * h / mid);
    }
    cum
}

/// Local time profile: `z[k] = h · (entries at site k)` for `k ≥ 1`; at 0,
/// `2h · (returns to 0)` for a reflected path and 0 for an excursion.
pub fn local_time_profile(path: &LatticeExcursion) -> LocalTimeProfile {
    let h = path.h();
    let ceiling = path.ceiling();
    let mut counts = vec![0u64; ceiling as usize + 1];
    for &v in path.values() {
        if v <= ceiling {
            counts[v as usize] += 1;
        }
    }
    let mut z: Vec<f64> = counts.iter().map(|&c| c as f64 * h).collect();
    z[0] = match path.kind() {
        PathKind::ConditionedExcursion => 0.0,
        PathKind::ReflectedForest => 2.0 * h * (counts[0] - 1) as f64,
    };
    let cum = cumulative(h, &z);
    LocalTimeProfile { h, z, cum }
}

/// `U(t) = sup{s : ∫_s^1 4/z du > t}`; equals 1 at `t = 0` and 0 once `t`
/// exceeds the whole integral.
pub fn time_change_u(profile: &LocalTimeProfile, t: f64) -> Result<f64> {
    let total = profile.integral_from_zero(1.0)?;
    if !(t >= 0.0) {
        return invalid(format!("time {t} is negative"));
    }
    if t >= total {
        return Ok(0.0);
    }
    profile.inverse_integral(total - t)
}

/// `∫_s^1 4/z du`, the time at which level `s` is reached going down from 1.
pub fn level_to_time(profile: &LocalTimeProfile, s: f64) -> Result<f64> {
    profile.integral_between(s, 1.0)
}

/// `V(t) = inf{s : ∫_0^s 4/z du > t}`.
pub fn time_change_v(profile: &LocalTimeProfile, t: f64) -> Result<f64> {
    profile.inverse_integral(t)
}
