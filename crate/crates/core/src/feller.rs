//! Euler–Maruyama scheme for the Feller diffusion `dZ = σ √Z dW`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};

/// Values of `Z` at the requested increasing `levels`, started from `z0` at
/// level 0. Negative steps are truncated at 0, which is absorbing.
pub fn feller_euler_maruyama<R: Rng + ?Sized>(
    z0: f64,
    sigma: f64,
    levels: &[f64],
    dt: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(z0 >= 0.0 && sigma > 0.0 && dt > 0.0) {
        return invalid("need z0 ≥ 0, σ > 0 and dt > 0");
    }
    if levels.iter().any(|l| !(*l >= 0.0)) || levels.windows(2).any(|w| w[1] < w[0]) {
        return invalid("levels must be nonnegative and increasing");
    }
    let mut out = Vec::with_capacity(levels.len());
    let mut z = z0;
    let mut x = 0.0;
    for &target in levels {
        while x < target - 1e-12 {
            let step = dt.min(target - x);
            if z > 0.0 {
                let g: f64 = rng.sample(StandardNormal);
                z = (z + sigma * (z * step).sqrt() * g).max(0.0);
            }
            x += step;
        }
        out.push(z);
    }
    Ok(out)
}
