//! Per-replicate random streams.
//!
//! Every stream is keyed by `(master seed, stream label, replicate index)`, so a
//! replicate draws the same numbers no matter which worker runs it or in which
//! order replicates are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn fnv1a(label: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325_u64;
    for byte in label.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Stream for one replicate of one experiment component.
pub fn replicate_rng(master_seed: u64, label: &str, replicate: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed ^ fnv1a(label));
    rng.set_stream(replicate);
    rng
}

/// Exponential variate with the given rate, by inversion.
#[inline]
pub fn exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

/// Uniform on (0, 1].
#[inline]
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Geometric variate on {1, 2, ...} with success probability `p`.
pub fn geometric<R: Rng + ?Sized>(rng: &mut R, p: f64) -> u64 {
    if p >= 1.0 {
        return 1;
    }
    let u = open_unit(rng);
    1 + (u.ln() / (1.0 - p).ln()).floor() as u64
}

/// Poisson variate by sequential inversion; intended for small means.
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
        if p == 0.0 && cdf < u {
            break;
        }
    }
    k
}
