//! Deterministic helpers shared by the test suites and benchmarks.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::transform::SpinCoeffs;

/// A reproducible RNG; ChaCha8 keeps streams identical across platforms.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random bandlimited coefficients with standard-normal real and imaginary
/// parts, zero below ℓ = |spin| as required.
pub fn random_coeffs<R: Rng + ?Sized>(
    rng: &mut R,
    spin: i32,
    bandwidth: usize,
    channels: usize,
) -> SpinCoeffs {
    let mut data = Array2::zeros((channels, bandwidth * bandwidth));
    for ch in 0..channels {
        for l in (spin.unsigned_abs() as usize)..bandwidth {
            for m in -(l as i64)..=(l as i64) {
                let idx = l * l + (m + l as i64) as usize;
                data[[ch, idx]] = Complex64::new(normal(rng), normal(rng));
            }
        }
    }
    SpinCoeffs::from_array(spin, bandwidth, data).expect("shape is valid")
}

/// Standard normal via Box-Muller; avoids a rand_distr dependency.
pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
