//! Seeded randomness shared by every Monte Carlo driver.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// The generator used everywhere; recorded in run reports.
pub type TrialRng = ChaCha8Rng;

pub const RNG_DESCRIPTION: &str = "ChaCha8 (rand_chacha 0.9, seed_from_u64); trial t uses seed + t (wrapping)";

pub fn rng_from_seed(seed: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent substream for trial `trial` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial))
}

/// Haar-distributed `d x d` unitary (QR of a complex Ginibre matrix with the
/// phases of `R`'s diagonal divided out).
pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DMatrix<Complex64> {
    let ginibre = DMatrix::from_fn(d, d, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) / std::f64::consts::SQRT_2
    });
    let qr = ginibre.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let diag = r[(j, j)];
        let phase = if diag.norm() > 0.0 {
            diag / diag.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Complex matrix with independent entries uniform in the unit square.
pub fn random_complex_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = rng_from_seed(11);
        for d in 1..7 {
            let u = haar_unitary(&mut rng, d);
            let err = crate::linear_optics::unitarity_deviation(&u);
            assert!(err < 1e-12, "d={d} err={err}");
        }
    }

    #[test]
    fn trial_streams_are_reproducible() {
        let a: u64 = trial_rng(5, 3).random();
        let b: u64 = trial_rng(5, 3).random();
        let c: u64 = trial_rng(5, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
