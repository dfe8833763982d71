//! Matrix permanents: exact Glynn/Gray-code evaluation, a permutation-sum
//! oracle, and Gurvits' randomized additive estimator.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::random::rng_from_seed;

pub type DenseMatrix = DMatrix<Complex64>;

pub const MAX_EXACT: usize = 20;
pub const MAX_BRUTEFORCE: usize = 8;

/// Hoeffding constant in the Gurvits sample count `ceil(c ln(2/δ) / ε²)`.
pub const GURVITS_HOEFFDING_C: f64 = 2.0;

fn require_square(a: &DenseMatrix) -> Result<usize> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(a.nrows())
}

/// Compensated complex accumulator.
#[derive(Default, Clone, Copy)]
struct KahanSum {
    sum: Complex64,
    carry: Complex64,
}

impl KahanSum {
    fn add(&mut self, x: Complex64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Exact permanent by Glynn's formula with Gray-code ordering of the sign
/// vectors. `Per` of the empty matrix is 1.
pub fn permanent_exact(a: &DenseMatrix) -> Result<Complex64> {
    let n = require_square(a)?;
    if n > MAX_EXACT {
        return Err(Error::TooLarge(format!("{n}x{n} permanent (limit {MAX_EXACT})")));
    }
    if n == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    if n == 1 {
        return Ok(a[(0, 0)]);
    }

    // column sums Σ_i δ_i a_ij with δ = (1, 1, ..., 1) initially
    let mut col: Vec<Complex64> = (0..n).map(|j| (0..n).map(|i| a[(i, j)]).sum()).collect();
    let mut delta = vec![1i8; n];
    let mut sign = 1.0;
    let mut acc = KahanSum::default();
    acc.add(col.iter().product());

    let terms: u64 = 1 << (n - 1);
    for k in 1..terms {
        // flip the row picked by the lowest set bit of k; row 0 stays +1
        let row = k.trailing_zeros() as usize + 1;
        let factor = if delta[row] == 1 { -2.0 } else { 2.0 };
        delta[row] = -delta[row];
        sign = -sign;
        for (j, c) in col.iter_mut().enumerate() {
            *c += a[(row, j)] * factor;
        }
        let prod: Complex64 = col.iter().product();
        acc.add(prod * sign);
    }
    Ok(acc.sum / terms as f64)
}

/// Permanent as an explicit sum over permutations (test oracle).
pub fn permanent_bruteforce(a: &DenseMatrix) -> Result<Complex64> {
    let n = require_square(a)?;
    if n > MAX_BRUTEFORCE {
        return Err(Error::TooLarge(format!(
            "{n}x{n} brute-force permanent (limit {MAX_BRUTEFORCE})"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut total = Complex64::new(0.0, 0.0);
    // Heap's algorithm
    let mut counters = vec![0usize; n];
    let term = |p: &[usize]| -> Complex64 { p.iter().enumerate().map(|(i, &j)| a[(i, j)]).product() };
    total += term(&perm);
    let mut i = 0;
    while i < n {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            total += term(&perm);
            counters[i] += 1;
            i = 0;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    Ok(total)
}

/// Largest singular value by power iteration on `A†A`.
pub fn operator_norm(a: &DenseMatrix) -> f64 {
    let cols = a.ncols();
    if cols == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let gram = a.adjoint() * a;
    // fixed, generic start vector
    let mut v = DVector::from_fn(cols, |i, _| {
        Complex64::new(1.0 + 0.37 * i as f64, 0.11 * (i as f64 + 1.0).sqrt())
    });
    v /= Complex64::new(v.norm(), 0.0);
    let mut lambda = 0.0;
    for _ in 0..100_000 {
        let w = &gram * &v;
        let w_norm = w.norm();
        if w_norm == 0.0 {
            return 0.0;
        }
        let next = v.dotc(&w).re;
        v = w / Complex64::new(w_norm, 0.0);
        let converged = (next - lambda).abs() <= 1e-10 * next.abs().max(1e-300);
        lambda = next;
        if converged {
            break;
        }
    }
    // final Rayleigh quotient on the converged vector
    let rq = v.dotc(&(&gram * &v)).re;
    rq.max(0.0).sqrt()
}

/// Number of Glynn samples for additive error `epsilon` with confidence
/// `1 - delta`.
pub fn gurvits_sample_count(epsilon: f64, delta: f64) -> usize {
    (GURVITS_HOEFFDING_C * (2.0 / delta).ln() / (epsilon * epsilon)).ceil() as usize
}

/// Gurvits' additive estimator of `Per(A)` for `‖A‖ ≤ 1`.
///
/// Each sample is the Glynn quantity `Π_i x_i Π_j (Σ_i x_i a_ij)` for a
/// uniform sign vector `x`; its modulus is at most `‖A‖^n ≤ 1`.
pub fn gurvits_estimate(a: &DenseMatrix, epsilon: f64, delta: f64, seed: u64) -> Result<Complex64> {
    let n = require_square(a)?;
    if !(epsilon > 0.0 && epsilon < 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon={epsilon}, delta={delta} must lie in (0, 1)"
        )));
    }
    if n == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let norm = operator_norm(a);
    if norm > 1.0 + 1e-9 {
        return Err(Error::NormTooLarge { norm });
    }
    let samples = gurvits_sample_count(epsilon, delta);
    let mut rng = rng_from_seed(seed);
    let mut acc = KahanSum::default();
    let mut x = vec![0.0f64; n];
    for _ in 0..samples {
        let mut parity = 1.0;
        for xi in x.iter_mut() {
            *xi = if rng.random::<bool>() { 1.0 } else { -1.0 };
            parity *= *xi;
        }
        let mut prod = Complex64::new(parity, 0.0);
        for j in 0..n {
            let s: Complex64 = (0..n).map(|i| a[(i, j)] * x[i]).sum();
            prod *= s;
        }
        acc.add(prod);
    }
    Ok(acc.sum / samples as f64)
}
