//! Passive linear-optical evolution of Fock states.
//!
//! An interferometer `U` acting on a set of modes transforms creation
//! operators as `a_i† -> Σ_j U_ji a_j†`. Evolution of a Fock term is computed
//! by expanding the product of transformed creation operators; integer
//! multinomial weights are accumulated first and the `sqrt(n!)`
//! normalisation of input and output Fock states is applied once per output.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{Occupation, SparseState, PRUNE_THRESHOLD};

/// Maximum allowed entry of `U†U - I`.
pub const UNITARITY_TOL: f64 = 1e-10;

/// A unitary on `d` modes together with the global modes it acts on.
#[derive(Clone, Debug, PartialEq)]
pub struct Interferometer {
    matrix: DMatrix<Complex64>,
    target_modes: Vec<usize>,
}

pub fn unitarity_deviation(matrix: &DMatrix<Complex64>) -> f64 {
    let d = matrix.nrows();
    let gram = matrix.adjoint() * matrix;
    (gram - DMatrix::<Complex64>::identity(d, d))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

fn check_modes(target_modes: &[usize]) -> Result<()> {
    let mut sorted = target_modes.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidModeSet(format!(
            "duplicate target modes {target_modes:?}"
        )));
    }
    Ok(())
}

impl Interferometer {
    /// Validates shape, mode distinctness and unitarity.
    pub fn new(matrix: DMatrix<Complex64>, target_modes: Vec<usize>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        if matrix.nrows() != target_modes.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix on {} modes",
                matrix.nrows(),
                matrix.ncols(),
                target_modes.len()
            )));
        }
        check_modes(&target_modes)?;
        let deviation = unitarity_deviation(&matrix);
        if deviation > UNITARITY_TOL {
            return Err(Error::NotUnitary { deviation });
        }
        Ok(Interferometer { matrix, target_modes })
    }

    /// Acts on modes `0..d`.
    pub fn on_leading_modes(matrix: DMatrix<Complex64>) -> Result<Self> {
        let d = matrix.nrows();
        Self::new(matrix, (0..d).collect())
    }

    pub fn identity(d: usize) -> Self {
        Interferometer {
            matrix: DMatrix::identity(d, d),
            target_modes: (0..d).collect(),
        }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn target_modes(&self) -> &[usize] {
        &self.target_modes
    }

    pub fn dim(&self) -> usize {
        self.target_modes.len()
    }

    /// Same unitary on a different set of modes.
    pub fn retarget(&self, target_modes: Vec<usize>) -> Result<Self> {
        if target_modes.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} modes for a {}-mode interferometer",
                target_modes.len(),
                self.dim()
            )));
        }
        check_modes(&target_modes)?;
        Ok(Interferometer {
            matrix: self.matrix.clone(),
            target_modes,
        })
    }

    /// The interferometer `next · self` (apply `self` first), on the same modes.
    pub fn then(&self, next: &Interferometer) -> Result<Self> {
        if self.target_modes != next.target_modes {
            return Err(Error::InvalidModeSet(
                "composition requires identical target modes".into(),
            ));
        }
        Ok(Interferometer {
            matrix: &next.matrix * &self.matrix,
            target_modes: self.target_modes.clone(),
        })
    }
}

/// Places unitary `matrix` on `target_modes`; identity elsewhere.
pub fn embed(matrix: DMatrix<Complex64>, target_modes: &[usize]) -> Result<Interferometer> {
    Interferometer::new(matrix, target_modes.to_vec())
}

/// `U_jk = exp(2πi jk / K) / sqrt(K)` on modes `0..K`.
pub fn complex_hadamard(k: usize) -> Result<Interferometer> {
    if k == 0 {
        return Err(Error::InvalidDimension("complex Hadamard of size 0".into()));
    }
    let scale = 1.0 / (k as f64).sqrt();
    let matrix = DMatrix::from_fn(k, k, |j, l| {
        let angle = 2.0 * PI * ((j * l) % k) as f64 / k as f64;
        Complex64::from_polar(scale, angle)
    });
    Interferometer::on_leading_modes(matrix)
}

/// Real 50:50 beamsplitter `[[1, 1], [1, -1]] / sqrt(2)`.
pub fn beamsplitter_matrix() -> DMatrix<Complex64> {
    let s = Complex64::new(FRAC_1_SQRT_2, 0.0);
    DMatrix::from_row_slice(2, 2, &[s, s, s, -s])
}

pub fn beamsplitter(mode_a: usize, mode_b: usize) -> Result<Interferometer> {
    embed(beamsplitter_matrix(), &[mode_a, mode_b])
}

/// `H ⊗ H` on modes `0..4`; entries `±1/2`.
pub fn hadamard_tensor_hadamard() -> Interferometer {
    let h = beamsplitter_matrix();
    Interferometer {
        matrix: h.kronecker(&h),
        target_modes: (0..4).collect(),
    }
}

/// Diagonal phase shifters `exp(i φ_j)` on modes `0..d`.
pub fn phase_shifters(phases: &[f64]) -> Interferometer {
    let diag = phases
        .iter()
        .map(|&p| Complex64::from_polar(1.0, p))
        .collect::<Vec<_>>();
    Interferometer {
        matrix: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)),
        target_modes: (0..phases.len()).collect(),
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// All ways to split `n` photons over `d` output modes.
fn compositions(n: u8, d: usize) -> Vec<Vec<u8>> {
    fn rec(left: u8, slots: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if slots == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for take in 0..=left {
            cur.push(take);
            rec(left - take, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if d == 0 {
        if n == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(n, d, &mut Vec::with_capacity(d), &mut out);
    out
}

/// Output amplitudes of the local Fock state `input` under `matrix`.
pub(crate) fn expand_local(matrix: &DMatrix<Complex64>, input: &[u8]) -> Vec<(Vec<u8>, Complex64)> {
    let d = input.len();
    let mut split_cache: HashMap<u8, Vec<Vec<u8>>> = HashMap::new();
    for &n in input {
        split_cache.entry(n).or_insert_with(|| compositions(n, d));
    }

    // accumulated Σ (integer multinomial) · Π U^m, keyed by output pattern
    let mut acc: HashMap<Vec<u8>, Complex64> = HashMap::new();

    struct Walk<'a> {
        matrix: &'a DMatrix<Complex64>,
        input: &'a [u8],
        splits: &'a HashMap<u8, Vec<Vec<u8>>>,
        acc: &'a mut HashMap<Vec<u8>, Complex64>,
    }

    fn walk(w: &mut Walk<'_>, i: usize, out: &mut Vec<u8>, weight: Complex64) {
        if i == w.input.len() {
            *w.acc.entry(out.clone()).or_insert(Complex64::new(0.0, 0.0)) += weight;
            return;
        }
        let n = w.input[i];
        if n == 0 {
            walk(w, i + 1, out, weight);
            return;
        }
        let splits = &w.splits[&n];
        for split in splits {
            let mut multinomial = factorial(n as u32);
            let mut product = weight;
            for (j, &m) in split.iter().enumerate() {
                if m > 0 {
                    multinomial /= factorial(m as u32);
                    product *= w.matrix[(j, i)].powu(m as u32);
                }
            }
            if product == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (o, &m) in out.iter_mut().zip(split) {
                *o += m;
            }
            walk(w, i + 1, out, product * multinomial);
            for (o, &m) in out.iter_mut().zip(split) {
                *o -= m;
            }
        }
    }

    let mut out = vec![0u8; d];
    let mut w = Walk {
        matrix,
        input,
        splits: &split_cache,
        acc: &mut acc,
    };
    walk(&mut w, 0, &mut out, Complex64::new(1.0, 0.0));

    let input_norm: f64 = input.iter().map(|&n| factorial(n as u32)).product();
    let mut result: Vec<(Vec<u8>, Complex64)> = acc
        .into_iter()
        .map(|(occ, amp)| {
            let output_norm: f64 = occ.iter().map(|&n| factorial(n as u32)).product();
            let amp = amp * (output_norm / input_norm).sqrt();
            (occ, amp)
        })
        .filter(|(_, amp)| amp.norm() >= PRUNE_THRESHOLD)
        .collect();
    result.sort_by(|a, b| a.0.cmp(&b.0));
    result
}

/// Evolves `state` through `intf`.
pub fn apply(state: &SparseState, intf: &Interferometer) -> Result<SparseState> {
    let modes = state.num_modes();
    if let Some(&bad) = intf.target_modes.iter().find(|&&m| m >= modes) {
        return Err(Error::DimensionMismatch(format!(
            "target mode {bad} outside a {modes}-mode state"
        )));
    }
    let mut cache: HashMap<Vec<u8>, Vec<(Vec<u8>, Complex64)>> = HashMap::new();
    let mut out = SparseState::empty(modes);
    for (occ, amp) in state.sorted_terms() {
        let local: Vec<u8> = intf.target_modes.iter().map(|&m| occ.get(m)).collect();
        let expansion = cache
            .entry(local)
            .or_insert_with_key(|local| expand_local(&intf.matrix, local));
        for (local_out, a) in expansion.iter() {
            let mut counts = occ.counts().to_vec();
            for (&m, &n) in intf.target_modes.iter().zip(local_out) {
                counts[m] = n;
            }
            out.add_amplitude(Occupation::new(counts), amp * a);
        }
    }
    Ok(out.pruned())
}

/// Applies interferometers in order.
pub fn apply_all<'a, I>(state: &SparseState, steps: I) -> Result<SparseState>
where
    I: IntoIterator<Item = &'a Interferometer>,
{
    let mut cur = state.clone();
    for step in steps {
        cur = apply(&cur, step)?;
    }
    Ok(cur)
}
