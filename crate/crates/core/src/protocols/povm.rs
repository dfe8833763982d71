//! POVMs on a truncated Fock space and the W-like spectral criterion.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::Occupation;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-10;
pub const COMPLETENESS_TOL: f64 = 1e-9;

/// Occupations of `n` modes with at most `max_photons` photons: vacuum,
/// then `e_0 .. e_{n-1}`, then the two-photon states.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedFockBasis {
    modes: usize,
    max_photons: u8,
    states: Vec<Occupation>,
}

impl TruncatedFockBasis {
    pub fn new(modes: usize, max_photons: u8) -> Result<Self> {
        if modes == 0 || !(1..=2).contains(&max_photons) {
            return Err(Error::InvalidParameter(format!(
                "truncated basis needs n >= 1 modes and 1..=2 photons, got n={modes}, {max_photons}"
            )));
        }
        let mut states = vec![Occupation::vacuum(modes)];
        for j in 0..modes {
            states.push(Occupation::single(modes, j));
        }
        if max_photons == 2 {
            for i in 0..modes {
                for j in i..modes {
                    let mut c = vec![0u8; modes];
                    c[i] += 1;
                    c[j] += 1;
                    states.push(Occupation::new(c));
                }
            }
        }
        Ok(TruncatedFockBasis {
            modes,
            max_photons,
            states,
        })
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn max_photons(&self) -> u8 {
        self.max_photons
    }

    pub fn states(&self) -> &[Occupation] {
        &self.states
    }
}

/// A validated POVM: Hermitian PSD elements summing to the identity.
#[derive(Clone, Debug)]
pub struct Povm {
    basis: TruncatedFockBasis,
    elements: Vec<DMatrix<Complex64>>,
}

impl Povm {
    pub fn new(basis: TruncatedFockBasis, elements: Vec<DMatrix<Complex64>>) -> Result<Self> {
        let d = basis.dim();
        if elements.is_empty() {
            return Err(Error::InvalidPovm("no elements".into()));
        }
        let mut sum = DMatrix::<Complex64>::zeros(d, d);
        for (i, e) in elements.iter().enumerate() {
            if e.nrows() != d || e.ncols() != d {
                return Err(Error::InvalidPovm(format!(
                    "element {i} is {}x{}, basis has {d} states",
                    e.nrows(),
                    e.ncols()
                )));
            }
            let asym = (e - e.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            if asym > HERMITIAN_TOL {
                return Err(Error::InvalidPovm(format!("element {i} not Hermitian ({asym:e})")));
            }
            let min_eig = e.clone().symmetric_eigen().eigenvalues.min();
            if min_eig < -PSD_TOL {
                return Err(Error::InvalidPovm(format!("element {i} has eigenvalue {min_eig:e}")));
            }
            sum += e;
        }
        let gap = (sum - DMatrix::<Complex64>::identity(d, d))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if gap > COMPLETENESS_TOL {
            return Err(Error::InvalidPovm(format!(
                "elements sum to identity only within {gap:e}"
            )));
        }
        Ok(Povm { basis, elements })
    }

    pub fn basis(&self) -> &TruncatedFockBasis {
        &self.basis
    }

    pub fn elements(&self) -> &[DMatrix<Complex64>] {
        &self.elements
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct WlikeTolerance {
    /// Minimum separation between distinct nonzero eigenvalues, and the
    /// allowed deviation of eigenvector amplitudes.
    pub gap: f64,
    /// Eigenvalues at or below this are treated as zero.
    pub zero: f64,
}

impl Default for WlikeTolerance {
    fn default() -> Self {
        WlikeTolerance { gap: 1e-8, zero: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElementCheck {
    pub pass: bool,
    pub eigenvalues: Vec<f64>,
    pub reason: Option<String>,
}

fn check_element(e: &DMatrix<Complex64>, basis: &TruncatedFockBasis, tol: WlikeTolerance) -> ElementCheck {
    let eig = e.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let fail = |reason: String| ElementCheck {
        pass: false,
        eigenvalues: eigenvalues.clone(),
        reason: Some(reason),
    };

    let nonzero: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| eig.eigenvalues[i] > tol.zero)
        .collect();
    for w in nonzero.windows(2) {
        let gap = eig.eigenvalues[w[0]] - eig.eigenvalues[w[1]];
        if gap <= tol.gap {
            return fail(format!("degenerate eigenvalue {}", eig.eigenvalues[w[0]]));
        }
    }

    let n = basis.modes();
    let uniform = 1.0 / (n as f64).sqrt();
    for &i in &nonzero {
        let v = eig.eigenvectors.column(i);
        let vacuum = v[0].norm();
        let single: Vec<f64> = (1..=n).map(|j| v[j].norm()).collect();
        let higher: f64 = (n + 1..basis.dim()).map(|j| v[j].norm_sqr()).sum::<f64>().sqrt();
        let is_vacuum = (vacuum - 1.0).abs() <= tol.gap;
        let is_w = vacuum <= tol.gap && higher <= tol.gap && single.iter().all(|a| (a - uniform).abs() <= tol.gap);
        if !is_vacuum && !is_w {
            return fail(format!(
                "eigenvector for {} is neither vacuum nor W-like (single-photon magnitudes {single:?})",
                eig.eigenvalues[i]
            ));
        }
    }
    ElementCheck {
        pass: true,
        eigenvalues,
        reason: None,
    }
}

/// Per element: nonzero eigenvalues distinct, and each of their eigenvectors
/// either the vacuum or a single photon with equal-magnitude amplitudes.
pub fn wlike_povm_check(povm: &Povm, tol: WlikeTolerance) -> Vec<ElementCheck> {
    povm.elements
        .iter()
        .map(|e| check_element(e, &povm.basis, tol))
        .collect()
}

/// `|v><v|` for `v` given on the truncated basis.
pub fn projector(v: &[Complex64]) -> DMatrix<Complex64> {
    let col = DMatrix::from_column_slice(v.len(), 1, v);
    &col * col.adjoint()
}

/// Fourier W basis of the single-photon sector: `W^(α)_j = ω^{αj}/√n`,
/// embedded in the truncated basis.
pub fn fourier_w_vectors(basis: &TruncatedFockBasis) -> Vec<Vec<Complex64>> {
    let n = basis.modes();
    (0..n)
        .map(|alpha| {
            let mut v = vec![Complex64::new(0.0, 0.0); basis.dim()];
            for j in 0..n {
                let angle = 2.0 * std::f64::consts::PI * (alpha * j) as f64 / n as f64;
                v[1 + j] = Complex64::from_polar(1.0 / (n as f64).sqrt(), angle);
            }
            v
        })
        .collect()
}

/// The faux-quantized two-outcome measurement `{Π_a, I − Π_a}` with
/// `Π_a = |1_a><1_a|`.
pub fn faux_projector_povm(modes: usize, a: usize) -> Result<Povm> {
    let basis = TruncatedFockBasis::new(modes, 1)?;
    if a >= modes {
        return Err(Error::InvalidParameter(format!("mode {a} outside 0..{modes}")));
    }
    let d = basis.dim();
    let mut e = vec![Complex64::new(0.0, 0.0); d];
    e[1 + a] = Complex64::new(1.0, 0.0);
    let pi = projector(&e);
    let rest = DMatrix::identity(d, d) - &pi;
    Povm::new(basis, vec![pi, rest])
}
