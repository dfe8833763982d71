//! CHSH test on the dual-rail pairs hidden in `|W_K>^{⊗2}`.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linear_optics::{apply, beamsplitter_matrix, embed};
use crate::measurement::detection_distribution;
use crate::random::trial_rng;
use crate::resource_states::{sigma_state, WPhases};
use crate::sequential::{CopyEngine, LocalResponse};

pub const TSIRELSON: f64 = 2.0 * SQRT_2;

/// Measurement setting on a dual-rail qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Setting {
    X,
    Z,
}

impl Setting {
    pub const BOTH: [Setting; 2] = [Setting::X, Setting::Z];

    fn index(self) -> usize {
        match self {
            Setting::X => 0,
            Setting::Z => 1,
        }
    }

    /// Sign of this correlator in `S = XX + XZ + ZX − ZZ`.
    fn chsh_sign(a: Setting, b: Setting) -> f64 {
        if a == Setting::Z && b == Setting::Z {
            -1.0
        } else {
            1.0
        }
    }

    fn pauli(self) -> Matrix2<Complex64> {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        match self {
            Setting::X => Matrix2::new(zero, one, one, zero),
            Setting::Z => Matrix2::new(one, zero, zero, -one),
        }
    }

    /// Mode transformation applied before detecting both rails: nothing for
    /// Z, a 50:50 beamsplitter for X.
    pub fn interferometer(self) -> DMatrix<Complex64> {
        match self {
            Setting::X => beamsplitter_matrix(),
            Setting::Z => DMatrix::identity(2, 2),
        }
    }
}

fn rz(phi: f64) -> Matrix2<Complex64> {
    Matrix2::new(
        Complex64::from_polar(1.0, -phi / 2.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::from_polar(1.0, phi / 2.0),
    )
}

fn ry(theta: f64) -> Matrix2<Complex64> {
    let (s, c) = (theta / 2.0).sin_cos();
    Matrix2::new(
        Complex64::new(c, 0.0),
        Complex64::new(-s, 0.0),
        Complex64::new(s, 0.0),
        Complex64::new(c, 0.0),
    )
}

/// `Rz(a) Ry(b) Rz(c)`.
pub fn euler_unitary(a: f64, b: f64, c: f64) -> Matrix2<Complex64> {
    rz(a) * ry(b) * rz(c)
}

/// `<ψ| P ⊗ Q |ψ>` for a two-qubit state in the basis `|00>, |01>, |10>, |11>`.
fn two_qubit_expectation(psi: &[Complex64; 4], p: &Matrix2<Complex64>, q: &Matrix2<Complex64>) -> f64 {
    let mut total = Complex64::new(0.0, 0.0);
    for a in 0..2 {
        for b in 0..2 {
            for a2 in 0..2 {
                for b2 in 0..2 {
                    total += psi[a * 2 + b].conj() * p[(a, a2)] * q[(b, b2)] * psi[a2 * 2 + b2];
                }
            }
        }
    }
    total.re
}

/// CHSH value of `(U ⊗ U)|Ψ+>`, computed on qubits.
pub fn qubit_chsh_value(u: &Matrix2<Complex64>) -> f64 {
    let s = Complex64::new(1.0 / SQRT_2, 0.0);
    let mut psi = [Complex64::new(0.0, 0.0); 4];
    for a in 0..2 {
        for b in 0..2 {
            // |Ψ+> = (|01> + |10>)/√2
            psi[a * 2 + b] = s * (u[(a, 0)] * u[(b, 1)] + u[(a, 1)] * u[(b, 0)]);
        }
    }
    let mut value = 0.0;
    for x in Setting::BOTH {
        for y in Setting::BOTH {
            value += Setting::chsh_sign(x, y) * two_qubit_expectation(&psi, &x.pauli(), &y.pauli());
        }
    }
    value
}

#[derive(Clone, Debug, Serialize)]
pub struct ChshDerivation {
    pub euler_angles: [f64; 3],
    #[serde(serialize_with = "crate::io::serialize_matrix")]
    pub unitary: DMatrix<Complex64>,
    pub chsh_value: f64,
    pub identity_value: f64,
    pub evaluations: usize,
}

/// Maximizes the qubit CHSH value over `Rz Ry Rz` rotations: a coarse grid
/// followed by compass search down to a step of 1e-10.
pub fn derive_symmetric_chsh_unitary() -> Result<ChshDerivation> {
    let objective = |x: &[f64; 3]| qubit_chsh_value(&euler_unitary(x[0], x[1], x[2]));
    let grid = 16;
    let mut best = [0.0; 3];
    let mut best_value = f64::NEG_INFINITY;
    let mut evaluations = 0;
    for i in 0..grid {
        for j in 0..grid {
            for k in 0..grid {
                let x = [
                    2.0 * PI * i as f64 / grid as f64,
                    2.0 * PI * j as f64 / grid as f64,
                    2.0 * PI * k as f64 / grid as f64,
                ];
                let v = objective(&x);
                evaluations += 1;
                if v > best_value {
                    best_value = v;
                    best = x;
                }
            }
        }
    }
    let mut step = 2.0 * PI / grid as f64;
    while step > 1e-10 {
        let mut improved = false;
        for coord in 0..3 {
            for dir in [1.0, -1.0] {
                let mut trial = best;
                trial[coord] += dir * step;
                let v = objective(&trial);
                evaluations += 1;
                if v > best_value {
                    best_value = v;
                    best = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    if best_value < TSIRELSON - 1e-6 {
        return Err(Error::DerivationFailed(format!(
            "best CHSH value {best_value} below 2√2"
        )));
    }
    let u = euler_unitary(best[0], best[1], best[2]);
    Ok(ChshDerivation {
        euler_angles: best,
        unitary: DMatrix::from_fn(2, 2, |r, c| u[(r, c)]),
        chsh_value: best_value,
        identity_value: qubit_chsh_value(&Matrix2::identity()),
        evaluations,
    })
}

/// Outcome value of a dual-rail detection: `+1` for the photon in rail 0.
fn rail_value(counts: &[u8]) -> f64 {
    if counts[0] == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Exact CHSH value of the dual-rail `|Ψ+>` with both parties applying the
/// mode unitary `u` before the X/Z readout. Independent of the qubit code.
pub fn photonic_chsh_value(u: &DMatrix<Complex64>) -> Result<f64> {
    let pair = sigma_state(2, 2)?;
    let mut value = 0.0;
    for x in Setting::BOTH {
        for y in Setting::BOTH {
            let state = apply(&pair, &embed(x.interferometer() * u, &[0, 1])?)?;
            let state = apply(&state, &embed(y.interferometer() * u, &[2, 3])?)?;
            let dist = detection_distribution(&state, &[0, 1, 2, 3])?;
            let corr: f64 = dist
                .iter()
                .map(|(o, p)| p * rail_value(&o.counts()[..2]) * rail_value(&o.counts()[2..]))
                .sum();
            value += Setting::chsh_sign(x, y) * corr;
        }
    }
    Ok(value)
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrelatorEstimate {
    pub first: Setting,
    pub second: Setting,
    pub count: u64,
    pub mean: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChshReport {
    pub k: usize,
    pub trials: u64,
    pub seed: u64,
    pub accepted: u64,
    pub discarded: u64,
    pub discarded_fraction: f64,
    pub expected_discarded_fraction: f64,
    pub discarded_fraction_sigma: f64,
    pub correlators: Vec<CorrelatorEstimate>,
    pub s_estimate: f64,
    pub standard_error: f64,
    pub target: f64,
    pub deviation_in_standard_errors: f64,
    pub photon_conservation_violations: u64,
    pub derivation: ChshDerivation,
}

struct Trial {
    /// `(setting, counts)` for every party that saw light.
    clicks: Vec<(Setting, Vec<u8>)>,
}

fn run_trial(k: usize, seed: u64, t: u64, responses: &[LocalResponse; 2]) -> Result<Trial> {
    let mut rng = trial_rng(seed, t);
    let settings: Vec<Setting> = (0..k)
        .map(|_| if rng.random::<bool>() { Setting::X } else { Setting::Z })
        .collect();
    let mut engine = CopyEngine::new(k, 2, &WPhases::zeros(k))?;
    let mut clicks = Vec::new();
    for (party, &setting) in settings.iter().enumerate() {
        if engine.photons_left() == 0 {
            break;
        }
        let (counts, _) = engine.measure(party, &responses[setting.index()], &mut rng)?;
        if counts.iter().any(|&c| c > 0) {
            clicks.push((setting, counts));
        }
    }
    Ok(Trial { clicks })
}

/// Every party applies `U` then a random X or Z readout; trials in which two
/// parties each see one photon feed the CHSH estimator.
pub fn chsh_experiment(k: usize, trials: u64, seed: u64) -> Result<ChshReport> {
    if k < 4 || !k.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "K must be even and at least 4, got {k}"
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    let derivation = derive_symmetric_chsh_unitary()?;
    let responses = [
        LocalResponse::new(&(Setting::X.interferometer() * &derivation.unitary))?,
        LocalResponse::new(&(Setting::Z.interferometer() * &derivation.unitary))?,
    ];
    let results: Vec<Trial> = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(k, seed, t, &responses))
        .collect::<Result<_>>()?;

    let mut sums = [[0.0f64; 2]; 2];
    let mut counts = [[0u64; 2]; 2];
    let mut accepted = 0;
    let mut violations = 0;
    for trial in &results {
        let photons: usize = trial.clicks.iter().flat_map(|(_, c)| c).map(|&c| c as usize).sum();
        if photons != 2 {
            violations += 1;
        }
        if trial.clicks.len() == 2 {
            let (sa, ca) = &trial.clicks[0];
            let (sb, cb) = &trial.clicks[1];
            sums[sa.index()][sb.index()] += rail_value(ca) * rail_value(cb);
            counts[sa.index()][sb.index()] += 1;
            accepted += 1;
        }
    }

    let mut correlators = Vec::new();
    let mut s_estimate = 0.0;
    let mut variance = 0.0;
    for a in Setting::BOTH {
        for b in Setting::BOTH {
            let n = counts[a.index()][b.index()];
            let mean = if n > 0 {
                sums[a.index()][b.index()] / n as f64
            } else {
                0.0
            };
            s_estimate += Setting::chsh_sign(a, b) * mean;
            if n > 0 {
                variance += (1.0 - mean * mean) / n as f64;
            }
            correlators.push(CorrelatorEstimate {
                first: a,
                second: b,
                count: n,
                mean,
            });
        }
    }
    let standard_error = variance.sqrt();
    let discarded = trials - accepted;
    let expected = 1.0 / k as f64;
    Ok(ChshReport {
        k,
        trials,
        seed,
        accepted,
        discarded,
        discarded_fraction: discarded as f64 / trials as f64,
        expected_discarded_fraction: expected,
        discarded_fraction_sigma: (expected * (1.0 - expected) / trials as f64).sqrt(),
        correlators,
        s_estimate,
        standard_error,
        target: TSIRELSON,
        deviation_in_standard_errors: (s_estimate - TSIRELSON).abs() / standard_error,
        photon_conservation_violations: violations,
        derivation,
    })
}
