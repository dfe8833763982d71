//! Exact party-by-party measurement of `|W_K>^{⊗N}`.
//!
//! When each party applies a local interferometer to its N modes and detects
//! all of them, the unmeasured remainder always has the form
//! `Σ_D β_D ⊗_{c∉D} |ŵ_c>`, where `D` is the set of copies whose photon has
//! already been detected and `|ŵ_c>` is copy `c`'s photon spread uniformly
//! over the parties not yet measured. Tracking the `2^N` coefficients `β_D`
//! replaces a state vector with `K^N` terms.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::fock::{Occupation, SparseState};
use crate::linear_optics::{expand_local, unitarity_deviation, UNITARITY_TOL};
use crate::resource_states::WPhases;

/// Largest number of copies the engine supports.
pub const MAX_COPIES: usize = 16;

const BRANCH_FLOOR: f64 = 1e-15;

/// Output amplitudes `<m|U|1_T>` for every subset `T` of local modes.
#[derive(Clone, Debug)]
pub struct LocalResponse {
    n: usize,
    by_subset: Vec<Vec<(Vec<u8>, Complex64)>>,
}

impl LocalResponse {
    pub fn new(u: &DMatrix<Complex64>) -> Result<Self> {
        if !u.is_square() {
            return Err(Error::NotSquare {
                rows: u.nrows(),
                cols: u.ncols(),
            });
        }
        let n = u.nrows();
        if n == 0 || n > MAX_COPIES {
            return Err(Error::InvalidDimension(format!("local dimension {n}")));
        }
        let deviation = unitarity_deviation(u);
        if deviation > UNITARITY_TOL {
            return Err(Error::NotUnitary { deviation });
        }
        let by_subset = (0u32..1 << n)
            .map(|mask| {
                let input: Vec<u8> = (0..n).map(|c| ((mask >> c) & 1) as u8).collect();
                expand_local(u, &input)
            })
            .collect();
        Ok(LocalResponse { n, by_subset })
    }

    pub fn identity(n: usize) -> Self {
        Self::new(&DMatrix::identity(n, n)).expect("identity is unitary")
    }

    pub fn dim(&self) -> usize {
        self.n
    }
}

/// One possible detection outcome at a party, with the remainder it leaves.
#[derive(Clone, Debug)]
pub struct PartyBranch {
    pub counts: Vec<u8>,
    pub probability: f64,
    next: Vec<(u32, Complex64)>,
}

impl PartyBranch {
    pub fn photons(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }
}

/// Exact remainder of `|W_K>^{⊗N}` after some parties have been measured.
#[derive(Clone, Debug)]
pub struct CopyEngine {
    k: usize,
    n: usize,
    theta: Vec<f64>,
    measured: Vec<bool>,
    remaining: usize,
    detected: usize,
    beta: Vec<(u32, Complex64)>,
}

impl CopyEngine {
    pub fn new(k: usize, n: usize, phases: &WPhases) -> Result<Self> {
        if n == 0 || k < n {
            return Err(Error::InvalidConfiguration(format!(
                "need K >= N >= 1, got K={k}, N={n}"
            )));
        }
        if n > MAX_COPIES {
            return Err(Error::TooLarge(format!("{n} copies (limit {MAX_COPIES})")));
        }
        if phases.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "{} phases for {k} parties",
                phases.len()
            )));
        }
        Ok(CopyEngine {
            k,
            n,
            theta: phases.theta().to_vec(),
            measured: vec![false; k],
            remaining: k,
            detected: 0,
            beta: vec![(0, Complex64::new(1.0, 0.0))],
        })
    }

    pub fn num_parties(&self) -> usize {
        self.k
    }

    pub fn copies(&self) -> usize {
        self.n
    }

    pub fn remaining_parties(&self) -> usize {
        self.remaining
    }

    pub fn photons_detected(&self) -> usize {
        self.detected
    }

    pub fn photons_left(&self) -> usize {
        self.n - self.detected
    }

    pub fn is_measured(&self, party: usize) -> bool {
        self.measured[party]
    }

    /// Coefficients `β_D` keyed by the bitmask of consumed copies.
    pub fn coefficients(&self) -> &[(u32, Complex64)] {
        &self.beta
    }

    /// All outcomes of measuring `party` after `response`, ordered
    /// lexicographically by counts. Probabilities sum to one.
    pub fn branches(&self, party: usize, response: &LocalResponse) -> Result<Vec<PartyBranch>> {
        if party >= self.k {
            return Err(Error::InvalidParameter(format!("party {party} outside 0..{}", self.k)));
        }
        if self.measured[party] {
            return Err(Error::InvalidConfiguration(format!("party {party} already measured")));
        }
        if response.n != self.n {
            return Err(Error::DimensionMismatch(format!(
                "{}-mode response for {} local modes",
                response.n, self.n
            )));
        }
        let r = self.remaining as f64;
        let arrive = Complex64::from_polar(1.0 / r.sqrt(), self.theta[party]);
        let stay = ((r - 1.0) / r).sqrt();
        let full: u32 = (1u32 << self.n) - 1;

        let mut acc: BTreeMap<Vec<u8>, BTreeMap<u32, Complex64>> = BTreeMap::new();
        for &(d, b) in &self.beta {
            let free = full & !d;
            let mut t = free;
            loop {
                let taken = t.count_ones() as i32;
                let left = (self.n - d.count_ones() as usize) as i32 - taken;
                let coef = b * arrive.powi(taken) * stay.powi(left);
                if coef.norm() > 0.0 {
                    for (m, a) in &response.by_subset[t as usize] {
                        *acc.entry(m.clone())
                            .or_default()
                            .entry(d | t)
                            .or_insert(Complex64::new(0.0, 0.0)) += coef * a;
                    }
                }
                if t == 0 {
                    break;
                }
                t = (t - 1) & free;
            }
        }

        let mut out = Vec::with_capacity(acc.len());
        for (counts, next) in acc {
            let probability: f64 = next.values().map(|z| z.norm_sqr()).sum();
            if probability <= BRANCH_FLOOR {
                continue;
            }
            let scale = 1.0 / probability.sqrt();
            out.push(PartyBranch {
                counts,
                probability,
                next: next.into_iter().map(|(d, z)| (d, z * scale)).collect(),
            });
        }
        Ok(out)
    }

    /// Moves to the post-measurement remainder of `branch`.
    pub fn commit(&mut self, party: usize, branch: &PartyBranch) {
        self.measured[party] = true;
        self.remaining -= 1;
        self.detected += branch.photons();
        self.beta = branch.next.clone();
    }

    /// Samples the outcome at `party` and commits to it.
    pub fn measure<R: Rng + ?Sized>(
        &mut self,
        party: usize,
        response: &LocalResponse,
        rng: &mut R,
    ) -> Result<(Vec<u8>, f64)> {
        let branches = self.branches(party, response)?;
        let u: f64 = rng.random();
        let mut cumulative = 0.0;
        let mut chosen = branches.len() - 1;
        for (i, b) in branches.iter().enumerate() {
            cumulative += b.probability;
            if u < cumulative {
                chosen = i;
                break;
            }
        }
        let branch = &branches[chosen];
        self.commit(party, branch);
        Ok((branch.counts.clone(), branch.probability))
    }

    /// Probability that two of the undetected photons later meet at one of
    /// the remaining parties.
    pub fn remainder_collision_probability(&self) -> f64 {
        let r = self.remaining as f64;
        1.0 - (0..self.photons_left()).map(|i| 1.0 - i as f64 / r).product::<f64>()
    }

    /// Normalized state of the undetected photons given that they land on
    /// `L = photons_left()` distinct chosen parties, in block layout of N
    /// modes per party (party phases dropped).
    pub fn collision_free_remainder(&self) -> Result<SparseState> {
        let left = self.photons_left();
        if left == 0 {
            return Err(Error::InvalidConfiguration("no photons left".into()));
        }
        if left > self.remaining {
            return Err(Error::InvalidConfiguration(format!(
                "{left} photons left with {} parties",
                self.remaining
            )));
        }
        let n = self.n;
        let mut terms = Vec::new();
        for &(d, b) in &self.beta {
            let copies: Vec<usize> = (0..n).filter(|c| d & (1 << c) == 0).collect();
            for perm in permutations_of(&copies) {
                let mut counts = vec![0u8; left * n];
                for (slot, &c) in perm.iter().enumerate() {
                    counts[slot * n + c] = 1;
                }
                terms.push((Occupation::new(counts), b));
            }
        }
        SparseState::from_terms(left * n, terms)?.normalize()
    }
}

fn permutations_of(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations_of(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_optics::{apply, embed};
    use crate::measurement::{detect_and_absorb, detection_distribution, DetectionOutcome};
    use crate::random::{haar_unitary, rng_from_seed};
    use crate::resource_states::{sigma_state, w_copies};
    use proptest::prelude::*;
    use rand::Rng;

    /// Measures parties in order under random unitaries, following random
    /// branches, and checks each party's outcome distribution against the
    /// full state vector.
    fn compare_with_state_vector(k: usize, n: usize, seed: u64) -> f64 {
        let mut rng = rng_from_seed(seed);
        let phases = WPhases::new((0..k).map(|_| rng.random_range(0.0..6.0)).collect()).unwrap();
        let (mut state, layout) = w_copies(k, n, &phases).unwrap();
        let mut engine = CopyEngine::new(k, n, &phases).unwrap();
        let mut worst: f64 = 0.0;
        for party in 0..k {
            let u = haar_unitary(&mut rng, n);
            let modes = layout.party(party).to_vec();
            state = apply(&state, &embed(u.clone(), &modes).unwrap()).unwrap();
            let full = detection_distribution(&state, &modes).unwrap();
            let branches = engine.branches(party, &LocalResponse::new(&u).unwrap()).unwrap();
            let total: f64 = branches.iter().map(|b| b.probability).sum();
            worst = worst.max((total - 1.0).abs());
            for b in &branches {
                worst = worst.max((b.probability - full.probability(&b.counts)).abs());
            }
            for (counts, p) in full.entries() {
                if *p > 1e-12 {
                    assert!(branches.iter().any(|b| &b.counts == counts));
                }
            }
            let pick = rng.random_range(0..branches.len());
            let branch = &branches[pick];
            let outcome = DetectionOutcome::new(modes.clone(), branch.counts.clone()).unwrap();
            state = detect_and_absorb(&state, &modes, &outcome).unwrap().0;
            engine.commit(party, branch);
        }
        worst
    }

    #[test]
    fn matches_state_vector() {
        for seed in 0..12 {
            let d = compare_with_state_vector(4, 2, seed);
            assert!(d < 1e-10, "seed {seed}: {d}");
        }
        for seed in 0..4 {
            let d = compare_with_state_vector(4, 3, 100 + seed);
            assert!(d < 1e-10, "seed {seed}: {d}");
        }
    }

    #[test]
    fn identity_measurement_counts_photons() {
        let mut engine = CopyEngine::new(6, 2, &WPhases::zeros(6)).unwrap();
        let id = LocalResponse::identity(2);
        let b = engine.branches(0, &id).unwrap();
        let zero = b.iter().find(|b| b.counts == [0, 0]).unwrap();
        assert!((zero.probability - (5.0 / 6.0f64).powi(2)).abs() < 1e-14);
        let mut rng = rng_from_seed(3);
        for p in 0..6 {
            engine.measure(p, &id, &mut rng).unwrap();
        }
        assert_eq!(engine.photons_left(), 0);
        assert!(engine.branches(0, &id).is_err());
    }

    #[test]
    fn remainder_after_one_party_is_symmetric() {
        // With no detection at party 0, the two photons landing on two fixed
        // parties form the dual-rail |Ψ+>.
        let mut engine = CopyEngine::new(5, 2, &WPhases::zeros(5)).unwrap();
        let id = LocalResponse::identity(2);
        let b = engine.branches(0, &id).unwrap();
        let vac = b.iter().find(|b| b.counts == [0, 0]).unwrap().clone();
        engine.commit(0, &vac);
        let rem = engine.collision_free_remainder().unwrap();
        assert!(rem.max_abs_diff(&sigma_state(2, 2).unwrap()).unwrap() < 1e-12);
        assert!((engine.remainder_collision_probability() - 0.25).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn branch_probabilities_sum_to_one(seed in any::<u64>()) {
            let mut rng = rng_from_seed(seed);
            let mut engine = CopyEngine::new(7, 3, &WPhases::zeros(7)).unwrap();
            for p in 0..7 {
                let resp = LocalResponse::new(&haar_unitary(&mut rng, 3)).unwrap();
                let total: f64 = engine.branches(p, &resp).unwrap().iter().map(|b| b.probability).sum();
                prop_assert!((total - 1.0).abs() < 1e-10);
                engine.measure(p, &resp, &mut rng).unwrap();
            }
            prop_assert_eq!(engine.photons_left(), 0);
        }
    }
}
