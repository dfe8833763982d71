//! Number-resolving photodetection on subsets of modes.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{Occupation, SparseState};
use crate::random::rng_from_seed;

/// Outcomes below this probability are treated as impossible.
pub const MIN_OUTCOME_PROBABILITY: f64 = 1e-12;

/// Photon counts recorded on an ordered list of global modes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DetectionOutcome {
    modes: Vec<usize>,
    counts: Vec<u8>,
}

impl DetectionOutcome {
    pub fn new(modes: Vec<usize>, counts: Vec<u8>) -> Result<Self> {
        if modes.len() != counts.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} counts for {} modes",
                counts.len(),
                modes.len()
            )));
        }
        Ok(DetectionOutcome { modes, counts })
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn counts(&self) -> &[u8] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }

    pub fn count_for(&self, mode: usize) -> Option<u8> {
        self.modes.iter().position(|&m| m == mode).map(|i| self.counts[i])
    }

    pub fn mode_counts(&self) -> BTreeMap<usize, u8> {
        self.modes.iter().copied().zip(self.counts.iter().copied()).collect()
    }
}

/// Marginal photon-count distribution over a list of modes, ordered
/// lexicographically by counts.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutcomeDistribution {
    modes: Vec<usize>,
    entries: Vec<(Vec<u8>, f64)>,
}

impl OutcomeDistribution {
    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (DetectionOutcome, f64)> + '_ {
        self.entries.iter().map(move |(c, p)| {
            (
                DetectionOutcome {
                    modes: self.modes.clone(),
                    counts: c.clone(),
                },
                *p,
            )
        })
    }

    pub fn entries(&self) -> &[(Vec<u8>, f64)] {
        &self.entries
    }

    pub fn probability(&self, counts: &[u8]) -> f64 {
        self.entries
            .binary_search_by(|(c, _)| c.as_slice().cmp(counts))
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    /// Largest pointwise probability difference.
    pub fn max_abs_diff(&self, other: &OutcomeDistribution) -> f64 {
        let mut keys: Vec<&[u8]> = self.entries.iter().map(|(c, _)| c.as_slice()).collect();
        keys.extend(other.entries.iter().map(|(c, _)| c.as_slice()));
        keys.iter()
            .map(|k| (self.probability(k) - other.probability(k)).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn check_measured_modes(state: &SparseState, modes: &[usize]) -> Result<()> {
    let n = state.num_modes();
    let mut seen = vec![false; n];
    for &m in modes {
        if m >= n {
            return Err(Error::InvalidModeSet(format!("mode {m} outside {n}-mode state")));
        }
        if seen[m] {
            return Err(Error::InvalidModeSet(format!("mode {m} listed twice")));
        }
        seen[m] = true;
    }
    Ok(())
}

fn require_normalized(state: &SparseState) -> Result<()> {
    let norm_sqr = state.norm_sqr();
    if (norm_sqr - 1.0).abs() > crate::fock::NORMALIZED_TOL {
        return Err(Error::NotNormalized { norm_sqr });
    }
    Ok(())
}

fn local_counts(occ: &Occupation, modes: &[usize]) -> Vec<u8> {
    modes.iter().map(|&m| occ.get(m)).collect()
}

/// Born-rule distribution of photon counts on `modes`.
pub fn detection_distribution(state: &SparseState, modes: &[usize]) -> Result<OutcomeDistribution> {
    require_normalized(state)?;
    check_measured_modes(state, modes)?;
    let mut acc: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
    for (occ, amp) in state.sorted_terms() {
        *acc.entry(local_counts(occ, modes)).or_insert(0.0) += amp.norm_sqr();
    }
    Ok(OutcomeDistribution {
        modes: modes.to_vec(),
        entries: acc.into_iter().collect(),
    })
}

/// Post-measurement state on the unmeasured modes.
#[derive(Clone, Debug)]
pub struct Collapsed {
    pub state: SparseState,
    /// `mode_map[old] = Some(new)` for surviving modes, `None` for measured ones.
    pub mode_map: Vec<Option<usize>>,
    pub probability: f64,
}

fn outcome_counts(modes: &[usize], outcome: &DetectionOutcome) -> Result<Vec<u8>> {
    if outcome.modes != modes {
        return Err(Error::InvalidModeSet(format!(
            "outcome recorded on {:?}, measuring {modes:?}",
            outcome.modes
        )));
    }
    Ok(outcome.counts.clone())
}

/// Terms consistent with `counts` on `modes`, and their total weight.
fn matching_terms<'a>(
    state: &'a SparseState,
    modes: &[usize],
    counts: &[u8],
) -> (Vec<(&'a Occupation, Complex64)>, f64) {
    let terms: Vec<_> = state
        .sorted_terms()
        .into_iter()
        .filter(|(occ, _)| modes.iter().zip(counts).all(|(&m, &c)| occ.get(m) == c))
        .collect();
    let weight = terms.iter().map(|(_, a)| a.norm_sqr()).sum();
    (terms, weight)
}

/// Projects onto `outcome` and removes the measured modes, re-indexing the
/// survivors densely in their original order.
pub fn collapse(state: &SparseState, modes: &[usize], outcome: &DetectionOutcome) -> Result<Collapsed> {
    check_measured_modes(state, modes)?;
    let counts = outcome_counts(modes, outcome)?;
    let total = state.norm_sqr();
    let (terms, weight) = matching_terms(state, modes, &counts);
    let probability = weight / total;
    if probability < MIN_OUTCOME_PROBABILITY {
        return Err(Error::ImpossibleOutcome { probability });
    }

    let mut measured = vec![false; state.num_modes()];
    for &m in modes {
        measured[m] = true;
    }
    let mut mode_map = Vec::with_capacity(state.num_modes());
    let mut next = 0;
    for &is_measured in &measured {
        if is_measured {
            mode_map.push(None);
        } else {
            mode_map.push(Some(next));
            next += 1;
        }
    }

    let scale = 1.0 / weight.sqrt();
    let mut out = SparseState::empty(next);
    for (occ, amp) in terms {
        let kept: Vec<u8> = occ
            .counts()
            .iter()
            .zip(&measured)
            .filter(|(_, &m)| !m)
            .map(|(&c, _)| c)
            .collect();
        out.add_amplitude(Occupation::new(kept), amp * scale);
    }
    Ok(Collapsed {
        state: out,
        mode_map,
        probability,
    })
}

/// Projects onto `outcome` and leaves the measured modes in vacuum (the
/// detected photons are absorbed). Mode indexing is unchanged.
pub fn detect_and_absorb(
    state: &SparseState,
    modes: &[usize],
    outcome: &DetectionOutcome,
) -> Result<(SparseState, f64)> {
    check_measured_modes(state, modes)?;
    let counts = outcome_counts(modes, outcome)?;
    let total = state.norm_sqr();
    let (terms, weight) = matching_terms(state, modes, &counts);
    let probability = weight / total;
    if probability < MIN_OUTCOME_PROBABILITY {
        return Err(Error::ImpossibleOutcome { probability });
    }
    let scale = 1.0 / weight.sqrt();
    let mut out = SparseState::empty(state.num_modes());
    for (occ, amp) in terms {
        let mut c = occ.counts().to_vec();
        for &m in modes {
            c[m] = 0;
        }
        out.add_amplitude(Occupation::new(c), amp * scale);
    }
    Ok((out, probability))
}

/// Inverse-CDF draw over the lexicographically ordered outcomes.
pub fn sample_outcome<R: Rng + ?Sized>(dist: &OutcomeDistribution, rng: &mut R) -> DetectionOutcome {
    let u: f64 = rng.random::<f64>() * dist.total();
    let mut cumulative = 0.0;
    let mut chosen = dist.entries.len() - 1;
    for (i, (_, p)) in dist.entries.iter().enumerate() {
        cumulative += p;
        if u < cumulative && *p > 0.0 {
            chosen = i;
            break;
        }
    }
    DetectionOutcome {
        modes: dist.modes.clone(),
        counts: dist.entries[chosen].0.clone(),
    }
}

pub fn sample_detection_with<R: Rng + ?Sized>(
    state: &SparseState,
    modes: &[usize],
    rng: &mut R,
) -> Result<(DetectionOutcome, Collapsed)> {
    let dist = detection_distribution(state, modes)?;
    let outcome = sample_outcome(&dist, rng);
    let collapsed = collapse(state, modes, &outcome)?;
    Ok((outcome, collapsed))
}

/// Samples a detection on `modes` and returns the collapsed state.
pub fn sample_detection(state: &SparseState, modes: &[usize], rng_seed: u64) -> Result<(DetectionOutcome, Collapsed)> {
    sample_detection_with(state, modes, &mut rng_from_seed(rng_seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::make_basis_state;
    use crate::linear_optics::{apply, embed};
    use crate::random::{haar_unitary, rng_from_seed};
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn w2() -> SparseState {
        let s = Complex64::new(FRAC_1_SQRT_2, 0.0);
        SparseState::from_terms(2, [(Occupation::new(vec![1, 0]), s), (Occupation::new(vec![0, 1]), s)]).unwrap()
    }

    fn random_two_photon_state(seed: u64, modes: usize) -> SparseState {
        let mut rng = rng_from_seed(seed);
        let mut counts = vec![0u8; modes];
        counts[0] = 1;
        counts[1] = 1;
        let start = SparseState::basis(Occupation::new(counts));
        let u = haar_unitary(&mut rng, modes);
        apply(&start, &embed(u, &(0..modes).collect::<Vec<_>>()).unwrap()).unwrap()
    }

    #[test]
    fn w2_distribution() {
        let d = detection_distribution(&w2(), &[0, 1]).unwrap();
        assert_eq!(d.len(), 2);
        assert!((d.probability(&[1, 0]) - 0.5).abs() < 1e-15);
        assert!((d.probability(&[0, 1]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dual_rail_bell_pair_distribution() {
        let s = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let psi = SparseState::from_terms(
            4,
            [
                (Occupation::new(vec![1, 0, 0, 1]), s),
                (Occupation::new(vec![0, 1, 1, 0]), s),
            ],
        )
        .unwrap();
        let d = detection_distribution(&psi, &[0, 1, 2, 3]).unwrap();
        assert_eq!(d.len(), 2);
        assert!(d.iter().all(|(_, p)| (p - 0.5).abs() < 1e-15));
    }

    #[test]
    fn vacuum_distribution() {
        let d = detection_distribution(&SparseState::vacuum(3), &[2, 0]).unwrap();
        assert_eq!(d.entries(), &[(vec![0, 0], 1.0)]);
    }

    #[test]
    fn errors() {
        let unnorm = make_basis_state(&[1, 0]).unwrap().scale(Complex64::new(2.0, 0.0));
        assert!(matches!(
            detection_distribution(&unnorm, &[0]),
            Err(Error::NotNormalized { .. })
        ));
        assert!(matches!(
            detection_distribution(&w2(), &[0, 0]),
            Err(Error::InvalidModeSet(_))
        ));
        assert!(matches!(
            detection_distribution(&w2(), &[2]),
            Err(Error::InvalidModeSet(_))
        ));
        let impossible = DetectionOutcome::new(vec![0], vec![2]).unwrap();
        assert!(matches!(
            collapse(&w2(), &[0], &impossible),
            Err(Error::ImpossibleOutcome { .. })
        ));
    }

    #[test]
    fn collapse_w2() {
        let outcome = DetectionOutcome::new(vec![0], vec![0]).unwrap();
        let c = collapse(&w2(), &[0], &outcome).unwrap();
        assert!((c.probability - 0.5).abs() < 1e-15);
        assert_eq!(c.state.num_modes(), 1);
        assert!((c.state.amplitude(&Occupation::new(vec![1])).norm() - 1.0).abs() < 1e-15);
        assert_eq!(c.mode_map, vec![None, Some(0)]);
    }

    #[test]
    fn absorb_keeps_indexing() {
        let outcome = DetectionOutcome::new(vec![1], vec![1]).unwrap();
        let (s, p) = detect_and_absorb(&w2(), &[1], &outcome).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert_eq!(s.num_modes(), 2);
        assert_eq!(s.sorted_terms()[0].0, &Occupation::vacuum(2));
    }

    #[test]
    fn sampling() {
        let (o, _) = sample_detection(&SparseState::vacuum(2), &[0, 1], 5).unwrap();
        assert_eq!(o.counts(), &[0, 0]);
        let a = sample_detection(&w2(), &[0, 1], 17).unwrap().0;
        let b = sample_detection(&w2(), &[0, 1], 17).unwrap().0;
        assert_eq!(a, b);

        let trials = 100_000;
        let state = w2();
        let dist = detection_distribution(&state, &[0, 1]).unwrap();
        let mut rng = rng_from_seed(2024);
        let hits = (0..trials)
            .filter(|_| sample_outcome(&dist, &mut rng).counts() == [1, 0])
            .count();
        let freq = hits as f64 / trials as f64;
        assert!((freq - 0.5).abs() < 0.01, "{freq}");
    }

    #[test]
    fn measuring_everything_counts_all_photons() {
        for seed in 0..20 {
            let s = random_two_photon_state(seed, 4);
            let d = detection_distribution(&s, &[0, 1, 2, 3]).unwrap();
            assert!(d.iter().all(|(o, _)| o.total() == 2));
            assert!((d.total() - 1.0).abs() < 1e-9);
        }
    }

    /// Two-step (collapse then measure) marginal statistics agree with a
    /// single joint measurement.
    fn two_step_vs_joint(state: &SparseState, first: &[usize], second: &[usize]) -> f64 {
        let joint_modes: Vec<usize> = first.iter().chain(second).copied().collect();
        let joint = detection_distribution(state, &joint_modes).unwrap();
        let mut worst: f64 = 0.0;
        let d1 = detection_distribution(state, first).unwrap();
        for (o1, p1) in d1.iter() {
            let c = collapse(state, first, &o1).unwrap();
            let remapped: Vec<usize> = second.iter().map(|&m| c.mode_map[m].unwrap()).collect();
            let d2 = detection_distribution(&c.state, &remapped).unwrap();
            for (o2, p2) in d2.iter() {
                let key: Vec<u8> = o1.counts().iter().chain(o2.counts()).copied().collect();
                worst = worst.max((p1 * p2 - joint.probability(&key)).abs());
            }
        }
        worst
    }

    #[test]
    fn collapse_consistency_examples() {
        for seed in 0..10 {
            let s = random_two_photon_state(seed, 5);
            assert!(two_step_vs_joint(&s, &[0, 3], &[1, 4]) <= 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn born_totality(seed in any::<u64>(), mask in 1u8..32) {
            let s = random_two_photon_state(seed, 5);
            let modes: Vec<usize> = (0..5).filter(|m| mask & (1 << m) != 0).collect();
            let d = detection_distribution(&s, &modes).unwrap();
            prop_assert!((d.total() - 1.0).abs() <= 1e-9);
            prop_assert!(d.iter().all(|(_, p)| p >= 0.0));
        }

        #[test]
        fn collapse_consistency(seed in any::<u64>()) {
            let s = random_two_photon_state(seed, 4);
            prop_assert!(two_step_vs_joint(&s, &[2], &[0, 1]) <= 1e-9);
        }
    }
}
