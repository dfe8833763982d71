//! Sparse Fock-space states over a fixed number of optical modes.
//!
//! A [`SparseState`] stores only the occupation patterns that carry a
//! non-negligible amplitude. The protocols simulated here never populate a
//! dense support: `|W_K>^{⊗N}` has `K^N` terms while the symmetric subspace it
//! lives in has dimension `C(NK + N - 1, N)`.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::fmt;
use std::hash::BuildHasherDefault;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Amplitudes below this magnitude are dropped after every linear-optics step.
pub const PRUNE_THRESHOLD: f64 = 1e-14;

/// Tolerance used when a state is required to be normalized.
pub const NORMALIZED_TOL: f64 = 1e-9;

type FixedHasher = BuildHasherDefault<DefaultHasher>;

/// Photon counts per mode.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Occupation(Vec<u8>);

impl Occupation {
    pub fn new(counts: Vec<u8>) -> Self {
        Occupation(counts)
    }

    /// Builds an occupation from signed counts, rejecting negative entries
    /// and entries that do not fit the per-mode storage width.
    pub fn from_counts(counts: &[i64]) -> Result<Self> {
        counts
            .iter()
            .map(|&c| u8::try_from(c).map_err(|_| Error::InvalidOccupation(format!("entry {c} outside 0..=255"))))
            .collect::<Result<Vec<u8>>>()
            .map(Occupation)
    }

    pub fn vacuum(num_modes: usize) -> Self {
        Occupation(vec![0; num_modes])
    }

    /// One photon in `mode`, vacuum elsewhere.
    pub fn single(num_modes: usize, mode: usize) -> Self {
        let mut counts = vec![0; num_modes];
        counts[mode] = 1;
        Occupation(counts)
    }

    pub fn counts(&self) -> &[u8] {
        &self.0
    }

    pub fn num_modes(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|&c| c as usize).sum()
    }

    pub fn get(&self, mode: usize) -> u8 {
        self.0[mode]
    }

    pub fn concat(&self, other: &Occupation) -> Occupation {
        let mut counts = Vec::with_capacity(self.0.len() + other.0.len());
        counts.extend_from_slice(&self.0);
        counts.extend_from_slice(&other.0);
        Occupation(counts)
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.0
    }
}

impl fmt::Debug for Occupation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|")?;
        for c in &self.0 {
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<u8>> for Occupation {
    fn from(counts: Vec<u8>) -> Self {
        Occupation(counts)
    }
}

/// A pure state of bosonic modes, stored as a map from occupation pattern to
/// amplitude.
#[derive(Clone)]
pub struct SparseState {
    num_modes: usize,
    amplitudes: HashMap<Occupation, Complex64, FixedHasher>,
}

impl SparseState {
    /// The all-vacuum state on `num_modes` modes.
    pub fn vacuum(num_modes: usize) -> Self {
        Self::basis(Occupation::vacuum(num_modes))
    }

    /// The Fock basis state `occ` with amplitude one.
    pub fn basis(occ: Occupation) -> Self {
        let mut state = Self::empty(occ.num_modes());
        state.amplitudes.insert(occ, Complex64::new(1.0, 0.0));
        state
    }

    /// The zero vector; useful as an accumulator.
    pub fn empty(num_modes: usize) -> Self {
        SparseState {
            num_modes,
            amplitudes: HashMap::default(),
        }
    }

    /// Collects `(occupation, amplitude)` pairs, summing duplicates.
    pub fn from_terms<I>(num_modes: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Occupation, Complex64)>,
    {
        let mut state = Self::empty(num_modes);
        for (occ, amp) in terms {
            if occ.num_modes() != num_modes {
                return Err(Error::DimensionMismatch(format!(
                    "occupation {occ:?} has {} modes, state has {num_modes}",
                    occ.num_modes()
                )));
            }
            if !(amp.re.is_finite() && amp.im.is_finite()) {
                return Err(Error::InvalidParameter(format!("non-finite amplitude on {occ:?}")));
            }
            state.add_amplitude(occ, amp);
        }
        Ok(state)
    }

    pub(crate) fn add_amplitude(&mut self, occ: Occupation, amp: Complex64) {
        *self.amplitudes.entry(occ).or_insert(Complex64::new(0.0, 0.0)) += amp;
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    /// Number of stored basis terms.
    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn amplitude(&self, occ: &Occupation) -> Complex64 {
        self.amplitudes.get(occ).copied().unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Occupation, &Complex64)> {
        self.amplitudes.iter()
    }

    /// Terms in lexicographic order of their occupation.
    pub fn sorted_terms(&self) -> Vec<(&Occupation, Complex64)> {
        let mut terms: Vec<_> = self.amplitudes.iter().map(|(o, a)| (o, *a)).collect();
        terms.sort_by(|a, b| a.0.cmp(b.0));
        terms
    }

    pub fn norm_sqr(&self) -> f64 {
        let mut terms: Vec<f64> = self.amplitudes.values().map(|a| a.norm_sqr()).collect();
        // summation order must not depend on hash layout
        terms.sort_by(|a, b| a.total_cmp(b));
        terms.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORMALIZED_TOL
    }

    pub fn normalize(&self) -> Result<Self> {
        let norm = self.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm);
        }
        Ok(self.scale(Complex64::new(1.0 / norm, 0.0)))
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        SparseState {
            num_modes: self.num_modes,
            amplitudes: self.amplitudes.iter().map(|(o, a)| (o.clone(), a * factor)).collect(),
        }
    }

    /// Mode-concatenating tensor product: `self` occupies the first modes.
    pub fn tensor(&self, other: &SparseState) -> SparseState {
        let mut out = SparseState::empty(self.num_modes + other.num_modes);
        out.amplitudes.reserve(self.len() * other.len());
        for (oa, aa) in &self.amplitudes {
            for (ob, ab) in &other.amplitudes {
                out.amplitudes.insert(oa.concat(ob), aa * ab);
            }
        }
        out
    }

    /// `<self|other>`, conjugate-linear in `self`.
    pub fn inner_product(&self, other: &SparseState) -> Result<Complex64> {
        if self.num_modes != other.num_modes {
            return Err(Error::DimensionMismatch(format!(
                "inner product of {}-mode and {}-mode states",
                self.num_modes, other.num_modes
            )));
        }
        let (small, large, conj_small) = if self.len() <= other.len() {
            (self, other, true)
        } else {
            (other, self, false)
        };
        let mut terms: Vec<(&Occupation, Complex64)> = small
            .amplitudes
            .iter()
            .filter_map(|(occ, a)| {
                large.amplitudes.get(occ).map(|b| {
                    let v = if conj_small { a.conj() * b } else { b.conj() * a };
                    (occ, v)
                })
            })
            .collect();
        terms.sort_by(|a, b| a.0.cmp(b.0));
        Ok(terms.into_iter().map(|(_, v)| v).sum())
    }

    /// `|<self|other>|^2 / (|self|^2 |other|^2)`.
    pub fn fidelity(&self, other: &SparseState) -> Result<f64> {
        let overlap = self.inner_product(other)?;
        let denom = self.norm_sqr() * other.norm_sqr();
        if denom == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(overlap.norm_sqr() / denom)
    }

    /// Photon totals present in the support, ascending.
    pub fn photon_sectors(&self) -> Vec<usize> {
        let mut sectors: Vec<usize> = self.amplitudes.keys().map(Occupation::total).collect();
        sectors.sort_unstable();
        sectors.dedup();
        sectors
    }

    /// The shared photon number of every support vector.
    pub fn total_photon_number(&self) -> Result<usize> {
        let sectors = self.photon_sectors();
        match sectors.as_slice() {
            [] => Err(Error::ZeroNorm),
            [n] => Ok(*n),
            _ => Err(Error::MixedSector(sectors)),
        }
    }

    /// Drops amplitudes with magnitude below `threshold`.
    pub fn prune(&mut self, threshold: f64) {
        self.amplitudes.retain(|_, a| a.norm() >= threshold);
    }

    pub fn pruned(mut self) -> Self {
        self.prune(PRUNE_THRESHOLD);
        self
    }

    /// Keeps only the terms whose occupation satisfies `keep`.
    pub fn filter<F>(&self, mut keep: F) -> SparseState
    where
        F: FnMut(&Occupation) -> bool,
    {
        SparseState {
            num_modes: self.num_modes,
            amplitudes: self
                .amplitudes
                .iter()
                .filter(|(o, _)| keep(o))
                .map(|(o, a)| (o.clone(), *a))
                .collect(),
        }
    }

    /// Reorders modes: new mode `k` is old mode `order[k]`.
    pub fn permute_modes(&self, order: &[usize]) -> Result<SparseState> {
        check_permutation(order, self.num_modes)?;
        let amplitudes = self
            .amplitudes
            .iter()
            .map(|(occ, a)| {
                let counts = order.iter().map(|&old| occ.get(old)).collect();
                (Occupation(counts), *a)
            })
            .collect();
        Ok(SparseState {
            num_modes: self.num_modes,
            amplitudes,
        })
    }

    /// Multiplies each term by `exp(i Σ_j n_j φ_j)`.
    pub fn apply_mode_phases(&self, phases: &[f64]) -> Result<SparseState> {
        if phases.len() != self.num_modes {
            return Err(Error::DimensionMismatch(format!(
                "{} phases for {} modes",
                phases.len(),
                self.num_modes
            )));
        }
        let amplitudes = self
            .amplitudes
            .iter()
            .map(|(occ, a)| {
                let angle: f64 = occ.counts().iter().zip(phases).map(|(&n, &phi)| n as f64 * phi).sum();
                (occ.clone(), a * Complex64::from_polar(1.0, angle))
            })
            .collect();
        Ok(SparseState {
            num_modes: self.num_modes,
            amplitudes,
        })
    }

    /// `self + factor * other`.
    pub fn add_scaled(&mut self, other: &SparseState, factor: Complex64) -> Result<()> {
        if self.num_modes != other.num_modes {
            return Err(Error::DimensionMismatch(format!(
                "adding {}-mode state to {}-mode state",
                other.num_modes, self.num_modes
            )));
        }
        for (occ, a) in &other.amplitudes {
            self.add_amplitude(occ.clone(), a * factor);
        }
        Ok(())
    }

    /// Maximum amplitude-wise distance to `other`.
    pub fn max_abs_diff(&self, other: &SparseState) -> Result<f64> {
        if self.num_modes != other.num_modes {
            return Err(Error::DimensionMismatch("modes differ".into()));
        }
        let mut worst: f64 = 0.0;
        for (occ, a) in &self.amplitudes {
            worst = worst.max((a - other.amplitude(occ)).norm());
        }
        for (occ, b) in &other.amplitudes {
            if !self.amplitudes.contains_key(occ) {
                worst = worst.max(b.norm());
            }
        }
        Ok(worst)
    }
}

impl fmt::Debug for SparseState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_map();
        for (occ, amp) in self.sorted_terms() {
            list.entry(occ, &amp);
        }
        list.finish()
    }
}

pub(crate) fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "permutation of length {} for {n} modes",
            order.len()
        )));
    }
    let mut seen = vec![false; n];
    for &m in order {
        if m >= n || seen[m] {
            return Err(Error::InvalidModeSet(format!("{order:?} is not a permutation")));
        }
        seen[m] = true;
    }
    Ok(())
}

/// Basis state from signed counts.
pub fn make_basis_state(occ: &[i64]) -> Result<SparseState> {
    Occupation::from_counts(occ).map(SparseState::basis)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use rand::Rng;

    /// Random state with `terms` support vectors of at most `max_photons`
    /// photons per mode.
    pub fn random_state<R: Rng>(rng: &mut R, modes: usize, terms: usize, max_photons: u8) -> SparseState {
        let mut state = SparseState::empty(modes);
        for _ in 0..terms {
            let occ: Vec<u8> = (0..modes).map(|_| rng.random_range(0..=max_photons)).collect();
            let amp = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            state.add_amplitude(Occupation::new(occ), amp);
        }
        state
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::random_state;
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn basis_states() {
        let vac = make_basis_state(&[0, 0]).unwrap();
        assert_eq!(vac.len(), 1);
        assert_eq!(vac.amplitude(&Occupation::new(vec![0, 0])), c(1.0, 0.0));
        let three = make_basis_state(&[1, 1, 1]).unwrap();
        assert_eq!(three.total_photon_number().unwrap(), 3);
        assert!(three.is_normalized());
    }

    #[test]
    fn negative_occupation_rejected() {
        assert!(matches!(make_basis_state(&[1, -1]), Err(Error::InvalidOccupation(_))));
        assert!(matches!(make_basis_state(&[256]), Err(Error::InvalidOccupation(_))));
    }

    #[test]
    fn tensor_concatenates_modes() {
        let vv = SparseState::vacuum(1).tensor(&SparseState::vacuum(1));
        assert_eq!(vv.num_modes(), 2);
        assert_eq!(vv.amplitude(&Occupation::vacuum(2)), c(1.0, 0.0));

        let one = SparseState::basis(Occupation::new(vec![1]));
        let scaled = SparseState::vacuum(1).scale(c(0.3, -0.4));
        let t = one.tensor(&scaled);
        assert_eq!(t.amplitude(&Occupation::new(vec![1, 0])), c(0.3, -0.4));
    }

    #[test]
    fn inner_products() {
        let vac = SparseState::vacuum(2);
        assert_eq!(vac.inner_product(&vac).unwrap(), c(1.0, 0.0));
        let a = make_basis_state(&[1, 0]).unwrap();
        let b = make_basis_state(&[0, 1]).unwrap();
        assert_eq!(a.inner_product(&b).unwrap(), c(0.0, 0.0));
        assert!(matches!(
            a.inner_product(&SparseState::vacuum(3)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn normalize_examples() {
        let s = SparseState::basis(Occupation::new(vec![1])).scale(c(2.0, 0.0));
        let n = s.normalize().unwrap();
        assert!((n.amplitude(&Occupation::new(vec![1])) - c(1.0, 0.0)).norm() < 1e-15);

        let mut two = SparseState::empty(2);
        two.add_amplitude(Occupation::new(vec![1, 0]), c(1.0, 0.0));
        two.add_amplitude(Occupation::new(vec![0, 1]), c(1.0, 0.0));
        let two = two.normalize().unwrap();
        for (_, a) in two.iter() {
            assert!((a.re - FRAC_1_SQRT_2).abs() < 1e-15);
        }
        assert!(matches!(SparseState::empty(2).normalize(), Err(Error::ZeroNorm)));
    }

    #[test]
    fn photon_number_sectors() {
        assert_eq!(SparseState::vacuum(3).total_photon_number().unwrap(), 0);
        let mut mixed = SparseState::vacuum(2);
        mixed.add_amplitude(Occupation::new(vec![1, 0]), c(1.0, 0.0));
        assert!(matches!(mixed.total_photon_number(), Err(Error::MixedSector(_))));
    }

    #[test]
    fn permute_and_phase() {
        let s = make_basis_state(&[2, 0, 1]).unwrap();
        let p = s.permute_modes(&[2, 0, 1]).unwrap();
        assert_eq!(p.amplitude(&Occupation::new(vec![1, 2, 0])), c(1.0, 0.0));
        assert!(s.permute_modes(&[0, 0, 1]).is_err());
        let ph = s.apply_mode_phases(&[0.25, 0.0, 0.5]).unwrap();
        let a = ph.amplitude(&Occupation::new(vec![2, 0, 1]));
        assert!((a - Complex64::from_polar(1.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn pruning_changes_norm_by_at_most_threshold_per_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let mut s = random_state(&mut rng, 4, 12, 2).normalize().unwrap();
            // inject tiny amplitudes
            s.add_amplitude(Occupation::new(vec![3, 3, 3, 3]), c(5e-15, 0.0));
            s.add_amplitude(Occupation::new(vec![4, 3, 3, 3]), c(0.0, 9e-15));
            let before = s.norm();
            let support = s.len();
            s.prune(PRUNE_THRESHOLD);
            assert!((before - s.norm()).abs() <= PRUNE_THRESHOLD * support as f64);
            assert!(s.iter().all(|(_, a)| a.norm() >= PRUNE_THRESHOLD));
        }
    }

    proptest! {
        #[test]
        fn norm_is_multiplicative(seed in any::<u64>(), ta in 1usize..8, tb in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_state(&mut rng, 3, ta, 2);
            let b = random_state(&mut rng, 2, tb, 2);
            let ab = a.tensor(&b);
            prop_assert!((ab.norm() - a.norm() * b.norm()).abs() <= 1e-12);
        }

        #[test]
        fn inner_product_is_hermitian(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_state(&mut rng, 3, 10, 1);
            let b = random_state(&mut rng, 3, 10, 1);
            let ab = a.inner_product(&b).unwrap();
            let ba = b.inner_product(&a).unwrap();
            prop_assert!((ab - ba.conj()).norm() <= 1e-12);
            let aa = a.inner_product(&a).unwrap();
            prop_assert!(aa.im.abs() <= 1e-12 && aa.re >= 0.0);
        }
    }
}
