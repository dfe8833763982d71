//! W states, their copies, symmetric multi-party states and heralded sources.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{Occupation, SparseState, NORMALIZED_TOL};
use crate::linear_optics::{apply, complex_hadamard};

/// Largest number of basis terms `sigma_star` will build.
pub const SIGMA_STAR_MAX_TERMS: u128 = 10_000_000;

/// Per-mode phases of a single-photon W state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WPhases(Vec<f64>);

impl WPhases {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("non-finite W phase".into()));
        }
        Ok(WPhases(theta))
    }

    pub fn zeros(k: usize) -> Self {
        WPhases(vec![0.0; k])
    }

    pub fn theta(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Assignment of global modes to parties.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyLayout {
    parties: Vec<Vec<usize>>,
}

impl PartyLayout {
    /// Checks that the lists partition `0..num_modes`.
    pub fn new(parties: Vec<Vec<usize>>, num_modes: usize) -> Result<Self> {
        let mut owner = vec![false; num_modes];
        for (p, modes) in parties.iter().enumerate() {
            for &m in modes {
                if m >= num_modes {
                    return Err(Error::InvalidConfiguration(format!(
                        "party {p} holds mode {m} of a {num_modes}-mode state"
                    )));
                }
                if owner[m] {
                    return Err(Error::InvalidConfiguration(format!("mode {m} assigned twice")));
                }
                owner[m] = true;
            }
        }
        if let Some(m) = owner.iter().position(|&o| !o) {
            return Err(Error::InvalidConfiguration(format!("mode {m} has no owner")));
        }
        Ok(PartyLayout { parties })
    }

    /// Party `j` holds mode `j` of each of `copies` K-mode copies.
    pub fn interleaved(k: usize, copies: usize) -> Self {
        PartyLayout {
            parties: (0..k).map(|j| (0..copies).map(|c| c * k + j).collect()).collect(),
        }
    }

    /// Party `q` holds the contiguous block `q*m .. (q+1)*m`.
    pub fn blocks(k: usize, m: usize) -> Self {
        PartyLayout {
            parties: (0..k).map(|q| (q * m..(q + 1) * m).collect()).collect(),
        }
    }

    pub fn parties(&self) -> &[Vec<usize>] {
        &self.parties
    }

    pub fn party(&self, j: usize) -> &[usize] {
        &self.parties[j]
    }

    pub fn num_parties(&self) -> usize {
        self.parties.len()
    }

    pub fn num_modes(&self) -> usize {
        self.parties.iter().map(Vec::len).sum()
    }

    /// Mode order that lays parties out as contiguous blocks; feed to
    /// `SparseState::permute_modes`.
    pub fn block_order(&self) -> Vec<usize> {
        self.parties.concat()
    }

    /// Photons held by each party in `occ`.
    pub fn party_totals(&self, occ: &Occupation) -> Vec<usize> {
        self.parties
            .iter()
            .map(|modes| modes.iter().map(|&m| occ.get(m) as usize).sum())
            .collect()
    }

    pub fn check_state(&self, state: &SparseState) -> Result<()> {
        if self.num_modes() != state.num_modes() {
            return Err(Error::InvalidConfiguration(format!(
                "layout covers {} modes, state has {}",
                self.num_modes(),
                state.num_modes()
            )));
        }
        PartyLayout::new(self.parties.clone(), state.num_modes()).map(|_| ())
    }
}

/// `Σ_j e^{iθ_j} |1_j) / sqrt(K)`.
pub fn w_state(k: usize, phases: &WPhases) -> Result<SparseState> {
    if k == 0 {
        return Err(Error::InvalidDimension("W state on zero modes".into()));
    }
    if phases.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "{} phases for a {k}-mode W state",
            phases.len()
        )));
    }
    let scale = 1.0 / (k as f64).sqrt();
    SparseState::from_terms(
        k,
        phases
            .theta()
            .iter()
            .enumerate()
            .map(|(j, &t)| (Occupation::single(k, j), Complex64::from_polar(scale, t))),
    )
}

/// `|W_K>^{⊗N}` with the interleaved layout.
pub fn w_copies(k: usize, n: usize, phases: &WPhases) -> Result<(SparseState, PartyLayout)> {
    if n == 0 || k < n {
        return Err(Error::InvalidConfiguration(format!(
            "need K >= N >= 1, got K={k}, N={n}"
        )));
    }
    let w = w_state(k, phases)?;
    let mut state = w.clone();
    for _ in 1..n {
        state = state.tensor(&w);
    }
    Ok((state, PartyLayout::interleaved(k, n)))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    fn heap(k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(cur.clone());
            return;
        }
        for i in 0..k {
            heap(k - 1, cur, out);
            if k.is_multiple_of(2) {
                cur.swap(i, k - 1);
            } else {
                cur.swap(0, k - 1);
            }
        }
    }
    heap(n, &mut cur, &mut out);
    out.sort();
    out
}

/// Adds `scale * Σ_π ⊗_i |e_{π(i)})` with the i-th factor placed on party
/// `parties[i]` (block layout of width `m`).
fn add_symmetric_terms(out: &mut SparseState, parties: &[usize], m: usize, perms: &[Vec<usize>], scale: f64) {
    let total_modes = out.num_modes();
    for perm in perms {
        let mut counts = vec![0u8; total_modes];
        for (i, &p) in parties.iter().enumerate() {
            counts[p * m + perm[i]] = 1;
        }
        out.add_amplitude(Occupation::new(counts), Complex64::new(scale, 0.0));
    }
}

/// Fully symmetric N-party state, each party holding M modes (the last M−N
/// of them vacuum).
pub fn sigma_state(n: usize, m: usize) -> Result<SparseState> {
    if n == 0 || m < n {
        return Err(Error::InvalidConfiguration(format!(
            "need M >= N >= 1, got N={n}, M={m}"
        )));
    }
    let perms = permutations(n);
    let scale = 1.0 / (perms.len() as f64).sqrt();
    let mut out = SparseState::empty(n * m);
    add_symmetric_terms(&mut out, &(0..n).collect::<Vec<_>>(), m, &perms, scale);
    Ok(out)
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k as u128).fold(1u128, |acc, i| acc * (n as u128 - i) / (i + 1))
}

fn subsets(k: usize, n: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, k: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..=k - left {
            cur.push(i);
            rec(i + 1, k, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, k, n, &mut Vec::new(), &mut out);
    out
}

/// Uniform superposition of `sigma_state(N, M)` over every N-subset of K
/// parties, in block layout.
pub fn sigma_star(k: usize, n: usize, m: usize) -> Result<(SparseState, PartyLayout)> {
    if n == 0 || k < n || m < n {
        return Err(Error::InvalidConfiguration(format!(
            "need K >= N >= 1 and M >= N, got K={k}, N={n}, M={m}"
        )));
    }
    let subset_count = binomial(k, n);
    let perm_count: u128 = (1..=n as u128).product();
    if subset_count.saturating_mul(perm_count) > SIGMA_STAR_MAX_TERMS {
        return Err(Error::TooLarge(format!(
            "sigma_star({k},{n},{m}) has {subset_count} x {perm_count} terms"
        )));
    }
    let perms = permutations(n);
    let scale = 1.0 / ((subset_count * perm_count) as f64).sqrt();
    let mut out = SparseState::empty(k * m);
    for alpha in subsets(k, n) {
        add_symmetric_terms(&mut out, &alpha, m, &perms, scale);
    }
    Ok((out, PartyLayout::blocks(k, m)))
}

/// Phases `arg U_{j,source}` that the complex Hadamard imprints on a photon
/// entering at `source`.
pub fn heralded_phases(k: usize, source: usize) -> Result<WPhases> {
    let h = complex_hadamard(k)?;
    if source >= k {
        return Err(Error::InvalidParameter(format!("source {source} outside 0..{k}")));
    }
    WPhases::new((0..k).map(|j| h.matrix()[(j, source)].arg()).collect())
}

/// The W-type state produced by a single photon entering the K-mode complex
/// Hadamard at `source`.
pub fn heralded_w(k: usize, source: usize) -> Result<SparseState> {
    if source >= k {
        return Err(Error::InvalidParameter(format!("source {source} outside 0..{k}")));
    }
    apply(
        &SparseState::basis(Occupation::single(k, source)),
        &complex_hadamard(k)?,
    )
}

/// `|<a|b>|²` for normalized states.
pub fn fidelity(a: &SparseState, b: &SparseState) -> Result<f64> {
    for s in [a, b] {
        let norm_sqr = s.norm_sqr();
        if (norm_sqr - 1.0).abs() > NORMALIZED_TOL {
            return Err(Error::NotNormalized { norm_sqr });
        }
    }
    a.fidelity(b)
}

/// Terms in which no party holds more than one photon.
pub fn collision_free_projection(state: &SparseState, layout: &PartyLayout) -> SparseState {
    state.filter(|occ| layout.party_totals(occ).iter().all(|&t| t <= 1))
}

/// Probability that some party holds two or more photons.
pub fn collision_weight(state: &SparseState, layout: &PartyLayout) -> f64 {
    state.norm_sqr() - collision_free_projection(state, layout).norm_sqr()
}

/// `Π_{i<N} (1 − i/K)`: fraction of maps from N copies to K parties that are
/// injective.
pub fn injection_fraction(k: usize, n: usize) -> f64 {
    (0..n).map(|i| 1.0 - i as f64 / k as f64).product()
}

/// Exact collision probability of `|W_K>^{⊗N}`.
pub fn collision_probability(k: usize, n: usize) -> f64 {
    1.0 - injection_fraction(k, n)
}

/// Multiplies every mode of party `q` by `e^{i φ_q}`.
pub fn apply_party_phases(state: &SparseState, layout: &PartyLayout, phases: &[f64]) -> Result<SparseState> {
    if phases.len() != layout.num_parties() {
        return Err(Error::DimensionMismatch(format!(
            "{} phases for {} parties",
            phases.len(),
            layout.num_parties()
        )));
    }
    let mut per_mode = vec![0.0; state.num_modes()];
    for (q, modes) in layout.parties().iter().enumerate() {
        for &m in modes {
            per_mode[m] = phases[q];
        }
    }
    state.apply_mode_phases(&per_mode)
}

/// Fidelity of `|W_K>^{⊗N}` with `|Σ*(K,N,N)>`, and of its normalized
/// collision-free part with the same state.
#[derive(Clone, Debug, Serialize)]
pub struct SigmaStarComparison {
    pub k: usize,
    pub n: usize,
    pub fidelity: f64,
    pub projected_fidelity: f64,
    pub collision_weight: f64,
    pub collision_formula: f64,
    /// `N (1 − fidelity)`, the constant in `fidelity = 1 − c/N`.
    pub c: f64,
}

pub fn compare_w_copies_sigma_star(k: usize, n: usize) -> Result<SigmaStarComparison> {
    let (w, layout) = w_copies(k, n, &WPhases::zeros(k))?;
    let (sigma, _) = sigma_star(k, n, n)?;
    let blocked = w.permute_modes(&layout.block_order())?;
    let fid = fidelity(&blocked, &sigma)?;
    let projected = collision_free_projection(&w, &layout).permute_modes(&layout.block_order())?;
    let projected_fidelity = fidelity(&projected.normalize()?, &sigma)?;
    Ok(SigmaStarComparison {
        k,
        n,
        fidelity: fid,
        projected_fidelity,
        collision_weight: collision_weight(&w, &layout),
        collision_formula: collision_probability(k, n),
        c: n as f64 * (1.0 - fid),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_optics::phase_shifters;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn w_examples() {
        let w2 = w_state(2, &WPhases::zeros(2)).unwrap();
        assert!((w2.amplitude(&Occupation::new(vec![1, 0])) - c(FRAC_1_SQRT_2)).norm() < 1e-15);
        assert!((w2.amplitude(&Occupation::new(vec![0, 1])) - c(FRAC_1_SQRT_2)).norm() < 1e-15);

        let w3 = w_state(3, &WPhases::new(vec![0.0, PI, 0.0]).unwrap()).unwrap();
        let s = 1.0 / 3f64.sqrt();
        for (j, sign) in [1.0, -1.0, 1.0].iter().enumerate() {
            assert!((w3.amplitude(&Occupation::single(3, j)) - c(sign * s)).norm() < 1e-15);
        }
        let w1 = w_state(1, &WPhases::zeros(1)).unwrap();
        assert_eq!(w1.sorted_terms(), vec![(&Occupation::new(vec![1]), c(1.0))]);
        assert!(matches!(
            w_state(3, &WPhases::zeros(2)),
            Err(Error::DimensionMismatch(_))
        ));
        for k in 1..40 {
            assert!((w_state(k, &WPhases::zeros(k)).unwrap().norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn copies_examples() {
        let (s, layout) = w_copies(2, 2, &WPhases::zeros(2)).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.iter().all(|(_, a)| (a - c(0.5)).norm() < 1e-15));
        assert_eq!(layout.parties(), &[vec![0, 2], vec![1, 3]]);

        let (s, layout) = w_copies(3, 1, &WPhases::zeros(3)).unwrap();
        assert_eq!(s.num_modes(), 3);
        assert_eq!(layout.num_parties(), 3);
        assert!(matches!(
            w_copies(2, 3, &WPhases::zeros(2)),
            Err(Error::InvalidConfiguration(_))
        ));

        let (s, layout) = w_copies(27, 3, &WPhases::zeros(27)).unwrap();
        let weight = collision_weight(&s, &layout);
        let expected = 1.0 - 26.0 * 25.0 / 729.0;
        assert!((weight - expected).abs() < 1e-12, "{weight}");
        assert!((collision_probability(27, 3) - expected).abs() < 1e-15);
    }

    #[test]
    fn sigma_examples() {
        let s22 = sigma_state(2, 2).unwrap();
        assert_eq!(s22.len(), 2);
        assert!((s22.amplitude(&Occupation::new(vec![1, 0, 0, 1])) - c(FRAC_1_SQRT_2)).norm() < 1e-15);
        assert!((s22.amplitude(&Occupation::new(vec![0, 1, 1, 0])) - c(FRAC_1_SQRT_2)).norm() < 1e-15);

        let s33 = sigma_state(3, 3).unwrap();
        assert_eq!(s33.len(), 6);
        let s44 = sigma_state(4, 4).unwrap();
        assert_eq!(s44.len(), 24);
        assert!(s44.iter().all(|(_, a)| (a - c(1.0 / 24f64.sqrt())).norm() < 1e-15));

        let padded = sigma_state(2, 3).unwrap();
        assert!(padded.iter().all(|(o, _)| o.get(2) == 0 && o.get(5) == 0));
        assert!(matches!(sigma_state(3, 2), Err(Error::InvalidConfiguration(_))));
    }

    #[test]
    fn sigma_is_party_symmetric() {
        let s = sigma_state(3, 4).unwrap();
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            let mut order: Vec<usize> = (0..12).collect();
            for i in 0..4 {
                order.swap(a * 4 + i, b * 4 + i);
            }
            assert!(s.permute_modes(&order).unwrap().max_abs_diff(&s).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn sigma_star_examples() {
        let (a, _) = sigma_star(3, 3, 3).unwrap();
        assert!(a.max_abs_diff(&sigma_state(3, 3).unwrap()).unwrap() < 1e-15);
        let (b, layout) = sigma_star(3, 2, 2).unwrap();
        assert!((b.norm_sqr() - 1.0).abs() < 1e-12);
        assert_eq!(b.len(), 6);
        assert_eq!(layout.num_modes(), 6);
        assert!(matches!(sigma_star(40, 8, 8), Err(Error::TooLarge(_))));
    }

    #[test]
    fn w_copies_against_sigma_star() {
        let two = compare_w_copies_sigma_star(8, 2).unwrap();
        assert!((two.fidelity - 0.875).abs() < 1e-12);
        assert!((two.projected_fidelity - 1.0).abs() < 1e-9);
        let three = compare_w_copies_sigma_star(27, 3).unwrap();
        assert!((three.fidelity - 26.0 * 25.0 / 729.0).abs() < 1e-12);
        assert!(three.fidelity > two.fidelity);
        assert!((three.collision_weight - three.collision_formula).abs() < 1e-9);
    }

    #[test]
    fn heralded_sources() {
        for k in [2, 3, 4, 8] {
            let states: Vec<_> = (0..k).map(|s| heralded_w(k, s).unwrap()).collect();
            for i in 0..k {
                for j in 0..i {
                    assert!(states[i].inner_product(&states[j]).unwrap().norm() <= 1e-10);
                }
                let phases = heralded_phases(k, i).unwrap();
                assert!(states[i].max_abs_diff(&w_state(k, &phases).unwrap()).unwrap() < 1e-12);
                let undo: Vec<f64> = phases.theta().iter().map(|t| -t).collect();
                let fixed = apply(&states[i], &phase_shifters(&undo)).unwrap();
                let f = fidelity(&fixed, &w_state(k, &WPhases::zeros(k)).unwrap()).unwrap();
                assert!(f >= 1.0 - 1e-12);
            }
        }
        let w = heralded_w(2, 0).unwrap();
        assert!(w.max_abs_diff(&w_state(2, &WPhases::zeros(2)).unwrap()).unwrap() < 1e-15);
        assert!(heralded_w(3, 3).is_err());
    }

    #[test]
    fn fidelity_examples() {
        let w = w_state(4, &WPhases::zeros(4)).unwrap();
        assert!((fidelity(&w, &w).unwrap() - 1.0).abs() < 1e-12);
        let a = SparseState::basis(Occupation::new(vec![1, 0]));
        let b = SparseState::basis(Occupation::new(vec![0, 1]));
        assert_eq!(fidelity(&a, &b).unwrap(), 0.0);
        assert!(matches!(
            fidelity(&a, &SparseState::vacuum(3)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn layout_validation() {
        assert!(PartyLayout::new(vec![vec![0, 1], vec![2]], 3).is_ok());
        assert!(PartyLayout::new(vec![vec![0, 1], vec![1]], 3).is_err());
        assert!(PartyLayout::new(vec![vec![0]], 2).is_err());
        assert_eq!(PartyLayout::interleaved(3, 2).block_order(), vec![0, 3, 1, 4, 2, 5]);
    }
}
