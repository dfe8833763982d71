//! Extracting a Bell pair from four symmetric photons ("bleeding"), both
//! on the four-party state directly and sequentially on `|W_K>^{⊗4}`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{Occupation, SparseState};
use crate::linear_optics::{apply, embed, hadamard_tensor_hadamard};
use crate::measurement::{collapse, detection_distribution, MIN_OUTCOME_PROBABILITY};
use crate::random::trial_rng;
use crate::resource_states::{collision_probability, sigma_state, WPhases};
use crate::sequential::{CopyEngine, LocalResponse};

/// Fidelity needed to call a two-party state one of the Bell states.
pub const BELL_FIDELITY_TOL: f64 = 1e-9;

/// The three ways of splitting four local modes into two pairs.
pub const PAIRINGS: [[[usize; 2]; 2]; 3] = [[[0, 1], [2, 3]], [[0, 2], [1, 3]], [[0, 3], [1, 2]]];

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn all_permutations4() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for cc in 0..4 {
                for d in 0..4 {
                    let p = [a, b, cc, d];
                    let mut seen = [false; 4];
                    p.iter().for_each(|&x| seen[x] = true);
                    if seen.iter().all(|&s| s) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

/// `(B_P ± B_Q)/√2` on two parties of four modes each, where
/// `B_{p1p2} = (|p1>|p2> + |p2>|p1>)/√2`, with the second party's modes
/// relabeled by `tau`.
pub fn bell_state(pairing: usize, plus: bool, tau: &[usize; 4]) -> SparseState {
    let [p, q] = PAIRINGS[pairing];
    let sign = if plus { 1.0 } else { -1.0 };
    let mut terms = Vec::with_capacity(4);
    for (pair, weight) in [(p, 1.0), (q, sign)] {
        for (x, y) in [(pair[0], pair[1]), (pair[1], pair[0])] {
            let mut counts = vec![0u8; 8];
            counts[x] = 1;
            counts[4 + tau[y]] = 1;
            terms.push((Occupation::new(counts), c(0.5 * weight)));
        }
    }
    SparseState::from_terms(8, terms).expect("eight-mode terms")
}

/// The six states `B_1..B_6` in a given convention: pairings taken in
/// `order`, and within each pairing the minus combination first when
/// `minus_first`.
pub fn bell_basis(order: &[usize; 3], minus_first: bool, tau: &[usize; 4]) -> Vec<SparseState> {
    order
        .iter()
        .flat_map(|&k| {
            let first = !minus_first;
            [bell_state(k, first, tau), bell_state(k, !first, tau)]
        })
        .collect()
}

const IDENTITY4: [usize; 4] = [0, 1, 2, 3];

#[derive(Clone, Debug, Serialize)]
pub struct DecompositionConvention {
    pub pairing_order: [usize; 3],
    pub minus_first: bool,
    /// Relabeling of the second pair's local modes.
    pub tau: [usize; 4],
}

#[derive(Clone, Debug, Serialize)]
pub struct DecompositionReport {
    pub convention: DecompositionConvention,
    pub fidelity: f64,
    pub conventions_tested: usize,
    pub conventions_matching: usize,
    pub bell_norms: Vec<f64>,
    pub max_pairwise_overlap: f64,
}

fn six_term_sum(order: &[usize; 3], minus_first: bool, tau: &[usize; 4]) -> Result<SparseState> {
    let ab = bell_basis(order, minus_first, &IDENTITY4);
    let cd = bell_basis(order, minus_first, tau);
    let mut total = SparseState::empty(16);
    for (i, (x, y)) in ab.iter().zip(&cd).enumerate() {
        let sign = if (i + 1) % 2 == 0 { 1.0 } else { -1.0 };
        total.add_scaled(&x.tensor(y), c(sign / 6f64.sqrt()))?;
    }
    Ok(total.pruned())
}

/// Searches pairing orders, sign orders and relabelings of C,D's modes for
/// a convention in which the four-party symmetric state equals
/// `(1/√6) Σ_i (−1)^i |B_i>|B_i>`.
pub fn sigma_bell_decomposition_check() -> Result<DecompositionReport> {
    let sigma = sigma_state(4, 4)?;
    let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut first: Option<(DecompositionConvention, f64)> = None;
    let mut tested = 0;
    let mut matching = 0;
    let mut best = 0.0f64;
    for tau in all_permutations4() {
        for order in &orders {
            for minus_first in [true, false] {
                tested += 1;
                let f = sigma.fidelity(&six_term_sum(order, minus_first, &tau)?)?;
                best = best.max(f);
                if f >= 1.0 - BELL_FIDELITY_TOL {
                    matching += 1;
                    if first.is_none() {
                        first = Some((
                            DecompositionConvention {
                                pairing_order: *order,
                                minus_first,
                                tau,
                            },
                            f,
                        ));
                    }
                }
            }
        }
    }
    let (convention, fidelity) = first.ok_or(Error::DecompositionMismatch { best_fidelity: best })?;
    let basis = bell_basis(&convention.pairing_order, convention.minus_first, &IDENTITY4);
    let mut max_overlap = 0.0f64;
    for i in 0..basis.len() {
        for j in 0..i {
            max_overlap = max_overlap.max(basis[i].inner_product(&basis[j])?.norm());
        }
    }
    Ok(DecompositionReport {
        convention,
        fidelity,
        conventions_tested: tested,
        conventions_matching: matching,
        bell_norms: basis.iter().map(|b| b.tensor(b).norm()).collect(),
        max_pairwise_overlap: max_overlap,
    })
}

/// How a two-party, one-photon-each state is classified.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum PairClass {
    Bell {
        /// Index into `bell_basis([0,1,2], true, id)`.
        index: usize,
        tau: [usize; 4],
        fidelity: f64,
    },
    Residual {
        schmidt: Vec<f64>,
        vidal_bound: f64,
        conversion_probability: f64,
        converted_fidelity: f64,
    },
}

fn coefficient_matrix(state: &SparseState) -> Result<DMatrix<Complex64>> {
    let mut a = DMatrix::zeros(4, 4);
    for (occ, amp) in state.iter() {
        let x: Vec<usize> = (0..4).filter(|&m| occ.get(m) > 0).collect();
        let y: Vec<usize> = (4..8).filter(|&m| occ.get(m) > 0).collect();
        if x.len() != 1 || y.len() != 1 || occ.get(x[0]) != 1 || occ.get(y[0]) != 1 {
            return Err(Error::InvalidConfiguration(format!(
                "term {occ:?} is not one photon per party"
            )));
        }
        a[(x[0], y[0] - 4)] = *amp;
    }
    Ok(a)
}

/// Best achievable probability of converting a bipartite pure state with
/// Schmidt weights `lambda` (descending) into a maximally entangled state of
/// rank `d` by local operations and classical communication.
pub fn vidal_bound(lambda: &[f64], d: usize) -> f64 {
    if lambda.len() < d {
        return 0.0;
    }
    (0..d)
        .map(|l| lambda[l..].iter().sum::<f64>() / ((d - l) as f64 / d as f64))
        .fold(f64::INFINITY, f64::min)
}

/// Local filtering at the first party, realized as an 8-mode unitary
/// dilation with four vacuum ancillas heralded empty, followed by a
/// correcting unitary at the second party. Returns the heralding
/// probability and the final fidelity with `bell_state(0, true, id)`.
fn filter_to_bell(state: &SparseState, a: &DMatrix<Complex64>) -> Result<(f64, f64)> {
    let svd = a.clone().svd(true, true);
    let w = svd.u.expect("left vectors");
    let zh = svd.v_t.expect("right vectors");
    let s = &svd.singular_values;
    let s_min = s.iter().copied().fold(f64::INFINITY, f64::min);
    if s_min <= 1e-12 {
        return Ok((0.0, 0.0));
    }
    let damp: Vec<f64> = s.iter().map(|&sk| s_min / sk).collect();
    let diag = |v: &[f64]| DMatrix::from_diagonal(&DVector::from_iterator(4, v.iter().map(|&x| c(x))));
    let f = &w * diag(&damp) * w.adjoint();
    let comp = &w * diag(&damp.iter().map(|d| (1.0 - d * d).max(0.0).sqrt()).collect::<Vec<_>>()) * w.adjoint();
    let mut dilation = DMatrix::zeros(8, 8);
    dilation.view_mut((0, 0), (4, 4)).copy_from(&f);
    dilation.view_mut((0, 4), (4, 4)).copy_from(&comp);
    dilation.view_mut((4, 0), (4, 4)).copy_from(&comp);
    dilation.view_mut((4, 4), (4, 4)).copy_from(&(-&f));

    let extended = state.tensor(&SparseState::vacuum(4));
    let filtered = apply(&extended, &embed(dilation, &[0, 1, 2, 3, 8, 9, 10, 11])?)?;
    let herald = crate::measurement::DetectionOutcome::new(vec![8, 9, 10, 11], vec![0; 4])?;
    let heralded = collapse(&filtered, &[8, 9, 10, 11], &herald)?;

    let target = bell_state(0, true, &IDENTITY4);
    let g = coefficient_matrix(&target)? * c(2.0);
    let q = (zh.adjoint() * w.adjoint() * g).transpose();
    let corrected = apply(&heralded.state, &embed(q, &[4, 5, 6, 7])?)?;
    Ok((heralded.probability, corrected.fidelity(&target)?))
}

/// Classifies a normalized two-party state holding one photon per party.
pub fn classify_pair(state: &SparseState) -> Result<PairClass> {
    let order = [0, 1, 2];
    let mut candidates = vec![IDENTITY4];
    candidates.extend(all_permutations4().into_iter().filter(|t| *t != IDENTITY4));
    for tau in candidates {
        for (index, b) in bell_basis(&order, true, &tau).iter().enumerate() {
            let fidelity = state.fidelity(b)?;
            if fidelity >= 1.0 - BELL_FIDELITY_TOL {
                return Ok(PairClass::Bell { index, tau, fidelity });
            }
        }
    }
    let a = coefficient_matrix(state)?;
    let mut schmidt: Vec<f64> = a.singular_values().iter().map(|s| s * s).collect();
    schmidt.sort_by(|x, y| y.total_cmp(x));
    let vidal = vidal_bound(&schmidt, 4);
    let (conversion_probability, converted_fidelity) = filter_to_bell(state, &a)?;
    Ok(PairClass::Residual {
        schmidt,
        vidal_bound: vidal,
        conversion_probability,
        converted_fidelity,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalyticBranch {
    pub a_counts: Vec<u8>,
    pub b_counts: Vec<u8>,
    pub probability: f64,
    pub class: PairClass,
}

#[derive(Clone, Debug, Serialize)]
pub struct BleedingAnalyticReport {
    pub bell_probability: f64,
    pub residual_probability: f64,
    /// Conversion probability averaged over residual outcomes.
    pub conversion_probability: f64,
    pub vidal_bound: f64,
    pub min_converted_fidelity: f64,
    pub success_probability: f64,
    pub total_probability: f64,
    pub branches: Vec<AnalyticBranch>,
}

#[derive(Default)]
struct Tally {
    bell: f64,
    residual: f64,
    converted: f64,
    vidal: f64,
    min_fidelity: f64,
}

impl Tally {
    fn add(&mut self, weight: f64, class: &PairClass) {
        match class {
            PairClass::Bell { .. } => self.bell += weight,
            PairClass::Residual {
                vidal_bound,
                conversion_probability,
                converted_fidelity,
                ..
            } => {
                self.residual += weight;
                self.converted += weight * conversion_probability;
                self.vidal += weight * vidal_bound;
                self.min_fidelity = self.min_fidelity.min(*converted_fidelity);
            }
        }
    }

    fn conversion(&self) -> f64 {
        if self.residual > 0.0 {
            self.converted / self.residual
        } else {
            0.0
        }
    }

    fn vidal(&self) -> f64 {
        if self.residual > 0.0 {
            self.vidal / self.residual
        } else {
            0.0
        }
    }
}

/// `H⊗H` and full detection at A and B on the four-party symmetric state,
/// with every outcome enumerated.
pub fn bleeding_analytic() -> Result<BleedingAnalyticReport> {
    let sigma = sigma_state(4, 4)?;
    let hh = hadamard_tensor_hadamard();
    let state = apply(&sigma, &hh)?;
    let state = apply(&state, &hh.retarget(vec![4, 5, 6, 7])?)?;
    let ab: Vec<usize> = (0..8).collect();
    let mut tally = Tally {
        min_fidelity: 1.0,
        ..Tally::default()
    };
    let mut branches = Vec::new();
    let mut total = 0.0;
    for (outcome, p) in detection_distribution(&state, &ab)?.iter() {
        if p < MIN_OUTCOME_PROBABILITY {
            continue;
        }
        let cd = collapse(&state, &ab, &outcome)?.state;
        let class = classify_pair(&cd)?;
        tally.add(p, &class);
        total += p;
        branches.push(AnalyticBranch {
            a_counts: outcome.counts()[..4].to_vec(),
            b_counts: outcome.counts()[4..].to_vec(),
            probability: p,
            class,
        });
    }
    let conversion = tally.conversion();
    Ok(BleedingAnalyticReport {
        bell_probability: tally.bell,
        residual_probability: tally.residual,
        conversion_probability: conversion,
        vidal_bound: tally.vidal(),
        min_converted_fidelity: tally.min_fidelity,
        success_probability: tally.bell + tally.residual * conversion,
        total_probability: total,
        branches,
    })
}

/// Result of one sequential-bleeding trial.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SequentialOutcome {
    /// A party saw two or more photons before two single detections.
    DetectionCollision,
    /// The two undetected photons would meet at one remaining party.
    RemainderCollision,
    Clean {
        parties: [usize; 2],
        class: PairClass,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct BleedingSequentialReport {
    pub k: usize,
    pub trials: u64,
    pub seed: u64,
    pub exact: bool,
    pub detection_collisions: f64,
    pub remainder_collisions: f64,
    pub contaminated_fraction: f64,
    pub expected_contaminated_fraction: f64,
    pub contaminated_sigma: f64,
    pub collision_free: f64,
    pub bell_rate: f64,
    pub bell_rate_sigma: f64,
    pub expected_bell_rate: f64,
    pub conversion_probability: f64,
    pub success_rate: f64,
}

fn hh_response() -> Result<LocalResponse> {
    LocalResponse::new(hadamard_tensor_hadamard().matrix())
}

fn run_sequential_trial(k: usize, seed: u64, t: u64, response: &LocalResponse) -> Result<SequentialOutcome> {
    let mut rng = trial_rng(seed, t);
    let mut engine = CopyEngine::new(k, 4, &WPhases::zeros(k))?;
    let mut detected = Vec::with_capacity(2);
    for party in 0..k {
        let (counts, _) = engine.measure(party, response, &mut rng)?;
        match counts.iter().map(|&c| c as usize).sum::<usize>() {
            0 => {}
            1 => detected.push(party),
            _ => return Ok(SequentialOutcome::DetectionCollision),
        }
        if detected.len() == 2 {
            break;
        }
    }
    if detected.len() < 2 || rng.random::<f64>() < engine.remainder_collision_probability() {
        return Ok(SequentialOutcome::RemainderCollision);
    }
    let class = classify_pair(&engine.collision_free_remainder()?)?;
    Ok(SequentialOutcome::Clean {
        parties: [detected[0], detected[1]],
        class,
    })
}

/// Parties apply `H⊗H` and detect, in order, until two have seen a single
/// photon; the undetected remainder is then classified exactly.
pub fn bleeding_sequential(k: usize, trials: u64, seed: u64) -> Result<BleedingSequentialReport> {
    if k < 8 {
        return Err(Error::InvalidParameter(format!("K must be at least 8, got {k}")));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    let response = hh_response()?;
    let outcomes: Vec<SequentialOutcome> = (0..trials)
        .into_par_iter()
        .map(|t| run_sequential_trial(k, seed, t, &response))
        .collect::<Result<_>>()?;
    let mut detection = 0.0;
    let mut remainder = 0.0;
    let mut tally = Tally {
        min_fidelity: 1.0,
        ..Tally::default()
    };
    for o in &outcomes {
        match o {
            SequentialOutcome::DetectionCollision => detection += 1.0,
            SequentialOutcome::RemainderCollision => remainder += 1.0,
            SequentialOutcome::Clean { class, .. } => tally.add(1.0, class),
        }
    }
    Ok(summarize(
        k,
        trials,
        seed,
        false,
        detection,
        remainder,
        &tally,
        trials as f64,
    ))
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    k: usize,
    trials: u64,
    seed: u64,
    exact: bool,
    detection: f64,
    remainder: f64,
    tally: &Tally,
    total: f64,
) -> BleedingSequentialReport {
    let clean = tally.bell + tally.residual;
    let expected_contaminated = collision_probability(k, 4);
    let bell_rate = if clean > 0.0 { tally.bell / clean } else { 0.0 };
    let conversion = tally.conversion();
    let (contaminated_sigma, bell_rate_sigma) = if exact {
        (0.0, 0.0)
    } else {
        let n = total;
        (
            (expected_contaminated * (1.0 - expected_contaminated) / n).sqrt(),
            (0.25 / clean.max(1.0)).sqrt(),
        )
    };
    BleedingSequentialReport {
        k,
        trials,
        seed,
        exact,
        detection_collisions: detection,
        remainder_collisions: remainder,
        contaminated_fraction: (detection + remainder) / total,
        expected_contaminated_fraction: expected_contaminated,
        contaminated_sigma,
        collision_free: clean,
        bell_rate,
        bell_rate_sigma,
        expected_bell_rate: 0.5,
        conversion_probability: conversion,
        success_rate: bell_rate + (1.0 - bell_rate) * conversion,
    }
}

/// Exact version of `bleeding_sequential`: every branch of the party-by-party
/// measurement is enumerated and weighted, with no sampling. Counts in the
/// report are probabilities.
pub fn bleeding_sequential_exact(k: usize) -> Result<BleedingSequentialReport> {
    if k < 8 {
        return Err(Error::InvalidParameter(format!("K must be at least 8, got {k}")));
    }
    let response = hh_response()?;
    let mut detection = 0.0;
    let mut remainder = 0.0;
    let mut tally = Tally {
        min_fidelity: 1.0,
        ..Tally::default()
    };
    let mut stack = vec![(CopyEngine::new(k, 4, &WPhases::zeros(k))?, 0usize, 0usize, 1.0f64)];
    while let Some((engine, party, singles, weight)) = stack.pop() {
        if singles == 2 {
            let pc = engine.remainder_collision_probability();
            remainder += weight * pc;
            if pc >= 1.0 {
                continue;
            }
            let class = classify_pair(&engine.collision_free_remainder()?)?;
            tally.add(weight * (1.0 - pc), &class);
            continue;
        }
        if party == k {
            remainder += weight;
            continue;
        }
        for branch in engine.branches(party, &response)? {
            let w = weight * branch.probability;
            match branch.photons() {
                0 | 1 => {
                    let mut next = engine.clone();
                    next.commit(party, &branch);
                    stack.push((next, party + 1, singles + branch.photons(), w));
                }
                _ => detection += w,
            }
        }
    }
    Ok(summarize(k, 0, 0, true, detection, remainder, &tally, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_probabilities() {
        let r = bleeding_analytic().unwrap();
        assert!((r.bell_probability - 0.5).abs() < 1e-9, "{}", r.bell_probability);
        assert!(
            (r.conversion_probability - 1.0 / 3.0).abs() < 1e-9,
            "{}",
            r.conversion_probability
        );
        assert!((r.success_probability - 2.0 / 3.0).abs() < 1e-9);
        assert!((r.total_probability - 1.0).abs() < 1e-9);
        assert!((r.vidal_bound - 1.0 / 3.0).abs() < 1e-9);
        assert!(r.min_converted_fidelity > 1.0 - 1e-9);
        for b in &r.branches {
            if let PairClass::Residual { schmidt, .. } = &b.class {
                let expect = [0.75, 1.0 / 12.0, 1.0 / 12.0, 1.0 / 12.0];
                assert!(schmidt.iter().zip(expect).all(|(s, e)| (s - e).abs() < 1e-9));
            }
        }
    }

    #[test]
    fn decomposition() {
        let r = sigma_bell_decomposition_check().unwrap();
        assert!((r.fidelity - 1.0).abs() < 1e-9);
        assert!(r.bell_norms.iter().all(|n| (n - 1.0).abs() < 1e-12));
        assert!(r.max_pairwise_overlap < 1e-12);
        assert!(r.conventions_matching < r.conventions_tested);
    }

    #[test]
    fn vidal_examples() {
        assert!((vidal_bound(&[0.25; 4], 4) - 1.0).abs() < 1e-15);
        assert_eq!(vidal_bound(&[1.0, 0.0, 0.0, 0.0], 4), 0.0);
        assert!((vidal_bound(&[0.75, 1.0 / 12.0, 1.0 / 12.0, 1.0 / 12.0], 4) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn sequential_exact_small() {
        let r = bleeding_sequential_exact(8).unwrap();
        assert!((r.bell_rate - 0.5).abs() < 1e-9, "{r:?}");
        assert!((r.contaminated_fraction - collision_probability(8, 4)).abs() < 1e-9);
        assert!((r.conversion_probability - 1.0 / 3.0).abs() < 1e-9);
        assert!((r.contaminated_fraction + r.collision_free - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sequential_sampled_small() {
        let r = bleeding_sequential(16, 600, 1).unwrap();
        assert!((r.bell_rate - 0.5).abs() < 5.0 * r.bell_rate_sigma);
        assert!((r.contaminated_fraction - r.expected_contaminated_fraction).abs() < 5.0 * r.contaminated_sigma);
    }
}
