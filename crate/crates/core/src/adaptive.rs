//! Intermediately adaptive boson sampling on `|W_K>^{⊗N}`: parties measure in
//! turn, and the interferometer each applies depends only on how many
//! photons have been seen so far.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linear_optics::{apply, embed, unitarity_deviation, UNITARITY_TOL};
use crate::measurement::{detect_and_absorb, detection_distribution, MIN_OUTCOME_PROBABILITY};
use crate::permanent::{operator_norm, permanent_exact};
use crate::random::{haar_unitary, rng_from_seed, trial_rng};
use crate::resource_states::{injection_fraction, w_copies, WPhases};
use crate::sequential::{CopyEngine, LocalResponse};

pub const CROSSCHECK_MAX_PHOTONS: usize = 3;
pub const CROSSCHECK_MAX_PARTIES: usize = 8;

/// Fixed local interferometers `U^(1) .. U^(N)`, each N x N.
#[derive(Clone, Debug)]
pub struct AdaptivePlan {
    k: usize,
    n: usize,
    unitaries: Vec<DMatrix<Complex64>>,
    responses: Vec<LocalResponse>,
}

impl AdaptivePlan {
    pub fn new(k: usize, unitaries: Vec<DMatrix<Complex64>>) -> Result<Self> {
        let n = unitaries.len();
        if n == 0 || k < n {
            return Err(Error::InvalidConfiguration(format!(
                "need K >= N >= 1, got K={k}, N={n}"
            )));
        }
        for (i, u) in unitaries.iter().enumerate() {
            if u.nrows() != n || u.ncols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "U^({}) is {}x{}, expected {n}x{n}",
                    i + 1,
                    u.nrows(),
                    u.ncols()
                )));
            }
            let deviation = unitarity_deviation(u);
            if deviation > UNITARITY_TOL {
                return Err(Error::NotUnitary { deviation });
            }
        }
        if k < n * n {
            log::warn!("K={k} < N^2={}: collisions are not rare", n * n);
        }
        let responses = unitaries.iter().map(LocalResponse::new).collect::<Result<_>>()?;
        Ok(AdaptivePlan {
            k,
            n,
            unitaries,
            responses,
        })
    }

    /// `N` Haar-random unitaries.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, k: usize, n: usize) -> Result<Self> {
        let unitaries = (0..n).map(|_| haar_unitary(rng, n)).collect();
        Self::new(k, unitaries)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn unitaries(&self) -> &[DMatrix<Complex64>] {
        &self.unitaries
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SampleResult {
    pub detected_modes: Vec<usize>,
    pub detecting_parties: Vec<usize>,
    pub aborted: bool,
}

pub fn run_adaptive(plan: &AdaptivePlan, seed: u64) -> Result<SampleResult> {
    run_adaptive_with(plan, &mut rng_from_seed(seed))
}

pub fn run_adaptive_with<R: Rng + ?Sized>(plan: &AdaptivePlan, rng: &mut R) -> Result<SampleResult> {
    let mut engine = CopyEngine::new(plan.k, plan.n, &WPhases::zeros(plan.k))?;
    let mut modes = Vec::with_capacity(plan.n);
    let mut parties = Vec::with_capacity(plan.n);
    for party in 0..plan.k {
        let (counts, _) = engine.measure(party, &plan.responses[modes.len()], rng)?;
        match counts.iter().map(|&c| c as usize).sum::<usize>() {
            0 => continue,
            1 => {
                modes.push(counts.iter().position(|&c| c == 1).expect("one photon"));
                parties.push(party);
            }
            _ => {
                return Ok(SampleResult {
                    detected_modes: modes,
                    detecting_parties: parties,
                    aborted: true,
                })
            }
        }
        if modes.len() == plan.n {
            break;
        }
    }
    let aborted = modes.len() < plan.n;
    Ok(SampleResult {
        detected_modes: modes,
        detecting_parties: parties,
        aborted,
    })
}

/// Rows `k_n` of `U^(n)`, each scaled by `(N!)^{-1/(2N)}`.
pub fn outcome_matrix(plan: &AdaptivePlan, k: &[usize]) -> Result<DMatrix<Complex64>> {
    stacked_rows(&plan.unitaries, k)
}

fn stacked_rows(unitaries: &[DMatrix<Complex64>], k: &[usize]) -> Result<DMatrix<Complex64>> {
    let n = unitaries.len();
    if k.len() != n {
        return Err(Error::DimensionMismatch(format!("{} outcomes for N={n}", k.len())));
    }
    if let Some(&bad) = k.iter().find(|&&x| x >= n) {
        return Err(Error::InvalidParameter(format!("mode {bad} outside 0..{n}")));
    }
    let n_fact: f64 = (1..=n).map(|i| i as f64).product();
    let scale = Complex64::new(n_fact.powf(-1.0 / (2.0 * n as f64)), 0.0);
    Ok(DMatrix::from_fn(n, n, |i, j| unitaries[i][(k[i], j)] * scale))
}

/// `|Per(M)|²` for the detected local modes `k`.
pub fn outcome_probability(plan: &AdaptivePlan, k: &[usize]) -> Result<f64> {
    Ok(permanent_exact(&outcome_matrix(plan, k)?)?.norm_sqr())
}

fn all_outcomes(n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..n).map(move |m| {
                    let mut p = prefix.clone();
                    p.push(m);
                    p
                })
            })
            .collect();
    }
    out
}

struct ExactDistribution {
    detected: BTreeMap<Vec<usize>, f64>,
    aborted: f64,
}

/// Exact outcome distribution on the full state vector.
fn state_vector_distribution(plan: &AdaptivePlan) -> Result<ExactDistribution> {
    let (state, layout) = w_copies(plan.k, plan.n, &WPhases::zeros(plan.k))?;
    let steps: Vec<Vec<_>> = (0..plan.k)
        .map(|q| {
            plan.unitaries
                .iter()
                .map(|u| embed(u.clone(), layout.party(q)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut detected = BTreeMap::new();
    let mut aborted = 0.0;
    let mut stack = vec![(state, 0usize, Vec::<usize>::new(), 1.0f64)];
    while let Some((state, party, modes, weight)) = stack.pop() {
        if modes.len() == plan.n {
            *detected.entry(modes).or_insert(0.0) += weight;
            continue;
        }
        if party == plan.k {
            aborted += weight;
            continue;
        }
        let local = layout.party(party);
        let evolved = apply(&state, &steps[party][modes.len()])?;
        for (outcome, p) in detection_distribution(&evolved, local)?.iter() {
            if p < MIN_OUTCOME_PROBABILITY {
                continue;
            }
            match outcome.total() {
                0 | 1 => {
                    let next = detect_and_absorb(&evolved, local, &outcome)?.0;
                    let mut m = modes.clone();
                    if let Some(j) = outcome.counts().iter().position(|&c| c == 1) {
                        m.push(j);
                    }
                    stack.push((next, party + 1, m, weight * p));
                }
                _ => aborted += weight * p,
            }
        }
    }
    Ok(ExactDistribution { detected, aborted })
}

/// Exact outcome distribution from the consumed-copy engine, visiting
/// parties in `order`.
fn engine_distribution(plan: &AdaptivePlan, order: &[usize]) -> Result<ExactDistribution> {
    let mut detected = BTreeMap::new();
    let mut aborted = 0.0;
    let start = CopyEngine::new(plan.k, plan.n, &WPhases::zeros(plan.k))?;
    let mut stack = vec![(start, 0usize, Vec::<usize>::new(), 1.0f64)];
    while let Some((engine, step, modes, weight)) = stack.pop() {
        if modes.len() == plan.n {
            *detected.entry(modes).or_insert(0.0) += weight;
            continue;
        }
        if step == order.len() {
            aborted += weight;
            continue;
        }
        let party = order[step];
        for branch in engine.branches(party, &plan.responses[modes.len()])? {
            let w = weight * branch.probability;
            if branch.photons() > 1 {
                aborted += w;
                continue;
            }
            let mut next = engine.clone();
            next.commit(party, &branch);
            let mut m = modes.clone();
            if let Some(j) = branch.counts.iter().position(|&c| c == 1) {
                m.push(j);
            }
            stack.push((next, step + 1, m, w));
        }
    }
    Ok(ExactDistribution { detected, aborted })
}

#[derive(Clone, Debug, Serialize)]
pub struct CrosscheckRow {
    pub outcome: Vec<usize>,
    pub probability_model: f64,
    pub probability_simulated: f64,
    pub abs_diff: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CrosscheckReport {
    pub n: usize,
    pub k: usize,
    pub exhaustive: bool,
    /// Largest `|P_sim(k) − normalization · |Per M|²|`.
    pub max_abs_diff: f64,
    /// `Σ P_sim / Σ |Per M|²`.
    pub normalization: f64,
    /// `Π_{i<N}(1 − i/K)`, the collision-free weight.
    pub expected_normalization: f64,
    pub aborted_weight: f64,
    pub model_total: f64,
    pub runtime_ms: f64,
    pub table: Vec<CrosscheckRow>,
}

/// Compares the exact simulated outcome distribution with `|Per(M)|²`.
/// With `exhaustive` the simulation enumerates the full state vector;
/// otherwise it enumerates the consumed-copy engine.
pub fn distribution_crosscheck(plan: &AdaptivePlan, exhaustive: bool) -> Result<CrosscheckReport> {
    if exhaustive && (plan.n > CROSSCHECK_MAX_PHOTONS || plan.k > CROSSCHECK_MAX_PARTIES) {
        return Err(Error::TooLarge(format!(
            "exhaustive crosscheck limited to N <= {CROSSCHECK_MAX_PHOTONS}, K <= {CROSSCHECK_MAX_PARTIES}"
        )));
    }
    let started = Instant::now();
    let sim = if exhaustive {
        state_vector_distribution(plan)?
    } else {
        engine_distribution(plan, &(0..plan.k).collect::<Vec<_>>())?
    };
    let outcomes = all_outcomes(plan.n);
    let model: Vec<f64> = outcomes
        .iter()
        .map(|k| outcome_probability(plan, k))
        .collect::<Result<_>>()?;
    let model_total: f64 = model.iter().sum();
    let sim_total: f64 = sim.detected.values().sum();
    let normalization = sim_total / model_total;
    let mut table = Vec::with_capacity(outcomes.len());
    let mut max_abs_diff = 0.0f64;
    for (k, &pm) in outcomes.iter().zip(&model) {
        let ps = *sim.detected.get(k).unwrap_or(&0.0);
        let abs_diff = (ps - normalization * pm).abs();
        max_abs_diff = max_abs_diff.max(abs_diff);
        table.push(CrosscheckRow {
            outcome: k.clone(),
            probability_model: pm,
            probability_simulated: ps,
            abs_diff,
        });
    }
    Ok(CrosscheckReport {
        n: plan.n,
        k: plan.k,
        exhaustive,
        max_abs_diff,
        normalization,
        expected_normalization: injection_fraction(plan.k, plan.n),
        aborted_weight: sim.aborted,
        model_total,
        runtime_ms: started.elapsed().as_secs_f64() * 1e3,
        table,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct NormExceedance {
    pub n: usize,
    pub samples: u64,
    pub exceed_count: u64,
    pub fraction: f64,
    pub max_norm: f64,
    pub min_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NormExceedanceReport {
    pub trials: u64,
    pub seed: u64,
    pub per_n: Vec<NormExceedance>,
    pub max_norm: f64,
}

/// Operator norms of `M` for random plans and random outcomes, N = 3..=5.
pub fn norm_exceedance_demo(trials: u64, seed: u64) -> Result<NormExceedanceReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    let mut per_n = Vec::new();
    for n in 3..=5usize {
        let mut exceed = 0;
        let mut max_norm = 0.0f64;
        let mut min_norm = f64::INFINITY;
        for t in 0..trials {
            let mut rng = trial_rng(seed.wrapping_add(n as u64 * trials), t);
            let unitaries: Vec<_> = (0..n).map(|_| haar_unitary(&mut rng, n)).collect();
            let k: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let norm = operator_norm(&stacked_rows(&unitaries, &k)?);
            if norm > 1.0 {
                exceed += 1;
            }
            max_norm = max_norm.max(norm);
            min_norm = min_norm.min(norm);
        }
        per_n.push(NormExceedance {
            n,
            samples: trials,
            exceed_count: exceed,
            fraction: exceed as f64 / trials as f64,
            max_norm,
            min_norm,
        });
    }
    let max_norm = per_n.iter().map(|e| e.max_norm).fold(0.0, f64::max);
    Ok(NormExceedanceReport {
        trials,
        seed,
        per_n,
        max_norm,
    })
}
