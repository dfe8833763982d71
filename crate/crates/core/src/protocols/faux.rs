//! Identical-schedule protocols run party by party on a shared resource,
//! and the exact comparison between a second-quantized protocol and its
//! third-quantized counterpart.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{Occupation, SparseState};
use crate::linear_optics::{apply, embed, Interferometer};
use crate::measurement::{detect_and_absorb, detection_distribution, sample_outcome, DetectionOutcome};
use crate::random::{haar_unitary, rng_from_seed};
use crate::resource_states::{sigma_state, PartyLayout};

pub const FAUX_MAX_PHOTONS: usize = 3;
pub const FAUX_MAX_MODES: usize = 4;

/// Interferometer and detection list in party-local mode indices.
#[derive(Clone, Debug, PartialEq)]
pub struct StepAction {
    pub interferometer: Interferometer,
    pub detect_modes: Vec<usize>,
}

impl StepAction {
    pub fn new(interferometer: Interferometer, detect_modes: Vec<usize>) -> Self {
        StepAction {
            interferometer,
            detect_modes,
        }
    }

    fn validate(&self, local_modes: usize) -> Result<()> {
        if let Some(&m) = self
            .interferometer
            .target_modes()
            .iter()
            .chain(&self.detect_modes)
            .find(|&&m| m >= local_modes)
        {
            return Err(Error::InvalidConfiguration(format!(
                "step uses local mode {m} but parties hold {local_modes}"
            )));
        }
        let mut sorted = self.detect_modes.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidModeSet(format!(
                "duplicate detect modes {:?}",
                self.detect_modes
            )));
        }
        Ok(())
    }
}

/// One step of a schedule executed identically by every party. Overrides
/// are keyed by `prefix_key` of the per-step photon totals seen so far.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolStep {
    pub action: StepAction,
    pub adaptivity: BTreeMap<String, StepAction>,
}

impl ProtocolStep {
    pub fn new(interferometer: Interferometer, detect_modes: Vec<usize>) -> Self {
        ProtocolStep {
            action: StepAction::new(interferometer, detect_modes),
            adaptivity: BTreeMap::new(),
        }
    }

    pub fn with_override(mut self, key: impl Into<String>, action: StepAction) -> Self {
        self.adaptivity.insert(key.into(), action);
        self
    }

    fn resolve(&self, key: &str) -> (&StepAction, Option<String>) {
        match self.adaptivity.get(key) {
            Some(a) => (a, Some(key.to_string())),
            None => (&self.action, None),
        }
    }
}

/// Serialized record of completed steps: each step's detector totals summed
/// over parties, comma separated, steps separated by `|`.
pub fn prefix_key(step_totals: &[Vec<u8>]) -> String {
    step_totals
        .iter()
        .map(|t| t.iter().map(u8::to_string).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("|")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TranscriptEvent {
    pub party: usize,
    pub step: usize,
    /// Adaptivity key that selected an override, if any.
    pub variant: Option<String>,
    pub outcome: DetectionOutcome,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Transcript {
    pub events: Vec<TranscriptEvent>,
}

impl Transcript {
    pub fn photons_detected(&self) -> usize {
        self.events.iter().map(|e| e.outcome.total()).sum()
    }

    /// Parties that detected at least one photon, in broadcast order.
    pub fn clicking_parties(&self) -> Vec<usize> {
        self.events
            .iter()
            .filter(|e| e.outcome.total() > 0)
            .map(|e| e.party)
            .collect()
    }
}

fn validate_schedule(layout: &PartyLayout, schedule: &[ProtocolStep]) -> Result<()> {
    let local = layout.parties().iter().map(Vec::len).min().unwrap_or(0);
    for step in schedule {
        step.action.validate(local)?;
        for a in step.adaptivity.values() {
            a.validate(local)?;
        }
    }
    Ok(())
}

fn localize(action: &StepAction, party_modes: &[usize]) -> Result<(Interferometer, Vec<usize>)> {
    let targets = action
        .interferometer
        .target_modes()
        .iter()
        .map(|&m| party_modes[m])
        .collect();
    let detect = action.detect_modes.iter().map(|&m| party_modes[m]).collect();
    Ok((action.interferometer.retarget(targets)?, detect))
}

fn check_resource(resource: &SparseState, layout: &PartyLayout) -> Result<()> {
    layout
        .check_state(resource)
        .map_err(|e| Error::InvalidConfiguration(e.to_string()))
}

/// Runs `schedule` step by step, each party in turn applying the step and
/// sampling its detection.
pub fn faux_execute(
    resource: &SparseState,
    layout: &PartyLayout,
    schedule: &[ProtocolStep],
    seed: u64,
) -> Result<Transcript> {
    faux_execute_with(resource, layout, schedule, &mut rng_from_seed(seed))
}

pub fn faux_execute_with<R: Rng + ?Sized>(
    resource: &SparseState,
    layout: &PartyLayout,
    schedule: &[ProtocolStep],
    rng: &mut R,
) -> Result<Transcript> {
    check_resource(resource, layout)?;
    validate_schedule(layout, schedule)?;
    let mut state = resource.clone();
    let mut totals: Vec<Vec<u8>> = Vec::new();
    let mut transcript = Transcript::default();
    for (s, step) in schedule.iter().enumerate() {
        let (action, variant) = step.resolve(&prefix_key(&totals));
        let mut step_total = vec![0u8; action.detect_modes.len()];
        for (q, party_modes) in layout.parties().iter().enumerate() {
            let (intf, detect) = localize(action, party_modes)?;
            state = apply(&state, &intf)?;
            let dist = detection_distribution(&state, &detect)?;
            let outcome = sample_outcome(&dist, rng);
            state = detect_and_absorb(&state, &detect, &outcome)?.0;
            for (t, &c) in step_total.iter_mut().zip(outcome.counts()) {
                *t += c;
            }
            transcript.events.push(TranscriptEvent {
                party: q,
                step: s,
                variant: variant.clone(),
                outcome,
            });
        }
        totals.push(step_total);
    }
    Ok(transcript)
}

/// Exact distribution over full transcripts, keyed by the sequence of
/// per-event counts (step-major, parties in order).
pub fn transcript_distribution(
    resource: &SparseState,
    layout: &PartyLayout,
    schedule: &[ProtocolStep],
) -> Result<BTreeMap<Vec<Vec<u8>>, f64>> {
    check_resource(resource, layout)?;
    validate_schedule(layout, schedule)?;
    let parties = layout.num_parties();
    let mut out = BTreeMap::new();
    let mut stack: Vec<(SparseState, Vec<Vec<u8>>, f64)> = vec![(resource.clone(), Vec::new(), 1.0)];
    while let Some((state, events, weight)) = stack.pop() {
        let idx = events.len();
        if idx == schedule.len() * parties {
            *out.entry(events).or_insert(0.0) += weight;
            continue;
        }
        let (s, q) = (idx / parties, idx % parties);
        let totals = aggregate_steps(&events[..s * parties], parties);
        let (action, _) = schedule[s].resolve(&prefix_key(&totals));
        let (intf, detect) = localize(action, layout.party(q))?;
        let evolved = apply(&state, &intf)?;
        for (outcome, p) in detection_distribution(&evolved, &detect)?.iter() {
            if p < crate::measurement::MIN_OUTCOME_PROBABILITY {
                continue;
            }
            let next = detect_and_absorb(&evolved, &detect, &outcome)?.0;
            let mut ev = events.clone();
            ev.push(outcome.counts().to_vec());
            stack.push((next, ev, weight * p));
        }
    }
    Ok(out)
}

fn aggregate_steps(events: &[Vec<u8>], parties: usize) -> Vec<Vec<u8>> {
    events
        .chunks(parties)
        .map(|chunk| {
            let mut total = vec![0u8; chunk[0].len()];
            for e in chunk {
                for (t, &c) in total.iter_mut().zip(e) {
                    *t += c;
                }
            }
            total
        })
        .collect()
}

/// Sums each step's counts over parties.
pub fn aggregate_by_step(dist: &BTreeMap<Vec<Vec<u8>>, f64>, parties: usize) -> BTreeMap<Vec<Vec<u8>>, f64> {
    let mut out = BTreeMap::new();
    for (events, p) in dist {
        let key = if events.is_empty() {
            Vec::new()
        } else {
            aggregate_steps(events, parties)
        };
        *out.entry(key).or_insert(0.0) += p;
    }
    out
}

/// Second-quantized run: N photons in modes `0..N` of `M` modes, each step
/// applying a unitary on all modes then detecting the listed modes.
pub fn direct_distribution(
    n: usize,
    m: usize,
    protocol: &[(DMatrix<Complex64>, Vec<usize>)],
) -> Result<BTreeMap<Vec<Vec<u8>>, f64>> {
    if n > m {
        return Err(Error::InvalidConfiguration(format!(
            "{n} photons need at least {n} modes, got M={m}"
        )));
    }
    let mut counts = vec![0u8; m];
    counts[..n].iter_mut().for_each(|c| *c = 1);
    let all: Vec<usize> = (0..m).collect();
    let steps: Vec<Interferometer> = protocol
        .iter()
        .map(|(u, _)| embed(u.clone(), &all))
        .collect::<Result<_>>()?;
    let mut out = BTreeMap::new();
    let mut stack = vec![(SparseState::basis(Occupation::new(counts)), Vec::<Vec<u8>>::new(), 1.0)];
    while let Some((state, record, weight)) = stack.pop() {
        let s = record.len();
        if s == protocol.len() {
            *out.entry(record).or_insert(0.0) += weight;
            continue;
        }
        let detect = &protocol[s].1;
        let evolved = apply(&state, &steps[s])?;
        for (outcome, p) in detection_distribution(&evolved, detect)?.iter() {
            if p < crate::measurement::MIN_OUTCOME_PROBABILITY {
                continue;
            }
            let next = detect_and_absorb(&evolved, detect, &outcome)?.0;
            let mut r = record.clone();
            r.push(outcome.counts().to_vec());
            stack.push((next, r, weight * p));
        }
    }
    Ok(out)
}

pub fn total_variation<K: Ord + Clone>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let mut keys: Vec<&K> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .into_iter()
        .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

#[derive(Clone, Debug, Serialize)]
pub struct FauxEquivalenceReport {
    pub n: usize,
    pub m: usize,
    pub steps: usize,
    pub outcomes: usize,
    pub tv_distance: f64,
    /// `(per-step counts, direct probability, third-quantized probability)`.
    pub table: Vec<(Vec<Vec<u8>>, f64, f64)>,
}

/// Compares a protocol on the second-quantized input with the same
/// protocol applied party-locally to `sigma_state(N, M)`.
pub fn faux_equivalence_check(
    n: usize,
    m: usize,
    protocol: &[(DMatrix<Complex64>, Vec<usize>)],
) -> Result<FauxEquivalenceReport> {
    if n > FAUX_MAX_PHOTONS || m > FAUX_MAX_MODES {
        return Err(Error::TooLarge(format!(
            "faux check limited to N <= {FAUX_MAX_PHOTONS}, M <= {FAUX_MAX_MODES}; got N={n}, M={m}"
        )));
    }
    let direct = direct_distribution(n, m, protocol)?;
    let resource = sigma_state(n, m)?;
    let layout = PartyLayout::blocks(n, m);
    let schedule: Vec<ProtocolStep> = protocol
        .iter()
        .map(|(u, detect)| {
            Ok(ProtocolStep::new(
                Interferometer::on_leading_modes(u.clone())?,
                detect.clone(),
            ))
        })
        .collect::<Result<_>>()?;
    let third = aggregate_by_step(&transcript_distribution(&resource, &layout, &schedule)?, n);
    let tv_distance = total_variation(&direct, &third);
    let mut keys: Vec<&Vec<Vec<u8>>> = direct.keys().chain(third.keys()).collect();
    keys.sort();
    keys.dedup();
    let table: Vec<_> = keys
        .into_iter()
        .map(|k| (k.clone(), *direct.get(k).unwrap_or(&0.0), *third.get(k).unwrap_or(&0.0)))
        .collect();
    Ok(FauxEquivalenceReport {
        n,
        m,
        steps: protocol.len(),
        outcomes: table.len(),
        tv_distance,
        table,
    })
}

/// A protocol of `steps` Haar-random unitaries, each followed by detection
/// of a random non-empty proper subset of modes (or all modes when M = 1).
pub fn random_protocol<R: Rng + ?Sized>(rng: &mut R, m: usize, steps: usize) -> Vec<(DMatrix<Complex64>, Vec<usize>)> {
    (0..steps)
        .map(|_| {
            let u = haar_unitary(rng, m);
            let detect: Vec<usize> = if m == 1 {
                vec![0]
            } else {
                let mask = rng.random_range(1..(1u32 << m) - 1);
                (0..m).filter(|j| mask & (1 << j) != 0).collect()
            };
            (u, detect)
        })
        .collect()
}
