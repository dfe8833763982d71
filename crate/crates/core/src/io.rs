//! JSON formats for matrices, plans, schedules, POVMs and states.
//!
//! Matrices are row-major lists of rows, each entry an `[re, im]` pair.
//! States are JSON lines, one `{"occ": [...], "amp": [re, im]}` per term.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fock::{Occupation, SparseState};
use crate::linear_optics::Interferometer;
use crate::protocols::faux::{ProtocolStep, StepAction};

pub type MatrixRows = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_rows(m: &DMatrix<Complex64>) -> MatrixRows {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect()
}

pub fn matrix_from_rows(rows: &MatrixRows) -> Result<DMatrix<Complex64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch("ragged matrix rows".into()));
    }
    if rows.iter().flatten().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("non-finite matrix entry".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| {
        Complex64::new(rows[r][c][0], rows[r][c][1])
    }))
}

pub fn serialize_matrix<S: Serializer>(m: &DMatrix<Complex64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    matrix_to_rows(m).serialize(s)
}

/// A bare row list, or an object with a `matrix` field.
#[derive(Deserialize)]
#[serde(untagged)]
enum MatrixFile {
    Rows(MatrixRows),
    Wrapped { matrix: MatrixRows },
}

pub fn parse_matrix(text: &str) -> Result<DMatrix<Complex64>> {
    let rows = match serde_json::from_str::<MatrixFile>(text)? {
        MatrixFile::Rows(r) | MatrixFile::Wrapped { matrix: r } => r,
    };
    matrix_from_rows(&rows)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanJson {
    #[serde(rename = "K")]
    pub k: usize,
    pub unitaries: Vec<MatrixRows>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionJson {
    pub matrix: MatrixRows,
    pub target_modes: Vec<usize>,
    pub detect: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepJson {
    pub matrix: MatrixRows,
    pub target_modes: Vec<usize>,
    pub detect: Vec<usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub adaptivity: BTreeMap<String, ActionJson>,
}

fn action_from_json(matrix: &MatrixRows, target_modes: &[usize], detect: &[usize]) -> Result<StepAction> {
    let intf = Interferometer::new(matrix_from_rows(matrix)?, target_modes.to_vec())?;
    Ok(StepAction::new(intf, detect.to_vec()))
}

fn action_to_json(a: &StepAction) -> ActionJson {
    ActionJson {
        matrix: matrix_to_rows(a.interferometer.matrix()),
        target_modes: a.interferometer.target_modes().to_vec(),
        detect: a.detect_modes.clone(),
    }
}

pub fn parse_schedule(text: &str) -> Result<Vec<ProtocolStep>> {
    let steps: Vec<StepJson> = serde_json::from_str(text)?;
    steps
        .iter()
        .map(|s| {
            let action = action_from_json(&s.matrix, &s.target_modes, &s.detect)?;
            let adaptivity = s
                .adaptivity
                .iter()
                .map(|(k, a)| Ok((k.clone(), action_from_json(&a.matrix, &a.target_modes, &a.detect)?)))
                .collect::<Result<_>>()?;
            Ok(ProtocolStep { action, adaptivity })
        })
        .collect()
}

pub fn schedule_to_json(schedule: &[ProtocolStep]) -> Vec<StepJson> {
    schedule
        .iter()
        .map(|s| {
            let a = action_to_json(&s.action);
            StepJson {
                matrix: a.matrix,
                target_modes: a.target_modes,
                detect: a.detect,
                adaptivity: s
                    .adaptivity
                    .iter()
                    .map(|(k, a)| (k.clone(), action_to_json(a)))
                    .collect(),
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PovmJson {
    pub modes: usize,
    pub max_photons: u8,
    pub elements: Vec<MatrixRows>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermJson {
    occ: Vec<u8>,
    amp: [f64; 2],
}

/// Writes one JSON line per term, in sorted occupation order.
pub fn write_state_jsonl<W: Write>(state: &SparseState, mut out: W) -> Result<()> {
    for (occ, amp) in state.sorted_terms() {
        let line = serde_json::to_string(&TermJson {
            occ: occ.counts().to_vec(),
            amp: [amp.re, amp.im],
        })?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_state_jsonl<R: BufRead>(input: R) -> Result<SparseState> {
    let mut terms = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: TermJson = serde_json::from_str(&line)?;
        terms.push((Occupation::new(t.occ), Complex64::new(t.amp[0], t.amp[1])));
    }
    let modes = terms
        .first()
        .map(|(o, _)| o.num_modes())
        .ok_or_else(|| Error::InvalidConfiguration("empty state file".into()))?;
    SparseState::from_terms(modes, terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_optics::beamsplitter_matrix;
    use crate::resource_states::sigma_state;

    #[test]
    fn matrix_round_trip() {
        let m = beamsplitter_matrix();
        let text = serde_json::to_string(&matrix_to_rows(&m)).unwrap();
        assert_eq!(parse_matrix(&text).unwrap(), m);
        let wrapped = format!("{{\"matrix\": {text}}}");
        assert_eq!(parse_matrix(&wrapped).unwrap(), m);
        assert!(parse_matrix("[[[1,0]],[[0,0],[1,0]]]").is_err());
    }

    #[test]
    fn state_round_trip() {
        let s = sigma_state(3, 3).unwrap();
        let mut buf = Vec::new();
        write_state_jsonl(&s, &mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 6);
        let back = read_state_jsonl(buf.as_slice()).unwrap();
        assert!(back.max_abs_diff(&s).unwrap() < 1e-15);
    }

    #[test]
    fn schedule_round_trip() {
        let id = Interferometer::identity(2);
        let step = ProtocolStep::new(
            Interferometer::on_leading_modes(beamsplitter_matrix()).unwrap(),
            vec![0],
        )
        .with_override("1", StepAction::new(id, vec![1]));
        let text = serde_json::to_string(&schedule_to_json(std::slice::from_ref(&step))).unwrap();
        assert_eq!(parse_schedule(&text).unwrap(), vec![step]);
        assert!(parse_schedule(r#"[{"matrix": [[[1,0]]], "target_modes": [0], "detect": [], "x": 1}]"#).is_err());
    }
}
