//! The ensemble JSON document: parsing with field-precise errors, presets,
//! and exact serialization.
//!
//! ```json
//! {
//!   "alphabet": ["0", "+"],
//!   "probs": [0.5, 0.5],
//!   "states": [
//!     { "matrix": [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]] },
//!     { "preset": "plus" }
//!   ]
//! }
//! ```
//!
//! Complex entries are `[re, im]` pairs, rows in row-major order. A state may
//! instead name a single-state preset (`zero`, `one`, `plus`, `minus`,
//! `mixed`). A whole document may be replaced by `{ "preset": "<name>" }`
//! with one of the ensemble presets (`bb84`, `orthogonal-pair`, `zero-plus`),
//! and the `--ensemble` flag accepts those preset names directly in place of
//! a path.

use std::path::Path;

use serde::{Deserialize, Serialize};

use cqsw_core::cq::{bb84_ensemble, orthogonal_pair_ensemble, zero_plus_ensemble, CqEnsemble};
use cqsw_core::linalg::{ComplexMatrix, DensityOperator, C64};
use cqsw_core::{Error, Result};

pub const ENSEMBLE_PRESETS: [&str; 3] = ["bb84", "orthogonal-pair", "zero-plus"];

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    #[serde(skip_serializing_if = "Option::is_none")]
    preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alphabet: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    probs: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    states: Option<Vec<StateSpec>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    matrix: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    preset: Option<String>,
}

pub fn ensemble_preset(name: &str) -> Option<CqEnsemble> {
    match name {
        "bb84" => Some(bb84_ensemble()),
        "orthogonal-pair" => Some(orthogonal_pair_ensemble()),
        "zero-plus" => Some(zero_plus_ensemble()),
        _ => None,
    }
}

fn state_preset(name: &str) -> Option<DensityOperator> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let ket: Vec<C64> = match name {
        "zero" => vec![C64::ONE, C64::ZERO],
        "one" => vec![C64::ZERO, C64::ONE],
        "plus" => vec![C64::new(s, 0.0), C64::new(s, 0.0)],
        "minus" => vec![C64::new(s, 0.0), C64::new(-s, 0.0)],
        "mixed" => return Some(DensityOperator::maximally_mixed(2)),
        _ => return None,
    };
    Some(DensityOperator::from_pure(&ket).expect("unit presets"))
}

/// Resolve an `--ensemble` argument: a preset name, or a path to a JSON
/// document. Returns the ensemble together with the canonical content string
/// used for config hashing.
pub fn resolve_ensemble(arg: &str) -> Result<(CqEnsemble, String)> {
    if let Some(e) = ensemble_preset(arg) {
        return Ok((e, format!("preset:{arg}")));
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(Error::InvalidParameter(format!(
            "'{arg}' is neither an ensemble preset ({}) nor an existing file",
            ENSEMBLE_PRESETS.join(", ")
        )));
    }
    let content = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidParameter(format!("reading {arg}: {e}")))?;
    let ensemble = parse_ensemble_str(&content)?;
    Ok((ensemble, content))
}

/// Parse an ensemble document from a file.
pub fn parse_ensemble(path: &Path) -> Result<CqEnsemble> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidParameter(format!("reading {}: {e}", path.display())))?;
    parse_ensemble_str(&content)
}

pub fn parse_ensemble_str(content: &str) -> Result<CqEnsemble> {
    let doc: Document = serde_json::from_str(content)
        .map_err(|e| Error::InvalidParameter(format!("ensemble document: {e}")))?;

    if let Some(name) = &doc.preset {
        if doc.alphabet.is_some() || doc.probs.is_some() || doc.states.is_some() {
            return Err(Error::InvalidParameter(
                "preset: cannot be combined with alphabet/probs/states".into(),
            ));
        }
        return ensemble_preset(name).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "preset: unknown ensemble preset '{name}' (expected one of {})",
                ENSEMBLE_PRESETS.join(", ")
            ))
        });
    }

    let alphabet = doc
        .alphabet
        .ok_or_else(|| Error::InvalidParameter("alphabet: missing".into()))?;
    let probs = doc.probs.ok_or_else(|| Error::InvalidParameter("probs: missing".into()))?;
    let specs = doc.states.ok_or_else(|| Error::InvalidParameter("states: missing".into()))?;
    if specs.len() != alphabet.len() {
        return Err(Error::InvalidParameter(format!(
            "states: {} entries for {} symbols",
            specs.len(),
            alphabet.len()
        )));
    }

    let mut states = Vec::with_capacity(specs.len());
    for (idx, spec) in specs.iter().enumerate() {
        let state = match (&spec.matrix, &spec.preset) {
            (Some(_), Some(_)) => Err(Error::InvalidParameter(
                "both matrix and preset given".into(),
            )),
            (None, None) => Err(Error::InvalidParameter("matrix or preset required".into())),
            (None, Some(name)) => state_preset(name).ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown state preset '{name}' (expected zero, one, plus, minus, mixed)"
                ))
            }),
            (Some(rows), None) => parse_matrix(rows).and_then(DensityOperator::new),
        }
        .map_err(|e| Error::InvalidParameter(format!("states[{idx}]: {e}")))?;
        states.push(state);
    }
    CqEnsemble::new(alphabet, probs, states)
}

fn parse_matrix(rows: &[Vec<[f64; 2]>]) -> Result<ComplexMatrix> {
    let d = rows.len();
    if d == 0 {
        return Err(Error::InvalidParameter("matrix: empty".into()));
    }
    let mut data = Vec::with_capacity(d * d);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(Error::InvalidParameter(format!(
                "matrix[{i}]: {} entries in a row of a {d}x{d} matrix",
                row.len()
            )));
        }
        for &[re, im] in row {
            data.push(C64::new(re, im));
        }
    }
    ComplexMatrix::from_entries(d, d, data)
}

/// Serialize an ensemble to the explicit document form; parsing it back
/// reproduces every value exactly.
pub fn serialize_ensemble(e: &CqEnsemble) -> String {
    let states = e
        .states()
        .iter()
        .map(|s| {
            let d = s.dim();
            let m = s.matrix();
            let rows: Vec<Vec<[f64; 2]>> = (0..d)
                .map(|i| (0..d).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
                .collect();
            StateSpec { matrix: Some(rows), preset: None }
        })
        .collect();
    let doc = Document {
        preset: None,
        alphabet: Some(e.alphabet().to_vec()),
        probs: Some(e.probs().to_vec()),
        states: Some(states),
    };
    serde_json::to_string_pretty(&doc).expect("ensemble document serializes")
}
