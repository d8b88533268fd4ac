//! JSON file formats. All writers order keys deterministically and print
//! floating-point values as shortest round-trip decimal strings, so repeated
//! runs emit identical bytes and third parties can re-parse exactly.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::certify::{BellCertificate, CertificateReport};
use crate::builder::LrModel;
use crate::model::{ExperimentSpec, ObserverSpec, OutcomeClass, TalliedFrequencies};
use crate::quantum::{self, QuantumFixture};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Quantum(#[from] crate::quantum::QuantumError),
    #[error("bad value `{0}`: not a decimal number")]
    BadDecimal(String),
    #[error("{0}")]
    Invalid(String),
}

/// A number that reads from either a JSON string or a JSON number and
/// always writes as a decimal string.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Decimal {
    Text(String),
    Number(f64),
}

impl Decimal {
    pub fn parse(&self) -> Result<f64, IoError> {
        match self {
            Decimal::Number(v) => Ok(*v),
            Decimal::Text(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|_| IoError::BadDecimal(s.clone())),
        }
    }

    pub fn of(value: f64) -> Decimal {
        Decimal::Text(format!("{value}"))
    }
}

// ---------------------------------------------------------------------------
// experiment description
// ---------------------------------------------------------------------------

/// On-disk form of an experiment: observers with measurements and detect
/// results (the no-detect result is implicit), plus optional per-setting
/// tallied-outcome overrides keyed by comma-joined names.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecFile {
    pub observers: Vec<ObserverSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tallied: BTreeMap<String, Vec<String>>,
}

pub fn spec_from_json(text: &str) -> Result<ExperimentSpec, IoError> {
    let file: SpecFile = serde_json::from_str(text)?;
    Ok(ExperimentSpec::with_tallied(file.observers, &file.tallied)?)
}

pub fn spec_to_json(spec: &ExperimentSpec) -> String {
    let file = SpecFile {
        observers: spec.observers().to_vec(),
        tallied: spec.tallied_overrides(),
    };
    serde_json::to_string_pretty(&file).expect("spec serializes") + "\n"
}

// ---------------------------------------------------------------------------
// tallied frequencies
// ---------------------------------------------------------------------------

/// On-disk form of a tallied-frequency table: settings keyed by measurement
/// names, outcomes keyed by result labels, values as decimal strings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrequencyFile {
    pub frequencies: BTreeMap<String, BTreeMap<String, Decimal>>,
}

pub fn frequencies_from_json(
    spec: &ExperimentSpec,
    text: &str,
) -> Result<TalliedFrequencies, IoError> {
    let file: FrequencyFile = serde_json::from_str(text)?;
    let mut table = BTreeMap::new();
    for (setting, row) in &file.frequencies {
        let mut parsed = BTreeMap::new();
        for (outcome, value) in row {
            parsed.insert(outcome.clone(), value.parse()?);
        }
        table.insert(setting.clone(), parsed);
    }
    Ok(TalliedFrequencies::from_labelled(spec, &table)?)
}

pub fn frequencies_to_json(spec: &ExperimentSpec, q: &TalliedFrequencies) -> String {
    let mut frequencies = BTreeMap::new();
    for (setting, row) in q.to_labelled(spec) {
        let mut out = BTreeMap::new();
        for (outcome, value) in row {
            out.insert(outcome, Decimal::of(value));
        }
        frequencies.insert(setting, out);
    }
    serde_json::to_string_pretty(&FrequencyFile { frequencies }).expect("table serializes") + "\n"
}

// ---------------------------------------------------------------------------
// quantum fixtures
// ---------------------------------------------------------------------------

/// On-disk form of a quantum fixture: a named preset with parameters, or an
/// explicit state vector plus row-major measurement bases, both with complex
/// entries as `[re, im]` pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FixtureFile {
    Preset {
        preset: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        angles_a: Vec<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        angles_b: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        xi: Option<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        angles: Vec<Vec<f64>>,
    },
    Explicit {
        dims: Vec<usize>,
        state: Vec<(f64, f64)>,
        bases: Vec<Vec<Vec<Vec<(f64, f64)>>>>,
    },
}

pub fn fixture_from_json(text: &str) -> Result<QuantumFixture, IoError> {
    let file: FixtureFile = serde_json::from_str(text)?;
    fixture_from_file(&file)
}

pub fn fixture_from_file(file: &FixtureFile) -> Result<QuantumFixture, IoError> {
    match file {
        FixtureFile::Preset {
            preset,
            angles_a,
            angles_b,
            xi,
            angles,
        } => match preset.as_str() {
            "singlet" => Ok(quantum::singlet_fixture(angles_a, angles_b)?),
            "ghz" => Ok(quantum::ghz_fixture()),
            "two-qubit" => {
                let xi = xi.ok_or_else(|| {
                    IoError::Invalid("two-qubit preset needs `xi`".into())
                })?;
                Ok(quantum::two_qubit_fixture(xi, angles_a, angles_b)?)
            }
            "product" => Ok(quantum::product_fixture(angles)?),
            other => Err(IoError::Invalid(format!("unknown preset `{other}`"))),
        },
        FixtureFile::Explicit { dims, state, bases } => {
            let state: Vec<Complex64> = state
                .iter()
                .map(|&(re, im)| Complex64::new(re, im))
                .collect();
            let bases = bases
                .iter()
                .map(|obs| {
                    obs.iter()
                        .map(|basis| {
                            basis
                                .iter()
                                .map(|row| {
                                    row.iter()
                                        .map(|&(re, im)| Complex64::new(re, im))
                                        .collect()
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect();
            Ok(QuantumFixture::new(dims.clone(), state, bases)?)
        }
    }
}

// ---------------------------------------------------------------------------
// certificates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateRow {
    pub label: String,
    pub y: Decimal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationSummary {
    pub verified: bool,
    pub columns_checked: u64,
    pub total_columns: u64,
    pub exhaustive: bool,
    pub worst_category_value: Decimal,
    pub tolerance: Decimal,
}

/// Self-contained export of an infeasibility certificate: enough for a third
/// party to rebuild the row map from the experiment description and re-check
/// every inequality without this codebase.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateFile {
    /// Observer name -> pinned detection value.
    pub fixed: BTreeMap<String, Decimal>,
    pub objective_observers: Vec<String>,
    /// True when the pinned quantity is the minimum over the subset.
    pub symmetric: bool,
    pub pin: Decimal,
    pub rows: Vec<CertificateRow>,
    pub margin: Decimal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationSummary>,
}

pub fn certificate_to_json(
    cert: &BellCertificate,
    spec: &ExperimentSpec,
    report: Option<&CertificateReport>,
) -> Result<String, IoError> {
    let scenario = cert
        .scenario(spec)
        .map_err(|e| IoError::Invalid(e.to_string()))?;
    let layout = crate::builder::LpLayout::new(spec, &scenario, Some(cert.pin))
        .map_err(|e| IoError::Invalid(e.to_string()))?;
    let rows = cert
        .y
        .iter()
        .enumerate()
        .map(|(row, &y)| CertificateRow {
            label: layout.row_label(spec, &scenario, row),
            y: Decimal::of(y),
        })
        .collect();
    let file = CertificateFile {
        fixed: cert
            .fixed
            .iter()
            .map(|&(i, v)| (spec.observer_name(i).to_string(), Decimal::of(v)))
            .collect(),
        objective_observers: cert
            .objective_observers
            .iter()
            .map(|&i| spec.observer_name(i).to_string())
            .collect(),
        symmetric: cert.symmetric,
        pin: Decimal::of(cert.pin),
        rows,
        margin: Decimal::of(cert.margin),
        verification: report.map(|r| VerificationSummary {
            verified: true,
            columns_checked: r.columns_checked,
            total_columns: r.total_columns,
            exhaustive: r.exhaustive,
            worst_category_value: Decimal::of(r.worst_category_value),
            tolerance: Decimal::of(r.tolerance),
        }),
    };
    Ok(serde_json::to_string_pretty(&file)? + "\n")
}

pub fn certificate_from_json(
    spec: &ExperimentSpec,
    text: &str,
) -> Result<BellCertificate, IoError> {
    let file: CertificateFile = serde_json::from_str(text)?;
    let mut fixed = Vec::new();
    for (name, value) in &file.fixed {
        fixed.push((spec.observer_index(name)?, value.parse()?));
    }
    fixed.sort_by_key(|&(i, _)| i);
    let objective_observers = file
        .objective_observers
        .iter()
        .map(|name| spec.observer_index(name).map_err(IoError::from))
        .collect::<Result<Vec<_>, _>>()?;
    if objective_observers.is_empty() {
        return Err(IoError::Invalid("certificate has no objective observers".into()));
    }
    let y = file
        .rows
        .iter()
        .map(|r| r.y.parse())
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BellCertificate {
        fixed,
        objective_observers,
        symmetric: file.symmetric,
        pin: file.pin.parse()?,
        y,
        margin: file.margin.parse()?,
    })
}

// ---------------------------------------------------------------------------
// witness models
// ---------------------------------------------------------------------------

/// Export of a feasible local-realist model: sparse category support plus the
/// derived per-setting and per-measurement quantities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WitnessFile {
    /// Category label (one result per measurement, observer-major) -> mass.
    pub support: BTreeMap<String, Decimal>,
    /// Setting label -> tally probability.
    pub v: BTreeMap<String, Decimal>,
    /// Observer -> measurement -> detection probability.
    pub pdet: BTreeMap<String, BTreeMap<String, Decimal>>,
    pub dmin: BTreeMap<String, Decimal>,
    pub dsym: Decimal,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate_settings: Vec<String>,
}

pub fn witness_to_json(model: &LrModel, spec: &ExperimentSpec) -> String {
    let settings = spec.settings();
    let file = WitnessFile {
        support: model
            .x
            .iter()
            .enumerate()
            .filter(|&(_, &m)| m > 0.0)
            .map(|(code, &m)| {
                (
                    spec.category_label(&spec.decode(code as u64)),
                    Decimal::of(m),
                )
            })
            .collect(),
        v: settings
            .iter()
            .enumerate()
            .map(|(s_idx, s)| (spec.setting_label(s), Decimal::of(model.v[s_idx])))
            .collect(),
        pdet: (0..spec.observer_count())
            .map(|i| {
                (
                    spec.observer_name(i).to_string(),
                    (0..spec.measurement_count(i))
                        .map(|k| {
                            (
                                spec.measurement_name(i, k).to_string(),
                                Decimal::of(model.pdet[i][k]),
                            )
                        })
                        .collect(),
                )
            })
            .collect(),
        dmin: (0..spec.observer_count())
            .map(|i| (spec.observer_name(i).to_string(), Decimal::of(model.dmin[i])))
            .collect(),
        dsym: Decimal::of(model.dsym),
        degenerate_settings: model
            .degenerate_settings()
            .into_iter()
            .map(|s_idx| spec.setting_label(&settings[s_idx]))
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("witness serializes") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MeasurementSpec;

    fn archetypal_json() -> String {
        let meas = |names: &[&str]| {
            names
                .iter()
                .map(|n| MeasurementSpec {
                    name: (*n).into(),
                    results: vec!["U".into(), "D".into()],
                })
                .collect::<Vec<_>>()
        };
        let spec = ExperimentSpec::new(vec![
            ObserverSpec {
                name: "Alice".into(),
                measurements: meas(&["A1", "A2"]),
            },
            ObserverSpec {
                name: "Bob".into(),
                measurements: meas(&["B1", "B2"]),
            },
        ])
        .unwrap();
        spec_to_json(&spec)
    }

    #[test]
    fn spec_roundtrip() {
        let text = archetypal_json();
        let spec = spec_from_json(&text).unwrap();
        assert_eq!(spec.category_count(), 81);
        assert_eq!(spec_to_json(&spec), text);
    }

    #[test]
    fn frequencies_roundtrip_and_decimal_strings() {
        let spec = spec_from_json(&archetypal_json()).unwrap();
        let q = TalliedFrequencies::new(&spec, vec![vec![0.125, 0.375, 0.375, 0.125]; 4])
            .unwrap();
        let text = frequencies_to_json(&spec, &q);
        assert!(text.contains("\"0.375\""));
        let back = frequencies_from_json(&spec, &text).unwrap();
        assert_eq!(q, back);
        // identical bytes run-to-run
        assert_eq!(text, frequencies_to_json(&spec, &back));
    }

    #[test]
    fn frequencies_accept_plain_numbers() {
        let spec = spec_from_json(&archetypal_json()).unwrap();
        let text = r#"{"frequencies": {
            "A1,B1": {"U,U": 0.25, "U,D": 0.25, "D,U": 0.25, "D,D": 0.25},
            "A1,B2": {"U,U": 0.25, "U,D": 0.25, "D,U": 0.25, "D,D": 0.25},
            "A2,B1": {"U,U": 0.25, "U,D": 0.25, "D,U": 0.25, "D,D": 0.25},
            "A2,B2": {"U,U": 0.25, "U,D": 0.25, "D,U": 0.25, "D,D": 0.25}
        }}"#;
        let q = frequencies_from_json(&spec, text).unwrap();
        assert_eq!(q.value(0, 0), 0.25);
    }

    #[test]
    fn fixture_presets_parse() {
        let singlet = r#"{"preset": "singlet", "angles_a": [0.0, 1.0471975511965976],
                          "angles_b": [0.0, 2.0943951023931953]}"#;
        let fix = fixture_from_json(singlet).unwrap();
        assert_eq!(fix.dims, vec![2, 2]);
        let ghz = r#"{"preset": "ghz"}"#;
        let fix = fixture_from_json(ghz).unwrap();
        assert_eq!(fix.dims, vec![2, 2, 2]);
        assert!(fixture_from_json(r#"{"preset": "nope"}"#).is_err());
    }

    #[test]
    fn fixture_explicit_parses_and_validates() {
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        let file = FixtureFile::Explicit {
            dims: vec![2, 2],
            state: vec![(0.0, 0.0), (inv, 0.0), (-inv, 0.0), (0.0, 0.0)],
            bases: vec![
                vec![
                    vec![vec![(1.0, 0.0), (0.0, 0.0)], vec![(0.0, 0.0), (1.0, 0.0)]],
                    vec![vec![(inv, 0.0), (inv, 0.0)], vec![(-inv, 0.0), (inv, 0.0)]],
                ],
                vec![
                    vec![vec![(1.0, 0.0), (0.0, 0.0)], vec![(0.0, 0.0), (1.0, 0.0)]],
                    vec![vec![(inv, 0.0), (inv, 0.0)], vec![(-inv, 0.0), (inv, 0.0)]],
                ],
            ],
        };
        let text = serde_json::to_string(&file).unwrap();
        let fix = fixture_from_json(&text).unwrap();
        assert_eq!(fix.state.len(), 4);
    }

    #[test]
    fn malformed_frequency_value_is_reported() {
        let spec = spec_from_json(&archetypal_json()).unwrap();
        let text = r#"{"frequencies": {"A1,B1": {"U,U": "zero point five"}}}"#;
        assert!(matches!(
            frequencies_from_json(&spec, text),
            Err(IoError::BadDecimal(_))
        ));
    }
}
