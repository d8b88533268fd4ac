//! Experiment schema and combinatorial enumeration.
//!
//! An experiment distributes entangled particles to `N >= 2` observers. Each
//! observer selects one of her measurements and obtains one of the
//! measurement's detect results, or fails to detect ("N", always implicit and
//! always last). A *setting* picks one measurement per observer; an *outcome*
//! is one result per selected measurement; a *category* assigns a result to
//! every measurement of every observer and is the unit a local-realist model
//! puts probability on.
//!
//! Category encoding is fixed so that column order in the linear program,
//! files, and certificates is reproducible bit-exactly: mixed-radix integer,
//! observers in declared order (outermost), measurements in declared order,
//! result index innermost with no-detect as the largest digit value.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Label of the implicit no-detect result.
pub const NO_DETECT_LABEL: &str = "N";

/// Tolerance for "frequencies sum to 1" on ingestion.
pub const INPUT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("experiment needs at least two observers")]
    TooFewObservers,
    #[error("observer {0}: needs at least two measurements")]
    TooFewMeasurements(String),
    #[error("{0}/{1}: needs at least two detect results")]
    TooFewResults(String, String),
    #[error("duplicate name `{name}` in {scope}")]
    DuplicateName { name: String, scope: String },
    #[error("result label `{0}` is reserved for the no-detect result")]
    ReservedLabel(String),
    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },
    #[error("tallied override for setting {setting}: {problem}")]
    BadTally { setting: String, problem: String },
    #[error("frequencies for setting {setting} sum to {sum}, expected 1")]
    Unnormalized { setting: String, sum: f64 },
    #[error("negative frequency {value} at {setting}/{outcome}")]
    NegativeFrequency {
        setting: String,
        outcome: String,
        value: f64,
    },
    #[error("frequency table shape mismatch: {0}")]
    Shape(String),
    #[error("malformed frequency value `{0}`")]
    BadNumber(String),
    #[error("category space overflows u64")]
    TooLarge,
}

/// One measurement: its name and the ordered detect-result labels.
/// The no-detect result is implicit and always last.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementSpec {
    pub name: String,
    pub results: Vec<String>,
}

/// One observer and her ordered measurements.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObserverSpec {
    pub name: String,
    pub measurements: Vec<MeasurementSpec>,
}

/// A setting: one measurement index per observer, in declared observer order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Setting(Vec<usize>);

impl Setting {
    pub fn indices(&self) -> &[usize] {
        &self.0
    }
}

/// An outcome for some setting: one result index per observer, indexing into
/// the selected measurement's results with the no-detect result last.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Outcome(Vec<usize>);

impl Outcome {
    pub fn indices(&self) -> &[usize] {
        &self.0
    }
}

/// A category: one result index for every (observer, measurement) pair,
/// flattened observer-major. Digit value `Z_ik` (the largest) is no-detect.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Category {
    digits: Vec<u8>,
}

impl Category {
    pub fn digits(&self) -> &[u8] {
        &self.digits
    }
}

/// Which outcome set to enumerate for a setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeClass {
    /// Every combination of results including no-detects.
    All,
    /// Coincidences only: every observer detects.
    DetectOnly,
    /// The tallied set configured by the spec's tally policy.
    Tallied,
}

/// Validated experiment description plus the derived mixed-radix layout.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    observers: Vec<ObserverSpec>,
    /// Per-setting tallied-outcome overrides, canonicalized to enumeration order.
    tallied: BTreeMap<Setting, Vec<Outcome>>,
    /// Flat-position offset of each observer's first measurement.
    offsets: Vec<usize>,
    /// Digit radix per flat position: detect-result count + 1.
    radixes: Vec<u8>,
    /// Mixed-radix place value per flat position (first position outermost).
    weights: Vec<u64>,
    n_categories: u64,
    n_detect_categories: u64,
}

impl ExperimentSpec {
    pub fn new(observers: Vec<ObserverSpec>) -> Result<Self, ModelError> {
        Self::with_tallied(observers, &BTreeMap::new())
    }

    /// Build a spec with per-setting tallied-outcome overrides. Keys are
    /// comma-joined measurement names, values comma-joined result labels.
    pub fn with_tallied(
        observers: Vec<ObserverSpec>,
        tallied_labels: &BTreeMap<String, Vec<String>>,
    ) -> Result<Self, ModelError> {
        if observers.len() < 2 {
            return Err(ModelError::TooFewObservers);
        }
        let mut seen = std::collections::BTreeSet::new();
        for obs in &observers {
            if !seen.insert(obs.name.clone()) {
                return Err(ModelError::DuplicateName {
                    name: obs.name.clone(),
                    scope: "observers".into(),
                });
            }
            if obs.measurements.len() < 2 {
                return Err(ModelError::TooFewMeasurements(obs.name.clone()));
            }
            let mut mseen = std::collections::BTreeSet::new();
            for meas in &obs.measurements {
                if !mseen.insert(meas.name.clone()) {
                    return Err(ModelError::DuplicateName {
                        name: meas.name.clone(),
                        scope: format!("measurements of {}", obs.name),
                    });
                }
                if meas.results.len() < 2 {
                    return Err(ModelError::TooFewResults(
                        obs.name.clone(),
                        meas.name.clone(),
                    ));
                }
                if meas.results.len() > 254 {
                    return Err(ModelError::TooLarge);
                }
                let mut rseen = std::collections::BTreeSet::new();
                for r in &meas.results {
                    if r == NO_DETECT_LABEL {
                        return Err(ModelError::ReservedLabel(r.clone()));
                    }
                    if !rseen.insert(r.clone()) {
                        return Err(ModelError::DuplicateName {
                            name: r.clone(),
                            scope: format!("results of {}/{}", obs.name, meas.name),
                        });
                    }
                }
            }
        }

        let mut offsets = Vec::with_capacity(observers.len());
        let mut radixes = Vec::new();
        for obs in &observers {
            offsets.push(radixes.len());
            for meas in &obs.measurements {
                radixes.push(meas.results.len() as u8 + 1);
            }
        }
        let mut weights = vec![0u64; radixes.len()];
        let mut acc: u64 = 1;
        for pos in (0..radixes.len()).rev() {
            weights[pos] = acc;
            acc = acc
                .checked_mul(radixes[pos] as u64)
                .ok_or(ModelError::TooLarge)?;
        }
        let n_categories = acc;
        let mut n_detect: u64 = 1;
        for &r in &radixes {
            n_detect = n_detect
                .checked_mul(r as u64 - 1)
                .ok_or(ModelError::TooLarge)?;
        }

        let mut spec = ExperimentSpec {
            observers,
            tallied: BTreeMap::new(),
            offsets,
            radixes,
            weights,
            n_categories,
            n_detect_categories: n_detect,
        };

        let mut tallied = BTreeMap::new();
        for (setting_key, outcome_keys) in tallied_labels {
            let setting = spec.setting_by_names(
                &setting_key.split(',').map(str::trim).collect::<Vec<_>>(),
            )?;
            let mut outcomes = Vec::new();
            for key in outcome_keys {
                let labels: Vec<&str> = key.split(',').map(str::trim).collect();
                outcomes.push(spec.outcome_by_labels(&setting, &labels)?);
            }
            spec.validate_tally(&setting, &mut outcomes)?;
            tallied.insert(setting, outcomes);
        }
        spec.tallied = tallied;
        Ok(spec)
    }

    /// Canonicalize (sort to enumeration order, dedup) and check
    /// `D_s ⊆ D̃_s ⊆ R_s \ {all no-detect}`.
    fn validate_tally(
        &self,
        setting: &Setting,
        outcomes: &mut Vec<Outcome>,
    ) -> Result<(), ModelError> {
        outcomes.sort();
        outcomes.dedup();
        let key = self.setting_label(setting);
        for d in outcomes.iter() {
            if d.0.iter().enumerate().all(|(i, &r)| {
                r == self.detect_result_count(i, setting.0[i])
            }) {
                return Err(ModelError::BadTally {
                    setting: key,
                    problem: "the all-no-detect outcome cannot be tallied".into(),
                });
            }
        }
        for d in self.outcomes(setting, OutcomeClass::DetectOnly) {
            if !outcomes.contains(&d) {
                return Err(ModelError::BadTally {
                    setting: key,
                    problem: format!(
                        "missing coincidence outcome {}",
                        self.outcome_label(setting, &d)
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn observer_count(&self) -> usize {
        self.observers.len()
    }

    pub fn observers(&self) -> &[ObserverSpec] {
        &self.observers
    }

    pub fn observer_name(&self, i: usize) -> &str {
        &self.observers[i].name
    }

    pub fn observer_index(&self, name: &str) -> Result<usize, ModelError> {
        self.observers
            .iter()
            .position(|o| o.name == name)
            .ok_or_else(|| ModelError::UnknownName {
                kind: "observer",
                name: name.into(),
            })
    }

    pub fn measurement_count(&self, observer: usize) -> usize {
        self.observers[observer].measurements.len()
    }

    pub fn measurement_name(&self, observer: usize, k: usize) -> &str {
        &self.observers[observer].measurements[k].name
    }

    /// Detect-result count `Z_ik`.
    pub fn detect_result_count(&self, observer: usize, k: usize) -> usize {
        self.observers[observer].measurements[k].results.len()
    }

    /// Result label, with the no-detect index mapping to [`NO_DETECT_LABEL`].
    pub fn result_label(&self, observer: usize, k: usize, r: usize) -> &str {
        let results = &self.observers[observer].measurements[k].results;
        if r == results.len() {
            NO_DETECT_LABEL
        } else {
            &results[r]
        }
    }

    /// Flat position of (observer, measurement) in the category digit vector.
    pub fn position(&self, observer: usize, k: usize) -> usize {
        self.offsets[observer] + k
    }

    pub fn position_count(&self) -> usize {
        self.radixes.len()
    }

    /// |J̃|: number of categories including no-detect results.
    pub fn category_count(&self) -> u64 {
        self.n_categories
    }

    /// |J|: number of categories in which every measurement detects.
    pub fn detect_category_count(&self) -> u64 {
        self.n_detect_categories
    }

    pub fn setting(&self, indices: &[usize]) -> Result<Setting, ModelError> {
        if indices.len() != self.observers.len() {
            return Err(ModelError::Shape(format!(
                "setting has {} entries for {} observers",
                indices.len(),
                self.observers.len()
            )));
        }
        for (i, &k) in indices.iter().enumerate() {
            if k >= self.measurement_count(i) {
                return Err(ModelError::UnknownName {
                    kind: "measurement index",
                    name: format!("{}:{}", self.observer_name(i), k),
                });
            }
        }
        Ok(Setting(indices.to_vec()))
    }

    pub fn setting_by_names(&self, names: &[&str]) -> Result<Setting, ModelError> {
        if names.len() != self.observers.len() {
            return Err(ModelError::Shape(format!(
                "setting key has {} names for {} observers",
                names.len(),
                self.observers.len()
            )));
        }
        let mut indices = Vec::with_capacity(names.len());
        for (obs, name) in self.observers.iter().zip(names) {
            let k = obs
                .measurements
                .iter()
                .position(|m| m.name == *name)
                .ok_or_else(|| ModelError::UnknownName {
                    kind: "measurement",
                    name: (*name).into(),
                })?;
            indices.push(k);
        }
        Ok(Setting(indices))
    }

    pub fn outcome_by_labels(
        &self,
        setting: &Setting,
        labels: &[&str],
    ) -> Result<Outcome, ModelError> {
        if labels.len() != self.observers.len() {
            return Err(ModelError::Shape(format!(
                "outcome key has {} labels for {} observers",
                labels.len(),
                self.observers.len()
            )));
        }
        let mut indices = Vec::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            let k = setting.0[i];
            let z = self.detect_result_count(i, k);
            let r = if *label == NO_DETECT_LABEL {
                z
            } else {
                self.observers[i].measurements[k]
                    .results
                    .iter()
                    .position(|l| l == label)
                    .ok_or_else(|| ModelError::UnknownName {
                        kind: "result",
                        name: (*label).into(),
                    })?
            };
            indices.push(r);
        }
        Ok(Outcome(indices))
    }

    /// All settings, lexicographic in declared observer order. Length `Π K_i`.
    pub fn settings(&self) -> Vec<Setting> {
        let counts: Vec<usize> = (0..self.observers.len())
            .map(|i| self.measurement_count(i))
            .collect();
        mixed_radix_product(&counts).map(Setting).collect()
    }

    pub fn setting_index(&self, setting: &Setting) -> usize {
        let mut idx = 0;
        for (i, &k) in setting.0.iter().enumerate() {
            idx = idx * self.measurement_count(i) + k;
        }
        idx
    }

    /// Outcomes of a setting in lexicographic order (no-detect sorts last).
    pub fn outcomes(&self, setting: &Setting, class: OutcomeClass) -> Vec<Outcome> {
        match class {
            OutcomeClass::All => {
                let counts: Vec<usize> = setting
                    .0
                    .iter()
                    .enumerate()
                    .map(|(i, &k)| self.detect_result_count(i, k) + 1)
                    .collect();
                mixed_radix_product(&counts).map(Outcome).collect()
            }
            OutcomeClass::DetectOnly => {
                let counts: Vec<usize> = setting
                    .0
                    .iter()
                    .enumerate()
                    .map(|(i, &k)| self.detect_result_count(i, k))
                    .collect();
                mixed_radix_product(&counts).map(Outcome).collect()
            }
            OutcomeClass::Tallied => match self.tallied.get(setting) {
                Some(list) => list.clone(),
                None => self.outcomes(setting, OutcomeClass::DetectOnly),
            },
        }
    }

    /// Whether the tally policy keeps only coincidences for every setting.
    pub fn coincidences_only(&self) -> bool {
        self.settings().iter().all(|s| {
            match self.tallied.get(s) {
                None => true,
                Some(list) => *list == self.outcomes(s, OutcomeClass::DetectOnly),
            }
        })
    }

    /// Tallied-override table keyed by labels, for serialization.
    pub fn tallied_overrides(&self) -> BTreeMap<String, Vec<String>> {
        self.tallied
            .iter()
            .map(|(s, list)| {
                (
                    self.setting_label(s),
                    list.iter().map(|d| self.outcome_label(s, d)).collect(),
                )
            })
            .collect()
    }

    /// The projection `P_s(j)`: the result j assigns to each selected measurement.
    pub fn project(&self, category: &Category, setting: &Setting) -> Outcome {
        Outcome(
            setting
                .0
                .iter()
                .enumerate()
                .map(|(i, &k)| category.digits[self.position(i, k)] as usize)
                .collect(),
        )
    }

    /// The category that yields outcome `d` for the measurements selected in
    /// `setting` and a no-detect for every other measurement.
    pub fn j_spec(&self, setting: &Setting, d: &Outcome) -> Category {
        let mut digits: Vec<u8> = self.radixes.iter().map(|&r| r - 1).collect();
        for (i, &k) in setting.0.iter().enumerate() {
            digits[self.position(i, k)] = d.0[i] as u8;
        }
        Category { digits }
    }

    pub fn encode(&self, category: &Category) -> u64 {
        debug_assert_eq!(category.digits.len(), self.radixes.len());
        category
            .digits
            .iter()
            .zip(&self.weights)
            .map(|(&d, &w)| d as u64 * w)
            .sum()
    }

    pub fn decode(&self, code: u64) -> Category {
        debug_assert!(code < self.n_categories);
        let mut digits = vec![0u8; self.radixes.len()];
        let mut rest = code;
        for pos in 0..self.radixes.len() {
            digits[pos] = (rest / self.weights[pos]) as u8;
            rest %= self.weights[pos];
        }
        Category { digits }
    }

    /// Iterate all categories in encoding order.
    pub fn all_categories(&self) -> impl Iterator<Item = Category> + '_ {
        (0..self.n_categories).map(move |code| self.decode(code))
    }

    /// Iterate the categories with `P_s(j) = r`, in encoding order.
    /// Yields exactly `|J̃| / |R_s|` categories.
    pub fn categories_for<'a>(
        &'a self,
        setting: &Setting,
        outcome: &Outcome,
    ) -> impl Iterator<Item = Category> + 'a {
        let mut fixed = vec![None; self.radixes.len()];
        for (i, &k) in setting.0.iter().enumerate() {
            fixed[self.position(i, k)] = Some(outcome.0[i] as u8);
        }
        let free: Vec<usize> = (0..self.radixes.len())
            .filter(|&p| fixed[p].is_none())
            .collect();
        let free_counts: Vec<usize> =
            free.iter().map(|&p| self.radixes[p] as usize).collect();
        let template: Vec<u8> = fixed.iter().map(|f| f.unwrap_or(0)).collect();
        mixed_radix_product(&free_counts).map(move |assign| {
            let mut digits = template.clone();
            for (slot, &p) in free.iter().enumerate() {
                digits[p] = assign[slot] as u8;
            }
            Category { digits }
        })
    }

    /// Whether the digit at (observer, measurement) is the no-detect result.
    pub fn is_no_detect(&self, category: &Category, observer: usize, k: usize) -> bool {
        let pos = self.position(observer, k);
        category.digits[pos] == self.radixes[pos] - 1
    }

    /// Whether every digit of the category is a detect result (j ∈ J).
    pub fn all_detect(&self, category: &Category) -> bool {
        category
            .digits
            .iter()
            .zip(&self.radixes)
            .all(|(&d, &r)| d != r - 1)
    }

    pub fn setting_label(&self, setting: &Setting) -> String {
        setting
            .0
            .iter()
            .enumerate()
            .map(|(i, &k)| self.measurement_name(i, k))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn outcome_label(&self, setting: &Setting, outcome: &Outcome) -> String {
        outcome
            .0
            .iter()
            .enumerate()
            .map(|(i, &r)| self.result_label(i, setting.0[i], r))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn category_label(&self, category: &Category) -> String {
        let mut parts = Vec::with_capacity(self.radixes.len());
        for (i, obs) in self.observers.iter().enumerate() {
            for k in 0..obs.measurements.len() {
                parts.push(
                    self.result_label(i, k, category.digits[self.position(i, k)] as usize)
                        .to_string(),
                );
            }
        }
        parts.join(",")
    }
}

/// Lexicographic product over per-slot counts, first slot outermost.
fn mixed_radix_product(counts: &[usize]) -> MixedRadixProduct {
    MixedRadixProduct {
        counts: counts.to_vec(),
        next: if counts.iter().any(|&c| c == 0) {
            None
        } else {
            Some(vec![0; counts.len()])
        },
    }
}

struct MixedRadixProduct {
    counts: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for MixedRadixProduct {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.clone()?;
        let mut succ = current.clone();
        let mut pos = self.counts.len();
        loop {
            if pos == 0 {
                self.next = None;
                break;
            }
            pos -= 1;
            succ[pos] += 1;
            if succ[pos] < self.counts[pos] {
                self.next = Some(succ);
                break;
            }
            succ[pos] = 0;
        }
        Some(current)
    }
}

/// Per-setting normalized frequencies over tallied outcomes (the vector q).
///
/// Values are aligned with [`ExperimentSpec::settings`] and
/// `outcomes(s, Tallied)` order. No-signaling is *not* required of q.
#[derive(Debug, Clone, PartialEq)]
pub struct TalliedFrequencies {
    values: Vec<Vec<f64>>,
}

impl TalliedFrequencies {
    pub fn new(spec: &ExperimentSpec, values: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let settings = spec.settings();
        if values.len() != settings.len() {
            return Err(ModelError::Shape(format!(
                "{} settings in table, {} in spec",
                values.len(),
                settings.len()
            )));
        }
        for (s, row) in settings.iter().zip(&values) {
            let outcomes = spec.outcomes(s, OutcomeClass::Tallied);
            if row.len() != outcomes.len() {
                return Err(ModelError::Shape(format!(
                    "setting {} has {} values for {} tallied outcomes",
                    spec.setting_label(s),
                    row.len(),
                    outcomes.len()
                )));
            }
            let mut sum = 0.0;
            for (d, &q) in outcomes.iter().zip(row) {
                if !q.is_finite() || q < 0.0 {
                    return Err(ModelError::NegativeFrequency {
                        setting: spec.setting_label(s),
                        outcome: spec.outcome_label(s, d),
                        value: q,
                    });
                }
                sum += q;
            }
            if (sum - 1.0).abs() > INPUT_SUM_TOL {
                return Err(ModelError::Unnormalized {
                    setting: spec.setting_label(s),
                    sum,
                });
            }
        }
        Ok(TalliedFrequencies { values })
    }

    pub fn from_labelled(
        spec: &ExperimentSpec,
        table: &BTreeMap<String, BTreeMap<String, f64>>,
    ) -> Result<Self, ModelError> {
        let settings = spec.settings();
        let mut values = Vec::with_capacity(settings.len());
        for s in &settings {
            let key = spec.setting_label(s);
            let row_map = table.get(&key).ok_or(ModelError::Shape(format!(
                "missing setting {key}"
            )))?;
            let outcomes = spec.outcomes(s, OutcomeClass::Tallied);
            if row_map.len() != outcomes.len() {
                return Err(ModelError::Shape(format!(
                    "setting {key}: {} entries for {} tallied outcomes",
                    row_map.len(),
                    outcomes.len()
                )));
            }
            let mut row = Vec::with_capacity(outcomes.len());
            for d in &outcomes {
                let label = spec.outcome_label(s, d);
                let q = row_map.get(&label).ok_or(ModelError::Shape(format!(
                    "setting {key}: missing outcome {label}"
                )))?;
                row.push(*q);
            }
            values.push(row);
        }
        Self::new(spec, values)
    }

    pub fn value(&self, setting_idx: usize, outcome_idx: usize) -> f64 {
        self.values[setting_idx][outcome_idx]
    }

    pub fn row(&self, setting_idx: usize) -> &[f64] {
        &self.values[setting_idx]
    }

    pub fn to_labelled(&self, spec: &ExperimentSpec) -> BTreeMap<String, BTreeMap<String, f64>> {
        let mut out = BTreeMap::new();
        for (s_idx, s) in spec.settings().iter().enumerate() {
            let mut row = BTreeMap::new();
            for (d_idx, d) in spec.outcomes(s, OutcomeClass::Tallied).iter().enumerate() {
                row.insert(spec.outcome_label(s, d), self.values[s_idx][d_idx]);
            }
            out.insert(spec.setting_label(s), row);
        }
        out
    }
}

/// Frequencies q̃ over *all* outcomes of every setting, aligned with
/// `outcomes(s, All)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct FullFrequencies {
    values: Vec<Vec<f64>>,
}

impl FullFrequencies {
    pub fn new(spec: &ExperimentSpec, values: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let settings = spec.settings();
        if values.len() != settings.len() {
            return Err(ModelError::Shape(format!(
                "{} settings in table, {} in spec",
                values.len(),
                settings.len()
            )));
        }
        for (s, row) in settings.iter().zip(&values) {
            let want = spec.outcomes(s, OutcomeClass::All).len();
            if row.len() != want {
                return Err(ModelError::Shape(format!(
                    "setting {} has {} values for {} outcomes",
                    spec.setting_label(s),
                    row.len(),
                    want
                )));
            }
        }
        Ok(FullFrequencies { values })
    }

    pub fn value(&self, setting_idx: usize, outcome_idx: usize) -> f64 {
        self.values[setting_idx][outcome_idx]
    }

    pub fn row(&self, setting_idx: usize) -> &[f64] {
        &self.values[setting_idx]
    }

    /// Largest violation of `q̃ ≥ 0` and per-setting normalization.
    pub fn normalization_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for row in &self.values {
            let mut sum = 0.0;
            for &q in row {
                worst = worst.max(-q);
                sum += q;
            }
            worst = worst.max((sum - 1.0).abs());
        }
        worst
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}
