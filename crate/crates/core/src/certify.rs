//! Solver-independent verification.
//!
//! Everything here re-derives its answer from the experiment description and
//! the frequency data: the explicit always-feasible witness, the perfect-
//! detection characterization, no-signaling checks on full frequency tables,
//! bisection on pinned efficiencies as an independent route to the critical
//! value, and exhaustive re-checking of infeasibility certificates. A
//! certificate consumes nothing from the solver beyond the dual vector.

use serde::{Deserialize, Serialize};

use crate::builder::{
    self, build_pinned, LpLayout, LrModel, Objective, ObjectiveScenario, ScenarioError,
};
use crate::lp::{self, LpStatus, Relation, SolverConfig};
use crate::model::{ExperimentSpec, FullFrequencies, OutcomeClass, TalliedFrequencies};
use crate::parallel::{self, Parallelism};

/// Relative tolerance for certificate column checks and margins.
pub const CERT_TOL: f64 = 1e-7;
/// Exhaustive column sweeps are capped here; larger spaces are strided.
pub const EXHAUSTIVE_CAP: u64 = 1_000_000;

#[derive(Debug, thiserror::Error)]
pub enum CertifyError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Lp(#[from] lp::LpError),
    #[error("witness construction needs a coincidences-only tally policy")]
    TallyPolicy,
    #[error("certificate rejected: {0}")]
    Rejected(String),
    #[error("certificate row count {got} does not match the program's {want}")]
    RowCount { got: usize, want: usize },
    #[error("bisection bracket failed: pinning at {0} is already infeasible")]
    Unbracketed(f64),
}

/// Explicit local-realist model for any normalized coincidence table: spread
/// the tally probability evenly over settings and put each setting's mass on
/// the category that detects exactly its own measurements.
pub fn construct_witness(
    spec: &ExperimentSpec,
    q: &TalliedFrequencies,
) -> Result<LrModel, CertifyError> {
    if !spec.coincidences_only() {
        return Err(CertifyError::TallyPolicy);
    }
    let settings = spec.settings();
    let v_each = 1.0 / settings.len() as f64;
    let mut x = vec![0.0; spec.category_count() as usize];
    for (s_idx, s) in settings.iter().enumerate() {
        for (d_idx, d) in spec.outcomes(s, OutcomeClass::Tallied).iter().enumerate() {
            let j = spec.encode(&spec.j_spec(s, d));
            x[j as usize] += q.value(s_idx, d_idx) * v_each;
        }
    }
    Ok(LrModel::from_distribution(
        spec,
        x,
        vec![v_each; settings.len()],
    ))
}

/// Outcome of the perfect-detection characterization on a model.
#[derive(Debug, Clone)]
pub struct PerfectDetectionReport {
    /// Category mass confined to all-detect categories.
    pub support_in_detect: bool,
    /// Every per-measurement detection probability equals one.
    pub all_pdet_one: bool,
    /// Largest mass found on a category with a no-detect entry.
    pub stray_mass: f64,
    /// Smallest detection probability over measurements.
    pub min_pdet: f64,
    /// The four perfect-detection consequences, when support is confined:
    /// no mass off the coincidence outcomes, no tallied frequency off the
    /// coincidences, unit tally probabilities, and tallied frequencies equal
    /// to the full ones. `None` when support strays.
    pub consequences: Option<PerfectDetectionConsequences>,
}

#[derive(Debug, Clone)]
pub struct PerfectDetectionConsequences {
    pub off_coincidence_full_mass: f64,
    pub off_coincidence_tallied_mass: f64,
    pub max_v_deviation: f64,
    pub max_frequency_gap: f64,
}

impl PerfectDetectionReport {
    /// The characterization itself: confinement iff perfect detection.
    pub fn biconditional_holds(&self) -> bool {
        self.support_in_detect == self.all_pdet_one
    }

    pub fn consequences_hold(&self, tol: f64) -> bool {
        match &self.consequences {
            None => false,
            Some(c) => {
                c.off_coincidence_full_mass <= tol
                    && c.off_coincidence_tallied_mass <= tol
                    && c.max_v_deviation <= tol
                    && c.max_frequency_gap <= tol
            }
        }
    }
}

/// Check whether a model has perfect detection, both ways: by the support of
/// its category distribution and by its detection probabilities — and when
/// the support is confined, check the four consequences against `q`.
pub fn check_perfect_detection(
    model: &LrModel,
    spec: &ExperimentSpec,
    q: &TalliedFrequencies,
    tol: f64,
) -> PerfectDetectionReport {
    let mut stray = 0.0f64;
    for (code, &mass) in model.x.iter().enumerate() {
        if mass > 0.0 && !spec.all_detect(&spec.decode(code as u64)) {
            stray = stray.max(mass);
        }
    }
    let mut min_pdet = f64::INFINITY;
    for row in &model.pdet {
        for &p in row {
            min_pdet = min_pdet.min(p);
        }
    }
    let support_in_detect = stray <= tol;
    let all_pdet_one = (1.0 - min_pdet).abs() <= tol;

    let consequences = support_in_detect.then(|| {
        let settings = spec.settings();
        let mut off_full = 0.0f64;
        let mut off_tallied = 0.0f64;
        let mut v_dev = 0.0f64;
        let mut gap = 0.0f64;
        for (s_idx, s) in settings.iter().enumerate() {
            let all = spec.outcomes(s, OutcomeClass::All);
            let tallied = spec.outcomes(s, OutcomeClass::Tallied);
            for (rank, r) in all.iter().enumerate() {
                let coincident = r
                    .indices()
                    .iter()
                    .enumerate()
                    .all(|(i, &res)| res < spec.detect_result_count(i, s.indices()[i]));
                if !coincident {
                    off_full = off_full.max(model.full.value(s_idx, rank));
                }
            }
            for (d_idx, d) in tallied.iter().enumerate() {
                let coincident = d
                    .indices()
                    .iter()
                    .enumerate()
                    .all(|(i, &res)| res < spec.detect_result_count(i, s.indices()[i]));
                if !coincident {
                    off_tallied = off_tallied.max(q.value(s_idx, d_idx));
                } else {
                    // full frequency of this outcome equals its rank in All
                    let rank: usize = all.iter().position(|r| r == d).expect("subset");
                    gap = gap.max((model.full.value(s_idx, rank) - q.value(s_idx, d_idx)).abs());
                }
            }
            v_dev = v_dev.max((model.v[s_idx] - 1.0).abs());
        }
        PerfectDetectionConsequences {
            off_coincidence_full_mass: off_full,
            off_coincidence_tallied_mass: off_tallied,
            max_v_deviation: v_dev,
            max_frequency_gap: gap,
        }
    });

    PerfectDetectionReport {
        support_in_detect,
        all_pdet_one,
        stray_mass: stray,
        min_pdet,
        consequences,
    }
}

/// One located no-signaling violation.
#[derive(Debug, Clone)]
pub struct SignalingViolation {
    /// Observers whose marginal changed.
    pub group: Vec<usize>,
    /// Joint result label of the group.
    pub result: String,
    pub setting_a: usize,
    pub setting_b: usize,
    pub difference: f64,
}

#[derive(Debug, Clone)]
pub struct NoSignalingReport {
    pub max_discrepancy: f64,
    pub violations: Vec<SignalingViolation>,
}

impl NoSignalingReport {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

/// For every proper observer subset, joint subset result, and pair of
/// settings agreeing on the subset: the marginal must agree within `tol`.
pub fn check_no_signaling(
    full: &FullFrequencies,
    spec: &ExperimentSpec,
    tol: f64,
) -> NoSignalingReport {
    let settings = spec.settings();
    let n = spec.observer_count();
    let mut worst = 0.0f64;
    let mut violations = Vec::new();
    for mask in 1u32..(1 << n) - 1 {
        let group: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        // bucket settings by their measurement choice on the group
        let mut buckets: std::collections::BTreeMap<Vec<usize>, Vec<usize>> =
            std::collections::BTreeMap::new();
        for (s_idx, s) in settings.iter().enumerate() {
            let key: Vec<usize> = group.iter().map(|&i| s.indices()[i]).collect();
            buckets.entry(key).or_default().push(s_idx);
        }
        for bucket in buckets.values() {
            if bucket.len() < 2 {
                continue;
            }
            let marginals: Vec<std::collections::BTreeMap<Vec<usize>, f64>> = bucket
                .iter()
                .map(|&s_idx| {
                    let s = &settings[s_idx];
                    let mut table: std::collections::BTreeMap<Vec<usize>, f64> =
                        std::collections::BTreeMap::new();
                    for (rank, r) in spec.outcomes(s, OutcomeClass::All).iter().enumerate() {
                        let key: Vec<usize> = group.iter().map(|&i| r.indices()[i]).collect();
                        *table.entry(key).or_insert(0.0) += full.value(s_idx, rank);
                    }
                    table
                })
                .collect();
            let reference = &marginals[0];
            for (other_pos, table) in marginals.iter().enumerate().skip(1) {
                for (key, &p_ref) in reference {
                    let p = table.get(key).copied().unwrap_or(0.0);
                    let diff = (p - p_ref).abs();
                    worst = worst.max(diff);
                    if diff > tol {
                        let s_a = bucket[0];
                        let label = group
                            .iter()
                            .zip(key)
                            .map(|(&i, &r)| {
                                spec.result_label(i, settings[s_a].indices()[i], r).to_string()
                            })
                            .collect::<Vec<_>>()
                            .join(",");
                        violations.push(SignalingViolation {
                            group: group.clone(),
                            result: label,
                            setting_a: s_a,
                            setting_b: bucket[other_pos],
                            difference: diff,
                        });
                    }
                }
            }
        }
    }
    NoSignalingReport {
        max_discrepancy: worst,
        violations,
    }
}

/// Zero-extend a coincidence table to all outcomes (no-detect outcomes get
/// zero mass), e.g. to run the no-signaling check on quantum-generated data.
pub fn extend_with_zero_no_detect(
    spec: &ExperimentSpec,
    q: &TalliedFrequencies,
) -> FullFrequencies {
    let settings = spec.settings();
    let mut values = Vec::with_capacity(settings.len());
    for (s_idx, s) in settings.iter().enumerate() {
        let all = spec.outcomes(s, OutcomeClass::All);
        let tallied = spec.outcomes(s, OutcomeClass::Tallied);
        let mut row = vec![0.0; all.len()];
        for (d_idx, d) in tallied.iter().enumerate() {
            let rank = all.iter().position(|r| r == d).expect("tallied ⊆ all");
            row[rank] = q.value(s_idx, d_idx);
        }
        values.push(row);
    }
    FullFrequencies::new(spec, values).expect("shape by construction")
}

/// A dual vector over the pinned program's rows, proving that no
/// local-realist model meets the pinned efficiency. Verification recomputes
/// every column from the experiment description and confirms
/// `y·column <= tol` for all of them while `y·rhs` stays positive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BellCertificate {
    /// Fixed observers and their pinned values, by observer index.
    pub fixed: Vec<(usize, f64)>,
    /// Observer subset of the pinned objective (singleton for dmin).
    pub objective_observers: Vec<usize>,
    /// True when the objective is the min over the subset.
    pub symmetric: bool,
    /// The pinned efficiency that no local-realist model attains.
    pub pin: f64,
    /// Dual coefficients, one per row of the pinned program.
    pub y: Vec<f64>,
    /// y·rhs at construction time.
    pub margin: f64,
}

impl BellCertificate {
    pub fn scenario(&self, spec: &ExperimentSpec) -> Result<ObjectiveScenario, ScenarioError> {
        let maximize = if self.symmetric {
            Objective::Dsym(self.objective_observers.clone())
        } else {
            Objective::Dmin(self.objective_observers[0])
        };
        ObjectiveScenario::new(spec, self.fixed.clone(), maximize)
    }
}

/// Result of pinning a scenario's objective at a required efficiency.
#[derive(Debug, Clone)]
pub enum PinOutcome {
    /// Some local-realist model attains the pin; here is one.
    Feasible(Box<LrModel>),
    /// None does; the certificate proves it.
    Infeasible(BellCertificate),
}

/// Pin the scenario's objective at `pin` and decide feasibility.
pub fn pin_feasibility(
    spec: &ExperimentSpec,
    q: &TalliedFrequencies,
    scenario: &ObjectiveScenario,
    pin: f64,
    config: &SolverConfig,
) -> Result<PinOutcome, CertifyError> {
    let (lp_prog, layout) = build_pinned(spec, q, scenario, pin)?;
    let sol = lp::solve(&lp_prog, config)?;
    match sol.status {
        LpStatus::Optimal => {
            let model = builder::extract_model(&layout, &sol, spec, q)?;
            Ok(PinOutcome::Feasible(Box::new(model)))
        }
        LpStatus::Infeasible => {
            let y = sol
                .farkas
                .ok_or_else(|| lp::LpError::Numerical("missing ray".into()))?;
            let margin = layout.rhs_dot(scenario, Some(pin), &y);
            let (fixed, objective_observers, symmetric) = scenario_parts(scenario);
            Ok(PinOutcome::Infeasible(BellCertificate {
                fixed,
                objective_observers,
                symmetric,
                pin,
                y,
                margin,
            }))
        }
        LpStatus::Unbounded => Err(ScenarioError::Unbounded.into()),
    }
}

fn scenario_parts(scenario: &ObjectiveScenario) -> (Vec<(usize, f64)>, Vec<usize>, bool) {
    match &scenario.maximize {
        Objective::Dsym(set) => (scenario.fixed.clone(), set.clone(), true),
        Objective::Dmin(i) => (scenario.fixed.clone(), vec![*i], false),
    }
}

/// What the verifier swept and found.
#[derive(Debug, Clone)]
pub struct CertificateReport {
    pub columns_checked: u64,
    pub total_columns: u64,
    pub exhaustive: bool,
    /// Largest y·column over category columns (must stay below tolerance).
    pub worst_category_value: f64,
    pub worst_category: u64,
    pub margin: f64,
    pub tolerance: f64,
}

/// Re-check a certificate from the experiment description alone.
///
/// Rebuilds the pinned program's row map, confirms the dual's sign pattern,
/// the handful of non-category columns, and every category column —
/// exhaustively up to [`EXHAUSTIVE_CAP`] columns, strided beyond that.
pub fn verify_certificate(
    cert: &BellCertificate,
    spec: &ExperimentSpec,
    q: &TalliedFrequencies,
    config: &SolverConfig,
    par: Parallelism,
) -> Result<CertificateReport, CertifyError> {
    let _ = config;
    let scenario = cert.scenario(spec)?;
    let layout = LpLayout::new(spec, &scenario, Some(cert.pin))?;
    if cert.y.len() != layout.n_rows {
        return Err(CertifyError::RowCount {
            got: cert.y.len(),
            want: layout.n_rows,
        });
    }
    let y = &cert.y;
    let scale = y.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
    let tol = CERT_TOL * scale;

    // sign pattern per row relation
    for (row, &yr) in y.iter().enumerate() {
        match layout.row_relation(row) {
            Relation::Eq => {}
            Relation::Le if yr > tol => {
                return Err(CertifyError::Rejected(format!(
                    "row {row} ({}) must have a nonpositive coefficient, found {yr}",
                    layout.row_label(spec, &scenario, row)
                )));
            }
            Relation::Ge if yr < -tol => {
                return Err(CertifyError::Rejected(format!(
                    "row {row} ({}) must have a nonnegative coefficient, found {yr}",
                    layout.row_label(spec, &scenario, row)
                )));
            }
            _ => {}
        }
    }

    // non-category columns
    for s_idx in 0..layout.n_settings {
        let dot = layout.v_dot(s_idx, q, y);
        if dot > tol {
            return Err(CertifyError::Rejected(format!(
                "tally column of setting {s_idx} has positive value {dot}"
            )));
        }
    }
    for i in 0..spec.observer_count() {
        for k in 0..spec.measurement_count(i) {
            let dot = layout.pdet_dot(spec, i, k, y);
            if dot > tol {
                return Err(CertifyError::Rejected(format!(
                    "detection column {}/{} has positive value {dot}",
                    spec.observer_name(i),
                    spec.measurement_name(i, k)
                )));
            }
        }
    }
    for rank in 0..layout.dmin_observers.len() {
        let dot = layout.dmin_dot(spec, &scenario, rank, y);
        if dot > tol {
            return Err(CertifyError::Rejected(format!(
                "dmin column of observer {} has positive value {dot}",
                spec.observer_name(layout.dmin_observers[rank])
            )));
        }
    }
    if layout.col_dsym.is_some() {
        let dot = layout.dsym_dot(y);
        if dot > tol {
            return Err(CertifyError::Rejected(format!(
                "dsym column has positive value {dot}"
            )));
        }
    }

    // category columns
    let total = spec.category_count();
    let stride = total.div_ceil(EXHAUSTIVE_CAP).max(1);
    let sweep_len = total.div_ceil(stride);
    let worst = parallel::fold_range(
        par,
        sweep_len,
        (f64::NEG_INFINITY, 0u64),
        |acc, i| {
            let code = i * stride;
            let value = layout.category_dot(spec, code, y);
            if value > acc.0 || (value == acc.0 && code < acc.1) {
                (value, code)
            } else {
                acc
            }
        },
        |a, b| {
            if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                b
            } else {
                a
            }
        },
    );

    let margin = layout.rhs_dot(&scenario, Some(cert.pin), y);
    let report = CertificateReport {
        columns_checked: sweep_len,
        total_columns: total,
        exhaustive: stride == 1,
        worst_category_value: worst.0,
        worst_category: worst.1,
        margin,
        tolerance: tol,
    };
    if worst.0 > tol {
        return Err(CertifyError::Rejected(format!(
            "category {} ({}) has positive column value {}",
            worst.1,
            spec.category_label(&spec.decode(worst.1)),
            worst.0
        )));
    }
    if margin < tol {
        return Err(CertifyError::Rejected(format!(
            "margin {margin} is not positive beyond tolerance {tol}"
        )));
    }
    Ok(report)
}

/// Locate the feasibility boundary of the pinned objective by bisection:
/// an independent route to the critical value, accurate to `2^-iterations`.
pub fn bisect_critical(
    spec: &ExperimentSpec,
    q: &TalliedFrequencies,
    scenario: &ObjectiveScenario,
    iterations: u32,
    config: &SolverConfig,
) -> Result<f64, CertifyError> {
    let feasible_at = |pin: f64| -> Result<bool, CertifyError> {
        Ok(matches!(
            pin_feasibility(spec, q, scenario, pin, config)?,
            PinOutcome::Feasible(_)
        ))
    };
    if feasible_at(1.0)? {
        return Ok(1.0);
    }
    if !feasible_at(0.0)? {
        return Err(CertifyError::Unbracketed(0.0));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if feasible_at(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::{solve_scenario, MODEL_TOL};
    use crate::model::{ExperimentSpec, MeasurementSpec, ObserverSpec};
    use crate::quantum;
    use rand::Rng;
    use rand::SeedableRng;

    fn archetypal() -> ExperimentSpec {
        let meas = |names: &[&str]| {
            names
                .iter()
                .map(|n| MeasurementSpec {
                    name: (*n).into(),
                    results: vec!["U".into(), "D".into()],
                })
                .collect::<Vec<_>>()
        };
        ExperimentSpec::new(vec![
            ObserverSpec {
                name: "Alice".into(),
                measurements: meas(&["A1", "A2"]),
            },
            ObserverSpec {
                name: "Bob".into(),
                measurements: meas(&["B1", "B2"]),
            },
        ])
        .unwrap()
    }

    fn optimized_bell_q(spec: &ExperimentSpec) -> TalliedFrequencies {
        let fix = quantum::singlet_fixture(
            &[0.0, std::f64::consts::PI / 3.0],
            &[0.0, 2.0 * std::f64::consts::PI / 3.0],
        )
        .unwrap();
        quantum::joint_probabilities(&fix, spec).unwrap()
    }

    fn random_q(spec: &ExperimentSpec, rng: &mut impl Rng) -> TalliedFrequencies {
        let rows = spec
            .settings()
            .iter()
            .map(|s| {
                let n = spec.outcomes(s, OutcomeClass::Tallied).len();
                let mut row: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
                let sum: f64 = row.iter().sum();
                for value in &mut row {
                    *value /= sum;
                }
                row
            })
            .collect();
        TalliedFrequencies::new(spec, rows).unwrap()
    }

    #[test]
    fn witness_has_expected_shape() {
        let spec = archetypal();
        let q = optimized_bell_q(&spec);
        let model = construct_witness(&spec, &q).unwrap();
        assert!(model.check(&spec, &q, MODEL_TOL).is_empty());
        let support: usize = model.x.iter().filter(|&&m| m > 0.0).count();
        assert!(support <= 16);
        for &v in &model.v {
            assert!((v - 0.25).abs() < 1e-15);
        }
        // each detection probability sums the settings that use the measurement
        for row in &model.pdet {
            for &p in row {
                assert!(p < 1.0);
                assert!((p - 0.5).abs() < 1e-12); // 2 of 4 settings use each measurement
            }
        }
    }

    #[test]
    fn witness_explains_signaling_data_too() {
        let spec = archetypal();
        // blatantly signaling: Alice's marginal depends on Bob's choice
        let rows = vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![0.25, 0.25, 0.25, 0.25],
            vec![0.5, 0.0, 0.5, 0.0],
        ];
        let q = TalliedFrequencies::new(&spec, rows).unwrap();
        let model = construct_witness(&spec, &q).unwrap();
        assert!(model.check(&spec, &q, MODEL_TOL).is_empty());
        // while the zero-extended tallied table itself signals
        let report =
            check_no_signaling(&extend_with_zero_no_detect(&spec, &q), &spec, 1e-9);
        assert!(!report.passes());
    }

    #[test]
    fn witness_rejected_for_non_coincidence_tallies() {
        let base = archetypal();
        let mut overrides = std::collections::BTreeMap::new();
        overrides.insert(
            "A1,B1".to_string(),
            vec![
                "U,U".to_string(),
                "U,D".to_string(),
                "D,U".to_string(),
                "D,D".to_string(),
                "U,N".to_string(),
            ],
        );
        let spec = ExperimentSpec::with_tallied(base.observers().to_vec(), &overrides).unwrap();
        let rows = vec![
            vec![0.2; 5],
            vec![0.25; 4],
            vec![0.25; 4],
            vec![0.25; 4],
        ];
        let q = TalliedFrequencies::new(&spec, rows).unwrap();
        assert!(matches!(
            construct_witness(&spec, &q),
            Err(CertifyError::TallyPolicy)
        ));
    }

    #[test]
    fn witness_universality_over_random_tables() {
        let spec = archetypal();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..25 {
            let q = random_q(&spec, &mut rng);
            let model = construct_witness(&spec, &q).unwrap();
            assert!(model.check(&spec, &q, MODEL_TOL).is_empty());
        }
    }

    #[test]
    fn perfect_detection_characterization() {
        let spec = archetypal();
        // perfect-detection side: product state solved to its optimum
        let fix = quantum::product_fixture(&[vec![0.0, 0.9], vec![0.4, 1.7]]).unwrap();
        let q = quantum::joint_probabilities(&fix, &spec).unwrap();
        let scenario = ObjectiveScenario::dsym_rest(&spec, vec![]).unwrap();
        let result = solve_scenario(&spec, &q, &scenario, &SolverConfig::default()).unwrap();
        let report = check_perfect_detection(&result.model, &spec, &q, 1e-7);
        assert!(report.support_in_detect);
        assert!(report.all_pdet_one);
        assert!(report.biconditional_holds());
        assert!(report.consequences_hold(1e-7));

        // imperfect side: the witness puts mass outside the all-detect set
        let q = optimized_bell_q(&spec);
        let witness = construct_witness(&spec, &q).unwrap();
        let report = check_perfect_detection(&witness, &spec, &q, 1e-9);
        assert!(!report.support_in_detect);
        assert!(!report.all_pdet_one);
        assert!(report.biconditional_holds());
        assert!(report.min_pdet < 1.0 - 1e-6);

        // hand-built: all mass on the everything-no-detect category
        let mut x = vec![0.0; spec.category_count() as usize];
        let last = spec.category_count() - 1;
        x[last as usize] = 1.0;
        let model = LrModel::from_distribution(&spec, x, vec![0.0; 4]);
        let report = check_perfect_detection(&model, &spec, &q, 1e-9);
        assert!(!report.support_in_detect);
        for row in &model.pdet {
            for &p in row {
                assert!(p < 1e-12);
            }
        }
        assert!(report.biconditional_holds());
    }

    #[test]
    fn no_signaling_accepts_quantum_and_rejects_constructed_violation() {
        let spec = archetypal();
        let q = optimized_bell_q(&spec);
        let report = check_no_signaling(&extend_with_zero_no_detect(&spec, &q), &spec, 1e-9);
        assert!(report.passes(), "max discrepancy {}", report.max_discrepancy);

        // hand-built signaling table: Alice's A1 marginal flips with Bob's switch
        let rows = vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![0.25; 4],
            vec![0.25; 4],
        ];
        let q = TalliedFrequencies::new(&spec, rows).unwrap();
        let report = check_no_signaling(&extend_with_zero_no_detect(&spec, &q), &spec, 1e-9);
        assert!(!report.passes());
        let v = &report.violations[0];
        assert_eq!(v.group.len(), 1);
        assert!(v.difference > 0.5);
    }

    #[test]
    fn optimum_full_frequencies_never_signal() {
        let spec = archetypal();
        let q = optimized_bell_q(&spec);
        let scenario = ObjectiveScenario::dsym_rest(&spec, vec![]).unwrap();
        let result = solve_scenario(&spec, &q, &scenario, &SolverConfig::default()).unwrap();
        let report = check_no_signaling(&result.model.full, &spec, 1e-8);
        assert!(report.passes(), "max discrepancy {}", report.max_discrepancy);
    }

    #[test]
    fn certificate_roundtrip_above_and_below_critical() {
        let spec = archetypal();
        let q = optimized_bell_q(&spec);
        let scenario = ObjectiveScenario::dsym_rest(&spec, vec![]).unwrap();

        // above the critical value: infeasible, certificate verifies
        match pin_feasibility(&spec, &q, &scenario, 0.95, &SolverConfig::default()).unwrap() {
            PinOutcome::Infeasible(cert) => {
                let report = verify_certificate(
                    &cert,
                    &spec,
                    &q,
                    &SolverConfig::default(),
                    Parallelism::Sequential,
                )
                .unwrap();
                assert!(report.exhaustive);
                assert_eq!(report.total_columns, 81);
                assert!(report.margin > 0.0);

                // tampering breaks it
                let mut bad = cert.clone();
                bad.y[0] += 0.5;
                assert!(verify_certificate(
                    &bad,
                    &spec,
                    &q,
                    &SolverConfig::default(),
                    Parallelism::Sequential,
                )
                .is_err());
            }
            PinOutcome::Feasible(_) => panic!("0.95 should be unattainable"),
        }

        // below: feasible, witness model comes back
        match pin_feasibility(&spec, &q, &scenario, 0.85, &SolverConfig::default()).unwrap() {
            PinOutcome::Feasible(model) => {
                assert!(model.check(&spec, &q, MODEL_TOL).is_empty());
                let floor = model
                    .dmin
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min);
                assert!(floor >= 0.85 - 1e-8);
            }
            PinOutcome::Infeasible(_) => panic!("0.85 should be attainable"),
        }
    }

    #[test]
    fn bisection_matches_direct_optimum() {
        let spec = archetypal();
        let q = optimized_bell_q(&spec);
        let scenario = ObjectiveScenario::dsym_rest(&spec, vec![]).unwrap();
        let direct = solve_scenario(&spec, &q, &scenario, &SolverConfig::default())
            .unwrap()
            .value;
        let bisected =
            bisect_critical(&spec, &q, &scenario, 20, &SolverConfig::default()).unwrap();
        assert!(
            (direct - bisected).abs() < 1e-5,
            "direct {direct} vs bisected {bisected}"
        );
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_verification_agrees_with_sequential() {
        let spec = archetypal();
        let q = optimized_bell_q(&spec);
        let scenario = ObjectiveScenario::dsym_rest(&spec, vec![]).unwrap();
        let cert = match pin_feasibility(&spec, &q, &scenario, 0.95, &SolverConfig::default())
            .unwrap()
        {
            PinOutcome::Infeasible(cert) => cert,
            PinOutcome::Feasible(_) => panic!("expected infeasibility"),
        };
        let seq = verify_certificate(
            &cert,
            &spec,
            &q,
            &SolverConfig::default(),
            Parallelism::Sequential,
        )
        .unwrap();
        let par = verify_certificate(
            &cert,
            &spec,
            &q,
            &SolverConfig::default(),
            Parallelism::Rayon,
        )
        .unwrap();
        assert_eq!(seq.worst_category, par.worst_category);
        assert_eq!(
            seq.worst_category_value.to_bits(),
            par.worst_category_value.to_bits()
        );
    }
}
