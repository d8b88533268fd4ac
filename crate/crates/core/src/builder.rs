//! Assembles the local-realist feasibility program and reads back witnesses.
//!
//! Variables: one probability per category, one tally probability `v_s` per
//! setting, per-measurement detection probabilities, per-observer worst-case
//! detection `dmin_i`, and (for min-over-observers objectives) `dsym`.
//! Constraints: the distribution normalizes; for every setting and tallied
//! outcome, the category mass projecting onto it equals the tallied frequency
//! times `v_s`; detection probabilities are the mass of categories detecting
//! at the measurement; `dmin_i` sits below every detection probability of
//! observer i; `dsym` below every `dmin_i` in the objective subset; fixed
//! observers get lower-bound pins.
//!
//! The tallied-frequency relation is substituted into the projection rows at
//! build time (the per-outcome products are constants), so the full outcome
//! frequencies never appear as columns; they are recomputed when a witness is
//! extracted.

use crate::lp::{self, LinearProgram, LpSolution, LpStatus, Relation, SolverConfig};
use crate::model::{
    ExperimentSpec, FullFrequencies, OutcomeClass, TalliedFrequencies,
};

/// Invariant tolerance for extracted witnesses.
pub const MODEL_TOL: f64 = 1e-8;
/// Below this, a setting's tally probability counts as degenerate.
pub const DEGENERATE_V: f64 = 1e-9;
/// Slack subtracted when pinning an achieved stage value in lexicographic runs.
pub const PIN_SLACK: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Lp(#[from] crate::lp::LpError),
    #[error("scenario is invalid: {0}")]
    BadScenario(String),
    #[error("no local-realist model attains the pinned values (ray attached)")]
    Infeasible { ray: Vec<f64> },
    #[error("optimum violates witness invariants: {0:?}")]
    InvariantViolation(Vec<String>),
    #[error("solver reported an unbounded program; detection probabilities are bounded, so this is a bug")]
    Unbounded,
}

/// What to maximize.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Objective {
    /// The minimum of `dmin_i` over a nonempty observer subset.
    Dsym(Vec<usize>),
    /// One observer's `dmin_i`.
    Dmin(usize),
}

impl Objective {
    fn observers(&self) -> &[usize] {
        match self {
            Objective::Dsym(set) => set,
            Objective::Dmin(i) => std::slice::from_ref(i),
        }
    }
}

/// A solve target: observers with required detection values, plus the
/// quantity to maximize over the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveScenario {
    /// (observer, required dmin), sorted by observer index.
    pub fixed: Vec<(usize, f64)>,
    pub maximize: Objective,
}

impl ObjectiveScenario {
    pub fn new(
        spec: &ExperimentSpec,
        mut fixed: Vec<(usize, f64)>,
        maximize: Objective,
    ) -> Result<ObjectiveScenario, ScenarioError> {
        fixed.sort_by_key(|&(i, _)| i);
        for window in fixed.windows(2) {
            if window[0].0 == window[1].0 {
                return Err(ScenarioError::BadScenario(format!(
                    "observer {} fixed twice",
                    spec.observer_name(window[0].0)
                )));
            }
        }
        for &(i, value) in &fixed {
            if i >= spec.observer_count() {
                return Err(ScenarioError::BadScenario(format!(
                    "fixed observer index {i} out of range"
                )));
            }
            if !(0.0..=1.0).contains(&value) {
                return Err(ScenarioError::BadScenario(format!(
                    "fixed value {value} for {} outside [0, 1]",
                    spec.observer_name(i)
                )));
            }
        }
        let max_set = maximize.observers();
        if max_set.is_empty() {
            return Err(ScenarioError::BadScenario(
                "objective subset is empty".into(),
            ));
        }
        for &i in max_set {
            if i >= spec.observer_count() {
                return Err(ScenarioError::BadScenario(format!(
                    "objective observer index {i} out of range"
                )));
            }
            if fixed.iter().any(|&(f, _)| f == i) {
                return Err(ScenarioError::BadScenario(format!(
                    "observer {} both fixed and maximized",
                    spec.observer_name(i)
                )));
            }
        }
        let mut sorted = max_set.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != max_set.len() {
            return Err(ScenarioError::BadScenario(
                "objective subset repeats an observer".into(),
            ));
        }
        Ok(ObjectiveScenario { fixed, maximize })
    }

    /// Maximize the symmetric efficiency over every non-fixed observer.
    pub fn dsym_rest(
        spec: &ExperimentSpec,
        fixed: Vec<(usize, f64)>,
    ) -> Result<ObjectiveScenario, ScenarioError> {
        let subset: Vec<usize> = (0..spec.observer_count())
            .filter(|i| !fixed.iter().any(|&(f, _)| f == *i))
            .collect();
        ObjectiveScenario::new(spec, fixed, Objective::Dsym(subset))
    }
}

/// Column/row map of a built program. Certificate verification reconstructs
/// every column from this map plus the experiment description; it carries no
/// solver state.
#[derive(Debug, Clone)]
pub struct LpLayout {
    pub n_cats: usize,
    pub n_settings: usize,
    pub col_v: usize,
    pub col_pdet: usize,
    pub col_dmin: usize,
    pub col_dsym: Option<usize>,
    pub n_cols: usize,
    /// Observers carrying a dmin column, ascending.
    pub dmin_observers: Vec<usize>,
    /// First projection-coupling row of each setting.
    pub row_coupling: Vec<usize>,
    /// First detection-definition row (one per flat measurement position).
    pub row_pdet: usize,
    /// First dmin row per dmin-observer rank (then one row per measurement).
    pub row_dmin: Vec<usize>,
    pub row_dsym: usize,
    pub n_dsym_rows: usize,
    /// First fixed-observer pin row.
    pub row_fixed_pin: usize,
    /// Row pinning the objective value itself, if requested.
    pub row_objective_pin: Option<usize>,
    pub n_rows: usize,
    /// Per setting: flat digit positions selected by the setting.
    setting_positions: Vec<Vec<usize>>,
    /// Per setting: mixed-radix weights ranking outcomes of that setting.
    setting_weights: Vec<Vec<usize>>,
    /// Per setting: all-outcome rank -> index within the tallied set.
    tallied_lookup: Vec<Vec<Option<usize>>>,
    /// Flat position -> no-detect digit value.
    no_detect_digit: Vec<u8>,
}

impl LpLayout {
    pub fn new(
        spec: &ExperimentSpec,
        scenario: &ObjectiveScenario,
        objective_pin: Option<f64>,
    ) -> Result<LpLayout, ScenarioError> {
        let n_cats = usize::try_from(spec.category_count()).map_err(|_| {
            ScenarioError::BadScenario("category space exceeds addressable size".into())
        })?;
        let settings = spec.settings();
        let n_settings = settings.len();
        let n_positions = spec.position_count();

        let mut dmin_observers: Vec<usize> = scenario
            .fixed
            .iter()
            .map(|&(i, _)| i)
            .chain(scenario.maximize.observers().iter().copied())
            .collect();
        dmin_observers.sort_unstable();
        dmin_observers.dedup();

        let has_dsym = matches!(scenario.maximize, Objective::Dsym(_));

        let col_v = n_cats;
        let col_pdet = col_v + n_settings;
        let col_dmin = col_pdet + n_positions;
        let col_dsym = has_dsym.then_some(col_dmin + dmin_observers.len());
        let n_cols = col_dmin + dmin_observers.len() + usize::from(has_dsym);

        let mut setting_positions = Vec::with_capacity(n_settings);
        let mut setting_weights = Vec::with_capacity(n_settings);
        let mut tallied_lookup = Vec::with_capacity(n_settings);
        let mut row_coupling = Vec::with_capacity(n_settings);
        let mut next_row = 1; // row 0 is normalization
        for s in &settings {
            let positions: Vec<usize> = s
                .indices()
                .iter()
                .enumerate()
                .map(|(i, &k)| spec.position(i, k))
                .collect();
            let radixes: Vec<usize> = s
                .indices()
                .iter()
                .enumerate()
                .map(|(i, &k)| spec.detect_result_count(i, k) + 1)
                .collect();
            let mut weights = vec![0usize; radixes.len()];
            let mut acc = 1usize;
            for i in (0..radixes.len()).rev() {
                weights[i] = acc;
                acc *= radixes[i];
            }
            let all = spec.outcomes(s, OutcomeClass::All);
            let tallied = spec.outcomes(s, OutcomeClass::Tallied);
            let mut lookup = vec![None; all.len()];
            for (d_idx, d) in tallied.iter().enumerate() {
                let rank: usize = d
                    .indices()
                    .iter()
                    .zip(&weights)
                    .map(|(&r, &w)| r * w)
                    .sum();
                lookup[rank] = Some(d_idx);
            }
            row_coupling.push(next_row);
            next_row += tallied.len();
            setting_positions.push(positions);
            setting_weights.push(weights);
            tallied_lookup.push(lookup);
        }

        let row_pdet = next_row;
        next_row += n_positions;
        let mut row_dmin = Vec::with_capacity(dmin_observers.len());
        for &i in &dmin_observers {
            row_dmin.push(next_row);
            next_row += spec.measurement_count(i);
        }
        let row_dsym = next_row;
        let n_dsym_rows = if has_dsym {
            scenario.maximize.observers().len()
        } else {
            0
        };
        next_row += n_dsym_rows;
        let row_fixed_pin = next_row;
        next_row += scenario.fixed.len();
        let row_objective_pin = objective_pin.map(|_| {
            let r = next_row;
            next_row += 1;
            r
        });

        let no_detect_digit = (0..spec.observer_count())
            .flat_map(|i| {
                (0..spec.measurement_count(i))
                    .map(move |k| (i, k))
            })
            .map(|(i, k)| spec.detect_result_count(i, k) as u8)
            .collect();

        Ok(LpLayout {
            n_cats,
            n_settings,
            col_v,
            col_pdet,
            col_dmin,
            col_dsym,
            n_cols,
            dmin_observers,
            row_coupling,
            row_pdet,
            row_dmin,
            row_dsym,
            n_dsym_rows,
            row_fixed_pin,
            row_objective_pin,
            n_rows: next_row,
            setting_positions,
            setting_weights,
            tallied_lookup,
            no_detect_digit,
        })
    }

    pub fn dmin_rank(&self, observer: usize) -> Option<usize> {
        self.dmin_observers.iter().position(|&i| i == observer)
    }

    /// Rank of `P_s(j)` within the setting's all-outcome enumeration.
    fn outcome_rank(&self, s_idx: usize, digits: &[u8]) -> usize {
        self.setting_positions[s_idx]
            .iter()
            .zip(&self.setting_weights[s_idx])
            .map(|(&pos, &w)| digits[pos] as usize * w)
            .sum()
    }

    /// Tallied-outcome index hit by a category under a setting, if any.
    pub fn tallied_index(&self, s_idx: usize, digits: &[u8]) -> Option<usize> {
        self.tallied_lookup[s_idx][self.outcome_rank(s_idx, digits)]
    }

    /// y · (column of category `code`), recomputed from the layout alone.
    pub fn category_dot(&self, spec: &ExperimentSpec, code: u64, y: &[f64]) -> f64 {
        let cat = spec.decode(code);
        let digits = cat.digits();
        let mut dot = y[0]; // normalization row
        for s_idx in 0..self.n_settings {
            if let Some(d_idx) = self.tallied_index(s_idx, digits) {
                dot += y[self.row_coupling[s_idx] + d_idx];
            }
        }
        for (pos, (&digit, &nd)) in digits.iter().zip(&self.no_detect_digit).enumerate() {
            if digit != nd {
                dot += y[self.row_pdet + pos];
            }
        }
        dot
    }

    /// y · (column of `v_s`).
    pub fn v_dot(&self, s_idx: usize, q: &TalliedFrequencies, y: &[f64]) -> f64 {
        let base = self.row_coupling[s_idx];
        q.row(s_idx)
            .iter()
            .enumerate()
            .map(|(d_idx, &q_sd)| -q_sd * y[base + d_idx])
            .sum()
    }

    /// y · (column of `PDet` at flat position `pos`, owned by `observer`).
    pub fn pdet_dot(&self, spec: &ExperimentSpec, observer: usize, k: usize, y: &[f64]) -> f64 {
        let pos = spec.position(observer, k);
        let mut dot = -y[self.row_pdet + pos];
        if let Some(rank) = self.dmin_rank(observer) {
            dot -= y[self.row_dmin[rank] + k];
        }
        dot
    }

    /// y · (column of `dmin` for the observer at `rank`).
    pub fn dmin_dot(
        &self,
        spec: &ExperimentSpec,
        scenario: &ObjectiveScenario,
        rank: usize,
        y: &[f64],
    ) -> f64 {
        let observer = self.dmin_observers[rank];
        let mut dot = 0.0;
        for k in 0..spec.measurement_count(observer) {
            dot += y[self.row_dmin[rank] + k];
        }
        if let Objective::Dsym(subset) = &scenario.maximize {
            if let Some(srank) = subset.iter().position(|&i| i == observer) {
                dot -= y[self.row_dsym + srank];
            }
        }
        if let Some(frank) = scenario.fixed.iter().position(|&(i, _)| i == observer) {
            dot += y[self.row_fixed_pin + frank];
        }
        if self.col_dsym.is_none() {
            if let (Objective::Dmin(obj), Some(pin_row)) =
                (&scenario.maximize, self.row_objective_pin)
            {
                if *obj == observer {
                    dot += y[pin_row];
                }
            }
        }
        dot
    }

    /// y · (column of `dsym`), when present.
    pub fn dsym_dot(&self, y: &[f64]) -> f64 {
        let mut dot = 0.0;
        for r in 0..self.n_dsym_rows {
            dot += y[self.row_dsym + r];
        }
        if let Some(pin_row) = self.row_objective_pin {
            dot += y[pin_row];
        }
        dot
    }

    /// Relation of each row, for sign checks during verification:
    /// normalization, coupling and detection definitions are equalities,
    /// the dmin/dsym ordering rows are `<=`, and every pin is `>=`.
    pub fn row_relation(&self, row: usize) -> Relation {
        if row < self.row_pdet + self.no_detect_digit.len() {
            Relation::Eq
        } else if row < self.row_fixed_pin {
            Relation::Le
        } else {
            Relation::Ge
        }
    }

    /// y · b for the pinned system: the normalization row plus the pins.
    pub fn rhs_dot(&self, scenario: &ObjectiveScenario, pin: Option<f64>, y: &[f64]) -> f64 {
        let mut dot = y[0];
        for (rank, &(_, value)) in scenario.fixed.iter().enumerate() {
            dot += value * y[self.row_fixed_pin + rank];
        }
        if let (Some(row), Some(tau)) = (self.row_objective_pin, pin) {
            dot += tau * y[row];
        }
        dot
    }

    pub fn row_label(&self, spec: &ExperimentSpec, scenario: &ObjectiveScenario, row: usize) -> String {
        if row == 0 {
            return "normalization".into();
        }
        let settings = spec.settings();
        for (s_idx, s) in settings.iter().enumerate() {
            let base = self.row_coupling[s_idx];
            let tallied = spec.outcomes(s, OutcomeClass::Tallied);
            if row >= base && row < base + tallied.len() {
                return format!(
                    "coupling[{};{}]",
                    spec.setting_label(s),
                    spec.outcome_label(s, &tallied[row - base])
                );
            }
        }
        if row >= self.row_pdet && row < self.row_pdet + self.no_detect_digit.len() {
            let pos = row - self.row_pdet;
            let (i, k) = position_to_pair(spec, pos);
            return format!(
                "pdet[{}/{}]",
                spec.observer_name(i),
                spec.measurement_name(i, k)
            );
        }
        for (rank, &obs) in self.dmin_observers.iter().enumerate() {
            let base = self.row_dmin[rank];
            let count = spec.measurement_count(obs);
            if row >= base && row < base + count {
                return format!(
                    "dmin[{}<=pdet/{}]",
                    spec.observer_name(obs),
                    spec.measurement_name(obs, row - base)
                );
            }
        }
        if row >= self.row_dsym && row < self.row_dsym + self.n_dsym_rows {
            let subset = scenario.maximize.observers();
            return format!(
                "dsym[<=dmin/{}]",
                spec.observer_name(subset[row - self.row_dsym])
            );
        }
        if row >= self.row_fixed_pin && row < self.row_fixed_pin + scenario.fixed.len() {
            let (obs, value) = scenario.fixed[row - self.row_fixed_pin];
            return format!("pin[{}>={}]", spec.observer_name(obs), value);
        }
        if Some(row) == self.row_objective_pin {
            return "pin[objective]".into();
        }
        format!("row[{row}]")
    }
}

fn position_to_pair(spec: &ExperimentSpec, pos: usize) -> (usize, usize) {
    let mut acc = 0;
    for i in 0..spec.observer_count() {
        let count = spec.measurement_count(i);
        if pos < acc + count {
            return (i, pos - acc);
        }
        acc += count;
    }
    unreachable!("flat position out of range")
}

/// Variable-bound style for the built program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BoundStyle {
    /// Detection variables boxed into [0, 1].
    Boxed,
    /// Everything lower-bounded at zero only; the unit upper bounds are
    /// implied by the constraints, and rays then take the plain sign form.
    NonNegative,
}

/// Build the maximize-scenario program.
pub fn build(
    spec: &ExperimentSpec,
    q: &TalliedFrequencies,
    scenario: &ObjectiveScenario,
) -> Result<(LinearProgram, LpLayout), ScenarioError> {
    build_with(spec, q, scenario, None, BoundStyle::Boxed, true)
}

/// Build the pinned feasibility program used for certificates: a zero
/// objective, a `>= pin` row on the scenario's objective quantity, and
/// nonnegativity-only bounds.
pub fn build_pinned(
    spec: &ExperimentSpec,
    q: &TalliedFrequencies,
    scenario: &ObjectiveScenario,
    pin: f64,
) -> Result<(LinearProgram, LpLayout), ScenarioError> {
    build_with(spec, q, scenario, Some(pin), BoundStyle::NonNegative, false)
}

fn build_with(
    spec: &ExperimentSpec,
    q: &TalliedFrequencies,
    scenario: &ObjectiveScenario,
    pin: Option<f64>,
    bounds: BoundStyle,
    with_objective: bool,
) -> Result<(LinearProgram, LpLayout), ScenarioError> {
    let layout = LpLayout::new(spec, scenario, pin)?;
    let settings = spec.settings();
    let mut lp = LinearProgram::new();

    let unit_upper = match bounds {
        BoundStyle::Boxed => 1.0,
        BoundStyle::NonNegative => f64::INFINITY,
    };
    for _ in 0..layout.n_cats {
        lp.add_variable(0.0, f64::INFINITY, 0.0);
    }
    for _ in 0..layout.n_settings {
        lp.add_variable(0.0, f64::INFINITY, 0.0);
    }
    for _ in 0..spec.position_count() {
        lp.add_variable(0.0, unit_upper, 0.0);
    }
    for _ in 0..layout.dmin_observers.len() {
        lp.add_variable(0.0, unit_upper, 0.0);
    }
    if layout.col_dsym.is_some() {
        lp.add_variable(0.0, unit_upper, 0.0);
    }
    if with_objective {
        let obj_col = objective_column(&layout, scenario);
        lp.objective[obj_col] = 1.0;
    }

    // normalization row
    lp.add_constraint(
        (0..layout.n_cats).map(|j| (j, 1.0)).collect(),
        Relation::Eq,
        1.0,
    );

    // projection-coupling rows, gathered in one category sweep
    let mut coupling: Vec<Vec<Vec<(usize, f64)>>> = settings
        .iter()
        .enumerate()
        .map(|(s_idx, s)| {
            let _ = s_idx;
            vec![Vec::new(); spec.outcomes(s, OutcomeClass::Tallied).len()]
        })
        .collect();
    let mut pdet_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); spec.position_count()];
    for code in 0..layout.n_cats as u64 {
        let cat = spec.decode(code);
        let digits = cat.digits();
        let j = code as usize;
        for s_idx in 0..layout.n_settings {
            if let Some(d_idx) = layout.tallied_index(s_idx, digits) {
                coupling[s_idx][d_idx].push((j, 1.0));
            }
        }
        for (pos, (&digit, &nd)) in digits.iter().zip(&layout.no_detect_digit).enumerate() {
            if digit != nd {
                pdet_rows[pos].push((j, 1.0));
            }
        }
    }
    for (s_idx, rows) in coupling.into_iter().enumerate() {
        for (d_idx, mut coeffs) in rows.into_iter().enumerate() {
            coeffs.push((layout.col_v + s_idx, -q.value(s_idx, d_idx)));
            lp.add_constraint(coeffs, Relation::Eq, 0.0);
        }
    }
    for (pos, mut coeffs) in pdet_rows.into_iter().enumerate() {
        coeffs.push((layout.col_pdet + pos, -1.0));
        lp.add_constraint(coeffs, Relation::Eq, 0.0);
    }

    // dmin_i <= pdet_ik
    for (rank, &i) in layout.dmin_observers.iter().enumerate() {
        for k in 0..spec.measurement_count(i) {
            lp.add_constraint(
                vec![
                    (layout.col_dmin + rank, 1.0),
                    (layout.col_pdet + spec.position(i, k), -1.0),
                ],
                Relation::Le,
                0.0,
            );
        }
    }
    // dsym <= dmin_i over the objective subset
    if let (Some(dsym_col), Objective::Dsym(subset)) = (layout.col_dsym, &scenario.maximize) {
        for &i in subset {
            let rank = layout.dmin_rank(i).expect("subset observers carry dmin");
            lp.add_constraint(
                vec![(dsym_col, 1.0), (layout.col_dmin + rank, -1.0)],
                Relation::Le,
                0.0,
            );
        }
    }

    // pins
    for &(i, value) in &scenario.fixed {
        let rank = layout.dmin_rank(i).expect("fixed observers carry dmin");
        lp.add_constraint(
            vec![(layout.col_dmin + rank, 1.0)],
            Relation::Ge,
            value,
        );
    }
    if let Some(tau) = pin {
        let col = objective_column(&layout, scenario);
        lp.add_constraint(vec![(col, 1.0)], Relation::Ge, tau);
    }

    debug_assert_eq!(lp.num_rows(), layout.n_rows);
    debug_assert_eq!(lp.num_vars(), layout.n_cols);
    Ok((lp, layout))
}

fn objective_column(layout: &LpLayout, scenario: &ObjectiveScenario) -> usize {
    match &scenario.maximize {
        Objective::Dsym(_) => layout.col_dsym.expect("dsym scenarios carry the column"),
        Objective::Dmin(i) => {
            layout.col_dmin + layout.dmin_rank(*i).expect("objective observer carries dmin")
        }
    }
}

/// A solved local-realist model: category distribution, tally probabilities,
/// and everything recomputed from them.
#[derive(Debug, Clone)]
pub struct LrModel {
    /// Probability per category, indexed by category code.
    pub x: Vec<f64>,
    /// Tally probability per setting.
    pub v: Vec<f64>,
    /// Full outcome frequencies recomputed from `x` for every outcome.
    pub full: FullFrequencies,
    /// Detection probability per (observer, measurement), recomputed from `x`.
    pub pdet: Vec<Vec<f64>>,
    /// Per-observer worst-case detection, `min_k pdet[i][k]`.
    pub dmin: Vec<f64>,
    /// Minimum of `dmin` over all observers.
    pub dsym: f64,
}

impl LrModel {
    /// Recompute the derived quantities from a category distribution.
    pub fn from_distribution(spec: &ExperimentSpec, x: Vec<f64>, v: Vec<f64>) -> LrModel {
        let settings = spec.settings();
        let mut full = Vec::with_capacity(settings.len());
        let scenario_free = ObjectiveScenario {
            fixed: Vec::new(),
            maximize: Objective::Dsym((0..spec.observer_count()).collect()),
        };
        let layout = LpLayout::new(spec, &scenario_free, None).expect("layout for projection");
        let mut rows: Vec<Vec<f64>> = settings
            .iter()
            .map(|s| vec![0.0; spec.outcomes(s, OutcomeClass::All).len()])
            .collect();
        let mut pdet = vec![vec![0.0; 0]; spec.observer_count()];
        for (i, row) in pdet.iter_mut().enumerate() {
            *row = vec![0.0; spec.measurement_count(i)];
        }
        for (code, &mass) in x.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let cat = spec.decode(code as u64);
            let digits = cat.digits();
            for (s_idx, row) in rows.iter_mut().enumerate() {
                row[layout.outcome_rank(s_idx, digits)] += mass;
            }
            for i in 0..spec.observer_count() {
                for k in 0..spec.measurement_count(i) {
                    if !spec.is_no_detect(&cat, i, k) {
                        pdet[i][k] += mass;
                    }
                }
            }
        }
        for row in rows.drain(..) {
            full.push(row);
        }
        let full = FullFrequencies::new(spec, full).expect("shape by construction");
        let dmin: Vec<f64> = pdet
            .iter()
            .map(|row| row.iter().cloned().fold(f64::INFINITY, f64::min))
            .collect();
        let dsym = dmin.iter().cloned().fold(f64::INFINITY, f64::min);
        LrModel {
            x,
            v,
            full,
            pdet,
            dmin,
            dsym,
        }
    }

    /// Settings whose tally probability sits below [`DEGENERATE_V`].
    pub fn degenerate_settings(&self) -> Vec<usize> {
        self.v
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v < DEGENERATE_V)
            .map(|(s, _)| s)
            .collect()
    }

    /// Check every model invariant at `tol`; returns human-readable
    /// violations, empty when the model is sound.
    pub fn check(&self, spec: &ExperimentSpec, q: &TalliedFrequencies, tol: f64) -> Vec<String> {
        let mut bad = Vec::new();
        let total: f64 = self.x.iter().sum();
        if (total - 1.0).abs() > tol {
            bad.push(format!("category mass sums to {total}"));
        }
        if let Some((j, &m)) = self
            .x
            .iter()
            .enumerate()
            .find(|&(_, &m)| m < -tol)
        {
            bad.push(format!("category {j} has negative mass {m}"));
        }
        for (s_idx, &v) in self.v.iter().enumerate() {
            if v < -tol {
                bad.push(format!("setting {s_idx} has negative tally probability {v}"));
            }
        }
        // tallied coupling: full frequency equals q * v on the tallied set
        let settings = spec.settings();
        let scenario_free = ObjectiveScenario {
            fixed: Vec::new(),
            maximize: Objective::Dsym((0..spec.observer_count()).collect()),
        };
        let layout = LpLayout::new(spec, &scenario_free, None).expect("layout");
        for (s_idx, s) in settings.iter().enumerate() {
            let all = spec.outcomes(s, OutcomeClass::All);
            for (rank, _d) in all.iter().enumerate() {
                if let Some(d_idx) = layout.tallied_lookup[s_idx][rank] {
                    let want = q.value(s_idx, d_idx) * self.v[s_idx];
                    let got = self.full.value(s_idx, rank);
                    if (want - got).abs() > tol {
                        bad.push(format!(
                            "coupling off by {} at setting {s_idx} outcome rank {rank}",
                            (want - got).abs()
                        ));
                    }
                }
            }
        }
        if self.full.normalization_residual() > tol {
            bad.push(format!(
                "full frequencies break normalization by {}",
                self.full.normalization_residual()
            ));
        }
        // detection probabilities against a recomputation
        let recomputed = LrModel::from_distribution(spec, self.x.clone(), self.v.clone());
        for i in 0..spec.observer_count() {
            for k in 0..spec.measurement_count(i) {
                let diff = (self.pdet[i][k] - recomputed.pdet[i][k]).abs();
                if diff > tol {
                    bad.push(format!("pdet[{i}][{k}] off by {diff}"));
                }
                if self.pdet[i][k] > 1.0 + tol {
                    bad.push(format!("pdet[{i}][{k}] = {} exceeds 1", self.pdet[i][k]));
                }
            }
            if self.dmin[i] > recomputed.dmin[i] + tol {
                bad.push(format!(
                    "dmin[{i}] = {} above the measurement minimum {}",
                    self.dmin[i], recomputed.dmin[i]
                ));
            }
        }
        let dmin_floor = self
            .dmin
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if self.dsym > dmin_floor + tol {
            bad.push(format!(
                "dsym = {} above the observer minimum {dmin_floor}",
                self.dsym
            ));
        }
        bad
    }
}

/// Result of one maximize scenario.
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    /// The critical value: the largest the objective gets over all
    /// local-realist models of `q`.
    pub value: f64,
    pub model: LrModel,
    /// Settings whose optimal tally probability is (numerically) zero; the
    /// witness then says nothing about those settings' tallied data.
    pub degenerate_settings: Vec<usize>,
    pub lp_iterations: usize,
}

/// Read a witness model off an optimal solution.
pub fn extract_model(
    layout: &LpLayout,
    sol: &LpSolution,
    spec: &ExperimentSpec,
    q: &TalliedFrequencies,
) -> Result<LrModel, ScenarioError> {
    let x = sol.primal[..layout.n_cats].to_vec();
    let v = sol.primal[layout.col_v..layout.col_v + layout.n_settings].to_vec();
    let model = LrModel::from_distribution(spec, x, v);
    let violations = model.check(spec, q, MODEL_TOL);
    if violations.is_empty() {
        Ok(model)
    } else {
        Err(ScenarioError::InvariantViolation(violations))
    }
}

/// Build and solve one scenario.
pub fn solve_scenario(
    spec: &ExperimentSpec,
    q: &TalliedFrequencies,
    scenario: &ObjectiveScenario,
    config: &SolverConfig,
) -> Result<ScenarioResult, ScenarioError> {
    let (lp, layout) = build(spec, q, scenario)?;
    let sol = lp::solve(&lp, config)?;
    match sol.status {
        LpStatus::Optimal => {
            let model = extract_model(&layout, &sol, spec, q)?;
            let degenerate = model.degenerate_settings();
            Ok(ScenarioResult {
                value: sol.objective,
                model,
                degenerate_settings: degenerate,
                lp_iterations: sol.iterations,
            })
        }
        LpStatus::Infeasible => Err(ScenarioError::Infeasible {
            ray: sol.farkas.unwrap_or_default(),
        }),
        LpStatus::Unbounded => Err(ScenarioError::Unbounded),
    }
}

/// Stage-by-stage maximization: each observer in `order` is maximized with
/// every earlier observer pinned to its achieved value (minus a hair of
/// slack to absorb solver residue).
pub fn solve_lexicographic(
    spec: &ExperimentSpec,
    q: &TalliedFrequencies,
    order: &[usize],
    config: &SolverConfig,
) -> Result<Vec<ScenarioResult>, ScenarioError> {
    if order.is_empty() {
        return Err(ScenarioError::BadScenario(
            "lexicographic order is empty".into(),
        ));
    }
    let mut fixed: Vec<(usize, f64)> = Vec::new();
    let mut results = Vec::with_capacity(order.len());
    for &obs in order {
        let scenario = ObjectiveScenario::new(spec, fixed.clone(), Objective::Dmin(obs))?;
        let result = solve_scenario(spec, q, &scenario, config)?;
        fixed.push((obs, (result.value - PIN_SLACK).clamp(0.0, 1.0)));
        results.push(result);
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ExperimentSpec, MeasurementSpec, ObserverSpec};
    use crate::quantum;

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

    #[test]
    fn layout_counts_archetypal_dsym() {
        let spec = archetypal();
        let scenario = ObjectiveScenario::dsym_rest(&spec, vec![]).unwrap();
        let q = optimized_bell_q(&spec);
        let (lp, layout) = build(&spec, &q, &scenario).unwrap();
        assert_eq!(layout.n_cats, 81);
        // columns: 81 categories + 4 v + 4 pdet + 2 dmin + 1 dsym
        assert_eq!(lp.num_vars(), 92);
        // rows: normalization + 16 coupling + 4 pdet + 4 dmin + 2 dsym
        assert_eq!(lp.num_rows(), 27);
    }

    #[test]
    fn layout_counts_three_measurements() {
        let meas = |prefix: &str| {
            (1..=3)
                .map(|k| MeasurementSpec {
                    name: format!("{prefix}{k}"),
                    results: vec!["U".into(), "D".into()],
                })
                .collect::<Vec<_>>()
        };
        let spec = ExperimentSpec::new(vec![
            ObserverSpec {
                name: "Alice".into(),
                measurements: meas("A"),
            },
            ObserverSpec {
                name: "Bob".into(),
                measurements: meas("B"),
            },
        ])
        .unwrap();
        let q = TalliedFrequencies::new(&spec, vec![vec![0.25; 4]; 9]).unwrap();
        let scenario = ObjectiveScenario::dsym_rest(&spec, vec![]).unwrap();
        let (lp, layout) = build(&spec, &q, &scenario).unwrap();
        assert_eq!(layout.n_cats, 729);
        assert_eq!(layout.row_pdet, 1 + 36); // normalization + 9 settings * 4 outcomes
        assert_eq!(lp.num_vars(), 729 + 9 + 6 + 2 + 1);
    }

    #[test]
    fn optimized_bell_symmetric_value() {
        let spec = archetypal();
        let q = optimized_bell_q(&spec);
        let scenario = ObjectiveScenario::dsym_rest(&spec, vec![]).unwrap();
        let result = solve_scenario(&spec, &q, &scenario, &SolverConfig::default()).unwrap();
        assert!(
            (result.value - 0.9).abs() < 1e-6,
            "symmetric critical efficiency {}",
            result.value
        );
        assert!(result.model.check(&spec, &q, MODEL_TOL).is_empty());
    }

    #[test]
    fn optimized_bell_lexicographic() {
        let spec = archetypal();
        let q = optimized_bell_q(&spec);
        let order = [0usize, 1usize];
        let results =
            solve_lexicographic(&spec, &q, &order, &SolverConfig::default()).unwrap();
        assert!((results[0].value - 1.0).abs() < 1e-6, "{}", results[0].value);
        assert!((results[1].value - 0.8).abs() < 1e-6, "{}", results[1].value);
        // symmetry of this experiment: the reversed order gives the same pair
        let results =
            solve_lexicographic(&spec, &q, &[1, 0], &SolverConfig::default()).unwrap();
        assert!((results[0].value - 1.0).abs() < 1e-6);
        assert!((results[1].value - 0.8).abs() < 1e-6);
    }

    #[test]
    fn pinning_never_raises_the_optimum() {
        let spec = archetypal();
        let q = optimized_bell_q(&spec);
        let free = ObjectiveScenario::new(&spec, vec![], Objective::Dmin(1)).unwrap();
        let free_value = solve_scenario(&spec, &q, &free, &SolverConfig::default())
            .unwrap()
            .value;
        for pin in [0.2, 0.6, 0.9, 1.0] {
            let pinned =
                ObjectiveScenario::new(&spec, vec![(0, pin)], Objective::Dmin(1)).unwrap();
            let value = solve_scenario(&spec, &q, &pinned, &SolverConfig::default())
                .unwrap()
                .value;
            assert!(value <= free_value + 1e-9, "pin {pin}: {value} > {free_value}");
        }
    }

    #[test]
    fn product_state_reaches_perfect_detection() {
        let spec = archetypal();
        let fix = quantum::product_fixture(&[vec![0.0, 0.9], vec![0.4, 1.7]]).unwrap();
        let q = quantum::joint_probabilities(&fix, &spec).unwrap();
        let scenario = ObjectiveScenario::dsym_rest(&spec, vec![]).unwrap();
        let result = solve_scenario(&spec, &q, &scenario, &SolverConfig::default()).unwrap();
        assert!((result.value - 1.0).abs() < 1e-8, "{}", result.value);
        for &v in &result.model.v {
            assert!((v - 1.0).abs() < 1e-8);
        }
        assert!(result.degenerate_settings.is_empty());
    }

    #[test]
    fn scenario_validation() {
        let spec = archetypal();
        assert!(ObjectiveScenario::new(&spec, vec![(0, 1.0)], Objective::Dmin(0)).is_err());
        assert!(ObjectiveScenario::new(&spec, vec![(0, 1.5)], Objective::Dmin(1)).is_err());
        assert!(ObjectiveScenario::new(&spec, vec![], Objective::Dsym(vec![])).is_err());
        assert!(
            ObjectiveScenario::new(&spec, vec![(0, 1.0), (0, 0.5)], Objective::Dmin(1)).is_err()
        );
    }

    #[test]
    fn unnormalized_frequencies_rejected_upstream() {
        let spec = archetypal();
        assert!(TalliedFrequencies::new(&spec, vec![vec![0.3; 4]; 4]).is_err());
    }

    #[test]
    fn infeasible_pin_with_non_coincidence_tallies() {
        // tally Alice-detects/Bob-misses outcomes; give them real weight, then
        // demand perfect detection from Alice: no category mass can satisfy
        // both the couplings and the pin.
        let base = archetypal();
        let mut overrides = std::collections::BTreeMap::new();
        for s in base.settings() {
            let all = [
                "U,U", "U,D", "D,U", "D,D", "U,N", "D,N", "N,U", "N,D",
            ];
            overrides.insert(
                base.setting_label(&s),
                all.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
            );
        }
        let spec = ExperimentSpec::with_tallied(base.observers().to_vec(), &overrides).unwrap();
        let mut rows = Vec::new();
        for s in spec.settings() {
            let tallied = spec.outcomes(&s, OutcomeClass::Tallied);
            let mut row = vec![0.0; tallied.len()];
            for (idx, d) in tallied.iter().enumerate() {
                match spec.outcome_label(&s, d).as_str() {
                    "U,U" => row[idx] = 0.5,
                    "N,U" => row[idx] = 0.5,
                    _ => {}
                }
            }
            rows.push(row);
        }
        let q = TalliedFrequencies::new(&spec, rows).unwrap();
        let scenario =
            ObjectiveScenario::new(&spec, vec![(0, 1.0)], Objective::Dmin(1)).unwrap();
        let err = solve_scenario(&spec, &q, &scenario, &SolverConfig::default()).unwrap_err();
        match err {
            ScenarioError::Infeasible { ray } => assert!(!ray.is_empty()),
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }
}
