//! Decides how efficient detectors must be to rule out every local-realist
//! explanation of an EPR experiment.
//!
//! The pipeline: describe the experiment ([`model`]), obtain per-setting
//! outcome frequencies (measured, or generated from a quantum state via
//! [`quantum`]), assemble the local-realist feasibility program ([`builder`]),
//! solve it ([`lp`]), and independently verify the answer — feasibility
//! witnesses and infeasibility certificates alike ([`certify`]).
//!
//! The critical efficiency `f*` returned for a scenario is the largest
//! detection probability any local-realist account of the tallied frequencies
//! can exhibit; an experiment demonstrating better detection closes the
//! loophole outright. Infeasibility certificates are exported in a form a
//! third party can re-check from the experiment description alone.

pub mod builder;
pub mod certify;
pub mod io;
pub mod lp;
pub mod model;
pub mod parallel;
pub mod quantum;

pub use builder::{
    solve_lexicographic, solve_scenario, LrModel, Objective, ObjectiveScenario, ScenarioError,
    ScenarioResult,
};
pub use certify::{
    bisect_critical, check_no_signaling, check_perfect_detection, construct_witness,
    verify_certificate, BellCertificate, CertifyError,
};
pub use lp::{LinearProgram, LpError, LpSolution, LpStatus, SolverConfig};
pub use model::{
    Category, ExperimentSpec, FullFrequencies, ModelError, Outcome, OutcomeClass, Setting,
    TalliedFrequencies,
};
pub use parallel::Parallelism;
pub use quantum::{ghz_fixture, joint_probabilities, singlet_fixture, QuantumFixture};
