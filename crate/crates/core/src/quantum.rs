//! Quantum inputs: state vectors plus measurement bases, contracted into
//! per-setting outcome probabilities via the Born rule.
//!
//! This is the tallied-frequency generator for the worked experiments. Only
//! pure states and complete orthonormal bases are supported; detector
//! imperfections are what the rest of the crate reasons about, so none are
//! modelled here.

use num_complex::Complex64;

use crate::model::{ExperimentSpec, OutcomeClass, TalliedFrequencies};

const NORM_TOL: f64 = 1e-12;
const UNITARY_TOL: f64 = 1e-10;
/// Born-rule outputs below are clamped to zero; anything more negative is a bug.
const NEGATIVE_EPS: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum QuantumError {
    #[error("state vector has norm {0}, expected 1")]
    NotNormalized(f64),
    #[error("basis for observer {observer} measurement {measurement} is not unitary (residual {residual:e})")]
    NotUnitary {
        observer: usize,
        measurement: usize,
        residual: f64,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("computed probability {0} below the negative tolerance")]
    NegativeProbability(f64),
}

/// A d_i×d_i measurement basis: row r is the bra of the r-th detect result.
pub type Basis = Vec<Vec<Complex64>>;

/// Pure-state experiment input: local dimensions, joint state vector, and one
/// orthonormal basis per (observer, measurement).
#[derive(Debug, Clone)]
pub struct QuantumFixture {
    pub dims: Vec<usize>,
    pub state: Vec<Complex64>,
    /// `bases[i][k]` is observer i's basis for measurement k.
    pub bases: Vec<Vec<Basis>>,
}

impl QuantumFixture {
    pub fn new(
        dims: Vec<usize>,
        state: Vec<Complex64>,
        bases: Vec<Vec<Basis>>,
    ) -> Result<Self, QuantumError> {
        let total: usize = dims.iter().product();
        if state.len() != total {
            return Err(QuantumError::Dimension(format!(
                "state has {} amplitudes for total dimension {}",
                state.len(),
                total
            )));
        }
        let norm: f64 = state.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(QuantumError::NotNormalized(norm));
        }
        if bases.len() != dims.len() {
            return Err(QuantumError::Dimension(format!(
                "{} basis groups for {} observers",
                bases.len(),
                dims.len()
            )));
        }
        for (i, (obs_bases, &d)) in bases.iter().zip(&dims).enumerate() {
            for (k, basis) in obs_bases.iter().enumerate() {
                if basis.len() != d || basis.iter().any(|row| row.len() != d) {
                    return Err(QuantumError::Dimension(format!(
                        "observer {i} measurement {k}: basis is not {d}x{d}"
                    )));
                }
                let residual = unitarity_residual(basis);
                if residual > UNITARY_TOL {
                    return Err(QuantumError::NotUnitary {
                        observer: i,
                        measurement: k,
                        residual,
                    });
                }
            }
        }
        Ok(QuantumFixture { dims, state, bases })
    }

    /// Check the fixture shape against a spec: one basis per measurement and
    /// `Z_ik` equal to the local dimension.
    pub fn matches(&self, spec: &ExperimentSpec) -> Result<(), QuantumError> {
        if self.dims.len() != spec.observer_count() {
            return Err(QuantumError::Dimension(format!(
                "{} observers in fixture, {} in spec",
                self.dims.len(),
                spec.observer_count()
            )));
        }
        for i in 0..self.dims.len() {
            if self.bases[i].len() != spec.measurement_count(i) {
                return Err(QuantumError::Dimension(format!(
                    "observer {} has {} bases for {} measurements",
                    spec.observer_name(i),
                    self.bases[i].len(),
                    spec.measurement_count(i)
                )));
            }
            for k in 0..self.bases[i].len() {
                if spec.detect_result_count(i, k) != self.dims[i] {
                    return Err(QuantumError::Dimension(format!(
                        "observer {} measurement {}: {} detect results for local dimension {}",
                        spec.observer_name(i),
                        spec.measurement_name(i, k),
                        spec.detect_result_count(i, k),
                        self.dims[i]
                    )));
                }
            }
        }
        Ok(())
    }
}

fn unitarity_residual(basis: &Basis) -> f64 {
    let d = basis.len();
    let mut worst = 0.0f64;
    for a in 0..d {
        for b in 0..d {
            let mut dot = Complex64::new(0.0, 0.0);
            for c in 0..d {
                dot += basis[a][c] * basis[b][c].conj();
            }
            let expect = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((dot - expect).norm());
        }
    }
    worst
}

/// Born-rule joint probabilities over detect-only outcomes, one row per
/// setting: `q_sd = |<d| U_{s_1} ⊗ … ⊗ U_{s_N} |ψ>|²`.
pub fn joint_probabilities(
    fixture: &QuantumFixture,
    spec: &ExperimentSpec,
) -> Result<TalliedFrequencies, QuantumError> {
    fixture.matches(spec)?;
    if !spec.coincidences_only() {
        return Err(QuantumError::Dimension(
            "quantum inputs provide coincidence frequencies only; \
             non-coincidence tallies must come from a frequency file"
                .into(),
        ));
    }
    let dims = &fixture.dims;
    let total = fixture.state.len();
    let mut values = Vec::new();
    for s in spec.settings() {
        let outcomes = spec.outcomes(&s, OutcomeClass::DetectOnly);
        let mut row = Vec::with_capacity(outcomes.len());
        let mut sum = 0.0;
        for d in &outcomes {
            // amplitude = Σ_z (Π_i bases[i][s_i][d_i][z_i]) ψ_z
            let mut amp = Complex64::new(0.0, 0.0);
            for z in 0..total {
                let mut factor = fixture.state[z];
                if factor == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let mut rest = z;
                // z decomposes observer-major, matching the state layout
                for i in (0..dims.len()).rev() {
                    let zi = rest % dims[i];
                    rest /= dims[i];
                    factor *= fixture.bases[i][s.indices()[i]][d.indices()[i]][zi];
                }
                amp += factor;
            }
            let mut p = amp.norm_sqr();
            if p < 0.0 {
                if p < -NEGATIVE_EPS {
                    return Err(QuantumError::NegativeProbability(p));
                }
                p = 0.0;
            }
            sum += p;
            row.push(p);
        }
        // Renormalize away accumulated rounding so the LP builder sees an
        // exactly admissible table.
        if (sum - 1.0).abs() > 1e-12 {
            for p in &mut row {
                *p /= sum;
            }
        }
        values.push(row);
    }
    TalliedFrequencies::new(spec, values).map_err(|e| QuantumError::Dimension(e.to_string()))
}

/// Spin measurement basis at angle theta in the x–z plane.
/// Row 0 is the +1 ("U") bra, row 1 the −1 ("D") bra.
fn spin_basis(theta: f64) -> Basis {
    let (s, c) = (theta / 2.0).sin_cos();
    vec![
        vec![Complex64::new(c, 0.0), Complex64::new(s, 0.0)],
        vec![Complex64::new(-s, 0.0), Complex64::new(c, 0.0)],
    ]
}

/// Equatorial measurement basis at azimuth phi (X is phi = 0, Y is phi = π/2).
fn equatorial_basis(phi: f64) -> Basis {
    let inv = 1.0 / 2.0f64.sqrt();
    let phase = Complex64::from_polar(inv, -phi);
    vec![
        vec![Complex64::new(inv, 0.0), phase],
        vec![Complex64::new(inv, 0.0), -phase],
    ]
}

/// Two-qubit singlet with rotated spin measurements at the given angles
/// (spin-1/2 convention: use half these angles for photon polarizers).
pub fn singlet_fixture(angles_a: &[f64], angles_b: &[f64]) -> Result<QuantumFixture, QuantumError> {
    if angles_a.len() < 2 || angles_b.len() < 2 {
        return Err(QuantumError::Dimension(
            "singlet fixture needs at least two angles per side".into(),
        ));
    }
    let inv = 1.0 / 2.0f64.sqrt();
    // (|01> - |10>)/√2
    let state = vec![
        Complex64::new(0.0, 0.0),
        Complex64::new(inv, 0.0),
        Complex64::new(-inv, 0.0),
        Complex64::new(0.0, 0.0),
    ];
    QuantumFixture::new(
        vec![2, 2],
        state,
        vec![
            angles_a.iter().map(|&t| spin_basis(t)).collect(),
            angles_b.iter().map(|&t| spin_basis(t)).collect(),
        ],
    )
}

/// General two-qubit fixture: state `cos ξ |00> + sin ξ |11>` with rotated
/// spin measurements per side.
pub fn two_qubit_fixture(
    xi: f64,
    angles_a: &[f64],
    angles_b: &[f64],
) -> Result<QuantumFixture, QuantumError> {
    if angles_a.len() < 2 || angles_b.len() < 2 {
        return Err(QuantumError::Dimension(
            "two-qubit fixture needs at least two angles per side".into(),
        ));
    }
    let state = vec![
        Complex64::new(xi.cos(), 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(xi.sin(), 0.0),
    ];
    QuantumFixture::new(
        vec![2, 2],
        state,
        vec![
            angles_a.iter().map(|&t| spin_basis(t)).collect(),
            angles_b.iter().map(|&t| spin_basis(t)).collect(),
        ],
    )
}

/// Three-qubit (|000> + |111>)/√2 with X and Y measurements per observer.
pub fn ghz_fixture() -> QuantumFixture {
    let inv = 1.0 / 2.0f64.sqrt();
    let mut state = vec![Complex64::new(0.0, 0.0); 8];
    state[0] = Complex64::new(inv, 0.0);
    state[7] = Complex64::new(inv, 0.0);
    let per_observer = vec![
        equatorial_basis(0.0),
        equatorial_basis(std::f64::consts::FRAC_PI_2),
    ];
    QuantumFixture::new(
        vec![2, 2, 2],
        state,
        vec![per_observer.clone(), per_observer.clone(), per_observer],
    )
    .expect("static fixture is valid")
}

/// Product state |U>⊗…⊗|U> of qubits, measured with rotated spin bases.
/// Yields factorized statistics that a perfect-detection model explains.
pub fn product_fixture(angles: &[Vec<f64>]) -> Result<QuantumFixture, QuantumError> {
    let n = angles.len();
    if n < 2 || angles.iter().any(|a| a.len() < 2) {
        return Err(QuantumError::Dimension(
            "product fixture needs two observers and two angles each".into(),
        ));
    }
    let total = 1usize << n;
    let mut state = vec![Complex64::new(0.0, 0.0); total];
    state[0] = Complex64::new(1.0, 0.0);
    QuantumFixture::new(
        vec![2; n],
        state,
        angles
            .iter()
            .map(|obs| obs.iter().map(|&t| spin_basis(t)).collect())
            .collect(),
    )
}

/// Closed-form singlet coincidence probability P(U,U) at analyzer angles (a, b).
pub fn singlet_closed_form_uu(a: f64, b: f64) -> f64 {
    let s = ((a - b) / 2.0).sin();
    0.5 * s * s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ExperimentSpec, MeasurementSpec, ObserverSpec};
    use rand::Rng;
    use rand::SeedableRng;

    fn two_obs_spec(n_meas: usize) -> ExperimentSpec {
        let meas = |prefix: &str| {
            (1..=n_meas)
                .map(|k| MeasurementSpec {
                    name: format!("{prefix}{k}"),
                    results: vec!["U".into(), "D".into()],
                })
                .collect::<Vec<_>>()
        };
        ExperimentSpec::new(vec![
            ObserverSpec {
                name: "Alice".into(),
                measurements: meas("A"),
            },
            ObserverSpec {
                name: "Bob".into(),
                measurements: meas("B"),
            },
        ])
        .unwrap()
    }

    fn ghz_spec() -> ExperimentSpec {
        let meas = || {
            vec![
                MeasurementSpec {
                    name: "X".into(),
                    results: vec!["U".into(), "D".into()],
                },
                MeasurementSpec {
                    name: "Y".into(),
                    results: vec!["U".into(), "D".into()],
                },
            ]
        };
        ExperimentSpec::new(vec![
            ObserverSpec {
                name: "Alice".into(),
                measurements: meas(),
            },
            ObserverSpec {
                name: "Bob".into(),
                measurements: meas(),
            },
            ObserverSpec {
                name: "Charlie".into(),
                measurements: meas(),
            },
        ])
        .unwrap()
    }

    #[test]
    fn singlet_equal_angles_anticorrelate() {
        let spec = two_obs_spec(2);
        let fix = singlet_fixture(&[0.3, 1.0], &[0.3, 2.0]).unwrap();
        let q = joint_probabilities(&fix, &spec).unwrap();
        // setting (A1, B1) has equal angles; P(U,U) = P(D,D) = 0
        assert!(q.value(0, 0).abs() < 1e-12);
        assert!(q.value(0, 3).abs() < 1e-12);
        assert!((q.value(0, 1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn singlet_opposite_angles() {
        // a - b = π gives P(U,U) = 1/2
        let spec = two_obs_spec(2);
        let fix = singlet_fixture(&[std::f64::consts::PI, 1.0], &[0.0, 2.0]).unwrap();
        let q = joint_probabilities(&fix, &spec).unwrap();
        assert!((q.value(0, 0) - 0.5).abs() < 1e-12);
        assert!((singlet_closed_form_uu(std::f64::consts::PI, 0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_contraction_on_random_angles() {
        let spec = two_obs_spec(2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let b: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let fix = singlet_fixture(&[a, 0.0], &[b, 1.0]).unwrap();
            let q = joint_probabilities(&fix, &spec).unwrap();
            assert!(
                (q.value(0, 0) - singlet_closed_form_uu(a, b)).abs() < 1e-12,
                "a={a} b={b}"
            );
        }
    }

    #[test]
    fn product_state_measured_in_own_basis() {
        let spec = two_obs_spec(2);
        let fix = product_fixture(&[vec![0.0, 0.7], vec![0.0, 1.3]]).unwrap();
        let q = joint_probabilities(&fix, &spec).unwrap();
        assert!((q.value(0, 0) - 1.0).abs() < 1e-12); // (A1,B1) both at angle 0
    }

    #[test]
    fn product_state_factorizes() {
        let spec = two_obs_spec(2);
        let angles_a = vec![0.4, 0.9];
        let angles_b = vec![1.1, 2.3];
        let fix = product_fixture(&[angles_a.clone(), angles_b.clone()]).unwrap();
        let q = joint_probabilities(&fix, &spec).unwrap();
        for (s_idx, s) in spec.settings().iter().enumerate() {
            let ta = angles_a[s.indices()[0]];
            let tb = angles_b[s.indices()[1]];
            let pa = (ta / 2.0).cos().powi(2); // P(U) for |0> at angle t
            let pb = (tb / 2.0).cos().powi(2);
            let expect = [pa * pb, pa * (1.0 - pb), (1.0 - pa) * pb, (1.0 - pa) * (1.0 - pb)];
            for (d_idx, e) in expect.iter().enumerate() {
                assert!((q.value(s_idx, d_idx) - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ghz_parity_structure() {
        let spec = ghz_spec();
        let fix = ghz_fixture();
        let q = joint_probabilities(&fix, &spec).unwrap();
        let settings = spec.settings();
        for (s_idx, s) in settings.iter().enumerate() {
            let phi_sum: f64 = s
                .indices()
                .iter()
                .map(|&k| if k == 0 { 0.0 } else { std::f64::consts::FRAC_PI_2 })
                .sum();
            let outcomes = spec.outcomes(s, OutcomeClass::DetectOnly);
            let mut sum = 0.0;
            for (d_idx, d) in outcomes.iter().enumerate() {
                let parity: f64 = d
                    .indices()
                    .iter()
                    .map(|&r| if r == 0 { 1.0 } else { -1.0 })
                    .product();
                let expect = (1.0 + parity * phi_sum.cos()) / 8.0;
                assert!(
                    (q.value(s_idx, d_idx) - expect).abs() < 1e-12,
                    "setting {s_idx} outcome {d_idx}"
                );
                sum += q.value(s_idx, d_idx);
            }
            assert!((sum - 1.0).abs() < 1e-12);
        }
        // XXX: p(U,U,U) = 1/4 and p(U,U,D) = 0
        assert!((q.value(0, 0) - 0.25).abs() < 1e-12);
        assert!(q.value(0, 1).abs() < 1e-12);
        // XYY: p(U,U,U) = 0
        assert!(q.value(3, 0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let state = vec![Complex64::new(1.0, 0.0), Complex64::new(0.5, 0.0)];
        assert!(matches!(
            QuantumFixture::new(vec![2], state, vec![vec![spin_basis(0.0)]]),
            Err(QuantumError::NotNormalized(_))
        ));
        let skewed = vec![
            vec![Complex64::new(1.0, 0.0), Complex64::new(0.2, 0.0)],
            vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        ];
        let state = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        assert!(matches!(
            QuantumFixture::new(vec![2], state, vec![vec![skewed]]),
            Err(QuantumError::NotUnitary { .. })
        ));
    }
}
