//! Convertibility `ρ → σ` under free operations: closed-form qubit deciders
//! and an oracle-backed dispatcher for everything else.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::monotones::{self, monotones_for, Extended, Monotone};
use crate::oracle::{self, OracleBudget};
use crate::state::{bloch_from_density, trace_distance, DensityMatrix};
use crate::theory::{TheoryKind, TheorySpec};

/// Slack on monotone comparisons; ties within it resolve to convertible.
pub const DECISION_TOL: f64 = 1e-9;

/// Oracle residual below which a conversion is accepted.
pub const ORACLE_ACCEPT: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Convertible,
    NotConvertible,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub monotone: &'static str,
    pub from: Extended,
    pub to: Extended,
    /// `to > from + tolerance`.
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub outcome: Outcome,
    pub witnesses: Vec<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_residual: Option<f64>,
    pub tolerance: f64,
    /// `"exact"` for closed-form deciders, `"oracle"` otherwise.
    pub method: &'static str,
}

impl Verdict {
    pub fn is_convertible(&self) -> bool {
        self.outcome == Outcome::Convertible
    }

    fn from_witnesses(witnesses: Vec<Witness>) -> Self {
        let outcome = if witnesses.iter().any(|w| w.violated) {
            Outcome::NotConvertible
        } else {
            Outcome::Convertible
        };
        Self {
            outcome,
            witnesses,
            oracle_residual: None,
            tolerance: DECISION_TOL,
            method: "exact",
        }
    }
}

fn witness(name: &'static str, from: Extended, to: Extended) -> Witness {
    Witness {
        monotone: name,
        from,
        to,
        violated: !from.at_least(&to, DECISION_TOL),
    }
}

fn scalar_witness(name: &'static str, f: fn(&DensityMatrix) -> Result<f64>, rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<Witness> {
    Ok(witness(name, f(rho)?.into(), f(sigma)?.into()))
}

fn require_qubits(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<()> {
    if rho.is_qubit() && sigma.is_qubit() {
        Ok(())
    } else {
        Err(Error::Unsupported(format!(
            "qubit decider given dimensions {} and {}",
            rho.dim(),
            sigma.dim()
        )))
    }
}

/// Coherence under DIO: `C_R` and `C_Δ,R` form a complete set.
pub fn decide_coherence_qubit(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<Verdict> {
    require_qubits(rho, sigma)?;
    Ok(Verdict::from_witnesses(vec![
        scalar_witness("c_r", monotones::c_r, rho, sigma)?,
        scalar_witness("c_delta_r", monotones::c_delta_r, rho, sigma)?,
    ]))
}

/// Imaginarity: `I1` and `I2` form a complete set.
pub fn decide_imaginarity_qubit(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<Verdict> {
    require_qubits(rho, sigma)?;
    Ok(Verdict::from_witnesses(vec![
        scalar_witness("i1", monotones::i1, rho, sigma)?,
        scalar_witness("i2", monotones::i2, rho, sigma)?,
    ]))
}

/// The achievability condition `|σ01| <= |ρ01| sqrt(χ) + tol` with
/// `χ = min{σ00/ρ00, (1-σ00)/(1-ρ00)}` (terms with a vanishing denominator
/// are dropped).
pub fn asymmetry_condition(rho: &DensityMatrix, sigma: &DensityMatrix, tol: f64) -> Result<bool> {
    require_qubits(rho, sigma)?;
    let (r00, s00) = (rho.entry(0, 0).re, sigma.entry(0, 0).re);
    let mut chi = f64::INFINITY;
    if r00 > 0.0 {
        chi = chi.min(s00 / r00);
    }
    if r00 < 1.0 {
        chi = chi.min((1.0 - s00) / (1.0 - r00));
    }
    let r01 = rho.entry(0, 1).norm();
    let bound = if r01 == 0.0 { 0.0 } else { r01 * chi.max(0.0).sqrt() };
    Ok(sigma.entry(0, 1).norm() <= bound + tol)
}

/// Time-translation covariant operations on a qubit in its energy
/// eigenbasis. Decided by the χ condition; `A1`/`A2` are the witnesses.
pub fn decide_asymmetry_qubit(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<Verdict> {
    let reachable = asymmetry_condition(rho, sigma, DECISION_TOL)?;
    let mut v = Verdict::from_witnesses(vec![
        scalar_witness("a1", monotones::a1, rho, sigma)?,
        scalar_witness("a2", monotones::a2, rho, sigma)?,
    ]);
    // Both forms agree off the tolerance band; inside it the closure
    // convention resolves to convertible.
    if reachable {
        v.outcome = Outcome::Convertible;
    }
    Ok(v)
}

/// Thermal operations on a qubit with diagonal Gibbs state `gamma`.
pub fn decide_thermal_qubit(rho: &DensityMatrix, sigma: &DensityMatrix, gamma: &DensityMatrix) -> Result<Verdict> {
    require_qubits(rho, sigma)?;
    if !gamma.is_qubit() || gamma.entry(0, 1).norm() > 1e-12 {
        return Err(Error::Precondition("Gibbs state must be a diagonal qubit state".into()));
    }
    if gamma.min_eigenvalue() <= monotones::SUPPORT_TOL {
        return Err(Error::Precondition("Gibbs state must have full rank".into()));
    }
    use monotones::{d_max, d_min};
    Ok(Verdict::from_witnesses(vec![
        witness("d_max_rho_gamma", d_max(rho, gamma)?, d_max(sigma, gamma)?),
        witness("d_max_gamma_rho", d_max(gamma, rho)?, d_max(gamma, sigma)?),
        witness("d_min_gamma_rho", d_min(gamma, rho)?, d_min(gamma, sigma)?),
        scalar_witness("a1", monotones::a1, rho, sigma)?,
        scalar_witness("a2", monotones::a2, rho, sigma)?,
    ]))
}

/// Ball theory `F_t`: `σ` is reachable iff it is free or `|r| >= |s|`.
pub fn decide_totally_ordered_qubit(rho: &DensityMatrix, sigma: &DensityMatrix, t: f64) -> Result<Verdict> {
    require_qubits(rho, sigma)?;
    let r = bloch_from_density(rho)?.norm();
    let s = bloch_from_density(sigma)?.norm();
    let convertible = s <= t + DECISION_TOL || r >= s - DECISION_TOL;
    let w = witness(
        "nearest_free",
        (r - t).max(0.0).into(),
        (s - t).max(0.0).into(),
    );
    Ok(Verdict {
        outcome: if convertible {
            Outcome::Convertible
        } else {
            Outcome::NotConvertible
        },
        witnesses: vec![w],
        oracle_residual: None,
        tolerance: DECISION_TOL,
        method: "exact",
    })
}

/// Oracle settings for [`decide`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecideOptions {
    pub budget: OracleBudget,
    pub seed: u64,
}

impl Default for DecideOptions {
    fn default() -> Self {
        Self {
            budget: OracleBudget::default(),
            seed: 0,
        }
    }
}

/// Routes to the exact decider where one exists. Otherwise: free targets
/// and `ρ = σ` are convertible, an increasing exact monotone refutes, and
/// the oracle can only confirm (`residual < 1e-5`) or leave the question
/// undecided.
pub fn decide(th: &TheorySpec, rho: &DensityMatrix, sigma: &DensityMatrix, opts: &DecideOptions) -> Result<Verdict> {
    if rho.dim() != th.dim() || sigma.dim() != th.dim() {
        return Err(Error::Dimension(format!(
            "{} theory on dimension {}, states have dimensions {} and {}",
            th.name(),
            th.dim(),
            rho.dim(),
            sigma.dim()
        )));
    }
    if th.has_exact_decider() {
        return match *th.kind() {
            TheoryKind::Coherence => decide_coherence_qubit(rho, sigma),
            TheoryKind::Imaginarity => decide_imaginarity_qubit(rho, sigma),
            TheoryKind::AsymmetryQubit { .. } => decide_asymmetry_qubit(rho, sigma),
            TheoryKind::ThermalQubit { .. } => {
                decide_thermal_qubit(rho, sigma, &th.gibbs_state().expect("thermal theory"))
            }
            TheoryKind::TotallyOrderedBall { t } => decide_totally_ordered_qubit(rho, sigma, t),
            // Qubit unital channels are the ball theory at t = 0.
            TheoryKind::PurityUnital => decide_totally_ordered_qubit(rho, sigma, 0.0),
            TheoryKind::Ppt { .. } => unreachable!("PPT has no exact decider"),
        };
    }

    let mut witnesses = Vec::new();
    for m in monotones_for(th) {
        if !m.is_exact_for(th) {
            continue;
        }
        witnesses.push(witness(m.name(), m.evaluate(rho, th)?, m.evaluate(sigma, th)?));
    }
    let trivially = th.is_free(sigma)? || trace_distance(rho, sigma)? <= DECISION_TOL;
    let mut verdict = Verdict {
        outcome: Outcome::Convertible,
        witnesses,
        oracle_residual: None,
        tolerance: ORACLE_ACCEPT,
        method: "oracle",
    };
    if trivially {
        return Ok(verdict);
    }
    if verdict.witnesses.iter().any(|w| w.violated) {
        verdict.outcome = Outcome::NotConvertible;
        return Ok(verdict);
    }
    let out = oracle::min_residual(rho, sigma, th, &opts.budget, opts.seed)?;
    verdict.oracle_residual = Some(out.residual);
    if out.residual >= ORACLE_ACCEPT {
        verdict.outcome = Outcome::Undecided;
    }
    Ok(verdict)
}

/// Names of the monotones that refute `ρ → σ` in `th`.
pub fn violated_monotones(th: &TheorySpec, rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<Vec<Monotone>> {
    let mut out = Vec::new();
    for m in monotones_for(th) {
        if m.is_exact_for(th) && !m.evaluate(rho, th)?.at_least(&m.evaluate(sigma, th)?, DECISION_TOL) {
            out.push(m);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use crate::state::qubit;

    #[test]
    fn reflexive_in_every_qubit_theory() {
        let rho = qubit(0.3, -0.2, 0.4).unwrap();
        let theories = [
            TheorySpec::coherence(2).unwrap(),
            TheorySpec::imaginarity(2).unwrap(),
            TheorySpec::asymmetry_qubit(1.0).unwrap(),
            TheorySpec::thermal_qubit([0.7, 0.3]).unwrap(),
            TheorySpec::totally_ordered_ball(0.3).unwrap(),
            TheorySpec::purity_unital(2).unwrap(),
        ];
        for th in &theories {
            let v = decide(th, &rho, &rho, &DecideOptions::default()).unwrap();
            assert_eq!(v.outcome, Outcome::Convertible, "{}", th.name());
        }
    }

    #[test]
    fn mixed_coherent_cannot_reach_pure_coherent() {
        let rho = qubit(0.5, 0.0, 0.0).unwrap();
        let plus = qubit(1.0, 0.0, 0.0).unwrap();
        let v = decide_coherence_qubit(&rho, &plus).unwrap();
        assert_eq!(v.outcome, Outcome::NotConvertible);
        assert!(v.witnesses.iter().any(|w| w.monotone == "c_delta_r" && w.violated));
    }

    #[test]
    fn imaginarity_examples() {
        let mut rng = random::rng(5);
        let real = qubit(0.2, 0.0, -0.7).unwrap();
        for _ in 0..20 {
            let rho = random::qubit_state(&mut rng);
            assert!(decide_imaginarity_qubit(&rho, &real).unwrap().is_convertible());
        }
        let mixed = qubit(0.1, 0.5, 0.1).unwrap();
        let pure = qubit(0.6, 0.8, 0.0).unwrap();
        assert_eq!(decide_imaginarity_qubit(&mixed, &pure).unwrap().outcome, Outcome::NotConvertible);
    }

    #[test]
    fn asymmetry_forms_agree() {
        let mut rng = random::rng(9);
        for _ in 0..1000 {
            let rho = random::qubit_state(&mut rng);
            let sigma = random::qubit_state(&mut rng);
            let chi = asymmetry_condition(&rho, &sigma, 0.0).unwrap();
            let a = monotones::a1(&rho).unwrap() >= monotones::a1(&sigma).unwrap()
                && monotones::a2(&rho).unwrap() >= monotones::a2(&sigma).unwrap();
            assert_eq!(chi, a);
        }
        let incoherent = DensityMatrix::diagonal(&[0.4, 0.6]).unwrap();
        let coherent = qubit(0.1, 0.0, 0.0).unwrap();
        assert_eq!(decide_asymmetry_qubit(&incoherent, &coherent).unwrap().outcome, Outcome::NotConvertible);
    }

    #[test]
    fn thermal_examples() {
        let th = TheorySpec::thermal_qubit([0.8, 0.2]).unwrap();
        let gamma = th.gibbs_state().unwrap();
        let sigma = qubit(0.3, 0.1, 0.2).unwrap();
        assert!(decide_thermal_qubit(&sigma, &gamma, &gamma).unwrap().is_convertible());
        assert_eq!(decide_thermal_qubit(&gamma, &sigma, &gamma).unwrap().outcome, Outcome::NotConvertible);
        let not_diagonal = qubit(0.1, 0.0, 0.3).unwrap();
        assert!(matches!(
            decide_thermal_qubit(&sigma, &gamma, &not_diagonal),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn ball_examples() {
        let r = qubit(0.0, 0.0, 0.9).unwrap();
        let s = qubit(0.2, 0.0, 0.0).unwrap();
        assert!(decide_totally_ordered_qubit(&r, &s, 0.3).unwrap().is_convertible());
        let r = qubit(0.0, 0.5, 0.0).unwrap();
        let s = qubit(0.7, 0.0, 0.0).unwrap();
        let v = decide_totally_ordered_qubit(&r, &s, 0.3).unwrap();
        assert_eq!(v.outcome, Outcome::NotConvertible);
        assert!(v.witnesses[0].violated);
    }

    #[test]
    fn free_targets_are_reachable_in_higher_dimension() {
        let th = TheorySpec::coherence(3).unwrap();
        let mut rng = random::rng(4);
        let rho = random::density(3, 3, &mut rng);
        let sigma = DensityMatrix::diagonal(&[0.2, 0.3, 0.5]).unwrap();
        let v = decide(&th, &rho, &sigma, &DecideOptions::default()).unwrap();
        assert_eq!(v.outcome, Outcome::Convertible);
        assert_eq!(v.method, "oracle");
    }

    /// `p |+><+| + (1-p) I/3` with `|+>` the uniform qutrit superposition.
    fn noisy_plus3(p: f64) -> DensityMatrix {
        let amps = nalgebra::DVector::from_element(3, crate::linalg::c(1.0, 0.0));
        let plus = crate::state::PureState::normalized(amps).unwrap();
        DensityMatrix::mix(p, &plus.density(), &DensityMatrix::maximally_mixed(3)).unwrap()
    }

    #[test]
    fn increasing_relative_entropy_refutes_in_higher_dimension() {
        let th = TheorySpec::coherence(3).unwrap();
        let v = decide(&th, &noisy_plus3(0.1), &noisy_plus3(0.9), &DecideOptions::default()).unwrap();
        assert_eq!(v.outcome, Outcome::NotConvertible);
        assert!(v.oracle_residual.is_none());
        let v = decide(&th, &noisy_plus3(0.9), &noisy_plus3(0.1), &DecideOptions::default()).unwrap();
        assert_eq!(v.outcome, Outcome::Convertible);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let th = TheorySpec::coherence(2).unwrap();
        let rho = DensityMatrix::maximally_mixed(3);
        assert!(matches!(
            decide(&th, &rho, &rho, &DecideOptions::default()),
            Err(Error::Dimension(_))
        ));
    }
}
