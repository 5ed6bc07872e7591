//! Executable forms of the no-go and total-order results: the `ψ_ε`
//! defeater for finite lists of continuous monotones, the full-rank
//! barrier, order-completeness sweeps and the `σ_ε` contraction.

use nalgebra::DVector;
use serde::Serialize;

use crate::convert::{self, Verdict};
use crate::error::{Error, Result};
use crate::linalg::{self, c, ONE};
use crate::monotones::Monotone;
use crate::oracle::{self, OracleBudget};
use crate::random;
use crate::state::{bloch_from_density, decompose_full_rank, BlochVector, DensityMatrix, PureState};
use crate::theory::{TheoryKind, TheorySpec};

/// Bisection depth for per-monotone thresholds on `(0, 0.5]`.
pub const EPSILON_DEPTH: usize = 40;

/// Residual above which the oracle is taken to confirm a blocked conversion.
pub const BLOCKED_RESIDUAL: f64 = 0.01;

/// `sqrt(1-ε)|φ_f> + sqrt(ε)|φ_⊥>`.
pub fn construct_psi_epsilon(phi_f: &PureState, phi_perp: &PureState, eps: f64) -> Result<PureState> {
    if phi_f.dim() != phi_perp.dim() {
        return Err(Error::Dimension("φ_f and φ_⊥ differ in dimension".into()));
    }
    if phi_f.inner(phi_perp).norm() > 1e-10 {
        return Err(Error::Precondition("φ_f and φ_⊥ are not orthogonal".into()));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::Precondition(format!("ε = {eps} outside [0, 1]")));
    }
    let v = phi_f.amplitudes() * c((1.0 - eps).sqrt(), 0.0) + phi_perp.amplitudes() * c(eps.sqrt(), 0.0);
    PureState::normalized(v)
}

/// A free pure state on the boundary of the free set and an orthogonal
/// direction leaving it, where the theory has free pure states.
pub fn boundary_pair(th: &TheorySpec) -> Option<(PureState, PureState)> {
    let d = th.dim();
    let basis = |k| PureState::basis(d, k).expect("index in range");
    match th.kind() {
        TheoryKind::Coherence | TheoryKind::AsymmetryQubit { .. } => Some((basis(0), basis(1))),
        TheoryKind::Imaginarity => {
            let mut v = DVector::from_element(d, c(0.0, 0.0));
            v[1] = c(0.0, 1.0);
            Some((basis(0), PureState::new(v).expect("unit vector")))
        }
        TheoryKind::Ppt { .. } => Some((basis(0), basis(d - 1))),
        TheoryKind::TotallyOrderedBall { t } if *t >= 1.0 => None,
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonEntry {
    pub monotone: &'static str,
    pub continuous: bool,
    pub faithful: bool,
    pub value_rho: Option<f64>,
    /// Largest `ε` found with `R(ψ_ε) <= R(ρ)`; `None` when inapplicable.
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inapplicable: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefeatingEpsilon {
    /// Minimum over the applicable monotones.
    pub epsilon: Option<f64>,
    #[serde(skip)]
    pub psi: Option<PureState>,
    pub entries: Vec<EpsilonEntry>,
    /// `R_i(ρ) >= R_i(ψ_ε)` for every applicable monotone.
    pub dominated: bool,
}

fn finite_value(m: Monotone, rho: &DensityMatrix, th: &TheorySpec) -> Result<Option<f64>> {
    Ok(m.evaluate(rho, th)?.finite())
}

/// For each monotone, bisects for the largest `ε ∈ (0, 0.5]` with
/// `R(ψ_ε) <= R(ρ)`; returns their minimum and `ψ_ε`.
pub fn find_defeating_epsilon(
    list: &[Monotone],
    rho: &DensityMatrix,
    th: &TheorySpec,
    phi_f: &PureState,
    phi_perp: &PureState,
) -> Result<DefeatingEpsilon> {
    if list.is_empty() {
        return Err(Error::Precondition("empty monotone list".into()));
    }
    if rho.min_eigenvalue() <= 1e-9 {
        return Err(Error::Precondition("ρ must have full rank".into()));
    }
    if th.is_free(rho)? {
        return Err(Error::Precondition("ρ is free".into()));
    }
    let psi_value = |m: Monotone, eps: f64| -> Result<Option<f64>> {
        let psi = construct_psi_epsilon(phi_f, phi_perp, eps)?;
        finite_value(m, &psi.density(), th)
    };

    let mut entries = Vec::new();
    for &m in list {
        let value_rho = finite_value(m, rho, th)?;
        let mut entry = EpsilonEntry {
            monotone: m.name(),
            continuous: m.continuous(),
            faithful: m.faithful(),
            value_rho,
            epsilon: None,
            inapplicable: None,
        };
        let target = match value_rho {
            _ if !m.continuous() => {
                entry.inapplicable = Some("discontinuous".into());
                entries.push(entry);
                continue;
            }
            Some(v) if v > 1e-12 => v,
            _ => {
                entry.inapplicable = Some("R(ρ) = 0: not faithful on ρ".into());
                entries.push(entry);
                continue;
            }
        };
        let ok = |eps: f64| -> Result<bool> { Ok(psi_value(m, eps)?.is_some_and(|v| v <= target)) };
        let (mut lo, mut hi) = (0.0f64, 0.5f64);
        if ok(hi)? {
            lo = hi;
        } else {
            for _ in 0..EPSILON_DEPTH {
                let mid = 0.5 * (lo + hi);
                if ok(mid)? {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        if lo > 0.0 {
            entry.epsilon = Some(lo);
        } else {
            entry.inapplicable = Some("no ε > 0 keeps R(ψ_ε) below R(ρ)".into());
        }
        entries.push(entry);
    }

    let epsilon = entries
        .iter()
        .filter_map(|e| e.epsilon)
        .min_by(f64::total_cmp);
    let psi = epsilon
        .map(|eps| construct_psi_epsilon(phi_f, phi_perp, eps))
        .transpose()?;
    let mut dominated = epsilon.is_some();
    if let Some(psi) = &psi {
        for e in entries.iter().filter(|e| e.epsilon.is_some()) {
            let m = Monotone::from_name(e.monotone)?;
            let at_psi = finite_value(m, &psi.density(), th)?;
            dominated &= matches!((e.value_rho, at_psi), (Some(r), Some(p)) if r >= p);
        }
    }
    Ok(DefeatingEpsilon {
        epsilon,
        psi,
        entries,
        dominated,
    })
}

/// Largest overlap `<ψ|μ|ψ>` over free states `μ`, where known in closed
/// form.
pub fn max_free_fidelity(th: &TheorySpec, psi: &PureState) -> Option<f64> {
    let a = psi.amplitudes();
    let proj = psi.density();
    match th.kind() {
        TheoryKind::Coherence | TheoryKind::AsymmetryQubit { .. } => {
            Some(a.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max))
        }
        TheoryKind::Imaginarity => {
            let re = proj.matrix().map(|z| c(z.re, 0.0));
            linalg::hermitian_eigenvalues(&re).last().copied()
        }
        TheoryKind::ThermalQubit { .. } => th.gibbs_state().map(|g| g.overlap(psi)),
        TheoryKind::PurityUnital => Some(1.0 / th.dim() as f64),
        TheoryKind::TotallyOrderedBall { t } => {
            let s = bloch_from_density(&proj).ok()?;
            Some(0.5 * (1.0 + t * s.norm()))
        }
        TheoryKind::Ppt { .. } => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockedReport {
    /// Smallest eigenvalue of `ρ`.
    pub p_min: f64,
    /// `max_μ free <ψ|μ|ψ>`, if known.
    pub max_free_fidelity: Option<f64>,
    /// Any free `Λ` has `||Λ(ρ) - ψ||_1 >= 2 p_min (1 - F_free)`: reaching
    /// fidelity `1 - ε` from `ρ` forces fidelity `> 1 - ε/p_min` from every
    /// pure input, free ones included, whose images stay free.
    pub analytic_lower_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decider: Option<Verdict>,
    pub oracle_residual: f64,
    pub oracle_converged: bool,
    /// `oracle_residual > 0.01`.
    pub oracle_blocked: bool,
}

/// Checks that full-rank `ρ` cannot be brought close to the pure resource
/// state `ψ`.
pub fn verify_blocked(
    rho: &DensityMatrix,
    psi: &PureState,
    th: &TheorySpec,
    budget: &OracleBudget,
    seed: u64,
) -> Result<BlockedReport> {
    let target = psi.density();
    if th.is_free(&target)? {
        return Err(Error::Precondition("target ψ is free".into()));
    }
    let (p_min, _) = decompose_full_rank(rho, psi)?;
    let fidelity = max_free_fidelity(th, psi);
    let decider = if th.has_exact_decider() {
        Some(convert::decide(th, rho, &target, &Default::default())?)
    } else {
        None
    };
    let out = oracle::min_residual(rho, &target, th, budget, seed)?;
    Ok(BlockedReport {
        p_min,
        max_free_fidelity: fidelity,
        analytic_lower_bound: fidelity.map(|f| 2.0 * p_min * (1.0 - f)),
        decider,
        oracle_residual: out.residual,
        oracle_converged: out.converged,
        oracle_blocked: out.residual > BLOCKED_RESIDUAL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncomparablePair {
    pub first: BlochVector,
    pub second: BlochVector,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TotalOrderReport {
    pub samples: usize,
    pub comparable: usize,
    /// Fraction of pairs with at least one convertible direction.
    pub fraction: f64,
    pub incomparable: Option<IncomparablePair>,
}

/// Samples random qubit pairs and counts those ordered by the exact
/// decider in at least one direction.
pub fn check_total_order(th: &TheorySpec, samples: usize, seed: u64) -> Result<TotalOrderReport> {
    if !th.has_exact_decider() {
        return Err(Error::Unsupported(format!("{} has no exact decider", th.name())));
    }
    let mut rng = random::rng(seed);
    let opts = Default::default();
    let mut comparable = 0;
    let mut incomparable = None;
    for _ in 0..samples {
        let a = random::qubit_state(&mut rng);
        let b = random::qubit_state(&mut rng);
        let forward = convert::decide(th, &a, &b, &opts)?.is_convertible();
        if forward || convert::decide(th, &b, &a, &opts)?.is_convertible() {
            comparable += 1;
        } else if incomparable.is_none() {
            incomparable = Some(IncomparablePair {
                first: bloch_from_density(&a)?,
                second: bloch_from_density(&b)?,
            });
        }
    }
    Ok(TotalOrderReport {
        samples,
        comparable,
        fraction: if samples == 0 { 1.0 } else { comparable as f64 / samples as f64 },
        incomparable,
    })
}

/// Spread `max - min` of the distance to the free set over random pure
/// qubit states.
pub fn pure_state_spread(th: &TheorySpec, count: usize, seed: u64) -> Result<f64> {
    let mut rng = random::rng(seed);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for _ in 0..count {
        let psi = random::pure_state(th.dim(), &mut rng).density();
        let v = th.nearest_free_distance(&psi)?.value;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok(if count == 0 { 0.0 } else { hi - lo })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Contraction {
    /// `R(σ_ε)` for `σ_ε = (1-ε)σ + ε μ_f`.
    pub value: f64,
    /// `(1-ε) R(σ)`.
    pub bound: f64,
    pub holds: bool,
}

/// Mixing toward the nearest free state contracts `R` at least linearly.
pub fn sigma_epsilon_contraction(sigma: &DensityMatrix, th: &TheorySpec, eps: f64) -> Result<Contraction> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::Precondition(format!("ε = {eps} outside [0, 1]")));
    }
    let mu = th
        .nearest_free_state(sigma)?
        .ok_or_else(|| Error::Unsupported(format!("no closed-form nearest free state for {}", th.name())))?;
    let sigma_eps = DensityMatrix::mix(1.0 - eps, sigma, &mu)?;
    let value = th.nearest_free_distance(&sigma_eps)?.value;
    let bound = (1.0 - eps) * th.nearest_free_distance(sigma)?.value;
    Ok(Contraction {
        value,
        bound,
        holds: value <= bound + 1e-10,
    })
}

/// `p |ψ><ψ| + (1-p) I/d`.
pub fn noisy_pure(psi: &PureState, p: f64) -> Result<DensityMatrix> {
    DensityMatrix::mix(p, &psi.density(), &DensityMatrix::maximally_mixed(psi.dim()))
}

/// `|+> = (|0> + |1>)/sqrt(2)`.
pub fn plus_state() -> PureState {
    PureState::normalized(DVector::from_vec(vec![ONE, ONE])).expect("non-zero")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convert::Outcome;
    use crate::monotones::{c_r, rel_entropy_coherence};
    use approx::assert_abs_diff_eq;

    fn coherence() -> TheorySpec {
        TheorySpec::coherence(2).unwrap()
    }

    fn rho() -> DensityMatrix {
        noisy_pure(&plus_state(), 0.9).unwrap()
    }

    #[test]
    fn psi_epsilon_endpoints_and_value() {
        let (f, p) = boundary_pair(&coherence()).unwrap();
        assert_eq!(construct_psi_epsilon(&f, &p, 0.0).unwrap(), f);
        assert!((construct_psi_epsilon(&f, &p, 1.0).unwrap().inner(&p).norm() - 1.0).abs() < 1e-12);
        let psi = construct_psi_epsilon(&f, &p, 0.01).unwrap();
        assert_abs_diff_eq!(c_r(&psi.density()).unwrap(), 2.0 * 0.0099f64.sqrt(), epsilon = 1e-12);
        assert!(construct_psi_epsilon(&f, &plus_state(), 0.1).is_err());
    }

    #[test]
    fn c_r_threshold_solves_the_scalar_equation() {
        let (f, p) = boundary_pair(&coherence()).unwrap();
        let out = find_defeating_epsilon(&[Monotone::CR], &rho(), &coherence(), &f, &p).unwrap();
        // 2 sqrt(ε(1-ε)) = 0.9
        let exact = 0.5 * (1.0 - (1.0f64 - 0.81).sqrt());
        assert_abs_diff_eq!(out.epsilon.unwrap(), exact, epsilon = 1e-10);
        assert!(out.dominated);
    }

    #[test]
    fn combined_list_takes_the_minimum() {
        let (f, p) = boundary_pair(&coherence()).unwrap();
        let th = coherence();
        let single = |m| find_defeating_epsilon(&[m], &rho(), &th, &f, &p).unwrap().epsilon.unwrap();
        let both = find_defeating_epsilon(&[Monotone::CR, Monotone::RelEnt], &rho(), &th, &f, &p).unwrap();
        let expected = single(Monotone::CR).min(single(Monotone::RelEnt));
        assert_eq!(both.epsilon.unwrap(), expected);
        let psi = both.psi.unwrap().density();
        assert!(rel_entropy_coherence(&rho()) >= rel_entropy_coherence(&psi));
    }

    #[test]
    fn discontinuous_monotones_are_inapplicable() {
        let (f, p) = boundary_pair(&coherence()).unwrap();
        let out = find_defeating_epsilon(&[Monotone::CDeltaR], &rho(), &coherence(), &f, &p).unwrap();
        assert!(out.epsilon.is_none());
        assert!(out.entries[0].inapplicable.is_some());
    }

    #[test]
    fn pure_input_is_rejected() {
        let (f, p) = boundary_pair(&coherence()).unwrap();
        let pure = plus_state().density();
        assert!(matches!(
            find_defeating_epsilon(&[Monotone::CR], &pure, &coherence(), &f, &p),
            Err(Error::Precondition(_))
        ));
        let psi = construct_psi_epsilon(&f, &p, 0.2).unwrap();
        assert!(verify_blocked(&pure, &psi, &coherence(), &OracleBudget::default(), 0).is_err());
    }

    #[test]
    fn blocked_conversion_is_refuted_three_ways() {
        let (f, p) = boundary_pair(&coherence()).unwrap();
        let out = find_defeating_epsilon(&[Monotone::CR], &rho(), &coherence(), &f, &p).unwrap();
        let report = verify_blocked(&rho(), &out.psi.unwrap(), &coherence(), &OracleBudget::default(), 0).unwrap();
        assert_eq!(report.decider.unwrap().outcome, Outcome::NotConvertible);
        assert!(report.oracle_blocked, "{}", report.oracle_residual);
        assert!(report.oracle_residual >= report.analytic_lower_bound.unwrap() - 1e-9);
    }

    #[test]
    fn ball_is_totally_ordered_and_coherence_is_not() {
        let ball = check_total_order(&TheorySpec::totally_ordered_ball(0.3).unwrap(), 300, 1).unwrap();
        assert_eq!(ball.fraction, 1.0);
        let coh = check_total_order(&coherence(), 300, 1).unwrap();
        assert!(coh.fraction < 1.0);
        assert!(coh.incomparable.is_some());
    }

    #[test]
    fn contraction_examples() {
        let th = TheorySpec::totally_ordered_ball(0.2).unwrap();
        let sigma = crate::state::qubit(0.0, 0.8, 0.0).unwrap();
        let at = |e| sigma_epsilon_contraction(&sigma, &th, e).unwrap();
        assert_abs_diff_eq!(at(0.0).value, 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(at(1.0).value, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(at(0.5).value, 0.3, epsilon = 1e-12);
        assert!(at(0.5).holds);
    }

    #[test]
    fn pure_states_share_the_ball_distance() {
        let th = TheorySpec::totally_ordered_ball(0.4).unwrap();
        assert!(pure_state_spread(&th, 100, 2).unwrap() < 1e-10);
    }
}
