//! Resource monotones: closed-form qubit quantities, one-shot divergences
//! and the oracle-backed family `R_ν(ρ) = inf_Λ ||Λ(ν) - ρ||_1`.

use std::cmp::Ordering;
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg;
use crate::oracle::{self, OracleBudget};
use crate::state::{self, bloch_from_density, DensityMatrix};
use crate::theory::{TheoryKind, TheorySpec};

/// Eigenvalues at or below this count as outside the support.
pub const SUPPORT_TOL: f64 = 1e-10;

/// Off-diagonal magnitudes below this are treated as exactly zero when a
/// ratio would otherwise be `0/0`.
const COHERENCE_FLOOR: f64 = 1e-15;

/// A non-negative real or `+∞`. Serialises as a number or the string
/// `"+inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub fn is_finite(&self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }

    /// `self >= other - tol`, with `∞ >= ∞`.
    pub fn at_least(&self, other: &Extended, tol: f64) -> bool {
        match (self, other) {
            (Extended::Infinite, _) => true,
            (Extended::Finite(_), Extended::Infinite) => false,
            (Extended::Finite(a), Extended::Finite(b)) => *a >= b - tol,
        }
    }

    /// Total order; `∞` is the maximum and compares equal to itself.
    pub fn total_cmp(&self, other: &Extended) -> Ordering {
        match (self, other) {
            (Extended::Infinite, Extended::Infinite) => Ordering::Equal,
            (Extended::Infinite, _) => Ordering::Greater,
            (_, Extended::Infinite) => Ordering::Less,
            (Extended::Finite(a), Extended::Finite(b)) => a.total_cmp(b),
        }
    }
}

impl From<f64> for Extended {
    fn from(v: f64) -> Self {
        Extended::Finite(v)
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v}"),
            Extended::Infinite => f.write_str("+inf"),
        }
    }
}

impl Serialize for Extended {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Extended::Finite(v) => s.serialize_f64(*v),
            Extended::Infinite => s.serialize_str("+inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Extended {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Extended;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or \"+inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Extended, E> {
                Ok(Extended::Finite(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Extended, E> {
                Ok(Extended::Finite(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Extended, E> {
                Ok(Extended::Finite(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Extended, E> {
                if v == "+inf" {
                    Ok(Extended::Infinite)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

fn require_qubit(rho: &DensityMatrix, what: &str) -> Result<()> {
    if rho.is_qubit() {
        Ok(())
    } else {
        Err(Error::Unsupported(format!(
            "{what} is only defined for qubits, got dimension {}",
            rho.dim()
        )))
    }
}

/// `|ρ01| / sqrt(p)`, zero when the coherence vanishes, capped at one.
fn coherence_ratio(rho01: f64, p: f64) -> f64 {
    if rho01 <= COHERENCE_FLOOR || p <= 0.0 {
        0.0
    } else {
        (rho01 / p.sqrt()).min(1.0)
    }
}

/// Robustness of coherence of a qubit, `2|ρ01|`.
pub fn c_r(rho: &DensityMatrix) -> Result<f64> {
    require_qubit(rho, "C_R")?;
    Ok(2.0 * rho.entry(0, 1).norm())
}

/// Dephasing robustness of a qubit, `|ρ01| / sqrt(ρ00 ρ11)`; one on every
/// coherent pure state.
pub fn c_delta_r(rho: &DensityMatrix) -> Result<f64> {
    require_qubit(rho, "C_Δ,R")?;
    let p = rho.entry(0, 0).re * rho.entry(1, 1).re;
    Ok(coherence_ratio(rho.entry(0, 1).norm(), p))
}

/// `I1 = r_y²`.
pub fn i1(rho: &DensityMatrix) -> Result<f64> {
    require_qubit(rho, "I1")?;
    let r = bloch_from_density(rho)?;
    Ok(r.y * r.y)
}

/// `I2 = r_y² / (1 - r_x² - r_z²)`; zero on real pure states.
pub fn i2(rho: &DensityMatrix) -> Result<f64> {
    require_qubit(rho, "I2")?;
    let r = bloch_from_density(rho)?;
    let ry2 = r.y * r.y;
    let denom = 1.0 - r.x * r.x - r.z * r.z;
    if ry2 <= COHERENCE_FLOOR || denom <= 0.0 {
        return Ok(0.0);
    }
    Ok((ry2 / denom).min(1.0))
}

/// `A1 = |ρ01| / sqrt(ρ00)` in the energy eigenbasis.
pub fn a1(rho: &DensityMatrix) -> Result<f64> {
    require_qubit(rho, "A1")?;
    Ok(coherence_ratio(rho.entry(0, 1).norm(), rho.entry(0, 0).re))
}

/// `A2 = |ρ01| / sqrt(1 - ρ00)` in the energy eigenbasis.
pub fn a2(rho: &DensityMatrix) -> Result<f64> {
    require_qubit(rho, "A2")?;
    Ok(coherence_ratio(rho.entry(0, 1).norm(), 1.0 - rho.entry(0, 0).re))
}

fn check_same_dim(a: &DensityMatrix, b: &DensityMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!(
            "divergence between dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Max-relative entropy `log2 min{λ : ρ1 ≤ λ ρ2}`; `+∞` when the support
/// of `ρ1` leaves that of `ρ2`.
pub fn d_max(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<Extended> {
    check_same_dim(rho1, rho2)?;
    let (vals, vecs) = linalg::hermitian_eigen(rho2.matrix());
    let support: Vec<usize> = (0..vals.len()).filter(|&k| vals[k] > SUPPORT_TOL).collect();
    let kernel: Vec<usize> = (0..vals.len()).filter(|&k| vals[k] <= SUPPORT_TOL).collect();

    // Weight of ρ1 outside supp(ρ2).
    let leak: f64 = kernel
        .iter()
        .map(|&k| {
            let v = vecs.column(k);
            (v.adjoint() * rho1.matrix() * v)[(0, 0)].re
        })
        .sum();
    if leak > SUPPORT_TOL {
        return Ok(Extended::Infinite);
    }

    // ρ2^{-1/2} ρ1 ρ2^{-1/2} restricted to the support.
    let n = support.len();
    let mut s = linalg::ComplexMatrix::zeros(rho2.dim(), n);
    for (col, &k) in support.iter().enumerate() {
        let scale = 1.0 / vals[k].sqrt();
        s.set_column(col, &(vecs.column(k) * linalg::c(scale, 0.0)));
    }
    let m = s.adjoint() * rho1.matrix() * &s;
    let lambda = linalg::hermitian_eigenvalues(&linalg::hermitian_part(&m))
        .last()
        .copied()
        .unwrap_or(0.0);
    Ok(Extended::Finite(lambda.log2().max(0.0)))
}

/// Min-relative entropy `-log2 Tr(Π_ρ1 ρ2)` with `Π_ρ1` the support
/// projector of `ρ1`.
pub fn d_min(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<Extended> {
    check_same_dim(rho1, rho2)?;
    let (vals, vecs) = linalg::hermitian_eigen(rho1.matrix());
    let overlap: f64 = (0..vals.len())
        .filter(|&k| vals[k] > SUPPORT_TOL)
        .map(|k| {
            let v = vecs.column(k);
            (v.adjoint() * rho2.matrix() * v)[(0, 0)].re
        })
        .sum();
    if overlap <= SUPPORT_TOL {
        return Ok(Extended::Infinite);
    }
    Ok(Extended::Finite((-overlap.min(1.0).log2()).max(0.0)))
}

/// Relative entropy of coherence `S(Δ[ρ]) - S(ρ)` in the reference basis.
pub fn rel_entropy_coherence(rho: &DensityMatrix) -> f64 {
    let dephased = state::dephase_reference(rho);
    (state::von_neumann_entropy(&dephased) - state::von_neumann_entropy(rho)).max(0.0)
}

/// Relative entropy of coherence in an arbitrary orthonormal basis (columns
/// of `basis`).
pub fn rel_entropy_coherence_in(rho: &DensityMatrix, basis: &linalg::ComplexMatrix) -> Result<f64> {
    let dephased = state::dephase(rho, basis)?;
    Ok((state::von_neumann_entropy(&dephased) - state::von_neumann_entropy(rho)).max(0.0))
}

/// Estimate of `R_ν(ρ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RNu {
    pub value: f64,
    /// Whether the oracle met its tolerance; if not, `value` is the best
    /// residual seen and only an upper bound.
    pub converged: bool,
    pub tolerance: f64,
}

/// `R_ν(ρ) = inf_Λ ||Λ(ν) - ρ||_1` over the free operations of `th`.
pub fn r_nu(
    nu: &DensityMatrix,
    rho: &DensityMatrix,
    th: &TheorySpec,
    budget: &OracleBudget,
    seed: u64,
) -> Result<RNu> {
    let out = oracle::min_residual(nu, rho, th, budget, seed)?;
    Ok(RNu {
        value: out.residual,
        converged: out.converged,
        tolerance: budget.tol,
    })
}

/// The named monotones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotone {
    CR,
    CDeltaR,
    RelEnt,
    I1,
    I2,
    A1,
    A2,
    DMaxRhoGamma,
    DMaxGammaRho,
    DMinGammaRho,
    NearestFree,
}

impl Monotone {
    pub const ALL: [Monotone; 11] = [
        Monotone::CR,
        Monotone::CDeltaR,
        Monotone::RelEnt,
        Monotone::I1,
        Monotone::I2,
        Monotone::A1,
        Monotone::A2,
        Monotone::DMaxRhoGamma,
        Monotone::DMaxGammaRho,
        Monotone::DMinGammaRho,
        Monotone::NearestFree,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Monotone::CR => "c_r",
            Monotone::CDeltaR => "c_delta_r",
            Monotone::RelEnt => "rel_ent",
            Monotone::I1 => "i1",
            Monotone::I2 => "i2",
            Monotone::A1 => "a1",
            Monotone::A2 => "a2",
            Monotone::DMaxRhoGamma => "d_max_rho_gamma",
            Monotone::DMaxGammaRho => "d_max_gamma_rho",
            Monotone::DMinGammaRho => "d_min_gamma_rho",
            Monotone::NearestFree => "nearest_free",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::Precondition(format!("unknown monotone '{name}'")))
    }

    pub fn continuous(&self) -> bool {
        matches!(
            self,
            Monotone::CR
                | Monotone::RelEnt
                | Monotone::I1
                | Monotone::DMaxRhoGamma
                | Monotone::DMinGammaRho
                | Monotone::NearestFree
        )
    }

    /// Zero exactly on the free states of the associated theory.
    /// `D_min(γ||ρ)` vanishes identically for full-rank `γ`.
    pub fn faithful(&self) -> bool {
        !matches!(self, Monotone::DMinGammaRho)
    }

    /// Whether a strict increase of this monotone refutes a conversion in
    /// `th`. Only exact (non-sampled) values may refute.
    pub fn is_exact_for(&self, th: &TheorySpec) -> bool {
        match self {
            Monotone::NearestFree => !approximate_distance(th),
            _ => true,
        }
    }

    pub fn evaluate(&self, rho: &DensityMatrix, th: &TheorySpec) -> Result<Extended> {
        let gamma = || {
            th.gibbs_state().ok_or_else(|| {
                Error::Unsupported(format!("{} needs a Gibbs state", self.name()))
            })
        };
        Ok(match self {
            Monotone::CR => c_r(rho)?.into(),
            Monotone::CDeltaR => c_delta_r(rho)?.into(),
            Monotone::RelEnt => rel_entropy_coherence(rho).into(),
            Monotone::I1 => i1(rho)?.into(),
            Monotone::I2 => i2(rho)?.into(),
            Monotone::A1 => a1(rho)?.into(),
            Monotone::A2 => a2(rho)?.into(),
            Monotone::DMaxRhoGamma => d_max(rho, &gamma()?)?,
            Monotone::DMaxGammaRho => d_max(&gamma()?, rho)?,
            Monotone::DMinGammaRho => d_min(&gamma()?, rho)?,
            Monotone::NearestFree => th.nearest_free_distance(rho)?.value.into(),
        })
    }
}

fn approximate_distance(th: &TheorySpec) -> bool {
    match th.kind() {
        TheoryKind::Coherence => th.dim() > 2,
        TheoryKind::Ppt { .. } => true,
        _ => false,
    }
}

/// Monotones implemented for `th`, in reporting order.
pub fn monotones_for(th: &TheorySpec) -> Vec<Monotone> {
    let qubit = th.dim() == 2;
    let mut out = match th.kind() {
        TheoryKind::Coherence if qubit => vec![Monotone::CR, Monotone::CDeltaR, Monotone::RelEnt],
        TheoryKind::Coherence => vec![Monotone::RelEnt],
        TheoryKind::Imaginarity if qubit => vec![Monotone::I1, Monotone::I2],
        TheoryKind::AsymmetryQubit { .. } => vec![Monotone::A1, Monotone::A2],
        TheoryKind::ThermalQubit { .. } => vec![
            Monotone::DMaxRhoGamma,
            Monotone::DMaxGammaRho,
            Monotone::DMinGammaRho,
            Monotone::A1,
            Monotone::A2,
        ],
        _ => Vec::new(),
    };
    out.push(Monotone::NearestFree);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneFlags {
    pub continuous: bool,
    pub faithful: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneReport {
    pub name: &'static str,
    pub value: Extended,
    pub theory: TheorySpec,
    pub flags: MonotoneFlags,
    /// Set when `value` is a sampled upper bound.
    pub approximate: bool,
}

/// Every implemented monotone of `th` evaluated at `rho`.
pub fn evaluate_all(rho: &DensityMatrix, th: &TheorySpec) -> Result<Vec<MonotoneReport>> {
    monotones_for(th)
        .into_iter()
        .map(|m| {
            Ok(MonotoneReport {
                name: m.name(),
                value: m.evaluate(rho, th)?,
                theory: th.clone(),
                flags: MonotoneFlags {
                    continuous: m.continuous(),
                    faithful: m.faithful(),
                },
                approximate: !m.is_exact_for(th),
            })
        })
        .collect()
}
