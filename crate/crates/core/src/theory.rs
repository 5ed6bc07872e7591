//! Resource theories: free-state membership, distance to the free set, and
//! the affine conditions their free operations impose on Choi matrices.
//!
//! Choi matrices use the convention `J = Σ_ij |i><j| ⊗ Λ(|i><j|)`, input
//! factor first, so entry `((i, a), (j, b))` sits at row `i·d_out + a`,
//! column `j·d_out + b` and equals `<a|Λ(|i><j|)|b>`.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, ComplexMatrix, ONE};
use crate::random;
use crate::state::{self, bloch_from_density, density_from_bloch, trace_distance, DensityMatrix};

/// Membership tolerance for free sets.
pub const FREE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum TheoryKind {
    /// Incoherent states are diagonal in the reference basis; free
    /// operations are dephasing-covariant (DIO).
    Coherence,
    /// Free states are real in the reference basis; free operations have a
    /// real Choi matrix.
    Imaginarity,
    /// Qubit with Hamiltonian `diag(0, ω)`; free operations are
    /// time-translation covariant.
    AsymmetryQubit { omega: f64 },
    /// Qubit with Gibbs populations `gibbs`; free operations are covariant
    /// and Gibbs preserving.
    ThermalQubit { gibbs: [f64; 2] },
    /// Free states form the Bloch ball of radius `t`; free operations are
    /// unital channels plus replacement by a free state.
    TotallyOrderedBall { t: f64 },
    /// Only the maximally mixed state is free; free operations are unital.
    PurityUnital,
    /// Bipartite `d_A x d_B` system; free states are PPT, free operations
    /// have a PPT Choi matrix across the `AA' | BB'` cut.
    Ppt { dims: (usize, usize) },
}

/// Serialises as `{"kind": ..., "params": {...}}`; see [`crate::io::TheoryDocument`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "crate::io::TheoryDocument", try_from = "crate::io::TheoryDocument")]
pub struct TheorySpec {
    kind: TheoryKind,
    dim: usize,
}

/// Distance to the free set. `approximate` marks an upper bound from the
/// sampling fallback rather than an exact closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeDistance {
    pub value: f64,
    pub approximate: bool,
}

impl TheorySpec {
    pub fn coherence(dim: usize) -> Result<Self> {
        Self::checked(TheoryKind::Coherence, dim)
    }

    pub fn imaginarity(dim: usize) -> Result<Self> {
        Self::checked(TheoryKind::Imaginarity, dim)
    }

    pub fn asymmetry_qubit(omega: f64) -> Result<Self> {
        if !omega.is_finite() || omega == 0.0 {
            return Err(Error::Precondition(format!(
                "asymmetry needs a non-degenerate Hamiltonian, got gap {omega}"
            )));
        }
        Ok(Self {
            kind: TheoryKind::AsymmetryQubit { omega },
            dim: 2,
        })
    }

    pub fn thermal_qubit(gibbs: [f64; 2]) -> Result<Self> {
        let [g0, g1] = gibbs;
        if !(g0 > FREE_TOL && g1 > FREE_TOL) || ((g0 + g1) - 1.0).abs() > state::STATE_TOL {
            return Err(Error::Precondition(format!(
                "Gibbs populations must be positive and sum to one, got {gibbs:?}"
            )));
        }
        Ok(Self {
            kind: TheoryKind::ThermalQubit { gibbs },
            dim: 2,
        })
    }

    /// Gibbs state `e^{-βH}/Z` for `H = diag(0, ω)`.
    pub fn thermal_qubit_from_temperature(beta: f64, omega: f64) -> Result<Self> {
        let w = (-beta * omega).exp();
        Self::thermal_qubit([1.0 / (1.0 + w), w / (1.0 + w)])
    }

    pub fn totally_ordered_ball(t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Precondition(format!("ball radius t = {t} outside [0, 1]")));
        }
        Ok(Self {
            kind: TheoryKind::TotallyOrderedBall { t },
            dim: 2,
        })
    }

    pub fn purity_unital(dim: usize) -> Result<Self> {
        Self::checked(TheoryKind::PurityUnital, dim)
    }

    pub fn ppt(dim_a: usize, dim_b: usize) -> Result<Self> {
        if dim_a < 2 || dim_b < 2 {
            return Err(Error::Precondition(format!(
                "PPT theory needs two non-trivial parties, got {dim_a}x{dim_b}"
            )));
        }
        Ok(Self {
            kind: TheoryKind::Ppt { dims: (dim_a, dim_b) },
            dim: dim_a * dim_b,
        })
    }

    fn checked(kind: TheoryKind, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Precondition(format!("dimension {dim} is trivial")));
        }
        Ok(Self { kind, dim })
    }

    pub fn kind(&self) -> &TheoryKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            TheoryKind::Coherence => "Coherence",
            TheoryKind::Imaginarity => "Imaginarity",
            TheoryKind::AsymmetryQubit { .. } => "AsymmetryQubit",
            TheoryKind::ThermalQubit { .. } => "ThermalQubit",
            TheoryKind::TotallyOrderedBall { .. } => "TotallyOrderedBall",
            TheoryKind::PurityUnital => "PurityUnital",
            TheoryKind::Ppt { .. } => "PPT",
        }
    }

    pub fn gibbs_state(&self) -> Option<DensityMatrix> {
        match self.kind {
            TheoryKind::ThermalQubit { gibbs } => DensityMatrix::diagonal(&gibbs).ok(),
            _ => None,
        }
    }

    /// Whether a closed-form qubit decider exists for this theory.
    pub fn has_exact_decider(&self) -> bool {
        self.dim == 2 && !matches!(self.kind, TheoryKind::Ppt { .. })
    }

    /// Tensor factors used when interpreting states of this theory.
    pub fn state_factors(&self) -> Vec<usize> {
        match self.kind {
            TheoryKind::Ppt { dims: (a, b) } => vec![a, b],
            _ => vec![self.dim],
        }
    }

    fn check_dim(&self, rho: &DensityMatrix) -> Result<()> {
        if rho.dim() != self.dim {
            return Err(Error::Dimension(format!(
                "{} theory on dimension {}, state has dimension {}",
                self.name(),
                self.dim,
                rho.dim()
            )));
        }
        Ok(())
    }

    pub fn is_free(&self, rho: &DensityMatrix) -> Result<bool> {
        self.check_dim(rho)?;
        let d = self.dim;
        Ok(match self.kind {
            TheoryKind::Coherence | TheoryKind::AsymmetryQubit { .. } => (0..d)
                .all(|i| (0..d).all(|j| i == j || rho.entry(i, j).norm() <= FREE_TOL)),
            TheoryKind::Imaginarity => rho.matrix().iter().all(|z| z.im.abs() <= FREE_TOL),
            TheoryKind::ThermalQubit { .. } => {
                let gamma = self.gibbs_state().expect("thermal theory has a Gibbs state");
                trace_distance(rho, &gamma)? <= FREE_TOL
            }
            TheoryKind::TotallyOrderedBall { t } => bloch_from_density(rho)?.norm() <= t + FREE_TOL,
            TheoryKind::PurityUnital => {
                trace_distance(rho, &DensityMatrix::maximally_mixed(d))? <= FREE_TOL
            }
            TheoryKind::Ppt { dims: (a, b) } => {
                let pt = linalg::partial_transpose(rho.matrix(), &[a, b], &[false, true])?;
                linalg::min_eigenvalue(&pt) >= -FREE_TOL
            }
        })
    }

    /// Closest free state in trace norm, where a closed form exists.
    pub fn nearest_free_state(&self, rho: &DensityMatrix) -> Result<Option<DensityMatrix>> {
        self.check_dim(rho)?;
        Ok(match self.kind {
            TheoryKind::Coherence | TheoryKind::AsymmetryQubit { .. } if self.dim == 2 => {
                Some(state::dephase_reference(rho))
            }
            TheoryKind::Imaginarity => Some(rho.real_part()),
            TheoryKind::ThermalQubit { .. } => self.gibbs_state(),
            TheoryKind::PurityUnital => Some(DensityMatrix::maximally_mixed(self.dim)),
            TheoryKind::TotallyOrderedBall { t } => {
                let r = bloch_from_density(rho)?;
                let n = r.norm();
                if n <= t {
                    Some(rho.clone())
                } else {
                    Some(density_from_bloch(&r.scaled(t / n))?)
                }
            }
            _ => None,
        })
    }

    /// `min_{μ free} ||ρ - μ||_1`.
    pub fn nearest_free_distance(&self, rho: &DensityMatrix) -> Result<FreeDistance> {
        self.check_dim(rho)?;
        let exact = |value: f64| FreeDistance {
            value,
            approximate: false,
        };
        Ok(match self.kind {
            TheoryKind::TotallyOrderedBall { t } => {
                exact((bloch_from_density(rho)?.norm() - t).max(0.0))
            }
            TheoryKind::Coherence | TheoryKind::AsymmetryQubit { .. } if self.dim == 2 => {
                exact(2.0 * rho.entry(0, 1).norm())
            }
            TheoryKind::Coherence => coherence_distance_search(rho),
            TheoryKind::Ppt { .. } => self.ppt_distance_search(rho)?,
            _ => {
                let mu = self
                    .nearest_free_state(rho)?
                    .expect("closed-form nearest free state");
                exact(trace_distance(rho, &mu)?)
            }
        })
    }

    fn ppt_distance_search(&self, rho: &DensityMatrix) -> Result<FreeDistance> {
        if self.is_free(rho)? {
            return Ok(FreeDistance {
                value: 0.0,
                approximate: false,
            });
        }
        // mixing towards I/d eventually enters the PPT set; bisect the weight
        let mixed = DensityMatrix::maximally_mixed(self.dim);
        let gap = trace_distance(rho, &mixed)?;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            let trial = DensityMatrix::mix(mid, &mixed, rho)?;
            if self.is_free(&trial)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(FreeDistance {
            value: hi * gap,
            approximate: true,
        })
    }

    /// A full-rank free state whose replacement channel lies in the relative
    /// interior of the free-operation Choi set.
    pub(crate) fn interior_output(&self, out_dim: usize) -> DensityMatrix {
        match self.kind {
            TheoryKind::ThermalQubit { .. } => self.gibbs_state().expect("Gibbs state"),
            _ => DensityMatrix::maximally_mixed(out_dim),
        }
    }

    /// Affine description of the free operations `C^{in} -> C^{out}` on Choi
    /// matrices (positivity is left to the caller).
    pub fn choi_constraints(&self, in_dim: usize, out_dim: usize) -> Result<ConstraintSet> {
        let flexible = matches!(self.kind, TheoryKind::Coherence | TheoryKind::Imaginarity);
        if !flexible && (in_dim != self.dim || out_dim != self.dim) {
            return Err(Error::Unsupported(format!(
                "{} operations are defined on dimension {} only, asked for {in_dim} -> {out_dim}",
                self.name(),
                self.dim
            )));
        }
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Unsupported("empty system".into()));
        }
        let mut set = ConstraintSet::new(in_dim, out_dim);
        set.add_trace_preserving();
        match self.kind {
            TheoryKind::Coherence => set.add_dephasing_covariant(),
            TheoryKind::Imaginarity => set.add_real(),
            TheoryKind::AsymmetryQubit { .. } => set.add_time_covariant(),
            TheoryKind::ThermalQubit { gibbs } => {
                set.add_time_covariant();
                set.add_gibbs_preserving(&gibbs);
            }
            TheoryKind::TotallyOrderedBall { .. } | TheoryKind::PurityUnital => {
                let uniform = vec![1.0 / in_dim as f64; in_dim];
                set.add_fixed_point(ConstraintKind::Unital, &uniform);
            }
            TheoryKind::Ppt { dims } => set.ppt = Some(PptCut { dims }),
        }
        Ok(set)
    }

    /// Random free state of the theory (used by sampling tests and sweeps).
    pub fn random_free_state(&self, rng: &mut impl Rng) -> DensityMatrix {
        let d = self.dim;
        match self.kind {
            TheoryKind::Coherence | TheoryKind::AsymmetryQubit { .. } => {
                state::dephase_reference(&random::density(d, d, rng))
            }
            TheoryKind::Imaginarity => random::density(d, d, rng).real_part(),
            TheoryKind::ThermalQubit { .. } => self.gibbs_state().expect("Gibbs state"),
            TheoryKind::PurityUnital => DensityMatrix::maximally_mixed(d),
            TheoryKind::TotallyOrderedBall { t } => {
                let b = random::bloch_in_ball(rng).scaled(t);
                density_from_bloch(&b).expect("inside the ball")
            }
            TheoryKind::Ppt { dims: (a, b) } => {
                let x = random::density(a, a, rng);
                let y = random::density(b, b, rng);
                state::tensor(&x, &y)
            }
        }
    }
}

/// Best-of-N projected random search over diagonal states, seeded from the
/// dephased state. Upper bound only.
fn coherence_distance_search(rho: &DensityMatrix) -> FreeDistance {
    let d = rho.dim();
    let mut best_p: Vec<f64> = (0..d).map(|i| rho.entry(i, i).re.max(0.0)).collect();
    let eval = |p: &[f64]| {
        let mut m = rho.matrix().clone();
        for i in 0..d {
            m[(i, i)] -= c(p[i], 0.0);
        }
        linalg::trace_norm_hermitian(&m)
    };
    let mut best = eval(&best_p);
    let mut rng = random::rng(0);
    let mut scale = 0.1;
    for round in 0..2000 {
        let trial: Vec<f64> = best_p
            .iter()
            .map(|&p| p + scale * (rng.random::<f64>() - 0.5))
            .collect();
        let trial = project_simplex(&trial);
        let v = eval(&trial);
        if v < best {
            best = v;
            best_p = trial;
        }
        if round % 200 == 199 {
            scale *= 0.5;
        }
    }
    FreeDistance {
        value: best,
        approximate: true,
    }
}

/// Euclidean projection onto the probability simplex.
pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Which free-operation property a condition encodes; used to label
/// residual reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    TracePreserving,
    DephasingCovariant,
    Real,
    TimeCovariant,
    Unital,
    GibbsPreserving,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Re,
    Im,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    /// `Re J[row, col] = 0` or `Im J[row, col] = 0`, with `row <= col`.
    Entry { row: usize, col: usize, part: Part },
    /// `Re Σ coeff · J[row, col] = target`.
    Linear {
        terms: Vec<(usize, usize, Complex64)>,
        target: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineCondition {
    pub kind: ConstraintKind,
    pub condition: Condition,
}

/// Partial transposition on the `B` input and `B'` output factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PptCut {
    pub dims: (usize, usize),
}

impl PptCut {
    /// Choi factors `[A, B, A', B']` and the transpose mask.
    pub fn choi_layout(&self) -> ([usize; 4], [bool; 4]) {
        let (a, b) = self.dims;
        ([a, b, a, b], [false, true, false, true])
    }

    pub fn apply(&self, j: &ComplexMatrix) -> ComplexMatrix {
        let (dims, mask) = self.choi_layout();
        linalg::partial_transpose(j, &dims, &mask).expect("Choi layout matches")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub in_dim: usize,
    pub out_dim: usize,
    pub conditions: Vec<AffineCondition>,
    pub ppt: Option<PptCut>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionResidual {
    pub kind: ConstraintKind,
    pub residual: f64,
}

impl ConstraintSet {
    pub fn new(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            conditions: Vec::new(),
            ppt: None,
        }
    }

    pub fn choi_dim(&self) -> usize {
        self.in_dim * self.out_dim
    }

    #[inline]
    pub fn index(&self, input: usize, output: usize) -> usize {
        input * self.out_dim + output
    }

    fn push_linear(&mut self, kind: ConstraintKind, terms: Vec<(usize, usize, Complex64)>, target: f64) {
        self.conditions.push(AffineCondition {
            kind,
            condition: Condition::Linear { terms, target },
        });
    }

    fn push_zero(&mut self, kind: ConstraintKind, row: usize, col: usize, part: Part) {
        let (row, col) = if row <= col { (row, col) } else { (col, row) };
        self.conditions.push(AffineCondition {
            kind,
            condition: Condition::Entry { row, col, part },
        });
    }

    /// `Tr_out J = I_in`.
    fn add_trace_preserving(&mut self) {
        let (din, dout) = (self.in_dim, self.out_dim);
        for i in 0..din {
            for j in i..din {
                let re: Vec<_> = (0..dout).map(|a| (self.index(i, a), self.index(j, a), ONE)).collect();
                self.push_linear(ConstraintKind::TracePreserving, re, if i == j { 1.0 } else { 0.0 });
                if i != j {
                    let im = (0..dout)
                        .map(|a| (self.index(i, a), self.index(j, a), c(0.0, -1.0)))
                        .collect();
                    self.push_linear(ConstraintKind::TracePreserving, im, 0.0);
                }
            }
        }
    }

    fn zero_where(&mut self, kind: ConstraintKind, keep: impl Fn(usize, usize, usize, usize) -> bool) {
        let (din, dout) = (self.in_dim, self.out_dim);
        for i in 0..din {
            for a in 0..dout {
                let r = self.index(i, a);
                for j in 0..din {
                    for b in 0..dout {
                        let col = self.index(j, b);
                        if col <= r || keep(i, a, j, b) {
                            continue;
                        }
                        self.push_zero(kind, r, col, Part::Re);
                        self.push_zero(kind, r, col, Part::Im);
                    }
                }
            }
        }
    }

    /// `Δ∘Λ = Λ∘Δ`: `Λ(|i><i|)` diagonal and `Λ(|i><j|)` zero-diagonal.
    fn add_dephasing_covariant(&mut self) {
        self.zero_where(ConstraintKind::DephasingCovariant, |i, a, j, b| (i == j) == (a == b));
    }

    fn add_real(&mut self) {
        let n = self.choi_dim();
        for r in 0..n {
            for col in r + 1..n {
                self.push_zero(ConstraintKind::Real, r, col, Part::Im);
            }
        }
    }

    /// Covariance under `e^{-iHt}` for `H = diag(0, ω)`: entry
    /// `((i,a),(j,b))` survives only if `E_a - E_b = E_i - E_j`.
    fn add_time_covariant(&mut self) {
        self.zero_where(ConstraintKind::TimeCovariant, |i, a, j, b| {
            a as isize - b as isize == i as isize - j as isize
        });
    }

    /// `Λ(diag(p)) = diag(p)` for the given populations.
    fn add_fixed_point(&mut self, kind: ConstraintKind, p: &[f64]) {
        let (din, dout) = (self.in_dim, self.out_dim);
        for a in 0..dout {
            for b in a..dout {
                let re: Vec<_> = (0..din)
                    .map(|i| (self.index(i, a), self.index(i, b), c(p[i], 0.0)))
                    .collect();
                self.push_linear(kind, re, if a == b { p[a] } else { 0.0 });
                if a != b {
                    let im = (0..din)
                        .map(|i| (self.index(i, a), self.index(i, b), c(0.0, -p[i])))
                        .collect();
                    self.push_linear(kind, im, 0.0);
                }
            }
        }
    }

    fn add_gibbs_preserving(&mut self, gibbs: &[f64; 2]) {
        self.add_fixed_point(ConstraintKind::GibbsPreserving, gibbs);
    }

    pub fn residual(condition: &Condition, j: &ComplexMatrix) -> f64 {
        match condition {
            Condition::Entry { row, col, part } => {
                let z = j[(*row, *col)];
                match part {
                    Part::Re => z.re.abs(),
                    Part::Im => z.im.abs(),
                }
            }
            Condition::Linear { terms, target } => {
                let v: f64 = terms.iter().map(|&(r, col, k)| (k * j[(r, col)]).re).sum();
                (v - target).abs()
            }
        }
    }

    /// Largest residual per constraint kind, in first-appearance order.
    pub fn residuals(&self, j: &ComplexMatrix) -> Vec<ConditionResidual> {
        let mut out: Vec<ConditionResidual> = Vec::new();
        for cond in &self.conditions {
            let r = Self::residual(&cond.condition, j);
            match out.iter_mut().find(|x| x.kind == cond.kind) {
                Some(slot) => slot.residual = slot.residual.max(r),
                None => out.push(ConditionResidual {
                    kind: cond.kind,
                    residual: r,
                }),
            }
        }
        out
    }

    pub fn has_kind(&self, kind: ConstraintKind) -> bool {
        self.conditions.iter().any(|c| c.kind == kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{qubit, tensor};
    use approx::assert_abs_diff_eq;

    fn identity_choi(d: usize) -> ComplexMatrix {
        let mut j = ComplexMatrix::zeros(d * d, d * d);
        for i in 0..d {
            for k in 0..d {
                j[(i * d + i, k * d + k)] = ONE;
            }
        }
        j
    }

    fn replacement_choi(din: usize, mu: &DensityMatrix) -> ComplexMatrix {
        linalg::kron(&linalg::identity(din), mu.matrix())
    }

    fn max_residual(set: &ConstraintSet, j: &ComplexMatrix) -> f64 {
        set.residuals(j).iter().map(|r| r.residual).fold(0.0, f64::max)
    }

    fn all_theories() -> Vec<TheorySpec> {
        vec![
            TheorySpec::coherence(2).unwrap(),
            TheorySpec::coherence(3).unwrap(),
            TheorySpec::imaginarity(2).unwrap(),
            TheorySpec::asymmetry_qubit(1.0).unwrap(),
            TheorySpec::thermal_qubit([0.7, 0.3]).unwrap(),
            TheorySpec::totally_ordered_ball(0.3).unwrap(),
            TheorySpec::purity_unital(3).unwrap(),
            TheorySpec::ppt(2, 2).unwrap(),
        ]
    }

    #[test]
    fn membership_examples() {
        let coh = TheorySpec::coherence(2).unwrap();
        assert!(coh.is_free(&DensityMatrix::diagonal(&[0.3, 0.7]).unwrap()).unwrap());
        let ball = TheorySpec::totally_ordered_ball(0.3).unwrap();
        assert!(ball.is_free(&qubit(0.2, 0.0, 0.0).unwrap()).unwrap());
        assert!(!ball.is_free(&qubit(0.0, 0.31, 0.0).unwrap()).unwrap());
        let im = TheorySpec::imaginarity(2).unwrap();
        assert!(!im.is_free(&qubit(0.0, 0.1, 0.0).unwrap()).unwrap());
        assert!(im.is_free(&qubit(0.5, 0.0, 0.3).unwrap()).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let coh = TheorySpec::coherence(3).unwrap();
        assert!(matches!(
            coh.is_free(&DensityMatrix::maximally_mixed(2)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(TheorySpec::totally_ordered_ball(1.2).is_err());
        assert!(TheorySpec::thermal_qubit([1.0, 0.0]).is_err());
        assert!(TheorySpec::asymmetry_qubit(0.0).is_err());
    }

    #[test]
    fn ball_distance_closed_form() {
        let ball = TheorySpec::totally_ordered_ball(0.3).unwrap();
        let d = ball.nearest_free_distance(&qubit(0.0, 0.8, 0.0).unwrap()).unwrap();
        assert_abs_diff_eq!(d.value, 0.5, epsilon = 1e-14);
        assert!(!d.approximate);
    }

    #[test]
    fn free_states_are_at_distance_zero() {
        let mut rng = random::rng(3);
        for th in all_theories() {
            for _ in 0..5 {
                let mu = th.random_free_state(&mut rng);
                assert!(th.is_free(&mu).unwrap(), "{}", th.name());
                let d = th.nearest_free_distance(&mu).unwrap();
                assert!(d.value < 1e-8, "{} gave {}", th.name(), d.value);
            }
        }
    }

    #[test]
    fn coherence_qubit_nearest_state_beats_grid() {
        // ρ01 = 0.25: closed form says 0.5, attained by Δ[ρ]
        let rho = qubit(0.5, 0.0, 0.2).unwrap();
        let coh = TheorySpec::coherence(2).unwrap();
        let closed = coh.nearest_free_distance(&rho).unwrap().value;
        assert_abs_diff_eq!(closed, 0.5, epsilon = 1e-14);
        let mut grid_best = f64::INFINITY;
        for k in 0..=2000 {
            let p = k as f64 / 2000.0;
            let mu = DensityMatrix::diagonal(&[p, 1.0 - p]).unwrap();
            grid_best = grid_best.min(trace_distance(&rho, &mu).unwrap());
        }
        assert!(closed <= grid_best + 1e-12);
        assert!(grid_best - closed < 1e-6);
    }

    #[test]
    fn imaginarity_distance_is_ry() {
        let im = TheorySpec::imaginarity(2).unwrap();
        let d = im.nearest_free_distance(&qubit(0.3, -0.4, 0.5).unwrap()).unwrap();
        assert_abs_diff_eq!(d.value, 0.4, epsilon = 1e-14);
    }

    #[test]
    fn higher_dim_coherence_distance_is_flagged_approximate() {
        let coh = TheorySpec::coherence(3).unwrap();
        let rho = random::density(3, 3, &mut random::rng(1));
        let d = coh.nearest_free_distance(&rho).unwrap();
        assert!(d.approximate);
        let dephased = trace_distance(&rho, &state::dephase_reference(&rho)).unwrap();
        assert!(d.value <= dephased + 1e-12);
    }

    #[test]
    fn free_set_closed_under_mixing() {
        let mut rng = random::rng(11);
        for th in all_theories() {
            for _ in 0..10 {
                let a = th.random_free_state(&mut rng);
                let b = th.random_free_state(&mut rng);
                let p: f64 = rng.random();
                let m = DensityMatrix::mix(p, &a, &b).unwrap();
                assert!(th.is_free(&m).unwrap(), "{}", th.name());
            }
        }
    }

    #[test]
    fn unital_constraint_contains_fixed_point_of_identity() {
        let th = TheorySpec::purity_unital(2).unwrap();
        let set = th.choi_constraints(2, 2).unwrap();
        assert!(set.has_kind(ConstraintKind::Unital));
        // a non-unital channel (amplitude damping to |0>) must violate it
        let zero = DensityMatrix::basis_state(2, 0).unwrap();
        let j = replacement_choi(2, &zero);
        let res = set.residuals(&j);
        let unital = res.iter().find(|r| r.kind == ConstraintKind::Unital).unwrap();
        assert!(unital.residual > 0.4);
    }

    #[test]
    fn identity_channel_is_free_everywhere() {
        for th in all_theories() {
            let set = th.choi_constraints(th.dim(), th.dim()).unwrap();
            let j = identity_choi(th.dim());
            assert!(max_residual(&set, &j) < 1e-12, "{}", th.name());
            if let Some(cut) = set.ppt {
                assert!(linalg::min_eigenvalue(&cut.apply(&j)) > -1e-12);
            }
        }
    }

    #[test]
    fn replacement_by_free_state_is_free() {
        let mut rng = random::rng(5);
        for th in all_theories() {
            // the ball theory's replacement channels are free by fiat, not
            // unital; only t = 0 fits the unital constraint set
            if matches!(th.kind(), TheoryKind::TotallyOrderedBall { .. }) {
                continue;
            }
            let set = th.choi_constraints(th.dim(), th.dim()).unwrap();
            for _ in 0..3 {
                let mu = th.random_free_state(&mut rng);
                let j = replacement_choi(th.dim(), &mu);
                assert!(max_residual(&set, &j) < 1e-12, "{}", th.name());
                if let Some(cut) = set.ppt {
                    assert!(linalg::min_eigenvalue(&cut.apply(&j)) > -1e-12);
                }
            }
        }
    }

    #[test]
    fn gibbs_replacement_has_tiny_residuals() {
        let th = TheorySpec::thermal_qubit([0.8, 0.2]).unwrap();
        let set = th.choi_constraints(2, 2).unwrap();
        let j = replacement_choi(2, &th.gibbs_state().unwrap());
        assert!(max_residual(&set, &j) < 1e-12);
    }

    #[test]
    fn dephasing_channel_is_dio() {
        let set = TheorySpec::coherence(2).unwrap().choi_constraints(2, 2).unwrap();
        let mut j = ComplexMatrix::zeros(4, 4);
        j[(0, 0)] = ONE;
        j[(3, 3)] = ONE;
        assert!(max_residual(&set, &j) < 1e-12);
        // a Hadamard channel is not
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let had = ComplexMatrix::from_row_slice(2, 2, &[c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)]);
        let mut v = ComplexMatrix::zeros(4, 1);
        for i in 0..2 {
            for a in 0..2 {
                v[(i * 2 + a, 0)] = had[(a, i)];
            }
        }
        let jh = &v * v.adjoint();
        assert!(max_residual(&set, &jh) > 0.1);
    }

    #[test]
    fn constraint_dims_are_checked() {
        let th = TheorySpec::asymmetry_qubit(1.0).unwrap();
        assert!(matches!(th.choi_constraints(3, 3), Err(Error::Unsupported(_))));
        assert!(TheorySpec::coherence(2).unwrap().choi_constraints(4, 2).is_ok());
    }

    #[test]
    fn ppt_membership() {
        let th = TheorySpec::ppt(2, 2).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let bell = crate::state::PureState::from_slice(&[c(h, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(h, 0.0)])
            .unwrap()
            .density();
        assert!(!th.is_free(&bell).unwrap());
        let prod = tensor(&qubit(0.1, 0.2, 0.3).unwrap(), &qubit(0.0, 0.0, 1.0).unwrap());
        assert!(th.is_free(&prod).unwrap());
        let d = th.nearest_free_distance(&bell).unwrap();
        assert!(d.approximate);
        // the Werner-type threshold: (1-p)Φ + p I/4 is PPT iff p >= 2/3
        assert_abs_diff_eq!(d.value, (2.0 / 3.0) * 1.5, epsilon = 1e-8);
    }
}
