//! Numerical search for free operations over Choi matrices.
//!
//! [`min_residual`] estimates `inf_Λ ||Λ(ρ) - σ||_1` over the free operations
//! of a theory. The search works on pairs `(J, Y)` of a Choi matrix and an
//! output-difference matrix and, for a trial radius `r`, runs Dykstra's
//! alternating projections over
//!
//! * the PSD cone for `J` (eigenvalue clipping),
//! * the PPT cone for `J` when the theory asks for it,
//! * the affine set `{theory conditions on J, Y = Λ_J(ρ) - σ}` (precomputed
//!   least-squares projector),
//! * the trace-norm ball `{||Y||_1 <= r}` (eigenvalue soft-thresholding).
//!
//! Bisection on `r` drives the radius down. Every candidate is made exactly
//! feasible before it is scored, by mixing with a strictly positive free
//! channel, so a reported residual is always attained by the reported
//! channel. A failed feasibility run never certifies infeasibility.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, c, ComplexMatrix, HermitianCoords, ONE, ZERO};
use crate::random::{self, SeededRng};
use crate::state::{bloch_from_density, DensityMatrix};
use crate::theory::{Condition, ConstraintKind, ConstraintSet, Part, PptCut, TheoryKind, TheorySpec};

/// Largest `in_dim · out_dim` the oracle accepts.
pub const MAX_CHOI_DIM: usize = 64;

/// Constraint residual below which a channel counts as free.
pub const FEASIBLE_TOL: f64 = 1e-7;

/// Choi matrix of a linear map `C^{in x in} -> C^{out x out}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiMatrix {
    matrix: ComplexMatrix,
    in_dim: usize,
    out_dim: usize,
}

impl ChoiMatrix {
    pub fn new(matrix: ComplexMatrix, in_dim: usize, out_dim: usize) -> Result<Self> {
        let n = in_dim * out_dim;
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::Dimension(format!(
                "Choi matrix for {in_dim} -> {out_dim} must be {n}x{n}, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self {
            matrix,
            in_dim,
            out_dim,
        })
    }

    pub fn identity(d: usize) -> Self {
        let mut j = ComplexMatrix::zeros(d * d, d * d);
        for i in 0..d {
            for k in 0..d {
                j[(i * d + i, k * d + k)] = ONE;
            }
        }
        Self {
            matrix: j,
            in_dim: d,
            out_dim: d,
        }
    }

    /// `ρ ↦ Tr(ρ) μ`.
    pub fn replacement(in_dim: usize, output: &DensityMatrix) -> Self {
        Self {
            matrix: linalg::kron(&linalg::identity(in_dim), output.matrix()),
            in_dim,
            out_dim: output.dim(),
        }
    }

    pub fn from_kraus(ops: &[ComplexMatrix]) -> Result<Self> {
        let first = ops
            .first()
            .ok_or_else(|| Error::Precondition("empty Kraus list".into()))?;
        let (dout, din) = (first.nrows(), first.ncols());
        let mut j = ComplexMatrix::zeros(din * dout, din * dout);
        for k in ops {
            if k.nrows() != dout || k.ncols() != din {
                return Err(Error::Dimension("Kraus operators differ in shape".into()));
            }
            let mut v = DVector::from_element(din * dout, ZERO);
            for i in 0..din {
                for a in 0..dout {
                    v[i * dout + a] = k[(a, i)];
                }
            }
            j += &v * v.adjoint();
        }
        Self::new(j, din, dout)
    }

    /// Choi matrix of an arbitrary linear map given as a closure.
    pub fn from_linear_map(
        in_dim: usize,
        out_dim: usize,
        mut map: impl FnMut(&ComplexMatrix) -> ComplexMatrix,
    ) -> Result<Self> {
        let n = in_dim * out_dim;
        let mut j = ComplexMatrix::zeros(n, n);
        for i in 0..in_dim {
            for k in 0..in_dim {
                let mut e = ComplexMatrix::zeros(in_dim, in_dim);
                e[(i, k)] = ONE;
                let out = map(&e);
                if out.nrows() != out_dim || out.ncols() != out_dim {
                    return Err(Error::Dimension(format!(
                        "map returned {}x{}, expected {out_dim}x{out_dim}",
                        out.nrows(),
                        out.ncols()
                    )));
                }
                j.view_mut((i * out_dim, k * out_dim), (out_dim, out_dim))
                    .copy_from(&out);
            }
        }
        Self::new(j, in_dim, out_dim)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Kraus operators from the eigen-decomposition of `J` (eigenvalues
    /// below `1e-14` dropped).
    pub fn kraus_operators(&self) -> Vec<ComplexMatrix> {
        let (values, vectors) = linalg::hermitian_eigen(&self.matrix);
        let (din, dout) = (self.in_dim, self.out_dim);
        values
            .iter()
            .enumerate()
            .filter(|(_, &l)| l > 1e-14)
            .map(|(k, &l)| {
                let s = l.sqrt();
                ComplexMatrix::from_fn(dout, din, |a, i| vectors[(i * dout + a, k)] * s)
            })
            .collect()
    }

    /// `Λ(X)` for any `in x in` matrix `X`.
    pub fn apply_matrix(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        let (din, dout) = (self.in_dim, self.out_dim);
        if x.nrows() != din || x.ncols() != din {
            return Err(Error::Dimension(format!(
                "channel input is {din}x{din}, got {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        let mut out = ComplexMatrix::zeros(dout, dout);
        for i in 0..din {
            for k in 0..din {
                let w = x[(i, k)];
                if w == ZERO {
                    continue;
                }
                let block = self.matrix.view((i * dout, k * dout), (dout, dout));
                out.zip_apply(&block, |o, b| *o += w * b);
            }
        }
        Ok(out)
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        let out = self.apply_matrix(rho.matrix())?;
        let factors = if out.nrows() == rho.dim() {
            rho.factors().to_vec()
        } else {
            vec![self.out_dim]
        };
        Ok(DensityMatrix::from_trusted(out, factors))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.matrix)
    }
}

/// `Λ_J(ρ)` as a fresh density matrix.
pub fn apply_choi(j: &ChoiMatrix, rho: &DensityMatrix) -> Result<DensityMatrix> {
    j.apply(rho)
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualEntry {
    pub constraint: String,
    pub residual: f64,
}

/// Per-constraint residuals of a candidate channel.
#[derive(Debug, Clone, Serialize)]
pub struct ChannelReport {
    pub residuals: Vec<ResidualEntry>,
    pub max_residual: f64,
}

impl ChannelReport {
    pub fn is_free(&self, tol: f64) -> bool {
        self.max_residual <= tol
    }
}

/// Residuals of `J` against the free-operation description of `th`:
/// positivity, every affine condition kind, and PPT when relevant.
///
/// For the totally ordered ball theory a replacement channel with a free
/// output is accepted as free in place of the unital conditions.
pub fn verify_channel(j: &ChoiMatrix, th: &TheorySpec) -> Result<ChannelReport> {
    let set = th.choi_constraints(j.in_dim, j.out_dim)?;
    let mut residuals = vec![ResidualEntry {
        constraint: "positivity".into(),
        residual: (-j.min_eigenvalue()).max(0.0),
    }];
    let affine = set.residuals(&j.matrix);
    let ball_replacement = match th.kind() {
        TheoryKind::TotallyOrderedBall { t } => replacement_output(j)
            .and_then(|mu| bloch_from_density(&mu).ok())
            .map(|b| (b.norm() - t).max(0.0)),
        _ => None,
    };
    for r in affine {
        let residual = match (r.kind, ball_replacement) {
            (ConstraintKind::Unital, Some(excess)) => excess.min(r.residual),
            _ => r.residual,
        };
        residuals.push(ResidualEntry {
            constraint: constraint_label(r.kind).into(),
            residual,
        });
    }
    if let Some(cut) = set.ppt {
        residuals.push(ResidualEntry {
            constraint: "ppt".into(),
            residual: (-linalg::min_eigenvalue(&cut.apply(&j.matrix))).max(0.0),
        });
    }
    let max_residual = residuals.iter().map(|r| r.residual).fold(0.0, f64::max);
    Ok(ChannelReport {
        residuals,
        max_residual,
    })
}

/// The output state if `J = I ⊗ μ` up to `1e-12`.
fn replacement_output(j: &ChoiMatrix) -> Option<DensityMatrix> {
    let (din, dout) = (j.in_dim, j.out_dim);
    let mu = j.matrix.view((0, 0), (dout, dout)).into_owned();
    let expected = linalg::kron(&linalg::identity(din), &mu);
    if (&expected - &j.matrix).iter().fold(0.0f64, |a, z| a.max(z.norm())) > 1e-12 {
        return None;
    }
    DensityMatrix::with_factors(mu, vec![dout]).ok()
}

pub fn constraint_label(kind: ConstraintKind) -> &'static str {
    match kind {
        ConstraintKind::TracePreserving => "trace_preserving",
        ConstraintKind::DephasingCovariant => "dephasing_covariant",
        ConstraintKind::Real => "real",
        ConstraintKind::TimeCovariant => "time_covariant",
        ConstraintKind::Unital => "unital",
        ConstraintKind::GibbsPreserving => "gibbs_preserving",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleBudget {
    /// Dykstra sweeps per feasibility test.
    pub max_iters: usize,
    pub restarts: usize,
    /// Target precision on the residual.
    pub tol: f64,
    /// Bisection levels on the radius.
    pub depth: usize,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self {
            max_iters: 3000,
            restarts: 8,
            tol: 1e-6,
            depth: 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    /// `||Λ(ρ) - σ||_1` attained by `choi`.
    pub residual: f64,
    pub choi: ChoiMatrix,
    pub iterations: usize,
    pub converged: bool,
    pub restarts_used: usize,
}

/// Minimises `||Λ(ρ) - σ||_1` over free operations of `th`.
pub fn min_residual(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    th: &TheorySpec,
    budget: &OracleBudget,
    seed: u64,
) -> Result<OracleResult> {
    min_residual_with_hints(rho, sigma, th, budget, seed, &[])
}

/// As [`min_residual`], also scoring caller-supplied candidate channels
/// (only those that pass [`verify_channel`]).
pub fn min_residual_with_hints(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    th: &TheorySpec,
    budget: &OracleBudget,
    seed: u64,
    hints: &[ChoiMatrix],
) -> Result<OracleResult> {
    let (din, dout) = (rho.dim(), sigma.dim());
    if din * dout > MAX_CHOI_DIM {
        return Err(Error::Unsupported(format!(
            "Choi dimension {din}x{dout} = {} exceeds {MAX_CHOI_DIM}",
            din * dout
        )));
    }
    if budget.restarts == 0 {
        return Err(Error::Precondition("at least one restart is required".into()));
    }
    let problem = Problem::new(th, rho, sigma)?;

    let mut seeds: Vec<(f64, ChoiMatrix)> = Vec::new();
    let mut consider = |j: ChoiMatrix| -> Result<()> {
        if j.in_dim == din && j.out_dim == dout && verify_channel(&j, th)?.is_free(1e-9) {
            let r = problem.score(&j.matrix);
            seeds.push((r, j));
        }
        Ok(())
    };
    if din == dout {
        consider(ChoiMatrix::identity(din))?;
    }
    consider(ChoiMatrix::new(problem.interior.clone(), din, dout)?)?;
    if let Ok(Some(mu)) = th.nearest_free_state(sigma) {
        consider(ChoiMatrix::replacement(din, &mu))?;
    }
    for h in hints {
        consider(h.clone())?;
    }
    let (start_residual, start_choi) = seeds
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(r, j)| (r, j.matrix))
        .expect("interior channel is always free");

    let runs: Vec<RestartOutcome> = (0..budget.restarts)
        .into_par_iter()
        .map(|k| {
            let mut rng = random::rng_stream(seed, k as u64);
            problem.run_restart(k, &mut rng, budget, start_residual, &start_choi)
        })
        .collect();

    let best = runs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.residual.total_cmp(&b.1.residual).then(a.0.cmp(&b.0)))
        .map(|(_, r)| r)
        .expect("at least one restart");
    Ok(OracleResult {
        residual: best.residual,
        choi: ChoiMatrix::new(best.choi.clone(), din, dout)?,
        iterations: runs.iter().map(|r| r.iterations).sum(),
        converged: best.converged,
        restarts_used: runs.len(),
    })
}

/// A random channel from the free-operation set of `th` (`d -> d`), exactly
/// feasible. Mostly low-rank projections of Ginibre matrices; the ball
/// theory also draws replacement channels with free outputs.
pub fn sample_free_channel(th: &TheorySpec, rng: &mut SeededRng) -> Result<ChoiMatrix> {
    let d = th.dim();
    if d * d > MAX_CHOI_DIM {
        return Err(Error::Unsupported(format!("dimension {d} too large for sampling")));
    }
    if let TheoryKind::TotallyOrderedBall { t } = th.kind() {
        if *t > 0.0 && rng.random::<f64>() < 0.2 {
            return Ok(ChoiMatrix::replacement(d, &th.random_free_state(rng)));
        }
    }
    let rho = DensityMatrix::maximally_mixed(d);
    let problem = Problem::feasibility_only(th, &rho)?;
    let n = d * d;
    let rank = rng.random_range(1..=n);
    let g = random::ginibre(n, rank, rng);
    let mut j = &g * g.adjoint();
    let tr = linalg::trace(&j).re;
    j *= c(d as f64 / tr, 0.0);
    let j = problem.project_feasible(&j, 300);
    ChoiMatrix::new(j, d, d)
}

struct RestartOutcome {
    residual: f64,
    choi: ComplexMatrix,
    iterations: usize,
    converged: bool,
}

/// Orthogonal projector onto `{z : z[masked] = 0, M z = b}`.
struct AffineProjector {
    masked: Vec<usize>,
    free: Vec<usize>,
    m: DMatrix<f64>,
    pinv: DMatrix<f64>,
    rhs: DVector<f64>,
    /// Rank of the restricted constraint matrix.
    rank: usize,
}

impl AffineProjector {
    fn new(len: usize, mask: &[bool], rows: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let free: Vec<usize> = (0..len).filter(|&i| !mask[i]).collect();
        let masked: Vec<usize> = (0..len).filter(|&i| mask[i]).collect();
        let mut kept: Vec<(Vec<f64>, f64)> = Vec::new();
        for (row, target) in rows {
            let restricted: Vec<f64> = free.iter().map(|&i| row[i]).collect();
            if restricted.iter().all(|v| v.abs() < 1e-15) {
                if target.abs() > 1e-12 {
                    return Err(Error::Precondition(
                        "constraint set is inconsistent (zeroed row with non-zero target)".into(),
                    ));
                }
                continue;
            }
            kept.push((restricted, target));
        }
        let k = kept.len();
        let nf = free.len();
        let m = DMatrix::from_fn(k, nf, |r, col| kept[r].0[col]);
        let rhs = DVector::from_iterator(k, kept.iter().map(|r| r.1));
        let mut rank = 0;
        let pinv = if k == 0 {
            DMatrix::zeros(nf, 0)
        } else {
            let gram = &m * m.transpose();
            let eig = gram.symmetric_eigen();
            let top = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            rank = eig.eigenvalues.iter().filter(|&&l| l > 1e-12 * top).count();
            let inv = DVector::from_iterator(
                k,
                eig.eigenvalues
                    .iter()
                    .map(|&l| if l > 1e-12 * top { 1.0 / l } else { 0.0 }),
            );
            let gram_pinv =
                &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose();
            m.transpose() * gram_pinv
        };
        Ok(Self {
            masked,
            free,
            m,
            pinv,
            rhs,
            rank,
        })
    }

    /// Orthonormal basis of the directions that keep every constraint,
    /// embedded in the full coordinate vector of length `len`.
    fn null_dim(&self) -> usize {
        self.free.len() - self.rank
    }

    fn null_space(&self, len: usize) -> Vec<DVector<f64>> {
        let nf = self.free.len();
        let gram = self.m.transpose() * &self.m;
        let eig = gram.symmetric_eigen();
        let top = eig.eigenvalues.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
        (0..nf)
            .filter(|&k| eig.eigenvalues[k].abs() <= 1e-10 * top)
            .map(|k| {
                let mut v = DVector::zeros(len);
                for (slot, &i) in self.free.iter().enumerate() {
                    v[i] = eig.eigenvectors[(slot, k)];
                }
                v
            })
            .collect()
    }

    fn project(&self, z: &mut [f64]) {
        for &i in &self.masked {
            z[i] = 0.0;
        }
        if self.rhs.is_empty() {
            return;
        }
        let w = DVector::from_iterator(self.free.len(), self.free.iter().map(|&i| z[i]));
        let viol = &self.m * &w - &self.rhs;
        let corr = &self.pinv * viol;
        for (slot, &i) in self.free.iter().enumerate() {
            z[i] -= corr[slot];
        }
    }
}

struct Problem {
    din: usize,
    dout: usize,
    hc_j: HermitianCoords,
    hc_y: HermitianCoords,
    affine: AffineProjector,
    /// `affine` with `Y = 0`, i.e. `Λ_J(ρ) = σ` imposed exactly; used at
    /// radius zero, where alternating with the ball set converges slowly
    /// whenever `ρ` carries little resource. `None` if that set is empty.
    exact: Option<AffineProjector>,
    ppt: Option<PptCut>,
    interior: ComplexMatrix,
    interior_min: f64,
    interior_ppt_min: f64,
    rho: ComplexMatrix,
    sigma: ComplexMatrix,
    /// Whether the `Y` block (and the ball set) is active.
    lifted: bool,
}

impl Problem {
    fn new(th: &TheorySpec, rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<Self> {
        Self::build(th, rho, Some(sigma))
    }

    fn feasibility_only(th: &TheorySpec, rho: &DensityMatrix) -> Result<Self> {
        Self::build(th, rho, None)
    }

    fn build(th: &TheorySpec, rho: &DensityMatrix, sigma: Option<&DensityMatrix>) -> Result<Self> {
        let din = rho.dim();
        let dout = sigma.map_or(din, |s| s.dim());
        let set: ConstraintSet = th.choi_constraints(din, dout)?;
        let n = din * dout;
        let hc_j = HermitianCoords::new(n);
        let hc_y = HermitianCoords::new(dout);
        let nx = hc_j.len();
        let ny = if sigma.is_some() { hc_y.len() } else { 0 };
        let len = nx + ny;

        let mut mask = vec![false; len];
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for cond in &set.conditions {
            match &cond.condition {
                Condition::Entry { row, col, part } => {
                    if row == col {
                        if *part == Part::Re {
                            mask[hc_j.diag(*row)] = true;
                        }
                    } else {
                        let idx = match part {
                            Part::Re => hc_j.re(*row, *col),
                            Part::Im => hc_j.im(*row, *col),
                        };
                        mask[idx] = true;
                    }
                }
                Condition::Linear { terms, target } => {
                    let mut r = vec![0.0; len];
                    for &(p, q, k) in terms {
                        hc_j.accumulate_functional(p, q, k, &mut r[..nx]);
                    }
                    rows.push((r, *target));
                }
            }
        }

        if let Some(sigma) = sigma {
            // y_q - ℓ_q(J) = -σ_q, with ℓ the coordinates of Λ_J(ρ)
            let s = std::f64::consts::SQRT_2;
            let sigma_y = hc_y.to_vec(sigma.matrix());
            let out_coord = |a: usize, b: usize| -> Vec<(usize, f64, bool)> {
                // (y index, scale, imaginary?) for the coordinates touching (a, b)
                if a == b {
                    vec![(hc_y.diag(a), 1.0, false)]
                } else {
                    vec![(hc_y.re(a, b), s, false), (hc_y.im(a, b), s, true)]
                }
            };
            for a in 0..dout {
                for b in a..dout {
                    for (yq, scale, imag) in out_coord(a, b) {
                        let mut r = vec![0.0; len];
                        r[nx + yq] = 1.0;
                        for i in 0..din {
                            for jj in 0..din {
                                let w = rho.entry(i, jj);
                                if w == ZERO {
                                    continue;
                                }
                                let coeff = if imag { w * c(0.0, -1.0) } else { w } * (-scale);
                                hc_j.accumulate_functional(
                                    i * dout + a,
                                    jj * dout + b,
                                    coeff,
                                    &mut r[..nx],
                                );
                            }
                        }
                        rows.push((r, -sigma_y[yq]));
                    }
                }
            }
        }

        let exact = if sigma.is_some() {
            let mut exact_mask = mask.clone();
            exact_mask[nx..].iter_mut().for_each(|m| *m = true);
            AffineProjector::new(len, &exact_mask, rows.clone()).ok()
        } else {
            None
        };
        let affine = AffineProjector::new(len, &mask, rows)?;
        let interior_state = th.interior_output(dout);
        let interior = linalg::kron(&linalg::identity(din), interior_state.matrix());
        let interior_min = linalg::min_eigenvalue(&interior);
        let interior_ppt_min = set
            .ppt
            .map(|cut| linalg::min_eigenvalue(&cut.apply(&interior)))
            .unwrap_or(f64::INFINITY);
        Ok(Self {
            din,
            dout,
            hc_j,
            hc_y,
            affine,
            exact,
            ppt: set.ppt,
            interior,
            interior_min,
            interior_ppt_min,
            rho: rho.matrix().clone(),
            sigma: sigma.map_or_else(|| rho.matrix().clone(), |s| s.matrix().clone()),
            lifted: sigma.is_some(),
        })
    }

    fn nx(&self) -> usize {
        self.hc_j.len()
    }

    fn choi_of(&self, z: &[f64]) -> ComplexMatrix {
        self.hc_j.to_matrix(&z[..self.nx()])
    }

    fn output(&self, j: &ComplexMatrix) -> ComplexMatrix {
        let (din, dout) = (self.din, self.dout);
        let mut out = ComplexMatrix::zeros(dout, dout);
        for i in 0..din {
            for k in 0..din {
                let w = self.rho[(i, k)];
                if w == ZERO {
                    continue;
                }
                let block = j.view((i * dout, k * dout), (dout, dout));
                out.zip_apply(&block, |o, b| *o += w * b);
            }
        }
        out
    }

    fn score(&self, j: &ComplexMatrix) -> f64 {
        linalg::trace_norm_hermitian(&(self.output(j) - &self.sigma))
    }

    fn lift(&self, j: &ComplexMatrix) -> Vec<f64> {
        let mut z = self.hc_j.to_vec(j).as_slice().to_vec();
        if self.lifted {
            let y = self.output(j) - &self.sigma;
            z.extend_from_slice(self.hc_y.to_vec(&y).as_slice());
        }
        z
    }

    fn project_psd(&self, z: &mut [f64]) {
        let j = self.choi_of(z);
        let clipped = linalg::clip_psd(&j);
        self.hc_j.write(&clipped, &mut z[..self.nx()]);
    }

    fn project_ppt(&self, cut: &PptCut, z: &mut [f64]) {
        let j = self.choi_of(z);
        let back = cut.apply(&linalg::clip_psd(&cut.apply(&j)));
        self.hc_j.write(&back, &mut z[..self.nx()]);
    }

    fn project_ball(&self, z: &mut [f64], radius: f64) {
        let nx = self.nx();
        let y = self.hc_y.to_matrix(&z[nx..]);
        let p = linalg::project_trace_ball(&y, radius);
        self.hc_y.write(&p, &mut z[nx..]);
    }

    /// Mixes an affine-feasible `J` with the interior channel just enough to
    /// restore positivity (and PPT).
    fn repair(&self, j: &ComplexMatrix) -> ComplexMatrix {
        let weight = |lmin: f64, interior: f64| {
            if lmin >= 0.0 {
                0.0
            } else {
                // a hair of slack keeps the mixture strictly inside
                let deficit = -lmin * (1.0 + 1e-9) + 1e-15;
                (deficit / (deficit + interior)).min(1.0)
            }
        };
        let mut t = weight(linalg::min_eigenvalue(j), self.interior_min);
        if let Some(cut) = &self.ppt {
            t = t.max(weight(linalg::min_eigenvalue(&cut.apply(j)), self.interior_ppt_min));
        }
        if t == 0.0 {
            j.clone()
        } else {
            j * c(1.0 - t, 0.0) + &self.interior * c(t, 0.0)
        }
    }

    /// Affine-project then repair: an exactly feasible Choi matrix.
    fn candidate(&self, z: &[f64]) -> ComplexMatrix {
        let mut w = z.to_vec();
        self.affine.project(&mut w);
        self.repair(&self.choi_of(&w))
    }

    /// Plain Dykstra onto PSD ∩ affine (∩ PPT), then repair.
    fn project_feasible(&self, j: &ComplexMatrix, iters: usize) -> ComplexMatrix {
        let mut z = self.lift(j);
        let len = z.len();
        let mut p_aff = vec![0.0; len];
        let mut p_psd = vec![0.0; len];
        let mut p_ppt = vec![0.0; len];
        for _ in 0..iters {
            dykstra_step(&mut z, &mut p_aff, |v| self.affine.project(v));
            dykstra_step(&mut z, &mut p_psd, |v| self.project_psd(v));
            if let Some(cut) = &self.ppt {
                dykstra_step(&mut z, &mut p_ppt, |v| self.project_ppt(cut, v));
            }
        }
        self.candidate(&z)
    }

    /// One Dykstra run at radius `r`. Returns the best exactly-feasible
    /// candidate seen, its residual, and iterations used.
    fn feasibility(&self, z: &mut Vec<f64>, r: f64, budget: &OracleBudget) -> (f64, ComplexMatrix, usize) {
        const CHECK_EVERY: usize = 10;
        const PATIENCE: usize = 300;
        let len = z.len();
        let mut p_aff = vec![0.0; len];
        let mut p_psd = vec![0.0; len];
        let mut p_ppt = vec![0.0; len];
        let mut p_ball = vec![0.0; len];
        let mut best_j = self.candidate(z);
        let mut best = self.score(&best_j);
        let mut last_improvement = 0usize;
        let mut mark = best;
        let mut it = 0usize;
        let exact = self.exact.as_ref().filter(|_| r == 0.0);
        while it < budget.max_iters {
            it += 1;
            match exact {
                Some(e) => dykstra_step(z, &mut p_aff, |v| e.project(v)),
                None => dykstra_step(z, &mut p_aff, |v| self.affine.project(v)),
            }
            dykstra_step(z, &mut p_psd, |v| self.project_psd(v));
            if let Some(cut) = &self.ppt {
                dykstra_step(z, &mut p_ppt, |v| self.project_ppt(cut, v));
            }
            if exact.is_none() {
                dykstra_step(z, &mut p_ball, |v| self.project_ball(v, r));
            }
            if it % CHECK_EVERY != 0 {
                continue;
            }
            let j = self.candidate(z);
            let f = self.score(&j);
            if f < best {
                best = f;
                best_j = j;
            }
            if best <= r + budget.tol {
                break;
            }
            // give up once the excess over r stops shrinking meaningfully
            if mark - best > 0.02 * (mark - r).max(0.0) {
                mark = best;
                last_improvement = it;
            } else if it - last_improvement >= PATIENCE {
                break;
            }
        }
        (best, best_j, it)
    }

    /// Smallest eigenvalue of `J` (and of its partial transpose) with a
    /// supergradient in `J` coordinates.
    fn min_eigen_with_gradient(&self, x: &[f64]) -> (f64, DVector<f64>) {
        let j = self.choi_of(x);
        let (values, vectors) = linalg::hermitian_eigen(&j);
        let v = vectors.column(0);
        let mut best = (values[0], self.hc_j.to_vec(&(&v * v.adjoint())));
        if let Some(cut) = &self.ppt {
            let (values, vectors) = linalg::hermitian_eigen(&cut.apply(&j));
            if values[0] < best.0 {
                let v = vectors.column(0);
                // the partial transpose is self-adjoint for the trace inner product
                best = (values[0], self.hc_j.to_vec(&cut.apply(&(&v * v.adjoint()))));
            }
        }
        best
    }

    /// Radius-zero polish: maximises the smallest eigenvalue over the set
    /// `{affine constraints, Λ_J(ρ) = σ}` with the ellipsoid method in its
    /// null space. Dykstra alone converges sublinearly when that set is
    /// thin, which is typical for pairs close to the decision boundary.
    fn polish_exact(&self, z: &[f64]) -> Option<(f64, ComplexMatrix)> {
        const MAX_DIRECTIONS: usize = 24;
        let e = self.exact.as_ref().filter(|e| e.null_dim() <= MAX_DIRECTIONS)?;
        let mut x0 = z.to_vec();
        e.project(&mut x0);
        let basis = e.null_space(x0.len());
        let n = basis.len();
        let nx = self.nx();
        let embed = |t: &DVector<f64>| -> Vec<f64> {
            let mut x = x0.clone();
            for (b, tk) in basis.iter().zip(t.iter()) {
                for (xi, bi) in x.iter_mut().zip(b.iter()) {
                    *xi += tk * bi;
                }
            }
            x
        };
        let mut best_x = x0.clone();
        let (mut best_l, _) = self.min_eigen_with_gradient(&x0);
        if n > 0 && best_l < 0.0 {
            // Choi matrices of channels have Frobenius norm at most d_in.
            let radius = 2.0 * self.din as f64 + x0[..nx].iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut centre = DVector::<f64>::zeros(n);
            let mut shape = DMatrix::<f64>::identity(n, n) * (radius * radius);
            let nf = n as f64;
            for _ in 0..(40 * n * n + 200) {
                let x = embed(&centre);
                let (l, grad) = self.min_eigen_with_gradient(&x);
                if l > best_l {
                    best_l = l;
                    best_x = x;
                }
                if best_l >= 0.0 {
                    break;
                }
                let g = DVector::from_iterator(n, basis.iter().map(|b| b.rows(0, nx).dot(&grad)));
                let pg = &shape * &g;
                let width = g.dot(&pg);
                if width <= 1e-30 {
                    break;
                }
                let gt = &pg / width.sqrt();
                if n == 1 {
                    centre += &gt * 0.5;
                    shape *= 0.25;
                } else {
                    centre += &gt * (1.0 / (nf + 1.0));
                    shape = (&shape - (&gt * gt.transpose()) * (2.0 / (nf + 1.0))) * (nf * nf / (nf * nf - 1.0));
                }
            }
        }
        let j = self.candidate(&best_x);
        Some((self.score(&j), j))
    }

    fn run_restart(
        &self,
        index: usize,
        rng: &mut SeededRng,
        budget: &OracleBudget,
        start_residual: f64,
        start_choi: &ComplexMatrix,
    ) -> RestartOutcome {
        let mut hi = start_residual;
        let mut best = start_choi.clone();
        let mut iterations = 0;
        if hi <= budget.tol {
            return RestartOutcome {
                residual: hi,
                choi: best,
                iterations,
                converged: true,
            };
        }
        let init = if index == 0 {
            self.interior.clone()
        } else {
            let n = self.din * self.dout;
            let rank = rng.random_range(1..=n);
            let g = random::ginibre(n, rank, rng);
            let w = &g * g.adjoint();
            let tr = linalg::trace(&w).re;
            w * c(self.din as f64 / tr, 0.0)
        };
        let mut z = self.lift(&init);
        let mut lo = 0.0f64;
        for level in 0..budget.depth {
            if hi - lo <= budget.tol {
                break;
            }
            let r = if level == 0 { 0.0 } else { 0.5 * (lo + hi) };
            let (mut f, mut j, used) = self.feasibility(&mut z, r, budget);
            iterations += used;
            if level == 0 && f > budget.tol {
                if let Some((fp, jp)) = self.polish_exact(&z) {
                    if fp < f {
                        (f, j) = (fp, jp);
                    }
                }
            }
            if f < hi {
                hi = f;
                best = j;
            }
            if f > r + budget.tol {
                lo = r;
            }
            if hi <= budget.tol {
                break;
            }
        }
        RestartOutcome {
            residual: hi,
            converged: hi <= budget.tol || hi - lo <= budget.tol,
            choi: best,
            iterations,
        }
    }
}

fn dykstra_step(z: &mut [f64], increment: &mut [f64], project: impl Fn(&mut [f64])) {
    for (zi, pi) in z.iter_mut().zip(increment.iter()) {
        *zi += *pi;
    }
    let before: Vec<f64> = z.to_vec();
    project(z);
    for ((pi, b), zi) in increment.iter_mut().zip(&before).zip(z.iter()) {
        *pi = b - zi;
    }
}
