//! The three-step DIO protocol for approximate catalysis at finite `n`.
//!
//! Subsystems are ordered `S1 S2 … Sn K`: `S1` is the system, the catalyst
//! is `S2 … Sn K`, and `K` is an `n`-level register with basis `|1>…|n>`
//! (stored as indices `0…n-1`). The catalyst is
//! `τ = (1/n) Σ_k ρ^{⊗k-1} ⊗ Γ_{n-k} ⊗ |k><k|` with `Γ = Λ[ρ^{⊗n}]` and
//! `Γ_i` its marginal on the first `i` copies.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, c, ComplexMatrix, ZERO};
use crate::monotones::rel_entropy_coherence;
use crate::oracle::{self, ChoiMatrix, OracleBudget, MAX_CHOI_DIM};
use crate::state::{self, tensor, tensor_power, trace_distance, DensityMatrix};
use crate::theory::TheorySpec;

/// Largest copy number simulated.
pub const MAX_COPIES: usize = 3;

/// Block channel `Λ` on `n` copies and how close it gets to the target.
#[derive(Debug, Clone)]
pub struct BlockChannel {
    pub choi: ChoiMatrix,
    /// `||Λ[ρ^{⊗n}] - σ^{⊗m} ⊗ |0><0|^{⊗n-m}||_1`.
    pub epsilon: f64,
    pub converged: bool,
}

fn check_copies(rho: &DensityMatrix, n: usize, m: usize) -> Result<()> {
    if n == 0 || n > MAX_COPIES {
        return Err(Error::Precondition(format!("copy number n = {n} outside 1..={MAX_COPIES}")));
    }
    if m > n {
        return Err(Error::Precondition(format!("m = {m} exceeds n = {n}")));
    }
    let side = rho.dim().pow(n as u32);
    if side * side > MAX_CHOI_DIM {
        return Err(Error::Unsupported(format!(
            "{n} copies of dimension {} exceed the oracle size limit",
            rho.dim()
        )));
    }
    Ok(())
}

/// `σ^{⊗m} ⊗ |0><0|^{⊗n-m}`.
pub fn block_target(sigma: &DensityMatrix, n: usize, m: usize) -> DensityMatrix {
    let zero = DensityMatrix::basis_state(sigma.dim(), 0).expect("non-trivial dimension");
    tensor(&tensor_power(sigma, m), &tensor_power(&zero, n - m))
}

/// Channel `X ↦ Tr_{m+1…n}(X) ⊗ |0><0|^{⊗n-m}`: keeps the first `m` copies
/// and resets the rest. It is DIO.
pub fn discard_and_reset(d: usize, n: usize, m: usize) -> Result<ChoiMatrix> {
    let dims = vec![d; n];
    let keep: Vec<usize> = (0..m).collect();
    let zero = DensityMatrix::basis_state(d, 0)?;
    let fresh = tensor_power(&zero, n - m);
    let side = d.pow(n as u32);
    ChoiMatrix::from_linear_map(side, side, |x| {
        let kept = linalg::partial_trace(x, &dims, &keep).expect("valid subsystem list");
        linalg::kron(&kept, fresh.matrix())
    })
}

/// `Λ1^{⊗m}` on the first `m` copies after [`discard_and_reset`]; DIO
/// whenever `Λ1` is.
pub fn product_channel(single: &ChoiMatrix, n: usize, m: usize) -> Result<ChoiMatrix> {
    let d = single.in_dim();
    if single.out_dim() != d {
        return Err(Error::Dimension("single-copy channel must be d -> d".into()));
    }
    let rest = d.pow((n - m) as u32);
    let mut local = vec![linalg::identity(1)];
    for _ in 0..m {
        local = local
            .iter()
            .flat_map(|a| single.kraus_operators().into_iter().map(move |k| linalg::kron(a, &k)))
            .collect();
    }
    let mut ops = Vec::with_capacity(local.len() * rest);
    for a in &local {
        for j in 0..rest {
            let mut reset = ComplexMatrix::zeros(rest, rest);
            reset[(0, j)] = c(1.0, 0.0);
            ops.push(linalg::kron(a, &reset));
        }
    }
    ChoiMatrix::from_kraus(&ops)
}

/// Budget used for the `n`-copy search: the Choi matrix there is up to
/// 64x64, so iterations and restarts are capped; the search is seeded with
/// good product channels and only has to refine them.
pub fn block_budget(budget: &OracleBudget) -> OracleBudget {
    OracleBudget {
        max_iters: budget.max_iters.min(150),
        restarts: budget.restarts.min(1),
        tol: budget.tol,
        depth: budget.depth.min(8),
    }
}

/// Minimises `||Λ[ρ^{⊗n}] - σ^{⊗m} ⊗ |0><0|^{⊗n-m}||_1` over DIO on the
/// `n`-copy space, starting from the best single-copy channel applied
/// copy-wise.
pub fn find_block_channel(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    n: usize,
    m: usize,
    budget: &OracleBudget,
    seed: u64,
) -> Result<BlockChannel> {
    if rho.dim() != sigma.dim() {
        return Err(Error::Dimension("system states differ in dimension".into()));
    }
    check_copies(rho, n, m)?;
    let single_th = TheorySpec::coherence(rho.dim())?;
    let single = oracle::min_residual(rho, sigma, &single_th, budget, seed)?;
    let input = tensor_power(rho, n);
    let target = block_target(sigma, n, m);
    let th = TheorySpec::coherence(input.dim())?;
    let hints = [discard_and_reset(rho.dim(), n, m)?, product_channel(&single.choi, n, m)?];
    let out = oracle::min_residual_with_hints(&input, &target, &th, &block_budget(budget), seed, &hints)?;
    Ok(BlockChannel {
        choi: out.choi,
        epsilon: out.residual,
        converged: out.converged,
    })
}

#[derive(Debug, Clone)]
pub struct CatalystState {
    pub n: usize,
    pub system_dim: usize,
    /// `τ` on `S2 … Sn K`.
    pub state: DensityMatrix,
    /// `Γ_0 … Γ_{n-1}`; `Γ_0` is the 1×1 state `[1]`.
    pub gammas: Vec<DensityMatrix>,
    /// `Γ = Γ_n`.
    pub gamma: DensityMatrix,
}

fn register_projector(n: usize, k: usize) -> DensityMatrix {
    DensityMatrix::basis_state(n, k).expect("register index in range")
}

/// Builds `τ` from `ρ` and the block channel.
pub fn build_catalyst(rho: &DensityMatrix, lambda: &ChoiMatrix, n: usize) -> Result<CatalystState> {
    check_copies(rho, n, 0)?;
    let d = rho.dim();
    let input = tensor_power(rho, n);
    if lambda.in_dim() != input.dim() || lambda.out_dim() != input.dim() {
        return Err(Error::Dimension(format!(
            "block channel must act on {} dimensions, got {} -> {}",
            input.dim(),
            lambda.in_dim(),
            lambda.out_dim()
        )));
    }
    let gamma = DensityMatrix::from_trusted(
        linalg::hermitian_part(&lambda.apply_matrix(input.matrix())?),
        vec![d; n],
    );
    let gammas: Vec<DensityMatrix> = (0..n)
        .map(|i| {
            if i == 0 {
                tensor_power(rho, 0)
            } else {
                let keep: Vec<usize> = (0..i).collect();
                state::partial_trace(&gamma, &keep).expect("marginal of Γ")
            }
        })
        .collect();

    let side = d.pow((n - 1) as u32) * n;
    let mut tau = ComplexMatrix::zeros(side, side);
    for k in 1..=n {
        let block = tensor(
            &tensor(&tensor_power(rho, k - 1), &gammas[n - k]),
            &register_projector(n, k - 1),
        );
        tau += block.matrix() * c(1.0 / n as f64, 0.0);
    }
    let mut factors = vec![d; n - 1];
    factors.push(n);
    Ok(CatalystState {
        n,
        system_dim: d,
        state: DensityMatrix::from_trusted(tau, factors),
        gammas,
        gamma,
    })
}

/// Step 1: measure `K`; on outcome `n` apply `Λ` to `S1 … Sn`.
fn step_measure(x: &ComplexMatrix, lambda: &ChoiMatrix, n: usize) -> Result<ComplexMatrix> {
    let s = x.nrows() / n;
    let mut out = ComplexMatrix::zeros(x.nrows(), x.ncols());
    for k in 0..n {
        let block = ComplexMatrix::from_fn(s, s, |a, b| x[(a * n + k, b * n + k)]);
        let block = if k == n - 1 {
            lambda.apply_matrix(&block)?
        } else {
            block
        };
        for a in 0..s {
            for b in 0..s {
                out[(a * n + k, b * n + k)] = block[(a, b)];
            }
        }
    }
    Ok(out)
}

/// Step 2: `|k> -> |k+1>` on `K`, `|n> -> |1>`.
fn step_shift(x: &ComplexMatrix, n: usize) -> ComplexMatrix {
    let side = x.nrows();
    let mut out = ComplexMatrix::from_element(side, side, ZERO);
    let shift = |i: usize| (i / n) * n + (i % n + 1) % n;
    for i in 0..side {
        for j in 0..side {
            out[(shift(i), shift(j))] = x[(i, j)];
        }
    }
    out
}

/// Step 3: `S_i -> S_{i+1}`, `S_n -> S_1`.
fn step_swap(x: &ComplexMatrix, d: usize, n: usize) -> Result<ComplexMatrix> {
    let mut dims = vec![d; n];
    dims.push(n);
    let mut perm: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
    perm.push(n);
    linalg::permute_subsystems(x, &dims, &perm)
}

fn protocol_map(x: &ComplexMatrix, lambda: &ChoiMatrix, d: usize, n: usize) -> Result<ComplexMatrix> {
    let mu1 = step_measure(x, lambda, n)?;
    step_swap(&step_shift(&mu1, n), d, n)
}

#[derive(Debug, Clone)]
pub struct ProtocolTrace {
    pub n: usize,
    pub mu1: DensityMatrix,
    pub mu2: DensityMatrix,
    /// `μ^{SC}` on `S1 (S2 … Sn K)`.
    pub final_state: DensityMatrix,
    /// `||μ^{SC} - σ ⊗ τ||_1`.
    pub decoupling_error: f64,
    /// `||Tr_S μ^{SC} - τ||_1`.
    pub catalyst_restoration_error: f64,
    /// `||Tr_C μ^{SC} - σ||_1`.
    pub system_error: f64,
}

impl ProtocolTrace {
    pub fn system_state(&self) -> DensityMatrix {
        state::partial_trace(&self.final_state, &[0]).expect("system factor")
    }

    pub fn catalyst_state(&self) -> DensityMatrix {
        let keep: Vec<usize> = (1..=self.n).collect();
        state::partial_trace(&self.final_state, &keep).expect("catalyst factors")
    }
}

/// Runs steps 1–3 on `ρ ⊗ τ`.
pub fn run_protocol(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    catalyst: &CatalystState,
    lambda: &ChoiMatrix,
) -> Result<ProtocolTrace> {
    let (d, n) = (catalyst.system_dim, catalyst.n);
    if rho.dim() != d || sigma.dim() != d {
        return Err(Error::Dimension(format!(
            "catalyst built for dimension {d}, states have {} and {}",
            rho.dim(),
            sigma.dim()
        )));
    }
    let mut factors = vec![d; n];
    factors.push(n);
    let wrap = |m: ComplexMatrix| DensityMatrix::from_trusted(linalg::hermitian_part(&m), factors.clone());

    let initial = tensor(rho, &catalyst.state);
    let mu1 = step_measure(initial.matrix(), lambda, n)?;
    let mu2 = step_shift(&mu1, n);
    let fin = step_swap(&mu2, d, n)?;
    let (mu1, mu2, fin) = (wrap(mu1), wrap(mu2), wrap(fin));

    let decoupling_error = trace_distance(&fin, &tensor(sigma, &catalyst.state))?;
    let keep: Vec<usize> = (1..=n).collect();
    let restored = state::partial_trace(&fin, &keep)?;
    let catalyst_restoration_error = trace_distance(&restored, &catalyst.state)?;
    let system_error = trace_distance(&state::partial_trace(&fin, &[0])?, sigma)?;
    Ok(ProtocolTrace {
        n,
        mu1,
        mu2,
        final_state: fin,
        decoupling_error,
        catalyst_restoration_error,
        system_error,
    })
}

/// Choi matrix of the composed steps 1–3 on `S1 … Sn K`.
pub fn protocol_choi(lambda: &ChoiMatrix, d: usize, n: usize) -> Result<ChoiMatrix> {
    let side = d.pow(n as u32) * n;
    let mut failure = None;
    let j = ChoiMatrix::from_linear_map(side, side, |x| match protocol_map(x, lambda, d, n) {
        Ok(y) => y,
        Err(e) => {
            failure = Some(e);
            ComplexMatrix::zeros(side, side)
        }
    });
    match failure {
        Some(e) => Err(e),
        None => j,
    }
}

/// `2(δ + ε)` with `δ = 1 - m/n`.
pub fn decoupling_bound(n: usize, m: usize, epsilon: f64) -> f64 {
    let delta = 1.0 - m as f64 / n as f64;
    2.0 * (delta + epsilon)
}

/// Relative entropy of coherence before and after the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CatalyticCheck {
    /// `C(ρ ⊗ τ)`.
    pub joint_before: f64,
    /// `C(μ^{SC})`.
    pub joint_after: f64,
    /// `C(ρ)`.
    pub system_before: f64,
    /// `C(Tr_C μ^{SC})`.
    pub system_after: f64,
    pub catalyst_before: f64,
    pub catalyst_after: f64,
    pub holds: bool,
}

/// Checks `C(ρ ⊗ τ) >= C(μ^{SC})` and `C(ρ) >= C(Tr_C μ^{SC})`.
pub fn catalytic_monotone_check(rho: &DensityMatrix, catalyst: &CatalystState, trace: &ProtocolTrace) -> CatalyticCheck {
    let joint_before = rel_entropy_coherence(&tensor(rho, &catalyst.state));
    let joint_after = rel_entropy_coherence(&trace.final_state);
    let system_before = rel_entropy_coherence(rho);
    let system_after = rel_entropy_coherence(&trace.system_state());
    CatalyticCheck {
        joint_before,
        joint_after,
        system_before,
        system_after,
        catalyst_before: rel_entropy_coherence(&catalyst.state),
        catalyst_after: rel_entropy_coherence(&trace.catalyst_state()),
        holds: joint_before >= joint_after - 1e-8 && system_before >= system_after - 1e-6,
    }
}

/// Everything the protocol reports for one `(ρ, σ, n, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CatalysisSummary {
    pub n: usize,
    pub m: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub oracle_converged: bool,
    pub decoupling_error: f64,
    pub decoupling_bound: f64,
    pub catalyst_restoration_error: f64,
    pub system_error: f64,
    pub protocol_dio_residual: f64,
    pub monotones: CatalyticCheck,
}

/// Searches the block channel, builds the catalyst and runs the protocol.
pub fn simulate(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    n: usize,
    m: usize,
    budget: &OracleBudget,
    seed: u64,
) -> Result<(CatalysisSummary, CatalystState, ProtocolTrace)> {
    let block = find_block_channel(rho, sigma, n, m, budget, seed)?;
    let catalyst = build_catalyst(rho, &block.choi, n)?;
    let trace = run_protocol(rho, sigma, &catalyst, &block.choi)?;
    let choi = protocol_choi(&block.choi, rho.dim(), n)?;
    let dio = TheorySpec::coherence(choi.in_dim())?;
    let report = oracle::verify_channel(&choi, &dio)?;
    let summary = CatalysisSummary {
        n,
        m,
        delta: 1.0 - m as f64 / n as f64,
        epsilon: block.epsilon,
        oracle_converged: block.converged,
        decoupling_error: trace.decoupling_error,
        decoupling_bound: decoupling_bound(n, m, block.epsilon),
        catalyst_restoration_error: trace.catalyst_restoration_error,
        system_error: trace.system_error,
        protocol_dio_residual: report.max_residual,
        monotones: catalytic_monotone_check(rho, &catalyst, &trace),
    };
    Ok((summary, catalyst, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::qubit;

    #[test]
    fn single_copy_catalyst_is_trivial() {
        let rho = qubit(0.3, 0.1, 0.2).unwrap();
        let cat = build_catalyst(&rho, &ChoiMatrix::identity(2), 1).unwrap();
        assert_eq!(cat.state.dim(), 1);
        assert!((cat.state.entry(0, 0).re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_copy_identity_catalyst() {
        let rho = qubit(0.3, 0.1, 0.2).unwrap();
        let cat = build_catalyst(&rho, &ChoiMatrix::identity(4), 2).unwrap();
        // τ = ½(Γ1 ⊗ |1><1| + ρ ⊗ |2><2|), Γ1 = ρ.
        let expected = DensityMatrix::mix(
            0.5,
            &tensor(&rho, &register_projector(2, 0)),
            &tensor(&rho, &register_projector(2, 1)),
        )
        .unwrap();
        assert!(trace_distance(&cat.state, &expected).unwrap() < 1e-14);
    }

    #[test]
    fn identity_protocol_decouples_exactly() {
        let rho = qubit(0.6, 0.0, 0.1).unwrap();
        let lambda = ChoiMatrix::identity(4);
        let cat = build_catalyst(&rho, &lambda, 2).unwrap();
        let trace = run_protocol(&rho, &rho, &cat, &lambda).unwrap();
        assert!(trace.decoupling_error < 1e-14);
        assert!(trace.catalyst_restoration_error < 1e-14);
        let check = catalytic_monotone_check(&rho, &cat, &trace);
        assert!(check.holds);
        assert!((check.joint_before - check.joint_after).abs() < 1e-10);
    }

    #[test]
    fn register_marginal_is_uniform() {
        let mut rng = crate::random::rng(1);
        let rho = crate::random::qubit_state(&mut rng);
        let lambda = oracle::sample_free_channel(&TheorySpec::coherence(8).unwrap(), &mut rng).unwrap();
        let cat = build_catalyst(&rho, &lambda, 3).unwrap();
        let k = state::partial_trace(&cat.state, &[2]).unwrap();
        for i in 0..3 {
            assert!((k.entry(i, i).re - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn discard_and_reset_is_dio_and_keeps_copies() {
        let j = discard_and_reset(2, 3, 2).unwrap();
        let report = oracle::verify_channel(&j, &TheorySpec::coherence(8).unwrap()).unwrap();
        assert!(report.max_residual < 1e-12);
        let rho = qubit(0.2, 0.3, 0.1).unwrap();
        let out = j.apply(&tensor_power(&rho, 3)).unwrap();
        assert!(trace_distance(&out, &block_target(&rho, 3, 2)).unwrap() < 1e-12);
    }

    #[test]
    fn protocol_channel_is_dio() {
        let mut rng = crate::random::rng(7);
        let lambda = oracle::sample_free_channel(&TheorySpec::coherence(4).unwrap(), &mut rng).unwrap();
        let choi = protocol_choi(&lambda, 2, 2).unwrap();
        let report = oracle::verify_channel(&choi, &TheorySpec::coherence(8).unwrap()).unwrap();
        assert!(report.max_residual < 1e-9, "{report:?}");
    }

    #[test]
    fn copy_limits() {
        let rho = qubit(0.0, 0.0, 0.0).unwrap();
        assert!(find_block_channel(&rho, &rho, 4, 3, &OracleBudget::default(), 0).is_err());
        assert!(find_block_channel(&rho, &rho, 2, 3, &OracleBudget::default(), 0).is_err());
    }
}
