//! Validated quantum states and the basic operations on them.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, ComplexMatrix, ONE, ZERO};

/// Trace and positivity tolerance applied when a state is constructed.
pub const STATE_TOL: f64 = 1e-10;

/// Trace-one positive semidefinite matrix with a tensor factorisation.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
    factors: Vec<usize>,
}

impl DensityMatrix {
    /// Validates `matrix` as a density operator on a single factor.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let d = matrix.nrows();
        Self::with_factors(matrix, vec![d])
    }

    pub fn with_factors(matrix: ComplexMatrix, factors: Vec<usize>) -> Result<Self> {
        if !linalg::is_square(&matrix) || matrix.nrows() == 0 {
            return Err(Error::invalid_state(
                "square",
                format!("matrix is {}x{}", matrix.nrows(), matrix.ncols()),
            ));
        }
        let prod: usize = factors.iter().product();
        if prod != matrix.nrows() || factors.iter().any(|&f| f == 0) {
            return Err(Error::invalid_state(
                "factors",
                format!("factors {factors:?} do not multiply to dimension {}", matrix.nrows()),
            ));
        }
        let defect = linalg::hermiticity_defect(&matrix);
        if defect > STATE_TOL {
            return Err(Error::invalid_state(
                "hermitian",
                format!("max |M_ij - conj(M_ji)| = {defect:.3e}"),
            ));
        }
        let matrix = linalg::hermitian_part(&matrix);
        let tr = linalg::trace(&matrix).re;
        if (tr - 1.0).abs() > STATE_TOL {
            return Err(Error::invalid_state("trace", format!("trace is {tr}, expected 1")));
        }
        let lmin = linalg::min_eigenvalue(&matrix);
        if lmin < -STATE_TOL {
            return Err(Error::invalid_state(
                "positivity",
                format!("smallest eigenvalue is {lmin:.3e}"),
            ));
        }
        Ok(Self { matrix, factors })
    }

    /// Wraps a matrix produced by an exact or numerically trusted
    /// computation. Only the Hermitian part is kept; no validation.
    pub(crate) fn from_trusted(matrix: ComplexMatrix, factors: Vec<usize>) -> Self {
        debug_assert_eq!(factors.iter().product::<usize>(), matrix.nrows());
        Self {
            matrix: linalg::hermitian_part(&matrix),
            factors,
        }
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self::from_trusted(linalg::identity(d) * c(1.0 / d as f64, 0.0), vec![d])
    }

    /// `|k><k|` in dimension `d`.
    pub fn basis_state(d: usize, k: usize) -> Result<Self> {
        if k >= d {
            return Err(Error::Index(format!("basis index {k} in dimension {d}")));
        }
        let mut m = ComplexMatrix::zeros(d, d);
        m[(k, k)] = ONE;
        Ok(Self::from_trusted(m, vec![d]))
    }

    /// Diagonal state with the given populations.
    pub fn diagonal(populations: &[f64]) -> Result<Self> {
        let d = populations.len();
        let m = ComplexMatrix::from_diagonal(&DVector::from_iterator(
            d,
            populations.iter().map(|&p| c(p, 0.0)),
        ));
        Self::new(m)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn factors(&self) -> &[usize] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_qubit(&self) -> bool {
        self.dim() == 2
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.matrix[(i, j)]
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::hermitian_eigenvalues(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.matrix)
    }

    /// Re-labels the tensor factorisation without touching the matrix.
    pub fn with_factor_dims(mut self, factors: Vec<usize>) -> Result<Self> {
        if factors.iter().product::<usize>() != self.dim() {
            return Err(Error::invalid_state(
                "factors",
                format!("factors {factors:?} do not multiply to dimension {}", self.dim()),
            ));
        }
        self.factors = factors;
        Ok(self)
    }

    /// `p·a + (1-p)·b` for `p ∈ [0, 1]`.
    pub fn mix(p: f64, a: &Self, b: &Self) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Precondition(format!("mixing weight {p} outside [0, 1]")));
        }
        if a.dim() != b.dim() {
            return Err(Error::Dimension(format!("mixing {} with {}", a.dim(), b.dim())));
        }
        Ok(Self::from_trusted(
            &a.matrix * c(p, 0.0) + &b.matrix * c(1.0 - p, 0.0),
            a.factors.clone(),
        ))
    }

    /// Complex conjugate in the reference basis.
    pub fn conjugate(&self) -> Self {
        Self::from_trusted(self.matrix.map(|z| z.conj()), self.factors.clone())
    }

    /// Entrywise real part in the reference basis.
    pub fn real_part(&self) -> Self {
        Self::from_trusted(self.matrix.map(|z| c(z.re, 0.0)), self.factors.clone())
    }

    /// Fidelity with a pure state, `<ψ|ρ|ψ>`.
    pub fn overlap(&self, psi: &PureState) -> f64 {
        let v = psi.amplitudes();
        (v.adjoint() * &self.matrix * v)[(0, 0)].re
    }
}

impl From<&PureState> for DensityMatrix {
    fn from(psi: &PureState) -> Self {
        let v = psi.amplitudes();
        DensityMatrix::from_trusted(v * v.adjoint(), vec![v.len()])
    }
}

/// Unit vector in `C^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: DVector<Complex64>,
}

impl PureState {
    pub const NORM_TOL: f64 = 1e-12;

    pub fn new(amplitudes: DVector<Complex64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > Self::NORM_TOL {
            return Err(Error::invalid_state("norm", format!("|ψ| = {norm}")));
        }
        Ok(Self { amplitudes })
    }

    /// Normalises a non-zero vector.
    pub fn normalized(amplitudes: DVector<Complex64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm <= 1e-300 || !norm.is_finite() {
            return Err(Error::invalid_state("norm", "cannot normalise the zero vector"));
        }
        Ok(Self {
            amplitudes: amplitudes.unscale(norm),
        })
    }

    pub fn from_slice(amps: &[Complex64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(amps))
    }

    pub fn basis(d: usize, k: usize) -> Result<Self> {
        if k >= d {
            return Err(Error::Index(format!("basis index {k} in dimension {d}")));
        }
        let mut v = DVector::from_element(d, ZERO);
        v[k] = ONE;
        Ok(Self { amplitudes: v })
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn inner(&self, other: &PureState) -> Complex64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix::from(self)
    }
}

/// Bloch coordinates of a qubit, `ρ = (I + r·σ) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let b = Self { x, y, z };
        if !(x.is_finite() && y.is_finite() && z.is_finite()) || b.norm() > 1.0 + STATE_TOL {
            return Err(Error::invalid_state(
                "bloch_norm",
                format!("|r| = {} exceeds 1", b.norm()),
            ));
        }
        Ok(b)
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn distance(&self, other: &BlochVector) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            x: self.x * s,
            y: self.y * s,
            z: self.z * s,
        }
    }
}

pub fn trace_norm(m: &ComplexMatrix) -> Result<f64> {
    linalg::trace_norm(m)
}

/// `||ρ - σ||_1` for states of equal dimension.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!("{} vs {}", a.dim(), b.dim())));
    }
    Ok(linalg::trace_norm_hermitian(&(a.matrix() - b.matrix())))
}

fn require_qubit(rho: &DensityMatrix) -> Result<()> {
    if rho.is_qubit() {
        Ok(())
    } else {
        Err(Error::Unsupported(format!(
            "qubit state required, got dimension {}",
            rho.dim()
        )))
    }
}

pub fn bloch_from_density(rho: &DensityMatrix) -> Result<BlochVector> {
    require_qubit(rho)?;
    let r01 = rho.entry(0, 1);
    Ok(BlochVector {
        x: 2.0 * r01.re,
        y: -2.0 * r01.im,
        z: rho.entry(0, 0).re - rho.entry(1, 1).re,
    })
}

pub fn density_from_bloch(r: &BlochVector) -> Result<DensityMatrix> {
    let r = BlochVector::new(r.x, r.y, r.z)?;
    let m = ComplexMatrix::from_row_slice(
        2,
        2,
        &[
            c(0.5 * (1.0 + r.z), 0.0),
            c(0.5 * r.x, -0.5 * r.y),
            c(0.5 * r.x, 0.5 * r.y),
            c(0.5 * (1.0 - r.z), 0.0),
        ],
    );
    Ok(DensityMatrix::from_trusted(m, vec![2]))
}

/// Convenience wrapper for literal Bloch coordinates.
pub fn qubit(x: f64, y: f64, z: f64) -> Result<DensityMatrix> {
    density_from_bloch(&BlochVector::new(x, y, z)?)
}

/// Completely dephases `ρ` in an orthonormal basis, given as the columns of
/// `basis`.
pub fn dephase(rho: &DensityMatrix, basis: &ComplexMatrix) -> Result<DensityMatrix> {
    let d = rho.dim();
    if basis.nrows() != d || basis.ncols() != d {
        return Err(Error::Dimension(format!(
            "basis is {}x{}, state has dimension {d}",
            basis.nrows(),
            basis.ncols()
        )));
    }
    let unitarity = (basis.adjoint() * basis - linalg::identity(d)).norm();
    if unitarity > 1e-9 {
        return Err(Error::Precondition(format!(
            "basis is not orthonormal (|B†B - I| = {unitarity:.2e})"
        )));
    }
    let mut out = ComplexMatrix::zeros(d, d);
    for k in 0..d {
        let v = basis.column(k);
        let w = (v.adjoint() * rho.matrix() * v)[(0, 0)].re;
        out += (v * v.adjoint()) * c(w, 0.0);
    }
    Ok(DensityMatrix::from_trusted(out, rho.factors.clone()))
}

/// Dephasing in the reference (computational) basis.
pub fn dephase_reference(rho: &DensityMatrix) -> DensityMatrix {
    let d = rho.dim();
    let mut out = ComplexMatrix::zeros(d, d);
    for k in 0..d {
        out[(k, k)] = c(rho.entry(k, k).re, 0.0);
    }
    DensityMatrix::from_trusted(out, rho.factors.clone())
}

/// `-Σ λ log2 λ` over eigenvalues clipped at zero.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    entropy_of_spectrum(&rho.eigenvalues())
}

pub(crate) fn entropy_of_spectrum(values: &[f64]) -> f64 {
    values
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| -l * l.log2())
        .sum::<f64>()
        .max(0.0)
}

pub fn tensor(a: &DensityMatrix, b: &DensityMatrix) -> DensityMatrix {
    let mut factors = a.factors.clone();
    factors.extend_from_slice(&b.factors);
    DensityMatrix::from_trusted(linalg::kron(&a.matrix, &b.matrix), factors)
}

/// `ρ^{⊗n}`; `n = 0` gives the 1x1 state `[1]` with no factors.
pub fn tensor_power(rho: &DensityMatrix, n: usize) -> DensityMatrix {
    let mut acc = DensityMatrix::from_trusted(linalg::identity(1), Vec::new());
    for _ in 0..n {
        acc = tensor(&acc, rho);
    }
    acc
}

pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let m = linalg::partial_trace(&rho.matrix, &rho.factors, keep)?;
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    let factors = keep_sorted.iter().map(|&k| rho.factors[k]).collect();
    Ok(DensityMatrix::from_trusted(m, factors))
}

/// Split of a full-rank state: `ρ = p_min ψ + (1 - p_min) σ`,
/// with `p_min` the smallest eigenvalue of `ρ`.
pub fn decompose_full_rank(rho: &DensityMatrix, psi: &PureState) -> Result<(f64, DensityMatrix)> {
    if psi.dim() != rho.dim() {
        return Err(Error::Dimension(format!(
            "pure state has dimension {}, ρ has {}",
            psi.dim(),
            rho.dim()
        )));
    }
    let p_min = rho.min_eigenvalue();
    if p_min <= 1e-9 {
        return Err(Error::Precondition(format!(
            "ρ must be full rank (smallest eigenvalue {p_min:.3e})"
        )));
    }
    let rest = (rho.matrix() - psi.density().matrix() * c(p_min, 0.0)) * c(1.0 / (1.0 - p_min), 0.0);
    Ok((p_min, DensityMatrix::from_trusted(rest, rho.factors.clone())))
}
