//! Dense complex linear algebra for small Hermitian problems.
//!
//! Everything in this crate lives in dimensions of at most a few hundred, so
//! plain dense `nalgebra` matrices are used throughout. Hermitian spectra come
//! from the tridiagonalisation + implicit QL routine behind
//! [`nalgebra::SymmetricEigen`], with zero-row deflation and a cyclic Jacobi
//! fallback for the rare inputs on which that routine returns NaNs.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Row-major dense complex matrix used for every operator in the crate.
pub type ComplexMatrix = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(d: usize) -> ComplexMatrix {
    ComplexMatrix::identity(d, d)
}

pub fn is_square(m: &ComplexMatrix) -> bool {
    m.nrows() == m.ncols()
}

fn require_square(m: &ComplexMatrix, what: &str) -> Result<()> {
    if is_square(m) {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Largest entrywise deviation from Hermiticity, `max |M_ij - conj(M_ji)|`.
pub fn hermiticity_defect(m: &ComplexMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn is_hermitian(m: &ComplexMatrix, tol: f64) -> bool {
    is_square(m) && hermiticity_defect(m) <= tol
}

/// `(M + M†) / 2`.
pub fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()) * c(0.5, 0.0)
}

pub fn trace(m: &ComplexMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted
/// ascending; column `k` of the returned matrix is the eigenvector of
/// eigenvalue `k`. Only the Hermitian part of `m` is used.
pub fn hermitian_eigen(m: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), ComplexMatrix::zeros(0, 0));
    }
    let (raw_values, raw_vectors) = decompose(&hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| raw_values[a].total_cmp(&raw_values[b]));
    let values = order.iter().map(|&k| raw_values[k]).collect();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &raw_vectors.column(src));
    }
    (values, vectors)
}

/// Unsorted decomposition of a Hermitian matrix.
///
/// The QL routine can emit NaNs on matrices with exactly vanishing rows
/// (common for Choi matrices of permutation-like channels), so those rows
/// are deflated first and cyclic Jacobi is the last resort.
fn decompose(h: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let n = h.nrows();
    if n == 1 {
        return (vec![h[(0, 0)].re], identity(1));
    }
    let eig = h.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|v| v.is_finite())
        && eig.eigenvectors.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    {
        return (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors);
    }
    let active: Vec<usize> = (0..n)
        .filter(|&i| (0..n).any(|j| h[(i, j)] != ZERO))
        .collect();
    if active.len() == n {
        return jacobi_eigen(h);
    }
    let mut values = vec![0.0; n];
    let mut vectors = ComplexMatrix::zeros(n, n);
    let mut slot = 0;
    if !active.is_empty() {
        let sub = h.select_rows(&active).select_columns(&active);
        let (sv, svec) = decompose(&sub);
        for (k, &v) in sv.iter().enumerate() {
            values[slot] = v;
            for (r, &i) in active.iter().enumerate() {
                vectors[(i, slot)] = svec[(r, k)];
            }
            slot += 1;
        }
    }
    for i in (0..n).filter(|i| active.binary_search(i).is_err()) {
        vectors[(i, slot)] = ONE;
        slot += 1;
    }
    (values, vectors)
}

/// Cyclic complex Jacobi: each step removes the phase of `a_pq` and then
/// applies a real Givens rotation.
fn jacobi_eigen(h: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let n = h.nrows();
    let mut a = h.clone();
    let mut v = identity(n);
    let scale = a.norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag <= 1e-300 {
                    continue;
                }
                // D = diag(.., conj(phase) at q, ..) makes a_pq real.
                let phase = apq / mag;
                for k in 0..n {
                    a[(k, q)] *= phase.conj();
                }
                for k in 0..n {
                    a[(q, k)] *= phase;
                }
                for k in 0..n {
                    v[(k, q)] *= phase.conj();
                }
                let (app, aqq) = (a[(p, p)].re, a[(q, q)].re);
                let theta = (aqq - app) / (2.0 * mag);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..n {
                    let (kp, kq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = kp * cs - kq * sn;
                    a[(k, q)] = kp * sn + kq * cs;
                }
                for k in 0..n {
                    let (pk, qk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = pk * cs - qk * sn;
                    a[(q, k)] = pk * sn + qk * cs;
                }
                for k in 0..n {
                    let (kp, kq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = kp * cs - kq * sn;
                    v[(k, q)] = kp * sn + kq * cs;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)].re).collect(), v)
}

pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Vec<f64> {
    let n = m.nrows();
    if n == 1 {
        return vec![m[(0, 0)].re];
    }
    let mut v: Vec<f64> = hermitian_part(m).symmetric_eigenvalues().iter().copied().collect();
    if v.iter().any(|x| !x.is_finite()) {
        return hermitian_eigen(m).0;
    }
    v.sort_by(f64::total_cmp);
    v
}

pub fn min_eigenvalue(m: &ComplexMatrix) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// `V diag(f(λ)) V†` for a Hermitian matrix.
pub fn spectral_map(m: &ComplexMatrix, f: impl Fn(f64) -> f64) -> ComplexMatrix {
    let (values, vectors) = hermitian_eigen(m);
    from_spectrum(&values.iter().map(|&l| f(l)).collect::<Vec<_>>(), &vectors)
}

pub fn from_spectrum(values: &[f64], vectors: &ComplexMatrix) -> ComplexMatrix {
    let n = vectors.nrows();
    let mut scaled = vectors.clone();
    for (k, &l) in values.iter().enumerate() {
        scaled.column_mut(k).scale_mut(l);
    }
    let mut out = ComplexMatrix::zeros(n, n);
    out.gemm(ONE, &scaled, &vectors.adjoint(), ZERO);
    out
}

/// Nearest positive semidefinite matrix in Frobenius norm (negative
/// eigenvalues clipped to zero).
pub fn clip_psd(m: &ComplexMatrix) -> ComplexMatrix {
    spectral_map(m, |l| l.max(0.0))
}

/// Trace norm `Tr sqrt(M† M)`. Hermitian input uses the eigenvalue route;
/// anything else falls back to singular values.
pub fn trace_norm(m: &ComplexMatrix) -> Result<f64> {
    require_square(m, "trace-norm argument")?;
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let scale = m.iter().fold(0.0f64, |a, z| a.max(z.norm())).max(1.0);
    if hermiticity_defect(m) <= 1e-12 * scale {
        Ok(hermitian_eigenvalues(m).iter().map(|l| l.abs()).sum())
    } else {
        Ok(m.clone().singular_values().iter().sum())
    }
}

/// Trace norm of a matrix already known to be Hermitian.
pub(crate) fn trace_norm_hermitian(m: &ComplexMatrix) -> f64 {
    hermitian_eigenvalues(m).iter().map(|l| l.abs()).sum()
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Multi-index helpers for row-major tensor-product ordering (first factor is
/// the most significant digit).
pub(crate) fn split_index(mut idx: usize, dims: &[usize], out: &mut [usize]) {
    for k in (0..dims.len()).rev() {
        out[k] = idx % dims[k];
        idx /= dims[k];
    }
}

pub(crate) fn join_index(digits: &[usize], dims: &[usize]) -> usize {
    digits
        .iter()
        .zip(dims)
        .fold(0, |acc, (&d, &n)| acc * n + d)
}

fn check_factors(m: &ComplexMatrix, dims: &[usize]) -> Result<()> {
    require_square(m, "matrix")?;
    let prod: usize = dims.iter().product();
    if prod != m.nrows() {
        return Err(Error::Dimension(format!(
            "factor dimensions {dims:?} multiply to {prod}, matrix is {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Partial trace keeping the subsystems listed in `keep` (in their original
/// order).
pub fn partial_trace(m: &ComplexMatrix, dims: &[usize], keep: &[usize]) -> Result<ComplexMatrix> {
    check_factors(m, dims)?;
    for &k in keep {
        if k >= dims.len() {
            return Err(Error::Index(format!(
                "subsystem {k} does not exist in a {}-partite state",
                dims.len()
            )));
        }
    }
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    if keep_sorted.len() != keep.len() {
        return Err(Error::Index(format!("duplicate subsystem in {keep:?}")));
    }
    let kept_dims: Vec<usize> = keep_sorted.iter().map(|&k| dims[k]).collect();
    let dk: usize = kept_dims.iter().product();
    let n = m.nrows();
    let mut out = ComplexMatrix::zeros(dk, dk);
    let mut ri = vec![0usize; dims.len()];
    let mut ci = vec![0usize; dims.len()];
    let mut kr = vec![0usize; keep_sorted.len()];
    let mut kc = vec![0usize; keep_sorted.len()];
    for r in 0..n {
        split_index(r, dims, &mut ri);
        for col in 0..n {
            let v = m[(r, col)];
            if v == ZERO {
                continue;
            }
            split_index(col, dims, &mut ci);
            let traced_match = (0..dims.len())
                .filter(|k| keep_sorted.binary_search(k).is_err())
                .all(|k| ri[k] == ci[k]);
            if !traced_match {
                continue;
            }
            for (slot, &k) in keep_sorted.iter().enumerate() {
                kr[slot] = ri[k];
                kc[slot] = ci[k];
            }
            out[(join_index(&kr, &kept_dims), join_index(&kc, &kept_dims))] += v;
        }
    }
    Ok(out)
}

/// Partial transpose on the subsystems flagged in `transpose`.
pub fn partial_transpose(m: &ComplexMatrix, dims: &[usize], transpose: &[bool]) -> Result<ComplexMatrix> {
    check_factors(m, dims)?;
    if transpose.len() != dims.len() {
        return Err(Error::Dimension(format!(
            "transpose mask has {} entries for {} subsystems",
            transpose.len(),
            dims.len()
        )));
    }
    let n = m.nrows();
    let mut out = ComplexMatrix::zeros(n, n);
    let mut ri = vec![0usize; dims.len()];
    let mut ci = vec![0usize; dims.len()];
    for r in 0..n {
        split_index(r, dims, &mut ri);
        for col in 0..n {
            split_index(col, dims, &mut ci);
            let (mut a, mut b) = (ri.clone(), ci.clone());
            for k in 0..dims.len() {
                if transpose[k] {
                    std::mem::swap(&mut a[k], &mut b[k]);
                }
            }
            out[(join_index(&a, dims), join_index(&b, dims))] = m[(r, col)];
        }
    }
    Ok(out)
}

/// Reorders tensor factors: old subsystem `i` ends up at position `perm[i]`.
pub fn permute_subsystems(m: &ComplexMatrix, dims: &[usize], perm: &[usize]) -> Result<ComplexMatrix> {
    check_factors(m, dims)?;
    let k = dims.len();
    let mut seen = vec![false; k];
    if perm.len() != k || perm.iter().any(|&p| p >= k || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::Index(format!("{perm:?} is not a permutation of {k} subsystems")));
    }
    let mut new_dims = vec![0; k];
    for i in 0..k {
        new_dims[perm[i]] = dims[i];
    }
    let n = m.nrows();
    let map: Vec<usize> = (0..n)
        .map(|idx| {
            let mut old = vec![0; k];
            split_index(idx, dims, &mut old);
            let mut new = vec![0; k];
            for i in 0..k {
                new[perm[i]] = old[i];
            }
            join_index(&new, &new_dims)
        })
        .collect();
    let mut out = ComplexMatrix::zeros(n, n);
    for r in 0..n {
        for col in 0..n {
            out[(map[r], map[col])] = m[(r, col)];
        }
    }
    Ok(out)
}

/// Isometric real coordinates for Hermitian `n x n` matrices.
///
/// Layout: the `n` diagonal entries, then `sqrt(2) Re M_pq` for `p < q`, then
/// `sqrt(2) Im M_pq` for `p < q`, both in row-major upper-triangle order. The
/// Euclidean inner product of two coordinate vectors equals `Re Tr(A† B)`.
#[derive(Debug, Clone)]
pub struct HermitianCoords {
    n: usize,
    offset: Vec<usize>,
}

impl HermitianCoords {
    pub fn new(n: usize) -> Self {
        // offset[p] = index of pair (p, p+1) among upper-triangle pairs
        let mut offset = Vec::with_capacity(n);
        let mut acc = 0;
        for p in 0..n {
            offset.push(acc);
            acc += n - p - 1;
        }
        Self { n, offset }
    }

    pub fn side(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn pairs(&self) -> usize {
        self.n * (self.n - 1) / 2
    }

    fn pair(&self, p: usize, q: usize) -> usize {
        debug_assert!(p < q);
        self.offset[p] + (q - p - 1)
    }

    pub fn diag(&self, p: usize) -> usize {
        p
    }

    pub fn re(&self, p: usize, q: usize) -> usize {
        self.n + self.pair(p, q)
    }

    pub fn im(&self, p: usize, q: usize) -> usize {
        self.n + self.pairs() + self.pair(p, q)
    }

    pub fn to_vec(&self, m: &ComplexMatrix) -> DVector<f64> {
        let mut v = DVector::zeros(self.len());
        self.write(m, v.as_mut_slice());
        v
    }

    pub fn write(&self, m: &ComplexMatrix, out: &mut [f64]) {
        let s = std::f64::consts::SQRT_2;
        let n = self.n;
        for p in 0..n {
            out[p] = m[(p, p)].re;
            for q in p + 1..n {
                // average the two triangles so slightly non-Hermitian input
                // maps to its Hermitian part
                let z = (m[(p, q)] + m[(q, p)].conj()) * 0.5;
                out[self.re(p, q)] = s * z.re;
                out[self.im(p, q)] = s * z.im;
            }
        }
    }

    pub fn to_matrix(&self, v: &[f64]) -> ComplexMatrix {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let n = self.n;
        let mut m = ComplexMatrix::zeros(n, n);
        for p in 0..n {
            m[(p, p)] = c(v[p], 0.0);
            for q in p + 1..n {
                let z = c(v[self.re(p, q)] * h, v[self.im(p, q)] * h);
                m[(p, q)] = z;
                m[(q, p)] = z.conj();
            }
        }
        m
    }

    /// Converts the real functional `X -> Re Σ coeff·X[p,q]` on Hermitian
    /// matrices into a coordinate row, accumulated into `row`.
    pub fn accumulate_functional(&self, p: usize, q: usize, coeff: Complex64, row: &mut [f64]) {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        if p == q {
            row[p] += coeff.re;
        } else if p < q {
            row[self.re(p, q)] += coeff.re * h;
            row[self.im(p, q)] -= coeff.im * h;
        } else {
            row[self.re(q, p)] += coeff.re * h;
            row[self.im(q, p)] += coeff.im * h;
        }
    }
}

/// Euclidean projection of `v` onto `{x : Σ|x_i| <= radius}`.
pub fn project_l1_ball(v: &[f64], radius: f64) -> Vec<f64> {
    let total: f64 = v.iter().map(|x| x.abs()).sum();
    if total <= radius {
        return v.to_vec();
    }
    if radius <= 0.0 {
        return vec![0.0; v.len()];
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &m) in mags.iter().enumerate() {
        cum += m;
        let t = (cum - radius) / (k + 1) as f64;
        if m > t {
            theta = t;
        } else {
            break;
        }
    }
    v.iter()
        .map(|&x| x.signum() * (x.abs() - theta).max(0.0))
        .collect()
}

/// Projection of a Hermitian matrix onto the trace-norm ball of the given
/// radius (eigenvalue soft-thresholding).
pub fn project_trace_ball(m: &ComplexMatrix, radius: f64) -> ComplexMatrix {
    let (values, vectors) = hermitian_eigen(m);
    let total: f64 = values.iter().map(|l| l.abs()).sum();
    if total <= radius {
        return hermitian_part(m);
    }
    from_spectrum(&project_l1_ball(&values, radius), &vectors)
}
