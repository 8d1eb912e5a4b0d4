//! Dense complex matrix kernels.
//!
//! Everything the rate expressions need: Kronecker products, column
//! stacking, Hermitian eigen/singular value decompositions, log-determinants
//! of `I + A` forms evaluated in the log domain, and the Euclidean projection
//! onto the set of unit-trace PSD matrices.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`. Every routine that consumes a
//! nominally Hermitian matrix symmetrizes it first, since Kronecker assembly
//! and products like `H Q Hᴴ` lose exact Hermitian symmetry to round-off.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Relative cutoff for reduced (rank-revealing) decompositions.
pub const RANK_TOL: f64 = 1e-10;

const EIG_EPS: f64 = 1e-15;
const EIG_MAX_ITER: usize = 10_000;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn real(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Builds a matrix from row-major entries.
pub fn from_rows(rows: usize, cols: usize, entries: &[Complex64]) -> CMatrix {
    assert_eq!(rows * cols, entries.len(), "entry count must equal rows*cols");
    CMatrix::from_row_slice(rows, cols, entries)
}

pub fn diag_real(values: &[f64]) -> CMatrix {
    let n = values.len();
    CMatrix::from_fn(n, n, |i, j| if i == j { real(values[i]) } else { ZERO })
}

/// `(A + Aᴴ) / 2`.
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    assert!(a.is_square(), "hermitian_part needs a square matrix");
    (a + a.adjoint()).scale(0.5)
}

pub fn is_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Real trace of a (nominally Hermitian) matrix.
pub fn trace_re(a: &CMatrix) -> f64 {
    a.trace().re
}

/// `Re tr(Aᴴ B)`, the real Frobenius inner product.
pub fn inner_re(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Kronecker product `A ⊗ B` with dimensions `(r_A r_B) × (c_A c_B)`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = CMatrix::zeros(ra * rb, ca * cb);
    for j in 0..ca {
        for i in 0..ra {
            let s = a[(i, j)];
            if s == ZERO {
                continue;
            }
            for q in 0..cb {
                for p in 0..rb {
                    out[(i * rb + p, j * cb + q)] = s * b[(p, q)];
                }
            }
        }
    }
    out
}

/// Column-stacking vectorization, returned as an `(r c) × 1` matrix.
pub fn vec(a: &CMatrix) -> CMatrix {
    // nalgebra storage is column-major, so the raw slice is already vec(A).
    CMatrix::from_column_slice(a.len(), 1, a.as_slice())
}

/// Entrywise conjugate.
pub fn conj(a: &CMatrix) -> CMatrix {
    a.map(|z| z.conj())
}

/// Outer product `u vᴴ`.
pub fn outer(u: &CVector, v: &CVector) -> CMatrix {
    u * v.adjoint()
}

/// Hermitian eigendecomposition with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct HermEig {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermEig {
    /// `V diag(f(λ)) Vᴴ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &lam) in self.values.iter().enumerate() {
            let s = f(lam);
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        hermitian_part(&(scaled * self.vectors.adjoint()))
    }

    pub fn max_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

/// Eigendecomposition of the Hermitian part of `a`.
pub fn eigh(a: &CMatrix) -> Result<HermEig> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!("eigh needs a square matrix, got {}x{}", a.nrows(), a.ncols())));
    }
    if !is_finite(a) {
        return Err(Error::NonFinite("eigh input"));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(HermEig { values: vec![], vectors: CMatrix::zeros(0, 0) });
    }
    let h = hermitian_part(a);
    let eig = SymmetricEigen::try_new(h, EIG_EPS, EIG_MAX_ITER)
        .ok_or(Error::NoConvergence { what: "eigh", iterations: EIG_MAX_ITER })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    Ok(HermEig { values, vectors })
}

/// Reduced SVD `A = U diag(σ) Vᴴ` with σ descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    pub sigma: Vec<f64>,
    pub v: CMatrix,
}

impl Svd {
    /// Number of singular values above `RANK_TOL · σ_max`.
    pub fn rank(&self) -> usize {
        let smax = self.sigma.first().copied().unwrap_or(0.0);
        self.sigma.iter().filter(|&&s| s > RANK_TOL * smax && s > 0.0).count()
    }
}

pub fn svd(a: &CMatrix) -> Result<Svd> {
    if !is_finite(a) {
        return Err(Error::NonFinite("svd input"));
    }
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return Ok(Svd { u: CMatrix::zeros(m, 0), sigma: vec![], v: CMatrix::zeros(n, 0) });
    }
    let dec = SVD::try_new(a.clone(), true, true, EIG_EPS, EIG_MAX_ITER)
        .ok_or(Error::NoConvergence { what: "svd", iterations: EIG_MAX_ITER })?;
    let u = dec.u.expect("requested U");
    let v_t = dec.v_t.expect("requested Vᴴ");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| dec.singular_values[j].total_cmp(&dec.singular_values[i]));
    let sigma = order.iter().map(|&i| dec.singular_values[i]).collect();
    let u_sorted = CMatrix::from_fn(m, k, |r, c| u[(r, order[c])]);
    let v_sorted = CMatrix::from_fn(n, k, |r, c| v_t[(order[c], r)].conj());
    Ok(Svd { u: u_sorted, sigma, v: v_sorted })
}

/// Cholesky factor `L` of a Hermitian positive definite matrix, with the
/// diagonal pivots `L_ii²` reported for log-det accumulation.
fn cholesky_pivots(a: &CMatrix, min_pivot: f64) -> Result<(CMatrix, Vec<f64>)> {
    let n = a.nrows();
    let mut l = CMatrix::zeros(n, n);
    let mut pivots = Vec::with_capacity(n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > min_pivot) {
            return Err(Error::NonPsd { pivot: d });
        }
        pivots.push(d);
        let ljj = d.sqrt();
        l[(j, j)] = real(ljj);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok((l, pivots))
}

/// `log₂|I + A|` for Hermitian PSD `A`, as a sum of log Cholesky pivots of
/// `I + A` so that large SNR scalings never overflow.
pub fn logdet_ipa(a: &CMatrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch("logdet_ipa needs a square matrix".into()));
    }
    if !is_finite(a) {
        return Err(Error::NonFinite("logdet_ipa input"));
    }
    let mut m = hermitian_part(a);
    for i in 0..m.nrows() {
        m[(i, i)] += ONE;
    }
    let (_, pivots) = cholesky_pivots(&m, 1e-12)?;
    Ok(pivots.iter().map(|p| p.log2()).sum())
}

/// `log₂|det M|` for a general square matrix via LU pivots. Used for the
/// non-Hermitian product forms `I + A B` whose determinant is real positive.
pub fn log2_abs_det(m: &CMatrix) -> f64 {
    assert!(m.is_square());
    if m.nrows() == 0 {
        return 0.0;
    }
    let lu = m.clone().lu();
    let u = lu.u();
    (0..u.nrows()).map(|i| u[(i, i)].norm().log2()).sum()
}

/// Inverse of a Hermitian positive definite matrix via Cholesky.
pub fn inv_hpd(a: &CMatrix) -> Result<CMatrix> {
    let h = hermitian_part(a);
    let (l, _) = cholesky_pivots(&h, 0.0)?;
    let n = h.nrows();
    // Solve L Y = I, then Lᴴ X = Y.
    let mut y = identity(n);
    for col in 0..n {
        for i in 0..n {
            let mut s = y[(i, col)];
            for k in 0..i {
                s -= l[(i, k)] * y[(k, col)];
            }
            y[(i, col)] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[(i, col)];
            for k in (i + 1)..n {
                s -= l[(k, i)].conj() * y[(k, col)];
            }
            y[(i, col)] = s / l[(i, i)];
        }
    }
    Ok(hermitian_part(&y))
}

/// General inverse, for the non-Hermitian `I + A Q` forms.
pub fn inv(m: &CMatrix) -> Result<CMatrix> {
    m.clone().try_inverse().ok_or(Error::Singular)
}

/// Principal square root of the PSD part of a Hermitian matrix.
pub fn psd_sqrt(a: &CMatrix) -> Result<CMatrix> {
    let e = eigh(a)?;
    Ok(e.reconstruct_with(|l| l.max(0.0).sqrt()))
}

/// Euclidean projection of `v` onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return vec![];
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k as f64 + 1.0);
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Frobenius-nearest Hermitian PSD matrix with unit trace.
pub fn project_psd_trace1(a: &CMatrix) -> Result<CMatrix> {
    let e = eigh(a)?;
    let p = project_simplex(&e.values);
    let mut scaled = e.vectors.clone();
    for (j, &pj) in p.iter().enumerate() {
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= pj;
        }
    }
    Ok(hermitian_part(&(scaled * e.vectors.adjoint())))
}
