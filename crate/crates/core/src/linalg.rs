//! Dense complex linear-algebra helpers shared by the reduction, chain and
//! pairing code. Everything here is a thin layer over nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn to_faer(m: &CMatrix) -> faer::Mat<C64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, C64>) -> CMatrix {
    CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin singular value decomposition, singular values in decreasing order.
/// Returns `(u, s, v)` with `m = u diag(s) v^H`, `u` of size `rows x r` and
/// `v` of size `cols x r`, `r = min(rows, cols)`.
///
/// nalgebra's complex SVD loses accuracy on matrices with entries near
/// rounding level, so the decomposition is delegated to faer.
pub fn svd(m: &CMatrix) -> (CMatrix, Vec<f64>, CMatrix) {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        let r = rows.min(cols);
        return (CMatrix::identity(rows, r), Vec::new(), CMatrix::identity(cols, r));
    }
    match to_faer(m).thin_svd() {
        Ok(dec) => {
            let s = dec.S().column_vector();
            let s: Vec<f64> = (0..s.nrows()).map(|k| s[k].re).collect();
            (from_faer(dec.U()), s, from_faer(dec.V()))
        }
        Err(_) => {
            let r = rows.min(cols);
            let nan = C64::new(f64::NAN, f64::NAN);
            (
                CMatrix::from_element(rows, r, nan),
                vec![f64::NAN; r],
                CMatrix::from_element(cols, r, nan),
            )
        }
    }
}

pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    match to_faer(m).singular_values() {
        Ok(mut s) => {
            s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
            s
        }
        Err(_) => vec![f64::NAN; m.nrows().min(m.ncols())],
    }
}

/// Minimum-norm least-squares solution, dropping singular values below
/// `rel_tol * s_max`. `None` if the decomposition failed.
pub fn lstsq(a: &CMatrix, b: &CMatrix, rel_tol: f64) -> Option<CMatrix> {
    let (u, s, v) = svd(a);
    if s.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let smax = s.first().copied().unwrap_or(0.0);
    let mut y = u.adjoint() * b;
    for (k, &sk) in s.iter().enumerate() {
        let inv = if sk > rel_tol * smax && sk > 0.0 { 1.0 / sk } else { 0.0 };
        y.row_mut(k).scale_mut(inv);
    }
    Some(v * y)
}

/// 2-norm condition number; `inf` for singular or empty-rank matrices,
/// `1` for 0x0.
pub fn cond(m: &CMatrix) -> f64 {
    let s = singular_values(m);
    if s.is_empty() {
        return 1.0;
    }
    let lo = *s.last().unwrap();
    if lo == 0.0 {
        f64::INFINITY
    } else {
        s[0] / lo
    }
}

pub fn norm2(m: &CMatrix) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Orthonormal basis of the orthogonal complement of the column span of `q`
/// (columns of `q` assumed orthonormal).
pub fn orth_complement(q: &CMatrix) -> CMatrix {
    let n = q.nrows();
    let k = q.ncols();
    if k == 0 {
        return CMatrix::identity(n, n);
    }
    if k == n {
        return CMatrix::zeros(n, 0);
    }
    let proj = CMatrix::identity(n, n) - q * q.adjoint();
    let (u, _, _) = svd(&proj);
    u.columns(0, n - k).into_owned()
}

/// Orthonormal basis of the numerical null space of `m`: right singular
/// vectors whose singular value is below `tol * s_max` (or exactly zero).
pub fn null_space(m: &CMatrix, rel_tol: f64) -> (CMatrix, Vec<f64>) {
    let cols = m.ncols();
    if m.nrows() == 0 {
        return (CMatrix::identity(cols, cols), Vec::new());
    }
    // pad to square so the decomposition carries a full right basis
    let padded = if m.nrows() < cols {
        let mut p = CMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let (_, s, v) = svd(&padded);
    let smax = s.first().copied().unwrap_or(0.0);
    let thresh = rel_tol * smax.max(f64::MIN_POSITIVE);
    let rank = s.iter().filter(|&&x| x > thresh).count();
    let basis = v.columns(rank, cols - rank).into_owned();
    (basis, s)
}

/// LU solve; `None` when the factorization reports singularity.
pub fn solve(a: &CMatrix, b: &CMatrix) -> Option<CMatrix> {
    if a.nrows() == 0 {
        return Some(CMatrix::zeros(0, b.ncols()));
    }
    a.clone().lu().solve(b)
}

/// Solve with full-pivot LU followed by iterative refinement steps.
pub fn solve_refined(a: &CMatrix, b: &CMatrix, steps: usize) -> Option<CMatrix> {
    if a.nrows() == 0 {
        return Some(CMatrix::zeros(0, b.ncols()));
    }
    let lu = a.clone().full_piv_lu();
    let mut x = lu.solve(b)?;
    for _ in 0..steps {
        let r = b - a * &x;
        let dx = lu.solve(&r)?;
        x += dx;
    }
    Some(x)
}

pub fn det(m: &CMatrix) -> C64 {
    if m.nrows() == 0 {
        return C64::new(1.0, 0.0);
    }
    m.clone().lu().determinant()
}

pub fn from_rows(rows: &[&[C64]]) -> CMatrix {
    let r = rows.len();
    let cc = rows.first().map(|x| x.len()).unwrap_or(0);
    CMatrix::from_fn(r, cc, |i, j| rows[i][j])
}

pub fn column(v: &CVector) -> CMatrix {
    CMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

pub fn deviation_from_orthonormal(q: &CMatrix) -> f64 {
    let g = q.adjoint() * q;
    max_abs(&(g - CMatrix::identity(q.ncols(), q.ncols())))
}
