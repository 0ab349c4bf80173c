//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn czero() -> C64 {
    C64::new(0.0, 0.0)
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted ascending.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let h = hermitian_part(m);
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(m.nrows(), order.len(), |r, k| eig.eigenvectors[(r, order[k])]);
    (values, vectors)
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigen(m).0[0]
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// Largest entry of `m - m^*` in modulus.
pub fn hermitian_defect(m: &CMat) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// Lower Cholesky factor `L` with `m = L L^*`.
pub fn cholesky_lower(m: &CMat) -> Option<CMat> {
    hermitian_part(m).cholesky().map(|c| c.l())
}

pub fn inverse(m: &CMat) -> Option<CMat> {
    m.clone().try_inverse()
}

/// Inverse of a Hermitian positive-definite matrix, refusing matrices whose
/// smallest eigenvalue falls below `floor` times the largest.
pub fn hpd_inverse(m: &CMat, floor: f64) -> Option<CMat> {
    let (vals, vecs) = hermitian_eigen(m);
    let top = *vals.last()?;
    if top <= 0.0 || vals[0] <= floor * top {
        return None;
    }
    let d = CMat::from_diagonal(&CVec::from_iterator(vals.len(), vals.iter().map(|v| c(1.0 / v))));
    Some(&vecs * d * vecs.adjoint())
}

/// Real 2n x 2n form of a Hermitian matrix `G = A + iB` acting on `(Re u, Im u)`:
/// `2 Re(u^T G conj(u))`.
pub fn real_form(g: &CMat) -> DMatrix<f64> {
    let n = g.nrows();
    let mut r = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let a = g[(i, j)].re;
            let b = g[(i, j)].im;
            r[(i, j)] = 2.0 * a;
            r[(n + i, n + j)] = 2.0 * a;
            r[(i, n + j)] = 2.0 * b;
            r[(n + i, j)] = -2.0 * b;
        }
    }
    (&r + r.transpose()) * 0.5
}

/// `u^T G conj(u)`.
pub fn quadratic(g: &CMat, u: &[C64]) -> C64 {
    let mut s = czero();
    for a in 0..u.len() {
        for b in 0..u.len() {
            s += g[(a, b)] * u[a] * u[b].conj();
        }
    }
    s
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Orthonormal basis of the column span of `m` (modified Gram-Schmidt with
/// re-orthogonalisation); columns with relative norm below `tol` are dropped.
pub fn orthonormal_columns(m: &CMat, tol: f64) -> CMat {
    let scale = m.column_iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-300);
    let mut cols: Vec<CVec> = Vec::new();
    for col in m.column_iter() {
        let mut v: CVec = col.into_owned();
        for _ in 0..2 {
            for q in &cols {
                let p = q.dotc(&v);
                v -= q * p;
            }
        }
        let nv = v.norm();
        if nv > tol * scale {
            cols.push(v / c(nv));
        }
    }
    if cols.is_empty() {
        return CMat::zeros(m.nrows(), 0);
    }
    CMat::from_columns(&cols)
}
