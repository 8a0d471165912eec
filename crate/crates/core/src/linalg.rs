//! Small dense helpers on top of nalgebra.

use nalgebra::{DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::{CMatrix, CVector};

/// `‖M*M − I‖_max`.
pub fn unitarity_defect(m: &CMatrix) -> f64 {
    let g = m.adjoint() * m;
    max_abs_diff(&g, &CMatrix::identity(m.ncols(), m.ncols()))
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn hermitian_defect(m: &CMatrix) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues sorted descending.
/// The input is symmetrized first, so small Hermitian defects are tolerated.
pub fn hermitian_eigen(m: &CMatrix) -> (DVector<f64>, CMatrix) {
    let sym = (m + m.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = CMatrix::zeros(m.nrows(), order.len());
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Hermitian square root of a PSD matrix; eigenvalues in `[-clip, 0)` are
/// treated as zero. Returns `None` if an eigenvalue is below `-clip`.
pub fn psd_sqrt(m: &CMatrix, clip: f64) -> Option<CMatrix> {
    let (values, vectors) = hermitian_eigen(m);
    if values.iter().any(|&v| v < -clip) {
        return None;
    }
    let roots = values.map(|v| Complex64::new(v.max(0.0).sqrt(), 0.0));
    Some(&vectors * CMatrix::from_diagonal(&roots) * vectors.adjoint())
}

/// Entry-wise product of equal-shape matrices. Panics on an empty slice.
pub fn hadamard(mats: &[CMatrix]) -> CMatrix {
    let mut out = mats[0].clone();
    for m in &mats[1..] {
        out.component_mul_assign(m);
    }
    out
}

/// `λᵀ M λ` for a real vector `λ`.
pub fn real_quadratic_form(lambdas: &[f64], m: &CMatrix) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, &li) in lambdas.iter().enumerate() {
        for (j, &lj) in lambdas.iter().enumerate() {
            acc += m[(i, j)] * (li * lj);
        }
    }
    acc
}

/// `⟨a, b⟩ = Σ aₘ conj(bₘ)`, matching the tensor scalar product.
pub fn inner(a: &CVector, b: &CVector) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eigen_sorted_and_reconstructs() {
        let m = CMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        let (vals, vecs) = hermitian_eigen(&m);
        assert!((vals[0] - 3.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
        let rec = &vecs * CMatrix::from_diagonal(&vals.map(|v| c(v, 0.0))) * vecs.adjoint();
        assert!(max_abs_diff(&rec, &m) < 1e-12);
    }

    #[test]
    fn sqrt_of_all_ones() {
        let j = CMatrix::from_element(2, 2, c(1.0, 0.0));
        let s = psd_sqrt(&j, 1e-10).unwrap();
        assert!(max_abs_diff(&(&s * &s), &j) < 1e-12);
        let neg = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0, 0.0), c(-0.1, 0.0)]));
        assert!(psd_sqrt(&neg, 1e-10).is_none());
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = CMatrix::from_diagonal(&CVector::from_vec(vec![c(0.3, 0.0), c(0.0, -0.9)]));
        assert!((spectral_norm(&m) - 0.9).abs() < 1e-14);
    }
}
