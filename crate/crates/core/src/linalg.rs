//! Internal dense linear algebra helpers shared by the finite-group and
//! Euclidean backends.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Eigendecomposition of a real symmetric matrix, eigenvalues ascending,
/// eigenvectors as matching columns. Checks Hermiticity on entry and the
/// residual `|Mv - lv| <= 1e-8 |M|` per pair on exit.
pub fn eig_sym_checked(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if m.nrows() != m.ncols() {
        return Err(Error::invalid("eig_sym: matrix not square"));
    }
    let asym = (0..m.nrows())
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| (m[(i, j)] - m[(j, i)]).abs())
        .fold(0.0f64, f64::max);
    let scale = m.iter().fold(0.0f64, |acc, x| acc.max(x.abs())).max(1.0);
    if asym > 1e-10 * scale {
        return Err(Error::invalid(format!(
            "eig_sym: matrix not symmetric (max asymmetry {asym:.3e})"
        )));
    }
    let se = nalgebra::SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vecs = DMatrix::<f64>::zeros(m.nrows(), m.ncols());
    for (col, &i) in order.iter().enumerate() {
        vecs.set_column(col, &se.eigenvectors.column(i));
    }
    let norm = vals
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for (col, &lam) in vals.iter().enumerate() {
        let v = vecs.column(col);
        let r = (m * v - lam * v).norm();
        if r > 1e-8 * norm {
            return Err(Error::internal(format!(
                "eig_sym: residual {r:.3e} exceeds 1e-8 * {norm:.3e}"
            )));
        }
    }
    Ok((vals, vecs))
}

/// Sorted eigenvalues only.
pub fn eigvals_sym(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(eig_sym_checked(m)?.0)
}

/// Numerical rank of a stacked-row matrix: singular values above
/// `rel_tol * sigma_max` count.
pub fn rank_of(m: &DMatrix<Complex64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.iter().fold(0.0f64, |a, &s| a.max(s));
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Orthonormal basis of the row space of `m` (right singular vectors with
/// singular value above `rel_tol * sigma_max`), returned as rows.
pub fn row_space_basis(m: &DMatrix<Complex64>, rel_tol: f64) -> Vec<DVector<Complex64>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("svd v_t requested");
    let smax = svd.singular_values.iter().fold(0.0f64, |a, &s| a.max(s));
    if smax == 0.0 {
        return Vec::new();
    }
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > rel_tol * smax)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect()
}

/// Kronecker-style accumulation of identities around a 1D factor:
/// `I_{pre} (x) m (x) I_{post}`.
pub fn kron_embed(m: &DMatrix<f64>, pre: usize, post: usize) -> DMatrix<f64> {
    let ipre = DMatrix::<f64>::identity(pre, pre);
    let ipost = DMatrix::<f64>::identity(post, post);
    ipre.kronecker(m).kronecker(&ipost)
}
