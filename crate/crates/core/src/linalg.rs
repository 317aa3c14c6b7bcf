//! Dense kernels shared by the update rules: a sorted, sign-normalized
//! symmetric eigendecomposition and a ridge-regularized right solve.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative asymmetry accepted by [`eigh_ascending`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// The `l` smallest eigenpairs of a symmetric matrix.
///
/// Eigenvalues are returned ascending. Each eigenvector column is flipped so
/// that its largest-magnitude entry is positive; among equal magnitudes the
/// lowest row index decides. Equal eigenvalues keep the order produced by the
/// underlying solver, which is deterministic.
pub fn eigh_ascending(s: &DMatrix<f64>, l: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = s.nrows();
    if s.ncols() != d {
        return Err(Error::Dimension(format!(
            "eigh_ascending expects a square matrix, got {}x{}",
            d,
            s.ncols()
        )));
    }
    if l == 0 || l > d {
        return Err(Error::Dimension(format!(
            "requested {l} eigenpairs of a {d}x{d} matrix"
        )));
    }
    let scale = s.amax().max(1.0);
    for i in 0..d {
        for j in (i + 1)..d {
            if (s[(i, j)] - s[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidInput(format!(
                    "matrix is not symmetric at ({i}, {j}): {} vs {}",
                    s[(i, j)],
                    s[(j, i)]
                )));
            }
        }
    }

    let eig = SymmetricEigen::new(s.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let values = DVector::from_iterator(l, order.iter().take(l).map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(d, l);
    for (col, &src) in order.iter().take(l).enumerate() {
        let v = eig.eigenvectors.column(src);
        let mut pivot = 0;
        for r in 1..d {
            if v[r].abs() > v[pivot].abs() {
                pivot = r;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(col, &(v * sign));
    }
    Ok((values, vectors))
}

/// Solves `X (A + eps I) = B` for `X`.
///
/// For positive semidefinite `A` this is the minimizer of
/// `tr(X A Xᵀ)/2 − tr(B Xᵀ) + eps‖X‖²/2`, i.e. the ridge-stabilized form of
/// `B A⁻¹` used by the centroid updates.
pub fn solve_regularized(a: &DMatrix<f64>, b: &DMatrix<f64>, eps: f64) -> Result<DMatrix<f64>> {
    let c = a.nrows();
    if a.ncols() != c {
        return Err(Error::Dimension(format!(
            "regularized solve expects a square system matrix, got {}x{}",
            c,
            a.ncols()
        )));
    }
    if b.ncols() != c {
        return Err(Error::Dimension(format!(
            "right-hand side has {} columns, system is {c}x{c}",
            b.ncols()
        )));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidInput(format!(
            "ridge eps must be positive and finite, got {eps}"
        )));
    }
    let mut system = a.transpose();
    for i in 0..c {
        system[(i, i)] += eps;
    }
    system
        .lu()
        .solve(&b.transpose())
        .map(|xt| xt.transpose())
        .ok_or_else(|| Error::InvalidInput("regularized system is singular".into()))
}
