//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Flips each column so that its largest-magnitude entry is positive.
pub fn fix_signs(mut v: DMatrix<f64>) -> DMatrix<f64> {
    for mut col in v.column_iter_mut() {
        let mut best = 0.0_f64;
        let mut sign = 1.0;
        for x in col.iter() {
            // strict comparison keeps the first of tied entries
            if x.abs() > best + 1e-14 * best.max(1.0) {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
    v
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues descending.
pub fn sym_eigen_desc(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_fn(a.nrows(), n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, fix_signs(vectors))
}

/// Top-`d` eigenvectors of a symmetric matrix together with all eigenvalues.
pub fn top_eigenvectors(a: &DMatrix<f64>, d: usize) -> (DVector<f64>, DMatrix<f64>) {
    let (values, vectors) = sym_eigen_desc(a);
    (values, vectors.columns(0, d).into_owned())
}

/// Orthonormal basis for the column span (thin QR, positive diagonal of R).
pub fn orthonormalize(a: &DMatrix<f64>) -> DMatrix<f64> {
    orthonormalize_with_r(a).0
}

/// Thin QR `a = Q R` with `diag(R) >= 0`.
pub fn orthonormalize_with_r(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = a.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..r.nrows() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
            r.row_mut(j).neg_mut();
        }
    }
    (q, r)
}

/// Largest deviation of `a' a` from the identity.
pub fn orthonormality_error(a: &DMatrix<f64>) -> f64 {
    let g = a.transpose() * a;
    let d = g.nrows();
    (&g - DMatrix::identity(d, d)).amax()
}

/// `|| A A' - B B' ||_F` for column-orthonormal `A` and `B`.
pub fn projection_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let pa = a * a.transpose();
    let pb = b * b.transpose();
    (pa - pb).norm()
}

/// Principal angles (radians, ascending) between two column-orthonormal bases.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let m = a.transpose() * b;
    let sv = m.singular_values();
    let mut angles: Vec<f64> = sv.iter().map(|s| s.clamp(-1.0, 1.0).acos()).collect();
    angles.sort_by(|x, y| x.partial_cmp(y).unwrap());
    angles
}

/// `(A + lambda I)^{-1/2}` for symmetric positive semidefinite `A`.
/// Returns `None` if the regularized matrix is not positive definite.
pub fn inv_sqrt_psd(a: &DMatrix<f64>, lambda: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let (values, vectors) = sym_eigen_desc(&(a + DMatrix::identity(n, n) * lambda));
    let scale = values.max().abs().max(1.0);
    if values.iter().any(|v| *v <= 1e-13 * scale) {
        return None;
    }
    let d = DMatrix::from_diagonal(&values.map(|v| 1.0 / v.sqrt()));
    Some(&vectors * d * vectors.transpose())
}
