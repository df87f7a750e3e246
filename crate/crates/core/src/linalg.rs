//! Numerical rank, nullspaces and subspace angles.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Default relative singular-value tolerance for rank decisions.
pub const RANK_TOL: f64 = 1e-8;

/// Orthonormal basis of a numerical nullspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullspaceBasis {
    /// Columns are orthonormal basis vectors.
    pub basis: DMatrix<f64>,
    pub dimension: usize,
    /// All singular values, descending, including zeros from padding.
    pub singular_values: Vec<f64>,
}

/// SVD nullspace of `m`: right singular vectors whose singular value is below
/// `rel_tol · σ_max`.
pub fn nullspace(m: &DMatrix<f64>, rel_tol: f64) -> NullspaceBasis {
    let (rows, cols) = m.shape();
    let padded;
    let a = if rows < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        padded = p;
        &padded
    } else {
        m
    };
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let smax = sv.first().copied().unwrap_or(0.0);
    let null_idx: Vec<usize> = order.iter().copied().filter(|&i| !(svd.singular_values[i] > rel_tol * smax) || smax == 0.0).collect();
    let mut basis = DMatrix::zeros(cols, null_idx.len());
    for (c, &i) in null_idx.iter().enumerate() {
        basis.set_column(c, &v_t.row(i).transpose());
    }
    NullspaceBasis { dimension: null_idx.len(), basis, singular_values: sv }
}

/// Orthonormal basis for the column space of `a` (columns with relative
/// singular value above `rel_tol`).
pub fn orthonormalize(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    if a.ncols() == 0 {
        return a.clone();
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > rel_tol * smax).collect();
    let mut q = DMatrix::zeros(a.nrows(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        q.set_column(c, &u.column(i));
    }
    q
}

/// Largest principal angle between the column spans of `a` and `b`, radians.
/// Returns π/2 when the spans have different dimensions.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = orthonormalize(a, 1e-12);
    let qb = orthonormalize(b, 1e-12);
    if qa.ncols() != qb.ncols() {
        return std::f64::consts::FRAC_PI_2;
    }
    if qa.ncols() == 0 {
        return 0.0;
    }
    let residual = &qb - &qa * (qa.transpose() * &qb);
    let s = residual.svd(false, false).singular_values.max();
    s.clamp(0.0, 1.0).asin()
}

/// `‖M·N‖ / (‖M‖·‖N‖)` in Frobenius norms.
pub fn relative_product(m: &DMatrix<f64>, n: &DMatrix<f64>) -> f64 {
    let denom = m.norm() * n.norm();
    if denom == 0.0 {
        0.0
    } else {
        (m * n).norm() / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_has_trivial_kernel() {
        assert_eq!(nullspace(&DMatrix::identity(9, 9), RANK_TOL).dimension, 0);
    }

    #[test]
    fn wide_matrix_kernel() {
        let mut m = DMatrix::zeros(3, 6);
        m.view_mut((0, 0), (3, 3)).fill_with_identity();
        let ns = nullspace(&m, RANK_TOL);
        assert_eq!(ns.dimension, 3);
        assert!((&m * &ns.basis).norm() < 1e-14);
        let expected = DMatrix::from_fn(6, 3, |r, c| if r == c + 3 { 1.0 } else { 0.0 });
        assert!(max_principal_angle(&ns.basis, &expected) < 1e-12);
    }

    #[test]
    fn constructed_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for rank in 0..=8 {
            let a = DMatrix::from_fn(12, rank, |_, _| rng.random_range(-1.0..1.0));
            let b = DMatrix::from_fn(rank, 8, |_, _| rng.random_range(-1.0..1.0));
            let ns = nullspace(&(a * b), RANK_TOL);
            assert_eq!(ns.dimension, 8 - rank);
            let gram = ns.basis.transpose() * &ns.basis;
            assert!((gram - DMatrix::identity(8 - rank, 8 - rank)).norm() < 1e-10);
        }
    }

    #[test]
    fn principal_angles() {
        let a = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let b = DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 0.0]);
        assert!((max_principal_angle(&a, &b) - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        assert!(max_principal_angle(&a, &(a.clone() * 3.0)) < 1e-15);
    }
}
