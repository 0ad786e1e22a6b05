//! Matrix utilities and concrete matrix Lie group kernels.
//!
//! Twists are ordered `[ω; v]` (angular first). `breve` stacks matrices
//! column-major, which is also nalgebra's storage order.

mod se3;
mod so3;

pub use se3::Se3;
pub use so3::So3;

use nalgebra::{DMatrix, DVector, Dim, Matrix, Matrix3, RawStorage, Vector3, Vector6};

use crate::error::{Error, Result};

/// Orthogonality tolerance for group membership.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Frobenius norm, `sqrt(tr(BᵀB))`.
pub fn frob_norm<R: Dim, C: Dim, S: RawStorage<f64, R, C>>(b: &Matrix<f64, R, C, S>) -> f64 {
    let mut acc = 0.0;
    for j in 0..b.ncols() {
        for i in 0..b.nrows() {
            let x = b[(i, j)];
            acc += x * x;
        }
    }
    acc.sqrt()
}

/// Skew-symmetric part `½(B − Bᵀ)`.
pub fn sk(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !b.is_square() {
        return Err(Error::NotSquare {
            rows: b.nrows(),
            cols: b.ncols(),
        });
    }
    Ok((b - b.transpose()) * 0.5)
}

pub fn sk3(b: &Matrix3<f64>) -> Matrix3<f64> {
    (b - b.transpose()) * 0.5
}

/// Column-major flattening of an `M×K` matrix into `ℝ^{MK}`.
pub fn breve(b: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(b.as_slice())
}

/// Inverse of [`breve`] for a caller-supplied shape.
pub fn unbreve(v: &[f64], rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    if v.len() != rows * cols {
        return Err(Error::dims(format!("{rows}x{cols} = {}", rows * cols), v.len()));
    }
    Ok(DMatrix::from_column_slice(rows, cols, v))
}

/// `ω^`, so that `ω^ r = ω × r`.
pub fn hat3(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Inverse of [`hat3`]; reads the lower-triangular entries.
pub fn vee3(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// A matrix Lie group together with its `∧`/`∨` isomorphism in the natural
/// basis. Algebra vectors travel as dynamically sized vectors so that the
/// numerical calculus can stay group-agnostic.
pub trait MatrixLieGroup: Clone + std::fmt::Debug {
    /// `N`, the size of the matrix representation.
    const MATRIX_DIM: usize;
    /// `n`, the dimension of the group.
    const ALGEBRA_DIM: usize;
    const NAME: &'static str;

    fn identity() -> Self;
    fn to_matrix(&self) -> DMatrix<f64>;
    fn try_from_matrix(m: &DMatrix<f64>) -> Result<Self>;
    fn compose(&self, other: &Self) -> Self;
    fn inverse(&self) -> Self;
    fn exp_algebra(xi: &DVector<f64>) -> Result<Self>;
    fn hat_algebra(xi: &DVector<f64>) -> Result<DMatrix<f64>>;
    fn vee_algebra(m: &DMatrix<f64>) -> Result<DVector<f64>>;
    /// Matrix of `Ad_g` acting on algebra vectors.
    fn adjoint_matrix(&self) -> DMatrix<f64>;
    /// Matrix of `ad_ξ`.
    fn ad_matrix(xi: &DVector<f64>) -> Result<DMatrix<f64>>;
}

pub(crate) fn check_len(v: &DVector<f64>, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::dims(n, v.len()));
    }
    Ok(())
}

/// Configuration error `g̃ = g_d⁻¹ g`.
pub fn config_error(g_d: &Se3, g: &Se3) -> Se3 {
    g_d.inverse() * *g
}

/// Velocity error compatible with [`config_error`]: `ξ̃ = ξ − Ad_{g̃⁻¹} ξ_d`.
pub fn vel_error(g_tilde: &Se3, xi: &Vector6<f64>, xi_d: &Vector6<f64>) -> Vector6<f64> {
    xi - g_tilde.inverse().adjoint() * xi_d
}
