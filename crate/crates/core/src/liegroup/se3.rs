use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Matrix6, SVD, Vector3, Vector6};

use super::so3::exp_coefficients;
use super::{check_len, hat3, vee3, MatrixLieGroup, So3, MEMBERSHIP_TOL};
use crate::error::{Error, Result};

/// Rigid transformation `[[R, p], [0, 1]]`.
///
/// Stored as its rotation and translation blocks so the bottom row is exact
/// by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Se3 {
    r: Matrix3<f64>,
    p: Vector3<f64>,
}

impl Se3 {
    pub fn identity() -> Self {
        Se3 {
            r: Matrix3::identity(),
            p: Vector3::zeros(),
        }
    }

    pub fn from_parts(r: Matrix3<f64>, p: Vector3<f64>) -> Result<Self> {
        let rot = So3::from_matrix(r).map_err(|e| match e {
            Error::NotInGroup { reason, .. } => Error::NotInGroup {
                group: "SE(3)",
                reason,
            },
            other => other,
        })?;
        if !p.iter().all(|x| x.is_finite()) {
            return Err(Error::NotInGroup {
                group: "SE(3)",
                reason: "non-finite translation".into(),
            });
        }
        Ok(Se3 { r: *rot.matrix(), p })
    }

    #[cfg(test)]
    pub(crate) fn from_parts_unchecked(r: Matrix3<f64>, p: Vector3<f64>) -> Self {
        Se3 { r, p }
    }

    pub fn from_translation(p: Vector3<f64>) -> Self {
        Se3 {
            r: Matrix3::identity(),
            p,
        }
    }

    /// `exp(ω^)` placed next to the translation `p`.
    pub fn from_rotation_vector(w: &Vector3<f64>, p: Vector3<f64>) -> Self {
        Se3 {
            r: *So3::exp(w).matrix(),
            p,
        }
    }

    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self> {
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::NotInGroup {
                group: "SE(3)",
                reason: format!("bottom row {bottom:?} is not [0 0 0 1]"),
            });
        }
        Se3::from_parts(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.r
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.p
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.r);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.p);
        m
    }

    /// `[[ω^, v], [0, 0]]`.
    pub fn hat(xi: &Vector6<f64>) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&hat3(&xi.fixed_rows::<3>(0).into_owned()));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&xi.fixed_rows::<3>(3));
        m
    }

    pub fn vee(m: &Matrix4<f64>) -> Vector6<f64> {
        let w = vee3(&m.fixed_view::<3, 3>(0, 0).into_owned());
        Vector6::new(w.x, w.y, w.z, m[(0, 3)], m[(1, 3)], m[(2, 3)])
    }

    /// Closed-form exponential. For `ω ≠ 0` the translation is
    /// `(I − e^{ω^}) ω^ v / ‖ω‖² + ω ωᵀ v / ‖ω‖²`, evaluated here in the
    /// algebraically identical form `v + B ω^v + C ω^²v` whose coefficients
    /// stay accurate for small rotations.
    pub fn exp(xi: &Vector6<f64>) -> Self {
        let w: Vector3<f64> = xi.fixed_rows::<3>(0).into_owned();
        let v: Vector3<f64> = xi.fixed_rows::<3>(3).into_owned();
        let theta = w.norm();
        if theta == 0.0 {
            return Se3::from_translation(v);
        }
        let (a, b, c) = exp_coefficients(theta);
        let wh = hat3(&w);
        let wh2 = wh * wh;
        let r = Matrix3::identity() + wh * a + wh2 * b;
        let p = v + wh * v * b + wh2 * v * c;
        Se3 { r, p }
    }

    /// `[Rᵀ, −Rᵀp]`.
    pub fn inverse(&self) -> Self {
        let rt = self.r.transpose();
        Se3 {
            r: rt,
            p: -(rt * self.p),
        }
    }

    /// `Ad_g = [[R, 0], [p^ R, R]]`.
    pub fn adjoint(&self) -> Matrix6<f64> {
        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.r);
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.r);
        m.fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&(hat3(&self.p) * self.r));
        m
    }

    /// `ad_ξ = [[ω^, 0], [v^, ω^]]`.
    pub fn ad(xi: &Vector6<f64>) -> Matrix6<f64> {
        let wh = hat3(&xi.fixed_rows::<3>(0).into_owned());
        let vh = hat3(&xi.fixed_rows::<3>(3).into_owned());
        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&wh);
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&wh);
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&vh);
        m
    }

    pub fn rotation_angle(&self) -> f64 {
        So3::from_matrix_unchecked(self.r).angle()
    }

    pub fn orthogonality_defect(&self) -> f64 {
        (self.r.transpose() * self.r - Matrix3::identity()).norm()
    }

    pub fn is_valid(&self) -> bool {
        self.orthogonality_defect() <= MEMBERSHIP_TOL
            && self.r.determinant() > 0.0
            && self.r.iter().chain(self.p.iter()).all(|x| x.is_finite())
    }

    pub fn is_finite(&self) -> bool {
        self.r.iter().chain(self.p.iter()).all(|x| x.is_finite())
    }

    /// Replaces `R` by its polar factor `U Vᵀ`.
    pub fn reprojected(&self) -> Self {
        let svd = SVD::new(self.r, true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * vt;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * vt;
        }
        Se3 { r, p: self.p }
    }

    /// The twelve free entries: `R` column-major, then `p`.
    pub fn flat12(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        out[..9].copy_from_slice(self.r.as_slice());
        out[9..].copy_from_slice(self.p.as_slice());
        out
    }

    pub fn from_flat12(v: &[f64]) -> Result<Self> {
        if v.len() != 12 {
            return Err(Error::dims(12, v.len()));
        }
        Se3::from_parts(
            Matrix3::from_column_slice(&v[..9]),
            Vector3::from_column_slice(&v[9..]),
        )
    }
}

impl Default for Se3 {
    fn default() -> Self {
        Se3::identity()
    }
}

impl std::ops::Mul for Se3 {
    type Output = Se3;
    fn mul(self, rhs: Se3) -> Se3 {
        Se3 {
            r: self.r * rhs.r,
            p: self.r * rhs.p + self.p,
        }
    }
}

impl MatrixLieGroup for Se3 {
    const MATRIX_DIM: usize = 4;
    const ALGEBRA_DIM: usize = 6;
    const NAME: &'static str = "SE(3)";

    fn identity() -> Self {
        Se3::identity()
    }

    fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(4, 4, self.matrix().as_slice())
    }

    fn try_from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if m.shape() != (4, 4) {
            return Err(Error::dims("4x4", format!("{}x{}", m.nrows(), m.ncols())));
        }
        Se3::from_matrix(&Matrix4::from_column_slice(m.as_slice()))
    }

    fn compose(&self, other: &Self) -> Self {
        *self * *other
    }

    fn inverse(&self) -> Self {
        Se3::inverse(self)
    }

    fn exp_algebra(xi: &DVector<f64>) -> Result<Self> {
        check_len(xi, 6)?;
        Ok(Se3::exp(&Vector6::from_column_slice(xi.as_slice())))
    }

    fn hat_algebra(xi: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_len(xi, 6)?;
        let h = Se3::hat(&Vector6::from_column_slice(xi.as_slice()));
        Ok(DMatrix::from_column_slice(4, 4, h.as_slice()))
    }

    fn vee_algebra(m: &DMatrix<f64>) -> Result<DVector<f64>> {
        if m.shape() != (4, 4) {
            return Err(Error::dims("4x4", format!("{}x{}", m.nrows(), m.ncols())));
        }
        let v = Se3::vee(&Matrix4::from_column_slice(m.as_slice()));
        Ok(DVector::from_column_slice(v.as_slice()))
    }

    fn adjoint_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(6, 6, self.adjoint().as_slice())
    }

    fn ad_matrix(xi: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_len(xi, 6)?;
        let a = Se3::ad(&Vector6::from_column_slice(xi.as_slice()));
        Ok(DMatrix::from_column_slice(6, 6, a.as_slice()))
    }
}
