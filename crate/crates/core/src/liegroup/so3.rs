use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::{check_len, hat3, vee3, MatrixLieGroup, MEMBERSHIP_TOL};
use crate::error::{Error, Result};

/// Rotation group element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct So3 {
    r: Matrix3<f64>,
}

impl So3 {
    pub fn identity() -> Self {
        So3 {
            r: Matrix3::identity(),
        }
    }

    /// Checked constructor: `‖RᵀR − I‖ ≤ 1e-9` and `det R > 0`.
    pub fn from_matrix(r: Matrix3<f64>) -> Result<Self> {
        let defect = (r.transpose() * r - Matrix3::identity()).norm();
        if !(defect <= MEMBERSHIP_TOL) {
            return Err(Error::NotInGroup {
                group: "SO(3)",
                reason: format!("orthogonality defect {defect:e}"),
            });
        }
        if r.determinant() <= 0.0 {
            return Err(Error::NotInGroup {
                group: "SO(3)",
                reason: "determinant is not positive".into(),
            });
        }
        Ok(So3 { r })
    }

    pub(crate) fn from_matrix_unchecked(r: Matrix3<f64>) -> Self {
        So3 { r }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.r
    }

    /// Rodrigues' formula.
    pub fn exp(w: &Vector3<f64>) -> Self {
        let (a, b, _) = exp_coefficients(w.norm());
        let wh = hat3(w);
        So3 {
            r: Matrix3::identity() + wh * a + wh * wh * b,
        }
    }

    pub fn inverse(&self) -> Self {
        So3 {
            r: self.r.transpose(),
        }
    }

    pub fn adjoint(&self) -> Matrix3<f64> {
        self.r
    }

    pub fn ad(w: &Vector3<f64>) -> Matrix3<f64> {
        hat3(w)
    }

    /// Rotation angle `arccos((tr R − 1)/2)`, argument clamped to `[-1, 1]`.
    pub fn angle(&self) -> f64 {
        ((self.r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos()
    }

    pub fn orthogonality_defect(&self) -> f64 {
        (self.r.transpose() * self.r - Matrix3::identity()).norm()
    }
}

impl std::ops::Mul for So3 {
    type Output = So3;
    fn mul(self, rhs: So3) -> So3 {
        So3 { r: self.r * rhs.r }
    }
}

/// `(sin θ/θ, (1 − cos θ)/θ², (θ − sin θ)/θ³)`.
///
/// `B` uses the half-angle form to avoid cancellation; `C` switches to its
/// Taylor series below 0.25, where the direct quotient loses ~ε/θ² digits.
pub(crate) fn exp_coefficients(theta: f64) -> (f64, f64, f64) {
    let t2 = theta * theta;
    if theta < 1e-4 {
        return (1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0);
    }
    let (s, _) = theta.sin_cos();
    let half = (0.5 * theta).sin();
    let a = s / theta;
    let b = 2.0 * half * half / t2;
    let c = if theta < 0.25 {
        1.0 / 6.0 - t2 / 120.0 * (1.0 - t2 / 42.0 * (1.0 - t2 / 72.0 * (1.0 - t2 / 110.0)))
    } else {
        (theta - s) / (t2 * theta)
    };
    (a, b, c)
}

impl MatrixLieGroup for So3 {
    const MATRIX_DIM: usize = 3;
    const ALGEBRA_DIM: usize = 3;
    const NAME: &'static str = "SO(3)";

    fn identity() -> Self {
        So3::identity()
    }

    fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(3, 3, self.r.as_slice())
    }

    fn try_from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if m.shape() != (3, 3) {
            return Err(Error::dims("3x3", format!("{}x{}", m.nrows(), m.ncols())));
        }
        So3::from_matrix(Matrix3::from_column_slice(m.as_slice()))
    }

    fn compose(&self, other: &Self) -> Self {
        *self * *other
    }

    fn inverse(&self) -> Self {
        So3::inverse(self)
    }

    fn exp_algebra(xi: &DVector<f64>) -> Result<Self> {
        check_len(xi, 3)?;
        Ok(So3::exp(&Vector3::new(xi[0], xi[1], xi[2])))
    }

    fn hat_algebra(xi: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_len(xi, 3)?;
        let h = hat3(&Vector3::new(xi[0], xi[1], xi[2]));
        Ok(DMatrix::from_column_slice(3, 3, h.as_slice()))
    }

    fn vee_algebra(m: &DMatrix<f64>) -> Result<DVector<f64>> {
        if m.shape() != (3, 3) {
            return Err(Error::dims("3x3", format!("{}x{}", m.nrows(), m.ncols())));
        }
        let v = vee3(&Matrix3::from_column_slice(m.as_slice()));
        Ok(DVector::from_column_slice(v.as_slice()))
    }

    fn adjoint_matrix(&self) -> DMatrix<f64> {
        self.to_matrix()
    }

    fn ad_matrix(xi: &DVector<f64>) -> Result<DMatrix<f64>> {
        Self::hat_algebra(xi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn quarter_turn_about_z() {
        let r = So3::exp(&Vector3::new(0.0, 0.0, FRAC_PI_2));
        let expect = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((r.matrix() - expect).norm() < 1e-15);
        assert!((r.angle() - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn membership_is_checked() {
        assert!(So3::from_matrix(Matrix3::identity() * 2.0).is_err());
        assert!(So3::from_matrix(-Matrix3::<f64>::identity()).is_err());
        assert!(So3::from_matrix(*So3::exp(&Vector3::new(0.3, 0.2, 0.1)).matrix()).is_ok());
    }

    #[test]
    fn coefficients_match_high_precision_reference() {
        // Reference values at 40 digits, straddling both branch cutoffs.
        let table = [
            (1e-6, 0.99999999999983333, 0.49999999999995833, 0.16666666666665833),
            (9.9e-5, 0.9999999983665, 0.499999999591625, 0.16666666658499167),
            (1.01e-4, 0.99999999829983333, 0.49999999957495833, 0.16666666658165833),
            (0.01, 0.99998333341666647, 0.4999958333472222, 0.16666583333531746),
            (0.249, 0.98969848711778458, 0.4974219581539841, 0.16615075373325294),
            (0.251, 0.98953285981186797, 0.4973804648108162, 0.16614244516963273),
            (1.0, 0.84147098480789651, 0.45969769413186028, 0.15852901519210349),
            (3.0, 0.047040002686622407, 0.2211102774000495, 0.10588444414593084),
        ];
        for (t, a, b, c) in table {
            let got = exp_coefficients(t);
            assert!((got.0 - a).abs() < 2e-15, "A at {t}");
            assert!((got.1 - b).abs() < 2e-15, "B at {t}");
            assert!((got.2 - c).abs() < 2e-15, "C at {t}");
        }
    }
}
