//! Configuration error function on SE(3):
//!
//! `ψ(g̃) = ½ tr(χ (I − R̃)) + ½ p̃ᵀ K p̃`, with `χ = ½ tr(Γ) I − Γ`,
//!
//! together with its closed-form left-trivialized differential and Hessian.

use nalgebra::{Matrix3, Matrix6, RowVector6, SymmetricEigen, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::{self, DiffSteps};
use crate::error::{Error, Result};
use crate::liegroup::{hat3, sk3, vee3, Se3};

/// A configuration error function with its left-trivialized derivatives.
///
/// The default derivative implementations fall back to the numerical
/// operators of [`crate::calculus`].
pub trait ConfigurationErrorFunction {
    fn psi(&self, g: &Se3) -> f64;

    fn dpsi(&self, g: &Se3) -> RowVector6<f64> {
        let d = calculus::left_diff(|x: &Se3| Ok(self.psi(x)), g, DiffSteps::default().first)
            .expect("default step is positive");
        RowVector6::from_row_slice(d.as_slice())
    }

    fn hpsi(&self, g: &Se3) -> Matrix6<f64> {
        let h = calculus::left_hessian(|x: &Se3| Ok(self.psi(x)), g, &DiffSteps::default())
            .expect("default steps are positive");
        Matrix6::from_column_slice(h.as_slice())
    }
}

/// Gains of the SE(3) error function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ErrFunGains", into = "ErrFunGains")]
pub struct ErrFunParams {
    gamma: Matrix3<f64>,
    k: Matrix3<f64>,
    chi: Matrix3<f64>,
    theta: f64,
}

/// Serialized form: `Γ` and `K` as row-major 3×3 arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErrFunGains {
    pub gamma: [[f64; 3]; 3],
    pub k: [[f64; 3]; 3],
}

impl Default for ErrFunGains {
    fn default() -> Self {
        ErrFunGains {
            gamma: to_rows(&(Matrix3::identity() * 10.0)),
            k: to_rows(&(Matrix3::identity() * 5.0)),
        }
    }
}

fn to_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)]])
}

fn from_rows(a: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| a[i][j])
}

impl TryFrom<ErrFunGains> for ErrFunParams {
    type Error = Error;
    fn try_from(g: ErrFunGains) -> Result<Self> {
        ErrFunParams::new(from_rows(&g.gamma), from_rows(&g.k))
    }
}

impl From<ErrFunParams> for ErrFunGains {
    fn from(p: ErrFunParams) -> Self {
        ErrFunGains {
            gamma: to_rows(&p.gamma),
            k: to_rows(&p.k),
        }
    }
}

fn check_spd(name: &str, m: &Matrix3<f64>) -> Result<()> {
    if (m - m.transpose()).norm() > 1e-12 * (1.0 + m.norm()) {
        return Err(Error::param(name, "must be symmetric"));
    }
    let min = SymmetricEigen::new(*m).eigenvalues.min();
    if !(min > 0.0) {
        return Err(Error::param(name, format!("must be positive-definite (min eigenvalue {min})")));
    }
    Ok(())
}

impl ErrFunParams {
    pub fn new(gamma: Matrix3<f64>, k: Matrix3<f64>) -> Result<Self> {
        check_spd("gamma", &gamma)?;
        check_spd("k", &k)?;
        let chi = Matrix3::identity() * (0.5 * gamma.trace()) - gamma;
        let theta = SymmetricEigen::new(gamma).eigenvalues.min() + gamma.trace();
        Ok(ErrFunParams { gamma, k, chi, theta })
    }

    /// `Γ = γ I`, `K = κ I`.
    pub fn isotropic(gamma: f64, k: f64) -> Result<Self> {
        ErrFunParams::new(Matrix3::identity() * gamma, Matrix3::identity() * k)
    }

    pub fn gamma(&self) -> &Matrix3<f64> {
        &self.gamma
    }

    pub fn k(&self) -> &Matrix3<f64> {
        &self.k
    }

    pub fn chi(&self) -> &Matrix3<f64> {
        &self.chi
    }

    /// `Θ = λ_min(Γ) + tr(Γ)`.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Default monitoring threshold `θ₀ = 0.9 Θ`.
    pub fn theta0(&self) -> f64 {
        0.9 * self.theta
    }
}

impl ConfigurationErrorFunction for ErrFunParams {
    fn psi(&self, g: &Se3) -> f64 {
        psi(g, self)
    }

    fn dpsi(&self, g: &Se3) -> RowVector6<f64> {
        dpsi(g, self)
    }

    fn hpsi(&self, g: &Se3) -> Matrix6<f64> {
        hpsi(g, self)
    }
}

pub fn psi(g: &Se3, p: &ErrFunParams) -> f64 {
    let (r, x) = (g.rotation(), g.translation());
    0.5 * (p.chi * (Matrix3::identity() - r)).trace() + 0.5 * x.dot(&(p.k * x))
}

/// `d^L ψ = [sk(χR̃)^∨ᵀ, p̃ᵀ K R̃]`.
pub fn dpsi(g: &Se3, p: &ErrFunParams) -> RowVector6<f64> {
    let (r, x) = (g.rotation(), g.translation());
    let rot = vee3(&sk3(&(p.chi * r)));
    let tr = r.transpose() * p.k * x;
    RowVector6::new(rot.x, rot.y, rot.z, tr.x, tr.y, tr.z)
}

/// Left-translated Hessian
/// `[[½(tr(χR̃) I − R̃ᵀχ), 0], [R̃ᵀ (K p̃)^ R̃, R̃ᵀ K R̃]]`.
///
/// The rotational block is `D^L` of `sk(χR̃)^∨`, whose transpose-free form
/// `½(tr(χR̃) I − χR̃)` only coincides with it when `χR̃` is symmetric.
pub fn hpsi(g: &Se3, p: &ErrFunParams) -> Matrix6<f64> {
    let (r, x) = (g.rotation(), g.translation());
    let chi_r = p.chi * r;
    let rt = r.transpose();
    let mut h = Matrix6::zeros();
    h.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&((Matrix3::identity() * chi_r.trace() - chi_r.transpose()) * 0.5));
    h.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(rt * hat3(&(p.k * x)) * r));
    h.fixed_view_mut::<3, 3>(3, 3).copy_from(&(rt * p.k * r));
    h
}

/// `Θ` of a parameter set.
pub fn theta(p: &ErrFunParams) -> f64 {
    p.theta()
}

/// Empirical constants of `b₁ ‖d^Lψ‖² ≤ ψ ≤ b₂ ‖d^Lψ‖²` over a sample cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraticBounds {
    pub b1: f64,
    pub b2: f64,
    pub samples: usize,
}

impl QuadraticBounds {
    pub fn holds_for(&self, g: &Se3, p: &ErrFunParams) -> bool {
        let v = psi(g, p);
        let d2 = dpsi(g, p).norm_squared();
        let slack = 1e-12 * (1.0 + v);
        self.b1 * d2 <= v + slack && v <= self.b2 * d2 + slack
    }
}

/// Draws `count` elements with `0 < ψ ≤ θ₀` by rejection sampling.
pub fn sample_sublevel<R: Rng>(
    p: &ErrFunParams,
    theta0: f64,
    count: usize,
    rng: &mut R,
) -> Vec<Se3> {
    let kmin = SymmetricEigen::new(p.k).eigenvalues.min();
    let radius = (2.0 * theta0 / kmin).sqrt();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if axis.norm() < 1e-6 {
            continue;
        }
        let angle = rng.gen_range(0.0..std::f64::consts::PI);
        let pos = Vector3::new(
            rng.gen_range(-radius..radius),
            rng.gen_range(-radius..radius),
            rng.gen_range(-radius..radius),
        );
        let g = Se3::from_rotation_vector(&(axis.normalize() * angle), pos);
        let v = psi(&g, p);
        if v > 0.0 && v <= theta0 {
            out.push(g);
        }
    }
    out
}

/// Fits `b₁ = min ψ/‖dψ‖²` and `b₂ = max ψ/‖dψ‖²` over the samples.
/// Samples sitting on a critical point (`‖dψ‖ ≈ 0`) are skipped.
pub fn fit_quadratic_bounds(p: &ErrFunParams, samples: &[Se3]) -> Option<QuadraticBounds> {
    let mut b1 = f64::INFINITY;
    let mut b2 = 0.0f64;
    let mut used = 0;
    for g in samples {
        let d2 = dpsi(g, p).norm_squared();
        if d2 < 1e-12 {
            continue;
        }
        let ratio = psi(g, p) / d2;
        b1 = b1.min(ratio);
        b2 = b2.max(ratio);
        used += 1;
    }
    (used > 0).then_some(QuadraticBounds { b1, b2, samples: used })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector6;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn case_study() -> ErrFunParams {
        ErrFunParams::isotropic(10.0, 5.0).unwrap()
    }

    fn aniso() -> ErrFunParams {
        ErrFunParams::new(
            Matrix3::new(10.0, 1.0, 0.0, 1.0, 12.0, -0.5, 0.0, -0.5, 9.0),
            Matrix3::new(5.0, 0.3, 0.1, 0.3, 3.0, 0.0, 0.1, 0.0, 4.0),
        )
        .unwrap()
    }

    fn pose() -> impl Strategy<Value = Se3> {
        (prop::array::uniform3(-1.0f64..1.0), 0.01f64..3.0, prop::array::uniform3(-5.0f64..5.0))
            .prop_filter("axis", |(a, _, _)| Vector3::from(*a).norm() > 1e-3)
            .prop_map(|(a, ang, p)| {
                Se3::from_rotation_vector(&(Vector3::from(a).normalize() * ang), Vector3::from(p))
            })
    }

    #[test]
    fn psi_hand_values() {
        let p = case_study();
        assert_eq!(psi(&Se3::identity(), &p), 0.0);
        let shift = Se3::from_translation(Vector3::new(1.0, 0.0, 0.0));
        assert!((psi(&shift, &p) - 2.5).abs() < 1e-15);
        let flip = Se3::from_rotation_vector(&Vector3::new(0.0, 0.0, PI), Vector3::zeros());
        assert!((psi(&flip, &p) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn dpsi_hand_values() {
        let p = case_study();
        assert_eq!(dpsi(&Se3::identity(), &p), RowVector6::zeros());
        let shift = Se3::from_translation(Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(dpsi(&shift, &p), RowVector6::new(0.0, 0.0, 0.0, 5.0, 0.0, 0.0));
    }

    #[test]
    fn hpsi_at_identity() {
        let h = hpsi(&Se3::identity(), &case_study());
        assert!((h - Matrix6::identity() * 5.0).norm() < 1e-14);

        let p = aniso();
        let h = hpsi(&Se3::identity(), &p);
        let mut expect = Matrix6::zeros();
        expect
            .fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&((Matrix3::identity() * p.chi().trace() - p.chi()) * 0.5));
        expect.fixed_view_mut::<3, 3>(3, 3).copy_from(p.k());
        assert!((h - expect).norm() < 1e-14);
        assert!((h - h.transpose()).norm() < 1e-14);
        assert!(SymmetricEigen::new(h).eigenvalues.min() > 0.0);
    }

    #[test]
    fn hpsi_lower_left_vanishes_without_translation() {
        let g = Se3::from_rotation_vector(&Vector3::new(0.3, -0.7, 1.1), Vector3::zeros());
        let h = hpsi(&g, &aniso());
        assert_eq!(h.fixed_view::<3, 3>(3, 0).into_owned(), Matrix3::zeros());
    }

    #[test]
    fn theta_values() {
        assert_eq!(theta(&case_study()), 40.0);
        assert!((theta(&ErrFunParams::isotropic(1.0, 1.0).unwrap()) - 4.0).abs() < 1e-12);
        let p = ErrFunParams::new(Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0)), Matrix3::identity())
            .unwrap();
        assert!((theta(&p) - 7.0).abs() < 1e-12);
        assert!((case_study().theta0() - 36.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_gains() {
        assert!(ErrFunParams::isotropic(-1.0, 5.0).is_err());
        let asym = Matrix3::new(1.0, 2.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(ErrFunParams::new(asym, Matrix3::identity()).is_err());
    }

    #[test]
    fn closed_forms_match_numeric_fallbacks() {
        struct Numeric<'a>(&'a ErrFunParams);
        impl ConfigurationErrorFunction for Numeric<'_> {
            fn psi(&self, g: &Se3) -> f64 {
                psi(g, self.0)
            }
        }
        let p = aniso();
        let g = Se3::exp(&Vector6::new(0.9, -0.4, 1.3, 2.0, -3.0, 0.5));
        let num = Numeric(&p);
        let d = dpsi(&g, &p);
        assert!((num.dpsi(&g) - d).norm() <= 1e-5 * d.norm());
        let h = hpsi(&g, &p);
        assert!((num.hpsi(&g) - h).norm() <= 1e-3 * h.norm());
    }

    #[test]
    fn quadratic_bounds_hold_on_cloud() {
        let p = case_study();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cloud = sample_sublevel(&p, p.theta0(), 500, &mut rng);
        let bounds = fit_quadratic_bounds(&p, &cloud).unwrap();
        assert!(bounds.b1 > 0.0 && bounds.b1 <= bounds.b2);
        assert!(cloud.iter().all(|g| bounds.holds_for(g, &p)));
    }

    #[test]
    fn serde_roundtrip_rederives_chi() {
        let p = aniso();
        let json = serde_json::to_string(&p).unwrap();
        let back: ErrFunParams = serde_json::from_str(&json).unwrap();
        assert!((back.chi() - p.chi()).norm() < 1e-15);
        assert!(serde_json::from_str::<ErrFunParams>(r#"{"gamma":[[1,0,0],[0,1,0],[0,0,-1]],"k":[[1,0,0],[0,1,0],[0,0,1]]}"#).is_err());
    }

    proptest! {
        #[test]
        // Holds for any Γ but only for isotropic K: the inverse carries −R̃ᵀp̃.
        fn symmetric_under_inverse(g in pose()) {
            let p = ErrFunParams::new(*aniso().gamma(), Matrix3::identity() * 5.0).unwrap();
            prop_assert!((psi(&g.inverse(), &p) - psi(&g, &p)).abs() < 1e-10);
        }

        #[test]
        fn positive_away_from_identity(g in pose()) {
            prop_assert!(psi(&g, &case_study()) > 0.0);
        }
    }
}
