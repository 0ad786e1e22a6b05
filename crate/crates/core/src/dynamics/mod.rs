//! Forced Euler–Poincaré dynamics on SE(3), tracking-error dynamics and the
//! ideal feedback-linearizing law.
//!
//! Plant: `ġ = g ξ^`, `ξ̇ = 𝕀⁻¹ ad_ξᵀ 𝕀 ξ + 𝕀⁻¹ 𝔼 u + μ + d`.
//!
//! Errors relative to a desired trajectory `(g_d, ξ_d, ξ̇_d)` are
//! `g̃ = g_d⁻¹ g` and `ξ̃ = ξ − Ad_{g̃⁻¹} ξ_d`, which evolve as
//! `ġ̃ = g̃ ξ̃^`, `ξ̃̇ = τ + 𝔹 u + d` with `𝔹 = 𝕀⁻¹ 𝔼`.

mod integrator;

pub use integrator::{dexpinv, Integrator, LieOde, LieState, Scheme, StepStats};

use nalgebra::{DMatrix, Matrix6, SymmetricEigen, Vector6};
use serde::{Deserialize, Serialize};

use crate::errfun::{dpsi, ErrFunParams};
use crate::error::{Error, Result};
use crate::liegroup::{config_error, vel_error, Se3};

/// Time-varying model of one rigid body. `mu` is acceleration-level: physical
/// wrenches enter as `𝕀⁻¹ · wrench`.
pub trait PlantModel {
    fn inertia(&self, t: f64) -> Matrix6<f64>;
    /// Diagonal of the actuator-efficiency matrix `𝔼(t)`, entries in `(0, 1]`.
    fn fault(&self, t: f64) -> Vector6<f64>;
    fn mu(&self, g: &Se3, xi: &Vector6<f64>, t: f64) -> Vector6<f64>;
    fn disturbance(&self, t: f64) -> Vector6<f64>;
}

/// Constant-inertia body with healthy actuators, no unmodelled terms and no
/// disturbance.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidBody {
    pub inertia: Matrix6<f64>,
}

impl PlantModel for RigidBody {
    fn inertia(&self, _t: f64) -> Matrix6<f64> {
        self.inertia
    }

    fn fault(&self, _t: f64) -> Vector6<f64> {
        Vector6::repeat(1.0)
    }

    fn mu(&self, _g: &Se3, _xi: &Vector6<f64>, _t: f64) -> Vector6<f64> {
        Vector6::zeros()
    }

    fn disturbance(&self, _t: f64) -> Vector6<f64> {
        Vector6::zeros()
    }
}

/// `𝕀⁻¹ b` through a Cholesky factorization; fails if `𝕀` is not
/// positive-definite.
pub fn solve_inertia(inertia: &Matrix6<f64>, b: &Vector6<f64>, t: f64) -> Result<Vector6<f64>> {
    inertia
        .cholesky()
        .map(|c| c.solve(b))
        .ok_or(Error::SingularInertia { t })
}

/// Square matrix given in config either as a scalar multiple of the identity,
/// a diagonal, or full rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixInput {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl MatrixInput {
    pub fn to_matrix(&self, n: usize) -> Result<DMatrix<f64>> {
        match self {
            MatrixInput::Scalar(s) => Ok(DMatrix::identity(n, n) * *s),
            MatrixInput::Diagonal(d) if d.len() == n => {
                Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)))
            }
            MatrixInput::Diagonal(d) => Err(Error::dims(n, d.len())),
            MatrixInput::Full(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::dims(format!("{n}x{n}"), "ragged or wrong-sized rows"));
                }
                Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            }
        }
    }
}

/// Feedback gains of the ideal law: damping `A` and stiffness scale `k_p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GainInput", into = "GainInput")]
pub struct GainParams {
    a: Matrix6<f64>,
    a_inv: Matrix6<f64>,
    kp: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainInput {
    pub a: MatrixInput,
    pub kp: f64,
}

impl Default for GainInput {
    fn default() -> Self {
        GainInput {
            a: MatrixInput::Scalar(4.0),
            kp: 1.0,
        }
    }
}

impl TryFrom<GainInput> for GainParams {
    type Error = Error;
    fn try_from(g: GainInput) -> Result<Self> {
        let a = g.a.to_matrix(6)?;
        GainParams::new(Matrix6::from_column_slice(a.as_slice()), g.kp)
    }
}

impl From<GainParams> for GainInput {
    fn from(g: GainParams) -> Self {
        let rows = (0..6).map(|i| (0..6).map(|j| g.a[(i, j)]).collect()).collect();
        GainInput {
            a: MatrixInput::Full(rows),
            kp: g.kp,
        }
    }
}

impl GainParams {
    pub fn new(a: Matrix6<f64>, kp: f64) -> Result<Self> {
        if (a - a.transpose()).norm() > 1e-12 * (1.0 + a.norm()) {
            return Err(Error::param("a", "must be symmetric"));
        }
        let min = SymmetricEigen::new(a).eigenvalues.min();
        if !(min > 0.0) {
            return Err(Error::param("a", format!("must be positive-definite (min eigenvalue {min})")));
        }
        if !(kp >= 1.0) {
            return Err(Error::param("kp", format!("must be at least 1, got {kp}")));
        }
        let a_inv = a.try_inverse().ok_or_else(|| Error::param("a", "not invertible"))?;
        Ok(GainParams { a, a_inv, kp })
    }

    pub fn isotropic(a: f64, kp: f64) -> Result<Self> {
        GainParams::new(Matrix6::identity() * a, kp)
    }

    pub fn a(&self) -> &Matrix6<f64> {
        &self.a
    }

    pub fn a_inv(&self) -> &Matrix6<f64> {
        &self.a_inv
    }

    pub fn kp(&self) -> f64 {
        self.kp
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemState {
    pub g: Se3,
    pub xi: Vector6<f64>,
}

/// Desired configuration, body velocity and body acceleration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Desired {
    pub g: Se3,
    pub xi: Vector6<f64>,
    pub xi_dot: Vector6<f64>,
}

impl Desired {
    /// A fixed pose.
    pub fn hover(g: Se3) -> Self {
        Desired {
            g,
            xi: Vector6::zeros(),
            xi_dot: Vector6::zeros(),
        }
    }
}

/// Tracking errors `(g̃, ξ̃)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorState {
    pub g: Se3,
    pub xi: Vector6<f64>,
}

impl ErrorState {
    pub fn between(state: &SystemState, desired: &Desired) -> Self {
        let g = config_error(&desired.g, &state.g);
        ErrorState {
            g,
            xi: vel_error(&g, &state.xi, &desired.xi),
        }
    }

    /// Recovers the plant state `(g_d g̃, ξ̃ + Ad_{g̃⁻¹} ξ_d)`.
    pub fn to_state(&self, desired: &Desired) -> SystemState {
        SystemState {
            g: desired.g * self.g,
            xi: self.xi + self.g.inverse().adjoint() * desired.xi,
        }
    }
}

/// `𝕀⁻¹ ad_ξᵀ 𝕀 ξ`.
pub fn coadjoint_term(inertia: &Matrix6<f64>, xi: &Vector6<f64>, t: f64) -> Result<Vector6<f64>> {
    solve_inertia(inertia, &(Se3::ad(xi).transpose() * (inertia * xi)), t)
}

/// `ξ̇` of the plant.
pub fn plant_rhs<P: PlantModel + ?Sized>(
    state: &SystemState,
    u: &Vector6<f64>,
    plant: &P,
    t: f64,
) -> Result<Vector6<f64>> {
    let inertia = plant.inertia(t);
    let actuated = plant.fault(t).component_mul(u);
    let forced = Se3::ad(&state.xi).transpose() * (inertia * state.xi) + actuated;
    Ok(solve_inertia(&inertia, &forced, t)? + plant.mu(&state.g, &state.xi, t) + plant.disturbance(t))
}

/// `τ = 𝕀⁻¹ ad_ξᵀ 𝕀 ξ + μ + ad_ξ̃ Ad_{g̃⁻¹} ξ_d − Ad_{g̃⁻¹} ξ̇_d`, with `ξ`
/// recovered from the errors and `μ` already evaluated at `(g_d g̃, ξ)`.
pub fn tau(
    err: &ErrorState,
    desired: &Desired,
    inertia: &Matrix6<f64>,
    mu: &Vector6<f64>,
    t: f64,
) -> Result<Vector6<f64>> {
    let ad_inv = err.g.inverse().adjoint();
    let transported = ad_inv * desired.xi;
    let xi = err.xi + transported;
    Ok(coadjoint_term(inertia, &xi, t)? + mu + Se3::ad(&err.xi) * transported - ad_inv * desired.xi_dot)
}

/// Ideal law `u* = 𝕀(−τ − A ξ̃ − k_p (d^Lψ)ᵀ)`. Requires the true model.
pub fn ideal_control(
    err: &ErrorState,
    desired: &Desired,
    inertia: &Matrix6<f64>,
    mu: &Vector6<f64>,
    gains: &GainParams,
    errfun: &ErrFunParams,
    t: f64,
) -> Result<Vector6<f64>> {
    let tau = tau(err, desired, inertia, mu, t)?;
    Ok(inertia * (-tau - pd_feedback(err, gains, errfun)))
}

/// `A ξ̃ + k_p (d^Lψ)ᵀ`.
pub fn pd_feedback(err: &ErrorState, gains: &GainParams, errfun: &ErrFunParams) -> Vector6<f64> {
    gains.a * err.xi + dpsi(&err.g, errfun).transpose() * gains.kp
}

/// Nominal closed loop: `ġ̃* = g̃* (ξ̃*)^`, `ξ̃̇* = −A ξ̃* − k_p (d^Lψ)ᵀ`.
/// Returns the body twist of `g̃*` and `ξ̃̇*`.
pub fn nominal_rhs(err: &ErrorState, gains: &GainParams, errfun: &ErrFunParams) -> (Vector6<f64>, Vector6<f64>) {
    (err.xi, -pd_feedback(err, gains, errfun))
}

/// Error dynamics `ġ̃ = g̃ ξ̃^`, `ξ̃̇ = τ + 𝔹 u + d`. Returns the body twist of
/// `g̃` and `ξ̃̇`.
pub fn error_rhs<P: PlantModel + ?Sized>(
    err: &ErrorState,
    u: &Vector6<f64>,
    desired: &Desired,
    plant: &P,
    t: f64,
) -> Result<(Vector6<f64>, Vector6<f64>)> {
    let state = err.to_state(desired);
    let inertia = plant.inertia(t);
    let mu = plant.mu(&state.g, &state.xi, t);
    let tau = tau(err, desired, &inertia, &mu, t)?;
    let b_u = solve_inertia(&inertia, &plant.fault(t).component_mul(u), t)?;
    Ok((err.xi, tau + b_u + plant.disturbance(t)))
}
