//! Left-trivialized numerical differentiation on matrix Lie groups.
//!
//! Every probe is taken along a one-parameter subgroup through the base
//! point, `g · exp(ε η_i^)`, so evaluations never leave the group and no
//! ambient extension of the function is needed. Derivatives are expressed in
//! the natural basis of the algebra (the canonical basis of `ℝⁿ` under `∧`).

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};
use crate::liegroup::MatrixLieGroup;

/// Finite-difference step sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffSteps {
    /// Step for first derivatives (`d^L`, `D^L`, `∇^L`).
    pub first: f64,
    /// Outer step of the Hessian (differentiating `d^L f`).
    pub hessian_outer: f64,
    /// Inner step of the Hessian.
    pub hessian_inner: f64,
}

impl Default for DiffSteps {
    fn default() -> Self {
        DiffSteps {
            first: 1e-5,
            hessian_outer: 1e-4,
            hessian_inner: 1e-5,
        }
    }
}

fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::param("step", format!("must be positive, got {h}")));
    }
    Ok(())
}

fn basis(n: usize, i: usize, scale: f64) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[i] = scale;
    e
}

/// `g · exp(ε η_i^)` for the `i`-th basis direction.
fn probe<G: MatrixLieGroup>(g: &G, i: usize, eps: f64) -> Result<G> {
    Ok(g.compose(&G::exp_algebra(&basis(G::ALGEBRA_DIM, i, eps))?))
}

/// Left-trivialized differential `d^L_g f` of a scalar function, as a row.
pub fn left_diff<G, F>(f: F, g: &G, h: f64) -> Result<RowDVector<f64>>
where
    G: MatrixLieGroup,
    F: Fn(&G) -> Result<f64>,
{
    check_step(h)?;
    let n = G::ALGEBRA_DIM;
    let mut row = RowDVector::zeros(n);
    for i in 0..n {
        let plus = f(&probe(g, i, h)?)?;
        let minus = f(&probe(g, i, -h)?)?;
        row[i] = (plus - minus) / (2.0 * h);
    }
    Ok(row)
}

/// Left-trivialized Jacobian `D^L_g f` (`k×n`) of an `ℝᵏ`-valued function.
pub fn left_jacobian<G, F>(f: F, g: &G, h: f64) -> Result<DMatrix<f64>>
where
    G: MatrixLieGroup,
    F: Fn(&G) -> Result<DVector<f64>>,
{
    check_step(h)?;
    let n = G::ALGEBRA_DIM;
    let mut jac: Option<DMatrix<f64>> = None;
    for i in 0..n {
        let plus = f(&probe(g, i, h)?)?;
        let minus = f(&probe(g, i, -h)?)?;
        if plus.len() != minus.len() {
            return Err(Error::dims(plus.len(), minus.len()));
        }
        let jac = jac.get_or_insert_with(|| DMatrix::zeros(plus.len(), n));
        if jac.nrows() != plus.len() {
            return Err(Error::dims(jac.nrows(), plus.len()));
        }
        jac.set_column(i, &((plus - minus) / (2.0 * h)));
    }
    Ok(jac.unwrap_or_else(|| DMatrix::zeros(0, n)))
}

/// Left-translated Hessian `H^L_g f = D^L((d^L f)ᵀ)`. Not symmetrized.
pub fn left_hessian<G, F>(f: F, g: &G, steps: &DiffSteps) -> Result<DMatrix<f64>>
where
    G: MatrixLieGroup,
    F: Fn(&G) -> Result<f64>,
{
    check_step(steps.hessian_inner)?;
    left_jacobian(
        |x: &G| left_diff(&f, x, steps.hessian_inner).map(|r| r.transpose()),
        g,
        steps.hessian_outer,
    )
}

/// Left-translated gradient `∇^L_φ Φ` (`n×k`) of a map `Φ: ℝᵏ → G`.
///
/// Column `j` is `(Φ(φ)⁻¹ ∂Φ/∂φ_j)^∨`, with the partial derivative taken by
/// central differences in the ambient matrix space.
pub fn left_grad_map<G, F>(phi_map: F, phi: &DVector<f64>, h: f64) -> Result<DMatrix<f64>>
where
    G: MatrixLieGroup,
    F: Fn(&DVector<f64>) -> Result<G>,
{
    check_step(h)?;
    let k = phi.len();
    let base_inv = phi_map(phi)?.inverse().to_matrix();
    let mut out = DMatrix::zeros(G::ALGEBRA_DIM, k);
    for j in 0..k {
        let mut up = phi.clone();
        up[j] += h;
        let mut dn = phi.clone();
        dn[j] -= h;
        let dphi = (phi_map(&up)?.to_matrix() - phi_map(&dn)?.to_matrix()) / (2.0 * h);
        let tangent = &base_inv * dphi;
        out.set_column(j, &G::vee_algebra(&tangent)?);
    }
    Ok(out)
}
