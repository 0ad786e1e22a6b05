//! Two-layer network controller `u = Ŵ σ(V̂ x)` with intrinsic learning rules.
//!
//! Sensitivities of the tracking errors to the output weights are stored as
//! `n × (n·m)` matrices whose `j`-th `n`-column block belongs to column `j` of
//! `Ŵ` (column-major `breve` order). Hidden-layer sensitivities use the same
//! convention over `V̂` with `m`-row columns.
//!
//! Every function here takes `ad_ξ̃`, `H^Lψ` and `d^Lψ` from the caller, so the
//! same code serves the closed loop and the oracle suites.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix6, Matrix6xX, RowVector6, Vector6};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::errfun::{psi, ErrFunParams};
use crate::error::{Error, Result};
use crate::liegroup::{frob_norm, Se3};

/// Length of the network input for SE(3): `[g̃ ξ̃ ḡ_d ξ_d ξ̇_d]` with both
/// poses flattened to 12 entries.
pub const SE3_INPUT_DIM: usize = 42;

/// `σ_i = −1 + 2 / (1 + e^{−2 y_i})`, i.e. `tanh`.
pub fn sigmoid(y: &DVector<f64>) -> DVector<f64> {
    y.map(|v| -1.0 + 2.0 / (1.0 + (-2.0 * v).exp()))
}

/// Diagonal of `Π = ∇_y σ = I − diag(σ²)`, from already evaluated `σ`.
pub fn pi_diag(sigma: &DVector<f64>) -> DVector<f64> {
    sigma.map(|s| 1.0 - s * s)
}

pub fn pi_matrix(sigma: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(&pi_diag(sigma))
}

/// `x = [flat12(g̃); ξ̃; flat12(ḡ_d); ξ_d; ξ̇_d]`.
pub fn build_input(
    g_err: &Se3,
    xi_err: &Vector6<f64>,
    g_des: &Se3,
    xi_des: &Vector6<f64>,
    xi_des_dot: &Vector6<f64>,
) -> DVector<f64> {
    let mut x = Vec::with_capacity(SE3_INPUT_DIM);
    x.extend_from_slice(&g_err.flat12());
    x.extend_from_slice(xi_err.as_slice());
    x.extend_from_slice(&g_des.flat12());
    x.extend_from_slice(xi_des.as_slice());
    x.extend_from_slice(xi_des_dot.as_slice());
    DVector::from_vec(x)
}

/// Learning rates `ρ`, damping `γ`, cost weights `α` and the lower bound `ς`
/// used in place of the unknown `λ_min(𝔹⁻¹)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LearnInput")]
pub struct LearnParams {
    pub rho1: f64,
    pub rho2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub varsigma: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct LearnInput {
    rho1: f64,
    rho2: f64,
    gamma1: f64,
    gamma2: f64,
    alpha1: f64,
    alpha2: f64,
    varsigma: f64,
}

impl Default for LearnInput {
    fn default() -> Self {
        let d = LearnParams::default();
        LearnInput {
            rho1: d.rho1,
            rho2: d.rho2,
            gamma1: d.gamma1,
            gamma2: d.gamma2,
            alpha1: d.alpha1,
            alpha2: d.alpha2,
            varsigma: d.varsigma,
        }
    }
}

impl TryFrom<LearnInput> for LearnParams {
    type Error = Error;
    fn try_from(i: LearnInput) -> Result<Self> {
        let p = LearnParams {
            rho1: i.rho1,
            rho2: i.rho2,
            gamma1: i.gamma1,
            gamma2: i.gamma2,
            alpha1: i.alpha1,
            alpha2: i.alpha2,
            varsigma: i.varsigma,
        };
        p.validate()?;
        Ok(p)
    }
}

impl Default for LearnParams {
    fn default() -> Self {
        LearnParams {
            rho1: 800.0,
            rho2: 2.0,
            gamma1: 2.0,
            gamma2: 0.7,
            alpha1: 0.5,
            alpha2: 0.5,
            varsigma: 0.1,
        }
    }
}

impl LearnParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("varsigma", self.varsigma),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Rejects the degenerate case where the three candidates of `β` coincide.
    pub fn check_nondegenerate(&self, m: usize) -> Result<()> {
        let a = self.alpha1 * (m as f64).sqrt() / self.varsigma;
        let tol = 1e-12 * a.abs().max(1.0);
        if (a - self.alpha1).abs() < tol && (self.alpha1 - self.alpha2).abs() < tol {
            return Err(Error::param(
                "alpha1",
                "α₁√m/ς, α₁ and α₂ must not all be equal",
            ));
        }
        Ok(())
    }
}

/// `β = max{ρ₁α₁√m/(ςγ₁), ρ₁α₁/γ₁, ρ₁α₂/γ₁}`.
pub fn theorem1_beta(p: &LearnParams, m: usize) -> f64 {
    let base = p.rho1 / p.gamma1;
    (base * p.alpha1 * (m as f64).sqrt() / p.varsigma)
        .max(base * p.alpha1)
        .max(base * p.alpha2)
}

/// Output weights `Ŵ` (`n×m`) and hidden weights `V̂` (`m×M`).
#[derive(Debug, Clone, PartialEq)]
pub struct NNWeights {
    pub w: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl NNWeights {
    pub fn zeros(n: usize, m: usize, inputs: usize) -> Self {
        NNWeights {
            w: DMatrix::zeros(n, m),
            v: DMatrix::zeros(m, inputs),
        }
    }

    /// I.i.d. entries uniform on `[−w0, w0]`.
    pub fn uniform<R: Rng>(n: usize, m: usize, inputs: usize, w0: f64, rng: &mut R) -> Self {
        let mut draw = |r, c| DMatrix::from_fn(r, c, |_, _| rng.gen_range(-w0..=w0));
        let w = draw(n, m);
        let v = draw(m, inputs);
        NNWeights { w, v }
    }

    pub fn outputs(&self) -> usize {
        self.w.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w.ncols()
    }

    pub fn inputs(&self) -> usize {
        self.v.ncols()
    }

    pub fn check_shapes(&self) -> Result<()> {
        if self.v.nrows() != self.w.ncols() {
            return Err(Error::dims(
                format!("V with {} rows", self.w.ncols()),
                format!("V with {} rows", self.v.nrows()),
            ));
        }
        Ok(())
    }

    /// Hidden activations `σ(V̂ x)`.
    pub fn hidden_output(&self, x: &DVector<f64>) -> DVector<f64> {
        sigmoid(&(&self.v * x))
    }

    /// `u = Ŵ σ(V̂ x)`.
    pub fn control(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.w * self.hidden_output(x)
    }

    /// Writes both matrices as `name,rows,cols` followed by row-major rows.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        for (name, m) in [("W", &self.w), ("V", &self.v)] {
            writeln!(out, "{name},{},{}", m.nrows(), m.ncols())?;
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:e}", m[(i, j)])).collect();
                writeln!(out, "{}", row.join(","))?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let mut next_matrix = |expect: &str| -> Result<DMatrix<f64>> {
            let header = lines
                .next()
                .ok_or_else(|| Error::Checkpoint(format!("missing {expect} header")))??;
            let parts: Vec<&str> = header.trim().split(',').collect();
            let bad = || Error::Checkpoint(format!("bad header `{header}`"));
            if parts.len() != 3 || parts[0] != expect {
                return Err(bad());
            }
            let rows: usize = parts[1].parse().map_err(|_| bad())?;
            let cols: usize = parts[2].parse().map_err(|_| bad())?;
            let mut m = DMatrix::zeros(rows, cols);
            for i in 0..rows {
                let line = lines
                    .next()
                    .ok_or_else(|| Error::Checkpoint(format!("{expect}: missing row {i}")))??;
                let vals: Vec<&str> = line.trim().split(',').collect();
                if vals.len() != cols {
                    return Err(Error::Checkpoint(format!("{expect}: row {i} has {} values", vals.len())));
                }
                for (j, s) in vals.iter().enumerate() {
                    m[(i, j)] = s
                        .parse()
                        .map_err(|_| Error::Checkpoint(format!("{expect}: bad value `{s}`")))?;
                }
            }
            Ok(m)
        };
        let w = next_matrix("W")?;
        let v = next_matrix("V")?;
        let weights = NNWeights { w, v };
        weights.check_shapes()?;
        Ok(weights)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_checkpoint(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        NNWeights::read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// `[s₁ I … s_m I]`, the `n × (n·m)` block row with scaled identities.
pub fn scaled_identity_blocks(scales: &DVector<f64>) -> Matrix6xX<f64> {
    let mut out = Matrix6xX::zeros(6 * scales.len());
    for (j, s) in scales.iter().enumerate() {
        for i in 0..6 {
            out[(i, 6 * j + i)] = *s;
        }
    }
    out
}

/// Static-approximation sensitivity flow of `∇^L_{Ŵ̆} g̃`:
/// `−ad_ξ̃ G − A⁻¹(k_p H G − [σ₁/ς I … σ_m/ς I])`.
pub fn sens_rhs_w_static(
    gw: &Matrix6xX<f64>,
    ad_xi: &Matrix6<f64>,
    hess: &Matrix6<f64>,
    a_inv: &Matrix6<f64>,
    kp: f64,
    sigma: &DVector<f64>,
    varsigma: f64,
) -> Matrix6xX<f64> {
    let s = scaled_identity_blocks(&(sigma / varsigma));
    -(ad_xi * gw) - a_inv * (hess * gw * kp - s)
}

/// Static velocity sensitivity `∇_{Ŵ̆} ξ̃ = A⁻¹(−k_p H G + [σ_j/ς I])`.
pub fn static_xi_sensitivity(
    gw: &Matrix6xX<f64>,
    hess: &Matrix6<f64>,
    a_inv: &Matrix6<f64>,
    kp: f64,
    sigma: &DVector<f64>,
    varsigma: f64,
) -> Matrix6xX<f64> {
    a_inv * (scaled_identity_blocks(&(sigma / varsigma)) - hess * gw * kp)
}

/// Input term of `Ẋ_W`: `𝔹 [σ₁ I … σ_m I] = [σ₁ 𝔹 … σ_m 𝔹]`.
pub fn input_block_w(b: &Matrix6<f64>, sigma: &DVector<f64>) -> Matrix6xX<f64> {
    let mut out = Matrix6xX::zeros(6 * sigma.len());
    for (j, s) in sigma.iter().enumerate() {
        out.columns_mut(6 * j, 6).copy_from(&(b * *s));
    }
    out
}

/// Input term of `Ẋ_V`: `𝔹 Ŵ [x₁ Π … x_M Π]`.
pub fn input_block_v(b: &Matrix6<f64>, w: &DMatrix<f64>, pi: &DVector<f64>, x: &DVector<f64>) -> Matrix6xX<f64> {
    let m = w.ncols();
    let mut bwpi = Matrix6xX::zeros(m);
    let bw = b * w;
    for j in 0..m {
        bwpi.column_mut(j).copy_from(&(bw.column(j) * pi[j]));
    }
    let mut out = Matrix6xX::zeros(m * x.len());
    for (k, xk) in x.iter().enumerate() {
        out.columns_mut(m * k, m).copy_from(&(&bwpi * *xk));
    }
    out
}

/// Full sensitivity flow for either weight layer:
/// `Ġ = −ad_ξ̃ G + X`, `Ẋ = −A X − k_p H G + input`.
pub fn sens_rhs_full(
    g: &Matrix6xX<f64>,
    x: &Matrix6xX<f64>,
    ad_xi: &Matrix6<f64>,
    hess: &Matrix6<f64>,
    a: &Matrix6<f64>,
    kp: f64,
    input: &Matrix6xX<f64>,
) -> (Matrix6xX<f64>, Matrix6xX<f64>) {
    let g_dot = x - ad_xi * g;
    let x_dot = input - a * x - hess * g * kp;
    (g_dot, x_dot)
}

/// Value of `F = α₁/2 Ξᵀ A Ξ + α₂ ψ(𝕘)` with `Ξ = ξ̃ − ξ̃*`, `𝕘 = (g̃*)⁻¹ g̃`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSnapshot {
    pub value: f64,
    pub xi_gap: Vector6<f64>,
    pub g_gap: Se3,
}

pub fn cost_f(
    g_err: &Se3,
    xi_err: &Vector6<f64>,
    g_nom: &Se3,
    xi_nom: &Vector6<f64>,
    a: &Matrix6<f64>,
    errfun: &ErrFunParams,
    p: &LearnParams,
) -> CostSnapshot {
    let xi_gap = xi_err - xi_nom;
    let g_gap = g_nom.inverse() * *g_err;
    CostSnapshot {
        value: 0.5 * p.alpha1 * xi_gap.dot(&(a * xi_gap)) + p.alpha2 * psi(&g_gap, errfun),
        xi_gap,
        g_gap,
    }
}

/// `∇_Ŵ F = α₁[(1/ς) Ξ σᵀ − k_p unbreve((H G)ᵀ Ξ)] + α₂ unbreve((d^Lψ(𝕘) G)ᵀ)`.
pub fn grad_f_w(
    xi_gap: &Vector6<f64>,
    dpsi_gap: &RowVector6<f64>,
    gw: &Matrix6xX<f64>,
    hess: &Matrix6<f64>,
    sigma: &DVector<f64>,
    kp: f64,
    p: &LearnParams,
) -> DMatrix<f64> {
    let m = sigma.len();
    let direct = DMatrix::from_fn(6, m, |i, j| xi_gap[i] * sigma[j] / p.varsigma);
    let through_hess = (hess * gw).transpose() * xi_gap;
    let through_psi = (dpsi_gap * gw).transpose();
    let unbreve = |v: &DVector<f64>| DMatrix::from_column_slice(6, m, v.as_slice());
    (direct - unbreve(&through_hess) * kp) * p.alpha1 + unbreve(&through_psi) * p.alpha2
}

/// Scalar multiplying `Ŵ` in the damping term of the output-layer rule:
/// `‖Ξ‖(1 + k_p‖H‖‖G‖) + ‖d^Lψ(𝕘)‖‖G‖`, Frobenius norms.
pub fn w_damping(
    xi_gap: &Vector6<f64>,
    dpsi_gap: &RowVector6<f64>,
    gw: &Matrix6xX<f64>,
    hess: &Matrix6<f64>,
    kp: f64,
) -> f64 {
    let g_norm = frob_norm(gw);
    xi_gap.norm() * (1.0 + kp * frob_norm(hess) * g_norm) + dpsi_gap.norm() * g_norm
}

/// `Ẇ = −ρ₁ ∇_Ŵ F − γ₁ · damping · Ŵ`.
pub fn w_dot(w: &DMatrix<f64>, grad: &DMatrix<f64>, damping: f64, p: &LearnParams) -> DMatrix<f64> {
    -(grad * p.rho1) - w * (p.gamma1 * damping)
}

/// `Π Ŵᵀ Ŵ σ(V̂x) xᵀ`, the gradient of `½‖Ŵσ(V̂x)‖²` with respect to `V̂`.
pub fn grad_effort_v(w: &DMatrix<f64>, v: &DMatrix<f64>, x: &DVector<f64>) -> DMatrix<f64> {
    let sigma = sigmoid(&(v * x));
    let pi = pi_diag(&sigma);
    let back = (w.transpose() * (w * &sigma)).component_mul(&pi);
    back * x.transpose()
}

/// `V̇ = −ρ₂ Π Ŵᵀ Ŵ σ xᵀ − γ₂ ‖ξ̃‖ V̂`.
pub fn v_dot(w: &DMatrix<f64>, v: &DMatrix<f64>, x: &DVector<f64>, xi_err: &Vector6<f64>, p: &LearnParams) -> DMatrix<f64> {
    -(grad_effort_v(w, v, x) * p.rho2) - v * (p.gamma2 * xi_err.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::errfun::{dpsi, hpsi};
    use crate::liegroup::breve;
    use nalgebra::Vector3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    fn rand_vec<R: Rng>(n: usize, s: f64, r: &mut R) -> DVector<f64> {
        DVector::from_fn(n, |_, _| r.gen_range(-s..s))
    }

    fn rand_mat<R: Rng>(a: usize, b: usize, s: f64, r: &mut R) -> DMatrix<f64> {
        DMatrix::from_fn(a, b, |_, _| r.gen_range(-s..s))
    }

    fn errfun() -> ErrFunParams {
        ErrFunParams::isotropic(10.0, 5.0).unwrap()
    }

    #[test]
    fn sigmoid_limits_and_derivative() {
        let s = sigmoid(&DVector::zeros(3));
        assert_eq!(s, DVector::zeros(3));
        assert_eq!(pi_matrix(&s), DMatrix::identity(3, 3));
        let big = sigmoid(&DVector::from_element(1, 40.0));
        assert!((big[0] - 1.0).abs() < 1e-15 && pi_diag(&big)[0] < 1e-15);
        let mut r = rng();
        let h = 1e-5;
        for _ in 0..50 {
            let y = r.gen_range(-3.0..3.0);
            let fd = (sigmoid(&DVector::from_element(1, y + h))[0] - sigmoid(&DVector::from_element(1, y - h))[0]) / (2.0 * h);
            let s = sigmoid(&DVector::from_element(1, y))[0];
            assert!((fd - (1.0 - s * s)).abs() < 1e-8);
            assert!((s - y.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn input_layout() {
        let x = build_input(&Se3::identity(), &Vector6::zeros(), &Se3::identity(), &Vector6::zeros(), &Vector6::zeros());
        assert_eq!(x.len(), SE3_INPUT_DIM);
        let eye = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        assert_eq!(&x.as_slice()[0..12], &eye);
        assert_eq!(&x.as_slice()[18..30], &eye);
        assert!(x.as_slice()[12..18].iter().chain(&x.as_slice()[30..42]).all(|v| *v == 0.0));
    }

    #[test]
    fn control_cases() {
        let mut r = rng();
        let x = rand_vec(42, 1.0, &mut r);
        let mut nn = NNWeights::uniform(6, 50, 42, 0.01, &mut r);
        nn.w.fill(0.0);
        assert_eq!(nn.control(&x), DVector::zeros(6));
        let mut nn = NNWeights::uniform(6, 50, 42, 0.01, &mut r);
        nn.v.fill(0.0);
        assert_eq!(nn.control(&x), DVector::zeros(6));

        let scalar = NNWeights {
            w: DMatrix::from_element(1, 1, 2.0),
            v: DMatrix::from_element(1, 1, 1.0),
        };
        let u = scalar.control(&DVector::from_element(1, 0.5))[0];
        assert!((u - 0.924234).abs() < 1e-6);
    }

    #[test]
    fn uniform_init_is_bounded_and_seeded() {
        let a = NNWeights::uniform(6, 50, 42, 0.01, &mut rng());
        let b = NNWeights::uniform(6, 50, 42, 0.01, &mut rng());
        assert_eq!(a, b);
        assert!(a.w.iter().chain(a.v.iter()).all(|x| x.abs() <= 0.01));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let nn = NNWeights::uniform(6, 5, 4, 0.5, &mut rng());
        let mut buf = Vec::new();
        nn.write_checkpoint(&mut buf).unwrap();
        let back = NNWeights::read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, nn);
        assert!(NNWeights::read_checkpoint("W,1,2\n1.0\n".as_bytes()).is_err());
        assert!(NNWeights::read_checkpoint("W,1,1\n1.0\nV,2,1\n1\n2\n".as_bytes()).is_err());
    }

    #[test]
    fn static_sensitivity_cases() {
        let a_inv = Matrix6::identity() * 0.25;
        let zero = Matrix6xX::zeros(6 * 3);
        let ad = Se3::ad(&Vector6::new(0.1, 0.2, 0.3, 0.4, 0.5, 0.6));
        let h = Matrix6::identity() * 5.0;
        let out = sens_rhs_w_static(&zero, &ad, &h, &a_inv, 1.0, &DVector::zeros(3), 0.1);
        assert_eq!(out, Matrix6xX::zeros(18));

        let sigma = DVector::from_vec(vec![0.2, -0.4, 0.8]);
        let out = sens_rhs_w_static(&zero, &ad, &h, &a_inv, 1.0, &sigma, 0.1);
        assert_eq!(out.ncols(), 18);
        for j in 0..3 {
            let block = out.columns(6 * j, 6).into_owned();
            assert!((block - Matrix6::identity() * (sigma[j] / 0.4)).norm() < 1e-13);
        }
    }

    #[test]
    fn full_sensitivity_cases() {
        let mut r = rng();
        let zero = Matrix6xX::zeros(12);
        let ad = Se3::ad(&Vector6::from_column_slice(rand_vec(6, 1.0, &mut r).as_slice()));
        let h = hpsi(&Se3::exp(&Vector6::new(0.3, 0.2, 0.1, 1.0, 0.0, 0.0)), &errfun());
        let a = Matrix6::identity() * 4.0;
        let input = input_block_w(&Matrix6::identity(), &DVector::zeros(2));
        let (gd, xd) = sens_rhs_full(&zero, &zero, &ad, &h, &a, 1.0, &input);
        assert_eq!((gd.norm(), xd.norm()), (0.0, 0.0));

        let g = Matrix6xX::from_fn(12, |i, j| ((i + 2 * j) as f64).sin());
        let x = Matrix6xX::from_fn(12, |i, j| ((3 * i + j) as f64).cos());
        let w = DMatrix::zeros(6, 2);
        let input = input_block_v(&Matrix6::identity(), &w, &DVector::repeat(2, 1.0), &rand_vec(6, 1.0, &mut r));
        let (_, xd) = sens_rhs_full(&g, &x, &ad, &h, &a, 1.0, &input);
        assert!((xd - (-(a * &x) - h * &g)).norm() < 1e-13);
    }

    #[test]
    fn input_blocks_follow_breve_order() {
        let mut r = rng();
        let b = Matrix6::from_fn(|i, j| (i as f64 + 1.0) * if i == j { 1.0 } else { 0.1 });
        let w = rand_mat(6, 3, 1.0, &mut r);
        let v = rand_mat(3, 4, 1.0, &mut r);
        let x = rand_vec(4, 1.0, &mut r);
        // Column k of each block row is the derivative of 𝔹 Ŵ σ(V̂x) w.r.t. entry k of breve(V̂).
        let sigma = sigmoid(&(&v * &x));
        let block = input_block_v(&b, &w, &pi_diag(&sigma), &x);
        let h = 1e-6;
        for k in 0..12 {
            let mut vp = v.clone();
            vp[k] += h;
            let mut vm = v.clone();
            vm[k] -= h;
            let fd = (b * (&w * sigmoid(&(&vp * &x))) - b * (&w * sigmoid(&(&vm * &x)))) / (2.0 * h);
            assert!((block.column(k) - Vector6::from_column_slice(fd.as_slice())).norm() < 1e-8);
        }
        let block = input_block_w(&b, &sigma);
        for k in 0..18 {
            let mut wp = w.clone();
            wp[k] += h;
            let fd = (b * (&wp * &sigma) - b * (&w * &sigma)) / h;
            assert!((block.column(k) - Vector6::from_column_slice(fd.as_slice())).norm() < 1e-8);
        }
    }

    #[test]
    fn grad_f_w_trivial_cases() {
        let p = LearnParams::default();
        let h = Matrix6::identity() * 5.0;
        let sigma = DVector::from_vec(vec![0.3, -0.2]);
        let zero = Matrix6xX::zeros(12);
        let g = grad_f_w(&Vector6::zeros(), &RowVector6::zeros(), &zero, &h, &sigma, 1.0, &p);
        assert_eq!(g, DMatrix::zeros(6, 2));
        let xi = Vector6::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0);
        let g = grad_f_w(&xi, &RowVector6::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0), &zero, &h, &sigma, 1.0, &p);
        let expect = DMatrix::from_fn(6, 2, |i, j| xi[i] * sigma[j]) * (p.alpha1 / p.varsigma);
        assert!((g - expect).norm() < 1e-12);
    }

    /// Perturbs one output weight and re-evaluates `F` with `ξ̃` and `g̃` moved
    /// along their static sensitivities.
    #[test]
    fn grad_f_w_matches_cost_differences() {
        let mut r = rng();
        let p = LearnParams::default();
        let ef = errfun();
        let a = Matrix6::from_diagonal(&Vector6::new(4.0, 3.0, 5.0, 4.0, 4.5, 3.5));
        let a_inv = a.try_inverse().unwrap();
        let kp = 1.3;
        let m = 4;
        let g_err = Se3::from_rotation_vector(&Vector3::new(0.4, -0.3, 0.6), Vector3::new(1.0, -0.5, 0.3));
        let g_nom = Se3::from_rotation_vector(&Vector3::new(0.1, 0.2, -0.1), Vector3::new(0.5, 0.0, 0.2));
        let xi_err = Vector6::from_column_slice(rand_vec(6, 1.0, &mut r).as_slice());
        let xi_nom = Vector6::from_column_slice(rand_vec(6, 1.0, &mut r).as_slice());
        let gw = Matrix6xX::from_fn(6 * m, |_, _| r.gen_range(-0.5..0.5));
        let sigma = rand_vec(m, 0.9, &mut r);
        let hess = hpsi(&g_err, &ef);
        let xs = static_xi_sensitivity(&gw, &hess, &a_inv, kp, &sigma, p.varsigma);

        let snap = cost_f(&g_err, &xi_err, &g_nom, &xi_nom, &a, &ef, &p);
        let grad = grad_f_w(&snap.xi_gap, &dpsi(&snap.g_gap, &ef), &gw, &hess, &sigma, kp, &p);
        let f_at = |k: usize, d: f64| {
            let xi = xi_err + xs.column(k) * d;
            let g = g_err * Se3::exp(&(gw.column(k) * d));
            cost_f(&g, &xi, &g_nom, &xi_nom, &a, &ef, &p).value
        };
        let h = 1e-6;
        let fd = DVector::from_fn(6 * m, |k, _| (f_at(k, h) - f_at(k, -h)) / (2.0 * h));
        let rel = (&fd - breve(&grad)).norm() / fd.norm();
        assert!(rel < 1e-4, "{rel:e}");
    }

    #[test]
    fn w_dot_cases() {
        let p = LearnParams::default();
        let zero = DMatrix::zeros(6, 3);
        assert_eq!(w_dot(&zero, &zero, 0.0, &p), zero);
        let w = DMatrix::from_fn(6, 3, |i, j| (i + j) as f64);
        let xi_gap = Vector6::new(0.0, 3.0, 0.0, 4.0, 0.0, 0.0);
        let damping = w_damping(&xi_gap, &RowVector6::zeros(), &Matrix6xX::zeros(18), &Matrix6::identity(), 1.0);
        assert_eq!(damping, 5.0);
        assert_eq!(w_dot(&w, &zero, damping, &p), &w * (-p.gamma1 * 5.0));
    }

    #[test]
    fn w_rule_descends_cost() {
        // Gradient flow on F along the static model: F(Ŵ + εẆ) < F(Ŵ) when damping is off.
        let mut r = rng();
        let p = LearnParams::default();
        let ef = errfun();
        let a = Matrix6::identity() * 4.0;
        let a_inv = a.try_inverse().unwrap();
        let g_err = Se3::from_rotation_vector(&Vector3::new(0.2, 0.1, -0.4), Vector3::new(0.3, 0.2, 0.1));
        let xi_err = Vector6::from_column_slice(rand_vec(6, 1.0, &mut r).as_slice());
        let gw = Matrix6xX::from_fn(12, |_, _| r.gen_range(-0.5..0.5));
        let sigma = rand_vec(2, 0.9, &mut r);
        let hess = hpsi(&g_err, &ef);
        let xs = static_xi_sensitivity(&gw, &hess, &a_inv, 1.0, &sigma, p.varsigma);
        let f_along = |dw: &DVector<f64>| {
            let xi = xi_err + &xs * dw;
            let g = g_err * Se3::exp(&(&gw * dw));
            cost_f(&g, &xi, &Se3::identity(), &Vector6::zeros(), &a, &ef, &p).value
        };
        let snap = cost_f(&g_err, &xi_err, &Se3::identity(), &Vector6::zeros(), &a, &ef, &p);
        let grad = grad_f_w(&snap.xi_gap, &dpsi(&snap.g_gap, &ef), &gw, &hess, &sigma, 1.0, &p);
        let wd = w_dot(&DMatrix::zeros(6, 2), &grad, 0.0, &p);
        let eps = 1e-7;
        assert!(f_along(&(breve(&wd) * eps)) < f_along(&DVector::zeros(12)));
    }

    fn effort(w: &DMatrix<f64>, v: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
        0.5 * (w * sigmoid(&(v * x))).norm_squared()
    }

    #[test]
    fn grad_effort_matches_differences_on_random_shapes() {
        let mut r = rng();
        for _ in 0..100 {
            let (n, m, k) = (r.gen_range(1..7), r.gen_range(1..8), r.gen_range(1..9));
            let w = rand_mat(n, m, 1.0, &mut r);
            let v = rand_mat(m, k, 1.0, &mut r);
            let x = rand_vec(k, 1.0, &mut r);
            let grad = grad_effort_v(&w, &v, &x);
            let h = 1e-6;
            let fd = DMatrix::from_fn(m, k, |i, j| {
                let mut vp = v.clone();
                vp[(i, j)] += h;
                let mut vm = v.clone();
                vm[(i, j)] -= h;
                (effort(&w, &vp, &x) - effort(&w, &vm, &x)) / (2.0 * h)
            });
            let scale = grad.norm().max(1e-3);
            assert!((&fd - &grad).norm() / scale < 1e-6);
        }
    }

    #[test]
    fn v_dot_cases() {
        let mut r = rng();
        let p = LearnParams::default();
        let w = rand_mat(6, 5, 1.0, &mut r);
        let x = rand_vec(4, 1.0, &mut r);
        let xi = Vector6::new(0.0, 0.0, 3.0, 0.0, 4.0, 0.0);
        let zero_v = DMatrix::zeros(5, 4);
        assert_eq!(v_dot(&w, &zero_v, &x, &xi, &p), zero_v);
        let v = rand_mat(5, 4, 1.0, &mut r);
        assert_eq!(v_dot(&DMatrix::zeros(6, 5), &v, &x, &xi, &p), &v * (-p.gamma2 * 5.0));
        let term1 = v_dot(&w, &v, &x, &Vector6::zeros(), &p);
        assert!((term1 + grad_effort_v(&w, &v, &x) * p.rho2).norm() < 1e-13);
    }

    #[test]
    fn beta_values() {
        let unit = LearnParams {
            rho1: 1.0,
            rho2: 1.0,
            gamma1: 1.0,
            gamma2: 1.0,
            alpha1: 1.0,
            alpha2: 1.0,
            varsigma: 1.0,
        };
        assert_eq!(theorem1_beta(&unit, 1), 1.0);
        assert!(unit.check_nondegenerate(1).is_err());
        let p = LearnParams::default();
        assert!((theorem1_beta(&p, 50) - 14142.14).abs() < 0.01);
        assert!(p.check_nondegenerate(50).is_ok());
        let mut prev = 0.0;
        for rho1 in [1.0, 10.0, 100.0, 1000.0] {
            let b = theorem1_beta(&LearnParams { rho1, ..p }, 50);
            assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn learn_params_reject_non_positive() {
        let bad = r#"{"rho1":800,"rho2":2,"gamma1":0,"gamma2":0.7,"alpha1":0.5,"alpha2":0.5,"varsigma":0.1}"#;
        assert!(serde_json::from_str::<LearnParams>(bad).is_err());
        let good = serde_json::to_string(&LearnParams::default()).unwrap();
        assert_eq!(serde_json::from_str::<LearnParams>(&good).unwrap(), LearnParams::default());
    }
}
