//! Oracle suites that check every closed-form derivative against an
//! independent numerical computation.
//!
//! The kernels under test are routed through [`Kernels`], which can inject a
//! sign flip ([`Mutation`]) so that the suites themselves can be shown to
//! detect a broken formula.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Matrix6, Matrix6xX, RowVector6, Vector3, Vector6};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::calculus::{left_diff, left_grad_map, left_hessian, left_jacobian, DiffSteps};
use crate::dynamics::{GainParams, Integrator, LieOde, LieState, Scheme};
use crate::errfun::{fit_quadratic_bounds, hpsi, psi, sample_sublevel, theta, ErrFunParams};
use crate::error::{Error, Result};
use crate::liegroup::{breve, frob_norm, hat3, Se3, So3};
use crate::nncontrol::{
    cost_f, grad_effort_v, grad_f_w, input_block_v, input_block_w, pi_diag, sens_rhs_full, sens_rhs_w_static,
    sigmoid, static_xi_sensitivity, LearnParams, SE3_INPUT_DIM,
};

/// A deliberate defect injected into the kernels under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mutation {
    #[default]
    None,
    /// Negates `ad_ξ`.
    AdSign,
    /// Negates `χ` inside `d^Lψ`.
    ChiSign,
}

impl FromStr for Mutation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Mutation::None),
            "ad-sign" => Ok(Mutation::AdSign),
            "chi-sign" => Ok(Mutation::ChiSign),
            _ => Err(Error::param("mutation", format!("unknown mutation {s:?}"))),
        }
    }
}

/// The formulas exercised by the suites, possibly mutated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Kernels {
    pub mutation: Mutation,
}

impl Kernels {
    pub fn ad(&self, xi: &Vector6<f64>) -> Matrix6<f64> {
        match self.mutation {
            Mutation::AdSign => -Se3::ad(xi),
            _ => Se3::ad(xi),
        }
    }

    pub fn dpsi(&self, g: &Se3, p: &ErrFunParams) -> RowVector6<f64> {
        let mut d = crate::errfun::dpsi(g, p);
        if self.mutation == Mutation::ChiSign {
            // χ enters the rotational half linearly.
            d.columns_mut(0, 3).neg_mut();
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    Group,
    Calculus,
    Errfun,
    Sensitivity,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Group, Suite::Calculus, Suite::Errfun, Suite::Sensitivity];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Group => "group",
            Suite::Calculus => "calculus",
            Suite::Errfun => "errfun",
            Suite::Sensitivity => "sensitivity",
        }
    }

    /// Parses a suite name; `all` expands to every suite.
    pub fn parse_list(s: &str) -> Result<Vec<Suite>> {
        if s == "all" {
            return Ok(Suite::ALL.to_vec());
        }
        Suite::ALL
            .iter()
            .find(|x| x.name() == s)
            .map(|x| vec![*x])
            .ok_or_else(|| Error::param("suite", format!("unknown suite {s:?}")))
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One measured error against its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: Suite,
    pub name: &'static str,
    pub measured: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.measured <= self.tolerance
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}/{}  measured={:.3e}  tol={:.1e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.measured,
            self.tolerance
        )
    }
}

/// Sample counts, steps and toy-problem sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationConfig {
    pub seed: u64,
    pub kernels: Kernels,
    pub steps: DiffSteps,
    pub group_samples: usize,
    pub errfun_samples: usize,
    pub chain_samples: usize,
    pub effort_shapes: usize,
    pub cost_samples: usize,
    pub toy: ToyConfig,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            seed: 7,
            kernels: Kernels::default(),
            steps: DiffSteps::default(),
            group_samples: 1000,
            errfun_samples: 200,
            chain_samples: 100,
            effort_shapes: 100,
            cost_samples: 20,
            toy: ToyConfig::default(),
        }
    }
}

impl ValidationConfig {
    pub fn with_mutation(mutation: Mutation) -> Self {
        ValidationConfig {
            kernels: Kernels { mutation },
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

pub fn run_suite(suite: Suite, cfg: &ValidationConfig) -> Result<SuiteReport> {
    let start = Instant::now();
    let checks = match suite {
        Suite::Group => group_suite(cfg),
        Suite::Calculus => calculus_suite(cfg)?,
        Suite::Errfun => errfun_suite(cfg)?,
        Suite::Sensitivity => sensitivity_suite(cfg)?,
    };
    Ok(SuiteReport {
        suite,
        checks,
        elapsed: start.elapsed(),
    })
}

pub fn run_suites(suites: &[Suite], cfg: &ValidationConfig) -> Result<Vec<SuiteReport>> {
    suites.iter().map(|s| run_suite(*s, cfg)).collect()
}

fn rng_for(cfg: &ValidationConfig, suite: Suite) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(suite as u64);
    rng
}

/// `‖a − b‖ / max(‖b‖, floor)` in Frobenius norm.
fn rel_err<R, C, S1, S2>(a: &nalgebra::Matrix<f64, R, C, S1>, b: &nalgebra::Matrix<f64, R, C, S2>, floor: f64) -> f64
where
    R: nalgebra::Dim,
    C: nalgebra::Dim,
    S1: nalgebra::RawStorage<f64, R, C>,
    S2: nalgebra::RawStorage<f64, R, C>,
{
    let diff = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    diff / frob_norm(b).max(floor)
}

fn unit_vector<R: Rng, const N: usize>(rng: &mut R) -> nalgebra::SVector<f64, N> {
    loop {
        let v = nalgebra::SVector::<f64, N>::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Twist with `‖ξ‖ ≤ max_norm`.
pub fn random_twist<R: Rng>(rng: &mut R, max_norm: f64) -> Vector6<f64> {
    unit_vector::<R, 6>(rng) * rng.gen_range(0.0..max_norm)
}

/// Pose with rotation angle `≤ max_angle` and `‖p‖ ≤ max_dist`.
pub fn random_pose<R: Rng>(rng: &mut R, max_angle: f64, max_dist: f64) -> Se3 {
    let w = unit_vector::<R, 3>(rng) * rng.gen_range(0.0..max_angle);
    let p = unit_vector::<R, 3>(rng) * rng.gen_range(0.0..max_dist);
    Se3::from_rotation_vector(&w, p)
}

fn taylor_exp4(a: &Matrix4<f64>, terms: usize) -> Matrix4<f64> {
    let mut sum = Matrix4::identity();
    let mut term = Matrix4::identity();
    for k in 1..terms {
        term = term * a / k as f64;
        sum += term;
    }
    sum
}

fn taylor_exp3(a: &Matrix3<f64>, terms: usize) -> Matrix3<f64> {
    let mut sum = Matrix3::identity();
    let mut term = Matrix3::identity();
    for k in 1..terms {
        term = term * a / k as f64;
        sum += term;
    }
    sum
}

fn max_over<I: Iterator<Item = f64>>(it: I) -> f64 {
    it.fold(0.0, |m, x| if x.is_nan() { f64::NAN } else { m.max(x) })
}

fn group_suite(cfg: &ValidationConfig) -> Vec<Check> {
    let k = &cfg.kernels;
    let mut rng = rng_for(cfg, Suite::Group);
    let n = cfg.group_samples;
    let twists: Vec<Vector6<f64>> = (0..n).map(|_| random_twist(&mut rng, std::f64::consts::PI)).collect();
    let poses: Vec<(Se3, Se3)> = (0..n)
        .map(|_| (random_pose(&mut rng, 3.0, 10.0), random_pose(&mut rng, 3.0, 10.0)))
        .collect();
    let check = |name, measured, tolerance| Check {
        suite: Suite::Group,
        name,
        measured,
        tolerance,
    };

    let se3_taylor = max_over(
        twists
            .iter()
            .map(|xi| (Se3::exp(xi).matrix() - taylor_exp4(&Se3::hat(xi), 30)).norm()),
    );
    let so3_taylor = max_over(twists.iter().map(|xi| {
        let w = Vector3::new(xi[0], xi[1], xi[2]);
        (So3::exp(&w).matrix() - taylor_exp3(&hat3(&w), 30)).norm()
    }));
    let homomorphism = max_over(
        poses
            .iter()
            .map(|(g, h)| rel_err(&(*g * *h).adjoint(), &(g.adjoint() * h.adjoint()), 1.0)),
    );
    let conjugation = max_over(poses.iter().zip(&twists).map(|((g, _), xi)| {
        let lhs = Se3::hat(&(g.adjoint() * xi));
        let rhs = g.matrix() * Se3::hat(xi) * g.inverse().matrix();
        rel_err(&lhs, &rhs, 1.0)
    }));
    let inverse = max_over(poses.iter().map(|(g, _)| (*g * g.inverse()).matrix().metric_distance(&Matrix4::identity())));
    let bracket = max_over(twists.iter().zip(twists.iter().rev()).map(|(a, b)| {
        let (ha, hb) = (Se3::hat(a), Se3::hat(b));
        let lhs = Se3::hat(&(k.ad(a) * b));
        rel_err(&lhs, &(ha * hb - hb * ha), 1e-12)
    }));
    // d/dt Ad_{exp(tξ)} at 0 is ad_ξ; fourth-order central difference.
    let h = 1e-3;
    let ad_derivative = max_over(twists.iter().take(100).map(|xi| {
        let ad_at = |s: f64| Se3::exp(&(xi * s)).adjoint();
        let fd = (ad_at(-2.0 * h) - ad_at(2.0 * h) + (ad_at(h) - ad_at(-h)) * 8.0) / (12.0 * h);
        rel_err(&k.ad(xi), &fd, 1e-12)
    }));
    vec![
        check("exp_vs_taylor_se3", se3_taylor, 1e-10),
        check("exp_vs_taylor_so3", so3_taylor, 1e-10),
        check("adjoint_homomorphism", homomorphism, 1e-10),
        check("adjoint_conjugation", conjugation, 1e-10),
        check("inverse", inverse, 1e-10),
        check("ad_is_bracket", bracket, 1e-12),
        check("ad_is_adjoint_derivative", ad_derivative, 1e-8),
    ]
}

/// Left-trivialized derivative of `exp` at `φ`: `Σ_k (−ad_φ)^k / (k+1)!`.
fn dexp_left(k: &Kernels, phi: &Vector6<f64>) -> Matrix6<f64> {
    let ad = -k.ad(phi);
    let mut term = Matrix6::identity();
    let mut sum = Matrix6::identity();
    for i in 1..40 {
        term = term * ad / (i + 1) as f64;
        sum += term;
    }
    sum
}

fn calculus_suite(cfg: &ValidationConfig) -> Result<Vec<Check>> {
    let k = &cfg.kernels;
    let mut rng = rng_for(cfg, Suite::Calculus);
    let ef = ErrFunParams::isotropic(10.0, 5.0)?;
    let f = |g: &Se3| Ok(psi(g, &ef));
    let check = |name, measured, tolerance| Check {
        suite: Suite::Calculus,
        name,
        measured,
        tolerance,
    };
    let mut out = Vec::new();

    // Chain rule along one-parameter subgroups.
    let mut chain = 0.0f64;
    let mut jac_chain = 0.0f64;
    for _ in 0..cfg.chain_samples {
        let g = random_pose(&mut rng, 3.0, 10.0);
        let xi = random_twist(&mut rng, 1.0);
        let h = 1e-4;
        let at = |s: f64| psi(&(g * Se3::exp(&(xi * s))), &ef);
        let fd = (at(-2.0 * h) - at(2.0 * h) + (at(h) - at(-h)) * 8.0) / (12.0 * h);
        let d = left_diff(f, &g, cfg.steps.first)?;
        let pred = (d * DVector::from_column_slice(xi.as_slice()))[0];
        chain = chain.max((fd - pred).abs() / (1.0 + at(0.0).abs()));

        let flat = |g: &Se3| Ok(DVector::from_column_slice(&g.flat12()));
        let j = left_jacobian(flat, &g, cfg.steps.first)?;
        let flat_at = |s: f64| DVector::from_column_slice(&(g * Se3::exp(&(xi * s))).flat12());
        let fd = (flat_at(-2.0 * h) - flat_at(2.0 * h) + (flat_at(h) - flat_at(-h)) * 8.0) / (12.0 * h);
        let pred = j * DVector::from_column_slice(xi.as_slice());
        jac_chain = jac_chain.max((fd - &pred).norm() / (1.0 + pred.norm()));
    }
    out.push(check("left_diff_chain_rule", chain, 1e-6));
    out.push(check("left_jacobian_chain_rule", jac_chain, 1e-6));

    let id = Se3::identity();
    let h_id = left_hessian(f, &id, &cfg.steps)?;
    out.push(check(
        "left_hessian_identity",
        rel_err(&h_id, &DMatrix::<f64>::identity(6, 6).scale(5.0), 1.0),
        1e-5,
    ));
    let asym = frob_norm(&(&h_id - h_id.transpose()));
    out.push(check("left_hessian_identity_symmetric", asym, 1e-5));

    let mut grad_map = 0.0f64;
    let mut at_zero = 0.0f64;
    for _ in 0..cfg.chain_samples {
        let b = DMatrix::<f64>::from_fn(6, 3, |_, _| rng.gen_range(-1.0..1.0));
        let map = |phi: &DVector<f64>| Ok(Se3::exp(&Vector6::from_column_slice((&b * phi).as_slice())));
        let zero = left_grad_map::<Se3, _>(map, &DVector::zeros(3), cfg.steps.first)?;
        at_zero = at_zero.max(rel_err(&zero, &b, 1.0));

        let phi = random_twist(&mut rng, 2.0);
        let exp_map = |v: &DVector<f64>| Ok(Se3::exp(&Vector6::from_column_slice(v.as_slice())));
        let num = left_grad_map::<Se3, _>(exp_map, &DVector::from_column_slice(phi.as_slice()), cfg.steps.first)?;
        let series = dexp_left(k, &phi);
        grad_map = grad_map.max(rel_err(&num, &DMatrix::from_column_slice(6, 6, series.as_slice()), 1.0));
    }
    out.push(check("left_grad_map_at_zero", at_zero, 1e-8));
    out.push(check("left_grad_map_vs_dexp_series", grad_map, 1e-6));
    Ok(out)
}

fn errfun_suite(cfg: &ValidationConfig) -> Result<Vec<Check>> {
    let k = &cfg.kernels;
    let mut rng = rng_for(cfg, Suite::Errfun);
    let ef = ErrFunParams::isotropic(10.0, 5.0)?;
    let aniso = ErrFunParams::new(
        Matrix3::new(9.0, 1.0, 0.0, 1.0, 11.0, 0.5, 0.0, 0.5, 10.0),
        Matrix3::new(4.0, 0.3, 0.0, 0.3, 6.0, 0.2, 0.0, 0.2, 5.0),
    )?;
    let check = |name, measured, tolerance| Check {
        suite: Suite::Errfun,
        name,
        measured,
        tolerance,
    };
    let mut out = Vec::new();

    let mut d_err = 0.0f64;
    let mut h_err = 0.0f64;
    for i in 0..cfg.errfun_samples {
        let p = if i % 2 == 0 { &ef } else { &aniso };
        let g = random_pose(&mut rng, 3.0, 10.0);
        let f = |x: &Se3| Ok(psi(x, p));
        let num_d = left_diff(f, &g, cfg.steps.first)?;
        let cf_d = k.dpsi(&g, p);
        d_err = d_err.max(rel_err(&cf_d, &RowVector6::from_row_slice(num_d.as_slice()), 1e-12));
        let num_h = left_hessian(f, &g, &cfg.steps)?;
        let cf_h = hpsi(&g, p);
        h_err = h_err.max(rel_err(&cf_h, &Matrix6::from_column_slice(num_h.as_slice()), 1e-12));
    }
    out.push(check("dpsi_vs_left_diff", d_err, 1e-5));
    out.push(check("hpsi_vs_left_hessian", h_err, 1e-3));

    let px = Se3::from_translation(Vector3::new(1.0, 0.0, 0.0));
    let rz = Se3::from_rotation_vector(&Vector3::new(0.0, 0.0, std::f64::consts::PI), Vector3::zeros());
    let hand = [
        psi(&Se3::identity(), &ef).abs(),
        (psi(&px, &ef) - 2.5).abs(),
        (psi(&rz, &ef) - 10.0).abs(),
        (k.dpsi(&px, &ef) - RowVector6::new(0.0, 0.0, 0.0, 5.0, 0.0, 0.0)).norm(),
        k.dpsi(&Se3::identity(), &ef).norm(),
        (hpsi(&Se3::identity(), &ef) - Matrix6::identity() * 5.0).norm(),
    ];
    out.push(check("hand_values", max_over(hand.into_iter()), 1e-12));
    // A quarter turn about z isolates the rotational half of d^Lψ: sk(χR)^∨ = (0, 0, 5).
    let qz = Se3::from_rotation_vector(&Vector3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2), Vector3::zeros());
    out.push(check(
        "dpsi_quarter_turn",
        (k.dpsi(&qz, &ef) - RowVector6::new(0.0, 0.0, 5.0, 0.0, 0.0, 0.0)).norm(),
        1e-12,
    ));

    let thetas = [
        (theta(&ef) - 40.0).abs(),
        (theta(&ErrFunParams::isotropic(1.0, 1.0)?) - 4.0).abs(),
        (theta(&ErrFunParams::new(Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0)), Matrix3::identity())?) - 7.0)
            .abs(),
    ];
    out.push(check("theta_values", max_over(thetas.into_iter()), 1e-12));

    let samples: Vec<Se3> = (0..cfg.errfun_samples).map(|_| random_pose(&mut rng, 3.0, 10.0)).collect();
    let symmetry = max_over(samples.iter().map(|g| (psi(&g.inverse(), &ef) - psi(g, &ef)).abs()));
    out.push(check("symmetry_isotropic_k", symmetry, 1e-10));
    let non_positive = samples.iter().filter(|g| psi(g, &aniso) <= 0.0).count();
    out.push(check("positivity", non_positive as f64, 0.0));

    let cloud = sample_sublevel(&ef, ef.theta0(), cfg.errfun_samples * 5, &mut rng);
    let violations = match fit_quadratic_bounds(&ef, &cloud) {
        Some(b) => cloud.iter().filter(|g| !b.holds_for(g, &ef)).count() as f64,
        None => f64::INFINITY,
    };
    out.push(check("quadratic_sandwich", violations, 0.0));
    Ok(out)
}

/// Sizes and data of the one-agent sensitivity toy.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub hidden: usize,
    pub horizon: f64,
    pub dt: f64,
    pub perturbation: f64,
    pub weight_scale: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            hidden: 4,
            horizon: 0.05,
            dt: 1e-4,
            perturbation: 1e-6,
            weight_scale: 0.5,
        }
    }
}

/// `ξ̃̇ = −A ξ̃ − k_p (d^Lψ)ᵀ + 𝔹 Ŵ σ(V̂ x(t)) + e(t)` with fixed weights and
/// exogenous `x(t)`, `e(t)`. With `track` set, the vector state also carries
/// the full sensitivities `[G_W, X_W, G_V, X_V]`.
struct Toy<'a> {
    kernels: Kernels,
    gains: GainParams,
    errfun: ErrFunParams,
    b: Matrix6<f64>,
    w: &'a DMatrix<f64>,
    v: &'a DMatrix<f64>,
    track: bool,
}

impl Toy<'_> {
    fn input(t: f64) -> DVector<f64> {
        DVector::from_fn(SE3_INPUT_DIM, |i, _| {
            let f = 1.0 + 0.37 * i as f64;
            0.5 + 0.3 * (f * t + 0.1 * i as f64).sin()
        })
    }

    fn exogenous(t: f64) -> Vector6<f64> {
        Vector6::from_fn(|i, _| 0.4 * ((2.0 + i as f64) * t).cos())
    }

    fn cols_w(&self) -> usize {
        6 * self.w.ncols()
    }

    fn cols_v(&self) -> usize {
        self.v.len()
    }
}

impl LieOde for Toy<'_> {
    fn eval(&self, t: f64, configs: &[Se3], state: &DVector<f64>) -> Result<(Vec<Vector6<f64>>, DVector<f64>)> {
        let g = configs[0];
        let s = state.as_slice();
        let xi = Vector6::from_column_slice(&s[0..6]);
        let x = Self::input(t);
        let sigma = sigmoid(&(self.v * &x));
        let u = Vector6::from_column_slice((self.w * &sigma).as_slice());
        let kp = self.gains.kp();
        let acc = -(self.gains.a() * xi) - self.kernels.dpsi(&g, &self.errfun).transpose() * kp
            + self.b * u
            + Self::exogenous(t);
        let mut out = Vec::with_capacity(s.len());
        out.extend_from_slice(acc.as_slice());
        if self.track {
            let (cw, cv) = (self.cols_w(), self.cols_v());
            let mut off = 6;
            let mut take = |n: usize| {
                let m = Matrix6xX::from_column_slice(&s[off..off + 6 * n]);
                off += 6 * n;
                m
            };
            let (gw, xw, gv, xv) = (take(cw), take(cw), take(cv), take(cv));
            let ad = self.kernels.ad(&xi);
            let hess = hpsi(&g, &self.errfun);
            let in_w = input_block_w(&self.b, &sigma);
            let in_v = input_block_v(&self.b, self.w, &pi_diag(&sigma), &x);
            let (gw_d, xw_d) = sens_rhs_full(&gw, &xw, &ad, &hess, self.gains.a(), kp, &in_w);
            let (gv_d, xv_d) = sens_rhs_full(&gv, &xv, &ad, &hess, self.gains.a(), kp, &in_v);
            for m in [&gw_d, &xw_d, &gv_d, &xv_d] {
                out.extend_from_slice(m.as_slice());
            }
        }
        Ok((vec![xi], DVector::from_vec(out)))
    }
}

fn toy_initial(track: bool, cols: usize) -> LieState {
    let mut v = vec![0.3, -0.2, 0.5, 0.8, -0.4, 0.2];
    if track {
        v.resize(6 + 12 * cols, 0.0);
    }
    LieState {
        configs: vec![Se3::from_rotation_vector(&Vector3::new(0.5, -0.3, 0.8), Vector3::new(1.0, -2.0, 0.5))],
        vector: DVector::from_vec(v),
    }
}

fn toy_run(toy: &Toy<'_>, cfg: &ToyConfig) -> Result<LieState> {
    let cols = toy.cols_w() + toy.cols_v();
    let mut state = toy_initial(toy.track, cols);
    let mut integ = Integrator::new(Scheme::Rkmk4, cfg.dt)?;
    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let mut t = 0.0;
    for _ in 0..steps {
        state = integ.step(toy, t, &state)?;
        t += cfg.dt;
    }
    Ok(state)
}

/// Per-column relative errors of propagated sensitivities against
/// perturbed resimulation: `(G_W, X_W, G_V, X_V)`.
pub fn toy_sensitivity_errors(kernels: Kernels, cfg: &ToyConfig, seed: u64) -> Result<[f64; 4]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = cfg.hidden;
    let w = DMatrix::from_fn(6, m, |_, _| rng.gen_range(-cfg.weight_scale..cfg.weight_scale));
    let v = DMatrix::from_fn(m, SE3_INPUT_DIM, |_, _| rng.gen_range(-cfg.weight_scale..cfg.weight_scale) / 4.0);
    let inertia_inv = Matrix6::from_diagonal(&Vector6::new(1.0 / 1.2, 1.0 / 0.9, 1.0 / 1.1, 1.0 / 1.5, 1.0 / 1.5, 1.0 / 1.5));
    let fault = Matrix6::from_diagonal(&Vector6::new(0.5, 1.0, 1.0, 1.0, 0.5, 1.0));
    let make = |w: &'_ DMatrix<f64>, v: &'_ DMatrix<f64>, track: bool| -> Result<LieState> {
        let toy = Toy {
            kernels,
            gains: GainParams::isotropic(4.0, 1.0)?,
            errfun: ErrFunParams::isotropic(10.0, 5.0)?,
            b: inertia_inv * fault,
            w,
            v,
            track,
        };
        toy_run(&toy, cfg)
    };

    let base = make(&w, &v, true)?;
    let (cw, cv) = (6 * m, m * SE3_INPUT_DIM);
    let s = base.vector.as_slice();
    let block = |off: usize, n: usize| Matrix6xX::from_column_slice(&s[off..off + 6 * n]);
    let (gw, xw) = (block(6, cw), block(6 + 6 * cw, cw));
    let (gv, xv) = (block(6 + 12 * cw, cv), block(6 + 12 * cw + 6 * cv, cv));
    let g0_inv = base.configs[0].inverse().matrix();
    let h = cfg.perturbation;

    let column_errors = |perturbed: &dyn Fn(usize, f64) -> Result<LieState>,
                         n: usize,
                         g_prop: &Matrix6xX<f64>,
                         x_prop: &Matrix6xX<f64>|
     -> Result<(f64, f64)> {
        let (mut eg, mut ex) = (0.0f64, 0.0f64);
        for col in 0..n {
            let plus = perturbed(col, h)?;
            let minus = perturbed(col, -h)?;
            let dg = (plus.configs[0].matrix() - minus.configs[0].matrix()) / (2.0 * h);
            let fd_g = Se3::vee(&(g0_inv * dg));
            let fd_x = Vector6::from_column_slice(&((&plus.vector - &minus.vector) / (2.0 * h)).as_slice()[0..6]);
            eg = eg.max(rel_err(&g_prop.column(col), &fd_g, 1e-10));
            ex = ex.max(rel_err(&x_prop.column(col), &fd_x, 1e-10));
        }
        Ok((eg, ex))
    };
    let perturb_w = |col: usize, d: f64| {
        let mut wp = w.clone();
        wp[col] += d;
        make(&wp, &v, false)
    };
    let perturb_v = |col: usize, d: f64| {
        let mut vp = v.clone();
        vp[col] += d;
        make(&w, &vp, false)
    };
    let (egw, exw) = column_errors(&perturb_w, cw, &gw, &xw)?;
    let (egv, exv) = column_errors(&perturb_v, cv, &gv, &xv)?;
    Ok([egw, exw, egv, exv])
}

fn sensitivity_suite(cfg: &ValidationConfig) -> Result<Vec<Check>> {
    let k = &cfg.kernels;
    let mut rng = rng_for(cfg, Suite::Sensitivity);
    let check = |name, measured, tolerance| Check {
        suite: Suite::Sensitivity,
        name,
        measured,
        tolerance,
    };
    let mut out = Vec::new();

    let [egw, exw, egv, exv] = toy_sensitivity_errors(*k, &cfg.toy, cfg.seed)?;
    out.push(check("full_g_w_vs_resimulation", egw, 1e-3));
    out.push(check("full_xi_w_vs_resimulation", exw, 1e-3));
    out.push(check("full_g_v_vs_resimulation", egv, 1e-3));
    out.push(check("full_xi_v_vs_resimulation", exv, 1e-3));

    // The static flow is the full flow with X_W at its algebraic equilibrium.
    let p = LearnParams::default();
    let ef = ErrFunParams::isotropic(10.0, 5.0)?;
    let gains = GainParams::new(Matrix6::from_diagonal(&Vector6::new(4.0, 3.0, 5.0, 4.0, 4.5, 3.5)), 1.3)?;
    let mut static_err = 0.0f64;
    for _ in 0..20 {
        let m = rng.gen_range(1..6);
        let g = random_pose(&mut rng, 2.5, 3.0);
        let xi = random_twist(&mut rng, 2.0);
        let gw = Matrix6xX::from_fn(6 * m, |_, _| rng.gen_range(-1.0..1.0));
        let sigma = DVector::from_fn(m, |_, _| rng.gen_range(-0.9..0.9));
        let hess = hpsi(&g, &ef);
        let ad = k.ad(&xi);
        let xs = static_xi_sensitivity(&gw, &hess, gains.a_inv(), gains.kp(), &sigma, p.varsigma);
        let zero_input = Matrix6xX::zeros(6 * m);
        let (g_dot_full, _) = sens_rhs_full(&gw, &xs, &ad, &hess, gains.a(), gains.kp(), &zero_input);
        let g_dot_static = sens_rhs_w_static(&gw, &Se3::ad(&xi), &hess, gains.a_inv(), gains.kp(), &sigma, p.varsigma);
        static_err = static_err.max(rel_err(&g_dot_full, &g_dot_static, 1e-12));
    }
    out.push(check("static_flow_is_full_flow_at_equilibrium", static_err, 1e-12));

    // ∇_V̂ ½‖Ŵσ(V̂x)‖² against central differences.
    let mut effort_err = 0.0f64;
    for _ in 0..cfg.effort_shapes {
        let (n, m, mm) = (rng.gen_range(1..7), rng.gen_range(1..8), rng.gen_range(1..9));
        let w = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0));
        let v = DMatrix::from_fn(m, mm, |_, _| rng.gen_range(-1.0..1.0));
        let x = DVector::from_fn(mm, |_, _| rng.gen_range(-1.0..1.0));
        let effort = |v: &DMatrix<f64>| 0.5 * (&w * sigmoid(&(v * &x))).norm_squared();
        let h = 1e-4;
        let fd = DMatrix::from_fn(m, mm, |i, j| {
            let at = |d: f64| {
                let mut vp = v.clone();
                vp[(i, j)] += d;
                effort(&vp)
            };
            (at(-2.0 * h) - at(2.0 * h) + (at(h) - at(-h)) * 8.0) / (12.0 * h)
        });
        effort_err = effort_err.max(rel_err(&grad_effort_v(&w, &v, &x), &fd, 1e-3));
    }
    out.push(check("effort_gradient_vs_differences", effort_err, 1e-6));

    // ∇_Ŵ F against differences of F along the static sensitivities.
    let mut cost_err = 0.0f64;
    for _ in 0..cfg.cost_samples {
        let m = rng.gen_range(2..6);
        let g_err = random_pose(&mut rng, 2.0, 2.0);
        let g_nom = random_pose(&mut rng, 1.0, 1.0);
        let xi_err = random_twist(&mut rng, 1.0);
        let xi_nom = random_twist(&mut rng, 1.0);
        let gw = Matrix6xX::from_fn(6 * m, |_, _| rng.gen_range(-0.5..0.5));
        let sigma = DVector::from_fn(m, |_, _| rng.gen_range(-0.9..0.9));
        let hess = hpsi(&g_err, &ef);
        let xs = static_xi_sensitivity(&gw, &hess, gains.a_inv(), gains.kp(), &sigma, p.varsigma);
        let snap = cost_f(&g_err, &xi_err, &g_nom, &xi_nom, gains.a(), &ef, &p);
        let grad = grad_f_w(&snap.xi_gap, &k.dpsi(&snap.g_gap, &ef), &gw, &hess, &sigma, gains.kp(), &p);
        let f_at = |col: usize, d: f64| {
            let xi = xi_err + xs.column(col) * d;
            let g = g_err * Se3::exp(&(gw.column(col) * d));
            cost_f(&g, &xi, &g_nom, &xi_nom, gains.a(), &ef, &p).value
        };
        let h = 1e-6;
        let fd = DVector::from_fn(6 * m, |col, _| (f_at(col, h) - f_at(col, -h)) / (2.0 * h));
        cost_err = cost_err.max(rel_err(&breve(&grad), &fd, 1e-12));
    }
    out.push(check("grad_f_w_vs_cost_differences", cost_err, 1e-4));
    Ok(out)
}
