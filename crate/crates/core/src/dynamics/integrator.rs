//! Fixed-step geometric integrators for mixed state
//! `(g₁, …, g_k ∈ SE(3); y ∈ ℝᴺ)` with `ġ_i = g_i ξ_i^` and `ẏ = f`.

use nalgebra::{DVector, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liegroup::{Se3, MEMBERSHIP_TOL};

/// Configurations on SE(3) plus a flat vector part.
#[derive(Debug, Clone, PartialEq)]
pub struct LieState {
    pub configs: Vec<Se3>,
    pub vector: DVector<f64>,
}

/// Right-hand side: body twists of each configuration and `ẏ`.
pub trait LieOde {
    fn eval(&self, t: f64, configs: &[Se3], vector: &DVector<f64>) -> Result<(Vec<Vector6<f64>>, DVector<f64>)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `g ← g exp(dt ξ^)` with `ξ` frozen at the step start (first order in
    /// the configurations); classical RK4 on the vector part with stage
    /// configurations taken on the same one-parameter subgroup.
    LieEulerRk4,
    /// Runge–Kutta–Munthe-Kaas, fourth order in every component.
    #[default]
    Rkmk4,
}

/// Truncated inverse of the exponential's trivialized differential,
/// `v − ½ ad_u v + (1/12) ad_u² v`; exact to the order RKMK4 needs.
pub fn dexpinv(u: &Vector6<f64>, v: &Vector6<f64>) -> Vector6<f64> {
    let ad = Se3::ad(u);
    let adv = ad * v;
    v - adv * 0.5 + ad * adv / 12.0
}

/// Counters accumulated across steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub steps: usize,
    pub reprojections: usize,
}

#[derive(Debug, Clone)]
pub struct Integrator {
    scheme: Scheme,
    dt: f64,
    stats: StepStats,
}

fn advance(configs: &[Se3], twists: &[Vector6<f64>], scale: f64) -> Vec<Se3> {
    configs
        .iter()
        .zip(twists)
        .map(|(g, w)| *g * Se3::exp(&(w * scale)))
        .collect()
}

fn check_shape(state: &LieState, twists: &[Vector6<f64>], dv: &DVector<f64>) -> Result<()> {
    if twists.len() != state.configs.len() {
        return Err(Error::dims(state.configs.len(), twists.len()));
    }
    if dv.len() != state.vector.len() {
        return Err(Error::dims(state.vector.len(), dv.len()));
    }
    Ok(())
}

impl Integrator {
    pub fn new(scheme: Scheme, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", format!("must be positive, got {dt}")));
        }
        Ok(Integrator {
            scheme,
            dt,
            stats: StepStats::default(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn stats(&self) -> StepStats {
        self.stats
    }

    /// Advances `state` from `t` to `t + dt`.
    pub fn step<O: LieOde + ?Sized>(&mut self, ode: &O, t: f64, state: &LieState) -> Result<LieState> {
        let step = self.stats.steps;
        let mut next = match self.scheme {
            Scheme::LieEulerRk4 => self.lie_euler_rk4(ode, t, state)?,
            Scheme::Rkmk4 => self.rkmk4(ode, t, state)?,
        };
        for g in next.configs.iter_mut() {
            if g.orthogonality_defect() > MEMBERSHIP_TOL {
                *g = g.reprojected();
                self.stats.reprojections += 1;
            }
        }
        if let Some(i) = next.configs.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("configuration {i}"),
                step,
                t: t + self.dt,
            });
        }
        if let Some(i) = next.vector.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("state component {i}"),
                step,
                t: t + self.dt,
            });
        }
        self.stats.steps += 1;
        Ok(next)
    }

    fn lie_euler_rk4<O: LieOde + ?Sized>(&self, ode: &O, t: f64, s: &LieState) -> Result<LieState> {
        let h = self.dt;
        let (w1, k1) = ode.eval(t, &s.configs, &s.vector)?;
        check_shape(s, &w1, &k1)?;
        let mid = advance(&s.configs, &w1, 0.5 * h);
        let end = advance(&s.configs, &w1, h);
        let (_, k2) = ode.eval(t + 0.5 * h, &mid, &(&s.vector + &k1 * (0.5 * h)))?;
        let (_, k3) = ode.eval(t + 0.5 * h, &mid, &(&s.vector + &k2 * (0.5 * h)))?;
        let (_, k4) = ode.eval(t + h, &end, &(&s.vector + &k3 * h))?;
        Ok(LieState {
            configs: end,
            vector: &s.vector + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0),
        })
    }

    fn rkmk4<O: LieOde + ?Sized>(&self, ode: &O, t: f64, s: &LieState) -> Result<LieState> {
        let h = self.dt;
        // For left-trivialized ġ = g ξ^ with g = g₀ exp(Θ^), Θ̇ = dexpinv(−Θ, ξ).
        let pull = |theta: &[Vector6<f64>], w: &[Vector6<f64>]| -> Vec<Vector6<f64>> {
            theta.iter().zip(w).map(|(th, wi)| dexpinv(&(-th), wi)).collect()
        };
        let scaled = |w: &[Vector6<f64>], c: f64| -> Vec<Vector6<f64>> { w.iter().map(|x| x * c).collect() };

        let (w1, k1) = ode.eval(t, &s.configs, &s.vector)?;
        check_shape(s, &w1, &k1)?;

        let th2 = scaled(&w1, 0.5 * h);
        let (w2, k2) = ode.eval(t + 0.5 * h, &advance(&s.configs, &th2, 1.0), &(&s.vector + &k1 * (0.5 * h)))?;
        let w2 = pull(&th2, &w2);

        let th3 = scaled(&w2, 0.5 * h);
        let (w3, k3) = ode.eval(t + 0.5 * h, &advance(&s.configs, &th3, 1.0), &(&s.vector + &k2 * (0.5 * h)))?;
        let w3 = pull(&th3, &w3);

        let th4 = scaled(&w3, h);
        let (w4, k4) = ode.eval(t + h, &advance(&s.configs, &th4, 1.0), &(&s.vector + &k3 * h))?;
        let w4 = pull(&th4, &w4);

        let theta: Vec<Vector6<f64>> = (0..w1.len())
            .map(|i| (w1[i] + w2[i] * 2.0 + w3[i] * 2.0 + w4[i]) * (h / 6.0))
            .collect();
        Ok(LieState {
            configs: advance(&s.configs, &theta, 1.0),
            vector: &s.vector + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{coadjoint_term, plant_rhs, PlantModel, RigidBody, SystemState};
    use nalgebra::Matrix6;

    fn inertia() -> Matrix6<f64> {
        let m = Matrix6::from_fn(|i, j| ((i * 5 + j * 11) as f64 * 0.23).cos() * 0.15);
        m * m.transpose() + Matrix6::from_diagonal(&Vector6::new(0.9, 1.4, 0.7, 1.8, 1.8, 1.8))
    }

    /// Unforced rigid body.
    struct Free(RigidBody);

    impl LieOde for Free {
        fn eval(&self, t: f64, c: &[Se3], v: &DVector<f64>) -> Result<(Vec<Vector6<f64>>, DVector<f64>)> {
            let xi = Vector6::from_column_slice(v.as_slice());
            let acc = plant_rhs(&SystemState { g: c[0], xi }, &Vector6::zeros(), &self.0, t)?;
            Ok((vec![xi], DVector::from_column_slice(acc.as_slice())))
        }
    }

    /// Constant twist, no vector dynamics beyond a passive copy.
    struct Constant(Vector6<f64>);

    impl LieOde for Constant {
        fn eval(&self, _t: f64, _c: &[Se3], v: &DVector<f64>) -> Result<(Vec<Vector6<f64>>, DVector<f64>)> {
            Ok((vec![self.0], DVector::zeros(v.len())))
        }
    }

    /// Time-varying twist with a configuration-dependent vector part.
    struct Driven;

    impl LieOde for Driven {
        fn eval(&self, t: f64, c: &[Se3], v: &DVector<f64>) -> Result<(Vec<Vector6<f64>>, DVector<f64>)> {
            let w = Vector6::new(t.cos(), 0.5, -0.3 * t, 1.0, t.sin(), 0.2) * 0.8 + Vector6::from_column_slice(v.as_slice()) * 0.1;
            let p = c[0].translation();
            let dv = Vector6::new(-v[0] + p.x, -v[1] + p.y, -v[2] + p.z, v[3].sin(), -0.5 * v[4], c[0].rotation()[(0, 1)]);
            Ok((vec![w], DVector::from_column_slice(dv.as_slice())))
        }
    }

    fn run<O: LieOde>(ode: &O, scheme: Scheme, dt: f64, steps: usize, s0: &LieState) -> LieState {
        let mut integ = Integrator::new(scheme, dt).unwrap();
        let mut s = s0.clone();
        for k in 0..steps {
            s = integ.step(ode, k as f64 * dt, &s).unwrap();
        }
        s
    }

    fn gap(a: &LieState, b: &LieState) -> f64 {
        let g: f64 = a.configs.iter().zip(&b.configs).map(|(x, y)| (x.matrix() - y.matrix()).norm()).sum();
        g + (&a.vector - &b.vector).norm()
    }

    #[test]
    fn one_parameter_subgroup_is_exact() {
        let xi = Vector6::new(0.4, -0.2, 0.9, 1.0, 2.0, -0.5);
        let g0 = Se3::exp(&Vector6::new(0.1, 0.2, 0.3, 0.0, 0.0, 1.0));
        let s0 = LieState { configs: vec![g0], vector: DVector::zeros(2) };
        for scheme in [Scheme::LieEulerRk4, Scheme::Rkmk4] {
            let s = run(&Constant(xi), scheme, 1e-2, 200, &s0);
            let exact = g0 * Se3::exp(&(xi * 2.0));
            assert!((s.configs[0].matrix() - exact.matrix()).norm() < 1e-11, "{scheme:?}");
        }
    }

    #[test]
    fn dexpinv_inverts_the_exponential_differential() {
        // d/ds log-coordinates of g exp(s v^) at s = 0, starting from exp(u^).
        let u = Vector6::new(0.02, -0.01, 0.03, 0.1, 0.0, -0.05);
        let v = Vector6::new(0.3, 0.1, -0.2, 1.0, 0.5, 0.2);
        let h = 1e-6;
        let log = |g: &Se3| {
            // Fixed-point iteration for the logarithm of an element near identity.
            let mut x = Vector6::zeros();
            for _ in 0..50 {
                let r = Se3::exp(&x).inverse() * *g;
                let e = Se3::vee(&(r.matrix() - nalgebra::Matrix4::identity()));
                x += dexpinv(&(-x), &e);
            }
            x
        };
        let base = Se3::exp(&u);
        let fd = (log(&(base * Se3::exp(&(v * h)))) - log(&(base * Se3::exp(&(v * -h))))) / (2.0 * h);
        // The omitted series terms are fourth order in ‖u‖.
        assert!((fd - dexpinv(&(-u), &v)).norm() < 1e-4);
    }

    #[test]
    fn free_body_conserves_kinetic_energy() {
        let inertia = inertia();
        let body = Free(RigidBody { inertia });
        let xi0 = Vector6::new(0.8, -0.5, 0.3, 1.0, -0.4, 0.6);
        let s0 = LieState { configs: vec![Se3::identity()], vector: DVector::from_column_slice(xi0.as_slice()) };
        let energy = |v: &DVector<f64>| {
            let xi = Vector6::from_column_slice(v.as_slice());
            0.5 * xi.dot(&(inertia * xi))
        };
        let e0 = energy(&s0.vector);
        let s = run(&body, Scheme::Rkmk4, 1e-3, 10_000, &s0);
        assert!(((energy(&s.vector) - e0) / e0).abs() < 1e-5);
        // The coadjoint term never does work.
        assert!(xi0.dot(&(inertia * coadjoint_term(&inertia, &xi0, 0.0).unwrap())).abs() < 1e-13);
        let _ = body.0.inertia(0.0);
    }

    fn observed_order(scheme: Scheme) -> f64 {
        let s0 = LieState {
            configs: vec![Se3::exp(&Vector6::new(0.3, 0.1, -0.2, 0.5, 0.5, 0.5))],
            vector: DVector::from_column_slice(&[0.1, -0.2, 0.3, 0.0, 1.0, 0.5]),
        };
        // Steps coarse enough that the fourth-order differences stay above roundoff.
        let coarse = run(&Driven, scheme, 4e-2, 25, &s0);
        let mid = run(&Driven, scheme, 2e-2, 50, &s0);
        let fine = run(&Driven, scheme, 1e-2, 100, &s0);
        (gap(&coarse, &mid) / gap(&mid, &fine)).log2()
    }

    #[test]
    fn richardson_orders() {
        let le = observed_order(Scheme::LieEulerRk4);
        let rk = observed_order(Scheme::Rkmk4);
        assert!((le - 1.0).abs() < 0.2, "Lie–Euler order {le}");
        assert!((rk - 4.0).abs() < 0.3, "RKMK4 order {rk}");
    }

    #[test]
    fn rotation_stays_orthogonal_over_long_runs() {
        let body = Free(RigidBody { inertia: inertia() });
        let s0 = LieState {
            configs: vec![Se3::identity()],
            vector: DVector::from_column_slice(&[2.0, -1.0, 1.5, 1.0, 0.0, 0.0]),
        };
        for scheme in [Scheme::LieEulerRk4, Scheme::Rkmk4] {
            let s = run(&body, scheme, 1e-3, 30_000, &s0);
            assert!(s.configs[0].orthogonality_defect() <= 1e-9);
        }
    }

    struct Blowup;

    impl LieOde for Blowup {
        fn eval(&self, t: f64, _c: &[Se3], v: &DVector<f64>) -> Result<(Vec<Vector6<f64>>, DVector<f64>)> {
            Ok((vec![], v.map(|x| if t > 2.5 { f64::NAN } else { x })))
        }
    }

    #[test]
    fn non_finite_state_aborts_with_step_index() {
        let mut integ = Integrator::new(Scheme::Rkmk4, 1.0).unwrap();
        let mut s = LieState { configs: vec![], vector: DVector::from_element(1, 1.0) };
        let mut failure = None;
        for k in 0..10 {
            match integ.step(&Blowup, k as f64, &s) {
                Ok(next) => s = next,
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
        match failure {
            // The last stage of step 2 samples t = 3.
            Some(Error::NonFinite { step, t, .. }) => assert_eq!((step, t), (2, 3.0)),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_dt_and_shapes() {
        assert!(Integrator::new(Scheme::Rkmk4, 0.0).is_err());
        assert!(Integrator::new(Scheme::Rkmk4, f64::NAN).is_err());
        let mut integ = Integrator::new(Scheme::Rkmk4, 0.1).unwrap();
        let s = LieState { configs: vec![Se3::identity(), Se3::identity()], vector: DVector::zeros(2) };
        assert!(integ.step(&Constant(Vector6::zeros()), 0.0, &s).is_err());
    }
}
