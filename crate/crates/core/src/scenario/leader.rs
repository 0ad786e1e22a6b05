//! Virtual leader with known dynamics, tracked by the ideal law, and the
//! per-step broadcast that agents consume.

use nalgebra::{DVector, Matrix6, Vector6};

use crate::dynamics::{
    ideal_control, plant_rhs, Desired, ErrorState, GainParams, Integrator, LieOde, LieState, RigidBody, Scheme,
    SystemState,
};
use crate::errfun::ErrFunParams;
use crate::error::Result;
use crate::liegroup::Se3;

use super::config::{vec6, TrajectoryConfig};

/// `t ↦ exp(base^) exp(a sin(ω t) c^)`. The exponent direction is fixed, so
/// the body velocity is `a ω cos(ω t) c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderTrajectory {
    base: Se3,
    direction: Vector6<f64>,
    amplitude: f64,
    frequency: f64,
}

impl LeaderTrajectory {
    pub fn new(cfg: &TrajectoryConfig) -> Self {
        LeaderTrajectory {
            base: Se3::exp(&vec6(&cfg.base)),
            direction: vec6(&cfg.direction),
            amplitude: cfg.amplitude,
            frequency: cfg.frequency,
        }
    }

    pub fn desired(&self, t: f64) -> Desired {
        let (a, w) = (self.amplitude, self.frequency);
        let (s, c) = (w * t).sin_cos();
        Desired {
            g: self.base * Se3::exp(&(self.direction * (a * s))),
            xi: self.direction * (a * w * c),
            xi_dot: self.direction * (-a * w * w * s),
        }
    }
}

/// Desired leader motion of the case study.
pub fn leader_desired(t: f64) -> Desired {
    LeaderTrajectory::new(&TrajectoryConfig::default()).desired(t)
}

/// Leader pose, velocity and acceleration at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderKnot {
    pub g: Se3,
    pub xi: Vector6<f64>,
    pub xi_dot: Vector6<f64>,
}

/// Agent reference `(g₀ ḡ_{l0}, Ad_{ḡ_{l0}⁻¹} ξ₀, Ad_{ḡ_{l0}⁻¹} ξ̇₀)`.
pub fn agent_desired(leader: &LeaderKnot, offset: &Se3) -> Desired {
    let ad = offset.inverse().adjoint();
    Desired {
        g: leader.g * *offset,
        xi: ad * leader.xi,
        xi_dot: ad * leader.xi_dot,
    }
}

/// What the leader broadcasts for one step: its states at both ends.
///
/// Interior instants use a cubic Hermite interpolant for the velocity and
/// `g_a exp(s ξ_a + s²/2 ξ̇_a)` for the pose; the end pose is returned exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderSegment {
    pub t0: f64,
    pub dt: f64,
    pub start: LeaderKnot,
    pub end: LeaderKnot,
}

impl LeaderSegment {
    /// A segment that holds one knot for all times; used before the first
    /// step and in tests.
    pub fn frozen(t0: f64, knot: LeaderKnot) -> Self {
        LeaderSegment {
            t0,
            dt: 0.0,
            start: knot,
            end: knot,
        }
    }

    pub fn at(&self, t: f64) -> LeaderKnot {
        if self.dt == 0.0 {
            return self.start;
        }
        let s = t - self.t0;
        if (s - self.dt).abs() <= 1e-9 * self.dt {
            return self.end;
        }
        let h = self.dt;
        let u = s / h;
        let (u2, u3) = (u * u, u * u * u);
        let (a, b) = (&self.start, &self.end);
        let xi = a.xi * (2.0 * u3 - 3.0 * u2 + 1.0)
            + a.xi_dot * (h * (u3 - 2.0 * u2 + u))
            + b.xi * (-2.0 * u3 + 3.0 * u2)
            + b.xi_dot * (h * (u3 - u2));
        let xi_dot = (a.xi - b.xi) * ((6.0 * u2 - 6.0 * u) / h)
            + a.xi_dot * (3.0 * u2 - 4.0 * u + 1.0)
            + b.xi_dot * (3.0 * u2 - 2.0 * u);
        LeaderKnot {
            g: a.g * Se3::exp(&(a.xi * s + a.xi_dot * (0.5 * s * s))),
            xi,
            xi_dot,
        }
    }

    pub fn agent_desired(&self, offset: &Se3, t: f64) -> Desired {
        agent_desired(&self.at(t), offset)
    }
}

/// Leader closed loop under the ideal law with `μ = d = 0`, `𝔼 = I`.
#[derive(Debug, Clone)]
pub struct LeaderOde {
    pub trajectory: LeaderTrajectory,
    pub body: RigidBody,
    pub gains: GainParams,
    pub errfun: ErrFunParams,
}

impl LeaderOde {
    /// `(error, desired, u₀, ξ̇₀)` at a state.
    pub fn evaluate(&self, t: f64, state: &SystemState) -> Result<(ErrorState, Desired, Vector6<f64>, Vector6<f64>)> {
        let desired = self.trajectory.desired(t);
        let err = ErrorState::between(state, &desired);
        let u = ideal_control(&err, &desired, &self.body.inertia, &Vector6::zeros(), &self.gains, &self.errfun, t)?;
        let acc = plant_rhs(state, &u, &self.body, t)?;
        Ok((err, desired, u, acc))
    }
}

impl LieOde for LeaderOde {
    fn eval(&self, t: f64, configs: &[Se3], v: &DVector<f64>) -> Result<(Vec<Vector6<f64>>, DVector<f64>)> {
        let state = SystemState {
            g: configs[0],
            xi: Vector6::from_column_slice(v.as_slice()),
        };
        let (_, _, _, acc) = self.evaluate(t, &state)?;
        Ok((vec![state.xi], DVector::from_column_slice(acc.as_slice())))
    }
}

/// The stepped leader.
#[derive(Debug, Clone)]
pub struct Leader {
    pub ode: LeaderOde,
    pub state: SystemState,
    pub t: f64,
    integ: Integrator,
    accel: Vector6<f64>,
}

impl Leader {
    pub fn new(ode: LeaderOde, initial: SystemState, scheme: Scheme, dt: f64) -> Result<Self> {
        let (_, _, _, accel) = ode.evaluate(0.0, &initial)?;
        Ok(Leader {
            ode,
            state: initial,
            t: 0.0,
            integ: Integrator::new(scheme, dt)?,
            accel,
        })
    }

    pub fn case_study(inertia: Matrix6<f64>, gains: GainParams, errfun: ErrFunParams, scheme: Scheme, dt: f64) -> Result<Self> {
        let ode = LeaderOde {
            trajectory: LeaderTrajectory::new(&TrajectoryConfig::default()),
            body: RigidBody { inertia },
            gains,
            errfun,
        };
        Leader::new(
            ode,
            SystemState {
                g: Se3::identity(),
                xi: Vector6::zeros(),
            },
            scheme,
            dt,
        )
    }

    pub fn integrator(&self) -> &Integrator {
        &self.integ
    }

    pub fn knot(&self) -> LeaderKnot {
        LeaderKnot {
            g: self.state.g,
            xi: self.state.xi,
            xi_dot: self.accel,
        }
    }

    /// Advances one step and returns the segment covering it.
    pub fn step(&mut self) -> Result<LeaderSegment> {
        let start = self.knot();
        let t0 = self.t;
        let s = LieState {
            configs: vec![self.state.g],
            vector: DVector::from_column_slice(self.state.xi.as_slice()),
        };
        let next = self.integ.step(&self.ode, t0, &s)?;
        self.t = t0 + self.integ.dt();
        self.state = SystemState {
            g: next.configs[0],
            xi: Vector6::from_column_slice(next.vector.as_slice()),
        };
        self.accel = self.ode.evaluate(self.t, &self.state)?.3;
        Ok(LeaderSegment {
            t0,
            dt: self.integ.dt(),
            start,
            end: self.knot(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::errfun::psi;
    use nalgebra::Vector3;
    use std::f64::consts::PI;

    fn gains() -> GainParams {
        GainParams::isotropic(4.0, 1.0).unwrap()
    }

    fn errfun() -> ErrFunParams {
        ErrFunParams::isotropic(10.0, 5.0).unwrap()
    }

    #[test]
    fn desired_curve_values() {
        let d = leader_desired(0.0);
        let c = Vector6::new(1.0, 1.0, 1.0, 2.0, 2.0, 2.0);
        assert!((d.g.matrix() - Se3::exp(&Vector6::new(0.0, 1.0, 0.0, 0.0, 0.0, 0.0)).matrix()).norm() < 1e-15);
        assert!((d.xi - c * 0.02).norm() < 1e-15);
        let d = leader_desired(5.0 * PI);
        assert!(d.xi.norm() < 1e-15);
        assert!((d.xi_dot + c * 0.002).norm() < 1e-15);
    }

    #[test]
    fn desired_velocity_matches_differences() {
        let h = 1e-6;
        for t in [0.3, 4.0, 17.0] {
            let d = leader_desired(t);
            let dg = (leader_desired(t + h).g.matrix() - leader_desired(t - h).g.matrix()) / (2.0 * h);
            let fd = Se3::vee(&(d.g.inverse().matrix() * dg));
            assert!((fd - d.xi).norm() < 1e-6);
            let fdd = (leader_desired(t + h).xi - leader_desired(t - h).xi) / (2.0 * h);
            assert!((fdd - d.xi_dot).norm() < 1e-6);
        }
    }

    #[test]
    fn agent_desired_cases() {
        let knot = LeaderKnot {
            g: Se3::exp(&Vector6::new(0.1, 0.2, 0.3, 1.0, 2.0, 3.0)),
            xi: Vector6::new(0.3, -0.1, 0.2, 1.0, 0.5, -0.5),
            xi_dot: Vector6::new(0.0, 0.1, 0.0, 0.2, 0.0, 0.1),
        };
        let same = agent_desired(&knot, &Se3::identity());
        assert_eq!((same.g, same.xi, same.xi_dot), (knot.g, knot.xi, knot.xi_dot));
        let shifted = agent_desired(&knot, &Se3::from_translation(Vector3::new(0.0, 0.0, 10.0)));
        assert_eq!(shifted.xi.fixed_rows::<3>(0), knot.xi.fixed_rows::<3>(0));
    }

    #[test]
    fn leader_on_the_curve_stays_there() {
        let d0 = leader_desired(0.0);
        let ode = LeaderOde {
            trajectory: LeaderTrajectory::new(&TrajectoryConfig::default()),
            body: RigidBody { inertia: Matrix6::identity() },
            gains: gains(),
            errfun: errfun(),
        };
        let mut leader = Leader::new(ode, SystemState { g: d0.g, xi: d0.xi }, Scheme::Rkmk4, 1e-3).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            leader.step().unwrap();
            let err = ErrorState::between(&leader.state, &leader_desired(leader.t));
            worst = worst.max(psi(&err.g, &errfun()));
        }
        assert!(worst <= 1e-6, "{worst:e}");
    }

    #[test]
    fn leader_from_rest_settles() {
        let mut leader = Leader::case_study(Matrix6::identity(), gains(), errfun(), Scheme::Rkmk4, 1e-3).unwrap();
        let psi0 = psi(&ErrorState::between(&leader.state, &leader_desired(0.0)).g, &errfun());
        for _ in 0..2500 {
            leader.step().unwrap();
        }
        let err = ErrorState::between(&leader.state, &leader_desired(leader.t));
        assert!(psi(&err.g, &errfun()) < 0.01 * psi0);
    }

    #[test]
    fn leader_refinement_converges() {
        let run = |dt: f64, steps: usize| {
            let mut l = Leader::case_study(Matrix6::identity(), gains(), errfun(), Scheme::Rkmk4, dt).unwrap();
            for _ in 0..steps {
                l.step().unwrap();
            }
            l.state
        };
        let a = run(4e-2, 25);
        let b = run(2e-2, 50);
        let c = run(1e-2, 100);
        let gap = |x: &SystemState, y: &SystemState| (x.g.matrix() - y.g.matrix()).norm() + (x.xi - y.xi).norm();
        let order = (gap(&a, &b) / gap(&b, &c)).log2();
        assert!(order > 3.5, "{order}");
    }

    #[test]
    fn segment_interpolates_consistently() {
        let mut leader = Leader::case_study(Matrix6::identity(), gains(), errfun(), Scheme::Rkmk4, 1e-2).unwrap();
        for _ in 0..30 {
            leader.step().unwrap();
        }
        let seg = leader.step().unwrap();
        assert_eq!(seg.at(seg.t0), seg.start);
        assert_eq!(seg.at(seg.t0 + seg.dt), seg.end);
        // Interpolated velocity agrees with the pose interpolant to second order.
        let mid = seg.at(seg.t0 + 0.5 * seg.dt);
        let h = 1e-5;
        let gp = seg.at(seg.t0 + 0.5 * seg.dt + h).g.matrix();
        let gm = seg.at(seg.t0 + 0.5 * seg.dt - h).g.matrix();
        let fd = Se3::vee(&(mid.g.inverse().matrix() * (gp - gm) / (2.0 * h)));
        assert!((fd - mid.xi).norm() < 1e-4 * (1.0 + mid.xi.norm()));
    }
}
