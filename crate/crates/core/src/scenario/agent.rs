//! One follower: plant, nominal error system, network weights and output-layer
//! sensitivities, integrated together.
//!
//! Decentralization is structural: [`AgentRuntime::step`] receives only its
//! own runtime and the leader broadcast, so no other agent's state can reach
//! the controller.

use nalgebra::{DMatrix, DVector, Matrix6xX, Vector6};

use crate::dynamics::{
    ideal_control, nominal_rhs, pd_feedback, plant_rhs, Desired, ErrorState, GainParams, Integrator, LieOde,
    LieState, PlantModel, Scheme, SystemState,
};
use crate::errfun::{dpsi, hpsi, psi, ErrFunParams};
use crate::error::{Error, Result};
use crate::liegroup::{frob_norm, Se3};
use crate::nncontrol::{
    build_input, grad_f_w, sens_rhs_w_static, sigmoid, v_dot, w_damping, w_dot, LearnParams, NNWeights,
    SE3_INPUT_DIM,
};

use super::config::ControlMode;
use super::leader::LeaderSegment;
use super::model::AgentPlant;

/// Offsets of the blocks in the flat vector state
/// `[ξ, ξ̃*, Ŵ, V̂, ∇^L_Ŵ g̃]`; the last three exist only when learning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub hidden: usize,
    pub inputs: usize,
    pub learning: bool,
}

impl Layout {
    pub const XI: usize = 0;
    pub const XI_NOM: usize = 6;
    const W: usize = 12;

    fn w_len(&self) -> usize {
        6 * self.hidden
    }

    fn v_start(&self) -> usize {
        Self::W + self.w_len()
    }

    fn v_len(&self) -> usize {
        self.hidden * self.inputs
    }

    fn gw_start(&self) -> usize {
        self.v_start() + self.v_len()
    }

    fn gw_len(&self) -> usize {
        6 * self.w_len()
    }

    pub fn len(&self) -> usize {
        if self.learning {
            self.gw_start() + self.gw_len()
        } else {
            12
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn xi(&self, v: &DVector<f64>) -> Vector6<f64> {
        Vector6::from_column_slice(&v.as_slice()[Self::XI..Self::XI + 6])
    }

    pub fn xi_nom(&self, v: &DVector<f64>) -> Vector6<f64> {
        Vector6::from_column_slice(&v.as_slice()[Self::XI_NOM..Self::XI_NOM + 6])
    }

    pub fn w(&self, v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(6, self.hidden, &v.as_slice()[Self::W..Self::W + self.w_len()])
    }

    pub fn v(&self, v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.hidden, self.inputs, &v.as_slice()[self.v_start()..self.gw_start()])
    }

    pub fn gw(&self, v: &DVector<f64>) -> Matrix6xX<f64> {
        Matrix6xX::from_column_slice(&v.as_slice()[self.gw_start()..self.gw_start() + self.gw_len()])
    }

    fn pack(
        &self,
        xi: &Vector6<f64>,
        xi_nom: &Vector6<f64>,
        learn: Option<(&DMatrix<f64>, &DMatrix<f64>, &Matrix6xX<f64>)>,
    ) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(xi.as_slice());
        out.extend_from_slice(xi_nom.as_slice());
        if let Some((w, v, gw)) = learn {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(v.as_slice());
            out.extend_from_slice(gw.as_slice());
        }
        DVector::from_vec(out)
    }
}

/// Everything fixed about one agent.
#[derive(Debug, Clone)]
pub struct AgentParams {
    pub index: usize,
    pub offset: Se3,
    pub plant: AgentPlant,
    pub mode: ControlMode,
    pub gains: GainParams,
    pub errfun: ErrFunParams,
    pub learn: LearnParams,
    pub layout: Layout,
}

/// Closed-loop quantities at one instant.
#[derive(Debug, Clone)]
pub struct AgentEval {
    pub desired: Desired,
    pub err: ErrorState,
    pub err_nom: ErrorState,
    pub u: Vector6<f64>,
    pub disturbance: Vector6<f64>,
    pub twists: Vec<Vector6<f64>>,
    pub derivative: DVector<f64>,
}

impl AgentParams {
    pub fn evaluate(&self, t: f64, configs: &[Se3], v: &DVector<f64>, leader: &LeaderSegment) -> Result<AgentEval> {
        let lay = &self.layout;
        let desired = leader.agent_desired(&self.offset, t);
        let state = SystemState {
            g: configs[0],
            xi: lay.xi(v),
        };
        let err = ErrorState::between(&state, &desired);
        let err_nom = ErrorState {
            g: configs[1],
            xi: lay.xi_nom(v),
        };
        let (nom_twist, nom_acc) = nominal_rhs(&err_nom, &self.gains, &self.errfun);

        let mut learned = None;
        let u = match self.mode {
            ControlMode::Nn => {
                let (w, vh, gw) = (lay.w(v), lay.v(v), lay.gw(v));
                let x = build_input(&err.g, &err.xi, &desired.g, &desired.xi, &desired.xi_dot);
                let sigma = sigmoid(&(&vh * &x));
                let u = Vector6::from_column_slice((&w * &sigma).as_slice());

                let hess = hpsi(&err.g, &self.errfun);
                let ad = Se3::ad(&err.xi);
                let kp = self.gains.kp();
                let gw_dot = sens_rhs_w_static(&gw, &ad, &hess, self.gains.a_inv(), kp, &sigma, self.learn.varsigma);
                let xi_gap = err.xi - err_nom.xi;
                let dpsi_gap = dpsi(&(err_nom.g.inverse() * err.g), &self.errfun);
                let grad = grad_f_w(&xi_gap, &dpsi_gap, &gw, &hess, &sigma, kp, &self.learn);
                let damping = w_damping(&xi_gap, &dpsi_gap, &gw, &hess, kp);
                let wd = w_dot(&w, &grad, damping, &self.learn);
                let vd = v_dot(&w, &vh, &x, &err.xi, &self.learn);
                learned = Some((wd, vd, gw_dot));
                u
            }
            ControlMode::Ideal => {
                let inertia = self.plant.inertia(t);
                let mu = self.plant.mu(&state.g, &state.xi, t);
                ideal_control(&err, &desired, &inertia, &mu, &self.gains, &self.errfun, t)?
                    .component_div(&self.plant.fault(t))
            }
            ControlMode::Pd => -pd_feedback(&err, &self.gains, &self.errfun),
        };
        let acc = plant_rhs(&state, &u, &self.plant, t)?;
        let derivative = lay.pack(&acc, &nom_acc, learned.as_ref().map(|(a, b, c)| (a, b, c)));
        Ok(AgentEval {
            desired,
            err,
            err_nom,
            u,
            disturbance: self.plant.disturbance(t),
            twists: vec![state.xi, nom_twist],
            derivative,
        })
    }
}

struct AgentOde<'a> {
    params: &'a AgentParams,
    leader: &'a LeaderSegment,
}

impl LieOde for AgentOde<'_> {
    fn eval(&self, t: f64, configs: &[Se3], v: &DVector<f64>) -> Result<(Vec<Vector6<f64>>, DVector<f64>)> {
        let e = self.params.evaluate(t, configs, v, self.leader)?;
        Ok((e.twists, e.derivative))
    }
}

/// Mutable per-agent simulation state.
#[derive(Debug, Clone)]
pub struct AgentRuntime {
    pub params: AgentParams,
    pub state: LieState,
    pub t: f64,
    integ: Integrator,
}

impl AgentRuntime {
    /// Starts from `(g, ξ)` with the nominal errors set to the actual initial
    /// errors and, when learning, the given weights and zero sensitivities.
    pub fn new(
        params: AgentParams,
        initial: SystemState,
        weights: Option<NNWeights>,
        leader: &LeaderSegment,
        scheme: Scheme,
        dt: f64,
    ) -> Result<Self> {
        let lay = params.layout;
        let err0 = ErrorState::between(&initial, &leader.agent_desired(&params.offset, 0.0));
        let learn = match (lay.learning, &weights) {
            (true, Some(nn)) => {
                if nn.w.shape() != (6, lay.hidden) || nn.v.shape() != (lay.hidden, lay.inputs) {
                    return Err(Error::dims(
                        format!("W 6x{} and V {}x{}", lay.hidden, lay.hidden, lay.inputs),
                        format!("W {:?} and V {:?}", nn.w.shape(), nn.v.shape()),
                    ));
                }
                Some((&nn.w, &nn.v, Matrix6xX::zeros(6 * lay.hidden)))
            }
            (true, None) => return Err(Error::param("weights", "learning agent needs initial weights")),
            (false, _) => None,
        };
        let vector = lay.pack(&initial.xi, &err0.xi, learn.as_ref().map(|(w, v, g)| (*w, *v, g)));
        Ok(AgentRuntime {
            params,
            state: LieState {
                configs: vec![initial.g, err0.g],
                vector,
            },
            t: 0.0,
            integ: Integrator::new(scheme, dt)?,
        })
    }

    /// Advances one step using only this agent's state and the broadcast.
    pub fn step(&mut self, leader: &LeaderSegment) -> Result<()> {
        self.params.plant.check_inertia(self.params.index, self.t)?;
        let ode = AgentOde {
            params: &self.params,
            leader,
        };
        self.state = self.integ.step(&ode, self.t, &self.state).map_err(|e| match e {
            Error::SingularInertia { t } => match self.params.plant.check_inertia(self.params.index, t) {
                Err(named) => named,
                Ok(()) => e,
            },
            e => e,
        })?;
        self.t += self.integ.dt();
        Ok(())
    }

    pub fn evaluate_now(&self, leader: &LeaderSegment) -> Result<AgentEval> {
        self.params.evaluate(self.t, &self.state.configs, &self.state.vector, leader)
    }

    pub fn system_state(&self) -> SystemState {
        SystemState {
            g: self.state.configs[0],
            xi: self.params.layout.xi(&self.state.vector),
        }
    }

    pub fn weights(&self) -> Option<NNWeights> {
        let lay = &self.params.layout;
        lay.learning.then(|| NNWeights {
            w: lay.w(&self.state.vector),
            v: lay.v(&self.state.vector),
        })
    }

    /// `(‖Ŵ‖, ‖V̂‖)`, zero when not learning.
    pub fn weight_norms(&self) -> (f64, f64) {
        let lay = &self.params.layout;
        if !lay.learning {
            return (0.0, 0.0);
        }
        let v = self.state.vector.as_slice();
        let w = &v[Layout::W..Layout::W + lay.w_len()];
        let hv = &v[lay.v_start()..lay.gw_start()];
        let norm = |s: &[f64]| s.iter().map(|x| x * x).sum::<f64>().sqrt();
        (norm(w), norm(hv))
    }

    /// `ψ(g̃)` and `p̃` against the desired pose at the current time.
    pub fn tracking(&self, leader: &LeaderSegment) -> (f64, nalgebra::Vector3<f64>) {
        let desired = leader.agent_desired(&self.params.offset, self.t);
        let g_err = desired.g.inverse() * self.state.configs[0];
        (psi(&g_err, &self.params.errfun), *g_err.translation())
    }

    pub fn sensitivity_norm(&self) -> f64 {
        let lay = &self.params.layout;
        if lay.learning {
            frob_norm(&lay.gw(&self.state.vector))
        } else {
            0.0
        }
    }

    pub fn integrator(&self) -> &Integrator {
        &self.integ
    }
}

/// Input dimension of the network for SE(3).
pub const INPUTS: usize = SE3_INPUT_DIM;
