//! Leader/follower formation on SE(3).
//!
//! Each time step the leader advances first and broadcasts a
//! [`LeaderSegment`]; every agent then advances independently against that
//! broadcast, optionally on its own scoped thread. Random draws use one
//! ChaCha8 stream per agent and purpose, so results do not depend on agent
//! ordering or threading.

pub mod agent;
pub mod config;
pub mod leader;
pub mod log;
pub mod model;

use nalgebra::{DVector, Matrix6, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{nominal_rhs, ErrorState, GainParams, Integrator, LieOde, LieState, RigidBody, SystemState};
use crate::errfun::{fit_quadratic_bounds, psi, sample_sublevel, ErrFunParams};
use crate::error::{Error, Result};
use crate::liegroup::Se3;
use crate::nncontrol::{theorem1_beta, NNWeights};

pub use agent::{AgentEval, AgentParams, AgentRuntime, Layout, INPUTS};
pub use config::{
    AgentConfig, ControlMode, DisturbanceConfig, FaultConfig, LeaderConfig, MonitorConfig, NetworkConfig,
    PlantConfig, Pose, ScenarioConfig, Sinusoid, TrajectoryConfig,
};
pub use leader::{agent_desired, Leader, LeaderKnot, LeaderOde, LeaderSegment, LeaderTrajectory};
pub use log::{AgentRow, AgentSummary, BoundsSummary, Excursion, LeaderRow, NominalRow, RunLog, RunSummary};
pub use model::{AgentPlant, Disturbance, FaultSchedule};

/// Random-stream purposes; the stream id is `16 · agent + purpose`.
const STREAM_INERTIA: u64 = 0;
const STREAM_DISTURBANCE: u64 = 1;
const STREAM_WEIGHTS: u64 = 2;
const STREAM_BOUNDS: u64 = u64::MAX;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn agent_rng(seed: u64, agent: usize, purpose: u64) -> ChaCha8Rng {
    rng_for(seed, 16 * agent as u64 + purpose)
}

fn leader_inertia(cfg: &LeaderConfig) -> Result<Matrix6<f64>> {
    let m = cfg.inertia.to_matrix(6).map_err(|e| Error::Config {
        path: "leader.inertia".into(),
        message: e.to_string(),
    })?;
    Ok(Matrix6::from_iterator(m.iter().copied()))
}

fn leader_from_config(cfg: &ScenarioConfig) -> Result<Leader> {
    let ode = LeaderOde {
        trajectory: LeaderTrajectory::new(&cfg.leader.trajectory),
        body: RigidBody {
            inertia: leader_inertia(&cfg.leader)?,
        },
        gains: cfg.gains.clone(),
        errfun: cfg.errfun.clone(),
    };
    let initial = SystemState {
        g: cfg.leader.initial.to_se3(),
        xi: config::vec6(&cfg.leader.xi0),
    };
    Leader::new(ode, initial, cfg.scheme, cfg.dt)
}

/// Builds the plant of agent `index`, drawing what the config leaves random.
pub fn build_plant(cfg: &ScenarioConfig, index: usize) -> AgentPlant {
    let a = &cfg.agents[index];
    let draw = a.inertia_draw.unwrap_or_else(|| {
        let mut rng = agent_rng(cfg.seed, index, STREAM_INERTIA);
        [(); 4].map(|_| rng.gen_range(0.0..1.0))
    });
    let disturbance = Disturbance::from_config(&a.disturbance, &mut agent_rng(cfg.seed, index, STREAM_DISTURBANCE));
    AgentPlant::new(&cfg.plant, draw, a.fault.clone(), disturbance)
}

fn initial_weights(cfg: &ScenarioConfig, index: usize) -> Result<NNWeights> {
    match &cfg.agents[index].warm_start {
        Some(path) => NNWeights::load(path),
        None => Ok(NNWeights::uniform(
            6,
            cfg.network.hidden,
            INPUTS,
            cfg.network.init_scale,
            &mut agent_rng(cfg.seed, index, STREAM_WEIGHTS),
        )),
    }
}

fn initial_state(a: &AgentConfig) -> SystemState {
    SystemState {
        g: a.initial.to_se3(),
        xi: config::vec6(&a.xi0),
    }
}

/// Constant of the weight bound for the configured learning parameters.
pub fn beta(cfg: &ScenarioConfig) -> f64 {
    theorem1_beta(&cfg.learn, cfg.network.hidden)
}

/// Stepwise runner. [`run_scenario`] drives it to completion; callers that
/// want the partial log after an abort drive it themselves.
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: ScenarioConfig,
    leader: Leader,
    agents: Vec<AgentRuntime>,
    segment: LeaderSegment,
    step: usize,
    leader_rows: Vec<LeaderRow>,
    agent_rows: Vec<Vec<AgentRow>>,
    monitors: Vec<AgentSummary>,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let leader = leader_from_config(&cfg)?;
        let segment = LeaderSegment::frozen(0.0, leader.knot());
        let layout = Layout {
            hidden: cfg.network.hidden,
            inputs: INPUTS,
            learning: cfg.mode == ControlMode::Nn,
        };
        let mut agents = Vec::with_capacity(cfg.agents.len());
        for (index, a) in cfg.agents.iter().enumerate() {
            let params = AgentParams {
                index,
                offset: a.offset.to_se3(),
                plant: build_plant(&cfg, index),
                mode: cfg.mode,
                gains: cfg.gains.clone(),
                errfun: cfg.errfun.clone(),
                learn: cfg.learn,
                layout,
            };
            let weights = if layout.learning {
                Some(initial_weights(&cfg, index)?)
            } else {
                None
            };
            agents.push(AgentRuntime::new(params, initial_state(a), weights, &segment, cfg.scheme, cfg.dt)?);
        }
        let monitors = agents.iter().map(|a| AgentSummary::new(a.tracking(&segment).0)).collect();
        let mut sim = Simulation {
            leader_rows: vec![],
            agent_rows: vec![vec![]; agents.len()],
            cfg,
            leader,
            agents,
            segment,
            step: 0,
            monitors,
        };
        sim.record()?;
        Ok(sim)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn agents(&self) -> &[AgentRuntime] {
        &self.agents
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.leader.t
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.cfg.steps()
    }

    /// Advances the leader, then every agent, by one step.
    pub fn step(&mut self) -> Result<()> {
        let segment = self.leader.step()?;
        if self.cfg.parallel_agents && self.agents.len() > 1 {
            let results: Vec<Result<()>> = std::thread::scope(|s| {
                let handles: Vec<_> = self
                    .agents
                    .iter_mut()
                    .map(|a| s.spawn(move || a.step(&segment)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("agent step panicked"))
                    .collect()
            });
            results.into_iter().collect::<Result<()>>()?;
        } else {
            for a in &mut self.agents {
                a.step(&segment)?;
            }
        }
        self.segment = segment;
        self.step += 1;
        let t = self.leader.t;
        for (a, m) in self.agents.iter().zip(&mut self.monitors) {
            let (psi, p_err) = a.tracking(&segment);
            m.observe(t, psi, &p_err, a.weight_norms().0, &self.cfg);
        }
        if self.step % self.cfg.log_stride == 0 {
            self.record()?;
        }
        Ok(())
    }

    fn record(&mut self) -> Result<()> {
        let t = self.leader.t;
        let (err, _, u, _) = self.leader.ode.evaluate(t, &self.leader.state)?;
        self.leader_rows.push(LeaderRow {
            t,
            g: self.leader.state.g,
            xi: self.leader.state.xi,
            gt: err.g,
            xit: err.xi,
            psi: psi(&err.g, &self.leader.ode.errfun),
            u,
            theta: self.leader.state.g.rotation_angle(),
        });
        for (a, rows) in self.agents.iter().zip(&mut self.agent_rows) {
            let e = a.evaluate_now(&self.segment)?;
            let (w_norm, v_norm) = a.weight_norms();
            let g = a.system_state().g;
            rows.push(AgentRow {
                t,
                g,
                xi: a.system_state().xi,
                gt: e.err.g,
                xit: e.err.xi,
                xin: e.err_nom.xi,
                psi: psi(&e.err.g, &a.params.errfun),
                psin: psi(&e.err_nom.g, &a.params.errfun),
                u: e.u,
                w_norm,
                v_norm,
                theta: g.rotation_angle(),
                d: e.disturbance,
            });
        }
        Ok(())
    }

    /// Closes the run; the summary covers the steps taken so far.
    pub fn finish(self) -> RunLog {
        let cfg = self.cfg.clone();
        let quadratic_bounds = (cfg.monitor.bound_samples > 0)
            .then(|| {
                let mut rng = rng_for(cfg.seed, STREAM_BOUNDS);
                let cloud = sample_sublevel(&cfg.errfun, cfg.theta0(), cfg.monitor.bound_samples, &mut rng);
                fit_quadratic_bounds(&cfg.errfun, &cloud)
            })
            .flatten()
            .map(|b| BoundsSummary {
                b1: b.b1,
                b2: b.b2,
                samples: b.samples,
            });
        let reprojections = self.leader.integrator().stats().reprojections
            + self
                .agents
                .iter()
                .map(|a| a.integrator().stats().reprojections)
                .sum::<usize>();
        let summary = RunSummary {
            steps: self.step,
            t_end: self.leader.t,
            beta: beta(&cfg),
            theta0: cfg.theta0(),
            leader_final_psi: self.leader_rows.last().map_or(0.0, |r| r.psi),
            reprojections,
            quadratic_bounds,
            agents: self.monitors,
        };
        RunLog {
            final_weights: self.agents.iter().map(|a| a.weights()).collect(),
            config: cfg,
            leader: self.leader_rows,
            agents: self.agent_rows,
            summary,
        }
    }
}

/// Runs the configured scenario to completion.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunLog> {
    let mut sim = Simulation::new(cfg.clone())?;
    while !sim.is_done() {
        sim.step()?;
    }
    Ok(sim.finish())
}

struct NominalOde<'a> {
    gains: &'a GainParams,
    errfun: &'a ErrFunParams,
}

impl LieOde for NominalOde<'_> {
    fn eval(&self, _t: f64, configs: &[Se3], v: &DVector<f64>) -> Result<(Vec<Vector6<f64>>, DVector<f64>)> {
        let err = ErrorState {
            g: configs[0],
            xi: Vector6::from_column_slice(v.as_slice()),
        };
        let (twist, acc) = nominal_rhs(&err, self.gains, self.errfun);
        Ok((vec![twist], DVector::from_column_slice(acc.as_slice())))
    }
}

/// Integrates the nominal error system from `initial` for `steps` steps,
/// keeping every `stride`-th state.
pub fn integrate_nominal(
    initial: ErrorState,
    gains: &GainParams,
    errfun: &ErrFunParams,
    scheme: crate::dynamics::Scheme,
    dt: f64,
    steps: usize,
    stride: usize,
) -> Result<Vec<NominalRow>> {
    let ode = NominalOde { gains, errfun };
    let mut integ = Integrator::new(scheme, dt)?;
    let mut state = LieState {
        configs: vec![initial.g],
        vector: DVector::from_column_slice(initial.xi.as_slice()),
    };
    let row = |t: f64, s: &LieState| NominalRow {
        t,
        gt: s.configs[0],
        xit: Vector6::from_column_slice(s.vector.as_slice()),
        psi: psi(&s.configs[0], errfun),
        theta: s.configs[0].rotation_angle(),
    };
    let mut rows = vec![row(0.0, &state)];
    let mut t = 0.0;
    for k in 1..=steps {
        state = integ.step(&ode, t, &state)?;
        t += dt;
        if k % stride == 0 {
            rows.push(row(t, &state));
        }
    }
    Ok(rows)
}

/// Initial tracking errors of every agent against the leader's initial state.
pub fn initial_errors(cfg: &ScenarioConfig) -> Result<Vec<ErrorState>> {
    let leader = leader_from_config(cfg)?;
    let knot = leader.knot();
    Ok(cfg
        .agents
        .iter()
        .map(|a| ErrorState::between(&initial_state(a), &agent_desired(&knot, &a.offset.to_se3())))
        .collect())
}

/// Nominal error trajectories of every agent from its initial error.
pub fn run_nominal(cfg: &ScenarioConfig) -> Result<Vec<Vec<NominalRow>>> {
    cfg.validate()?;
    initial_errors(cfg)?
        .into_iter()
        .map(|e| integrate_nominal(e, &cfg.gains, &cfg.errfun, cfg.scheme, cfg.dt, cfg.steps(), cfg.log_stride))
        .collect()
}

/// First logged time after which `ψ` stays below `fraction` of its initial
/// value, if it does.
pub fn settling_time(rows: &[NominalRow], fraction: f64) -> Option<f64> {
    let limit = fraction * rows.first()?.psi;
    match rows.iter().rposition(|r| r.psi >= limit) {
        None => Some(0.0),
        Some(i) if i + 1 < rows.len() => Some(rows[i + 1].t),
        Some(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn short(mode: ControlMode, duration: f64) -> ScenarioConfig {
        ScenarioConfig {
            duration,
            mode,
            monitor: MonitorConfig {
                bound_samples: 50,
                ..MonitorConfig::default()
            },
            ..ScenarioConfig::default()
        }
    }

    /// `𝔼 = I`, `d = 0`, `μ = 0`.
    fn zero_uncertainty(mode: ControlMode, duration: f64) -> ScenarioConfig {
        let mut cfg = short(mode, duration);
        cfg.plant = PlantConfig {
            gravity: [0.0; 3],
            com_offset: [0.0; 3],
            viscous: 0.0,
            oscillation_amplitude: 0.0,
            ..PlantConfig::default()
        };
        for a in &mut cfg.agents {
            a.fault = FaultConfig::Healthy;
            a.disturbance = DisturbanceConfig::None;
        }
        cfg
    }

    #[test]
    fn ideal_control_tracks_without_uncertainty() {
        let log = run_scenario(&zero_uncertainty(ControlMode::Ideal, 4.5)).unwrap();
        for rows in &log.agents {
            assert!(rows[0].psi > 10.0);
            // The ideal loop reproduces the nominal trajectory it starts on.
            for r in rows.iter().step_by(50) {
                assert!((r.psi - r.psin).abs() <= 1e-6 * (1.0 + r.psin), "t={} {} vs {}", r.t, r.psi, r.psin);
                assert!((r.xit - r.xin).norm() <= 1e-6 * (1.0 + r.xin.norm()));
            }
            // From these initial errors the nominal system itself first stays
            // below 1e-4 at about 3.8 s.
            let worst = rows.iter().filter(|r| r.t >= 4.0).map(|r| r.psi).fold(0.0, f64::max);
            assert!(worst < 1e-4, "psi after 4 s reached {worst}");
        }
    }

    #[test]
    fn nominal_crosses_small_psi_late_for_case_study_errors() {
        let cfg = short(ControlMode::Ideal, 5.0);
        for rows in run_nominal(&cfg).unwrap() {
            let at3 = rows.iter().find(|r| r.t >= 3.0 - 1e-9).unwrap().psi;
            assert!(at3 > 1e-4 && at3 < 2e-3, "psi*(3) = {at3}");
            let ts = settling_time(&rows, 1e-4 / rows[0].psi).unwrap();
            assert!(ts > 3.5 && ts < 4.0, "{ts}");
        }
    }

    #[test]
    fn agents_ignore_their_neighbours() {
        let cfg = short(ControlMode::Nn, 0.0);
        let clean = Simulation::new(cfg).unwrap();
        let mut poisoned = clean.clone();
        poisoned.agents[1].state.vector.fill(f64::NAN);
        poisoned.agents[2].state.configs[0] = Se3::from_translation(Vector3::repeat(f64::NAN));

        let mut a = clean.agents[0].clone();
        let mut b = poisoned.agents[0].clone();
        let seg = clean.clone().leader.step().unwrap();
        let seg_p = poisoned.leader.step().unwrap();
        a.step(&seg).unwrap();
        b.step(&seg_p).unwrap();
        assert_eq!(a.state, b.state);
        assert!(poisoned.agents[1].clone().step(&seg_p).is_err());
    }

    #[test]
    fn runs_are_deterministic_and_thread_independent() {
        let cfg = short(ControlMode::Nn, 0.1);
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a, b);
        let par = run_scenario(&ScenarioConfig {
            parallel_agents: true,
            ..cfg.clone()
        })
        .unwrap();
        assert_eq!(a.agents, par.agents);
        let other = run_scenario(&ScenarioConfig { seed: 2, ..cfg }).unwrap();
        assert_ne!(a.agents, other.agents);
    }

    #[test]
    fn log_stride_and_row_counts() {
        let cfg = ScenarioConfig {
            log_stride: 10,
            ..short(ControlMode::Pd, 0.1)
        };
        let log = run_scenario(&cfg).unwrap();
        assert_eq!(log.leader.len(), 11);
        assert!(log.agents.iter().all(|r| r.len() == 11));
        assert!((log.leader[10].t - 0.1).abs() < 1e-12);
        assert_eq!(log.summary.steps, 100);
        assert!(log.final_weights.iter().all(Option::is_none));
    }

    #[test]
    fn short_learning_run_is_finite_and_bounded() {
        let log = run_scenario(&short(ControlMode::Nn, 0.5)).unwrap();
        assert!(log.summary.weights_bounded());
        assert!((log.summary.beta - 14142.135623730952).abs() < 1e-6);
        assert!(log.summary.quadratic_bounds.is_some());
        for rows in &log.agents {
            let last = rows.last().unwrap();
            assert!(last.psi.is_finite() && last.w_norm > 0.0);
            assert!(last.psi < rows[0].psi);
        }
        assert!(log.final_weights.iter().all(|w| w.as_ref().unwrap().w.shape() == (6, 50)));
    }

    #[test]
    fn random_draws_use_separate_streams() {
        let cfg = ScenarioConfig::default();
        let p0 = build_plant(&cfg, 0);
        let p1 = build_plant(&cfg, 1);
        assert_ne!(p0.inertia_const, p1.inertia_const);
        assert_ne!(p0.disturbance, p1.disturbance);
        // Draws lie in (0, 1) above the bases.
        let d = p0.inertia_const.diagonal() - Vector6::new(0.7, 0.8, 0.6, 0.8, 0.8, 0.8);
        assert!(d.iter().all(|x| *x > 0.0 && *x < 1.0));
        let fixed = ScenarioConfig {
            agents: cfg
                .agents
                .iter()
                .map(|a| AgentConfig {
                    inertia_draw: Some([0.5; 4]),
                    ..a.clone()
                })
                .collect(),
            ..cfg.clone()
        };
        assert_eq!(build_plant(&fixed, 0).inertia_const[(0, 0)], 1.2);
        assert_eq!(build_plant(&fixed, 0).disturbance, p0.disturbance);
    }

    #[test]
    fn nominal_from_equilibrium_stays_flat() {
        let mut cfg = short(ControlMode::Nn, 1.0);
        let knot = leader_from_config(&cfg).unwrap().knot();
        for a in &mut cfg.agents {
            let d = agent_desired(&knot, &a.offset.to_se3());
            let (w, p) = (nalgebra::Rotation3::from_matrix_unchecked(*d.g.rotation()).scaled_axis(), *d.g.translation());
            a.initial = Pose {
                rotation: w.into(),
                position: p.into(),
            };
            a.xi0 = d.xi.into();
        }
        for rows in run_nominal(&cfg).unwrap() {
            assert!(rows.iter().all(|r| r.psi < 1e-20 && r.xit.norm() < 1e-12));
        }
    }

    #[test]
    fn nominal_settles_for_case_study() {
        let cfg = short(ControlMode::Nn, 3.0);
        for rows in run_nominal(&cfg).unwrap() {
            let ts = settling_time(&rows, 0.01).unwrap();
            assert!(ts <= 2.5, "settling time {ts}");
        }
    }

    #[test]
    fn settling_time_edge_cases() {
        let mk = |psi: &[f64]| -> Vec<NominalRow> {
            psi.iter()
                .enumerate()
                .map(|(i, p)| NominalRow {
                    t: i as f64,
                    gt: Se3::identity(),
                    xit: Vector6::zeros(),
                    psi: *p,
                    theta: 0.0,
                })
                .collect()
        };
        assert_eq!(settling_time(&mk(&[1.0, 0.5, 0.001, 0.002]), 0.01), Some(2.0));
        assert_eq!(settling_time(&mk(&[1.0, 0.5, 0.001, 0.2]), 0.01), None);
        assert_eq!(settling_time(&mk(&[0.0, 0.0]), 0.01), None);
    }
}
