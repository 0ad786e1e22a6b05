//! Scenario configuration. Every field has a default; an empty JSON object
//! describes the three-agent SE(3) formation case study.

use std::path::PathBuf;

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::dynamics::{GainParams, MatrixInput, Scheme};
use crate::errfun::ErrFunParams;
use crate::error::{Error, Result};
use crate::liegroup::Se3;
use crate::nncontrol::LearnParams;

/// Which controller drives the agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    /// Network controller with online learning.
    #[default]
    Nn,
    /// Ideal law with full model knowledge, divided through by the fault.
    Ideal,
    /// Model-free `u = −A ξ̃ − k_p (d^Lψ)ᵀ`.
    Pd,
}

/// A pose given as a rotation vector and a position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Pose {
    pub rotation: [f64; 3],
    pub position: [f64; 3],
}

impl Pose {
    pub fn translation(x: f64, y: f64, z: f64) -> Self {
        Pose {
            rotation: [0.0; 3],
            position: [x, y, z],
        }
    }

    pub fn to_se3(&self) -> Se3 {
        Se3::from_rotation_vector(&Vector3::from(self.rotation), Vector3::from(self.position))
    }
}

/// `t ↦ exp(base^) exp(amplitude · sin(frequency · t) · direction^)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig {
    pub base: [f64; 6],
    pub direction: [f64; 6],
    pub amplitude: f64,
    /// Angular frequency in rad/s.
    pub frequency: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig {
            base: [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            direction: [1.0, 1.0, 1.0, 2.0, 2.0, 2.0],
            amplitude: 0.2,
            frequency: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeaderConfig {
    pub inertia: MatrixInput,
    pub initial: Pose,
    pub xi0: [f64; 6],
    pub trajectory: TrajectoryConfig,
}

impl Default for LeaderConfig {
    fn default() -> Self {
        LeaderConfig {
            inertia: MatrixInput::Scalar(1.0),
            initial: Pose::default(),
            xi0: [0.0; 6],
            trajectory: TrajectoryConfig::default(),
        }
    }
}

/// Actuator-efficiency schedule; `entries` are 0-based twist indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FaultConfig {
    Healthy,
    Constant {
        onset: f64,
        entries: Vec<usize>,
        level: f64,
    },
    /// `base + amplitude · sin²(2πt / period)` after `onset`.
    Oscillating {
        onset: f64,
        entries: Vec<usize>,
        base: f64,
        amplitude: f64,
        period: f64,
    },
}

impl FaultConfig {
    pub fn validate(&self) -> Result<()> {
        let check_entries = |entries: &[usize]| {
            if let Some(e) = entries.iter().find(|e| **e >= 6) {
                return Err(Error::param("fault.entries", format!("index {e} out of range 0..6")));
            }
            Ok(())
        };
        let in_range = |lo: f64, hi: f64| lo > 0.0 && hi <= 1.0;
        match self {
            FaultConfig::Healthy => Ok(()),
            FaultConfig::Constant { entries, level, .. } => {
                check_entries(entries)?;
                if !in_range(*level, *level) {
                    return Err(Error::param("fault.level", format!("must lie in (0, 1], got {level}")));
                }
                Ok(())
            }
            FaultConfig::Oscillating {
                entries,
                base,
                amplitude,
                period,
                ..
            } => {
                check_entries(entries)?;
                if !(*amplitude >= 0.0) || !in_range(*base, base + amplitude) {
                    return Err(Error::param("fault", "efficiency must stay in (0, 1]"));
                }
                if !(*period > 0.0) {
                    return Err(Error::param("fault.period", "must be positive"));
                }
                Ok(())
            }
        }
    }
}

/// One sinusoid `amplitude · sin(2πt / period + phase)` on twist axis `axis`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sinusoid {
    pub axis: usize,
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
}

/// Acceleration-level disturbance. The random preset only matches the
/// magnitude class of the published disturbance, not its waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceConfig {
    None,
    /// Seeded sum of sinusoids, `per_axis` terms on each of the six axes.
    Random {
        per_axis: usize,
        amplitude: [f64; 2],
        period: [f64; 2],
    },
    Sinusoids { terms: Vec<Sinusoid> },
}

impl Default for DisturbanceConfig {
    fn default() -> Self {
        DisturbanceConfig::Random {
            per_axis: 2,
            amplitude: [0.1, 0.5],
            period: [5.0, 30.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    /// Desired pose relative to the leader.
    pub offset: Pose,
    pub initial: Pose,
    #[serde(default)]
    pub xi0: [f64; 6],
    #[serde(default = "healthy")]
    pub fault: FaultConfig,
    #[serde(default)]
    pub disturbance: DisturbanceConfig,
    /// `(I₁, I₂, I₃, m)` overriding the seeded random inertia parts.
    #[serde(default)]
    pub inertia_draw: Option<[f64; 4]>,
    /// Weight checkpoint to start from instead of random weights.
    #[serde(default)]
    pub warm_start: Option<PathBuf>,
}

fn healthy() -> FaultConfig {
    FaultConfig::Healthy
}

/// Unknown-plant terms shared by all agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantConfig {
    /// Inertial-frame gravitational acceleration.
    pub gravity: [f64; 3],
    /// Centre-of-mass offset in the body frame.
    pub com_offset: [f64; 3],
    /// Viscous coefficient; the drag wrench is `−viscous · ξ`.
    pub viscous: f64,
    /// Constant parts added to the random rotational inertias and mass.
    pub rotational_base: [f64; 3],
    pub mass_base: f64,
    /// `amplitude · sin(2πt / period) I₆` added to every inertia.
    pub oscillation_amplitude: f64,
    pub oscillation_period: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig {
            gravity: [0.0, 0.0, -10.0],
            com_offset: [0.05, 0.0, 0.0],
            viscous: 0.7,
            rotational_base: [0.7, 0.8, 0.6],
            mass_base: 0.8,
            oscillation_amplitude: 0.5,
            oscillation_period: 30.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub hidden: usize,
    /// Initial weights are uniform on `[−init_scale, init_scale]`.
    pub init_scale: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            hidden: 50,
            init_scale: 0.01,
        }
    }
}

/// Diagnostics that never feed back into the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorConfig {
    /// Overrides the default `θ₀ = 0.9 Θ`.
    pub theta0: Option<f64>,
    /// Boundedness checks on `ψ` start after this time.
    pub settle_time: f64,
    /// Window for the formation-error check.
    pub formation_window: [f64; 2],
    /// Sample count for the empirical quadratic-bound fit; 0 disables it.
    pub bound_samples: usize,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            theta0: None,
            settle_time: 5.0,
            formation_window: [10.0, 14.0],
            bound_samples: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub dt: f64,
    pub duration: f64,
    pub scheme: Scheme,
    /// Keep every `log_stride`-th step in the logs. Monitors see every step.
    pub log_stride: usize,
    pub mode: ControlMode,
    /// Step agents on scoped threads within each time step.
    pub parallel_agents: bool,
    pub gains: GainParams,
    pub errfun: ErrFunParams,
    pub learn: LearnParams,
    pub network: NetworkConfig,
    pub leader: LeaderConfig,
    pub plant: PlantConfig,
    pub agents: Vec<AgentConfig>,
    pub monitor: MonitorConfig,
}

fn case_study_agents() -> Vec<AgentConfig> {
    let osc = FaultConfig::Oscillating {
        onset: 4.0,
        entries: vec![0, 4],
        base: 0.1,
        amplitude: 0.4,
        period: 30.0,
    };
    let half = FaultConfig::Constant {
        onset: 4.0,
        entries: vec![0, 4],
        level: 0.5,
    };
    let agent = |offset: Pose, initial: Pose, xi0: [f64; 6], fault: FaultConfig| AgentConfig {
        offset,
        initial,
        xi0,
        fault,
        disturbance: DisturbanceConfig::default(),
        inertia_draw: None,
        warm_start: None,
    };
    vec![
        agent(
            Pose::translation(0.0, 0.0, 10.0),
            Pose::translation(0.0, 1.0, 4.0),
            [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
            osc,
        ),
        agent(
            Pose::translation(-10.0, 0.0, 0.0),
            Pose {
                rotation: [0.2, -0.2, 0.2],
                position: [-5.0, -1.0, 0.0],
            },
            [0.0; 6],
            half.clone(),
        ),
        agent(
            Pose::translation(0.0, -10.0, 0.0),
            Pose {
                rotation: [0.4, -0.4, 0.4],
                position: [-1.0, -5.0, 0.0],
            },
            [0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            half,
        ),
    ]
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            dt: 1e-3,
            duration: 30.0,
            scheme: Scheme::default(),
            log_stride: 1,
            mode: ControlMode::default(),
            parallel_agents: false,
            gains: GainParams::isotropic(4.0, 1.0).expect("valid defaults"),
            errfun: ErrFunParams::isotropic(10.0, 5.0).expect("valid defaults"),
            learn: LearnParams::default(),
            network: NetworkConfig::default(),
            leader: LeaderConfig::default(),
            plant: PlantConfig::default(),
            agents: case_study_agents(),
            monitor: MonitorConfig::default(),
        }
    }
}

impl ScenarioConfig {
    /// Parses JSON, reporting the path of the offending field on failure.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |path: &str, message: String| Error::Config {
            path: path.to_string(),
            message,
        };
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(cfg_err("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(cfg_err("duration", format!("must be non-negative, got {}", self.duration)));
        }
        if self.log_stride == 0 {
            return Err(cfg_err("log_stride", "must be at least 1".into()));
        }
        if self.network.hidden == 0 {
            return Err(cfg_err("network.hidden", "must be at least 1".into()));
        }
        if !(self.network.init_scale >= 0.0) {
            return Err(cfg_err("network.init_scale", "must be non-negative".into()));
        }
        self.learn
            .check_nondegenerate(self.network.hidden)
            .map_err(|e| cfg_err("learn", e.to_string()))?;
        for (i, a) in self.agents.iter().enumerate() {
            a.fault
                .validate()
                .map_err(|e| cfg_err(&format!("agents[{i}].fault"), e.to_string()))?;
            if let DisturbanceConfig::Sinusoids { terms } = &a.disturbance {
                if let Some(t) = terms.iter().find(|t| t.axis >= 6 || !(t.period > 0.0)) {
                    return Err(cfg_err(
                        &format!("agents[{i}].disturbance"),
                        format!("bad term {t:?}: axis must be < 6 and period positive"),
                    ));
                }
            }
            if let DisturbanceConfig::Random { amplitude, period, .. } = &a.disturbance {
                if amplitude[0] > amplitude[1] || !(period[0] > 0.0) || period[0] > period[1] {
                    return Err(cfg_err(
                        &format!("agents[{i}].disturbance"),
                        "ranges must be ordered with positive periods".into(),
                    ));
                }
            }
        }
        if !(self.plant.oscillation_period > 0.0) {
            return Err(cfg_err("plant.oscillation_period", "must be positive".into()));
        }
        Ok(())
    }

    /// Number of integration steps covering `duration`.
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn theta0(&self) -> f64 {
        self.monitor.theta0.unwrap_or_else(|| self.errfun.theta0())
    }
}

pub(crate) fn vec6(a: &[f64; 6]) -> Vector6<f64> {
    Vector6::from_column_slice(a)
}
