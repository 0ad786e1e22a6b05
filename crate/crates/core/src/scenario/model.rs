//! The agents' plant: time-varying inertia, actuator faults, gravity with a
//! centre-of-mass offset, viscous drag and an additive disturbance. None of
//! this is visible to the network controller.

use std::f64::consts::PI;

use nalgebra::{Matrix6, SymmetricEigen, Vector3, Vector6};
use rand::Rng;

use crate::dynamics::PlantModel;
use crate::error::{Error, Result};
use crate::liegroup::Se3;

use super::config::{DisturbanceConfig, FaultConfig, PlantConfig, Sinusoid};

#[derive(Debug, Clone, PartialEq)]
pub struct FaultSchedule(pub FaultConfig);

impl FaultSchedule {
    /// Diagonal of `𝔼(t)`; healthy (all ones) up to and including the onset.
    pub fn diagonal(&self, t: f64) -> Vector6<f64> {
        let mut e = Vector6::repeat(1.0);
        match &self.0 {
            FaultConfig::Healthy => {}
            FaultConfig::Constant { onset, entries, level } => {
                if t > *onset {
                    entries.iter().for_each(|&i| e[i] = *level);
                }
            }
            FaultConfig::Oscillating {
                onset,
                entries,
                base,
                amplitude,
                period,
            } => {
                if t > *onset {
                    let s = (2.0 * PI * t / period).sin();
                    entries.iter().for_each(|&i| e[i] = base + amplitude * s * s);
                }
            }
        }
        e
    }
}

/// Sum of sinusoids per twist axis.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Disturbance {
    pub terms: Vec<Sinusoid>,
}

impl Disturbance {
    pub fn from_config<R: Rng>(cfg: &DisturbanceConfig, rng: &mut R) -> Self {
        let terms = match cfg {
            DisturbanceConfig::None => vec![],
            DisturbanceConfig::Sinusoids { terms } => terms.clone(),
            DisturbanceConfig::Random {
                per_axis,
                amplitude,
                period,
            } => {
                let mut terms = Vec::with_capacity(6 * per_axis);
                for axis in 0..6 {
                    for _ in 0..*per_axis {
                        terms.push(Sinusoid {
                            axis,
                            amplitude: rng.gen_range(amplitude[0]..=amplitude[1]),
                            period: rng.gen_range(period[0]..=period[1]),
                            phase: rng.gen_range(0.0..2.0 * PI),
                        });
                    }
                }
                terms
            }
        };
        Disturbance { terms }
    }

    pub fn at(&self, t: f64) -> Vector6<f64> {
        let mut d = Vector6::zeros();
        for s in &self.terms {
            d[s.axis] += s.amplitude * (2.0 * PI * t / s.period + s.phase).sin();
        }
        d
    }
}

/// `μ = 𝕀⁻¹ ([r_c × f; f] − c ξ)` with `f = m Rᵀ a_g` and `m = 𝕀₄₄`.
pub fn mu_term(
    g: &Se3,
    xi: &Vector6<f64>,
    inertia: &Matrix6<f64>,
    gravity: &Vector3<f64>,
    com_offset: &Vector3<f64>,
    viscous: f64,
) -> Vector6<f64> {
    let mass = inertia[(3, 3)];
    let force = g.rotation().transpose() * gravity * mass;
    let torque = com_offset.cross(&force);
    let wrench = Vector6::new(torque.x, torque.y, torque.z, force.x, force.y, force.z) - xi * viscous;
    match inertia.cholesky() {
        Some(c) => c.solve(&wrench),
        None => Vector6::repeat(f64::NAN),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentPlant {
    /// `blockdiag(diag(base + I), (m_base + m) I₃)`.
    pub inertia_const: Matrix6<f64>,
    pub oscillation_amplitude: f64,
    pub oscillation_period: f64,
    pub fault: FaultSchedule,
    pub gravity: Vector3<f64>,
    pub com_offset: Vector3<f64>,
    pub viscous: f64,
    pub disturbance: Disturbance,
}

impl AgentPlant {
    /// `draw = (I₁, I₂, I₃, m)`.
    pub fn new(cfg: &PlantConfig, draw: [f64; 4], fault: FaultConfig, disturbance: Disturbance) -> Self {
        let r = cfg.rotational_base;
        let mass = cfg.mass_base + draw[3];
        let diag = Vector6::new(r[0] + draw[0], r[1] + draw[1], r[2] + draw[2], mass, mass, mass);
        AgentPlant {
            inertia_const: Matrix6::from_diagonal(&diag),
            oscillation_amplitude: cfg.oscillation_amplitude,
            oscillation_period: cfg.oscillation_period,
            fault: FaultSchedule(fault),
            gravity: Vector3::from(cfg.gravity),
            com_offset: Vector3::from(cfg.com_offset),
            viscous: cfg.viscous,
            disturbance,
        }
    }

    /// Worst case of `λ_min(𝕀(t))` over a period of the oscillation.
    pub fn min_inertia_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.inertia_const).eigenvalues.min() - self.oscillation_amplitude.abs()
    }

    /// Fails if `𝕀(t)` is not positive-definite.
    pub fn check_inertia(&self, agent: usize, t: f64) -> Result<()> {
        let inertia = self.inertia(t);
        if inertia.cholesky().is_none() {
            return Err(Error::InertiaNotPositive {
                agent,
                t,
                min_eig: SymmetricEigen::new(inertia).eigenvalues.min(),
            });
        }
        Ok(())
    }
}

impl PlantModel for AgentPlant {
    fn inertia(&self, t: f64) -> Matrix6<f64> {
        let osc = self.oscillation_amplitude * (2.0 * PI * t / self.oscillation_period).sin();
        self.inertia_const + Matrix6::identity() * osc
    }

    fn fault(&self, t: f64) -> Vector6<f64> {
        self.fault.diagonal(t)
    }

    fn mu(&self, g: &Se3, xi: &Vector6<f64>, t: f64) -> Vector6<f64> {
        mu_term(g, xi, &self.inertia(t), &self.gravity, &self.com_offset, self.viscous)
    }

    fn disturbance(&self, t: f64) -> Vector6<f64> {
        self.disturbance.at(t)
    }
}
