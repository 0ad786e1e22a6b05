//! Run logs, CSV writers and the run summary.
//!
//! Every CSV has a header row and writes floats with nine significant digits.
//! Column order is fixed by the `*_COLUMNS` functions below.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use nalgebra::{Vector3, Vector6};
use serde::Serialize;

use crate::error::Result;
use crate::liegroup::Se3;
use crate::nncontrol::NNWeights;

use super::config::ScenarioConfig;

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}{i}"))
}

/// `t, g0..g11, xi0..xi5, gt0..gt11, xit0..xit5, xin0..xin5, psi, psin,
/// u0..u5, w_norm, v_norm, theta, d0..d5`.
pub fn agent_columns() -> Vec<String> {
    let mut c = vec!["t".to_string()];
    c.extend(indexed("g", 12));
    c.extend(indexed("xi", 6));
    c.extend(indexed("gt", 12));
    c.extend(indexed("xit", 6));
    c.extend(indexed("xin", 6));
    c.extend(["psi", "psin"].map(String::from));
    c.extend(indexed("u", 6));
    c.extend(["w_norm", "v_norm", "theta"].map(String::from));
    c.extend(indexed("d", 6));
    c
}

/// `t, g0..g11, xi0..xi5, gt0..gt11, xit0..xit5, psi, u0..u5, theta`.
pub fn leader_columns() -> Vec<String> {
    let mut c = vec!["t".to_string()];
    c.extend(indexed("g", 12));
    c.extend(indexed("xi", 6));
    c.extend(indexed("gt", 12));
    c.extend(indexed("xit", 6));
    c.push("psi".into());
    c.extend(indexed("u", 6));
    c.push("theta".into());
    c
}

/// `t, gt0..gt11, xit0..xit5, psi, theta`.
pub fn nominal_columns() -> Vec<String> {
    let mut c = vec!["t".to_string()];
    c.extend(indexed("gt", 12));
    c.extend(indexed("xit", 6));
    c.extend(["psi", "theta"].map(String::from));
    c
}

/// One logged instant of a follower. `gt`, `xit` are the tracking errors,
/// `xin` the nominal velocity error, `psin = ψ(g̃*)` and `theta` the rotation
/// angle of `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRow {
    pub t: f64,
    pub g: Se3,
    pub xi: Vector6<f64>,
    pub gt: Se3,
    pub xit: Vector6<f64>,
    pub xin: Vector6<f64>,
    pub psi: f64,
    pub psin: f64,
    pub u: Vector6<f64>,
    pub w_norm: f64,
    pub v_norm: f64,
    pub theta: f64,
    pub d: Vector6<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderRow {
    pub t: f64,
    pub g: Se3,
    pub xi: Vector6<f64>,
    pub gt: Se3,
    pub xit: Vector6<f64>,
    pub psi: f64,
    pub u: Vector6<f64>,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NominalRow {
    pub t: f64,
    pub gt: Se3,
    pub xit: Vector6<f64>,
    pub psi: f64,
    pub theta: f64,
}

struct Line(Vec<f64>);

impl Line {
    fn new(t: f64) -> Self {
        Line(vec![t])
    }

    fn se3(mut self, g: &Se3) -> Self {
        self.0.extend_from_slice(&g.flat12());
        self
    }

    fn vec6(mut self, v: &Vector6<f64>) -> Self {
        self.0.extend_from_slice(v.as_slice());
        self
    }

    fn num(mut self, x: f64) -> Self {
        self.0.push(x);
        self
    }

    fn write<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let mut first = true;
        for x in &self.0 {
            if !first {
                out.write_all(b",")?;
            }
            first = false;
            write!(out, "{x:.8e}")?;
        }
        out.write_all(b"\n")
    }
}

fn write_header<W: Write>(out: &mut W, cols: &[String]) -> io::Result<()> {
    writeln!(out, "{}", cols.join(","))
}

impl AgentRow {
    fn line(&self) -> Line {
        Line::new(self.t)
            .se3(&self.g)
            .vec6(&self.xi)
            .se3(&self.gt)
            .vec6(&self.xit)
            .vec6(&self.xin)
            .num(self.psi)
            .num(self.psin)
            .vec6(&self.u)
            .num(self.w_norm)
            .num(self.v_norm)
            .num(self.theta)
            .vec6(&self.d)
    }
}

impl LeaderRow {
    fn line(&self) -> Line {
        Line::new(self.t)
            .se3(&self.g)
            .vec6(&self.xi)
            .se3(&self.gt)
            .vec6(&self.xit)
            .num(self.psi)
            .vec6(&self.u)
            .num(self.theta)
    }
}

impl NominalRow {
    fn line(&self) -> Line {
        Line::new(self.t).se3(&self.gt).vec6(&self.xit).num(self.psi).num(self.theta)
    }
}

pub fn write_agent_csv<W: Write>(rows: &[AgentRow], mut out: W) -> io::Result<()> {
    write_header(&mut out, &agent_columns())?;
    rows.iter().try_for_each(|r| r.line().write(&mut out))
}

pub fn write_leader_csv<W: Write>(rows: &[LeaderRow], mut out: W) -> io::Result<()> {
    write_header(&mut out, &leader_columns())?;
    rows.iter().try_for_each(|r| r.line().write(&mut out))
}

pub fn write_nominal_csv<W: Write>(rows: &[NominalRow], mut out: W) -> io::Result<()> {
    write_header(&mut out, &nominal_columns())?;
    rows.iter().try_for_each(|r| r.line().write(&mut out))
}

/// Writes to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_csv_file<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut io::BufWriter<fs::File>) -> io::Result<()>,
{
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    write(&mut out)?;
    out.flush()?;
    Ok(())
}

/// A maximal interval with `ψ > θ₀` after the settle time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Excursion {
    pub start: f64,
    pub end: f64,
    pub peak: f64,
}

/// Per-agent monitors, updated at every integration step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentSummary {
    pub initial_psi: f64,
    pub final_psi: f64,
    pub max_w_norm: f64,
    pub max_psi_after_settle: f64,
    pub excursions: Vec<Excursion>,
    /// Largest `|p̃|` per axis inside the formation window.
    pub max_formation_error: [f64; 3],
}

impl AgentSummary {
    pub fn new(initial_psi: f64) -> Self {
        AgentSummary {
            initial_psi,
            final_psi: initial_psi,
            max_w_norm: 0.0,
            max_psi_after_settle: 0.0,
            excursions: vec![],
            max_formation_error: [0.0; 3],
        }
    }

    pub fn observe(&mut self, t: f64, psi: f64, p_err: &Vector3<f64>, w_norm: f64, cfg: &ScenarioConfig) {
        let mon = &cfg.monitor;
        self.final_psi = psi;
        self.max_w_norm = self.max_w_norm.max(w_norm);
        if t >= mon.settle_time {
            self.max_psi_after_settle = self.max_psi_after_settle.max(psi);
            if psi > cfg.theta0() {
                match self.excursions.last_mut() {
                    Some(e) if t - e.end <= 1.5 * cfg.dt => {
                        e.end = t;
                        e.peak = e.peak.max(psi);
                    }
                    _ => self.excursions.push(Excursion {
                        start: t,
                        end: t,
                        peak: psi,
                    }),
                }
            }
        }
        let [lo, hi] = mon.formation_window;
        if t >= lo && t <= hi {
            for (m, e) in self.max_formation_error.iter_mut().zip(p_err.iter()) {
                *m = m.max(e.abs());
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsSummary {
    pub b1: f64,
    pub b2: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub steps: usize,
    pub t_end: f64,
    pub beta: f64,
    pub theta0: f64,
    pub leader_final_psi: f64,
    pub reprojections: usize,
    pub quadratic_bounds: Option<BoundsSummary>,
    pub agents: Vec<AgentSummary>,
}

impl RunSummary {
    /// `‖Ŵ_l‖ ≤ 10 β` for every agent.
    pub fn weights_bounded(&self) -> bool {
        self.agents.iter().all(|a| a.max_w_norm <= 10.0 * self.beta)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary is always serializable")
    }
}

/// Everything a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub config: ScenarioConfig,
    pub leader: Vec<LeaderRow>,
    pub agents: Vec<Vec<AgentRow>>,
    pub final_weights: Vec<Option<NNWeights>>,
    pub summary: RunSummary,
}

impl RunLog {
    /// Writes `leader.csv`, `agent{l}.csv` (1-based), `summary.json` and,
    /// when learning, `weights{l}.csv`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_csv_file(&dir.join("leader.csv"), |w| write_leader_csv(&self.leader, w))?;
        for (i, rows) in self.agents.iter().enumerate() {
            write_csv_file(&dir.join(format!("agent{}.csv", i + 1)), |w| write_agent_csv(rows, w))?;
        }
        for (i, nn) in self.final_weights.iter().enumerate() {
            if let Some(nn) = nn {
                nn.save(&dir.join(format!("weights{}.csv", i + 1)))?;
            }
        }
        write_atomic(&dir.join("summary.json"), self.summary.to_json().as_bytes())
    }
}

/// Writes `agent{l}_nominal.csv` per agent.
pub fn write_nominal_dir(dir: &Path, runs: &[Vec<NominalRow>]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, rows) in runs.iter().enumerate() {
        write_csv_file(&dir.join(format!("agent{}_nominal.csv", i + 1)), |w| write_nominal_csv(rows, w))?;
    }
    Ok(())
}
