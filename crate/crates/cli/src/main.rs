//! `lienn`: run formation scenarios, nominal baselines and oracle suites.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lienn_core::scenario::{log::write_nominal_dir, run_nominal, settling_time, Simulation};
use lienn_core::validation::{run_suites, Mutation, Suite, ValidationConfig};
use lienn_core::{ControlMode, Error, Scheme, ScenarioConfig};

use manifest::Manifest;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_VALIDATION: u8 = 4;

#[derive(Parser)]
#[command(name = "lienn", version, about = "Geometric NN tracking control on SE(3) formations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the leader/agent scenario and write CSV logs.
    Simulate(SimulateArgs),
    /// Run oracle suites and report measured errors.
    Validate(ValidateArgs),
    /// Integrate only the nominal error systems from the configured initial errors.
    Nominal(NominalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Nn,
    Ideal,
    Pd,
}

impl From<ModeArg> for ControlMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Nn => ControlMode::Nn,
            ModeArg::Ideal => ControlMode::Ideal,
            ModeArg::Pd => ControlMode::Pd,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Rkmk4,
    LieEulerRk4,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Rkmk4 => Scheme::Rkmk4,
            SchemeArg::LieEulerRk4 => Scheme::LieEulerRk4,
        }
    }
}

/// Overrides shared by commands that read a scenario config.
#[derive(Args)]
struct RunArgs {
    /// Scenario config (JSON). Without it the built-in case study is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; defaults to out/<timestamp>.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Keep every n-th step in the CSV logs.
    #[arg(long)]
    log_stride: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Step agents on separate threads.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct NominalArgs {
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Group,
    Calculus,
    Errfun,
    Sensitivity,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum MutationArg {
    None,
    AdSign,
    ChiSign,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, value_enum, default_value = "all")]
    suite: SuiteArg,
    /// Inject a sign flip into the kernels under test.
    #[arg(long, value_enum, default_value = "none")]
    mutate: MutationArg,
    #[arg(long)]
    seed: Option<u64>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::InvalidParameter { .. } => EXIT_CONFIG,
        e if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_FAILURE,
    }
}

fn load_config(args: &RunArgs) -> Result<ScenarioConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
                path: path.display().to_string(),
                message: format!("cannot read config: {e}"),
            })?;
            ScenarioConfig::from_json(&text)?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(dt) = args.dt {
        cfg.dt = dt;
    }
    if let Some(d) = args.duration {
        cfg.duration = d;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(s) = args.scheme {
        cfg.scheme = s.into();
    }
    if let Some(s) = args.log_stride {
        cfg.log_stride = s;
    }
    Ok(cfg)
}

fn out_dir(args: &RunArgs) -> PathBuf {
    args.out.clone().unwrap_or_else(|| {
        Path::new("out").join(chrono::Local::now().format("%Y%m%d-%H%M%S-%3f").to_string())
    })
}

fn base_manifest(command: &str, args: &RunArgs, cfg: &ScenarioConfig, out: &Path) -> Manifest {
    let mut m = Manifest::new();
    m.set("command", command);
    m.set(
        "config_path",
        args.config.as_ref().map_or("<built-in>".to_string(), |p| p.display().to_string()),
    );
    m.set("seed", cfg.seed);
    m.set("version", lienn_core::VERSION);
    m.set("out_dir", out.display());
    m.set("started", chrono::Local::now().to_rfc3339());
    m
}

fn write_config_echo(m: &mut Manifest, cfg: &ScenarioConfig, out: &Path) -> Result<(), Error> {
    std::fs::write(out.join("effective_config.json"), cfg.to_json())?;
    m.set("effective_config", "effective_config.json");
    let compact = serde_json::to_string(cfg).expect("config is always serializable");
    m.set("effective_config_json", compact);
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<u8, Error> {
    let mut cfg = load_config(&args.run)?;
    if let Some(mode) = args.mode {
        cfg.mode = mode.into();
    }
    if args.parallel {
        cfg.parallel_agents = true;
    }
    cfg.validate()?;
    let out = out_dir(&args.run);
    std::fs::create_dir_all(&out)?;
    let mut manifest = base_manifest("simulate", &args.run, &cfg, &out);
    write_config_echo(&mut manifest, &cfg, &out)?;

    let start = Instant::now();
    let mut sim = Simulation::new(cfg)?;
    let mut abort = None;
    while !sim.is_done() {
        if let Err(e) = sim.step() {
            abort = Some(e);
            break;
        }
    }
    let log = sim.finish();
    log.write_dir(&out)?;
    manifest.set("wall_clock_seconds", format!("{:.3}", start.elapsed().as_secs_f64()));
    manifest.set("steps", log.summary.steps);
    manifest.set("t_end", log.summary.t_end);
    let code = match &abort {
        None => {
            manifest.set("status", "ok");
            0
        }
        Some(e) => {
            manifest.set("status", "aborted");
            manifest.set("error", e);
            exit_code(e)
        }
    };
    manifest.write(&out.join("manifest"))?;

    let s = &log.summary;
    println!("wrote {}", out.display());
    println!("steps={} t_end={:.3} beta={:.2} theta0={}", s.steps, s.t_end, s.beta, s.theta0);
    for (i, a) in s.agents.iter().enumerate() {
        println!(
            "agent{}: final_psi={:.3e} max_psi_after_settle={:.3e} excursions={} max_w_norm={:.3e} formation_err=[{:.3e}, {:.3e}, {:.3e}]",
            i + 1,
            a.final_psi,
            a.max_psi_after_settle,
            a.excursions.len(),
            a.max_w_norm,
            a.max_formation_error[0],
            a.max_formation_error[1],
            a.max_formation_error[2]
        );
    }
    if let Some(e) = abort {
        eprintln!("error: {e}");
    }
    Ok(code)
}

fn nominal(args: NominalArgs) -> Result<u8, Error> {
    let cfg = load_config(&args.run)?;
    cfg.validate()?;
    let out = out_dir(&args.run);
    std::fs::create_dir_all(&out)?;
    let mut manifest = base_manifest("nominal", &args.run, &cfg, &out);
    write_config_echo(&mut manifest, &cfg, &out)?;
    let start = Instant::now();
    let runs = run_nominal(&cfg)?;
    write_nominal_dir(&out, &runs)?;
    manifest.set("wall_clock_seconds", format!("{:.3}", start.elapsed().as_secs_f64()));
    manifest.set("status", "ok");
    manifest.write(&out.join("manifest"))?;
    println!("wrote {}", out.display());
    for (i, rows) in runs.iter().enumerate() {
        let settle = settling_time(rows, 0.01).map_or("not reached".to_string(), |t| format!("{t:.3} s"));
        println!("agent{}: psi0={:.4} settles below 1% at {settle}", i + 1, rows[0].psi);
    }
    Ok(0)
}

fn validate(args: ValidateArgs) -> Result<u8, Error> {
    let suites = match args.suite {
        SuiteArg::Group => vec![Suite::Group],
        SuiteArg::Calculus => vec![Suite::Calculus],
        SuiteArg::Errfun => vec![Suite::Errfun],
        SuiteArg::Sensitivity => vec![Suite::Sensitivity],
        SuiteArg::All => Suite::ALL.to_vec(),
    };
    let mutation = match args.mutate {
        MutationArg::None => Mutation::None,
        MutationArg::AdSign => Mutation::AdSign,
        MutationArg::ChiSign => Mutation::ChiSign,
    };
    let mut cfg = ValidationConfig::with_mutation(mutation);
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let mut ok = true;
    for report in run_suites(&suites, &cfg)? {
        for c in &report.checks {
            println!("{c}");
        }
        println!(
            "suite {}: {} in {:.3} s",
            report.suite,
            if report.passed() { "pass" } else { "FAIL" },
            report.elapsed.as_secs_f64()
        );
        ok &= report.passed();
    }
    Ok(if ok { 0 } else { EXIT_VALIDATION })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Validate(a) => validate(a),
        Command::Nominal(a) => nominal(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
