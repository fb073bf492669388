//! Command-line front end: plan steady or figure-8 drifts and simulate them
//! on the thermal plant.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use drift_thermal::config::PlannerConfig;
use drift_thermal::pipeline::{self, Plan, PlanRequest, COMPARISON_SET};
use drift_thermal::{Error, ParamSet};

#[derive(Parser)]
#[command(name = "drift-thermal", version, about = "Thermally-aware drift planning, LQR tracking and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quasi-steady drift on one circle: trajectory.csv, gains.csv, summary.txt.
    PlanSteady(PlanArgs),
    /// Figure-8: steady arc, optimized transition, mirrored arc, transition back, arc.
    PlanFigure8 {
        #[command(flatten)]
        plan: PlanArgs,
        /// Override the transition distance weight k_s, 1/m^2.
        #[arg(long = "k-s")]
        k_s: Option<f64>,
    },
    /// Closed-loop runs on the thermal plant: sim_<name>.csv, poles_<name>.csv, report.txt.
    Simulate(SimulateArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Vehicle, tire and thermal parameters (`key = value`).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Planner and controller settings (`key = value`).
    #[arg(long = "planner-config")]
    planner_config: Option<PathBuf>,
    /// Initial rear tread temperature, degC.
    #[arg(long, default_value_t = 30.0)]
    theta0: f64,
    /// Circle radius, m.
    #[arg(long, default_value_t = 15.0)]
    radius: f64,
    /// Sideslip on the first circle, degrees.
    #[arg(long, default_value_t = -40.0, allow_negative_numbers = true)]
    beta: f64,
    /// Steady arc length, m (the whole sweep, or each figure-8 arc).
    #[arg(long)]
    arc: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    common: Common,
    /// Plan with this constant rear friction instead of the thermal model.
    #[arg(long = "mu-const")]
    mu_const: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScenarioKind {
    /// Steady drift planned with the thermal model, mu = 0.73 and mu = 0.8.
    Steady,
    /// Figure-8 planned with the thermal model, mu = 0.73 and mu = 0.8.
    Figure8,
    /// Plans previously written to the directories given with --plan.
    Custom,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value_t = ScenarioKind::Steady)]
    scenario: ScenarioKind,
    /// Plan directory for the custom scenario; repeat for several.
    #[arg(long = "plan")]
    plans: Vec<PathBuf>,
}

/// Failure with the stage it belongs to, which selects the exit code.
enum Failure {
    Config(Error),
    Planner(Error),
    Simulation(Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Planner(_) => 2,
            Failure::Simulation(_) => 3,
        }
    }

    fn error(&self) -> &Error {
        match self {
            Failure::Config(e) | Failure::Planner(e) | Failure::Simulation(e) => e,
        }
    }
}

fn load_configs(c: &Common) -> Result<(ParamSet, PlannerConfig), Failure> {
    let params = match &c.params {
        Some(p) => ParamSet::load(p).map_err(Failure::Config)?,
        None => ParamSet::default(),
    };
    let cfg = match &c.planner_config {
        Some(p) => PlannerConfig::load(p).map_err(Failure::Config)?,
        None => PlannerConfig::default(),
    };
    Ok((params, cfg))
}

fn request(c: &Common, mu_const: Option<f64>, default_arc: f64) -> Result<PlanRequest, Failure> {
    let r = PlanRequest {
        radius: c.radius,
        sideslip: c.beta.to_radians(),
        initial_temperature: c.theta0,
        arc: c.arc.unwrap_or(default_arc),
        mu_const,
    };
    if !(r.radius > 0.0 && r.arc > 0.0) || mu_const.is_some_and(|m| !(m > 0.0)) {
        return Err(Failure::Config(Error::InvalidArgument(
            "radius, arc and mu-const must be positive".into(),
        )));
    }
    Ok(r)
}

const STEADY_ARC: f64 = 300.0;
const FIGURE8_ARC: f64 = 20.0;

fn save_plan(plan: &Plan, dir: &Path) -> Result<(), Failure> {
    plan.save(dir).map_err(Failure::Config)?;
    print!("{}", plan.summary.to_text());
    println!("# written to {}", dir.display());
    Ok(())
}

fn plan_steady(args: &PlanArgs) -> Result<(), Failure> {
    let (params, cfg) = load_configs(&args.common)?;
    let req = request(&args.common, args.mu_const, STEADY_ARC)?;
    let plan = pipeline::plan_steady_run(params, &cfg, &req).map_err(Failure::Planner)?;
    save_plan(&plan, &args.common.out)
}

fn plan_figure8(args: &PlanArgs, k_s: Option<f64>) -> Result<(), Failure> {
    let (params, mut cfg) = load_configs(&args.common)?;
    if let Some(k) = k_s {
        cfg.k_distance = k;
    }
    let req = request(&args.common, args.mu_const, FIGURE8_ARC)?;
    let plan = pipeline::plan_figure_eight_run(params, &cfg, &req).map_err(Failure::Planner)?;
    save_plan(&plan, &args.common.out)
}

fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let c = &args.common;
    let (params, cfg) = load_configs(c)?;
    let (plans, operating) = match args.scenario {
        ScenarioKind::Custom => {
            if args.plans.is_empty() {
                return Err(Failure::Config(Error::InvalidArgument(
                    "the custom scenario needs at least one --plan directory".into(),
                )));
            }
            let mut plans = Vec::new();
            for dir in &args.plans {
                let name = dir
                    .file_name()
                    .map_or_else(|| "plan".to_string(), |n| n.to_string_lossy().into_owned());
                plans.push((name, Plan::load(dir).map_err(Failure::Config)?));
            }
            (plans, None)
        }
        kind => {
            let mut plans = Vec::new();
            for (name, mu) in COMPARISON_SET {
                let plan = if kind == ScenarioKind::Steady {
                    pipeline::plan_steady_run(params, &cfg, &request(c, mu, STEADY_ARC)?)
                } else {
                    pipeline::plan_figure_eight_run(params, &cfg, &request(c, mu, FIGURE8_ARC)?)
                };
                plans.push((name.to_string(), plan.map_err(Failure::Planner)?));
            }
            let thermal = plans[0].1.reference.clone();
            (plans, Some(thermal))
        }
    };
    let (comparison, outcomes) =
        pipeline::simulate_plans(&plans, params, &cfg, c.theta0, operating.as_ref()).map_err(Failure::Simulation)?;
    pipeline::save_outcomes(&c.out, &comparison, &outcomes).map_err(Failure::Simulation)?;
    print!("{}", pipeline::report(&comparison, &outcomes));
    for row in &comparison.rows {
        match &row.result {
            Err(e) => return Err(Failure::Simulation(e.clone())),
            Ok(r) if !r.completed() => {
                return Err(Failure::Simulation(Error::ScenarioFailed {
                    name: row.name.clone(),
                    reason: r.termination.describe(),
                }))
            }
            Ok(_) => {}
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // usage errors are configuration errors; clap's own code 2 means a planner failure here
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match &cli.command {
        Command::PlanSteady(a) => plan_steady(a),
        Command::PlanFigure8 { plan, k_s } => plan_figure8(plan, *k_s),
        Command::Simulate(a) => simulate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error());
            ExitCode::from(f.code())
        }
    }
}
