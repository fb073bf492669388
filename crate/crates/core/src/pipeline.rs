//! End-to-end runs shared by the command-line tool and the examples: plan a
//! reference, design its gain schedule, save or reload the plan files, and
//! set up closed-loop comparisons on the thermal plant.
//!
//! A plan directory holds `trajectory.csv`, `gains.csv` and `summary.txt`.
//! The summary is a `key = value` digest that also records how the plan's
//! friction was modeled.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::PlannerConfig;
use crate::control::{build_schedule, GainSchedule};
use crate::error::{Error, Result};
use crate::io;
use crate::model::VehicleModel;
use crate::params::{KeyValues, ParamSet};
use crate::reference::{plan_figure_eight, plan_steady, Reference};
use crate::sim::{self, Comparison, PoleSet, Scenario, SimResult};

/// Planner friction used by the three-way comparison: the thermal map and
/// the two constant coefficients bracketing the warm tire.
pub const COMPARISON_SET: [(&str, Option<f64>); 3] = [("thermal", None), ("mu0.73", Some(0.73)), ("mu0.8", Some(0.8))];

/// Circle and temperature a plan starts from. `arc` is the whole sweep for a
/// steady plan and each steady arc of a figure-8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanRequest {
    pub radius: f64,
    /// rad
    pub sideslip: f64,
    pub initial_temperature: f64,
    pub arc: f64,
    /// Constant rear friction; `None` plans with the thermal model.
    pub mu_const: Option<f64>,
}

impl Default for PlanRequest {
    fn default() -> Self {
        Self {
            radius: 15.0,
            sideslip: (-40f64).to_radians(),
            initial_temperature: 30.0,
            arc: 300.0,
            mu_const: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionDigest {
    /// Arc length where the transition starts and ends on the reference, m.
    pub start: f64,
    pub end: f64,
    /// Distance travelled during the transition, m.
    pub length: f64,
    pub cost: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub request: PlanRequest,
    pub nodes: usize,
    pub knots: usize,
    pub length: f64,
    pub final_temperature: f64,
    pub final_mu: f64,
    pub transitions: Vec<TransitionDigest>,
}

const SUMMARY_KEYS: [&str; 21] = [
    "mu_const",
    "radius",
    "sideslip_deg",
    "theta0",
    "arc",
    "nodes",
    "knots",
    "length",
    "final_theta_r",
    "final_mu_r",
    "transitions",
    "transition1_start",
    "transition1_end",
    "transition1_length",
    "transition1_cost",
    "transition1_iterations",
    "transition2_start",
    "transition2_end",
    "transition2_length",
    "transition2_cost",
    "transition2_iterations",
];

impl Summary {
    pub fn to_text(&self) -> String {
        let r = &self.request;
        let mut out = String::from("# plan digest\n");
        match r.mu_const {
            Some(mu) => out += &format!("# friction: constant\nmu_const = {mu}\n"),
            None => out += "# friction: thermal map\n",
        }
        let rows: [(&str, f64); 10] = [
            ("radius", r.radius),
            ("sideslip_deg", r.sideslip.to_degrees()),
            ("theta0", r.initial_temperature),
            ("arc", r.arc),
            ("nodes", self.nodes as f64),
            ("knots", self.knots as f64),
            ("length", self.length),
            ("final_theta_r", self.final_temperature),
            ("final_mu_r", self.final_mu),
            ("transitions", self.transitions.len() as f64),
        ];
        for (k, v) in rows {
            let _ = writeln!(out, "{k} = {v}");
        }
        for (i, t) in self.transitions.iter().enumerate() {
            let n = i + 1;
            let _ = writeln!(out, "transition{n}_start = {}", t.start);
            let _ = writeln!(out, "transition{n}_end = {}", t.end);
            let _ = writeln!(out, "transition{n}_length = {}", t.length);
            let _ = writeln!(out, "transition{n}_cost = {}", t.cost);
            let _ = writeln!(out, "transition{n}_iterations = {}", t.iterations);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text, &SUMMARY_KEYS)?;
        let count = |key: &str| -> Result<usize> {
            let v = kv.get(key)?;
            if v < 0.0 || v.fract() != 0.0 {
                return Err(Error::InvalidArgument(format!("`{key}` must be a count, got {v}")));
            }
            Ok(v as usize)
        };
        let mut transitions = Vec::new();
        for n in 1..=count("transitions")? {
            transitions.push(TransitionDigest {
                start: kv.get(&format!("transition{n}_start"))?,
                end: kv.get(&format!("transition{n}_end"))?,
                length: kv.get(&format!("transition{n}_length"))?,
                cost: kv.get(&format!("transition{n}_cost"))?,
                iterations: count(&format!("transition{n}_iterations"))?,
            });
        }
        Ok(Self {
            request: PlanRequest {
                radius: kv.get("radius")?,
                sideslip: kv.get("sideslip_deg")?.to_radians(),
                initial_temperature: kv.get("theta0")?,
                arc: kv.get("arc")?,
                mu_const: kv.get_opt("mu_const"),
            },
            nodes: count("nodes")?,
            knots: count("knots")?,
            length: kv.get("length")?,
            final_temperature: kv.get("final_theta_r")?,
            final_mu: kv.get("final_mu_r")?,
            transitions,
        })
    }
}

/// Reference, gains and digest of one planning run.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub reference: Reference,
    pub schedule: GainSchedule,
    pub summary: Summary,
}

pub fn planner_model(params: ParamSet, mu_const: Option<f64>) -> VehicleModel {
    match mu_const {
        Some(mu) => VehicleModel::constant_friction(params, mu),
        None => VehicleModel::thermal(params),
    }
}

fn finish(
    model: &VehicleModel,
    cfg: &PlannerConfig,
    request: &PlanRequest,
    reference: Reference,
    transitions: Vec<TransitionDigest>,
) -> Result<Plan> {
    let schedule = build_schedule(model, &reference, &cfg.lqr, cfg.node_spacing)?;
    let last = reference.points.last().ok_or(Error::EmptySchedule)?;
    let summary = Summary {
        request: *request,
        nodes: reference.len(),
        knots: schedule.len(),
        length: reference.length(),
        final_temperature: last.state.temperature,
        final_mu: model.rear_friction(last.state.temperature)?,
        transitions,
    };
    Ok(Plan {
        reference,
        schedule,
        summary,
    })
}

pub fn plan_steady_run(params: ParamSet, cfg: &PlannerConfig, request: &PlanRequest) -> Result<Plan> {
    let model = planner_model(params, request.mu_const);
    let r = request;
    let reference = plan_steady(&model, cfg, r.radius, r.sideslip, r.initial_temperature, r.arc)?;
    finish(&model, cfg, request, reference, Vec::new())
}

pub fn plan_figure_eight_run(params: ParamSet, cfg: &PlannerConfig, request: &PlanRequest) -> Result<Plan> {
    let model = planner_model(params, request.mu_const);
    let r = request;
    let plan = plan_figure_eight(&model, cfg, r.radius, r.sideslip, r.initial_temperature, r.arc, r.arc)?;
    let transitions = [&plan.first_transition, &plan.second_transition]
        .into_iter()
        .zip(&plan.reference.transitions)
        .map(|(t, &(start, end))| TransitionDigest {
            start,
            end,
            length: t.transition_length(),
            cost: t.cost,
            iterations: t.iterations,
        })
        .collect();
    finish(&model, cfg, request, plan.reference, transitions)
}

impl Plan {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        io::save_trajectory(&dir.join("trajectory.csv"), &self.reference)?;
        io::save_gains(&dir.join("gains.csv"), &self.schedule)?;
        std::fs::write(dir.join("summary.txt"), self.summary.to_text())
            .map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let summary_path = dir.join("summary.txt");
        let text = std::fs::read_to_string(&summary_path)
            .map_err(|e| Error::Io(format!("{}: {e}", summary_path.display())))?;
        let summary = Summary::from_text(&text)?;
        let mut reference = io::load_trajectory(&dir.join("trajectory.csv"))?;
        reference.transitions = summary.transitions.iter().map(|t| (t.start, t.end)).collect();
        Ok(Self {
            reference,
            schedule: io::load_gains(&dir.join("gains.csv"))?,
            summary,
        })
    }

    /// Closed-loop scenario of this plan on the thermal plant.
    pub fn scenario(&self, name: &str, params: ParamSet, cfg: &PlannerConfig, initial_temperature: f64) -> Scenario {
        Scenario::new(
            name,
            self.reference.clone(),
            self.schedule.clone(),
            planner_model(params, self.summary.request.mu_const),
            VehicleModel::thermal(params),
            cfg.bounds,
            initial_temperature,
        )
    }
}

/// One simulated scenario with its pole trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub name: String,
    pub result: Result<SimResult>,
    pub poles: Result<Vec<PoleSet>>,
}

/// Comparison table plus the pole-cloud diameter of every scenario.
pub fn report(comparison: &Comparison, outcomes: &[ScenarioOutcome]) -> String {
    let mut out = comparison.table();
    out += "\npole cloud diameter (max pairwise distance along one pole trace, 1/s)\n";
    for o in outcomes {
        match &o.poles {
            Ok(p) => out += &format!("{:<16} {:>10.4}\n", o.name, sim::cloud_diameter(p)),
            Err(e) => out += &format!("{:<16} error: {e}\n", o.name),
        }
    }
    out
}

/// Simulates every plan on the thermal plant. Pole traces linearize the
/// thermal plant along `operating` when given, and along each run's own
/// recorded states otherwise.
pub fn simulate_plans(
    plans: &[(String, Plan)],
    params: ParamSet,
    cfg: &PlannerConfig,
    initial_temperature: f64,
    operating: Option<&Reference>,
) -> Result<(Comparison, Vec<ScenarioOutcome>)> {
    let scenarios: Vec<Scenario> = plans
        .iter()
        .map(|(name, plan)| plan.scenario(name, params, cfg, initial_temperature))
        .collect();
    let comparison = sim::compare(&scenarios)?;
    let plant = VehicleModel::thermal(params);
    let outcomes = plans
        .iter()
        .zip(&comparison.rows)
        .map(|((name, plan), row)| {
            let poles = match (operating, &row.result) {
                (Some(r), _) => sim::pole_trace(&plan.schedule, &plant, r),
                (None, Ok(run)) => sim::pole_trace_along_run(&plan.schedule, &plant, run),
                (None, Err(e)) => Err(e.clone()),
            };
            ScenarioOutcome {
                name: name.clone(),
                result: row.result.clone(),
                poles,
            }
        })
        .collect();
    Ok((comparison, outcomes))
}

/// Writes `sim_<name>.csv` and `poles_<name>.csv` for every scenario that
/// produced them, and `report.txt`.
pub fn save_outcomes(dir: &Path, comparison: &Comparison, outcomes: &[ScenarioOutcome]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    for o in outcomes {
        if let Ok(r) = &o.result {
            io::save_sim(&dir.join(format!("sim_{}.csv", o.name)), r)?;
        }
        if let Ok(p) = &o.poles {
            io::save_poles(&dir.join(format!("poles_{}.csv", o.name)), &o.name, p)?;
        }
    }
    std::fs::write(dir.join("report.txt"), report(comparison, outcomes))
        .map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}
