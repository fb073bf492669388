// Writes a plan to disk (trajectory.csv, gains.csv, summary.txt) and reads
// it back.

use drift_thermal::config::PlannerConfig;
use drift_thermal::pipeline::{plan_steady_run, Plan, PlanRequest};
use drift_thermal::ParamSet;

/// Returns whether the reloaded plan equals the original exactly.
pub fn run_example() -> drift_thermal::Result<bool> {
    let request = PlanRequest {
        arc: 20.0,
        mu_const: Some(0.8),
        ..PlanRequest::default()
    };
    let plan = plan_steady_run(ParamSet::default(), &PlannerConfig::default(), &request)?;

    let dir = std::env::temp_dir().join(format!("drift-thermal-plan-{}", std::process::id()));
    plan.save(&dir)?;
    let back = Plan::load(&dir)?;
    let _ = std::fs::remove_dir_all(&dir);

    print!("{}", plan.summary.to_text());
    let same = back == plan;
    println!("reloaded plan identical: {same}");
    Ok(same)
}

#[allow(dead_code)]
fn main() -> drift_thermal::Result<()> {
    run_example().map(|_| ())
}
