// Three plans for the same 150 m drift (thermal, mu = 0.73, mu = 0.8),
// each tracked by its own gain schedule on the heating plant.

use drift_thermal::config::PlannerConfig;
use drift_thermal::pipeline::{plan_steady_run, report, simulate_plans, PlanRequest, COMPARISON_SET};
use drift_thermal::sim::Comparison;
use drift_thermal::ParamSet;

pub fn run_example() -> drift_thermal::Result<Comparison> {
    let params = ParamSet::default();
    let cfg = PlannerConfig::default();
    let mut plans = Vec::new();
    for (name, mu_const) in COMPARISON_SET {
        let request = PlanRequest {
            arc: 150.0,
            mu_const,
            ..PlanRequest::default()
        };
        plans.push((name.to_string(), plan_steady_run(params, &cfg, &request)?));
    }
    let operating = plans[0].1.reference.clone();
    let (comparison, outcomes) = simulate_plans(&plans, params, &cfg, 30.0, Some(&operating))?;
    print!("{}", report(&comparison, &outcomes));
    Ok(comparison)
}

#[allow(dead_code)]
fn main() -> drift_thermal::Result<()> {
    run_example().map(|_| ())
}
