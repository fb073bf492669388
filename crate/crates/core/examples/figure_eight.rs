// Full figure-8 reference: steady arc, transition, mirrored arc,
// transition back, steady arc. Gains are scheduled along the whole path.

use drift_thermal::config::PlannerConfig;
use drift_thermal::pipeline::{plan_figure_eight_run, Plan, PlanRequest};
use drift_thermal::ParamSet;

pub fn run_example() -> drift_thermal::Result<Plan> {
    let request = PlanRequest {
        arc: 20.0,
        ..PlanRequest::default()
    };
    let plan = plan_figure_eight_run(ParamSet::default(), &PlannerConfig::default(), &request)?;
    print!("{}", plan.summary.to_text());

    let r = &plan.reference;
    for (k, (a, b)) in r.transitions.iter().enumerate() {
        let sa = r.sample(*a).state.sideslip().to_degrees();
        let sb = r.sample(*b).state.sideslip().to_degrees();
        println!("transition {}: s {a:.2} -> {b:.2} m, beta {sa:.1} -> {sb:.1} deg", k + 1);
    }
    if let Some((a, b)) = r.low_sideslip_span(39f64.to_radians()) {
        println!("longest span with |beta| < 39 deg: {a:.2} -> {b:.2} m");
    }
    Ok(plan)
}

#[allow(dead_code)]
fn main() -> drift_thermal::Result<()> {
    run_example().map(|_| ())
}
