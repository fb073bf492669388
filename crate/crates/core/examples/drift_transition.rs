// Optimal transition from a -40 deg drift on one circle to a +40 deg drift
// on the mirrored circle, as in the middle of a figure-8.

use drift_thermal::config::PlannerConfig;
use drift_thermal::equilibrium::find_equilibrium;
use drift_thermal::trajopt::{idx, solve_transition, DynamicTrajectory, TransitionProblem};
use drift_thermal::VehicleModel;

pub fn run_example() -> drift_thermal::Result<DynamicTrajectory> {
    let model = VehicleModel::default();
    let cfg = PlannerConfig::default();
    let start = find_equilibrium(&model, 15.0, (-40f64).to_radians(), 30.0, None)?;
    let problem = TransitionProblem::figure_eight(model, &start, &cfg);
    let t = solve_transition(&problem)?;

    println!("converged in {} SQP iterations, cost {:.1}", t.iterations, t.cost);
    println!(
        "{} steps of {:.4} s: {:.2} s, {:.2} m",
        t.inputs.len(),
        t.step,
        t.duration(),
        t.transition_length()
    );
    println!("terminal violation {:.2e}, bound violation {:.2e}", t.terminal_violation, t.bound_violation);
    println!("\n   t [s]   beta [deg]   steer [deg]   torque [N m]");
    for k in (0..t.states.len()).step_by(10) {
        let x = &t.states[k];
        println!(
            "{:>8.3} {:>12.2} {:>13.2} {:>14.1}",
            t.times[k],
            x[idx::SIDESLIP].to_degrees(),
            x[idx::STEER].to_degrees(),
            x[idx::TORQUE]
        );
    }
    Ok(t)
}

#[allow(dead_code)]
fn main() -> drift_thermal::Result<()> {
    run_example().map(|_| ())
}
