// 300 m of steady drift as the rear tread heats up, next to the same sweep
// with friction frozen at 0.8.

use drift_thermal::config::ActuatorBounds;
use drift_thermal::equilibrium::{quasi_steady_sweep, EquilibriumSolver, QuasiSteadyTrajectory};
use drift_thermal::VehicleModel;

fn describe(name: &str, sweep: &QuasiSteadyTrajectory) -> f64 {
    let first = &sweep.nodes[0].equilibrium;
    let last = &sweep.nodes[sweep.len() - 1].equilibrium;
    println!(
        "{name:<8} theta_r {:>6.2} -> {:>6.2} C   steer {:>7.3} -> {:>7.3} deg   torque {:>7.1} -> {:>7.1} N m   {:.1} s",
        sweep.nodes[0].temperature,
        last.temperature,
        first.input.steer.to_degrees(),
        last.input.steer.to_degrees(),
        first.input.torque,
        last.input.torque,
        sweep.nodes[sweep.len() - 1].time,
    );
    sweep
        .nodes
        .windows(2)
        .map(|w| (w[1].equilibrium.input.steer - w[0].equilibrium.input.steer).abs())
        .fold(0.0, f64::max)
}

/// Returns the largest node-to-node steering change of each sweep.
pub fn run_example() -> drift_thermal::Result<(f64, f64)> {
    let beta = (-40f64).to_radians();
    let thermal = EquilibriumSolver::new(VehicleModel::default(), ActuatorBounds::default());
    let constant = EquilibriumSolver::new(
        VehicleModel::constant_friction(Default::default(), 0.8),
        ActuatorBounds::default(),
    );
    let a = quasi_steady_sweep(&thermal, 15.0, beta, 30.0, 300.0, 0.25)?;
    let b = quasi_steady_sweep(&constant, 15.0, beta, 30.0, 300.0, 0.25)?;
    Ok((describe("thermal", &a), describe("mu 0.8", &b)))
}

#[allow(dead_code)]
fn main() -> drift_thermal::Result<()> {
    run_example().map(|_| ())
}
