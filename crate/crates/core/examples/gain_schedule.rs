// Gain-scheduled LQR along a heating drift: every 0.25 m the model is
// linearized and a gain is designed for it.

use drift_thermal::config::PlannerConfig;
use drift_thermal::control::{build_schedule, closed_loop, linearize, spectral_abscissa, GainSchedule, OperatingPoint};
use drift_thermal::reference::plan_steady;
use drift_thermal::VehicleModel;
use nalgebra::DMatrix;

/// Returns the schedule and the largest closed-loop spectral abscissa.
pub fn run_example() -> drift_thermal::Result<(GainSchedule, f64)> {
    let model = VehicleModel::default();
    let cfg = PlannerConfig::default();
    let reference = plan_steady(&model, &cfg, 15.0, (-40f64).to_radians(), 30.0, 100.0)?;
    let schedule = build_schedule(&model, &reference, &cfg.lqr, cfg.node_spacing)?;

    let mut worst = f64::NEG_INFINITY;
    for (k, knot) in schedule.knots.iter().enumerate() {
        let point = OperatingPoint::from(&reference.sample(knot.s));
        let sys = linearize(&model, &point)?;
        let cl = closed_loop(&sys, &knot.gain);
        let abscissa = spectral_abscissa(&DMatrix::from_column_slice(6, 6, cl.as_slice()));
        worst = worst.max(abscissa);
        if k % 100 == 0 {
            println!(
                "s = {:>6.2} m  theta_r {:>6.2} C  K(steer, e) {:>8.4}  K(tau, omega) {:>8.3}  abscissa {:>8.4}",
                knot.s,
                knot.state.temperature,
                knot.gain[(0, 5)],
                knot.gain[(2, 3)],
                abscissa
            );
        }
    }
    println!("{} knots, worst spectral abscissa {worst:.4} 1/s", schedule.len());
    Ok((schedule, worst))
}

#[allow(dead_code)]
fn main() -> drift_thermal::Result<()> {
    run_example().map(|_| ())
}
