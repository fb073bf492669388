// Steady drift on a 15 m circle at -40 deg sideslip with the tread at 30 C,
// then five seconds of open-loop integration at the equilibrium input.

use drift_thermal::equilibrium::{find_equilibrium, DriftEquilibrium};
use drift_thermal::integrate::vehicle_rk4;
use drift_thermal::model::FrictionMode;
use drift_thermal::VehicleModel;

pub fn run_example() -> drift_thermal::Result<(DriftEquilibrium, f64)> {
    let model = VehicleModel::default();
    let eq = find_equilibrium(&model, 15.0, (-40f64).to_radians(), 30.0, None)?;
    let s = &eq.state;
    println!("speed {:.3} m/s, Vx {:.3}, Vy {:.3}, r {:.4} rad/s", eq.speed(), s.vx, s.vy, s.yaw_rate);
    println!("wheel speed {:.3} rad/s, weight transfer {:.1} N", s.wheel_speed, s.weight_transfer);
    println!(
        "steer {:.3} deg, torque {:.1} N m, mu_r {:.4}",
        eq.input.steer.to_degrees(),
        eq.input.torque,
        eq.mu_r
    );
    println!("residual {:.2e} after {} Newton iterations", eq.residual, eq.iterations);

    // the equilibrium is unstable, so the drift only holds for a while
    let frozen = model.with_friction(FrictionMode::FrozenTemperature);
    let mut x = eq.state;
    let mut drift: f64 = 0.0;
    for _ in 0..5000 {
        x = vehicle_rk4(&frozen, &x, &eq.input, |_| eq.curvature(), 1e-3)?;
        let d = [x.vx - s.vx, x.vy - s.vy, x.yaw_rate - s.yaw_rate, x.wheel_speed - s.wheel_speed, x.lateral_error];
        drift = d.iter().fold(drift, |m, v| m.max(v.abs()));
    }
    println!("largest deviation over 5 s: {drift:.2e}");
    Ok((eq, drift))
}

#[allow(dead_code)]
fn main() -> drift_thermal::Result<()> {
    run_example().map(|_| ())
}
