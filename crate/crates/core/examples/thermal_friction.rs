// Rear friction against tread temperature, and the tread heating up under a
// constant heat flow.

use drift_thermal::integrate::rk4;
use drift_thermal::model::{friction_coefficient, thermal_derivative};
use drift_thermal::ThermalParams;
use nalgebra::SVector;

pub struct ThermalSummary {
    pub mu_at_30: f64,
    pub time_constant: f64,
    /// Largest relative gap between RK4 and the closed-form exponential.
    pub max_relative_gap: f64,
}

pub fn run_example() -> drift_thermal::Result<ThermalSummary> {
    let p = ThermalParams::default();
    println!("theta_r [C]   mu_r");
    for theta in (0..=120).step_by(20) {
        println!("{theta:>10}   {:.4}", friction_coefficient(&p, theta as f64)?);
    }

    let tau = p.time_constant();
    let heat = 40_000.0;
    let theta0 = 30.0;
    // the tread relaxes towards ambient + Q / KA
    let settle = p.ambient + heat / p.conductance;
    let exact = |t: f64| settle + (theta0 - settle) * (-t / tau).exp();

    let h = 0.01;
    let mut x = SVector::<f64, 1>::new(theta0);
    let mut gap: f64 = 0.0;
    let steps = (2.0 * tau / h).round() as usize;
    for k in 1..=steps {
        x = rk4(|y| Ok(SVector::<f64, 1>::new(thermal_derivative(&p, y[0], heat))), &x, h)?;
        let t = k as f64 * h;
        gap = gap.max(((x[0] - exact(t)) / exact(t)).abs());
    }
    println!("\ntime constant {tau:.3} s, settles at {settle:.1} C under {heat} W");
    println!("temperature after {:.1} s: {:.4} C (closed form {:.4} C)", 2.0 * tau, x[0], exact(2.0 * tau));

    Ok(ThermalSummary {
        mu_at_30: friction_coefficient(&p, 30.0)?,
        time_constant: tau,
        max_relative_gap: gap,
    })
}

#[allow(dead_code)]
fn main() -> drift_thermal::Result<()> {
    run_example().map(|_| ())
}
