//! Rear tread temperature: affine friction map and a lumped heat balance.

use crate::error::{Error, Result};
use crate::params::{ThermalParams, VehicleParams};

use super::{TireForces, VehicleState};

pub fn friction_coefficient(params: &ThermalParams, temperature: f64) -> Result<f64> {
    let mu = params.mu_r1 * temperature + params.mu_r0;
    if !(mu > 0.0) {
        return Err(Error::NonPhysicalFriction {
            mu,
            theta: temperature,
        });
    }
    Ok(mu)
}

/// Contact-patch slip velocities of the rear tire relative to the road,
/// signed like the forces they oppose. Magnitudes are `Vx * kappa` and
/// `|Vy - b r| * |sin alpha|`.
pub fn slip_velocities(state: &VehicleState, forces: &TireForces, b: f64) -> (f64, f64) {
    let longitudinal = -state.vx * forces.kappa_r;
    let lateral = (state.vy - b * state.yaw_rate) * forces.alpha_r.sin().abs();
    (longitudinal, lateral)
}

/// Heat flow into the rear tread, W: the partitioned slip power plus
/// rolling-resistance losses.
pub fn heat_generation(
    params: &ThermalParams,
    vehicle: &VehicleParams,
    state: &VehicleState,
    forces: &TireForces,
) -> f64 {
    let (vsx, vsy) = slip_velocities(state, forces, vehicle.b);
    -params.partition * (vsx * forces.fxr + vsy * forces.fyr)
        + params.rolling_resistance * forces.fzr * state.vx
}

/// Tread temperature rate, K/s.
pub fn thermal_derivative(params: &ThermalParams, temperature: f64, heat: f64) -> f64 {
    (heat - params.conductance * (temperature - params.ambient)) / params.heat_capacity
}
