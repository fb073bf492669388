//! Continuous-time single-track model with wheel dynamics, weight transfer,
//! rear tread thermodynamics and curvilinear path kinematics.
//!
//! Every function here is pure: parameters and states are plain values.

pub mod thermal;
pub mod tire;

use nalgebra::SVector;

use crate::error::{Error, Result};
use crate::params::ParamSet;

pub use thermal::{friction_coefficient, heat_generation, slip_velocities, thermal_derivative};
pub use tire::{
    fiala_lateral_force, front_cornering_stiffness, front_slip_angle, rear_combined_forces,
    rear_slip_quantities, sliding_angle, vertical_loads, weight_transfer_derivative,
};

/// Slip computations refuse longitudinal speeds below this, m/s.
pub const VELOCITY_FLOOR: f64 = 0.5;

pub const STATE_DIM: usize = 12;

/// Full vehicle state. Also used for its own time derivative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    /// Body-frame longitudinal velocity, m/s.
    pub vx: f64,
    /// Body-frame lateral velocity, m/s.
    pub vy: f64,
    /// rad/s
    pub yaw_rate: f64,
    /// Rear wheel speed, rad/s.
    pub wheel_speed: f64,
    /// Longitudinal weight transfer, N (positive loads the rear).
    pub weight_transfer: f64,
    /// Rear tread temperature, degC.
    pub temperature: f64,
    /// Lateral path error, m (positive left of the path).
    pub lateral_error: f64,
    /// Path arc length, m.
    pub arc_length: f64,
    /// Heading relative to the path tangent, rad.
    pub heading_error: f64,
    /// Inertial yaw, rad.
    pub heading: f64,
    pub x: f64,
    pub y: f64,
}

/// Time derivative of a [`VehicleState`], field by field.
pub type StateRate = VehicleState;

impl VehicleState {
    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn sideslip(&self) -> f64 {
        self.vy.atan2(self.vx)
    }

    /// Sets `vx`, `vy` from speed and sideslip.
    pub fn with_speed_sideslip(mut self, speed: f64, sideslip: f64) -> Self {
        self.vx = speed * sideslip.cos();
        self.vy = speed * sideslip.sin();
        self
    }

    pub fn to_vector(&self) -> SVector<f64, STATE_DIM> {
        SVector::from([
            self.vx,
            self.vy,
            self.yaw_rate,
            self.wheel_speed,
            self.weight_transfer,
            self.temperature,
            self.lateral_error,
            self.arc_length,
            self.heading_error,
            self.heading,
            self.x,
            self.y,
        ])
    }

    pub fn from_vector(v: &SVector<f64, STATE_DIM>) -> Self {
        Self {
            vx: v[0],
            vy: v[1],
            yaw_rate: v[2],
            wheel_speed: v[3],
            weight_transfer: v[4],
            temperature: v[5],
            lateral_error: v[6],
            arc_length: v[7],
            heading_error: v[8],
            heading: v[9],
            x: v[10],
            y: v[11],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    /// Road-wheel steering angle, rad.
    pub steer: f64,
    /// Front braking force, N (non-positive when braking).
    pub front_brake: f64,
    /// Rear axle torque, N m.
    pub torque: f64,
}

impl ControlInput {
    pub fn new(steer: f64, front_brake: f64, torque: f64) -> Self {
        Self {
            steer,
            front_brake,
            torque,
        }
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.steer, self.front_brake, self.torque]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

/// Tire forces and the slip quantities they were evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TireForces {
    pub fyf: f64,
    pub fxr: f64,
    pub fyr: f64,
    pub fzf: f64,
    pub fzr: f64,
    /// Combined-slip magnitude of the rear tire, N.
    pub combined_slip: f64,
    pub mu_r: f64,
    pub front_max: f64,
    pub front_sliding_angle: f64,
    pub alpha_f: f64,
    pub alpha_r: f64,
    pub kappa_r: f64,
}

/// How rear friction and tread temperature evolve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrictionMode {
    /// Friction from the temperature map; temperature follows the heat balance.
    Thermal,
    /// Friction from the map at the current temperature, which is held fixed.
    FrozenTemperature,
    /// Constant friction, temperature held fixed.
    Constant(f64),
}

/// Parameters plus the friction treatment used by planners and plants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleModel {
    pub params: ParamSet,
    pub friction: FrictionMode,
}

impl Default for VehicleModel {
    fn default() -> Self {
        Self::thermal(ParamSet::default())
    }
}

impl VehicleModel {
    pub fn thermal(params: ParamSet) -> Self {
        Self {
            params,
            friction: FrictionMode::Thermal,
        }
    }

    pub fn constant_friction(params: ParamSet, mu: f64) -> Self {
        Self {
            params,
            friction: FrictionMode::Constant(mu),
        }
    }

    pub fn with_friction(mut self, friction: FrictionMode) -> Self {
        self.friction = friction;
        self
    }

    pub fn frozen(self) -> Self {
        match self.friction {
            FrictionMode::Thermal => self.with_friction(FrictionMode::FrozenTemperature),
            _ => self,
        }
    }

    pub fn is_thermal(&self) -> bool {
        self.friction == FrictionMode::Thermal
    }

    pub fn rear_friction(&self, temperature: f64) -> Result<f64> {
        match self.friction {
            FrictionMode::Constant(mu) if mu > 0.0 => Ok(mu),
            FrictionMode::Constant(mu) => Err(Error::NonPhysicalFriction {
                mu,
                theta: temperature,
            }),
            _ => friction_coefficient(&self.params.thermal, temperature),
        }
    }

    pub fn tire_forces(&self, state: &VehicleState, input: &ControlInput) -> Result<TireForces> {
        let p = &self.params;
        let (fzf, fzr) = vertical_loads(&p.vehicle, state.weight_transfer)?;
        let alpha_f =
            front_slip_angle(state.vx, state.vy, state.yaw_rate, input.steer, p.vehicle.a)?;
        let c_alpha = front_cornering_stiffness(&p.tire, fzf)?;
        let front_max = p.tire.mu_f * fzf;
        let fyf = fiala_lateral_force(c_alpha, front_max, alpha_f);
        let (alpha_r, kappa_r) = rear_slip_quantities(
            state.vx,
            state.vy,
            state.yaw_rate,
            state.wheel_speed,
            &p.vehicle,
        )?;
        let mu_r = self.rear_friction(state.temperature)?;
        let rear = rear_combined_forces(&p.tire, mu_r, fzr, alpha_r, kappa_r)?;
        Ok(TireForces {
            fyf,
            fxr: rear.fx,
            fyr: rear.fy,
            fzf,
            fzr,
            combined_slip: rear.magnitude,
            mu_r,
            front_max,
            front_sliding_angle: sliding_angle(c_alpha, front_max),
            alpha_f,
            alpha_r,
            kappa_r,
        })
    }

    /// Heat flow into the rear tread at this state and input, W.
    pub fn heat(&self, state: &VehicleState, input: &ControlInput) -> Result<f64> {
        let forces = self.tire_forces(state, input)?;
        Ok(heat_generation(
            &self.params.thermal,
            &self.params.vehicle,
            state,
            &forces,
        ))
    }

    /// Full state derivative for a path of curvature `path_curvature` at the
    /// current arc length.
    pub fn derivatives(
        &self,
        state: &VehicleState,
        input: &ControlInput,
        path_curvature: f64,
    ) -> Result<StateRate> {
        let v = &self.params.vehicle;
        let f = self.tire_forces(state, input)?;
        let (sd, cd) = input.steer.sin_cos();
        let m = v.mass;

        let vx_dot = (-f.fyf * sd + input.front_brake * cd + f.fxr) / m + state.yaw_rate * state.vy;
        let vy_dot = (f.fyf * cd + input.front_brake * sd + f.fyr) / m - state.yaw_rate * state.vx;
        let r_dot = (v.a * f.fyf * cd + v.a * input.front_brake * sd - v.b * f.fyr) / v.yaw_inertia;
        let w_dot = (input.torque - v.wheel_radius * f.fxr) / v.drivetrain_inertia;
        let dfz_dot = weight_transfer_derivative(v, state.weight_transfer, f.fxr, f.fyf, input.steer);

        let theta_dot = if self.is_thermal() {
            let q = heat_generation(&self.params.thermal, v, state, &f);
            thermal_derivative(&self.params.thermal, state.temperature, q)
        } else {
            0.0
        };

        let path = path_rates(state, path_curvature)?;
        let (sp, cp) = state.heading.sin_cos();
        Ok(StateRate {
            vx: vx_dot,
            vy: vy_dot,
            yaw_rate: r_dot,
            wheel_speed: w_dot,
            weight_transfer: dfz_dot,
            temperature: theta_dot,
            lateral_error: path.lateral_error,
            arc_length: path.arc_length,
            heading_error: path.heading_error,
            heading: state.yaw_rate,
            x: state.vx * cp - state.vy * sp,
            y: state.vx * sp + state.vy * cp,
        })
    }
}

/// Curvilinear path kinematics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathRates {
    pub lateral_error: f64,
    pub arc_length: f64,
    pub heading_error: f64,
}

pub fn path_rates(state: &VehicleState, curvature: f64) -> Result<PathRates> {
    let denom = 1.0 - curvature * state.lateral_error;
    if denom.abs() < 1e-6 {
        return Err(Error::PathSingularity(denom));
    }
    let (s, c) = state.heading_error.sin_cos();
    let arc = (state.vx * c - state.vy * s) / denom;
    Ok(PathRates {
        lateral_error: state.vy * c + state.vx * s,
        arc_length: arc,
        heading_error: state.yaw_rate - curvature * arc,
    })
}
