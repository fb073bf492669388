//! Drift equilibria on a circle and the quasi-steady sweep that chains them
//! together while the rear tread heats up.

use nalgebra::DVector;

use crate::config::ActuatorBounds;
use crate::error::{Error, Result};
use crate::model::{ControlInput, FrictionMode, VehicleModel, VehicleState};
use crate::newton::{self, NewtonOptions};

/// Unknowns of the equilibrium root problem, also used as a warm start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumGuess {
    pub yaw_rate: f64,
    pub wheel_speed: f64,
    pub weight_transfer: f64,
    pub steer: f64,
    pub torque: f64,
}

impl EquilibriumGuess {
    /// Seed that lands in the drift basin for moderate radii: 9 m/s with 30 %
    /// wheel overspeed and 10 degrees of counter-steer.
    pub fn default_for(radius: f64, wheel_radius: f64) -> Self {
        let speed = 9.0;
        Self {
            yaw_rate: speed / radius,
            wheel_speed: speed * 1.3 / wheel_radius,
            weight_transfer: 0.0,
            steer: -radius.signum() * 10f64.to_radians(),
            torque: 1000.0,
        }
    }

    fn to_vector(self) -> DVector<f64> {
        DVector::from_vec(vec![
            self.yaw_rate,
            self.wheel_speed,
            self.weight_transfer,
            self.steer,
            self.torque,
        ])
    }

    fn from_vector(z: &DVector<f64>) -> Self {
        Self {
            yaw_rate: z[0],
            wheel_speed: z[1],
            weight_transfer: z[2],
            steer: z[3],
            torque: z[4],
        }
    }
}

/// A steady drift on a circle of signed radius (positive turns left).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftEquilibrium {
    pub radius: f64,
    pub sideslip: f64,
    /// Body states plus the path pose that rides the circle (`e = 0`,
    /// heading error `-sideslip`).
    pub state: VehicleState,
    pub input: ControlInput,
    pub temperature: f64,
    pub mu_r: f64,
    /// Norm of the body-state derivatives at the solution.
    pub residual: f64,
    pub iterations: usize,
}

impl DriftEquilibrium {
    pub fn speed(&self) -> f64 {
        self.state.speed()
    }

    pub fn curvature(&self) -> f64 {
        1.0 / self.radius
    }

    pub fn guess(&self) -> EquilibriumGuess {
        EquilibriumGuess {
            yaw_rate: self.state.yaw_rate,
            wheel_speed: self.state.wheel_speed,
            weight_transfer: self.state.weight_transfer,
            steer: self.input.steer,
            torque: self.input.torque,
        }
    }
}

/// Body-state part of the derivative: `[Vx, Vy, r, omega, dFz]` rates.
pub fn body_residual(
    model: &VehicleModel,
    state: &VehicleState,
    input: &ControlInput,
    curvature: f64,
) -> Result<[f64; 5]> {
    let d = model.derivatives(state, input, curvature)?;
    Ok([d.vx, d.vy, d.yaw_rate, d.wheel_speed, d.weight_transfer])
}

/// Places the vehicle on the circle with the velocity vector tangent to it.
pub fn circle_state(radius: f64, sideslip: f64, temperature: f64, g: &EquilibriumGuess) -> VehicleState {
    let speed = g.yaw_rate * radius;
    VehicleState {
        yaw_rate: g.yaw_rate,
        wheel_speed: g.wheel_speed,
        weight_transfer: g.weight_transfer,
        temperature,
        heading_error: -sideslip,
        ..Default::default()
    }
    .with_speed_sideslip(speed, sideslip)
}

/// Root finder for drift equilibria. Temperature is held at the requested
/// value while solving regardless of the model's friction mode.
#[derive(Debug, Clone, Copy)]
pub struct EquilibriumSolver {
    pub model: VehicleModel,
    pub bounds: ActuatorBounds,
    pub options: NewtonOptions,
}

impl EquilibriumSolver {
    pub fn new(model: VehicleModel, bounds: ActuatorBounds) -> Self {
        Self {
            model,
            bounds,
            options: NewtonOptions::default(),
        }
    }

    pub fn solve(
        &self,
        radius: f64,
        sideslip: f64,
        temperature: f64,
        guess: Option<EquilibriumGuess>,
    ) -> Result<DriftEquilibrium> {
        if !(radius.abs() >= 5.0) {
            return Err(Error::InvalidArgument(format!(
                "radius {radius} m must be at least 5 m in magnitude"
            )));
        }
        if !(sideslip.abs() < 80f64.to_radians()) {
            return Err(Error::InvalidArgument(format!(
                "sideslip {} deg must be below 80 deg",
                sideslip.to_degrees()
            )));
        }
        let model = self.model.frozen();
        model.rear_friction(temperature)?;
        let curvature = 1.0 / radius;
        let seed = guess.unwrap_or_else(|| {
            EquilibriumGuess::default_for(radius, model.params.vehicle.wheel_radius)
        });

        let residual = |z: &DVector<f64>| -> Result<DVector<f64>> {
            let g = EquilibriumGuess::from_vector(z);
            let state = circle_state(radius, sideslip, temperature, &g);
            let input = ControlInput::new(g.steer, 0.0, g.torque);
            Ok(DVector::from_row_slice(&body_residual(
                &model, &state, &input, curvature,
            )?))
        };

        let solution = match newton::solve(residual, seed.to_vector(), &self.options) {
            Ok(s) => s,
            Err(Error::NoConvergence { residual: r, .. }) if self.front_saturated(radius, sideslip, temperature, &seed) => {
                return Err(Error::SaturatedTire { residual: r });
            }
            Err(e) => return Err(e),
        };

        let g = EquilibriumGuess::from_vector(&solution.x);
        let state = circle_state(radius, sideslip, temperature, &g);
        let input = ControlInput::new(g.steer, 0.0, g.torque);
        let mu_r = model.rear_friction(temperature)?;
        if state.vx < crate::model::VELOCITY_FLOOR {
            return Err(Error::Singularity {
                vx: state.vx,
                floor: crate::model::VELOCITY_FLOOR,
            });
        }
        let b = &self.bounds;
        if !(b.steer_min..=b.steer_max).contains(&input.steer) {
            return Err(Error::OutOfBounds {
                bound: "steering angle",
                value: input.steer,
                min: b.steer_min,
                max: b.steer_max,
            });
        }
        if !(b.torque_min..=b.torque_max).contains(&input.torque) {
            return Err(Error::OutOfBounds {
                bound: "rear axle torque",
                value: input.torque,
                min: b.torque_min,
                max: b.torque_max,
            });
        }
        Ok(DriftEquilibrium {
            radius,
            sideslip,
            state,
            input,
            temperature,
            mu_r,
            residual: solution.residual_norm(),
            iterations: solution.iterations,
        })
    }

    /// A failed solve is blamed on tire saturation when the seed already has
    /// the front axle sliding: no input can then raise the lateral force the
    /// circle demands.
    fn front_saturated(&self, radius: f64, sideslip: f64, temperature: f64, g: &EquilibriumGuess) -> bool {
        let state = circle_state(radius, sideslip, temperature, g);
        let input = ControlInput::new(g.steer, 0.0, g.torque);
        match self.model.frozen().tire_forces(&state, &input) {
            Ok(f) => f.alpha_f.abs() > f.front_sliding_angle,
            Err(_) => false,
        }
    }
}

/// Convenience wrapper around [`EquilibriumSolver`] with default bounds.
pub fn find_equilibrium(
    model: &VehicleModel,
    radius: f64,
    sideslip: f64,
    temperature: f64,
    guess: Option<EquilibriumGuess>,
) -> Result<DriftEquilibrium> {
    EquilibriumSolver::new(*model, ActuatorBounds::default()).solve(radius, sideslip, temperature, guess)
}

/// One node of a quasi-steady sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepNode {
    pub s: f64,
    pub time: f64,
    pub temperature: f64,
    /// Heat flow into the rear tread at this node, W.
    pub heat: f64,
    pub curvature: f64,
    pub equilibrium: DriftEquilibrium,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuasiSteadyTrajectory {
    pub radius: f64,
    pub sideslip: f64,
    pub spacing: f64,
    pub friction: FrictionMode,
    pub nodes: Vec<SweepNode>,
}

impl QuasiSteadyTrajectory {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn final_temperature(&self) -> Option<f64> {
        self.nodes.last().map(|n| n.temperature)
    }
}

/// Temperature update between consecutive nodes: explicit Euler over the
/// time it takes to cover `spacing` at the node's speed.
pub fn next_temperature(model: &VehicleModel, node: &SweepNode, spacing: f64) -> (f64, f64) {
    let dt = spacing / node.equilibrium.speed();
    if !model.is_thermal() {
        return (node.temperature, dt);
    }
    let rate = crate::model::thermal_derivative(&model.params.thermal, node.temperature, node.heat);
    (node.temperature + dt * rate, dt)
}

/// Chains equilibria along `total_arc` metres of the circle, updating the
/// tread temperature from each node's heat flow. Only a thermal model heats
/// up; frozen or constant friction yields identical nodes.
pub fn quasi_steady_sweep(
    solver: &EquilibriumSolver,
    radius: f64,
    sideslip: f64,
    initial_temperature: f64,
    total_arc: f64,
    spacing: f64,
) -> Result<QuasiSteadyTrajectory> {
    if !(spacing > 0.0) || !(total_arc >= spacing) {
        return Err(Error::InvalidArgument(format!(
            "need spacing > 0 and total arc >= spacing (got {spacing}, {total_arc})"
        )));
    }
    let count = (total_arc / spacing).round() as usize + 1;
    let model = solver.model;
    let mut nodes: Vec<SweepNode> = Vec::with_capacity(count);
    let mut temperature = initial_temperature;
    let mut time = 0.0;
    let mut guess = None;
    for k in 0..count {
        // an unchanged temperature gives the same equilibrium; reusing it
        // keeps non-heating sweeps bit-identical along the path
        let eq = match nodes.last() {
            Some(prev) if prev.temperature == temperature => prev.equilibrium,
            _ => solver
                .solve(radius, sideslip, temperature, guess)
                .map_err(|e| e.at_node(k))?,
        };
        let heat = model.frozen().heat(&eq.state, &eq.input).map_err(|e| e.at_node(k))?;
        let node = SweepNode {
            s: k as f64 * spacing,
            time,
            temperature,
            heat,
            curvature: eq.curvature(),
            equilibrium: eq,
        };
        let (next, dt) = next_temperature(&model, &node, spacing);
        temperature = next;
        time += dt;
        guess = Some(eq.guess());
        nodes.push(node);
    }
    Ok(QuasiSteadyTrajectory {
        radius,
        sideslip,
        spacing,
        friction: model.friction,
        nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamSet;

    fn beta() -> f64 {
        (-40f64).to_radians()
    }

    #[test]
    fn reference_drift_point() {
        let model = VehicleModel::default();
        let eq = find_equilibrium(&model, 15.0, beta(), 30.0, None).unwrap();
        assert!(eq.residual < 1e-8, "{}", eq.residual);
        assert!(eq.input.torque > 0.0);
        assert!(eq.input.steer < 0.0, "counter-steer for a left turn");
        assert!(eq.state.yaw_rate > 0.0);
        assert!((eq.speed() - eq.state.yaw_rate * 15.0).abs() < 1e-12);
        assert!((eq.state.sideslip() - beta()).abs() < 1e-12);
        let f = model.frozen().tire_forces(&eq.state, &eq.input).unwrap();
        assert!((f.fxr.hypot(f.fyr) - f.mu_r * f.fzr).abs() < 1e-6 * f.fzr);
        let again = find_equilibrium(&model, 15.0, beta(), 30.0, None).unwrap();
        assert_eq!(eq, again);
    }

    #[test]
    fn hotter_tire_drifts_slower() {
        let model = VehicleModel::default();
        let cold = find_equilibrium(&model, 15.0, beta(), 30.0, None).unwrap();
        let hot = find_equilibrium(&model, 15.0, beta(), 70.0, Some(cold.guess())).unwrap();
        assert!(hot.speed() < cold.speed());
        assert!(hot.mu_r < cold.mu_r);
    }

    #[test]
    fn mirrored_circle_mirrors_solution() {
        let model = VehicleModel::default();
        let left = find_equilibrium(&model, 15.0, beta(), 30.0, None).unwrap();
        let right = find_equilibrium(&model, -15.0, -beta(), 30.0, None).unwrap();
        assert!((left.speed() - right.speed()).abs() < 1e-8);
        assert!((left.input.steer + right.input.steer).abs() < 1e-9);
        assert!((left.input.torque - right.input.torque).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_arguments() {
        let model = VehicleModel::default();
        assert!(find_equilibrium(&model, 3.0, beta(), 30.0, None).is_err());
        assert!(find_equilibrium(&model, 15.0, 1.5, 30.0, None).is_err());
        assert!(matches!(
            find_equilibrium(&model, 15.0, beta(), 400.0, None),
            Err(Error::NonPhysicalFriction { .. })
        ));
    }

    #[test]
    fn tight_torque_bound_is_reported() {
        let model = VehicleModel::default();
        let bounds = ActuatorBounds {
            torque_max: 500.0,
            ..Default::default()
        };
        let err = EquilibriumSolver::new(model, bounds)
            .solve(15.0, beta(), 30.0, None)
            .unwrap_err();
        assert!(matches!(err, Error::OutOfBounds { bound: "rear axle torque", .. }));
    }

    #[test]
    fn grip_cornering_limit() {
        let model = VehicleModel::default();
        let g = EquilibriumGuess {
            yaw_rate: 6.0 / 60.0,
            wheel_speed: 6.0 / 0.32,
            weight_transfer: 0.0,
            steer: 0.04,
            torque: 50.0,
        };
        let eq = find_equilibrium(&model, 60.0, 0.0, 30.0, Some(g)).unwrap();
        assert!(eq.input.steer.abs() < 5f64.to_radians());
        let f = model.frozen().tire_forces(&eq.state, &eq.input).unwrap();
        assert!(f.kappa_r.abs() < 0.05);
    }

    #[test]
    fn frozen_sweep_is_constant() {
        let model = VehicleModel::default().with_friction(FrictionMode::FrozenTemperature);
        let solver = EquilibriumSolver::new(model, ActuatorBounds::default());
        let t = quasi_steady_sweep(&solver, 15.0, beta(), 50.0, 5.0, 0.25).unwrap();
        assert_eq!(t.len(), 21);
        let first = t.nodes[0].equilibrium.input;
        for n in &t.nodes {
            assert_eq!(n.temperature, 50.0);
            assert!((n.equilibrium.input.steer - first.steer).abs() < 1e-9);
            assert!((n.equilibrium.input.torque - first.torque).abs() < 1e-9);
        }
    }

    #[test]
    fn thermal_sweep_heats_and_replays() {
        let model = VehicleModel::thermal(ParamSet::default());
        let solver = EquilibriumSolver::new(model, ActuatorBounds::default());
        let t = quasi_steady_sweep(&solver, 15.0, beta(), 30.0, 10.0, 0.25).unwrap();
        for w in t.nodes.windows(2) {
            assert!(w[1].temperature > w[0].temperature);
            assert!(w[1].time > w[0].time);
            assert!(w[0].heat > 0.0);
            let (next, _) = next_temperature(&model, &w[0], t.spacing);
            assert_eq!(next, w[1].temperature);
        }
        for n in &t.nodes {
            let mu = crate::model::friction_coefficient(&model.params.thermal, n.temperature).unwrap();
            assert_eq!(n.equilibrium.mu_r, mu);
        }
    }
}
