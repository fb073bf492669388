//! Minimum-effort transition between two steady drifts.
//!
//! The transition is transcribed on `N` RK4 steps of a common duration `h`,
//! with steering and torque carried as states and their slew rates as
//! piecewise-constant inputs. Each Gauss-Newton SQP iteration linearizes every
//! step, condenses the node sensitivities into the input space and solves the
//! QP by an interior-point method.
//!
//! Drifting is open-loop unstable, so trial points are not formed by adding
//! the linear state correction. Instead the new inputs are rolled out from
//! the initial state under time-varying LQR feedback around the predicted
//! states (a projection in the style of PRONTO). Every iterate is therefore
//! dynamically consistent, and the l1 exact-penalty merit only sees the
//! terminal equalities and the state bounds. A Levenberg term on the inputs
//! and the node states, adapted from the ratio of actual to predicted merit
//! decrease, keeps the steps inside the region where the model is trusted.
//!
//! Front braking is not used, so its slew rate is fixed at zero and it does
//! not appear among the decision variables.

pub mod qp;

use nalgebra::{DMatrix, DVector, SMatrix, SVector};

use crate::config::{ActuatorBounds, PlannerConfig};
use crate::equilibrium::{DriftEquilibrium, EquilibriumGuess, EquilibriumSolver};
use crate::error::{Error, Result};
use crate::integrate::rk4;
use crate::model::{ControlInput, VehicleModel, VehicleState};

use qp::{solve_qp, QpOptions, QpProblem, SparseRow};

pub const DIM: usize = 12;
pub type TransitionState = SVector<f64, DIM>;

/// Component indices of a [`TransitionState`].
pub mod idx {
    pub const YAW_RATE: usize = 0;
    pub const SPEED: usize = 1;
    pub const SIDESLIP: usize = 2;
    pub const HEADING: usize = 3;
    pub const WHEEL_SPEED: usize = 4;
    pub const WEIGHT_TRANSFER: usize = 5;
    pub const X: usize = 6;
    pub const Y: usize = 7;
    pub const STEER: usize = 8;
    pub const TORQUE: usize = 9;
    pub const TEMPERATURE: usize = 10;
    /// Distance travelled along the transition.
    pub const DISTANCE: usize = 11;
}

/// Characteristic magnitudes used to normalize states.
pub const STATE_SCALE: [f64; DIM] = [1.0, 10.0, 1.0, 1.0, 100.0, 1000.0, 10.0, 10.0, 1.0, 1000.0, 100.0, 10.0];
const RATE_SCALE: [f64; 2] = [1.0, 1000.0];
const STEP_SCALE: f64 = 0.1;

/// Splits a transition state into the vehicle state and the held input.
pub fn split_state(x: &TransitionState) -> (VehicleState, ControlInput) {
    let speed = x[idx::SPEED];
    let beta = x[idx::SIDESLIP];
    let state = VehicleState {
        yaw_rate: x[idx::YAW_RATE],
        wheel_speed: x[idx::WHEEL_SPEED],
        weight_transfer: x[idx::WEIGHT_TRANSFER],
        temperature: x[idx::TEMPERATURE],
        heading: x[idx::HEADING],
        x: x[idx::X],
        y: x[idx::Y],
        arc_length: x[idx::DISTANCE],
        heading_error: -beta,
        ..Default::default()
    }
    .with_speed_sideslip(speed, beta);
    (state, ControlInput::new(x[idx::STEER], 0.0, x[idx::TORQUE]))
}

/// Transition state of a steady drift placed at the origin with its
/// velocity along +X.
pub fn state_from_equilibrium(eq: &DriftEquilibrium) -> TransitionState {
    let mut x = TransitionState::zeros();
    x[idx::YAW_RATE] = eq.state.yaw_rate;
    x[idx::SPEED] = eq.speed();
    x[idx::SIDESLIP] = eq.sideslip;
    x[idx::HEADING] = -eq.sideslip;
    x[idx::WHEEL_SPEED] = eq.state.wheel_speed;
    x[idx::WEIGHT_TRANSFER] = eq.state.weight_transfer;
    x[idx::STEER] = eq.input.steer;
    x[idx::TORQUE] = eq.input.torque;
    x[idx::TEMPERATURE] = eq.temperature;
    x
}

/// Time derivative of the transition state for slew rates `[steer, torque]`.
pub fn transition_rate(model: &VehicleModel, x: &TransitionState, rates: [f64; 2]) -> Result<TransitionState> {
    let (state, input) = split_state(x);
    let d = model.derivatives(&state, &input, 0.0)?;
    let v = x[idx::SPEED];
    let (vx, vy) = (state.vx, state.vy);
    let mut out = TransitionState::zeros();
    out[idx::YAW_RATE] = d.yaw_rate;
    out[idx::SPEED] = (vx * d.vx + vy * d.vy) / v;
    out[idx::SIDESLIP] = (vx * d.vy - vy * d.vx) / (v * v);
    out[idx::HEADING] = d.heading;
    out[idx::WHEEL_SPEED] = d.wheel_speed;
    out[idx::WEIGHT_TRANSFER] = d.weight_transfer;
    out[idx::X] = d.x;
    out[idx::Y] = d.y;
    out[idx::STEER] = rates[0];
    out[idx::TORQUE] = rates[1];
    out[idx::TEMPERATURE] = d.temperature;
    out[idx::DISTANCE] = v;
    Ok(out)
}

/// One RK4 step of the transition dynamics with slew rates held.
pub fn rk4_step(model: &VehicleModel, x: &TransitionState, rates: [f64; 2], h: f64) -> Result<TransitionState> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step {h} must be positive")));
    }
    rk4(|s| transition_rate(model, s, rates), x, h)
}

/// Curvature of the travelled path, `(r + beta') / V`.
pub fn path_curvature(model: &VehicleModel, x: &TransitionState) -> Result<f64> {
    let rate = transition_rate(model, x, [0.0, 0.0])?;
    Ok((x[idx::YAW_RATE] + rate[idx::SIDESLIP]) / x[idx::SPEED])
}

/// Offset of the centre of the circle osculating a drift with course angle
/// `heading + sideslip` and curvature `kappa`, measured perpendicular to a
/// line with direction `axis`. With `axis = 0` this is the centre's Y.
pub fn circle_center_offset(x: &TransitionState, kappa: f64, axis: f64) -> f64 {
    let course = x[idx::HEADING] + x[idx::SIDESLIP];
    let cx = x[idx::X] - course.sin() / kappa;
    let cy = x[idx::Y] + course.cos() / kappa;
    cy * axis.cos() - cx * axis.sin()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionProblem {
    pub model: VehicleModel,
    pub initial: TransitionState,
    /// Curvature of the circle the transition starts from.
    pub initial_curvature: f64,
    pub final_curvature: f64,
    pub final_sideslip: f64,
    pub k_steer_rate: f64,
    pub k_brake_rate: f64,
    pub k_torque_rate: f64,
    pub k_distance: f64,
    pub bounds: ActuatorBounds,
    pub steps: usize,
    pub step_min: f64,
    pub step_max: f64,
    /// Require both circle centres to lie on one line with direction `axis`.
    pub match_center: bool,
    /// Direction of the line through the two centres, rad.
    pub axis: f64,
    /// Lower bound on the speed `V` at every node. The distance cost alone
    /// rewards braking towards a standstill, where the tire model loses its
    /// meaning.
    pub min_speed: f64,
    /// Optional terminal speed, used to hand off at the next circle's
    /// equilibrium speed.
    pub final_speed: Option<f64>,
}

impl TransitionProblem {
    /// Transition from `start` onto the mirrored circle (a figure-8 crossing).
    pub fn figure_eight(model: VehicleModel, start: &DriftEquilibrium, cfg: &PlannerConfig) -> Self {
        Self {
            model,
            initial: state_from_equilibrium(start),
            initial_curvature: start.curvature(),
            final_curvature: -start.curvature(),
            final_sideslip: -start.sideslip,
            k_steer_rate: cfg.k_steer_rate,
            k_brake_rate: cfg.k_brake_rate,
            k_torque_rate: cfg.k_torque_rate,
            k_distance: cfg.k_distance,
            bounds: cfg.bounds,
            steps: cfg.steps,
            step_min: cfg.step_min,
            step_max: cfg.step_max,
            match_center: true,
            axis: 0.0,
            min_speed: 0.5 * start.speed(),
            final_speed: Some(start.speed()),
        }
    }

    /// Places the initial state at an inertial pose given by position and
    /// course angle (heading plus sideslip).
    pub fn at_pose(mut self, x: f64, y: f64, course: f64) -> Self {
        self.initial[idx::X] = x;
        self.initial[idx::Y] = y;
        self.initial[idx::HEADING] = course - self.initial[idx::SIDESLIP];
        self
    }

    pub fn with_axis(mut self, axis: f64) -> Self {
        self.axis = axis;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::InvalidArgument("transition needs at least 2 steps".into()));
        }
        for w in [self.k_steer_rate, self.k_brake_rate, self.k_torque_rate, self.k_distance] {
            if !(w >= 0.0) {
                return Err(Error::InvalidArgument("cost weights must be non-negative".into()));
            }
        }
        self.bounds.validate()?;
        if !(0.0 < self.step_min && self.step_min < self.step_max) {
            return Err(Error::InvalidArgument("step bounds out of order".into()));
        }
        if !(self.min_speed >= 0.0) {
            return Err(Error::InvalidArgument("minimum speed must be non-negative".into()));
        }
        if !(self.final_curvature != 0.0 && self.initial_curvature != 0.0) {
            return Err(Error::InvalidArgument("circle curvatures must be non-zero".into()));
        }
        Ok(())
    }

    /// Terminal equality constraints evaluated at the last state.
    pub fn terminal_residual(&self, xn: &TransitionState, x0: &TransitionState) -> Vec<f64> {
        let mut g = vec![
            xn[idx::YAW_RATE] / xn[idx::SPEED] - self.final_curvature,
            xn[idx::SIDESLIP] - self.final_sideslip,
        ];
        if let Some(v) = self.final_speed {
            g.push((xn[idx::SPEED] - v) / STATE_SCALE[idx::SPEED]);
        }
        if self.match_center {
            let c0 = circle_center_offset(x0, self.initial_curvature, self.axis);
            let cn = circle_center_offset(xn, self.final_curvature, self.axis);
            g.push((cn - c0) / STATE_SCALE[idx::Y]);
        }
        g
    }

    /// Objective for given slew rates and final distance.
    pub fn cost(&self, rates: &[[f64; 2]], final_distance: f64) -> f64 {
        rates
            .iter()
            .map(|u| self.k_steer_rate * u[0] * u[0] + self.k_torque_rate * u[1] * u[1])
            .sum::<f64>()
            + self.k_distance * final_distance * final_distance
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqpOptions {
    pub max_iterations: usize,
    /// Converged when the scaled step and the total constraint violation are
    /// both below this.
    pub tolerance: f64,
    /// Print one line per iteration to stderr.
    pub verbose: bool,
}

impl Default for SqpOptions {
    fn default() -> Self {
        Self {
            max_iterations: 150,
            tolerance: 1e-9,
            verbose: false,
        }
    }
}

/// One accepted optimizer step on the l1 merit `J + penalty * violation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeritStep {
    pub before: f64,
    pub after: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicTrajectory {
    pub step: f64,
    pub times: Vec<f64>,
    /// `N + 1` states.
    pub states: Vec<TransitionState>,
    /// `N` slew-rate inputs `[steer, brake, torque]`; the last is zero.
    pub inputs: Vec<[f64; 3]>,
    pub cost: f64,
    /// Largest scaled shooting defect after replay (zero by construction).
    pub max_defect: f64,
    /// Largest terminal-constraint violation.
    pub terminal_violation: f64,
    /// Largest bound violation in natural units.
    pub bound_violation: f64,
    pub iterations: usize,
    /// Exact-penalty merit before and after each accepted step.
    pub merit_history: Vec<MeritStep>,
}

impl DynamicTrajectory {
    pub fn arc_lengths(&self) -> Vec<f64> {
        self.states.iter().map(|x| x[idx::DISTANCE]).collect()
    }

    pub fn transition_length(&self) -> f64 {
        self.states.last().map(|x| x[idx::DISTANCE]).unwrap_or(0.0)
    }

    pub fn duration(&self) -> f64 {
        self.step * (self.states.len().saturating_sub(1)) as f64
    }

    pub fn final_state(&self) -> &TransitionState {
        self.states.last().expect("trajectory has states")
    }
}

/// Seed trajectory: smooth blend of the start and target drift states with
/// kinematically consistent pose.
fn initial_guess(problem: &TransitionProblem, target: &TransitionState, h: f64) -> (Vec<TransitionState>, Vec<[f64; 2]>) {
    let n = problem.steps;
    let x0 = problem.initial;
    let blend = |k: usize| {
        let t = k as f64 / n as f64;
        t * t * (3.0 - 2.0 * t)
    };
    let mut states = Vec::with_capacity(n + 1);
    states.push(x0);
    for k in 1..=n {
        let w = blend(k);
        let mut x = x0;
        for i in [
            idx::YAW_RATE,
            idx::SPEED,
            idx::SIDESLIP,
            idx::WHEEL_SPEED,
            idx::WEIGHT_TRANSFER,
            idx::STEER,
            idx::TORQUE,
        ] {
            x[i] = x0[i] + w * (target[i] - x0[i]);
        }
        let prev: TransitionState = states[k - 1];
        x[idx::HEADING] = prev[idx::HEADING] + h * 0.5 * (prev[idx::YAW_RATE] + x[idx::YAW_RATE]);
        let chi = 0.5 * (prev[idx::HEADING] + prev[idx::SIDESLIP] + x[idx::HEADING] + x[idx::SIDESLIP]);
        let v = 0.5 * (prev[idx::SPEED] + x[idx::SPEED]);
        x[idx::X] = prev[idx::X] + h * v * chi.cos();
        x[idx::Y] = prev[idx::Y] + h * v * chi.sin();
        x[idx::DISTANCE] = prev[idx::DISTANCE] + h * v;
        x[idx::TEMPERATURE] = x0[idx::TEMPERATURE];
        states.push(x);
    }
    let b = &problem.bounds;
    let mut rates = Vec::with_capacity(n);
    for k in 0..n {
        if k == n - 1 {
            rates.push([0.0, 0.0]);
            break;
        }
        let ds = (states[k + 1][idx::STEER] - states[k][idx::STEER]) / h;
        let dt = (states[k + 1][idx::TORQUE] - states[k][idx::TORQUE]) / h;
        rates.push([
            ds.clamp(b.steer_rate_min * 0.95, b.steer_rate_max * 0.95),
            dt.clamp(b.torque_rate_min * 0.95, b.torque_rate_max * 0.95),
        ]);
    }
    (states, rates)
}

/// Target steady drift used to seed the optimizer.
fn target_state(problem: &TransitionProblem) -> TransitionState {
    let x0 = problem.initial;
    let mut target = x0;
    let v = x0[idx::SPEED];
    target[idx::YAW_RATE] = problem.final_curvature * v;
    target[idx::SIDESLIP] = problem.final_sideslip;
    if (problem.final_curvature.signum() != problem.initial_curvature.signum())
        || (problem.final_sideslip.signum() != x0[idx::SIDESLIP].signum())
    {
        target[idx::STEER] = -x0[idx::STEER];
    }
    let solver = EquilibriumSolver::new(problem.model, problem.bounds);
    let guess = EquilibriumGuess {
        yaw_rate: target[idx::YAW_RATE],
        wheel_speed: x0[idx::WHEEL_SPEED],
        weight_transfer: x0[idx::WEIGHT_TRANSFER],
        steer: target[idx::STEER],
        torque: x0[idx::TORQUE],
    };
    if let Ok(eq) = solver.solve(
        1.0 / problem.final_curvature,
        problem.final_sideslip,
        x0[idx::TEMPERATURE],
        Some(guess),
    ) {
        target[idx::YAW_RATE] = eq.state.yaw_rate;
        target[idx::SPEED] = eq.speed();
        target[idx::WHEEL_SPEED] = eq.state.wheel_speed;
        target[idx::WEIGHT_TRANSFER] = eq.state.weight_transfer;
        target[idx::STEER] = eq.input.steer;
        target[idx::TORQUE] = eq.input.torque;
    }
    target
}

struct Linearization {
    a: Vec<SMatrix<f64, DIM, DIM>>,
    b: Vec<SMatrix<f64, DIM, 2>>,
    h: Vec<TransitionState>,
}

/// All quantities in scaled coordinates.
fn linearize_steps(
    problem: &TransitionProblem,
    states: &[TransitionState],
    rates: &[[f64; 2]],
    h: f64,
) -> Result<Linearization> {
    let n = problem.steps;
    let model = &problem.model;
    let sx = TransitionState::from(STATE_SCALE);
    let eps = 1e-6;
    let mut lin = Linearization {
        a: Vec::with_capacity(n),
        b: Vec::with_capacity(n),
        h: Vec::with_capacity(n),
    };
    for k in 0..n {
        let x = states[k];
        let u = rates[k];
        let mut a = SMatrix::<f64, DIM, DIM>::zeros();
        for j in 0..DIM {
            let d = eps * STATE_SCALE[j];
            let mut xp = x;
            xp[j] += d;
            let mut xm = x;
            xm[j] -= d;
            let col = (rk4_step(model, &xp, u, h)? - rk4_step(model, &xm, u, h)?).component_div(&sx) / (2.0 * eps);
            a.set_column(j, &col);
        }
        let mut b = SMatrix::<f64, DIM, 2>::zeros();
        for j in 0..2 {
            let d = eps * RATE_SCALE[j];
            let mut up = u;
            up[j] += d;
            let mut um = u;
            um[j] -= d;
            let col = (rk4_step(model, &x, up, h)? - rk4_step(model, &x, um, h)?).component_div(&sx) / (2.0 * eps);
            b.set_column(j, &col);
        }
        let d = eps * STEP_SCALE;
        let col = (rk4_step(model, &x, u, h + d)? - rk4_step(model, &x, u, h - d)?).component_div(&sx) / (2.0 * eps);
        lin.a.push(a);
        lin.b.push(b);
        lin.h.push(col);
    }
    Ok(lin)
}

fn bound_violation(problem: &TransitionProblem, states: &[TransitionState]) -> f64 {
    let b = &problem.bounds;
    let mut v: f64 = 0.0;
    for x in states.iter().skip(1) {
        v = v.max(x[idx::STEER] - b.steer_max).max(b.steer_min - x[idx::STEER]);
        v = v.max((x[idx::TORQUE] - b.torque_max) / STATE_SCALE[idx::TORQUE]);
        v = v.max((b.torque_min - x[idx::TORQUE]) / STATE_SCALE[idx::TORQUE]);
        v = v.max((problem.min_speed - x[idx::SPEED]) / STATE_SCALE[idx::SPEED]);
    }
    v.max(0.0)
}

/// Sum of absolute scaled violations of the terminal equalities and the
/// state bounds.
fn total_violation(problem: &TransitionProblem, states: &[TransitionState]) -> f64 {
    let g: f64 = problem
        .terminal_residual(&states[problem.steps], &problem.initial)
        .iter()
        .map(|v| v.abs())
        .sum();
    let b = &problem.bounds;
    let mut s = 0.0;
    for x in states.iter().skip(1) {
        s += (x[idx::STEER] - b.steer_max).max(0.0) + (b.steer_min - x[idx::STEER]).max(0.0);
        s += ((x[idx::TORQUE] - b.torque_max).max(0.0) + (b.torque_min - x[idx::TORQUE]).max(0.0))
            / STATE_SCALE[idx::TORQUE];
        s += (problem.min_speed - x[idx::SPEED]).max(0.0) / STATE_SCALE[idx::SPEED];
    }
    g + s
}

/// Gradient of the terminal residual with respect to the scaled last state.
fn terminal_jacobian(problem: &TransitionProblem, xn: &TransitionState) -> DMatrix<f64> {
    let g0 = problem.terminal_residual(xn, &problem.initial);
    let mut jac = DMatrix::zeros(g0.len(), DIM);
    for j in 0..DIM {
        let d = 1e-7 * STATE_SCALE[j];
        let mut xp = *xn;
        xp[j] += d;
        let mut xm = *xn;
        xm[j] -= d;
        let gp = problem.terminal_residual(&xp, &problem.initial);
        let gm = problem.terminal_residual(&xm, &problem.initial);
        for i in 0..g0.len() {
            jac[(i, j)] = (gp[i] - gm[i]) / (2e-7);
        }
    }
    jac
}

const MAX_PENALTY: f64 = 1e12;

/// Solves `min 1/2 d'Hd + g'd + rho * sum(p + q)` subject to
/// `A d - p + q = b`, `G d <= h`, `p, q >= 0`. Returns the full solution and
/// the total slack.
fn solve_elastic(
    hess: &DMatrix<f64>,
    grad: &DVector<f64>,
    eq_matrix: &DMatrix<f64>,
    eq_rhs: &DVector<f64>,
    rows: &[SparseRow],
    nw: usize,
    rho: f64,
) -> Result<(DVector<f64>, f64)> {
    let m = eq_rhs.len();
    let nv = nw + 2 * m;
    // the objective is divided by rho so the slack multipliers stay of order one
    let mut hessian = DMatrix::zeros(nv, nv);
    hessian.view_mut((0, 0), (nw, nw)).copy_from(&(hess / rho));
    for i in nw..nv {
        hessian[(i, i)] = 1e-12;
    }
    let mut gradient = DVector::from_element(nv, 1.0);
    gradient.rows_mut(0, nw).copy_from(&(grad / rho));
    let mut a = DMatrix::zeros(m, nv);
    a.view_mut((0, 0), (m, nw)).copy_from(eq_matrix);
    for i in 0..m {
        a[(i, nw + i)] = -1.0;
        a[(i, nw + m + i)] = 1.0;
    }
    let mut inequalities = rows.to_vec();
    for i in nw..nv {
        inequalities.push(SparseRow { entries: vec![(i, -1.0)], rhs: 0.0 });
    }
    let qp = QpProblem {
        hessian,
        gradient,
        eq_matrix: a,
        eq_rhs: eq_rhs.clone(),
        inequalities,
    };
    let sol = solve_qp(&qp, &QpOptions::default())?;
    let slack = sol.x.rows(nw, 2 * m).iter().map(|v| v.max(0.0)).sum();
    Ok((sol.x, slack))
}

/// Solves the transition problem.
pub fn solve_transition(problem: &TransitionProblem) -> Result<DynamicTrajectory> {
    solve_transition_with(problem, &SqpOptions::default())
}

/// Time-varying LQR gains (scaled coordinates) that stabilize the rollout
/// around a nominal trajectory.
fn tracking_gains(lin: &Linearization) -> Vec<SMatrix<f64, 2, DIM>> {
    let n = lin.a.len();
    let mut q = SMatrix::<f64, DIM, DIM>::identity();
    // pose, temperature and distance carry no restoring dynamics
    for i in [idx::HEADING, idx::X, idx::Y, idx::TEMPERATURE, idx::DISTANCE] {
        q[(i, i)] = 1e-3;
    }
    let r = SMatrix::<f64, 2, 2>::identity() * 0.1;
    let mut p = q;
    let mut gains = vec![SMatrix::<f64, 2, DIM>::zeros(); n];
    for k in (0..n).rev() {
        let (a, b) = (&lin.a[k], &lin.b[k]);
        let btp = b.transpose() * p;
        let k_gain = (r + btp * b).try_inverse().map(|m| m * btp * a).unwrap_or_default();
        p = q + a.transpose() * p * (a - b * k_gain);
        p = (p + p.transpose()) * 0.5;
        gains[k] = k_gain;
    }
    gains
}

/// Feedback rollout from the initial state: tracks `nominal` with the given
/// feedforward rates, clamping the rates to their bounds. The result is
/// dynamically consistent by construction.
fn project(
    problem: &TransitionProblem,
    nominal: &[TransitionState],
    feedforward: &[[f64; 2]],
    gains: &[SMatrix<f64, 2, DIM>],
    h: f64,
) -> Result<(Vec<TransitionState>, Vec<[f64; 2]>)> {
    let n = problem.steps;
    let b = &problem.bounds;
    let sx = TransitionState::from(STATE_SCALE);
    let mut states = Vec::with_capacity(n + 1);
    let mut rates = Vec::with_capacity(n);
    states.push(problem.initial);
    for k in 0..n {
        let x = states[k];
        let u = if k + 1 < n {
            let fb = gains[k] * (x - nominal[k]).component_div(&sx);
            [
                (feedforward[k][0] - fb[0] * RATE_SCALE[0]).clamp(b.steer_rate_min, b.steer_rate_max),
                (feedforward[k][1] - fb[1] * RATE_SCALE[1]).clamp(b.torque_rate_min, b.torque_rate_max),
            ]
        } else {
            [0.0, 0.0]
        };
        states.push(rk4_step(&problem.model, &x, u, h)?);
        rates.push(u);
    }
    Ok((states, rates))
}

pub fn solve_transition_with(problem: &TransitionProblem, opts: &SqpOptions) -> Result<DynamicTrajectory> {
    problem.validate()?;
    let n = problem.steps;
    let free = n - 1;
    let nw = 2 * free + 1;
    let hcol = 2 * free;
    let b = problem.bounds;

    let mut h = (3.0 / n as f64).clamp(problem.step_min, problem.step_max);
    let target = target_state(problem);
    let (guess_states, guess_rates) = initial_guess(problem, &target, h);
    let (mut states, mut rates) = {
        let lin = linearize_steps(problem, &guess_states, &guess_rates, h)?;
        project(problem, &guess_states, &guess_rates, &tracking_gains(&lin), h)?
    };

    // rollouts have no defects, so the violation is terminal plus bounds
    let merit = |states: &[TransitionState], rates: &[[f64; 2]]| -> (f64, f64) {
        let viol = total_violation(problem, states);
        (problem.cost(rates, states[n][idx::DISTANCE]), viol)
    };

    let mut rho: f64 = 10.0;
    // Levenberg damping, adapted like a trust-region radius from the ratio
    // of actual to predicted merit reduction
    let mut damping: f64 = 1e-2;
    let mut history = Vec::new();
    for iteration in 1..=opts.max_iterations {
        let lin = linearize_steps(problem, &states, &rates, h)?;
        let gains = tracking_gains(&lin);

        // condensed sensitivities: dX_k = M_k dw
        let mut m_mats: Vec<DMatrix<f64>> = Vec::with_capacity(n + 1);
        m_mats.push(DMatrix::zeros(DIM, nw));
        for k in 0..n {
            let a = DMatrix::from_column_slice(DIM, DIM, lin.a[k].as_slice());
            let mut m = &a * &m_mats[k];
            if k < free {
                for j in 0..2 {
                    for i in 0..DIM {
                        m[(i, 2 * k + j)] += lin.b[k][(i, j)];
                    }
                }
            }
            for i in 0..DIM {
                m[(i, hcol)] += lin.h[k][i];
            }
            m_mats.push(m);
        }

        // cost model: slew terms are exact quadratics, distance term Gauss-Newton
        let mut hess = DMatrix::zeros(nw, nw);
        let mut grad = DVector::zeros(nw);
        for k in 0..free {
            let wts = [problem.k_steer_rate, problem.k_torque_rate];
            for j in 0..2 {
                let sc = RATE_SCALE[j];
                hess[(2 * k + j, 2 * k + j)] = 2.0 * wts[j] * sc * sc;
                grad[2 * k + j] = 2.0 * wts[j] * sc * rates[k][j];
            }
        }
        let s_scale = STATE_SCALE[idx::DISTANCE];
        let m_s = m_mats[n].row(idx::DISTANCE).transpose();
        let ks = problem.k_distance * s_scale;
        hess += &m_s * m_s.transpose() * (2.0 * ks * s_scale);
        grad += &m_s * (2.0 * ks * states[n][idx::DISTANCE]);

        let mut damped = hess.clone();
        for i in 0..nw {
            damped[(i, i)] += 1e-9 + damping;
        }
        for m in m_mats.iter().skip(1) {
            damped.gemm_tr(damping, m, m, 1.0);
        }

        // terminal equalities
        let g0 = DVector::from_vec(problem.terminal_residual(&states[n], &problem.initial));
        let gj = terminal_jacobian(problem, &states[n]);
        let eq_matrix = &gj * &m_mats[n];
        let eq_rhs = -g0;

        // bounds on the decision variables and on steering/torque states
        let mut rows = Vec::with_capacity(2 * nw + 4 * n);
        for k in 0..free {
            let lim = [
                (b.steer_rate_min, b.steer_rate_max),
                (b.torque_rate_min, b.torque_rate_max),
            ];
            for j in 0..2 {
                let sc = RATE_SCALE[j];
                let col = 2 * k + j;
                rows.push(SparseRow { entries: vec![(col, 1.0)], rhs: (lim[j].1 - rates[k][j]) / sc });
                rows.push(SparseRow { entries: vec![(col, -1.0)], rhs: (rates[k][j] - lim[j].0) / sc });
            }
        }
        rows.push(SparseRow { entries: vec![(hcol, 1.0)], rhs: (problem.step_max - h) / STEP_SCALE });
        rows.push(SparseRow { entries: vec![(hcol, -1.0)], rhs: (h - problem.step_min) / STEP_SCALE });
        for k in 1..=n {
            for (i, lo, hi) in [
                (idx::STEER, b.steer_min, b.steer_max),
                (idx::TORQUE, b.torque_min, b.torque_max),
            ] {
                let sc = STATE_SCALE[i];
                let row: Vec<f64> = m_mats[k].row(i).iter().copied().collect();
                let cur = states[k][i] / sc;
                rows.push(SparseRow::from_dense(&row, hi / sc - cur));
                let neg: Vec<f64> = row.iter().map(|v| -v).collect();
                rows.push(SparseRow::from_dense(&neg, cur - lo / sc));
            }
            let sc = STATE_SCALE[idx::SPEED];
            let neg: Vec<f64> = m_mats[k].row(idx::SPEED).iter().map(|v| -v).collect();
            rows.push(SparseRow::from_dense(&neg, (states[k][idx::SPEED] - problem.min_speed) / sc));
        }

        // elastic QP: the terminal equalities get l1-penalized slacks so the
        // subproblem stays feasible far from the solution; the penalty is
        // raised until the linearized constraints are met or cannot be
        let (j_now, viol0) = merit(&states, &rates);
        let (mut sol, mut slack) = solve_elastic(&damped, &grad, &eq_matrix, &eq_rhs, &rows, nw, rho)?;
        while slack > 1e-10 && rho < MAX_PENALTY {
            let trial_rho = (rho * 10.0).min(MAX_PENALTY);
            let (trial, trial_slack) = solve_elastic(&damped, &grad, &eq_matrix, &eq_rhs, &rows, nw, trial_rho)?;
            let improved = trial_slack < 0.99 * slack;
            rho = trial_rho;
            sol = trial;
            slack = trial_slack;
            // the linearization cannot do better; keep the penalty here
            if !improved {
                break;
            }
        }
        let dw = sol.rows(0, nw).into_owned();
        let dw = &dw;

        // undamped model of the cost change along the full step
        let cost_change = grad.dot(dw) + 0.5 * dw.dot(&(&hess * dw));
        let reduction = viol0 - slack;
        if reduction > 1e-12 {
            rho = rho.max(cost_change / (0.5 * reduction)).min(MAX_PENALTY);
        }
        let phi_start = j_now + rho * viol0;
        let predicted = rho * reduction - cost_change;
        let step_norm = dw.amax();

        let trial = |alpha: f64| -> Result<(Vec<TransitionState>, Vec<[f64; 2]>, f64, f64)> {
            let trial_h = h + alpha * dw[hcol] * STEP_SCALE;
            let mut ff = rates.clone();
            for k in 0..free {
                for j in 0..2 {
                    ff[k][j] += alpha * dw[2 * k + j] * RATE_SCALE[j];
                }
            }
            let mut nominal = states.clone();
            for k in 1..=n {
                let dx = &m_mats[k] * dw;
                for i in 0..DIM {
                    nominal[k][i] += alpha * dx[i] * STATE_SCALE[i];
                }
            }
            let (s, r) = project(problem, &nominal, &ff, &gains, trial_h)?;
            let (j, v) = merit(&s, &r);
            Ok((s, r, trial_h, j + rho * v))
        };

        let mut alpha = 1.0;
        let mut accepted = None;
        let mut ratio = f64::NEG_INFINITY;
        while alpha > 1e-10 {
            if let Ok(t) = trial(alpha) {
                let actual = phi_start - t.3;
                if alpha == 1.0 && predicted > 0.0 {
                    ratio = actual / predicted;
                }
                if actual >= 1e-4 * alpha * predicted.max(0.0) && actual > 0.0 {
                    accepted = Some(t);
                    break;
                }
            }
            alpha *= 0.5;
        }
        if ratio > 0.75 {
            damping = (damping / 3.0).max(1e-9);
        } else if ratio < 0.25 {
            damping = (damping * 4.0).min(1e12);
        }
        if opts.verbose {
            eprintln!(
                "sqp {iteration:3}  J {j_now:.9e}  viol {viol0:.2e}  penalty {rho:.1e}  damping {damping:.1e}  step {step_norm:.2e}  alpha {alpha:.2e}  h {h:.5}"
            );
        }
        let Some((s_new, r_new, h_new, phi_new)) = accepted else {
            // no decrease possible along the step: stationary for the merit
            if viol0 < opts.tolerance {
                return finish(problem, &rates, h, iteration, history);
            }
            return Err(Error::MaxIterations {
                iterations: iteration,
                step: step_norm,
                violation: viol0,
            });
        };
        history.push(MeritStep {
            before: phi_start,
            after: phi_new,
            penalty: rho,
        });
        states = s_new;
        rates = r_new;
        h = h_new;
        let (j_new, viol) = merit(&states, &rates);
        let small_change = (j_now - j_new).abs() <= opts.tolerance * (1.0 + j_now.abs());
        if viol < opts.tolerance && small_change {
            return finish(problem, &rates, h, iteration, history);
        }
    }
    let (_, viol) = merit(&states, &rates);
    Err(Error::MaxIterations {
        iterations: opts.max_iterations,
        step: f64::NAN,
        violation: viol,
    })
}

/// Replays the inputs from the initial state and packages the result.
fn finish(
    problem: &TransitionProblem,
    rates: &[[f64; 2]],
    h: f64,
    iterations: usize,
    merit_history: Vec<MeritStep>,
) -> Result<DynamicTrajectory> {
    let n = problem.steps;
    let mut states = vec![problem.initial];
    for k in 0..n {
        let next = rk4_step(&problem.model, &states[k], rates[k], h)?;
        states.push(next);
    }
    let g = problem.terminal_residual(&states[n], &problem.initial);
    let terminal_violation = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut bviol = bound_violation(problem, &states);
    let bd = &problem.bounds;
    for u in rates {
        bviol = bviol
            .max(u[0] - bd.steer_rate_max)
            .max(bd.steer_rate_min - u[0])
            .max(u[1] - bd.torque_rate_max)
            .max(bd.torque_rate_min - u[1]);
    }
    bviol = bviol.max(problem.step_min - h).max(h - problem.step_max);
    if terminal_violation > 1e-6 || bviol > 1e-8 {
        return Err(Error::Infeasible {
            violation: terminal_violation.max(bviol),
        });
    }
    Ok(DynamicTrajectory {
        step: h,
        times: (0..=n).map(|k| k as f64 * h).collect(),
        cost: problem.cost(rates, states[n][idx::DISTANCE]),
        states,
        inputs: rates.iter().map(|u| [u[0], 0.0, u[1]]).collect(),
        max_defect: 0.0,
        terminal_violation,
        bound_violation: bviol.max(0.0),
        iterations,
        merit_history,
    })
}
