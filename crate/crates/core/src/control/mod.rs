//! Error-state linearization, LQR design and arc-length gain scheduling.
//!
//! The error state is `[Vx, Vy, r, omega, dpsi, e]` and the input
//! `[delta, Fxf, tau]`, both relative to a reference point. Tread temperature
//! and weight transfer are held at the reference while differentiating.

pub mod riccati;

use nalgebra::{DMatrix, SMatrix, SVector};

use crate::error::{Error, Result};
use crate::model::{ControlInput, VehicleModel, VehicleState};
use crate::reference::{Reference, ReferencePoint};

pub use riccati::{solve_care, solve_lyapunov, spectral_abscissa, RiccatiSolution};

pub type StateMatrix = SMatrix<f64, 6, 6>;
pub type InputMatrix = SMatrix<f64, 6, 3>;
pub type Gain = SMatrix<f64, 3, 6>;
pub type ErrorState = SVector<f64, 6>;

/// Diagonal LQR weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrWeights {
    /// `[k_Vx, k_Vy, k_r, k_omega, k_dpsi, k_e]`
    pub state: [f64; 6],
    /// `[k_delta, k_Fxf, k_tau]`
    pub input: [f64; 3],
}

impl Default for LqrWeights {
    fn default() -> Self {
        let inv_sq = |x: f64| 1.0 / (x * x);
        Self {
            state: [
                inv_sq(0.5),
                inv_sq(1.0),
                inv_sq(0.6),
                inv_sq(10.0),
                inv_sq(10f64.to_radians()),
                inv_sq(0.2),
            ],
            input: [inv_sq(2f64.to_radians()), inv_sq(500.0), inv_sq(500.0)],
        }
    }
}

impl LqrWeights {
    pub fn validate(&self) -> Result<()> {
        if self.state.iter().any(|q| !(*q >= 0.0)) {
            return Err(Error::InvalidArgument("state weights must be non-negative".into()));
        }
        if self.input.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::InvalidArgument("input weights must be positive".into()));
        }
        Ok(())
    }
}

/// Where a linearization is taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub state: VehicleState,
    pub input: ControlInput,
    pub curvature: f64,
}

impl From<&ReferencePoint> for OperatingPoint {
    fn from(p: &ReferencePoint) -> Self {
        Self {
            state: p.state,
            input: p.input,
            curvature: p.curvature,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizedSystem {
    pub a: StateMatrix,
    pub b: InputMatrix,
    pub point: OperatingPoint,
}

/// Error-state vector of `state` relative to the reference `point`.
pub fn error_state(state: &VehicleState, reference: &VehicleState) -> ErrorState {
    ErrorState::from([
        state.vx - reference.vx,
        state.vy - reference.vy,
        state.yaw_rate - reference.yaw_rate,
        state.wheel_speed - reference.wheel_speed,
        state.heading_error - reference.heading_error,
        state.lateral_error - reference.lateral_error,
    ])
}

fn body_rates(model: &VehicleModel, state: &VehicleState, input: &ControlInput, kappa: f64) -> Result<[f64; 4]> {
    let d = model.derivatives(state, input, kappa)?;
    Ok([d.vx, d.vy, d.yaw_rate, d.wheel_speed])
}

fn perturb_state(s: &VehicleState, i: usize, h: f64) -> VehicleState {
    let mut out = *s;
    match i {
        0 => out.vx += h,
        1 => out.vy += h,
        2 => out.yaw_rate += h,
        _ => out.wheel_speed += h,
    }
    out
}

fn perturb_input(u: &ControlInput, i: usize, h: f64) -> ControlInput {
    let mut a = u.to_array();
    a[i] += h;
    ControlInput::from_array(a)
}

/// Relative central-difference step used for the dynamic rows.
pub const FD_STEP: f64 = 1e-6;

/// Linearizes `model` about `point`. Body rows come from central differences
/// with temperature frozen; the heading-error and lateral-error rows are
/// analytic with `e = 0` substituted.
pub fn linearize(model: &VehicleModel, point: &OperatingPoint) -> Result<LinearizedSystem> {
    linearize_with_step(model, point, FD_STEP)
}

pub fn linearize_with_step(model: &VehicleModel, point: &OperatingPoint, step: f64) -> Result<LinearizedSystem> {
    let frozen = model.frozen();
    let x = &point.state;
    let u = &point.input;
    let k = point.curvature;
    let mut a = StateMatrix::zeros();
    let mut b = InputMatrix::zeros();

    let xs = [x.vx, x.vy, x.yaw_rate, x.wheel_speed];
    for (j, xj) in xs.iter().enumerate() {
        let h = step * xj.abs().max(1.0);
        let fp = body_rates(&frozen, &perturb_state(x, j, h), u, k)?;
        let fm = body_rates(&frozen, &perturb_state(x, j, -h), u, k)?;
        for i in 0..4 {
            a[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    let us = u.to_array();
    for (j, uj) in us.iter().enumerate() {
        let h = step * uj.abs().max(1.0);
        let fp = body_rates(&frozen, x, &perturb_input(u, j, h), k)?;
        let fm = body_rates(&frozen, x, &perturb_input(u, j, -h), k)?;
        for i in 0..4 {
            b[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }

    let (s, c) = x.heading_error.sin_cos();
    let (vx, vy) = (x.vx, x.vy);
    a[(4, 0)] = -k * c;
    a[(4, 1)] = k * s;
    a[(4, 2)] = 1.0;
    a[(4, 4)] = k * (vx * s + vy * c);
    a[(4, 5)] = -k * k * (vx * c - vy * s);
    a[(5, 0)] = s;
    a[(5, 1)] = c;
    a[(5, 4)] = -vy * s + vx * c;

    Ok(LinearizedSystem {
        a,
        b,
        point: *point,
    })
}

/// LQR design result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrDesign {
    pub gain: Gain,
    /// Riccati residual in the weight-normalized coordinates.
    pub residual: f64,
    pub spectral_abscissa: f64,
}

/// Continuous-time LQR for the linearized error dynamics. The problem is
/// solved in coordinates where both weight matrices become identities.
pub fn lqr_gain(sys: &LinearizedSystem, weights: &LqrWeights) -> Result<LqrDesign> {
    weights.validate()?;
    let sx: Vec<f64> = weights.state.iter().map(|q| q.sqrt()).collect();
    let su: Vec<f64> = weights.input.iter().map(|r| r.sqrt()).collect();
    if sx.contains(&0.0) {
        return lqr_unscaled(sys, weights);
    }
    let mut a = DMatrix::zeros(6, 6);
    let mut b = DMatrix::zeros(6, 3);
    for i in 0..6 {
        for j in 0..6 {
            a[(i, j)] = sx[i] * sys.a[(i, j)] / sx[j];
        }
        for j in 0..3 {
            b[(i, j)] = sx[i] * sys.b[(i, j)] / su[j];
        }
    }
    let sol = solve_care(&a, &b, &DMatrix::identity(6, 6), &DMatrix::identity(3, 3))?;
    let mut gain = Gain::zeros();
    for i in 0..3 {
        for j in 0..6 {
            gain[(i, j)] = sol.k[(i, j)] * sx[j] / su[i];
        }
    }
    finish(sys, gain, sol.residual)
}

fn lqr_unscaled(sys: &LinearizedSystem, weights: &LqrWeights) -> Result<LqrDesign> {
    let a = DMatrix::from_column_slice(6, 6, sys.a.as_slice());
    let b = DMatrix::from_column_slice(6, 3, sys.b.as_slice());
    let q = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&weights.state));
    let r = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&weights.input));
    let sol = solve_care(&a, &b, &q, &r)?;
    let gain = Gain::from_column_slice(sol.k.as_slice());
    finish(sys, gain, sol.residual)
}

fn finish(sys: &LinearizedSystem, gain: Gain, residual: f64) -> Result<LqrDesign> {
    let closed = closed_loop(sys, &gain);
    let abscissa = spectral_abscissa(&DMatrix::from_column_slice(6, 6, closed.as_slice()));
    if !(abscissa < 0.0) {
        return Err(Error::NotStabilizable(format!(
            "closed-loop spectral abscissa {abscissa}"
        )));
    }
    Ok(LqrDesign {
        gain,
        residual,
        spectral_abscissa: abscissa,
    })
}

pub fn closed_loop(sys: &LinearizedSystem, gain: &Gain) -> StateMatrix {
    sys.a - sys.b * gain
}

/// One scheduled gain with the reference it was designed at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainKnot {
    pub s: f64,
    pub gain: Gain,
    pub state: VehicleState,
    pub input: ControlInput,
}

/// Gains indexed by arc length.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GainSchedule {
    pub knots: Vec<GainKnot>,
}

impl GainSchedule {
    pub fn new(knots: Vec<GainKnot>) -> Result<Self> {
        if knots.windows(2).any(|w| !(w[1].s > w[0].s)) {
            return Err(Error::InvalidArgument("schedule knots must be strictly increasing".into()));
        }
        Ok(Self { knots })
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    /// Nearest knot in arc length; exact ties go to the smaller `s`, and `s`
    /// outside the knot range clamps to the end knots.
    pub fn lookup(&self, s: f64) -> Result<&GainKnot> {
        let knots = &self.knots;
        if knots.is_empty() {
            return Err(Error::EmptySchedule);
        }
        let idx = knots.partition_point(|k| k.s < s);
        if idx == 0 {
            return Ok(&knots[0]);
        }
        if idx == knots.len() {
            return Ok(&knots[knots.len() - 1]);
        }
        let (lo, hi) = (&knots[idx - 1], &knots[idx]);
        if hi.s - s < s - lo.s {
            Ok(hi)
        } else {
            Ok(lo)
        }
    }

    /// Same gains with every gain replaced by zero (open loop with
    /// feedforward only).
    pub fn zeroed(&self) -> Self {
        Self {
            knots: self
                .knots
                .iter()
                .map(|k| GainKnot {
                    gain: Gain::zeros(),
                    ..*k
                })
                .collect(),
        }
    }
}

/// Arc-length knots every `spacing` metres over the reference.
pub fn knot_positions(reference: &Reference, spacing: f64) -> Vec<f64> {
    let (Some(first), Some(last)) = (reference.points.first(), reference.points.last()) else {
        return Vec::new();
    };
    let count = ((last.s - first.s) / spacing + 1e-9).floor() as usize + 1;
    (0..count).map(|k| first.s + k as f64 * spacing).collect()
}

/// Linearizes and designs an LQR gain at every knot of the reference.
pub fn build_schedule(
    model: &VehicleModel,
    reference: &Reference,
    weights: &LqrWeights,
    spacing: f64,
) -> Result<GainSchedule> {
    if !(spacing > 0.0) {
        return Err(Error::InvalidArgument("knot spacing must be positive".into()));
    }
    if reference.points.is_empty() {
        return Err(Error::EmptySchedule);
    }
    let mut knots = Vec::new();
    for s in knot_positions(reference, spacing) {
        let p = reference.sample(s);
        let sys = linearize(model, &OperatingPoint::from(&p)).map_err(|e| e.at_knot(s))?;
        let design = lqr_gain(&sys, weights).map_err(|e| e.at_knot(s))?;
        knots.push(GainKnot {
            s,
            gain: design.gain,
            state: p.state,
            input: p.input,
        });
    }
    GainSchedule::new(knots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::find_equilibrium;

    fn drift_point() -> OperatingPoint {
        let eq = find_equilibrium(&VehicleModel::default(), 15.0, (-40f64).to_radians(), 30.0, None).unwrap();
        OperatingPoint {
            state: eq.state,
            input: eq.input,
            curvature: eq.curvature(),
        }
    }

    #[test]
    fn straight_path_rows() {
        let mut p = drift_point();
        p.state.heading_error = 0.0;
        p.curvature = 0.0;
        let sys = linearize(&VehicleModel::default(), &p).unwrap();
        let row: Vec<f64> = sys.a.row(5).iter().copied().collect();
        assert_eq!(row, vec![0.0, 1.0, 0.0, 0.0, p.state.vx, 0.0]);
        assert_eq!(sys.b.row(4).amax(), 0.0);
        assert_eq!(sys.b.row(5).amax(), 0.0);
    }

    #[test]
    fn two_difference_schemes_agree() {
        let m = VehicleModel::default();
        let p = drift_point();
        let sys = linearize(&m, &p).unwrap();
        // forward differences at a tenth of the step
        let frozen = m.frozen();
        let f0 = body_rates(&frozen, &p.state, &p.input, p.curvature).unwrap();
        let xs = [p.state.vx, p.state.vy, p.state.yaw_rate, p.state.wheel_speed];
        for j in 0..4 {
            let h = 1e-7 * xs[j].abs().max(1.0);
            let f = body_rates(&frozen, &perturb_state(&p.state, j, h), &p.input, p.curvature).unwrap();
            for i in 0..4 {
                let fwd = (f[i] - f0[i]) / h;
                let c = sys.a[(i, j)];
                if c.abs() > 1e-6 {
                    assert!(((fwd - c) / c).abs() < 1e-4, "A[{i},{j}] {fwd} vs {c}");
                }
            }
        }
    }

    #[test]
    fn path_rows_match_finite_differences() {
        let m = VehicleModel::default();
        let p = drift_point();
        let sys = linearize(&m, &p).unwrap();
        let path = |s: &VehicleState| {
            let d = m.frozen().derivatives(s, &p.input, p.curvature).unwrap();
            [d.heading_error, d.lateral_error]
        };
        let fields: [fn(&mut VehicleState) -> &mut f64; 6] = [
            |s| &mut s.vx,
            |s| &mut s.vy,
            |s| &mut s.yaw_rate,
            |s| &mut s.wheel_speed,
            |s| &mut s.heading_error,
            |s| &mut s.lateral_error,
        ];
        for (j, field) in fields.iter().enumerate() {
            let h = 1e-6;
            let mut sp = p.state;
            *field(&mut sp) += h;
            let mut sm = p.state;
            *field(&mut sm) -= h;
            let (fp, fm) = (path(&sp), path(&sm));
            for r in 0..2 {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                let an = sys.a[(4 + r, j)];
                assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "row {} col {j}: {fd} vs {an}", 4 + r);
            }
        }
    }

    #[test]
    fn drift_lqr_stabilizes() {
        let sys = linearize(&VehicleModel::default(), &drift_point()).unwrap();
        let open = spectral_abscissa(&DMatrix::from_column_slice(6, 6, sys.a.as_slice()));
        assert!(open > 0.0, "drift equilibrium should be open-loop unstable");
        let design = lqr_gain(&sys, &LqrWeights::default()).unwrap();
        assert!(design.spectral_abscissa < 0.0);
        assert!(design.residual < 1e-8, "{}", design.residual);
        // linear closed loop decays from a perturbation
        let acl = closed_loop(&sys, &design.gain);
        let mut x = ErrorState::from([0.3, -0.2, 0.05, 2.0, 0.02, 0.1]);
        let x0 = x.norm();
        let dt = 1e-3;
        for _ in 0..20_000 {
            let k1 = acl * x;
            let k2 = acl * (x + k1 * (dt / 2.0));
            let k3 = acl * (x + k2 * (dt / 2.0));
            let k4 = acl * (x + k3 * dt);
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
        assert!(x.norm() < 1e-3 * x0);
    }

    fn knot(s: f64) -> GainKnot {
        GainKnot {
            s,
            gain: Gain::from_element(s),
            state: VehicleState::default(),
            input: ControlInput::default(),
        }
    }

    #[test]
    fn lookup_rules() {
        let sched = GainSchedule::new(vec![knot(0.0), knot(0.25), knot(0.5)]).unwrap();
        assert_eq!(sched.lookup(0.25).unwrap().s, 0.25);
        assert_eq!(sched.lookup(0.125).unwrap().s, 0.0);
        assert_eq!(sched.lookup(0.13).unwrap().s, 0.25);
        assert_eq!(sched.lookup(9.0).unwrap().s, 0.5);
        assert_eq!(sched.lookup(-3.0).unwrap().s, 0.0);
        let single = GainSchedule::new(vec![knot(1.0)]).unwrap();
        assert_eq!(single.lookup(-5.0).unwrap().s, 1.0);
        assert_eq!(GainSchedule::default().lookup(0.0).unwrap_err(), Error::EmptySchedule);
    }

    fn steady_schedule(model: VehicleModel) -> GainSchedule {
        let cfg = crate::config::PlannerConfig::default();
        let r = crate::reference::plan_steady(&model, &cfg, 15.0, (-40f64).to_radians(), 30.0, 10.0).unwrap();
        build_schedule(&model, &r, &cfg.lqr, 0.25).unwrap()
    }

    #[test]
    fn constant_friction_gains_do_not_vary() {
        let sched = steady_schedule(VehicleModel::constant_friction(crate::ParamSet::default(), 0.8));
        assert_eq!(sched.len(), 41);
        let k0 = sched.knots[0].gain;
        for k in &sched.knots {
            assert!((k.gain - k0).amax() <= 1e-10 * k0.amax());
        }
    }

    #[test]
    fn thermal_gains_follow_the_temperature() {
        let sched = steady_schedule(VehicleModel::default());
        let (first, last) = (sched.knots[0], sched.knots[sched.len() - 1]);
        assert!(last.state.temperature > first.state.temperature + 5.0);
        assert!((last.gain - first.gain).amax() > 1e-3 * first.gain.amax());
    }
}
