//! Arc-length indexed reference trajectories.
//!
//! Every point carries the full reference vehicle state (path coordinates
//! included), the steady input, and the curvature of the path at that
//! point. Steady arcs come from quasi-steady sweeps, transitions from the
//! optimizer; a figure-8 is the concatenation of both.

use crate::config::PlannerConfig;
use crate::equilibrium::{quasi_steady_sweep, DriftEquilibrium, EquilibriumSolver, QuasiSteadyTrajectory};
use crate::error::{Error, Result};
use crate::model::{ControlInput, VehicleModel, VehicleState};
use crate::trajopt::{self, idx, path_curvature, split_state, DynamicTrajectory, TransitionProblem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePoint {
    pub s: f64,
    pub time: f64,
    pub curvature: f64,
    pub state: VehicleState,
    pub input: ControlInput,
}

/// Pose where a segment starts: position and course angle (direction of
/// the velocity vector).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub course: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Reference {
    pub points: Vec<ReferencePoint>,
    /// Arc-length spans `[start, end]` of optimized transitions.
    pub transitions: Vec<(f64, f64)>,
}

impl Reference {
    /// Steady circular arc from a sweep, starting at `start`.
    pub fn from_sweep(sweep: &QuasiSteadyTrajectory, start: Pose) -> Self {
        let points = sweep
            .nodes
            .iter()
            .map(|node| {
                let eq = &node.equilibrium;
                let kappa = node.curvature;
                let chi = start.course + kappa * node.s;
                let mut state = eq.state;
                state.arc_length = node.s;
                state.heading = chi - eq.sideslip;
                state.x = start.x + (chi.sin() - start.course.sin()) / kappa;
                state.y = start.y - (chi.cos() - start.course.cos()) / kappa;
                ReferencePoint {
                    s: node.s,
                    time: node.time,
                    curvature: kappa,
                    state,
                    input: eq.input,
                }
            })
            .collect();
        Self {
            points,
            transitions: Vec::new(),
        }
    }

    /// Optimized transition, moved rigidly so that it starts at `start`.
    /// The move is the identity when the transition was solved at that pose.
    pub fn from_transition(traj: &DynamicTrajectory, model: &VehicleModel, start: Pose) -> Result<Self> {
        let x0 = traj.states[0];
        let origin_course = x0[idx::HEADING] + x0[idx::SIDESLIP];
        let rot = start.course - origin_course;
        let (sr, cr) = rot.sin_cos();
        let mut points = Vec::with_capacity(traj.states.len());
        for (k, x) in traj.states.iter().enumerate() {
            let (mut state, input) = split_state(x);
            let dx = x[idx::X] - x0[idx::X];
            let dy = x[idx::Y] - x0[idx::Y];
            state.x = start.x + cr * dx - sr * dy;
            state.y = start.y + sr * dx + cr * dy;
            state.heading = x[idx::HEADING] + rot;
            let kappa = path_curvature(model, x)?;
            points.push(ReferencePoint {
                s: x[idx::DISTANCE],
                time: traj.times[k],
                curvature: kappa,
                state,
                input,
            });
        }
        let end = points.last().map(|p| p.s).unwrap_or(0.0);
        Ok(Self {
            points,
            transitions: vec![(0.0, end)],
        })
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn length(&self) -> f64 {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) => b.s - a.s,
            _ => 0.0,
        }
    }

    /// Pose at the last point.
    pub fn end_pose(&self) -> Pose {
        self.points
            .last()
            .map(|p| Pose {
                x: p.state.x,
                y: p.state.y,
                course: p.state.heading + p.state.sideslip(),
            })
            .unwrap_or_default()
    }

    /// Appends `other`, shifting its arc length and time so it continues
    /// this reference. The first point of `other` replaces the last point
    /// of `self` when they coincide in arc length.
    pub fn append(&mut self, other: &Reference) {
        let (s0, t0) = self.points.last().map(|p| (p.s, p.time)).unwrap_or((0.0, 0.0));
        let base_s = other.points.first().map(|p| p.s).unwrap_or(0.0);
        let base_t = other.points.first().map(|p| p.time).unwrap_or(0.0);
        if !self.points.is_empty() {
            self.points.pop();
        }
        for p in &other.points {
            let mut q = *p;
            q.s = s0 + (p.s - base_s);
            q.time = t0 + (p.time - base_t);
            q.state.arc_length = q.s;
            self.points.push(q);
        }
        for (a, b) in &other.transitions {
            self.transitions.push((s0 + a - base_s, s0 + b - base_s));
        }
    }

    /// Index of the last point with `s_i <= s`, clamped.
    fn bracket(&self, s: f64) -> usize {
        let i = self.points.partition_point(|p| p.s <= s);
        i.saturating_sub(1).min(self.points.len().saturating_sub(2))
    }

    /// Linear interpolation in arc length, clamped to the end points.
    /// Returns the stored point exactly when `s` hits a node.
    pub fn sample(&self, s: f64) -> ReferencePoint {
        let pts = &self.points;
        if pts.len() == 1 || s <= pts[0].s {
            return pts[0];
        }
        let last = pts[pts.len() - 1];
        if s >= last.s {
            return last;
        }
        let i = self.bracket(s);
        let (a, b) = (&pts[i], &pts[i + 1]);
        if s == a.s {
            return *a;
        }
        let t = (s - a.s) / (b.s - a.s);
        let lerp = |x: f64, y: f64| x + t * (y - x);
        let sv = VehicleState::from_vector(&(a.state.to_vector() + (b.state.to_vector() - a.state.to_vector()) * t));
        let ua = a.input.to_array();
        let ub = b.input.to_array();
        ReferencePoint {
            s,
            time: lerp(a.time, b.time),
            curvature: lerp(a.curvature, b.curvature),
            state: VehicleState { arc_length: s, ..sv },
            input: ControlInput::from_array([lerp(ua[0], ub[0]), lerp(ua[1], ub[1]), lerp(ua[2], ub[2])]),
        }
    }

    /// Path curvature at `s` (piecewise linear).
    pub fn curvature_at(&self, s: f64) -> f64 {
        self.sample(s).curvature
    }

    /// Longest contiguous arc-length span where the reference sideslip
    /// magnitude stays below `threshold`.
    pub fn low_sideslip_span(&self, threshold: f64) -> Option<(f64, f64)> {
        let mut best: Option<(f64, f64)> = None;
        let mut start: Option<f64> = None;
        let mut prev_s = 0.0;
        for p in &self.points {
            let low = p.state.sideslip().abs() < threshold;
            match (low, start) {
                (true, None) => start = Some(p.s),
                (false, Some(a)) => {
                    if best.is_none_or(|(x, y)| prev_s - a > y - x) {
                        best = Some((a, prev_s));
                    }
                    start = None;
                }
                _ => {}
            }
            prev_s = p.s;
        }
        if let Some(a) = start {
            if best.is_none_or(|(x, y)| prev_s - a > y - x) {
                best = Some((a, prev_s));
            }
        }
        best
    }
}

/// Quasi-steady drift on one circle as a reference starting at the origin
/// with course 0.
pub fn plan_steady(
    model: &VehicleModel,
    cfg: &PlannerConfig,
    radius: f64,
    sideslip: f64,
    initial_temperature: f64,
    arc: f64,
) -> Result<Reference> {
    let solver = EquilibriumSolver::new(*model, cfg.bounds);
    let sweep = quasi_steady_sweep(&solver, radius, sideslip, initial_temperature, arc, cfg.node_spacing)?;
    Ok(Reference::from_sweep(&sweep, Pose::default()))
}

/// Pieces of a figure-8 plan.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureEight {
    pub reference: Reference,
    pub first_transition: DynamicTrajectory,
    pub second_transition: DynamicTrajectory,
    pub arcs: [QuasiSteadyTrajectory; 3],
}

/// Arc length needed on a circle of curvature `kappa` to turn the course
/// from `from` to `to` in the circle's direction of travel.
pub fn arc_to_course(from: f64, to: f64, kappa: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let turn = if kappa > 0.0 {
        (to - from).rem_euclid(tau)
    } else {
        (from - to).rem_euclid(tau)
    };
    turn / kappa.abs()
}

/// Steady arc, transition onto the mirrored circle, steady arc up to the
/// mirror image of the first transition's entry point, transition back, and
/// a final steady arc. Both circle centres lie on the line through the first
/// centre along the course at the first crossing.
#[allow(clippy::too_many_arguments)]
pub fn plan_figure_eight(
    model: &VehicleModel,
    cfg: &PlannerConfig,
    radius: f64,
    sideslip: f64,
    initial_temperature: f64,
    entry_arc: f64,
    exit_arc: f64,
) -> Result<FigureEight> {
    let solver = EquilibriumSolver::new(*model, cfg.bounds);
    let ds = cfg.node_spacing;
    // both centres lie on a line along the course at the first crossing
    let transition = |eq: &DriftEquilibrium, pose: Pose, axis: f64| {
        let problem = TransitionProblem::figure_eight(*model, eq, cfg)
            .at_pose(pose.x, pose.y, pose.course)
            .with_axis(axis);
        trajopt::solve_transition(&problem)
    };

    let arc1 = quasi_steady_sweep(&solver, radius, sideslip, initial_temperature, entry_arc, ds)?;
    let mut reference = Reference::from_sweep(&arc1, Pose::default());

    let entry = reference.end_pose();
    let t1 = transition(&last_equilibrium(&arc1)?, entry, entry.course)?;
    reference.append(&Reference::from_transition(&t1, model, reference.end_pose())?);

    let theta = t1.final_state()[idx::TEMPERATURE];
    let pose = reference.end_pose();
    let mirrored_entry = entry.course + std::f64::consts::PI;
    let arc2_len = arc_to_course(pose.course, mirrored_entry, -1.0 / radius);
    let arc2_len = (arc2_len / ds).round().max(1.0) * ds;
    let arc2 = quasi_steady_sweep(&solver, -radius, -sideslip, theta, arc2_len, ds)?;
    reference.append(&Reference::from_sweep(&arc2, pose));

    let t2 = transition(&last_equilibrium(&arc2)?, reference.end_pose(), entry.course)?;
    reference.append(&Reference::from_transition(&t2, model, reference.end_pose())?);

    let theta = t2.final_state()[idx::TEMPERATURE];
    let pose = reference.end_pose();
    let arc3 = quasi_steady_sweep(&solver, radius, sideslip, theta, exit_arc, ds)?;
    reference.append(&Reference::from_sweep(&arc3, pose));

    Ok(FigureEight {
        reference,
        first_transition: t1,
        second_transition: t2,
        arcs: [arc1, arc2, arc3],
    })
}

fn last_equilibrium(arc: &QuasiSteadyTrajectory) -> Result<DriftEquilibrium> {
    arc.nodes
        .last()
        .map(|n| n.equilibrium)
        .ok_or_else(|| Error::InvalidArgument("empty steady arc".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ActuatorBounds;
    use crate::model::FrictionMode;

    fn steady() -> Reference {
        let model = VehicleModel::default().with_friction(FrictionMode::FrozenTemperature);
        let solver = EquilibriumSolver::new(model, ActuatorBounds::default());
        let sweep = quasi_steady_sweep(&solver, 15.0, (-40f64).to_radians(), 30.0, 2.0, 0.25).unwrap();
        Reference::from_sweep(&sweep, Pose::default())
    }

    #[test]
    fn sweep_pose_lies_on_circle() {
        let r = steady();
        for p in &r.points {
            let d = (p.state.x).hypot(p.state.y - 15.0);
            assert!((d - 15.0).abs() < 1e-9);
            assert_eq!(p.state.arc_length, p.s);
        }
        let end = r.end_pose();
        assert!((end.course - 2.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn sample_hits_nodes_exactly() {
        let r = steady();
        assert_eq!(r.sample(0.5), r.points[2]);
        assert_eq!(r.sample(-1.0), r.points[0]);
        assert_eq!(r.sample(99.0), *r.points.last().unwrap());
        let mid = r.sample(0.6);
        assert!((mid.s - 0.6).abs() < 1e-15);
    }

    #[test]
    fn append_continues_arc_length() {
        let mut a = steady();
        let b = steady();
        a.append(&b);
        assert_eq!(a.len(), 2 * b.len() - 1);
        assert!((a.length() - 4.0).abs() < 1e-12);
        assert!(a.points.windows(2).all(|w| w[1].s > w[0].s));
    }

    #[test]
    fn course_arc_lengths() {
        use std::f64::consts::PI;
        assert!((arc_to_course(0.0, PI, 1.0 / 15.0) - 15.0 * PI).abs() < 1e-12);
        assert!((arc_to_course(0.0, -PI / 2.0, -1.0 / 15.0) - 7.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn figure_eight_closes_on_the_mirrored_circles() {
        let plan = plan_figure_eight(
            &VehicleModel::default(),
            &PlannerConfig::default(),
            15.0,
            (-40f64).to_radians(),
            30.0,
            20.0,
            20.0,
        )
        .unwrap();
        let r = &plan.reference;
        assert_eq!(r.transitions.len(), 2);
        for w in r.points.windows(2) {
            assert!(w[1].s > w[0].s && w[1].s - w[0].s < 1.0);
            assert!(w[1].time > w[0].time);
            let gap = (w[1].state.x - w[0].state.x).hypot(w[1].state.y - w[0].state.y);
            assert!(gap < 1.0, "pose jump {gap} at s = {}", w[0].s);
        }
        let beta = |s: f64| r.sample(s).state.sideslip().to_degrees();
        let (a1, b1) = r.transitions[0];
        let (a2, b2) = r.transitions[1];
        assert!((beta(a1) + 40.0).abs() < 1e-6 && (beta(b1) - 40.0).abs() < 1e-6);
        assert!((beta(a2) - 40.0).abs() < 1e-6 && (beta(b2) + 40.0).abs() < 1e-6);

        // every later circle centre lies on the axis through the first
        // centre along the entry course
        let entry = r.sample(a1);
        let axis = entry.state.heading + entry.state.sideslip();
        for (s, kappa) in [(0.5 * (b1 + a2), -1.0 / 15.0), (r.length(), 1.0 / 15.0)] {
            let p = r.points[r.points.partition_point(|p| p.s < s).min(r.len() - 1)];
            let chi = p.state.heading + p.state.sideslip();
            let (cx, cy) = (p.state.x - chi.sin() / kappa, p.state.y + chi.cos() / kappa);
            let offset = (cy - 15.0) * axis.cos() - cx * axis.sin();
            assert!(offset.abs() < 1e-6, "centre offset {offset} at s = {s}");
        }
    }
}
