//! Planning and control settings: actuator limits, slew and transition costs
//! for the transition optimizer, and LQR weights. All values are SI (rad,
//! N, N m, s) both in memory and in the planner config file.

use std::fmt::Write as _;
use std::path::Path;

use crate::control::LqrWeights;
use crate::error::{Error, Result};
use crate::params::KeyValues;

/// Box limits on steering, torque and their slew rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorBounds {
    pub steer_min: f64,
    pub steer_max: f64,
    pub steer_rate_min: f64,
    pub steer_rate_max: f64,
    pub torque_min: f64,
    pub torque_max: f64,
    pub torque_rate_min: f64,
    pub torque_rate_max: f64,
}

impl Default for ActuatorBounds {
    fn default() -> Self {
        Self {
            steer_min: (-43f64).to_radians(),
            steer_max: 43f64.to_radians(),
            steer_rate_min: (-90f64).to_radians(),
            steer_rate_max: 90f64.to_radians(),
            torque_min: -1000.0,
            torque_max: 3500.0,
            torque_rate_min: -4000.0,
            torque_rate_max: 2000.0,
        }
    }
}

impl ActuatorBounds {
    pub fn validate(&self) -> Result<()> {
        let pairs = [
            ("delta", self.steer_min, self.steer_max),
            ("ddelta", self.steer_rate_min, self.steer_rate_max),
            ("tau", self.torque_min, self.torque_max),
            ("dtau", self.torque_rate_min, self.torque_rate_max),
        ];
        for (name, lo, hi) in pairs {
            if !(lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "{name} bounds out of order: [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    /// Clamps steering and torque into range. Front braking is limited to
    /// non-positive values.
    pub fn clamp(&self, input: crate::ControlInput) -> crate::ControlInput {
        crate::ControlInput {
            steer: input.steer.clamp(self.steer_min, self.steer_max),
            front_brake: input.front_brake.min(0.0),
            torque: input.torque.clamp(self.torque_min, self.torque_max),
        }
    }

    pub fn admits(&self, input: &crate::ControlInput) -> bool {
        (self.steer_min..=self.steer_max).contains(&input.steer)
            && (self.torque_min..=self.torque_max).contains(&input.torque)
            && input.front_brake <= 0.0
    }
}

/// Everything the planners and the controller read from the planner config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerConfig {
    pub bounds: ActuatorBounds,
    /// Cost on steering slew rate, (rad/s)^-2.
    pub k_steer_rate: f64,
    /// Cost on front brake slew rate, (N/s)^-2. Braking is not used.
    pub k_brake_rate: f64,
    /// Cost on torque slew rate, (N m/s)^-2.
    pub k_torque_rate: f64,
    /// Cost on transition distance, m^-2.
    pub k_distance: f64,
    pub lqr: LqrWeights,
    /// Transition steps.
    pub steps: usize,
    pub step_min: f64,
    pub step_max: f64,
    /// Spacing of quasi-steady nodes and of gain-schedule knots, m.
    pub node_spacing: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            bounds: ActuatorBounds::default(),
            k_steer_rate: 1e4,
            k_brake_rate: 0.0,
            // 100 (kN m/s)^-2
            k_torque_rate: 100.0 / 1e6,
            k_distance: 200.0,
            lqr: LqrWeights::default(),
            steps: 100,
            step_min: 0.01,
            step_max: 0.1,
            node_spacing: 0.25,
        }
    }
}

pub const PLANNER_KEYS: [&str; 25] = [
    "k_ddelta", "k_dFxf", "k_dtau", "k_s", "delta_min", "delta_max", "ddelta_min",
    "ddelta_max", "tau_min", "tau_max", "dtau_min", "dtau_max", "k_Vx", "k_Vy", "k_r",
    "k_omega", "k_dpsi", "k_e", "k_delta", "k_Fxf", "k_tau", "N", "h_min", "h_max", "ds",
];

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        for (name, v) in [
            ("k_ddelta", self.k_steer_rate),
            ("k_dFxf", self.k_brake_rate),
            ("k_dtau", self.k_torque_rate),
            ("k_s", self.k_distance),
        ] {
            if !(v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be non-negative")));
            }
        }
        self.lqr.validate()?;
        if self.steps < 2 {
            return Err(Error::InvalidArgument("N must be at least 2".into()));
        }
        if !(0.0 < self.step_min && self.step_min < self.step_max) {
            return Err(Error::InvalidArgument("need 0 < h_min < h_max".into()));
        }
        if !(self.node_spacing > 0.0) {
            return Err(Error::InvalidArgument("ds must be positive".into()));
        }
        Ok(())
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text, &PLANNER_KEYS)?;
        let steps = kv.get("N")?;
        if steps.fract() != 0.0 || steps < 0.0 {
            return Err(Error::InvalidArgument(format!("N must be an integer, got {steps}")));
        }
        let cfg = Self {
            bounds: ActuatorBounds {
                steer_min: kv.get("delta_min")?,
                steer_max: kv.get("delta_max")?,
                steer_rate_min: kv.get("ddelta_min")?,
                steer_rate_max: kv.get("ddelta_max")?,
                torque_min: kv.get("tau_min")?,
                torque_max: kv.get("tau_max")?,
                torque_rate_min: kv.get("dtau_min")?,
                torque_rate_max: kv.get("dtau_max")?,
            },
            k_steer_rate: kv.get("k_ddelta")?,
            k_brake_rate: kv.get("k_dFxf")?,
            k_torque_rate: kv.get("k_dtau")?,
            k_distance: kv.get("k_s")?,
            lqr: LqrWeights {
                state: [
                    kv.get("k_Vx")?,
                    kv.get("k_Vy")?,
                    kv.get("k_r")?,
                    kv.get("k_omega")?,
                    kv.get("k_dpsi")?,
                    kv.get("k_e")?,
                ],
                input: [kv.get("k_delta")?, kv.get("k_Fxf")?, kv.get("k_tau")?],
            },
            steps: steps as usize,
            step_min: kv.get("h_min")?,
            step_max: kv.get("h_max")?,
            node_spacing: kv.get("ds")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_kv_str(&text)
    }

    pub fn to_kv_string(&self) -> String {
        let b = &self.bounds;
        let [k_vx, k_vy, k_r, k_w, k_dpsi, k_e] = self.lqr.state;
        let [k_d, k_f, k_t] = self.lqr.input;
        let rows = [
            ("k_ddelta", self.k_steer_rate),
            ("k_dFxf", self.k_brake_rate),
            ("k_dtau", self.k_torque_rate),
            ("k_s", self.k_distance),
            ("delta_min", b.steer_min),
            ("delta_max", b.steer_max),
            ("ddelta_min", b.steer_rate_min),
            ("ddelta_max", b.steer_rate_max),
            ("tau_min", b.torque_min),
            ("tau_max", b.torque_max),
            ("dtau_min", b.torque_rate_min),
            ("dtau_max", b.torque_rate_max),
            ("k_Vx", k_vx),
            ("k_Vy", k_vy),
            ("k_r", k_r),
            ("k_omega", k_w),
            ("k_dpsi", k_dpsi),
            ("k_e", k_e),
            ("k_delta", k_d),
            ("k_Fxf", k_f),
            ("k_tau", k_t),
            ("N", self.steps as f64),
            ("h_min", self.step_min),
            ("h_max", self.step_max),
            ("ds", self.node_spacing),
        ];
        let mut out = String::from("# planner and controller settings, SI units\n");
        for (k, v) in rows {
            let _ = writeln!(out, "{k} = {v:e}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trip() {
        let cfg = PlannerConfig::default();
        cfg.validate().unwrap();
        let back = PlannerConfig::from_kv_str(&cfg.to_kv_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn missing_key_named() {
        let text = PlannerConfig::default()
            .to_kv_string()
            .lines()
            .filter(|l| !l.starts_with("k_s "))
            .collect::<Vec<_>>()
            .join("\n");
        assert_eq!(
            PlannerConfig::from_kv_str(&text).unwrap_err(),
            Error::MissingKey("k_s".into())
        );
    }

    #[test]
    fn clamp_respects_bounds() {
        let b = ActuatorBounds::default();
        let u = b.clamp(crate::ControlInput::new(1.0, 50.0, 9000.0));
        assert_eq!(u.steer, b.steer_max);
        assert_eq!(u.front_brake, 0.0);
        assert_eq!(u.torque, 3500.0);
        assert!(b.admits(&u));
    }
}
