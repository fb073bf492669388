//! Physical parameter sets and the flat `key = value` file format they load from.
//!
//! Defaults reproduce the vehicle and tire table of the Takumi platform (a
//! modified A90 Supra). Thermal quantities are stored in SI (J/K, W/K); the
//! file format takes them in kJ/K and kW/K like the table does.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Rigid-body and drivetrain constants of the single-track model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// Yaw inertia, kg m^2.
    pub yaw_inertia: f64,
    /// CG to front axle, m.
    pub a: f64,
    /// CG to rear axle, m.
    pub b: f64,
    /// CG height, m.
    pub cg_height: f64,
    /// First-order weight-transfer gain, 1/s.
    pub weight_transfer_gain: f64,
    /// Rear drivetrain inertia, kg m^2.
    pub drivetrain_inertia: f64,
    /// Effective rear tire radius, m.
    pub wheel_radius: f64,
    pub gravity: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1496.0,
            yaw_inertia: 2241.0,
            a: 1.22,
            b: 1.23,
            cg_height: 0.45,
            weight_transfer_gain: 5.0,
            drivetrain_inertia: 15.0,
            wheel_radius: 0.32,
            gravity: 9.81,
        }
    }
}

impl VehicleParams {
    pub fn wheelbase(&self) -> f64 {
        self.a + self.b
    }

    pub fn weight(&self) -> f64 {
        self.mass * self.gravity
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mass", self.mass),
            ("Iz", self.yaw_inertia),
            ("a", self.a),
            ("b", self.b),
            ("h_cg", self.cg_height),
            ("Kz", self.weight_transfer_gain),
            ("J", self.drivetrain_inertia),
            ("Re", self.wheel_radius),
            ("g", self.gravity),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "vehicle parameter {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Front Fiala and rear combined-slip stiffnesses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TireParams {
    /// Offset of the front cornering stiffness, N/rad.
    pub c_alpha0: f64,
    /// Load sensitivity of the front cornering stiffness, 1/rad.
    pub c_alpha1: f64,
    /// Rear longitudinal stiffness.
    pub cx: f64,
    /// Rear lateral stiffness, N/rad.
    pub cy: f64,
    /// Front friction coefficient.
    pub mu_f: f64,
}

impl Default for TireParams {
    fn default() -> Self {
        Self {
            c_alpha0: -18215.0,
            c_alpha1: 34.50,
            cx: 101e3,
            cy: 103e3,
            mu_f: 1.3,
        }
    }
}

impl TireParams {
    pub fn validate(&self, vehicle: &VehicleParams) -> Result<()> {
        if !(self.cx > 0.0 && self.cy > 0.0 && self.mu_f > 0.0) {
            return Err(Error::InvalidArgument(
                "Cx, Cy and mu_f must be positive".into(),
            ));
        }
        // C_alpha0 < 0 in the default map, so positivity is only required at
        // the static front load; lighter loads fail at evaluation time.
        let static_front = vehicle.b * vehicle.weight() / vehicle.wheelbase();
        let c = self.c_alpha1 * static_front + self.c_alpha0;
        if c <= 0.0 {
            return Err(Error::NonPositiveStiffness(c));
        }
        Ok(())
    }
}

/// Friction map and lumped tread thermal model of the rear tire.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalParams {
    pub mu_r0: f64,
    /// 1/degC
    pub mu_r1: f64,
    /// J/K
    pub heat_capacity: f64,
    /// W/K
    pub conductance: f64,
    /// Fraction of slip power entering the tire.
    pub partition: f64,
    pub rolling_resistance: f64,
    /// Effective sink temperature (air and track surface), degC.
    pub ambient: f64,
}

impl Default for ThermalParams {
    fn default() -> Self {
        Self {
            mu_r0: 1.070,
            mu_r1: -3.967e-3,
            heat_capacity: 4.905e3,
            conductance: 0.762e3,
            partition: 0.5,
            rolling_resistance: 0.01,
            ambient: 50.0,
        }
    }
}

/// Temperatures over which the friction map must stay positive, degC.
pub const OPERATING_RANGE: (f64, f64) = (0.0, 120.0);

impl ThermalParams {
    pub fn time_constant(&self) -> f64 {
        self.heat_capacity / self.conductance
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.heat_capacity > 0.0 && self.conductance > 0.0) {
            return Err(Error::InvalidArgument(
                "C_tire and KA_tire must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.partition) {
            return Err(Error::InvalidArgument(format!(
                "alpha_tire must lie in [0, 1], got {}",
                self.partition
            )));
        }
        if self.rolling_resistance < 0.0 {
            return Err(Error::InvalidArgument("eps_tire must be >= 0".into()));
        }
        for theta in [OPERATING_RANGE.0, OPERATING_RANGE.1] {
            let mu = self.mu_r1 * theta + self.mu_r0;
            if mu <= 0.0 {
                return Err(Error::NonPhysicalFriction { mu, theta });
            }
        }
        Ok(())
    }
}

/// Everything the single-track model needs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParamSet {
    pub vehicle: VehicleParams,
    pub tire: TireParams,
    pub thermal: ThermalParams,
}

const PARAM_KEYS: [&str; 20] = [
    "mass",
    "Iz",
    "a",
    "b",
    "h_cg",
    "Kz",
    "J",
    "Re",
    "C_alpha0",
    "C_alpha1",
    "Cx",
    "Cy",
    "mu_r0",
    "mu_r1",
    "C_tire",
    "KA_tire",
    "alpha_tire",
    "eps_tire",
    "mu_f",
    "theta_out",
];

impl ParamSet {
    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        self.tire.validate(&self.vehicle)?;
        self.thermal.validate()
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text, &PARAM_KEYS)?;
        let vehicle = VehicleParams {
            mass: kv.get("mass")?,
            yaw_inertia: kv.get("Iz")?,
            a: kv.get("a")?,
            b: kv.get("b")?,
            cg_height: kv.get("h_cg")?,
            weight_transfer_gain: kv.get("Kz")?,
            drivetrain_inertia: kv.get("J")?,
            wheel_radius: kv.get("Re")?,
            gravity: VehicleParams::default().gravity,
        };
        let tire = TireParams {
            c_alpha0: kv.get("C_alpha0")?,
            c_alpha1: kv.get("C_alpha1")?,
            cx: kv.get("Cx")?,
            cy: kv.get("Cy")?,
            mu_f: kv.get("mu_f")?,
        };
        let thermal = ThermalParams {
            mu_r0: kv.get("mu_r0")?,
            mu_r1: kv.get("mu_r1")?,
            heat_capacity: kv.get("C_tire")? * 1e3,
            conductance: kv.get("KA_tire")? * 1e3,
            partition: kv.get("alpha_tire")?,
            rolling_resistance: kv.get("eps_tire")?,
            ambient: kv.get("theta_out")?,
        };
        let set = ParamSet {
            vehicle,
            tire,
            thermal,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_kv_str(&text)
    }

    pub fn to_kv_string(&self) -> String {
        let v = &self.vehicle;
        let t = &self.tire;
        let th = &self.thermal;
        let mut out = String::from("# vehicle, tire and thermal parameters\n");
        let rows = [
            ("mass", v.mass),
            ("Iz", v.yaw_inertia),
            ("a", v.a),
            ("b", v.b),
            ("h_cg", v.cg_height),
            ("Kz", v.weight_transfer_gain),
            ("J", v.drivetrain_inertia),
            ("Re", v.wheel_radius),
            ("C_alpha0", t.c_alpha0),
            ("C_alpha1", t.c_alpha1),
            ("Cx", t.cx),
            ("Cy", t.cy),
            ("mu_f", t.mu_f),
            ("mu_r0", th.mu_r0),
            ("mu_r1", th.mu_r1),
            ("C_tire", th.heat_capacity / 1e3),
            ("KA_tire", th.conductance / 1e3),
            ("alpha_tire", th.partition),
            ("eps_tire", th.rolling_resistance),
            ("theta_out", th.ambient),
        ];
        for (k, val) in rows {
            let _ = writeln!(out, "{k} = {val:e}");
        }
        out
    }
}

/// Parsed `key = value` lines. Blank lines and `#` comments are skipped.
#[derive(Debug, Clone)]
pub(crate) struct KeyValues {
    values: BTreeMap<String, f64>,
}

impl KeyValues {
    pub(crate) fn parse(text: &str, allowed: &[&str]) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            if !allowed.contains(&key) {
                return Err(Error::Config {
                    line: line_no,
                    msg: format!("unknown key `{key}`"),
                });
            }
            let value: f64 = value.trim().parse().map_err(|_| Error::Config {
                line: line_no,
                msg: format!("`{}` is not a number", value.trim()),
            })?;
            if values.insert(key.to_string(), value).is_some() {
                return Err(Error::Config {
                    line: line_no,
                    msg: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(Self { values })
    }

    pub(crate) fn get_opt(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }

    pub(crate) fn get(&self, key: &str) -> Result<f64> {
        self.values
            .get(key)
            .copied()
            .ok_or_else(|| Error::MissingKey(key.to_string()))
    }
}
