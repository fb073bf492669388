//! Thermally-aware drifting toolkit.
//!
//! The crate models a rear-driven car in a sustained drift, including the
//! rear tread temperature and its effect on friction, and builds everything
//! needed to plan and track drifting maneuvers on top of that model:
//!
//! - [`model`]: single-track dynamics, brush tire forces, tire thermodynamics.
//! - [`equilibrium`]: drift equilibria and quasi-steady sweeps as the tire heats.
//! - [`trajopt`]: RK4-discretized optimal transition between two drift circles.
//! - [`control`]: linearization, LQR and arc-length gain schedules.
//! - [`sim`]: closed-loop simulation, pole traces and scenario comparison.
//! - [`reference`]: arc-length references, including figure-8 stitching.
//! - [`io`]: CSV files for references, gains, simulation series and poles.
//! - [`pipeline`]: plan, save, reload and compare, as used by the command line.

// `!(x > 0.0)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod control;
pub mod equilibrium;
pub mod error;
pub mod integrate;
pub mod io;
pub mod model;
pub mod newton;
pub mod params;
pub mod pipeline;
pub mod reference;
pub mod sim;
pub mod trajopt;

pub use error::{Error, Result};
pub use model::{ControlInput, FrictionMode, TireForces, VehicleModel, VehicleState};
pub use params::{ParamSet, ThermalParams, TireParams, VehicleParams};
