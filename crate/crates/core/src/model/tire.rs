//! Vertical loads and tire forces: Fiala brush model on the front axle,
//! combined-slip brush model on the driven rear axle.

use crate::error::{Error, Result};
use crate::params::{TireParams, VehicleParams};

use super::VELOCITY_FLOOR;

/// Front and rear axle loads for a given longitudinal weight transfer.
pub fn vertical_loads(params: &VehicleParams, weight_transfer: f64) -> Result<(f64, f64)> {
    let l = params.wheelbase();
    let w = params.weight();
    let front = params.b * w / l - weight_transfer;
    let rear = params.a * w / l + weight_transfer;
    if front <= 0.0 || rear <= 0.0 {
        return Err(Error::DegenerateLoad { front, rear });
    }
    Ok((front, rear))
}

/// First-order lag of the longitudinal weight transfer towards its
/// quasi-static value.
pub fn weight_transfer_derivative(
    params: &VehicleParams,
    weight_transfer: f64,
    fxr: f64,
    fyf: f64,
    steer: f64,
) -> f64 {
    let target = params.cg_height / params.wheelbase() * (fxr - fyf * steer.sin());
    -params.weight_transfer_gain * (weight_transfer - target)
}

fn check_vx(vx: f64) -> Result<()> {
    if vx < VELOCITY_FLOOR || !vx.is_finite() {
        return Err(Error::Singularity {
            vx,
            floor: VELOCITY_FLOOR,
        });
    }
    Ok(())
}

pub fn front_slip_angle(vx: f64, vy: f64, yaw_rate: f64, steer: f64, a: f64) -> Result<f64> {
    check_vx(vx)?;
    Ok(((vy + a * yaw_rate) / vx).atan() - steer)
}

pub fn front_cornering_stiffness(params: &TireParams, front_load: f64) -> Result<f64> {
    let c = params.c_alpha1 * front_load + params.c_alpha0;
    if c <= 0.0 {
        return Err(Error::NonPositiveStiffness(c));
    }
    Ok(c)
}

/// Slip angle beyond which the whole contact patch slides.
pub fn sliding_angle(stiffness: f64, max_force: f64) -> f64 {
    (3.0 * max_force / stiffness).atan()
}

/// Fiala brush model for pure lateral slip. Odd in `alpha`, continuous at the
/// sliding angle, slope `-stiffness` at the origin.
pub fn fiala_lateral_force(stiffness: f64, max_force: f64, alpha: f64) -> f64 {
    if alpha.abs() > sliding_angle(stiffness, max_force) {
        return -max_force * alpha.signum();
    }
    let t = alpha.tan();
    -stiffness * t + stiffness * stiffness / (3.0 * max_force) * t.abs() * t
        - stiffness.powi(3) / (27.0 * max_force * max_force) * t.powi(3)
}

/// Rear slip angle and the arctangent-wrapped slip ratio.
pub fn rear_slip_quantities(
    vx: f64,
    vy: f64,
    yaw_rate: f64,
    wheel_speed: f64,
    params: &VehicleParams,
) -> Result<(f64, f64)> {
    check_vx(vx)?;
    let alpha = ((vy - params.b * yaw_rate) / vx).atan();
    let kappa = ((params.wheel_radius * wheel_speed - vx) / vx).atan();
    if kappa <= -1.0 {
        return Err(Error::DegenerateSlip(kappa));
    }
    Ok((alpha, kappa))
}

/// Rear combined-slip force components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombinedForces {
    pub fx: f64,
    pub fy: f64,
    /// Combined slip magnitude, N.
    pub magnitude: f64,
    /// Resultant force from the brush polynomial, N.
    pub total: f64,
}

/// Total brush force for a combined slip magnitude; saturates at
/// `mu * load` once `magnitude > 3 mu load`.
pub fn combined_total_force(magnitude: f64, mu: f64, load: f64) -> f64 {
    let limit = mu * load;
    if magnitude > 3.0 * limit {
        limit
    } else {
        magnitude - magnitude * magnitude / (3.0 * limit)
            + magnitude.powi(3) / (27.0 * limit * limit)
    }
}

pub fn rear_combined_forces(
    params: &TireParams,
    mu: f64,
    load: f64,
    alpha: f64,
    kappa: f64,
) -> Result<CombinedForces> {
    if kappa <= -1.0 {
        return Err(Error::DegenerateSlip(kappa));
    }
    if !(load > 0.0) {
        return Err(Error::DegenerateLoad {
            front: f64::NAN,
            rear: load,
        });
    }
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument(format!("rear friction {mu} must be positive")));
    }
    let sx = params.cx * kappa / (kappa + 1.0);
    let sy = params.cy * alpha.tan() / (kappa + 1.0);
    let magnitude = sx.hypot(sy);
    if magnitude == 0.0 {
        return Ok(CombinedForces {
            fx: 0.0,
            fy: 0.0,
            magnitude: 0.0,
            total: 0.0,
        });
    }
    let total = combined_total_force(magnitude, mu, load);
    let scale = total / magnitude;
    Ok(CombinedForces {
        fx: scale * sx,
        // lateral force opposes lateral slip, as on the front axle
        fy: -scale * sy,
        magnitude,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> (VehicleParams, TireParams) {
        (VehicleParams::default(), TireParams::default())
    }

    #[test]
    fn static_loads() {
        let (v, _) = table();
        let (f, r) = vertical_loads(&v, 0.0).unwrap();
        // b m g / L and a m g / L with g = 9.81
        assert!((f - 1.23 * 1496.0 * 9.81 / 2.45).abs() < 1e-9);
        assert!((f - 7367.83).abs() < 0.01);
        assert!((r - 7307.93).abs() < 0.01);
    }

    #[test]
    fn weight_transfer_moves_load_one_for_one() {
        let (v, _) = table();
        let (f0, r0) = vertical_loads(&v, 0.0).unwrap();
        let (f1, r1) = vertical_loads(&v, 1000.0).unwrap();
        assert!((r1 - r0 - 1000.0).abs() < 1e-9);
        assert!((f0 - f1 - 1000.0).abs() < 1e-9);
        assert!((f1 + r1 - v.weight()).abs() < 1e-9);
    }

    #[test]
    fn tipping_load_is_degenerate() {
        let (v, _) = table();
        assert!(matches!(
            vertical_loads(&v, 8000.0),
            Err(Error::DegenerateLoad { .. })
        ));
    }

    #[test]
    fn weight_transfer_rate() {
        let (v, _) = table();
        let rate = weight_transfer_derivative(&v, 0.0, 5000.0, 0.0, 0.0);
        assert!((rate - 5.0 * 0.45 / 2.45 * 5000.0).abs() < 1e-9);
        assert!((rate - 4591.8).abs() < 0.1);
        let fixed = 0.45 / 2.45 * (5000.0 - 2000.0 * 0.1f64.sin());
        assert_eq!(weight_transfer_derivative(&v, fixed, 5000.0, 2000.0, 0.1), 0.0);
    }

    #[test]
    fn front_slip_cases() {
        assert_eq!(front_slip_angle(10.0, 0.0, 0.0, 0.0, 1.22).unwrap(), 0.0);
        let a = front_slip_angle(10.0, -1.22 * 0.4, 0.4, 0.2, 1.22).unwrap();
        assert!((a + 0.2).abs() < 1e-15);
        // atan(-4.39 / 8) + 0.3
        let a = front_slip_angle(8.0, -5.0, 0.5, -0.3, 1.22).unwrap();
        assert!((a - (-0.201_883_011_5)).abs() < 1e-9, "{a}");
        assert!(matches!(
            front_slip_angle(0.4, 0.0, 0.0, 0.0, 1.22),
            Err(Error::Singularity { .. })
        ));
    }

    #[test]
    fn cornering_stiffness() {
        let (_, t) = table();
        let c = front_cornering_stiffness(&t, 7367.0).unwrap();
        assert!((c - (34.5 * 7367.0 - 18215.0)).abs() < 1e-9);
        assert!((c - 235_946.5).abs() < 1e-6);
        let boundary = 18215.0 / 34.5;
        assert!(front_cornering_stiffness(&t, boundary * (1.0 - 1e-9)).is_err());
        assert!(front_cornering_stiffness(&t, boundary * (1.0 + 1e-9)).is_ok());
        let c1 = front_cornering_stiffness(&t, 3000.0).unwrap();
        let c2 = front_cornering_stiffness(&t, 6000.0).unwrap();
        assert!((c2 - c1 - 34.5 * 3000.0).abs() < 1e-9);
    }

    #[test]
    fn fiala_shape() {
        let (c, fmax) = (150_000.0, 6000.0);
        assert_eq!(fiala_lateral_force(c, fmax, 0.0), 0.0);
        let slide = sliding_angle(c, fmax);
        let at = fiala_lateral_force(c, fmax, slide);
        assert!((at + fmax).abs() <= 1e-9 * fmax);
        assert!((fiala_lateral_force(c, fmax, -slide) - fmax).abs() <= 1e-9 * fmax);
        assert_eq!(fiala_lateral_force(c, fmax, 0.5), -fmax);
        let h = 1e-7;
        let slope = (fiala_lateral_force(c, fmax, h) - fiala_lateral_force(c, fmax, -h)) / (2.0 * h);
        assert!((slope + c).abs() <= 1e-6 * c, "{slope}");
    }

    #[test]
    fn rear_slip_cases() {
        let (v, _) = table();
        let (a, k) = rear_slip_quantities(10.0, 1.23 * 0.3, 0.3, 10.0 / 0.32, &v).unwrap();
        assert!(a.abs() < 1e-15 && k.abs() < 1e-15);
        let (a, k) = rear_slip_quantities(10.0, -6.0, 0.8, 14.0 / 0.32, &v).unwrap();
        assert!((a - (-0.6984f64).atan()).abs() < 1e-12);
        assert!((a + 0.609_651).abs() < 1e-5);
        assert!((k - 0.4f64.atan()).abs() < 1e-12);
        let (_, k) = rear_slip_quantities(10.0, 0.0, 0.0, 0.0, &v).unwrap();
        assert!((k + std::f64::consts::FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn combined_no_slip() {
        let (_, t) = table();
        let f = rear_combined_forces(&t, 0.95, 7308.0, 0.0, 0.0).unwrap();
        assert_eq!((f.fx, f.fy, f.magnitude), (0.0, 0.0, 0.0));
    }

    #[test]
    fn combined_full_sliding_sits_on_circle() {
        let (_, t) = table();
        let f = rear_combined_forces(&t, 0.9, 7000.0, -0.7, 1.0).unwrap();
        assert!(f.magnitude > 3.0 * 0.9 * 7000.0);
        assert!((f.fx.hypot(f.fy) - 0.9 * 7000.0).abs() < 1e-9);
        assert!(f.fx > 0.0 && f.fy > 0.0);
    }

    #[test]
    fn combined_total_is_continuous_at_saturation() {
        let limit = 0.9 * 7000.0;
        let m = 3.0 * limit;
        let below = combined_total_force(m * (1.0 - 1e-12), 0.9, 7000.0);
        let above = combined_total_force(m * (1.0 + 1e-12), 0.9, 7000.0);
        assert!((below - above).abs() < 1e-6);
    }

    #[test]
    fn degenerate_slip_ratio() {
        let (_, t) = table();
        assert!(matches!(
            rear_combined_forces(&t, 0.9, 7000.0, 0.1, -1.0),
            Err(Error::DegenerateSlip(_))
        ));
    }
}
