//! Classical fixed-step Runge-Kutta integration.

use nalgebra::SVector;

use crate::error::Result;
use crate::model::{ControlInput, StateRate, VehicleModel, VehicleState};

/// One RK4 step of `x' = f(x)` over `h`.
pub fn rk4<const N: usize, F>(f: F, x: &SVector<f64, N>, h: f64) -> Result<SVector<f64, N>>
where
    F: Fn(&SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    let k1 = f(x)?;
    let k2 = f(&(x + k1 * (h / 2.0)))?;
    let k3 = f(&(x + k2 * (h / 2.0)))?;
    let k4 = f(&(x + k3 * h))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Integrates the full vehicle state under a held input. `curvature` gives
/// the path curvature as a function of arc length.
pub fn vehicle_rk4<K>(
    model: &VehicleModel,
    state: &VehicleState,
    input: &ControlInput,
    curvature: K,
    h: f64,
) -> Result<VehicleState>
where
    K: Fn(f64) -> f64,
{
    let f = |x: &SVector<f64, 12>| -> Result<SVector<f64, 12>> {
        let s = VehicleState::from_vector(x);
        let d: StateRate = model.derivatives(&s, input, curvature(s.arc_length))?;
        Ok(d.to_vector())
    };
    Ok(VehicleState::from_vector(&rk4(f, &state.to_vector(), h)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourth_order_on_linear_decay() {
        let lambda = -1.3;
        let err = |n: usize| {
            let h = 1.0 / n as f64;
            let mut x = SVector::<f64, 1>::new(1.0);
            for _ in 0..n {
                x = rk4(|v| Ok(v * lambda), &x, h).unwrap();
            }
            (x[0] - lambda.exp()).abs()
        };
        let (e1, e2, e3) = (err(10), err(20), err(40));
        assert!((e1 / e2).log2() > 3.9);
        assert!((e2 / e3).log2() > 3.9);
    }

    #[test]
    fn exact_for_cubic_polynomials() {
        // x' = 3 t^2 embedded as a 2-state autonomous system
        let f = |v: &SVector<f64, 2>| Ok(SVector::<f64, 2>::new(3.0 * v[1] * v[1], 1.0));
        let x = rk4(f, &SVector::<f64, 2>::new(0.0, 0.0), 0.7).unwrap();
        assert!((x[0] - 0.343).abs() < 1e-15);
    }
}
