//! Damped Newton iteration for small square nonlinear systems, with a
//! central-difference Jacobian and backtracking on the residual norm.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    /// Converged when the infinity norm of the update falls below this...
    pub step_tolerance: f64,
    /// ...and the residual 2-norm is below this.
    pub residual_tolerance: f64,
    /// Relative finite-difference step, scaled by `max(1, |x_i|)`.
    pub fd_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            step_tolerance: 1e-10,
            residual_tolerance: 1e-8,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonSolution {
    pub x: DVector<f64>,
    pub residual: DVector<f64>,
    pub iterations: usize,
}

impl NewtonSolution {
    pub fn residual_norm(&self) -> f64 {
        self.residual.norm()
    }
}

/// Central-difference Jacobian of `f` at `x`.
pub fn jacobian<F>(f: &F, x: &DVector<f64>, rel_step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = x.len();
    let mut columns = Vec::with_capacity(n);
    for i in 0..n {
        let h = rel_step * x[i].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        columns.push((f(&xp)? - f(&xm)?) / (2.0 * h));
    }
    Ok(DMatrix::from_columns(&columns))
}

/// Solves `f(x) = 0` from `x0`. Trial points where `f` errors are treated as
/// infinitely bad and the step is halved.
pub fn solve<F>(f: F, x0: DVector<f64>, opts: &NewtonOptions) -> Result<NewtonSolution>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut x = x0;
    let mut fx = f(&x)?;
    let mut norm = fx.norm();
    for iteration in 1..=opts.max_iterations {
        let jac = jacobian(&f, &x, opts.fd_step)?;
        let dx = match jac.lu().solve(&(-&fx)) {
            Some(dx) if dx.iter().all(|v| v.is_finite()) => dx,
            _ => {
                return Err(Error::NoConvergence {
                    iterations: iteration,
                    residual: norm,
                })
            }
        };

        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-8 {
            let trial = &x + &dx * t;
            if let Ok(ft) = f(&trial) {
                let nt = ft.norm();
                if nt.is_finite() && (nt <= (1.0 - 1e-4 * t) * norm || nt < opts.residual_tolerance) {
                    accepted = Some((trial, ft, nt));
                    break;
                }
            }
            t *= 0.5;
        }
        let step = dx.amax() * t;
        match accepted {
            Some((xn, fxn, nn)) => {
                x = xn;
                fx = fxn;
                norm = nn;
            }
            None => {
                // No decrease along the Newton direction; at a root to
                // working precision this is expected.
                if norm < opts.residual_tolerance {
                    return Ok(NewtonSolution {
                        x,
                        residual: fx,
                        iterations: iteration,
                    });
                }
                return Err(Error::NoConvergence {
                    iterations: iteration,
                    residual: norm,
                });
            }
        }
        if norm < opts.residual_tolerance && step < opts.step_tolerance {
            return Ok(NewtonSolution {
                x,
                residual: fx,
                iterations: iteration,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iterations,
        residual: norm,
    })
}
