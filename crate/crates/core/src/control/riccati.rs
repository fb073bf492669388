//! Continuous-time algebraic Riccati equation
//! `A'P + PA - P B R^-1 B' P + Q = 0`.
//!
//! A matrix-sign iteration on the Hamiltonian gives the stabilizing solution;
//! Newton-Kleinman steps then polish it until the residual stops improving.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub p: DMatrix<f64>,
    /// `R^-1 B' P`
    pub k: DMatrix<f64>,
    /// Frobenius norm of the Riccati residual.
    pub residual: f64,
}

pub fn riccati_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<f64> {
    let r_inv = invert(r, "R")?;
    let res = a.transpose() * p + p * a - p * b * &r_inv * b.transpose() * p + q;
    Ok(res.norm())
}

fn invert(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument(format!("{what} is singular")))
}

fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

/// Stabilizing solution of the CARE.
pub fn solve_care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<RiccatiSolution> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols()) {
        return Err(Error::InvalidArgument("Riccati dimensions mismatch".into()));
    }
    let r_inv = invert(r, "R")?;
    let g = b * &r_inv * b.transpose();

    // Hamiltonian and its matrix sign.
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let mut z = h;
    let mut converged = false;
    for _ in 0..100 {
        let lu = z.clone().lu();
        let det = lu.determinant();
        let inv = lu.try_inverse().ok_or_else(|| {
            Error::NotStabilizable("Hamiltonian has eigenvalues on the imaginary axis".into())
        })?;
        let c = if det.is_finite() && det != 0.0 {
            det.abs().powf(-1.0 / (2 * n) as f64)
        } else {
            1.0
        };
        let next = (&z * c + inv / c) * 0.5;
        let change = (&next - &z).norm() / next.norm();
        z = next;
        if change < 1e-13 {
            converged = true;
            break;
        }
    }
    if !converged || z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotStabilizable("matrix sign iteration did not converge".into()));
    }

    // [W12; W22 + I] P = -[W11 + I; W21]
    let w11 = z.view((0, 0), (n, n));
    let w12 = z.view((0, n), (n, n));
    let w21 = z.view((n, 0), (n, n));
    let w22 = z.view((n, n), (n, n));
    let eye = DMatrix::<f64>::identity(n, n);
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w22 + &eye));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w11 + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w21));
    let svd = lhs.svd(true, true);
    let mut p = svd
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::NotStabilizable(e.to_string()))?;
    p = symmetrize(&p);

    let mut residual = riccati_residual(a, b, q, r, &p)?;
    for _ in 0..20 {
        let k = &r_inv * b.transpose() * &p;
        let ac = a - b * &k;
        let rhs = -(q + k.transpose() * r * &k);
        let Some(candidate) = solve_lyapunov(&ac, &rhs) else { break };
        let candidate = symmetrize(&candidate);
        let cand_res = riccati_residual(a, b, q, r, &candidate)?;
        if !(cand_res < residual) {
            break;
        }
        let gained = residual / cand_res;
        p = candidate;
        residual = cand_res;
        if gained < 1.5 {
            break;
        }
    }

    let k = &r_inv * b.transpose() * &p;
    let closed = a - b * &k;
    if spectral_abscissa(&closed) >= 0.0 {
        return Err(Error::NotStabilizable(
            "closed loop from the Riccati solution is not stable".into(),
        ));
    }
    Ok(RiccatiSolution { p, k, residual })
}

/// Solves `A'X + XA = C` through its Kronecker form.
pub fn solve_lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let big = eye.kronecker(&at) + at.kronecker(&eye);
    let vec_c = DMatrix::from_column_slice(n * n, 1, c.as_slice());
    let x = big.lu().solve(&vec_c)?;
    Some(DMatrix::from_column_slice(n, n, x.as_slice()))
}

/// Largest real part among the eigenvalues of `m`.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}
