//! Dense convex QP solved by a Mehrotra predictor-corrector interior-point
//! method:
//!
//! ```text
//! minimize    1/2 x'Hx + g'x
//! subject to  A x  = b
//!             G x <= h
//! ```
//!
//! Inequality rows are stored sparsely because most rows of the transition
//! problem touch only a handful of variables.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One sparse inequality row `sum(coef * x[idx]) <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub entries: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl SparseRow {
    pub fn dot(&self, x: &DVector<f64>) -> f64 {
        self.entries.iter().map(|(i, c)| c * x[*i]).sum()
    }

    /// Row from a dense vector, dropping exact zeros.
    pub fn from_dense(row: &[f64], rhs: f64) -> Self {
        Self {
            entries: row
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect(),
            rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub inequalities: Vec<SparseRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Equality multipliers.
    pub y: DVector<f64>,
    /// Inequality multipliers, non-negative.
    pub z: DVector<f64>,
    pub iterations: usize,
}

impl QpSolution {
    /// Infinity norm of `Hx + g + A'y + G'z`.
    pub fn stationarity(&self, qp: &QpProblem) -> f64 {
        let mut r = &qp.hessian * &self.x + &qp.gradient + qp.eq_matrix.transpose() * &self.y;
        for (row, z) in qp.inequalities.iter().zip(self.z.iter()) {
            for (i, c) in &row.entries {
                r[*i] += c * z;
            }
        }
        r.amax()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QpOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            max_iterations: 80,
            tolerance: 1e-10,
        }
    }
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(1.0, f64::min)
}

pub fn solve_qp(qp: &QpProblem, opts: &QpOptions) -> Result<QpSolution> {
    let n = qp.gradient.len();
    let m = qp.eq_rhs.len();
    let p = qp.inequalities.len();
    let rows = &qp.inequalities;

    let g_times = |x: &DVector<f64>| DVector::from_iterator(p, rows.iter().map(|r| r.dot(x)));
    let gt_times = |v: &DVector<f64>| {
        let mut out = DVector::zeros(n);
        for (row, vk) in rows.iter().zip(v.iter()) {
            for (i, c) in &row.entries {
                out[*i] += c * vk;
            }
        }
        out
    };
    let h_vec = DVector::from_iterator(p, rows.iter().map(|r| r.rhs));
    let (mut x, mut y, mut s, mut z) = initial_point(qp, &h_vec);
    let scale = 1.0 + qp.gradient.amax().max(h_vec.amax()).max(qp.eq_rhs.amax());
    // the dual residual is only as accurate as products with the Hessian
    let dual_scale = scale.max(1.0 + qp.hessian.amax());

    for iteration in 1..=opts.max_iterations {
        let r_d = &qp.hessian * &x + &qp.gradient + qp.eq_matrix.transpose() * &y + gt_times(&z);
        let r_e = &qp.eq_matrix * &x - &qp.eq_rhs;
        let r_i = g_times(&x) + &s - &h_vec;
        let mu = if p > 0 { s.dot(&z) / p as f64 } else { 0.0 };
        let res = r_d.amax().max(r_e.amax()).max(r_i.amax());
        let primal = r_e.amax().max(r_i.amax());
        if r_d.amax() < opts.tolerance * dual_scale && primal < opts.tolerance * scale && mu < opts.tolerance * 1e-2 * scale {
            return Ok(QpSolution { x, y, z, iterations: iteration });
        }

        // reduced KKT matrix [H + G' W G, A'; A, 0] with W = Z / S
        let w = z.component_div(&s);
        let mut kkt = DMatrix::zeros(n + m, n + m);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.hessian);
        for (row, wk) in rows.iter().zip(w.iter()) {
            for (i, ci) in &row.entries {
                for (j, cj) in &row.entries {
                    kkt[(*i, *j)] += wk * ci * cj;
                }
            }
        }
        kkt.view_mut((0, n), (n, m)).copy_from(&qp.eq_matrix.transpose());
        kkt.view_mut((n, 0), (m, n)).copy_from(&qp.eq_matrix);
        // tiny regularization keeps the factorization defined when H is
        // only semidefinite on the null space
        for i in 0..n {
            kkt[(i, i)] += 1e-12;
        }
        for i in n..n + m {
            kkt[(i, i)] -= 1e-12;
        }
        let lu = kkt.lu();

        let solve = |r_c: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> {
            // dz = (Z r_i - r_c + Z G dx) / S
            let t = (z.component_mul(&r_i) - r_c).component_div(&s);
            let mut rhs = DVector::zeros(n + m);
            rhs.rows_mut(0, n).copy_from(&(-&r_d - gt_times(&t)));
            rhs.rows_mut(n, m).copy_from(&(-&r_e));
            let sol = lu.solve(&rhs)?;
            let dx = sol.rows(0, n).into_owned();
            let dy = sol.rows(n, m).into_owned();
            let dz = &t + w.component_mul(&g_times(&dx));
            let ds = -&r_i - g_times(&dx);
            Some((dx, dy, dz, ds))
        };

        let fail = || Error::NoConvergence {
            iterations: iteration,
            residual: res,
        };
        // predictor
        let r_c = s.component_mul(&z);
        let (_, _, dz_a, ds_a) = solve(&r_c).ok_or_else(fail)?;
        let a_aff = max_step(&s, &ds_a).min(max_step(&z, &dz_a));
        let mu_aff = if p > 0 {
            (&s + &ds_a * a_aff).dot(&(&z + &dz_a * a_aff)) / p as f64
        } else {
            0.0
        };
        let sigma = if mu > 0.0 { (mu_aff / mu).powi(3) } else { 0.0 };
        // corrector
        let r_c = s.component_mul(&z) + ds_a.component_mul(&dz_a) - DVector::from_element(p, sigma * mu);
        let (dx, dy, dz, ds) = solve(&r_c).ok_or_else(fail)?;
        let alpha = (0.99 * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);
        x += &dx * alpha;
        y += &dy * alpha;
        z += &dz * alpha;
        s += &ds * alpha;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(fail());
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iterations,
        residual: f64::NAN,
    })
}

/// Starting point from the least-squares problem
/// `min 1/2 x'Hx + g'x + 1/2 |s|^2` subject to `Ax = b`, `Gx + s = h`,
/// whose multipliers are `z = -s`; both are then shifted to be positive.
fn initial_point(
    qp: &QpProblem,
    h_vec: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>) {
    let n = qp.gradient.len();
    let m = qp.eq_rhs.len();
    let p = h_vec.len();
    let rows = &qp.inequalities;
    let mut kkt = DMatrix::zeros(n + m, n + m);
    kkt.view_mut((0, 0), (n, n)).copy_from(&qp.hessian);
    let mut rhs = DVector::zeros(n + m);
    for (row, hk) in rows.iter().zip(h_vec.iter()) {
        for (i, ci) in &row.entries {
            rhs[*i] += ci * hk;
            for (j, cj) in &row.entries {
                kkt[(*i, *j)] += ci * cj;
            }
        }
    }
    for i in 0..n {
        kkt[(i, i)] += 1e-12;
        rhs[i] -= qp.gradient[i];
    }
    kkt.view_mut((0, n), (n, m)).copy_from(&qp.eq_matrix.transpose());
    kkt.view_mut((n, 0), (m, n)).copy_from(&qp.eq_matrix);
    for i in n..n + m {
        kkt[(i, i)] -= 1e-12;
    }
    rhs.rows_mut(n, m).copy_from(&qp.eq_rhs);
    let fallback = || {
        (
            DVector::zeros(n),
            DVector::zeros(m),
            DVector::from_element(p, 1.0),
            DVector::from_element(p, 1.0),
        )
    };
    let Some(sol) = kkt.lu().solve(&rhs) else {
        return fallback();
    };
    if sol.iter().any(|v| !v.is_finite()) {
        return fallback();
    }
    let x = sol.rows(0, n).into_owned();
    let y = sol.rows(n, m).into_owned();
    let s = DVector::from_iterator(p, rows.iter().zip(h_vec.iter()).map(|(r, hk)| hk - r.dot(&x)));
    let z = -&s;
    let shift = |v: DVector<f64>| {
        let lo = v.min();
        if p == 0 || lo > 0.0 {
            v
        } else {
            v.add_scalar(1.0 - lo)
        }
    };
    (x, y, shift(s), shift(z))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_constrained_quadratic() {
        // min (x-2)^2 + (y+1)^2, 0 <= x <= 1, y >= 0, x + y = 0.5
        let qp = QpProblem {
            hessian: DMatrix::from_diagonal_element(2, 2, 2.0),
            gradient: DVector::from_vec(vec![-4.0, 2.0]),
            eq_matrix: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            eq_rhs: DVector::from_vec(vec![0.5]),
            inequalities: vec![
                SparseRow { entries: vec![(0, 1.0)], rhs: 1.0 },
                SparseRow { entries: vec![(0, -1.0)], rhs: 0.0 },
                SparseRow { entries: vec![(1, -1.0)], rhs: 0.0 },
            ],
        };
        let sol = solve_qp(&qp, &QpOptions::default()).unwrap();
        assert!((sol.x[0] - 0.5).abs() < 1e-8, "{}", sol.x);
        assert!(sol.x[1].abs() < 1e-8);
        assert!(sol.stationarity(&qp) < 1e-8);
        assert!(sol.z.iter().all(|z| *z >= 0.0));
    }

    #[test]
    fn unconstrained_matches_linear_solve() {
        let h = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let g = DVector::from_vec(vec![1.0, 2.0]);
        let qp = QpProblem {
            hessian: h.clone(),
            gradient: g.clone(),
            eq_matrix: DMatrix::zeros(0, 2),
            eq_rhs: DVector::zeros(0),
            inequalities: vec![],
        };
        let sol = solve_qp(&qp, &QpOptions::default()).unwrap();
        let exact = h.lu().solve(&(-g)).unwrap();
        assert!((sol.x - exact).amax() < 1e-10);
    }
}
