//! Levenberg–Marquardt nonlinear least squares with Marquardt diagonal
//! scaling and Nielsen's damping update.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub trait Problem {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn residuals(&self, p: &[f64], out: &mut [f64]);

    /// Jacobian of the residuals. Defaults to central differences.
    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        central_difference(self, p, jac);
    }
}

/// Step used for differencing parameter `v`.
pub fn fd_step(v: f64) -> f64 {
    6e-6 * v.abs().max(1.0)
}

pub fn central_difference<P: Problem + ?Sized>(problem: &P, p: &[f64], jac: &mut DMatrix<f64>) {
    let m = problem.n_residuals();
    let mut plus = vec![0.0; m];
    let mut minus = vec![0.0; m];
    let mut q = p.to_vec();
    for j in 0..p.len() {
        let h = fd_step(p[j]);
        q[j] = p[j] + h;
        problem.residuals(&q, &mut plus);
        q[j] = p[j] - h;
        problem.residuals(&q, &mut minus);
        q[j] = p[j];
        for i in 0..m {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative reduction of the cost below which an accepted step stops.
    pub ftol: f64,
    /// Relative step length below which the iteration stops.
    pub xtol: f64,
    /// Largest cosine between the residual and any Jacobian column.
    pub gtol: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            ftol: 1e-12,
            xtol: 1e-10,
            gtol: 1e-8,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    CostReduction,
    StepSize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LmReport {
    pub params: Vec<f64>,
    /// Half the sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Scaled gradient (largest residual/column cosine) at the solution.
    pub gradient: f64,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

fn half_sq(r: &[f64]) -> f64 {
    let s: f64 = r.iter().map(|v| v * v).sum();
    if s.is_finite() {
        0.5 * s
    } else {
        f64::INFINITY
    }
}

fn scaled_gradient(jac: &DMatrix<f64>, g: &DVector<f64>, rnorm: f64) -> f64 {
    if rnorm == 0.0 {
        return 0.0;
    }
    let mut worst: f64 = 0.0;
    for j in 0..jac.ncols() {
        let cn = jac.column(j).norm();
        if cn > 0.0 {
            worst = worst.max(g[j].abs() / (cn * rnorm));
        }
    }
    worst
}

pub fn minimize<P: Problem + ?Sized>(
    problem: &P,
    p0: &[f64],
    opts: &LmOptions,
) -> Result<LmReport> {
    let n = problem.n_params();
    let m = problem.n_residuals();
    if p0.len() != n {
        return Err(Error::arg(format!(
            "expected {n} parameters, got {}",
            p0.len()
        )));
    }
    let mut p = p0.to_vec();
    let mut r = vec![0.0; m];
    problem.residuals(&p, &mut r);
    let mut cost = half_sq(&r);
    if !cost.is_finite() {
        return Err(Error::Numerical(
            "residuals not finite at the starting point".into(),
        ));
    }
    let mut history = vec![cost];
    let mut jac = DMatrix::zeros(m, n);
    let mut lambda = -1.0;
    let mut nu = 2.0;
    let mut r_new = vec![0.0; m];

    for iter in 0..opts.max_iterations {
        problem.jacobian(&p, &mut jac);
        let rv = DVector::from_column_slice(&r);
        let a = jac.tr_mul(&jac);
        let g = jac.tr_mul(&rv);
        let gradient = scaled_gradient(&jac, &g, rv.norm());
        let done = |termination, cost, p: Vec<f64>, history| {
            Ok(LmReport {
                params: p,
                cost,
                iterations: iter,
                termination,
                gradient,
                cost_history: history,
            })
        };
        if gradient <= opts.gtol {
            return done(Termination::Gradient, cost, p, history);
        }
        let diag: Vec<f64> = (0..n).map(|j| a[(j, j)]).collect();
        let dmax = diag
            .iter()
            .copied()
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        if lambda < 0.0 {
            lambda = opts.initial_damping;
        }

        let mut accepted = false;
        for _ in 0..60 {
            let mut mtx = a.clone();
            for j in 0..n {
                mtx[(j, j)] += lambda * diag[j].max(1e-12 * dmax);
            }
            let Some(ch) = mtx.cholesky() else {
                lambda *= nu;
                nu *= 2.0;
                continue;
            };
            let delta = ch.solve(&(-&g));
            let p_new: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            problem.residuals(&p_new, &mut r_new);
            let cost_new = half_sq(&r_new);
            let predicted = -(g.dot(&delta) + 0.5 * delta.dot(&(&a * &delta)));
            let actual = cost - cost_new;
            let rho = if predicted > 0.0 {
                actual / predicted
            } else {
                -1.0
            };
            let pnorm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rho > 1e-4 && cost_new < cost {
                let rel = actual / cost;
                p = p_new;
                std::mem::swap(&mut r, &mut r_new);
                cost = cost_new;
                history.push(cost);
                lambda *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                nu = 2.0;
                accepted = true;
                if rel <= opts.ftol {
                    return done(Termination::CostReduction, cost, p, history);
                }
                if delta.norm() <= opts.xtol * (pnorm + opts.xtol) {
                    return done(Termination::StepSize, cost, p, history);
                }
                break;
            }
            if delta.norm() <= opts.xtol * (pnorm + opts.xtol) {
                // Damping has shrunk the step to nothing: we are at a
                // stationary point within rounding.
                return done(Termination::StepSize, cost, p, history);
            }
            lambda *= nu;
            nu *= 2.0;
        }
        if !accepted {
            return Err(Error::Fit {
                message: format!("no acceptable step after iteration {iter}"),
                best_params: p,
                best_cost: cost,
            });
        }
    }
    Err(Error::Fit {
        message: format!("no convergence within {} iterations", opts.max_iterations),
        best_params: p,
        best_cost: cost,
    })
}
