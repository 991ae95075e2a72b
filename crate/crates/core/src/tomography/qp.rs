//! Primal active-set solver for
//! `min ||P − F X||² + γ Σ_{n,j} (X[n,j] − X[n+1,j])²`
//! with every row of `X` on the probability simplex.
//!
//! Works from the Gram form `G = FᵀF`, `B = FᵀP`. Each row keeps one free
//! "pivot" entry that absorbs the row-sum constraint; the remaining free
//! entries are the unknowns of the equality-constrained subproblem.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub(crate) struct Solution {
    pub x: DMatrix<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
}

fn gradient(g: &DMatrix<f64>, b: &DMatrix<f64>, gamma: f64, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut grad = (g * x - b) * 2.0;
    if gamma > 0.0 {
        let m = x.nrows();
        for j in 0..x.ncols() {
            for n in 0..m.saturating_sub(1) {
                let d = 2.0 * gamma * (x[(n, j)] - x[(n + 1, j)]);
                grad[(n, j)] += d;
                grad[(n + 1, j)] -= d;
            }
        }
    }
    grad
}

/// Hessian of one column block: `2G + 2γ DᵀD`.
fn column_hessian(g: &DMatrix<f64>, gamma: f64, a: usize, b: usize) -> f64 {
    let m = g.nrows();
    let mut h = 2.0 * g[(a, b)];
    if gamma > 0.0 && m > 1 {
        if a == b {
            h += 2.0 * gamma * if a == 0 || a == m - 1 { 1.0 } else { 2.0 };
        } else if a.abs_diff(b) == 1 {
            h -= 2.0 * gamma;
        }
    }
    h
}

fn pivots(free: &[bool], m: usize, n: usize) -> Vec<usize> {
    (0..m)
        .map(|r| (0..n).rev().find(|&c| free[r * n + c]).unwrap_or(n - 1))
        .collect()
}

/// Largest violation of the optimality conditions at `x`. Gradient terms
/// are measured relative to `hscale` (at least 1), the feasibility terms
/// absolutely.
fn kkt(grad: &DMatrix<f64>, free: &[bool], piv: &[usize], x: &DMatrix<f64>, hscale: f64) -> f64 {
    let (m, n) = x.shape();
    let hscale = hscale.max(1.0);
    let mut worst = 0.0f64;
    for r in 0..m {
        let gp = grad[(r, piv[r])];
        let mut sum = 0.0;
        for c in 0..n {
            let lam = grad[(r, c)] - gp;
            if free[r * n + c] {
                worst = worst.max(lam.abs() / hscale);
            } else {
                worst = worst.max(-lam / hscale).max(x[(r, c)].abs());
            }
            worst = worst.max(-x[(r, c)]);
            sum += x[(r, c)];
        }
        worst = worst.max((sum - 1.0).abs());
    }
    worst
}

pub(crate) fn solve(
    g: &DMatrix<f64>,
    b: &DMatrix<f64>,
    gamma: f64,
    max_iterations: usize,
) -> Result<Solution> {
    let (m, n) = b.shape();
    // Start at the saturated vertex: all mass in the last outcome.
    let mut x = DMatrix::zeros(m, n);
    let mut free = vec![false; m * n];
    for r in 0..m {
        x[(r, n - 1)] = 1.0;
        free[r * n + n - 1] = true;
    }
    let scale = b
        .iter()
        .fold(0.0f64, |a, v| a.max(2.0 * v.abs()))
        .max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;
    let hscale = g
        .row_iter()
        .map(|r| r.iter().map(|v| 2.0 * v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        + 8.0 * gamma;
    let mut at_optimum = true;

    for it in 1..=max_iterations {
        let grad = gradient(g, b, gamma, &x);
        let piv = pivots(&free, m, n);
        if at_optimum {
            let mut best = (-tol, None);
            for r in 0..m {
                let gp = grad[(r, piv[r])];
                for c in 0..n {
                    if !free[r * n + c] {
                        let lam = grad[(r, c)] - gp;
                        if lam < best.0 {
                            best = (lam, Some(r * n + c));
                        }
                    }
                }
            }
            match best.1 {
                None => {
                    let kkt_residual = kkt(&grad, &free, &piv, &x, hscale);
                    return Ok(Solution {
                        x,
                        iterations: it,
                        kkt_residual,
                    });
                }
                Some(i) => {
                    free[i] = true;
                    at_optimum = false;
                    continue;
                }
            }
        }

        let dofs: Vec<(usize, usize)> = (0..m)
            .flat_map(|r| (0..n).map(move |c| (r, c)))
            .filter(|&(r, c)| free[r * n + c] && c != piv[r])
            .collect();
        let k = dofs.len();
        if k == 0 {
            at_optimum = true;
            continue;
        }
        let mut hr = DMatrix::zeros(k, k);
        let mut gr = DVector::zeros(k);
        for (a, &(ra, ja)) in dofs.iter().enumerate() {
            let pa = piv[ra];
            gr[a] = -(grad[(ra, ja)] - grad[(ra, pa)]);
            for (bi, &(rb, jb)) in dofs.iter().enumerate().skip(a) {
                let pb = piv[rb];
                let s =
                    (ja == jb) as i32 - (ja == pb) as i32 - (pa == jb) as i32 + (pa == pb) as i32;
                if s != 0 {
                    let v = column_hessian(g, gamma, ra, rb) * s as f64;
                    hr[(a, bi)] = v;
                    hr[(bi, a)] = v;
                }
            }
        }
        let ridge = 1e-14 * hr.trace().abs().max(f64::MIN_POSITIVE) / k as f64;
        for a in 0..k {
            hr[(a, a)] += ridge;
        }
        let u = match hr.clone().cholesky() {
            Some(ch) => ch.solve(&gr),
            None => hr
                .lu()
                .solve(&gr)
                .ok_or_else(|| Error::Numerical("singular reduced Hessian".into()))?,
        };

        let mut dir = DMatrix::zeros(m, n);
        for (a, &(r, c)) in dofs.iter().enumerate() {
            dir[(r, c)] += u[a];
            dir[(r, piv[r])] -= u[a];
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for r in 0..m {
            for c in 0..n {
                let d = dir[(r, c)];
                if free[r * n + c] && d < 0.0 {
                    let ratio = -x[(r, c)] / d;
                    if ratio < alpha {
                        alpha = ratio;
                        blocking = Some(r * n + c);
                    }
                }
            }
        }
        x += dir * alpha;
        match blocking {
            Some(i) => {
                x[(i / n, i % n)] = 0.0;
                free[i] = false;
            }
            None => at_optimum = true,
        }
    }
    Err(Error::Fit {
        message: format!("active-set solver did not converge in {max_iterations} iterations"),
        best_params: x.iter().copied().collect(),
        best_cost: f64::NAN,
    })
}
