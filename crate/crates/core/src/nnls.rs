//! Lawson–Hanson non-negative least squares.

use nalgebra::{DMatrix, DVector};

/// `min ||A x - b||` subject to `x >= 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let g = a.tr_mul(a);
    let c = a.tr_mul(b);
    nnls_gram(&g, &c)
}

/// NNLS in normal-equation form: minimises `x'Gx/2 - c'x` over `x >= 0`
/// where `G = A'A` and `c = A'b`. Cheap when `A` is tall and thin.
pub fn nnls_gram(g: &DMatrix<f64>, c: &DVector<f64>) -> DVector<f64> {
    let n = c.len();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let scale = (0..n)
        .map(|i| g[(i, i)])
        .fold(0.0f64, f64::max)
        .max(c.amax());
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let max_outer = 3 * n + 10;

    for _ in 0..max_outer {
        let w = c - g * &x;
        let mut best = None;
        let mut best_w = tol;
        for j in 0..n {
            if !passive[j] && w[j] > best_w && g[(j, j)] > 0.0 {
                best_w = w[j];
                best = Some(j);
            }
        }
        let Some(t) = best else { break };
        passive[t] = true;

        loop {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let s = solve_subset(g, c, &idx);
            if idx.iter().zip(s.iter()).all(|(_, &v)| v > 0.0) {
                for (k, &j) in idx.iter().enumerate() {
                    x[j] = s[k];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            let mut blocking = idx[0];
            for (k, &j) in idx.iter().enumerate() {
                if s[k] <= 0.0 {
                    let d = x[j] - s[k];
                    let a = if d > 0.0 { x[j] / d } else { 0.0 };
                    if a < alpha {
                        alpha = a;
                        blocking = j;
                    }
                }
            }
            for (k, &j) in idx.iter().enumerate() {
                x[j] += alpha * (s[k] - x[j]);
                if j == blocking || x[j] <= 0.0 {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x
}

fn solve_subset(g: &DMatrix<f64>, c: &DVector<f64>, idx: &[usize]) -> Vec<f64> {
    let k = idx.len();
    let mut gs = DMatrix::zeros(k, k);
    let mut cs = DVector::zeros(k);
    for (a, &i) in idx.iter().enumerate() {
        cs[a] = c[i];
        for (b, &j) in idx.iter().enumerate() {
            gs[(a, b)] = g[(i, j)];
        }
    }
    let trace: f64 = (0..k)
        .map(|i| gs[(i, i)])
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    let mut ridge = 0.0;
    for _ in 0..8 {
        let mut m = gs.clone();
        for i in 0..k {
            m[(i, i)] += ridge;
        }
        if let Some(ch) = m.cholesky() {
            return ch.solve(&cs).iter().copied().collect();
        }
        ridge = if ridge == 0.0 {
            1e-14 * trace / k as f64
        } else {
            ridge * 100.0
        };
    }
    vec![0.0; k]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_optimum_is_kept() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = nnls(&a, &b);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn negative_direction_is_clamped() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![-1.0, 2.0]);
        let x = nnls(&a, &b);
        assert_eq!(x[0], 0.0);
        assert!((x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kkt_conditions_hold_on_random_problem() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(30, 6, |_, _| rng.random::<f64>());
        let b = DVector::from_fn(30, |_, _| rng.random::<f64>() - 0.7);
        let x = nnls(&a, &b);
        let w = a.tr_mul(&(&b - &a * &x));
        for j in 0..6 {
            assert!(x[j] >= 0.0);
            if x[j] > 0.0 {
                assert!(w[j].abs() < 1e-9, "{w}");
            } else {
                assert!(w[j] < 1e-9);
            }
        }
    }
}
