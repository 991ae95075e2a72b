//! Special functions needed by the peak shapes and photon statistics.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Scaled complementary error function `exp(x²)·erfc(x)`.
///
/// Finite for every finite `x` above about −26.5; overflows to +inf below.
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        // erfc(-x) = 2 - erfc(x)
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    if x < 5.0 {
        (x * x).exp() * libm::erfc(x)
    } else {
        // Backward evaluation of the Laplace continued fraction; 60 terms
        // are exact to rounding for x >= 5.
        let mut t = x;
        for k in (1..=60).rev() {
            t = x + 0.5 * k as f64 / t;
        }
        FRAC_1_SQRT_PI / t
    }
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Standard normal survival function, accurate deep in the upper tail.
pub fn norm_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z * FRAC_1_SQRT_2)
}

pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        0.0
    } else {
        libm::lgamma(n as f64 + 1.0)
    }
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// `ln P(N = n)` for `N ~ Poisson(mean)`. Handles `mean = 0`.
pub fn poisson_ln_pmf(n: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    n as f64 * mean.ln() - mean - ln_factorial(n)
}

pub fn poisson_pmf(n: u64, mean: f64) -> f64 {
    poisson_ln_pmf(n, mean).exp()
}

/// `P(N >= n)` for `N ~ Poisson(mean)`, summed directly over the upper tail
/// so that tiny tails keep their relative accuracy.
pub fn poisson_sf(n: u64, mean: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    if mean == 0.0 {
        return 0.0;
    }
    if (n as f64) <= mean {
        let below: f64 = (0..n).map(|k| poisson_pmf(k, mean)).sum();
        return (1.0 - below).max(0.0);
    }
    // Terms decrease monotonically once past the mean.
    let mut total = 0.0;
    let mut k = n;
    loop {
        let term = poisson_pmf(k, mean);
        total += term;
        if term <= total * 1e-17 || term == 0.0 {
            break;
        }
        k += 1;
    }
    total
}

/// `P(M = k)` for `M ~ Binomial(n, p)`, log-space so large `n` is safe.
pub fn binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    (ln_binomial(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp()
}
