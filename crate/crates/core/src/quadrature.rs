//! Globally adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Used as the independent "direct" integration path: interval masses in the
//! library itself come from closed-form CDFs, and this module is what they
//! are checked against.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
    /// Interior points where the integrand has structure (peak centres).
    /// Each finite segment between them is split further before adapting.
    pub points: Vec<f64>,
    /// Length scale for the `t/(1-t)` map of semi-infinite pieces.
    pub scale: f64,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-14,
            rel_tol: 1e-13,
            max_intervals: 20_000,
            points: Vec::new(),
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Integrate `f` over `[a, b]`; either limit may be infinite.
pub fn integrate<F>(f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<QuadResult>
where
    F: Fn(f64) -> f64,
{
    if a.is_nan() || b.is_nan() || a > b {
        return Err(Error::arg(format!("bad integration limits [{a}, {b}]")));
    }
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let mut pts: Vec<f64> = opts
        .points
        .iter()
        .copied()
        .filter(|p| p.is_finite() && *p > a && *p < b)
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    if !a.is_finite() && !b.is_finite() && pts.is_empty() {
        pts.push(0.0);
    }
    let mut cuts = vec![a];
    cuts.extend(pts);
    cuts.push(b);

    let scale = opts.scale.abs().max(f64::MIN_POSITIVE);
    let mut total = QuadResult {
        value: 0.0,
        error: 0.0,
        evaluations: 0,
    };
    let budget = opts.max_intervals / (cuts.len() - 1).max(1);
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let r = if lo.is_finite() && hi.is_finite() {
            adapt(&f, lo, hi, 8, opts, budget)?
        } else if lo.is_finite() {
            let g = |t: f64| {
                let d = 1.0 - t;
                f(lo + scale * t / d) * scale / (d * d)
            };
            adapt(&g, 0.0, 1.0, 16, opts, budget)?
        } else {
            let g = |t: f64| {
                let d = 1.0 - t;
                f(hi - scale * t / d) * scale / (d * d)
            };
            adapt(&g, 0.0, 1.0, 16, opts, budget)?
        };
        total.value += r.value;
        total.error += r.error;
        total.evaluations += r.evaluations;
    }
    Ok(total)
}

fn adapt<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    initial: usize,
    opts: &QuadOptions,
    budget: usize,
) -> Result<QuadResult> {
    let mut heap = BinaryHeap::new();
    let mut value = 0.0;
    let mut error = 0.0;
    let step = (b - a) / initial as f64;
    for i in 0..initial {
        let lo = a + step * i as f64;
        let hi = if i + 1 == initial { b } else { lo + step };
        let (v, e) = kronrod(f, lo, hi);
        value += v;
        error += e;
        heap.push(Piece {
            a: lo,
            b: hi,
            value: v,
            error: e,
        });
    }
    let mut evaluations = 15 * initial;
    while error > opts.abs_tol.max(opts.rel_tol * value.abs()) {
        if heap.len() >= budget.max(initial + 1) {
            return Err(Error::Numerical(format!(
                "quadrature did not reach tolerance: estimate {value:e}, error {error:e}"
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval can no longer be split in floating point.
            heap.push(Piece {
                error: 0.0,
                ..worst
            });
            error = heap.iter().map(|p| p.error).sum();
            continue;
        }
        let (v1, e1) = kronrod(f, worst.a, mid);
        let (v2, e2) = kronrod(f, mid, worst.b);
        evaluations += 30;
        value += v1 + v2 - worst.value;
        error += e1 + e2 - worst.error;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
        if heap.len() % 64 == 0 {
            // Re-sum to stop drift from the running updates.
            value = heap.iter().map(|p| p.value).sum();
            error = heap.iter().map(|p| p.error).sum();
        }
    }
    let value = heap.iter().map(|p| p.value).sum();
    Ok(QuadResult {
        value,
        error,
        evaluations,
    })
}
