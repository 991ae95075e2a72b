//! Histogram models: the Gaussian sum with enforced `1/sqrt(n)` peak
//! scaling and the per-state EMG mixture.

mod emg;
mod gauss_sum;
mod peaks;

pub use emg::{fit_emg_model, EmgFitConfig, EmgModelFit, EmgStateFit, SigmaSharing};
pub use gauss_sum::{fit_gaussian_sum, GaussFitConfig, GaussSumModel};
pub use peaks::{find_peaks, fit_peak_scaling, PeakScalingFit};

use serde::{Deserialize, Serialize};

use crate::distributions::Shape;
use crate::histogram::ArrivalHistogram;
use crate::special::poisson_pmf;
use crate::{Error, Result};

/// Peak-centre law `x_n = (1/sqrt(n) - b_lin) / m_lin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakLaw {
    pub m_lin: f64,
    pub b_lin: f64,
}

impl PeakLaw {
    pub fn new(m_lin: f64, b_lin: f64) -> Result<Self> {
        if !(m_lin > 0.0) || !m_lin.is_finite() || !b_lin.is_finite() {
            return Err(Error::arg(format!(
                "peak law needs finite m_lin > 0 (decreasing centres), got m={m_lin}, b={b_lin}"
            )));
        }
        Ok(Self { m_lin, b_lin })
    }

    /// Law through the one- and two-photon positions `x1 > x2`.
    pub fn through(x1: f64, x2: f64) -> Result<Self> {
        if !(x1 > x2) {
            return Err(Error::arg(format!("need x1 > x2, got {x1} and {x2}")));
        }
        let m = (1.0 - std::f64::consts::FRAC_1_SQRT_2) / (x1 - x2);
        Self::new(m, 1.0 - m * x1)
    }

    pub fn position(&self, n: usize) -> f64 {
        (1.0 / (n as f64).sqrt() - self.b_lin) / self.m_lin
    }

    /// Same law with every centre moved by `dt`.
    pub fn shifted(&self, dt: f64) -> Self {
        Self {
            m_lin: self.m_lin,
            b_lin: self.b_lin - self.m_lin * dt,
        }
    }

    /// Large-`n` limit of the centres.
    pub fn asymptote(&self) -> f64 {
        -self.b_lin / self.m_lin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitQuality {
    pub chi_squared: f64,
    /// Count-weighted residuals `(c - f) / sqrt(c + 1)` per bin (all states
    /// concatenated for multi-histogram fits).
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest residual/Jacobian-column cosine at the solution.
    pub gradient: f64,
}

/// Unnormalised-to-unit χ²: both inputs are scaled to unit mass and
/// `Σ (p - q)² / max(q, 1e-12)` is returned.
pub fn chi_squared(counts: &[u64], model: &[f64]) -> f64 {
    let cs: f64 = counts.iter().map(|&c| c as f64).sum();
    let ms: f64 = model.iter().sum();
    counts
        .iter()
        .zip(model)
        .map(|(&c, &m)| {
            let p = if cs > 0.0 { c as f64 / cs } else { 0.0 };
            let q = if ms > 0.0 { m / ms } else { 0.0 };
            (p - q) * (p - q) / q.max(1e-12)
        })
        .sum()
}

/// χ² of a histogram against model counts on the same binning.
pub fn histogram_chi_squared(hist: &ArrivalHistogram, model: &[f64]) -> Result<f64> {
    if hist.counts.len() != model.len() {
        return Err(Error::arg(format!(
            "model has {} bins, histogram {}",
            model.len(),
            hist.counts.len()
        )));
    }
    Ok(chi_squared(&hist.counts, model))
}

/// `P'(n) = Σ_{n̄ in nbars} Poisson(n; n̄·η)`.
pub fn detected_weight(n: usize, eta: f64, nbars: &[f64]) -> f64 {
    nbars
        .iter()
        .map(|&nb| poisson_pmf(n as u64, nb * eta))
        .sum()
}

/// Input states used for the Gaussian-sum weights and the EMG fit.
pub const FIT_STATES: [f64; 9] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];

/// Unit mass of `shape` in every bin of `edges`, one CDF evaluation per edge.
pub fn bin_masses(shape: &Shape, edges: &[f64], out: &mut [f64]) {
    debug_assert_eq!(out.len() + 1, edges.len());
    let mu = shape.center();
    // Below the centre keep CDF values, above it survival values.
    let mut prev_low = edges[0] < mu;
    let mut prev = if prev_low {
        shape.cdf_unit(edges[0])
    } else {
        shape.sf_unit(edges[0])
    };
    for i in 0..out.len() {
        let e = edges[i + 1];
        let low = e < mu;
        let cur = if low {
            shape.cdf_unit(e)
        } else {
            shape.sf_unit(e)
        };
        out[i] = match (prev_low, low) {
            (true, true) => cur - prev,
            (false, false) => prev - cur,
            (true, false) => 1.0 - prev - cur,
            (false, true) => unreachable!("edges are increasing"),
        }
        .max(0.0);
        prev = cur;
        prev_low = low;
    }
}

/// Expected counts of a weighted shape on `edges`, added into `out`.
pub fn add_binned(shape: &Shape, edges: &[f64], out: &mut [f64]) {
    let mut tmp = vec![0.0; out.len()];
    bin_masses(shape, edges, &mut tmp);
    let w = shape.weight();
    for (o, t) in out.iter_mut().zip(tmp) {
        *o += w * t;
    }
}

/// Weighted residuals used by every histogram fit.
pub(crate) fn weighted_residual(count: u64, model: f64) -> f64 {
    (count as f64 - model) / (count as f64 + 1.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{EmgComponent, TailDirection};

    #[test]
    fn law_through_two_points() {
        let law = PeakLaw::through(310.0, 180.0).unwrap();
        assert!((law.position(1) - 310.0).abs() < 1e-10);
        assert!((law.position(2) - 180.0).abs() < 1e-10);
        assert!((law.position(3) - 122.41).abs() < 0.01);
        let s = law.shifted(500.0);
        assert!((s.position(3) - law.position(3) - 500.0).abs() < 1e-9);
    }

    #[test]
    fn chi_squared_edge_cases() {
        assert_eq!(chi_squared(&[1, 2, 3], &[2.0, 4.0, 6.0]), 0.0);
        let v = chi_squared(&[1, 2, 3], &[0.0, 0.0, 0.0]);
        assert!(v.is_finite() && v > 1e10);
    }

    #[test]
    fn bin_masses_sum_to_interval_mass() {
        let e: Shape = EmgComponent::new(10.0, 2.0, 3.0, TailDirection::TowardLater, 1.0)
            .unwrap()
            .into();
        let edges: Vec<f64> = (0..=40).map(|i| i as f64).collect();
        let mut out = vec![0.0; 40];
        bin_masses(&e, &edges, &mut out);
        let total: f64 = out.iter().sum();
        assert!((total - e.mass_unit(0.0, 40.0)).abs() < 1e-14);
        for (i, m) in out.iter().enumerate() {
            assert!((m - e.mass_unit(i as f64, i as f64 + 1.0)).abs() < 1e-15);
        }
    }
}
