use serde::{Deserialize, Serialize};

use super::peaks::half_widths;
use super::{
    add_binned, detected_weight, histogram_chi_squared, weighted_residual, FitQuality, PeakLaw,
    PeakScalingFit, FIT_STATES,
};
use crate::distributions::{GaussComponent, Mixture, Shape, GAUSS_FWHM_FACTOR};
use crate::histogram::ArrivalHistogram;
use crate::lsq::{self, LmOptions, Problem};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GaussFitConfig {
    pub components: usize,
    /// Number of independently fitted widths; components beyond this share
    /// the last free width.
    pub free_sigmas: usize,
    /// Mean photon numbers whose Poisson weights make up `P'(n)`.
    pub nbars: Vec<f64>,
    pub lm: LmOptions,
}

impl Default for GaussFitConfig {
    fn default() -> Self {
        Self {
            components: 20,
            free_sigmas: 6,
            nbars: FIT_STATES.to_vec(),
            lm: LmOptions::default(),
        }
    }
}

/// `a · Σ_n P'(n) · N(x_n, σ_n)` with `x_n` on the peak law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussSumModel {
    pub a: f64,
    pub law: PeakLaw,
    pub sigmas: Vec<f64>,
    pub weights: Vec<f64>,
    pub eta: f64,
    pub nbars: Vec<f64>,
}

impl GaussSumModel {
    pub fn new(a: f64, law: PeakLaw, sigmas: Vec<f64>, eta: f64, nbars: Vec<f64>) -> Result<Self> {
        if sigmas.is_empty() || sigmas.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::arg("all widths must be positive"));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::arg(format!(
                "efficiency must lie in (0, 1], got {eta}"
            )));
        }
        let weights = (1..=sigmas.len())
            .map(|n| detected_weight(n, eta, &nbars))
            .collect();
        Ok(Self {
            a,
            law,
            sigmas,
            weights,
            eta,
            nbars,
        })
    }

    pub fn components(&self) -> Vec<GaussComponent> {
        self.sigmas
            .iter()
            .zip(&self.weights)
            .enumerate()
            .map(|(i, (&s, &w))| GaussComponent {
                mu: self.law.position(i + 1),
                sigma: s,
                weight: self.a * w,
            })
            .collect()
    }

    /// One curve per photon number, `g_1, g_2, ...`.
    pub fn curves(&self) -> Vec<Mixture> {
        self.components().into_iter().map(Mixture::single).collect()
    }

    pub fn model_counts(&self, edges: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; edges.len() - 1];
        for c in self.components() {
            add_binned(&Shape::Gauss(c), edges, &mut out);
        }
        out
    }
}

struct GaussProblem<'a> {
    hist: &'a ArrivalHistogram,
    eta: f64,
    cfg: &'a GaussFitConfig,
    free: usize,
}

impl GaussProblem<'_> {
    fn model(&self, p: &[f64]) -> Option<GaussSumModel> {
        let law = PeakLaw::through(p[0], p[1]).ok()?;
        let free: Vec<f64> = p[3..].iter().map(|v| v.exp()).collect();
        let sigmas = (0..self.cfg.components)
            .map(|n| free[n.min(self.free - 1)])
            .collect();
        GaussSumModel::new(p[2].exp(), law, sigmas, self.eta, self.cfg.nbars.clone()).ok()
    }
}

impl Problem for GaussProblem<'_> {
    fn n_params(&self) -> usize {
        3 + self.free
    }
    fn n_residuals(&self) -> usize {
        self.hist.counts.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let Some(model) = self.model(p) else {
            out.fill(f64::NAN);
            return;
        };
        let f = model.model_counts(&self.hist.bin_edges);
        for ((o, &c), m) in out.iter_mut().zip(&self.hist.counts).zip(f) {
            *o = weighted_residual(c, m);
        }
    }
}

/// Fit the Gaussian-sum model to a summed histogram, starting from a peak
/// law (usually [`super::fit_peak_scaling`] on [`super::find_peaks`]).
pub fn fit_gaussian_sum(
    hist_sum: &ArrivalHistogram,
    scaling: &PeakScalingFit,
    eta: f64,
    cfg: &GaussFitConfig,
) -> Result<(GaussSumModel, FitQuality)> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::arg(format!(
            "efficiency must lie in (0, 1], got {eta}"
        )));
    }
    if cfg.components == 0 || cfg.free_sigmas == 0 {
        return Err(Error::arg("need at least one component and one free width"));
    }
    let free = cfg.free_sigmas.min(cfg.components);
    let law = scaling.law;
    let (x1, x2) = (law.position(1), law.position(2));
    let sigma0 = half_widths(hist_sum, x1)
        .map(|(l, r)| (l + r) / GAUSS_FWHM_FACTOR)
        .unwrap_or(0.1 * (x1 - x2))
        .max(hist_sum.bin_width());
    let wsum: f64 = (1..=cfg.components)
        .map(|n| detected_weight(n, eta, &cfg.nbars))
        .sum();
    let a0 = (hist_sum.total() as f64 / wsum).max(1.0);

    let mut p0 = vec![x1, x2, a0.ln()];
    p0.extend(std::iter::repeat(sigma0.ln()).take(free));
    let problem = GaussProblem {
        hist: hist_sum,
        eta,
        cfg,
        free,
    };
    let rep = lsq::minimize(&problem, &p0, &cfg.lm)?;
    let model = problem
        .model(&rep.params)
        .ok_or_else(|| Error::Numerical("fit left the valid parameter region".into()))?;
    let mut residuals = vec![0.0; hist_sum.counts.len()];
    problem.residuals(&rep.params, &mut residuals);
    let chi = histogram_chi_squared(hist_sum, &model.model_counts(&hist_sum.bin_edges))?;
    Ok((
        model,
        FitQuality {
            chi_squared: chi,
            residuals,
            converged: true,
            iterations: rep.iterations,
            gradient: rep.gradient,
        },
    ))
}
