use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::peaks::half_widths;
use super::{
    bin_masses, chi_squared, find_peaks, fit_peak_scaling, weighted_residual, FitQuality, PeakLaw,
};
use crate::distributions::{EmgComponent, Mixture, Shape, TailDirection};
use crate::histogram::{sum_histograms, ArrivalHistogram};
use crate::lsq::{self, fd_step, LmOptions, Problem};
use crate::nnls::nnls_gram;
use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaSharing {
    /// One width per input state.
    Shared,
    /// Widths of components `1..=free` fitted separately; the rest share the
    /// last one.
    PerComponent { free: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EmgFitConfig {
    pub components: usize,
    pub tail: TailDirection,
    pub sigma: SigmaSharing,
    /// Hold every state's tail constant at this value instead of fitting it.
    pub fixed_tau: Option<f64>,
    /// Peaks located on the summed histogram to seed the peak law.
    pub seed_peaks: usize,
    pub lm: LmOptions,
}

impl Default for EmgFitConfig {
    fn default() -> Self {
        Self {
            components: 20,
            tail: TailDirection::TowardLater,
            sigma: SigmaSharing::Shared,
            fixed_tau: None,
            seed_peaks: 5,
            lm: LmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmgStateFit {
    pub mean_photon_number: f64,
    /// Shift of every centre relative to the shared peak law.
    pub offset: f64,
    pub tau: f64,
    /// Width per component (`components` entries).
    pub sigmas: Vec<f64>,
    /// Fitted mass (counts) per component.
    pub amplitudes: Vec<f64>,
    pub chi_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmgModelFit {
    pub law: PeakLaw,
    pub tail: TailDirection,
    pub states: Vec<EmgStateFit>,
    /// χ² of the summed model against the summed histogram.
    pub chi_squared: f64,
    pub quality: FitQuality,
}

impl EmgModelFit {
    pub fn components(&self) -> usize {
        self.states.first().map_or(0, |s| s.amplitudes.len())
    }

    pub fn center(&self, state: usize, n: usize) -> f64 {
        self.law.position(n) + self.states[state].offset
    }

    pub fn state_components(&self, state: usize) -> Vec<EmgComponent> {
        let st = &self.states[state];
        (0..st.amplitudes.len())
            .map(|j| EmgComponent {
                mu: self.center(state, j + 1),
                sigma: st.sigmas[j],
                tau: st.tau,
                tail: self.tail,
                weight: st.amplitudes[j],
            })
            .collect()
    }

    /// `g_n = Σ_states component_n`, for `n = 1..=components`.
    pub fn aggregated(&self) -> Vec<Mixture> {
        (0..self.components())
            .map(|j| {
                Mixture::new(
                    (0..self.states.len())
                        .map(|s| Shape::Emg(self.state_components(s)[j]))
                        .collect(),
                )
            })
            .collect()
    }

    pub fn state_model_counts(&self, state: usize, edges: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; edges.len() - 1];
        for c in self.state_components(state) {
            super::add_binned(&Shape::Emg(c), edges, &mut out);
        }
        out
    }

    pub fn summed_model_counts(&self, edges: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; edges.len() - 1];
        for s in 0..self.states.len() {
            for (o, v) in out.iter_mut().zip(self.state_model_counts(s, edges)) {
                *o += v;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Theta {
    offset: f64,
    tau: f64,
    sigmas: Vec<f64>,
}

/// Shape of the parameter vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    /// Number of free widths per state.
    widths: usize,
    fit_tau: bool,
}

impl Layout {
    /// Parameters of one state; `with_offset` is false for the anchor state.
    fn state_len(&self, with_offset: bool) -> usize {
        with_offset as usize + self.fit_tau as usize + self.widths
    }

    fn decode(&self, q: &[f64], with_offset: bool, fixed_tau: f64) -> Theta {
        let mut i = 0;
        let offset = if with_offset {
            i += 1;
            q[0]
        } else {
            0.0
        };
        let tau = if self.fit_tau {
            i += 1;
            q[i - 1].exp()
        } else {
            fixed_tau
        };
        Theta {
            offset,
            tau,
            sigmas: q[i..i + self.widths].iter().map(|v| v.exp()).collect(),
        }
    }

    fn encode(&self, t: &Theta, with_offset: bool) -> Vec<f64> {
        let mut q = Vec::new();
        if with_offset {
            q.push(t.offset);
        }
        if self.fit_tau {
            q.push(t.tau.ln());
        }
        q.extend(t.sigmas.iter().map(|s| s.ln()));
        q
    }
}

struct Ctx<'a> {
    hists: &'a [ArrivalHistogram],
    cfg: &'a EmgFitConfig,
    layout: Layout,
    fixed_tau: f64,
}

impl Ctx<'_> {
    fn bins(&self) -> usize {
        self.hists[0].counts.len()
    }

    /// Model counts and amplitudes of one state; amplitudes by weighted NNLS.
    fn state_model(&self, s: usize, law: &PeakLaw, th: &Theta) -> (Vec<f64>, Vec<f64>) {
        let h = &self.hists[s];
        let nb = h.counts.len();
        let k = self.cfg.components;
        let mut cols = DMatrix::zeros(nb, k);
        let mut buf = vec![0.0; nb];
        for j in 0..k {
            let shape = Shape::Emg(EmgComponent {
                mu: law.position(j + 1) + th.offset,
                sigma: th.sigmas[j.min(th.sigmas.len() - 1)],
                tau: th.tau,
                tail: self.cfg.tail,
                weight: 1.0,
            });
            bin_masses(&shape, &h.bin_edges, &mut buf);
            cols.column_mut(j).copy_from_slice(&buf);
        }
        let w: Vec<f64> = h
            .counts
            .iter()
            .map(|&c| 1.0 / (c as f64 + 1.0).sqrt())
            .collect();
        let mut aw = cols.clone();
        for (i, wi) in w.iter().enumerate() {
            aw.row_mut(i).scale_mut(*wi);
        }
        let bw = DVector::from_iterator(nb, h.counts.iter().zip(&w).map(|(&c, wi)| c as f64 * wi));
        let amps = nnls_gram(&aw.tr_mul(&aw), &aw.tr_mul(&bw));
        let model = &cols * &amps;
        (
            model.iter().copied().collect(),
            amps.iter().copied().collect(),
        )
    }

    fn state_residuals(&self, s: usize, law: &PeakLaw, th: &Theta, out: &mut [f64]) {
        if !(th.tau > 0.0) || th.sigmas.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            out.fill(f64::NAN);
            return;
        }
        let (model, _) = self.state_model(s, law, th);
        for ((o, &c), m) in out.iter_mut().zip(&self.hists[s].counts).zip(model) {
            *o = weighted_residual(c, m);
        }
    }
}

/// One state with the law held fixed.
struct StateProblem<'a> {
    ctx: &'a Ctx<'a>,
    state: usize,
    law: PeakLaw,
}

impl Problem for StateProblem<'_> {
    fn n_params(&self) -> usize {
        self.ctx.layout.state_len(true)
    }
    fn n_residuals(&self) -> usize {
        self.ctx.bins()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let th = self.ctx.layout.decode(p, true, self.ctx.fixed_tau);
        self.ctx.state_residuals(self.state, &self.law, &th, out);
    }
}

/// All states together: `[x1, x2]` of the law, then per-state blocks. The
/// first state's offset is pinned to zero so the law is identifiable.
struct JointProblem<'a> {
    ctx: &'a Ctx<'a>,
    starts: Vec<usize>,
    n: usize,
}

impl<'a> JointProblem<'a> {
    fn new(ctx: &'a Ctx<'a>) -> Self {
        let mut starts = Vec::new();
        let mut at = 2;
        for s in 0..ctx.hists.len() {
            starts.push(at);
            at += ctx.layout.state_len(s > 0);
        }
        Self { ctx, starts, n: at }
    }

    fn block(&self, s: usize) -> std::ops::Range<usize> {
        self.starts[s]..self.starts[s] + self.ctx.layout.state_len(s > 0)
    }

    fn decode(&self, p: &[f64]) -> (Option<PeakLaw>, Vec<Theta>) {
        let law = PeakLaw::through(p[0], p[1]).ok();
        let thetas = (0..self.ctx.hists.len())
            .map(|s| {
                self.ctx
                    .layout
                    .decode(&p[self.block(s)], s > 0, self.ctx.fixed_tau)
            })
            .collect();
        (law, thetas)
    }

    fn state_rows(&self, s: usize, p: &[f64], out: &mut [f64]) {
        let Ok(law) = PeakLaw::through(p[0], p[1]) else {
            out.fill(f64::NAN);
            return;
        };
        let th = self
            .ctx
            .layout
            .decode(&p[self.block(s)], s > 0, self.ctx.fixed_tau);
        self.ctx.state_residuals(s, &law, &th, out);
    }
}

impl Problem for JointProblem<'_> {
    fn n_params(&self) -> usize {
        self.n
    }
    fn n_residuals(&self) -> usize {
        self.ctx.bins() * self.ctx.hists.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let nb = self.ctx.bins();
        let blocks = par::map((0..self.ctx.hists.len()).collect(), |s| {
            let mut r = vec![0.0; nb];
            self.state_rows(s, p, &mut r);
            r
        });
        for (s, r) in blocks.into_iter().enumerate() {
            out[s * nb..(s + 1) * nb].copy_from_slice(&r);
        }
    }

    /// Central differences, exploiting that state parameters only touch
    /// their own block of rows.
    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let nb = self.ctx.bins();
        let cols = par::map((0..self.ctx.hists.len()).collect(), |s| {
            let mut idx: Vec<usize> = vec![0, 1];
            idx.extend(self.block(s));
            let mut q = p.to_vec();
            let (mut plus, mut minus) = (vec![0.0; nb], vec![0.0; nb]);
            idx.into_iter()
                .map(|j| {
                    let h = fd_step(p[j]);
                    q[j] = p[j] + h;
                    self.state_rows(s, &q, &mut plus);
                    q[j] = p[j] - h;
                    self.state_rows(s, &q, &mut minus);
                    q[j] = p[j];
                    let d: Vec<f64> = plus
                        .iter()
                        .zip(&minus)
                        .map(|(a, b)| (a - b) / (2.0 * h))
                        .collect();
                    (j, d)
                })
                .collect::<Vec<_>>()
        });
        jac.fill(0.0);
        for (s, block) in cols.into_iter().enumerate() {
            for (j, d) in block {
                for (i, v) in d.into_iter().enumerate() {
                    jac[(s * nb + i, j)] = v;
                }
            }
        }
    }
}

/// Fit the per-state EMG mixture to histograms of several input states.
///
/// Each state's components share a width (unless configured otherwise) and
/// a tail constant; centres follow one peak law plus a per-state offset;
/// amplitudes are free and non-negative. Per-state fits with the seed law
/// run first (in parallel) and initialise a joint refinement of everything.
pub fn fit_emg_model(hists: &[ArrivalHistogram], cfg: &EmgFitConfig) -> Result<EmgModelFit> {
    let first = hists
        .first()
        .ok_or_else(|| Error::arg("no histograms to fit"))?;
    if hists.iter().any(|h| h.bin_edges != first.bin_edges) {
        return Err(Error::arg("histograms have inconsistent binning"));
    }
    if cfg.components < 2 {
        return Err(Error::arg("need at least two components"));
    }
    let widths = match cfg.sigma {
        SigmaSharing::Shared => 1,
        SigmaSharing::PerComponent { free } => free.clamp(1, cfg.components),
    };
    if let Some(t) = cfg.fixed_tau {
        if !(t > 0.0) {
            return Err(Error::arg(format!("fixed tau must be positive, got {t}")));
        }
    }

    // Seed: peak modes on the summed histogram -> law -> widths.
    let sum = sum_histograms(hists)?;
    let mut peaks = None;
    for count in (2..=cfg.seed_peaks.max(2)).rev() {
        if let Ok(p) = find_peaks(&sum, count) {
            peaks = Some(p);
            break;
        }
    }
    let peaks = peaks.ok_or_else(|| Error::Fit {
        message: "fewer than two peaks in the summed histogram".into(),
        best_params: vec![],
        best_cost: f64::NAN,
    })?;
    let mode_law = fit_peak_scaling(&peaks)?.law;
    let (hl, hr) =
        half_widths(&sum, peaks[0]).unwrap_or((sum.bin_width() * 3.0, sum.bin_width() * 5.0));
    let (lead, trail) = match cfg.tail {
        TailDirection::TowardLater => (hl, hr),
        TailDirection::TowardEarlier => (hr, hl),
    };
    let sigma0 = (lead / 1.1774).max(0.5 * sum.bin_width());
    let tau0 = cfg
        .fixed_tau
        .unwrap_or(((trail - lead) * 1.2).max(0.3 * sigma0));
    let shape0 = EmgComponent::new(0.0, sigma0, tau0, cfg.tail, 1.0)?;
    let law0 = mode_law.shifted(-Shape::Emg(shape0).mode());

    let layout = Layout {
        widths,
        fit_tau: cfg.fixed_tau.is_none(),
    };
    let ctx = Ctx {
        hists,
        cfg,
        layout,
        fixed_tau: cfg.fixed_tau.unwrap_or(tau0),
    };
    let theta0 = Theta {
        offset: 0.0,
        tau: tau0,
        sigmas: vec![sigma0; widths],
    };

    let stage_opts = LmOptions {
        ftol: 1e-8,
        max_iterations: 100,
        ..cfg.lm.clone()
    };
    let pre = par::map((0..hists.len()).collect(), |s| {
        let prob = StateProblem {
            ctx: &ctx,
            state: s,
            law: law0,
        };
        let q0 = layout.encode(&theta0, true);
        match lsq::minimize(&prob, &q0, &stage_opts) {
            Ok(r) => layout.decode(&r.params, true, ctx.fixed_tau),
            Err(Error::Fit { best_params, .. }) => layout.decode(&best_params, true, ctx.fixed_tau),
            Err(_) => theta0.clone(),
        }
    });

    // Fold the anchor state's offset into the law.
    let anchor = pre[0].offset;
    let law1 = law0.shifted(anchor);
    let joint = JointProblem::new(&ctx);
    let mut p0 = vec![law1.position(1), law1.position(2)];
    for (s, th) in pre.iter().enumerate() {
        let th = Theta {
            offset: th.offset - anchor,
            ..th.clone()
        };
        p0.extend(layout.encode(&th, s > 0));
    }
    let rep = lsq::minimize(&joint, &p0, &cfg.lm).map_err(|e| match e {
        Error::Fit {
            message,
            best_params,
            best_cost,
        } => {
            let (_, thetas) = joint.decode(&best_params);
            let diag: Vec<String> = thetas
                .iter()
                .enumerate()
                .map(|(s, t)| {
                    format!(
                        "state {s}: offset {:.3} tau {:.3} sigma {:?}",
                        t.offset, t.tau, t.sigmas
                    )
                })
                .collect();
            Error::Fit {
                message: format!("{message}; {}", diag.join("; ")),
                best_params,
                best_cost,
            }
        }
        other => other,
    })?;

    let (law, thetas) = joint.decode(&rep.params);
    let law = law.ok_or_else(|| Error::Numerical("fit left the valid parameter region".into()))?;
    let mut states = Vec::new();
    let mut residuals = vec![0.0; joint.n_residuals()];
    joint.residuals(&rep.params, &mut residuals);
    for (s, th) in thetas.iter().enumerate() {
        let (model, amps) = ctx.state_model(s, &law, th);
        states.push(EmgStateFit {
            mean_photon_number: hists[s].mean_photon_number,
            offset: th.offset,
            tau: th.tau,
            sigmas: (0..cfg.components)
                .map(|j| th.sigmas[j.min(widths - 1)])
                .collect(),
            amplitudes: amps,
            chi_squared: chi_squared(&hists[s].counts, &model),
        });
    }
    let fit = EmgModelFit {
        law,
        tail: cfg.tail,
        states,
        chi_squared: 0.0,
        quality: FitQuality {
            chi_squared: 0.0,
            residuals,
            converged: true,
            iterations: rep.iterations,
            gradient: rep.gradient,
        },
    };
    let chi = chi_squared(&sum.counts, &fit.summed_model_counts(&sum.bin_edges));
    Ok(EmgModelFit {
        chi_squared: chi,
        quality: FitQuality {
            chi_squared: chi,
            ..fit.quality.clone()
        },
        ..fit
    })
}
