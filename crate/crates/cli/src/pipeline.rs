//! Pipeline stages and the artifacts each one writes.

use std::path::{Path, PathBuf};

use pnr_core::assignment::{
    assign_pairs, intersections, max_resolvable_photon_number, optimize_regions, overlap_matrix,
    region_sweep, Edge, ErrorReport, OutcomeCounts, OverlapMatrix, PhotonRegions, RegionWeights,
    Resolvability, SweepPoint,
};
use pnr_core::distributions::Mixture;
use pnr_core::fitting::{
    add_binned, find_peaks, fit_emg_model, fit_gaussian_sum, fit_peak_scaling, EmgModelFit,
    FitQuality, GaussSumModel, PeakScalingFit,
};
use pnr_core::histogram::{
    histogram_from_pairs, pair_events, sum_histograms, ArrivalHistogram, PairedEvents,
};
use pnr_core::optics::{pulse_report, PulseReport};
use pnr_core::simulator::{Manifest, ManifestEntry};
use pnr_core::table::Table;
use pnr_core::timestamps;
use pnr_core::tomography::{
    average_fidelity, build_outcome_matrix, coherent_state_matrix, column_fidelities,
    hilbert_dimension, log_grid, loss_matrix, predict_outcomes, reconstruct_povm, simulate_povm,
    sweep_smoothing, OutcomeMatrix, PovmMatrix, SmoothingPoint,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ModelKind, PipelineConfig, PulseConfig, RegionMode};
use crate::error::{CliError, CliResult};
use crate::output::Output;
use crate::svg::{Plot, Series};

/// Curves drawn individually in plots and curve tables.
const SHOWN_CURVES: usize = 6;

pub struct Bundle {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl Bundle {
    pub fn open(dir: &Path) -> CliResult<Self> {
        if !dir.is_dir() {
            return Err(CliError::Config(format!(
                "data directory {} does not exist",
                dir.display()
            )));
        }
        let path = dir.join("manifest.toml");
        if !path.is_file() {
            return Err(CliError::Data(format!("{} is missing", path.display())));
        }
        let mut manifest = Manifest::load(&path)?;
        manifest.states.sort_by_key(|e| e.index);
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn pairs(&self, e: &ManifestEntry, window: i64) -> CliResult<PairedEvents> {
        let records = timestamps::load(&self.dir.join(&e.file), &self.manifest.format)
            .map_err(|err| CliError::Data(format!("{}: {err}", e.file)))?;
        let pairs = pair_events(&records, window)?;
        if pairs.trials() != e.trials as u64 {
            return Err(CliError::Data(format!(
                "{} holds {} triggers but the manifest lists {}",
                e.file,
                pairs.trials(),
                e.trials
            )));
        }
        Ok(pairs)
    }
}

pub struct FitInputs {
    pub hists: Vec<ArrivalHistogram>,
    pub sum: ArrivalHistogram,
    pub peaks: Vec<f64>,
    pub scaling: PeakScalingFit,
}

pub fn fit_inputs(bundle: &Bundle, cfg: &PipelineConfig) -> CliResult<FitInputs> {
    let entries = cfg
        .fit
        .states
        .iter()
        .map(|&nb| {
            bundle
                .manifest
                .states
                .iter()
                .find(|e| (e.mean_photon_number - nb).abs() < 1e-9)
                .ok_or_else(|| {
                    CliError::Data(format!("bundle has no state with mean photon number {nb}"))
                })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let h = &cfg.histogram;
    let hists = entries
        .par_iter()
        .map(|e| {
            let pairs = bundle.pairs(e, h.window)?;
            let hist = histogram_from_pairs(&pairs, h.bin_width, h.range(), e.mean_photon_number)?;
            if hist.range_warning() {
                eprintln!(
                    "warning: no clicks of state {} fall inside the histogram range",
                    e.index
                );
            }
            Ok(hist)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let sum = sum_histograms(&hists)?;
    let peaks = find_peaks(&sum, cfg.fit.peaks)?;
    let scaling = fit_peak_scaling(&peaks)?;
    Ok(FitInputs {
        hists,
        sum,
        peaks,
        scaling,
    })
}

pub enum FittedModel {
    Emg(EmgModelFit),
    Gaussian(GaussSumModel, FitQuality),
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::Emg(_) => ModelKind::Emg,
            FittedModel::Gaussian(..) => ModelKind::Gaussian,
        }
    }

    /// Per-photon-number curves, cut before the first one the fit left
    /// empty (high photon numbers with no support in the data).
    pub fn curves(&self) -> Vec<Mixture> {
        let mut g = match self {
            FittedModel::Emg(f) => f.aggregated(),
            FittedModel::Gaussian(m, _) => m.curves(),
        };
        if let Some(k) = g.iter().position(|c| !(c.weight() > 0.0)) {
            g.truncate(k);
        }
        g
    }

    pub fn chi_squared(&self) -> f64 {
        match self {
            FittedModel::Emg(f) => f.chi_squared,
            FittedModel::Gaussian(_, q) => q.chi_squared,
        }
    }

    pub fn summed_counts(&self, edges: &[f64]) -> Vec<f64> {
        match self {
            FittedModel::Emg(f) => f.summed_model_counts(edges),
            FittedModel::Gaussian(m, _) => m.model_counts(edges),
        }
    }

    fn to_toml(&self) -> CliResult<String> {
        #[derive(Serialize)]
        struct GaussFile<'a> {
            model: &'a GaussSumModel,
            quality: &'a FitQuality,
        }
        let text = match self {
            FittedModel::Emg(f) => toml::to_string(f),
            FittedModel::Gaussian(model, quality) => toml::to_string(&GaussFile { model, quality }),
        };
        text.map_err(|e| CliError::Numerical(format!("cannot serialize fit: {e}")))
    }
}

pub fn fit_model(
    inputs: &FitInputs,
    cfg: &PipelineConfig,
    kind: ModelKind,
) -> CliResult<FittedModel> {
    Ok(match kind {
        ModelKind::Emg => FittedModel::Emg(fit_emg_model(&inputs.hists, &cfg.fit.emg)?),
        ModelKind::Gaussian => {
            let mut g = cfg.fit.gaussian.clone();
            g.nbars = cfg.fit.states.clone();
            let (m, q) = fit_gaussian_sum(&inputs.sum, &inputs.scaling, cfg.eta, &g)?;
            FittedModel::Gaussian(m, q)
        }
    })
}

fn binned(curve: &Mixture, edges: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; edges.len() - 1];
    for c in &curve.components {
        add_binned(c, edges, &mut out);
    }
    out
}

pub fn write_fit_inputs(out: &mut Output, inputs: &FitInputs) -> CliResult<()> {
    let centers = inputs.sum.centers();
    let mut cols = vec!["t_ps".to_string()];
    cols.extend(
        inputs
            .hists
            .iter()
            .map(|h| format!("nbar_{}", h.mean_photon_number)),
    );
    cols.push("sum".into());
    let mut t = Table::new("histograms");
    t.columns = cols;
    t.rows = centers
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let mut r = vec![c];
            r.extend(inputs.hists.iter().map(|h| h.counts[i] as f64));
            r.push(inputs.sum.counts[i] as f64);
            r
        })
        .collect();
    out.table(
        "histograms.csv",
        t.with_meta("bin_width", inputs.sum.bin_width()),
    )?;

    let law = inputs.scaling.law;
    let mut t = Table::new("peaks").with_columns(&["n", "inv_sqrt_n", "found_ps", "law_ps"]);
    t.rows = inputs
        .peaks
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let n = i + 1;
            vec![n as f64, 1.0 / (n as f64).sqrt(), p, law.position(n)]
        })
        .collect();
    out.table(
        "peaks.csv",
        t.with_meta("m_lin", law.m_lin)
            .with_meta("b_lin", law.b_lin)
            .with_meta("r_squared", inputs.scaling.r_squared),
    )?;

    let mut plot = Plot::new(
        "Arrival-time histograms",
        "arrival time (ps)",
        "counts per bin",
    );
    for (i, h) in inputs.hists.iter().enumerate() {
        let pts = centers
            .iter()
            .zip(&h.counts)
            .map(|(&x, &c)| (x, 3.0 * c as f64))
            .collect();
        plot.series
            .push(Series::line(format!("n̄={} (x3)", h.mean_photon_number), pts).color(i));
    }
    let sum_pts = centers
        .iter()
        .zip(&inputs.sum.counts)
        .map(|(&x, &c)| (x, c as f64))
        .collect();
    plot.series.push(Series::line("sum", sum_pts).color(9));
    out.plot("histograms.svg", &plot)?;

    let found = inputs
        .peaks
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, 1.0 / ((i + 1) as f64).sqrt()))
        .collect();
    let lo = inputs.peaks.last().copied().unwrap_or(0.0) - 20.0;
    let hi = inputs.peaks.first().copied().unwrap_or(0.0) + 20.0;
    let line = (0..=50)
        .map(|k| {
            let x = lo + (hi - lo) * k as f64 / 50.0;
            (x, law.m_lin * x + law.b_lin)
        })
        .collect();
    let plot = Plot::new("Peak positions", "peak position (ps)", "1/sqrt(n)")
        .with(Series::line("found peaks", found).markers())
        .with(Series::line("linear fit", line).dashed());
    out.plot("peaks.svg", &plot)
}

pub fn write_fit(out: &mut Output, inputs: &FitInputs, fit: &FittedModel) -> CliResult<()> {
    let name = fit.kind().name();
    out.text(&format!("fit_{name}.toml"), &fit.to_toml()?)?;
    let edges = &inputs.sum.bin_edges;
    let model = fit.summed_counts(edges);
    let curves = fit.curves();
    let shown = curves.len().min(SHOWN_CURVES);
    let per: Vec<Vec<f64>> = curves[..shown].iter().map(|c| binned(c, edges)).collect();

    let mut t = Table::new("fit_curves");
    t.columns = ["t_ps", "counts", "model"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    t.columns.extend((1..=shown).map(|n| format!("g_{n}")));
    t.rows = inputs
        .sum
        .centers()
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let mut r = vec![c, inputs.sum.counts[i] as f64, model[i]];
            r.extend(per.iter().map(|p| p[i]));
            r
        })
        .collect();
    out.table(
        &format!("fit_{name}_curves.csv"),
        t.with_meta("model", name)
            .with_meta("chi_squared", fit.chi_squared()),
    )?;

    if let FittedModel::Emg(f) = fit {
        let mut t = Table::new("emg_states").with_columns(&[
            "nbar",
            "offset_ps",
            "tau_ps",
            "sigma_1_ps",
            "chi_squared",
        ]);
        t.rows = f
            .states
            .iter()
            .map(|s| {
                vec![
                    s.mean_photon_number,
                    s.offset,
                    s.tau,
                    s.sigmas[0],
                    s.chi_squared,
                ]
            })
            .collect();
        out.table("fit_emg_states.csv", t)?;
    }
    out.plot(
        &format!("fit_{name}.svg"),
        &fit_plot(inputs, fit, &per, &[], &format!("{name} fit")),
    )
}

fn fit_plot(
    inputs: &FitInputs,
    fit: &FittedModel,
    per: &[Vec<f64>],
    vlines: &[f64],
    title: &str,
) -> Plot {
    let centers = inputs.sum.centers();
    let mut plot = Plot::new(title, "arrival time (ps)", "counts per bin").log_y();
    plot.log_floor = Some(1e-5);
    let pts = centers
        .iter()
        .zip(&inputs.sum.counts)
        .map(|(&x, &c)| (x, c as f64))
        .collect();
    plot.series.push(Series::line("data", pts).color(9));
    let model = fit.summed_counts(&inputs.sum.bin_edges);
    plot.series.push(
        Series::line("model", centers.iter().copied().zip(model).collect())
            .dashed()
            .color(2),
    );
    for (n, p) in per.iter().enumerate() {
        let pts = centers.iter().copied().zip(p.iter().copied()).collect();
        plot.series
            .push(Series::line(format!("g_{}", n + 1), pts).color(if n >= 2 { n + 1 } else { n }));
    }
    plot.vlines = vlines.to_vec();
    plot
}

pub struct Assignment {
    pub mode: RegionMode,
    pub resolvability: Resolvability,
    pub tiles: PhotonRegions,
    pub regions: PhotonRegions,
    pub overlap: OverlapMatrix,
    pub errors: ErrorReport,
}

pub fn resolvability(curves: &[Mixture]) -> CliResult<Resolvability> {
    let shown = curves.len().min(10);
    let mut peaks = Vec::with_capacity(shown);
    let mut widths = Vec::with_capacity(shown);
    for (i, c) in curves[..shown].iter().enumerate() {
        let none = || CliError::Numerical(format!("curve g_{} has no mass", i + 1));
        peaks.push(c.mode().ok_or_else(none)?);
        widths.push(c.fwhm().ok_or_else(none)?);
    }
    Ok(max_resolvable_photon_number(&peaks, &widths)?)
}

pub fn assign_stage(
    curves: &[Mixture],
    cfg: &PipelineConfig,
    mode: RegionMode,
) -> CliResult<Assignment> {
    let resolvability = resolvability(curves)?;
    let a = &cfg.assign;
    let outcomes = a.outcomes.unwrap_or(resolvability.n_max + 1);
    if outcomes > curves.len() {
        return Err(CliError::Config(format!(
            "{outcomes} outcome labels but only {} fitted curves",
            curves.len()
        )));
    }
    let tiles =
        intersections(&curves[..outcomes], cfg.histogram.range(), a.weighting)?.with_or_more_last();
    let regions = match mode {
        RegionMode::Tiling => tiles.clone(),
        RegionMode::Optimized => {
            let w = RegionWeights {
                misidentified: a.misidentified_weight,
                missing: a.missing_weight,
            };
            optimize_regions(curves, &tiles, w, None, a.min_width)?
        }
    };
    let overlap = overlap_matrix(curves, &regions)?;
    let errors = ErrorReport::from_overlap(&overlap)?;
    Ok(Assignment {
        mode,
        resolvability,
        tiles,
        regions,
        overlap,
        errors,
    })
}

fn boundaries(r: &PhotonRegions) -> Vec<f64> {
    let mut v: Vec<f64> = r
        .regions()
        .iter()
        .flat_map(|r| [r.lower, r.upper])
        .collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

pub fn write_assign(
    out: &mut Output,
    inputs: &FitInputs,
    fit: &FittedModel,
    a: &Assignment,
) -> CliResult<()> {
    let tag = format!("{}_{}", fit.kind().name(), a.mode.name());
    let n_max = a.resolvability.n_max;

    let mut t = Table::new("regions").with_columns(&["label", "lower_ps", "upper_ps", "or_more"]);
    t.rows = a
        .regions
        .regions()
        .iter()
        .map(|r| {
            vec![
                r.label as f64,
                r.lower,
                r.upper,
                f64::from(u8::from(r.or_more)),
            ]
        })
        .collect();
    out.table(&format!("regions_{tag}.csv"), t.with_meta("n_max", n_max))?;

    let mut t = Table::from_matrix("overlap", &a.overlap.entries);
    t.columns = a
        .regions
        .regions()
        .iter()
        .map(|r| format!("region_{}", r.label))
        .collect();
    out.table(&format!("overlap_{tag}.csv"), t)?;

    let mut t = Table::new("errors").with_columns(&["label", "p_missing", "p_misidentified"]);
    t.rows = a
        .errors
        .entries
        .iter()
        .map(|e| vec![e.label as f64, e.p_missing, e.p_misidentified])
        .collect();
    out.table(&format!("errors_{tag}.csv"), t.with_meta("n_max", n_max))?;

    let curves = fit.curves();
    let shown = curves.len().min(SHOWN_CURVES);
    let per: Vec<Vec<f64>> = curves[..shown]
        .iter()
        .map(|c| binned(c, &inputs.sum.bin_edges))
        .collect();
    let title = format!("{} fit with {} regions", fit.kind().name(), a.mode.name());
    out.plot(
        &format!("regions_{tag}.svg"),
        &fit_plot(inputs, fit, &per, &boundaries(&a.regions), &title),
    )?;

    let pick = |f: fn(&pnr_core::assignment::RegionErrors) -> f64| {
        a.errors
            .entries
            .iter()
            .map(|e| (e.label as f64, f(e)))
            .collect::<Vec<_>>()
    };
    let plot = Plot::new("Assignment errors", "photon number n", "probability")
        .log_y()
        .with(Series::line("p_missing", pick(|e| e.p_missing)))
        .with(Series::line("p_misidentified", pick(|e| e.p_misidentified)).dashed());
    out.plot(&format!("errors_{tag}.svg"), &plot)
}

pub fn sweep_stage(
    curves: &[Mixture],
    a: &Assignment,
    cfg: &PipelineConfig,
) -> CliResult<Vec<SweepPoint>> {
    let c = &cfg.assign;
    Ok(region_sweep(
        curves,
        &a.tiles,
        c.sweep_label,
        Edge::Upper,
        c.sweep_step,
        c.sweep_points,
    )?)
}

pub fn write_sweep(
    out: &mut Output,
    kind: ModelKind,
    label: usize,
    sweep: &[SweepPoint],
) -> CliResult<()> {
    let name = kind.name();
    let mut t = Table::new("region_sweep").with_columns(&[
        "width_ps",
        "lower_ps",
        "upper_ps",
        "p_missing",
        "p_misidentified",
    ]);
    t.rows = sweep
        .iter()
        .map(|s| vec![s.width, s.lower, s.upper, s.p_missing, s.p_misidentified])
        .collect();
    out.table(&format!("sweep_{name}.csv"), t.with_meta("label", label))?;
    let plot = Plot::new(
        &format!("Narrowing region {label}"),
        "region width (ps)",
        "probability",
    )
    .log_y()
    .with(Series::line(
        "p_missing",
        sweep.iter().map(|s| (s.width, s.p_missing)).collect(),
    ))
    .with(
        Series::line(
            "p_misidentified",
            sweep.iter().map(|s| (s.width, s.p_misidentified)).collect(),
        )
        .dashed(),
    );
    out.plot(&format!("sweep_{name}.svg"), &plot)
}

pub struct Tomography {
    pub nbars: Vec<f64>,
    pub dimension: usize,
    pub p: OutcomeMatrix,
    pub rec: PovmMatrix,
    pub sim: PovmMatrix,
    pub smoothing: Vec<SmoothingPoint>,
    pub fid_rec: Vec<f64>,
    pub fid_sim: Vec<f64>,
    pub avg_rec: f64,
    pub avg_sim: f64,
    pub gamma: f64,
}

pub fn tomo_stage(bundle: &Bundle, cfg: &PipelineConfig, a: &Assignment) -> CliResult<Tomography> {
    let entries = &bundle.manifest.states;
    let take = cfg.tomo.states.min(entries.len());
    if take < cfg.tomo.states {
        eprintln!(
            "warning: bundle has {} states, using all of them for tomography",
            entries.len()
        );
    }
    let entries = &entries[..take];
    let labels = a.regions.len();
    let counts = entries
        .par_iter()
        .map(|e| {
            let pairs = bundle.pairs(e, cfg.histogram.window)?;
            Ok(OutcomeCounts::tally(
                &assign_pairs(&pairs, &a.regions),
                labels,
            ))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let p = build_outcome_matrix(&counts)?;
    let nbars: Vec<f64> = entries.iter().map(|e| e.mean_photon_number).collect();
    let max_nbar = nbars.iter().copied().fold(0.0, f64::max);
    let dimension = hilbert_dimension(max_nbar, cfg.tomo.tail)?;
    let f = coherent_state_matrix(&nbars, dimension)?;
    let gamma = cfg.tomo.gamma;
    let rec = reconstruct_povm(&p, &f, gamma)?;
    let t = &cfg.tomo;
    let smoothing = sweep_smoothing(
        &p,
        &f,
        &log_grid(t.gamma_grid[0], t.gamma_grid[1], t.gamma_points),
    )?;
    let sim = simulate_povm(&loss_matrix(dimension, cfg.eta)?, &a.overlap)?;
    let pred_rec = predict_outcomes(&f, &rec)?;
    let pred_sim = predict_outcomes(&f, &sim)?;
    Ok(Tomography {
        dimension,
        fid_rec: column_fidelities(&p.p, &pred_rec.p)?,
        fid_sim: column_fidelities(&p.p, &pred_sim.p)?,
        avg_rec: average_fidelity(&p.p, &pred_rec.p)?,
        avg_sim: average_fidelity(&p.p, &pred_sim.p)?,
        nbars,
        p,
        rec,
        sim,
        smoothing,
        gamma,
    })
}

fn outcome_columns(n: usize) -> Vec<String> {
    (0..n).map(|j| format!("n'={j}")).collect()
}

fn povm_plot(title: &str, pi: &nalgebra::DMatrix<f64>, rows: usize) -> Plot {
    let mut plot = Plot::new(title, "photon number n", "p(n'|n)");
    for j in 0..pi.ncols() {
        let pts = (0..rows.min(pi.nrows()))
            .map(|n| (n as f64, pi[(n, j)]))
            .collect();
        plot.series.push(Series::line(format!("n'={j}"), pts));
    }
    plot
}

pub fn write_tomo(out: &mut Output, t: &Tomography) -> CliResult<()> {
    let outcomes = t.p.outcomes();
    let mut s = Table::new("input_states").with_columns(&["d", "nbar", "trials", "invalid"]);
    s.rows = t
        .nbars
        .iter()
        .enumerate()
        .map(|(d, &nb)| {
            vec![
                d as f64,
                nb,
                t.p.trials.get(d).copied().unwrap_or(0) as f64,
                t.p.invalid.get(d).copied().unwrap_or(0) as f64,
            ]
        })
        .collect();
    out.table("input_states.csv", s.with_meta("dimension", t.dimension))?;

    let mut p = Table::from_matrix("outcome_matrix", &t.p.p);
    p.columns = outcome_columns(outcomes);
    out.table("outcomes.csv", p)?;

    let mut r = Table::from_matrix("povm", &t.rec.pi);
    r.columns = outcome_columns(outcomes);
    let mut r = r.with_meta("gamma", t.gamma);
    if let Some(d) = &t.rec.diagnostics {
        r = r
            .with_meta("kkt_residual", d.kkt_residual)
            .with_meta("iterations", d.iterations);
    }
    out.table("povm.csv", r)?;

    let mut r = Table::from_matrix("povm_simulated", &t.sim.pi);
    r.columns = outcome_columns(outcomes);
    out.table("povm_sim.csv", r)?;

    let mut s = Table::new("smoothing").with_columns(&["gamma", "pi_11", "objective"]);
    s.rows = t
        .smoothing
        .iter()
        .map(|p| vec![p.gamma, p.pi_11, p.objective])
        .collect();
    out.table("smoothing.csv", s)?;

    let mut f = Table::new("fidelity").with_columns(&["outcome", "reconstructed", "simulated"]);
    f.rows = (0..outcomes)
        .map(|j| vec![j as f64, t.fid_rec[j], t.fid_sim[j]])
        .collect();
    out.table(
        "fidelity.csv",
        f.with_meta("average_reconstructed", t.avg_rec)
            .with_meta("average_simulated", t.avg_sim),
    )?;

    let mut plot = Plot::new("Outcome matrix", "input state d", "P(d, n')");
    for j in 0..outcomes {
        let pts = (0..t.p.p.nrows())
            .map(|d| (d as f64, t.p.p[(d, j)]))
            .collect();
        plot.series.push(Series::line(format!("n'={j}"), pts));
    }
    out.plot("outcomes.svg", &plot)?;
    out.plot(
        "povm.svg",
        &povm_plot(
            &format!("Reconstructed POVM, gamma={}", t.gamma),
            &t.rec.pi,
            16,
        ),
    )?;
    out.plot("povm_sim.svg", &povm_plot("Simulated POVM", &t.sim.pi, 16))?;
    let plot = Plot::new("Smoothing sweep", "gamma", "p(1|1)")
        .log_x()
        .with(Series::line(
            "Pi_11",
            t.smoothing.iter().map(|p| (p.gamma, p.pi_11)).collect(),
        ));
    out.plot("smoothing.svg", &plot)
}

/// Seconds to picoseconds, rounded clear of the conversion's last-digit noise.
pub fn to_ps(s: f64) -> f64 {
    (s * 1e21).round() / 1e9
}

/// Bandwidth settings of the pulse-duration table, nm.
pub const TABLE_BANDWIDTHS_NM: [f64; 3] = [0.01, 0.14, 2.66];

pub fn pulse_table(p: &PulseConfig) -> CliResult<Vec<(f64, PulseReport)>> {
    TABLE_BANDWIDTHS_NM
        .iter()
        .map(|&bw| {
            Ok((
                bw,
                pulse_report(
                    &PulseConfig {
                        bandwidth_nm: bw,
                        ..*p
                    }
                    .spec(),
                )?,
            ))
        })
        .collect()
}

pub fn write_pulse_table(out: &mut Output, p: &PulseConfig) -> CliResult<()> {
    let mut t = Table::new("pulse_durations").with_columns(&[
        "bandwidth_nm",
        "transform_limited_ps",
        "dispersed_ps",
        "low_ps",
        "high_ps",
        "empirical_ps",
        "empirical_uncertainty_ps",
        "disagrees",
    ]);
    for (bw, r) in pulse_table(p)? {
        let (ev, eu) = r.empirical.map_or((f64::NAN, f64::NAN), |e| {
            (to_ps(e.value), to_ps(e.uncertainty))
        });
        t.rows.push(vec![
            bw,
            r.transform_limited * 1e12,
            r.dispersed * 1e12,
            r.interval.low * 1e12,
            r.interval.high * 1e12,
            ev,
            eu,
            f64::from(u8::from(r.disagrees_with_empirical)),
        ]);
    }
    out.table(
        "pulse_durations.csv",
        t.with_meta("fiber_m", p.fiber_m).with_meta("tbp", p.tbp),
    )
}

/// Paired error table: one row per label, two columns per model.
pub fn write_error_comparison(
    out: &mut Output,
    gauss: &Assignment,
    emg: &Assignment,
) -> CliResult<()> {
    let mut t = Table::new("error_comparison").with_columns(&[
        "label",
        "gaussian_p_missing",
        "gaussian_p_misidentified",
        "emg_p_missing",
        "emg_p_misidentified",
    ]);
    for e in &emg.errors.entries {
        let g = gauss.errors.get(e.label);
        t.rows.push(vec![
            e.label as f64,
            g.map_or(f64::NAN, |g| g.p_missing),
            g.map_or(f64::NAN, |g| g.p_misidentified),
            e.p_missing,
            e.p_misidentified,
        ]);
    }
    out.table("error_comparison.csv", t)
}

pub fn write_povm_elements(out: &mut Output, t: &Tomography) -> CliResult<()> {
    let rows = t.rec.pi.nrows().min(8);
    let mut tab = Table::new("povm_elements");
    tab.columns = std::iter::once("n".to_string())
        .chain(outcome_columns(t.rec.pi.ncols()))
        .collect();
    tab.rows = (0..rows)
        .map(|n| {
            std::iter::once(n as f64)
                .chain(t.rec.pi.row(n).iter().copied())
                .collect()
        })
        .collect();
    out.table("povm_elements.csv", tab.with_meta("gamma", t.gamma))
}

pub fn write_optimized_errors(out: &mut Output, a: &Assignment) -> CliResult<()> {
    let mut t = Table::new("optimized_errors").with_columns(&[
        "label",
        "lower_ps",
        "upper_ps",
        "p_missing",
        "p_misidentified",
    ]);
    for e in &a.errors.entries {
        let r = a
            .regions
            .get(e.label)
            .expect("report entries follow the regions");
        t.rows.push(vec![
            e.label as f64,
            r.lower,
            r.upper,
            e.p_missing,
            e.p_misidentified,
        ]);
    }
    out.table("optimized_errors.csv", t)
}
