//! `pnr`: simulate, fit, assign, reconstruct and report.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod error;
mod output;
mod pipeline;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pnr_core::optics::pulse_report;
use pnr_core::simulator::write_bundle;

use config::{BundleFormat, ModelKind, PipelineConfig, RegionMode};
use error::{CliError, CliResult};
use output::{Output, Provenance};
use pipeline::*;

#[derive(Parser)]
#[command(
    name = "pnr",
    version,
    about = "Photon-number assignment analysis for SNSPD arrival-time data"
)]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for all artifacts.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset bundle with ground truth.
    Simulate(SimulateArgs),
    /// Fit the histogram model to the bundle's fit states.
    Fit(AnalysisArgs),
    /// Fit, then build photon-number regions and error probabilities.
    Assign(AnalysisArgs),
    /// Fit, assign, then reconstruct the detector POVM.
    Tomo(AnalysisArgs),
    /// Transform-limited and fibre-dispersed pulse duration.
    PulseDuration(PulseArgs),
    /// Run every stage for both models and write all tables and plots.
    Report(AnalysisArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Master seed; every state derives its own stream from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per input state.
    #[arg(long)]
    trials: Option<usize>,
    /// Simulate only the first N states of the schedule.
    #[arg(long)]
    states: Option<usize>,
    /// Timestamp file format.
    #[arg(long, value_enum)]
    format: Option<BundleFormat>,
    /// Optical pulse FWHM in ps.
    #[arg(long)]
    pulse_fwhm: Option<f64>,
}

#[derive(Args)]
struct AnalysisArgs {
    /// Bundle directory containing manifest.toml.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Histogram model used by the assignment and tomography stages.
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    /// Histogram bin width in ps.
    #[arg(long)]
    bin_width: Option<f64>,
    /// Detection efficiency assumed by the analysis.
    #[arg(long)]
    eta: Option<f64>,
    /// Curve-intersection tiling or optimized regions.
    #[arg(long, value_enum)]
    regions: Option<RegionMode>,
    /// Outcome labels including the final "or more" label.
    #[arg(long)]
    outcomes: Option<usize>,
    /// Smoothing parameter of the reconstruction.
    #[arg(long)]
    gamma: Option<f64>,
    /// Leading bundle states used for tomography.
    #[arg(long)]
    tomo_states: Option<usize>,
}

#[derive(Args)]
struct PulseArgs {
    #[arg(long)]
    lambda_nm: Option<f64>,
    #[arg(long)]
    bandwidth_nm: Option<f64>,
    /// Time-bandwidth product (0.441 Gaussian, 0.315 sech²).
    #[arg(long)]
    tbp: Option<f64>,
    #[arg(long)]
    fiber_m: Option<f64>,
    /// Dispersion parameter in s/m².
    #[arg(long)]
    dispersion: Option<f64>,
    #[arg(long)]
    refractive_index: Option<f64>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl AnalysisArgs {
    fn apply(&self, c: &mut PipelineConfig) {
        if self.data.is_some() {
            c.data = self.data.clone();
        }
        set(&mut c.model, self.model);
        set(&mut c.histogram.bin_width, self.bin_width);
        set(&mut c.eta, self.eta);
        set(&mut c.assign.regions, self.regions);
        if self.outcomes.is_some() {
            c.assign.outcomes = self.outcomes;
        }
        set(&mut c.tomo.gamma, self.gamma);
        set(&mut c.tomo.states, self.tomo_states);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pnr: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size the worker pool: {e}")))?;
    }
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(d) = cli.out_dir {
        cfg.out_dir = d;
    }
    match &cli.command {
        Command::Simulate(a) => {
            set(&mut cfg.simulate.seed, a.seed);
            set(&mut cfg.simulate.trials_per_state, a.trials);
            if a.states.is_some() {
                cfg.simulate.states = a.states;
            }
            set(&mut cfg.simulate.format, a.format);
            set(&mut cfg.simulate.model.optical_pulse_fwhm, a.pulse_fwhm);
        }
        Command::Fit(a) | Command::Assign(a) | Command::Tomo(a) | Command::Report(a) => {
            a.apply(&mut cfg)
        }
        Command::PulseDuration(a) => {
            let p = &mut cfg.pulse;
            set(&mut p.lambda_nm, a.lambda_nm);
            set(&mut p.bandwidth_nm, a.bandwidth_nm);
            set(&mut p.tbp, a.tbp);
            set(&mut p.fiber_m, a.fiber_m);
            set(&mut p.dispersion, a.dispersion);
            set(&mut p.refractive_index, a.refractive_index);
        }
    }
    cfg.validate()?;
    match cli.command {
        Command::Simulate(_) => simulate(&cfg),
        Command::PulseDuration(_) => pulse_duration(&cfg),
        Command::Fit(_) => analyse(&cfg, Stage::Fit),
        Command::Assign(_) => analyse(&cfg, Stage::Assign),
        Command::Tomo(_) => analyse(&cfg, Stage::Tomo),
        Command::Report(_) => report(&cfg),
    }
}

fn simulate(cfg: &PipelineConfig) -> CliResult<()> {
    let dir = cfg.data_dir();
    let s = &cfg.simulate;
    let manifest = write_bundle(&s.scenario(), &dir, &s.format.into(), s.states)?;
    let clicks: usize = manifest.states.iter().map(|e| e.clicks).sum();
    println!(
        "simulated {} states ({} trials each, {clicks} clicks) into {}",
        manifest.states.len(),
        s.trials_per_state,
        dir.display()
    );
    Ok(())
}

fn pulse_duration(cfg: &PipelineConfig) -> CliResult<()> {
    let p = &cfg.pulse;
    let r = pulse_report(&p.spec())?;
    println!("lambda_nm = {:?}", p.lambda_nm);
    println!("bandwidth_nm = {:?}", p.bandwidth_nm);
    println!("tbp = {:?}", p.tbp);
    println!("fiber_m = {:?}", p.fiber_m);
    println!("transform_limited_ps = {:.4}", r.transform_limited * 1e12);
    println!("dispersed_ps = {:.4}", r.dispersed * 1e12);
    println!(
        "interval_ps = [{:.4}, {:.4}]",
        r.interval.low * 1e12,
        r.interval.high * 1e12
    );
    if let Some(e) = r.empirical {
        println!("empirical_ps = {:?}", to_ps(e.value));
        println!("empirical_uncertainty_ps = {:?}", to_ps(e.uncertainty));
        println!("disagrees_with_empirical = {}", r.disagrees_with_empirical);
        if r.disagrees_with_empirical {
            println!(
                "note = \"formula gives {:.1} ps; the empirical estimate {:.0} +- {:.0} ps is reported separately\"",
                r.dispersed * 1e12,
                e.value * 1e12,
                e.uncertainty * 1e12
            );
        }
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Stage {
    Fit,
    Assign,
    Tomo,
}

fn open_output(cfg: &PipelineConfig, bundle: &Bundle) -> CliResult<Output> {
    Output::create(
        &cfg.out_dir,
        Provenance {
            config_sha256: cfg.digest(),
            seed: bundle.manifest.seed,
        },
    )
}

fn analyse(cfg: &PipelineConfig, stage: Stage) -> CliResult<()> {
    let bundle = Bundle::open(&cfg.data_dir())?;
    let mut out = open_output(cfg, &bundle)?;
    out.text("config.toml", &cfg.portable_toml())?;
    let inputs = fit_inputs(&bundle, cfg)?;
    write_fit_inputs(&mut out, &inputs)?;
    let fit = fit_model(&inputs, cfg, cfg.model)?;
    write_fit(&mut out, &inputs, &fit)?;
    println!("fit {}: chi2 = {:.6e}", cfg.model.name(), fit.chi_squared());
    if stage >= Stage::Assign {
        let curves = fit.curves();
        let a = assign_stage(&curves, cfg, cfg.assign.regions)?;
        write_assign(&mut out, &inputs, &fit, &a)?;
        print_errors(&a);
        let sweep = sweep_stage(&curves, &a, cfg)?;
        write_sweep(&mut out, cfg.model, cfg.assign.sweep_label, &sweep)?;
        if stage >= Stage::Tomo {
            let t = tomo_stage(&bundle, cfg, &a)?;
            write_tomo(&mut out, &t)?;
            print_tomo(&t);
        }
    }
    println!(
        "wrote {} files to {}",
        out.written().len(),
        out.dir().display()
    );
    Ok(())
}

fn print_errors(a: &Assignment) {
    println!("resolvable up to n = {}", a.resolvability.n_max);
    for e in &a.errors.entries {
        println!(
            "  region {}: p_missing = {:.4e}, p_misidentified = {:.4e}",
            e.label, e.p_missing, e.p_misidentified
        );
    }
}

fn print_tomo(t: &Tomography) {
    println!(
        "tomography: {} states, M = {}, gamma = {}: average fidelity {:.5} (reconstructed), {:.5} (simulated)",
        t.nbars.len(),
        t.dimension,
        t.gamma,
        t.avg_rec,
        t.avg_sim
    );
}

fn report(cfg: &PipelineConfig) -> CliResult<()> {
    let bundle = Bundle::open(&cfg.data_dir())?;
    let mut out = open_output(cfg, &bundle)?;
    out.text("config.toml", &cfg.portable_toml())?;
    let inputs = fit_inputs(&bundle, cfg)?;
    write_fit_inputs(&mut out, &inputs)?;

    let emg = fit_model(&inputs, cfg, ModelKind::Emg)?;
    write_fit(&mut out, &inputs, &emg)?;
    let gauss = fit_model(&inputs, cfg, ModelKind::Gaussian)?;
    write_fit(&mut out, &inputs, &gauss)?;
    println!(
        "chi2: emg {:.6e}, gaussian {:.6e}",
        emg.chi_squared(),
        gauss.chi_squared()
    );

    let emg_curves = emg.curves();
    let a_emg = assign_stage(&emg_curves, cfg, RegionMode::Tiling)?;
    write_assign(&mut out, &inputs, &emg, &a_emg)?;
    let a_gauss = assign_stage(&gauss.curves(), cfg, RegionMode::Tiling)?;
    write_assign(&mut out, &inputs, &gauss, &a_gauss)?;
    write_error_comparison(&mut out, &a_gauss, &a_emg)?;
    print_errors(&a_emg);

    let a_opt = assign_stage(&emg_curves, cfg, RegionMode::Optimized)?;
    write_assign(&mut out, &inputs, &emg, &a_opt)?;
    write_optimized_errors(&mut out, &a_opt)?;
    let sweep = sweep_stage(&emg_curves, &a_emg, cfg)?;
    write_sweep(&mut out, ModelKind::Emg, cfg.assign.sweep_label, &sweep)?;

    let (fit, mode) = (
        if cfg.model == ModelKind::Emg {
            &emg
        } else {
            &gauss
        },
        cfg.assign.regions,
    );
    let a = match (cfg.model, mode) {
        (ModelKind::Emg, RegionMode::Tiling) => a_emg,
        (ModelKind::Emg, RegionMode::Optimized) => a_opt,
        (ModelKind::Gaussian, RegionMode::Tiling) => a_gauss,
        (ModelKind::Gaussian, RegionMode::Optimized) => {
            let a = assign_stage(&fit.curves(), cfg, mode)?;
            write_assign(&mut out, &inputs, fit, &a)?;
            a
        }
    };
    let t = tomo_stage(&bundle, cfg, &a)?;
    write_tomo(&mut out, &t)?;
    write_povm_elements(&mut out, &t)?;
    print_tomo(&t);

    write_pulse_table(&mut out, &cfg.pulse)?;
    let summary = format!(
        "chi_squared_emg = {}\nchi_squared_gaussian = {}\nn_max = {}\ntomography_model = \"{}\"\nregions = \"{}\"\ngamma = {}\nhilbert_dimension = {}\naverage_fidelity_reconstructed = {}\naverage_fidelity_simulated = {}\n",
        emg.chi_squared(),
        gauss.chi_squared(),
        a.resolvability.n_max,
        cfg.model.name(),
        mode.name(),
        t.gamma,
        t.dimension,
        t.avg_rec,
        t.avg_sim
    );
    out.text("summary.toml", &summary)?;
    println!(
        "wrote {} files to {}",
        out.written().len(),
        out.dir().display()
    );
    Ok(())
}
