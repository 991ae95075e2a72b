//! Pipeline configuration: one TOML file, overridden by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use pnr_core::assignment::CurveWeighting;
use pnr_core::fitting::{EmgFitConfig, GaussFitConfig, FIT_STATES};
use pnr_core::optics::PulseSpec;
use pnr_core::simulator::{DetectorModel, NbarSchedule, ScenarioConfig};
use pnr_core::timestamps::TimestampFormat;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Emg,
    Gaussian,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Emg => "emg",
            ModelKind::Gaussian => "gaussian",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RegionMode {
    #[default]
    Tiling,
    Optimized,
}

impl RegionMode {
    pub fn name(self) -> &'static str {
        match self {
            RegionMode::Tiling => "tiling",
            RegionMode::Optimized => "optimized",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BundleFormat {
    Text,
    #[default]
    Binary,
}

impl From<BundleFormat> for TimestampFormat {
    fn from(f: BundleFormat) -> Self {
        match f {
            BundleFormat::Text => TimestampFormat::Text,
            BundleFormat::Binary => TimestampFormat::Binary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Bundle directory holding `manifest.toml`. Defaults to `<out_dir>/data`.
    pub data: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Detection efficiency assumed by the analysis (Gaussian weights, loss
    /// matrix). The simulator's own efficiency lives in `simulate.model`.
    pub eta: f64,
    pub model: ModelKind,
    pub simulate: SimulateConfig,
    pub histogram: HistogramConfig,
    pub fit: FitConfig,
    pub assign: AssignConfig,
    pub tomo: TomoConfig,
    pub pulse: PulseConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data: None,
            out_dir: PathBuf::from("pnr-out"),
            eta: 0.91,
            model: ModelKind::Emg,
            simulate: SimulateConfig::default(),
            histogram: HistogramConfig::default(),
            fit: FitConfig::default(),
            assign: AssignConfig::default(),
            tomo: TomoConfig::default(),
            pulse: PulseConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: u64,
    pub trials_per_state: usize,
    /// Simulate only the first `states` entries of the schedule.
    pub states: Option<usize>,
    pub format: BundleFormat,
    pub model: DetectorModel,
    pub schedule: NbarSchedule,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let s = ScenarioConfig::default();
        Self {
            seed: s.seed,
            trials_per_state: s.trials_per_state,
            states: None,
            format: BundleFormat::default(),
            model: s.model,
            schedule: s.schedule,
        }
    }
}

impl SimulateConfig {
    pub fn scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            model: self.model.clone(),
            schedule: self.schedule.clone(),
            trials_per_state: self.trials_per_state,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramConfig {
    /// Bin width in ps.
    pub bin_width: f64,
    /// Binned range in ps. Half-integer edges keep integer timestamps off
    /// the bin boundaries.
    pub range: [f64; 2],
    /// Coincidence window after each trigger, ps.
    pub window: i64,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self {
            bin_width: 2.0,
            range: [300.5, 1000.5],
            window: 2000,
        }
    }
}

impl HistogramConfig {
    pub fn range(&self) -> (f64, f64) {
        (self.range[0], self.range[1])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Mean photon numbers of the bundle states that enter the fits.
    pub states: Vec<f64>,
    /// Peaks located on the summed histogram for the peak-law fit.
    pub peaks: usize,
    pub emg: EmgFitConfig,
    pub gaussian: GaussFitConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            states: FIT_STATES.to_vec(),
            peaks: 5,
            emg: EmgFitConfig::default(),
            gaussian: GaussFitConfig::default(),
        }
    }
}

// The core configs hold floats in nested structs; compare through their
// serialized form.
impl PartialEq for FitConfig {
    fn eq(&self, other: &Self) -> bool {
        toml::to_string(self).ok() == toml::to_string(other).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssignConfig {
    pub regions: RegionMode,
    pub weighting: CurveWeighting,
    /// Number of outcome labels including the final "or more" label.
    /// Defaults to the resolvability limit plus one.
    pub outcomes: Option<usize>,
    pub misidentified_weight: f64,
    pub missing_weight: f64,
    /// Narrowest region the optimizer may produce, ps.
    pub min_width: f64,
    pub sweep_label: usize,
    pub sweep_step: f64,
    pub sweep_points: usize,
}

impl Default for AssignConfig {
    fn default() -> Self {
        Self {
            regions: RegionMode::Tiling,
            weighting: CurveWeighting::Amplitude,
            outcomes: None,
            misidentified_weight: 1.0,
            missing_weight: 0.05,
            min_width: 1.0,
            sweep_label: 1,
            sweep_step: 0.25,
            sweep_points: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TomoConfig {
    pub gamma: f64,
    /// Bounds of the logarithmic smoothing sweep.
    pub gamma_grid: [f64; 2],
    pub gamma_points: usize,
    /// Leading bundle states used as tomography inputs.
    pub states: usize,
    /// Poisson tail mass allowed above the Hilbert-space cut.
    pub tail: f64,
}

impl Default for TomoConfig {
    fn default() -> Self {
        Self {
            gamma: 1e-6,
            gamma_grid: [1e-10, 1e-1],
            gamma_points: 19,
            states: 40,
            tail: 1e-6,
        }
    }
}

/// Pulse parameters in laboratory units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseConfig {
    pub lambda_nm: f64,
    pub bandwidth_nm: f64,
    pub tbp: f64,
    pub fiber_m: f64,
    /// `D_λ` in s/m².
    pub dispersion: f64,
    pub refractive_index: f64,
}

impl Default for PulseConfig {
    fn default() -> Self {
        let s = PulseSpec::default();
        Self {
            // Round away the SI round trip (2.66e-9 * 1e9 is not 2.66).
            lambda_nm: (s.center_wavelength * 1e12).round() / 1e3,
            bandwidth_nm: (s.bandwidth * 1e12).round() / 1e3,
            tbp: s.tbp,
            fiber_m: s.fiber_length,
            dispersion: s.dispersion,
            refractive_index: s.refractive_index,
        }
    }
}

impl PulseConfig {
    pub fn spec(&self) -> PulseSpec {
        PulseSpec {
            center_wavelength: self.lambda_nm * 1e-9,
            bandwidth: self.bandwidth_nm * 1e-9,
            tbp: self.tbp,
            fiber_length: self.fiber_m,
            dispersion: self.dispersion,
            refractive_index: self.refractive_index,
        }
    }
}

impl PipelineConfig {
    /// Defaults, replaced field by field by `path` when given.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data
            .clone()
            .unwrap_or_else(|| self.out_dir.join("data"))
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(0.0..=1.0).contains(&self.eta) || self.eta == 0.0 {
            return bad(format!("eta must lie in (0, 1], got {}", self.eta));
        }
        let h = &self.histogram;
        if !(h.bin_width > 0.0) || !h.bin_width.is_finite() {
            return bad(format!(
                "histogram.bin_width must be positive, got {}",
                h.bin_width
            ));
        }
        if !(h.range[1] > h.range[0]) {
            return bad(format!(
                "histogram.range must be increasing, got {:?}",
                h.range
            ));
        }
        if h.window <= 0 {
            return bad(format!(
                "histogram.window must be positive, got {}",
                h.window
            ));
        }
        if self.simulate.trials_per_state == 0 {
            return bad("simulate.trials_per_state must be at least 1".into());
        }
        if self.fit.states.is_empty() {
            return bad("fit.states is empty".into());
        }
        let t = &self.tomo;
        if !(t.gamma >= 0.0) {
            return bad(format!("tomo.gamma must be >= 0, got {}", t.gamma));
        }
        if !(t.gamma_grid[0] > 0.0 && t.gamma_grid[1] >= t.gamma_grid[0]) || t.gamma_points == 0 {
            return bad("tomo.gamma_grid needs 0 < lo <= hi and gamma_points >= 1".into());
        }
        if t.states == 0 {
            return bad("tomo.states must be at least 1".into());
        }
        if !(t.tail > 0.0 && t.tail < 1.0) {
            return bad(format!("tomo.tail must lie in (0, 1), got {}", t.tail));
        }
        let a = &self.assign;
        if a.outcomes == Some(0) || a.sweep_label == 0 || !(a.sweep_step > 0.0) {
            return bad("assign.outcomes, sweep_label and sweep_step must be positive".into());
        }
        self.simulate
            .model
            .validate()
            .map_err(|e| CliError::Config(format!("simulate.model: {e}")))?;
        Ok(())
    }

    /// The effective configuration with the input and output locations reset,
    /// so runs that differ only in where they read and write agree.
    pub fn portable_toml(&self) -> String {
        let c = Self {
            data: None,
            out_dir: Self::default().out_dir,
            ..self.clone()
        };
        toml::to_string(&c).expect("configuration serializes")
    }

    /// SHA-256 of [`Self::portable_toml`], hex encoded.
    pub fn digest(&self) -> String {
        Sha256::digest(self.portable_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
