//! Monte Carlo timestamp generator with known ground truth.
//!
//! Per trial: `k ~ Poisson(n̄)` photons, `m ~ Binomial(k, η)` detected; a
//! click (`m >= 1`) arrives at `delay + x_m + drift(n̄) + EMG + pulse
//! jitter`, where `x_m` follows the peak law. Trials are generated in fixed
//! chunks with seeds derived from the master seed, so output does not depend
//! on the number of worker threads.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::distributions::{EmgComponent, Mixture, Shape, TailDirection, GAUSS_FWHM_FACTOR};
use crate::fitting::PeakLaw;
use crate::histogram::{Channel, TimestampRecord};
use crate::special::poisson_pmf;
use crate::timestamps::{self, TimestampFormat};
use crate::{par, Error, Result};

/// `sin²(x)/x² = 1/2` at `|x| = SINC2_HALF_MAX_X`.
const SINC2_HALF_MAX_X: f64 = 1.391_557_377_251_13;

/// 1 / 9.5 kHz in picoseconds.
pub const REPETITION_PERIOD_PS: f64 = 1e12 / 9.5e3;

const CHUNK: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseShape {
    #[default]
    Gaussian,
    /// `sinc²` intensity profile: main lobe plus the first two side lobes on
    /// each side.
    SincLike,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorModel {
    pub eta: f64,
    pub emg_sigma: f64,
    pub emg_tau: f64,
    pub tail: TailDirection,
    pub peak_law: PeakLaw,
    /// Constant added to every arrival time (cable and electronics delay).
    pub delay: f64,
    /// Centre shift per unit mean photon number above one ...
    pub drift_per_nbar: f64,
    /// ... saturating at this total shift.
    pub drift_limit: f64,
    pub optical_pulse_fwhm: f64,
    pub optical_pulse_shape: PulseShape,
    pub repetition_period: f64,
    /// Emit a falling edge this long after each rising edge.
    pub falling_edge_delay: Option<f64>,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            eta: 0.91,
            // Gaussian part with 19 ps FWHM.
            emg_sigma: 19.0 / GAUSS_FWHM_FACTOR,
            emg_tau: 12.0,
            tail: TailDirection::TowardLater,
            peak_law: PeakLaw::through(310.0, 180.0).expect("valid default law"),
            delay: 500.0,
            drift_per_nbar: -0.5,
            drift_limit: -4.0,
            optical_pulse_fwhm: 2.9,
            optical_pulse_shape: PulseShape::Gaussian,
            repetition_period: REPETITION_PERIOD_PS,
            falling_edge_delay: None,
        }
    }
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::arg(format!(
                "efficiency must lie in [0, 1], got {}",
                self.eta
            )));
        }
        for (name, v) in [
            ("emg_sigma", self.emg_sigma),
            ("emg_tau", self.emg_tau),
            ("repetition_period", self.repetition_period),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::arg(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.optical_pulse_fwhm >= 0.0) {
            return Err(Error::arg("optical_pulse_fwhm must be >= 0"));
        }
        PeakLaw::new(self.peak_law.m_lin, self.peak_law.b_lin)?;
        Ok(())
    }

    pub fn drift(&self, nbar: f64) -> f64 {
        let raw = self.drift_per_nbar * (nbar - 1.0).max(0.0);
        if self.drift_limit < 0.0 {
            raw.max(self.drift_limit)
        } else {
            raw.min(self.drift_limit)
        }
    }

    /// Centre of the `m`-photon response at mean photon number `nbar`.
    pub fn center(&self, m: u64, nbar: f64) -> f64 {
        self.delay + self.peak_law.position(m as usize) + self.drift(nbar)
    }

    /// Detector response for `m` photons without the optical pulse.
    pub fn detector_shape(&self, m: u64, nbar: f64) -> EmgComponent {
        EmgComponent {
            mu: self.center(m, nbar),
            sigma: self.emg_sigma,
            tau: self.emg_tau,
            tail: self.tail,
            weight: 1.0,
        }
    }

    /// Full arrival-time distribution for `m` photons. Exact for a Gaussian
    /// pulse (widths add in quadrature); `None` for the sinc-like pulse,
    /// whose convolution has no closed form (see [`Self::arrival_distribution`]).
    pub fn arrival_shape(&self, m: u64, nbar: f64) -> Option<EmgComponent> {
        match self.optical_pulse_shape {
            PulseShape::Gaussian => {
                let s = self.optical_pulse_fwhm / GAUSS_FWHM_FACTOR;
                Some(EmgComponent {
                    sigma: self.emg_sigma.hypot(s),
                    ..self.detector_shape(m, nbar)
                })
            }
            PulseShape::SincLike => None,
        }
    }

    /// Arrival-time distribution for `m` photons, for either pulse shape.
    pub fn arrival_distribution(&self, m: u64, nbar: f64) -> ArrivalDistribution {
        match self.arrival_shape(m, nbar) {
            Some(e) => ArrivalDistribution {
                detector: e,
                offsets: vec![(0.0, 1.0)],
            },
            None => {
                let table = SincTable::new(self.optical_pulse_fwhm);
                ArrivalDistribution {
                    detector: self.detector_shape(m, nbar),
                    offsets: table.coarse_points(10),
                }
            }
        }
    }

    /// CDF of the arrival time for `m` photons. Builds the distribution on
    /// every call; use [`Self::arrival_distribution`] for repeated use.
    pub fn arrival_cdf(&self, m: u64, nbar: f64, t: f64) -> f64 {
        self.arrival_distribution(m, nbar).cdf(t)
    }

    /// Expected arrival-time curves `g_1..g_count` (in clicks) for `trials`
    /// pulses at each mean photon number. Needs a Gaussian pulse.
    pub fn expected_curves(
        &self,
        nbars: &[f64],
        trials: f64,
        count: usize,
    ) -> Result<Vec<Mixture>> {
        self.validate()?;
        (1..=count as u64)
            .map(|m| {
                let parts = nbars
                    .iter()
                    .map(|&nb| {
                        let e = self.arrival_shape(m, nb).ok_or_else(|| {
                            Error::arg("expected curves need a Gaussian optical pulse")
                        })?;
                        let w = trials * poisson_pmf(m, nb * self.eta);
                        Ok(Shape::Emg(EmgComponent { weight: w, ..e }))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Mixture::new(parts))
            })
            .collect()
    }
}

/// Inverse-CDF table for the truncated `sinc²` profile on `[-3π, 3π]`
/// (main lobe and two side lobes per side), scaled to a given FWHM.
#[derive(Debug, Clone)]
struct SincTable {
    xs: Vec<f64>,
    cdf: Vec<f64>,
    scale: f64,
}

impl SincTable {
    const N: usize = 6001;

    fn new(fwhm: f64) -> Self {
        let lim = 3.0 * std::f64::consts::PI;
        let n = Self::N;
        let xs: Vec<f64> = (0..n)
            .map(|i| -lim + 2.0 * lim * i as f64 / (n - 1) as f64)
            .collect();
        let pdf: Vec<f64> = xs
            .iter()
            .map(|&x| if x == 0.0 { 1.0 } else { (x.sin() / x).powi(2) })
            .collect();
        let mut cdf = vec![0.0; n];
        for i in 1..n {
            cdf[i] = cdf[i - 1] + 0.5 * (pdf[i] + pdf[i - 1]) * (xs[i] - xs[i - 1]);
        }
        let total = cdf[n - 1];
        cdf.iter_mut().for_each(|c| *c /= total);
        // sinc²(x) = 1/2 at |x| = SINC2_HALF_MAX_X.
        let scale = fwhm / (2.0 * SINC2_HALF_MAX_X);
        Self { xs, cdf, scale }
    }

    fn sample(&self, u: f64) -> f64 {
        let i = self
            .cdf
            .partition_point(|&c| c < u)
            .clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let f = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.scale * (self.xs[i - 1] + f * (self.xs[i] - self.xs[i - 1]))
    }

    /// Mass points (time offset, probability), `group` table cells merged
    /// into one point at their mass-weighted centre.
    fn coarse_points(&self, group: usize) -> Vec<(f64, f64)> {
        let cells: Vec<(f64, f64)> = (1..self.xs.len())
            .map(|i| {
                (
                    self.scale * 0.5 * (self.xs[i] + self.xs[i - 1]),
                    self.cdf[i] - self.cdf[i - 1],
                )
            })
            .collect();
        cells
            .chunks(group.max(1))
            .map(|c| {
                let w: f64 = c.iter().map(|p| p.1).sum();
                let x = if w > 0.0 {
                    c.iter().map(|p| p.0 * p.1).sum::<f64>() / w
                } else {
                    c[0].0
                };
                (x, w)
            })
            .collect()
    }
}

/// Detector response convolved with a discretised optical pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalDistribution {
    pub detector: EmgComponent,
    /// `(time offset, probability)` of the pulse.
    pub offsets: Vec<(f64, f64)>,
}

impl ArrivalDistribution {
    pub fn cdf(&self, t: f64) -> f64 {
        let det = Shape::Emg(EmgComponent {
            weight: 1.0,
            ..self.detector
        });
        self.offsets
            .iter()
            .map(|&(x, w)| w * det.cdf_unit(t - x))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trial {
    /// Photons in the pulse.
    pub photons: u64,
    /// Photons detected (ground truth `m`).
    pub detected: u64,
    /// Arrival time relative to the trigger, if the detector clicked.
    pub arrival: Option<f64>,
}

/// SplitMix64 finaliser, used to derive independent sub-seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulate `trials` pulses of a coherent state with mean photon number
/// `nbar`.
pub fn simulate_trials(
    model: &DetectorModel,
    nbar: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<Trial>> {
    model.validate()?;
    if !(nbar >= 0.0) || !nbar.is_finite() {
        return Err(Error::arg(format!(
            "mean photon number must be >= 0, got {nbar}"
        )));
    }
    if trials == 0 {
        return Err(Error::arg("need at least one trial"));
    }
    let poisson = if nbar > 0.0 {
        Some(Poisson::new(nbar).map_err(|e| Error::arg(e.to_string()))?)
    } else {
        None
    };
    let sinc = match model.optical_pulse_shape {
        PulseShape::SincLike => Some(SincTable::new(model.optical_pulse_fwhm)),
        PulseShape::Gaussian => None,
    };
    let jitter_sigma = model.optical_pulse_fwhm / GAUSS_FWHM_FACTOR;
    let drift = model.drift(nbar);
    let chunks: Vec<usize> = (0..trials.div_ceil(CHUNK)).collect();
    let parts = par::map(chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, c as u64));
        let len = CHUNK.min(trials - c * CHUNK);
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let photons = poisson.map_or(0, |p| p.sample(&mut rng) as u64);
            let detected = if photons == 0 {
                0
            } else {
                Binomial::new(photons, model.eta)
                    .expect("validated efficiency")
                    .sample(&mut rng)
            };
            let arrival = (detected > 0).then(|| {
                let z: f64 = rng.sample(StandardNormal);
                let x: f64 = rng.sample(Exp1);
                let tail = match model.tail {
                    TailDirection::TowardLater => model.emg_tau * x,
                    TailDirection::TowardEarlier => -model.emg_tau * x,
                };
                let jitter = match &sinc {
                    Some(t) => t.sample(rng.random::<f64>()),
                    None => {
                        let g: f64 = rng.sample(StandardNormal);
                        jitter_sigma * g
                    }
                };
                model.delay
                    + model.peak_law.position(detected as usize)
                    + drift
                    + model.emg_sigma * z
                    + tail
                    + jitter
            });
            out.push(Trial {
                photons,
                detected,
                arrival,
            });
        }
        out
    });
    Ok(parts.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedState {
    pub mean_photon_number: f64,
    pub records: Vec<TimestampRecord>,
    /// Detected photon number per trial.
    pub truth: Vec<u64>,
}

/// Multinomial counts over `probs` (renormalised) by conditional binomials.
pub fn multinomial<R: Rng + ?Sized>(trials: u64, probs: &[f64], rng: &mut R) -> Result<Vec<u64>> {
    if probs.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::arg("probabilities must be non-negative"));
    }
    let mut rest_p: f64 = probs.iter().sum();
    if !(rest_p > 0.0) {
        return Err(Error::arg("probabilities sum to zero"));
    }
    let mut rest_n = trials;
    let mut out = vec![0; probs.len()];
    for (k, &p) in probs.iter().enumerate() {
        if rest_n == 0 {
            break;
        }
        if k + 1 == probs.len() {
            out[k] = rest_n;
            break;
        }
        let q = (p / rest_p).clamp(0.0, 1.0);
        let c = Binomial::new(rest_n, q)
            .map_err(|e| Error::Numerical(e.to_string()))?
            .sample(rng);
        out[k] = c;
        rest_n -= c;
        rest_p -= p;
        if !(rest_p > 0.0) {
            out[k] += rest_n;
            break;
        }
    }
    Ok(out)
}

/// Timestamp stream for one input state: a trigger every repetition period
/// and a rising edge (rounded to whole picoseconds) for every click.
pub fn simulate_state(
    model: &DetectorModel,
    nbar: f64,
    trials: usize,
    seed: u64,
) -> Result<SimulatedState> {
    let sim = simulate_trials(model, nbar, trials, seed)?;
    let mut records = Vec::with_capacity(trials * 2);
    let mut truth = Vec::with_capacity(trials);
    for (i, t) in sim.iter().enumerate() {
        let t0 = (i as f64 * model.repetition_period).round() as i64;
        records.push(TimestampRecord::new(Channel::Trigger, t0));
        if let Some(a) = t.arrival {
            let edge = t0 + a.round() as i64;
            records.push(TimestampRecord::new(Channel::Rising, edge));
            if let Some(d) = model.falling_edge_delay {
                records.push(TimestampRecord::new(
                    Channel::Falling,
                    edge + d.round() as i64,
                ));
            }
        }
        truth.push(t.detected);
    }
    if records.windows(2).any(|w| w[1].time < w[0].time) {
        records.sort_by_key(|r| r.time);
    }
    Ok(SimulatedState {
        mean_photon_number: nbar,
        records,
        truth,
    })
}

/// Mean photon numbers of the tomography input states: `0..=linear_max` in
/// unit steps, then `k²` for `k` in `quadratic_from..=quadratic_to`, then
/// `tail_steps` geometric steps up to `tail_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NbarSchedule {
    pub linear_max: u32,
    pub quadratic_from: u32,
    pub quadratic_to: u32,
    pub tail_steps: u32,
    pub tail_max: f64,
}

impl Default for NbarSchedule {
    fn default() -> Self {
        Self {
            linear_max: 16,
            quadratic_from: 5,
            quadratic_to: 100,
            tail_steps: 9,
            tail_max: 68_000.0,
        }
    }
}

impl NbarSchedule {
    pub fn values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = (0..=self.linear_max).map(f64::from).collect();
        let mut last = f64::from(self.linear_max);
        for k in self.quadratic_from..=self.quadratic_to {
            let q = f64::from(k) * f64::from(k);
            if q > last {
                v.push(q);
                last = q;
            }
        }
        if self.tail_steps > 0 && self.tail_max > last {
            let ratio = (self.tail_max / last).powf(1.0 / f64::from(self.tail_steps));
            for i in 1..=self.tail_steps {
                v.push((last * ratio.powi(i as i32)).round());
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub model: DetectorModel,
    pub schedule: NbarSchedule,
    pub trials_per_state: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            model: DetectorModel::default(),
            schedule: NbarSchedule::default(),
            trials_per_state: 570_000,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    pub index: usize,
    pub mean_photon_number: f64,
    pub seed: u64,
}

pub fn scenario_suite(cfg: &ScenarioConfig) -> Result<Vec<StateSpec>> {
    cfg.model.validate()?;
    Ok(cfg
        .schedule
        .values()
        .into_iter()
        .enumerate()
        // State seeds are kept below 2^63 so the manifest stays valid TOML.
        .map(|(index, nbar)| StateSpec {
            index,
            mean_photon_number: nbar,
            seed: derive_seed(cfg.seed, index as u64) >> 1,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub mean_photon_number: f64,
    pub seed: u64,
    pub trials: usize,
    pub clicks: usize,
    pub file: String,
    pub truth_file: String,
    /// Trials per detected photon number `0, 1, 2, ...`.
    pub detected_counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub trials_per_state: usize,
    pub format: TimestampFormat,
    pub model: DetectorModel,
    pub schedule: NbarSchedule,
    pub states: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
    }
}

fn write_truth(path: &Path, truth: &[u64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# trial_index,true_m")?;
    for (i, m) in truth.iter().enumerate() {
        writeln!(w, "{i},{m}")?;
    }
    w.flush()?;
    Ok(())
}

/// Simulate every state of the suite (or only `limit` of them) and write
/// `state_XXX.{txt,bin}`, `state_XXX.truth.csv` and `manifest.toml` into
/// `dir`.
pub fn write_bundle(
    cfg: &ScenarioConfig,
    dir: &Path,
    format: &TimestampFormat,
    limit: Option<usize>,
) -> Result<Manifest> {
    let ext = match format {
        TimestampFormat::Text => "txt",
        TimestampFormat::Binary => "bin",
        TimestampFormat::ChannelMapped(_) => {
            return Err(Error::arg("bundles are written as text or binary"))
        }
    };
    fs::create_dir_all(dir)?;
    let specs = scenario_suite(cfg)?;
    let take = limit.unwrap_or(specs.len()).min(specs.len());
    let mut states = Vec::with_capacity(take);
    for spec in &specs[..take] {
        let sim = simulate_state(
            &cfg.model,
            spec.mean_photon_number,
            cfg.trials_per_state,
            spec.seed,
        )?;
        let file = format!("state_{:03}.{ext}", spec.index);
        let truth_file = format!("state_{:03}.truth.csv", spec.index);
        timestamps::save(&dir.join(&file), format, &sim.records)?;
        write_truth(&dir.join(&truth_file), &sim.truth)?;
        let top = sim.truth.iter().copied().max().unwrap_or(0) as usize;
        let mut detected_counts = vec![0u64; top + 1];
        for &m in &sim.truth {
            detected_counts[m as usize] += 1;
        }
        states.push(ManifestEntry {
            index: spec.index,
            mean_photon_number: spec.mean_photon_number,
            seed: spec.seed,
            trials: cfg.trials_per_state,
            clicks: sim.truth.iter().filter(|&&m| m > 0).count(),
            file,
            truth_file,
            detected_counts,
        });
    }
    let manifest = Manifest {
        seed: cfg.seed,
        trials_per_state: cfg.trials_per_state,
        format: format.clone(),
        model: cfg.model.clone(),
        schedule: cfg.schedule.clone(),
        states,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Numerical(e.to_string()))?;
    fs::write(dir.join("manifest.toml"), text)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_has_expected_shape() {
        let v = NbarSchedule::default().values();
        assert_eq!(v.len(), 122);
        assert_eq!(&v[..17], &(0..=16).map(f64::from).collect::<Vec<_>>()[..]);
        assert_eq!(v[17], 25.0);
        assert_eq!(v[112], 10_000.0);
        assert_eq!(*v.last().unwrap(), 68_000.0);
        assert!(v.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn drift_saturates() {
        let m = DetectorModel::default();
        assert_eq!(m.drift(0.0), 0.0);
        assert_eq!(m.drift(1.0), 0.0);
        assert_eq!(m.drift(9.0), -4.0);
        assert_eq!(m.drift(500.0), -4.0);
    }

    #[test]
    fn sinc_table_has_requested_width() {
        let t = SincTable::new(10.0);
        let pdf = |x: f64| if x == 0.0 { 1.0 } else { (x.sin() / x).powi(2) };
        let x = 5.0 / t.scale;
        assert!((pdf(x) - 0.5).abs() < 1e-9);
        let mass: f64 = t.coarse_points(1).iter().map(|p| p.1).sum();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn thread_independent_chunks() {
        let m = DetectorModel::default();
        let a = simulate_trials(&m, 3.0, 20_000, 9).unwrap();
        let b = simulate_trials(&m, 3.0, 20_000, 9).unwrap();
        assert_eq!(a, b);
        let c = simulate_trials(&m, 3.0, 10_000, 9).unwrap();
        assert_eq!(&a[..8192], &c[..8192]);
    }

    #[test]
    fn rejects_bad_model() {
        let m = DetectorModel {
            eta: 1.5,
            ..Default::default()
        };
        assert!(simulate_trials(&m, 1.0, 10, 0).is_err());
    }
}
