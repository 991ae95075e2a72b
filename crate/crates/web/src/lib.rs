//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Three operations are exposed: a region explorer (arrival-time curves,
//! assignment regions and their error probabilities), the modelled POVM of
//! the same detector, and the pulse-duration calculator. The numerical work
//! lives in plain functions so it can be tested off the browser.

use pnr_core::assignment::{
    intersections, max_resolvable_photon_number, optimize_regions, overlap_matrix, CurveWeighting,
    ErrorReport, PhotonRegions, RegionWeights,
};
use pnr_core::distributions::{Mixture, GAUSS_FWHM_FACTOR};
use pnr_core::fitting::{PeakLaw, FIT_STATES};
use pnr_core::optics::{pulse_report, PulseSpec};
use pnr_core::simulator::DetectorModel;
use pnr_core::tomography::{loss_matrix, simulate_povm};
use wasm_bindgen::prelude::*;

/// Curves kept for overlaps and the POVM; the rest carry no visible mass.
const CURVES: usize = 20;
/// Curves drawn in the plot.
const SHOWN: usize = 6;
const GRID: usize = 600;
/// Photon-number rows of the POVM shown.
const POVM_ROWS: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub jitter_fwhm: f64,
    pub tau: f64,
    /// Arrival time of the one- and two-photon peaks after the delay.
    pub x1: f64,
    pub x2: f64,
    pub eta: f64,
    pub pulse_fwhm: f64,
}

impl DetectorParams {
    fn model(&self) -> pnr_core::Result<DetectorModel> {
        Ok(DetectorModel {
            eta: self.eta,
            emg_sigma: self.jitter_fwhm / GAUSS_FWHM_FACTOR,
            emg_tau: self.tau,
            peak_law: PeakLaw::through(self.x1, self.x2)?,
            optical_pulse_fwhm: self.pulse_fwhm,
            drift_per_nbar: 0.0,
            ..DetectorModel::default()
        })
    }
}

/// Everything the explorer page draws for one parameter set.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub grid: Vec<f64>,
    pub curves: Vec<Vec<f64>>,
    pub n_max: usize,
    pub regions: PhotonRegions,
    pub p_missing: Vec<f64>,
    pub p_misidentified: Vec<f64>,
    /// Row-major, `POVM_ROWS` rows of `regions.len() + 1` outcomes.
    pub povm: Vec<f64>,
}

pub fn analyse(params: &DetectorParams, missing_weight: Option<f64>) -> pnr_core::Result<Analysis> {
    let model = params.model()?;
    let g: Vec<Mixture> = model.expected_curves(&FIT_STATES, 1.0, CURVES)?;

    let peaks: Vec<f64> = g[..10].iter().filter_map(Mixture::mode).collect();
    let widths: Vec<f64> = g[..10].iter().filter_map(Mixture::fwhm).collect();
    let n_max = max_resolvable_photon_number(&peaks, &widths)?.n_max;

    let outcomes = (n_max + 1).clamp(2, SHOWN);
    let hi = model.center(1, 1.0) + 40.0 * (model.emg_sigma + model.emg_tau);
    let lo = model.center(CURVES as u64, 1.0) - 40.0 * model.emg_sigma;
    let mut regions =
        intersections(&g[..outcomes], (lo, hi), CurveWeighting::Amplitude)?.with_or_more_last();
    if let Some(w) = missing_weight {
        let weights = RegionWeights {
            misidentified: 1.0,
            missing: w,
        };
        regions = optimize_regions(&g, &regions, weights, None, 1.0)?;
    }
    let overlap = overlap_matrix(&g, &regions)?;
    let report = ErrorReport::from_overlap(&overlap)?;
    let povm = simulate_povm(&loss_matrix(CURVES + 1, params.eta)?, &overlap)?;

    let t0 = model.center(8, 1.0) - 4.0 * params.jitter_fwhm;
    let t1 = model.center(1, 1.0) + 4.0 * params.jitter_fwhm + 6.0 * params.tau;
    let grid: Vec<f64> = (0..GRID)
        .map(|i| t0 + (t1 - t0) * i as f64 / (GRID - 1) as f64)
        .collect();
    let curves = g[..SHOWN]
        .iter()
        .map(|c| grid.iter().map(|&t| c.density(t)).collect())
        .collect();

    Ok(Analysis {
        grid,
        curves,
        n_max,
        p_missing: report.entries.iter().map(|e| e.p_missing).collect(),
        p_misidentified: report.entries.iter().map(|e| e.p_misidentified).collect(),
        povm: povm
            .pi
            .rows(0, POVM_ROWS)
            .transpose()
            .iter()
            .copied()
            .collect(),
        regions,
    })
}

fn js(e: pnr_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Explorer(Analysis);

#[wasm_bindgen]
impl Explorer {
    /// Times in ps. `missing_weight` below zero keeps the intersection
    /// tiling; otherwise regions are optimized with that weight on missing
    /// probability.
    #[wasm_bindgen(constructor)]
    pub fn new(
        jitter_fwhm: f64,
        tau: f64,
        x1: f64,
        x2: f64,
        eta: f64,
        pulse_fwhm: f64,
        missing_weight: f64,
    ) -> Result<Explorer, JsError> {
        let params = DetectorParams {
            jitter_fwhm,
            tau,
            x1,
            x2,
            eta,
            pulse_fwhm,
        };
        let w = (missing_weight >= 0.0).then_some(missing_weight);
        analyse(&params, w).map(Explorer).map_err(js)
    }

    pub fn grid(&self) -> Vec<f64> {
        self.0.grid.clone()
    }

    #[wasm_bindgen(js_name = curveCount)]
    pub fn curve_count(&self) -> usize {
        self.0.curves.len()
    }

    /// Expected clicks per ps per pulse for `g_{n+1}`.
    pub fn curve(&self, n: usize) -> Vec<f64> {
        self.0.curves.get(n).cloned().unwrap_or_default()
    }

    #[wasm_bindgen(js_name = nMax)]
    pub fn n_max(&self) -> usize {
        self.0.n_max
    }

    /// `[lower, upper]` per region, flattened.
    pub fn bounds(&self) -> Vec<f64> {
        self.0
            .regions
            .regions()
            .iter()
            .flat_map(|r| [r.lower, r.upper])
            .collect()
    }

    #[wasm_bindgen(js_name = pMissing)]
    pub fn p_missing(&self) -> Vec<f64> {
        self.0.p_missing.clone()
    }

    #[wasm_bindgen(js_name = pMisidentified)]
    pub fn p_misidentified(&self) -> Vec<f64> {
        self.0.p_misidentified.clone()
    }

    /// Modelled POVM, row-major over photon numbers 0.. with `povmColumns`
    /// outcomes per row (no click first, last outcome "or more").
    pub fn povm(&self) -> Vec<f64> {
        self.0.povm.clone()
    }

    #[wasm_bindgen(js_name = povmColumns)]
    pub fn povm_columns(&self) -> usize {
        self.0.regions.len() + 1
    }
}

/// Pulse durations in ps: `[transform limited, dispersed, low, high]`,
/// where low/high bracket the bandwidth setting accuracy.
#[wasm_bindgen(js_name = pulseDuration)]
pub fn pulse_duration(
    lambda_nm: f64,
    bandwidth_nm: f64,
    tbp: f64,
    fiber_m: f64,
) -> Result<Vec<f64>, JsError> {
    pulse_durations(lambda_nm, bandwidth_nm, tbp, fiber_m).map_err(js)
}

pub fn pulse_durations(
    lambda_nm: f64,
    bandwidth_nm: f64,
    tbp: f64,
    fiber_m: f64,
) -> pnr_core::Result<Vec<f64>> {
    let spec = PulseSpec {
        center_wavelength: lambda_nm * 1e-9,
        bandwidth: bandwidth_nm * 1e-9,
        tbp,
        fiber_length: fiber_m,
        ..PulseSpec::default()
    };
    let r = pulse_report(&spec)?;
    Ok([
        r.transform_limited,
        r.dispersed,
        r.interval.low,
        r.interval.high,
    ]
    .map(|s| s * 1e12)
    .to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> DetectorParams {
        DetectorParams {
            jitter_fwhm: 19.0,
            tau: 12.0,
            x1: 310.0,
            x2: 180.0,
            eta: 0.91,
            pulse_fwhm: 2.9,
        }
    }

    #[test]
    fn default_detector_resolves_three() {
        let a = analyse(&defaults(), None).unwrap();
        assert_eq!(a.n_max, 3);
        assert_eq!(a.regions.len(), 4);
        assert_eq!(a.curves.len(), SHOWN);
        assert!(a
            .p_missing
            .iter()
            .chain(&a.p_misidentified)
            .all(|p| (0.0..=1.0).contains(p)));
        let cols = a.regions.len() + 1;
        assert_eq!(a.povm.len(), POVM_ROWS * cols);
        for row in a.povm.chunks(cols) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert_eq!(a.povm[0], 1.0);
    }

    #[test]
    fn optimizing_lowers_the_weighted_cost() {
        let cost = |a: &Analysis| a.p_misidentified[0] + 0.05 * a.p_missing[0];
        let tiled = analyse(&defaults(), None).unwrap();
        let opt = analyse(&defaults(), Some(0.05)).unwrap();
        assert!(cost(&opt) <= cost(&tiled) + 1e-12);
    }

    #[test]
    fn wider_jitter_resolves_fewer() {
        let p = DetectorParams {
            jitter_fwhm: 45.0,
            ..defaults()
        };
        assert!(analyse(&p, None).unwrap().n_max < 3);
    }

    #[test]
    fn pulse_calculator() {
        let d = pulse_durations(1550.0, 2.66, 0.441, 32.0).unwrap();
        assert!((d[1] - 2.6138).abs() < 1e-3);
        assert!(d[2] <= d[1] && d[1] <= d[3]);
        assert!(pulse_durations(1550.0, 0.0, 0.441, 32.0).is_err());
    }
}
