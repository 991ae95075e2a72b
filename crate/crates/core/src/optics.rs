//! Optical pulse duration: transform limit from the spectral bandwidth and
//! group-velocity-dispersion broadening in fibre. SI units throughout.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const TBP_GAUSSIAN: f64 = 0.441;
pub const TBP_SECH2: f64 = 0.315;
/// Setting accuracy of the spectral filter bandwidth.
pub const BANDWIDTH_ACCURACY: f64 = 0.04e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    /// Centre wavelength (m).
    pub center_wavelength: f64,
    /// Spectral FWHM (m).
    pub bandwidth: f64,
    pub tbp: f64,
    /// Fibre length (m).
    pub fiber_length: f64,
    /// Dispersion parameter `D_λ` (s/m²).
    pub dispersion: f64,
    pub refractive_index: f64,
}

impl Default for PulseSpec {
    fn default() -> Self {
        Self {
            center_wavelength: 1550e-9,
            bandwidth: 2.66e-9,
            tbp: TBP_GAUSSIAN,
            fiber_length: 32.0,
            dispersion: 1.8e-5,
            refractive_index: 1.4682,
        }
    }
}

impl PulseSpec {
    fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0) {
            return Err(Error::arg(format!(
                "bandwidth must be positive, got {}",
                self.bandwidth
            )));
        }
        for (name, v) in [
            ("center_wavelength", self.center_wavelength),
            ("tbp", self.tbp),
            ("dispersion", self.dispersion),
            ("refractive_index", self.refractive_index),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::arg(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.fiber_length >= 0.0) {
            return Err(Error::arg(format!(
                "fiber length must be >= 0, got {}",
                self.fiber_length
            )));
        }
        Ok(())
    }
}

/// `Δτ = TBP·λ² / (c·Δλ)` in seconds.
pub fn transform_limited_duration(spec: &PulseSpec) -> Result<f64> {
    spec.validate()?;
    Ok(spec.tbp * spec.center_wavelength.powi(2) / (SPEED_OF_LIGHT * spec.bandwidth))
}

/// Output duration after `spec.fiber_length` of fibre, applied in one pass
/// over the whole length:
/// `Δτ_out = Δτ_in·sqrt(1 + (4 ln2 · λ² D L / (2π c' Δτ_in²))²)` with
/// `c' = c/n`.
pub fn dispersed_duration(tau_in: f64, spec: &PulseSpec) -> Result<f64> {
    spec.validate()?;
    if !(tau_in > 0.0) {
        return Err(Error::arg(format!(
            "input duration must be positive, got {tau_in}"
        )));
    }
    let c_medium = SPEED_OF_LIGHT / spec.refractive_index;
    let k = 4.0
        * std::f64::consts::LN_2
        * spec.center_wavelength.powi(2)
        * spec.dispersion
        * spec.fiber_length
        / (2.0 * std::f64::consts::PI * c_medium * tau_in * tau_in);
    Ok(tau_in * (1.0 + k * k).sqrt())
}

/// Transform-limited duration followed by dispersion.
pub fn pulse_duration(spec: &PulseSpec) -> Result<f64> {
    dispersed_duration(transform_limited_duration(spec)?, spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationInterval {
    pub low: f64,
    pub high: f64,
}

/// Range of output durations over `Δλ ± accuracy` and both standard pulse
/// shapes (Gaussian and sech²).
pub fn duration_interval(spec: &PulseSpec, accuracy: f64) -> Result<DurationInterval> {
    let mut low = f64::INFINITY;
    let mut high = f64::NEG_INFINITY;
    for tbp in [TBP_SECH2, TBP_GAUSSIAN] {
        for d in [-accuracy, 0.0, accuracy] {
            let bw = spec.bandwidth + d;
            if bw <= 0.0 {
                continue;
            }
            let v = pulse_duration(&PulseSpec {
                bandwidth: bw,
                tbp,
                ..*spec
            })?;
            low = low.min(v);
            high = high.max(v);
        }
    }
    Ok(DurationInterval { low, high })
}

/// Empirical duration estimates (bandwidth, estimate, uncertainty; all in
/// SI) that a plain transform-limit calculation does not reproduce for
/// very narrow filters.
pub const EMPIRICAL_ESTIMATES: [(f64, f64, f64); 3] = [
    (0.01e-9, 60e-12, 10e-12),
    (0.14e-9, 25e-12, 10e-12),
    (2.66e-9, 2.9e-12, 0.3e-12),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalEstimate {
    pub value: f64,
    pub uncertainty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseReport {
    pub transform_limited: f64,
    pub dispersed: f64,
    pub interval: DurationInterval,
    /// Tabulated empirical estimate for this bandwidth, if there is one.
    pub empirical: Option<EmpiricalEstimate>,
    /// True when the nominal formula value lies outside the empirical
    /// estimate's error bar.
    pub disagrees_with_empirical: bool,
}

pub fn pulse_report(spec: &PulseSpec) -> Result<PulseReport> {
    let tl = transform_limited_duration(spec)?;
    let dispersed = dispersed_duration(tl, spec)?;
    let interval = duration_interval(spec, BANDWIDTH_ACCURACY)?;
    let empirical = EMPIRICAL_ESTIMATES
        .iter()
        .find(|(bw, _, _)| (bw - spec.bandwidth).abs() < 1e-15)
        .map(|&(_, value, uncertainty)| EmpiricalEstimate { value, uncertainty });
    let disagrees = empirical.is_some_and(|e| (e.value - dispersed).abs() > e.uncertainty);
    Ok(PulseReport {
        transform_limited: tl,
        dispersed,
        interval,
        empirical,
        disagrees_with_empirical: disagrees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(bw_nm: f64) -> PulseSpec {
        PulseSpec {
            bandwidth: bw_nm * 1e-9,
            ..Default::default()
        }
    }

    #[test]
    fn transform_limits() {
        assert!((transform_limited_duration(&spec(2.66)).unwrap() * 1e12 - 1.3286).abs() < 1e-3);
        assert!((transform_limited_duration(&spec(0.14)).unwrap() * 1e12 - 25.24).abs() < 0.01);
        assert!(transform_limited_duration(&spec(0.01)).unwrap() > 300e-12);
        assert!(transform_limited_duration(&spec(0.0)).is_err());
    }

    #[test]
    fn dispersion_at_default_fibre() {
        let s = spec(2.66);
        let out = pulse_duration(&s).unwrap() * 1e12;
        assert!((out - 2.6138).abs() < 1e-3, "{out}");
        let zero = PulseSpec {
            fiber_length: 0.0,
            ..s
        };
        assert_eq!(dispersed_duration(1e-12, &zero).unwrap(), 1e-12);
    }

    #[test]
    fn long_pulses_barely_broaden() {
        let s = spec(2.66);
        let ratio = dispersed_duration(25.2e-12, &s).unwrap() / 25.2e-12;
        assert!(ratio < 1.01);
    }

    #[test]
    fn narrow_filter_flags_empirical_value() {
        let r = pulse_report(&spec(0.01)).unwrap();
        assert!(r.dispersed > 300e-12);
        assert!(r.disagrees_with_empirical);
        let r = pulse_report(&spec(2.66)).unwrap();
        assert!(!r.disagrees_with_empirical);
    }
}
