//! Gaussian and exponentially-modified Gaussian (EMG) peak shapes.
//!
//! Every component carries a weight; `pdf` integrates to that weight.
//! Unit-mass quantities are available through the `*_unit` methods of
//! [`Shape`].

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::special::{erfc, erfcx, norm_cdf, norm_sf};
use crate::{Error, Result};

/// `2·sqrt(2·ln 2)`, FWHM of a unit Gaussian.
pub const GAUSS_FWHM_FACTOR: f64 = 2.354_820_045_030_949_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailDirection {
    /// Exponential tail extends to later times (the usual SNSPD case).
    #[default]
    TowardLater,
    TowardEarlier,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussComponent {
    pub mu: f64,
    pub sigma: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmgComponent {
    pub mu: f64,
    pub sigma: f64,
    pub tau: f64,
    #[serde(default)]
    pub tail: TailDirection,
    pub weight: f64,
}

fn check_params(mu: f64, sigma: f64, weight: f64) -> Result<()> {
    if !mu.is_finite() {
        return Err(Error::arg(format!("centre must be finite, got {mu}")));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::arg(format!("sigma must be positive, got {sigma}")));
    }
    if !(weight >= 0.0) || !weight.is_finite() {
        return Err(Error::arg(format!("weight must be >= 0, got {weight}")));
    }
    Ok(())
}

impl GaussComponent {
    pub fn new(mu: f64, sigma: f64, weight: f64) -> Result<Self> {
        check_params(mu, sigma, weight)?;
        Ok(Self { mu, sigma, weight })
    }

    fn pdf_unit(&self, t: f64) -> f64 {
        let z = (t - self.mu) / self.sigma;
        (-0.5 * z * z).exp() / (self.sigma * (2.0 * PI).sqrt())
    }

    fn cdf_unit(&self, t: f64) -> f64 {
        norm_cdf((t - self.mu) / self.sigma)
    }

    fn sf_unit(&self, t: f64) -> f64 {
        norm_sf((t - self.mu) / self.sigma)
    }
}

impl EmgComponent {
    pub fn new(mu: f64, sigma: f64, tau: f64, tail: TailDirection, weight: f64) -> Result<Self> {
        check_params(mu, sigma, weight)?;
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::arg(format!("tau must be positive, got {tau}")));
        }
        Ok(Self {
            mu,
            sigma,
            tau,
            tail,
            weight,
        })
    }

    /// Offset from `mu` in the frame where the tail points to later times.
    fn u(&self, t: f64) -> f64 {
        match self.tail {
            TailDirection::TowardLater => t - self.mu,
            TailDirection::TowardEarlier => self.mu - t,
        }
    }

    /// Unit-mass density of the later-tailed shape at offset `u`.
    fn later_pdf(&self, u: f64) -> f64 {
        let (s, tau) = (self.sigma, self.tau);
        let z = (s / tau - u / s) * FRAC_1_SQRT_2;
        if z >= 0.0 {
            (-0.5 * (u / s) * (u / s)).exp() * erfcx(z) / (2.0 * tau)
        } else {
            (0.5 * (s / tau) * (s / tau) - u / tau).exp() * erfc(z) / (2.0 * tau)
        }
    }

    fn later_cdf(&self, u: f64) -> f64 {
        if u < 0.0 {
            // Both terms of Φ(u/σ) - τ·pdf share the factor exp(-u²/2σ²);
            // pulling it out avoids cancellation in the left tail.
            let w = -u / self.sigma * FRAC_1_SQRT_2;
            let z = w + self.sigma / self.tau * FRAC_1_SQRT_2;
            (0.5 * (-w * w).exp() * (erfcx(w) - erfcx(z))).max(0.0)
        } else {
            1.0 - self.later_sf(u)
        }
    }

    fn later_sf(&self, u: f64) -> f64 {
        if u >= 0.0 {
            norm_sf(u / self.sigma) + self.tau * self.later_pdf(u)
        } else {
            1.0 - self.later_cdf(u)
        }
    }

    fn pdf_unit(&self, t: f64) -> f64 {
        self.later_pdf(self.u(t))
    }

    fn cdf_unit(&self, t: f64) -> f64 {
        match self.tail {
            TailDirection::TowardLater => self.later_cdf(t - self.mu),
            TailDirection::TowardEarlier => self.later_sf(self.mu - t),
        }
    }

    fn sf_unit(&self, t: f64) -> f64 {
        match self.tail {
            TailDirection::TowardLater => self.later_sf(t - self.mu),
            TailDirection::TowardEarlier => self.later_cdf(self.mu - t),
        }
    }
}

/// A single peak shape, Gaussian or EMG.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Gauss(GaussComponent),
    Emg(EmgComponent),
}

impl From<GaussComponent> for Shape {
    fn from(g: GaussComponent) -> Self {
        Shape::Gauss(g)
    }
}

impl From<EmgComponent> for Shape {
    fn from(e: EmgComponent) -> Self {
        Shape::Emg(e)
    }
}

impl Shape {
    pub fn weight(&self) -> f64 {
        match self {
            Shape::Gauss(g) => g.weight,
            Shape::Emg(e) => e.weight,
        }
    }

    pub fn with_weight(mut self, w: f64) -> Self {
        match &mut self {
            Shape::Gauss(g) => g.weight = w,
            Shape::Emg(e) => e.weight = w,
        }
        self
    }

    /// Centre parameter `mu` (not the mode for EMG).
    pub fn center(&self) -> f64 {
        match self {
            Shape::Gauss(g) => g.mu,
            Shape::Emg(e) => e.mu,
        }
    }

    pub fn sigma(&self) -> f64 {
        match self {
            Shape::Gauss(g) => g.sigma,
            Shape::Emg(e) => e.sigma,
        }
    }

    pub fn pdf_unit(&self, t: f64) -> f64 {
        match self {
            Shape::Gauss(g) => g.pdf_unit(t),
            Shape::Emg(e) => e.pdf_unit(t),
        }
    }

    pub fn cdf_unit(&self, t: f64) -> f64 {
        if t == f64::NEG_INFINITY {
            return 0.0;
        }
        if t == f64::INFINITY {
            return 1.0;
        }
        match self {
            Shape::Gauss(g) => g.cdf_unit(t),
            Shape::Emg(e) => e.cdf_unit(t),
        }
    }

    pub fn sf_unit(&self, t: f64) -> f64 {
        if t == f64::NEG_INFINITY {
            return 1.0;
        }
        if t == f64::INFINITY {
            return 0.0;
        }
        match self {
            Shape::Gauss(g) => g.sf_unit(t),
            Shape::Emg(e) => e.sf_unit(t),
        }
    }

    /// Weighted density without argument checks.
    pub fn density(&self, t: f64) -> f64 {
        self.weight() * self.pdf_unit(t)
    }

    /// Unit mass in `[a, b]`, picking the CDF or survival branch that keeps
    /// relative precision in the tails.
    pub fn mass_unit(&self, a: f64, b: f64) -> f64 {
        if !(a < b) {
            return 0.0;
        }
        let m = self.median_hint();
        let v = if a >= m {
            self.sf_unit(a) - self.sf_unit(b)
        } else if b <= m {
            self.cdf_unit(b) - self.cdf_unit(a)
        } else {
            1.0 - self.cdf_unit(a) - self.sf_unit(b)
        };
        v.clamp(0.0, 1.0)
    }

    fn median_hint(&self) -> f64 {
        match self {
            Shape::Gauss(g) => g.mu,
            Shape::Emg(e) => e.mu,
        }
    }

    pub fn pdf(&self, t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(Error::domain(format!(
                "pdf evaluated at non-finite time {t}"
            )));
        }
        Ok(self.density(t))
    }

    /// Weighted probability mass in `[a, b]`; limits may be infinite.
    pub fn integrate(&self, a: f64, b: f64) -> Result<f64> {
        check_interval(a, b)?;
        Ok(self.weight() * self.mass_unit(a, b))
    }

    pub fn mean(&self) -> f64 {
        match self {
            Shape::Gauss(g) => g.mu,
            Shape::Emg(e) => match e.tail {
                TailDirection::TowardLater => e.mu + e.tau,
                TailDirection::TowardEarlier => e.mu - e.tau,
            },
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Shape::Gauss(g) => g.sigma * g.sigma,
            Shape::Emg(e) => e.sigma * e.sigma + e.tau * e.tau,
        }
    }

    pub fn mode(&self) -> f64 {
        match self {
            Shape::Gauss(g) => g.mu,
            Shape::Emg(e) => {
                let (lo, hi) = match e.tail {
                    TailDirection::TowardLater => {
                        (e.mu - 3.0 * e.sigma, e.mu + e.tau + 3.0 * e.sigma)
                    }
                    TailDirection::TowardEarlier => {
                        (e.mu - e.tau - 3.0 * e.sigma, e.mu + 3.0 * e.sigma)
                    }
                };
                // EMG densities are log-concave, so golden section is safe.
                golden_max(|t| self.pdf_unit(t).ln(), lo, hi)
            }
        }
    }

    pub fn fwhm(&self) -> f64 {
        match self {
            Shape::Gauss(g) => GAUSS_FWHM_FACTOR * g.sigma,
            Shape::Emg(e) => {
                let mode = self.mode();
                half_max_width(|t| self.pdf_unit(t), mode, e.sigma + e.tau)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Shape::Gauss(g) => {
                let z: f64 = rng.sample(StandardNormal);
                g.mu + g.sigma * z
            }
            Shape::Emg(e) => {
                let z: f64 = rng.sample(StandardNormal);
                let x: f64 = rng.sample(Exp1);
                match e.tail {
                    TailDirection::TowardLater => e.mu + e.sigma * z + e.tau * x,
                    TailDirection::TowardEarlier => e.mu + e.sigma * z - e.tau * x,
                }
            }
        }
    }

    /// `n` draws from a ChaCha8 stream seeded with `seed`.
    pub fn sample_n(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample(&mut rng)).collect()
    }
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if a.is_nan() || b.is_nan() {
        return Err(Error::arg("integration limit is NaN"));
    }
    if a > b {
        return Err(Error::arg(format!(
            "lower limit {a} exceeds upper limit {b}"
        )));
    }
    Ok(())
}

/// Weighted sum of peak shapes, e.g. one aggregated photon-number curve
/// `g_n` or a whole fitted histogram model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    pub components: Vec<Shape>,
}

impl Mixture {
    pub fn new(components: Vec<Shape>) -> Self {
        Self { components }
    }

    pub fn single(s: impl Into<Shape>) -> Self {
        Self {
            components: vec![s.into()],
        }
    }

    pub fn weight(&self) -> f64 {
        self.components.iter().map(Shape::weight).sum()
    }

    pub fn density(&self, t: f64) -> f64 {
        self.components.iter().map(|c| c.density(t)).sum()
    }

    pub fn pdf(&self, t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(Error::domain(format!(
                "pdf evaluated at non-finite time {t}"
            )));
        }
        Ok(self.density(t))
    }

    /// Weighted mass in `[a, b]` without argument checks.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight() * c.mass_unit(a, b))
            .sum()
    }

    pub fn integrate(&self, a: f64, b: f64) -> Result<f64> {
        check_interval(a, b)?;
        Ok(self.mass(a, b))
    }

    /// Global maximum of the density: grid scan over the component support,
    /// refined by golden section around the best grid point.
    pub fn mode(&self) -> Option<f64> {
        let live: Vec<&Shape> = self
            .components
            .iter()
            .filter(|c| c.weight() > 0.0)
            .collect();
        if live.is_empty() {
            return None;
        }
        if live.len() == 1 {
            return Some(live[0].mode());
        }
        let lo = live
            .iter()
            .map(|c| c.mean() - 4.0 * c.variance().sqrt())
            .fold(f64::INFINITY, f64::min);
        let hi = live
            .iter()
            .map(|c| c.mean() + 4.0 * c.variance().sqrt())
            .fold(f64::NEG_INFINITY, f64::max);
        let narrowest = live.iter().map(|c| c.sigma()).fold(f64::INFINITY, f64::min);
        let n = (((hi - lo) / (0.25 * narrowest)).ceil() as usize).clamp(64, 200_000);
        let step = (hi - lo) / n as f64;
        let (mut best, mut best_v) = (lo, f64::NEG_INFINITY);
        for i in 0..=n {
            let t = lo + step * i as f64;
            let v = self.density(t);
            if v > best_v {
                best = t;
                best_v = v;
            }
        }
        Some(golden_max(|t| self.density(t), best - step, best + step))
    }

    /// Width of the half-maximum level set around the global mode.
    pub fn fwhm(&self) -> Option<f64> {
        let mode = self.mode()?;
        let scale = self
            .components
            .iter()
            .map(|c| c.variance().sqrt())
            .fold(0.0, f64::max);
        let peak = self.density(mode);
        Some(half_max_width(|t| self.density(t) / peak, mode, scale))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total = self.weight();
        let mut u = rng.random::<f64>() * total;
        for c in &self.components {
            if u < c.weight() {
                return c.sample(rng);
            }
            u -= c.weight();
        }
        self.components
            .last()
            .expect("non-empty mixture")
            .sample(rng)
    }
}

/// Maximiser of a unimodal function on `[lo, hi]` by golden-section search.
pub(crate) fn golden_max<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    golden_min(|t| -f(t), lo, hi)
}

pub(crate) fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Distance between the half-maximum crossings on either side of `mode`.
fn half_max_width<F: Fn(f64) -> f64>(f: F, mode: f64, scale: f64) -> f64 {
    let half = 0.5 * f(mode);
    let crossing = |dir: f64| {
        let mut inner = mode;
        let mut step = 0.25 * scale.max(1e-12);
        let mut outer = mode + dir * step;
        while f(outer) > half {
            inner = outer;
            step *= 2.0;
            outer = mode + dir * step;
        }
        for _ in 0..200 {
            let mid = 0.5 * (inner + outer);
            if mid == inner || mid == outer || (outer - inner).abs() < 1e-10 * scale {
                break;
            }
            if f(mid) > half {
                inner = mid;
            } else {
                outer = mid;
            }
        }
        0.5 * (inner + outer)
    };
    crossing(1.0) - crossing(-1.0)
}
