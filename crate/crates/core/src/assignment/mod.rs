//! Photon-number regions on the arrival-time axis and the error
//! probabilities they imply.
//!
//! Curves are passed as `g[0] = g_1, g[1] = g_2, ...`; region labels are
//! photon numbers (1-based), so label `n` belongs to `g[n - 1]`. A region
//! flagged `or_more` collects every photon number from its label upward.

mod optimize;

pub use optimize::{optimize_regions, region_sweep, Edge, RegionWeights, SweepPoint};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::distributions::Mixture;
use crate::histogram::PairedEvents;
use crate::quadrature::{self, QuadOptions};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub label: usize,
    pub lower: f64,
    pub upper: f64,
    #[serde(default)]
    pub or_more: bool,
}

impl Region {
    pub fn new(label: usize, lower: f64, upper: f64) -> Self {
        Self {
            label,
            lower,
            upper,
            or_more: false,
        }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lower && t < self.upper
    }

    /// Curve indices counted as correct for this region.
    fn correct(&self, n_curves: usize) -> std::ops::Range<usize> {
        let first = self.label - 1;
        if self.or_more {
            first.min(n_curves)..n_curves
        } else {
            first.min(n_curves)..self.label.min(n_curves)
        }
    }
}

/// Ordered regions: label 1 is the latest interval, higher labels lie at
/// earlier times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonRegions {
    regions: Vec<Region>,
    tiling: bool,
}

impl PhotonRegions {
    pub fn new(regions: Vec<Region>) -> Result<Self> {
        if regions.is_empty() {
            return Err(Error::arg("no regions"));
        }
        for (i, r) in regions.iter().enumerate() {
            if r.label == 0 {
                return Err(Error::arg("region labels start at 1"));
            }
            if r.lower.is_nan() || r.upper.is_nan() || !(r.lower < r.upper) {
                return Err(Error::arg(format!(
                    "region {} has lower {} >= upper {}",
                    r.label, r.lower, r.upper
                )));
            }
            if r.or_more && i + 1 != regions.len() {
                return Err(Error::arg(
                    "only the last region may collect higher photon numbers",
                ));
            }
        }
        for w in regions.windows(2) {
            if w[1].label <= w[0].label {
                return Err(Error::arg("region labels must increase"));
            }
            if w[1].upper > w[0].lower {
                return Err(Error::arg(format!(
                    "region {} [{}, {}) overlaps or follows region {} [{}, {})",
                    w[1].label, w[1].lower, w[1].upper, w[0].label, w[0].lower, w[0].upper
                )));
            }
        }
        let tiling = regions.windows(2).all(|w| w[1].upper == w[0].lower);
        Ok(Self { regions, tiling })
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn tiling(&self) -> bool {
        self.tiling
    }

    pub fn get(&self, label: usize) -> Option<&Region> {
        self.regions.iter().find(|r| r.label == label)
    }

    /// Merge every region with label `>= label` into one `or_more` region
    /// spanning their hull.
    pub fn merge_from(&self, label: usize) -> Result<Self> {
        let keep: Vec<Region> = self
            .regions
            .iter()
            .copied()
            .filter(|r| r.label < label)
            .collect();
        let tail: Vec<&Region> = self.regions.iter().filter(|r| r.label >= label).collect();
        if tail.is_empty() {
            return Ok(self.clone());
        }
        let lower = tail.iter().map(|r| r.lower).fold(f64::INFINITY, f64::min);
        let upper = tail
            .iter()
            .map(|r| r.upper)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut out = keep;
        out.push(Region {
            label,
            lower,
            upper,
            or_more: true,
        });
        Self::new(out)
    }

    /// Mark the last region as collecting all higher photon numbers.
    pub fn with_or_more_last(mut self) -> Self {
        if let Some(r) = self.regions.last_mut() {
            r.or_more = true;
        }
        self
    }

    pub fn assign_time(&self, t: f64) -> Outcome {
        // Regions are sorted by decreasing time.
        let i = self.regions.partition_point(|r| r.lower > t);
        match self.regions.get(i) {
            Some(r) if r.contains(t) => Outcome::Label(r.label),
            _ => Outcome::Invalid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveWeighting {
    /// Compare curves as fitted, amplitudes included.
    #[default]
    Amplitude,
    /// Compare unit-mass versions of the curves.
    UnitNormalized,
}

fn modes(g: &[Mixture]) -> Result<Vec<f64>> {
    g.iter()
        .enumerate()
        .map(|(i, c)| {
            c.mode()
                .ok_or_else(|| Error::domain(format!("curve g_{} has no mass", i + 1)))
        })
        .collect()
}

/// Tiling regions from the crossing points of neighbouring curves. Each
/// boundary is searched between the two peak maxima only; the outermost
/// regions extend to `range`.
pub fn intersections(
    g: &[Mixture],
    range: (f64, f64),
    weighting: CurveWeighting,
) -> Result<PhotonRegions> {
    if g.is_empty() {
        return Err(Error::arg("no curves"));
    }
    let peaks = modes(g)?;
    for (i, w) in peaks.windows(2).enumerate() {
        if !(w[1] < w[0]) {
            return Err(Error::arg(format!(
                "peak of g_{} is not earlier than peak of g_{}",
                i + 2,
                i + 1
            )));
        }
    }
    let scale: Vec<f64> = g
        .iter()
        .map(|c| match weighting {
            CurveWeighting::Amplitude => 1.0,
            CurveWeighting::UnitNormalized => 1.0 / c.weight(),
        })
        .collect();
    let mut bounds = Vec::with_capacity(g.len().saturating_sub(1));
    for n in 0..g.len() - 1 {
        let h = |t: f64| scale[n] * g[n].density(t) - scale[n + 1] * g[n + 1].density(t);
        let (mut lo, mut hi) = (peaks[n + 1], peaks[n]);
        if !(h(lo) < 0.0 && h(hi) > 0.0) {
            return Err(Error::Degenerate(format!(
                "g_{} and g_{} do not cross between their peaks",
                n + 1,
                n + 2
            )));
        }
        while hi - lo > 1e-9 * (1.0 + hi.abs()) {
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        bounds.push(0.5 * (lo + hi));
    }
    let (rlo, rhi) = range;
    let mut regions = Vec::with_capacity(g.len());
    for n in 0..g.len() {
        let upper = if n == 0 { rhi } else { bounds[n - 1] };
        let lower = if n + 1 == g.len() { rlo } else { bounds[n] };
        regions.push(Region::new(n + 1, lower, upper));
    }
    PhotonRegions::new(regions)
}

/// `O[m][r]`: fraction of curve `g_{m+1}` inside region `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapMatrix {
    pub entries: DMatrix<f64>,
    /// Total mass of each curve.
    pub masses: Vec<f64>,
    pub regions: PhotonRegions,
}

pub fn overlap_matrix(g: &[Mixture], regions: &PhotonRegions) -> Result<OverlapMatrix> {
    let masses: Vec<f64> = g.iter().map(Mixture::weight).collect();
    if let Some(i) = masses.iter().position(|&m| !(m > 0.0)) {
        return Err(Error::domain(format!("curve g_{} has zero mass", i + 1)));
    }
    let rs = regions.regions();
    let entries = DMatrix::from_fn(g.len(), rs.len(), |m, r| {
        (g[m].mass(rs[r].lower, rs[r].upper) / masses[m]).clamp(0.0, 1.0)
    });
    Ok(OverlapMatrix {
        entries,
        masses,
        regions: regions.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionErrors {
    pub label: usize,
    pub p_missing: f64,
    pub p_misidentified: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub entries: Vec<RegionErrors>,
}

impl ErrorReport {
    /// Error probabilities of every region whose label has a curve.
    pub fn from_overlap(o: &OverlapMatrix) -> Result<Self> {
        let n = o.entries.nrows();
        let mut entries = Vec::new();
        for (r, reg) in o.regions.regions().iter().enumerate() {
            if reg.label > n {
                continue;
            }
            let correct = reg.correct(n);
            let own_mass: f64 = correct.clone().map(|m| o.masses[m]).sum();
            let own_in: f64 = correct
                .clone()
                .map(|m| o.masses[m] * o.entries[(m, r)])
                .sum();
            let total: f64 = (0..n).map(|m| o.masses[m] * o.entries[(m, r)]).sum();
            if !(total > 0.0) {
                return Err(Error::domain(format!(
                    "region {} contains no mass",
                    reg.label
                )));
            }
            entries.push(RegionErrors {
                label: reg.label,
                p_missing: (1.0 - own_in / own_mass).clamp(0.0, 1.0),
                p_misidentified: ((total - own_in) / total).clamp(0.0, 1.0),
            });
        }
        Ok(Self { entries })
    }

    pub fn get(&self, label: usize) -> Option<&RegionErrors> {
        self.entries.iter().find(|e| e.label == label)
    }
}

fn quad_unit_mass(g: &Mixture, lower: f64, upper: f64) -> Result<f64> {
    let w = g.weight();
    if !(w > 0.0) {
        return Err(Error::domain("curve has zero mass"));
    }
    let mut points: Vec<f64> = g.components.iter().map(|c| c.center()).collect();
    points.extend(g.components.iter().map(|c| c.mode()));
    let scale = g
        .components
        .iter()
        .map(|c| c.variance().sqrt())
        .fold(0.0, f64::max)
        .max(1e-9);
    let opts = QuadOptions {
        points,
        scale,
        abs_tol: 1e-15,
        rel_tol: 1e-14,
        ..Default::default()
    };
    let r = quadrature::integrate(|t| g.density(t) / w, lower, upper, &opts)?;
    Ok(r.value)
}

/// Probability that an `n`-photon event falls outside its region (unit-mass
/// `g_n`), by direct adaptive quadrature of the density.
pub fn missing_probability(g_n: &Mixture, region: &Region) -> Result<f64> {
    Ok((1.0 - quad_unit_mass(g_n, region.lower, region.upper)?).clamp(0.0, 1.0))
}

/// Fraction of the (amplitude-weighted) events inside `region` that come
/// from other photon numbers, by direct adaptive quadrature.
pub fn misidentification_probability(g: &[Mixture], region: &Region) -> Result<f64> {
    if g.len() < 2 {
        return Err(Error::arg("need at least two curves"));
    }
    if region.label > g.len() {
        return Err(Error::arg(format!(
            "no curve for region label {}",
            region.label
        )));
    }
    let correct = region.correct(g.len());
    let mut own = 0.0;
    let mut total = 0.0;
    for (m, c) in g.iter().enumerate() {
        let v = c.weight() * quad_unit_mass(c, region.lower, region.upper)?;
        total += v;
        if correct.contains(&m) {
            own += v;
        }
    }
    if !(total > 0.0) {
        return Err(Error::domain(format!(
            "region {} contains no mass",
            region.label
        )));
    }
    Ok(((total - own) / total).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolvability {
    pub n_max: usize,
    /// Set when even the one/two-photon spacing fails the criterion.
    pub unresolved: bool,
}

/// Largest `n` such that `μ_k − μ_{k+1} ≥ FWHM_k` for every `k ≤ n`.
pub fn max_resolvable_photon_number(peaks: &[f64], fwhms: &[f64]) -> Result<Resolvability> {
    if peaks.len() < 2 {
        return Err(Error::arg("need at least two peaks"));
    }
    if fwhms.len() + 1 < peaks.len() {
        return Err(Error::arg("need a width for every peak but the last"));
    }
    let mut n_max = 0;
    for k in 0..peaks.len() - 1 {
        if peaks[k] - peaks[k + 1] >= fwhms[k] {
            n_max = k + 1;
        } else {
            break;
        }
    }
    Ok(Resolvability {
        n_max,
        unresolved: n_max == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    NoClick,
    Label(usize),
    /// Click in a gap between regions or outside all of them.
    Invalid,
}

pub fn assign(diffs: &[Option<f64>], regions: &PhotonRegions) -> Vec<Outcome> {
    diffs
        .iter()
        .map(|d| match d {
            None => Outcome::NoClick,
            Some(t) => regions.assign_time(*t),
        })
        .collect()
}

pub fn assign_pairs(pairs: &PairedEvents, regions: &PhotonRegions) -> Vec<Outcome> {
    pairs
        .diffs
        .iter()
        .map(|d| match d {
            None => Outcome::NoClick,
            Some(t) => regions.assign_time(*t as f64),
        })
        .collect()
}

/// Outcome counts of one input state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub trials: u64,
    /// `counts[k]` = clicks labelled `k + 1`.
    pub counts: Vec<u64>,
    pub invalid: u64,
}

impl OutcomeCounts {
    pub fn tally(outcomes: &[Outcome], labels: usize) -> Self {
        let mut counts = vec![0u64; labels];
        let mut invalid = 0;
        for o in outcomes {
            match o {
                Outcome::Label(l) if *l >= 1 && *l <= labels => counts[l - 1] += 1,
                Outcome::Label(_) | Outcome::Invalid => invalid += 1,
                Outcome::NoClick => {}
            }
        }
        Self {
            trials: outcomes.len() as u64,
            counts,
            invalid,
        }
    }

    pub fn clicks(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::GaussComponent;

    fn gauss(mu: f64, s: f64, w: f64) -> Mixture {
        Mixture::single(GaussComponent::new(mu, s, w).unwrap())
    }

    #[test]
    fn region_validation() {
        assert!(
            PhotonRegions::new(vec![Region::new(1, 5.0, 10.0), Region::new(2, 0.0, 5.0)])
                .unwrap()
                .tiling()
        );
        assert!(
            !PhotonRegions::new(vec![Region::new(1, 6.0, 10.0), Region::new(2, 0.0, 5.0)])
                .unwrap()
                .tiling()
        );
        assert!(
            PhotonRegions::new(vec![Region::new(1, 4.0, 10.0), Region::new(2, 0.0, 5.0)]).is_err()
        );
        assert!(PhotonRegions::new(vec![Region::new(1, 4.0, 4.0)]).is_err());
        assert!(
            PhotonRegions::new(vec![Region::new(2, 5.0, 10.0), Region::new(1, 0.0, 5.0)]).is_err()
        );
    }

    #[test]
    fn symmetric_boundary() {
        let g = [gauss(10.0, 1.0, 1.0), gauss(0.0, 1.0, 1.0)];
        let r = intersections(&g, (-20.0, 30.0), CurveWeighting::Amplitude).unwrap();
        assert!((r.regions()[0].lower - 5.0).abs() < 1e-6);
        assert_eq!(r.regions()[0].upper, 30.0);
        assert_eq!(r.regions()[1].lower, -20.0);
        assert!(r.tiling());
    }

    #[test]
    fn dominated_pair_is_degenerate() {
        let g = [gauss(10.0, 5.0, 1.0), gauss(9.0, 1.0, 1e-6)];
        assert!(matches!(
            intersections(&g, (-20.0, 30.0), CurveWeighting::Amplitude),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn assignment_and_gaps() {
        let r =
            PhotonRegions::new(vec![Region::new(1, 6.0, 10.0), Region::new(2, 0.0, 5.0)]).unwrap();
        assert_eq!(r.assign_time(3.0), Outcome::Label(2));
        assert_eq!(r.assign_time(5.5), Outcome::Invalid);
        assert_eq!(r.assign_time(6.0), Outcome::Label(1));
        assert_eq!(r.assign_time(10.0), Outcome::Invalid);
        let out = assign(&[None, Some(7.0)], &r);
        assert_eq!(out, vec![Outcome::NoClick, Outcome::Label(1)]);
        let c = OutcomeCounts::tally(&[Outcome::NoClick, Outcome::Label(1), Outcome::Invalid], 2);
        assert_eq!((c.trials, c.counts.clone(), c.invalid), (3, vec![1, 0], 1));
    }

    #[test]
    fn merge_marks_or_more() {
        let r = PhotonRegions::new(vec![
            Region::new(1, 6.0, 10.0),
            Region::new(2, 4.0, 6.0),
            Region::new(3, 2.0, 4.0),
            Region::new(4, 0.0, 2.0),
        ])
        .unwrap();
        let m = r.merge_from(3).unwrap();
        assert_eq!(m.len(), 3);
        let last = m.regions()[2];
        assert!(last.or_more && last.lower == 0.0 && last.upper == 4.0);
    }

    #[test]
    fn resolvability_inclusive_and_flag() {
        let r = max_resolvable_photon_number(&[100.0, 77.0, 54.0, 40.0], &[23.0; 4]).unwrap();
        assert_eq!(r.n_max, 2);
        let r = max_resolvable_photon_number(&[100.0, 90.0], &[23.0]).unwrap();
        assert_eq!(
            r,
            Resolvability {
                n_max: 0,
                unresolved: true
            }
        );
    }

    #[test]
    fn overlap_rejects_zero_mass() {
        let g = [gauss(1.0, 1.0, 0.0)];
        let r = PhotonRegions::new(vec![Region::new(1, 0.0, 5.0)]).unwrap();
        assert!(overlap_matrix(&g, &r).is_err());
    }
}
