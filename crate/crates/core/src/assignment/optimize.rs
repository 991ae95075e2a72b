use serde::{Deserialize, Serialize};

use super::{PhotonRegions, Region};
use crate::distributions::{golden_min, Mixture};
use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionWeights {
    pub misidentified: f64,
    pub missing: f64,
}

impl Default for RegionWeights {
    fn default() -> Self {
        Self {
            misidentified: 1.0,
            missing: 1.0,
        }
    }
}

/// `(p_missing, p_misidentified)` of `region` from the curve CDFs.
pub(crate) fn region_errors(g: &[Mixture], region: &Region, lower: f64, upper: f64) -> (f64, f64) {
    let correct = region.correct(g.len());
    let mut own_in = 0.0;
    let mut own_mass = 0.0;
    let mut total = 0.0;
    for (m, c) in g.iter().enumerate() {
        let v = c.mass(lower, upper);
        total += v;
        if correct.contains(&m) {
            own_in += v;
            own_mass += c.weight();
        }
    }
    let miss = if own_mass > 0.0 {
        (1.0 - own_in / own_mass).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let misid = if total > 0.0 {
        ((total - own_in) / total).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (miss, misid)
}

/// Minimise `f` on `[a, b]`: 64-cell grid, then golden section around the
/// best grid point.
fn line_min<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    if !(b > a) {
        return a;
    }
    let n = 64;
    let step = (b - a) / n as f64;
    let (mut best, mut best_v) = (a, f(a));
    for i in 1..=n {
        let x = if i == n { b } else { a + step * i as f64 };
        let v = f(x);
        if v < best_v {
            best = x;
            best_v = v;
        }
    }
    let x = golden_min(&f, (best - step).max(a), (best + step).min(b));
    if f(x) <= best_v {
        x
    } else {
        best
    }
}

/// Move each region's edges to minimise
/// `w_misid·p_misidentified + w_miss·p_missing`.
///
/// Edges stay inside `bounds` (one `(min lower, max upper)` pair per
/// region); by default each region may grow up to its neighbours' starting
/// edges, which keeps the result disjoint. Regions narrower than
/// `min_width` are not considered.
pub fn optimize_regions(
    g: &[Mixture],
    start: &PhotonRegions,
    weights: RegionWeights,
    bounds: Option<&[(f64, f64)]>,
    min_width: f64,
) -> Result<PhotonRegions> {
    if !(weights.misidentified >= 0.0 && weights.missing >= 0.0)
        || weights.misidentified + weights.missing == 0.0
    {
        return Err(Error::arg("weights must be non-negative and not both zero"));
    }
    let rs = start.regions();
    if let Some(b) = bounds {
        if b.len() != rs.len() {
            return Err(Error::arg(format!(
                "{} bounds for {} regions",
                b.len(),
                rs.len()
            )));
        }
    }
    if rs.iter().any(|r| r.label > g.len()) {
        return Err(Error::arg("every region label needs a curve"));
    }
    let min_width = min_width.max(0.0);
    let default_bounds: Vec<(f64, f64)> = (0..rs.len())
        .map(|i| {
            let lo = if i + 1 < rs.len() {
                rs[i + 1].upper
            } else {
                rs[i].lower
            };
            let hi = if i > 0 { rs[i - 1].lower } else { rs[i].upper };
            (lo, hi)
        })
        .collect();
    let bounds = bounds.unwrap_or(&default_bounds);

    let objective = |r: &Region, l: f64, u: f64| {
        let (miss, misid) = region_errors(g, r, l, u);
        weights.misidentified * misid + weights.missing * miss
    };

    let mut out: Vec<Region> = Vec::with_capacity(rs.len());
    for (r, &(lo_b, hi_b)) in rs.iter().zip(bounds) {
        if !(hi_b - lo_b >= min_width) || lo_b.is_nan() {
            return Err(Error::arg(format!(
                "bounds of region {} are narrower than the minimum width",
                r.label
            )));
        }
        let (mut l, mut u) = (
            r.lower.clamp(lo_b, hi_b - min_width),
            r.upper.clamp(lo_b + min_width, hi_b),
        );
        if u - l < min_width {
            u = (l + min_width).min(hi_b);
            l = u - min_width;
        }
        for _ in 0..100 {
            let l_new = line_min(|x| objective(r, x, u), lo_b, u - min_width);
            let u_new = line_min(|x| objective(r, l_new, x), l_new + min_width, hi_b);
            let moved = (l_new - l).abs() + (u_new - u).abs();
            l = l_new;
            u = u_new;
            if moved < 1e-7 * (1.0 + u.abs()) {
                break;
            }
        }
        let v = objective(r, l, u);
        if !v.is_finite() {
            return Err(Error::Numerical(format!(
                "region {} objective not finite at best iterate [{l}, {u})",
                r.label
            )));
        }
        out.push(Region {
            lower: l,
            upper: u,
            ..*r
        });
    }
    // Disjointness repair for caller-supplied bounds that overlap.
    for i in 0..out.len().saturating_sub(1) {
        if out[i + 1].upper > out[i].lower {
            let mid = 0.5 * (out[i + 1].upper + out[i].lower);
            out[i + 1].upper = mid.max(out[i + 1].lower + f64::EPSILON * mid.abs().max(1.0));
            out[i].lower = out[i + 1].upper;
        }
    }
    PhotonRegions::new(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub width: f64,
    pub lower: f64,
    pub upper: f64,
    pub p_missing: f64,
    pub p_misidentified: f64,
}

/// Shrink region `label` in steps of `step` while holding `fixed` in place,
/// starting from its full width, for at most `points` widths.
pub fn region_sweep(
    g: &[Mixture],
    regions: &PhotonRegions,
    label: usize,
    fixed: Edge,
    step: f64,
    points: usize,
) -> Result<Vec<SweepPoint>> {
    let r = *regions
        .get(label)
        .ok_or_else(|| Error::arg(format!("no region with label {label}")))?;
    if label > g.len() {
        return Err(Error::arg(format!("no curve for label {label}")));
    }
    if !(step > 0.0) || !r.width().is_finite() {
        return Err(Error::arg(
            "sweep needs a positive step and a finite region",
        ));
    }
    let full = r.width();
    let widths: Vec<f64> = (0..points)
        .map(|k| full - step * k as f64)
        .take_while(|&w| w > 0.0)
        .collect();
    Ok(par::map(widths, |w| {
        let (lower, upper) = match fixed {
            Edge::Upper => (r.upper - w, r.upper),
            Edge::Lower => (r.lower, r.lower + w),
        };
        let (p_missing, p_misidentified) = region_errors(g, &r, lower, upper);
        SweepPoint {
            width: w,
            lower,
            upper,
            p_missing,
            p_misidentified,
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::{intersections, CurveWeighting};
    use crate::distributions::GaussComponent;

    fn curves() -> Vec<Mixture> {
        vec![
            Mixture::single(GaussComponent::new(30.0, 4.0, 1.0).unwrap()),
            Mixture::single(GaussComponent::new(15.0, 4.0, 0.6).unwrap()),
            Mixture::single(GaussComponent::new(5.0, 4.0, 0.3).unwrap()),
        ]
    }

    #[test]
    fn missing_dominated_weights_keep_tiling() {
        let g = curves();
        let tiles = intersections(&g, (-40.0, 80.0), CurveWeighting::Amplitude).unwrap();
        let w = RegionWeights {
            misidentified: 1e-6,
            missing: 1.0,
        };
        let opt = optimize_regions(&g, &tiles, w, None, 0.5).unwrap();
        assert!(opt.tiling());
        for (a, b) in opt.regions().iter().zip(tiles.regions()) {
            let ea = region_errors(&g, a, a.lower, a.upper);
            let eb = region_errors(&g, b, b.lower, b.upper);
            assert!((ea.0 - eb.0).abs() < 1e-9);
        }
        assert!((opt.regions()[0].lower - tiles.regions()[0].lower).abs() < 1e-6);
        assert!((opt.regions()[1].lower - tiles.regions()[1].lower).abs() < 1e-6);
    }

    #[test]
    fn misid_dominated_weights_shrink() {
        let g = curves();
        let tiles = intersections(&g, (-40.0, 80.0), CurveWeighting::Amplitude).unwrap();
        let w = RegionWeights {
            misidentified: 1.0,
            missing: 1e-3,
        };
        let opt = optimize_regions(&g, &tiles, w, None, 0.5).unwrap();
        for (a, b) in opt.regions().iter().zip(tiles.regions()) {
            let ea = region_errors(&g, a, a.lower, a.upper);
            let eb = region_errors(&g, b, b.lower, b.upper);
            assert!(ea.1 <= eb.1 + 1e-15);
        }
        assert!(!opt.tiling());
    }

    #[test]
    fn sweep_starts_at_full_region() {
        let g = curves();
        let tiles = intersections(&g, (-40.0, 80.0), CurveWeighting::Amplitude).unwrap();
        let s = region_sweep(&g, &tiles, 1, Edge::Upper, 0.5, 50).unwrap();
        let r = tiles.get(1).unwrap();
        assert_eq!(s[0].lower, r.lower);
        assert!(s.windows(2).all(|w| w[1].width < w[0].width));
        assert!(s
            .windows(2)
            .all(|w| w[1].p_misidentified <= w[0].p_misidentified));
    }

    #[test]
    fn rejects_zero_weights() {
        let g = curves();
        let tiles = intersections(&g, (-40.0, 80.0), CurveWeighting::Amplitude).unwrap();
        let w = RegionWeights {
            misidentified: 0.0,
            missing: 0.0,
        };
        assert!(optimize_regions(&g, &tiles, w, None, 0.5).is_err());
    }
}
