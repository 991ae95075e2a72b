use serde::{Deserialize, Serialize};

use super::PeakLaw;
use crate::histogram::ArrivalHistogram;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakScalingFit {
    pub law: PeakLaw,
    /// `1/sqrt(n) - (m x_n + b)` per input peak.
    pub residuals: Vec<f64>,
    pub r_squared: f64,
    /// Standard errors of `(m_lin, b_lin)`; NaN with only two points.
    pub std_errors: (f64, f64),
}

/// Moving average over `w` bins, window shrunk at the edges.
fn smooth(counts: &[u64], w: usize) -> Vec<f64> {
    let h = w / 2;
    let n = counts.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(h);
            let hi = (i + h + 1).min(n);
            counts[lo..hi].iter().map(|&c| c as f64).sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Local maxima of `s` with their topographic prominence.
fn prominent_maxima(s: &[f64]) -> Vec<(usize, f64)> {
    let n = s.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if s[i] > s[i - 1] {
            // Walk across a plateau.
            let mut j = i;
            while j + 1 < n && s[j + 1] == s[i] {
                j += 1;
            }
            if j + 1 < n && s[j + 1] < s[i] {
                let peak = (i + j) / 2;
                let h = s[peak];
                let mut left_min = h;
                let mut k = i;
                while k > 0 {
                    k -= 1;
                    if s[k] > h {
                        break;
                    }
                    left_min = left_min.min(s[k]);
                }
                let mut right_min = h;
                let mut k = j;
                while k + 1 < n {
                    k += 1;
                    if s[k] > h {
                        break;
                    }
                    right_min = right_min.min(s[k]);
                }
                out.push((peak, h - left_min.max(right_min)));
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Positions (ps) of the `count` most prominent maxima of the 5-bin
/// smoothed histogram, latest first. Maxima below 1% of the global maximum
/// in prominence are ignored; positions are refined by a parabola through
/// the three smoothed values around each maximum.
pub fn find_peaks(hist: &ArrivalHistogram, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::arg("peak count must be at least one"));
    }
    let s = smooth(&hist.counts, 5);
    let top = s.iter().copied().fold(0.0, f64::max);
    let mut maxima: Vec<(usize, f64)> = prominent_maxima(&s)
        .into_iter()
        .filter(|&(_, p)| p >= 0.01 * top && p > 0.0)
        .collect();
    if maxima.len() < count {
        return Err(Error::Fit {
            message: format!(
                "found {} prominent maxima, {count} requested (prominences: {:?})",
                maxima.len(),
                maxima.iter().map(|m| m.1).collect::<Vec<_>>()
            ),
            best_params: maxima.iter().map(|&(i, _)| hist.centers()[i]).collect(),
            best_cost: f64::NAN,
        });
    }
    maxima.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    maxima.truncate(count);
    let centers = hist.centers();
    let w = hist.bin_width();
    let mut pos: Vec<f64> = maxima
        .iter()
        .map(|&(i, _)| {
            if i == 0 || i + 1 == s.len() {
                return centers[i];
            }
            let (a, b, c) = (s[i - 1], s[i], s[i + 1]);
            let den = a - 2.0 * b + c;
            let shift = if den < 0.0 {
                (0.5 * (a - c) / den).clamp(-0.5, 0.5)
            } else {
                0.0
            };
            centers[i] + shift * w
        })
        .collect();
    pos.sort_by(|a, b| b.total_cmp(a));
    Ok(pos)
}

/// Half-maximum half widths `(left, right)` of the smoothed histogram peak
/// nearest to `position`.
pub(crate) fn half_widths(hist: &ArrivalHistogram, position: f64) -> Option<(f64, f64)> {
    let s = smooth(&hist.counts, 5);
    let centers = hist.centers();
    let mut i = centers.partition_point(|&c| c < position).min(s.len() - 1);
    // Climb to the local maximum.
    loop {
        if i + 1 < s.len() && s[i + 1] > s[i] {
            i += 1;
        } else if i > 0 && s[i - 1] > s[i] {
            i -= 1;
        } else {
            break;
        }
    }
    let half = 0.5 * s[i];
    if half <= 0.0 {
        return None;
    }
    let cross = |dir: isize| -> Option<f64> {
        let mut j = i as isize;
        loop {
            let k = j + dir;
            if k < 0 || k as usize >= s.len() {
                return None;
            }
            if s[k as usize] < half {
                let (a, b) = (s[j as usize], s[k as usize]);
                let frac = (a - half) / (a - b);
                let t = centers[j as usize] + dir as f64 * frac * hist.bin_width();
                return Some((t - centers[i]).abs());
            }
            j = k;
        }
    };
    Some((cross(-1)?, cross(1)?))
}

/// Least-squares line `1/sqrt(n) = m x_n + b` through peaks given for
/// `n = 1, 2, ...` in that order.
pub fn fit_peak_scaling(peaks: &[f64]) -> Result<PeakScalingFit> {
    if peaks.len() < 2 {
        return Err(Error::arg(format!(
            "need at least two peaks, got {}",
            peaks.len()
        )));
    }
    if peaks.iter().any(|p| !p.is_finite()) {
        return Err(Error::arg("peak positions must be finite"));
    }
    let k = peaks.len() as f64;
    let ys: Vec<f64> = (1..=peaks.len()).map(|n| 1.0 / (n as f64).sqrt()).collect();
    let xm = peaks.iter().sum::<f64>() / k;
    let ym = ys.iter().sum::<f64>() / k;
    let sxx: f64 = peaks.iter().map(|x| (x - xm) * (x - xm)).sum();
    if sxx == 0.0 {
        return Err(Error::arg("peak positions are all identical"));
    }
    let sxy: f64 = peaks
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - xm) * (y - ym))
        .sum();
    let m = sxy / sxx;
    let b = ym - m * xm;
    let residuals: Vec<f64> = peaks
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - (m * x + b))
        .collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - ym) * (y - ym)).sum();
    let std_errors = if peaks.len() > 2 {
        let s2 = ss_res / (k - 2.0);
        let se_m = (s2 / sxx).sqrt();
        let se_b = (s2 * (1.0 / k + xm * xm / sxx)).sqrt();
        (se_m, se_b)
    } else {
        (f64::NAN, f64::NAN)
    };
    let law = PeakLaw::new(m, b)
        .map_err(|_| Error::arg(format!("peaks do not move earlier with n (slope {m})")))?;
    Ok(PeakScalingFit {
        law,
        residuals,
        r_squared: 1.0 - ss_res / ss_tot,
        std_errors,
    })
}
