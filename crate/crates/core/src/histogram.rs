//! Trigger/rising-edge pairing and arrival-time histograms.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Trigger,
    Rising,
    Falling,
}

impl Channel {
    pub fn id(self) -> u8 {
        match self {
            Channel::Trigger => 0,
            Channel::Rising => 1,
            Channel::Falling => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Channel::Trigger),
            1 => Some(Channel::Rising),
            2 => Some(Channel::Falling),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimestampRecord {
    pub channel: Channel,
    /// Picoseconds.
    pub time: i64,
}

impl TimestampRecord {
    pub fn new(channel: Channel, time: i64) -> Self {
        Self { channel, time }
    }
}

/// Per-trigger outcome of pairing: `Some(diff)` for a click, `None` for a
/// trigger without a rising edge inside the window.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairedEvents {
    pub diffs: Vec<Option<i64>>,
}

impl PairedEvents {
    pub fn trials(&self) -> u64 {
        self.diffs.len() as u64
    }

    pub fn clicks(&self) -> u64 {
        self.diffs.iter().filter(|d| d.is_some()).count() as u64
    }

    pub fn click_times(&self) -> Vec<f64> {
        self.diffs.iter().flatten().map(|&d| d as f64).collect()
    }
}

/// Pair every trigger with the first rising edge in `[trigger, trigger +
/// window)`. An edge is used at most once and always belongs to the most
/// recent trigger; falling edges are ignored.
pub fn pair_events(stream: &[TimestampRecord], window: i64) -> Result<PairedEvents> {
    if window <= 0 {
        return Err(Error::arg(format!(
            "pairing window must be positive, got {window}"
        )));
    }
    let mut diffs = Vec::new();
    let mut last = i64::MIN;
    // Index into `diffs` of the trigger still waiting for an edge.
    let mut open: Option<(usize, i64)> = None;
    for (i, r) in stream.iter().enumerate() {
        if r.time < last {
            return Err(Error::data(format!(
                "timestamp stream not sorted at record {i}: {} after {last}",
                r.time
            )));
        }
        last = r.time;
        match r.channel {
            Channel::Trigger => {
                diffs.push(None);
                open = Some((diffs.len() - 1, r.time));
            }
            Channel::Rising => {
                if let Some((idx, t0)) = open {
                    let d = r.time - t0;
                    if d < window {
                        diffs[idx] = Some(d);
                    }
                    open = None;
                }
            }
            Channel::Falling => {}
        }
    }
    Ok(PairedEvents { diffs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Total number of triggers, clicks or not.
    pub trials: u64,
    pub mean_photon_number: f64,
    /// Clicks that fell outside the binned range.
    pub out_of_range: u64,
}

impl ArrivalHistogram {
    /// Empty histogram with `(hi - lo) / bin_width` bins (rounded up).
    pub fn empty(bin_width: f64, range: (f64, f64)) -> Result<Self> {
        let (lo, hi) = range;
        if !(bin_width > 0.0) || !bin_width.is_finite() {
            return Err(Error::arg(format!(
                "bin width must be positive, got {bin_width}"
            )));
        }
        if !(lo.is_finite() && hi.is_finite()) || !(hi > lo) {
            return Err(Error::arg(format!("empty histogram range [{lo}, {hi})")));
        }
        let n = ((hi - lo) / bin_width - 1e-9).ceil().max(1.0) as usize;
        let bin_edges = (0..=n).map(|i| lo + bin_width * i as f64).collect();
        Ok(Self {
            bin_edges,
            counts: vec![0; n],
            trials: 0,
            mean_photon_number: 0.0,
            out_of_range: 0,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.bin_edges[0], *self.bin_edges.last().expect("edges"))
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_edges[1] - self.bin_edges[0]
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]))
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn clicks(&self) -> u64 {
        self.total() + self.out_of_range
    }

    /// True when there were clicks but none landed inside the range.
    pub fn range_warning(&self) -> bool {
        self.total() == 0 && self.out_of_range > 0
    }

    /// Bin index of `t` under half-open `[edge_i, edge_{i+1})` binning.
    pub fn bin_of(&self, t: f64) -> Option<usize> {
        let (lo, hi) = self.range();
        if !(t >= lo && t < hi) {
            return None;
        }
        let i = self.bin_edges.partition_point(|&e| e <= t);
        Some(i - 1)
    }

    pub fn add(&mut self, t: f64) {
        match self.bin_of(t) {
            Some(i) => self.counts[i] += 1,
            None => self.out_of_range += 1,
        }
    }

    /// Merge groups of `factor` adjacent bins.
    pub fn rebin(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.n_bins() % factor != 0 {
            return Err(Error::arg(format!(
                "cannot merge {} bins in groups of {factor}",
                self.n_bins()
            )));
        }
        let counts = self.counts.chunks(factor).map(|c| c.iter().sum()).collect();
        let bin_edges = self.bin_edges.iter().step_by(factor).copied().collect();
        Ok(Self {
            bin_edges,
            counts,
            ..self.clone()
        })
    }
}

/// Bin click times. `trials` counts every trigger (clicks plus no-clicks).
pub fn build_histogram(
    diffs: &[f64],
    trials: u64,
    bin_width: f64,
    range: (f64, f64),
) -> Result<ArrivalHistogram> {
    if diffs.len() as u64 > trials {
        return Err(Error::data(format!(
            "{} clicks exceed {trials} trials",
            diffs.len()
        )));
    }
    let mut h = ArrivalHistogram::empty(bin_width, range)?;
    h.trials = trials;
    for &d in diffs {
        h.add(d);
    }
    Ok(h)
}

/// Histogram of the clicks of one paired stream.
pub fn histogram_from_pairs(
    pairs: &PairedEvents,
    bin_width: f64,
    range: (f64, f64),
    mean_photon_number: f64,
) -> Result<ArrivalHistogram> {
    let mut h = build_histogram(&pairs.click_times(), pairs.trials(), bin_width, range)?;
    h.mean_photon_number = mean_photon_number;
    Ok(h)
}

/// Elementwise sum. The resulting `mean_photon_number` is the
/// trial-weighted mean of the inputs.
pub fn sum_histograms(hists: &[ArrivalHistogram]) -> Result<ArrivalHistogram> {
    let first = hists
        .first()
        .ok_or_else(|| Error::arg("no histograms to sum"))?;
    let mut out = first.clone();
    let mut weighted = first.mean_photon_number * first.trials as f64;
    for h in &hists[1..] {
        if h.bin_edges != first.bin_edges {
            return Err(Error::arg("histograms have different binning"));
        }
        for (o, c) in out.counts.iter_mut().zip(&h.counts) {
            *o += c;
        }
        out.trials += h.trials;
        out.out_of_range += h.out_of_range;
        weighted += h.mean_photon_number * h.trials as f64;
    }
    if hists.len() > 1 {
        out.mean_photon_number = if out.trials > 0 {
            weighted / out.trials as f64
        } else {
            0.0
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Channel::*;

    fn rec(c: Channel, t: i64) -> TimestampRecord {
        TimestampRecord::new(c, t)
    }

    #[test]
    fn pairs_single_edge() {
        let p = pair_events(&[rec(Trigger, 0), rec(Rising, 300)], 10_000).unwrap();
        assert_eq!(p.diffs, vec![Some(300)]);
    }

    #[test]
    fn trigger_without_edge_is_no_click() {
        let s = [
            rec(Trigger, 0),
            rec(Trigger, 100_000),
            rec(Rising, 100_250),
            rec(Falling, 100_900),
        ];
        let p = pair_events(&s, 10_000).unwrap();
        assert_eq!(p.diffs, vec![None, Some(250)]);
    }

    #[test]
    fn edge_outside_window_is_dropped() {
        let p = pair_events(&[rec(Trigger, 0), rec(Rising, 10_000)], 10_000).unwrap();
        assert_eq!(p.diffs, vec![None]);
    }

    #[test]
    fn only_first_edge_is_used() {
        let s = [rec(Trigger, 0), rec(Rising, 10), rec(Rising, 20)];
        assert_eq!(pair_events(&s, 100).unwrap().diffs, vec![Some(10)]);
    }

    #[test]
    fn unsorted_stream_is_data_error() {
        let s = [rec(Trigger, 50), rec(Rising, 40)];
        assert!(matches!(pair_events(&s, 100), Err(Error::Data(_))));
    }

    #[test]
    fn half_open_bins() {
        let h = build_histogram(&[1.5, 1.5, 2.5], 3, 1.0, (0.0, 3.0)).unwrap();
        assert_eq!(h.counts, vec![0, 2, 1]);
        let h = build_histogram(&[1.0, 3.0], 2, 1.0, (0.0, 3.0)).unwrap();
        assert_eq!(h.counts, vec![0, 1, 0]);
        assert_eq!(h.out_of_range, 1);
    }

    #[test]
    fn all_outside_sets_warning() {
        let h = build_histogram(&[-1.0, 10.0], 5, 1.0, (0.0, 3.0)).unwrap();
        assert_eq!(h.counts, vec![0, 0, 0]);
        assert!(h.range_warning());
    }

    #[test]
    fn empty_range_rejected() {
        assert!(build_histogram(&[], 0, 1.0, (3.0, 3.0)).is_err());
        assert!(build_histogram(&[], 0, 0.0, (0.0, 3.0)).is_err());
    }

    #[test]
    fn more_clicks_than_trials_rejected() {
        assert!(build_histogram(&[1.0, 2.0], 1, 1.0, (0.0, 3.0)).is_err());
    }

    #[test]
    fn sum_requires_same_edges() {
        let a = build_histogram(&[1.0], 1, 1.0, (0.0, 3.0)).unwrap();
        let b = build_histogram(&[1.0], 1, 0.5, (0.0, 3.0)).unwrap();
        assert!(sum_histograms(&[a.clone(), b]).is_err());
        assert_eq!(sum_histograms(std::slice::from_ref(&a)).unwrap(), a);
        assert!(sum_histograms(&[]).is_err());
    }
}
