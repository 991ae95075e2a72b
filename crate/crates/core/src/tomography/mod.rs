//! Detector tomography for phase-insensitive detectors: coherent-state
//! probes `F`, measured outcome frequencies `P`, and POVMs `Π` with
//! `P = F Π`. POVMs are diagonal in the Fock basis, so each row of `Π` is a
//! probability distribution over outcomes.

mod qp;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::assignment::{OutcomeCounts, OverlapMatrix};
use crate::special::{binomial_pmf, poisson_ln_pmf, poisson_sf};
use crate::{par, Error, Result};

/// Tail mass above the Hilbert cutoff allowed for the brightest probe.
pub const DEFAULT_TAIL: f64 = 1e-6;

/// Smallest `M` such that `P(N ≥ M) < tail` for `N ~ Poisson(max_nbar)`.
pub fn hilbert_dimension(max_nbar: f64, tail: f64) -> Result<usize> {
    if !(max_nbar >= 0.0) || !max_nbar.is_finite() {
        return Err(Error::arg(format!(
            "mean photon number {max_nbar} is not valid"
        )));
    }
    if !(tail > 0.0 && tail < 1.0) {
        return Err(Error::arg("tail must lie in (0, 1)"));
    }
    let mut m = max_nbar.floor() as u64 + 1;
    while poisson_sf(m, max_nbar) >= tail {
        m += 1;
    }
    Ok(m as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMatrix {
    /// `F[d][n] = e^{−n̄_d} n̄_d^n / n!`, shape `D × M`.
    pub f: DMatrix<f64>,
    pub mean_photon_numbers: Vec<f64>,
}

impl StateMatrix {
    pub fn dimension(&self) -> usize {
        self.f.ncols()
    }

    pub fn truncate(&self, states: usize) -> Self {
        let d = states.min(self.f.nrows());
        Self {
            f: self.f.rows(0, d).into_owned(),
            mean_photon_numbers: self.mean_photon_numbers[..d].to_vec(),
        }
    }
}

pub fn coherent_state_matrix(mean_photon_numbers: &[f64], dimension: usize) -> Result<StateMatrix> {
    if dimension == 0 {
        return Err(Error::arg("Hilbert dimension must be at least 1"));
    }
    if let Some(v) = mean_photon_numbers
        .iter()
        .find(|v| !(**v >= 0.0) || !v.is_finite())
    {
        return Err(Error::arg(format!("mean photon number {v} is not valid")));
    }
    let rows = par::map(mean_photon_numbers.to_vec(), |nbar| {
        (0..dimension)
            .map(|n| poisson_ln_pmf(n as u64, nbar).exp())
            .collect::<Vec<_>>()
    });
    let f = DMatrix::from_fn(mean_photon_numbers.len(), dimension, |d, n| rows[d][n]);
    Ok(StateMatrix {
        f,
        mean_photon_numbers: mean_photon_numbers.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeMatrix {
    /// `P[d][n′]`, column 0 is the no-click outcome.
    pub p: DMatrix<f64>,
    /// Trials per state; empty for model predictions.
    pub trials: Vec<u64>,
    /// Clicks per state that fell outside every region. They are counted
    /// in the no-click column, as every other non-labelled trial.
    pub invalid: Vec<u64>,
}

impl OutcomeMatrix {
    pub fn from_probabilities(p: DMatrix<f64>) -> Self {
        Self {
            p,
            trials: Vec::new(),
            invalid: Vec::new(),
        }
    }

    pub fn outcomes(&self) -> usize {
        self.p.ncols()
    }

    pub fn truncate(&self, states: usize) -> Self {
        let d = states.min(self.p.nrows());
        Self {
            p: self.p.rows(0, d).into_owned(),
            trials: self.trials.iter().copied().take(d).collect(),
            invalid: self.invalid.iter().copied().take(d).collect(),
        }
    }
}

/// Outcome frequencies from labelled counts. The no-click entry is the
/// number of trials minus all labelled clicks.
pub fn build_outcome_matrix(states: &[OutcomeCounts]) -> Result<OutcomeMatrix> {
    let labels = states
        .first()
        .map(|s| s.counts.len())
        .ok_or_else(|| Error::arg("no states"))?;
    if states.iter().any(|s| s.counts.len() != labels) {
        return Err(Error::arg(
            "states have different numbers of outcome labels",
        ));
    }
    let mut p = DMatrix::zeros(states.len(), labels + 1);
    for (d, s) in states.iter().enumerate() {
        let clicks = s.clicks();
        if clicks + s.invalid > s.trials {
            return Err(Error::data(format!(
                "state {d}: {} clicks exceed {} trials",
                clicks + s.invalid,
                s.trials
            )));
        }
        if s.trials == 0 {
            return Err(Error::data(format!("state {d} has no trials")));
        }
        let t = s.trials as f64;
        p[(d, 0)] = (s.trials - clicks) as f64 / t;
        for (k, &c) in s.counts.iter().enumerate() {
            p[(d, k + 1)] = c as f64 / t;
        }
    }
    Ok(OutcomeMatrix {
        p,
        trials: states.iter().map(|s| s.trials).collect(),
        invalid: states.iter().map(|s| s.invalid).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossMatrix {
    /// `L[n][m] = C(n, m) η^m (1 − η)^{n−m}`.
    pub l: DMatrix<f64>,
    pub eta: f64,
}

pub fn loss_matrix(dimension: usize, eta: f64) -> Result<LossMatrix> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::arg(format!("efficiency {eta} outside [0, 1]")));
    }
    let l = DMatrix::from_fn(dimension, dimension, |n, m| {
        binomial_pmf(n as u64, m as u64, eta)
    });
    Ok(LossMatrix { l, eta })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PovmMatrix {
    /// `Π[n][n′] = p(n′ | n photons)`.
    pub pi: DMatrix<f64>,
    /// Smoothing weight of the reconstruction; `None` for modelled POVMs.
    pub gamma: Option<f64>,
    pub diagnostics: Option<SolveDiagnostics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub kkt_residual: f64,
    pub objective: f64,
    /// Most negative entry before clipping.
    pub min_entry: f64,
}

impl PovmMatrix {
    pub fn element(&self, n: usize, outcome: usize) -> f64 {
        self.pi[(n, outcome)]
    }
}

/// `||P − FΠ||²_F + γ Σ (Π[n][n′] − Π[n+1][n′])²`.
pub fn objective(p: &DMatrix<f64>, f: &DMatrix<f64>, pi: &DMatrix<f64>, gamma: f64) -> f64 {
    let r = p - f * pi;
    let mut v = r.norm_squared();
    if gamma > 0.0 {
        for j in 0..pi.ncols() {
            for n in 0..pi.nrows().saturating_sub(1) {
                v += gamma * (pi[(n, j)] - pi[(n + 1, j)]).powi(2);
            }
        }
    }
    v
}

/// Options of the constrained least-squares POVM reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructOptions {
    pub max_iterations: usize,
    pub kkt_tolerance: f64,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100_000,
            kkt_tolerance: 1e-8,
        }
    }
}

pub fn reconstruct_povm(p: &OutcomeMatrix, f: &StateMatrix, gamma: f64) -> Result<PovmMatrix> {
    reconstruct_povm_with(p, f, gamma, &ReconstructOptions::default())
}

pub fn reconstruct_povm_with(
    p: &OutcomeMatrix,
    f: &StateMatrix,
    gamma: f64,
    opts: &ReconstructOptions,
) -> Result<PovmMatrix> {
    let (pm, fm) = (&p.p, &f.f);
    if pm.nrows() != fm.nrows() {
        return Err(Error::arg(format!(
            "P has {} states but F has {}",
            pm.nrows(),
            fm.nrows()
        )));
    }
    if pm.ncols() == 0 || fm.ncols() == 0 {
        return Err(Error::arg("empty outcome or Fock dimension"));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::arg(format!(
            "smoothing {gamma} must be finite and non-negative"
        )));
    }
    let g = fm.transpose() * fm;
    let b = fm.transpose() * pm;
    let sol = qp::solve(&g, &b, gamma, opts.max_iterations)?;
    if !(sol.kkt_residual < opts.kkt_tolerance) {
        return Err(Error::Fit {
            message: format!(
                "KKT residual {:e} above {:e}",
                sol.kkt_residual, opts.kkt_tolerance
            ),
            best_cost: objective(pm, fm, &sol.x, gamma),
            best_params: sol.x.iter().copied().collect(),
        });
    }
    let mut pi = sol.x;
    let min_entry = pi.min();
    for mut row in pi.row_iter_mut() {
        row.iter_mut().for_each(|v| *v = v.max(0.0));
        let s = row.sum();
        row /= s;
    }
    let diagnostics = SolveDiagnostics {
        iterations: sol.iterations,
        kkt_residual: sol.kkt_residual,
        objective: objective(pm, fm, &pi, gamma),
        min_entry,
    };
    Ok(PovmMatrix {
        pi,
        gamma: Some(gamma),
        diagnostics: Some(diagnostics),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingPoint {
    pub gamma: f64,
    /// `p(1 | 1)`.
    pub pi_11: f64,
    pub objective: f64,
}

/// Reconstruct once per smoothing weight; grid points run in parallel.
pub fn sweep_smoothing(
    p: &OutcomeMatrix,
    f: &StateMatrix,
    gammas: &[f64],
) -> Result<Vec<SmoothingPoint>> {
    if f.f.ncols() < 2 || p.p.ncols() < 2 {
        return Err(Error::arg("need at least two Fock states and two outcomes"));
    }
    par::map(gammas.to_vec(), |gamma| {
        let povm = reconstruct_povm(p, f, gamma)?;
        Ok(SmoothingPoint {
            gamma,
            pi_11: povm.pi[(1, 1)],
            objective: povm.diagnostics.map_or(f64::NAN, |d| d.objective),
        })
    })
    .into_iter()
    .collect()
}

/// `n` log-spaced values from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Modelled POVM `Π = L O′`, where `O′` is the overlap matrix with a
/// no-click column prepended (`1 −` the row's region total) and the zero
/// photon row set to certain no-click. Rows beyond the fitted curves reuse
/// the last curve's overlaps.
pub fn simulate_povm(loss: &LossMatrix, overlap: &OverlapMatrix) -> Result<PovmMatrix> {
    let o = &overlap.entries;
    let (k, r) = o.shape();
    if k == 0 || r == 0 {
        return Err(Error::arg("empty overlap matrix"));
    }
    if overlap
        .regions
        .regions()
        .iter()
        .enumerate()
        .any(|(i, reg)| reg.label != i + 1)
    {
        return Err(Error::arg("region labels must run 1, 2, … without gaps"));
    }
    let m = loss.l.nrows();
    let mut op = DMatrix::zeros(m, r + 1);
    if m > 0 {
        op[(0, 0)] = 1.0;
    }
    for row in 1..m {
        let src = row.min(k) - 1;
        let total: f64 = (0..r).map(|c| o[(src, c)]).sum();
        op[(row, 0)] = (1.0 - total).max(0.0);
        for c in 0..r {
            op[(row, c + 1)] = o[(src, c)];
        }
    }
    Ok(PovmMatrix {
        pi: &loss.l * op,
        gamma: None,
        diagnostics: None,
    })
}

pub fn predict_outcomes(f: &StateMatrix, povm: &PovmMatrix) -> Result<OutcomeMatrix> {
    if f.f.ncols() != povm.pi.nrows() {
        return Err(Error::arg(format!(
            "F has {} Fock columns but Π has {} rows",
            f.f.ncols(),
            povm.pi.nrows()
        )));
    }
    Ok(OutcomeMatrix::from_probabilities(&f.f * &povm.pi))
}

/// Classical fidelity `(Σ √(a_i b_i))² / (Σ a_i Σ b_i)`.
pub fn fidelity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::arg("vectors differ in length"));
    }
    if a.iter().chain(b).any(|v| !(*v >= 0.0)) {
        return Err(Error::arg("fidelity needs non-negative entries"));
    }
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if sa == 0.0 || sb == 0.0 {
        return Err(Error::arg("fidelity of an all-zero vector"));
    }
    let overlap: f64 = a.iter().zip(b).map(|(x, y)| (x * y).sqrt()).sum();
    Ok((overlap * overlap / (sa * sb)).min(1.0))
}

/// Fidelity of every outcome column of two outcome matrices.
pub fn column_fidelities(p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<Vec<f64>> {
    if p.shape() != q.shape() {
        return Err(Error::arg("matrices differ in shape"));
    }
    (0..p.ncols())
        .map(|j| {
            let a: Vec<f64> = p.column(j).iter().map(|v| v.max(0.0)).collect();
            let b: Vec<f64> = q.column(j).iter().map(|v| v.max(0.0)).collect();
            fidelity(&a, &b)
        })
        .collect()
}

/// Mean column fidelity over the outcomes below the last one. The last
/// outcome collects every high photon number and is dominated by saturated
/// states, so it would only inflate the average.
pub fn average_fidelity(p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<f64> {
    let f = column_fidelities(p, q)?;
    let used = if f.len() > 1 {
        &f[..f.len() - 1]
    } else {
        &f[..]
    };
    Ok(used.iter().sum::<f64>() / used.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_matrix_values() {
        let s = coherent_state_matrix(&[0.0, 1.0, 3.0], 60).unwrap();
        assert_eq!(s.f[(0, 0)], 1.0);
        assert_eq!(s.f.row(0).sum(), 1.0);
        assert!((s.f[(1, 1)] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((s.f.row(2).sum() - 1.0).abs() < 1e-12);
        assert!(coherent_state_matrix(&[-1.0], 3).is_err());
        let big = coherent_state_matrix(&[1e5], 100_400).unwrap();
        assert!(big.f.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn hilbert_cut() {
        let m = hilbert_dimension(729.0, 1e-6).unwrap();
        assert!(poisson_sf(m as u64, 729.0) < 1e-6);
        assert!(poisson_sf(m as u64 - 1, 729.0) >= 1e-6);
    }

    #[test]
    fn loss_matrix_values() {
        let l = loss_matrix(6, 0.91).unwrap();
        assert!((l.l[(2, 1)] - 0.1638).abs() < 1e-15);
        for r in l.l.row_iter() {
            assert!((r.sum() - 1.0).abs() < 1e-14);
        }
        assert_eq!(loss_matrix(4, 1.0).unwrap().l, DMatrix::identity(4, 4));
        let z = loss_matrix(4, 0.0).unwrap().l;
        assert!(z.row_iter().all(|r| r[0] == 1.0 && r.sum() == 1.0));
    }

    #[test]
    fn outcome_matrix_rows() {
        let s = [
            OutcomeCounts {
                trials: 10,
                counts: vec![0, 0],
                invalid: 0,
            },
            OutcomeCounts {
                trials: 10,
                counts: vec![0, 10],
                invalid: 0,
            },
            OutcomeCounts {
                trials: 10,
                counts: vec![3, 2],
                invalid: 1,
            },
        ];
        let p = build_outcome_matrix(&s).unwrap();
        assert_eq!(
            p.p.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 0.0, 0.0]
        );
        assert_eq!(p.p[(1, 2)], 1.0);
        assert!((p.p[(2, 0)] - 0.5).abs() < 1e-15);
        let bad = [OutcomeCounts {
            trials: 2,
            counts: vec![2, 1],
            invalid: 0,
        }];
        assert!(matches!(build_outcome_matrix(&bad), Err(Error::Data(_))));
    }

    #[test]
    fn identity_probes_return_p() {
        let p = DMatrix::from_row_slice(3, 3, &[0.9, 0.1, 0.0, 0.2, 0.7, 0.1, 0.0, 0.3, 0.7]);
        let f = StateMatrix {
            f: DMatrix::identity(3, 3),
            mean_photon_numbers: vec![0.0; 3],
        };
        let pi = reconstruct_povm(&OutcomeMatrix::from_probabilities(p.clone()), &f, 0.0).unwrap();
        assert!((pi.pi - p).abs().max() < 1e-12);
    }

    #[test]
    fn heavy_smoothing_flattens_columns() {
        let p = DMatrix::from_row_slice(3, 3, &[0.9, 0.1, 0.0, 0.2, 0.7, 0.1, 0.0, 0.3, 0.7]);
        let f = StateMatrix {
            f: DMatrix::identity(3, 3),
            mean_photon_numbers: vec![0.0; 3],
        };
        let pi = reconstruct_povm(&OutcomeMatrix::from_probabilities(p), &f, 1e6).unwrap();
        for c in pi.pi.column_iter() {
            assert!(c.max() - c.min() < 1e-5);
        }
    }

    #[test]
    fn fidelity_properties() {
        assert!((fidelity(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((fidelity(&[1.0, 2.0], &[3.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(fidelity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(fidelity(&[-1.0, 0.0], &[0.0, 1.0]).is_err());
        assert!(fidelity(&[0.0, 0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn simulated_povm_of_identity_overlap() {
        use crate::assignment::{PhotonRegions, Region};
        let regions = PhotonRegions::new(vec![
            Region::new(1, 2.0, 3.0),
            Region::new(2, 1.0, 2.0),
            Region::new(3, 0.0, 1.0),
        ])
        .unwrap();
        let o = OverlapMatrix {
            entries: DMatrix::identity(3, 3),
            masses: vec![1.0; 3],
            regions,
        };
        let pi = simulate_povm(&loss_matrix(4, 1.0).unwrap(), &o).unwrap();
        assert_eq!(pi.pi, DMatrix::identity(4, 4));
        let pi = simulate_povm(&loss_matrix(4, 0.91).unwrap(), &o).unwrap();
        assert!((pi.pi - loss_matrix(4, 0.91).unwrap().l).abs().max() < 1e-15);
    }
}
