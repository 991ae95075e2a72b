use pnr_core::distributions::GAUSS_FWHM_FACTOR;
use pnr_core::fitting::*;
use pnr_core::histogram::{build_histogram, sum_histograms, ArrivalHistogram};
use pnr_core::simulator::{derive_seed, simulate_trials, DetectorModel};

const RANGE: (f64, f64) = (400.5, 950.5);

fn dataset(model: &DetectorModel) -> Vec<ArrivalHistogram> {
    FIT_STATES
        .iter()
        .enumerate()
        .map(|(i, &nbar)| {
            let trials =
                simulate_trials(model, nbar, 570_000, derive_seed(2024, i as u64)).unwrap();
            let clicks: Vec<f64> = trials.iter().filter_map(|t| t.arrival).collect();
            let mut h = build_histogram(&clicks, trials.len() as u64, 1.0, RANGE).unwrap();
            h.mean_photon_number = nbar;
            h
        })
        .collect()
}

#[test]
fn emg_fit_recovers_generating_model() {
    let model = DetectorModel::default();
    let hists = dataset(&model);
    let fit = fit_emg_model(&hists, &EmgFitConfig::default()).unwrap();
    let sigma = model
        .emg_sigma
        .hypot(model.optical_pulse_fwhm / GAUSS_FWHM_FACTOR);
    for (s, st) in fit.states.iter().enumerate() {
        let nbar = st.mean_photon_number;
        for n in 1..=3 {
            let truth = model.delay + model.peak_law.position(n) + model.drift(nbar);
            let got = fit.center(s, n);
            assert!(
                (got - truth).abs() < 1.0,
                "state {s} n {n}: {got} vs {truth}"
            );
        }
        assert!(
            (st.sigmas[0] / sigma - 1.0).abs() < 0.1,
            "sigma {}",
            st.sigmas[0]
        );
        assert!((st.tau / model.emg_tau - 1.0).abs() < 0.1, "tau {}", st.tau);
    }

    let sum = sum_histograms(&hists).unwrap();
    let peaks = find_peaks(&sum, 5).unwrap();
    let scaling = fit_peak_scaling(&peaks).unwrap();
    let (_, gq) = fit_gaussian_sum(&sum, &scaling, model.eta, &GaussFitConfig::default()).unwrap();
    assert!(
        fit.chi_squared < gq.chi_squared,
        "emg {} gauss {}",
        fit.chi_squared,
        gq.chi_squared
    );

    // Agreement with the noiseless expectation over four decades. The model
    // stops at 20 photons, so the reference does too; the window is set by
    // the complete expectation.
    let edges = &sum.bin_edges;
    let fitted = fit.summed_model_counts(edges);
    let trials = 570_000.0;
    let mut expected = vec![0.0; edges.len() - 1];
    let mut complete = vec![0.0; edges.len() - 1];
    for &nbar in FIT_STATES.iter() {
        for m in 1..40u64 {
            let w = trials * p_detected(m, nbar, model.eta);
            if w < 1e-3 {
                continue;
            }
            for i in 0..expected.len() {
                let v = w
                    * (model.arrival_cdf(m, nbar, edges[i + 1])
                        - model.arrival_cdf(m, nbar, edges[i]));
                complete[i] += v;
                if m as usize <= fit.components() {
                    expected[i] += v;
                }
            }
        }
    }
    let peak = complete.iter().cloned().fold(0.0, f64::max);
    for (i, (&f, &e)) in fitted.iter().zip(&expected).enumerate() {
        if complete[i] > peak * 1e-4 {
            assert!(
                (f / e - 1.0).abs() < 0.1,
                "bin {i}: fitted {f} expected {e}"
            );
        }
    }
}

/// Probability that exactly `m` photons are detected from a coherent state.
fn p_detected(m: u64, nbar: f64, eta: f64) -> f64 {
    pnr_core::special::poisson_pmf(m, nbar * eta)
}

#[test]
fn vanishing_tail_matches_gaussian_sum() {
    // Data from the Gaussian-sum family: no tail, no drift between states.
    let model = DetectorModel {
        emg_tau: 1e-3,
        drift_per_nbar: 0.0,
        ..DetectorModel::default()
    };
    let hists = dataset(&model);
    let cfg = EmgFitConfig {
        fixed_tau: Some(1e-6),
        ..EmgFitConfig::default()
    };
    let fit = fit_emg_model(&hists, &cfg).unwrap();
    let sum = sum_histograms(&hists).unwrap();
    let scaling = fit_peak_scaling(&find_peaks(&sum, 5).unwrap()).unwrap();
    let gcfg = GaussFitConfig {
        free_sigmas: 1,
        ..GaussFitConfig::default()
    };
    let (_, gq) = fit_gaussian_sum(&sum, &scaling, model.eta, &gcfg).unwrap();
    let rel = (fit.chi_squared - gq.chi_squared).abs() / gq.chi_squared;
    assert!(
        rel < 0.05,
        "emg {} gauss {}",
        fit.chi_squared,
        gq.chi_squared
    );
}

#[test]
fn gaussian_sum_generator_round_trip() {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Poisson};
    let law = PeakLaw::through(810.0, 680.0).unwrap();
    let sigmas: Vec<f64> = (0..20).map(|n| 8.0 + 0.5 * n.min(5) as f64).collect();
    let truth =
        GaussSumModel::new(570_000.0, law, sigmas.clone(), 0.91, FIT_STATES.to_vec()).unwrap();
    let mut hist = pnr_core::histogram::ArrivalHistogram::empty(1.0, RANGE).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let lambdas = truth.model_counts(&hist.bin_edges);
    for (c, l) in hist.counts.iter_mut().zip(lambdas) {
        *c = if l > 0.0 {
            Poisson::new(l).unwrap().sample(&mut rng) as u64
        } else {
            0
        };
    }
    hist.trials = 9 * 570_000;
    let scaling = fit_peak_scaling(&find_peaks(&hist, 5).unwrap()).unwrap();
    let (fit, _) = fit_gaussian_sum(&hist, &scaling, 0.91, &GaussFitConfig::default()).unwrap();
    for n in 1..=4 {
        assert!(
            (fit.law.position(n) - law.position(n)).abs() < 0.5,
            "centre {n}"
        );
        assert!(
            (fit.sigmas[n - 1] / sigmas[n - 1] - 1.0).abs() < 0.05,
            "sigma {n}: {}",
            fit.sigmas[n - 1]
        );
    }
}

#[test]
fn three_peak_mixture_is_located() {
    use pnr_core::distributions::{GaussComponent, Shape};
    let mut h = pnr_core::histogram::ArrivalHistogram::empty(1.0, (0.0, 400.0)).unwrap();
    let shapes = [(310.0, 1e5), (180.0, 6e4), (120.0, 3e4)]
        .map(|(mu, w)| Shape::Gauss(GaussComponent::new(mu, 8.0, w).unwrap()));
    let mut counts = vec![0.0; h.n_bins()];
    for s in &shapes {
        add_binned(s, &h.bin_edges, &mut counts);
    }
    h.counts = counts.iter().map(|c| c.round() as u64).collect();
    let peaks = find_peaks(&h, 3).unwrap();
    for (p, want) in peaks.iter().zip([310.0, 180.0, 120.0]) {
        assert!((p - want).abs() <= 1.0, "{p} vs {want}");
    }
}

#[test]
fn noisy_peak_scaling_within_three_standard_errors() {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let law = PeakLaw::new(0.01, -2.0).unwrap();
    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut inside = 0;
    for seed in 0..1000 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let peaks: Vec<f64> = (1..=5)
            .map(|n| law.position(n) + noise.sample(&mut rng))
            .collect();
        let fit = fit_peak_scaling(&peaks).unwrap();
        let (sm, sb) = fit.std_errors;
        if (fit.law.m_lin - 0.01).abs() < 3.0 * sm && (fit.law.b_lin + 2.0).abs() < 3.0 * sb {
            inside += 1;
        }
    }
    // Five points leave three degrees of freedom, so 3 SE covers ~94%.
    assert!(inside >= 900, "{inside} of 1000");
}

#[test]
fn detected_weight_matches_direct_summation() {
    let mut direct = 0.0;
    for nbar in 1..=9 {
        let mu = 0.91 * nbar as f64;
        direct += mu * (-mu).exp();
    }
    assert!((detected_weight(1, 0.91, &FIT_STATES) - direct).abs() < 1e-12);
}

#[test]
fn gaussian_fit_conserves_mass_and_keeps_weights() {
    let model = DetectorModel {
        emg_tau: 1e-3,
        drift_per_nbar: 0.0,
        ..DetectorModel::default()
    };
    let sum = sum_histograms(&dataset(&model)[..3]).unwrap();
    let scaling = fit_peak_scaling(&find_peaks(&sum, 3).unwrap()).unwrap();
    let cfg = GaussFitConfig {
        nbars: vec![1.0, 2.0, 3.0],
        ..GaussFitConfig::default()
    };
    let (fit, q) = fit_gaussian_sum(&sum, &scaling, model.eta, &cfg).unwrap();
    let total: f64 = fit.model_counts(&sum.bin_edges).iter().sum();
    assert!(
        (total / sum.total() as f64 - 1.0).abs() < 0.01,
        "{total} vs {}",
        sum.total()
    );
    for (n, w) in fit.weights.iter().enumerate() {
        assert!((w - detected_weight(n + 1, model.eta, &cfg.nbars)).abs() < 1e-12);
    }
    assert!(q.converged);
    let centres: Vec<f64> = (1..=20).map(|n| fit.law.position(n)).collect();
    assert!(centres.windows(2).all(|w| w[1] < w[0]));
}
