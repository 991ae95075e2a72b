use nalgebra::DMatrix;
use pnr_core::simulator::{multinomial, NbarSchedule};
use pnr_core::tomography::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MEASURED_POVM: [[f64; 5]; 8] = [
    [0.99996, 0.00004, 0.0, 0.0, 0.0],
    [0.10640, 0.87092, 0.02268, 0.0, 0.0],
    [0.01081, 0.24109, 0.74810, 0.0, 0.0],
    [0.0, 0.0, 0.34561, 0.65439, 0.0],
    [0.0, 0.0, 0.0, 0.48357, 0.51643],
    [0.0, 0.0, 0.0, 0.0, 1.0],
    [0.0, 0.0, 0.0, 0.0, 1.0],
    [0.0, 0.0, 0.0, 0.0, 1.0],
];

fn setup() -> (StateMatrix, PovmMatrix, OutcomeMatrix) {
    let nbars: Vec<f64> = NbarSchedule::default()
        .values()
        .into_iter()
        .take(40)
        .collect();
    let m = hilbert_dimension(nbars[39], DEFAULT_TAIL).unwrap();
    let f = coherent_state_matrix(&nbars, m).unwrap();
    let pi = DMatrix::from_fn(m, 5, |n, j| {
        if n < 8 {
            MEASURED_POVM[n][j]
        } else if j == 4 {
            1.0
        } else {
            0.0
        }
    });
    let truth = PovmMatrix {
        pi,
        gamma: None,
        diagnostics: None,
    };
    let p = predict_outcomes(&f, &truth).unwrap();
    (f, truth, p)
}

#[test]
fn hilbert_dimension_of_forty_states() {
    let nbars = NbarSchedule::default().values();
    assert_eq!(nbars[39], 729.0);
    assert_eq!(hilbert_dimension(729.0, DEFAULT_TAIL).unwrap(), 862);
}

#[test]
fn exact_round_trip() {
    let (f, truth, p) = setup();
    let rec = reconstruct_povm(&p, &f, 0.0).unwrap();
    let err = (&rec.pi - &truth.pi).abs().max();
    assert!(err < 1e-6, "max error {err}");
    let back = predict_outcomes(&f, &rec).unwrap();
    assert!((&back.p - &p.p).norm() < 1e-6);
    assert!(rec.diagnostics.unwrap().kkt_residual < 1e-8);
    for r in rec.pi.row_iter() {
        assert!((r.sum() - 1.0).abs() < 1e-9);
    }
    assert!(rec.pi.min() >= 0.0);
}

#[test]
fn saturation_is_monotone() {
    let (_, _, p) = setup();
    // Rows of a truncated F miss up to the Poisson tail; compare shares.
    let last: Vec<f64> = p.p.row_iter().map(|r| r[4] / r.sum()).collect();
    assert!(last.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    assert!(last[39] > 1.0 - 1e-12);
}

#[test]
fn smoothing_sweep() {
    let (f, _, p) = setup();
    let curve = sweep_smoothing(&p, &f, &[0.0, 1e-6, 1e-3]).unwrap();
    assert!((curve[1].pi_11 - curve[0].pi_11).abs() < 1e-3);
    assert!(curve[2].pi_11 < curve[1].pi_11);
    assert_eq!(sweep_smoothing(&p, &f, &[1e-6]).unwrap().len(), 1);
}

fn noisy(p: &OutcomeMatrix, seed: u64) -> OutcomeMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> =
        p.p.row_iter()
            .map(|r| {
                let probs: Vec<f64> = r.iter().copied().collect();
                multinomial(570_000, &probs, &mut rng)
                    .unwrap()
                    .into_iter()
                    .map(|c| c as f64 / 570_000.0)
                    .collect()
            })
            .collect();
    OutcomeMatrix::from_probabilities(DMatrix::from_fn(rows.len(), 5, |d, j| rows[d][j]))
}

#[test]
fn noisy_reconstruction_is_optimal_and_faithful() {
    let (f, _, p) = setup();
    let pn = noisy(&p, 7);
    let gamma = 1e-6;
    let rec = reconstruct_povm(&pn, &f, gamma).unwrap();
    let pred = predict_outcomes(&f, &rec).unwrap();
    assert!(average_fidelity(&pred.p, &pn.p).unwrap() >= 0.999);

    // Local optimality: moving mass between two entries of a row never
    // lowers the objective.
    let base = objective(&pn.p, &f.f, &rec.pi, gamma);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (m, n) = rec.pi.shape();
    for _ in 0..100 {
        let r = rng.random_range(0..m.min(60));
        let a = rng.random_range(0..n);
        let b = (a + rng.random_range(1..n)) % n;
        for delta in [1e-4f64, -1e-4] {
            let mut x = rec.pi.clone();
            let d = if delta > 0.0 {
                delta.min(x[(r, b)])
            } else {
                -(-delta).min(x[(r, a)])
            };
            x[(r, a)] += d;
            x[(r, b)] -= d;
            assert!(objective(&pn.p, &f.f, &x, gamma) >= base - 1e-15);
        }
    }
}
