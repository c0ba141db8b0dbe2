mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use rbsmooth::erbss::sample_index;
use rbsmooth::gaussian::*;
use rbsmooth::linalg::{floor_level, floor_spd, is_symmetric, min_eigenvalue};
use rbsmooth::mpf::{run_forward, systematic_resample};
use rbsmooth::rbss::{run_backward, step6_merge_nonlinear};
use rbsmooth::simulate::simulate;
use rbsmooth::{BackwardOptions, Threading, WeightMode};

fn matrix(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-3.0..3.0f64, n * n).prop_map(move |v| DMatrix::from_vec(n, n, v))
}

fn spd(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(n).prop_map(move |m| &m * m.transpose() + DMatrix::identity(n, n) * 0.1)
}

fn gauss(n: usize) -> impl Strategy<Value = GaussianMoment> {
    (prop::collection::vec(-5.0..5.0f64, n), spd(n))
        .prop_map(|(m, c)| GaussianMoment::new(DVector::from_vec(m), c).unwrap())
}

fn log_weights() -> impl Strategy<Value = Vec<LogWeight>> {
    prop::collection::vec((-800.0..0.0f64, -50.0..50.0f64), 1..40).prop_map(|v| {
        v.into_iter()
            .map(|(exponent, scale)| LogWeight { exponent, scale })
            .collect()
    })
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #[test]
    fn log_weights_normalize_and_ignore_shifts(logw in prop::collection::vec(-1e3..1e3f64, 1..60), shift in -1e3..1e3f64) {
        let w = normalize_log_weights(&logw).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|v| *v >= 0.0));
        let shifted: Vec<f64> = logw.iter().map(|v| v + shift).collect();
        prop_assert!(close(&w, &normalize_log_weights(&shifted).unwrap(), 1e-9));
    }

    #[test]
    fn floor_yields_spd(m in (1usize..5).prop_flat_map(matrix)) {
        let sym = (&m + m.transpose()) * 0.5;
        let (f, _) = floor_spd(&sym).unwrap();
        prop_assert!(is_symmetric(&f, 0.0));
        // rebuilding from the eigendecomposition costs a few ulps of the norm
        prop_assert!(min_eigenvalue(&f) >= floor_level(&sym) - 1e-14 * sym.norm());
        prop_assert!(f.clone().cholesky().is_some());
    }

    #[test]
    fn floor_leaves_well_conditioned_matrices_alone(m in (1usize..5).prop_flat_map(spd)) {
        let (f, floored) = floor_spd(&m).unwrap();
        prop_assert!(!floored);
        prop_assert_eq!(f, m);
    }

    #[test]
    fn canonical_round_trip(g in (1usize..5).prop_flat_map(gauss)) {
        let back = g.to_canonical().unwrap().to_moment().unwrap();
        let scale = g.cov().amax().max(1.0);
        prop_assert!((back.mean() - g.mean()).amax() < 1e-8 * scale * scale);
        prop_assert!((back.cov() - g.cov()).amax() < 1e-8 * scale);
    }

    #[test]
    fn gaussian_product_commutes(pair in (1usize..4).prop_flat_map(|n| (gauss(n), gauss(n)))) {
        let (a, b) = (pair.0.to_canonical().unwrap(), pair.1.to_canonical().unwrap());
        prop_assert_eq!(eq_gauss_product(&a, &b).unwrap(), eq_gauss_product(&b, &a).unwrap());
    }

    #[test]
    fn condensation_matches_mixture_moments(
        comps in (1usize..4).prop_flat_map(|n| prop::collection::vec((0.01..1.0f64, gauss(n)), 1..6))
    ) {
        let total: f64 = comps.iter().map(|c| c.0).sum();
        let comps: Vec<(f64, GaussianMoment)> = comps.into_iter().map(|(w, g)| (w / total, g)).collect();
        let c = gm_condense(&GaussianMixture::new(comps.clone()).unwrap()).unwrap();
        let mean = comps.iter().fold(DVector::zeros(c.dim()), |acc, (w, g)| acc + g.mean() * *w);
        prop_assert!((c.mean() - &mean).amax() < 1e-9);
        // the mixture covariance dominates every weighted component covariance
        for (w, g) in &comps {
            prop_assert!(min_eigenvalue(&(c.cov() - g.cov() * *w)) > -1e-9);
        }
    }

    #[test]
    fn merged_weights_are_normalized(w1 in log_weights(), seed in 0u64..1000) {
        let n = w1.len();
        let rot = |k: usize| -> Vec<LogWeight> { (0..n).map(|j| w1[(j + k + seed as usize) % n]).collect() };
        let (w2, w4) = (rot(1), rot(2));
        for mode in [WeightMode::Exact, WeightMode::Approx] {
            let w = step6_merge_nonlinear(&w1, &w2, &w4, mode, 0).unwrap();
            prop_assert_eq!(w.len(), n);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn approx_mode_ignores_constants(w1 in log_weights(), shift in -100.0..100.0f64) {
        let moved: Vec<LogWeight> = w1
            .iter()
            .map(|w| LogWeight { exponent: w.exponent + shift, scale: w.scale * 2.0 - 3.0 })
            .collect();
        let a = step6_merge_nonlinear(&w1, &w1, &w1, WeightMode::Approx, 0).unwrap();
        let b = step6_merge_nonlinear(&moved, &moved, &moved, WeightMode::Approx, 0).unwrap();
        prop_assert!(close(&a, &b, 1e-9));
    }

    #[test]
    fn systematic_resampling_counts(raw in prop::collection::vec(0.0..1.0f64, 1..50), u0 in 0.0..1.0f64) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 1e-6);
        let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let idx = systematic_resample(&w, u0);
        prop_assert_eq!(idx.len(), w.len());
        prop_assert!(idx.windows(2).all(|p| p[0] <= p[1]));
        let n = w.len() as f64;
        for (i, wi) in w.iter().enumerate() {
            let count = idx.iter().filter(|&&j| j == i).count() as f64;
            prop_assert!((count - n * wi).abs() < 1.0 + 1e-9);
        }
    }

    #[test]
    fn inverse_cdf_draws_supported_indices(raw in prop::collection::vec(0.0..1.0f64, 1..30), u in 0.0..1.0f64) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 1e-6);
        let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let j = sample_index(&w, u);
        prop_assert!(w[j] > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn smoother_invariants_on_random_models(seed in 0u64..10_000, np in 2usize..30, horizon in 1usize..12) {
        let model = common::random_clg(seed);
        let tr = simulate(&model, horizon, seed).unwrap();
        let ys = &tr.measurements;
        let h = run_forward(&model, ys, np, seed, Threading::Serial).unwrap();
        let sm = run_backward(&h, &model, ys, &BackwardOptions::default()).unwrap();
        prop_assert_eq!(sm.marginals.len(), horizon);
        for (t, (inst, m)) in h.instants.iter().zip(&sm.marginals).enumerate() {
            prop_assert_eq!(m.instant, t);
            prop_assert!((m.particles.iter().map(|p| p.weight).sum::<f64>() - 1.0).abs() < 1e-12);
            for (f, s) in inst.particles.iter().zip(&m.particles) {
                prop_assert_eq!(&f.x_nonlin, &s.x_nonlin);
                prop_assert!(min_eigenvalue(s.lin_sm.cov()) > 0.0);
            }
            let ess = m.effective_sample_size();
            prop_assert!(ess >= 1.0 - 1e-9 && ess <= np as f64 + 1e-9);
        }
        let again = run_backward(&h, &model, ys, &BackwardOptions::default()).unwrap();
        prop_assert_eq!(again, sm);
    }
}

#[test]
fn floor_of_indefinite_two_by_two() {
    let m = DMatrix::from_column_slice(2, 2, &[1.6146686221520237, 0.9690068947025645, 0.0, -2.582047087424426]);
    let sym = (&m + m.transpose()) * 0.5;
    let (f, floored) = floor_spd(&sym).unwrap();
    assert!(floored);
    assert!(min_eigenvalue(&f) >= floor_level(&sym) - 1e-14 * sym.norm());
    assert!(f.cholesky().is_some());
}
