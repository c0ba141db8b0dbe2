mod common;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use rbsmooth::erbss::run_erbss;
use rbsmooth::gaussian::GaussianMoment;
use rbsmooth::model::LinearBenchmark;
use rbsmooth::mpf::run_forward;
use rbsmooth::oracles::*;
use rbsmooth::rbss::conditional_linear_smoother;
use rbsmooth::simulate::simulate;
use rbsmooth::{linear_benchmark, BackwardOptions, ClgModel, ModelParams, Threading};

fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = (a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(a);
    out.view_mut((n, n), (m, m)).copy_from(b);
    out
}

/// The linear sub-model given a fixed nonlinear path, as a dense problem.
fn conditional_steps(model: &ClgModel, ys: &[DVector<f64>], path: &[DVector<f64>]) -> Vec<LinearStep> {
    let horizon = path.len();
    (0..horizon)
        .map(|t| {
            let p = model.params(t, &path[t]);
            if t + 1 == horizon {
                return LinearStep {
                    observed: ys[t].clone(),
                    obs_matrix: p.b_obs.clone(),
                    obs_offset: p.h_obs.clone(),
                    obs_cov: model.cov_e().clone(),
                    transition: None,
                };
            }
            let z = &path[t + 1] - &p.f_nonlin;
            let (dp, dn, dl) = (ys[t].len(), z.len(), model.d_lin());
            let mut h = DMatrix::zeros(dp + dn, dl);
            h.view_mut((0, 0), (dp, dl)).copy_from(&p.b_obs);
            h.view_mut((dp, 0), (dn, dl)).copy_from(&p.a_nonlin);
            let mut observed = DVector::zeros(dp + dn);
            observed.rows_mut(0, dp).copy_from(&ys[t]);
            observed.rows_mut(dp, dn).copy_from(&z);
            let mut offset = DVector::zeros(dp + dn);
            offset.rows_mut(0, dp).copy_from(&p.h_obs);
            LinearStep {
                observed,
                obs_matrix: h,
                obs_offset: offset,
                obs_cov: block_diag(model.cov_e(), model.cov_w_nonlin()),
                transition: Some((p.a_lin.clone(), p.f_lin.clone(), model.cov_w_lin().clone())),
            }
        })
        .collect()
}

#[test]
fn conditional_smoother_matches_batch_posterior() {
    for seed in 0..15 {
        let model = common::random_clg(500 + seed);
        let horizon = 1 + (seed as usize % 12);
        let tr = simulate(&model, horizon, seed).unwrap();
        let got = conditional_linear_smoother(&model, &tr.measurements, &tr.states_nonlin).unwrap();
        let prior = Moments {
            mean: model.prior_lin().mean().clone(),
            cov: model.prior_lin().cov().clone(),
        };
        let want = batch_smoother(&prior, &conditional_steps(&model, &tr.measurements, &tr.states_nonlin)).unwrap();
        for (g, w) in got.iter().zip(&want) {
            assert!((g.mean() - &w.mean).amax() < 1e-8, "model {seed}: mean");
            assert!((g.cov() - &w.cov).amax() < 1e-8, "model {seed}: covariance");
        }
    }
}

#[test]
fn filter_matches_kalman_on_linear_benchmark() {
    let lb = LinearBenchmark::new(0.2, 0.2, 0.03).unwrap();
    let model = linear_benchmark(0.2, 0.2, 0.03).unwrap();
    let stacked = LinearGaussianModel::stacked_linear_benchmark(&lb);
    let tr = simulate(&model, 40, 3).unwrap();
    let k = kalman_filter(&stacked, &tr.measurements).unwrap();
    let est = run_forward(&model, &tr.measurements, 500, 3, Threading::Serial)
        .unwrap()
        .filtered_estimates()
        .unwrap();
    let se: f64 = est
        .iter()
        .zip(&k.filtered)
        .map(|(e, k)| (e.lin.mean() - k.mean.rows(0, 3)).norm_squared())
        .sum();
    let rmse = (se / (3.0 * est.len() as f64)).sqrt();
    assert!(rmse < 0.02, "filter deviates from Kalman by {rmse}");
}

/// Scalar nonlinear dynamics with a linear component that neither feeds the
/// nonlinear state nor the observation. The trajectory sampler then reduces
/// to forward-filtering backward-simulation on `x^N`.
fn decoupled_model() -> (ClgModel, ScalarModel) {
    let f = |x: f64| 0.5 * x + 2.0 * x.atan();
    let h = |x: f64| 0.5 * x + 0.3 * x.sin();
    let (q, r) = (0.5, 0.3);
    let params = move |_t: usize, x: &DVector<f64>| ModelParams {
        a_lin: DMatrix::from_element(1, 1, 0.5),
        f_lin: DVector::zeros(1),
        a_nonlin: DMatrix::zeros(1, 1),
        f_nonlin: DVector::from_element(1, f(x[0])),
        b_obs: DMatrix::zeros(1, 1),
        h_obs: DVector::from_element(1, h(x[0])),
    };
    let one = |v: f64| DMatrix::from_element(1, 1, v);
    let clg = ClgModel::new(
        1,
        1,
        1,
        Arc::new(params),
        one(1.0),
        one(q),
        one(r),
        GaussianMoment::scalar(0.0, 1.0).unwrap(),
        GaussianMoment::scalar(0.0, 1.0).unwrap(),
    )
    .unwrap();
    let scalar = ScalarModel {
        transition: Arc::new(f),
        process_var: q,
        observation: Arc::new(h),
        obs_var: r,
        prior_mean: 0.0,
        prior_var: 1.0,
    };
    (clg, scalar)
}

#[test]
fn particle_methods_match_grid_on_decoupled_model() {
    let (clg, scalar) = decoupled_model();
    let tr = simulate(&clg, 8, 11).unwrap();
    let ys: Vec<f64> = tr.measurements.iter().map(|y| y[0]).collect();
    let grid = grid_smoother(&scalar, &ys, GridSpec::new(-20.0, 20.0)).unwrap();
    let h = run_forward(&clg, &tr.measurements, 1000, 5, Threading::Serial).unwrap();
    for (t, e) in h.filtered_estimates().unwrap().iter().enumerate() {
        let (m, v) = grid.filtered_moments(t);
        assert!((e.x_nonlin[0] - m).abs() < 0.1 * v.sqrt(), "filtered mean at {t}");
    }
    let opts = BackwardOptions {
        threading: Threading::Parallel,
        ..Default::default()
    };
    let er = run_erbss(&h, &clg, &tr.measurements, 2000, &opts, 5).unwrap();
    for (t, x) in er.x_nonlin_hat.iter().enumerate() {
        let (m, v) = grid.smoothed_moments(t);
        assert!((x[0] - m).abs() < 0.2 * v.sqrt(), "smoothed mean at {t}: {} vs {m}", x[0]);
    }
}
