//! Defining a new conditionally linear Gaussian model: a target pulled back
//! towards the origin, with position seen through a saturating sensor and
//! velocity as the linear part.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rbsmooth::experiment::rmse_metrics;
use rbsmooth::gaussian::GaussianMoment;
use rbsmooth::mpf::run_forward;
use rbsmooth::rbss::run_backward;
use rbsmooth::simulate::simulate;
use rbsmooth::{BackwardOptions, ClgModel, ModelParams, Threading};

fn main() -> rbsmooth::Result<()> {
    // x^N = position, x^L = velocity
    let dt = 0.5;
    let params = move |_t: usize, x: &DVector<f64>| ModelParams {
        a_lin: DMatrix::from_element(1, 1, 0.8),
        f_lin: DVector::zeros(1),
        a_nonlin: DMatrix::from_element(1, 1, dt),
        f_nonlin: x * 0.9,
        b_obs: DMatrix::zeros(1, 1),
        h_obs: DVector::from_element(1, 3.0 * (x[0] / 3.0).tanh()),
    };
    let one = |v: f64| DMatrix::from_element(1, 1, v);
    let model = ClgModel::new(
        1,
        1,
        1,
        Arc::new(params),
        one(0.1),
        one(0.01),
        one(0.04),
        GaussianMoment::scalar(0.0, 1.0)?,
        GaussianMoment::scalar(0.0, 1.0)?,
    )?;

    let (mut f_err, mut s_err) = ([0.0; 2], [0.0; 2]);
    let runs = 10;
    for run in 0..runs {
        let tr = simulate(&model, 100, run)?;
        let ys = &tr.measurements;
        let history = run_forward(&model, ys, 200, run, Threading::Serial)?;
        let filt = history.filtered_estimates()?;
        let sm = run_backward(&history, &model, ys, &BackwardOptions::default())?;

        let f_lin: Vec<_> = filt.iter().map(|e| e.lin.mean().clone()).collect();
        let f_non: Vec<_> = filt.iter().map(|e| e.x_nonlin.clone()).collect();
        let f = rmse_metrics(&f_lin, &f_non, &tr)?;
        let s = rmse_metrics(&sm.lin_estimates(), &sm.nonlin_estimates(), &tr)?;
        f_err[0] += f.rmse_lin() / runs as f64;
        f_err[1] += f.rmse_nonlin() / runs as f64;
        s_err[0] += s.rmse_lin() / runs as f64;
        s_err[1] += s.rmse_nonlin() / runs as f64;
    }
    println!("mean over {runs} runs");
    println!("velocity RMSE: filter {:.4}, smoother {:.4}", f_err[0], s_err[0]);
    println!("position RMSE: filter {:.4}, smoother {:.4}", f_err[1], s_err[1]);
    Ok(())
}
