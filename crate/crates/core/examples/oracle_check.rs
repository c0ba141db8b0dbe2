//! Cross-checks against the reference implementations: the filter against a
//! Kalman filter on the linear benchmark, and the grid smoother against RTS.

use nalgebra::{DMatrix, DVector};
use rbsmooth::model::LinearBenchmark;
use rbsmooth::mpf::run_forward;
use rbsmooth::oracles::*;
use rbsmooth::rbss::run_backward;
use rbsmooth::simulate::simulate;
use rbsmooth::{linear_benchmark, BackwardOptions, Threading};

fn main() -> rbsmooth::Result<()> {
    let lb = LinearBenchmark::new(0.2, 0.2, 0.03)?;
    let model = linear_benchmark(0.2, 0.2, 0.03)?;
    let stacked = LinearGaussianModel::stacked_linear_benchmark(&lb);
    let tr = simulate(&model, 50, 1)?;
    let ys = &tr.measurements;
    let kf = kalman_filter(&stacked, ys)?;
    let rts = rts_smoother(&kf, &stacked)?;
    let history = run_forward(&model, ys, 500, 1, Threading::Serial)?;
    let filt = history.filtered_estimates()?;
    let sm = run_backward(&history, &model, ys, &BackwardOptions::default())?;

    let dev = |a: &dyn Fn(usize) -> DVector<f64>, b: &dyn Fn(usize) -> DVector<f64>| {
        ((0..50).map(|t| (a(t) - b(t)).norm_squared()).sum::<f64>() / 150.0).sqrt()
    };
    let kf_lin = |t: usize| kf.filtered[t].mean.rows(0, 3).into_owned();
    let rts_lin = |t: usize| rts[t].mean.rows(0, 3).into_owned();
    let mpf_lin = |t: usize| filt[t].lin.mean().clone();
    let rbss_lin = |t: usize| sm.marginals[t].lin_hat.mean().clone();
    println!("filter vs Kalman        {:.4}", dev(&mpf_lin, &kf_lin));
    println!("smoother vs RTS         {:.4}", dev(&rbss_lin, &rts_lin));
    println!("Kalman vs RTS (spread)  {:.4}", dev(&kf_lin, &rts_lin));

    let one = |v: f64| DMatrix::from_element(1, 1, v);
    let scalar = LinearGaussianModel::new(
        one(0.9),
        DVector::zeros(1),
        one(0.3),
        one(1.0),
        DVector::zeros(1),
        one(0.5),
        Moments {
            mean: DVector::zeros(1),
            cov: one(1.0),
        },
    )?;
    let obs = [0.3, 1.1, 0.4, -0.2, 0.9];
    let yv: Vec<_> = obs.iter().map(|y| DVector::from_element(1, *y)).collect();
    let exact = rts_smoother(&kalman_filter(&scalar, &yv)?, &scalar)?;
    let grid = grid_smoother(&ScalarModel::linear(0.9, 0.3, 1.0, 0.5, 0.0, 1.0), &obs, GridSpec::new(-10.0, 10.0))?;
    for (t, e) in exact.iter().enumerate() {
        let (m, v) = grid.smoothed_moments(t);
        println!("t={t} grid {m:+.6} ({v:.6})  rts {:+.6} ({:.6})", e.mean[0], e.cov[(0, 0)]);
    }
    Ok(())
}
