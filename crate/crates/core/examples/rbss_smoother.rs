//! Forward filter, backward smoother and linear refinement on one
//! trajectory, compared against the filter alone.

use rbsmooth::experiment::rmse_metrics;
use rbsmooth::mpf::run_forward;
use rbsmooth::rbss::{refine_linear, run_backward};
use rbsmooth::simulate::simulate;
use rbsmooth::{benchmark_model, BackwardOptions, Threading, WeightMode};

fn main() -> rbsmooth::Result<()> {
    let mode: WeightMode = std::env::args().nth(1).map_or(Ok(WeightMode::Approx), |s| s.parse())?;
    let model = benchmark_model(0.2, 0.2, 0.03)?;
    let tr = simulate(&model, 200, 3)?;
    let ys = &tr.measurements;
    let history = run_forward(&model, ys, 100, 3, Threading::Serial)?;

    let filt = history.filtered_estimates()?;
    let f_lin: Vec<_> = filt.iter().map(|e| e.lin.mean().clone()).collect();
    let f_non: Vec<_> = filt.iter().map(|e| e.x_nonlin.clone()).collect();
    let mpf = rmse_metrics(&f_lin, &f_non, &tr)?;

    let opts = BackwardOptions { mode, ..Default::default() };
    let sm = run_backward(&history, &model, ys, &opts)?;
    let rbss = rmse_metrics(&sm.lin_estimates(), &sm.nonlin_estimates(), &tr)?;
    let refined: Vec<_> = refine_linear(&sm, &model, ys)?.iter().map(|g| g.mean().clone()).collect();
    let refine = rmse_metrics(&refined, &sm.nonlin_estimates(), &tr)?;

    println!("{:<12} {:>8} {:>8}", "", "RMSE_L", "RMSE_N");
    for (name, e) in [("mpf", mpf), ("rbss", rbss), ("rbss+refine", refine)] {
        println!("{name:<12} {:>8.4} {:>8.4}", e.rmse_lin(), e.rmse_nonlin());
    }
    let ess: Vec<f64> = sm.marginals.iter().map(|m| m.effective_sample_size()).collect();
    println!(
        "mean backward ESS {:.1} of 100, C_z floor used {} times",
        ess.iter().sum::<f64>() / ess.len() as f64,
        sm.diagnostics.cz_floor_activations
    );
    Ok(())
}
