//! Marginalized particle filter on a simulated benchmark trajectory.

use rbsmooth::experiment::rmse_metrics;
use rbsmooth::mpf::run_forward;
use rbsmooth::simulate::simulate;
use rbsmooth::{benchmark_model, Threading};

fn main() -> rbsmooth::Result<()> {
    let np = std::env::args().nth(1).map_or(100, |s| s.parse().expect("particle count"));
    let model = benchmark_model(0.2, 0.2, 0.03)?;
    let tr = simulate(&model, 200, 7)?;
    let history = run_forward(&model, &tr.measurements, np, 7, Threading::Serial)?;
    let est = history.filtered_estimates()?;

    for t in (0..tr.len()).step_by(40) {
        println!(
            "t={t:<3} x^N {:+.3} est {:+.3}   x^L[0] {:+.3} est {:+.3} (sd {:.3})",
            tr.states_nonlin[t][0],
            est[t].x_nonlin[0],
            tr.states_lin[t][0],
            est[t].lin.mean()[0],
            est[t].lin.cov()[(0, 0)].sqrt()
        );
    }
    let lin: Vec<_> = est.iter().map(|e| e.lin.mean().clone()).collect();
    let nonlin: Vec<_> = est.iter().map(|e| e.x_nonlin.clone()).collect();
    let e = rmse_metrics(&lin, &nonlin, &tr)?;
    println!("N_p={np}: RMSE_L {:.4}  RMSE_N {:.4}", e.rmse_lin(), e.rmse_nonlin());
    Ok(())
}
