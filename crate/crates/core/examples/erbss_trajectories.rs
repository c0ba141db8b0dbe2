//! Draws backward trajectories and writes them as CSV.
//!
//! `cargo run --release --example erbss_trajectories -- [M] > paths.csv`

use rbsmooth::erbss::run_erbss;
use rbsmooth::experiment::rmse_metrics;
use rbsmooth::mpf::run_forward;
use rbsmooth::simulate::simulate;
use rbsmooth::{benchmark_model, BackwardOptions, Threading};

fn main() -> rbsmooth::Result<()> {
    let m = std::env::args().nth(1).map_or(20, |s| s.parse().expect("trajectory count"));
    let model = benchmark_model(0.2, 0.2, 0.03)?;
    let tr = simulate(&model, 60, 5)?;
    let ys = &tr.measurements;
    let history = run_forward(&model, ys, 50, 5, Threading::Serial)?;
    let opts = BackwardOptions {
        threading: Threading::Parallel,
        ..Default::default()
    };
    let er = run_erbss(&history, &model, ys, m, &opts, 5)?;

    let distinct = |t: usize| {
        let mut idx: Vec<usize> = er.trajectories.iter().map(|p| p.chosen_indices[t]).collect();
        idx.sort_unstable();
        idx.dedup();
        idx.len()
    };
    let e = rmse_metrics(&er.lin_estimates(), &er.x_nonlin_hat, &tr)?;
    eprintln!(
        "{m} trajectories, distinct particles at t=0: {}, at t=59: {}; RMSE_L {:.4} RMSE_N {:.4}",
        distinct(0),
        distinct(59),
        e.rmse_lin(),
        e.rmse_nonlin()
    );
    er.write_csv(std::io::stdout().lock())
}
