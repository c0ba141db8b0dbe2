//! Small particle-count sweep of the Monte Carlo study; the report CSV goes
//! to stdout.
//!
//! `cargo run --release --example experiment_sweep -- [runs]`

use rbsmooth::experiment::{sweep, write_report_csv, Algorithm, ExperimentConfig, SweepAxis};
use rbsmooth::Threading;

fn main() -> rbsmooth::Result<()> {
    let runs = std::env::args().nth(1).map_or(10, |s| s.parse().expect("run count"));
    let cfg = ExperimentConfig {
        runs,
        algorithms: vec![Algorithm::Mpf, Algorithm::Rbss, Algorithm::RbssRefine],
        threading: Threading::Parallel,
        ..Default::default()
    };
    let points = sweep(&cfg, SweepAxis::NParticles, &[10.0, 50.0, 100.0])?;
    for p in &points {
        let (l, n) = p.report.improvement(Algorithm::Mpf, Algorithm::Rbss)?;
        eprintln!(
            "N_p={:<4} rbss over mpf: RMSE_L {:+.1}% ± {:.1}, RMSE_N {:+.1}% ± {:.1}",
            p.value,
            100.0 * l.value,
            100.0 * l.half_width,
            100.0 * n.value,
            100.0 * n.half_width
        );
    }
    write_report_csv(std::io::stdout().lock(), &points)
}
