//! Simulates the benchmark model and writes the trajectory as CSV.
//!
//! `cargo run --example simulate_benchmark -- [horizon] [seed] > traj.csv`

use rbsmooth::benchmark_model;
use rbsmooth::simulate::simulate;

fn main() -> rbsmooth::Result<()> {
    let mut args = std::env::args().skip(1);
    let horizon = args.next().map_or(200, |s| s.parse().expect("horizon"));
    let seed = args.next().map_or(1, |s| s.parse().expect("seed"));
    let model = benchmark_model(0.2, 0.2, 0.03)?;
    let tr = simulate(&model, horizon, seed)?;
    let max = tr.states_nonlin.iter().map(|x| x[0].abs()).fold(0.0, f64::max);
    eprintln!("{horizon} steps, max |x^N| = {max:.3}");
    tr.write_csv(std::io::stdout().lock())
}
