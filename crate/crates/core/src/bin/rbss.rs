//! Command-line front end: simulation, filtering, smoothing and Monte Carlo
//! experiments on the benchmark model.
//!
//! Exit codes: 0 on success, 2 for configuration or input errors, 3 for
//! numerical failures.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rbsmooth::erbss::run_erbss;
use rbsmooth::experiment::{
    run_experiment, sweep, write_report_csv, Algorithm, ExperimentConfig, RunReport, SweepAxis, SweepPoint,
};
use rbsmooth::format::write_estimates_csv;
use rbsmooth::mpf::run_forward;
use rbsmooth::rbss::{refine_linear, run_backward};
use rbsmooth::simulate::{simulate, Trajectory};
use rbsmooth::{benchmark_model, BackwardOptions, ClgModel, Error, Result, Threading, WeightMode};

#[derive(Parser)]
#[command(name = "rbss", version, about = "Rao-Blackwellized particle smoothing on the benchmark CLG model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory and write it as CSV.
    Simulate(Common),
    /// Run the marginalized particle filter on a trajectory.
    Filter {
        /// Trajectory CSV; a fresh simulation is used when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a smoother on a trajectory.
    Smooth {
        #[arg(long, default_value = "rbss")]
        algorithm: Algorithm,
        #[arg(long)]
        input: Option<PathBuf>,
        /// Also write the sampled trajectories (erbss only).
        #[arg(long)]
        paths: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo comparison of the selected algorithms.
    Experiment(Common),
    /// One experiment per value of a parameter.
    Sweep {
        /// n_particles, sigma_e or sigma_w
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// JSON config file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    np: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<usize>,
    /// ERBSS trajectory count (defaults to the particle count).
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long)]
    sigma_e: Option<f64>,
    /// Sets both process noise levels.
    #[arg(long)]
    sigma_w: Option<f64>,
    /// Comma-separated subset of mpf, rbss, rbss+refine, erbss.
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<Algorithm>>,
    #[arg(long)]
    weight_mode: Option<WeightMode>,
    /// Spread Monte Carlo runs over threads (timings become unreliable).
    #[arg(long)]
    parallel: bool,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::from_json_file(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.np {
            c.n_particles = v;
        }
        if let Some(v) = self.runs {
            c.runs = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.horizon {
            c.horizon = v;
        }
        if let Some(v) = self.trajectories {
            c.n_trajectories = Some(v);
        }
        if let Some(v) = self.sigma_e {
            c.sigma_e = v;
        }
        if let Some(v) = self.sigma_w {
            c.sigma_w_lin = v;
            c.sigma_w_nonlin = v;
        }
        if let Some(v) = &self.algorithms {
            c.algorithms = v.clone();
        }
        if let Some(v) = self.weight_mode {
            c.weight_mode = v;
        }
        if self.parallel {
            c.threading = Threading::Parallel;
        }
        c.validate()?;
        Ok(c)
    }

    fn output(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(io::stdout().lock()),
        })
    }
}

fn model(c: &ExperimentConfig) -> Result<ClgModel> {
    benchmark_model(c.sigma_w_lin, c.sigma_w_nonlin, c.sigma_e)
}

fn trajectory(input: Option<&Path>, c: &ExperimentConfig, m: &ClgModel) -> Result<Trajectory> {
    match input {
        Some(p) => Trajectory::read_csv(File::open(p)?),
        None => simulate(m, c.horizon, c.seed),
    }
}

fn summarize(report: &RunReport, label: &str) {
    for a in &report.algorithms {
        eprintln!(
            "{label}{:<12} RMSE_L {:.4} ± {:.4}  RMSE_N {:.4} ± {:.4}  CTB {:.4} s",
            a.algorithm.name(),
            a.rmse_lin.value,
            a.rmse_lin.half_width,
            a.rmse_nonlin.value,
            a.rmse_nonlin.half_width,
            a.ctb_seconds
        );
    }
    if report.excluded_runs > 0 {
        eprintln!("{label}excluded runs: {}", report.excluded_runs);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(common) => {
            let c = common.config()?;
            simulate(&model(&c)?, c.horizon, c.seed)?.write_csv(common.output()?)
        }
        Command::Filter { input, common } => {
            let c = common.config()?;
            let m = model(&c)?;
            let tr = trajectory(input.as_deref(), &c, &m)?;
            let est = run_forward(&m, &tr.measurements, c.n_particles, c.seed, Threading::Serial)?.filtered_estimates()?;
            let nonlin: Vec<_> = est.iter().map(|e| e.x_nonlin.clone()).collect();
            let lin: Vec<_> = est.into_iter().map(|e| e.lin).collect();
            write_estimates_csv(common.output()?, &nonlin, &lin)
        }
        Command::Smooth {
            algorithm,
            input,
            paths,
            common,
        } => {
            let c = common.config()?;
            let m = model(&c)?;
            let tr = trajectory(input.as_deref(), &c, &m)?;
            let ys = &tr.measurements;
            let history = run_forward(&m, ys, c.n_particles, c.seed, Threading::Serial)?;
            let opts = BackwardOptions {
                mode: c.weight_mode,
                ..Default::default()
            };
            match algorithm {
                Algorithm::Mpf => Err(Error::InvalidConfig("mpf is a filter; use the filter subcommand".into())),
                Algorithm::Rbss => run_backward(&history, &m, ys, &opts)?.write_csv(common.output()?),
                Algorithm::RbssRefine => {
                    let sm = run_backward(&history, &m, ys, &opts)?;
                    let lin = refine_linear(&sm, &m, ys)?;
                    write_estimates_csv(common.output()?, &sm.nonlin_estimates(), &lin)
                }
                Algorithm::Erbss => {
                    let er = run_erbss(&history, &m, ys, c.trajectories(), &opts, c.seed)?;
                    if let Some(p) = paths {
                        er.write_csv(BufWriter::new(File::create(p)?))?;
                    }
                    write_estimates_csv(common.output()?, &er.x_nonlin_hat, &er.lin_hat)
                }
            }
        }
        Command::Experiment(common) => {
            let c = common.config()?;
            let report = run_experiment(&c)?;
            summarize(&report, "");
            let point = SweepPoint {
                axis: None,
                value: f64::NAN,
                report,
            };
            write_report_csv(common.output()?, &[point])
        }
        Command::Sweep { axis, values, common } => {
            let c = common.config()?;
            let points = sweep(&c, axis, &values)?;
            for p in &points {
                summarize(&p.report, &format!("{}={} ", axis.name(), p.value));
            }
            write_report_csv(common.output()?, &points)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
