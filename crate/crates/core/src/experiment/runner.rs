use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use super::config::{Algorithm, ExperimentConfig, SweepAxis};
use super::metrics::{paired_improvement, rmse_metrics, summarize, Interval, RunErrors};
use crate::erbss::run_erbss;
use crate::error::{Error, Result};
use crate::exec::{try_map, Threading};
use crate::format::fmt_sig9;
use crate::model::benchmark_model;
use crate::mpf::run_forward;
use crate::rbss::{refine_linear, run_backward, BackwardOptions, Diagnostics};
use crate::rng::{derive_seed, tag};
use crate::simulate::simulate;

/// Errors and block time of one algorithm on one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlgorithmRun {
    pub algorithm: Algorithm,
    pub errors: RunErrors,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub seed: u64,
    pub runs: Vec<AlgorithmRun>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgorithmReport {
    pub algorithm: Algorithm,
    pub rmse_lin: Interval,
    pub rmse_nonlin: Interval,
    /// Mean wall-clock seconds per block of `horizon` measurements.
    pub ctb_seconds: f64,
    pub per_run: Vec<AlgorithmRun>,
}

impl AlgorithmReport {
    pub fn mse_lin(&self) -> Vec<f64> {
        self.per_run.iter().map(|r| r.errors.mse_lin).collect()
    }

    pub fn mse_nonlin(&self) -> Vec<f64> {
        self.per_run.iter().map(|r| r.errors.mse_nonlin).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub algorithms: Vec<AlgorithmReport>,
    /// Seeds of the runs that completed.
    pub run_seeds: Vec<u64>,
    pub excluded_runs: usize,
    pub failures: Vec<String>,
    pub diagnostics: Diagnostics,
}

impl RunReport {
    pub fn get(&self, algorithm: Algorithm) -> Option<&AlgorithmReport> {
        self.algorithms.iter().find(|a| a.algorithm == algorithm)
    }

    /// Paired relative improvement `1 − RMSE(other) / RMSE(base)` for the
    /// linear and nonlinear components.
    pub fn improvement(&self, base: Algorithm, other: Algorithm) -> Result<(Interval, Interval)> {
        let missing = |a: Algorithm| Error::InvalidConfig(format!("algorithm {a} not in report"));
        let b = self.get(base).ok_or_else(|| missing(base))?;
        let o = self.get(other).ok_or_else(|| missing(other))?;
        Ok((
            paired_improvement(&b.mse_lin(), &o.mse_lin())?,
            paired_improvement(&b.mse_nonlin(), &o.mse_nonlin())?,
        ))
    }
}

fn secs(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

/// One Monte Carlo run: every selected algorithm sees the same simulated
/// trajectory. Computation inside a run is single-threaded.
pub fn run_single(config: &ExperimentConfig, run_index: usize) -> Result<RunOutcome> {
    let seed = derive_seed(config.seed, &[tag::RUN, run_index as u64]);
    let model = benchmark_model(config.sigma_w_lin, config.sigma_w_nonlin, config.sigma_e)?;
    let truth = simulate(&model, config.horizon, seed)?;
    let ys = &truth.measurements;
    let opts = BackwardOptions {
        mode: config.weight_mode,
        merge_forward: true,
        threading: Threading::Serial,
    };
    let wants = |a| config.algorithms.contains(&a);

    let t0 = Instant::now();
    let history = run_forward(&model, ys, config.n_particles, seed, Threading::Serial)?;
    let t_fwd = secs(t0);

    let mut runs = Vec::new();
    let mut diagnostics = Diagnostics::default();
    if wants(Algorithm::Mpf) {
        let t0 = Instant::now();
        let est = history.filtered_estimates()?;
        let t_est = secs(t0);
        let lin: Vec<_> = est.iter().map(|e| e.lin.mean().clone()).collect();
        let nonlin: Vec<_> = est.into_iter().map(|e| e.x_nonlin).collect();
        runs.push(AlgorithmRun {
            algorithm: Algorithm::Mpf,
            errors: rmse_metrics(&lin, &nonlin, &truth)?,
            seconds: t_fwd + t_est,
        });
    }
    if wants(Algorithm::Rbss) || wants(Algorithm::RbssRefine) {
        let t0 = Instant::now();
        let sm = run_backward(&history, &model, ys, &opts)?;
        let t_bwd = secs(t0);
        diagnostics.merge(&sm.diagnostics);
        let nonlin = sm.nonlin_estimates();
        if wants(Algorithm::Rbss) {
            runs.push(AlgorithmRun {
                algorithm: Algorithm::Rbss,
                errors: rmse_metrics(&sm.lin_estimates(), &nonlin, &truth)?,
                seconds: t_fwd + t_bwd,
            });
        }
        if wants(Algorithm::RbssRefine) {
            let t0 = Instant::now();
            let refined = refine_linear(&sm, &model, ys)?;
            let t_ref = secs(t0);
            let lin: Vec<_> = refined.iter().map(|g| g.mean().clone()).collect();
            runs.push(AlgorithmRun {
                algorithm: Algorithm::RbssRefine,
                errors: rmse_metrics(&lin, &nonlin, &truth)?,
                seconds: t_fwd + t_bwd + t_ref,
            });
        }
    }
    if wants(Algorithm::Erbss) {
        let t0 = Instant::now();
        let er = run_erbss(&history, &model, ys, config.trajectories(), &opts, seed)?;
        let t_er = secs(t0);
        diagnostics.merge(&er.diagnostics);
        runs.push(AlgorithmRun {
            algorithm: Algorithm::Erbss,
            errors: rmse_metrics(&er.lin_estimates(), &er.x_nonlin_hat, &truth)?,
            seconds: t_fwd + t_er,
        });
    }
    Ok(RunOutcome {
        seed,
        runs,
        diagnostics,
    })
}

/// Monte Carlo experiment. Runs that fail numerically are excluded and
/// counted; other errors abort.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let outcomes = try_map(config.runs, config.threading, |r| Ok(run_single(config, r)))?;
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    let mut first_err = None;
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(o) => ok.push(o),
            Err(e) if e.is_numerical() => {
                failures.push(format!("run {r}: {e}"));
                first_err.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    if ok.is_empty() {
        return Err(first_err.unwrap_or(Error::Empty("monte carlo runs")));
    }
    let mut diagnostics = Diagnostics::default();
    for o in &ok {
        diagnostics.merge(&o.diagnostics);
    }
    let mut algos: Vec<Algorithm> = Vec::new();
    for a in &config.algorithms {
        if !algos.contains(a) {
            algos.push(*a);
        }
    }
    let algorithms = algos
        .into_iter()
        .map(|a| {
            let per_run: Vec<AlgorithmRun> = ok
                .iter()
                .map(|o| *o.runs.iter().find(|r| r.algorithm == a).expect("every run covers every algorithm"))
                .collect();
            let mse_l: Vec<f64> = per_run.iter().map(|r| r.errors.mse_lin).collect();
            let mse_n: Vec<f64> = per_run.iter().map(|r| r.errors.mse_nonlin).collect();
            AlgorithmReport {
                algorithm: a,
                rmse_lin: summarize(&mse_l),
                rmse_nonlin: summarize(&mse_n),
                ctb_seconds: per_run.iter().map(|r| r.seconds).sum::<f64>() / per_run.len() as f64,
                per_run,
            }
        })
        .collect();
    Ok(RunReport {
        config: config.clone(),
        algorithms,
        run_seeds: ok.iter().map(|o| o.seed).collect(),
        excluded_runs: failures.len(),
        failures,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub axis: Option<SweepAxis>,
    pub value: f64,
    pub report: RunReport,
}

/// One experiment per value; point `i` uses base seed `seed + i`.
pub fn sweep(config: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one value".into()));
    }
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut c = config.with_axis(axis, v)?;
            c.seed = config.seed.wrapping_add(i as u64);
            Ok(SweepPoint {
                axis: Some(axis),
                value: v,
                report: run_experiment(&c)?,
            })
        })
        .collect()
}

pub const REPORT_HEADER: &str = "axis,value,algorithm,horizon,n_particles,n_trajectories,sigma_w_lin,\
sigma_w_nonlin,sigma_e,weight_mode,runs_used,runs_excluded,rmse_lin,rmse_lin_ci,rmse_nonlin,\
rmse_nonlin_ci,ctb_seconds,cz_floor_activations";

/// One row per (sweep point, algorithm) under [`REPORT_HEADER`]. A plain
/// experiment is a point with no axis.
pub fn write_report_csv<W: Write>(w: W, points: &[SweepPoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(REPORT_HEADER.split(','))?;
    for p in points {
        let c = &p.report.config;
        for a in &p.report.algorithms {
            let mode = match c.weight_mode {
                crate::rbss::WeightMode::Exact => "exact",
                crate::rbss::WeightMode::Approx => "approx",
            };
            out.write_record([
                p.axis.map_or("none", |a| a.name()).to_string(),
                p.axis.map_or(String::new(), |_| fmt_sig9(p.value)),
                a.algorithm.name().to_string(),
                c.horizon.to_string(),
                c.n_particles.to_string(),
                c.trajectories().to_string(),
                fmt_sig9(c.sigma_w_lin),
                fmt_sig9(c.sigma_w_nonlin),
                fmt_sig9(c.sigma_e),
                mode.to_string(),
                p.report.run_seeds.len().to_string(),
                p.report.excluded_runs.to_string(),
                fmt_sig9(a.rmse_lin.value),
                fmt_sig9(a.rmse_lin.half_width),
                fmt_sig9(a.rmse_nonlin.value),
                fmt_sig9(a.rmse_nonlin.half_width),
                fmt_sig9(a.ctb_seconds),
                p.report.diagnostics.cz_floor_activations.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            horizon: 15,
            n_particles: 20,
            runs: 2,
            ..Default::default()
        }
    }

    #[test]
    fn single_mpf_run() {
        let c = ExperimentConfig {
            runs: 1,
            algorithms: vec![Algorithm::Mpf],
            ..small()
        };
        let r = run_experiment(&c).unwrap();
        assert_eq!(r.algorithms.len(), 1);
        let a = &r.algorithms[0];
        assert!(a.rmse_lin.value.is_finite() && a.rmse_nonlin.value.is_finite());
        assert!(a.ctb_seconds > 0.0);
    }

    #[test]
    fn reports_are_deterministic_apart_from_timing() {
        let c = ExperimentConfig {
            algorithms: vec![Algorithm::Mpf, Algorithm::Rbss, Algorithm::RbssRefine],
            ..small()
        };
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        for (x, y) in a.algorithms.iter().zip(&b.algorithms) {
            assert_eq!(x.rmse_lin, y.rmse_lin);
            assert_eq!(x.rmse_nonlin, y.rmse_nonlin);
        }
        assert_eq!(a.run_seeds, b.run_seeds);
    }

    #[test]
    fn single_value_sweep_equals_experiment() {
        let c = ExperimentConfig {
            algorithms: vec![Algorithm::Mpf],
            ..small()
        };
        let s = sweep(&c, SweepAxis::SigmaE, &[c.sigma_e]).unwrap();
        let e = run_experiment(&c).unwrap();
        assert_eq!(s[0].report.algorithms[0].rmse_lin, e.algorithms[0].rmse_lin);
        assert!(sweep(&c, SweepAxis::SigmaE, &[]).is_err());
    }

    #[test]
    fn csv_has_one_row_per_point_and_algorithm() {
        let c = ExperimentConfig {
            runs: 1,
            horizon: 5,
            algorithms: vec![Algorithm::Mpf, Algorithm::Rbss],
            ..small()
        };
        let pts = sweep(&c, SweepAxis::NParticles, &[5.0, 10.0]).unwrap();
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &pts).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], REPORT_HEADER);
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("n_particles,5.00000000e0,mpf,"));
    }
}
