//! Backward simulation variant of the smoother: `M` independent backward
//! passes, each drawing one nonlinear trajectory from the forward particle
//! supports, followed by exact linear smoothing along that trajectory.
//!
//! Each backward pass runs the RBSS steps 1–6 at every instant, draws an
//! index from the resulting weights, and hands the drawn particle plus its
//! own smoothed linear Gaussian to the previous instant.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::exec::try_map;
use crate::gaussian::{gm_condense, GaussianMixture, GaussianMoment};
use crate::model::ClgModel;
use crate::mpf::{ForwardHistory, ParticleHypothesis};
use crate::rbss::{
    conditional_linear_smoother, smooth_instant, BackwardOptions, BackwardState, Diagnostics,
};
use crate::rng::{substream, tag};

#[derive(Debug, Clone, PartialEq)]
pub struct BackwardTrajectory {
    pub nonlin_path: Vec<DVector<f64>>,
    pub chosen_indices: Vec<usize>,
    pub lin_smoothed: Vec<GaussianMoment>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErbssResult {
    pub trajectories: Vec<BackwardTrajectory>,
    /// Uniform average of the trajectories at each instant.
    pub x_nonlin_hat: Vec<DVector<f64>>,
    /// Equal-weight condensation of the per-trajectory linear Gaussians.
    pub lin_hat: Vec<GaussianMoment>,
    pub diagnostics: Diagnostics,
}

impl ErbssResult {
    pub fn lin_estimates(&self) -> Vec<DVector<f64>> {
        self.lin_hat.iter().map(|g| g.mean().clone()).collect()
    }

    /// Writes `trajectory, l, index, x_nonlin_*, lin_mean_*, lin_var_*` rows
    /// with `l` starting at 1.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        use crate::format::fmt_sig9;
        let first = self.trajectories.first().ok_or(Error::Empty("trajectory set"))?;
        let (dn, dl) = (first.nonlin_path[0].len(), first.lin_smoothed[0].dim());
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["trajectory".to_string(), "l".into(), "index".into()];
        header.extend((0..dn).map(|i| format!("x_nonlin_{i}")));
        header.extend((0..dl).map(|i| format!("lin_mean_{i}")));
        header.extend((0..dl).map(|i| format!("lin_var_{i}")));
        out.write_record(&header)?;
        for (m, tr) in self.trajectories.iter().enumerate() {
            for t in 0..tr.nonlin_path.len() {
                let mut row = vec![m.to_string(), (t + 1).to_string(), tr.chosen_indices[t].to_string()];
                row.extend(tr.nonlin_path[t].iter().map(|v| fmt_sig9(*v)));
                row.extend(tr.lin_smoothed[t].mean().iter().map(|v| fmt_sig9(*v)));
                row.extend(tr.lin_smoothed[t].cov().diagonal().iter().map(|v| fmt_sig9(*v)));
                out.write_record(&row)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Inverse-CDF draw from normalized weights with a uniform `u ∈ [0, 1)`.
pub fn sample_index(weights: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    for (j, w) in weights.iter().enumerate() {
        cum += w;
        if u < cum {
            return j;
        }
    }
    // u landed in the rounding gap above the last partial sum
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1)
}

/// Draws the last-instant particle of trajectory `m` from the final forward
/// weights.
pub fn sample_terminal(history: &ForwardHistory, seed: u64, m: usize) -> Result<(usize, BackwardState)> {
    let last = &history.instants.last().ok_or(Error::Empty("forward history"))?.particles;
    let weights: Vec<f64> = last.iter().map(|p| p.weight_mu).collect();
    let u: f64 = substream(seed, &[tag::TERMINAL, m as u64]).random();
    let j = sample_index(&weights, u);
    let state = BackwardState::new(last[j].x_nonlin.clone(), last[j].lin_filt.clone())?;
    Ok((j, state))
}

/// One backward sampling step at `instant`: computes the RBSS weights given
/// `bwd`, draws an index with `u`, and returns the drawn particle paired with
/// its own smoothed linear Gaussian.
#[allow(clippy::too_many_arguments)]
pub fn backward_step(
    particles: &[ParticleHypothesis],
    bwd: &BackwardState,
    y: &DVector<f64>,
    model: &ClgModel,
    instant: usize,
    horizon: usize,
    opts: &BackwardOptions,
    u: f64,
) -> Result<(usize, BackwardState, Diagnostics)> {
    let iw = smooth_instant(particles, bwd, y, model, instant, horizon, opts)?;
    let j = sample_index(&iw.weights, u);
    let lin = iw.lin_sm.into_iter().nth(j).expect("index within particle set");
    Ok((j, BackwardState::new(particles[j].x_nonlin.clone(), lin)?, iw.diagnostics))
}

/// Draws the index path of trajectory `m` (no linear smoothing).
pub fn sample_path(
    history: &ForwardHistory,
    model: &ClgModel,
    measurements: &[DVector<f64>],
    opts: &BackwardOptions,
    seed: u64,
    m: usize,
) -> Result<(Vec<usize>, Diagnostics)> {
    let horizon = history.len();
    check_dim("measurement count", horizon, measurements.len())?;
    let (j_last, mut bwd) = sample_terminal(history, seed, m)?;
    let mut idx = vec![0; horizon];
    idx[horizon - 1] = j_last;
    let mut diag = Diagnostics::default();
    let mut rng = substream(seed, &[tag::BACKWARD, m as u64]);
    for t in (0..horizon - 1).rev() {
        let u: f64 = rng.random();
        let particles = &history.instants[t].particles;
        let (j, next, d) = backward_step(particles, &bwd, &measurements[t], model, t, horizon, opts, u)?;
        idx[t] = j;
        diag.merge(&d);
        bwd = next;
    }
    Ok((idx, diag))
}

/// Linear smoothing with the nonlinear component fixed to a sampled path.
pub fn smooth_linear_on_trajectory(
    path: &[DVector<f64>],
    model: &ClgModel,
    measurements: &[DVector<f64>],
) -> Result<Vec<GaussianMoment>> {
    conditional_linear_smoother(model, measurements, path)
}

/// `M` backward simulation passes over one forward history. Trajectories
/// run in parallel when `opts.threading` asks for it; the steps inside a
/// pass are always serial.
pub fn run_erbss(
    history: &ForwardHistory,
    model: &ClgModel,
    measurements: &[DVector<f64>],
    n_trajectories: usize,
    opts: &BackwardOptions,
    seed: u64,
) -> Result<ErbssResult> {
    if n_trajectories == 0 {
        return Err(Error::InvalidConfig("need at least one trajectory".into()));
    }
    if history.is_empty() {
        return Err(Error::Empty("forward history"));
    }
    let inner = BackwardOptions {
        threading: crate::exec::Threading::Serial,
        ..*opts
    };
    let runs = try_map(n_trajectories, opts.threading, |m| {
        let go = || -> Result<(BackwardTrajectory, Diagnostics)> {
            let (idx, diag) = sample_path(history, model, measurements, &inner, seed, m)?;
            let path: Vec<DVector<f64>> = idx
                .iter()
                .enumerate()
                .map(|(t, &j)| history.instants[t].particles[j].x_nonlin.clone())
                .collect();
            let lin = smooth_linear_on_trajectory(&path, model, measurements)?;
            Ok((
                BackwardTrajectory {
                    nonlin_path: path,
                    chosen_indices: idx,
                    lin_smoothed: lin,
                },
                diag,
            ))
        };
        go().map_err(|e| Error::Trajectory {
            trajectory: m,
            source: Box::new(e),
        })
    })?;

    let horizon = history.len();
    let mut diagnostics = Diagnostics::default();
    let mut trajectories = Vec::with_capacity(n_trajectories);
    for (tr, d) in runs {
        diagnostics.merge(&d);
        trajectories.push(tr);
    }
    let share = 1.0 / n_trajectories as f64;
    let mut x_nonlin_hat = Vec::with_capacity(horizon);
    let mut lin_hat = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut x = DVector::zeros(model.d_nonlin());
        for tr in &trajectories {
            x.axpy(share, &tr.nonlin_path[t], 1.0);
        }
        x_nonlin_hat.push(x);
        let mix = GaussianMixture::new(
            trajectories
                .iter()
                .map(|tr| (share, tr.lin_smoothed[t].clone()))
                .collect(),
        )?;
        lin_hat.push(gm_condense(&mix)?);
    }
    Ok(ErbssResult {
        trajectories,
        x_nonlin_hat,
        lin_hat,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Threading;
    use crate::model::benchmark_model;
    use crate::mpf::run_forward;
    use crate::simulate::simulate;

    #[test]
    fn sample_index_edges() {
        assert_eq!(sample_index(&[1.0, 0.0], 0.999), 0);
        assert_eq!(sample_index(&[0.0, 1.0], 0.0), 1);
        assert_eq!(sample_index(&[0.5, 0.5, 0.0], 1.0), 1);
        assert_eq!(sample_index(&[1.0], 0.3), 0);
    }

    #[test]
    fn paths_stay_on_forward_supports() {
        let m = benchmark_model(0.2, 0.2, 0.03).unwrap();
        let traj = simulate(&m, 10, 3).unwrap();
        let hist = run_forward(&m, &traj.measurements, 15, 4, Threading::Serial).unwrap();
        let res = run_erbss(&hist, &m, &traj.measurements, 4, &BackwardOptions::default(), 9).unwrap();
        assert_eq!(res.trajectories.len(), 4);
        for tr in &res.trajectories {
            for t in 0..10 {
                assert_eq!(tr.nonlin_path[t], hist.instants[t].particles[tr.chosen_indices[t]].x_nonlin);
            }
        }
    }

    #[test]
    fn single_trajectory_estimates_are_its_path() {
        let m = benchmark_model(0.2, 0.2, 0.03).unwrap();
        let traj = simulate(&m, 6, 3).unwrap();
        let hist = run_forward(&m, &traj.measurements, 10, 4, Threading::Serial).unwrap();
        let res = run_erbss(&hist, &m, &traj.measurements, 1, &BackwardOptions::default(), 1).unwrap();
        assert_eq!(res.x_nonlin_hat, res.trajectories[0].nonlin_path);
        for (a, b) in res.lin_hat.iter().zip(&res.trajectories[0].lin_smoothed) {
            assert!((a.mean() - b.mean()).amax() < 1e-12);
        }
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let m = benchmark_model(0.2, 0.2, 0.03).unwrap();
        let traj = simulate(&m, 8, 3).unwrap();
        let hist = run_forward(&m, &traj.measurements, 10, 4, Threading::Serial).unwrap();
        let serial = BackwardOptions::default();
        let par = BackwardOptions {
            threading: Threading::Parallel,
            ..serial
        };
        let a = run_erbss(&hist, &m, &traj.measurements, 3, &serial, 5).unwrap();
        let b = run_erbss(&hist, &m, &traj.measurements, 3, &par, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_trajectories_rejected() {
        let m = benchmark_model(0.2, 0.2, 0.03).unwrap();
        let traj = simulate(&m, 3, 3).unwrap();
        let hist = run_forward(&m, &traj.measurements, 5, 4, Threading::Serial).unwrap();
        assert!(run_erbss(&hist, &m, &traj.measurements, 0, &BackwardOptions::default(), 5).is_err());
    }
}
