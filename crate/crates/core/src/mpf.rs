//! Marginalized particle filter: the forward pass.
//!
//! Each recursion runs a measurement update (particle weights from the
//! marginal likelihood of `y_t`, per-particle Kalman update of the linear
//! component), systematic resampling, and a time update (draw the next
//! nonlinear particle from its marginal transition, condition the linear
//! component on the implied pseudo-measurement, then predict it through the
//! linear dynamics).
//!
//! The history of every instant is kept for the backward pass.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::exec::{try_map, Threading};
use crate::gaussian::{
    eq_gauss_likelihood, fn_affine_marginal, gm_condense, normalize_log_weights,
    AffineGaussianFactor, GaussianLikelihood, GaussianMixture, GaussianMoment,
};
use crate::model::{pseudo_meas_lin, ClgModel, ModelParams};
use crate::rng::{substream, tag};
use crate::simulate::sample_gaussian;

/// The `j`-th forward hypothesis at one instant: a predicted nonlinear
/// particle paired with its conditional Gaussian for the linear component.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleHypothesis {
    /// Predicted nonlinear particle `x_{t|t-1,j}^N`.
    pub x_nonlin: DVector<f64>,
    /// Predicted linear Gaussian `N(η_fp, C_fp)`.
    pub lin_pred: GaussianMoment,
    /// Normalized weight after the measurement update.
    pub weight_mu: f64,
    /// Linear Gaussian after the measurement update.
    pub lin_filt: GaussianMoment,
    /// Model evaluated at `(t, x_nonlin)`.
    pub params: ModelParams,
}

impl ParticleHypothesis {
    pub fn new(
        model: &ClgModel,
        t: usize,
        x_nonlin: DVector<f64>,
        lin_pred: GaussianMoment,
        weight: f64,
    ) -> Result<Self> {
        let params = model.params_checked(t, &x_nonlin)?;
        Ok(ParticleHypothesis {
            x_nonlin,
            lin_filt: lin_pred.clone(),
            lin_pred,
            weight_mu: weight,
            params,
        })
    }
}

/// Particles of one instant plus the ancestor indices picked when they were
/// resampled (empty at the last instant).
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardInstant {
    pub particles: Vec<ParticleHypothesis>,
    pub ancestors: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardHistory {
    pub instants: Vec<ForwardInstant>,
    pub n_particles: usize,
}

/// Filtered point estimates at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterEstimate {
    pub x_nonlin: DVector<f64>,
    pub lin: GaussianMoment,
}

impl ForwardHistory {
    pub fn len(&self) -> usize {
        self.instants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instants.is_empty()
    }

    /// Weighted particle mean and condensed linear Gaussian after each
    /// measurement update.
    pub fn filtered_estimates(&self) -> Result<Vec<FilterEstimate>> {
        self.instants
            .iter()
            .map(|inst| filtered_estimate(&inst.particles))
            .collect()
    }
}

pub(crate) fn filtered_estimate(particles: &[ParticleHypothesis]) -> Result<FilterEstimate> {
    let first = particles.first().ok_or(Error::Empty("particle set"))?;
    let mut x = DVector::zeros(first.x_nonlin.len());
    for p in particles {
        x.axpy(p.weight_mu, &p.x_nonlin, 1.0);
    }
    let mix = GaussianMixture::new(
        particles
            .iter()
            .map(|p| (p.weight_mu, p.lin_filt.clone()))
            .collect(),
    )?;
    Ok(FilterEstimate {
        x_nonlin: x,
        lin: gm_condense(&mix)?,
    })
}

/// Draws `n_particles` from the nonlinear prior, each paired with the linear
/// prior and weight `1/N_p`.
pub fn init_forward(model: &ClgModel, n_particles: usize, seed: u64) -> Result<Vec<ParticleHypothesis>> {
    if n_particles == 0 {
        return Err(Error::InvalidConfig("need at least one particle".into()));
    }
    let prior = model.prior_nonlin();
    let w = 1.0 / n_particles as f64;
    (0..n_particles)
        .map(|j| {
            let mut rng = substream(seed, &[tag::INIT, j as u64]);
            let x = sample_gaussian(&mut rng, prior.mean(), prior.cov());
            ParticleHypothesis::new(model, 0, x, model.prior_lin().clone(), w)
        })
        .collect()
}

/// Measurement update at instant `t`: reweights by the marginal likelihood
/// `N(y; B η_fp + h, B C_fp Bᵀ + C_e)` and conditions each linear Gaussian
/// on `y`. Weights are normalized on return.
pub fn measurement_update(
    particles: &mut [ParticleHypothesis],
    y: &DVector<f64>,
    model: &ClgModel,
    t: usize,
    threading: Threading,
) -> Result<()> {
    check_dim("measurement", model.d_obs(), y.len())?;
    let updates = try_map(particles.len(), threading, |j| {
        let p = &particles[j];
        let prm = &p.params;
        let innov = GaussianMoment::new(
            &prm.b_obs * p.lin_pred.mean() + &prm.h_obs,
            &prm.b_obs * p.lin_pred.cov() * prm.b_obs.transpose() + model.cov_e(),
        )?;
        let loglik = innov.log_pdf(y)?.total();
        let lik = GaussianLikelihood::with_precision(
            y.clone(),
            prm.b_obs.clone(),
            prm.h_obs.clone(),
            model.prec_e().clone(),
        )?;
        let filt = eq_gauss_likelihood(&p.lin_pred.to_canonical()?, &lik)?.to_moment()?;
        Ok((p.weight_mu.ln() + loglik, filt))
    })?;
    let logw: Vec<f64> = updates.iter().map(|(lw, _)| *lw).collect();
    let w = normalize_log_weights(&logw).ok_or(Error::DegenerateWeights {
        instant: t,
        stage: "forward measurement update",
    })?;
    for ((p, (_, filt)), wj) in particles.iter_mut().zip(updates).zip(w) {
        p.weight_mu = wj;
        p.lin_filt = filt;
    }
    Ok(())
}

/// Systematic resampling with offset `u0 ∈ [0, 1)`: returns `N` ancestor
/// indices, selecting index `j` either `⌊N w_j⌋` or `⌈N w_j⌉` times.
pub fn systematic_resample(weights: &[f64], u0: f64) -> Vec<usize> {
    let n = weights.len();
    let mut out = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut j = 0;
    for i in 0..n {
        let pos = (i as f64 + u0) / n as f64;
        while j + 1 < n && cum + weights[j] <= pos {
            cum += weights[j];
            j += 1;
        }
        out.push(j);
    }
    out
}

/// Systematic resampling of the particle set at instant `t`. Survivors get
/// weight `1/N_p`; the ancestor indices are returned alongside.
pub fn resample(
    particles: &[ParticleHypothesis],
    t: usize,
    seed: u64,
) -> (Vec<ParticleHypothesis>, Vec<usize>) {
    let n = particles.len();
    let u0: f64 = substream(seed, &[tag::RESAMPLE, t as u64]).random();
    let weights: Vec<f64> = particles.iter().map(|p| p.weight_mu).collect();
    let ancestors = systematic_resample(&weights, u0);
    let survivors = ancestors
        .iter()
        .map(|&a| {
            let mut p = particles[a].clone();
            p.weight_mu = 1.0 / n as f64;
            p
        })
        .collect();
    (survivors, ancestors)
}

/// Time update from instant `t` to `t + 1` for resampled particles.
pub fn time_update(
    particles: &[ParticleHypothesis],
    model: &ClgModel,
    t: usize,
    seed: u64,
    threading: Threading,
) -> Result<Vec<ParticleHypothesis>> {
    let n = particles.len();
    try_map(n, threading, |j| {
        let p = &particles[j];
        let prm = &p.params;
        let filt = &p.lin_filt;
        // (i) marginal nonlinear transition
        let mean = &prm.f_nonlin + &prm.a_nonlin * filt.mean();
        let cov = &prm.a_nonlin * filt.cov() * prm.a_nonlin.transpose() + model.cov_w_nonlin();
        let mut rng = substream(seed, &[tag::TIME_UPDATE, t as u64, j as u64]);
        let x_next = sample_gaussian(&mut rng, &mean, &cov);
        // (ii) pseudo-measurement z = x_{t+1}^N - f^N
        let z = pseudo_meas_lin(&x_next, prm)?;
        let lik = GaussianLikelihood::with_precision(
            z,
            prm.a_nonlin.clone(),
            DVector::zeros(model.d_nonlin()),
            model.prec_w_nonlin().clone(),
        )?;
        let cond = eq_gauss_likelihood(&filt.to_canonical()?, &lik)?.to_moment()?;
        // (iii) linear prediction
        let factor = AffineGaussianFactor::new(
            prm.a_lin.clone(),
            prm.f_lin.clone(),
            model.cov_w_lin().clone(),
        )?;
        let lin_pred = fn_affine_marginal(&cond, &factor)?;
        ParticleHypothesis::new(model, t + 1, x_next, lin_pred, 1.0 / n as f64)
    })
}

/// Runs the filter over all measurements and keeps the full history.
pub fn run_forward(
    model: &ClgModel,
    measurements: &[DVector<f64>],
    n_particles: usize,
    seed: u64,
    threading: Threading,
) -> Result<ForwardHistory> {
    if measurements.is_empty() {
        return Err(Error::Empty("measurement sequence"));
    }
    let horizon = measurements.len();
    let mut instants = Vec::with_capacity(horizon);
    let mut particles = init_forward(model, n_particles, seed)?;
    for (t, y) in measurements.iter().enumerate() {
        measurement_update(&mut particles, y, model, t, threading)?;
        if t + 1 == horizon {
            instants.push(ForwardInstant {
                particles,
                ancestors: vec![],
            });
            break;
        }
        let (survivors, ancestors) = resample(&particles, t, seed);
        let next = time_update(&survivors, model, t, seed, threading)?;
        instants.push(ForwardInstant {
            particles,
            ancestors,
        });
        particles = next;
    }
    Ok(ForwardHistory {
        instants,
        n_particles,
    })
}
