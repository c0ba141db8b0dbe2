//! Rao-Blackwellized serial smoother: backward message passing over the
//! forward particle supports.
//!
//! Per instant `l < T` and particle `j` the pass runs
//!
//! 1. a reverse time update of the backward linear message through the
//!    linear dynamics,
//! 2. a measurement update of that message with the pseudo-measurement
//!    `x_{be,l+1}^N − f^N` and with `y_l`,
//! 3. a merge with the forward prediction `m_fp`,
//! 4. and 5. weight factors for the nonlinear particle (transition to
//!    `x_{be,l+1}^N`, overlap of the linear pseudo-measurement, observation),
//! 6. weight normalization,
//!
//! and then condenses everything into the next backward state (step 7).
//! Steps 1–6 are independent across particles.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::exec::{try_map, Threading};
use crate::gaussian::{
    eq_gauss_likelihood, eq_gauss_product, gm_condense, log_gauss_overlap, normalize_log_weights,
    GaussianCanonical, GaussianLikelihood, GaussianMixture, GaussianMoment, LogWeight,
};
use crate::linalg::{floor_spd, spd_inverse, symmetrize};
use crate::model::{pseudo_meas_lin, ClgModel};
use crate::mpf::{ForwardHistory, ParticleHypothesis};

/// How the three weight factors of a particle are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// Multiply the raw factors, particle-dependent constants included.
    Exact,
    /// Normalize each factor set on its exponent alone, then multiply.
    #[default]
    Approx,
}

impl FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(WeightMode::Exact),
            "approx" => Ok(WeightMode::Approx),
            other => Err(Error::InvalidConfig(format!("unknown weight mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackwardOptions {
    pub mode: WeightMode,
    /// Merge the backward linear message with the forward prediction in
    /// step 3. Switching it off keeps only the backward message.
    pub merge_forward: bool,
    pub threading: Threading,
}

impl Default for BackwardOptions {
    fn default() -> Self {
        BackwardOptions {
            mode: WeightMode::default(),
            merge_forward: true,
            threading: Threading::Serial,
        }
    }
}

/// Run counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Times the `C_z` matrix of step 5 needed the eigenvalue floor.
    pub cz_floor_activations: usize,
}

impl Diagnostics {
    pub fn merge(&mut self, other: &Diagnostics) {
        self.cz_floor_activations += other.cz_floor_activations;
    }
}

/// Message pair handed from instant `l + 1` to instant `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardState {
    x_be_nonlin: DVector<f64>,
    lin_be: GaussianMoment,
    canonical: GaussianCanonical,
}

impl BackwardState {
    pub fn new(x_be_nonlin: DVector<f64>, lin_be: GaussianMoment) -> Result<Self> {
        let canonical = lin_be.to_canonical()?;
        Ok(BackwardState {
            x_be_nonlin,
            lin_be,
            canonical,
        })
    }

    pub fn x_nonlin(&self) -> &DVector<f64> {
        &self.x_be_nonlin
    }

    pub fn lin(&self) -> &GaussianMoment {
        &self.lin_be
    }

    pub fn canonical(&self) -> &GaussianCanonical {
        &self.canonical
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedParticle {
    pub x_nonlin: DVector<f64>,
    pub weight: f64,
    pub lin_sm: GaussianMoment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedMarginal {
    pub instant: usize,
    pub particles: Vec<SmoothedParticle>,
    pub x_nonlin_hat: DVector<f64>,
    pub lin_hat: GaussianMoment,
}

impl SmoothedMarginal {
    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.particles.iter().map(|p| p.weight * p.weight).sum::<f64>()
    }
}

/// Output of [`run_backward`]; `marginals[t]` is the marginal at instant `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingResult {
    pub marginals: Vec<SmoothedMarginal>,
    pub diagnostics: Diagnostics,
}

impl SmoothingResult {
    pub fn nonlin_estimates(&self) -> Vec<DVector<f64>> {
        self.marginals.iter().map(|m| m.x_nonlin_hat.clone()).collect()
    }

    pub fn lin_estimates(&self) -> Vec<DVector<f64>> {
        self.marginals.iter().map(|m| m.lin_hat.mean().clone()).collect()
    }

    /// Writes `l, x_nonlin_hat_*, lin_mean_*, lin_var_*, ess` rows with `l`
    /// starting at 1.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        use crate::format::fmt_sig9;
        let first = self.marginals.first().ok_or(Error::Empty("smoothing result"))?;
        let (dn, dl) = (first.x_nonlin_hat.len(), first.lin_hat.dim());
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["l".to_string()];
        header.extend((0..dn).map(|i| format!("x_nonlin_hat_{i}")));
        header.extend((0..dl).map(|i| format!("lin_mean_{i}")));
        header.extend((0..dl).map(|i| format!("lin_var_{i}")));
        header.push("ess".into());
        out.write_record(&header)?;
        for m in &self.marginals {
            let mut row = vec![(m.instant + 1).to_string()];
            row.extend(m.x_nonlin_hat.iter().map(|v| fmt_sig9(*v)));
            row.extend(m.lin_hat.mean().iter().map(|v| fmt_sig9(*v)));
            row.extend(m.lin_hat.cov().diagonal().iter().map(|v| fmt_sig9(*v)));
            row.push(fmt_sig9(m.effective_sample_size()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn weighted_mean(points: &[&DVector<f64>], weights: &[f64]) -> DVector<f64> {
    let mut x = DVector::zeros(points[0].len());
    for (p, w) in points.iter().zip(weights) {
        x.axpy(*w, p, 1.0);
    }
    x
}

/// Backward state at the last instant: weighted mean of the final particles
/// and the condensed post-MU linear mixture.
pub fn init_backward(history: &ForwardHistory) -> Result<BackwardState> {
    let last = history.instants.last().ok_or(Error::Empty("forward history"))?;
    let m = terminal_marginal(&last.particles, history.len() - 1)?;
    BackwardState::new(m.x_nonlin_hat, m.lin_hat)
}

fn terminal_marginal(particles: &[ParticleHypothesis], instant: usize) -> Result<SmoothedMarginal> {
    let weights: Vec<f64> = particles.iter().map(|p| p.weight_mu).collect();
    let lin: Vec<GaussianMoment> = particles.iter().map(|p| p.lin_filt.clone()).collect();
    step7_outputs(particles, &weights, lin, instant).map(|(m, _)| m)
}

/// Parameters of step 1 that only depend on the backward state: with
/// `C̄ = (W_w + W_be)⁻¹` and `P = I − C̄ W_w`, stores `G = W_w P` and
/// `g = W_w C̄ w_be`, so that `W₁ = Aᵀ G A` and `w₁ = Aᵀ (g − G f)`.
#[derive(Debug, Clone)]
pub(crate) struct ReverseTu {
    gain: DMatrix<f64>,
    shift: DVector<f64>,
}

impl ReverseTu {
    pub(crate) fn new(be: &GaussianCanonical, prec_w: &DMatrix<f64>) -> Result<Self> {
        check_dim("reverse time update", prec_w.nrows(), be.dim())?;
        let (sum, _) = floor_spd(&(prec_w + be.prec()))?;
        let cbar = spd_inverse(&sum, "W_w + W_be")?;
        let n = be.dim();
        let p = DMatrix::<f64>::identity(n, n) - &cbar * prec_w;
        let gain = symmetrize(&(prec_w * p));
        let shift = prec_w * (&cbar * be.tmean());
        Ok(ReverseTu { gain, shift })
    }

    pub(crate) fn apply(&self, a: &DMatrix<f64>, f: &DVector<f64>) -> Result<GaussianCanonical> {
        let at = a.transpose();
        let prec = &at * &self.gain * a;
        let tmean = &at * (&self.shift - &self.gain * f);
        GaussianCanonical::new(tmean, prec)
    }
}

/// Step 1: backward message for `x_l^L` obtained by passing the backward
/// message of `x_{l+1}^L` back through `N(x_{l+1}; A^L x_l + f^L, C_w^L)`.
pub fn step1_tu_linear(
    hyp: &ParticleHypothesis,
    bwd: &BackwardState,
    model: &ClgModel,
) -> Result<GaussianCanonical> {
    ReverseTu::new(bwd.canonical(), model.prec_w_lin())?.apply(&hyp.params.a_lin, &hyp.params.f_lin)
}

/// Step 2: adds the pseudo-measurement `z = x_{be,l+1}^N − f^N` (factor
/// `{A^N, 0, C_w^N}`) and the observation `y_l` (factor `{B, h, C_e}`).
/// Returns `(m_3, m_be)`.
pub fn step2_mu_linear(
    hyp: &ParticleHypothesis,
    m1: &GaussianCanonical,
    bwd: &BackwardState,
    y: &DVector<f64>,
    model: &ClgModel,
) -> Result<(GaussianCanonical, GaussianCanonical)> {
    let prm = &hyp.params;
    let z = pseudo_meas_lin(bwd.x_nonlin(), prm)?;
    let z_lik = GaussianLikelihood::with_precision(
        z,
        prm.a_nonlin.clone(),
        DVector::zeros(model.d_nonlin()),
        model.prec_w_nonlin().clone(),
    )?;
    let m3 = eq_gauss_likelihood(m1, &z_lik)?;
    let y_lik = GaussianLikelihood::with_precision(
        y.clone(),
        prm.b_obs.clone(),
        prm.h_obs.clone(),
        model.prec_e().clone(),
    )?;
    let m_be = eq_gauss_likelihood(&m3, &y_lik)?;
    Ok((m3, m_be))
}

/// Step 3: merge with the forward prediction. At the first instant only the
/// backward message is used; at the last one only the forward prediction.
pub fn step3_merge_linear(
    hyp: &ParticleHypothesis,
    m_be: &GaussianCanonical,
    instant: usize,
    horizon: usize,
    merge_forward: bool,
) -> Result<GaussianMoment> {
    if instant + 1 == horizon {
        return Ok(hyp.lin_pred.clone());
    }
    if instant == 0 || !merge_forward {
        return m_be.to_moment();
    }
    eq_gauss_product(&hyp.lin_pred.to_canonical()?, m_be)?.to_moment()
}

/// Step 4: `w₁ = N(x_{be,l+1}^N; A^N η_sm + f^N, A^N C_sm A^Nᵀ + C_w^N)`.
pub fn step4_tu_nonlinear(
    hyp: &ParticleHypothesis,
    m_sm: &GaussianMoment,
    bwd: &BackwardState,
    model: &ClgModel,
) -> Result<LogWeight> {
    let prm = &hyp.params;
    let an = &prm.a_nonlin;
    let g = GaussianMoment::new(
        an * m_sm.mean() + &prm.f_nonlin,
        an * m_sm.cov() * an.transpose() + model.cov_w_nonlin(),
    )?;
    g.log_pdf(bwd.x_nonlin())
}

/// Step 5 weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step5 {
    /// Overlap of `N(η_be − A^L η_sm, C_be − A^L C_sm A^Lᵀ)` with
    /// `N(f^L, C_w^L)`.
    pub w2: LogWeight,
    /// `N(y_l; B η_sm + h, B C_sm Bᵀ + C_e)`.
    pub w4: LogWeight,
    /// Whether `C_z` needed the eigenvalue floor.
    pub cz_floored: bool,
}

pub fn step5_mu_nonlinear(
    hyp: &ParticleHypothesis,
    m_sm: &GaussianMoment,
    bwd: &BackwardState,
    y: &DVector<f64>,
    model: &ClgModel,
) -> Result<Step5> {
    let prm = &hyp.params;
    let al = &prm.a_lin;
    let eta_z = bwd.lin().mean() - al * m_sm.mean();
    let cz_raw = bwd.lin().cov() - al * m_sm.cov() * al.transpose();
    let (m_z, cz_floored) = GaussianMoment::new_flagged(eta_z, cz_raw)?;
    let w_lin = GaussianMoment::new(prm.f_lin.clone(), model.cov_w_lin().clone())?;
    let w2 = log_gauss_overlap(&m_z, &w_lin)?;
    let b = &prm.b_obs;
    let obs = GaussianMoment::new(
        b * m_sm.mean() + &prm.h_obs,
        b * m_sm.cov() * b.transpose() + model.cov_e(),
    )?;
    let w4 = obs.log_pdf(y)?;
    Ok(Step5 { w2, w4, cz_floored })
}

fn normalized_log(set: &[f64]) -> Option<Vec<f64>> {
    normalize_log_weights(set).map(|w| w.into_iter().map(f64::ln).collect())
}

/// Step 6: combines the three factor sets into normalized weights.
pub fn step6_merge_nonlinear(
    w1: &[LogWeight],
    w2: &[LogWeight],
    w4: &[LogWeight],
    mode: WeightMode,
    instant: usize,
) -> Result<Vec<f64>> {
    let n = w1.len();
    check_dim("step 6 w2", n, w2.len())?;
    check_dim("step 6 w4", n, w4.len())?;
    let degenerate = Error::DegenerateWeights {
        instant,
        stage: "backward weight merge",
    };
    let logw: Vec<f64> = match mode {
        WeightMode::Exact => (0..n)
            .map(|j| w1[j].total() + w2[j].total() + w4[j].total())
            .collect(),
        WeightMode::Approx => {
            let set = |w: &[LogWeight]| {
                let e: Vec<f64> = w.iter().map(|v| v.exponent).collect();
                normalized_log(&e)
            };
            let (a, b, c) = match (set(w1), set(w2), set(w4)) {
                (Some(a), Some(b), Some(c)) => (a, b, c),
                _ => return Err(degenerate),
            };
            (0..n).map(|j| a[j] + b[j] + c[j]).collect()
        }
    };
    normalize_log_weights(&logw).ok_or(degenerate)
}

/// Step 7: smoothed marginal at `instant` and the backward state handed to
/// the previous instant.
pub fn step7_outputs(
    particles: &[ParticleHypothesis],
    weights: &[f64],
    lin_sm: Vec<GaussianMoment>,
    instant: usize,
) -> Result<(SmoothedMarginal, BackwardState)> {
    if particles.is_empty() {
        return Err(Error::Empty("particle set"));
    }
    check_dim("step 7 weights", particles.len(), weights.len())?;
    check_dim("step 7 linear moments", particles.len(), lin_sm.len())?;
    let points: Vec<&DVector<f64>> = particles.iter().map(|p| &p.x_nonlin).collect();
    let x_hat = weighted_mean(&points, weights);
    let mix = GaussianMixture::new(weights.iter().copied().zip(lin_sm.iter().cloned()).collect())?;
    let lin_hat = gm_condense(&mix)?;
    let out = SmoothedMarginal {
        instant,
        particles: particles
            .iter()
            .zip(weights)
            .zip(lin_sm)
            .map(|((p, &w), g)| SmoothedParticle {
                x_nonlin: p.x_nonlin.clone(),
                weight: w,
                lin_sm: g,
            })
            .collect(),
        x_nonlin_hat: x_hat.clone(),
        lin_hat: lin_hat.clone(),
    };
    Ok((out, BackwardState::new(x_hat, lin_hat)?))
}

/// Per-particle output of steps 1–6 at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct InstantWeights {
    pub weights: Vec<f64>,
    pub lin_sm: Vec<GaussianMoment>,
    pub diagnostics: Diagnostics,
}

/// Steps 1–6 at `instant` for all particles, given the backward state from
/// `instant + 1`.
pub fn smooth_instant(
    particles: &[ParticleHypothesis],
    bwd: &BackwardState,
    y: &DVector<f64>,
    model: &ClgModel,
    instant: usize,
    horizon: usize,
    opts: &BackwardOptions,
) -> Result<InstantWeights> {
    let rev = ReverseTu::new(bwd.canonical(), model.prec_w_lin())?;
    let per = try_map(particles.len(), opts.threading, |j| {
        let hyp = &particles[j];
        let m1 = rev.apply(&hyp.params.a_lin, &hyp.params.f_lin)?;
        let (_, m_be) = step2_mu_linear(hyp, &m1, bwd, y, model)?;
        let m_sm = step3_merge_linear(hyp, &m_be, instant, horizon, opts.merge_forward)?;
        let w1 = step4_tu_nonlinear(hyp, &m_sm, bwd, model)?;
        let s5 = step5_mu_nonlinear(hyp, &m_sm, bwd, y, model)?;
        Ok((m_sm, w1, s5))
    })?;
    let w1: Vec<LogWeight> = per.iter().map(|p| p.1).collect();
    let w2: Vec<LogWeight> = per.iter().map(|p| p.2.w2).collect();
    let w4: Vec<LogWeight> = per.iter().map(|p| p.2.w4).collect();
    let diagnostics = Diagnostics {
        cz_floor_activations: per.iter().filter(|p| p.2.cz_floored).count(),
    };
    let weights = step6_merge_nonlinear(&w1, &w2, &w4, opts.mode, instant)?;
    Ok(InstantWeights {
        weights,
        lin_sm: per.into_iter().map(|p| p.0).collect(),
        diagnostics,
    })
}

/// Full backward pass. The marginal at the last instant is the filtered
/// one; earlier instants run steps 1–7.
pub fn run_backward(
    history: &ForwardHistory,
    model: &ClgModel,
    measurements: &[DVector<f64>],
    opts: &BackwardOptions,
) -> Result<SmoothingResult> {
    let horizon = history.len();
    if horizon == 0 {
        return Err(Error::Empty("forward history"));
    }
    check_dim("measurement count", horizon, measurements.len())?;
    let last = &history.instants[horizon - 1].particles;
    let terminal = terminal_marginal(last, horizon - 1)?;
    let mut bwd = BackwardState::new(terminal.x_nonlin_hat.clone(), terminal.lin_hat.clone())?;
    let mut marginals = vec![terminal];
    let mut diagnostics = Diagnostics::default();
    for t in (0..horizon - 1).rev() {
        let particles = &history.instants[t].particles;
        let iw = smooth_instant(particles, &bwd, &measurements[t], model, t, horizon, opts)?;
        diagnostics.merge(&iw.diagnostics);
        let (marg, next) = step7_outputs(particles, &iw.weights, iw.lin_sm, t)?;
        marginals.push(marg);
        bwd = next;
    }
    marginals.reverse();
    Ok(SmoothingResult {
        marginals,
        diagnostics,
    })
}

/// Re-smooths the linear component with the nonlinear component fixed at the
/// RBSS point estimates.
pub fn refine_linear(
    result: &SmoothingResult,
    model: &ClgModel,
    measurements: &[DVector<f64>],
) -> Result<Vec<GaussianMoment>> {
    conditional_linear_smoother(model, measurements, &result.nonlin_estimates())
}

/// Exact smoother for the linear component given a known nonlinear path:
/// a Kalman filter that uses `y_l` and the pseudo-measurement
/// `x_{l+1}^N − f^N`, a backward information filter built from the same
/// factors, and a merge of the two at every instant.
pub fn conditional_linear_smoother(
    model: &ClgModel,
    measurements: &[DVector<f64>],
    path: &[DVector<f64>],
) -> Result<Vec<GaussianMoment>> {
    let horizon = path.len();
    if horizon == 0 {
        return Err(Error::Empty("nonlinear path"));
    }
    check_dim("measurement count", horizon, measurements.len())?;
    let params = path
        .iter()
        .enumerate()
        .map(|(t, x)| {
            check_dim("nonlinear path point", model.d_nonlin(), x.len())?;
            model.params_checked(t, x)
        })
        .collect::<Result<Vec<_>>>()?;
    // Observation factors of x_t^L: y_t always, z_t for t < T - 1.
    let y_lik = |t: usize| {
        GaussianLikelihood::with_precision(
            measurements[t].clone(),
            params[t].b_obs.clone(),
            params[t].h_obs.clone(),
            model.prec_e().clone(),
        )
    };
    let z_lik = |t: usize| -> Result<GaussianLikelihood> {
        GaussianLikelihood::with_precision(
            pseudo_meas_lin(&path[t + 1], &params[t])?,
            params[t].a_nonlin.clone(),
            DVector::zeros(model.d_nonlin()),
            model.prec_w_nonlin().clone(),
        )
    };

    // forward: predicted messages m_fp
    let mut pred = Vec::with_capacity(horizon);
    pred.push(model.prior_lin().to_canonical()?);
    for t in 0..horizon - 1 {
        let filt = eq_gauss_likelihood(&pred[t], &y_lik(t)?)?;
        let filt = eq_gauss_likelihood(&filt, &z_lik(t)?)?.to_moment()?;
        let p = &params[t];
        let next = GaussianMoment::new(
            &p.a_lin * filt.mean() + &p.f_lin,
            &p.a_lin * filt.cov() * p.a_lin.transpose() + model.cov_w_lin(),
        )?;
        pred.push(next.to_canonical()?);
    }

    // backward: m_be from y_{T-1} alone, then reverse TU plus local factors
    let d = model.d_lin();
    let mut out = vec![None; horizon];
    let mut be = eq_gauss_likelihood(&zero_canonical(d), &y_lik(horizon - 1)?)?;
    out[horizon - 1] = Some(eq_gauss_product(&pred[horizon - 1], &be)?.to_moment()?);
    for t in (0..horizon - 1).rev() {
        let m1 = ReverseTu::new(&be, model.prec_w_lin())?.apply(&params[t].a_lin, &params[t].f_lin)?;
        let m3 = eq_gauss_likelihood(&m1, &z_lik(t)?)?;
        be = eq_gauss_likelihood(&m3, &y_lik(t)?)?;
        out[t] = Some(eq_gauss_product(&pred[t], &be)?.to_moment()?);
    }
    Ok(out.into_iter().map(|g| g.expect("every instant filled")).collect())
}

fn zero_canonical(d: usize) -> GaussianCanonical {
    GaussianCanonical::uninformative(d)
}
