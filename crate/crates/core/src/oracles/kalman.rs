//! Textbook Kalman filter, RTS smoother and a dense batch smoother.

use std::ops::{AddAssign, SubAssign};

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::model::LinearBenchmark;

/// Mean and covariance, kept separate from the library's Gaussian types.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// `x_{t+1} = F x_t + b + w`, `y_t = H x_t + d + e`, `x_0 ~ N(m_0, P_0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianModel {
    pub transition: DMatrix<f64>,
    pub transition_offset: DVector<f64>,
    pub process_cov: DMatrix<f64>,
    pub observation: DMatrix<f64>,
    pub observation_offset: DVector<f64>,
    pub observation_cov: DMatrix<f64>,
    pub initial: Moments,
}

impl LinearGaussianModel {
    pub fn new(
        transition: DMatrix<f64>,
        transition_offset: DVector<f64>,
        process_cov: DMatrix<f64>,
        observation: DMatrix<f64>,
        observation_offset: DVector<f64>,
        observation_cov: DMatrix<f64>,
        initial: Moments,
    ) -> Result<Self> {
        let n = transition.nrows();
        let p = observation.nrows();
        check_dim("transition cols", n, transition.ncols())?;
        check_dim("transition offset", n, transition_offset.len())?;
        check_dim("process covariance", n, process_cov.nrows())?;
        check_dim("observation cols", n, observation.ncols())?;
        check_dim("observation offset", p, observation_offset.len())?;
        check_dim("observation covariance", p, observation_cov.nrows())?;
        check_dim("initial mean", n, initial.mean.len())?;
        check_dim("initial covariance", n, initial.cov.nrows())?;
        Ok(LinearGaussianModel {
            transition,
            transition_offset,
            process_cov,
            observation,
            observation_offset,
            observation_cov,
            initial,
        })
    }

    /// The linear benchmark written over the stacked state `[x^L; x^N]`.
    pub fn stacked_linear_benchmark(lb: &LinearBenchmark) -> Self {
        let dl = lb.a_lin.nrows();
        let dn = lb.c_nonlin.nrows();
        let n = dl + dn;
        let mut f = DMatrix::zeros(n, n);
        f.view_mut((0, 0), (dl, dl)).copy_from(&lb.a_lin);
        f.view_mut((0, dl), (dl, dn)).copy_from(&lb.c_lin);
        f.view_mut((dl, 0), (dn, dl)).copy_from(&lb.a_nonlin);
        f.view_mut((dl, dl), (dn, dn)).copy_from(&lb.c_nonlin);
        let mut q = DMatrix::zeros(n, n);
        for i in 0..dl {
            q[(i, i)] = lb.sigma_w_lin.powi(2);
        }
        for i in dl..n {
            q[(i, i)] = lb.sigma_w_nonlin.powi(2);
        }
        let p = lb.b_obs.nrows();
        let mut h = DMatrix::zeros(p, n);
        h.view_mut((0, 0), (p, dl)).copy_from(&lb.b_obs);
        h.view_mut((0, dl), (p, dn)).copy_from(&lb.c_obs);
        LinearGaussianModel {
            transition: f,
            transition_offset: DVector::zeros(n),
            process_cov: q,
            observation: h,
            observation_offset: DVector::zeros(p),
            observation_cov: DMatrix::identity(p, p) * lb.sigma_e.powi(2),
            initial: Moments {
                mean: DVector::zeros(n),
                cov: DMatrix::identity(n, n),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanOutput {
    pub predicted: Vec<Moments>,
    pub filtered: Vec<Moments>,
}

fn inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    m.clone().try_inverse().ok_or(Error::Singular(what))
}

pub fn kalman_filter(model: &LinearGaussianModel, measurements: &[DVector<f64>]) -> Result<KalmanOutput> {
    let mut predicted = Vec::with_capacity(measurements.len());
    let mut filtered = Vec::with_capacity(measurements.len());
    let mut pred = model.initial.clone();
    let h = &model.observation;
    for y in measurements {
        check_dim("kalman measurement", h.nrows(), y.len())?;
        let s = h * &pred.cov * h.transpose() + &model.observation_cov;
        let k = &pred.cov * h.transpose() * inverse(&s, "innovation covariance")?;
        let innov = y - h * &pred.mean - &model.observation_offset;
        let mean = &pred.mean + &k * innov;
        let n = pred.mean.len();
        // Joseph form
        let ikh = DMatrix::<f64>::identity(n, n) - &k * h;
        let cov = &ikh * &pred.cov * ikh.transpose() + &k * &model.observation_cov * k.transpose();
        let filt = Moments { mean, cov };
        let f = &model.transition;
        let next = Moments {
            mean: f * &filt.mean + &model.transition_offset,
            cov: f * &filt.cov * f.transpose() + &model.process_cov,
        };
        predicted.push(pred);
        filtered.push(filt);
        pred = next;
    }
    Ok(KalmanOutput { predicted, filtered })
}

pub fn rts_smoother(out: &KalmanOutput, model: &LinearGaussianModel) -> Result<Vec<Moments>> {
    let n = out.filtered.len();
    if n == 0 {
        return Ok(vec![]);
    }
    let f = &model.transition;
    let mut smoothed = vec![out.filtered[n - 1].clone()];
    for t in (0..n - 1).rev() {
        let filt = &out.filtered[t];
        let pred = &out.predicted[t + 1];
        let next = smoothed.last().expect("nonempty");
        let g = &filt.cov * f.transpose() * inverse(&pred.cov, "predicted covariance")?;
        let mean = &filt.mean + &g * (&next.mean - &pred.mean);
        let cov = &filt.cov + &g * (&next.cov - &pred.cov) * g.transpose();
        smoothed.push(Moments {
            mean,
            cov: (&cov + cov.transpose()) * 0.5,
        });
    }
    smoothed.reverse();
    Ok(smoothed)
}

/// One instant of a time-varying linear Gaussian model: an observation
/// `observed = H x_t + d + e` and, except at the last instant, the
/// transition `x_{t+1} = F x_t + b + w`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearStep {
    pub observed: DVector<f64>,
    pub obs_matrix: DMatrix<f64>,
    pub obs_offset: DVector<f64>,
    pub obs_cov: DMatrix<f64>,
    pub transition: Option<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)>,
}

/// Smoothed marginals from the dense joint posterior over all instants.
pub fn batch_smoother(prior: &Moments, steps: &[LinearStep]) -> Result<Vec<Moments>> {
    let n = prior.mean.len();
    let len = steps.len();
    let dim = n * len;
    let mut info = DMatrix::<f64>::zeros(dim, dim);
    let mut vec = DVector::<f64>::zeros(dim);
    let p0 = inverse(&prior.cov, "batch prior")?;
    info.view_mut((0, 0), (n, n)).add_assign(&p0);
    vec.rows_mut(0, n).add_assign(&(&p0 * &prior.mean));
    for (t, s) in steps.iter().enumerate() {
        let o = t * n;
        let ri = inverse(&s.obs_cov, "batch observation covariance")?;
        let ht_ri = s.obs_matrix.transpose() * &ri;
        info.view_mut((o, o), (n, n)).add_assign(&(&ht_ri * &s.obs_matrix));
        vec.rows_mut(o, n).add_assign(&(&ht_ri * (&s.observed - &s.obs_offset)));
        if let Some((f, b, q)) = &s.transition {
            if t + 1 >= len {
                continue;
            }
            let qi = inverse(q, "batch process covariance")?;
            let ft_qi = f.transpose() * &qi;
            let o2 = o + n;
            info.view_mut((o, o), (n, n)).add_assign(&(&ft_qi * f));
            info.view_mut((o2, o2), (n, n)).add_assign(&qi);
            info.view_mut((o, o2), (n, n)).sub_assign(&ft_qi);
            info.view_mut((o2, o), (n, n)).sub_assign(&(&qi * f));
            vec.rows_mut(o2, n).add_assign(&(&qi * b));
            vec.rows_mut(o, n).sub_assign(&(&ft_qi * b));
        }
    }
    let cov = inverse(&info, "batch information matrix")?;
    let mean = &cov * vec;
    Ok((0..len)
        .map(|t| Moments {
            mean: mean.rows(t * n, n).into_owned(),
            cov: cov.view((t * n, t * n), (n, n)).into_owned(),
        })
        .collect())
}
