//! Forward-backward smoothing of a scalar nonlinear model on a dense grid.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::quadrature::{normal_pdf_1d, trapezoid_weights, uniform_grid};
use crate::error::{Error, Result};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `x_{t+1} = f(x_t) + w`, `y_t = g(x_t) + e`, `x_0 ~ N(m_0, p_0)`.
#[derive(Clone)]
pub struct ScalarModel {
    pub transition: ScalarFn,
    pub process_var: f64,
    pub observation: ScalarFn,
    pub obs_var: f64,
    pub prior_mean: f64,
    pub prior_var: f64,
}

impl ScalarModel {
    pub fn linear(f: f64, q: f64, h: f64, r: f64, m0: f64, p0: f64) -> Self {
        ScalarModel {
            transition: Arc::new(move |x| f * x),
            process_var: q,
            observation: Arc::new(move |x| h * x),
            obs_var: r,
            prior_mean: m0,
            prior_var: p0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64) -> Self {
        GridSpec { lo, hi, points: 2048 }
    }
}

/// Grid densities, each normalized so its trapezoid integral is one.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPosterior {
    pub grid: Vec<f64>,
    pub weights: Vec<f64>,
    pub filtered: Vec<Vec<f64>>,
    pub smoothed: Vec<Vec<f64>>,
}

impl GridPosterior {
    fn moments(&self, p: &[f64]) -> (f64, f64) {
        let m: f64 = self.grid.iter().zip(p).zip(&self.weights).map(|((x, p), w)| w * p * x).sum();
        let v: f64 = self
            .grid
            .iter()
            .zip(p)
            .zip(&self.weights)
            .map(|((x, p), w)| w * p * (x - m).powi(2))
            .sum();
        (m, v)
    }

    pub fn smoothed_moments(&self, t: usize) -> (f64, f64) {
        self.moments(&self.smoothed[t])
    }

    pub fn filtered_moments(&self, t: usize) -> (f64, f64) {
        self.moments(&self.filtered[t])
    }
}

fn normalize(p: &mut [f64], w: &[f64]) -> Result<()> {
    let s: f64 = p.iter().zip(w).map(|(a, b)| a * b).sum();
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::DegenerateWeights {
            instant: 0,
            stage: "grid normalization",
        });
    }
    p.iter_mut().for_each(|v| *v /= s);
    Ok(())
}

fn check_support(p: &[f64]) -> Result<()> {
    let max = p.iter().cloned().fold(0.0, f64::max);
    let edge = p[0].max(p[p.len() - 1]);
    if edge > 1e-9 * max {
        return Err(Error::InvalidConfig("grid does not cover the posterior support".into()));
    }
    Ok(())
}

pub fn grid_smoother(model: &ScalarModel, measurements: &[f64], spec: GridSpec) -> Result<GridPosterior> {
    let xs = uniform_grid(spec.lo, spec.hi, spec.points);
    let n = xs.len();
    let w = trapezoid_weights(n, xs[1] - xs[0]);
    // kernel[(i, k)] = N(x_i; f(x_k), q)
    let fx: Vec<f64> = xs.iter().map(|x| (model.transition)(*x)).collect();
    let kernel = DMatrix::from_fn(n, n, |i, k| normal_pdf_1d(xs[i], fx[k], model.process_var));
    let lik = |y: f64| -> Vec<f64> {
        xs.iter()
            .map(|x| normal_pdf_1d(y, (model.observation)(*x), model.obs_var))
            .collect()
    };

    let horizon = measurements.len();
    let mut filtered = Vec::with_capacity(horizon);
    let mut pred: Vec<f64> = xs.iter().map(|x| normal_pdf_1d(*x, model.prior_mean, model.prior_var)).collect();
    for (t, y) in measurements.iter().enumerate() {
        let mut f: Vec<f64> = pred.iter().zip(lik(*y)).map(|(a, b)| a * b).collect();
        normalize(&mut f, &w).map_err(|_| Error::DegenerateWeights {
            instant: t,
            stage: "grid filter",
        })?;
        check_support(&f)?;
        let wf = DVector::from_fn(n, |k, _| w[k] * f[k]);
        pred = (&kernel * wf).as_slice().to_vec();
        filtered.push(f);
    }

    // beta_t(x_k) = sum_i w_i N(x_i; f(x_k), q) lik_{t+1}(x_i) beta_{t+1}(x_i)
    let mut smoothed = vec![Vec::new(); horizon];
    let mut beta = vec![1.0; n];
    for t in (0..horizon).rev() {
        let mut s: Vec<f64> = filtered[t].iter().zip(&beta).map(|(a, b)| a * b).collect();
        normalize(&mut s, &w)?;
        smoothed[t] = s;
        if t == 0 {
            break;
        }
        let l = lik(measurements[t]);
        let v = DVector::from_fn(n, |i, _| w[i] * l[i] * beta[i]);
        let mut nb = kernel.tr_mul(&v).as_slice().to_vec();
        let m = nb.iter().cloned().fold(0.0, f64::max);
        if m > 0.0 {
            nb.iter_mut().for_each(|v| *v /= m);
        }
        beta = nb;
    }
    Ok(GridPosterior {
        grid: xs,
        weights: w,
        filtered,
        smoothed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::kalman::{kalman_filter, rts_smoother, LinearGaussianModel, Moments};

    #[test]
    fn single_measurement_is_bayes_rule() {
        let m = ScalarModel::linear(1.0, 1.0, 1.0, 1.0, 0.0, 1.0);
        let g = grid_smoother(&m, &[1.0], GridSpec::new(-10.0, 10.0)).unwrap();
        let (mean, var) = g.smoothed_moments(0);
        assert!((mean - 0.5).abs() < 1e-9);
        assert!((var - 0.5).abs() < 1e-9);
    }

    #[test]
    fn linear_model_matches_kalman_and_rts() {
        let ys = [0.4, -0.3, 1.2, 0.8, 0.1];
        let (f, q, h, r) = (0.8, 0.5, 1.0, 0.4);
        let g = grid_smoother(&ScalarModel::linear(f, q, h, r, 0.0, 1.0), &ys, GridSpec::new(-10.0, 10.0)).unwrap();
        let mm = |v: f64| DMatrix::from_element(1, 1, v);
        let lg = LinearGaussianModel::new(
            mm(f),
            DVector::zeros(1),
            mm(q),
            mm(h),
            DVector::zeros(1),
            mm(r),
            Moments {
                mean: DVector::zeros(1),
                cov: mm(1.0),
            },
        )
        .unwrap();
        let yv: Vec<_> = ys.iter().map(|v| DVector::from_element(1, *v)).collect();
        let k = kalman_filter(&lg, &yv).unwrap();
        let s = rts_smoother(&k, &lg).unwrap();
        for (t, (kf, ks)) in k.filtered.iter().zip(&s).enumerate() {
            let (fm, fv) = g.filtered_moments(t);
            assert!((fm - kf.mean[0]).abs() < 1e-5);
            assert!((fv - kf.cov[(0, 0)]).abs() < 1e-5);
            let (sm, sv) = g.smoothed_moments(t);
            assert!((sm - ks.mean[0]).abs() < 1e-5);
            assert!((sv - ks.cov[(0, 0)]).abs() < 1e-5);
        }
    }

    #[test]
    fn uninformative_observations_give_prior_marginals() {
        let m = ScalarModel::linear(0.5, 1.0, 0.0, 1.0, 1.0, 2.0);
        let g = grid_smoother(&m, &[3.0, -2.0, 0.0], GridSpec::new(-12.0, 12.0)).unwrap();
        // prior propagation: mean 1 -> 0.5 -> 0.25, var 2 -> 1.5 -> 1.375
        for (t, (em, ev)) in [(1.0, 2.0), (0.5, 1.5), (0.25, 1.375)].iter().enumerate() {
            let (m, v) = g.smoothed_moments(t);
            assert!((m - em).abs() < 1e-8 && (v - ev).abs() < 1e-8);
        }
    }

    #[test]
    fn narrow_grid_is_rejected() {
        let m = ScalarModel::linear(1.0, 1.0, 1.0, 1.0, 0.0, 1.0);
        assert!(grid_smoother(&m, &[1.0], GridSpec::new(-1.0, 1.0)).is_err());
    }

    #[test]
    fn densities_are_normalized() {
        let m = ScalarModel::linear(0.9, 0.3, 1.0, 0.2, 0.0, 1.0);
        let g = grid_smoother(&m, &[0.2, 0.5], GridSpec::new(-8.0, 8.0)).unwrap();
        for p in g.smoothed.iter().chain(&g.filtered) {
            let s: f64 = p.iter().zip(&g.weights).map(|(a, b)| a * b).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
