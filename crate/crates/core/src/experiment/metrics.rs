use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::simulate::Trajectory;

/// Mean squared errors of one run, averaged over instants and components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunErrors {
    pub mse_lin: f64,
    pub mse_nonlin: f64,
}

impl RunErrors {
    pub fn rmse_lin(&self) -> f64 {
        self.mse_lin.sqrt()
    }

    pub fn rmse_nonlin(&self) -> f64 {
        self.mse_nonlin.sqrt()
    }
}

fn mse(est: &[DVector<f64>], truth: &[DVector<f64>]) -> Result<f64> {
    check_dim("estimate length", truth.len(), est.len())?;
    if truth.is_empty() {
        return Err(Error::Empty("estimate sequence"));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (e, x) in est.iter().zip(truth) {
        check_dim("estimate dimension", x.len(), e.len())?;
        sum += (e - x).norm_squared();
        count += x.len();
    }
    Ok(sum / count as f64)
}

/// Squared-error averages of linear and nonlinear estimates against the
/// simulated truth.
pub fn rmse_metrics(lin: &[DVector<f64>], nonlin: &[DVector<f64>], truth: &Trajectory) -> Result<RunErrors> {
    Ok(RunErrors {
        mse_lin: mse(lin, &truth.states_lin)?,
        mse_nonlin: mse(nonlin, &truth.states_nonlin)?,
    })
}

/// A point estimate with a 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub value: f64,
    pub half_width: f64,
}

impl Interval {
    pub fn lo(&self) -> f64 {
        self.value - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.value + self.half_width
    }
}

const Z95: f64 = 1.959_963_984_540_054;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_var(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// RMSE over runs, `sqrt(mean(mse))`, with a delta-method half-width.
pub fn summarize(per_run_mse: &[f64]) -> Interval {
    let m = mean(per_run_mse);
    let rmse = m.sqrt();
    let se = (sample_var(per_run_mse) / per_run_mse.len() as f64).sqrt();
    let hw = if rmse > 0.0 { Z95 * se / (2.0 * rmse) } else { 0.0 };
    Interval { value: rmse, half_width: hw }
}

/// Relative improvement `1 − RMSE_b / RMSE_a` from paired per-run MSEs,
/// with a delta-method half-width.
pub fn paired_improvement(mse_a: &[f64], mse_b: &[f64]) -> Result<Interval> {
    check_dim("paired runs", mse_a.len(), mse_b.len())?;
    if mse_a.is_empty() {
        return Err(Error::Empty("paired runs"));
    }
    let (ma, mb) = (mean(mse_a), mean(mse_b));
    if ma <= 0.0 {
        return Err(Error::NonFinite("baseline mean squared error"));
    }
    let r = mb / ma;
    let resid: Vec<f64> = mse_a.iter().zip(mse_b).map(|(a, b)| b - r * a).collect();
    let se_r = (sample_var(&resid) / mse_a.len() as f64).sqrt() / ma;
    let hw = if r > 0.0 { Z95 * se_r / (2.0 * r.sqrt()) } else { 0.0 };
    Ok(Interval {
        value: 1.0 - r.sqrt(),
        half_width: hw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(lin: &[[f64; 3]], nonlin: &[f64]) -> Trajectory {
        Trajectory {
            states_lin: lin.iter().map(|v| DVector::from_column_slice(v)).collect(),
            states_nonlin: nonlin.iter().map(|v| DVector::from_element(1, *v)).collect(),
            measurements: nonlin.iter().map(|_| DVector::zeros(2)).collect(),
            seed: 0,
        }
    }

    #[test]
    fn perfect_estimates_have_zero_error() {
        let t = traj(&[[1.0, 2.0, 3.0], [0.0, 0.5, 1.0]], &[0.3, -0.3]);
        let e = rmse_metrics(&t.states_lin, &t.states_nonlin, &t).unwrap();
        assert_eq!((e.rmse_lin(), e.rmse_nonlin()), (0.0, 0.0));
    }

    #[test]
    fn constant_error_and_hand_case() {
        let t = traj(&[[0.0; 3], [0.0; 3]], &[0.0, 0.0]);
        let lin = vec![DVector::from_element(3, 0.7); 2];
        let nonlin = vec![DVector::from_element(1, 3.0), DVector::from_element(1, 4.0)];
        let e = rmse_metrics(&lin, &nonlin, &t).unwrap();
        assert!((e.rmse_lin() - 0.7).abs() < 1e-15);
        assert!((e.rmse_nonlin() - 12.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_is_error() {
        let t = traj(&[[0.0; 3], [0.0; 3]], &[0.0, 0.0]);
        let lin = vec![DVector::zeros(3)];
        assert!(rmse_metrics(&lin, &t.states_nonlin, &t).is_err());
    }

    #[test]
    fn summary_and_improvement() {
        let s = summarize(&[4.0, 4.0]);
        assert_eq!(s, Interval { value: 2.0, half_width: 0.0 });
        let imp = paired_improvement(&[4.0, 4.0, 4.0], &[1.0, 1.0, 1.0]).unwrap();
        assert!((imp.value - 0.5).abs() < 1e-15);
        assert!(imp.half_width.abs() < 1e-15);
    }
}
