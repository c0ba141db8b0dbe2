//! Trapezoid quadrature on uniform grids and a standalone Gaussian density.

use nalgebra::{DMatrix, DVector};

/// `n` equally spaced points covering `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && hi > lo, "grid needs two points and a positive width");
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + h * i as f64).collect()
}

/// Trapezoid weights for a uniform grid of `n` points with spacing `h`.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] *= 0.5;
    w[n - 1] *= 0.5;
    w
}

pub fn integrate_1d<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
    let xs = uniform_grid(lo, hi, n);
    let w = trapezoid_weights(n, xs[1] - xs[0]);
    xs.iter().zip(&w).map(|(x, w)| w * f(*x)).sum()
}

/// Tensor-product trapezoid rule over the square `[lo, hi]²`.
pub fn integrate_2d<F: Fn(f64, f64) -> f64>(f: F, lo: [f64; 2], hi: [f64; 2], n: usize) -> f64 {
    let xs = uniform_grid(lo[0], hi[0], n);
    let ys = uniform_grid(lo[1], hi[1], n);
    let wx = trapezoid_weights(n, xs[1] - xs[0]);
    let wy = trapezoid_weights(n, ys[1] - ys[0]);
    let mut s = 0.0;
    for (x, a) in xs.iter().zip(&wx) {
        for (y, b) in ys.iter().zip(&wy) {
            s += a * b * f(*x, *y);
        }
    }
    s
}

/// Multivariate normal density via an explicit inverse and determinant.
pub fn normal_pdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = x - mean;
    let inv = cov.clone().try_inverse().expect("invertible covariance");
    let det = cov.determinant();
    let k = x.len() as f64;
    (-0.5 * d.dot(&(&inv * &d))).exp() / ((2.0 * std::f64::consts::PI).powf(k) * det).sqrt()
}

pub fn normal_pdf_1d(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    (-0.5 * d * d / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_integrates_to_one() {
        let v = integrate_1d(|x| normal_pdf_1d(x, 0.3, 0.7), -10.0, 10.0, 401);
        assert!((v - 1.0).abs() < 1e-12);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        let mean = DVector::from_column_slice(&[0.2, -0.1]);
        let v = integrate_2d(
            |a, b| normal_pdf(&DVector::from_column_slice(&[a, b]), &mean, &cov),
            [-9.0, -9.0],
            [9.0, 9.0],
            201,
        );
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn one_and_many_dimensional_forms_agree() {
        let a = normal_pdf_1d(0.4, -0.2, 2.0);
        let b = normal_pdf(
            &DVector::from_element(1, 0.4),
            &DVector::from_element(1, -0.2),
            &DMatrix::from_element(1, 1, 2.0),
        );
        assert!((a - b).abs() < 1e-15);
    }
}
