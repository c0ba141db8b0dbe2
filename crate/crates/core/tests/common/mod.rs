#![allow(dead_code)]

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbsmooth::gaussian::GaussianMoment;
use rbsmooth::{ClgModel, ModelParams};

/// Prints past the test harness capture so result lines always show.
pub fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(rng: &mut impl Rng, r: usize, c: usize, half: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-half..half))
}

/// Random rescaled so its spectral norm is `norm`.
pub fn matrix_with_norm(rng: &mut impl Rng, n: usize, norm: f64) -> DMatrix<f64> {
    let m = uniform_matrix(rng, n, n, 1.0);
    let s = m.clone().svd(false, false).singular_values[0];
    m * (norm / s)
}

/// `σ² (I + E)` with a small symmetric perturbation `E`.
pub fn random_spd(rng: &mut impl Rng, n: usize, sigma: f64) -> DMatrix<f64> {
    let e = uniform_matrix(rng, n, n, 0.3 / n as f64);
    let e = (&e + e.transpose()) * 0.5;
    (DMatrix::identity(n, n) + e) * sigma * sigma
}

/// Random conditionally linear Gaussian model with smooth nonlinearities.
pub fn random_clg(seed: u64) -> ClgModel {
    let mut r = rng(seed);
    let dl = r.random_range(1..=3usize);
    let dn = r.random_range(1..=2usize);
    let p = r.random_range(1..=2usize);
    let na = r.random_range(0.5..0.9);
    let a_lin = matrix_with_norm(&mut r, dl, na);
    let c_lin = uniform_matrix(&mut r, dl, dn, 1.0);
    let a_nonlin = uniform_matrix(&mut r, dn, dl, 0.6);
    let nn = r.random_range(0.5..0.9);
    let m_nonlin = matrix_with_norm(&mut r, dn, nn);
    let b_obs = uniform_matrix(&mut r, p, dl, 1.0);
    let v_obs = uniform_matrix(&mut r, p, dn, 0.4);
    let f = move |_t: usize, x: &DVector<f64>| ModelParams {
        a_lin: a_lin.clone(),
        f_lin: (&c_lin * x).map(f64::sin),
        a_nonlin: a_nonlin.clone(),
        f_nonlin: &m_nonlin * x.map(f64::atan),
        b_obs: b_obs.clone(),
        h_obs: &v_obs * x.map(|v| v * v.abs()),
    };
    let s = |r: &mut ChaCha8Rng| r.random_range(0.1..0.5);
    let (swl, swn, se) = (s(&mut r), s(&mut r), s(&mut r));
    ClgModel::new(
        dl,
        dn,
        p,
        Arc::new(f),
        random_spd(&mut r, dl, swl),
        random_spd(&mut r, dn, swn),
        random_spd(&mut r, p, se),
        GaussianMoment::new(DVector::zeros(dl), DMatrix::identity(dl, dl)).unwrap(),
        GaussianMoment::new(DVector::zeros(dn), DMatrix::identity(dn, dn)).unwrap(),
    )
    .unwrap()
}
