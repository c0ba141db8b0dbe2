//! Conditionally linear Gaussian state-space models.
//!
//! ```text
//! x_{t+1}^L = A^L(x_t^N) x_t^L + f^L(x_t^N) + w_t^L
//! x_{t+1}^N = f^N(x_t^N) + A^N(x_t^N) x_t^L + w_t^N
//! y_t       = h(x_t^N) + B(x_t^N) x_t^L + e_t
//! ```
//!
//! Time indices are zero based throughout the crate: `t = 0` is the first
//! observation instant.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::gaussian::GaussianMoment;
use crate::linalg::spd_inverse;

/// Model matrices and vectors evaluated at one `(t, x^N)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `A^L`, `D_L × D_L`.
    pub a_lin: DMatrix<f64>,
    /// `f^L`, length `D_L`.
    pub f_lin: DVector<f64>,
    /// `A^N`, `D_N × D_L`.
    pub a_nonlin: DMatrix<f64>,
    /// `f^N`, length `D_N`.
    pub f_nonlin: DVector<f64>,
    /// `B`, `P × D_L`.
    pub b_obs: DMatrix<f64>,
    /// `h`, length `P`.
    pub h_obs: DVector<f64>,
}

impl ModelParams {
    fn validate(&self, d_lin: usize, d_nonlin: usize, d_obs: usize) -> Result<()> {
        check_dim("A^L rows", d_lin, self.a_lin.nrows())?;
        check_dim("A^L cols", d_lin, self.a_lin.ncols())?;
        check_dim("f^L", d_lin, self.f_lin.len())?;
        check_dim("A^N rows", d_nonlin, self.a_nonlin.nrows())?;
        check_dim("A^N cols", d_lin, self.a_nonlin.ncols())?;
        check_dim("f^N", d_nonlin, self.f_nonlin.len())?;
        check_dim("B rows", d_obs, self.b_obs.nrows())?;
        check_dim("B cols", d_lin, self.b_obs.ncols())?;
        check_dim("h", d_obs, self.h_obs.len())?;
        let finite = self.a_lin.iter().all(|v| v.is_finite())
            && self.f_lin.iter().all(|v| v.is_finite())
            && self.a_nonlin.iter().all(|v| v.is_finite())
            && self.f_nonlin.iter().all(|v| v.is_finite())
            && self.b_obs.iter().all(|v| v.is_finite())
            && self.h_obs.iter().all(|v| v.is_finite());
        if finite {
            Ok(())
        } else {
            Err(Error::NonFinite("model parameters"))
        }
    }
}

/// Callback evaluating the model at `(t, x^N)`.
pub type ParamFn = dyn Fn(usize, &DVector<f64>) -> ModelParams + Send + Sync;

/// A CLG state-space model. Cheap to clone; immutable after construction.
#[derive(Clone)]
pub struct ClgModel {
    d_lin: usize,
    d_nonlin: usize,
    d_obs: usize,
    param_eval: Arc<ParamFn>,
    cov_w_lin: DMatrix<f64>,
    cov_w_nonlin: DMatrix<f64>,
    cov_e: DMatrix<f64>,
    prec_w_lin: DMatrix<f64>,
    prec_w_nonlin: DMatrix<f64>,
    prec_e: DMatrix<f64>,
    prior_lin: GaussianMoment,
    prior_nonlin: GaussianMoment,
}

impl fmt::Debug for ClgModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClgModel")
            .field("d_lin", &self.d_lin)
            .field("d_nonlin", &self.d_nonlin)
            .field("d_obs", &self.d_obs)
            .field("cov_w_lin", &self.cov_w_lin)
            .field("cov_w_nonlin", &self.cov_w_nonlin)
            .field("cov_e", &self.cov_e)
            .finish_non_exhaustive()
    }
}

fn spd_precision(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
        return Err(Error::InvalidConfig(format!("{what} is not symmetric")));
    }
    spd_inverse(m, what).map_err(|_| Error::InvalidConfig(format!("{what} is not positive definite")))
}

impl ClgModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        d_lin: usize,
        d_nonlin: usize,
        d_obs: usize,
        param_eval: Arc<ParamFn>,
        cov_w_lin: DMatrix<f64>,
        cov_w_nonlin: DMatrix<f64>,
        cov_e: DMatrix<f64>,
        prior_lin: GaussianMoment,
        prior_nonlin: GaussianMoment,
    ) -> Result<Self> {
        if d_lin == 0 || d_nonlin == 0 || d_obs == 0 {
            return Err(Error::InvalidConfig("model dimensions must be positive".into()));
        }
        check_dim("C_w^L", d_lin, cov_w_lin.nrows())?;
        check_dim("C_w^N", d_nonlin, cov_w_nonlin.nrows())?;
        check_dim("C_e", d_obs, cov_e.nrows())?;
        check_dim("linear prior", d_lin, prior_lin.dim())?;
        check_dim("nonlinear prior", d_nonlin, prior_nonlin.dim())?;
        let prec_w_lin = spd_precision(&cov_w_lin, "C_w^L")?;
        let prec_w_nonlin = spd_precision(&cov_w_nonlin, "C_w^N")?;
        let prec_e = spd_precision(&cov_e, "C_e")?;
        let model = ClgModel {
            d_lin,
            d_nonlin,
            d_obs,
            param_eval,
            cov_w_lin,
            cov_w_nonlin,
            cov_e,
            prec_w_lin,
            prec_w_nonlin,
            prec_e,
            prior_lin,
            prior_nonlin,
        };
        // One probe evaluation catches shape errors up front.
        let probe = (model.param_eval)(0, model.prior_nonlin.mean());
        probe.validate(d_lin, d_nonlin, d_obs)?;
        Ok(model)
    }

    /// Replaces the initial priors.
    pub fn with_initial_prior(mut self, lin: GaussianMoment, nonlin: GaussianMoment) -> Result<Self> {
        check_dim("linear prior", self.d_lin, lin.dim())?;
        check_dim("nonlinear prior", self.d_nonlin, nonlin.dim())?;
        self.prior_lin = lin;
        self.prior_nonlin = nonlin;
        Ok(self)
    }

    pub fn d_lin(&self) -> usize {
        self.d_lin
    }

    pub fn d_nonlin(&self) -> usize {
        self.d_nonlin
    }

    pub fn d_obs(&self) -> usize {
        self.d_obs
    }

    pub fn params(&self, t: usize, x_nonlin: &DVector<f64>) -> ModelParams {
        (self.param_eval)(t, x_nonlin)
    }

    /// Evaluates and shape-checks the parameters.
    pub fn params_checked(&self, t: usize, x_nonlin: &DVector<f64>) -> Result<ModelParams> {
        check_dim("x^N", self.d_nonlin, x_nonlin.len())?;
        let p = self.params(t, x_nonlin);
        p.validate(self.d_lin, self.d_nonlin, self.d_obs)?;
        Ok(p)
    }

    pub fn cov_w_lin(&self) -> &DMatrix<f64> {
        &self.cov_w_lin
    }

    pub fn cov_w_nonlin(&self) -> &DMatrix<f64> {
        &self.cov_w_nonlin
    }

    pub fn cov_e(&self) -> &DMatrix<f64> {
        &self.cov_e
    }

    pub fn prec_w_lin(&self) -> &DMatrix<f64> {
        &self.prec_w_lin
    }

    pub fn prec_w_nonlin(&self) -> &DMatrix<f64> {
        &self.prec_w_nonlin
    }

    pub fn prec_e(&self) -> &DMatrix<f64> {
        &self.prec_e
    }

    pub fn prior_lin(&self) -> &GaussianMoment {
        &self.prior_lin
    }

    pub fn prior_nonlin(&self) -> &GaussianMoment {
        &self.prior_nonlin
    }
}

/// The three-dimensional-linear / scalar-nonlinear benchmark system with two
/// observations:
///
/// ```text
/// x_{t+1}^L = [0.8 0.2 0; 0 0.7 -0.2; 0 0.2 0.7] x_t^L
///             + [cos x^N, -sin x^N, 0.5 sin 2x^N]ᵀ + w^L
/// x_{t+1}^N = atan(x^N) + [0.9 0 0] x_t^L + w^N
/// y_t       = [0.1 (x^N)² sgn(x^N), 0]ᵀ + [0 0 0; 1 -1 1] x_t^L + e_t
/// ```
///
/// Noise covariances are `σ² I`. The initial priors are `x^L ~ N(0, I₃)` and
/// `x^N ~ N(0, 1)`.
pub fn benchmark_model(sigma_w_lin: f64, sigma_w_nonlin: f64, sigma_e: f64) -> Result<ClgModel> {
    for (name, s) in [
        ("sigma_w_lin", sigma_w_lin),
        ("sigma_w_nonlin", sigma_w_nonlin),
        ("sigma_e", sigma_e),
    ] {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidConfig(format!("{name} must be positive, got {s}")));
        }
    }
    let a_lin = DMatrix::from_row_slice(3, 3, &[0.8, 0.2, 0.0, 0.0, 0.7, -0.2, 0.0, 0.2, 0.7]);
    let a_nonlin = DMatrix::from_row_slice(1, 3, &[0.9, 0.0, 0.0]);
    let b_obs = DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 0.0, 1.0, -1.0, 1.0]);
    let param_eval = move |_t: usize, xn: &DVector<f64>| {
        let x = xn[0];
        ModelParams {
            a_lin: a_lin.clone(),
            f_lin: DVector::from_column_slice(&[x.cos(), -x.sin(), 0.5 * (2.0 * x).sin()]),
            a_nonlin: a_nonlin.clone(),
            f_nonlin: DVector::from_element(1, x.atan()),
            b_obs: b_obs.clone(),
            h_obs: DVector::from_column_slice(&[0.1 * x * x * sgn(x), 0.0]),
        }
    };
    ClgModel::new(
        3,
        1,
        2,
        Arc::new(param_eval),
        DMatrix::identity(3, 3) * sigma_w_lin.powi(2),
        DMatrix::identity(1, 1) * sigma_w_nonlin.powi(2),
        DMatrix::identity(2, 2) * sigma_e.powi(2),
        GaussianMoment::new(DVector::zeros(3), DMatrix::identity(3, 3))?,
        GaussianMoment::new(DVector::zeros(1), DMatrix::identity(1, 1))?,
    )
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Fully linear variant of the benchmark: every trigonometric / sign term is
/// replaced by a linear map of `x^N` and `B` is given full row rank.
///
/// Stacking `[x^L; x^N]` turns it into an ordinary linear Gaussian model,
/// which is what the Kalman/RTS cross-checks use (see
/// [`crate::oracles::LinearGaussianModel::stacked_linear_benchmark`]). The
/// stacked transition has spectral radius ≈ 0.97.
pub fn linear_benchmark(sigma_w_lin: f64, sigma_w_nonlin: f64, sigma_e: f64) -> Result<ClgModel> {
    let s = LinearBenchmark::new(sigma_w_lin, sigma_w_nonlin, sigma_e)?;
    let LinearBenchmark {
        a_lin,
        c_lin,
        a_nonlin,
        c_nonlin,
        b_obs,
        c_obs,
        ..
    } = s.clone();
    let param_eval = move |_t: usize, xn: &DVector<f64>| ModelParams {
        a_lin: a_lin.clone(),
        f_lin: &c_lin * xn,
        a_nonlin: a_nonlin.clone(),
        f_nonlin: &c_nonlin * xn,
        b_obs: b_obs.clone(),
        h_obs: &c_obs * xn,
    };
    ClgModel::new(
        3,
        1,
        2,
        Arc::new(param_eval),
        DMatrix::identity(3, 3) * s.sigma_w_lin.powi(2),
        DMatrix::identity(1, 1) * s.sigma_w_nonlin.powi(2),
        DMatrix::identity(2, 2) * s.sigma_e.powi(2),
        GaussianMoment::new(DVector::zeros(3), DMatrix::identity(3, 3))?,
        GaussianMoment::new(DVector::zeros(1), DMatrix::identity(1, 1))?,
    )
}

/// Matrices of [`linear_benchmark`].
#[derive(Debug, Clone)]
pub struct LinearBenchmark {
    pub a_lin: DMatrix<f64>,
    /// `f^L(x) = c_lin x`.
    pub c_lin: DMatrix<f64>,
    pub a_nonlin: DMatrix<f64>,
    /// `f^N(x) = c_nonlin x`.
    pub c_nonlin: DMatrix<f64>,
    pub b_obs: DMatrix<f64>,
    /// `h(x) = c_obs x`.
    pub c_obs: DMatrix<f64>,
    pub sigma_w_lin: f64,
    pub sigma_w_nonlin: f64,
    pub sigma_e: f64,
}

impl LinearBenchmark {
    pub fn new(sigma_w_lin: f64, sigma_w_nonlin: f64, sigma_e: f64) -> Result<Self> {
        for s in [sigma_w_lin, sigma_w_nonlin, sigma_e] {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidConfig(format!("noise levels must be positive, got {s}")));
            }
        }
        Ok(LinearBenchmark {
            a_lin: DMatrix::from_row_slice(3, 3, &[0.8, 0.2, 0.0, 0.0, 0.7, -0.2, 0.0, 0.2, 0.7]),
            // cos x -> 0.3 x, -sin x -> -0.3 x, 0.5 sin 2x -> 0.3 x
            c_lin: DMatrix::from_column_slice(3, 1, &[0.3, -0.3, 0.3]),
            a_nonlin: DMatrix::from_row_slice(1, 3, &[0.9, 0.0, 0.0]),
            // atan x -> 0.5 x
            c_nonlin: DMatrix::from_element(1, 1, 0.5),
            b_obs: DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 1.0, -1.0, 1.0]),
            // 0.1 x^2 sgn x -> x
            c_obs: DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            sigma_w_lin,
            sigma_w_nonlin,
            sigma_e,
        })
    }
}

/// `z^L = x_{t+1}^N − f^N(x_t^N)`: pseudo-measurement of the linear state,
/// distributed as `A^N x_t^L + w^N`.
pub fn pseudo_meas_lin(x_nonlin_next: &DVector<f64>, params: &ModelParams) -> Result<DVector<f64>> {
    check_dim("pseudo_meas_lin", params.f_nonlin.len(), x_nonlin_next.len())?;
    Ok(x_nonlin_next - &params.f_nonlin)
}

/// `z^N = x_{t+1}^L − A^L(x_t^N) x_t^L`: pseudo-measurement of the nonlinear
/// state, distributed as `f^L(x_t^N) + w^L`.
pub fn pseudo_meas_nonlin(
    x_lin_next: &DVector<f64>,
    x_lin: &DVector<f64>,
    params: &ModelParams,
) -> Result<DVector<f64>> {
    check_dim("pseudo_meas_nonlin next", params.a_lin.nrows(), x_lin_next.len())?;
    check_dim("pseudo_meas_nonlin current", params.a_lin.ncols(), x_lin.len())?;
    Ok(x_lin_next - &params.a_lin * x_lin)
}
