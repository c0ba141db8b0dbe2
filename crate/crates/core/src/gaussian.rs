//! Gaussian densities and the closed-form sum-product rules used by the
//! forward and backward passes.
//!
//! Messages come in two parameterizations: [`GaussianMoment`] (mean and
//! covariance) and [`GaussianCanonical`] (transformed mean `w = W η` and
//! precision `W`). Equality-node rules work in canonical form, where
//! combining two messages is plain addition; function-node rules mostly work
//! in moment form.
//!
//! Messages carry no normalization constants. Where a scale factor turns
//! into a particle weight it is returned as a [`LogWeight`], split into the
//! exponential part and the particle-dependent constant so callers can
//! choose whether to keep the latter.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{floor_spd, spd_inverse, spd_solve_logdet, symmetrize};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// A weight factor kept in the log domain: `value = exp(scale + exponent)`.
///
/// `scale` holds the particle-dependent constant (determinants, `2π`
/// factors), `exponent` the quadratic form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogWeight {
    pub exponent: f64,
    pub scale: f64,
}

impl LogWeight {
    pub fn from_value(v: f64) -> Self {
        LogWeight {
            exponent: v.ln(),
            scale: 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.exponent + self.scale
    }

    pub fn value(&self) -> f64 {
        self.total().exp()
    }
}

/// Gaussian density in mean/covariance form.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoment {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianMoment {
    /// Builds a Gaussian; the covariance is symmetrized and floored.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Self::new_flagged(mean, cov).map(|(g, _)| g)
    }

    /// Like [`GaussianMoment::new`] but also reports whether the eigenvalue
    /// floor had to be applied.
    pub fn new_flagged(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<(Self, bool)> {
        check_dim("gaussian covariance rows", mean.len(), cov.nrows())?;
        check_dim("gaussian covariance cols", mean.len(), cov.ncols())?;
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gaussian mean"));
        }
        let (cov, hit) = floor_spd(&cov)?;
        Ok((GaussianMoment { mean, cov }, hit))
    }

    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Self::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, var))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn into_parts(self) -> (DVector<f64>, DMatrix<f64>) {
        (self.mean, self.cov)
    }

    /// `ln N(x; mean, cov)`, split into quadratic and normalizer parts.
    pub fn log_pdf(&self, x: &DVector<f64>) -> Result<LogWeight> {
        check_dim("gaussian log_pdf point", self.dim(), x.len())?;
        let d = x - &self.mean;
        let (sol, logdet) = spd_solve_logdet(&self.cov, &d, "gaussian log_pdf")?;
        Ok(LogWeight {
            exponent: -0.5 * d.dot(&sol),
            scale: -0.5 * (logdet + self.dim() as f64 * LN_2PI),
        })
    }

    pub fn pdf(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.log_pdf(x)?.value())
    }

    /// Converts to canonical form: `W = C⁻¹`, `w = W η`.
    pub fn to_canonical(&self) -> Result<GaussianCanonical> {
        let prec = spd_inverse(&self.cov, "to_canonical")?;
        let tmean = &prec * &self.mean;
        GaussianCanonical::new(tmean, prec)
    }
}

/// Gaussian density in canonical (information) form. The precision may be
/// rank deficient up to the eigenvalue floor, which lets uninformative or
/// partially informative messages be represented.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCanonical {
    tmean: DVector<f64>,
    prec: DMatrix<f64>,
}

impl GaussianCanonical {
    pub fn new(tmean: DVector<f64>, prec: DMatrix<f64>) -> Result<Self> {
        check_dim("canonical precision rows", tmean.len(), prec.nrows())?;
        check_dim("canonical precision cols", tmean.len(), prec.ncols())?;
        if tmean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("canonical transformed mean"));
        }
        let (prec, _) = floor_spd(&prec)?;
        Ok(GaussianCanonical { tmean, prec })
    }

    /// The flat message (zero precision, floored).
    pub fn uninformative(dim: usize) -> Self {
        let prec = DMatrix::zeros(dim, dim);
        let (prec, _) = floor_spd(&prec).expect("zero matrix is finite");
        GaussianCanonical {
            tmean: DVector::zeros(dim),
            prec,
        }
    }

    pub fn dim(&self) -> usize {
        self.tmean.len()
    }

    pub fn tmean(&self) -> &DVector<f64> {
        &self.tmean
    }

    pub fn prec(&self) -> &DMatrix<f64> {
        &self.prec
    }

    pub fn to_moment(&self) -> Result<GaussianMoment> {
        let cov = spd_inverse(&self.prec, "to_moment")?;
        let mean = &cov * &self.tmean;
        GaussianMoment::new(mean, cov)
    }
}

/// Gaussian mixture with normalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    components: Vec<(f64, GaussianMoment)>,
}

impl GaussianMixture {
    /// Normalizes the weights; fails on an empty list, mixed dimensions or a
    /// zero total weight.
    pub fn new(components: Vec<(f64, GaussianMoment)>) -> Result<Self> {
        let first = components.first().ok_or(Error::Empty("gaussian mixture"))?;
        let d = first.1.dim();
        let mut total = 0.0;
        for (w, g) in &components {
            check_dim("mixture component", d, g.dim())?;
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::NonFinite("mixture weight"));
            }
            total += w;
        }
        if total <= 0.0 {
            return Err(Error::DegenerateWeights {
                instant: 0,
                stage: "gaussian mixture",
            });
        }
        let components = components
            .into_iter()
            .map(|(w, g)| (w / total, g))
            .collect();
        Ok(GaussianMixture { components })
    }

    pub fn components(&self) -> &[(f64, GaussianMoment)] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].1.dim()
    }
}

/// Weighted point mass `weight · δ(x − location)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDelta {
    pub location: DVector<f64>,
    pub weight: f64,
}

/// Linear-Gaussian factor `N(x₂; A x₁ + g, C₂)` (or, for the reverse rule,
/// `N(x₁; g + A x₂, C₂)`).
#[derive(Debug, Clone, PartialEq)]
pub struct AffineGaussianFactor {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl AffineGaussianFactor {
    pub fn new(matrix: DMatrix<f64>, offset: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        check_dim("affine factor offset", matrix.nrows(), offset.len())?;
        check_dim("affine factor covariance", matrix.nrows(), cov.nrows())?;
        check_dim("affine factor covariance", matrix.nrows(), cov.ncols())?;
        Ok(AffineGaussianFactor {
            matrix,
            offset,
            cov,
        })
    }
}

/// Observation factor `N(c; A x + b, C₂)` viewed as a function of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLikelihood {
    observed: DVector<f64>,
    matrix: DMatrix<f64>,
    offset: DVector<f64>,
    prec: DMatrix<f64>,
}

impl GaussianLikelihood {
    pub fn new(
        observed: DVector<f64>,
        matrix: DMatrix<f64>,
        offset: DVector<f64>,
        cov: &DMatrix<f64>,
    ) -> Result<Self> {
        let (cov, _) = floor_spd(cov)?;
        let prec = spd_inverse(&cov, "likelihood covariance")?;
        Self::with_precision(observed, matrix, offset, prec)
    }

    /// Same as [`GaussianLikelihood::new`] with the noise precision `C₂⁻¹`
    /// supplied directly.
    pub fn with_precision(
        observed: DVector<f64>,
        matrix: DMatrix<f64>,
        offset: DVector<f64>,
        prec: DMatrix<f64>,
    ) -> Result<Self> {
        check_dim("likelihood observation", matrix.nrows(), observed.len())?;
        check_dim("likelihood offset", matrix.nrows(), offset.len())?;
        check_dim("likelihood precision", matrix.nrows(), prec.nrows())?;
        Ok(GaussianLikelihood {
            observed,
            matrix,
            offset,
            prec,
        })
    }

    pub fn observed(&self) -> &DVector<f64> {
        &self.observed
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn prec(&self) -> &DMatrix<f64> {
        &self.prec
    }

    /// Log of the factor at `x` (up to the constant normalizer).
    pub fn log_eval(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim("likelihood argument", self.matrix.ncols(), x.len())?;
        let r = &self.observed - &self.matrix * x - &self.offset;
        Ok(-0.5 * r.dot(&(&self.prec * &r)))
    }
}

/// Equality node fed by a point mass and an arbitrary density:
/// `f(a) δ(x − a)`.
pub fn eq_delta_times_f<F>(d: &WeightedDelta, f: F) -> Result<WeightedDelta>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let v = f(&d.location);
    if !v.is_finite() {
        return Err(Error::NonFinite("density evaluated at point mass"));
    }
    Ok(WeightedDelta {
        location: d.location.clone(),
        weight: d.weight * v,
    })
}

/// Equality node fed by two Gaussians: precisions and transformed means add.
pub fn eq_gauss_product(
    m1: &GaussianCanonical,
    m2: &GaussianCanonical,
) -> Result<GaussianCanonical> {
    check_dim("eq_gauss_product", m1.dim(), m2.dim())?;
    GaussianCanonical::new(&m1.tmean + &m2.tmean, &m1.prec + &m2.prec)
}

/// Equality node fed by a Gaussian and a linear-Gaussian observation
/// `N(c; A x + b, C₂)`: `W = W₁ + Aᵀ W₂ A`, `w = w₁ + Aᵀ W₂ (c − b)`.
pub fn eq_gauss_likelihood(
    m1: &GaussianCanonical,
    lik: &GaussianLikelihood,
) -> Result<GaussianCanonical> {
    check_dim("eq_gauss_likelihood", m1.dim(), lik.matrix.ncols())?;
    let at_w = lik.matrix.transpose() * &lik.prec;
    let resid = &lik.observed - &lik.offset;
    let prec = &m1.prec + &at_w * &lik.matrix;
    let tmean = &m1.tmean + &at_w * resid;
    GaussianCanonical::new(tmean, prec)
}

/// Function node `N(x₂; A x₁ + g, C₂)` fed by a Gaussian in `x₁`:
/// `N(x₂; A η₁ + g, A C₁ Aᵀ + C₂)`.
pub fn fn_affine_marginal(m: &GaussianMoment, f: &AffineGaussianFactor) -> Result<GaussianMoment> {
    check_dim("fn_affine_marginal", f.matrix.ncols(), m.dim())?;
    let mean = &f.matrix * &m.mean + &f.offset;
    let cov = &f.matrix * &m.cov * f.matrix.transpose() + &f.cov;
    GaussianMoment::new(mean, cov)
}

/// Function node `N(x₂; A x₁ + g, C₂)` fed by a point mass at `a`.
pub fn fn_affine_at_point(a: &DVector<f64>, f: &AffineGaussianFactor) -> Result<GaussianMoment> {
    check_dim("fn_affine_at_point", f.matrix.ncols(), a.len())?;
    GaussianMoment::new(&f.matrix * a + &f.offset, f.cov.clone())
}

/// Function node `N(x₁; A x₂, C₂)` fed by a point mass at `x₁ = a`: the
/// output is the likelihood `N(a; A x₂, C₂)` in `x₂`.
pub fn fn_delta_likelihood(
    a: &DVector<f64>,
    matrix: &DMatrix<f64>,
    cov: &DMatrix<f64>,
) -> Result<GaussianLikelihood> {
    GaussianLikelihood::new(
        a.clone(),
        matrix.clone(),
        DVector::zeros(matrix.nrows()),
        cov,
    )
}

/// Integral of the product of two Gaussians in the same variable,
/// `K exp{½[ηᵀWη − η₁ᵀW₁η₁ − η₂ᵀW₂η₂]}` with `K = det(C₁ + C₂)^(−N/2)`.
///
/// The exponent is evaluated as `−½ (η₁ − η₂)ᵀ (C₁ + C₂)⁻¹ (η₁ − η₂)`, which
/// is algebraically identical but does not cancel catastrophically when one
/// of the precisions is large.
pub fn log_gauss_overlap(m1: &GaussianMoment, m2: &GaussianMoment) -> Result<LogWeight> {
    check_dim("fn_gauss_overlap", m1.dim(), m2.dim())?;
    let (sum, _) = floor_spd(&(&m1.cov + &m2.cov))?;
    let d = &m1.mean - &m2.mean;
    let (sol, logdet) = spd_solve_logdet(&sum, &d, "fn_gauss_overlap")?;
    Ok(LogWeight {
        exponent: -0.5 * d.dot(&sol),
        scale: -0.5 * m1.dim() as f64 * logdet,
    })
}

pub fn fn_gauss_overlap(m1: &GaussianMoment, m2: &GaussianMoment) -> Result<f64> {
    Ok(log_gauss_overlap(m1, m2)?.value())
}

/// Function node `N(x₁; g + A x₂, C₂)` fed by `N(x₁; η₁, C₁)`, integrated
/// over `x₁`. With `C₃ = (W₁ + W₂)⁻¹`:
/// `W = Aᵀ W₂ [I − C₃ W₂] A`, `w = Aᵀ W₂ [C₃ W₁ η₁ − (I − C₃ W₂) g]`.
pub fn fn_affine_reverse(
    m1: &GaussianMoment,
    f: &AffineGaussianFactor,
) -> Result<GaussianCanonical> {
    check_dim("fn_affine_reverse", f.matrix.nrows(), m1.dim())?;
    let w1 = spd_inverse(&m1.cov, "fn_affine_reverse upstream covariance")?;
    let (c2, _) = floor_spd(&f.cov)?;
    let w2 = spd_inverse(&c2, "fn_affine_reverse factor covariance")?;
    let (sum, _) = floor_spd(&(&w1 + &w2))?;
    let c3 = spd_inverse(&sum, "fn_affine_reverse W1 + W2")?;
    let n = m1.dim();
    let p = DMatrix::<f64>::identity(n, n) - &c3 * &w2;
    let at_w2 = f.matrix.transpose() * &w2;
    let prec = symmetrize(&(&at_w2 * &p * &f.matrix));
    let tmean = &at_w2 * (&c3 * (&w1 * &m1.mean) - &p * &f.offset);
    GaussianCanonical::new(tmean, prec)
}

/// Collapses a mixture into the single Gaussian with the same mean and
/// covariance.
pub fn gm_condense(mix: &GaussianMixture) -> Result<GaussianMoment> {
    let d = mix.dim();
    let mut mean = DVector::zeros(d);
    for (w, g) in &mix.components {
        mean.axpy(*w, &g.mean, 1.0);
    }
    let mut cov = DMatrix::zeros(d, d);
    for (w, g) in &mix.components {
        let dm = &g.mean - &mean;
        cov += (&g.cov + &dm * dm.transpose()) * *w;
    }
    GaussianMoment::new(mean, cov)
}

/// Normalizes log weights into probabilities via max subtraction.
pub fn normalize_log_weights(logw: &[f64]) -> Option<Vec<f64>> {
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let mut w: Vec<f64> = logw.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = w.iter().sum();
    if !(s.is_finite() && s > 0.0) {
        return None;
    }
    w.iter_mut().for_each(|v| *v /= s);
    Some(w)
}
