//! The closed-form message rules on a two-dimensional example.

use nalgebra::{DMatrix, DVector};
use rbsmooth::gaussian::*;

fn show(name: &str, g: &GaussianMoment) {
    println!("{name:<22} mean {:?} cov {:?}", g.mean().as_slice(), g.cov().as_slice());
}

fn main() -> rbsmooth::Result<()> {
    let prior = GaussianMoment::new(
        DVector::from_column_slice(&[0.5, -1.0]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]),
    )?;
    let factor = AffineGaussianFactor::new(
        DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 0.8]),
        DVector::from_column_slice(&[0.2, 0.0]),
        DMatrix::identity(2, 2) * 0.1,
    )?;

    // forward time update
    let pred = fn_affine_marginal(&prior, &factor)?;
    show("prediction", &pred);

    // measurement update with y = [1 0] x + e
    let lik = GaussianLikelihood::new(
        DVector::from_element(1, 0.7),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        DVector::zeros(1),
        &DMatrix::from_element(1, 1, 0.05),
    )?;
    let post = eq_gauss_likelihood(&pred.to_canonical()?, &lik)?.to_moment()?;
    show("posterior", &post);

    // the same factor run backwards: a message about x₁ from a belief on x₂
    let back = fn_affine_reverse(&post, &factor)?.to_moment()?;
    show("reverse message", &back);

    let fused = eq_gauss_product(&prior.to_canonical()?, &back.to_canonical()?)?.to_moment()?;
    show("prior × reverse", &fused);

    let w = log_gauss_overlap(&pred, &post)?;
    println!("overlap                exponent {:.4} scale {:.4}", w.exponent, w.scale);

    let mix = GaussianMixture::new(vec![(0.3, prior.clone()), (0.7, post.clone())])?;
    show("condensed mixture", &gm_condense(&mix)?);
    Ok(())
}
