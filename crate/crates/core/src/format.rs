use std::io::Write;

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::gaussian::GaussianMoment;

/// Formats a float with 9 significant digits (scientific notation), the
/// precision used by every CSV writer in the crate.
pub fn fmt_sig9(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.8e}")
    } else {
        format!("{v}")
    }
}

/// Writes `l, x_nonlin_hat_*, lin_mean_*, lin_var_*` rows with `l` starting
/// at 1.
pub fn write_estimates_csv<W: Write>(w: W, nonlin: &[DVector<f64>], lin: &[GaussianMoment]) -> Result<()> {
    check_dim("estimate count", nonlin.len(), lin.len())?;
    let (first_n, first_l) = match (nonlin.first(), lin.first()) {
        (Some(n), Some(l)) => (n, l),
        _ => return Err(Error::Empty("estimate sequence")),
    };
    let (dn, dl) = (first_n.len(), first_l.dim());
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["l".to_string()];
    header.extend((0..dn).map(|i| format!("x_nonlin_hat_{i}")));
    header.extend((0..dl).map(|i| format!("lin_mean_{i}")));
    header.extend((0..dl).map(|i| format!("lin_var_{i}")));
    out.write_record(&header)?;
    for (t, (x, g)) in nonlin.iter().zip(lin).enumerate() {
        let mut row = vec![(t + 1).to_string()];
        row.extend(x.iter().map(|v| fmt_sig9(*v)));
        row.extend(g.mean().iter().map(|v| fmt_sig9(*v)));
        row.extend(g.cov().diagonal().iter().map(|v| fmt_sig9(*v)));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}
