//! Trajectory simulation and CSV import/export.
//!
//! CSV layout (header row, one row per instant):
//! `l, x_lin_0 .. x_lin_{D_L-1}, x_nonlin_0 .. x_nonlin_{D_N-1}, y_0 .. y_{P-1}`
//! with `l` starting at 1.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::format::fmt_sig9;
use crate::linalg::psd_sqrt;
use crate::model::ClgModel;
use crate::rng::{substream, tag};

/// A simulated state/measurement sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states_lin: Vec<DVector<f64>>,
    pub states_nonlin: Vec<DVector<f64>>,
    pub measurements: Vec<DVector<f64>>,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let d_lin = self.states_lin.first().map_or(0, |v| v.len());
        let d_nonlin = self.states_nonlin.first().map_or(0, |v| v.len());
        let d_obs = self.measurements.first().map_or(0, |v| v.len());
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["l".to_string()];
        header.extend((0..d_lin).map(|i| format!("x_lin_{i}")));
        header.extend((0..d_nonlin).map(|i| format!("x_nonlin_{i}")));
        header.extend((0..d_obs).map(|i| format!("y_{i}")));
        out.write_record(&header)?;
        for t in 0..self.len() {
            let mut row = vec![(t + 1).to_string()];
            row.extend(self.states_lin[t].iter().map(|v| fmt_sig9(*v)));
            row.extend(self.states_nonlin[t].iter().map(|v| fmt_sig9(*v)));
            row.extend(self.measurements[t].iter().map(|v| fmt_sig9(*v)));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a trajectory written by [`Trajectory::write_csv`]. Dimensions
    /// are inferred from the header; the seed is not stored and reads as 0.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let count = |prefix: &str| header.iter().filter(|h| h.starts_with(prefix)).count();
        let (d_lin, d_nonlin, d_obs) = (count("x_lin_"), count("x_nonlin_"), count("y_"));
        if header.get(0) != Some("l") || 1 + d_lin + d_nonlin + d_obs != header.len() || d_obs == 0 {
            return Err(Error::InvalidConfig(format!(
                "unrecognized trajectory header: {:?}",
                header.iter().collect::<Vec<_>>()
            )));
        }
        let mut traj = Trajectory {
            states_lin: vec![],
            states_nonlin: vec![],
            measurements: vec![],
            seed: 0,
        };
        for rec in rdr.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .skip(1)
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidConfig(format!("bad number in trajectory csv: {e}")))?;
            traj.states_lin.push(DVector::from_column_slice(&vals[..d_lin]));
            traj.states_nonlin
                .push(DVector::from_column_slice(&vals[d_lin..d_lin + d_nonlin]));
            traj.measurements
                .push(DVector::from_column_slice(&vals[d_lin + d_nonlin..]));
        }
        Ok(traj)
    }
}

fn draw(rng: &mut impl Rng, mean: &DVector<f64>, sqrt: &DMatrix<f64>) -> DVector<f64> {
    let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    mean + sqrt * z
}

/// Draws a Gaussian sample; singular covariances are allowed.
pub fn sample_gaussian(rng: &mut impl Rng, mean: &DVector<f64>, cov: &DMatrix<f64>) -> DVector<f64> {
    draw(rng, mean, &psd_sqrt(cov))
}

/// Simulates `horizon` steps of the model. Reproducible from `seed`.
pub fn simulate(model: &ClgModel, horizon: usize, seed: u64) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::InvalidConfig("horizon must be at least 1".into()));
    }
    let mut rng = substream(seed, &[tag::SIMULATE]);
    let sq_lin = psd_sqrt(model.cov_w_lin());
    let sq_nonlin = psd_sqrt(model.cov_w_nonlin());
    let sq_e = psd_sqrt(model.cov_e());
    let zero = |d| DVector::zeros(d);

    let mut x_lin = sample_gaussian(&mut rng, model.prior_lin().mean(), model.prior_lin().cov());
    let mut x_nonlin = sample_gaussian(&mut rng, model.prior_nonlin().mean(), model.prior_nonlin().cov());
    let mut traj = Trajectory {
        states_lin: Vec::with_capacity(horizon),
        states_nonlin: Vec::with_capacity(horizon),
        measurements: Vec::with_capacity(horizon),
        seed,
    };
    for t in 0..horizon {
        let p = model.params_checked(t, &x_nonlin)?;
        let y = &p.h_obs + &p.b_obs * &x_lin + draw(&mut rng, &zero(model.d_obs()), &sq_e);
        let next_lin = &p.a_lin * &x_lin + &p.f_lin + draw(&mut rng, &zero(model.d_lin()), &sq_lin);
        let next_nonlin =
            &p.f_nonlin + &p.a_nonlin * &x_lin + draw(&mut rng, &zero(model.d_nonlin()), &sq_nonlin);
        if y.iter().chain(next_lin.iter()).chain(next_nonlin.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("simulated trajectory"));
        }
        traj.states_lin.push(x_lin);
        traj.states_nonlin.push(x_nonlin);
        traj.measurements.push(y);
        x_lin = next_lin;
        x_nonlin = next_nonlin;
    }
    Ok(traj)
}
