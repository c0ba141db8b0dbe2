use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Threading;
use crate::rbss::WeightMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "mpf")]
    Mpf,
    #[serde(rename = "rbss")]
    Rbss,
    #[serde(rename = "rbss+refine")]
    RbssRefine,
    #[serde(rename = "erbss")]
    Erbss,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mpf => "mpf",
            Algorithm::Rbss => "rbss",
            Algorithm::RbssRefine => "rbss+refine",
            Algorithm::Erbss => "erbss",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mpf" => Ok(Algorithm::Mpf),
            "rbss" => Ok(Algorithm::Rbss),
            "rbss+refine" | "rbss-refine" => Ok(Algorithm::RbssRefine),
            "erbss" => Ok(Algorithm::Erbss),
            other => Err(Error::InvalidConfig(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    NParticles,
    SigmaE,
    /// Sets both process noise levels.
    SigmaW,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::NParticles => "n_particles",
            SweepAxis::SigmaE => "sigma_e",
            SweepAxis::SigmaW => "sigma_w",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "n_particles" | "np" => Ok(SweepAxis::NParticles),
            "sigma_e" => Ok(SweepAxis::SigmaE),
            "sigma_w" => Ok(SweepAxis::SigmaW),
            other => Err(Error::InvalidConfig(format!("unknown sweep axis '{other}'"))),
        }
    }
}

/// Experiment settings. Every field has a default, so a JSON file only
/// needs the keys it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizon: usize,
    pub n_particles: usize,
    /// ERBSS trajectory count; `None` means `n_particles`.
    pub n_trajectories: Option<usize>,
    pub sigma_w_lin: f64,
    pub sigma_w_nonlin: f64,
    pub sigma_e: f64,
    pub runs: usize,
    pub seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub weight_mode: WeightMode,
    /// Parallelizes the Monte Carlo runs. Timings are only comparable in
    /// serial mode.
    pub threading: Threading,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            horizon: 200,
            n_particles: 100,
            n_trajectories: None,
            sigma_w_lin: 0.2,
            sigma_w_nonlin: 0.2,
            sigma_e: 0.03,
            runs: 50,
            seed: 1,
            algorithms: vec![Algorithm::Mpf, Algorithm::Rbss],
            weight_mode: WeightMode::Approx,
            threading: Threading::Serial,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn trajectories(&self) -> usize {
        self.n_trajectories.unwrap_or(self.n_particles)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.horizon == 0 {
            return bad("horizon must be positive");
        }
        if self.n_particles == 0 {
            return bad("n_particles must be positive");
        }
        if self.trajectories() == 0 {
            return bad("n_trajectories must be positive");
        }
        if self.runs == 0 {
            return bad("runs must be positive");
        }
        for s in [self.sigma_w_lin, self.sigma_w_nonlin, self.sigma_e] {
            if !(s.is_finite() && s > 0.0) {
                return bad("noise standard deviations must be positive");
            }
        }
        if self.algorithms.is_empty() {
            return bad("at least one algorithm is required");
        }
        Ok(())
    }

    /// Copy with one sweep parameter replaced.
    pub fn with_axis(&self, axis: SweepAxis, value: f64) -> Result<Self> {
        let mut c = self.clone();
        match axis {
            SweepAxis::NParticles => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(Error::InvalidConfig(format!("n_particles must be a positive integer, got {value}")));
                }
                c.n_particles = value as usize;
            }
            SweepAxis::SigmaE => c.sigma_e = value,
            SweepAxis::SigmaW => {
                c.sigma_w_lin = value;
                c.sigma_w_nonlin = value;
            }
        }
        c.validate()?;
        Ok(c)
    }
}
