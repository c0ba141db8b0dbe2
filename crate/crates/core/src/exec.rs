use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// How per-particle and per-trajectory maps are evaluated. Both settings give
/// bit-identical results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Threading {
    #[default]
    Serial,
    Parallel,
}

pub(crate) fn try_map<T, F>(n: usize, threading: Threading, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    match threading {
        Threading::Serial => (0..n).map(f).collect(),
        Threading::Parallel => (0..n).into_par_iter().map(f).collect(),
    }
}
