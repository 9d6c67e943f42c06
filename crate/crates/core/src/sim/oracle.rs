//! Exogenous ETH price paths.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use super::config::{OracleConfig, WalkConfig};
use crate::analysis::{self, AnalysisError};

/// RNG stream reserved for the price path.
pub const ORACLE_STREAM: u64 = 0;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("price file {path}: {source}")]
    Load {
        path: PathBuf,
        source: AnalysisError,
    },
    #[error("price file has {available} rows, scenario needs {needed}")]
    TooShort { available: usize, needed: usize },
}

/// One price per step; `path[0]` is the walk's start price.
pub fn random_walk(walk: &WalkConfig, steps: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ORACLE_STREAM);
    let sigma = walk.volatility;
    let drift = walk.drift - 0.5 * sigma * sigma;
    let mut path = Vec::with_capacity(steps);
    let mut p = walk.start;
    for _ in 0..steps {
        path.push(p);
        let z: f64 = StandardNormal.sample(&mut rng);
        p *= (drift + sigma * z).exp();
    }
    path
}

pub fn price_path(config: &OracleConfig, steps: usize, seed: u64) -> Result<Vec<f64>, OracleError> {
    if let Some(walk) = &config.walk {
        return Ok(random_walk(walk, steps, seed));
    }
    let csv = config.csv.as_ref().expect("validated oracle source");
    let series = analysis::load_series(&csv.path).map_err(|source| OracleError::Load {
        path: csv.path.clone(),
        source,
    })?;
    if series.len() < steps {
        return Err(OracleError::TooShort {
            available: series.len(),
            needed: steps,
        });
    }
    Ok(series.eth().into_iter().take(steps).collect())
}

/// Price the ledger sees at `step` given a reporting delay.
pub fn lagged(path: &[f64], step: usize, lag: usize) -> f64 {
    path[step.saturating_sub(lag)]
}
