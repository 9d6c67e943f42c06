//! Paired-run experiments: belief sweeps and debt-ceiling comparisons.

use serde::Serialize;
use thiserror::Error;

use super::config::ScenarioConfig;
use super::engine::{run, SimError, SimResult};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("a belief sweep needs at least 2 values of b, got {0}")]
    TooFewBeliefValues(usize),
    #[error("belief weight must be finite and >= 0, got {0}")]
    InvalidBelief(f64),
    #[error("debt ceiling must be finite and >= 0, got {0}")]
    InvalidCeiling(f64),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeliefRow {
    pub b: f64,
    pub mean_p_dai: f64,
    pub mean_abs_dev: f64,
    pub pearson: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeliefTable {
    pub rows: Vec<BeliefRow>,
    #[serde(skip)]
    pub results: Vec<SimResult>,
    /// Mean |p_dai − 1| is weakly decreasing in b.
    pub deviation_monotone: bool,
    /// pearson(p_dai, p_eth) is weakly decreasing in b (a constant price
    /// counts as zero correlation).
    pub pearson_monotone: bool,
}

/// Runs independent scenarios on scoped threads and returns results in
/// input order.
pub fn run_all(configs: &[ScenarioConfig]) -> Result<Vec<SimResult>, SimError> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs.iter().map(|c| scope.spawn(move || run(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    })
}

fn weakly_decreasing(mut pairs: Vec<(f64, f64)>) -> bool {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.windows(2).all(|w| w[1].1 <= w[0].1)
}

/// Same scenario and seed at each belief weight.
pub fn belief_experiment(base: &ScenarioConfig, b_values: &[f64]) -> Result<BeliefTable, ExperimentError> {
    if b_values.len() < 2 {
        return Err(ExperimentError::TooFewBeliefValues(b_values.len()));
    }
    if let Some(&b) = b_values.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
        return Err(ExperimentError::InvalidBelief(b));
    }
    let configs: Vec<ScenarioConfig> = b_values.iter().map(|&b| base.with_belief(b)).collect();
    let results = run_all(&configs)?;
    let rows: Vec<BeliefRow> = b_values
        .iter()
        .zip(&results)
        .map(|(&b, r)| BeliefRow {
            b,
            mean_p_dai: r.summary.mean_p_dai,
            mean_abs_dev: r.summary.mean_abs_dev,
            pearson: r.summary.pearson,
        })
        .collect();
    let deviation_monotone = weakly_decreasing(rows.iter().map(|r| (r.b, r.mean_abs_dev)).collect());
    let pearson_monotone = weakly_decreasing(rows.iter().map(|r| (r.b, r.pearson.unwrap_or(0.0))).collect());
    if !(deviation_monotone && pearson_monotone) {
        log::warn!("belief sweep is not monotone (deviation {deviation_monotone}, pearson {pearson_monotone})");
    }
    Ok(BeliefTable {
        rows,
        results,
        deviation_monotone,
        pearson_monotone,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CeilingComparison {
    pub ceiling: f64,
    #[serde(skip)]
    pub baseline: SimResult,
    #[serde(skip)]
    pub capped: SimResult,
    pub mean_p_dai_baseline: f64,
    pub mean_p_dai_ceiling: f64,
    pub rejected_mints: u64,
    /// At least one mint was cut short by the ceiling.
    pub binding: bool,
    /// Mean DAI price under the ceiling is at least the baseline mean.
    pub raises_price: bool,
}

/// Unlimited minting against a fixed ceiling, same seed.
pub fn debt_ceiling_experiment(base: &ScenarioConfig, ceiling: f64) -> Result<CeilingComparison, ExperimentError> {
    if !(ceiling.is_finite() && ceiling >= 0.0) {
        return Err(ExperimentError::InvalidCeiling(ceiling));
    }
    let configs = [base.with_ceiling(None), base.with_ceiling(Some(ceiling))];
    let mut results = run_all(&configs)?;
    let capped = results.pop().expect("two runs");
    let baseline = results.pop().expect("two runs");
    let binding = capped.rejected_mints > 0;
    if !binding {
        log::warn!("debt ceiling {ceiling} never bound; no mint was rejected");
    }
    let (mean_base, mean_cap) = (baseline.summary.mean_p_dai, capped.summary.mean_p_dai);
    Ok(CeilingComparison {
        ceiling,
        mean_p_dai_baseline: mean_base,
        mean_p_dai_ceiling: mean_cap,
        rejected_mints: capped.rejected_mints,
        binding,
        raises_price: mean_cap >= mean_base,
        baseline,
        capped,
    })
}
