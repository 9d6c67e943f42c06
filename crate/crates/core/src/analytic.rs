//! Closed-form DAI supply/demand equilibrium.
//!
//! Supply grows with both prices and is discounted by the stability rate:
//! `S = k·P_eth/(1+γ)·P_dai`. Demand falls linearly in the DAI price, is
//! steepened by the belief weight `b` around the $1 pivot and lifted by the
//! ETH price: `D = −(m + b − α·P_eth)·P_dai + (b + c)`. Equating both gives
//!
//! ```text
//! P_dai = (b + c) / (b + m + P_eth·(k/(1+γ) − α))
//! ```
//!
//! which tends to 1 as `b` grows and is independent of `P_eth` when
//! `k/(1+γ) = α`.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("ETH price must be positive, got {0}")]
    NonPositiveEthPrice(f64),
    #[error("DAI price must be >= 0, got {0}")]
    NegativeDaiPrice(f64),
    #[error("equilibrium denominator {denominator} is not positive at p_eth = {p_eth}")]
    DegenerateDenominator { denominator: f64, p_eth: f64 },
    #[error("invalid parameter {field}: {reason}")]
    InvalidParams { field: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticalParams {
    /// Supply proportionality constant, > 0.
    pub k: f64,
    /// Stability rate, >= 0.
    pub gamma: f64,
    /// Demand slope, > 0.
    pub m: f64,
    /// Demand intercept, > 0.
    pub c: f64,
    /// Belief weight, >= 0.
    pub b: f64,
    /// Demand sensitivity to the ETH price, >= 0.
    pub alpha: f64,
}

impl AnalyticalParams {
    /// Validates signs and checks the price denominator stays positive over
    /// the whole ETH price range `[p_eth_min, p_eth_max]`.
    pub fn new(
        k: f64,
        gamma: f64,
        m: f64,
        c: f64,
        b: f64,
        alpha: f64,
        p_eth_range: (f64, f64),
    ) -> Result<Self, AnalyticError> {
        let params = Self {
            k,
            gamma,
            m,
            c,
            b,
            alpha,
        };
        params.check_signs()?;
        params.check_range(p_eth_range)?;
        Ok(params)
    }

    fn check_signs(&self) -> Result<(), AnalyticError> {
        let positive = [("k", self.k), ("m", self.m), ("c", self.c)];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(AnalyticError::InvalidParams {
                    field,
                    reason: format!("must be > 0, got {value}"),
                });
            }
        }
        let non_negative = [("gamma", self.gamma), ("b", self.b), ("alpha", self.alpha)];
        for (field, value) in non_negative {
            if !(value.is_finite() && value >= 0.0) {
                return Err(AnalyticError::InvalidParams {
                    field,
                    reason: format!("must be >= 0, got {value}"),
                });
            }
        }
        Ok(())
    }

    /// The denominator is affine in `p_eth`, so positivity at both ends of
    /// the range covers the interior.
    pub fn check_range(&self, (lo, hi): (f64, f64)) -> Result<(), AnalyticError> {
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi >= lo) {
            return Err(AnalyticError::InvalidParams {
                field: "p_eth_range",
                reason: format!("expected 0 < min <= max, got ({lo}, {hi})"),
            });
        }
        for p in [lo, hi] {
            let d = self.denominator(p);
            if !(d > 0.0) {
                return Err(AnalyticError::DegenerateDenominator {
                    denominator: d,
                    p_eth: p,
                });
            }
        }
        Ok(())
    }

    pub fn with_belief(&self, b: f64) -> Self {
        Self { b, ..*self }
    }

    /// Net ETH loading `k/(1+γ) − α`: supply coupling minus demand coupling.
    pub fn eth_loading(&self) -> f64 {
        self.k / (1.0 + self.gamma) - self.alpha
    }

    fn denominator(&self, p_eth: f64) -> f64 {
        self.b + self.m + p_eth * self.eth_loading()
    }

    /// True when demand slopes downward in the DAI price at `p_eth`.
    pub fn demand_decreasing(&self, p_eth: f64) -> bool {
        self.m + self.b > self.alpha * p_eth
    }
}

fn check_eth(p_eth: f64) -> Result<(), AnalyticError> {
    if p_eth.is_finite() && p_eth > 0.0 {
        Ok(())
    } else {
        Err(AnalyticError::NonPositiveEthPrice(p_eth))
    }
}

fn check_dai(p_dai: f64) -> Result<(), AnalyticError> {
    if p_dai.is_finite() && p_dai >= 0.0 {
        Ok(())
    } else {
        Err(AnalyticError::NegativeDaiPrice(p_dai))
    }
}

pub fn supply(params: &AnalyticalParams, p_eth: f64, p_dai: f64) -> Result<f64, AnalyticError> {
    check_eth(p_eth)?;
    check_dai(p_dai)?;
    Ok(params.k * (p_eth / (1.0 + params.gamma)) * p_dai)
}

/// Can be negative; the linear model is not truncated at zero.
pub fn demand(params: &AnalyticalParams, p_eth: f64, p_dai: f64) -> Result<f64, AnalyticError> {
    check_eth(p_eth)?;
    check_dai(p_dai)?;
    Ok(-(params.m + params.b - params.alpha * p_eth) * p_dai + (params.b + params.c))
}

pub fn equilibrium_price(params: &AnalyticalParams, p_eth: f64) -> Result<f64, AnalyticError> {
    check_eth(p_eth)?;
    let denominator = params.denominator(p_eth);
    if !(denominator > 0.0) {
        return Err(AnalyticError::DegenerateDenominator { denominator, p_eth });
    }
    Ok((params.b + params.c) / denominator)
}

/// `∂P_dai/∂P_eth`; exactly zero when supply and demand ETH couplings cancel.
pub fn eth_sensitivity(params: &AnalyticalParams, p_eth: f64) -> Result<f64, AnalyticError> {
    check_eth(p_eth)?;
    let denominator = params.denominator(p_eth);
    if !(denominator > 0.0) {
        return Err(AnalyticError::DegenerateDenominator { denominator, p_eth });
    }
    let loading = params.eth_loading();
    if loading == 0.0 {
        return Ok(0.0);
    }
    Ok(-(params.b + params.c) * loading / (denominator * denominator))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub b: f64,
    pub p_eth: f64,
    pub price: f64,
    pub sensitivity: f64,
    /// Demand at the equilibrium price is negative.
    pub negative_demand: bool,
    /// Demand is non-decreasing in the DAI price (α·P_eth ≥ m + b).
    pub upward_demand: bool,
}

fn point(params: &AnalyticalParams, p_eth: f64) -> Result<SweepPoint, AnalyticError> {
    let price = equilibrium_price(params, p_eth)?;
    Ok(SweepPoint {
        b: params.b,
        p_eth,
        price,
        sensitivity: eth_sensitivity(params, p_eth)?,
        negative_demand: demand(params, p_eth, price)? < 0.0,
        upward_demand: !params.demand_decreasing(p_eth),
    })
}

/// Equilibrium price for each belief weight, other parameters fixed.
pub fn belief_sweep(
    params: &AnalyticalParams,
    p_eth: f64,
    b_values: &[f64],
) -> Result<Vec<SweepPoint>, AnalyticError> {
    b_values
        .iter()
        .map(|&b| {
            if !(b.is_finite() && b >= 0.0) {
                return Err(AnalyticError::InvalidParams {
                    field: "b",
                    reason: format!("must be >= 0, got {b}"),
                });
            }
            point(&params.with_belief(b), p_eth)
        })
        .collect()
}

/// Equilibrium price along a range of ETH prices.
pub fn eth_sweep(params: &AnalyticalParams, p_eth_values: &[f64]) -> Result<Vec<SweepPoint>, AnalyticError> {
    p_eth_values.iter().map(|&p| point(params, p)).collect()
}
