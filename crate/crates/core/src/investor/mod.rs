//! Belief-augmented mean-variance investors.
//!
//! A portfolio `x` holds USD values of cash, free ETH, DAI and collateralized
//! ETH (cETH). Each investor maximizes
//!
//! ```text
//! xᵀμ − ξ·xᵀΣx − (x_ceth/ρ)·r_s − τ(x)
//!     + b·(x_dai/P)(1 − P) − b·(x_ceth/P)(1 − P)
//! ```
//!
//! over the simplex `{x ≥ 0, Σx = wealth}`, where `P` is the DAI price, `b`
//! the shared belief weight and `τ(x) = fee_rate·‖x − current‖₁/2` the
//! turnover cost. The belief terms are the expected unit profit from DAI
//! reverting to $1: below the peg they reward holding DAI and penalize
//! minting, above it the reverse. With `b = 0` the objective is the plain
//! mean-variance allocation with stability fee and turnover cost.

mod qp;

use nalgebra::{Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exchange::Order;
use crate::market::{AgentId, MarketParams};

pub use qp::{Face, SimplexQp};

/// Relative price slack applied to single reservation orders.
pub const ORDER_SLACK: f64 = 0.05;

/// Smallest DAI value change that produces an order.
pub const MIN_ORDER: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InvestorError {
    #[error("DAI price must be positive, got {0}")]
    NonPositivePrice(f64),
    #[error("wealth must be positive, got {0}")]
    InfeasibleWealth(f64),
    #[error("invalid investor profile field {field}: {reason}")]
    InvalidProfile { field: &'static str, reason: String },
    #[error("portfolio component {field} must be finite and >= 0, got {value}")]
    NegativeHolding { field: &'static str, value: f64 },
}

/// USD value held in each of the four asset buckets.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Portfolio {
    pub usd: f64,
    pub eth: f64,
    pub dai: f64,
    pub ceth: f64,
}

impl Portfolio {
    pub fn new(usd: f64, eth: f64, dai: f64, ceth: f64) -> Result<Self, InvestorError> {
        let p = Self { usd, eth, dai, ceth };
        for (field, value) in [("usd", usd), ("eth", eth), ("dai", dai), ("ceth", ceth)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(InvestorError::NegativeHolding { field, value });
            }
        }
        Ok(p)
    }

    pub fn from_array(x: [f64; 4]) -> Self {
        Self {
            usd: x[0],
            eth: x[1],
            dai: x[2],
            ceth: x[3],
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.usd, self.eth, self.dai, self.ceth]
    }

    pub fn total(&self) -> f64 {
        self.usd + self.eth + self.dai + self.ceth
    }

    pub fn l1_distance(&self, other: &Portfolio) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvestorProfile {
    pub id: AgentId,
    /// Risk weight ξ (one per investor), > 0.
    pub risk_aversion: f64,
    /// Initial wealth in USD.
    pub wealth: f64,
    /// Per-step expected returns of (USD, ETH, DAI, cETH).
    pub expected_returns: [f64; 4],
    /// Per-step return covariance, symmetric PSD.
    pub covariance: [[f64; 4]; 4],
}

impl InvestorProfile {
    pub fn validate(&self) -> Result<(), InvestorError> {
        if !(self.risk_aversion.is_finite() && self.risk_aversion > 0.0) {
            return Err(InvestorError::InvalidProfile {
                field: "risk_aversion",
                reason: format!("must be > 0, got {}", self.risk_aversion),
            });
        }
        if !(self.wealth.is_finite() && self.wealth > 0.0) {
            return Err(InvestorError::InvalidProfile {
                field: "wealth",
                reason: format!("must be > 0, got {}", self.wealth),
            });
        }
        if self.expected_returns.iter().any(|v| !v.is_finite()) {
            return Err(InvestorError::InvalidProfile {
                field: "expected_returns",
                reason: "must be finite".into(),
            });
        }
        let sigma = &self.covariance;
        for i in 0..4 {
            for j in 0..4 {
                if !sigma[i][j].is_finite() {
                    return Err(InvestorError::InvalidProfile {
                        field: "covariance",
                        reason: "must be finite".into(),
                    });
                }
                let tol = 1e-12 * (1.0 + sigma[i][j].abs());
                if (sigma[i][j] - sigma[j][i]).abs() > tol {
                    return Err(InvestorError::InvalidProfile {
                        field: "covariance",
                        reason: format!("not symmetric at ({i}, {j})"),
                    });
                }
            }
        }
        let m = Matrix4::from_fn(|i, j| sigma[i][j]);
        let min_eigen = SymmetricEigen::new(m).eigenvalues.min();
        if min_eigen < -1e-10 {
            return Err(InvestorError::InvalidProfile {
                field: "covariance",
                reason: format!("not positive semidefinite (eigenvalue {min_eigen})"),
            });
        }
        Ok(())
    }
}

/// The belief-augmented objective, specialised to one investor, one price
/// and one starting portfolio.
#[derive(Debug, Clone)]
pub struct Objective {
    problem: SimplexQp,
}

impl Objective {
    pub fn new(
        profile: &InvestorProfile,
        current: &Portfolio,
        p_dai: f64,
        params: &MarketParams,
    ) -> Result<Self, InvestorError> {
        if !(p_dai.is_finite() && p_dai > 0.0) {
            return Err(InvestorError::NonPositivePrice(p_dai));
        }
        let mu = profile.expected_returns;
        let reversion = params.belief_weight * (1.0 - p_dai) / p_dai;
        let linear = [
            mu[0],
            mu[1],
            mu[2] + reversion,
            mu[3] - params.stability_rate / params.collateral_ratio - reversion,
        ];
        let mut quad = profile.covariance;
        for row in quad.iter_mut() {
            for v in row.iter_mut() {
                *v *= profile.risk_aversion;
            }
        }
        Ok(Self {
            problem: SimplexQp {
                linear,
                quad,
                turnover: 0.5 * params.fee_rate,
                anchor: current.to_array(),
                budget: current.total(),
            },
        })
    }

    pub fn value(&self, x: &Portfolio) -> f64 {
        self.problem.value(&x.to_array())
    }

    /// Gradient of [`Objective::value`]; at a turnover kink the zero
    /// subgradient of that coordinate's `|·|` term is used.
    pub fn gradient(&self, x: &Portfolio) -> [f64; 4] {
        let x = x.to_array();
        let p = &self.problem;
        let mut g = [0.0; 4];
        for i in 0..4 {
            let mut hx = 0.0;
            for j in 0..4 {
                hx += (p.quad[i][j] + p.quad[j][i]) * x[j];
            }
            let diff = x[i] - p.anchor[i];
            let kink = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            g[i] = p.linear[i] - hx - p.turnover * kink;
        }
        g
    }

    /// Maximizes over `{x ≥ 0, Σx = wealth}`.
    pub fn maximize(&self, wealth: f64) -> Result<Portfolio, InvestorError> {
        Ok(self.maximize_from(wealth, None)?.0)
    }

    /// [`Objective::maximize`] warm-started from the face of an earlier
    /// solution; returns the face of this one.
    pub fn maximize_from(&self, wealth: f64, hint: Option<Face>) -> Result<(Portfolio, Face), InvestorError> {
        if !(wealth.is_finite() && wealth > 0.0) {
            return Err(InvestorError::InfeasibleWealth(wealth));
        }
        let mut problem = self.problem.clone();
        problem.budget = wealth;
        let (x, face) = problem.solve_from(hint);
        Ok((Portfolio::from_array(x), face))
    }
}

pub fn objective(
    x: &Portfolio,
    profile: &InvestorProfile,
    current: &Portfolio,
    p_dai: f64,
    params: &MarketParams,
) -> Result<f64, InvestorError> {
    Ok(Objective::new(profile, current, p_dai, params)?.value(x))
}

pub fn objective_gradient(
    x: &Portfolio,
    profile: &InvestorProfile,
    current: &Portfolio,
    p_dai: f64,
    params: &MarketParams,
) -> Result<[f64; 4], InvestorError> {
    Ok(Objective::new(profile, current, p_dai, params)?.gradient(x))
}

/// Best reallocation of the current portfolio's total value.
pub fn optimize(
    profile: &InvestorProfile,
    current: &Portfolio,
    p_dai: f64,
    params: &MarketParams,
) -> Result<Portfolio, InvestorError> {
    let wealth = current.total();
    if !(wealth.is_finite() && wealth > 0.0) {
        return Err(InvestorError::InfeasibleWealth(wealth));
    }
    Objective::new(profile, current, p_dai, params)?.maximize(wealth)
}

/// Single reservation order moving DAI holdings from `current` to `target`.
pub fn make_order(agent: AgentId, current: &Portfolio, target: &Portfolio, p_dai: f64) -> Option<Order> {
    let delta = target.dai - current.dai;
    if delta.abs() < MIN_ORDER || !(p_dai > 0.0) {
        return None;
    }
    let units = delta.abs() / p_dai;
    Some(if delta > 0.0 {
        Order::buy(agent, units, p_dai * (1.0 + ORDER_SLACK))
    } else {
        Order::sell(agent, units, p_dai * (1.0 - ORDER_SLACK))
    })
}

/// Keeper rule: sell inventory above the band, buy below it.
///
/// Limits sit at the $1 target, so a keeper never trades on the wrong side
/// of the peg.
pub fn keeper_order(
    agent: AgentId,
    p_dai: f64,
    inventory_dai: f64,
    budget_usd: f64,
    band: f64,
) -> Option<Order> {
    if !(p_dai > 0.0 && band > 0.0) {
        return None;
    }
    if p_dai > 1.0 + band {
        let units = inventory_dai.min(budget_usd / p_dai);
        (units > MIN_ORDER).then(|| Order::sell(agent, units, 1.0))
    } else if p_dai < 1.0 - band {
        let units = budget_usd / p_dai;
        (units > MIN_ORDER).then(|| Order::buy(agent, units, 1.0))
    } else {
        None
    }
}
