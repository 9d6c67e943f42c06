//! Stablecoin ledger for a single ETH collateral type.
//!
//! The [`Ledger`] owns every collateralized debt position (CDP), enforces the
//! minting rules (collateral ratio, debt ceiling), accrues stability fees,
//! liquidates unsafe positions and settles an emergency shutdown.
//!
//! Amounts are `f64`: ETH in units, DAI in units, prices in USD.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier shared by investors, keepers and CDP owners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CdpId(pub u64);

impl fmt::Display for CdpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cdp#{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("collateral worth {collateral_usd} USD cannot back {debt} DAI at ratio {ratio}")]
    UnderCollateralized {
        collateral_usd: f64,
        debt: f64,
        ratio: f64,
    },
    #[error("debt ceiling {ceiling} reached: {minted} minted, {requested} requested")]
    DebtCeilingReached {
        ceiling: f64,
        minted: f64,
        requested: f64,
    },
    #[error("emergency shutdown is active")]
    ShutdownActive,
    #[error("{0} not found")]
    CdpNotFound(CdpId),
    #[error("invalid amount for {field}: {value}")]
    InvalidAmount { field: &'static str, value: f64 },
    #[error("invalid market parameter {field}: {reason}")]
    InvalidParams { field: &'static str, reason: String },
}

/// System-wide constants of the stablecoin market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketParams {
    /// Per-step fractional stability fee on outstanding debt.
    pub stability_rate: f64,
    /// Fraction of notional charged on every trade.
    pub fee_rate: f64,
    /// Weight of the shared belief that one DAI is worth one USD.
    pub belief_weight: f64,
    /// Minimum collateral value / debt at mint time.
    pub collateral_ratio: f64,
    /// Positions strictly below this ratio are liquidated.
    pub liquidation_ratio: f64,
    /// Cap on total outstanding DAI; `None` means unlimited.
    pub debt_ceiling: Option<f64>,
}

impl Default for MarketParams {
    fn default() -> Self {
        Self {
            stability_rate: 0.0,
            fee_rate: 0.0,
            belief_weight: 0.0,
            collateral_ratio: 1.5,
            liquidation_ratio: 1.5,
            debt_ceiling: None,
        }
    }
}

impl MarketParams {
    pub fn validate(&self) -> Result<(), MarketError> {
        let non_negative = [
            ("stability_rate", self.stability_rate),
            ("fee_rate", self.fee_rate),
            ("belief_weight", self.belief_weight),
        ];
        for (field, value) in non_negative {
            if !(value.is_finite() && value >= 0.0) {
                return Err(MarketError::InvalidParams {
                    field,
                    reason: format!("must be finite and >= 0, got {value}"),
                });
            }
        }
        if !(self.collateral_ratio.is_finite() && self.collateral_ratio > 1.0) {
            return Err(MarketError::InvalidParams {
                field: "collateral_ratio",
                reason: format!("must be > 1, got {}", self.collateral_ratio),
            });
        }
        if !(self.liquidation_ratio > 1.0 && self.liquidation_ratio <= self.collateral_ratio) {
            return Err(MarketError::InvalidParams {
                field: "liquidation_ratio",
                reason: format!(
                    "must satisfy 1 < liquidation_ratio <= collateral_ratio ({}), got {}",
                    self.collateral_ratio, self.liquidation_ratio
                ),
            });
        }
        if let Some(ceiling) = self.debt_ceiling {
            if !(ceiling.is_finite() && ceiling >= 0.0) {
                return Err(MarketError::InvalidParams {
                    field: "debt_ceiling",
                    reason: format!("must be finite and >= 0, got {ceiling}"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cdp {
    pub id: CdpId,
    pub owner: AgentId,
    pub collateral_eth: f64,
    pub debt_dai: f64,
    pub opened_at_step: u64,
    pub accrued_fee_dai: f64,
}

impl Cdp {
    /// Collateral value over debt; infinite for a debt-free position.
    pub fn collateral_ratio(&self, p_eth: f64) -> f64 {
        if self.debt_dai <= 0.0 {
            f64::INFINITY
        } else {
            self.collateral_eth * p_eth / self.debt_dai
        }
    }

    fn is_unsafe(&self, p_eth: f64, liquidation_ratio: f64) -> bool {
        self.debt_dai > 0.0 && self.collateral_eth * p_eth < liquidation_ratio * self.debt_dai
    }
}

/// One step of simple (non-compounding) stability fee accrual.
pub fn accrue_stability_fee(cdp: &Cdp, params: &MarketParams) -> Cdp {
    let mut next = cdp.clone();
    next.accrued_fee_dai += params.stability_rate * cdp.debt_dai;
    next
}

/// What the owner gets back and owes when a CDP is closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Closure {
    pub collateral_returned: f64,
    pub debt_repaid: f64,
    pub fee_paid: f64,
}

impl Closure {
    pub fn dai_due(&self) -> f64 {
        self.debt_repaid + self.fee_paid
    }
}

/// Result of a partial repayment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Repayment {
    pub debt_repaid: f64,
    pub fee_paid: f64,
    pub collateral_released: f64,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiquidationEvent {
    pub cdp: CdpId,
    pub owner: AgentId,
    /// ETH taken and sold at the oracle price to cover the debt.
    pub collateral_seized: f64,
    /// ETH handed back to the owner.
    pub surplus_returned: f64,
    pub debt_cleared: f64,
    /// Unpaid stability fee written off with the position.
    pub fee_forfeited: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShutdownReport {
    pub p_eth: f64,
    /// DAI outstanding when the shutdown was triggered.
    pub dai_outstanding: f64,
    /// ETH set aside for DAI holders.
    pub reserved_eth: f64,
    /// ETH paid per DAI unit; `1/p_eth` unless collateral falls short.
    pub eth_per_dai: f64,
    pub holder_payouts: Vec<(AgentId, f64)>,
    pub owner_payouts: Vec<(CdpId, AgentId, f64)>,
}

/// All CDPs plus the global supply counters.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Ledger {
    cdps: BTreeMap<CdpId, Cdp>,
    next_id: u64,
    total_dai_minted: f64,
    step: u64,
    shutdown: bool,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn total_dai_minted(&self) -> f64 {
        self.total_dai_minted
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn is_shutdown(&self) -> bool {
        self.shutdown
    }

    pub fn cdp(&self, id: CdpId) -> Option<&Cdp> {
        self.cdps.get(&id)
    }

    pub fn cdps(&self) -> impl Iterator<Item = &Cdp> {
        self.cdps.values()
    }

    pub fn len(&self) -> usize {
        self.cdps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cdps.is_empty()
    }

    /// First open CDP owned by `owner`, if any.
    pub fn cdp_of(&self, owner: AgentId) -> Option<&Cdp> {
        self.cdps.values().find(|c| c.owner == owner)
    }

    /// Headroom under the debt ceiling (infinite when unlimited).
    pub fn headroom(&self, params: &MarketParams) -> f64 {
        match params.debt_ceiling {
            Some(ceiling) => (ceiling - self.total_dai_minted).max(0.0),
            None => f64::INFINITY,
        }
    }

    fn refresh_total(&mut self) {
        self.total_dai_minted = self.cdps.values().map(|c| c.debt_dai).sum();
    }

    fn check_ceiling(&self, requested: f64, params: &MarketParams) -> Result<(), MarketError> {
        if let Some(ceiling) = params.debt_ceiling {
            if self.total_dai_minted + requested > ceiling {
                return Err(MarketError::DebtCeilingReached {
                    ceiling,
                    minted: self.total_dai_minted,
                    requested,
                });
            }
        }
        Ok(())
    }

    fn live(&self) -> Result<(), MarketError> {
        if self.shutdown {
            Err(MarketError::ShutdownActive)
        } else {
            Ok(())
        }
    }

    pub fn open_cdp(
        &mut self,
        owner: AgentId,
        collateral_eth: f64,
        dai_requested: f64,
        p_eth: f64,
        params: &MarketParams,
    ) -> Result<Cdp, MarketError> {
        self.live()?;
        if !(collateral_eth.is_finite() && collateral_eth > 0.0) {
            return Err(MarketError::InvalidAmount {
                field: "collateral_eth",
                value: collateral_eth,
            });
        }
        if !(dai_requested.is_finite() && dai_requested >= 0.0) {
            return Err(MarketError::InvalidAmount {
                field: "dai_requested",
                value: dai_requested,
            });
        }
        positive_price(p_eth)?;
        let collateral_usd = collateral_eth * p_eth;
        if collateral_usd < params.collateral_ratio * dai_requested {
            return Err(MarketError::UnderCollateralized {
                collateral_usd,
                debt: dai_requested,
                ratio: params.collateral_ratio,
            });
        }
        self.check_ceiling(dai_requested, params)?;

        let id = CdpId(self.next_id);
        self.next_id += 1;
        let cdp = Cdp {
            id,
            owner,
            collateral_eth,
            debt_dai: dai_requested,
            opened_at_step: self.step,
            accrued_fee_dai: 0.0,
        };
        self.cdps.insert(id, cdp.clone());
        self.refresh_total();
        Ok(cdp)
    }

    /// Locks extra collateral and mints extra DAI on an existing position.
    /// The resulting position must satisfy the collateral ratio.
    pub fn draw(
        &mut self,
        id: CdpId,
        extra_collateral_eth: f64,
        extra_dai: f64,
        p_eth: f64,
        params: &MarketParams,
    ) -> Result<&Cdp, MarketError> {
        self.live()?;
        positive_price(p_eth)?;
        if !(extra_collateral_eth.is_finite() && extra_collateral_eth >= 0.0) {
            return Err(MarketError::InvalidAmount {
                field: "extra_collateral_eth",
                value: extra_collateral_eth,
            });
        }
        if !(extra_dai.is_finite() && extra_dai >= 0.0) {
            return Err(MarketError::InvalidAmount {
                field: "extra_dai",
                value: extra_dai,
            });
        }
        let cdp = self.cdps.get(&id).ok_or(MarketError::CdpNotFound(id))?;
        let collateral = cdp.collateral_eth + extra_collateral_eth;
        let debt = cdp.debt_dai + extra_dai;
        if extra_dai > 0.0 {
            if collateral * p_eth < params.collateral_ratio * debt {
                return Err(MarketError::UnderCollateralized {
                    collateral_usd: collateral * p_eth,
                    debt,
                    ratio: params.collateral_ratio,
                });
            }
            self.check_ceiling(extra_dai, params)?;
        }
        let cdp = self.cdps.get_mut(&id).expect("checked above");
        cdp.collateral_eth = collateral;
        cdp.debt_dai = debt;
        self.refresh_total();
        Ok(&self.cdps[&id])
    }

    /// Withdraws collateral while keeping the position at or above the
    /// collateral ratio.
    pub fn free_collateral(
        &mut self,
        id: CdpId,
        eth: f64,
        p_eth: f64,
        params: &MarketParams,
    ) -> Result<f64, MarketError> {
        self.live()?;
        positive_price(p_eth)?;
        let cdp = self.cdps.get_mut(&id).ok_or(MarketError::CdpNotFound(id))?;
        if !(eth.is_finite() && eth >= 0.0 && eth <= cdp.collateral_eth) {
            return Err(MarketError::InvalidAmount {
                field: "eth",
                value: eth,
            });
        }
        let remaining = cdp.collateral_eth - eth;
        if remaining * p_eth < params.collateral_ratio * cdp.debt_dai {
            return Err(MarketError::UnderCollateralized {
                collateral_usd: remaining * p_eth,
                debt: cdp.debt_dai,
                ratio: params.collateral_ratio,
            });
        }
        cdp.collateral_eth = remaining;
        Ok(eth)
    }

    /// Repays `dai` of debt together with the matching share of accrued fee,
    /// releasing the same fraction of collateral. Repaying the whole debt
    /// closes the position.
    pub fn repay(&mut self, id: CdpId, dai: f64) -> Result<Repayment, MarketError> {
        self.live()?;
        let cdp = self.cdps.get(&id).ok_or(MarketError::CdpNotFound(id))?;
        if !(dai.is_finite() && dai >= 0.0) {
            return Err(MarketError::InvalidAmount {
                field: "dai",
                value: dai,
            });
        }
        if dai >= cdp.debt_dai {
            let closure = self.close_cdp(id)?;
            return Ok(Repayment {
                debt_repaid: closure.debt_repaid,
                fee_paid: closure.fee_paid,
                collateral_released: closure.collateral_returned,
                closed: true,
            });
        }
        let cdp = self.cdps.get_mut(&id).expect("checked above");
        let fraction = dai / cdp.debt_dai;
        let fee_paid = cdp.accrued_fee_dai * fraction;
        let collateral_released = cdp.collateral_eth * fraction;
        cdp.debt_dai -= dai;
        cdp.accrued_fee_dai -= fee_paid;
        cdp.collateral_eth -= collateral_released;
        self.refresh_total();
        Ok(Repayment {
            debt_repaid: dai,
            fee_paid,
            collateral_released,
            closed: false,
        })
    }

    /// Accrues one step of stability fee on every open position.
    pub fn accrue_stability_fees(&mut self, params: &MarketParams) {
        if self.shutdown {
            return;
        }
        for cdp in self.cdps.values_mut() {
            *cdp = accrue_stability_fee(cdp, params);
        }
    }

    /// Removes the position. The caller is responsible for collecting
    /// `debt + fee` DAI from the owner.
    pub fn close_cdp(&mut self, id: CdpId) -> Result<Closure, MarketError> {
        self.live()?;
        let cdp = self.cdps.remove(&id).ok_or(MarketError::CdpNotFound(id))?;
        self.refresh_total();
        Ok(Closure {
            collateral_returned: cdp.collateral_eth,
            debt_repaid: cdp.debt_dai,
            fee_paid: cdp.accrued_fee_dai,
        })
    }

    /// Liquidates every position strictly below the liquidation ratio.
    ///
    /// Collateral covering the debt at `p_eth` is seized and sold, the debt is
    /// cleared and any remaining collateral goes back to the owner.
    pub fn check_and_liquidate(
        &mut self,
        p_eth: f64,
        params: &MarketParams,
    ) -> Result<Vec<LiquidationEvent>, MarketError> {
        positive_price(p_eth)?;
        if self.shutdown {
            return Ok(Vec::new());
        }
        let unsafe_ids: Vec<CdpId> = self
            .cdps
            .values()
            .filter(|c| c.is_unsafe(p_eth, params.liquidation_ratio))
            .map(|c| c.id)
            .collect();
        let mut events = Vec::with_capacity(unsafe_ids.len());
        for id in unsafe_ids {
            let cdp = self.cdps.remove(&id).expect("collected from map");
            let seized = cdp.collateral_eth.min(cdp.debt_dai / p_eth);
            events.push(LiquidationEvent {
                cdp: id,
                owner: cdp.owner,
                collateral_seized: seized,
                surplus_returned: cdp.collateral_eth - seized,
                debt_cleared: cdp.debt_dai,
                fee_forfeited: cdp.accrued_fee_dai,
            });
        }
        self.refresh_total();
        Ok(events)
    }

    /// Freezes the system and settles every position at `p_eth`.
    ///
    /// Each outstanding DAI unit is redeemable for `1/p_eth` ETH (scaled down
    /// pro rata if collateral is short). `holders` lists DAI balances to pay
    /// out; CDP owners keep whatever collateral their debt does not claim.
    pub fn emergency_shutdown(
        &mut self,
        p_eth: f64,
        holders: &[(AgentId, f64)],
    ) -> Result<ShutdownReport, MarketError> {
        self.live()?;
        positive_price(p_eth)?;
        let outstanding = self.total_dai_minted;
        let mut reserved = 0.0;
        let mut owner_payouts = Vec::with_capacity(self.cdps.len());
        for cdp in self.cdps.values() {
            let claim = cdp.collateral_eth.min(cdp.debt_dai / p_eth);
            reserved += claim;
            owner_payouts.push((cdp.id, cdp.owner, cdp.collateral_eth - claim));
        }
        let eth_per_dai = if outstanding > 0.0 {
            (reserved / outstanding).min(1.0 / p_eth)
        } else {
            1.0 / p_eth
        };
        let holder_payouts = holders
            .iter()
            .map(|&(agent, units)| (agent, units * eth_per_dai))
            .collect();
        self.cdps.clear();
        self.refresh_total();
        self.shutdown = true;
        Ok(ShutdownReport {
            p_eth,
            dai_outstanding: outstanding,
            reserved_eth: reserved,
            eth_per_dai,
            holder_payouts,
            owner_payouts,
        })
    }

    /// Recomputes the conservation and ceiling invariants.
    pub fn audit(&self, params: &MarketParams) -> Result<(), String> {
        let sum: f64 = self.cdps.values().map(|c| c.debt_dai).sum();
        if sum != self.total_dai_minted {
            return Err(format!(
                "total_dai_minted {} != sum of debts {sum}",
                self.total_dai_minted
            ));
        }
        if let Some(ceiling) = params.debt_ceiling {
            if self.total_dai_minted > ceiling {
                return Err(format!(
                    "total_dai_minted {} exceeds ceiling {ceiling}",
                    self.total_dai_minted
                ));
            }
        }
        for cdp in self.cdps.values() {
            if cdp.collateral_eth < 0.0 || cdp.debt_dai < 0.0 || cdp.accrued_fee_dai < 0.0 {
                return Err(format!("negative balance in {}", cdp.id));
            }
        }
        Ok(())
    }
}

fn positive_price(p_eth: f64) -> Result<(), MarketError> {
    if p_eth.is_finite() && p_eth > 0.0 {
        Ok(())
    } else {
        Err(MarketError::InvalidAmount {
            field: "p_eth",
            value: p_eth,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> MarketParams {
        MarketParams {
            stability_rate: 0.01,
            ..MarketParams::default()
        }
    }

    #[test]
    fn mint_up_to_collateral_ratio() {
        let mut ledger = Ledger::new();
        // 1 ETH at $150 backs at most 100 DAI at ratio 1.5
        let cdp = ledger
            .open_cdp(AgentId(1), 1.0, 100.0, 150.0, &params())
            .unwrap();
        assert_eq!(cdp.debt_dai, 100.0);
        assert_eq!(ledger.total_dai_minted(), 100.0);
        let err = ledger
            .open_cdp(AgentId(1), 1.0, 100.01, 150.0, &params())
            .unwrap_err();
        assert!(matches!(err, MarketError::UnderCollateralized { .. }));
    }

    #[test]
    fn zero_debt_position_is_valid() {
        let mut ledger = Ledger::new();
        let cdp = ledger
            .open_cdp(AgentId(2), 0.5, 0.0, 100.0, &params())
            .unwrap();
        assert_eq!(cdp.debt_dai, 0.0);
        assert_eq!(ledger.total_dai_minted(), 0.0);
    }

    #[test]
    fn ceiling_rejects_overflowing_mint() {
        let p = MarketParams {
            debt_ceiling: Some(1000.0),
            ..params()
        };
        let mut ledger = Ledger::new();
        ledger.open_cdp(AgentId(1), 10.0, 950.0, 200.0, &p).unwrap();
        let err = ledger.open_cdp(AgentId(2), 10.0, 100.0, 200.0, &p).unwrap_err();
        assert!(matches!(err, MarketError::DebtCeilingReached { .. }));
        assert_eq!(ledger.total_dai_minted(), 950.0);
    }

    #[test]
    fn open_rejects_bad_inputs_and_shutdown() {
        let mut ledger = Ledger::new();
        assert!(ledger.open_cdp(AgentId(1), 0.0, 0.0, 100.0, &params()).is_err());
        assert!(ledger.open_cdp(AgentId(1), 1.0, 0.0, 0.0, &params()).is_err());
        ledger.emergency_shutdown(100.0, &[]).unwrap();
        assert_eq!(
            ledger.open_cdp(AgentId(1), 1.0, 0.0, 100.0, &params()),
            Err(MarketError::ShutdownActive)
        );
    }

    #[test]
    fn stability_fee_accrues_linearly() {
        let cdp = Cdp {
            id: CdpId(0),
            owner: AgentId(0),
            collateral_eth: 1.0,
            debt_dai: 100.0,
            opened_at_step: 0,
            accrued_fee_dai: 0.0,
        };
        let once = accrue_stability_fee(&cdp, &params());
        assert!((once.accrued_fee_dai - 1.0).abs() < 1e-12);
        let twice = accrue_stability_fee(&once, &params());
        assert!((twice.accrued_fee_dai - 2.0).abs() < 1e-12);

        let zero_rate = MarketParams::default();
        assert_eq!(accrue_stability_fee(&cdp, &zero_rate).accrued_fee_dai, 0.0);
        let no_debt = Cdp {
            debt_dai: 0.0,
            ..cdp
        };
        assert_eq!(accrue_stability_fee(&no_debt, &params()).accrued_fee_dai, 0.0);
    }

    #[test]
    fn close_returns_collateral_and_reports_dues() {
        let mut ledger = Ledger::new();
        let cdp = ledger
            .open_cdp(AgentId(1), 2.0, 100.0, 150.0, &params())
            .unwrap();
        ledger.accrue_stability_fees(&params());
        let closure = ledger.close_cdp(cdp.id).unwrap();
        assert_eq!(closure.collateral_returned, 2.0);
        assert!((closure.dai_due() - 101.0).abs() < 1e-12);
        assert_eq!(ledger.total_dai_minted(), 0.0);
        assert_eq!(
            ledger.close_cdp(cdp.id),
            Err(MarketError::CdpNotFound(cdp.id))
        );
    }

    #[test]
    fn close_zero_debt() {
        let mut ledger = Ledger::new();
        let cdp = ledger.open_cdp(AgentId(1), 1.0, 0.0, 150.0, &params()).unwrap();
        let closure = ledger.close_cdp(cdp.id).unwrap();
        assert_eq!(closure.dai_due(), 0.0);
        assert_eq!(closure.collateral_returned, 1.0);
    }

    #[test]
    fn partial_repay_releases_proportional_collateral() {
        let mut ledger = Ledger::new();
        let cdp = ledger.open_cdp(AgentId(1), 2.0, 100.0, 200.0, &params()).unwrap();
        ledger.accrue_stability_fees(&params());
        let r = ledger.repay(cdp.id, 25.0).unwrap();
        assert!(!r.closed);
        assert!((r.fee_paid - 0.25).abs() < 1e-12);
        assert!((r.collateral_released - 0.5).abs() < 1e-12);
        assert!((ledger.total_dai_minted() - 75.0).abs() < 1e-12);
        let r = ledger.repay(cdp.id, 75.0).unwrap();
        assert!(r.closed);
        assert!(ledger.is_empty());
    }

    #[test]
    fn liquidation_boundary_is_strict() {
        let p = params();
        let mut ledger = Ledger::new();
        // $140 of collateral against 100 DAI is under 1.5
        let low = ledger.open_cdp(AgentId(1), 1.0, 100.0, 150.0, &p).unwrap();
        let edge = ledger.open_cdp(AgentId(2), 1.5, 100.0, 150.0, &p).unwrap();
        let free = ledger.open_cdp(AgentId(3), 1.0, 0.0, 150.0, &p).unwrap();
        let events = ledger.check_and_liquidate(140.0, &p).unwrap();
        assert_eq!(events.len(), 1);
        let ev = &events[0];
        assert_eq!(ev.cdp, low.id);
        assert!((ev.collateral_seized - 100.0 / 140.0).abs() < 1e-12);
        assert!((ev.surplus_returned - (1.0 - 100.0 / 140.0)).abs() < 1e-12);
        assert_eq!(ev.debt_cleared, 100.0);
        // $150 against 100 DAI sits exactly on the boundary
        let mut ledger2 = Ledger::new();
        ledger2.open_cdp(AgentId(2), 1.5, 100.0, 150.0, &p).unwrap();
        assert!(ledger2.check_and_liquidate(100.0, &p).unwrap().is_empty());
        assert!(ledger.cdp(edge.id).is_some());
        assert!(ledger.cdp(free.id).is_some());
        assert_eq!(ledger.total_dai_minted(), 100.0);
    }

    #[test]
    fn shutdown_reserves_collateral_for_holders() {
        let mut ledger = Ledger::new();
        let cdp = ledger
            .open_cdp(AgentId(1), 1.0, 100.0, 200.0, &MarketParams::default())
            .unwrap();
        let report = ledger
            .emergency_shutdown(200.0, &[(AgentId(7), 60.0), (AgentId(8), 40.0)])
            .unwrap();
        assert!((report.reserved_eth - 0.5).abs() < 1e-12);
        assert!((report.eth_per_dai - 0.005).abs() < 1e-15);
        assert_eq!(report.owner_payouts, vec![(cdp.id, AgentId(1), 0.5)]);
        assert!((report.holder_payouts[0].1 - 0.3).abs() < 1e-12);
        assert!(ledger.is_shutdown());
        assert_eq!(ledger.total_dai_minted(), 0.0);
        assert_eq!(
            ledger.emergency_shutdown(200.0, &[]).unwrap_err(),
            MarketError::ShutdownActive
        );
        assert_eq!(ledger.close_cdp(cdp.id), Err(MarketError::ShutdownActive));
    }

    #[test]
    fn shutdown_without_debt_returns_all_collateral() {
        let mut ledger = Ledger::new();
        ledger
            .open_cdp(AgentId(3), 2.5, 0.0, 200.0, &MarketParams::default())
            .unwrap();
        let report = ledger.emergency_shutdown(200.0, &[]).unwrap();
        assert_eq!(report.reserved_eth, 0.0);
        assert_eq!(report.owner_payouts[0].2, 2.5);
    }

    #[test]
    fn params_validation() {
        assert!(MarketParams::default().validate().is_ok());
        let bad = MarketParams {
            liquidation_ratio: 1.6,
            ..MarketParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = MarketParams {
            fee_rate: -0.1,
            ..MarketParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
