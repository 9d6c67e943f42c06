//! The stepped market simulation.
//!
//! Each step:
//! 1. the oracle publishes the ETH price and scheduled events fire;
//! 2. stability fees accrue;
//! 3. unsafe positions are liquidated;
//! 4. investors re-optimize at the previous DAI price, mint new DAI or plan
//!    repayments, and post a demand ladder; keepers and the system buyback
//!    desk post their orders;
//! 5. the call auction settles the new DAI price;
//! 6. fills are booked, repayments made, collateral brought back to the
//!    target ratio and the USD/ETH split rebalanced.
//!
//! Investor holdings are valued as
//! `x = (usd − (debt + fee)·p_dai, eth·p_eth, dai·p_dai, collateral·p_eth)`,
//! so minting or repaying never changes wealth by itself. Every step checks
//! that each investor's wealth moved only by fees, stability fees,
//! liquidations and shutdown redemption, and that DAI held across all
//! accounts equals outstanding debt plus DAI left unbacked by liquidations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::config::{ConfigError, EventKind, ScenarioConfig};
use super::oracle::{self, OracleError};
use crate::analysis;
use crate::exchange::{self, Order, Side};
use crate::investor::{self, Face, InvestorError, InvestorProfile, Objective, Portfolio};
use crate::market::{AgentId, CdpId, Ledger, MarketError, MarketParams};

/// RNG stream for drawing the investor population.
pub const POPULATION_STREAM: u64 = 1;

/// Account that sells seized collateral and buys back unbacked DAI.
pub const SYSTEM: AgentId = AgentId(u32::MAX);

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("step {step}: {source}")]
    Market { step: u64, source: MarketError },
    #[error("step {step}, investor {agent}: {source}")]
    Investor {
        step: u64,
        agent: AgentId,
        source: InvestorError,
    },
    #[error("step {step}: accounting check failed: {detail}")]
    Accounting { step: u64, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: u64,
    pub p_eth: f64,
    pub p_dai: f64,
    pub volume: f64,
    pub total_minted: f64,
    pub liquidations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean_p_dai: f64,
    pub mean_abs_dev: f64,
    /// `None` when either price series is constant.
    pub pearson: Option<f64>,
    pub min_p_dai: f64,
    pub max_p_dai: f64,
}

impl Summary {
    pub fn from_records(records: &[StepRecord]) -> Self {
        let n = records.len().max(1) as f64;
        let dai: Vec<f64> = records.iter().map(|r| r.p_dai).collect();
        let eth: Vec<f64> = records.iter().map(|r| r.p_eth).collect();
        Self {
            mean_p_dai: dai.iter().sum::<f64>() / n,
            mean_abs_dev: dai.iter().map(|p| (p - 1.0).abs()).sum::<f64>() / n,
            pearson: analysis::pearson(&dai, &eth).ok(),
            min_p_dai: dai.iter().copied().fold(f64::INFINITY, f64::min),
            max_p_dai: dai.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub records: Vec<StepRecord>,
    pub summary: Summary,
    pub seed: u64,
    pub config_hash: String,
    /// Mint requests cut short by the debt ceiling.
    pub rejected_mints: u64,
    pub liquidations: u64,
    pub shutdown_step: Option<u64>,
}

/// Draws the investor population: explicit entries first, then generated
/// ones, with ids assigned in that order.
pub fn build_population(config: &ScenarioConfig) -> Vec<InvestorProfile> {
    let mut out: Vec<InvestorProfile> = config
        .investors
        .explicit
        .iter()
        .map(|e| (e.wealth, e.risk_aversion, e.mu, e.sigma))
        .chain(generated(config))
        .enumerate()
        .map(|(i, (wealth, risk_aversion, mu, sigma))| InvestorProfile {
            id: AgentId(i as u32),
            risk_aversion,
            wealth,
            expected_returns: mu,
            covariance: sigma,
        })
        .collect();
    out.shrink_to_fit();
    out
}

type Draw = (f64, f64, [f64; 4], [[f64; 4]; 4]);

fn generated(config: &ScenarioConfig) -> Vec<Draw> {
    let Some(g) = &config.investors.generator else {
        return Vec::new();
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(POPULATION_STREAM);
    (0..g.count)
        .map(|_| {
            let wealth = rng.random_range(g.wealth.min..=g.wealth.max);
            let xi = rng.random_range(g.risk_aversion.min..=g.risk_aversion.max);
            (wealth, xi, g.mu, g.sigma)
        })
        .collect()
}

struct Investor {
    profile: InvestorProfile,
    usd: f64,
    eth: f64,
    dai: f64,
    cdp: Option<CdpId>,
    face: Option<Face>,
    ladder_faces: Vec<Option<Face>>,
}

struct Keeper {
    id: AgentId,
    usd: f64,
    dai: f64,
}

/// Holdings frozen at the start of a step, for the wealth check.
#[derive(Clone, Copy)]
struct Snapshot {
    usd: f64,
    eth: f64,
    dai: f64,
    collateral: f64,
    liability: f64,
}

impl Snapshot {
    fn value(&self, p_eth: f64, p_dai: f64) -> f64 {
        self.usd + self.eth * p_eth + (self.dai - self.liability) * p_dai + self.collateral * p_eth
    }
}

/// Wealth changes that are expected in a step: a USD part and a part in
/// DAI units that is priced at the step's final DAI price.
#[derive(Clone, Copy, Default)]
struct Explained {
    usd: f64,
    dai_units: f64,
}

/// Per-investor decisions made before the auction.
#[derive(Clone, Copy, Default)]
struct Plan {
    active: bool,
    repay: f64,
    eth_share: f64,
}

struct Engine<'a> {
    config: &'a ScenarioConfig,
    market: MarketParams,
    ledger: Ledger,
    investors: Vec<Investor>,
    keepers: Vec<Keeper>,
    system_usd: f64,
    system_dai: f64,
    unbacked: f64,
    open_ratio: f64,
    rejected_mints: u64,
    liquidations: u64,
    settled_p_dai: Option<f64>,
    shutdown_step: Option<u64>,
}

pub fn run(config: &ScenarioConfig) -> Result<SimResult, SimError> {
    config.validate()?;
    let steps = config.steps as usize;
    let path = oracle::price_path(&config.oracle, steps, config.seed)?;
    let mut engine = Engine::new(config, path[0]);
    let mut records = Vec::with_capacity(steps);
    let mut p_dai = config.initial_p_dai;
    for t in 0..steps {
        let record = engine.step(t as u64, path[t], oracle::lagged(&path, t, config.oracle.lag), p_dai)?;
        p_dai = record.p_dai;
        records.push(record);
    }
    let summary = Summary::from_records(&records);
    Ok(SimResult {
        records,
        summary,
        seed: config.seed,
        config_hash: config.hash(),
        rejected_mints: engine.rejected_mints,
        liquidations: engine.liquidations,
        shutdown_step: engine.shutdown_step,
    })
}

fn market_err(step: u64) -> impl Fn(MarketError) -> SimError {
    move |source| SimError::Market { step, source }
}

fn accounting(step: u64, detail: String) -> SimError {
    SimError::Accounting { step, detail }
}

fn close_enough(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + scale.abs())
}

impl<'a> Engine<'a> {
    fn new(config: &'a ScenarioConfig, p_eth0: f64) -> Self {
        let rungs = 2 * config.investors.ladder_rungs + 1;
        let eth_fraction = config.investors.initial_eth_fraction;
        let investors = build_population(config)
            .into_iter()
            .map(|profile| Investor {
                usd: profile.wealth * (1.0 - eth_fraction),
                eth: profile.wealth * eth_fraction / p_eth0,
                dai: 0.0,
                cdp: None,
                face: None,
                ladder_faces: vec![None; rungs],
                profile,
            })
            .collect::<Vec<_>>();
        let first_keeper = investors.len() as u32;
        let keepers = (0..config.keepers.count as u32)
            .map(|k| Keeper {
                id: AgentId(first_keeper + k),
                usd: config.keepers.budget,
                dai: 0.0,
            })
            .collect();
        Self {
            config,
            market: config.market.clone(),
            ledger: Ledger::new(),
            investors,
            keepers,
            system_usd: 0.0,
            system_dai: 0.0,
            unbacked: 0.0,
            open_ratio: config.market.collateral_ratio * (1.0 + config.investors.collateral_buffer),
            rejected_mints: 0,
            liquidations: 0,
            settled_p_dai: None,
            shutdown_step: None,
        }
    }

    fn snapshot(&self, inv: &Investor) -> Snapshot {
        let (collateral, liability) = inv
            .cdp
            .and_then(|id| self.ledger.cdp(id))
            .map_or((0.0, 0.0), |c| (c.collateral_eth, c.debt_dai + c.accrued_fee_dai));
        Snapshot {
            usd: inv.usd,
            eth: inv.eth,
            dai: inv.dai,
            collateral,
            liability,
        }
    }

    /// Dollar portfolio at a trial DAI price, with the liability netted
    /// against USD.
    fn portfolio(&self, inv: &Investor, p_eth: f64, p_dai: f64) -> (Portfolio, f64) {
        let s = self.snapshot(inv);
        let x = [
            s.usd - s.liability * p_dai,
            s.eth * p_eth,
            s.dai * p_dai,
            s.collateral * p_eth,
        ];
        let wealth = x.iter().sum();
        (Portfolio::from_array(x.map(|v| v.max(0.0))), wealth)
    }

    fn step(&mut self, step: u64, p_eth: f64, p_ledger: f64, p_prev: f64) -> Result<StepRecord, SimError> {
        self.ledger.set_step(step);
        let mut explained = vec![Explained::default(); self.investors.len()];
        let start: Vec<Snapshot> = self.investors.iter().map(|i| self.snapshot(i)).collect();

        self.apply_events(step, p_eth, p_ledger, p_prev, &mut explained)?;
        if let Some(p_settled) = self.settled_p_dai {
            self.check(step, &start, &explained, p_eth, p_settled, None)?;
            return Ok(StepRecord {
                step,
                p_eth,
                p_dai: p_settled,
                volume: 0.0,
                total_minted: self.ledger.total_dai_minted(),
                liquidations: 0,
            });
        }

        let minted_before = self.ledger.total_dai_minted();
        self.accrue(&mut explained);
        let liquidated = self.liquidate(step, p_eth, p_ledger, &mut explained)?;

        let mut orders = Vec::new();
        let mut plans = vec![Plan::default(); self.investors.len()];
        for i in 0..self.investors.len() {
            plans[i] = self.plan(step, i, p_eth, p_ledger, p_prev, &mut explained[i])?;
            if plans[i].active {
                orders.extend(self.ladder(step, i, p_eth, p_prev, plans[i])?);
            }
        }
        for k in &self.keepers {
            let budget = k.usd.min(self.config.keepers.budget).max(0.0);
            orders.extend(investor::keeper_order(k.id, p_prev, k.dai, budget, self.config.keepers.band));
        }
        if self.unbacked > investor::MIN_ORDER && self.system_usd > 0.0 {
            orders.push(Order::buy(SYSTEM, self.unbacked.min(self.system_usd), 1.0));
        }

        let settlement = exchange::settle(&orders, p_prev);
        if log::log_enabled!(log::Level::Trace) {
            let side_total = |side: Side| -> f64 { orders.iter().filter(|o| o.side == side).map(|o| o.quantity).sum() };
            log::trace!(
                "step {step}: {} orders, bids {:.3}, asks {:.3}, price {:.6}, volume {:.3}",
                orders.len(),
                side_total(Side::Buy),
                side_total(Side::Sell),
                settlement.price,
                settlement.matched_volume
            );
        }
        // an auction without a cross still quotes inside the spread
        let p_dai = if settlement.matched_volume > 0.0 {
            settlement.price
        } else {
            exchange::spread_price(&orders, p_prev)
        };
        self.book_fills(&settlement, &mut explained);

        for i in 0..self.investors.len() {
            if plans[i].active {
                self.settle_investor(step, i, p_eth, p_ledger, plans[i], &mut explained[i])?;
            }
        }

        self.check(step, &start, &explained, p_eth, p_dai, Some(minted_before))?;
        Ok(StepRecord {
            step,
            p_eth,
            p_dai,
            volume: settlement.matched_volume,
            total_minted: self.ledger.total_dai_minted(),
            liquidations: liquidated,
        })
    }

    fn apply_events(
        &mut self,
        step: u64,
        p_eth: f64,
        p_ledger: f64,
        p_prev: f64,
        explained: &mut [Explained],
    ) -> Result<(), SimError> {
        let config = self.config;
        for event in config.events.iter().filter(|e| e.step == step) {
            match event.kind {
                EventKind::SetDebtCeiling => self.market.debt_ceiling = event.value,
                EventKind::SetStabilityRate => {
                    self.market.stability_rate = event.value.expect("validated event value")
                }
                EventKind::EmergencyShutdown => {
                    if self.settled_p_dai.is_none() {
                        self.shutdown(step, p_eth, p_ledger, p_prev, explained)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Redeems every DAI balance for ETH and hands surplus collateral back.
    /// From here on the DAI price is the redemption value.
    fn shutdown(
        &mut self,
        step: u64,
        p_eth: f64,
        p_ledger: f64,
        p_prev: f64,
        explained: &mut [Explained],
    ) -> Result<(), SimError> {
        let mut holders: Vec<(AgentId, f64)> = self.investors.iter().map(|i| (i.profile.id, i.dai)).collect();
        holders.extend(self.keepers.iter().map(|k| (k.id, k.dai)));
        holders.push((SYSTEM, self.system_dai));
        let liabilities: Vec<(f64, f64)> = self
            .investors
            .iter()
            .map(|i| {
                let s = self.snapshot(i);
                (s.collateral, s.liability)
            })
            .collect();
        let report = self
            .ledger
            .emergency_shutdown(p_ledger, &holders)
            .map_err(market_err(step))?;

        let n = self.investors.len();
        let mut paid_eth = 0.0;
        for (idx, &(_, eth)) in report.holder_payouts.iter().enumerate() {
            paid_eth += eth;
            if idx < n {
                let inv = &mut self.investors[idx];
                explained[idx].usd += eth * p_eth;
                explained[idx].dai_units -= inv.dai;
                inv.eth += eth;
                inv.dai = 0.0;
            } else if idx < n + self.keepers.len() {
                let k = &mut self.keepers[idx - n];
                k.usd += eth * p_eth;
                k.dai = 0.0;
            } else {
                self.system_usd += eth * p_eth;
                self.system_dai = 0.0;
            }
        }
        for &(_, owner, eth) in &report.owner_payouts {
            let idx = owner.0 as usize;
            let (collateral, liability) = liabilities[idx];
            explained[idx].usd += (eth - collateral) * p_eth;
            explained[idx].dai_units += liability;
            self.investors[idx].eth += eth;
            self.investors[idx].cdp = None;
        }
        // DAI left unbacked by earlier liquidations is honoured from the
        // system's USD.
        self.system_usd -= (paid_eth - report.reserved_eth).max(0.0) * p_eth;
        self.unbacked = 0.0;
        let settled = if report.dai_outstanding > 0.0 || paid_eth > 0.0 {
            report.eth_per_dai * p_ledger
        } else {
            p_prev
        };
        self.settled_p_dai = Some(settled);
        self.shutdown_step = Some(step);
        log::info!("step {step}: emergency shutdown, DAI settles at {settled}");
        Ok(())
    }

    fn accrue(&mut self, explained: &mut [Explained]) {
        let before: Vec<f64> = self.investors.iter().map(|i| self.snapshot(i).liability).collect();
        self.ledger.accrue_stability_fees(&self.market);
        for (i, inv) in self.investors.iter().enumerate() {
            explained[i].dai_units -= self.snapshot(inv).liability - before[i];
        }
    }

    fn liquidate(
        &mut self,
        step: u64,
        p_eth: f64,
        p_ledger: f64,
        explained: &mut [Explained],
    ) -> Result<usize, SimError> {
        let events = self
            .ledger
            .check_and_liquidate(p_ledger, &self.market)
            .map_err(market_err(step))?;
        for e in &events {
            let idx = e.owner.0 as usize;
            let inv = &mut self.investors[idx];
            inv.eth += e.surplus_returned;
            inv.cdp = None;
            explained[idx].usd -= e.collateral_seized * p_eth;
            explained[idx].dai_units += e.debt_cleared + e.fee_forfeited;
            self.system_usd += e.collateral_seized * p_ledger;
            self.unbacked += e.debt_cleared;
            log::debug!("step {step}: liquidated {} of {}", e.cdp, e.owner);
        }
        self.liquidations += events.len() as u64;
        Ok(events.len())
    }

    /// Buys `eth` units with USD at the market price, paying the trade fee.
    /// Returns the units actually bought (limited by available USD).
    fn buy_eth(&mut self, i: usize, eth: f64, p_eth: f64, explained: &mut Explained) -> f64 {
        let fee_rate = self.market.fee_rate;
        let inv = &mut self.investors[i];
        let affordable = inv.usd.max(0.0) / (p_eth * (1.0 + fee_rate));
        let q = eth.min(affordable).max(0.0);
        let fee = q * p_eth * fee_rate;
        inv.usd -= q * p_eth + fee;
        inv.eth += q;
        explained.usd -= fee;
        q
    }

    /// Re-optimizes at the previous price and mints towards the target debt,
    /// or records how much debt to repay after the auction.
    fn plan(
        &mut self,
        step: u64,
        i: usize,
        p_eth: f64,
        p_ledger: f64,
        p_prev: f64,
        explained: &mut Explained,
    ) -> Result<Plan, SimError> {
        let inv = &self.investors[i];
        let (anchor, wealth) = self.portfolio(inv, p_eth, p_prev);
        if !(wealth > 0.0) {
            return Ok(Plan::default());
        }
        let agent = inv.profile.id;
        let wrap = |source| SimError::Investor { step, agent, source };
        let objective = Objective::new(&inv.profile, &anchor, p_prev, &self.market).map_err(&wrap)?;
        let (target, face) = objective.maximize_from(wealth, inv.face).map_err(&wrap)?;
        self.investors[i].face = Some(face);

        let (debt, collateral) = self.investors[i]
            .cdp
            .and_then(|id| self.ledger.cdp(id))
            .map_or((0.0, 0.0), |c| (c.debt_dai, c.collateral_eth));
        let target_debt = target.ceth / self.open_ratio;
        let eps = 1e-9 * (1.0 + debt);
        let non_dai = target.usd + target.eth;
        let mut plan = Plan {
            active: true,
            repay: 0.0,
            eth_share: if non_dai > 0.0 { target.eth / non_dai } else { 0.0 },
        };

        if target_debt < debt - eps {
            plan.repay = debt - target_debt;
            return Ok(plan);
        }
        let mut extra = target_debt - debt;
        if extra <= eps {
            return Ok(plan);
        }
        let headroom = self.ledger.headroom(&self.market);
        if extra > headroom + eps {
            self.rejected_mints += 1;
            extra = headroom;
        }
        if extra <= eps {
            return Ok(plan);
        }
        // collateral for the whole position at the opening ratio
        let per_dai = self.open_ratio / p_ledger * (1.0 + 1e-12);
        let mut lock = ((debt + extra) * per_dai - collateral).max(0.0);
        let inv = &self.investors[i];
        let reachable = inv.eth + inv.usd.max(0.0) / (p_eth * (1.0 + self.market.fee_rate));
        if lock > reachable {
            lock = reachable;
            extra = ((collateral + lock) / per_dai - debt).max(0.0);
            if extra <= eps {
                return Ok(plan);
            }
        }
        let shortfall = lock - self.investors[i].eth;
        if shortfall > 0.0 {
            self.buy_eth(i, shortfall, p_eth, explained);
        }
        let inv = &mut self.investors[i];
        lock = lock.min(inv.eth);
        inv.eth -= lock;
        inv.dai += extra;
        let market = &self.market;
        match inv.cdp {
            Some(id) => {
                self.ledger
                    .draw(id, lock, extra, p_ledger, market)
                    .map_err(market_err(step))?;
            }
            None => {
                let cdp = self
                    .ledger
                    .open_cdp(agent, lock, extra, p_ledger, market)
                    .map_err(market_err(step))?;
                inv.cdp = Some(cdp.id);
            }
        }
        Ok(plan)
    }

    /// Demand ladder: the DAI holding the investor would choose at each rung
    /// price around the previous price, net of holdings and planned repayment.
    fn ladder(&mut self, step: u64, i: usize, p_eth: f64, p_prev: f64, plan: Plan) -> Result<Vec<Order>, SimError> {
        let k = self.config.investors.ladder_rungs as i64;
        let spacing = self.config.investors.ladder_spacing;
        let fee_rate = self.market.fee_rate;
        let mut schedule = Vec::with_capacity((2 * k + 1) as usize);
        for (slot, r) in (-k..=k).enumerate() {
            let p = p_prev * (spacing * r as f64).exp();
            let inv = &self.investors[i];
            let (anchor, wealth) = self.portfolio(inv, p_eth, p);
            if !(wealth > 0.0) {
                continue;
            }
            let agent = inv.profile.id;
            let wrap = |source| SimError::Investor { step, agent, source };
            let objective = Objective::new(&inv.profile, &anchor, p, &self.market).map_err(&wrap)?;
            let (target, face) = objective.maximize_from(wealth, inv.ladder_faces[slot]).map_err(&wrap)?;
            let mut net = target.dai / p - inv.dai + plan.repay;
            if net < 0.0 {
                net = net.max(-inv.dai);
            } else {
                let budget = (inv.usd + inv.eth * p_eth).max(0.0);
                net = net.min(budget / (p * (1.0 + fee_rate)));
            }
            self.investors[i].ladder_faces[slot] = Some(face);
            schedule.push((p, net));
        }
        Ok(exchange::ladder_orders(self.investors[i].profile.id, &schedule))
    }

    fn book_fills(&mut self, settlement: &exchange::Settlement, explained: &mut [Explained]) {
        let fees = exchange::apply_fees(settlement, &self.market);
        let n = self.investors.len();
        let mut fee_iter = fees.into_iter();
        for fill in settlement.fills.iter().filter(|f| f.quantity > 0.0) {
            let fee = fee_iter.next().map_or(0.0, |(_, f)| f);
            let signed = match fill.side {
                Side::Buy => fill.quantity,
                Side::Sell => -fill.quantity,
            };
            let cash = -signed * fill.price - fee;
            let idx = fill.agent.0 as usize;
            if fill.agent == SYSTEM {
                self.system_usd += cash;
                self.unbacked -= signed;
            } else if idx < n {
                let inv = &mut self.investors[idx];
                inv.usd += cash;
                inv.dai += signed;
                explained[idx].usd -= fee;
            } else {
                let k = &mut self.keepers[idx - n];
                k.usd += cash;
                k.dai += signed;
            }
        }
    }

    fn settle_investor(
        &mut self,
        step: u64,
        i: usize,
        p_eth: f64,
        p_ledger: f64,
        plan: Plan,
        explained: &mut Explained,
    ) -> Result<(), SimError> {
        let err = market_err(step);

        // repay as much of the plan as DAI holdings allow, fee share included
        if let Some(id) = self.investors[i].cdp {
            let cdp = self.ledger.cdp(id).expect("investor position exists");
            let (debt, fee) = (cdp.debt_dai, cdp.accrued_fee_dai);
            let amount = if debt > 0.0 {
                let affordable = self.investors[i].dai.max(0.0) / (1.0 + fee / debt);
                Some(plan.repay.min(affordable)).filter(|a| *a > investor::MIN_ORDER)
            } else {
                // an empty position is simply closed
                Some(0.0).filter(|_| fee <= self.investors[i].dai)
            };
            if let Some(amount) = amount {
                let r = self.ledger.repay(id, amount).map_err(&err)?;
                let inv = &mut self.investors[i];
                inv.dai -= r.debt_repaid + r.fee_paid;
                inv.eth += r.collateral_released;
                self.system_dai += r.fee_paid;
                if r.closed {
                    inv.cdp = None;
                }
            }
        }

        // bring collateral back to the opening ratio
        if let Some(id) = self.investors[i].cdp {
            let cdp = self.ledger.cdp(id).expect("investor position exists");
            let desired = cdp.debt_dai * self.open_ratio / p_ledger * (1.0 + 1e-12);
            let held = cdp.collateral_eth;
            if held > desired {
                let freed = self
                    .ledger
                    .free_collateral(id, held - desired, p_ledger, &self.market)
                    .map_err(&err)?;
                self.investors[i].eth += freed;
            } else if held < desired {
                let need = desired - held;
                let shortfall = need - self.investors[i].eth;
                if shortfall > 0.0 {
                    self.buy_eth(i, shortfall, p_eth, explained);
                }
                let add = need.min(self.investors[i].eth);
                if add > 0.0 {
                    self.investors[i].eth -= add;
                    self.ledger.draw(id, add, 0.0, p_ledger, &self.market).map_err(&err)?;
                }
            }
        }

        // split the remaining USD and ETH like the target
        let fee_rate = self.market.fee_rate;
        let inv = &mut self.investors[i];
        let liquid = inv.usd + inv.eth * p_eth;
        if liquid > 0.0 {
            let eth_value = liquid * plan.eth_share;
            let fee = fee_rate * (eth_value - inv.eth * p_eth).abs();
            let after = liquid - fee;
            inv.eth = after * plan.eth_share / p_eth;
            inv.usd = after - inv.eth * p_eth;
            explained.usd -= fee;
        }
        Ok(())
    }

    fn check(
        &self,
        step: u64,
        start: &[Snapshot],
        explained: &[Explained],
        p_eth: f64,
        p_dai: f64,
        minted_before: Option<f64>,
    ) -> Result<(), SimError> {
        for (i, inv) in self.investors.iter().enumerate() {
            let before = start[i].value(p_eth, p_dai);
            let after = self.snapshot(inv).value(p_eth, p_dai);
            let expected = before + explained[i].usd + explained[i].dai_units * p_dai;
            if !close_enough(after, expected, before.abs() + after.abs()) {
                return Err(accounting(
                    step,
                    format!(
                        "investor {} wealth {after} differs from expected {expected}",
                        inv.profile.id
                    ),
                ));
            }
        }

        let held: f64 = self.investors.iter().map(|i| i.dai).sum::<f64>()
            + self.keepers.iter().map(|k| k.dai).sum::<f64>()
            + self.system_dai;
        let owed = self.ledger.total_dai_minted() + self.unbacked;
        if !close_enough(held, owed, owed) {
            return Err(accounting(
                step,
                format!("DAI held {held} differs from minted plus unbacked {owed}"),
            ));
        }

        let unlimited = MarketParams {
            debt_ceiling: None,
            ..self.market.clone()
        };
        self.ledger.audit(&unlimited).map_err(|d| accounting(step, d))?;
        if let (Some(ceiling), Some(before)) = (self.market.debt_ceiling, minted_before) {
            let total = self.ledger.total_dai_minted();
            if total > ceiling.max(before) * (1.0 + 1e-12) {
                return Err(accounting(
                    step,
                    format!("minted {total} exceeds debt ceiling {ceiling}"),
                ));
            }
        }
        Ok(())
    }
}
