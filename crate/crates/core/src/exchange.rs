//! Uniform-price call auction for DAI.
//!
//! All orders of a round are pooled. The clearing price is the midpoint of
//! the price interval on which matched volume `min(demand(p), supply(p))` is
//! maximal. Orders strictly inside the cross fill completely; the long side is
//! rationed by price priority and pro rata within the marginal limit level.

use std::cmp::Ordering;

use serde::Serialize;

use crate::market::{AgentId, MarketParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Buy,
    Sell,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Order {
    pub agent: AgentId,
    pub side: Side,
    /// DAI units, > 0.
    pub quantity: f64,
    /// USD per DAI, > 0.
    pub limit: f64,
}

impl Order {
    pub fn buy(agent: AgentId, quantity: f64, limit: f64) -> Self {
        Self {
            agent,
            side: Side::Buy,
            quantity,
            limit,
        }
    }

    pub fn sell(agent: AgentId, quantity: f64, limit: f64) -> Self {
        Self {
            agent,
            side: Side::Sell,
            quantity,
            limit,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.quantity.is_finite() && self.quantity > 0.0 && self.limit.is_finite() && self.limit > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fill {
    pub agent: AgentId,
    pub side: Side,
    pub quantity: f64,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settlement {
    pub price: f64,
    pub matched_volume: f64,
    pub fills: Vec<Fill>,
}

impl Settlement {
    /// Net DAI units bought (positive) or sold (negative) by `agent`.
    pub fn net_units(&self, agent: AgentId) -> f64 {
        self.fills
            .iter()
            .filter(|f| f.agent == agent)
            .map(|f| match f.side {
                Side::Buy => f.quantity,
                Side::Sell => -f.quantity,
            })
            .sum()
    }
}

fn canonical(a: &Order, b: &Order) -> Ordering {
    a.limit
        .total_cmp(&b.limit)
        .then(a.agent.cmp(&b.agent))
        .then(a.quantity.total_cmp(&b.quantity))
}

/// Clears one auction round. Invalid orders (non-positive quantity or limit)
/// are ignored. Without a cross the price stays at `prev_price`.
pub fn settle(orders: &[Order], prev_price: f64) -> Settlement {
    let mut buys: Vec<Order> = orders
        .iter()
        .filter(|o| o.side == Side::Buy && o.is_valid())
        .copied()
        .collect();
    let mut sells: Vec<Order> = orders
        .iter()
        .filter(|o| o.side == Side::Sell && o.is_valid())
        .copied()
        .collect();
    // buys: best (highest) limit first; sells: best (lowest) limit first
    buys.sort_by(|a, b| {
        b.limit
            .total_cmp(&a.limit)
            .then(a.agent.cmp(&b.agent))
            .then(a.quantity.total_cmp(&b.quantity))
    });
    sells.sort_by(canonical);

    let no_trade = Settlement {
        price: prev_price,
        matched_volume: 0.0,
        fills: Vec::new(),
    };
    if buys.is_empty() || sells.is_empty() {
        return no_trade;
    }

    let mut levels: Vec<f64> = buys.iter().chain(sells.iter()).map(|o| o.limit).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();

    let buy_cum = cumulative(&buys);
    let sell_cum = cumulative(&sells);
    let demand_at = |p: f64| buy_cum[buys.partition_point(|o| o.limit >= p)];
    let supply_at = |p: f64| sell_cum[sells.partition_point(|o| o.limit <= p)];
    let volume_at = |p: f64| demand_at(p).min(supply_at(p));

    // Candidate locations: every level and every open gap between levels.
    // (lower closure, upper closure, volume)
    let mut candidates: Vec<(f64, f64, f64)> = Vec::with_capacity(2 * levels.len());
    for (i, &level) in levels.iter().enumerate() {
        candidates.push((level, level, volume_at(level)));
        if let Some(&next) = levels.get(i + 1) {
            let mid = 0.5 * (level + next);
            candidates.push((level, next, volume_at(mid)));
        }
    }
    let best = candidates.iter().map(|c| c.2).fold(0.0_f64, f64::max);
    if best <= 0.0 {
        return no_trade;
    }
    let tolerance = best * 1e-12;
    let achieving = candidates.iter().filter(|c| c.2 >= best - tolerance);
    let (lo, hi) = achieving.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
        (lo.min(c.0), hi.max(c.1))
    });
    let price = 0.5 * (lo + hi);

    let eligible_buys: Vec<Order> = buys.iter().filter(|o| o.limit >= price).copied().collect();
    let eligible_sells: Vec<Order> = sells.iter().filter(|o| o.limit <= price).copied().collect();
    let demand: f64 = eligible_buys.iter().map(|o| o.quantity).sum();
    let supply: f64 = eligible_sells.iter().map(|o| o.quantity).sum();
    let volume = demand.min(supply);
    if volume <= 0.0 {
        return no_trade;
    }

    let mut fills = ration(&eligible_buys, volume, price);
    fills.extend(ration(&eligible_sells, volume, price));
    Settlement {
        price,
        matched_volume: volume,
        fills,
    }
}

/// `out[i]` is the total quantity of the first `i` orders.
fn cumulative(orders: &[Order]) -> Vec<f64> {
    let mut out = Vec::with_capacity(orders.len() + 1);
    let mut acc = 0.0;
    out.push(acc);
    for o in orders {
        acc += o.quantity;
        out.push(acc);
    }
    out
}

/// Allocates `volume` over orders already sorted best-first. Whole limit
/// levels fill until the marginal level, which is shared pro rata.
fn ration(orders: &[Order], volume: f64, price: f64) -> Vec<Fill> {
    let total: f64 = orders.iter().map(|o| o.quantity).sum();
    let fill = |o: &Order, quantity: f64| Fill {
        agent: o.agent,
        side: o.side,
        quantity,
        price,
    };
    if total <= volume {
        return orders.iter().map(|o| fill(o, o.quantity)).collect();
    }
    let mut fills = Vec::with_capacity(orders.len());
    let mut remaining = volume;
    let mut i = 0;
    while i < orders.len() && remaining > 0.0 {
        let limit = orders[i].limit;
        let j = orders[i..]
            .iter()
            .position(|o| o.limit != limit)
            .map_or(orders.len(), |k| i + k);
        let level: f64 = orders[i..j].iter().map(|o| o.quantity).sum();
        if level <= remaining {
            fills.extend(orders[i..j].iter().map(|o| fill(o, o.quantity)));
            remaining -= level;
        } else {
            let share = remaining / level;
            fills.extend(orders[i..j].iter().map(|o| fill(o, o.quantity * share)));
            remaining = 0.0;
        }
        i = j;
    }
    fills
}

/// Highest bid and lowest ask among valid orders.
pub fn best_quotes(orders: &[Order]) -> (Option<f64>, Option<f64>) {
    let mut bid: Option<f64> = None;
    let mut ask: Option<f64> = None;
    for o in orders.iter().filter(|o| o.is_valid()) {
        match o.side {
            Side::Buy => bid = Some(bid.map_or(o.limit, |b| b.max(o.limit))),
            Side::Sell => ask = Some(ask.map_or(o.limit, |a| a.min(o.limit))),
        }
    }
    (bid, ask)
}

/// Quote for a round that did not cross: `prev_price` moved just enough to
/// lie inside the bid/ask spread. A lone side caps the price from its side
/// only; an empty book leaves it unchanged.
pub fn spread_price(orders: &[Order], prev_price: f64) -> f64 {
    let (bid, ask) = best_quotes(orders);
    let mut p = prev_price;
    if let Some(a) = ask {
        p = p.min(a);
    }
    if let Some(b) = bid {
        p = p.max(b);
    }
    p
}

/// Per-fill transaction fee: `fee_rate * quantity * price` USD.
pub fn apply_fees(settlement: &Settlement, params: &MarketParams) -> Vec<(AgentId, f64)> {
    settlement
        .fills
        .iter()
        .filter(|f| f.quantity > 0.0)
        .map(|f| (f.agent, params.fee_rate * f.quantity * f.price))
        .collect()
}

/// Turns a net demand schedule into a ladder of limit orders.
///
/// `schedule` holds `(price, net_units)` pairs where positive units mean the
/// agent wants to end up buying that many DAI if the round clears at `price`,
/// negative units selling. The schedule is made monotone (net demand
/// non-increasing in price) before being split into incremental orders, so
/// the aggregate executed quantity at any clearing price matches the
/// schedule at the nearest rung at or beyond it.
pub fn ladder_orders(agent: AgentId, schedule: &[(f64, f64)]) -> Vec<Order> {
    let mut rungs: Vec<(f64, f64)> = schedule
        .iter()
        .copied()
        .filter(|(p, q)| p.is_finite() && *p > 0.0 && q.is_finite())
        .collect();
    rungs.sort_by(|a, b| a.0.total_cmp(&b.0));
    if rungs.is_empty() {
        return Vec::new();
    }
    // enforce non-increasing net demand
    for i in 1..rungs.len() {
        if rungs[i].1 > rungs[i - 1].1 {
            rungs[i].1 = rungs[i - 1].1;
        }
    }
    let mut orders = Vec::new();
    // buy quantity at rung i is demand(i) - demand(i+1) among positive parts
    for i in 0..rungs.len() {
        let here = rungs[i].1.max(0.0);
        let above = rungs.get(i + 1).map_or(0.0, |r| r.1.max(0.0));
        let q = here - above;
        if q > 1e-12 {
            orders.push(Order::buy(agent, q, rungs[i].0));
        }
    }
    for i in 0..rungs.len() {
        let here = (-rungs[i].1).max(0.0);
        let below = if i == 0 { 0.0 } else { (-rungs[i - 1].1).max(0.0) };
        let q = here - below;
        if q > 1e-12 {
            orders.push(Order::sell(agent, q, rungs[i].0));
        }
    }
    orders
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: AgentId = AgentId(1);
    const B: AgentId = AgentId(2);
    const C: AgentId = AgentId(3);

    #[test]
    fn spread_quote_without_cross() {
        let book = [Order::buy(A, 10.0, 0.90), Order::sell(B, 10.0, 1.10)];
        assert_eq!(settle(&book, 1.0).matched_volume, 0.0);
        assert_eq!(spread_price(&book, 1.0), 1.0);
        assert_eq!(spread_price(&book, 1.5), 1.10);
        assert_eq!(spread_price(&book, 0.5), 0.90);
        assert_eq!(spread_price(&[Order::sell(B, 1.0, 1.2)], 1.5), 1.2);
        assert_eq!(spread_price(&[Order::sell(B, 1.0, 1.2)], 1.0), 1.0);
        assert_eq!(spread_price(&[], 0.7), 0.7);
        assert_eq!(best_quotes(&book), (Some(0.90), Some(1.10)));
    }

    #[test]
    fn midpoint_of_crossing_interval() {
        let s = settle(&[Order::buy(A, 10.0, 1.05), Order::sell(B, 10.0, 0.95)], 0.7);
        assert!((s.price - 1.0).abs() < 1e-15);
        assert_eq!(s.matched_volume, 10.0);
        assert_eq!(s.fills.len(), 2);
    }

    #[test]
    fn empty_book_keeps_price() {
        let s = settle(&[], 1.23);
        assert_eq!(s.price, 1.23);
        assert_eq!(s.matched_volume, 0.0);
        assert!(s.fills.is_empty());
    }

    #[test]
    fn no_cross_keeps_price() {
        let s = settle(&[Order::buy(A, 10.0, 0.90), Order::sell(B, 10.0, 1.10)], 1.0);
        assert_eq!(s.price, 1.0);
        assert_eq!(s.matched_volume, 0.0);
    }

    #[test]
    fn long_side_rationed_pro_rata_at_margin() {
        // 30 units of demand at 1.02 against 10 of supply
        let orders = [
            Order::buy(A, 10.0, 1.02),
            Order::buy(B, 20.0, 1.02),
            Order::sell(C, 10.0, 0.98),
        ];
        let s = settle(&orders, 1.0);
        assert_eq!(s.matched_volume, 10.0);
        assert!((s.net_units(A) - 10.0 / 3.0).abs() < 1e-12);
        assert!((s.net_units(B) - 20.0 / 3.0).abs() < 1e-12);
        assert!((s.net_units(C) + 10.0).abs() < 1e-12);
    }

    #[test]
    fn price_priority_before_pro_rata() {
        let orders = [
            Order::buy(A, 5.0, 1.10),
            Order::buy(B, 10.0, 1.00),
            Order::sell(C, 8.0, 0.90),
        ];
        let s = settle(&orders, 1.0);
        assert_eq!(s.matched_volume, 8.0);
        assert!((s.net_units(A) - 5.0).abs() < 1e-12);
        assert!((s.net_units(B) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn fees_scale_with_notional() {
        let s = Settlement {
            price: 1.0,
            matched_volume: 50.0,
            fills: vec![Fill {
                agent: A,
                side: Side::Buy,
                quantity: 50.0,
                price: 1.0,
            }],
        };
        let p = MarketParams {
            fee_rate: 0.01,
            ..MarketParams::default()
        };
        let fees = apply_fees(&s, &p);
        assert_eq!(fees.len(), 1);
        assert!((fees[0].1 - 0.5).abs() < 1e-12);
        assert!(apply_fees(&s, &MarketParams::default()).iter().all(|f| f.1 == 0.0));
        assert!(apply_fees(&settle(&[], 1.0), &p).is_empty());
    }

    #[test]
    fn ladder_reproduces_schedule() {
        let schedule = [(0.9, 30.0), (1.0, 10.0), (1.1, -5.0), (1.2, -20.0)];
        let orders = ladder_orders(A, &schedule);
        let buy_at = |p: f64| -> f64 {
            orders
                .iter()
                .filter(|o| o.side == Side::Buy && o.limit >= p)
                .map(|o| o.quantity)
                .sum()
        };
        let sell_at = |p: f64| -> f64 {
            orders
                .iter()
                .filter(|o| o.side == Side::Sell && o.limit <= p)
                .map(|o| o.quantity)
                .sum()
        };
        assert!((buy_at(0.9) - 30.0).abs() < 1e-12);
        assert!((buy_at(1.0) - 10.0).abs() < 1e-12);
        assert_eq!(buy_at(1.1), 0.0);
        assert_eq!(sell_at(1.0), 0.0);
        assert!((sell_at(1.1) - 5.0).abs() < 1e-12);
        assert!((sell_at(1.2) - 20.0).abs() < 1e-12);
    }
}
