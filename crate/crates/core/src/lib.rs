//! Agent-based simulator of a single-collateral stablecoin market.
//!
//! - [`market`]: CDP ledger, minting, liquidation and shutdown.
//! - [`investor`]: belief-augmented portfolio objective and its optimizer.
//! - [`exchange`]: uniform-price call auction for DAI.
//! - [`analytic`]: closed-form supply/demand equilibrium.
//! - [`analysis`]: historical price statistics.
//! - [`sim`]: scenario configuration, the stepped engine and experiments.

pub mod analysis;
pub mod analytic;
pub mod exchange;
pub mod investor;
pub mod market;
pub mod sim;
