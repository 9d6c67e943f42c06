//! Scenario files: TOML with dotted sections.
//!
//! ```toml
//! steps = 500
//! seed = 7
//!
//! [market]
//! belief_weight = 10.0
//!
//! [oracle.walk]
//! start = 200.0
//! volatility = 0.03
//!
//! [investors.generator]
//! count = 30
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::investor::InvestorProfile;
use crate::market::{AgentId, MarketError, MarketParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub steps: u64,
    pub seed: u64,
    #[serde(default = "one")]
    pub initial_p_dai: f64,
    #[serde(default)]
    pub market: MarketParams,
    pub oracle: OracleConfig,
    #[serde(default)]
    pub investors: InvestorsConfig,
    #[serde(default)]
    pub keepers: KeepersConfig,
    #[serde(default)]
    pub events: Vec<EventConfig>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Steps of delay between the market ETH price and the price the ledger
    /// sees for collateral checks.
    #[serde(default)]
    pub lag: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub walk: Option<WalkConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<CsvOracleConfig>,
}

/// Geometric random walk: `p ← p·exp(drift − σ²/2 + σ·z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkConfig {
    pub start: f64,
    #[serde(default)]
    pub drift: f64,
    #[serde(default)]
    pub volatility: f64,
}

/// Replays the `eth_close` column of a `date,eth_close,dai_close` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvOracleConfig {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InvestorsConfig {
    /// New positions are opened at `collateral_ratio · (1 + collateral_buffer)`.
    pub collateral_buffer: f64,
    /// Share of starting wealth held as ETH; the rest is USD.
    pub initial_eth_fraction: f64,
    /// Rungs on each side of the previous price in an investor's order ladder.
    pub ladder_rungs: usize,
    /// Log-price spacing between ladder rungs.
    pub ladder_spacing: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub explicit: Vec<ExplicitInvestor>,
}

impl Default for InvestorsConfig {
    fn default() -> Self {
        Self {
            collateral_buffer: 0.5,
            initial_eth_fraction: 0.5,
            ladder_rungs: 6,
            ladder_spacing: 0.02,
            generator: None,
            explicit: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub count: usize,
    pub wealth: Range,
    pub risk_aversion: Range,
    /// Expected returns of USD, ETH, DAI and collateralized ETH.
    pub mu: [f64; 4],
    pub sigma: [[f64; 4]; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitInvestor {
    pub wealth: f64,
    pub risk_aversion: f64,
    pub mu: [f64; 4],
    pub sigma: [[f64; 4]; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KeepersConfig {
    pub count: usize,
    /// Keepers trade once the price leaves `[1 − band, 1 + band]`.
    pub band: f64,
    /// Starting USD per keeper; also the most a keeper spends in one step.
    pub budget: f64,
}

impl Default for KeepersConfig {
    fn default() -> Self {
        Self {
            count: 0,
            band: 0.02,
            budget: 1000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    EmergencyShutdown,
    SetDebtCeiling,
    SetStabilityRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventConfig {
    pub step: u64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::from_toml(&text)?;
        // relative CSV paths are resolved against the scenario file
        if let Some(csv) = config.oracle.csv.as_mut() {
            if csv.path.is_relative() {
                if let Some(dir) = path.parent() {
                    csv.path = dir.join(&csv.path);
                }
            }
        }
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Parse {
            path: "<document>".into(),
            message: e.message().to_string(),
        })?;
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            message: e.inner().message().to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.steps == 0 {
            return Err(invalid("steps", "must be >= 1"));
        }
        if !(self.initial_p_dai.is_finite() && self.initial_p_dai > 0.0) {
            return Err(invalid("initial_p_dai", "must be > 0"));
        }
        self.market.validate().map_err(|e| match e {
            MarketError::InvalidParams { field, reason } => invalid(format!("market.{field}"), reason),
            other => invalid("market", other.to_string()),
        })?;

        match (&self.oracle.walk, &self.oracle.csv) {
            (Some(w), None) => {
                if !(w.start.is_finite() && w.start > 0.0) {
                    return Err(invalid("oracle.walk.start", "must be > 0"));
                }
                if !w.drift.is_finite() {
                    return Err(invalid("oracle.walk.drift", "must be finite"));
                }
                if !(w.volatility.is_finite() && w.volatility >= 0.0) {
                    return Err(invalid("oracle.walk.volatility", "must be >= 0"));
                }
            }
            (None, Some(_)) => {}
            _ => return Err(invalid("oracle", "exactly one of `walk` or `csv` is required")),
        }

        let inv = &self.investors;
        if !(inv.collateral_buffer.is_finite() && inv.collateral_buffer >= 0.0) {
            return Err(invalid("investors.collateral_buffer", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&inv.initial_eth_fraction) {
            return Err(invalid("investors.initial_eth_fraction", "must lie in [0, 1]"));
        }
        if !(inv.ladder_spacing.is_finite() && inv.ladder_spacing > 0.0 && inv.ladder_spacing < 1.0) {
            return Err(invalid("investors.ladder_spacing", "must lie in (0, 1)"));
        }
        if let Some(g) = &inv.generator {
            for (field, r) in [("wealth", g.wealth), ("risk_aversion", g.risk_aversion)] {
                if !(r.min.is_finite() && r.max.is_finite() && r.min > 0.0 && r.max >= r.min) {
                    return Err(invalid(
                        format!("investors.generator.{field}"),
                        format!("expected 0 < min <= max, got [{}, {}]", r.min, r.max),
                    ));
                }
            }
        }
        for profile in self.profiles_template() {
            profile.validate().map_err(|e| invalid(format!("investors[{}]", profile.id), e.to_string()))?;
        }

        let k = &self.keepers;
        if !(k.band.is_finite() && k.band > 0.0) {
            return Err(invalid("keepers.band", "must be > 0"));
        }
        if !(k.budget.is_finite() && k.budget >= 0.0) {
            return Err(invalid("keepers.budget", "must be >= 0"));
        }

        for (i, e) in self.events.iter().enumerate() {
            let field = format!("events[{i}]");
            match e.kind {
                EventKind::EmergencyShutdown => {}
                EventKind::SetDebtCeiling | EventKind::SetStabilityRate => match e.value {
                    Some(v) if v.is_finite() && v >= 0.0 => {}
                    _ => return Err(invalid(format!("{field}.value"), "required, must be >= 0")),
                },
            }
        }
        Ok(())
    }

    /// Profiles for explicit investors plus generator placeholders at the
    /// midpoint of their ranges (used only for validation).
    fn profiles_template(&self) -> Vec<InvestorProfile> {
        let mut out: Vec<InvestorProfile> = self
            .investors
            .explicit
            .iter()
            .enumerate()
            .map(|(i, e)| InvestorProfile {
                id: AgentId(i as u32),
                risk_aversion: e.risk_aversion,
                wealth: e.wealth,
                expected_returns: e.mu,
                covariance: e.sigma,
            })
            .collect();
        if let Some(g) = &self.investors.generator {
            out.push(InvestorProfile {
                id: AgentId(out.len() as u32),
                risk_aversion: 0.5 * (g.risk_aversion.min + g.risk_aversion.max),
                wealth: 0.5 * (g.wealth.min + g.wealth.max),
                expected_returns: g.mu,
                covariance: g.sigma,
            });
        }
        out
    }

    pub fn investor_count(&self) -> usize {
        self.investors.explicit.len() + self.investors.generator.as_ref().map_or(0, |g| g.count)
    }

    /// SHA-256 of the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(&canonical))
    }

    pub fn with_belief(&self, b: f64) -> Self {
        let mut c = self.clone();
        c.market.belief_weight = b;
        c
    }

    pub fn with_ceiling(&self, ceiling: Option<f64>) -> Self {
        let mut c = self.clone();
        c.market.debt_ceiling = ceiling;
        c
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "steps = 10\nseed = 1\n[oracle.walk]\nstart = 100.0\n";

    #[test]
    fn minimal_document() {
        let c = ScenarioConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.steps, 10);
        assert_eq!(c.initial_p_dai, 1.0);
        assert_eq!(c.investor_count(), 0);
        assert_eq!(c.market, MarketParams::default());
    }

    #[test]
    fn errors_carry_field_paths() {
        let err = ScenarioConfig::from_toml(&format!("{MINIMAL}[market]\nstability_rate = \"x\"\n")).unwrap_err();
        assert!(err.to_string().starts_with("market.stability_rate"), "{err}");
        let err = ScenarioConfig::from_toml(&format!("{MINIMAL}[investors]\ncolour = 1\n")).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
        let err = ScenarioConfig::from_toml("steps = 0\nseed = 1\n[oracle.walk]\nstart = 1.0\n").unwrap_err();
        assert!(err.to_string().starts_with("steps"), "{err}");
        let err = ScenarioConfig::from_toml("steps = 3\nseed = 1\n[oracle]\nlag = 1\n").unwrap_err();
        assert!(err.to_string().starts_with("oracle"), "{err}");
    }

    #[test]
    fn events_need_values() {
        let text = format!("{MINIMAL}[[events]]\nstep = 3\nkind = \"set_debt_ceiling\"\n");
        let err = ScenarioConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().starts_with("events[0].value"), "{err}");
        let text = format!("{MINIMAL}[[events]]\nstep = 3\nkind = \"emergency_shutdown\"\n");
        assert!(ScenarioConfig::from_toml(&text).is_ok());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ScenarioConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), a.with_belief(1.0).hash());
        assert_eq!(a.hash().len(), 64);
    }
}
