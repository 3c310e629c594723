//! Simulator and stack configuration.
//!
//! Every tunable constant lives here so a single TOML document can pin a run.
//! `HimaConfig::default()` reproduces the shipped `data/hima.toml`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::execloop::FeedbackConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config value: {0}")]
    Invalid(String),
}

/// Economy, combat and match constants for the world engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldRules {
    pub time_cap: u32,
    pub max_supply: u32,
    /// Minerals per second per mineral worker.
    pub mineral_rate: f64,
    /// Gas per second per gas worker.
    pub gas_rate: f64,
    pub mineral_workers_per_base: u32,
    pub gas_workers_per_structure: u32,
    pub scout_window: u32,
    pub combat_round_seconds: u32,
    pub attrition: f64,
    /// Strength multiplier gained per completed technology.
    pub tech_strength_bonus: f64,
}

impl Default for WorldRules {
    fn default() -> Self {
        Self {
            time_cap: 3600,
            max_supply: 200,
            mineral_rate: 1.0,
            gas_rate: 0.9,
            mineral_workers_per_base: 16,
            gas_workers_per_structure: 3,
            scout_window: 60,
            combat_round_seconds: 5,
            attrition: 0.1,
            tech_strength_bonus: 0.02,
        }
    }
}

impl WorldRules {
    pub(crate) fn mineral_rate_milli(&self) -> u64 {
        (self.mineral_rate * 1000.0).round() as u64
    }

    pub(crate) fn gas_rate_milli(&self) -> u64 {
        (self.gas_rate * 1000.0).round() as u64
    }
}

/// Magnitudes applied to the cheat difficulty tiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheatRules {
    pub bank_bonus: u32,
    pub income_multiplier: f64,
}

impl Default for CheatRules {
    fn default() -> Self {
        Self { bank_bonus: 1000, income_multiplier: 1.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineDefaults {
    pub window_seconds: u32,
    pub winners_only: bool,
}

impl Default for PipelineDefaults {
    fn default() -> Self {
        Self { window_seconds: 180, winners_only: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusteringDefaults {
    pub k: usize,
    pub dominance_threshold: f64,
    pub max_iterations: usize,
}

impl Default for ClusteringDefaults {
    fn default() -> Self {
        Self { k: 3, dominance_threshold: 0.6, max_iterations: 100 }
    }
}

/// Normalization divisors for retrieval features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureScale {
    pub minerals: f64,
    pub gas: f64,
    pub supply: f64,
    pub unit_count: f64,
    pub building_count: f64,
    pub game_time: f64,
}

impl Default for FeatureScale {
    fn default() -> Self {
        Self {
            minerals: 1000.0,
            gas: 1000.0,
            supply: 200.0,
            unit_count: 20.0,
            building_count: 10.0,
            game_time: 3600.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentDefaults {
    pub endpoint: Option<String>,
    pub temperature: f64,
    pub timeout_secs: u64,
    pub max_actions: usize,
}

impl Default for AgentDefaults {
    fn default() -> Self {
        Self { endpoint: None, temperature: 0.7, timeout_secs: 60, max_actions: 40 }
    }
}

/// Conflict scoring weights used by the deterministic planner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringWeights {
    pub feasibility: f64,
    pub majority: f64,
    pub so_alignment: f64,
}

impl Default for ScoringWeights {
    fn default() -> Self {
        Self { feasibility: 1.0, majority: 0.5, so_alignment: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessDefaults {
    pub win_rate_seeds: usize,
    pub ablation_seeds: usize,
    /// Worker threads for tournaments; 0 lets the pool decide.
    pub workers: usize,
}

impl Default for HarnessDefaults {
    fn default() -> Self {
        Self { win_rate_seeds: 50, ablation_seeds: 20, workers: 0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HimaConfig {
    pub world: WorldRules,
    pub cheats: CheatRules,
    pub pipeline: PipelineDefaults,
    pub clustering: ClusteringDefaults,
    pub features: FeatureScale,
    pub agent: AgentDefaults,
    pub scoring: ScoringWeights,
    pub feedback: FeedbackConfig,
    pub harness: HarnessDefaults,
}

pub const SHIPPED_CONFIG: &str = include_str!("../data/hima.toml");

impl HimaConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: HimaConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    /// Applies `HIMA_AGENT_ENDPOINT` / `HIMA_AGENT_TIMEOUT` overrides.
    pub fn with_env_overrides(mut self) -> Result<Self, ConfigError> {
        if let Ok(endpoint) = std::env::var("HIMA_AGENT_ENDPOINT") {
            if !endpoint.trim().is_empty() {
                self.agent.endpoint = Some(endpoint.trim().to_string());
            }
        }
        if let Ok(raw) = std::env::var("HIMA_AGENT_TIMEOUT") {
            self.agent.timeout_secs = raw
                .trim()
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("HIMA_AGENT_TIMEOUT={raw}")))?;
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
        if self.pipeline.window_seconds == 0 {
            return fail("pipeline.window_seconds must be >= 1");
        }
        if self.feedback.threat_threshold == 0 {
            return fail("feedback.threat_threshold must be >= 1");
        }
        if self.feedback.replan_period == 0 {
            return fail("feedback.replan_period must be >= 1");
        }
        if self.clustering.k == 0 {
            return fail("clustering.k must be >= 1");
        }
        if self.world.combat_round_seconds == 0 {
            return fail("world.combat_round_seconds must be >= 1");
        }
        if self.world.max_supply == 0 || self.world.max_supply > 200 {
            return fail("world.max_supply must be in 1..=200");
        }
        if self.cheats.income_multiplier < 1.0 {
            return fail("cheats.income_multiplier must be >= 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_file_matches_defaults() {
        let shipped = HimaConfig::from_toml(SHIPPED_CONFIG).unwrap();
        assert_eq!(shipped, HimaConfig::default());
    }

    #[test]
    fn named_defaults() {
        let cfg = HimaConfig::default();
        assert_eq!(cfg.pipeline.window_seconds, 180);
        assert_eq!(cfg.feedback.threat_threshold, 10);
        assert_eq!(cfg.clustering.k, 3);
        assert!((cfg.agent.temperature - 0.7).abs() < 1e-12);
        assert_eq!(cfg.agent.timeout_secs, 60);
        assert_eq!(cfg.world.time_cap, 3600);
    }

    #[test]
    fn rejects_zero_window() {
        let err = HimaConfig::from_toml("[pipeline]\nwindow_seconds = 0\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)));
    }
}
