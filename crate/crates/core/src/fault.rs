//! Fault profile: seeded parameters for the simulator's failure modes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seeded fault-injection parameters.
///
/// `async_launch_delay` adds per-app ticks on top of the catalog's own
/// launch delay. Probabilities apply only to UI-originated interactions;
/// deterministic-backend and runtime commands bypass all draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultProfile {
    #[serde(default)]
    pub async_launch_delay: BTreeMap<String, u64>,
    #[serde(default)]
    pub ambiguous_target_prob: f64,
    #[serde(default)]
    pub silent_tap_fail_prob: f64,
    #[serde(default)]
    pub ad_injection: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Default for FaultProfile {
    fn default() -> Self {
        Self {
            async_launch_delay: BTreeMap::new(),
            ambiguous_target_prob: 0.0,
            silent_tap_fail_prob: 0.0,
            ad_injection: false,
            seed: 1,
        }
    }
}

impl FaultProfile {
    pub fn parse(text: &str) -> Result<Self> {
        let profile: FaultProfile = toml::from_str(text)
            .map_err(|e| Error::Config(format!("fault profile not parseable: {e}")))?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("ambiguous_target_prob", self.ambiguous_target_prob),
            ("silent_tap_fail_prob", self.silent_tap_fail_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0,1], got {p}")));
            }
        }
        Ok(())
    }

    /// All probabilities zero, no extra delays, no ads: every accepted
    /// command achieves its nominal effect.
    pub fn oracle_mode() -> Self {
        Self::default()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn extra_delay(&self, app: &str) -> u64 {
        self.async_launch_delay.get(app).copied().unwrap_or(0)
    }
}
