//! Run configuration as a single TOML document with one table per module.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baseline::PDGains;
use crate::rewards::RewardConfig;
use crate::simenv::{EnvConfig, PerturbationConfig};
use crate::td3::TD3Hyper;
use crate::{Error, Result};

/// Named scale presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// 400/300 networks, 5000 episodes of 1500 steps, 10^7 buffer.
    Paper,
    /// 64/64 networks, 300 episodes of 200 steps, 10^5 buffer.
    Desk,
}

impl Profile {
    pub fn as_str(&self) -> &'static str {
        match self {
            Profile::Paper => "paper",
            Profile::Desk => "desk",
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            other => Err(Error::Config(format!("unknown profile {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub env: EnvConfig,
    pub perturbation: PerturbationConfig,
    pub rewards: RewardConfig,
    pub td3: TD3Hyper,
    pub pd: PDGains,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::profile(Profile::Paper)
    }
}

impl RunConfig {
    pub fn profile(profile: Profile) -> Self {
        let td3 = match profile {
            Profile::Paper => TD3Hyper::paper(),
            Profile::Desk => TD3Hyper::desk(),
        };
        let env = EnvConfig {
            episode_len: td3.episode_len,
            ..EnvConfig::default()
        };
        Self {
            seed: 0,
            env,
            perturbation: PerturbationConfig::default(),
            rewards: RewardConfig::default(),
            td3,
            pd: PDGains::default(),
        }
    }

    /// Parses a TOML document; tables and keys it omits keep the values of
    /// `base`.
    pub fn from_toml_over(base: &RunConfig, text: &str) -> Result<Self> {
        let mut merged = toml::Table::try_from(base).map_err(|e| Error::Config(format!("config: {e}")))?;
        let overlay: toml::Table = text.parse().map_err(|e| Error::Config(format!("config: {e}")))?;
        merge_tables(&mut merged, overlay);
        let cfg: RunConfig = merged.try_into().map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(base: &RunConfig, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_over(base, &text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("config serialisation: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.perturbation.validate()?;
        self.td3.validate()?;
        self.pd.validate()?;
        for kind in [
            crate::rewards::RewardKind::AreaOriginal,
            crate::rewards::RewardKind::Position,
            crate::rewards::RewardKind::Combined,
            crate::rewards::RewardKind::Complex,
        ] {
            self.rewards.weights(kind, &self.env)?;
        }
        Ok(())
    }
}

fn merge_tables(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
