use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use simrel::system::{SystemDef, SystemSpec};
use simrel::trainer::TrainConfig;

/// A builtin system by name, or a full definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemRef {
    Name(String),
    Spec(SystemSpec),
}

impl SystemRef {
    pub fn build(&self) -> Result<SystemDef<f64>> {
        let spec = match self {
            SystemRef::Name(n) => SystemSpec::builtin(n),
            SystemRef::Spec(s) => s.clone(),
        };
        Ok(spec.build()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferSection {
    pub horizon: usize,
    /// Monte-Carlo trials with random source controllers; 0 skips them.
    pub trials: usize,
    pub controller: String,
    /// Source initial state; the center of `X̂₀` when absent.
    pub x_hat0: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for TransferSection {
    fn default() -> Self {
        Self {
            horizon: 1000,
            trials: 0,
            controller: "random(0)".into(),
            x_hat0: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LipcheckSection {
    pub pairs: usize,
    pub seed: u64,
}

impl Default for LipcheckSection {
    fn default() -> Self {
        Self { pairs: 100_000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub target: SystemRef,
    pub source: SystemRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub transfer: TransferSection,
    #[serde(default)]
    pub lipcheck: LipcheckSection,
}

/// The part of the config that determines the trained networks.
#[derive(Serialize)]
struct Hashed<'a> {
    target: &'a SystemRef,
    source: &'a SystemRef,
    train: &'a TrainConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 over the canonical text of the systems and the training
    /// section. Transfer and lipcheck settings do not enter the hash.
    pub fn hash(&self) -> Result<String> {
        let text = toml::to_string(&Hashed {
            target: &self.target,
            source: &self.source,
            train: &self.train,
        })?;
        let digest = Sha256::digest(text.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn systems(&self) -> Result<(SystemDef<f64>, SystemDef<f64>)> {
        let target = self.target.build().context("target system")?;
        let source = self.source.build().context("source system")?;
        if target.l() != source.l() {
            bail!(
                "output dimensions differ: target has {}, source has {}",
                target.l(),
                source.l()
            );
        }
        Ok((target, source))
    }
}
