use serde::{Deserialize, Serialize};

use crate::cover::DatasetParams;
use crate::error::{Error, Result};

/// How condition (10) is checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepMode {
    /// `V(successor) ≥ V(x, x̂) + η`.
    Strict,
    /// `V(successor) ≥ 0.5 + 2η`.
    #[default]
    Relaxed,
}

impl std::str::FromStr for StepMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(StepMode::Strict),
            "relaxed" => Ok(StepMode::Relaxed),
            other => Err(Error::invalid("mode", format!("`{other}` (expected strict or relaxed)"))),
        }
    }
}

impl std::fmt::Display for StepMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StepMode::Strict => "strict",
            StepMode::Relaxed => "relaxed",
        })
    }
}

/// Per-sample discrepancy used by the interface loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KLoss {
    /// `(1/l) Σ |h(f(·))ᵢ − ĥ(f̂(·))ᵢ|`.
    #[default]
    MeanAbs,
    /// `(1/l) Σ (h(f(·))ᵢ − ĥ(f̂(·))ᵢ)²`.
    Squared,
}

/// Initialization of the interface network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KInit {
    Random,
    /// Starts as `u = clamp(G û)` with small noise elsewhere.
    #[default]
    PassThrough,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epsilon: f64,
    pub eta: f64,
    pub gamma: f64,
    /// State discretization `𝔢`.
    pub e: f64,
    /// Source input discretization `𝔢̂`.
    pub e_hat: f64,
    /// Iterations per phase before switching networks (`N`).
    pub phase_len: usize,
    pub max_iters: usize,
    pub lr_v: f64,
    pub lr_k: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub mode: StepMode,
    pub k_loss: KLoss,
    pub v_hidden: Vec<usize>,
    pub k_hidden: Vec<usize>,
    pub k_init: KInit,
    /// `m × m̂` gain of the pass-through initialization; identity-like when empty.
    pub k_gain: Vec<Vec<f64>>,
    pub k_init_noise: f64,
    /// Cross-entropy terms are dropped once their predicate holds with this
    /// much slack.
    pub ce_margin: f64,
    /// Weight of the hinge penalty on Lipschitz bounds above the caps implied
    /// by the validity conditions (0 disables it).
    pub lip_penalty: f64,
    /// Extra slack on `ε` in the dataset output filter.
    pub filter_slack: f64,
    /// Central-difference step on the control input.
    pub fd_delta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            eta: 0.1,
            gamma: 0.02,
            e: 0.015,
            e_hat: 0.25,
            phase_len: 200,
            max_iters: 2000,
            lr_v: 1e-3,
            lr_k: 1e-3,
            batch_size: 256,
            seed: 0,
            mode: StepMode::Relaxed,
            k_loss: KLoss::MeanAbs,
            v_hidden: vec![20; 5],
            k_hidden: vec![200; 5],
            k_init: KInit::PassThrough,
            k_gain: Vec::new(),
            k_init_noise: 1e-3,
            ce_margin: 0.02,
            lip_penalty: 0.0,
            filter_slack: 0.0,
            fd_delta: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str, reason: String| if ok { Ok(()) } else { Err(Error::invalid(what, reason)) };
        check(self.eta > 0.0, "eta", format!("must be > 0, got {}", self.eta))?;
        check(self.gamma > 0.0, "gamma", format!("must be > 0, got {}", self.gamma))?;
        check(
            self.epsilon >= self.gamma,
            "epsilon",
            format!("must be >= gamma ({} < {})", self.epsilon, self.gamma),
        )?;
        if !(self.e > 0.0) {
            return Err(Error::NonPositiveStep(self.e));
        }
        if !(self.e_hat > 0.0) {
            return Err(Error::NonPositiveStep(self.e_hat));
        }
        check(self.phase_len >= 1, "phase_len", "must be >= 1".into())?;
        check(self.batch_size >= 1, "batch_size", "must be >= 1".into())?;
        check(self.lr_v > 0.0 && self.lr_k > 0.0, "learning rate", "must be > 0".into())?;
        check(self.fd_delta > 0.0, "fd_delta", "must be > 0".into())?;
        check(self.ce_margin >= 0.0, "ce_margin", "must be >= 0".into())?;
        check(self.lip_penalty >= 0.0, "lip_penalty", "must be >= 0".into())?;
        Ok(())
    }

    pub fn dataset_params(&self) -> DatasetParams {
        DatasetParams {
            epsilon: self.epsilon,
            e: self.e,
            e_hat: self.e_hat,
            filter_slack: self.filter_slack,
        }
    }

    /// `ε − γ`, the output-error budget of the labels.
    pub fn error_budget(&self) -> Result<f64> {
        let b = self.epsilon - self.gamma;
        if b > 0.0 {
            Ok(b)
        } else {
            Err(Error::NoErrorBudget {
                epsilon: self.epsilon,
                gamma: self.gamma,
            })
        }
    }
}
