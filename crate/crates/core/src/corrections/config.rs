use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{DEFAULT_LAMBDA, DEFAULT_MARGIN};
use crate::neural::AdamConfig;

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Weight of the critic ranking term.
    pub lambda: f64,
    /// Weight of the generator ranking term (regularized-generator variants).
    pub lambda_g: f64,
    pub margin: f64,
    /// Preference pairs built per correction and sampled per critic step.
    pub n_s: usize,
    /// Generated samples injected into the buffer per correction.
    pub n_g: usize,
    /// Generator iterations per correction.
    pub n_i: usize,
    pub n_critic: usize,
    pub batch_size: usize,
    pub pretrain_iters: usize,
    pub max_corrections: usize,
    /// Stop once the last `plateau_window` PDD increments all stay below
    /// `plateau_tolerance` points. `plateau_window = 0` disables the rule.
    pub plateau_window: usize,
    pub plateau_tolerance: f64,
    pub clip: f64,
    /// Fixed factor applied to raw critic outputs before any loss.
    pub critic_scale: f64,
    pub critic_adam: AdamConfig,
    pub generator_adam: AdamConfig,
    pub noise_dim: usize,
    pub critic_hidden: Vec<usize>,
    pub generator_hidden: Vec<usize>,
    pub leaky_slope: f64,
    /// Generated samples used to measure PDD after every correction.
    pub eval_samples: usize,
    /// Threshold on `|E_r[D] - E_g[D]|`, logged but never enforced.
    pub eps_monitor: Option<f64>,
    /// Human mode: seconds to wait for verdicts before proceeding.
    pub human_timeout_secs: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            lambda_g: 1.0,
            margin: DEFAULT_MARGIN,
            n_s: 5,
            n_g: 200,
            n_i: 100,
            n_critic: 5,
            batch_size: 50,
            pretrain_iters: 2000,
            max_corrections: 40,
            plateau_window: 5,
            plateau_tolerance: 0.5,
            clip: 0.01,
            critic_scale: 3e4,
            critic_adam: AdamConfig::default(),
            generator_adam: AdamConfig::default(),
            noise_dim: 8,
            critic_hidden: vec![64, 64],
            generator_hidden: vec![64, 64],
            leaky_slope: 0.2,
            eval_samples: 1000,
            eps_monitor: None,
            human_timeout_secs: 120.0,
            seed: 0,
        }
    }
}

fn adam_ok(field: &str, a: &AdamConfig) -> Result<()> {
    if !(a.lr > 0.0 && a.lr.is_finite()) {
        return Err(Error::config(format!("{field}.lr"), "must be positive"));
    }
    if !(0.0..1.0).contains(&a.beta1) {
        return Err(Error::config(format!("{field}.beta1"), "must lie in [0, 1)"));
    }
    if !(0.0..1.0).contains(&a.beta2) {
        return Err(Error::config(format!("{field}.beta2"), "must lie in [0, 1)"));
    }
    if !(a.epsilon > 0.0) {
        return Err(Error::config(format!("{field}.epsilon"), "must be positive"));
    }
    Ok(())
}

impl TrainingConfig {
    /// Parses a TOML table of training settings; absent keys keep defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("training", e.to_string()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            Error::config(format!("training.{}", e.path()), e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("training.{name}"), format!("must be finite and >= 0, got {v}")))
            }
        };
        nonneg("lambda", self.lambda)?;
        nonneg("lambda_g", self.lambda_g)?;
        nonneg("margin", self.margin)?;
        nonneg("plateau_tolerance", self.plateau_tolerance)?;
        nonneg("human_timeout_secs", self.human_timeout_secs)?;
        let positive = [
            ("n_i", self.n_i),
            ("n_critic", self.n_critic),
            ("batch_size", self.batch_size),
            ("noise_dim", self.noise_dim),
            ("eval_samples", self.eval_samples),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("training.{name}"), "must be positive"));
            }
        }
        if !(self.clip > 0.0 && self.clip.is_finite()) {
            return Err(Error::config("training.clip", "must be positive"));
        }
        if !(self.critic_scale > 0.0 && self.critic_scale.is_finite()) {
            return Err(Error::config("training.critic_scale", "must be positive"));
        }
        if self.critic_hidden.contains(&0) {
            return Err(Error::config("training.critic_hidden", "sizes must be positive"));
        }
        if self.generator_hidden.contains(&0) {
            return Err(Error::config("training.generator_hidden", "sizes must be positive"));
        }
        if let Some(eps) = self.eps_monitor {
            if !(eps > 0.0) {
                return Err(Error::config("training.eps_monitor", "must be positive"));
            }
        }
        adam_ok("training.critic_adam", &self.critic_adam)?;
        adam_ok("training.generator_adam", &self.generator_adam)?;
        Ok(())
    }
}
