use serde::{Deserialize, Serialize};

use crate::candidates::DEFAULT_TAU;
use crate::error::{Error, Result};
use crate::fofe::check_alpha_pair;

/// Training hyperparameters. Defaults follow the published setup where one exists
/// (learning rate 0.1, 30 epochs, forgetting factors 0.5/0.9, tau 20, 128-d word and
/// 64-d character embeddings); the rest are our own choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub dropout: f64,
    pub seed: u64,
    pub hidden_width: usize,
    pub alphas: (f64, f64),
    pub tau: usize,
    pub word_dim: usize,
    pub char_dim: usize,
    pub mention_dim: usize,
    pub context_dim: usize,
    pub description_dim: usize,
    /// Maximum context tokens kept on each side of a mention.
    pub context_window: usize,
    /// Encode the mention surface as a character sequence instead of a bag of words.
    pub char_mode: bool,
    /// Per-pair gradients with a larger Euclidean norm are rescaled to this norm; 0 disables.
    pub max_grad_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 30,
            dropout: 0.5,
            seed: 42,
            hidden_width: 256,
            alphas: (0.5, 0.9),
            tau: DEFAULT_TAU,
            word_dim: 128,
            char_dim: 64,
            mention_dim: 128,
            context_dim: 256,
            description_dim: 128,
            context_window: 64,
            char_mode: false,
            max_grad_norm: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.max_grad_norm >= 0.0 && self.max_grad_norm.is_finite()) {
            return fail(format!(
                "max_grad_norm must be >= 0, got {}",
                self.max_grad_norm
            ));
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.tau == 0 {
            return fail("tau must be at least 1".into());
        }
        let dims = [
            self.hidden_width,
            self.word_dim,
            self.char_dim,
            self.mention_dim,
            self.context_dim,
            self.description_dim,
        ];
        if dims.contains(&0) {
            return fail("all layer dimensions must be positive".into());
        }
        check_alpha_pair(self.alphas)?;
        Ok(())
    }

    /// Glorot-uniform bound `sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
        (6.0 / (fan_in + fan_out) as f64).sqrt()
    }
}

/// Every dimension of a [`RankerModel`](super::RankerModel).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankerDims {
    pub vocab: usize,
    /// Character vocabulary size; zero disables the character path.
    pub charset: usize,
    pub word_dim: usize,
    pub char_dim: usize,
    pub mention_dim: usize,
    pub context_dim: usize,
    pub description_dim: usize,
    pub hidden: usize,
}

impl RankerDims {
    pub fn from_config(cfg: &TrainConfig, vocab: usize, charset: usize) -> Self {
        Self {
            vocab,
            charset: if cfg.char_mode { charset } else { 0 },
            word_dim: cfg.word_dim,
            char_dim: cfg.char_dim,
            mention_dim: cfg.mention_dim,
            context_dim: cfg.context_dim,
            description_dim: cfg.description_dim,
            hidden: cfg.hidden_width,
        }
        .canonical()
    }

    /// Without a character vocabulary the character width is meaningless; zero it so
    /// equal models compare equal after a save and load.
    pub fn canonical(mut self) -> Self {
        if self.charset == 0 {
            self.char_dim = 0;
        }
        self
    }

    pub fn char_mode(&self) -> bool {
        self.charset > 0
    }

    /// Input width of the mention projection.
    pub fn mention_input(&self) -> usize {
        if self.char_mode() {
            2 * self.char_dim
        } else {
            self.word_dim
        }
    }

    /// Width of the concatenated feature vector.
    pub fn feature_width(&self) -> usize {
        self.mention_dim + self.context_dim + self.description_dim
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = TrainConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.learning_rate, 0.1);
        assert_eq!(cfg.epochs, 30);
        assert_eq!(cfg.alphas, (0.5, 0.9));
        assert_eq!(cfg.tau, 20);
        let dims = RankerDims::from_config(&cfg, 10, 5);
        assert_eq!(dims.feature_width(), 512);
        assert!(!dims.char_mode());
    }

    #[test]
    fn glorot_bound_for_128_by_128() {
        // sqrt(6 / 256)
        let b = TrainConfig::glorot_bound(128, 128);
        assert!((b - 0.153_093_108_923_948_62).abs() < 1e-15);
    }

    #[test]
    fn invalid_values_rejected() {
        let base = TrainConfig::default();
        for cfg in [
            TrainConfig {
                learning_rate: 0.0,
                ..base.clone()
            },
            TrainConfig {
                dropout: 1.0,
                ..base.clone()
            },
            TrainConfig {
                epochs: 0,
                ..base.clone()
            },
            TrainConfig {
                alphas: (0.5, 0.5),
                ..base.clone()
            },
            TrainConfig {
                hidden_width: 0,
                ..base.clone()
            },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn toml_round_trip() {
        let cfg = TrainConfig {
            char_mode: true,
            ..TrainConfig::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<TrainConfig>(&text).unwrap(), cfg);
        let partial: TrainConfig = toml::from_str("epochs = 3").unwrap();
        assert_eq!(partial.epochs, 3);
        assert_eq!(partial.learning_rate, 0.1);
    }
}
