//! Hyperparameters. Defaults: Adam at 0.001,
//! 128 bags per batch, LSTM width 300, L = 120, d_p = 5, d = 8, C = 32,
//! dropout 0.5 and 3 routing iterations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablations {
    /// Word-level attention over Bi-LSTM states.
    pub word_att: bool,
    /// Capsule layers; when off a dense sigmoid head reads the pooled sequence.
    pub capsule: bool,
}

impl Default for Ablations {
    fn default() -> Self {
        Ablations { word_att: true, capsule: true }
    }
}

/// Where train-time dropout is applied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropoutSite {
    #[default]
    LstmOutput,
    Embeddings,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Bags per optimizer step.
    pub batch_size: usize,
    /// LSTM width `B`; Bi-LSTM states are `2B` wide.
    pub lstm_hidden: usize,
    /// Maximum sentence length `L`.
    pub max_len: usize,
    /// Word vector width `d_w`.
    pub word_dim: usize,
    /// Position embedding width `d_p`.
    pub position_dim: usize,
    /// Entity slots `M` (2 for single pairs, 4 for two pairs).
    pub entity_slots: usize,
    /// Capsule dimension `d`.
    pub capsule_dim: usize,
    /// Capsule channels `C` per window.
    pub capsule_channels: usize,
    /// Dropout rate (probability of zeroing).
    pub dropout: f64,
    pub dropout_site: DropoutSite,
    pub routing_iters: usize,
    pub epochs: usize,
    pub seed: u64,
    pub tune_word_embeddings: bool,
    pub ablations: Ablations,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 128,
            lstm_hidden: 300,
            max_len: 120,
            word_dim: 50,
            position_dim: 5,
            entity_slots: 2,
            capsule_dim: 8,
            capsule_channels: 32,
            dropout: 0.5,
            dropout_site: DropoutSite::LstmOutput,
            routing_iters: 3,
            epochs: 10,
            seed: 0,
            tune_word_embeddings: false,
            ablations: Ablations::default(),
        }
    }
}

impl TrainConfig {
    /// Input row width `V = d_w + d_p * M`.
    pub fn input_width(&self) -> usize {
        self.word_dim + self.position_dim * self.entity_slots
    }

    /// Width of a Bi-LSTM state, `2B`.
    pub fn state_width(&self) -> usize {
        2 * self.lstm_hidden
    }

    pub fn keep_prob(&self) -> f64 {
        1.0 - self.dropout
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, why: &str| Err(Error::Config(format!("`{field}`: {why}")));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate", "must be a finite non-negative number");
        }
        if self.batch_size == 0 {
            return fail("batch_size", "must be at least 1");
        }
        for (field, v) in [
            ("lstm_hidden", self.lstm_hidden),
            ("max_len", self.max_len),
            ("word_dim", self.word_dim),
            ("position_dim", self.position_dim),
            ("capsule_dim", self.capsule_dim),
            ("capsule_channels", self.capsule_channels),
        ] {
            if v == 0 {
                return fail(field, "must be positive");
            }
        }
        if self.entity_slots != 2 && self.entity_slots != 4 {
            return fail("entity_slots", "must be 2 or 4");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout", "must lie in [0, 1)");
        }
        if self.routing_iters == 0 {
            return fail("routing_iters", "must be at least 1");
        }
        Ok(())
    }
}
