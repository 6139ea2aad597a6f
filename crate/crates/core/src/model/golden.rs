//! Golden logit dumps for regression tests, keyed by configuration hash,
//! seed, input hash and schedule string.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ToyTransformer, TokenId};
use crate::error::{KnockoutError, Result};
use crate::layout::TokenLayout;
use crate::mask::LayerSchedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenTrace {
    pub config_hash: String,
    pub seed: u64,
    pub input_hash: String,
    pub schedule: String,
    pub text_positions: Vec<usize>,
    pub logits: Vec<Vec<f32>>,
}

pub fn input_hash(tokens: &[TokenId], layout: &TokenLayout) -> String {
    let mut hasher = Sha256::new();
    for v in [layout.num_frames(), layout.tokens_per_frame(), layout.text_len()] {
        hasher.update((v as u64).to_le_bytes());
    }
    for t in tokens {
        hasher.update(t.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

impl GoldenTrace {
    pub fn record(
        model: &ToyTransformer,
        tokens: &[TokenId],
        layout: &TokenLayout,
        schedule: &LayerSchedule,
    ) -> Result<Self> {
        let trace = model.forward(tokens, layout, schedule)?;
        Ok(Self {
            config_hash: model.config().hash_hex(),
            seed: model.config().seed,
            input_hash: input_hash(tokens, layout),
            schedule: schedule.to_string(),
            text_positions: trace.text_positions,
            logits: trace.final_logits,
        })
    }

    pub fn same_key(&self, other: &GoldenTrace) -> bool {
        self.config_hash == other.config_hash
            && self.seed == other.seed
            && self.input_hash == other.input_hash
            && self.schedule == other.schedule
    }

    /// Largest `|a - b| / max(|b|, 1)` over all logits; `None` when the
    /// shapes differ.
    pub fn max_relative_error(&self, reference: &GoldenTrace) -> Option<f64> {
        if self.text_positions != reference.text_positions
            || self.logits.len() != reference.logits.len()
        {
            return None;
        }
        let mut worst = 0.0f64;
        for (a, b) in self.logits.iter().zip(&reference.logits) {
            if a.len() != b.len() {
                return None;
            }
            for (&x, &y) in a.iter().zip(b) {
                let err = (x as f64 - y as f64).abs() / (y as f64).abs().max(1.0);
                worst = worst.max(err);
            }
        }
        Some(worst)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| KnockoutError::Serialize(e.to_string()))?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| KnockoutError::Serialize(e.to_string()))
    }
}
