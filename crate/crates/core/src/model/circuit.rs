//! A hand-weighted retrieval circuit.
//!
//! One video position holds a marker token; the answer is that marker. A
//! single attention head on the copy layer lets the final query token look
//! up the marker and copy its identity into the output. Every other layer is
//! the identity, so the answer travels only along text-to-video attention:
//! LVK on the copy layer breaks retrieval, VTK and VSK leave it alone.
//!
//! Residual stream layout (single head, `d >= 4`, `d` even):
//!
//! | dim        | meaning                        |
//! |------------|--------------------------------|
//! | 0          | "is a marker" flag             |
//! | 1          | "is the query" flag            |
//! | 2 + j      | identity of marker option `j`  |
//!
//! The query and key content sits in the slowest rotary pair so position
//! offsets barely change the match score.

use super::{LayerWeights, Matrix, ModelConfig, ToyTransformer, TokenId};
use crate::error::{KnockoutError, Result};
use crate::layout::TokenLayout;

/// Token for video positions without a marker and for non-query text.
pub const FILLER_TOKEN: TokenId = 0;
/// Token placed at the last text position.
pub const QUERY_TOKEN: TokenId = 1;

/// Pre-softmax score of the marker key at zero offset.
const MATCH_LOGIT: f32 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CircuitShape {
    pub depth: usize,
    /// 1-based layer that performs the copy.
    pub copy_layer: usize,
    pub vocab_size: usize,
}

impl Default for CircuitShape {
    fn default() -> Self {
        Self { depth: 12, copy_layer: 7, vocab_size: 32 }
    }
}

pub fn build_retrieval_circuit(layout: &TokenLayout, markers: &[TokenId]) -> Result<ToyTransformer> {
    build_retrieval_circuit_with(layout, markers, CircuitShape::default())
}

pub fn build_retrieval_circuit_with(
    layout: &TokenLayout,
    markers: &[TokenId],
    shape: CircuitShape,
) -> Result<ToyTransformer> {
    if layout.text_len() == 0 {
        return Err(KnockoutError::Config("the circuit needs at least one text token".into()));
    }
    if markers.is_empty() {
        return Err(KnockoutError::Config("the circuit needs at least one marker".into()));
    }
    if shape.copy_layer == 0 || shape.copy_layer > shape.depth {
        return Err(KnockoutError::Config(format!(
            "copy layer {} outside 1..={}",
            shape.copy_layer, shape.depth
        )));
    }
    if markers.len() + 2 > shape.vocab_size {
        return Err(KnockoutError::Config(format!(
            "{} markers do not fit a vocabulary of {}",
            markers.len(),
            shape.vocab_size
        )));
    }
    for (i, &m) in markers.iter().enumerate() {
        if m == FILLER_TOKEN || m == QUERY_TOKEN || m as usize >= shape.vocab_size {
            return Err(KnockoutError::Config(format!(
                "marker id {m} must lie in 2..{}",
                shape.vocab_size
            )));
        }
        if markers[..i].contains(&m) {
            return Err(KnockoutError::Config(format!("marker id {m} repeated")));
        }
    }

    let k = markers.len();
    let d = (k + 2).max(4).next_multiple_of(2);
    let half = d / 2;
    // Slowest rotary pair is (half - 1, d - 1) with frequency
    // base^(-(d-2)/d). Pick the base so that the largest offset in the
    // layout rotates it by at most 0.05 rad.
    let max_offset = layout.total_len() as f64;
    let rope_base = (max_offset / 0.05).max(2.0).powf(d as f64 / (d as f64 - 2.0));

    let config = ModelConfig {
        depth: shape.depth,
        model_dim: d,
        head_count: 1,
        ffn_dim: 1,
        vocab_size: shape.vocab_size,
        seed: 0,
        rope_base,
    };

    let mut embedding = Matrix::zeros(shape.vocab_size, d);
    embedding.set(QUERY_TOKEN as usize, 1, 1.0);
    for (j, &m) in markers.iter().enumerate() {
        embedding.set(m as usize, 0, 1.0);
        embedding.set(m as usize, 2 + j, 1.0);
    }

    // RMS norm scales the query embedding by sqrt(d) and a marker embedding
    // by sqrt(d/2); attention divides by sqrt(d).
    let query_gain = MATCH_LOGIT / (d as f32 / 2.0).sqrt();
    let mut copy = LayerWeights::identity(&config);
    copy.wq.set(half - 1, 1, query_gain);
    copy.wk.set(half - 1, 0, 1.0);
    for j in 0..k {
        copy.wv.set(2 + j, 2 + j, 1.0);
        copy.wo.set(2 + j, 2 + j, 1.0);
    }

    let layers = (1..=shape.depth)
        .map(|l| if l == shape.copy_layer { copy.clone() } else { LayerWeights::identity(&config) })
        .collect();

    let mut unembedding = Matrix::zeros(shape.vocab_size, d);
    for (j, &m) in markers.iter().enumerate() {
        unembedding.set(m as usize, 2 + j, 1.0);
    }

    ToyTransformer::from_parts(config, embedding, layers, vec![1.0; d], unembedding)
}

/// Where the marker sits and which option it is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub frame: usize,
    pub local: usize,
    pub option: usize,
}

/// Every (frame, option) pair once. The slot inside the frame varies with
/// both so markers do not always sit at the same local index.
pub fn all_placements(layout: &TokenLayout, option_count: usize) -> Vec<Placement> {
    let p = layout.tokens_per_frame();
    (0..layout.num_frames())
        .flat_map(|frame| {
            (0..option_count).map(move |option| Placement {
                frame,
                local: (frame * 7 + option * 3) % p,
                option,
            })
        })
        .collect()
}

/// Input sequence for one placement: filler video with one marker, filler
/// text ending in the query token.
pub fn placement_tokens(layout: &TokenLayout, markers: &[TokenId], placement: Placement) -> Vec<TokenId> {
    let mut tokens = vec![FILLER_TOKEN; layout.total_len()];
    tokens[placement.frame * layout.tokens_per_frame() + placement.local] = markers[placement.option];
    if let Some(last) = tokens.last_mut() {
        *last = QUERY_TOKEN;
    }
    tokens
}
