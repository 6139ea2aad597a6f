//! A small deterministic decoder-only transformer.
//!
//! Each layer is pre-norm: `h += Attn(norm(h))`, then `h += FFN(norm(h))`,
//! with RMS normalization, rotary positions on Q/K, a GELU feed-forward and
//! an untied unembedding. Weights are stored as `f32`; dot products and
//! softmax sums accumulate in `f64`.
//!
//! The model is frozen. Weights come either from a seeded generator
//! ([`ToyTransformer::init`]) or are set by hand ([`circuit`]).

pub mod circuit;
mod forward;
pub mod golden;
mod rope;

pub use forward::{argmax_first, AttentionProbe, ForwardOptions, ForwardTrace, LayerStates, OptionScores};
pub use rope::apply_rope;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{KnockoutError, Result};

pub type TokenId = u32;

pub const DEFAULT_ROPE_BASE: f64 = 10_000.0;
pub(crate) const NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub depth: usize,
    pub model_dim: usize,
    pub head_count: usize,
    pub ffn_dim: usize,
    pub vocab_size: usize,
    pub seed: u64,
    #[serde(default = "default_rope_base")]
    pub rope_base: f64,
}

fn default_rope_base() -> f64 {
    DEFAULT_ROPE_BASE
}

impl ModelConfig {
    pub fn new(
        depth: usize,
        model_dim: usize,
        head_count: usize,
        ffn_dim: usize,
        vocab_size: usize,
        seed: u64,
    ) -> Self {
        Self { depth, model_dim, head_count, ffn_dim, vocab_size, seed, rope_base: DEFAULT_ROPE_BASE }
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.head_count
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("depth", self.depth),
            ("model_dim", self.model_dim),
            ("head_count", self.head_count),
            ("ffn_dim", self.ffn_dim),
            ("vocab_size", self.vocab_size),
        ];
        for (name, value) in dims {
            if value == 0 {
                return Err(KnockoutError::Config(format!("{name} must be at least 1")));
            }
        }
        if !self.model_dim.is_multiple_of(self.head_count) {
            return Err(KnockoutError::Config(format!(
                "model_dim {} is not divisible by head_count {}",
                self.model_dim, self.head_count
            )));
        }
        // rotary embedding rotates dimension pairs
        if !self.head_dim().is_multiple_of(2) {
            return Err(KnockoutError::Config(format!("head_dim {} must be even", self.head_dim())));
        }
        if !(self.rope_base.is_finite() && self.rope_base > 1.0) {
            return Err(KnockoutError::Config(format!("rope_base {} must exceed 1", self.rope_base)));
        }
        Ok(())
    }

    /// Stable hex digest of the configuration.
    pub fn hash_hex(&self) -> String {
        let canonical = format!(
            "depth={};model_dim={};heads={};ffn={};vocab={};seed={};rope_base={:e}",
            self.depth,
            self.model_dim,
            self.head_count,
            self.ffn_dim,
            self.vocab_size,
            self.seed,
            self.rope_base
        );
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

/// Row-major `rows x cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(KnockoutError::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    fn random(rows: usize, cols: usize, scale: f32, rng: &mut ChaCha8Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f32) {
        self.data[r * self.cols + c] = value;
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// `out = self * x`, accumulating in f64.
    pub(crate) fn matvec(&self, x: &[f32], out: &mut [f32]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            let acc: f64 = self.row(r).iter().zip(x).map(|(&w, &v)| w as f64 * v as f64).sum();
            *o = acc as f32;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub attn_norm: Vec<f32>,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub ffn_norm: Vec<f32>,
    /// `ffn_dim x model_dim`
    pub w_in: Matrix,
    /// `model_dim x ffn_dim`
    pub w_out: Matrix,
}

impl LayerWeights {
    /// A layer that leaves the residual stream untouched.
    pub fn identity(config: &ModelConfig) -> Self {
        let d = config.model_dim;
        Self {
            attn_norm: vec![1.0; d],
            wq: Matrix::zeros(d, d),
            wk: Matrix::zeros(d, d),
            wv: Matrix::zeros(d, d),
            wo: Matrix::zeros(d, d),
            ffn_norm: vec![1.0; d],
            w_in: Matrix::zeros(config.ffn_dim, d),
            w_out: Matrix::zeros(d, config.ffn_dim),
        }
    }

    fn check(&self, config: &ModelConfig) -> Result<()> {
        let (d, f) = (config.model_dim, config.ffn_dim);
        let shapes = [
            ("wq", &self.wq, d, d),
            ("wk", &self.wk, d, d),
            ("wv", &self.wv, d, d),
            ("wo", &self.wo, d, d),
            ("w_in", &self.w_in, f, d),
            ("w_out", &self.w_out, d, f),
        ];
        for (name, m, rows, cols) in shapes {
            if m.rows != rows || m.cols != cols {
                return Err(KnockoutError::Shape(format!(
                    "{name} is {}x{}, expected {rows}x{cols}",
                    m.rows, m.cols
                )));
            }
        }
        if self.attn_norm.len() != d || self.ffn_norm.len() != d {
            return Err(KnockoutError::Shape("norm gain length differs from model_dim".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyTransformer {
    config: ModelConfig,
    embedding: Matrix,
    layers: Vec<LayerWeights>,
    final_norm: Vec<f32>,
    unembedding: Matrix,
}

impl ToyTransformer {
    /// Seeded initialization. Every matrix is drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` with ChaCha8 seeded by
    /// `config.seed`; embeddings from `U(-1, 1)`; norm gains are 1. Draw
    /// order: embedding, then per layer `wq wk wv wo w_in w_out`, then the
    /// unembedding.
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (d, f, v) = (config.model_dim, config.ffn_dim, config.vocab_size);
        let scale_d = 1.0 / (d as f32).sqrt();
        let scale_f = 1.0 / (f as f32).sqrt();
        let embedding = Matrix::random(v, d, 1.0, &mut rng);
        let layers = (0..config.depth)
            .map(|_| LayerWeights {
                attn_norm: vec![1.0; d],
                wq: Matrix::random(d, d, scale_d, &mut rng),
                wk: Matrix::random(d, d, scale_d, &mut rng),
                wv: Matrix::random(d, d, scale_d, &mut rng),
                wo: Matrix::random(d, d, scale_d, &mut rng),
                ffn_norm: vec![1.0; d],
                w_in: Matrix::random(f, d, scale_d, &mut rng),
                w_out: Matrix::random(d, f, scale_f, &mut rng),
            })
            .collect();
        let unembedding = Matrix::random(v, d, scale_d, &mut rng);
        Ok(Self { config, embedding, layers, final_norm: vec![1.0; d], unembedding })
    }

    pub fn from_parts(
        config: ModelConfig,
        embedding: Matrix,
        layers: Vec<LayerWeights>,
        final_norm: Vec<f32>,
        unembedding: Matrix,
    ) -> Result<Self> {
        config.validate()?;
        let (d, v) = (config.model_dim, config.vocab_size);
        if layers.len() != config.depth {
            return Err(KnockoutError::Shape(format!(
                "{} layers for depth {}",
                layers.len(),
                config.depth
            )));
        }
        for layer in &layers {
            layer.check(&config)?;
        }
        if embedding.rows != v || embedding.cols != d || unembedding.rows != v || unembedding.cols != d
        {
            return Err(KnockoutError::Shape("embedding tables must be vocab_size x model_dim".into()));
        }
        if final_norm.len() != d {
            return Err(KnockoutError::Shape("final norm length differs from model_dim".into()));
        }
        Ok(Self { config, embedding, layers, final_norm, unembedding })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn depth(&self) -> usize {
        self.config.depth
    }

    pub fn layers(&self) -> &[LayerWeights] {
        &self.layers
    }

    /// SHA-256 over the configuration and every weight, little-endian.
    pub fn weight_checksum(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.config.hash_hex().as_bytes());
        let mut feed = |values: &[f32]| {
            for v in values {
                hasher.update(v.to_le_bytes());
            }
        };
        feed(self.embedding.as_slice());
        for layer in &self.layers {
            feed(&layer.attn_norm);
            feed(layer.wq.as_slice());
            feed(layer.wk.as_slice());
            feed(layer.wv.as_slice());
            feed(layer.wo.as_slice());
            feed(&layer.ffn_norm);
            feed(layer.w_in.as_slice());
            feed(layer.w_out.as_slice());
        }
        feed(&self.final_norm);
        feed(self.unembedding.as_slice());
        hex::encode(hasher.finalize())
    }
}
