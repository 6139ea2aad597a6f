//! Causal attention mask and the three attention knockouts.
//!
//! A knockout removes edges from the causal lower triangle:
//!
//! - **LVK** (language-to-video): text queries may not read video keys.
//! - **VTK** (video temporal): video queries may not read video keys from a
//!   different frame.
//! - **VSK** (video spatial): video queries may not read other video keys in
//!   their own frame.
//!
//! The diagonal is always kept so every softmax row has at least one entry.
//! Blocked pairs get `-inf` before softmax; nothing is renormalized after.

mod schedule;

pub use schedule::{
    cutoff_grid, schedule_efficiency, schedule_global1, schedule_global2, schedule_window,
    LayerSchedule, DEFAULT_WINDOW_LEN,
};

use serde::{Deserialize, Serialize};

use crate::error::{KnockoutError, Result};
use crate::layout::TokenLayout;

/// Largest sequence length [`materialize_mask`] will allocate for.
pub const DENSE_MASK_LIMIT: usize = 16_384;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum KnockoutType {
    #[default]
    NoKnockout,
    /// Language-to-video.
    Lvk,
    /// Video temporal (cross-frame).
    Vtk,
    /// Video spatial (within-frame).
    Vsk,
}

impl KnockoutType {
    pub const ALL: [KnockoutType; 4] =
        [KnockoutType::NoKnockout, KnockoutType::Lvk, KnockoutType::Vtk, KnockoutType::Vsk];

    /// The three knockouts, in the order sweeps iterate them.
    pub const KNOCKOUTS: [KnockoutType; 3] = [KnockoutType::Lvk, KnockoutType::Vtk, KnockoutType::Vsk];

    /// One-letter code used in schedule strings.
    pub fn symbol(self) -> char {
        match self {
            KnockoutType::NoKnockout => 'N',
            KnockoutType::Lvk => 'L',
            KnockoutType::Vtk => 'T',
            KnockoutType::Vsk => 'S',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'N' => Some(KnockoutType::NoKnockout),
            'L' => Some(KnockoutType::Lvk),
            'T' => Some(KnockoutType::Vtk),
            'S' => Some(KnockoutType::Vsk),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KnockoutType::NoKnockout => "none",
            KnockoutType::Lvk => "LVK",
            KnockoutType::Vtk => "VTK",
            KnockoutType::Vsk => "VSK",
        }
    }
}

impl std::fmt::Display for KnockoutType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for KnockoutType {
    type Err = KnockoutError;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let parsed = match t.to_ascii_lowercase().as_str() {
            "n" | "none" | "noknockout" | "no-knockout" => Some(KnockoutType::NoKnockout),
            "l" | "lvk" | "lv-k" => Some(KnockoutType::Lvk),
            "t" | "vtk" | "vt-k" => Some(KnockoutType::Vtk),
            "s" | "vsk" | "vs-k" => Some(KnockoutType::Vsk),
            _ => None,
        };
        parsed.ok_or_else(|| KnockoutError::Usage(format!("unknown knockout type {t:?}")))
    }
}

/// Whether query `q` may attend key `k` under a knockout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionRule {
    pub layout: TokenLayout,
    pub knockout: KnockoutType,
}

impl AttentionRule {
    pub fn new(layout: TokenLayout, knockout: KnockoutType) -> Self {
        Self { layout, knockout }
    }

    pub fn allowed(&self, q: usize, k: usize) -> Result<bool> {
        let len = self.layout.total_len();
        for index in [q, k] {
            if index >= len {
                return Err(KnockoutError::OutOfBounds { index, len });
            }
        }
        Ok(self.allows(q, k))
    }

    /// [`allowed`](Self::allowed) without bounds checks, for inner loops.
    #[inline]
    pub fn allows(&self, q: usize, k: usize) -> bool {
        if k > q {
            return false;
        }
        if k == q {
            return true;
        }
        let layout = &self.layout;
        match self.knockout {
            KnockoutType::NoKnockout => true,
            KnockoutType::Lvk => !(!layout.is_video(q) && layout.is_video(k)),
            KnockoutType::Vtk => match (layout.frame_of(q), layout.frame_of(k)) {
                (Some(fq), Some(fk)) => fq == fk,
                _ => true,
            },
            KnockoutType::Vsk => match (layout.frame_of(q), layout.frame_of(k)) {
                (Some(fq), Some(fk)) => fq != fk,
                _ => true,
            },
        }
    }
}

/// Dense additive mask, row-major `len x len`. Entries are `0.0` where
/// attention is allowed and `f32::NEG_INFINITY` where it is blocked.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveMask {
    len: usize,
    data: Vec<f32>,
}

impl AdditiveMask {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, q: usize, k: usize) -> f32 {
        self.data[q * self.len + k]
    }

    pub fn row(&self, q: usize) -> &[f32] {
        &self.data[q * self.len..(q + 1) * self.len]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

pub fn materialize_mask(rule: &AttentionRule) -> Result<AdditiveMask> {
    let len = rule.layout.total_len();
    if len > DENSE_MASK_LIMIT {
        return Err(KnockoutError::MaskTooLarge { len, limit: DENSE_MASK_LIMIT });
    }
    let mut data = vec![f32::NEG_INFINITY; len * len];
    for q in 0..len {
        let row = &mut data[q * len..(q + 1) * len];
        for (k, cell) in row.iter_mut().enumerate().take(q + 1) {
            if rule.allows(q, k) {
                *cell = 0.0;
            }
        }
    }
    Ok(AdditiveMask { len, data })
}
