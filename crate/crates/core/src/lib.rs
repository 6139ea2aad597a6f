//! Attention-knockout analysis of video-language transformers on a toy
//! decoder.
//!
//! A multimodal sequence is `N` frames of `P` visual tokens followed by `T`
//! text tokens ([`layout`]). Three knockouts cut parts of the causal
//! attention graph ([`mask`]): language-to-video (LVK), cross-frame video
//! (VTK) and within-frame video (VSK). Per-layer [`mask::LayerSchedule`]s
//! drive a deterministic transformer ([`model`]), whose outputs are compared
//! against the unmodified run by the protocols in [`sweep`]. [`flops`]
//! counts the attention pairs each schedule leaves in place.
//!
//! Runnable walkthroughs live in `examples/`; `knockout-lab --help` lists the
//! command-line entry points.

pub mod cli;
pub mod error;
pub mod flops;
pub mod layout;
pub mod mask;
pub mod model;
pub mod report;
pub mod sweep;

pub use error::{KnockoutError, Result};
pub use layout::{TokenLayout, TokenRole};
pub use mask::{AttentionRule, KnockoutType, LayerSchedule};
pub use model::{ModelConfig, ToyTransformer, TokenId};
