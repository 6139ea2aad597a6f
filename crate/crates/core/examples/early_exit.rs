//! Dropping video tokens after layer e gives the same text logits as
//! masking them, at a fraction of the attention cost.
//!
//! cargo run --example early_exit

use knockout_lab::flops::schedule_flops_ratio;
use knockout_lab::mask::{schedule_efficiency, schedule_global1};
use knockout_lab::{ModelConfig, TokenId, TokenLayout, ToyTransformer};

fn main() -> knockout_lab::Result<()> {
    let model = ToyTransformer::init(ModelConfig::new(8, 32, 4, 64, 64, 3))?;
    let layout = TokenLayout::new(6, 12, 10)?;
    let tokens: Vec<TokenId> = (0..layout.total_len() as u32).map(|i| (i * 11 + 1) % 64).collect();

    for e in [2, 4, 6] {
        let masked = schedule_global1(8, e)?;
        let pruned = schedule_efficiency(8, 0, e)?;
        let a = model.forward(&tokens, &layout, &masked)?;
        let b = model.forward(&tokens, &layout, &pruned)?;
        let diff = a
            .final_logits
            .iter()
            .flatten()
            .zip(b.final_logits.iter().flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f32, f32::max);
        println!(
            "exit after {e}: max |masked - pruned| = {diff:e}, cost {} of baseline",
            schedule_flops_ratio(&layout, &pruned)
        );
    }
    Ok(())
}
