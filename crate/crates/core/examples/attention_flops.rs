//! Attention cost of the efficiency schedules on a 7B-sized layout:
//! 32 frames of 196 tokens, 28 layers.
//!
//! cargo run --example attention_flops

use knockout_lab::flops::{layer_pair_count, schedule_flops_ratio, COST_CONVENTION};
use knockout_lab::mask::schedule_efficiency;
use knockout_lab::{KnockoutType, LayerSchedule, TokenLayout};

fn main() -> knockout_lab::Result<()> {
    let layout = TokenLayout::new(32, 196, 100)?;
    println!("{COST_CONVENTION}");
    println!("{layout}\n");

    for kt in KnockoutType::ALL {
        println!("{:>5} pairs per layer: {:>12}", kt.name(), layer_pair_count(&layout, kt, true));
    }
    println!("{:>5} pairs per layer: {:>12}\n", "exit", layer_pair_count(&layout, KnockoutType::NoKnockout, false));

    let rows: [(&str, LayerSchedule); 4] = [
        ("baseline", LayerSchedule::baseline(28)?),
        ("exit only", schedule_efficiency(28, 0, 18)?),
        ("window only", schedule_efficiency(28, 8, 28)?),
        ("exit + window", schedule_efficiency(28, 8, 18)?),
    ];
    for (name, schedule) in rows {
        println!("{name:<14} {:>7}  {schedule}", schedule_flops_ratio(&layout, &schedule).to_string());
    }
    Ok(())
}
