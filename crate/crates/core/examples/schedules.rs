//! Building, printing and parsing per-layer knockout schedules.
//!
//! cargo run --example schedules

use knockout_lab::mask::{cutoff_grid, schedule_efficiency, schedule_global1, schedule_global2, schedule_window};
use knockout_lab::{KnockoutType, LayerSchedule};

fn main() -> knockout_lab::Result<()> {
    let depth = 8;
    println!("global1 cutoffs for L={depth}: {:?}", cutoff_grid(depth));
    println!("global1 cutoff 3:  {}", schedule_global1(depth, 3)?);
    println!("global2 VTK:       {}", schedule_global2(depth, KnockoutType::Vtk)?);
    println!("window LVK 3..=6:  {}", schedule_window(depth, KnockoutType::Lvk, 6, 4)?);
    println!("efficiency s=2 e=5: {}", schedule_efficiency(depth, 2, 5)?);

    let parsed: LayerSchedule = "T T N N N L L L exit=5".parse()?;
    println!("\nparsed {parsed}: depth {}, layer ratio {:.3}", parsed.depth(), parsed.layer_ratio());
    for layer in 1..=parsed.depth() {
        println!("  layer {layer}: {} video_present={}", parsed.knockout_at(layer), parsed.video_present(layer));
    }

    match "N N X".parse::<LayerSchedule>() {
        Ok(s) => println!("unexpected: {s}"),
        Err(e) => println!("\nrejected: {e}"),
    }
    Ok(())
}
