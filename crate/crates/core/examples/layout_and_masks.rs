//! Token layout roles and the four attention rules on a tiny sequence.
//!
//! cargo run --example layout_and_masks

use knockout_lab::mask::materialize_mask;
use knockout_lab::{AttentionRule, KnockoutType, TokenLayout};

fn main() -> knockout_lab::Result<()> {
    let layout = TokenLayout::new(2, 3, 2)?;
    println!("{layout}");
    for i in 0..layout.total_len() {
        println!("  {i:>2} -> {:?}", layout.role_of(i)?);
    }

    for kt in KnockoutType::ALL {
        let mask = materialize_mask(&AttentionRule::new(layout, kt))?;
        println!("\n{kt} (# = attends, . = blocked)");
        for q in 0..mask.len() {
            let row: String = mask.row(q)[..=q].iter().map(|&v| if v == 0.0 { '#' } else { '.' }).collect();
            println!("  {q:>2} {row}");
        }
    }
    Ok(())
}
