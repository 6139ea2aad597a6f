//! The hand-built retrieval circuit: the answer marker sits in one video
//! frame and the final text token has to copy it out.
//!
//! cargo run --example retrieval_circuit

use knockout_lab::mask::schedule_global2;
use knockout_lab::model::circuit::{all_placements, build_retrieval_circuit, placement_tokens};
use knockout_lab::model::ForwardOptions;
use knockout_lab::{KnockoutType, LayerSchedule, TokenLayout};

fn main() -> knockout_lab::Result<()> {
    let layout = TokenLayout::new(8, 4, 2)?;
    let markers = [2, 3, 4, 5];
    let model = build_retrieval_circuit(&layout, &markers)?;
    let placements = all_placements(&layout, markers.len());

    // One instance, with the attention of the final token at the copy layer.
    let p = placements[5];
    let tokens = placement_tokens(&layout, &markers, p);
    let opts = ForwardOptions { capture_attention: true, ..Default::default() };
    let trace = model.forward_with(&tokens, &layout, &LayerSchedule::baseline(model.depth())?, opts)?;
    let last = layout.total_len() - 1;
    let probe = trace
        .attention
        .iter()
        .flatten()
        .find(|a| a.layer == 7 && a.query == last)
        .expect("probe at copy layer");
    let (key, weight) = probe.weights.iter().copied().fold((0, 0.0), |b, w| if w.1 > b.1 { w } else { b });
    println!("marker {} at index {}; copy layer attends to {key} with weight {weight:.4}", markers[p.option], layout.frame_span(p.frame).start + p.local);

    for kt in KnockoutType::ALL {
        let schedule = match kt {
            KnockoutType::NoKnockout => LayerSchedule::baseline(model.depth())?,
            kt => schedule_global2(model.depth(), kt)?,
        };
        let mut hits = 0;
        for &p in &placements {
            let tokens = placement_tokens(&layout, &markers, p);
            hits += usize::from(model.score_options(&tokens, &layout, &schedule, &markers)?.chosen == p.option);
        }
        println!("{:>5}: accuracy {:.2}", kt.name(), hits as f64 / placements.len() as f64);
    }
    Ok(())
}
