//! Sliding an LVK window over the circuit shows which layers carry the
//! video-to-text transfer.
//!
//! cargo run --example critical_window

use knockout_lab::model::circuit::build_retrieval_circuit;
use knockout_lab::sweep::{run_sweep, RetrievalTask, SweepSpec};
use knockout_lab::{KnockoutType, TokenLayout};

fn main() -> knockout_lab::Result<()> {
    let layout = TokenLayout::new(8, 4, 2)?;
    let markers = vec![2, 3, 4, 5];
    let model = build_retrieval_circuit(&layout, &markers)?;
    let task = RetrievalTask::new(layout, markers)?;

    let records = run_sweep(&SweepSpec::fine_grained(KnockoutType::Lvk), &model, &task)?;
    println!("{:<26} {:>6} {:>7} {:>8}", "schedule", "score", "delta", "drift");
    for r in &records {
        println!(
            "{:<26} {:>6.2} {:>+7.2} {:>8.4}",
            r.schedule,
            r.score.unwrap_or(f64::NAN),
            r.delta.unwrap_or(f64::NAN),
            r.logit_drift
        );
    }
    Ok(())
}
