//! Staged LVK cutoffs on a random model, reported by logit drift, and
//! written as CSV.
//!
//! cargo run --example cutoff_sweep [out.csv]

use knockout_lab::report::{emit_report, render_report, ReportFormat};
use knockout_lab::sweep::{run_sweep, ProbeTask, SweepSpec};
use knockout_lab::{ModelConfig, TokenLayout, ToyTransformer};

fn main() -> knockout_lab::Result<()> {
    let config = ModelConfig::new(12, 32, 4, 64, 64, 42);
    let model = ToyTransformer::init(config)?;
    let layout = TokenLayout::new(4, 8, 6)?;
    let task = ProbeTask::random(layout, 64, 8, 1)?;

    let records = run_sweep(&SweepSpec::global1(model.depth()), &model, &task)?;
    for r in &records {
        println!("cutoff {:>2}  layer ratio {:.3}  drift {:.5}  flops {:.1}%", r.cutoff_or_window_end.unwrap(), r.layer_ratio, r.logit_drift, r.flops_ratio);
    }
    match std::env::args().nth(1) {
        Some(path) => emit_report(&records, ReportFormat::Csv, path.as_ref())?,
        None => print!("\n{}", render_report(&records, ReportFormat::Csv)?),
    }
    Ok(())
}
