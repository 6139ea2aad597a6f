use std::path::PathBuf;

use knockout_lab::mask::{schedule_global1, schedule_global2, schedule_window};
use knockout_lab::model::golden::GoldenTrace;
use knockout_lab::model::ForwardOptions;
use knockout_lab::{KnockoutType, LayerSchedule, ModelConfig, TokenId, TokenLayout, ToyTransformer};

fn model(depth: usize, seed: u64) -> ToyTransformer {
    ToyTransformer::init(ModelConfig::new(depth, 32, 4, 64, 50, seed)).unwrap()
}

fn tokens(layout: &TokenLayout, vocab: u32) -> Vec<TokenId> {
    (0..layout.total_len() as u32).map(|i| (i * 7 + 3) % vocab).collect()
}

#[test]
fn lvk_ignores_video_token_ids() {
    let layout = TokenLayout::new(3, 5, 6).unwrap();
    let m = model(4, 11);
    let schedule = schedule_global2(4, KnockoutType::Lvk).unwrap();
    let base = tokens(&layout, 50);
    let reference = m.forward(&base, &layout, &schedule).unwrap();
    for i in layout.video_span() {
        let mut changed = base.clone();
        changed[i] = (changed[i] + 13) % 50;
        let trace = m.forward(&changed, &layout, &schedule).unwrap();
        for (a, b) in trace.final_logits.iter().zip(&reference.final_logits) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() as f64 <= 1e-6 * y.abs().max(1.0) as f64);
            }
        }
    }
}

#[test]
fn video_ids_matter_without_knockout() {
    let layout = TokenLayout::new(3, 5, 6).unwrap();
    let m = model(4, 11);
    let schedule = LayerSchedule::baseline(4).unwrap();
    let base = tokens(&layout, 50);
    let mut changed = base.clone();
    changed[0] = (changed[0] + 13) % 50;
    let a = m.forward(&base, &layout, &schedule).unwrap();
    let b = m.forward(&changed, &layout, &schedule).unwrap();
    assert_ne!(a.final_logits, b.final_logits);
}

#[test]
fn forward_is_deterministic() {
    let layout = TokenLayout::new(2, 4, 5).unwrap();
    let schedule = schedule_window(6, KnockoutType::Vsk, 4, 2).unwrap();
    let opts = ForwardOptions { capture_hidden: true, capture_attention: true };
    let t = tokens(&layout, 50);
    let a = model(6, 3).forward_with(&t, &layout, &schedule, opts).unwrap();
    let b = model(6, 3).forward_with(&t, &layout, &schedule, opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(model(6, 3).weight_checksum(), model(6, 3).weight_checksum());
    assert_ne!(model(6, 3).weight_checksum(), model(6, 4).weight_checksum());
}

#[test]
fn logits_are_finite_under_every_knockout() {
    let layout = TokenLayout::new(3, 4, 3).unwrap();
    let m = model(3, 5);
    let t = tokens(&layout, 50);
    for kt in KnockoutType::KNOCKOUTS {
        let trace = m.forward(&t, &layout, &schedule_global2(3, kt).unwrap()).unwrap();
        assert!(trace.final_logits.iter().flatten().all(|x| x.is_finite()));
    }
}

#[test]
fn attention_rows_sum_to_one() {
    let layout = TokenLayout::new(3, 3, 4).unwrap();
    let m = model(4, 9);
    let opts = ForwardOptions { capture_attention: true, ..Default::default() };
    let t = tokens(&layout, 50);
    let schedules = [
        LayerSchedule::baseline(4).unwrap(),
        schedule_global1(4, 2).unwrap(),
        schedule_global2(4, KnockoutType::Vtk).unwrap(),
        schedule_global2(4, KnockoutType::Vsk).unwrap(),
        "L T S N exit=2".parse().unwrap(),
    ];
    for s in &schedules {
        let trace = m.forward_with(&t, &layout, s, opts).unwrap();
        let probes = trace.attention.expect("attention was requested");
        assert!(!probes.is_empty());
        for probe in &probes {
            let sum: f64 = probe.weights.iter().map(|(_, w)| w).sum();
            assert!((sum - 1.0).abs() <= 1e-6, "{s}: layer {} query {} sums to {sum}", probe.layer, probe.query);
        }
    }
}

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden_l4_d32_s7.json")
}

fn golden_run() -> GoldenTrace {
    let config = ModelConfig::new(4, 32, 4, 64, 128, 7);
    let m = ToyTransformer::init(config).unwrap();
    let layout = TokenLayout::new(2, 4, 6).unwrap();
    let t: Vec<TokenId> = (0..layout.total_len() as u32).map(|i| (i * 37 + 5) % 128).collect();
    let schedule: LayerSchedule = "N L T S exit=3".parse().unwrap();
    GoldenTrace::record(&m, &t, &layout, &schedule).unwrap()
}

#[test]
fn matches_golden_trace() {
    let path = golden_path();
    let current = golden_run();
    if std::env::var_os("KNOCKOUT_LAB_BLESS").is_some() {
        current.save(&path).unwrap();
    }
    let golden = GoldenTrace::load(&path).expect("golden file; regenerate with KNOCKOUT_LAB_BLESS=1");
    assert!(current.same_key(&golden), "golden key changed");
    let err = current.max_relative_error(&golden).expect("shape mismatch");
    assert!(err <= 1e-5, "max relative error {err}");
}
