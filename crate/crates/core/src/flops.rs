//! Attention cost accounting by counting allowed query-key pairs.
//!
//! One pair costs one score in `QK^T` and one weighted row of `V`, so the
//! pair count is proportional to attention FLOPs and the `2*d` factor
//! cancels in every ratio. FFN and projection costs are not counted.

use serde::{Deserialize, Serialize};

use crate::layout::TokenLayout;
use crate::mask::{KnockoutType, LayerSchedule};

/// One-line description of the counting convention, printed with reports.
pub const COST_CONVENTION: &str = "cost unit: allowed causal query-key pairs per layer \
(QK^T scores and attention-weighted V rows); FFN and projections excluded";

/// How knocked-out pairs are charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CostView {
    /// Blocked pairs are not computed.
    #[default]
    Skipped,
    /// Blocked pairs are computed and then masked, so knockouts save nothing.
    /// Early exit still removes video tokens.
    Dense,
}

fn triangle(n: u64) -> u64 {
    n * (n + 1) / 2
}

/// Allowed pairs in one layer, in closed form.
pub fn layer_pair_count(layout: &TokenLayout, kt: KnockoutType, video_present: bool) -> u64 {
    let frames = layout.num_frames() as u64;
    let per_frame = layout.tokens_per_frame() as u64;
    let text = layout.text_len() as u64;
    let video = frames * per_frame;
    if !video_present {
        return triangle(text);
    }
    let full = triangle(video + text);
    match kt {
        KnockoutType::NoKnockout => full,
        KnockoutType::Lvk => full - text * video,
        KnockoutType::Vtk => frames * triangle(per_frame) + text * video + triangle(text),
        // off-diagonal within-frame pairs go
        KnockoutType::Vsk => full - frames * per_frame * (per_frame - 1) / 2,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCount {
    pub per_layer: Vec<u64>,
    pub total: u128,
    pub baseline_total: u128,
}

impl PairCount {
    pub fn ratio(&self) -> FlopsRatio {
        FlopsRatio { numerator: self.total, denominator: self.baseline_total }
    }
}

pub fn schedule_pair_count(layout: &TokenLayout, schedule: &LayerSchedule, view: CostView) -> PairCount {
    let per_layer: Vec<u64> = (1..=schedule.depth())
        .map(|layer| {
            let present = schedule.video_present(layer);
            let kt = match view {
                CostView::Skipped => schedule.knockout_at(layer),
                CostView::Dense => KnockoutType::NoKnockout,
            };
            layer_pair_count(layout, kt, present)
        })
        .collect();
    let total = per_layer.iter().map(|&c| c as u128).sum();
    let baseline_total =
        schedule.depth() as u128 * layer_pair_count(layout, KnockoutType::NoKnockout, true) as u128;
    PairCount { per_layer, total, baseline_total }
}

/// Exact ratio of schedule cost to baseline cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopsRatio {
    pub numerator: u128,
    pub denominator: u128,
}

impl FlopsRatio {
    pub fn as_f64(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }

    pub fn percent(&self) -> f64 {
        100.0 * self.as_f64()
    }

    /// Percentage in tenths, rounded half up using integer arithmetic.
    pub fn percent_tenths(&self) -> u128 {
        (self.numerator * 2000 + self.denominator) / (2 * self.denominator)
    }
}

impl std::fmt::Display for FlopsRatio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tenths = self.percent_tenths();
        write!(f, "{}.{}%", tenths / 10, tenths % 10)
    }
}

pub fn schedule_flops_ratio(layout: &TokenLayout, schedule: &LayerSchedule) -> FlopsRatio {
    schedule_pair_count(layout, schedule, CostView::Skipped).ratio()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopsRow {
    pub layer: usize,
    pub knockout: KnockoutType,
    pub video_present: bool,
    pub pairs: u64,
    /// Cost of layers `1..=layer` over the cost of the full baseline model.
    pub cumulative_ratio: f64,
}

pub fn flops_table(layout: &TokenLayout, schedule: &LayerSchedule, view: CostView) -> Vec<FlopsRow> {
    let count = schedule_pair_count(layout, schedule, view);
    let mut running = 0u128;
    count
        .per_layer
        .iter()
        .enumerate()
        .map(|(i, &pairs)| {
            running += pairs as u128;
            FlopsRow {
                layer: i + 1,
                knockout: schedule.knockout_at(i + 1),
                video_present: schedule.video_present(i + 1),
                pairs,
                cumulative_ratio: running as f64 / count.baseline_total as f64,
            }
        })
        .collect()
}
