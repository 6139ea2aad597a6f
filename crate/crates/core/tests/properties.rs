use knockout_lab::flops::{schedule_flops_ratio, schedule_pair_count, CostView};
use knockout_lab::layout::TokenRole;
use knockout_lab::mask::{
    materialize_mask, schedule_efficiency, schedule_global1, schedule_global2, schedule_window,
};
use knockout_lab::{AttentionRule, KnockoutType, LayerSchedule, TokenLayout};
use proptest::prelude::*;

fn layout_upto(max_frames: usize, max_p: usize, max_t: usize) -> impl Strategy<Value = TokenLayout> {
    (1..=max_frames, 1..=max_p, 0..=max_t).prop_map(|(n, p, t)| TokenLayout::new(n, p, t).unwrap())
}

fn knockout() -> impl Strategy<Value = KnockoutType> {
    prop::sample::select(KnockoutType::ALL.to_vec())
}

fn schedule(max_depth: usize) -> impl Strategy<Value = LayerSchedule> {
    (1..=max_depth)
        .prop_flat_map(|depth| {
            (prop::collection::vec(knockout(), depth), prop::option::of(1..=depth))
        })
        .prop_map(|(per_layer, exit)| LayerSchedule::new(per_layer, exit).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn role_mapping_is_a_bijection(layout in layout_upto(100, 100, 200)) {
        prop_assume!(layout.total_len() <= 10_000);
        for i in 0..layout.total_len() {
            let role = layout.role_of(i).unwrap();
            prop_assert_eq!(layout.index_of(role).unwrap(), i);
            match role {
                TokenRole::Video { .. } => prop_assert!(i < layout.video_len()),
                TokenRole::Text { .. } => prop_assert!(i >= layout.video_len()),
            }
        }
        prop_assert!(layout.role_of(layout.total_len()).is_err());
    }

    #[test]
    fn rules_are_causal_subsets_with_diagonal(layout in layout_upto(6, 6, 8), kt in knockout()) {
        let rule = AttentionRule::new(layout, kt);
        let full = AttentionRule::new(layout, KnockoutType::NoKnockout);
        let s = layout.total_len();
        for q in 0..s {
            prop_assert!(rule.allowed(q, q).unwrap());
            for k in 0..s {
                if rule.allowed(q, k).unwrap() {
                    prop_assert!(k <= q);
                    prop_assert!(full.allowed(q, k).unwrap());
                }
            }
        }
    }

    #[test]
    fn removed_pairs_partition_the_causal_triangle(layout in layout_upto(5, 5, 6)) {
        let rules = KnockoutType::KNOCKOUTS.map(|kt| AttentionRule::new(layout, kt));
        let s = layout.total_len();
        for q in 0..s {
            for k in 0..=q {
                // Each causal pair is either kept by every knockout or removed by exactly one.
                let removed = rules.iter().filter(|r| !r.allowed(q, k).unwrap()).count();
                prop_assert!(removed <= 1, "pair ({}, {}) removed {} times", q, k, removed);
            }
        }
    }

    #[test]
    fn dense_mask_matches_rule(layout in layout_upto(4, 4, 8), kt in knockout()) {
        prop_assume!(layout.total_len() <= 64);
        let rule = AttentionRule::new(layout, kt);
        let mask = materialize_mask(&rule).unwrap();
        for q in 0..layout.total_len() {
            for k in 0..layout.total_len() {
                let open = mask.get(q, k) == 0.0;
                prop_assert_eq!(open, rule.allowed(q, k).unwrap());
                if !open {
                    prop_assert_eq!(mask.get(q, k), f32::NEG_INFINITY);
                }
            }
        }
    }

    #[test]
    fn schedule_text_round_trips(s in schedule(40)) {
        let text = s.to_string();
        let parsed: LayerSchedule = text.parse().unwrap();
        prop_assert_eq!(parsed, s);
    }

    #[test]
    fn constructors_are_pure(depth in 1usize..40, kt in knockout(), x in 1usize..40) {
        let x = x.min(depth);
        prop_assert_eq!(schedule_global1(depth, x).unwrap(), schedule_global1(depth, x).unwrap());
        prop_assert_eq!(
            schedule_window(depth, kt, x, 4).ok(),
            schedule_window(depth, kt, x, 4).ok()
        );
        if kt != KnockoutType::NoKnockout {
            prop_assert_eq!(schedule_global2(depth, kt).unwrap(), schedule_global2(depth, kt).unwrap());
        }
    }

    #[test]
    fn flops_ratio_is_bounded(layout in layout_upto(8, 16, 20), s in schedule(12)) {
        let ratio = schedule_flops_ratio(&layout, &s);
        prop_assert!(ratio.numerator <= ratio.denominator);
        let counts = schedule_pair_count(&layout, &s, CostView::Skipped);
        let causal = (layout.total_len() * (layout.total_len() + 1) / 2) as u64;
        for &c in &counts.per_layer {
            prop_assert!(c <= causal);
        }
        prop_assert!(counts.total <= counts.baseline_total);
        if layout.text_len() > 0 || s.exit_layer().is_none() {
            prop_assert!(ratio.numerator > 0);
        }
        let baseline = LayerSchedule::baseline(s.depth()).unwrap();
        let base = schedule_flops_ratio(&layout, &baseline);
        prop_assert_eq!(base.numerator, base.denominator);
    }

    #[test]
    fn adding_knockouts_never_raises_cost(
        layout in layout_upto(8, 16, 20),
        s in schedule(12),
        layer in 1usize..=12,
        kt in prop::sample::select(KnockoutType::KNOCKOUTS.to_vec()),
    ) {
        let layer = layer.min(s.depth());
        let before = schedule_pair_count(&layout, &s, CostView::Skipped).total;
        if s.knockout_at(layer) == KnockoutType::NoKnockout {
            let after = s.with_knockout(layer, kt).unwrap();
            prop_assert!(schedule_pair_count(&layout, &after, CostView::Skipped).total <= before);
        }
    }

    #[test]
    fn earlier_exit_never_raises_cost(
        layout in layout_upto(8, 16, 20),
        depth in 2usize..=28,
        e in 1usize..28,
    ) {
        let e = e.min(depth - 1);
        let later = schedule_efficiency(depth, 0, e + 1).unwrap();
        let earlier = schedule_efficiency(depth, 0, e).unwrap();
        prop_assert!(
            schedule_pair_count(&layout, &earlier, CostView::Skipped).total
                <= schedule_pair_count(&layout, &later, CostView::Skipped).total
        );
    }
}
