use super::rope::apply_rope;
use super::{Matrix, ToyTransformer, TokenId, NORM_EPS};
use crate::error::{KnockoutError, Result};
use crate::layout::TokenLayout;
use crate::mask::{AttentionRule, LayerSchedule};

#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardOptions {
    /// Keep the residual stream of every active position after each layer.
    pub capture_hidden: bool,
    /// Keep every softmax row. Only sensible for short sequences.
    pub capture_attention: bool,
}

/// Residual stream after one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStates {
    pub layer: usize,
    pub positions: Vec<usize>,
    pub states: Vec<Vec<f32>>,
}

impl LayerStates {
    pub fn state_at(&self, position: usize) -> Option<&[f32]> {
        let i = self.positions.binary_search(&position).ok()?;
        Some(&self.states[i])
    }
}

/// Softmax weights of one query in one head. `weights` lists
/// `(key position, probability)` over the allowed keys only.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionProbe {
    pub layer: usize,
    pub head: usize,
    pub query: usize,
    pub weights: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Absolute indices of the text positions, ascending.
    pub text_positions: Vec<usize>,
    /// One logit vector per entry of `text_positions`.
    pub final_logits: Vec<Vec<f32>>,
    pub hidden: Option<Vec<LayerStates>>,
    pub attention: Option<Vec<AttentionProbe>>,
}

impl ForwardTrace {
    /// Logits at the last text position, which produces the answer.
    pub fn last_logits(&self) -> Option<&[f32]> {
        self.final_logits.last().map(Vec::as_slice)
    }

    pub fn logits_at(&self, position: usize) -> Option<&[f32]> {
        let i = self.text_positions.binary_search(&position).ok()?;
        Some(&self.final_logits[i])
    }

    pub fn hidden_at(&self, layer: usize, position: usize) -> Option<&[f32]> {
        self.hidden.as_ref()?.get(layer.checked_sub(1)?)?.state_at(position)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptionScores {
    pub chosen: usize,
    pub scores: Vec<f32>,
}

fn rms_norm(x: &[f32], gain: &[f32], out: &mut [f32]) {
    let mean_sq = x.iter().map(|&v| v as f64 * v as f64).sum::<f64>() / x.len() as f64;
    let inv = 1.0 / (mean_sq + NORM_EPS).sqrt();
    for ((o, &v), &g) in out.iter_mut().zip(x).zip(gain) {
        *o = (v as f64 * inv * g as f64) as f32;
    }
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

/// Applies `m` to each `d`-wide row of `xs`.
fn project(m: &Matrix, xs: &[f32], d: usize) -> Vec<f32> {
    let n = xs.len() / d;
    let mut out = vec![0.0; n * m.rows()];
    for (x, o) in xs.chunks_exact(d).zip(out.chunks_exact_mut(m.rows())) {
        m.matvec(x, o);
    }
    debug_assert_eq!(out.len(), n * m.rows());
    out
}

impl ToyTransformer {
    pub fn forward(
        &self,
        tokens: &[TokenId],
        layout: &TokenLayout,
        schedule: &LayerSchedule,
    ) -> Result<ForwardTrace> {
        self.forward_with(tokens, layout, schedule, ForwardOptions::default())
    }

    pub fn forward_with(
        &self,
        tokens: &[TokenId],
        layout: &TokenLayout,
        schedule: &LayerSchedule,
        options: ForwardOptions,
    ) -> Result<ForwardTrace> {
        let all: Vec<usize> = (0..layout.total_len()).collect();
        self.forward_subset(tokens, layout, schedule, &all, options)
    }

    /// Runs only the positions in `keep` (ascending absolute indices). Kept
    /// tokens retain their position ids and roles; the rest of the sequence
    /// does not exist for this run.
    pub fn forward_subset(
        &self,
        tokens: &[TokenId],
        layout: &TokenLayout,
        schedule: &LayerSchedule,
        keep: &[usize],
        options: ForwardOptions,
    ) -> Result<ForwardTrace> {
        self.check_inputs(tokens, layout, schedule, keep)?;
        let cfg = &self.config;
        let d = cfg.model_dim;
        let heads = cfg.head_count;
        let hd = cfg.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();

        let mut active: Vec<usize> = keep.to_vec();
        let mut hidden: Vec<f32> =
            active.iter().flat_map(|&p| self.embedding.row(tokens[p] as usize).iter().copied()).collect();

        let mut captured = options.capture_hidden.then(Vec::new);
        let mut probes = options.capture_attention.then(Vec::new);
        let mut normed = vec![0.0f32; d];

        for (li, weights) in self.layers.iter().enumerate() {
            let layer = li + 1;
            if !schedule.video_present(layer) && active.iter().any(|&p| layout.is_video(p)) {
                let (kept_pos, kept_hidden): (Vec<usize>, Vec<&[f32]>) = active
                    .iter()
                    .zip(hidden.chunks_exact(d))
                    .filter(|(&p, _)| !layout.is_video(p))
                    .map(|(&p, h)| (p, h))
                    .unzip();
                hidden = kept_hidden.concat();
                active = kept_pos;
            }
            let n = active.len();
            let rule = AttentionRule::new(*layout, schedule.knockout_at(layer));

            let mut xs = vec![0.0f32; n * d];
            for (x, o) in hidden.chunks_exact(d).zip(xs.chunks_exact_mut(d)) {
                rms_norm(x, &weights.attn_norm, o);
            }
            let mut q = project(&weights.wq, &xs, d);
            let mut k = project(&weights.wk, &xs, d);
            let v = project(&weights.wv, &xs, d);
            for (i, &pos) in active.iter().enumerate() {
                for h in 0..heads {
                    let r = i * d + h * hd..i * d + (h + 1) * hd;
                    apply_rope(&mut q[r.clone()], pos, cfg.rope_base);
                    apply_rope(&mut k[r], pos, cfg.rope_base);
                }
            }

            let mut attn_out = vec![0.0f32; n * d];
            let mut scores: Vec<(usize, f64)> = Vec::with_capacity(n);
            let mut acc = vec![0.0f64; hd];
            for h in 0..heads {
                let off = h * hd;
                for i in 0..n {
                    let qi = &q[i * d + off..i * d + off + hd];
                    scores.clear();
                    // active is ascending, so j <= i covers the causal keys
                    for j in 0..=i {
                        if !rule.allows(active[i], active[j]) {
                            continue;
                        }
                        let kj = &k[j * d + off..j * d + off + hd];
                        let s: f64 = qi.iter().zip(kj).map(|(&a, &b)| a as f64 * b as f64).sum();
                        scores.push((j, s * scale));
                    }
                    let max = scores.iter().map(|&(_, s)| s).fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for (_, s) in scores.iter_mut() {
                        *s = (*s - max).exp();
                        total += *s;
                    }
                    acc.iter_mut().for_each(|a| *a = 0.0);
                    for &(j, w) in &scores {
                        let vj = &v[j * d + off..j * d + off + hd];
                        for (a, &x) in acc.iter_mut().zip(vj) {
                            *a += w * x as f64;
                        }
                    }
                    for (o, a) in attn_out[i * d + off..i * d + off + hd].iter_mut().zip(&acc) {
                        *o = (a / total) as f32;
                    }
                    if let Some(p) = probes.as_mut() {
                        p.push(AttentionProbe {
                            layer,
                            head: h,
                            query: active[i],
                            weights: scores.iter().map(|&(j, w)| (active[j], w / total)).collect(),
                        });
                    }
                }
            }

            let mut delta = vec![0.0f32; d];
            for (hrow, a) in hidden.chunks_exact_mut(d).zip(attn_out.chunks_exact(d)) {
                weights.wo.matvec(a, &mut delta);
                hrow.iter_mut().zip(&delta).for_each(|(x, dx)| *x += dx);
            }

            let mut inner = vec![0.0f32; cfg.ffn_dim];
            for hrow in hidden.chunks_exact_mut(d) {
                rms_norm(hrow, &weights.ffn_norm, &mut normed);
                weights.w_in.matvec(&normed, &mut inner);
                inner.iter_mut().for_each(|x| *x = gelu(*x as f64) as f32);
                weights.w_out.matvec(&inner, &mut delta);
                hrow.iter_mut().zip(&delta).for_each(|(x, dx)| *x += dx);
            }

            if let Some(c) = captured.as_mut() {
                c.push(LayerStates {
                    layer,
                    positions: active.clone(),
                    states: hidden.chunks_exact(d).map(<[f32]>::to_vec).collect(),
                });
            }
        }

        let mut text_positions = Vec::new();
        let mut final_logits = Vec::new();
        for (&pos, hrow) in active.iter().zip(hidden.chunks_exact(d)) {
            if layout.is_video(pos) {
                continue;
            }
            rms_norm(hrow, &self.final_norm, &mut normed);
            let mut logits = vec![0.0f32; cfg.vocab_size];
            self.unembedding.matvec(&normed, &mut logits);
            text_positions.push(pos);
            final_logits.push(logits);
        }

        Ok(ForwardTrace { text_positions, final_logits, hidden: captured, attention: probes })
    }

    /// Scores each candidate token by its logit at the last text position.
    /// Ties go to the lowest option index.
    pub fn score_options(
        &self,
        tokens: &[TokenId],
        layout: &TokenLayout,
        schedule: &LayerSchedule,
        options: &[TokenId],
    ) -> Result<OptionScores> {
        if options.len() < 2 {
            return Err(KnockoutError::Usage(format!(
                "need at least 2 answer options, got {}",
                options.len()
            )));
        }
        if let Some(&bad) = options.iter().find(|&&o| o as usize >= self.config.vocab_size) {
            return Err(KnockoutError::Usage(format!("option token {bad} is outside the vocabulary")));
        }
        let trace = self.forward(tokens, layout, schedule)?;
        let logits = trace
            .last_logits()
            .ok_or_else(|| KnockoutError::Usage("scoring needs at least one text token".into()))?;
        let scores: Vec<f32> = options.iter().map(|&o| logits[o as usize]).collect();
        Ok(OptionScores { chosen: argmax_first(&scores), scores })
    }

    fn check_inputs(
        &self,
        tokens: &[TokenId],
        layout: &TokenLayout,
        schedule: &LayerSchedule,
        keep: &[usize],
    ) -> Result<()> {
        if tokens.len() != layout.total_len() {
            return Err(KnockoutError::Shape(format!(
                "{} tokens for a layout of length {}",
                tokens.len(),
                layout.total_len()
            )));
        }
        if schedule.depth() != self.config.depth {
            return Err(KnockoutError::Shape(format!(
                "schedule has {} layers, model has {}",
                schedule.depth(),
                self.config.depth
            )));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(KnockoutError::Shape(format!(
                "token id {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        if keep.windows(2).any(|w| w[0] >= w[1]) {
            return Err(KnockoutError::Shape("kept positions must be strictly ascending".into()));
        }
        if let Some(&last) = keep.last() {
            if last >= layout.total_len() {
                return Err(KnockoutError::OutOfBounds { index: last, len: layout.total_len() });
            }
        }
        Ok(())
    }
}

/// Index of the largest value, first one on ties.
pub fn argmax_first(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
