//! Runs the knockout protocols over a model and a task and turns the
//! results into [`SweepRecord`]s.
//!
//! The baseline is evaluated once and always comes first. Records keep the
//! order in which the protocol defines its schedules, whatever order the
//! worker pool finishes them in.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KnockoutError, Result};
use crate::flops::schedule_flops_ratio;
use crate::layout::TokenLayout;
use crate::mask::{
    cutoff_grid, schedule_efficiency, schedule_global1, schedule_global2, schedule_window,
    KnockoutType, LayerSchedule, DEFAULT_WINDOW_LEN,
};
use crate::model::circuit::{all_placements, placement_tokens};
use crate::model::{ForwardTrace, ToyTransformer, TokenId};

/// Environment variable bounding the number of sweep workers.
pub const WORKERS_ENV: &str = "KNOCKOUT_LAB_WORKERS";

/// Outcome of evaluating a task under one schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Accuracy-style metric, when the task defines one.
    pub score: Option<f64>,
    /// Last-position logits, one vector per task instance.
    pub final_logits: Vec<Vec<f32>>,
}

pub trait Task: Sync {
    fn layout(&self) -> &TokenLayout;

    fn evaluate(&self, model: &ToyTransformer, schedule: &LayerSchedule) -> Result<Evaluation>;
}

/// Multiple-choice retrieval over every marker placement. Pair with
/// [`crate::model::circuit::build_retrieval_circuit`].
#[derive(Debug, Clone)]
pub struct RetrievalTask {
    layout: TokenLayout,
    markers: Vec<TokenId>,
    inputs: Vec<(usize, Vec<TokenId>)>,
}

impl RetrievalTask {
    pub fn new(layout: TokenLayout, markers: Vec<TokenId>) -> Result<Self> {
        if markers.len() < 2 {
            return Err(KnockoutError::Usage("retrieval needs at least 2 options".into()));
        }
        if layout.text_len() == 0 {
            return Err(KnockoutError::Usage("retrieval needs a text position".into()));
        }
        let inputs = all_placements(&layout, markers.len())
            .into_iter()
            .map(|p| (p.option, placement_tokens(&layout, &markers, p)))
            .collect();
        Ok(Self { layout, markers, inputs })
    }

    pub fn markers(&self) -> &[TokenId] {
        &self.markers
    }

    pub fn instance_count(&self) -> usize {
        self.inputs.len()
    }
}

impl Task for RetrievalTask {
    fn layout(&self) -> &TokenLayout {
        &self.layout
    }

    fn evaluate(&self, model: &ToyTransformer, schedule: &LayerSchedule) -> Result<Evaluation> {
        let mut hits = 0usize;
        let mut final_logits = Vec::with_capacity(self.inputs.len());
        for (answer, tokens) in &self.inputs {
            let trace = model.forward(tokens, &self.layout, schedule)?;
            let logits = trace.last_logits().ok_or_else(|| {
                KnockoutError::Usage("retrieval needs a text position".into())
            })?;
            let scores: Vec<f32> = self.markers.iter().map(|&m| logits[m as usize]).collect();
            if crate::model::argmax_first(&scores) == *answer {
                hits += 1;
            }
            final_logits.push(logits.to_vec());
        }
        Ok(Evaluation { score: Some(hits as f64 / self.inputs.len() as f64), final_logits })
    }
}

/// Random token sequences with no ground truth; reports logit drift only.
#[derive(Debug, Clone)]
pub struct ProbeTask {
    layout: TokenLayout,
    inputs: Vec<Vec<TokenId>>,
}

impl ProbeTask {
    pub fn random(layout: TokenLayout, vocab_size: usize, instances: usize, seed: u64) -> Result<Self> {
        if layout.text_len() == 0 {
            return Err(KnockoutError::Usage("probing needs at least one text token".into()));
        }
        if instances == 0 || vocab_size == 0 {
            return Err(KnockoutError::Usage("probing needs instances and a vocabulary".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = (0..instances)
            .map(|_| (0..layout.total_len()).map(|_| rng.gen_range(0..vocab_size as TokenId)).collect())
            .collect();
        Ok(Self { layout, inputs })
    }
}

impl Task for ProbeTask {
    fn layout(&self) -> &TokenLayout {
        &self.layout
    }

    fn evaluate(&self, model: &ToyTransformer, schedule: &LayerSchedule) -> Result<Evaluation> {
        let final_logits = self
            .inputs
            .iter()
            .map(|tokens| {
                let trace = model.forward(tokens, &self.layout, schedule)?;
                trace
                    .last_logits()
                    .map(<[f32]>::to_vec)
                    .ok_or_else(|| KnockoutError::Usage("probing needs a text position".into()))
            })
            .collect::<Result<_>>()?;
        Ok(Evaluation { score: None, final_logits })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SweepSpec {
    /// LVK beyond each cutoff.
    Global1 { cutoffs: Vec<usize> },
    /// Each knockout on every layer.
    Global2,
    /// One knockout on a sliding window of layers.
    FineGrained { knockout: KnockoutType, window_len: usize, stride: usize },
    /// Spatial-only window plus early exit.
    Efficiency { spatial_window_end: usize, exit_layer: usize },
    /// A single user-supplied schedule.
    Single { schedule: LayerSchedule },
}

impl SweepSpec {
    pub fn global1(depth: usize) -> Self {
        SweepSpec::Global1 { cutoffs: cutoff_grid(depth) }
    }

    pub fn fine_grained(knockout: KnockoutType) -> Self {
        SweepSpec::FineGrained { knockout, window_len: DEFAULT_WINDOW_LEN, stride: 1 }
    }

    pub fn protocol_name(&self) -> &'static str {
        match self {
            SweepSpec::Global1 { .. } => "global1",
            SweepSpec::Global2 => "global2",
            SweepSpec::FineGrained { .. } => "fine_grained",
            SweepSpec::Efficiency { .. } => "efficiency",
            SweepSpec::Single { .. } => "single",
        }
    }

    /// Every schedule the protocol evaluates, baseline first.
    pub fn plan(&self, depth: usize) -> Result<Vec<PlannedRun>> {
        let baseline = LayerSchedule::baseline(depth)?;
        let mut runs = Vec::new();
        match self {
            SweepSpec::Global1 { cutoffs } => {
                runs.push(PlannedRun::new(baseline, "none", Some(depth)));
                for &cutoff in cutoffs.iter().filter(|&&c| c != depth) {
                    runs.push(PlannedRun::new(schedule_global1(depth, cutoff)?, "LVK", Some(cutoff)));
                }
            }
            SweepSpec::Global2 => {
                runs.push(PlannedRun::new(baseline, "none", None));
                for kt in KnockoutType::KNOCKOUTS {
                    runs.push(PlannedRun::new(schedule_global2(depth, kt)?, kt.name(), None));
                }
            }
            SweepSpec::FineGrained { knockout, window_len, stride } => {
                if *stride == 0 {
                    return Err(KnockoutError::InvalidSchedule("stride must be at least 1".into()));
                }
                if *knockout == KnockoutType::NoKnockout {
                    return Err(KnockoutError::InvalidSchedule(
                        "fine-grained sweep needs a knockout".into(),
                    ));
                }
                runs.push(PlannedRun::new(baseline, "none", None));
                let mut end = *window_len;
                while end <= depth {
                    let s = schedule_window(depth, *knockout, end, *window_len)?;
                    runs.push(PlannedRun::new(s, knockout.name(), Some(end)));
                    end += stride;
                }
                if runs.len() == 1 {
                    return Err(KnockoutError::InvalidSchedule(format!(
                        "window of {window_len} layers does not fit depth {depth}"
                    )));
                }
            }
            SweepSpec::Efficiency { spatial_window_end, exit_layer } => {
                runs.push(PlannedRun::new(baseline, "none", None));
                let s = schedule_efficiency(depth, *spatial_window_end, *exit_layer)?;
                let label = if *spatial_window_end > 0 { "VTK+exit" } else { "exit" };
                runs.push(PlannedRun::new(s, label, Some(*exit_layer)));
            }
            SweepSpec::Single { schedule } => {
                if schedule.depth() != depth {
                    return Err(KnockoutError::Shape(format!(
                        "schedule has {} layers, model has {depth}",
                        schedule.depth()
                    )));
                }
                runs.push(PlannedRun::new(baseline, "none", None));
                if !schedule.is_baseline() {
                    runs.push(PlannedRun::new(schedule.clone(), "custom", None));
                }
            }
        }
        Ok(runs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedRun {
    pub schedule: LayerSchedule,
    pub knockout: String,
    pub cutoff_or_window_end: Option<usize>,
}

impl PlannedRun {
    fn new(schedule: LayerSchedule, knockout: &str, marker: Option<usize>) -> Self {
        Self { schedule, knockout: knockout.to_string(), cutoff_or_window_end: marker }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub protocol: String,
    pub schedule: String,
    pub knockout: String,
    pub cutoff_or_window_end: Option<usize>,
    pub layer_ratio: f64,
    pub score: Option<f64>,
    /// Percent of the baseline score.
    pub performance_ratio: Option<f64>,
    pub delta: Option<f64>,
    pub logit_drift: f64,
    /// Attention cost as a percent of the baseline.
    pub flops_ratio: f64,
}

/// Fraction of layers that keep language-to-video attention under a
/// global setting 1 cutoff.
pub fn layer_ratio(cutoff: usize, depth: usize) -> Result<f64> {
    if cutoff == 0 || cutoff > depth {
        return Err(KnockoutError::InvalidSchedule(format!("cutoff {cutoff} outside 1..={depth}")));
    }
    Ok(cutoff as f64 / depth as f64)
}

/// `100 * score / baseline`. Scores below chance are not floored.
pub fn performance_ratio(score: f64, baseline_score: f64) -> Result<f64> {
    if baseline_score.is_nan() || baseline_score <= 0.0 {
        return Err(KnockoutError::UndefinedRatio(baseline_score));
    }
    Ok(100.0 * (score / baseline_score))
}

/// Symmetric KL divergence between the softmax distributions of two logit
/// vectors.
pub fn symmetric_kl(a: &[f32], b: &[f32]) -> f64 {
    let la = log_softmax(a);
    let lb = log_softmax(b);
    la.iter().zip(&lb).map(|(&x, &y)| (x.exp() - y.exp()) * (x - y)).sum::<f64>().max(0.0)
}

fn log_softmax(x: &[f32]) -> Vec<f64> {
    let max = x.iter().map(|&v| v as f64).fold(f64::NEG_INFINITY, f64::max);
    let lse = max + x.iter().map(|&v| (v as f64 - max).exp()).sum::<f64>().ln();
    x.iter().map(|&v| v as f64 - lse).collect()
}

/// Drift between the last-position distributions of two traces.
pub fn logit_drift(base: &ForwardTrace, knocked: &ForwardTrace) -> Result<f64> {
    let missing = || KnockoutError::Usage("logit drift needs a text position in both traces".into());
    let a = base.last_logits().ok_or_else(missing)?;
    let b = knocked.last_logits().ok_or_else(missing)?;
    if a.len() != b.len() {
        return Err(KnockoutError::Shape("traces have different vocabulary sizes".into()));
    }
    Ok(symmetric_kl(a, b))
}

/// Mean drift over task instances.
pub fn evaluation_drift(base: &Evaluation, knocked: &Evaluation) -> Result<f64> {
    if base.final_logits.len() != knocked.final_logits.len() || base.final_logits.is_empty() {
        return Err(KnockoutError::Shape("evaluations cover different instances".into()));
    }
    let total: f64 =
        base.final_logits.iter().zip(&knocked.final_logits).map(|(a, b)| symmetric_kl(a, b)).sum();
    Ok(total / base.final_logits.len() as f64)
}

/// Worker bound from [`WORKERS_ENV`], if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

pub fn run_sweep(spec: &SweepSpec, model: &ToyTransformer, task: &dyn Task) -> Result<Vec<SweepRecord>> {
    run_sweep_with(spec, model, task, workers_from_env())
}

pub fn run_sweep_with(
    spec: &SweepSpec,
    model: &ToyTransformer,
    task: &dyn Task,
    workers: Option<usize>,
) -> Result<Vec<SweepRecord>> {
    let runs = spec.plan(model.depth())?;
    let protocol = spec.protocol_name();
    let layout = *task.layout();

    let evaluate = |schedule: &LayerSchedule| {
        task.evaluate(model, schedule).map_err(|e| KnockoutError::Task {
            schedule: schedule.to_string(),
            source: Box::new(e),
        })
    };

    let baseline_eval = evaluate(&runs[0].schedule)?;
    let rest: Vec<Result<Evaluation>> = {
        let work = || runs[1..].par_iter().map(|r| evaluate(&r.schedule)).collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.unwrap_or(0))
            .build()
            .map_err(|e| KnockoutError::Usage(format!("worker pool: {e}")))?;
        pool.install(work)
    };

    let mut records = Vec::with_capacity(runs.len());
    records.push(make_record(protocol, &runs[0], &layout, &baseline_eval, &baseline_eval)?);
    for (run, eval) in runs[1..].iter().zip(rest) {
        records.push(make_record(protocol, run, &layout, &eval?, &baseline_eval)?);
    }
    Ok(records)
}

fn make_record(
    protocol: &str,
    run: &PlannedRun,
    layout: &TokenLayout,
    eval: &Evaluation,
    baseline: &Evaluation,
) -> Result<SweepRecord> {
    let (performance, delta) = match (eval.score, baseline.score) {
        (Some(s), Some(b)) => (Some(performance_ratio(s, b)?), Some(s - b)),
        _ => (None, None),
    };
    Ok(SweepRecord {
        protocol: protocol.to_string(),
        schedule: run.schedule.to_string(),
        knockout: run.knockout.clone(),
        cutoff_or_window_end: run.cutoff_or_window_end,
        layer_ratio: run.schedule.layer_ratio(),
        score: eval.score,
        performance_ratio: performance,
        delta,
        logit_drift: evaluation_drift(baseline, eval)?,
        flops_ratio: schedule_flops_ratio(layout, &run.schedule).percent(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_helpers() {
        assert_eq!(layer_ratio(28, 28).unwrap(), 1.0);
        assert!((layer_ratio(17, 28).unwrap() - 0.607).abs() < 5e-4);
        assert_eq!(layer_ratio(14, 28).unwrap(), 0.5);
        assert!(layer_ratio(0, 28).is_err());
        assert_eq!(performance_ratio(0.61, 0.61).unwrap(), 100.0);
        assert_eq!(performance_ratio(0.0, 0.5).unwrap(), 0.0);
        assert_eq!(performance_ratio(0.25, 1.0).unwrap(), 25.0);
        assert!(matches!(performance_ratio(0.3, 0.0), Err(KnockoutError::UndefinedRatio(_))));
    }

    #[test]
    fn kl_properties() {
        let a = [1.0f32, 2.0, 0.5];
        let b = [0.0f32, 2.5, 1.0];
        assert_eq!(symmetric_kl(&a, &a), 0.0);
        assert!(symmetric_kl(&a, &b) > 0.0);
        assert_eq!(symmetric_kl(&a, &b), symmetric_kl(&b, &a));
        let shifted = [4.0f32, 5.0, 3.5];
        assert!(symmetric_kl(&a, &shifted) < 1e-12);
    }

    #[test]
    fn plan_counts() {
        assert_eq!(SweepSpec::global1(28).plan(28).unwrap().len(), 15);
        assert_eq!(SweepSpec::Global2.plan(28).unwrap().len(), 4);
        assert_eq!(SweepSpec::fine_grained(KnockoutType::Lvk).plan(28).unwrap().len(), 26);
        let strided =
            SweepSpec::FineGrained { knockout: KnockoutType::Vsk, window_len: 4, stride: 4 };
        // x = 4, 8, ..., 28
        assert_eq!(strided.plan(28).unwrap().len(), 1 + 7);
        let odd = SweepSpec::global1(5).plan(5).unwrap();
        assert_eq!(odd.len(), 3);
        assert!(odd[0].schedule.is_baseline());
    }

    #[test]
    fn plan_errors() {
        let wide = SweepSpec::FineGrained { knockout: KnockoutType::Lvk, window_len: 5, stride: 1 };
        assert!(wide.plan(4).is_err());
        let none = SweepSpec::fine_grained(KnockoutType::NoKnockout);
        assert!(none.plan(8).is_err());
        let zero = SweepSpec::FineGrained { knockout: KnockoutType::Lvk, window_len: 4, stride: 0 };
        assert!(zero.plan(8).is_err());
    }

    struct Failing(TokenLayout);

    impl Task for Failing {
        fn layout(&self) -> &TokenLayout {
            &self.0
        }

        fn evaluate(&self, _: &ToyTransformer, s: &LayerSchedule) -> Result<Evaluation> {
            if s.is_baseline() {
                Ok(Evaluation { score: Some(1.0), final_logits: vec![vec![0.0; 2]] })
            } else {
                Err(KnockoutError::Usage("boom".into()))
            }
        }
    }

    #[test]
    fn task_errors_carry_schedule() {
        let model = ToyTransformer::init(crate::model::ModelConfig::new(2, 4, 1, 4, 8, 0)).unwrap();
        let task = Failing(TokenLayout::new(1, 2, 1).unwrap());
        let err = run_sweep_with(&SweepSpec::Global2, &model, &task, Some(1)).unwrap_err();
        match err {
            KnockoutError::Task { schedule, .. } => assert_eq!(schedule, "L L"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
