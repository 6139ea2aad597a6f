//! Command-line front end.
//!
//! Settings come from built-in defaults, then an optional flat `key = value`
//! config file (`--config`), then flags. Everything is validated before any
//! model is run. Exit codes: 0 on success, 1 on runtime or I/O failure, 2 on
//! usage or configuration errors.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::error::{KnockoutError, Result};
use crate::flops::{flops_table, schedule_pair_count, CostView, COST_CONVENTION};
use crate::layout::TokenLayout;
use crate::mask::{schedule_efficiency, KnockoutType, LayerSchedule};
use crate::model::circuit::{build_retrieval_circuit_with, CircuitShape};
use crate::model::{ModelConfig, ToyTransformer, TokenId};
use crate::report::{render_report, ReportFormat};
use crate::sweep::{run_sweep_with, workers_from_env, ProbeTask, RetrievalTask, SweepRecord, SweepSpec, Task};

#[derive(Debug, Parser)]
#[command(name = "knockout-lab", version, about = "Attention-knockout sweeps on toy video-language transformers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// LVK beyond each cutoff depth (1, 3, 5, ... and the full depth).
    SweepGlobal1(CommonArgs),
    /// LVK, VTK and VSK each applied to every layer.
    SweepGlobal2(CommonArgs),
    /// One knockout over a sliding window of layers.
    SweepWindow(CommonArgs),
    /// Evaluate a single schedule against the baseline.
    Run(CommonArgs),
    /// Attention cost of a schedule relative to the baseline.
    Flops(CommonArgs),
    /// Retrieval circuit under a protocol, printed as an accuracy table.
    CircuitDemo(CommonArgs),
}

#[derive(Debug, Args, Default)]
struct CommonArgs {
    /// Flat key = value file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    tokens_per_frame: Option<usize>,
    #[arg(long = "text")]
    text_len: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long = "dim")]
    model_dim: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long = "ffn")]
    ffn_dim: Option<usize>,
    #[arg(long)]
    vocab: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use the hand-built retrieval circuit instead of a random model.
    #[arg(long)]
    circuit: bool,
    /// Answer options for the retrieval task.
    #[arg(long)]
    options: Option<usize>,
    #[arg(long)]
    copy_layer: Option<usize>,
    /// Random inputs per schedule when probing a random model.
    #[arg(long)]
    probes: Option<usize>,
    #[arg(long)]
    knockout: Option<String>,
    #[arg(long = "window")]
    window_len: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    exit: Option<usize>,
    #[arg(long)]
    spatial_window: Option<usize>,
    /// Charge masked pairs as computed.
    #[arg(long)]
    dense: bool,
    /// circuit-demo protocol: global1, global2 or window.
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub frames: usize,
    pub tokens_per_frame: usize,
    pub text_len: usize,
    pub depth: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub vocab: usize,
    pub seed: u64,
    pub circuit: bool,
    pub options: usize,
    pub copy_layer: Option<usize>,
    pub probes: usize,
    pub knockout: KnockoutType,
    pub window_len: usize,
    pub stride: usize,
    pub schedule: Option<LayerSchedule>,
    pub exit: Option<usize>,
    pub spatial_window: usize,
    pub dense: bool,
    pub protocol: String,
    pub format: ReportFormat,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            frames: 4,
            tokens_per_frame: 8,
            text_len: 4,
            depth: 8,
            model_dim: 32,
            heads: 4,
            ffn_dim: 64,
            vocab: 64,
            seed: 0,
            circuit: false,
            options: 4,
            copy_layer: None,
            probes: 4,
            knockout: KnockoutType::Lvk,
            window_len: 4,
            stride: 1,
            schedule: None,
            exit: None,
            spatial_window: 0,
            dense: false,
            protocol: "global2".into(),
            format: ReportFormat::Csv,
            out: None,
            workers: None,
        }
    }
}

impl RunConfig {
    /// Defaults for `flops`: the 32 x 196 video layout of a 28-layer model
    /// with a 100-token prompt.
    pub fn flops_defaults() -> Self {
        Self { frames: 32, tokens_per_frame: 196, text_len: 100, depth: 28, ..Self::default() }
    }

    /// Defaults for `circuit-demo`.
    pub fn circuit_defaults() -> Self {
        Self { circuit: true, tokens_per_frame: 4, text_len: 2, depth: 12, ..Self::default() }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let bad = |what: &str| KnockoutError::Usage(format!("bad value {value:?} for {key}: {what}"));
        let count = || value.parse::<usize>().map_err(|_| bad("expected a non-negative integer"));
        let flag = || match value {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            _ => Err(bad("expected true or false")),
        };
        match key.as_str() {
            "frames" => self.frames = count()?,
            "tokens_per_frame" => self.tokens_per_frame = count()?,
            "text" | "text_len" => self.text_len = count()?,
            "depth" => self.depth = count()?,
            "dim" | "model_dim" => self.model_dim = count()?,
            "heads" | "head_count" => self.heads = count()?,
            "ffn" | "ffn_dim" => self.ffn_dim = count()?,
            "vocab" | "vocab_size" => self.vocab = count()?,
            "seed" => self.seed = value.parse().map_err(|_| bad("expected an integer"))?,
            "circuit" => self.circuit = flag()?,
            "options" => self.options = count()?,
            "copy_layer" => self.copy_layer = Some(count()?),
            "probes" => self.probes = count()?,
            "knockout" => self.knockout = value.parse()?,
            "window" | "window_len" => self.window_len = count()?,
            "stride" => self.stride = count()?,
            "schedule" => self.schedule = Some(value.parse()?),
            "exit" | "exit_layer" => self.exit = Some(count()?),
            "spatial_window" => self.spatial_window = count()?,
            "dense" => self.dense = flag()?,
            "protocol" => self.protocol = value.to_string(),
            "format" => self.format = value.parse()?,
            "out" => self.out = Some(PathBuf::from(value)),
            "workers" => self.workers = Some(count()?),
            _ => return Err(KnockoutError::Usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file. Blank lines and `#` comments are
    /// skipped.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| KnockoutError::Usage(format!("config line {}: expected key = value", n + 1)))?;
            self.set(key, value)?;
        }
        Ok(())
    }

    fn apply_args(&mut self, args: &CommonArgs) -> Result<()> {
        if let Some(path) = &args.config {
            let text = std::fs::read_to_string(path).map_err(|e| {
                KnockoutError::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            self.apply_file(&text)?;
        }
        let overrides: [(&str, Option<String>); 22] = [
            ("frames", args.frames.map(|v| v.to_string())),
            ("tokens_per_frame", args.tokens_per_frame.map(|v| v.to_string())),
            ("text_len", args.text_len.map(|v| v.to_string())),
            ("depth", args.depth.map(|v| v.to_string())),
            ("model_dim", args.model_dim.map(|v| v.to_string())),
            ("heads", args.heads.map(|v| v.to_string())),
            ("ffn_dim", args.ffn_dim.map(|v| v.to_string())),
            ("vocab", args.vocab.map(|v| v.to_string())),
            ("seed", args.seed.map(|v| v.to_string())),
            ("options", args.options.map(|v| v.to_string())),
            ("copy_layer", args.copy_layer.map(|v| v.to_string())),
            ("probes", args.probes.map(|v| v.to_string())),
            ("knockout", args.knockout.clone()),
            ("window_len", args.window_len.map(|v| v.to_string())),
            ("stride", args.stride.map(|v| v.to_string())),
            ("schedule", args.schedule.clone()),
            ("exit", args.exit.map(|v| v.to_string())),
            ("spatial_window", args.spatial_window.map(|v| v.to_string())),
            ("protocol", args.protocol.clone()),
            ("format", args.format.clone()),
            ("out", args.out.as_ref().map(|p| p.display().to_string())),
            ("workers", args.workers.map(|v| v.to_string())),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                self.set(key, &v)?;
            }
        }
        self.circuit |= args.circuit;
        self.dense |= args.dense;
        Ok(())
    }

    pub fn layout(&self) -> Result<TokenLayout> {
        TokenLayout::new(self.frames, self.tokens_per_frame, self.text_len)
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig::new(self.depth, self.model_dim, self.heads, self.ffn_dim, self.vocab, self.seed)
    }

    /// Marker ids for the circuit task: 2, 3, ...
    pub fn markers(&self) -> Vec<TokenId> {
        (0..self.options as TokenId).map(|i| i + 2).collect()
    }

    pub fn circuit_shape(&self) -> CircuitShape {
        CircuitShape {
            depth: self.depth,
            copy_layer: self.copy_layer.unwrap_or(self.depth / 2 + 1),
            vocab_size: self.vocab,
        }
    }

    pub fn build_model(&self, layout: &TokenLayout) -> Result<ToyTransformer> {
        if self.circuit {
            build_retrieval_circuit_with(layout, &self.markers(), self.circuit_shape())
        } else {
            ToyTransformer::init(self.model_config())
        }
    }

    pub fn build_task(&self, layout: TokenLayout) -> Result<Box<dyn Task>> {
        if self.circuit {
            Ok(Box::new(RetrievalTask::new(layout, self.markers())?))
        } else {
            Ok(Box::new(ProbeTask::random(layout, self.vocab, self.probes, self.seed ^ 0x5eed)?))
        }
    }

    /// Schedule for `flops`: an explicit schedule wins, otherwise the
    /// efficiency schedule from `spatial_window` and `exit`.
    pub fn flops_schedule(&self) -> Result<LayerSchedule> {
        match &self.schedule {
            Some(s) => Ok(s.clone()),
            None => schedule_efficiency(self.depth, self.spatial_window, self.exit.unwrap_or(self.depth)),
        }
    }
}

fn protocol_spec(name: &str, cfg: &RunConfig) -> Result<SweepSpec> {
    match name {
        "global1" => Ok(SweepSpec::global1(cfg.depth)),
        "global2" => Ok(SweepSpec::Global2),
        "window" | "fine_grained" | "fine-grained" => Ok(SweepSpec::FineGrained {
            knockout: cfg.knockout,
            window_len: cfg.window_len,
            stride: cfg.stride,
        }),
        other => Err(KnockoutError::Usage(format!(
            "unknown protocol {other:?}; use global1, global2 or window"
        ))),
    }
}

/// Parses `argv` (including the program name), runs the command and writes
/// human-readable output to `stdout`.
pub fn run(argv: &[String], stdout: &mut dyn Write) -> Result<()> {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            write!(stdout, "{e}")?;
            return Ok(());
        }
        Err(e) => return Err(KnockoutError::Usage(e.to_string())),
    };
    let (mut cfg, args) = match &cli.command {
        Command::Flops(a) => (RunConfig::flops_defaults(), a),
        Command::CircuitDemo(a) => (RunConfig::circuit_defaults(), a),
        Command::SweepGlobal1(a)
        | Command::SweepGlobal2(a)
        | Command::SweepWindow(a)
        | Command::Run(a) => (RunConfig::default(), a),
    };
    cfg.apply_args(args)?;
    if cfg.workers.is_none() {
        cfg.workers = workers_from_env();
    }

    match cli.command {
        Command::Flops(_) => run_flops(&cfg, stdout),
        Command::CircuitDemo(_) => {
            let spec = protocol_spec(&cfg.protocol, &cfg)?;
            let records = run_protocol(&cfg, &spec)?;
            write_circuit_table(&records, stdout)?;
            if let Some(path) = &cfg.out {
                write_report(&records, &cfg, path)?;
            }
            Ok(())
        }
        command => {
            let spec = match command {
                Command::SweepGlobal1(_) => SweepSpec::global1(cfg.depth),
                Command::SweepGlobal2(_) => SweepSpec::Global2,
                Command::SweepWindow(_) => protocol_spec("window", &cfg)?,
                Command::Run(_) => {
                    let schedule = cfg.schedule.clone().ok_or_else(|| {
                        KnockoutError::Usage("run needs --schedule".into())
                    })?;
                    SweepSpec::Single { schedule }
                }
                _ => unreachable!(),
            };
            let records = run_protocol(&cfg, &spec)?;
            match &cfg.out {
                Some(path) => write_report(&records, &cfg, path),
                None => {
                    stdout.write_all(render_report(&records, cfg.format)?.as_bytes())?;
                    Ok(())
                }
            }
        }
    }
}

/// Validates every constructor's preconditions, then runs the sweep.
fn run_protocol(cfg: &RunConfig, spec: &SweepSpec) -> Result<Vec<SweepRecord>> {
    let layout = cfg.layout()?;
    let model = cfg.build_model(&layout)?;
    let task = cfg.build_task(layout)?;
    spec.plan(model.depth())?;
    run_sweep_with(spec, &model, task.as_ref(), cfg.workers)
}

fn write_report(records: &[SweepRecord], cfg: &RunConfig, path: &Path) -> Result<()> {
    crate::report::emit_report(records, cfg.format, path)
}

fn write_circuit_table(records: &[SweepRecord], out: &mut dyn Write) -> Result<()> {
    let (baseline, rest) = records.split_first().expect("sweeps always include the baseline");
    writeln!(
        out,
        "baseline accuracy {:.2} ({})",
        baseline.score.unwrap_or(f64::NAN),
        baseline.schedule
    )?;
    writeln!(out, "{:<10} {:>8} {:>10} {:>12} {:>8}", "knockout", "where", "accuracy", "perf_ratio", "drift")?;
    for r in rest {
        let at = r.cutoff_or_window_end.map_or_else(|| "all".to_string(), |x| x.to_string());
        writeln!(
            out,
            "{:<10} {:>8} {:>10.2} {:>11.1}% {:>8.4}",
            r.knockout,
            at,
            r.score.unwrap_or(f64::NAN),
            r.performance_ratio.unwrap_or(f64::NAN),
            r.logit_drift
        )?;
    }
    Ok(())
}

fn run_flops(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let layout = cfg.layout()?;
    let schedule = cfg.flops_schedule()?;
    let view = if cfg.dense { CostView::Dense } else { CostView::Skipped };
    let rows = flops_table(&layout, &schedule, view);
    let ratio = schedule_pair_count(&layout, &schedule, view).ratio();

    writeln!(out, "layout: {layout}; schedule: {schedule}")?;
    writeln!(out, "{:>5} {:>8} {:>13} {:>12} {:>10}", "layer", "knockout", "video_present", "pairs", "cumulative")?;
    for r in &rows {
        writeln!(
            out,
            "{:>5} {:>8} {:>13} {:>12} {:>9.2}%",
            r.layer,
            r.knockout.name(),
            r.video_present,
            r.pairs,
            100.0 * r.cumulative_ratio
        )?;
    }
    writeln!(out, "{COST_CONVENTION}")?;
    let view_note = match view {
        CostView::Skipped => "knocked-out pairs skipped",
        CostView::Dense => "knocked-out pairs computed then masked",
    };
    writeln!(out, "text tokens: {}; {view_note}", layout.text_len())?;
    writeln!(out, "attention FLOPs: {ratio}")?;

    if let Some(path) = &cfg.out {
        let ser = |e: &dyn std::fmt::Display| KnockoutError::Serialize(e.to_string());
        let text = match cfg.format {
            ReportFormat::Json => serde_json::to_string_pretty(&rows).map_err(|e| ser(&e))? + "\n",
            ReportFormat::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                for r in &rows {
                    w.serialize(r).map_err(|e| ser(&e))?;
                }
                String::from_utf8(w.into_inner().map_err(|e| ser(&e))?).map_err(|e| ser(&e))?
            }
        };
        std::fs::write(path, text)?;
    }
    Ok(())
}

/// Entry point for the binary: runs and maps the outcome to an exit code.
pub fn main_with_args(argv: &[String]) -> i32 {
    let mut stdout = std::io::stdout().lock();
    match run(argv, &mut stdout) {
        Ok(()) => 0,
        // Downstream closed the pipe (e.g. `| head`); nothing left to report.
        Err(KnockoutError::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
