//! The `vista` pipeline: keyframe selection, drafting, review, evaluation
//! and the toy adapter simulator behind one command.

pub mod config;
pub mod error;
pub mod stages;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

pub use config::PipelineConfig;
pub use error::CliError;
use stages::Ctx;

#[derive(Debug, Parser)]
#[command(name = "vista", version, about = "Gaze-keyframe attention captioning pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every frame transition under the asset root and create the store.
    Ingest,
    /// Add the top-k transitions of each video to the manifest.
    Select,
    /// Assign whole videos to train/val/test.
    Split,
    /// Request four-sentence caption drafts.
    Draft,
    /// Request answers to the five probing questions.
    Probe,
    /// Apply reviewer edits from a directory and approve them.
    Refine,
    /// Score captions against references and write a report.
    Evaluate,
    /// Train the toy low-rank adapter under a preset and write its trace.
    LoraSim,
    /// Run the review HTTP service.
    Serve,
    /// Write approved samples as image/caption pairs.
    Export,
    /// ingest, select, split, draft, review step, evaluate.
    RunAll,
    /// Print the resolved configuration and exit.
    Config,
    /// Write a synthetic asset tree for demos and tests.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub videos: usize,
    #[arg(long, default_value_t = 10)]
    pub frames: usize,
    #[arg(long, default_value_t = 2)]
    pub jumps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    #[value(name = "skip_human_refinement")]
    SkipHumanRefinement,
    #[value(name = "drop_future_gaze")]
    DropFutureGaze,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransportKind {
    Replay,
    Http,
}

/// Flags shared by every stage; each maps onto one config key.
#[derive(Debug, Default, Args)]
pub struct Flags {
    /// TOML config file; explicit flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Allow re-running a completed stage.
    #[arg(long, global = true)]
    pub force: bool,
    #[arg(long, global = true)]
    pub store: Option<String>,
    #[arg(long, global = true)]
    pub assets: Option<String>,
    #[arg(long, global = true)]
    pub gazetteer: Option<String>,
    #[arg(long, global = true)]
    pub synonyms: Option<String>,
    #[arg(long, global = true)]
    pub references: Option<String>,
    #[arg(long, global = true)]
    pub refinements: Option<String>,
    #[arg(long = "export-dir", global = true)]
    pub export_dir: Option<String>,
    #[arg(long = "reports-dir", global = true)]
    pub reports_dir: Option<String>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub bins: Option<usize>,
    #[arg(long, global = true)]
    pub train: Option<usize>,
    #[arg(long, global = true)]
    pub val: Option<usize>,
    #[arg(long, global = true)]
    pub test: Option<usize>,
    #[arg(long = "split-seed", global = true)]
    pub split_seed: Option<u64>,
    #[arg(long, value_enum, global = true)]
    pub transport: Option<TransportKind>,
    /// Replay directory; implies `--transport replay`.
    #[arg(long, global = true)]
    pub replay: Option<String>,
    #[arg(long = "max-in-flight", global = true)]
    pub max_in_flight: Option<usize>,
    #[arg(long, global = true)]
    pub omega: Option<f64>,
    #[arg(long, global = true)]
    pub backend: Option<String>,
    /// Ablation toggle; repeatable.
    #[arg(long, value_enum, global = true)]
    pub ablate: Vec<Ablation>,
    #[arg(long = "lora-rank", global = true)]
    pub lora_rank: Option<usize>,
    #[arg(long = "lora-alpha", global = true)]
    pub lora_alpha: Option<f64>,
    #[arg(long = "max-token-len", global = true)]
    pub max_token_len: Option<usize>,
    #[arg(long, global = true)]
    pub preset: Option<String>,
    #[arg(long = "lora-seed", global = true)]
    pub lora_seed: Option<u64>,
    #[arg(long = "lora-out", global = true)]
    pub lora_out: Option<String>,
    #[arg(long, global = true)]
    pub bind: Option<String>,
    #[arg(long = "allow-any-split-ratings", global = true)]
    pub allow_any_split_ratings: bool,
    /// auto, system, fixed or fixed:<rfc3339>.
    #[arg(long, global = true)]
    pub clock: Option<String>,
    #[arg(long, global = true)]
    pub system: Option<String>,
    #[arg(long, global = true)]
    pub actor: Option<String>,
    /// Also collect probe answers during run-all.
    #[arg(long, global = true)]
    pub probe: bool,
}

impl Flags {
    /// Dotted config keys for every flag that was given.
    pub fn overrides(&self) -> Vec<(String, Value)> {
        let mut o: Vec<(String, Value)> = Vec::new();
        let mut put = |k: &str, v: Value| o.push((k.to_string(), v));
        macro_rules! opt {
            ($field:expr, $key:literal) => {
                if let Some(v) = &$field {
                    put($key, json!(v));
                }
            };
        }
        opt!(self.store, "paths.store");
        opt!(self.assets, "paths.assets");
        opt!(self.gazetteer, "paths.gazetteer");
        opt!(self.synonyms, "paths.synonyms");
        opt!(self.references, "paths.references");
        opt!(self.refinements, "paths.refinements");
        opt!(self.export_dir, "paths.export");
        opt!(self.reports_dir, "paths.reports");
        opt!(self.k, "keyframe.k");
        opt!(self.epsilon, "keyframe.epsilon");
        opt!(self.bins, "keyframe.bins");
        opt!(self.train, "split.train");
        opt!(self.val, "split.val");
        opt!(self.test, "split.test");
        opt!(self.split_seed, "split.seed");
        if let Some(t) = self.transport {
            put("vlm.transport", json!(if t == TransportKind::Http { "http" } else { "replay" }));
        }
        if let Some(dir) = &self.replay {
            put("vlm.transport", json!("replay"));
            put("vlm.replay_dir", json!(dir));
        }
        opt!(self.max_in_flight, "vlm.max_in_flight");
        opt!(self.omega, "metrics.omega");
        opt!(self.backend, "metrics.backend");
        for a in &self.ablate {
            match a {
                Ablation::SkipHumanRefinement => put("ablation.skip_human_refinement", json!(true)),
                Ablation::DropFutureGaze => put("ablation.drop_future_gaze", json!(true)),
            }
        }
        opt!(self.lora_rank, "ablation.lora_rank");
        opt!(self.lora_alpha, "ablation.lora_alpha");
        opt!(self.max_token_len, "ablation.max_token_len");
        opt!(self.preset, "lora.preset");
        opt!(self.lora_seed, "lora.seed");
        opt!(self.lora_out, "lora.out");
        opt!(self.bind, "serve.bind");
        if self.allow_any_split_ratings {
            put("serve.allow_any_split_ratings", json!(true));
        }
        opt!(self.clock, "run.clock");
        opt!(self.system, "run.system_id");
        opt!(self.actor, "run.actor");
        if self.probe {
            put("run.probe", json!(true));
        }
        o
    }
}

/// Runs one command; the process exit code comes from the error.
pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Synth(a) = &cli.command {
        let layout = stages::synth(&a.out, a.videos, a.frames, a.jumps, a.seed)?;
        for (video, jumps) in layout {
            println!("{video}: jumps after frames {jumps:?}");
        }
        return Ok(());
    }
    let cfg = PipelineConfig::load(cli.flags.config.as_deref(), &cli.flags.overrides())?;
    let resolved = serde_json::to_string_pretty(&cfg.to_json()).expect("config serializes");
    if matches!(cli.command, Command::Config) {
        println!("{resolved}");
        return Ok(());
    }
    eprintln!("resolved config:\n{resolved}");
    let ctx = Ctx { cfg, force: cli.flags.force };
    match cli.command {
        Command::Ingest => stages::ingest(&ctx),
        Command::Select => stages::select(&ctx),
        Command::Split => stages::split(&ctx),
        Command::Draft => stages::draft(&ctx),
        Command::Probe => stages::probe(&ctx),
        Command::Refine => stages::refine(&ctx),
        Command::Evaluate => stages::evaluate(&ctx).map(drop),
        Command::LoraSim => stages::lora_sim(&ctx),
        Command::Serve => stages::serve(&ctx),
        Command::Export => stages::export(&ctx),
        Command::RunAll => stages::run_all(&ctx).map(drop),
        Command::Config | Command::Synth(_) => unreachable!("handled above"),
    }
}
