//! One function per pipeline stage. Every store-touching stage holds the
//! store lock, echoes the resolved config, and records a completion event.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use vista_core::caption::parse_caption;
use vista_core::clock::SystemClock;
use vista_core::keyframe::{discover_videos, load_video, score_video_pairs, select_top_k, ScoredIndex};
use vista_core::lora::{train_toy, LoraError, ModelDims, TokenDataset, StopReason, TrainPreset};
use vista_core::metrics::{aggregate_report, write_report_csv, EvaluationReport, HumanRating};
use vista_core::store::{export_stem, ReviewStatus, SampleRecord, SplitCounts, Store, StoreLock};
use vista_core::synth::SyntheticVideo;
use vista_core::vlm::{
    build_caption_prompt, default_probe_questions, AuditLog, HttpTransport, ReplayTransport, RetryPolicy, Transport,
    VlmClient, VlmError, ENV_KEY, ENV_URL,
};
use vista_review::tasks::{approve_task, submit_edit};
use vista_review::{ReviewPolicy, ReviewState, ServiceConfig};

use crate::config::PipelineConfig;
use crate::error::{io_err, CliError};

pub const SCORES_ARTIFACT: &str = "artifacts/kl_scores.json";
pub const AUDIT_LOG: &str = "vlm_audit.jsonl";

type Result<T> = std::result::Result<T, CliError>;

pub struct Ctx {
    pub cfg: PipelineConfig,
    pub force: bool,
}

struct Session {
    store: Store,
    _lock: StoreLock,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VideoScores {
    pub video_id: String,
    pub frames: usize,
    pub scores: Vec<ScoredIndex>,
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

impl Ctx {
    fn open(&self, stage: &'static str) -> Result<Session> {
        let dir = self.cfg.store_dir();
        if !Store::exists(&dir) {
            return Err(CliError::Prerequisite {
                stage,
                artifact: format!("a dataset store at {} (run `vista ingest`)", dir.display()),
            });
        }
        let lock = StoreLock::acquire(&dir)?;
        let mut store = Store::open(&dir, self.cfg.clock()?)?;
        self.sync_echo(&mut store)?;
        Ok(Session { store, _lock: lock })
    }

    fn sync_echo(&self, store: &mut Store) -> Result<()> {
        let echo = self.cfg.to_json();
        if store.manifest().config_echo != echo {
            store.echo_config(echo)?;
        }
        Ok(())
    }

    fn guard(&self, store: &Store, key: &str) -> Result<()> {
        if store.stage_completed(key) && !self.force {
            return Err(CliError::AlreadyCompleted(key.to_string()));
        }
        Ok(())
    }

    fn require_stage(&self, store: &Store, stage: &'static str, needed: &str) -> Result<()> {
        if !store.stage_completed(needed) {
            return Err(CliError::Prerequisite { stage, artifact: format!("a completed '{needed}' stage (run `vista {needed}`)") });
        }
        Ok(())
    }
}

/// Scores every consecutive frame transition of every video under the asset root.
pub fn ingest(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let root = PathBuf::from(&cfg.paths.assets);
    if !root.is_dir() {
        return Err(CliError::Prerequisite { stage: "ingest", artifact: format!("asset directory {}", root.display()) });
    }
    let videos = discover_videos(&root).map_err(|e| CliError::stage("ingest", e))?;
    if videos.is_empty() {
        return Err(CliError::Prerequisite {
            stage: "ingest",
            artifact: format!("video directories with rgb/ and gaze/ under {}", root.display()),
        });
    }
    let dir = cfg.store_dir();
    let lock = StoreLock::acquire(&dir)?;
    let mut store = if Store::exists(&dir) {
        let mut s = Store::open(&dir, cfg.clock()?)?;
        ctx.guard(&s, "ingest")?;
        ctx.sync_echo(&mut s)?;
        s
    } else {
        Store::create(&dir, cfg.gazetteer()?.hash(), &cfg.paths.assets, cfg.to_json(), cfg.clock()?)?
    };
    let mut all = Vec::new();
    for id in &videos {
        let video = load_video(&root, id, cfg.keyframe.bins).map_err(|e| CliError::stage("ingest", e))?;
        let scores = score_video_pairs(&video.heatmaps, cfg.keyframe.epsilon).map_err(|e| CliError::stage("ingest", e))?;
        all.push(VideoScores { video_id: id.clone(), frames: video.frames.len(), scores });
    }
    write_file(&dir.join(SCORES_ARTIFACT), pretty(&all))?;
    store.complete_stage("ingest", vec![SCORES_ARTIFACT.into()])?;
    let transitions: usize = all.iter().map(|v| v.scores.len()).sum();
    println!("ingest: {} videos, {transitions} scored transitions", all.len());
    drop(lock);
    Ok(())
}

/// Adds the top-k transitions of each video to the manifest.
pub fn select(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let mut s = ctx.open("select")?;
    ctx.guard(&s.store, "select")?;
    let path = cfg.store_dir().join(SCORES_ARTIFACT);
    let text = fs::read_to_string(&path).map_err(|_| CliError::Prerequisite {
        stage: "select",
        artifact: format!("{} (run `vista ingest`)", path.display()),
    })?;
    let scored: Vec<VideoScores> = serde_json::from_str(&text).map_err(|e| CliError::stage("select", e))?;
    let root = PathBuf::from(&s.store.manifest().asset_root);
    let mut pairs = Vec::new();
    for v in &scored {
        let top = select_top_k(&v.scores, cfg.keyframe.k).map_err(|e| CliError::stage("select", e))?;
        let video = load_video(&root, &v.video_id, cfg.keyframe.bins).map_err(|e| CliError::stage("select", e))?;
        pairs.extend(video.pairs(&top).map_err(|e| CliError::stage("select", e))?);
    }
    pairs.retain(|p| s.store.manifest().record(&p.sample_id()).is_none());
    let added = s.store.ingest_samples(&pairs)?;
    s.store.complete_stage("select", vec![])?;
    println!("select: added {added} samples (k = {}), {} total", cfg.keyframe.k, s.store.manifest().records.len());
    Ok(())
}

pub fn split(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    if !cfg.split.is_configured() {
        return Err(CliError::Config("split counts are all zero; set --train/--val/--test".into()));
    }
    let mut s = ctx.open("split")?;
    ctx.guard(&s.store, "split")?;
    ctx.require_stage(&s.store, "split", "select")?;
    let counts = SplitCounts { train: cfg.split.train, val: cfg.split.val, test: cfg.split.test };
    s.store.split_dataset(counts, cfg.split.seed)?;
    s.store.complete_stage("split", vec![])?;
    let c = s.store.manifest().split_counts();
    let n = |k| c.iter().find(|(s, _)| s.as_str() == k).map_or(0, |(_, n)| *n);
    println!("split: train {} / val {} / test {} / unassigned {}", n("train"), n("val"), n("test"), n("unassigned"));
    Ok(())
}

/// Validates the transport configuration without touching the network.
pub fn transport(cfg: &PipelineConfig) -> Result<Arc<dyn Transport>> {
    let model = cfg.vlm.model.clone().expect("resolved");
    match cfg.vlm.transport.as_str() {
        "replay" => {
            let dir = cfg.vlm.replay_dir.as_ref().ok_or_else(|| {
                CliError::Config("the replay transport needs vlm.replay_dir (--replay <dir>)".into())
            })?;
            if !Path::new(dir).is_dir() {
                return Err(CliError::Config(format!("replay directory {dir} does not exist")));
            }
            Ok(Arc::new(ReplayTransport::new(dir).with_model_id(model)))
        }
        _ => {
            let env = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
            let url = env(ENV_URL).ok_or_else(|| CliError::Config(format!("{ENV_URL} is not set")))?;
            let key = env(ENV_KEY).ok_or_else(|| CliError::Config(format!("{ENV_KEY} is not set")))?;
            let t = HttpTransport::new(&url, &key, &model, Duration::from_secs(cfg.vlm.timeout_secs))
                .map_err(|e| CliError::Config(e.to_string()))?;
            Ok(Arc::new(t))
        }
    }
}

fn client(cfg: &PipelineConfig, store: &Store) -> Result<VlmClient> {
    let audit = AuditLog::open(store.dir().join(AUDIT_LOG)).map_err(|e| CliError::stage("draft", e))?;
    let retry = RetryPolicy {
        base: Duration::from_millis(cfg.vlm.backoff_base_ms),
        factor: 2.0,
        max_attempts: cfg.vlm.max_attempts,
    };
    VlmClient::new(transport(cfg)?, PathBuf::from(&store.manifest().asset_root))
        .with_clock(cfg.clock()?)
        .with_retry(retry)
        .with_rate_limit(Duration::from_millis(cfg.vlm.min_interval_ms))
        .with_max_in_flight(cfg.vlm.max_in_flight)
        .with_audit(audit)
        .map_err(|e| CliError::stage("draft", e))
}

fn summarize_failures(failures: &[(String, String)]) -> String {
    let shown: Vec<String> = failures.iter().take(5).map(|(id, e)| format!("{id}: {e}")).collect();
    format!("{} sample(s) failed; {}", failures.len(), shown.join("; "))
}

/// Requests a four-sentence draft for each pending sample without one.
pub fn draft(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let mut s = ctx.open("draft")?;
    ctx.guard(&s.store, "draft")?;
    ctx.require_stage(&s.store, "draft", "select")?;
    let client = client(cfg, &s.store)?;
    let targets: Vec<&SampleRecord> = s
        .store
        .manifest()
        .records
        .iter()
        .filter(|r| r.review_status == ReviewStatus::Pending && r.caption_refined.is_none())
        .filter(|r| ctx.force || r.caption_draft.is_none())
        .collect();
    let mut failures = Vec::new();
    let mut prompts = Vec::new();
    for r in &targets {
        match build_caption_prompt(&r.pair, client.asset_root()) {
            Ok(p) => prompts.push(p),
            Err(e) => failures.push((r.sample_id.clone(), e.to_string())),
        }
    }
    let responses = client.request_drafts(&prompts);
    let mut recorded = 0;
    for (prompt, response) in prompts.iter().zip(responses) {
        let parsed = response.and_then(|r| {
            parse_caption(&r.raw_text, &prompt.sample_id)
                .map(|p| (p, r.model_id))
                .map_err(|e| VlmError::MalformedResponse { raw_body: r.raw_text, message: e.to_string() })
        });
        match parsed {
            Ok((p, model)) => {
                for w in &p.warnings {
                    log::warn!("{}: {w}", prompt.sample_id);
                }
                s.store.record_draft(p.caption, &model)?;
                recorded += 1;
            }
            Err(e) => failures.push((prompt.sample_id.clone(), e.to_string())),
        }
    }
    println!("draft: recorded {recorded} drafts from {}", client.model_id());
    if !failures.is_empty() {
        return Err(CliError::stage("draft", summarize_failures(&failures)));
    }
    s.store.complete_stage("draft", vec![AUDIT_LOG.into()])?;
    Ok(())
}

/// Asks the five probing questions for each sample without answers.
pub fn probe(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let mut s = ctx.open("probe")?;
    ctx.guard(&s.store, "probe")?;
    ctx.require_stage(&s.store, "probe", "select")?;
    let client = client(cfg, &s.store)?;
    let questions = default_probe_questions().to_vec();
    let targets: Vec<_> =
        s.store.manifest().records.iter().filter(|r| ctx.force || r.probe.is_none()).map(|r| r.pair.clone()).collect();
    let results = client.map_concurrent(&targets, |p| client.request_probe_answers(p, &questions));
    let mut failures = Vec::new();
    let mut recorded = 0;
    for (pair, r) in targets.iter().zip(results) {
        match r {
            Ok(probe) => {
                s.store.record_probe(probe)?;
                recorded += 1;
            }
            Err(e) => failures.push((pair.sample_id(), e.to_string())),
        }
    }
    println!("probe: recorded {recorded} probe sets");
    if !failures.is_empty() {
        return Err(CliError::stage("probe", summarize_failures(&failures)));
    }
    s.store.complete_stage("probe", vec![AUDIT_LOG.into()])?;
    Ok(())
}

/// Applies reviewer edits from `<refinements>/<stem>.txt` and approves them,
/// going through the same validation as the review service.
pub fn refine(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let dir = cfg
        .paths
        .refinements
        .as_ref()
        .ok_or_else(|| CliError::Config("refine needs paths.refinements (--refinements <dir>)".into()))?;
    let mut s = ctx.open("refine")?;
    ctx.guard(&s.store, "refine")?;
    ctx.require_stage(&s.store, "refine", "draft")?;
    let policy = ReviewPolicy::default();
    let ids: Vec<String> = s.store.manifest().records.iter().map(|r| r.sample_id.clone()).collect();
    let mut applied = 0;
    for id in &ids {
        let path = Path::new(dir).join(format!("{}.txt", export_stem(id)));
        let Ok(text) = fs::read_to_string(&path) else { continue };
        if s.store.manifest().record(id).is_some_and(|r| r.review_status == ReviewStatus::Approved) {
            continue;
        }
        submit_edit(&mut s.store, id, text.trim(), &cfg.run.actor, &policy)
            .map_err(|e| CliError::stage("refine", format!("{}: {e}", path.display())))?;
        approve_task(&mut s.store, id, &cfg.run.actor, &policy).map_err(|e| CliError::stage("refine", e))?;
        applied += 1;
    }
    if applied == 0 && !s.store.manifest().records.iter().any(|r| r.review_status == ReviewStatus::Approved) {
        return Err(CliError::Prerequisite { stage: "refine", artifact: format!("refinement files <stem>.txt in {dir}") });
    }
    s.store.complete_stage("refine", vec![])?;
    println!("refine: applied and approved {applied} edits");
    Ok(())
}

/// Reference captions in `<stem>.txt`; blank lines separate alternatives.
fn read_references(dir: &Path, sample_id: &str) -> Option<Vec<String>> {
    let text = fs::read_to_string(dir.join(format!("{}.txt", export_stem(sample_id)))).ok()?;
    let refs: Vec<String> = text
        .split("\n\n")
        .map(|p| p.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|p| !p.is_empty())
        .collect();
    (!refs.is_empty()).then_some(refs)
}

/// Reference probe answers, one per non-empty line of `<stem>.probe.txt`.
fn read_probe_answers(dir: &Path, sample_id: &str) -> Option<Vec<String>> {
    let text = fs::read_to_string(dir.join(format!("{}.probe.txt", export_stem(sample_id)))).ok()?;
    Some(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
}

/// Scores captions against references and writes `<system_id>.json`/`.csv`.
pub fn evaluate(ctx: &Ctx) -> Result<EvaluationReport> {
    let cfg = &ctx.cfg;
    let refs_dir = cfg
        .paths
        .references
        .as_ref()
        .map(PathBuf::from)
        .ok_or_else(|| CliError::Config("evaluate needs paths.references (--references <dir>)".into()))?;
    if !refs_dir.is_dir() {
        return Err(CliError::Prerequisite { stage: "evaluate", artifact: format!("reference directory {}", refs_dir.display()) });
    }
    let mut s = ctx.open("evaluate")?;
    let key = format!("evaluate:{}", cfg.system_id());
    ctx.guard(&s.store, &key)?;
    ctx.require_stage(&s.store, "evaluate", "draft")?;
    let records = &s.store.manifest().records;
    let has_test = records.iter().any(|r| r.split.as_str() == "test");
    let pool: Vec<&SampleRecord> = records.iter().filter(|r| !has_test || r.split.as_str() == "test").collect();
    let evaluator = cfg.evaluator()?;
    let mut per_sample = Vec::new();
    let mut ratings: Vec<HumanRating> = Vec::new();
    let mut missing = Vec::new();
    let mut probe_scores = Vec::new();
    for r in &pool {
        let Some(references) = read_references(&refs_dir, &r.sample_id) else { continue };
        let caption = if cfg.ablation.skip_human_refinement {
            r.caption_draft.as_ref()
        } else {
            r.caption_refined.as_ref().filter(|_| r.review_status == ReviewStatus::Approved)
        };
        let Some(caption) = caption else {
            missing.push(r.sample_id.clone());
            continue;
        };
        let text = if cfg.ablation.drop_future_gaze { caption.without_future_gaze() } else { caption.raw_text.clone() };
        let refs: Vec<&str> = references.iter().map(String::as_str).collect();
        let scores = evaluator
            .score_caption(&text, &refs, None)
            .map_err(|e| CliError::stage("evaluate", format!("{}: {e}", r.sample_id)))?;
        per_sample.push((r.sample_id.clone(), scores));
        ratings.extend(r.ratings.iter().cloned());
        if let (Some(probe), Some(answers)) = (&r.probe, read_probe_answers(&refs_dir, &r.sample_id)) {
            let scores = evaluator
                .score_probe(&probe.answers, &answers)
                .map_err(|e| CliError::stage("evaluate", format!("{} probe: {e}", r.sample_id)))?;
            probe_scores.push((r.sample_id.clone(), scores));
        }
    }
    if !missing.is_empty() {
        let what = if cfg.ablation.skip_human_refinement { "draft captions" } else { "approved captions" };
        return Err(CliError::Prerequisite {
            stage: "evaluate",
            artifact: format!("{what} for {} sample(s): {}", missing.len(), missing.join(", ")),
        });
    }
    if per_sample.is_empty() {
        return Err(CliError::Prerequisite {
            stage: "evaluate",
            artifact: format!("reference captions <stem>.txt in {}", refs_dir.display()),
        });
    }
    let report = aggregate_report(per_sample, &ratings, cfg.system_id()).map_err(|e| CliError::stage("evaluate", e))?;
    let out = cfg.reports_dir();
    let json_path = out.join(format!("{}.json", cfg.system_id()));
    let csv_path = out.join(format!("{}.csv", cfg.system_id()));
    write_file(&json_path, pretty(&report))?;
    let mut csv = Vec::new();
    write_report_csv(&report, &mut csv).map_err(io_err(&csv_path))?;
    write_file(&csv_path, csv)?;
    let mut artifacts = vec![json_path.display().to_string(), csv_path.display().to_string()];
    if !probe_scores.is_empty() {
        let probe = aggregate_report(probe_scores, &[], &format!("{}-probe", cfg.system_id()))
            .map_err(|e| CliError::stage("evaluate", e))?;
        let p = out.join(format!("{}.probe.json", cfg.system_id()));
        write_file(&p, pretty(&probe))?;
        artifacts.push(p.display().to_string());
    }
    s.store.complete_stage(&key, artifacts)?;
    let m = &report.corpus_means;
    println!(
        "evaluate[{}]: n = {}, ROUGE-L {:.4}, METEOR {:.4}, EA F1 {:.4}, ParaScore {:.4}, human {}",
        report.system_id,
        report.n_samples,
        m.rouge_l,
        m.meteor,
        m.ea_f1,
        m.parascore,
        report.human_score.map_or("n/a".to_string(), |h| format!("{h:.3}"))
    );
    Ok(report)
}

pub fn export(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let mut s = ctx.open("export")?;
    ctx.guard(&s.store, "export")?;
    if s.store.approved_entries().is_empty() {
        return Err(CliError::Prerequisite { stage: "export", artifact: "approved captions".into() });
    }
    let out = cfg.export_dir();
    let entries = s.store.export_approved(&out)?;
    s.store.complete_stage("export", vec![out.display().to_string()])?;
    println!("export: wrote {} samples to {}", entries.len(), out.display());
    Ok(())
}

/// Trains the toy adapter under a preset and writes its trace.
pub fn lora_sim(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let preset = TrainPreset::parse(&cfg.lora.preset)
        .ok_or_else(|| CliError::Config(format!("unknown preset '{}'; expected few-shot or one-shot", cfg.lora.preset)))?;
    let mut spec = preset.spec(cfg.lora.seed);
    if let Some(r) = cfg.ablation.lora_rank {
        spec.adapter.rank = r;
    }
    if let Some(a) = cfg.ablation.lora_alpha {
        spec.adapter.alpha = a;
    }
    let d = spec.adapter.rank.max(8);
    let l = &cfg.lora;
    let data = TokenDataset::synthetic(l.vocab, spec.train_samples, l.val_samples, l.seq_len, l.noise, l.seed);
    let dims = ModelDims { d, k: d, vocab: l.vocab };
    let out = PathBuf::from(&l.out);
    let echo = json!({
        "preset": l.preset,
        "rank": spec.adapter.rank,
        "alpha": spec.adapter.alpha,
        "scale": spec.adapter.scale(),
        "dropout": spec.adapter.dropout,
        "dims": { "d": d, "k": d, "vocab": l.vocab },
        "train_samples": spec.train_samples,
        "train": spec.config,
    });
    let write_trace = |trace: &vista_core::lora::TrainTrace| -> Result<()> {
        write_file(&out.join(format!("{}_trace.csv", l.preset)), trace.to_csv())?;
        write_file(&out.join(format!("{}_summary.json", l.preset)), pretty(&trace.summary_json(echo.clone())))
    };
    match train_toy(&spec.config, &data, dims, spec.adapter) {
        Ok((trace, _)) => {
            write_trace(&trace)?;
            let last = trace.epochs.last().map_or(0.0, |e| e.lr);
            println!(
                "lora-sim[{}]: stopped at epoch {} ({}), final lr {last}, scale {}",
                l.preset,
                trace.stop_epoch,
                match trace.stop_reason {
                    Some(StopReason::EarlyStop) => "early stop",
                    Some(StopReason::MaxEpochs) | None => "max epochs",
                },
                spec.adapter.scale()
            );
        }
        Err(LoraError::Divergence { epoch, trace }) => {
            write_trace(&trace)?;
            return Err(CliError::stage("lora-sim", format!("loss diverged at epoch {epoch}")));
        }
        Err(e) => return Err(CliError::stage("lora-sim", e)),
    }
    if Store::exists(&cfg.store_dir()) {
        let mut s = ctx.open("lora-sim")?;
        s.store.complete_stage(&format!("lora-sim:{}", l.preset), vec![out.display().to_string()])?;
    }
    Ok(())
}

/// Runs the review service until interrupted. Claims need a real clock, so
/// the service always uses system time.
pub fn serve(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let dir = cfg.store_dir();
    if !Store::exists(&dir) {
        return Err(CliError::Prerequisite {
            stage: "serve",
            artifact: format!("a dataset store at {} (run `vista ingest`)", dir.display()),
        });
    }
    let _lock = StoreLock::acquire(&dir)?;
    let store = Store::open(&dir, Arc::new(SystemClock))?;
    let mut service = ServiceConfig::from_env();
    service.policy = ReviewPolicy::new(cfg.serve.claim_ttl_minutes, cfg.serve.allow_any_split_ratings);
    if service.token.is_none() {
        log::warn!("{} is unset; the review API is unauthenticated", vista_review::ENV_TOKEN);
    }
    let addr = cfg.serve.bind.parse().map_err(|e| CliError::Config(format!("serve.bind '{}': {e}", cfg.serve.bind)))?;
    println!("serve: review service on http://{addr}");
    vista_review::serve_blocking(addr, ReviewState::new(store, service)).map_err(|e| CliError::stage("serve", e))
}

/// ingest, select, optional split, draft, optional probe, review step, evaluate.
pub fn run_all(ctx: &Ctx) -> Result<EvaluationReport> {
    let cfg = &ctx.cfg;
    transport(cfg)?;
    if cfg.paths.references.is_none() {
        return Err(CliError::Config("run-all needs paths.references (--references <dir>)".into()));
    }
    ingest(ctx)?;
    select(ctx)?;
    if cfg.split.is_configured() {
        split(ctx)?;
    }
    draft(ctx)?;
    if cfg.run.probe {
        probe(ctx)?;
    }
    if !cfg.ablation.skip_human_refinement {
        if cfg.paths.refinements.is_none() {
            return Err(CliError::AwaitingReview);
        }
        refine(ctx)?;
    }
    evaluate(ctx)
}

/// Writes a synthetic asset tree: `videos` clips of `frames` frames, each
/// with `jumps` well-separated attention jumps.
pub fn synth(out: &Path, videos: usize, frames: usize, jumps: usize, seed: u64) -> Result<BTreeMap<String, Vec<usize>>> {
    if frames < 2 * jumps + 2 {
        return Err(CliError::Config(format!("{frames} frames cannot hold {jumps} separated jumps")));
    }
    let mut layout = BTreeMap::new();
    for v in 0..videos {
        let id = format!("clip{v:02}");
        // evenly spaced jumps, shifted per video
        let stride = (frames - 1) / jumps.max(1);
        let offset = (seed as usize + v) % stride.max(1);
        let js: Vec<usize> = (0..jumps).map(|i| (i * stride + offset).min(frames - 2)).collect();
        SyntheticVideo::new(&id, frames, js.clone(), seed + v as u64).write(out).map_err(io_err(out))?;
        layout.insert(id, js);
    }
    Ok(layout)
}
