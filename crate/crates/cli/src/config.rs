//! Pipeline configuration: built-in defaults, overlaid by an optional TOML
//! file, overlaid by explicit flags, then resolved so that nothing is left
//! implicit at run time.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use vista_core::caption::Gazetteer;
use vista_core::clock::{Clock, FixedClock, SystemClock};
use vista_core::keyframe::{DEFAULT_BINS, DEFAULT_EPSILON, DEFAULT_TOP_K};
use vista_core::metrics::{
    BagOfWordsCosine, EmbeddingApiBackend, Evaluator, MeteorParams, MeteorScorer, SimilarityBackend, SynonymTable,
    WithFallback, DEFAULT_OMEGA,
};
use vista_core::vlm::{DEFAULT_MAX_IN_FLIGHT, DEFAULT_MODEL, ENV_KEY, ENV_MODEL};

use crate::error::CliError;

pub const BUILTIN: &str = "builtin";
pub const SKIP_HUMAN_REFINEMENT: &str = "skip_human_refinement";
pub const DROP_FUTURE_GAZE: &str = "drop_future_gaze";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub assets: String,
    pub store: String,
    /// Gazetteer file, or `builtin`.
    pub gazetteer: String,
    /// Synonym table file, or `builtin`.
    pub synonyms: String,
    pub references: Option<String>,
    /// Canned reviewer edits, one `<stem>.txt` per sample.
    pub refinements: Option<String>,
    /// Export directory; defaults to `<store>/export`.
    pub export: Option<String>,
    /// Report directory; defaults to `<store>/reports`.
    pub reports: Option<String>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            assets: "assets".into(),
            store: "store".into(),
            gazetteer: BUILTIN.into(),
            synonyms: BUILTIN.into(),
            references: None,
            refinements: None,
            export: None,
            reports: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeyframeConfig {
    pub k: usize,
    pub epsilon: f64,
    pub bins: usize,
}

impl Default for KeyframeConfig {
    fn default() -> Self {
        Self { k: DEFAULT_TOP_K, epsilon: DEFAULT_EPSILON, bins: DEFAULT_BINS }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
}

impl SplitConfig {
    pub fn is_configured(&self) -> bool {
        self.train + self.val + self.test > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VlmConfig {
    /// `replay` or `http`.
    pub transport: String,
    pub replay_dir: Option<String>,
    /// Resolved from VISTA_VLM_MODEL for `http`; `replay` otherwise.
    pub model: Option<String>,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub min_interval_ms: u64,
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
}

impl Default for VlmConfig {
    fn default() -> Self {
        Self {
            transport: "replay".into(),
            replay_dir: None,
            model: None,
            timeout_secs: 60,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            min_interval_ms: 0,
            max_attempts: 5,
            backoff_base_ms: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub omega: f64,
    /// `bow` (token-count cosine) or `embedding` (HTTP API with bow fallback).
    pub backend: String,
    pub embedding_url: Option<String>,
    pub embedding_model: Option<String>,
    pub meteor_alpha: f64,
    pub meteor_beta: f64,
    pub meteor_gamma: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        let m = MeteorParams::default();
        Self {
            omega: DEFAULT_OMEGA,
            backend: "bow".into(),
            embedding_url: None,
            embedding_model: None,
            meteor_alpha: m.alpha,
            meteor_beta: m.beta,
            meteor_gamma: m.gamma,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub skip_human_refinement: bool,
    pub drop_future_gaze: bool,
    pub lora_rank: Option<usize>,
    pub lora_alpha: Option<f64>,
    /// Recorded for bookkeeping; the toy trainer has no token limit.
    pub max_token_len: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoraConfig {
    pub preset: String,
    pub seed: u64,
    pub vocab: usize,
    pub seq_len: usize,
    pub val_samples: usize,
    pub noise: f64,
    pub out: String,
}

impl Default for LoraConfig {
    fn default() -> Self {
        Self {
            preset: "few-shot".into(),
            seed: 0,
            vocab: 32,
            seq_len: 16,
            val_samples: 20,
            noise: 0.05,
            out: "lora-sim".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub bind: String,
    pub allow_any_split_ratings: bool,
    pub claim_ttl_minutes: i64,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self { bind: "127.0.0.1:8080".into(), allow_any_split_ratings: false, claim_ttl_minutes: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `auto`, `system`, `fixed` or `fixed:<rfc3339>`. `auto` resolves to
    /// `fixed` with the replay transport so offline runs are reproducible.
    pub clock: String,
    /// Report name; derived from the ablation toggles when unset.
    pub system_id: Option<String>,
    /// Actor recorded for canned refinements.
    pub actor: String,
    /// Whether `run-all` also collects probe answers.
    pub probe: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { clock: "auto".into(), system_id: None, actor: "operator".into(), probe: false }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub keyframe: KeyframeConfig,
    pub split: SplitConfig,
    pub vlm: VlmConfig,
    pub metrics: MetricsConfig,
    pub ablation: AblationConfig,
    pub lora: LoraConfig,
    pub serve: ServeConfig,
    pub run: RunConfig,
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn set_dotted(root: &mut Value, key: &str, value: Value) {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for p in &parts[..parts.len() - 1] {
        cur = cur
            .as_object_mut()
            .expect("config sections are tables")
            .entry(p.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    cur.as_object_mut().expect("config sections are tables").insert(parts[parts.len() - 1].to_string(), value);
}

impl PipelineConfig {
    /// Defaults < `file` < `overrides` (dotted keys such as `keyframe.k`).
    pub fn load(file: Option<&Path>, overrides: &[(String, Value)]) -> Result<Self, CliError> {
        let mut merged = serde_json::to_value(PipelineConfig::default()).expect("defaults serialize");
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
            let table: toml::Table =
                toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            merge(&mut merged, serde_json::to_value(table).expect("toml maps to json"));
        }
        for (key, value) in overrides {
            set_dotted(&mut merged, key, value.clone());
        }
        let mut cfg: PipelineConfig =
            serde_json::from_value(merged).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        cfg.resolve()?;
        Ok(cfg)
    }

    /// Turns every `auto`/unset knob into the concrete value used.
    fn resolve(&mut self) -> Result<(), CliError> {
        match self.vlm.transport.as_str() {
            "replay" => {
                self.vlm.model.get_or_insert_with(|| "replay".into());
            }
            "http" => {
                if self.vlm.model.is_none() {
                    self.vlm.model = Some(std::env::var(ENV_MODEL).unwrap_or_else(|_| DEFAULT_MODEL.into()));
                }
            }
            other => return Err(CliError::Config(format!("vlm.transport must be replay or http, got '{other}'"))),
        }
        if self.run.clock == "auto" {
            self.run.clock = if self.vlm.transport == "replay" { "fixed".into() } else { "system".into() };
        }
        self.clock()?;
        if self.run.system_id.is_none() {
            let mut id = String::from("vista");
            if self.ablation.skip_human_refinement {
                id.push('-');
                id.push_str(SKIP_HUMAN_REFINEMENT);
            }
            if self.ablation.drop_future_gaze {
                id.push('-');
                id.push_str(DROP_FUTURE_GAZE);
            }
            self.run.system_id = Some(id);
        }
        if !matches!(self.metrics.backend.as_str(), "bow" | "embedding") {
            return Err(CliError::Config(format!("metrics.backend must be bow or embedding, got '{}'", self.metrics.backend)));
        }
        if self.keyframe.k == 0 || self.keyframe.bins == 0 || self.keyframe.epsilon.is_nan() || self.keyframe.epsilon <= 0.0 {
            return Err(CliError::Config("keyframe.k, keyframe.bins and keyframe.epsilon must be positive".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn clock(&self) -> Result<Arc<dyn Clock>, CliError> {
        match self.run.clock.as_str() {
            "system" => Ok(Arc::new(SystemClock)),
            "fixed" => Ok(Arc::new(FixedClock::epoch())),
            s => match s.strip_prefix("fixed:") {
                Some(ts) => FixedClock::parse(ts)
                    .map(|c| Arc::new(c) as Arc<dyn Clock>)
                    .map_err(|e| CliError::Config(format!("run.clock timestamp '{ts}': {e}"))),
                None => Err(CliError::Config(format!("run.clock must be auto, system, fixed or fixed:<time>, got '{s}'"))),
            },
        }
    }

    pub fn system_id(&self) -> &str {
        self.run.system_id.as_deref().expect("resolved")
    }

    pub fn store_dir(&self) -> PathBuf {
        PathBuf::from(&self.paths.store)
    }

    pub fn artifacts_dir(&self) -> PathBuf {
        self.store_dir().join("artifacts")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.paths.reports.as_ref().map(PathBuf::from).unwrap_or_else(|| self.store_dir().join("reports"))
    }

    pub fn export_dir(&self) -> PathBuf {
        self.paths.export.as_ref().map(PathBuf::from).unwrap_or_else(|| self.store_dir().join("export"))
    }

    pub fn gazetteer(&self) -> Result<Gazetteer, CliError> {
        if self.paths.gazetteer == BUILTIN {
            return Ok(Gazetteer::builtin());
        }
        Gazetteer::load(Path::new(&self.paths.gazetteer))
            .map_err(|e| CliError::Config(format!("gazetteer {}: {e}", self.paths.gazetteer)))
    }

    pub fn synonyms(&self) -> Result<SynonymTable, CliError> {
        if self.paths.synonyms == BUILTIN {
            return Ok(SynonymTable::builtin());
        }
        SynonymTable::load(Path::new(&self.paths.synonyms))
            .map_err(|e| CliError::Config(format!("synonym table {}: {e}", self.paths.synonyms)))
    }

    pub fn evaluator(&self) -> Result<Evaluator, CliError> {
        let params = MeteorParams {
            alpha: self.metrics.meteor_alpha,
            beta: self.metrics.meteor_beta,
            gamma: self.metrics.meteor_gamma,
        };
        let mut ev = Evaluator::new(self.gazetteer()?, MeteorScorer::new(params, self.synonyms()?));
        ev.omega = self.metrics.omega;
        if self.metrics.backend == "embedding" {
            let url = self
                .metrics
                .embedding_url
                .clone()
                .ok_or_else(|| CliError::Config("metrics.embedding_url is required for the embedding backend".into()))?;
            let model = self.metrics.embedding_model.clone().unwrap_or_else(|| "default".into());
            let primary = EmbeddingApiBackend::new(url, model, std::env::var(ENV_KEY).ok());
            ev.backend = Box::new(WithFallback { primary, fallback: BagOfWordsCosine }) as Box<dyn SimilarityBackend>;
        }
        Ok(ev)
    }
}
