//! Event-sourced dataset manifest.

mod model;
mod split;

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::caption::{render_caption, AttentionCaption, Provenance};
use crate::clock::Clock;
use crate::digest::sha256_file;
use crate::keyframe::ScoredFramePair;
use crate::metrics::HumanRating;
use crate::vlm::ProbeSet;

pub use model::{
    CaptionEdit, Claim, Event, Manifest, ReviewStatus, SampleRecord, Split, StageRecord, SCHEMA_VERSION,
};
pub use split::{plan_split, SplitCounts};

pub const SNAPSHOT_FILE: &str = "manifest.json";
pub const EVENT_LOG_FILE: &str = "events.jsonl";
pub const LOCK_FILE: &str = ".lock";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("duplicate sample {0}")]
    DuplicateSample(String),
    #[error("asset for {sample_id} not readable at {path}: {message}")]
    AssetNotFound { sample_id: String, path: String, message: String },
    #[error("requested {requested} samples but only {available} are unassigned")]
    InsufficientSamples { requested: usize, available: usize },
    #[error("no whole-video assignment reaches the requested counts: {0}")]
    UnsatisfiableSplit(String),
    #[error("{sample_id}: cannot move caption from {from:?} to {to:?}")]
    ProvenanceOrder { sample_id: String, from: Provenance, to: Provenance },
    #[error("{sample_id}: cannot {action} while {status:?}")]
    InvalidTransition { sample_id: String, status: ReviewStatus, action: &'static str },
    #[error("sample {0} not found")]
    NotFound(String),
    #[error("sample {0} has no draft caption")]
    NoDraft(String),
    #[error("sample {0} already has a split")]
    AlreadySplit(String),
    #[error("sample {sample_id} is in the {split:?} split; ratings are restricted to test")]
    SplitRestricted { sample_id: String, split: Split },
    #[error("unsupported schema version {0}")]
    Schema(u32),
    #[error("store at {0} is locked by another run")]
    Locked(PathBuf),
    #[error("store at {0} already exists")]
    Exists(PathBuf),
    #[error("event log line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("snapshot does not match event log replay")]
    SnapshotMismatch,
    #[error(transparent)]
    Caption(#[from] crate::caption::CaptionError),
    #[error("io error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type StoreResult<T> = std::result::Result<T, StoreError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

/// Exclusive marker file held for the lifetime of a writer.
#[derive(Debug)]
pub struct StoreLock {
    path: PathBuf,
}

impl StoreLock {
    pub fn acquire(dir: &Path) -> StoreResult<Self> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(StoreError::Locked(dir.to_path_buf())),
            Err(e) => Err(StoreError::Io { path, source: e }),
        }
    }
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Snapshot serialization; stable key order and exact float round-trip.
pub fn manifest_to_string(m: &Manifest) -> StoreResult<String> {
    let mut s = serde_json::to_string_pretty(m)?;
    s.push('\n');
    Ok(s)
}

pub fn save_snapshot(m: &Manifest, path: &Path) -> StoreResult<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, manifest_to_string(m)?).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn load_snapshot(path: &Path) -> StoreResult<Manifest> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_events(path: &Path) -> StoreResult<Vec<Event>> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| StoreError::Corrupt { line: n + 1, message: e.to_string() })?);
    }
    Ok(out)
}

/// A flat training-set entry written by [`Store::export_approved`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportEntry {
    pub sample_id: String,
    pub images: Vec<String>,
    pub caption_file: String,
    pub caption: String,
}

/// Single-writer handle: every mutation is appended to the log, folded into
/// the in-memory manifest and materialized to the snapshot.
pub struct Store {
    dir: PathBuf,
    manifest: Manifest,
    events: Vec<Event>,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("dir", &self.dir).field("events", &self.events.len()).finish()
    }
}

impl Store {
    pub fn create(
        dir: &Path,
        gazetteer_hash: &str,
        asset_root: &str,
        config_echo: serde_json::Value,
        clock: Arc<dyn Clock>,
    ) -> StoreResult<Self> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        if dir.join(EVENT_LOG_FILE).exists() {
            return Err(StoreError::Exists(dir.to_path_buf()));
        }
        let mut store = Store { dir: dir.to_path_buf(), manifest: Manifest::empty(), events: Vec::new(), clock };
        let created_at = store.clock.timestamp();
        store.commit(vec![Event::ManifestCreated {
            schema_version: SCHEMA_VERSION,
            created_at,
            gazetteer_hash: gazetteer_hash.to_string(),
            asset_root: asset_root.to_string(),
            config_echo,
        }])?;
        Ok(store)
    }

    /// Opens an existing store by replaying its event log.
    pub fn open(dir: &Path, clock: Arc<dyn Clock>) -> StoreResult<Self> {
        let events = read_events(&dir.join(EVENT_LOG_FILE))?;
        let manifest = Manifest::replay(&events)?;
        Ok(Store { dir: dir.to_path_buf(), manifest, events, clock })
    }

    pub fn exists(dir: &Path) -> bool {
        dir.join(EVENT_LOG_FILE).exists()
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn clock(&self) -> &dyn Clock {
        self.clock.as_ref()
    }

    pub fn snapshot_path(&self) -> PathBuf {
        self.dir.join(SNAPSHOT_FILE)
    }

    pub fn asset_path(&self, relative: &str) -> PathBuf {
        Path::new(&self.manifest.asset_root).join(relative)
    }

    /// Applies events atomically in memory, then appends and materializes.
    pub fn commit(&mut self, events: Vec<Event>) -> StoreResult<()> {
        let mut next = self.manifest.clone();
        for e in &events {
            next.apply(e)?;
        }
        let path = self.dir.join(EVENT_LOG_FILE);
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
        let mut buf = String::new();
        for e in &events {
            buf.push_str(&serde_json::to_string(e)?);
            buf.push('\n');
        }
        f.write_all(buf.as_bytes()).map_err(io_err(&path))?;
        f.flush().map_err(io_err(&path))?;
        self.manifest = next;
        self.events.extend(events);
        save_snapshot(&self.manifest, &self.snapshot_path())
    }

    /// Replays the on-disk log and compares it with the snapshot and memory.
    pub fn verify(&self) -> StoreResult<()> {
        let replayed = Manifest::replay(&read_events(&self.dir.join(EVENT_LOG_FILE))?)?;
        let snapshot = load_snapshot(&self.snapshot_path())?;
        if replayed != self.manifest || snapshot != self.manifest {
            return Err(StoreError::SnapshotMismatch);
        }
        Ok(())
    }

    pub fn echo_config(&mut self, config_echo: serde_json::Value) -> StoreResult<()> {
        if self.manifest.config_echo == config_echo {
            return Ok(());
        }
        let timestamp = self.clock.timestamp();
        self.commit(vec![Event::ConfigEchoed { timestamp, config_echo }])
    }

    /// Adds one record per pair after verifying every asset is readable and
    /// matches its recorded digest.
    pub fn ingest_samples(&mut self, pairs: &[ScoredFramePair]) -> StoreResult<usize> {
        let timestamp = self.clock.timestamp();
        let mut events = Vec::with_capacity(pairs.len());
        for pair in pairs {
            let id = pair.sample_id();
            for (_, asset) in pair.assets() {
                let path = self.asset_path(&asset.path);
                let digest = sha256_file(&path).map_err(|e| StoreError::AssetNotFound {
                    sample_id: id.clone(),
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                if !asset.sha256.is_empty() && digest != asset.sha256 {
                    return Err(StoreError::AssetNotFound {
                        sample_id: id.clone(),
                        path: path.display().to_string(),
                        message: "content digest changed since scoring".into(),
                    });
                }
            }
            events.push(Event::SampleIngested { timestamp: timestamp.clone(), pair: pair.clone() });
        }
        let n = events.len();
        self.commit(events)?;
        Ok(n)
    }

    /// Assigns unassigned records to train/val/test with whole videos per split.
    pub fn split_dataset(&mut self, counts: SplitCounts, seed: u64) -> StoreResult<Vec<(String, Split)>> {
        let assignments = plan_split(&self.manifest, counts, seed)?;
        let timestamp = self.clock.timestamp();
        self.commit(vec![Event::SplitAssigned { timestamp, seed, assignments: assignments.clone() }])?;
        Ok(assignments)
    }

    pub fn record_draft(&mut self, caption: AttentionCaption, model_id: &str) -> StoreResult<()> {
        let timestamp = self.clock.timestamp();
        self.commit(vec![Event::DraftRecorded {
            timestamp,
            sample_id: caption.sample_id.clone(),
            model_id: model_id.to_string(),
            caption,
        }])
    }

    pub fn record_probe(&mut self, probe: ProbeSet) -> StoreResult<()> {
        let timestamp = self.clock.timestamp();
        self.commit(vec![Event::ProbeRecorded { timestamp, probe }])
    }

    pub fn claim(&mut self, sample_id: &str, actor_id: &str) -> StoreResult<()> {
        let timestamp = self.clock.timestamp();
        self.commit(vec![Event::TaskClaimed {
            timestamp,
            sample_id: sample_id.to_string(),
            actor_id: actor_id.to_string(),
        }])
    }

    /// Replaces the current caption, enforcing the draft < refined < approved
    /// order. A pending task is claimed by the same actor first.
    pub fn transition_provenance(
        &mut self,
        sample_id: &str,
        new_caption: AttentionCaption,
        actor_id: &str,
    ) -> StoreResult<&SampleRecord> {
        let record = self.manifest.record(sample_id).ok_or_else(|| StoreError::NotFound(sample_id.to_string()))?;
        let current = record.current_caption().ok_or_else(|| StoreError::NoDraft(sample_id.to_string()))?;
        if !current.provenance.can_transition_to(new_caption.provenance) {
            return Err(StoreError::ProvenanceOrder {
                sample_id: sample_id.to_string(),
                from: current.provenance,
                to: new_caption.provenance,
            });
        }
        let before = current.raw_text.clone();
        let timestamp = self.clock.timestamp();
        let mut events = Vec::new();
        if record.review_status == ReviewStatus::Pending && new_caption.provenance != Provenance::Draft {
            events.push(Event::TaskClaimed {
                timestamp: timestamp.clone(),
                sample_id: sample_id.to_string(),
                actor_id: actor_id.to_string(),
            });
        }
        let mut caption = new_caption;
        caption.sample_id = sample_id.to_string();
        caption.raw_text = render_caption(&caption)?;
        events.push(Event::CaptionEdited {
            timestamp,
            sample_id: sample_id.to_string(),
            actor_id: actor_id.to_string(),
            before,
            caption,
        });
        self.commit(events)?;
        Ok(self.manifest.record(sample_id).expect("record exists"))
    }

    pub fn approve(&mut self, sample_id: &str, actor_id: &str) -> StoreResult<()> {
        let timestamp = self.clock.timestamp();
        self.commit(vec![Event::TaskApproved {
            timestamp,
            sample_id: sample_id.to_string(),
            actor_id: actor_id.to_string(),
        }])
    }

    /// Stores a rating, replacing an earlier one by the same evaluator.
    pub fn add_rating(&mut self, rating: HumanRating, allow_any_split: bool) -> StoreResult<Option<HumanRating>> {
        let record =
            self.manifest.record(&rating.sample_id).ok_or_else(|| StoreError::NotFound(rating.sample_id.clone()))?;
        let replaced = record.ratings.iter().find(|r| r.evaluator_id == rating.evaluator_id).cloned();
        let timestamp = self.clock.timestamp();
        self.commit(vec![Event::RatingRecorded { timestamp, rating, replaced: replaced.clone(), allow_any_split }])?;
        Ok(replaced)
    }

    pub fn complete_stage(&mut self, stage: &str, artifacts: Vec<String>) -> StoreResult<()> {
        let timestamp = self.clock.timestamp();
        self.commit(vec![Event::StageCompleted { timestamp, stage: stage.to_string(), artifacts }])
    }

    pub fn stage_completed(&self, stage: &str) -> bool {
        self.manifest.stages_completed.contains_key(stage)
    }

    pub fn approved_entries(&self) -> Vec<(&SampleRecord, &AttentionCaption)> {
        self.manifest
            .records
            .iter()
            .filter(|r| r.review_status == ReviewStatus::Approved)
            .filter_map(|r| r.caption_refined.as_ref().map(|c| (r, c)))
            .collect()
    }

    /// Writes approved records as `<id>_<slot>.<ext>` images plus `<id>.txt`
    /// captions and an `index.jsonl` in one flat directory.
    pub fn export_approved(&self, out: &Path) -> StoreResult<Vec<ExportEntry>> {
        fs::create_dir_all(out).map_err(io_err(out))?;
        let mut entries = Vec::new();
        for (record, caption) in self.approved_entries() {
            let stem = export_stem(&record.sample_id);
            let mut images = Vec::new();
            for (slot, asset) in record.pair.assets() {
                let src = self.asset_path(&asset.path);
                let ext = Path::new(&asset.path).extension().and_then(|e| e.to_str()).unwrap_or("png");
                let name = format!("{stem}_{}.{ext}", slot.as_str());
                fs::copy(&src, out.join(&name)).map_err(io_err(&src))?;
                images.push(name);
            }
            let caption_file = format!("{stem}.txt");
            let text = render_caption(caption)?;
            fs::write(out.join(&caption_file), format!("{text}\n")).map_err(io_err(out))?;
            entries.push(ExportEntry { sample_id: record.sample_id.clone(), images, caption_file, caption: text });
        }
        let mut index = String::new();
        for e in &entries {
            index.push_str(&serde_json::to_string(e)?);
            index.push('\n');
        }
        let index_path = out.join("index.jsonl");
        fs::write(&index_path, index).map_err(io_err(&index_path))?;
        Ok(entries)
    }
}

/// File-name-safe form of a sample id.
pub fn export_stem(sample_id: &str) -> String {
    sample_id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}
