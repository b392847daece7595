use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::caption::{AttentionCaption, Provenance};
use crate::keyframe::ScoredFramePair;
use crate::metrics::HumanRating;
use crate::vlm::ProbeSet;

use super::{StoreError, StoreResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Pending,
    InReview,
    Refined,
    Approved,
}

impl ReviewStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ReviewStatus::Pending => "pending",
            ReviewStatus::InReview => "in_review",
            ReviewStatus::Refined => "refined",
            ReviewStatus::Approved => "approved",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pending" => Some(ReviewStatus::Pending),
            "in_review" => Some(ReviewStatus::InReview),
            "refined" => Some(ReviewStatus::Refined),
            "approved" => Some(ReviewStatus::Approved),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub actor_id: String,
    pub claimed_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionEdit {
    pub timestamp: String,
    pub actor_id: String,
    pub before: String,
    pub after: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub pair: ScoredFramePair,
    pub caption_draft: Option<AttentionCaption>,
    pub caption_refined: Option<AttentionCaption>,
    pub draft_model: Option<String>,
    pub probe: Option<ProbeSet>,
    pub ratings: Vec<HumanRating>,
    pub split: Split,
    pub review_status: ReviewStatus,
    pub claim: Option<Claim>,
    pub history: Vec<CaptionEdit>,
}

impl SampleRecord {
    fn new(pair: ScoredFramePair) -> Self {
        Self {
            sample_id: pair.sample_id(),
            pair,
            caption_draft: None,
            caption_refined: None,
            draft_model: None,
            probe: None,
            ratings: Vec::new(),
            split: Split::Unassigned,
            review_status: ReviewStatus::Pending,
            claim: None,
            history: Vec::new(),
        }
    }

    /// Refined caption if present, else the draft.
    pub fn current_caption(&self) -> Option<&AttentionCaption> {
        self.caption_refined.as_ref().or(self.caption_draft.as_ref())
    }

    pub fn provenance(&self) -> Option<Provenance> {
        self.current_caption().map(|c| c.provenance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub completed_at: String,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub created_at: String,
    pub gazetteer_hash: String,
    pub asset_root: String,
    pub config_echo: serde_json::Value,
    pub records: Vec<SampleRecord>,
    pub stages_completed: BTreeMap<String, StageRecord>,
}

/// One line of the append-only log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    ManifestCreated {
        schema_version: u32,
        created_at: String,
        gazetteer_hash: String,
        asset_root: String,
        config_echo: serde_json::Value,
    },
    ConfigEchoed {
        timestamp: String,
        config_echo: serde_json::Value,
    },
    SampleIngested {
        timestamp: String,
        pair: ScoredFramePair,
    },
    SplitAssigned {
        timestamp: String,
        seed: u64,
        assignments: Vec<(String, Split)>,
    },
    DraftRecorded {
        timestamp: String,
        sample_id: String,
        model_id: String,
        caption: AttentionCaption,
    },
    ProbeRecorded {
        timestamp: String,
        probe: ProbeSet,
    },
    TaskClaimed {
        timestamp: String,
        sample_id: String,
        actor_id: String,
    },
    CaptionEdited {
        timestamp: String,
        sample_id: String,
        actor_id: String,
        before: String,
        caption: AttentionCaption,
    },
    TaskApproved {
        timestamp: String,
        sample_id: String,
        actor_id: String,
    },
    RatingRecorded {
        timestamp: String,
        rating: HumanRating,
        replaced: Option<HumanRating>,
        allow_any_split: bool,
    },
    StageCompleted {
        timestamp: String,
        stage: String,
        artifacts: Vec<String>,
    },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::ManifestCreated { .. } => "manifest_created",
            Event::ConfigEchoed { .. } => "config_echoed",
            Event::SampleIngested { .. } => "sample_ingested",
            Event::SplitAssigned { .. } => "split_assigned",
            Event::DraftRecorded { .. } => "draft_recorded",
            Event::ProbeRecorded { .. } => "probe_recorded",
            Event::TaskClaimed { .. } => "task_claimed",
            Event::CaptionEdited { .. } => "caption_edited",
            Event::TaskApproved { .. } => "task_approved",
            Event::RatingRecorded { .. } => "rating_recorded",
            Event::StageCompleted { .. } => "stage_completed",
        }
    }

    pub fn sample_id(&self) -> Option<&str> {
        match self {
            Event::SampleIngested { .. } | Event::ManifestCreated { .. } | Event::ConfigEchoed { .. } => None,
            Event::SplitAssigned { .. } | Event::StageCompleted { .. } => None,
            Event::DraftRecorded { sample_id, .. }
            | Event::TaskClaimed { sample_id, .. }
            | Event::CaptionEdited { sample_id, .. }
            | Event::TaskApproved { sample_id, .. } => Some(sample_id),
            Event::ProbeRecorded { probe, .. } => Some(&probe.sample_id),
            Event::RatingRecorded { rating, .. } => Some(&rating.sample_id),
        }
    }
}

impl Manifest {
    pub fn empty() -> Self {
        Manifest {
            schema_version: SCHEMA_VERSION,
            created_at: String::new(),
            gazetteer_hash: String::new(),
            asset_root: String::new(),
            config_echo: serde_json::Value::Null,
            records: Vec::new(),
            stages_completed: BTreeMap::new(),
        }
    }

    /// Folds a sequence of events starting from the empty manifest.
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a Event>) -> StoreResult<Self> {
        let mut m = Manifest::empty();
        for e in events {
            m.apply(e)?;
        }
        Ok(m)
    }

    pub fn position(&self, sample_id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.sample_id == sample_id)
    }

    pub fn record(&self, sample_id: &str) -> Option<&SampleRecord> {
        self.position(sample_id).map(|i| &self.records[i])
    }

    fn record_mut(&mut self, sample_id: &str) -> StoreResult<&mut SampleRecord> {
        let i = self.position(sample_id).ok_or_else(|| StoreError::NotFound(sample_id.to_string()))?;
        Ok(&mut self.records[i])
    }

    pub fn split_counts(&self) -> BTreeMap<Split, usize> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            *out.entry(r.split).or_insert(0) += 1;
        }
        out
    }

    /// Validates `event` against the current state and applies it; on error the
    /// manifest is unchanged.
    pub fn apply(&mut self, event: &Event) -> StoreResult<()> {
        match event {
            Event::ManifestCreated { schema_version, created_at, gazetteer_hash, asset_root, config_echo } => {
                if *schema_version != SCHEMA_VERSION {
                    return Err(StoreError::Schema(*schema_version));
                }
                self.schema_version = *schema_version;
                self.created_at = created_at.clone();
                self.gazetteer_hash = gazetteer_hash.clone();
                self.asset_root = asset_root.clone();
                self.config_echo = config_echo.clone();
            }
            Event::ConfigEchoed { config_echo, .. } => self.config_echo = config_echo.clone(),
            Event::SampleIngested { pair, .. } => {
                let id = pair.sample_id();
                if self.position(&id).is_some() {
                    return Err(StoreError::DuplicateSample(id));
                }
                self.records.push(SampleRecord::new(pair.clone()));
            }
            Event::SplitAssigned { assignments, .. } => {
                let mut idx = Vec::with_capacity(assignments.len());
                for (id, split) in assignments {
                    let i = self.position(id).ok_or_else(|| StoreError::NotFound(id.clone()))?;
                    if self.records[i].split != Split::Unassigned || *split == Split::Unassigned {
                        return Err(StoreError::AlreadySplit(id.clone()));
                    }
                    idx.push((i, *split));
                }
                for (i, split) in idx {
                    self.records[i].split = split;
                }
            }
            Event::DraftRecorded { sample_id, model_id, caption, .. } => {
                let r = self.record_mut(sample_id)?;
                if r.caption_refined.is_some() || r.review_status != ReviewStatus::Pending {
                    return Err(StoreError::ProvenanceOrder {
                        sample_id: sample_id.clone(),
                        from: r.provenance().unwrap_or(Provenance::Draft),
                        to: Provenance::Draft,
                    });
                }
                r.caption_draft = Some(caption.clone().with_provenance(Provenance::Draft));
                r.draft_model = Some(model_id.clone());
            }
            Event::ProbeRecorded { probe, .. } => {
                self.record_mut(&probe.sample_id)?.probe = Some(probe.clone());
            }
            Event::TaskClaimed { timestamp, sample_id, actor_id } => {
                let r = self.record_mut(sample_id)?;
                match r.review_status {
                    ReviewStatus::Pending | ReviewStatus::InReview if r.caption_draft.is_some() => {
                        r.review_status = ReviewStatus::InReview;
                        r.claim = Some(Claim { actor_id: actor_id.clone(), claimed_at: timestamp.clone() });
                    }
                    status => {
                        return Err(StoreError::InvalidTransition {
                            sample_id: sample_id.clone(),
                            status,
                            action: "claim",
                        })
                    }
                }
            }
            Event::CaptionEdited { timestamp, sample_id, actor_id, before, caption } => {
                let r = self.record_mut(sample_id)?;
                let from = r.provenance().ok_or_else(|| StoreError::NoDraft(sample_id.clone()))?;
                let to = caption.provenance;
                if !from.can_transition_to(to) {
                    return Err(StoreError::ProvenanceOrder { sample_id: sample_id.clone(), from, to });
                }
                if to != Provenance::Draft && r.review_status == ReviewStatus::Pending {
                    return Err(StoreError::InvalidTransition {
                        sample_id: sample_id.clone(),
                        status: r.review_status,
                        action: "edit",
                    });
                }
                r.history.push(CaptionEdit {
                    timestamp: timestamp.clone(),
                    actor_id: actor_id.clone(),
                    before: before.clone(),
                    after: caption.raw_text.clone(),
                    provenance: to,
                });
                match to {
                    Provenance::Draft => r.caption_draft = Some(caption.clone()),
                    Provenance::Refined => {
                        r.caption_refined = Some(caption.clone());
                        r.review_status = ReviewStatus::Refined;
                    }
                    Provenance::Approved => {
                        r.caption_refined = Some(caption.clone());
                        r.review_status = ReviewStatus::Approved;
                        r.claim = None;
                    }
                }
            }
            Event::TaskApproved { sample_id, .. } => {
                let r = self.record_mut(sample_id)?;
                if r.review_status != ReviewStatus::Refined {
                    return Err(StoreError::InvalidTransition {
                        sample_id: sample_id.clone(),
                        status: r.review_status,
                        action: "approve",
                    });
                }
                let refined = r.caption_refined.take().expect("refined status implies refined caption");
                r.caption_refined = Some(refined.with_provenance(Provenance::Approved));
                r.review_status = ReviewStatus::Approved;
                r.claim = None;
            }
            Event::RatingRecorded { rating, allow_any_split, .. } => {
                let r = self.record_mut(&rating.sample_id)?;
                if !allow_any_split && r.split != Split::Test {
                    return Err(StoreError::SplitRestricted { sample_id: rating.sample_id.clone(), split: r.split });
                }
                match r.ratings.iter_mut().find(|x| x.evaluator_id == rating.evaluator_id) {
                    Some(existing) => *existing = rating.clone(),
                    None => r.ratings.push(rating.clone()),
                }
            }
            Event::StageCompleted { timestamp, stage, artifacts } => {
                self.stages_completed
                    .insert(stage.clone(), StageRecord { completed_at: timestamp.clone(), artifacts: artifacts.clone() });
            }
        }
        Ok(())
    }
}
