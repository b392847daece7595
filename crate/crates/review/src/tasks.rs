//! Review operations over a dataset store, independent of the HTTP layer.

use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};
use vista_core::caption::{parse_caption, Provenance};
use vista_core::clock::parse_timestamp;
use vista_core::keyframe::AssetSlot;
use vista_core::metrics::HumanRating;
use vista_core::store::{ReviewStatus, SampleRecord, Store};

use crate::error::ReviewError;

pub type Result<T> = std::result::Result<T, ReviewError>;

/// Inactivity window after which another reviewer may take over a claim.
pub const DEFAULT_CLAIM_TTL_MINUTES: i64 = 30;
pub const DEFAULT_PAGE_SIZE: usize = 20;
pub const MAX_PAGE_SIZE: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarningView {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetLink {
    pub slot: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewTask {
    pub sample_id: String,
    pub status: String,
    pub assigned_to: Option<String>,
    pub claim_expires_at: Option<String>,
    pub split: String,
    pub provenance: Option<Provenance>,
    pub draft_text: Option<String>,
    pub current_text: Option<String>,
    pub warnings: Vec<WarningView>,
    pub asset_urls: Vec<AssetLink>,
    pub history_len: usize,
    pub ratings: Vec<HumanRating>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub sample_id: String,
    pub status: String,
    pub assigned_to: Option<String>,
    pub split: String,
    pub warning_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPage {
    pub tasks: Vec<TaskSummary>,
    /// 1-based page number.
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
    pub pages: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingOutcome {
    pub rating: HumanRating,
    pub replaced: Option<HumanRating>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportedCaption {
    pub sample_id: String,
    pub split: String,
    pub caption: String,
    pub sentences: [String; 4],
    pub images: Vec<AssetLink>,
}

/// Review policy knobs shared by every request.
#[derive(Debug, Clone)]
pub struct ReviewPolicy {
    pub claim_ttl: TimeDelta,
    pub allow_any_split_ratings: bool,
}

impl ReviewPolicy {
    pub fn new(claim_ttl_minutes: i64, allow_any_split_ratings: bool) -> Self {
        Self { claim_ttl: TimeDelta::minutes(claim_ttl_minutes), allow_any_split_ratings }
    }
}

impl Default for ReviewPolicy {
    fn default() -> Self {
        Self::new(DEFAULT_CLAIM_TTL_MINUTES, false)
    }
}

fn status_rank(s: ReviewStatus) -> u8 {
    match s {
        ReviewStatus::Pending => 0,
        ReviewStatus::InReview => 1,
        ReviewStatus::Refined => 2,
        ReviewStatus::Approved => 3,
    }
}

fn record<'a>(store: &'a Store, sample_id: &str) -> Result<&'a SampleRecord> {
    store.manifest().record(sample_id).ok_or_else(|| ReviewError::NotFound(sample_id.to_string()))
}

/// Last moment the claim holder touched the task, if a claim exists.
fn claim_activity(r: &SampleRecord) -> Option<(String, DateTime<Utc>)> {
    let claim = r.claim.as_ref()?;
    let claimed = parse_timestamp(&claim.claimed_at).ok()?;
    let latest = r
        .history
        .iter()
        .filter(|h| h.actor_id == claim.actor_id)
        .filter_map(|h| parse_timestamp(&h.timestamp).ok())
        .fold(claimed, DateTime::max);
    Some((claim.actor_id.clone(), latest))
}

/// Holder and expiry of a claim that is still live at `now`.
pub fn active_claim(r: &SampleRecord, now: DateTime<Utc>, ttl: TimeDelta) -> Option<(String, DateTime<Utc>)> {
    let (holder, last) = claim_activity(r)?;
    let expires = last + ttl;
    (now < expires).then_some((holder, expires))
}

fn ensure_not_claimed_by_other(store: &Store, r: &SampleRecord, actor_id: &str, policy: &ReviewPolicy) -> Result<()> {
    if let Some((holder, expires)) = active_claim(r, store.clock().now(), policy.claim_ttl) {
        if holder != actor_id {
            return Err(ReviewError::ClaimConflict {
                sample_id: r.sample_id.clone(),
                holder,
                expires_at: expires.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            });
        }
    }
    Ok(())
}

fn asset_links(sample_id: &str) -> Vec<AssetLink> {
    AssetSlot::ALL
        .iter()
        .map(|s| AssetLink { slot: s.as_str().to_string(), url: format!("/tasks/{sample_id}/assets/{}", s.as_str()) })
        .collect()
}

fn warnings_for(r: &SampleRecord) -> Vec<WarningView> {
    let Some(caption) = r.current_caption() else { return Vec::new() };
    match parse_caption(&caption.raw_text, &r.sample_id) {
        Ok(parsed) => parsed
            .warnings
            .iter()
            .map(|w| WarningView { kind: "future_tense".to_string(), message: w.to_string() })
            .collect(),
        Err(e) => vec![WarningView { kind: "invalid".to_string(), message: e.to_string() }],
    }
}

pub fn task_view(store: &Store, r: &SampleRecord, policy: &ReviewPolicy) -> ReviewTask {
    let expires = active_claim(r, store.clock().now(), policy.claim_ttl)
        .map(|(_, e)| e.to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    ReviewTask {
        sample_id: r.sample_id.clone(),
        status: r.review_status.as_str().to_string(),
        assigned_to: r.claim.as_ref().map(|c| c.actor_id.clone()),
        claim_expires_at: expires,
        split: r.split.as_str().to_string(),
        provenance: r.provenance(),
        draft_text: r.caption_draft.as_ref().map(|c| c.raw_text.clone()),
        current_text: r.current_caption().map(|c| c.raw_text.clone()),
        warnings: warnings_for(r),
        asset_urls: asset_links(&r.sample_id),
        history_len: r.history.len(),
        ratings: r.ratings.clone(),
    }
}

pub fn parse_status_filter(raw: Option<&str>) -> Result<Option<ReviewStatus>> {
    match raw.map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => ReviewStatus::parse(s).map(Some).ok_or_else(|| {
            ReviewError::BadRequest(format!(
                "invalid status filter '{s}'; expected one of pending, in_review, refined, approved"
            ))
        }),
    }
}

/// Tasks ordered by (status, sample_id), sliced into 1-based pages.
pub fn list_tasks(store: &Store, filter: Option<ReviewStatus>, page: usize, page_size: usize) -> Result<TaskPage> {
    if page == 0 {
        return Err(ReviewError::BadRequest("page numbers start at 1".to_string()));
    }
    if page_size == 0 {
        return Err(ReviewError::BadRequest("page_size must be positive".to_string()));
    }
    let page_size = page_size.min(MAX_PAGE_SIZE);
    let mut records: Vec<&SampleRecord> =
        store.manifest().records.iter().filter(|r| filter.is_none_or(|f| r.review_status == f)).collect();
    records.sort_by(|a, b| {
        (status_rank(a.review_status), &a.sample_id).cmp(&(status_rank(b.review_status), &b.sample_id))
    });
    let total = records.len();
    let tasks = records
        .into_iter()
        .skip((page - 1).saturating_mul(page_size))
        .take(page_size)
        .map(|r| TaskSummary {
            sample_id: r.sample_id.clone(),
            status: r.review_status.as_str().to_string(),
            assigned_to: r.claim.as_ref().map(|c| c.actor_id.clone()),
            split: r.split.as_str().to_string(),
            warning_count: warnings_for(r).len(),
        })
        .collect();
    Ok(TaskPage { tasks, page, page_size, total, pages: total.div_ceil(page_size) })
}

pub fn get_task(store: &Store, sample_id: &str, policy: &ReviewPolicy) -> Result<ReviewTask> {
    Ok(task_view(store, record(store, sample_id)?, policy))
}

/// Claims (or refreshes the claim on) a pending or in-review task.
pub fn claim_task(store: &mut Store, sample_id: &str, actor_id: &str, policy: &ReviewPolicy) -> Result<ReviewTask> {
    let r = record(store, sample_id)?;
    ensure_not_claimed_by_other(store, r, actor_id, policy)?;
    let unchanged = r.claim.as_ref().is_some_and(|c| c.actor_id == actor_id && c.claimed_at == store.clock().timestamp());
    if !unchanged {
        store.claim(sample_id, actor_id)?;
    }
    get_task(store, sample_id, policy)
}

/// Validates `edited_text` with the caption parser and stores it as the
/// refined caption. A pending task is claimed by `actor_id` first.
pub fn submit_edit(
    store: &mut Store,
    sample_id: &str,
    edited_text: &str,
    actor_id: &str,
    policy: &ReviewPolicy,
) -> Result<ReviewTask> {
    let r = record(store, sample_id)?;
    if r.review_status == ReviewStatus::Approved {
        return Err(ReviewError::InvalidTransition {
            sample_id: sample_id.to_string(),
            status: r.review_status,
            action: "edit",
        });
    }
    ensure_not_claimed_by_other(store, r, actor_id, policy)?;
    let parsed = parse_caption(edited_text, sample_id)?;
    let takeover = r.review_status == ReviewStatus::InReview
        && r.claim.as_ref().is_some_and(|c| c.actor_id != actor_id);
    if takeover {
        store.claim(sample_id, actor_id)?;
    }
    store.transition_provenance(sample_id, parsed.caption.with_provenance(Provenance::Refined), actor_id)?;
    get_task(store, sample_id, policy)
}

/// Approves a refined task; approving an approved task is a no-op.
pub fn approve_task(store: &mut Store, sample_id: &str, actor_id: &str, policy: &ReviewPolicy) -> Result<ReviewTask> {
    let r = record(store, sample_id)?;
    match r.review_status {
        ReviewStatus::Approved => {}
        ReviewStatus::Refined => {
            ensure_not_claimed_by_other(store, r, actor_id, policy)?;
            store.approve(sample_id, actor_id)?;
        }
        status => {
            return Err(ReviewError::InvalidTransition { sample_id: sample_id.to_string(), status, action: "approve" })
        }
    }
    get_task(store, sample_id, policy)
}

pub fn submit_rating(
    store: &mut Store,
    sample_id: &str,
    evaluator_id: &str,
    values: (i64, i64, i64),
    policy: &ReviewPolicy,
) -> Result<RatingOutcome> {
    record(store, sample_id)?;
    let rating = HumanRating::new(sample_id, evaluator_id, values.0, values.1, values.2)?;
    let replaced = store.add_rating(rating.clone(), policy.allow_any_split_ratings)?;
    Ok(RatingOutcome { rating, replaced })
}

pub fn export_refined(store: &Store) -> Vec<ExportedCaption> {
    store
        .approved_entries()
        .into_iter()
        .map(|(r, c)| ExportedCaption {
            sample_id: r.sample_id.clone(),
            split: r.split.as_str().to_string(),
            caption: c.raw_text.clone(),
            sentences: c.sentences().map(str::to_string),
            images: r
                .pair
                .assets()
                .iter()
                .map(|(slot, a)| AssetLink { slot: slot.as_str().to_string(), url: a.path.clone() })
                .collect(),
        })
        .collect()
}
