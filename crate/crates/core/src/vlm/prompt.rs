use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::keyframe::{AssetSlot, ScoredFramePair};

use super::VlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    CaptionDraft,
    ZeroShotCaption,
    Probe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: String,
    pub instruction_text: String,
    pub kind: TemplateKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageAttachment {
    pub slot: AssetSlot,
    pub path: String,
    pub sha256: String,
}

/// A template with every placeholder filled, ready to send.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundPrompt {
    pub template_name: String,
    pub kind: TemplateKind,
    pub sample_id: String,
    pub text: String,
    pub images: Vec<ImageAttachment>,
}

const CAPTION_CONSTRAINTS: &str = "Write one paragraph of exactly four sentences and nothing else: \
no headings, no lists, no extra sentences. Rely only on what is visible in the images.";

const PROBE_CONSTRAINTS: &str = "Answer only from visible cues and do not speculate. \
Reply with exactly five lines, numbered 1 to 5, one answer per question.";

pub fn caption_draft_template() -> PromptTemplate {
    PromptTemplate {
        name: "caption_draft".into(),
        kind: TemplateKind::CaptionDraft,
        instruction_text: "You are shown four aligned inputs from a driving video: {image_refs}.\n\
The gaze heatmaps show where the driver looked in each frame.\n\
Describe how the driver's attention shifts between the two frames.\n\
Sentence 1: describe the driving scene.\n\
Sentence 2: state what the driver is looking at now.\n\
Sentence 3: predict, using the future tense, where the driver will look next.\n\
Sentence 4: give the reason for this shift of attention.\n\
{constraints}"
            .into(),
    }
}

pub fn zero_shot_template() -> PromptTemplate {
    PromptTemplate {
        name: "zero_shot_caption".into(),
        kind: TemplateKind::ZeroShotCaption,
        instruction_text: "You are shown a frame from a driving video: {image_refs}.\n\
Sentence 1: describe the driving scene.\n\
Sentence 2: state what the driver is most likely looking at.\n\
Sentence 3: predict, using the future tense, where the driver will look next.\n\
Sentence 4: give the reason for this shift of attention.\n\
{constraints}"
            .into(),
    }
}

pub fn probe_template() -> PromptTemplate {
    PromptTemplate {
        name: "probe".into(),
        kind: TemplateKind::Probe,
        instruction_text: "Look at this frame from a driving video: {image_refs}.\n\
{questions}\n\
{constraints}"
            .into(),
    }
}

/// Default probing questions, one per theme: central salient object,
/// traffic elements, road users ahead, environment, anticipated focus.
pub fn default_probe_questions() -> [String; 5] {
    [
        "What is the most salient object near the center of the driver's view?",
        "Which traffic elements, such as signals, signs or lane markings, are visible?",
        "Which road users are ahead of the vehicle?",
        "What environmental features, such as weather, lighting or road layout, can be seen?",
        "Which area is the driver most likely to focus on next?",
    ]
    .map(String::from)
}

fn slot_label(slot: AssetSlot) -> &'static str {
    match slot {
        AssetSlot::RgbT => "camera frame at time t",
        AssetSlot::GazeT => "gaze heatmap at time t",
        AssetSlot::RgbT1 => "camera frame at time t+1",
        AssetSlot::GazeT1 => "gaze heatmap at time t+1",
    }
}

fn image_refs(slots: &[AssetSlot]) -> String {
    slots
        .iter()
        .enumerate()
        .map(|(i, s)| format!("[image {}] {}", i + 1, slot_label(*s)))
        .collect::<Vec<_>>()
        .join(", ")
}

impl PromptTemplate {
    /// Substitutes `{name}` placeholders; any placeholder left unbound is an error.
    pub fn bind(&self, values: &[(&str, &str)]) -> Result<String, VlmError> {
        let mut out = String::with_capacity(self.instruction_text.len());
        let mut rest = self.instruction_text.as_str();
        while let Some(start) = rest.find('{') {
            out.push_str(&rest[..start]);
            let end = rest[start..].find('}').map(|e| start + e).ok_or_else(|| {
                VlmError::UnboundPlaceholder(format!("unterminated placeholder in template {}", self.name))
            })?;
            let key = &rest[start + 1..end];
            let value = values
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| VlmError::UnboundPlaceholder(format!("{{{key}}} in template {}", self.name)))?;
            out.push_str(value);
            rest = &rest[end + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }

    /// Binds the template for `pair`, attaching the slots its kind requires.
    pub fn bind_for_pair(
        &self,
        pair: &ScoredFramePair,
        asset_root: &Path,
        questions: Option<&[String]>,
    ) -> Result<BoundPrompt, VlmError> {
        let slots: &[AssetSlot] = match self.kind {
            TemplateKind::CaptionDraft => &AssetSlot::ALL,
            TemplateKind::ZeroShotCaption | TemplateKind::Probe => &[AssetSlot::RgbT],
        };
        let mut images = Vec::with_capacity(slots.len());
        for &slot in slots {
            let asset = pair.asset(slot);
            let path = asset_root.join(&asset.path);
            if !path.is_file() {
                return Err(VlmError::AssetNotFound { slot, path: path.display().to_string() });
            }
            images.push(ImageAttachment { slot, path: asset.path.clone(), sha256: asset.sha256.clone() });
        }
        let refs = image_refs(slots);
        let question_block = questions
            .map(|qs| qs.iter().enumerate().map(|(i, q)| format!("{}. {q}", i + 1)).collect::<Vec<_>>().join("\n"))
            .unwrap_or_default();
        let constraints = match self.kind {
            TemplateKind::Probe => PROBE_CONSTRAINTS,
            _ => CAPTION_CONSTRAINTS,
        };
        let mut values = vec![("image_refs", refs.as_str()), ("constraints", constraints)];
        if self.kind == TemplateKind::Probe {
            values.push(("questions", question_block.as_str()));
        }
        Ok(BoundPrompt {
            template_name: self.name.clone(),
            kind: self.kind,
            sample_id: pair.sample_id(),
            text: self.bind(&values)?,
            images,
        })
    }
}

/// Four-image caption prompt for a scored pair.
pub fn build_caption_prompt(pair: &ScoredFramePair, asset_root: &Path) -> Result<BoundPrompt, VlmError> {
    caption_draft_template().bind_for_pair(pair, asset_root, None)
}

pub fn build_zero_shot_prompt(pair: &ScoredFramePair, asset_root: &Path) -> Result<BoundPrompt, VlmError> {
    zero_shot_template().bind_for_pair(pair, asset_root, None)
}

pub fn build_probe_prompt(pair: &ScoredFramePair, asset_root: &Path, questions: &[String]) -> Result<BoundPrompt, VlmError> {
    if questions.len() != 5 {
        return Err(VlmError::InvalidProbeSet(questions.len()));
    }
    probe_template().bind_for_pair(pair, asset_root, Some(questions))
}

/// Extracts one answer per non-empty line, dropping `1.`, `2)` or `3:` prefixes.
pub fn parse_numbered_answers(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let digits = l.chars().take_while(|c| c.is_ascii_digit()).count();
            let rest = &l[digits..];
            if digits > 0 && rest.starts_with(['.', ')', ':']) {
                rest[1..].trim().to_string()
            } else {
                l.to_string()
            }
        })
        .collect()
}
