//! The structured four-sentence attention caption: scene, current gaze,
//! future gaze, rationale.

mod entities;

pub use entities::{canonical_tokens, singularize, EntitySet, ExtractOptions, Gazetteer, GazetteerError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CaptionError {
    #[error("caption text is empty")]
    Empty,
    #[error("expected exactly 4 sentences, found {0}")]
    SentenceCount(usize),
    #[error("caption is missing its {0} sentence")]
    Incomplete(&'static str),
}

/// Non-fatal findings attached to a parsed caption for reviewer attention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CaptionWarning {
    /// The third sentence contains none of the configured future markers.
    FutureTense { sentence: String },
}

impl std::fmt::Display for CaptionWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CaptionWarning::FutureTense { sentence } => {
                write!(f, "sentence 3 has no future-reference marker: \"{sentence}\"")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Draft,
    Refined,
    Approved,
}

impl Provenance {
    /// Transitions may stay in place or move forward, never backward.
    pub fn can_transition_to(self, next: Provenance) -> bool {
        next >= self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionCaption {
    pub sample_id: String,
    pub scene_description: String,
    pub current_gaze: String,
    pub future_gaze: String,
    pub rationale: String,
    pub raw_text: String,
    pub provenance: Provenance,
}

impl AttentionCaption {
    pub fn sentences(&self) -> [&str; 4] {
        [&self.scene_description, &self.current_gaze, &self.future_gaze, &self.rationale]
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Scene, current gaze and rationale, i.e. the caption with its
    /// future-gaze sentence removed.
    pub fn without_future_gaze(&self) -> String {
        [&*self.scene_description, &*self.current_gaze, &*self.rationale].join(" ")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCaption {
    pub caption: AttentionCaption,
    pub warnings: Vec<CaptionWarning>,
}

pub const DEFAULT_FUTURE_MARKERS: &[&str] = &["will", "going to", "is about to", "shall", "next"];
pub const DEFAULT_ABBREVIATIONS: &[&str] = &["e.g.", "i.e.", "etc.", "mr.", "st."];

/// Sentence-splitting and future-marker configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRules {
    pub future_markers: Vec<String>,
    pub abbreviations: Vec<String>,
}

impl Default for CaptionRules {
    fn default() -> Self {
        Self {
            future_markers: DEFAULT_FUTURE_MARKERS.iter().map(|s| s.to_string()).collect(),
            abbreviations: DEFAULT_ABBREVIATIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

const CLOSERS: &[char] = &['"', '\'', '\u{201d}', '\u{2019}', ')'];

fn normalize_space(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl CaptionRules {
    /// Splits on `.`, `!` or `?` (optionally followed by closing quotes or
    /// parentheses) when followed by whitespace or end of text. A period
    /// ending a listed abbreviation does not split.
    pub fn split_sentences(&self, text: &str) -> Vec<String> {
        let chars: Vec<char> = text.chars().collect();
        let mut sentences = Vec::new();
        let mut start = 0;
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if matches!(c, '.' | '!' | '?') {
                let mut end = i + 1;
                while end < chars.len() && CLOSERS.contains(&chars[end]) {
                    end += 1;
                }
                let boundary = end == chars.len() || chars[end].is_whitespace();
                if boundary && !(c == '.' && self.is_abbreviation(&chars[start..=i])) {
                    let sentence = normalize_space(&chars[start..end].iter().collect::<String>());
                    if !sentence.is_empty() {
                        sentences.push(sentence);
                    }
                    start = end;
                    i = end;
                    continue;
                }
            }
            i += 1;
        }
        let tail = normalize_space(&chars[start..].iter().collect::<String>());
        if !tail.is_empty() {
            sentences.push(tail);
        }
        sentences
    }

    fn is_abbreviation(&self, upto_period: &[char]) -> bool {
        let word_start = upto_period.iter().rposition(|c| c.is_whitespace()).map_or(0, |p| p + 1);
        let word: String = upto_period[word_start..].iter().collect::<String>().to_lowercase();
        let word = word.trim_start_matches(|c: char| !c.is_alphanumeric());
        self.abbreviations.iter().any(|a| a.eq_ignore_ascii_case(word))
    }

    pub fn has_future_marker(&self, sentence: &str) -> bool {
        let tokens = crate::metrics::tokenize(sentence);
        self.future_markers.iter().any(|marker| {
            let needle = crate::metrics::tokenize(marker);
            !needle.is_empty() && tokens.windows(needle.len()).any(|w| w == needle.as_slice())
        })
    }

    pub fn parse(&self, raw_text: &str, sample_id: &str) -> Result<ParsedCaption, CaptionError> {
        if raw_text.trim().is_empty() {
            return Err(CaptionError::Empty);
        }
        let sentences = self.split_sentences(raw_text);
        let [scene, current, future, rationale]: [String; 4] =
            sentences.try_into().map_err(|s: Vec<String>| CaptionError::SentenceCount(s.len()))?;
        let mut warnings = Vec::new();
        if !self.has_future_marker(&future) {
            warnings.push(CaptionWarning::FutureTense { sentence: future.clone() });
        }
        Ok(ParsedCaption {
            caption: AttentionCaption {
                sample_id: sample_id.to_string(),
                scene_description: scene,
                current_gaze: current,
                future_gaze: future,
                rationale,
                raw_text: raw_text.to_string(),
                provenance: Provenance::Draft,
            },
            warnings,
        })
    }
}

/// Parses with the default rules.
pub fn parse_caption(raw_text: &str, sample_id: &str) -> Result<ParsedCaption, CaptionError> {
    CaptionRules::default().parse(raw_text, sample_id)
}

/// Joins the four sentences with single spaces.
pub fn render_caption(caption: &AttentionCaption) -> Result<String, CaptionError> {
    const ROLES: [&str; 4] = ["scene", "current-gaze", "future-gaze", "rationale"];
    let mut parts = Vec::with_capacity(4);
    for (role, sentence) in ROLES.iter().zip(caption.sentences()) {
        let s = normalize_space(sentence);
        if s.is_empty() {
            return Err(CaptionError::Incomplete(role));
        }
        parts.push(s);
    }
    Ok(parts.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const GOOD: &str = "A city street with cars and a signal. The driver focuses on the blue car ahead. \
                        The gaze will shift to the red traffic light. The light governs the next maneuver.";

    #[test]
    fn four_roles_are_filled() {
        let parsed = parse_caption(GOOD, "v:1").unwrap();
        assert!(parsed.warnings.is_empty());
        let c = parsed.caption;
        assert_eq!(c.scene_description, "A city street with cars and a signal.");
        assert_eq!(c.current_gaze, "The driver focuses on the blue car ahead.");
        assert_eq!(c.future_gaze, "The gaze will shift to the red traffic light.");
        assert_eq!(c.rationale, "The light governs the next maneuver.");
        assert_eq!(c.provenance, Provenance::Draft);
    }

    #[test]
    fn wrong_sentence_counts() {
        assert_eq!(parse_caption("One sentence only.", "s").unwrap_err(), CaptionError::SentenceCount(1));
        assert_eq!(parse_caption("   ", "s").unwrap_err(), CaptionError::Empty);
        let five = format!("{GOOD} Another one.");
        assert_eq!(parse_caption(&five, "s").unwrap_err(), CaptionError::SentenceCount(5));
    }

    #[test]
    fn missing_future_marker_warns() {
        let text = "A road. The driver looks ahead. The driver looked left. Traffic was light.";
        let parsed = parse_caption(text, "s").unwrap();
        assert_eq!(parsed.warnings.len(), 1);
        assert!(matches!(parsed.warnings[0], CaptionWarning::FutureTense { .. }));
    }

    #[test]
    fn multiword_markers_match_on_tokens() {
        let rules = CaptionRules::default();
        assert!(rules.has_future_marker("The driver is about to brake."));
        assert!(rules.has_future_marker("Attention is going to move right."));
        assert!(!rules.has_future_marker("The driver is aboutto brake."));
        assert!(!rules.has_future_marker("Willow trees line the road."));
    }

    #[test]
    fn abbreviations_do_not_split() {
        let rules = CaptionRules::default();
        let s = rules.split_sentences("Road users, e.g. cyclists, appear on Main St. near the bend. It rains.");
        assert_eq!(s, vec!["Road users, e.g. cyclists, appear on Main St. near the bend.", "It rains."]);
        let q = rules.split_sentences("Is it red? \"Yes.\" Go!");
        assert_eq!(q, vec!["Is it red?", "\"Yes.\"", "Go!"]);
    }

    #[test]
    fn render_normalizes_spacing() {
        let mut c = parse_caption(GOOD, "s").unwrap().caption;
        c.scene_description = "A city   street. ".into();
        let text = render_caption(&c).unwrap();
        assert!(text.starts_with("A city street. The driver"));
        assert!(!text.contains("  "));
        c.rationale = "  ".into();
        assert_eq!(render_caption(&c).unwrap_err(), CaptionError::Incomplete("rationale"));
    }

    #[test]
    fn provenance_only_moves_forward() {
        assert!(Provenance::Draft.can_transition_to(Provenance::Refined));
        assert!(Provenance::Refined.can_transition_to(Provenance::Refined));
        assert!(Provenance::Refined.can_transition_to(Provenance::Approved));
        assert!(!Provenance::Approved.can_transition_to(Provenance::Draft));
        assert!(!Provenance::Refined.can_transition_to(Provenance::Draft));
    }

    fn sentence() -> impl Strategy<Value = String> {
        ("[A-Z][a-z]{1,8}( [a-z]{1,8}){0,6}", prop_oneof![Just("."), Just("!"), Just("?")])
            .prop_filter("abbreviation at sentence end", |(body, _)| {
                let last = body.rsplit(' ').next().unwrap_or("").to_lowercase();
                !["etc", "mr", "st"].contains(&last.as_str())
            })
            .prop_map(|(body, end)| format!("{body}{end}"))
    }

    proptest! {
        #[test]
        fn render_then_parse_round_trips(s in proptest::array::uniform4(sentence()), pad in "[ \t\n]{0,3}") {
            let raw = format!("{pad}{} {}  {}\n{}{pad}", s[0], s[1], s[2], s[3]);
            let c = parse_caption(&raw, "x").unwrap().caption;
            let again = parse_caption(&render_caption(&c).unwrap(), "x").unwrap().caption;
            prop_assert_eq!(c.sentences(), again.sentences());
            prop_assert_eq!(c.sentences().map(str::to_string), s);
        }
    }
}
