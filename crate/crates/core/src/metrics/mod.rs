//! Caption evaluation: ROUGE-L, METEOR, entity-alignment F1, ParaScore,
//! human-score aggregation and per-question probe scoring.

mod entity_f1;
mod meteor;
mod parascore;
mod report;
mod rouge;

pub use entity_f1::{ea_f1, EntityScores};
pub use meteor::{meteor, Alignment, MatchStage, MeteorParams, MeteorScorer, SynonymTable};
pub use parascore::{
    lexical_divergence, parascore, BackendError, ParaScoreError, BagOfWordsCosine, EmbeddingApiBackend, SimilarityBackend,
    WithFallback, DEFAULT_DS_THRESHOLD, DEFAULT_OMEGA,
};
pub use report::{
    aggregate_report, human_score, write_report_csv, CorpusMeans, EvaluationReport, Evaluator, HumanRating,
    RatingError, ReportError, SampleScores,
};
pub use rouge::{lcs_len, rouge_l};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("reference is empty")]
    EmptyReference,
}

/// Lowercases and splits on every run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Output of the shared tokenizer.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn from_text(text: &str) -> Self {
        TokenSequence(tokenize(text))
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<&str> for TokenSequence {
    fn from(text: &str) -> Self {
        Self::from_text(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_folds_case_and_punctuation() {
        assert_eq!(tokenize("The Car's  lights\u{2014}ON!"), vec!["the", "car", "s", "lights", "on"]);
        assert!(tokenize(" ,.; ").is_empty());
    }
}
