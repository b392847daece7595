use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    ea_f1, parascore, rouge_l, BagOfWordsCosine, MeteorScorer, MetricError, ParaScoreError, SimilarityBackend,
    TokenSequence, DEFAULT_OMEGA,
};
use crate::caption::{ExtractOptions, Gazetteer};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SampleScores {
    pub rouge_l: f64,
    pub meteor: f64,
    pub ea_f1: f64,
    pub parascore: f64,
}

impl SampleScores {
    fn max(self, o: SampleScores) -> SampleScores {
        SampleScores {
            rouge_l: self.rouge_l.max(o.rouge_l),
            meteor: self.meteor.max(o.meteor),
            ea_f1: self.ea_f1.max(o.ea_f1),
            parascore: self.parascore.max(o.parascore),
        }
    }

    fn mean(items: &[SampleScores]) -> SampleScores {
        let n = items.len() as f64;
        let sum = |f: fn(&SampleScores) -> f64| items.iter().map(f).sum::<f64>() / n;
        SampleScores {
            rouge_l: sum(|s| s.rouge_l),
            meteor: sum(|s| s.meteor),
            ea_f1: sum(|s| s.ea_f1),
            parascore: sum(|s| s.parascore),
        }
    }
}

pub type CorpusMeans = SampleScores;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RatingError {
    #[error("{criterion} rating {value} is outside 1..=5")]
    Range { criterion: &'static str, value: i64 },
}

/// One evaluator's 1-5 Likert ratings for one sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanRating {
    pub sample_id: String,
    pub evaluator_id: String,
    pub quality: u8,
    pub informativeness: u8,
    pub correctness: u8,
}

impl HumanRating {
    pub fn new(
        sample_id: impl Into<String>,
        evaluator_id: impl Into<String>,
        quality: i64,
        informativeness: i64,
        correctness: i64,
    ) -> Result<Self, RatingError> {
        let check = |criterion, value: i64| {
            if (1..=5).contains(&value) {
                Ok(value as u8)
            } else {
                Err(RatingError::Range { criterion, value })
            }
        };
        Ok(Self {
            sample_id: sample_id.into(),
            evaluator_id: evaluator_id.into(),
            quality: check("quality", quality)?,
            informativeness: check("informativeness", informativeness)?,
            correctness: check("correctness", correctness)?,
        })
    }

    pub fn values(&self) -> [u8; 3] {
        [self.quality, self.informativeness, self.correctness]
    }

    pub fn mean(&self) -> f64 {
        self.values().iter().map(|&v| f64::from(v)).sum::<f64>() / 3.0
    }
}

/// Grand mean over every (rating, criterion) value.
pub fn human_score(ratings: &[HumanRating]) -> Option<f64> {
    if ratings.is_empty() {
        return None;
    }
    let total: f64 = ratings.iter().flat_map(|r| r.values()).map(f64::from).sum();
    Some(total / (3 * ratings.len()) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub system_id: String,
    pub n_samples: usize,
    pub per_sample: BTreeMap<String, SampleScores>,
    pub corpus_means: CorpusMeans,
    pub human_score: Option<f64>,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no scored samples")]
    Empty,
    #[error("sample {0} appears twice")]
    DuplicateSample(String),
    #[error("sample {sample_id}: {source}")]
    Metric { sample_id: String, source: ParaScoreError },
    #[error("probe answer counts differ: {0} candidate vs {1} reference")]
    ProbeArity(usize, usize),
    #[error("sample has no reference text")]
    NoReference,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Folds per-sample scores and ratings into a report; means are taken in
/// sample-id order so they do not depend on input order.
pub fn aggregate_report(
    per_sample: Vec<(String, SampleScores)>,
    ratings: &[HumanRating],
    system_id: &str,
) -> Result<EvaluationReport, ReportError> {
    if per_sample.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut map = BTreeMap::new();
    for (id, scores) in per_sample {
        if map.insert(id.clone(), scores).is_some() {
            return Err(ReportError::DuplicateSample(id));
        }
    }
    let values: Vec<SampleScores> = map.values().copied().collect();
    Ok(EvaluationReport {
        system_id: system_id.to_string(),
        n_samples: map.len(),
        corpus_means: SampleScores::mean(&values),
        per_sample: map,
        human_score: human_score(ratings),
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `sample_id,rouge_l,meteor,ea_f1,parascore`, one row per sample.
pub fn write_report_csv(report: &EvaluationReport, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "sample_id,rouge_l,meteor,ea_f1,parascore")?;
    for (id, s) in &report.per_sample {
        writeln!(out, "{},{},{},{},{}", csv_field(id), s.rouge_l, s.meteor, s.ea_f1, s.parascore)?;
    }
    Ok(())
}

/// Bundles the metric configuration used to score captions and probe answers.
pub struct Evaluator {
    pub gazetteer: Gazetteer,
    pub extract: ExtractOptions,
    pub meteor: MeteorScorer,
    pub backend: Box<dyn SimilarityBackend>,
    pub omega: f64,
}

impl Evaluator {
    pub fn new(gazetteer: Gazetteer, meteor: MeteorScorer) -> Self {
        Self {
            gazetteer,
            extract: ExtractOptions::default(),
            meteor,
            backend: Box::new(BagOfWordsCosine),
            omega: DEFAULT_OMEGA,
        }
    }

    fn score_one(&self, candidate: &str, reference: &str, source: Option<&str>) -> Result<SampleScores, ParaScoreError> {
        let cand = TokenSequence::from_text(candidate);
        let refr = TokenSequence::from_text(reference);
        let src = source.map(TokenSequence::from_text);
        let ce = self.gazetteer.extract_text(candidate, &self.extract);
        let re = self.gazetteer.extract_text(reference, &self.extract);
        Ok(SampleScores {
            rouge_l: rouge_l(&cand, &refr)?,
            meteor: self.meteor.score(&cand, &refr).map_err(ParaScoreError::from)?,
            ea_f1: ea_f1(&ce, &re).f1,
            parascore: parascore(src.as_ref(), &cand, &refr, self.backend.as_ref(), self.omega)?,
        })
    }

    /// Scores a candidate against each reference and keeps the best value
    /// per metric.
    pub fn score_caption(
        &self,
        candidate: &str,
        references: &[&str],
        source: Option<&str>,
    ) -> Result<SampleScores, ReportError> {
        let mut best: Option<SampleScores> = None;
        for r in references {
            let s = self
                .score_one(candidate, r, source)
                .map_err(|source| ReportError::Metric { sample_id: String::new(), source })?;
            best = Some(best.map_or(s, |b| b.max(s)));
        }
        best.ok_or(ReportError::NoReference)
    }

    /// Mean of per-question scores for aligned probe answers.
    pub fn score_probe(&self, candidate: &[String], reference: &[String]) -> Result<SampleScores, ReportError> {
        if candidate.len() != reference.len() || reference.is_empty() {
            return Err(ReportError::ProbeArity(candidate.len(), reference.len()));
        }
        let per_question = candidate
            .iter()
            .zip(reference)
            .map(|(c, r)| self.score_one(c, r, None))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|source| ReportError::Metric { sample_id: String::new(), source })?;
        Ok(SampleScores::mean(&per_question))
    }
}

impl From<MetricError> for ReportError {
    fn from(e: MetricError) -> Self {
        ReportError::Metric { sample_id: String::new(), source: e.into() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(rouge_l: f64) -> SampleScores {
        SampleScores { rouge_l, ..Default::default() }
    }

    #[test]
    fn corpus_mean_and_human_score() {
        let ratings = vec![
            HumanRating::new("a", "e1", 5, 5, 5).unwrap(),
            HumanRating::new("a", "e2", 1, 1, 1).unwrap(),
        ];
        let r = aggregate_report(vec![("a".into(), s(0.4)), ("b".into(), s(0.6))], &ratings, "sys").unwrap();
        assert!((r.corpus_means.rouge_l - 0.5).abs() < 1e-12);
        assert_eq!(r.human_score, Some(3.0));
        assert_eq!(r.n_samples, 2);
    }

    #[test]
    fn empty_and_duplicate_inputs() {
        assert!(matches!(aggregate_report(vec![], &[], "x"), Err(ReportError::Empty)));
        let dup = vec![("a".into(), s(0.1)), ("a".into(), s(0.2))];
        assert!(matches!(aggregate_report(dup, &[], "x"), Err(ReportError::DuplicateSample(_))));
        let r = aggregate_report(vec![("a".into(), s(0.1))], &[], "x").unwrap();
        assert_eq!(r.human_score, None);
    }

    #[test]
    fn rating_range() {
        assert_eq!(HumanRating::new("a", "e", 4, 5, 3).unwrap().mean(), 4.0);
        assert_eq!(
            HumanRating::new("a", "e", 0, 5, 3).unwrap_err(),
            RatingError::Range { criterion: "quality", value: 0 }
        );
        assert!(HumanRating::new("a", "e", 1, 6, 3).is_err());
    }

    #[test]
    fn multiple_references_take_the_best() {
        let ev = Evaluator::new(Gazetteer::builtin(), MeteorScorer::default());
        let c = "the car stops at the light";
        let one = ev.score_caption(c, &["a bus turns"], None).unwrap();
        let both = ev.score_caption(c, &["a bus turns", c], None).unwrap();
        assert!(both.rouge_l > one.rouge_l);
        assert_eq!(both.rouge_l, 1.0);
        assert!(matches!(ev.score_caption(c, &[], None), Err(ReportError::NoReference)));
    }

    #[test]
    fn csv_layout() {
        let r = aggregate_report(vec![("v,1".into(), s(0.5))], &[], "x").unwrap();
        let mut buf = Vec::new();
        write_report_csv(&r, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "sample_id,rouge_l,meteor,ea_f1,parascore\n\"v,1\",0.5,0,0,0\n");
    }
}
