use std::collections::HashMap;
use std::path::Path;

use rust_stemmers::{Algorithm, Stemmer};

use super::{MetricError, TokenSequence};

static DEFAULT_SYNONYMS: &str = include_str!("../../data/synonyms.txt");

/// Alignment stage, in priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MatchStage {
    Exact = 0,
    Stem = 1,
    Synonym = 2,
}

/// Synonym sets keyed by stemmed member.
#[derive(Debug, Clone, Default)]
pub struct SynonymTable {
    sets: Vec<Vec<String>>,
    by_stem: HashMap<String, Vec<usize>>,
}

impl SynonymTable {
    pub fn empty() -> Self {
        Self::default()
    }

    /// One comma-separated synonym set per line; `#` starts a comment.
    pub fn parse(text: &str) -> Self {
        let stemmer = Stemmer::create(Algorithm::English);
        let mut table = Self::default();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            let members: Vec<String> = line
                .split(',')
                .map(|m| m.trim().to_lowercase())
                .filter(|m| !m.is_empty())
                .collect();
            if members.len() < 2 {
                continue;
            }
            let id = table.sets.len();
            for m in &members {
                let ids = table.by_stem.entry(stemmer.stem(m).into_owned()).or_default();
                if !ids.contains(&id) {
                    ids.push(id);
                }
            }
            table.sets.push(members);
        }
        table
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn builtin() -> Self {
        Self::parse(DEFAULT_SYNONYMS)
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    fn ids(&self, stem: &str) -> &[usize] {
        self.by_stem.get(stem).map_or(&[], Vec::as_slice)
    }

    /// True when the two stems share a synonym set.
    pub fn related(&self, stem_a: &str, stem_b: &str) -> bool {
        let b = self.ids(stem_b);
        self.ids(stem_a).iter().any(|id| b.contains(id))
    }
}

/// Harmonic-mean weight, fragmentation exponent and penalty ceiling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeteorParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for MeteorParams {
    fn default() -> Self {
        Self { alpha: 0.9, beta: 3.0, gamma: 0.5 }
    }
}

/// A one-to-one unigram alignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    /// `(candidate index, reference index, stage)` sorted by candidate index.
    pub pairs: Vec<(usize, usize, MatchStage)>,
    pub chunks: usize,
    /// True when the search budget ran out before optimality was proven.
    pub truncated: bool,
}

impl Alignment {
    pub fn matches(&self) -> usize {
        self.pairs.len()
    }

    pub fn count(&self, stage: MatchStage) -> usize {
        self.pairs.iter().filter(|p| p.2 == stage).count()
    }
}

/// Counts maximal runs of pairs adjacent in both sequences.
pub(crate) fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    let mut sorted = pairs.to_vec();
    sorted.sort();
    let links = sorted.windows(2).filter(|w| w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1).count();
    sorted.len() - links
}

pub struct MeteorScorer {
    params: MeteorParams,
    synonyms: SynonymTable,
    stemmer: Stemmer,
    node_budget: usize,
}

impl std::fmt::Debug for MeteorScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MeteorScorer")
            .field("params", &self.params)
            .field("synonym_sets", &self.synonyms.len())
            .field("node_budget", &self.node_budget)
            .finish()
    }
}

impl Default for MeteorScorer {
    fn default() -> Self {
        Self::new(MeteorParams::default(), SynonymTable::empty())
    }
}

type Objective = [usize; 4];

/// Reference index and match stage per candidate token.
type Assignment = Vec<Option<(usize, MatchStage)>>;

struct Search<'a> {
    positions: Vec<usize>,
    edges: Vec<Vec<(usize, MatchStage)>>,
    exact_cls_c: &'a [usize],
    exact_cls_r: &'a [usize],
    stem_cls_c: &'a [usize],
    stem_cls_r: &'a [usize],
    rem_exact: Vec<usize>,
    avail_exact: Vec<usize>,
    rem_stem: Vec<usize>,
    avail_stem: Vec<usize>,
    syn_suffix: Vec<usize>,
    link_suffix: Vec<usize>,
    ref_used: Vec<bool>,
    assign: Assignment,
    counts: [usize; 3],
    links: usize,
    best: Option<(Objective, Assignment)>,
    nodes: usize,
    budget: usize,
}

impl Search<'_> {
    fn bound(&self, p: usize) -> Objective {
        let min_sum = |rem: &[usize], avail: &[usize]| rem.iter().zip(avail).map(|(a, b)| *a.min(b)).sum::<usize>();
        [
            self.counts[0] + min_sum(&self.rem_exact, &self.avail_exact),
            self.counts[1] + min_sum(&self.rem_stem, &self.avail_stem),
            self.counts[2] + self.syn_suffix[p],
            self.links + self.link_suffix[p],
        ]
    }

    fn dfs(&mut self, p: usize) {
        self.nodes += 1;
        if self.nodes > self.budget && self.best.is_some() {
            return;
        }
        if p == self.positions.len() {
            let objective = [self.counts[0], self.counts[1], self.counts[2], self.links];
            if self.best.as_ref().is_none_or(|(b, _)| objective > *b) {
                self.best = Some((objective, self.assign.clone()));
            }
            return;
        }
        if let Some((best, _)) = &self.best {
            if self.bound(p) <= *best {
                return;
            }
        }
        let i = self.positions[p];
        self.rem_exact[self.exact_cls_c[i]] -= 1;
        self.rem_stem[self.stem_cls_c[i]] -= 1;

        let prev = if i > 0 { self.assign[i - 1].map(|(j, _)| j) } else { None };
        let mut options: Vec<(usize, MatchStage)> =
            self.edges[p].iter().copied().filter(|(j, _)| !self.ref_used[*j]).collect();
        let expected = prev.map_or(0, |j| j + 1);
        options.sort_by_key(|&(j, stage)| (stage, j != expected, j.abs_diff(expected), j));

        for (j, stage) in options {
            let gain = usize::from(prev.is_some_and(|pj| pj + 1 == j));
            self.ref_used[j] = true;
            self.assign[i] = Some((j, stage));
            self.counts[stage as usize] += 1;
            self.links += gain;
            self.avail_exact[self.exact_cls_r[j]] -= 1;
            self.avail_stem[self.stem_cls_r[j]] -= 1;

            self.dfs(p + 1);

            self.avail_stem[self.stem_cls_r[j]] += 1;
            self.avail_exact[self.exact_cls_r[j]] += 1;
            self.links -= gain;
            self.counts[stage as usize] -= 1;
            self.assign[i] = None;
            self.ref_used[j] = false;
        }
        self.dfs(p + 1);

        self.rem_stem[self.stem_cls_c[i]] += 1;
        self.rem_exact[self.exact_cls_c[i]] += 1;
    }
}

fn class_ids(cand: &[String], reference: &[String]) -> (Vec<usize>, Vec<usize>, usize) {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let mut c = Vec::with_capacity(cand.len());
    for s in cand {
        let n = ids.len();
        c.push(*ids.entry(s.as_str()).or_insert(n));
    }
    let mut r = Vec::with_capacity(reference.len());
    for s in reference {
        let n = ids.len();
        r.push(*ids.entry(s.as_str()).or_insert(n));
    }
    (c, r, ids.len())
}

impl MeteorScorer {
    pub fn new(params: MeteorParams, synonyms: SynonymTable) -> Self {
        Self { params, synonyms, stemmer: Stemmer::create(Algorithm::English), node_budget: 200_000 }
    }

    /// Caps the alignment search; the best alignment found so far is used
    /// once the cap is reached.
    pub fn with_node_budget(mut self, budget: usize) -> Self {
        self.node_budget = budget.max(1);
        self
    }

    pub fn params(&self) -> MeteorParams {
        self.params
    }

    pub fn synonyms(&self) -> &SynonymTable {
        &self.synonyms
    }

    pub fn stem(&self, token: &str) -> String {
        self.stemmer.stem(token).into_owned()
    }

    /// Staged unigram alignment: maximize exact matches, then stem matches,
    /// then synonym matches, then pick the alignment with the fewest chunks.
    pub fn align(&self, candidate: &[String], reference: &[String]) -> Alignment {
        let stems_c: Vec<String> = candidate.iter().map(|t| self.stem(t)).collect();
        let stems_r: Vec<String> = reference.iter().map(|t| self.stem(t)).collect();
        let (exact_c, exact_r, n_exact) = class_ids(candidate, reference);
        let (stem_c, stem_r, n_stem) = class_ids(&stems_c, &stems_r);

        let stage = |i: usize, j: usize| {
            if candidate[i] == reference[j] {
                Some(MatchStage::Exact)
            } else if stems_c[i] == stems_r[j] {
                Some(MatchStage::Stem)
            } else if self.synonyms.related(&stems_c[i], &stems_r[j]) {
                Some(MatchStage::Synonym)
            } else {
                None
            }
        };

        let mut positions = Vec::new();
        let mut edges = Vec::new();
        for i in 0..candidate.len() {
            let e: Vec<(usize, MatchStage)> =
                (0..reference.len()).filter_map(|j| stage(i, j).map(|s| (j, s))).collect();
            if !e.is_empty() {
                positions.push(i);
                edges.push(e);
            }
        }

        let mut edge_lookup = vec![vec![false; reference.len()]; candidate.len()];
        for (p, &i) in positions.iter().enumerate() {
            for &(j, _) in &edges[p] {
                edge_lookup[i][j] = true;
            }
        }
        let n = positions.len();
        let mut syn_suffix = vec![0; n + 1];
        let mut link_suffix = vec![0; n + 1];
        for p in (0..n).rev() {
            let i = positions[p];
            let has_syn = edges[p].iter().any(|e| e.1 == MatchStage::Synonym);
            let can_link = i > 0 && edges[p].iter().any(|&(j, _)| j > 0 && edge_lookup[i - 1][j - 1]);
            syn_suffix[p] = syn_suffix[p + 1] + usize::from(has_syn);
            link_suffix[p] = link_suffix[p + 1] + usize::from(can_link);
        }

        let mut rem_exact = vec![0; n_exact];
        let mut rem_stem = vec![0; n_stem];
        for &i in &positions {
            rem_exact[exact_c[i]] += 1;
            rem_stem[stem_c[i]] += 1;
        }
        let mut avail_exact = vec![0; n_exact];
        let mut avail_stem = vec![0; n_stem];
        for j in 0..reference.len() {
            avail_exact[exact_r[j]] += 1;
            avail_stem[stem_r[j]] += 1;
        }

        let mut search = Search {
            positions,
            edges,
            exact_cls_c: &exact_c,
            exact_cls_r: &exact_r,
            stem_cls_c: &stem_c,
            stem_cls_r: &stem_r,
            rem_exact,
            avail_exact,
            rem_stem,
            avail_stem,
            syn_suffix,
            link_suffix,
            ref_used: vec![false; reference.len()],
            assign: vec![None; candidate.len()],
            counts: [0; 3],
            links: 0,
            best: None,
            nodes: 0,
            budget: self.node_budget,
        };
        search.dfs(0);
        let truncated = search.nodes > search.budget;
        let assign = search.best.map(|(_, a)| a).unwrap_or_default();
        let pairs: Vec<(usize, usize, MatchStage)> =
            assign.iter().enumerate().filter_map(|(i, a)| a.map(|(j, s)| (i, j, s))).collect();
        let chunks = count_chunks(&pairs.iter().map(|&(i, j, _)| (i, j)).collect::<Vec<_>>());
        Alignment { pairs, chunks, truncated }
    }

    /// Combines match counts into the fragmentation-penalized F-mean.
    pub fn score_alignment(&self, alignment: &Alignment, cand_len: usize, ref_len: usize) -> f64 {
        let m = alignment.matches();
        if m == 0 || cand_len == 0 || ref_len == 0 {
            return 0.0;
        }
        let m = m as f64;
        let p = m / cand_len as f64;
        let r = m / ref_len as f64;
        let MeteorParams { alpha, beta, gamma } = self.params;
        let fmean = p * r / (alpha * p + (1.0 - alpha) * r);
        let penalty = gamma * (alignment.chunks as f64 / m).powf(beta);
        fmean * (1.0 - penalty)
    }

    pub fn score(&self, candidate: &TokenSequence, reference: &TokenSequence) -> Result<f64, MetricError> {
        if reference.is_empty() {
            return Err(MetricError::EmptyReference);
        }
        let alignment = self.align(candidate.tokens(), reference.tokens());
        Ok(self.score_alignment(&alignment, candidate.len(), reference.len()))
    }
}

/// METEOR with the classic parameters and an optional synonym table.
pub fn meteor(
    candidate: &TokenSequence,
    reference: &TokenSequence,
    synonym_table: Option<&SynonymTable>,
) -> Result<f64, MetricError> {
    let scorer = MeteorScorer::new(MeteorParams::default(), synonym_table.cloned().unwrap_or_default());
    scorer.score(candidate, reference)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> TokenSequence {
        TokenSequence::from_text(s)
    }

    #[test]
    fn identical_inputs_pay_one_chunk() {
        for m in 1..=12usize {
            let text: Vec<String> = (0..m).map(|i| format!("w{}", i % 3)).collect();
            let seq = ts(&text.join(" "));
            let s = meteor(&seq, &seq, None).unwrap();
            let expected = 1.0 - 0.5 / (m as f64).powi(3);
            assert!((s - expected).abs() < 1e-12, "m={m}: {s} vs {expected}");
        }
    }

    #[test]
    fn disjoint_inputs_score_zero() {
        assert_eq!(meteor(&ts("red car"), &ts("blue truck"), None).unwrap(), 0.0);
        assert_eq!(meteor(&ts(""), &ts("blue truck"), None).unwrap(), 0.0);
        assert_eq!(meteor(&ts("a"), &ts(""), None).unwrap_err(), MetricError::EmptyReference);
    }

    #[test]
    fn stem_stage_matches_inflections() {
        let scorer = MeteorScorer::default();
        let a = scorer.align(ts("cars stopping").tokens(), ts("car stops").tokens());
        assert_eq!(a.count(MatchStage::Stem), 2);
        assert_eq!(a.chunks, 1);
    }

    #[test]
    fn synonym_stage_uses_table() {
        let table = SynonymTable::parse("car, vehicle\nquickly, fast\n");
        let scorer = MeteorScorer::new(MeteorParams::default(), table);
        let a = scorer.align(ts("cars stop quickly").tokens(), ts("vehicles stop fast").tokens());
        assert_eq!(a.matches(), 3);
        assert_eq!(a.count(MatchStage::Exact), 1);
        assert_eq!(a.count(MatchStage::Synonym), 2);
        assert_eq!(a.chunks, 1);
        // P = R = 1, one chunk of three.
        let s = scorer.score(&ts("cars stop quickly"), &ts("vehicles stop fast")).unwrap();
        assert!((s - (1.0 - 0.5 / 27.0)).abs() < 1e-12);
    }

    #[test]
    fn exact_matches_take_priority_over_synonyms() {
        let table = SynonymTable::parse("car, vehicle\n");
        let scorer = MeteorScorer::new(MeteorParams::default(), table);
        let a = scorer.align(ts("car vehicle").tokens(), ts("vehicle car").tokens());
        assert_eq!(a.count(MatchStage::Exact), 2);
        assert_eq!(a.chunks, 2);
    }

    #[test]
    fn repeated_tokens_prefer_contiguous_alignment() {
        let scorer = MeteorScorer::default();
        let a = scorer.align(ts("the car the light").tokens(), ts("the car the light").tokens());
        assert_eq!(a.chunks, 1);
        let b = scorer.align(ts("the light").tokens(), ts("the car the light").tokens());
        assert_eq!(b.pairs.iter().map(|p| (p.0, p.1)).collect::<Vec<_>>(), vec![(0, 2), (1, 3)]);
    }

    #[test]
    fn budget_truncation_still_returns_an_alignment() {
        let long: Vec<String> = (0..40).map(|i| ["the", "car", "a"][i % 3].to_string()).collect();
        let scorer = MeteorScorer::default().with_node_budget(10);
        let a = scorer.align(&long, &long);
        assert!(a.matches() > 0);
    }

    #[test]
    fn builtin_synonyms_load() {
        let t = SynonymTable::builtin();
        assert!(t.len() > 10);
        let s = Stemmer::create(Algorithm::English);
        assert!(t.related(&s.stem("looks"), &s.stem("glances")));
    }
}
