use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::AttentionCaption;
use crate::digest::sha256_hex;

static DEFAULT_GAZETTEER: &str = include_str!("../../data/gazetteer.txt");

#[derive(Debug, Error)]
pub enum GazetteerError {
    #[error("failed to read gazetteer {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("gazetteer line {0} has an empty canonical label")]
    EmptyCanonical(usize),
}

/// Folds a plural trailing "s" with a small suffix rule set.
pub fn singularize(token: &str) -> String {
    if token.len() <= 3 || token.ends_with("ss") || token.ends_with("us") || token.ends_with("is") {
        return token.to_string();
    }
    if let Some(stem) = token.strip_suffix("ies") {
        return format!("{stem}y");
    }
    for suffix in ["sses", "xes", "ches", "shes", "ses"] {
        if token.ends_with(suffix) {
            return token[..token.len() - 2].to_string();
        }
    }
    token.strip_suffix('s').unwrap_or(token).to_string()
}

/// Lowercased alphanumeric tokens with plurals folded.
pub fn canonical_tokens(text: &str) -> Vec<String> {
    crate::metrics::tokenize(text).iter().map(|t| singularize(t)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Phrase {
    tokens: Vec<String>,
    entity: usize,
}

/// Driving-domain vocabulary: canonical entities with synonym phrases.
#[derive(Debug, Clone)]
pub struct Gazetteer {
    canonical: Vec<String>,
    phrases: Vec<Phrase>,
    hash: String,
}

impl Gazetteer {
    /// Parses `canonical|syn1|syn2` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, GazetteerError> {
        let mut g = Gazetteer { canonical: Vec::new(), phrases: Vec::new(), hash: sha256_hex(text.as_bytes()) };
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('|').map(str::trim);
            let canonical = fields.next().unwrap_or("").to_lowercase();
            if canonical.is_empty() {
                return Err(GazetteerError::EmptyCanonical(n + 1));
            }
            let synonyms: Vec<String> = fields.filter(|f| !f.is_empty()).map(str::to_string).collect();
            g.add_entry(&canonical, &synonyms);
        }
        Ok(g)
    }

    pub fn load(path: &Path) -> Result<Self, GazetteerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| GazetteerError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    /// The vocabulary shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_GAZETTEER).expect("bundled gazetteer parses")
    }

    /// Adds (or extends) an entity with the given synonym phrases.
    pub fn add_entry(&mut self, canonical: &str, synonyms: &[String]) {
        let canonical = canonical.to_lowercase();
        let entity = match self.canonical.iter().position(|c| *c == canonical) {
            Some(i) => i,
            None => {
                self.canonical.push(canonical.clone());
                self.canonical.len() - 1
            }
        };
        for phrase in std::iter::once(canonical.as_str()).chain(synonyms.iter().map(String::as_str)) {
            let tokens = canonical_tokens(phrase);
            if tokens.is_empty() || self.phrases.iter().any(|p| p.tokens == tokens && p.entity == entity) {
                continue;
            }
            self.phrases.push(Phrase { tokens, entity });
        }
    }

    /// Content digest of the source text this gazetteer was parsed from.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn entities(&self) -> &[String] {
        &self.canonical
    }

    /// Every distinct canonical token used by some phrase.
    pub fn vocabulary_tokens(&self) -> BTreeSet<String> {
        self.phrases.iter().flat_map(|p| p.tokens.iter().cloned()).collect()
    }

    /// Leftmost-longest phrase matches as `(start, len, entity index)`.
    fn matches(&self, tokens: &[String]) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let best = self
                .phrases
                .iter()
                .filter(|p| tokens[i..].starts_with(&p.tokens))
                // Longest phrase wins; among equals the earliest-declared entity.
                .max_by(|a, b| a.tokens.len().cmp(&b.tokens.len()).then(b.entity.cmp(&a.entity)));
            match best {
                Some(p) => {
                    out.push((i, p.tokens.len(), p.entity));
                    i += p.tokens.len();
                }
                None => i += 1,
            }
        }
        out
    }

    pub fn extract_text(&self, text: &str, options: &ExtractOptions) -> EntitySet {
        let tokens = canonical_tokens(text);
        let found = self.matches(&tokens);
        let mut set: BTreeSet<String> = found.iter().map(|&(_, _, e)| self.canonical[e].clone()).collect();
        if options.open_nouns {
            let mut covered = vec![false; tokens.len()];
            for &(start, len, _) in &found {
                covered[start..start + len].iter_mut().for_each(|c| *c = true);
            }
            for i in 1..tokens.len() {
                let tok = &tokens[i];
                if !covered[i]
                    && DETERMINERS.contains(&tokens[i - 1].as_str())
                    && tok.len() >= 3
                    && tok.chars().all(|c| c.is_ascii_alphabetic())
                    && !NON_NOUNS.contains(&tok.as_str())
                {
                    set.insert(tok.clone());
                }
            }
        }
        EntitySet(set)
    }

    pub fn extract(&self, caption: &AttentionCaption, options: &ExtractOptions) -> EntitySet {
        self.extract_text(&caption.sentences().join(" "), options)
    }
}

const DETERMINERS: &[&str] = &["a", "an", "the", "this", "that", "another", "each", "every"];
const NON_NOUNS: &[&str] = &[
    "red", "green", "blue", "white", "black", "yellow", "grey", "gray", "silver", "orange", "dark",
    "bright", "large", "small", "big", "left", "right", "next", "same", "other", "front", "rear",
    "current", "upcoming", "nearby", "distant", "busy", "empty", "wet", "dry", "driver", "scene",
    "road", "street", "view", "area", "way",
];

/// Extraction switches. Gazetteer matching always runs; open-noun extraction
/// (residual tokens directly after a determiner) is opt-in.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractOptions {
    pub open_nouns: bool,
}

/// Canonical, lowercase, de-duplicated entity labels.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySet(pub BTreeSet<String>);

impl EntitySet {
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        EntitySet(labels.into_iter().map(|s| s.into().to_lowercase()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.0.contains(label)
    }

    pub fn iter(&self) -> impl Iterator<Item = &String> {
        self.0.iter()
    }

    pub fn intersection_len(&self, other: &EntitySet) -> usize {
        self.0.intersection(&other.0).count()
    }
}
