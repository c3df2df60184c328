//! Content analysis: maps a post's text and hashtags onto a fixed set of topics
//! and derives the profile used for similarity and ranking.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geo::GeoPoint;
use crate::model::{NewsId, NewsItem, Timestamp, UserId};

const DEFAULT_LEXICON: &str = include_str!("../data/lexicon.tsv");

/// Hit weight of a hashtag that matches a keyword, relative to a body token.
pub const HASHTAG_HIT_WEIGHT: f64 = 2.0;

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("line {line}: expected `topic<TAB>keyword`")]
    Malformed { line: usize },
    #[error("line {line}: keyword `{keyword}` already assigned to topic `{topic}`")]
    DuplicateKeyword {
        line: usize,
        keyword: String,
        topic: String,
    },
    #[error("lexicon defines no topics")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered topic labels and the keywords that signal each of them.
#[derive(Debug, Clone)]
pub struct TopicLexicon {
    topics: Vec<String>,
    keywords: HashMap<String, usize>,
}

impl TopicLexicon {
    /// Builds a lexicon from `(topic, keywords)` groups. A keyword listed under
    /// several topics belongs to the first one.
    pub fn new<T, K, S>(groups: T) -> Self
    where
        T: IntoIterator<Item = (S, K)>,
        K: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut lex = TopicLexicon {
            topics: Vec::new(),
            keywords: HashMap::new(),
        };
        for (topic, kws) in groups {
            let idx = lex.topic_index_or_insert(topic.as_ref());
            for kw in kws {
                lex.keywords
                    .entry(kw.as_ref().trim().to_lowercase())
                    .or_insert(idx);
            }
        }
        lex
    }

    /// Parses the tab-separated lexicon format. Blank lines and lines starting
    /// with `#` are skipped; a keyword may appear only once in the file.
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut lex = TopicLexicon {
            topics: Vec::new(),
            keywords: HashMap::new(),
        };
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let trimmed = line.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (topic, keyword) = trimmed
                .split_once('\t')
                .ok_or(LexiconError::Malformed { line: line_no })?;
            let topic = topic.trim().to_lowercase();
            let keyword = keyword.trim().to_lowercase();
            if topic.is_empty() || keyword.is_empty() || keyword.contains('\t') {
                return Err(LexiconError::Malformed { line: line_no });
            }
            if let Some(&owner) = lex.keywords.get(&keyword) {
                return Err(LexiconError::DuplicateKeyword {
                    line: line_no,
                    keyword,
                    topic: lex.topics[owner].clone(),
                });
            }
            let idx = lex.topic_index_or_insert(&topic);
            lex.keywords.insert(keyword, idx);
        }
        if lex.topics.is_empty() {
            return Err(LexiconError::Empty);
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn topic_index_or_insert(&mut self, topic: &str) -> usize {
        let topic = topic.trim().to_lowercase();
        match self.topics.iter().position(|t| *t == topic) {
            Some(i) => i,
            None => {
                self.topics.push(topic);
                self.topics.len() - 1
            }
        }
    }

    pub fn topics(&self) -> &[String] {
        &self.topics
    }

    pub fn topic_of(&self, keyword: &str) -> Option<&str> {
        self.keywords.get(keyword).map(|&i| self.topics[i].as_str())
    }

    /// Keywords of one topic, sorted.
    pub fn keywords_for(&self, topic: &str) -> Vec<&str> {
        let mut kws: Vec<&str> = self
            .keywords
            .iter()
            .filter(|(_, &i)| self.topics[i] == topic)
            .map(|(k, _)| k.as_str())
            .collect();
        kws.sort_unstable();
        kws
    }
}

impl Default for TopicLexicon {
    /// The bundled eight-topic lexicon.
    fn default() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }
}

/// Sparse topic distribution: either empty (all-zero) or summing to one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TopicVector(BTreeMap<String, f64>);

impl TopicVector {
    /// Normalizes non-negative counts to unit L1 mass. Zero entries are dropped.
    pub fn from_counts<I, S>(counts: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let raw: BTreeMap<String, f64> = counts
            .into_iter()
            .filter(|(_, w)| *w > 0.0 && w.is_finite())
            .map(|(t, w)| (t.into(), w))
            .collect();
        let total: f64 = raw.values().sum();
        if total <= 0.0 {
            return Self::default();
        }
        Self(raw.into_iter().map(|(t, w)| (t, w / total)).collect())
    }

    pub fn unit(topic: &str) -> Self {
        Self(BTreeMap::from([(topic.to_string(), 1.0)]))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, topic: &str) -> f64 {
        self.0.get(topic).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn total(&self) -> f64 {
        self.0.values().sum()
    }

    /// Heaviest topic; ties go to the lexicographically smallest label.
    pub fn argmax(&self) -> Option<&str> {
        let mut best: Option<(&str, f64)> = None;
        for (t, w) in self.iter() {
            // BTreeMap iterates in label order, so strict > keeps the smallest tie.
            if best.is_none_or(|(_, bw)| w > bw) {
                best = Some((t, w));
            }
        }
        best.map(|(t, _)| t)
    }

    pub fn dot(&self, other: &TopicVector) -> f64 {
        self.iter().map(|(t, w)| w * other.get(t)).sum()
    }

    pub fn cosine(&self, other: &TopicVector) -> f64 {
        let na: f64 = self.0.values().map(|w| w * w).sum();
        let nb: f64 = other.0.values().map(|w| w * w).sum();
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        (self.dot(other) / (na * nb).sqrt()).clamp(0.0, 1.0)
    }
}

/// Derived view of a post consumed by similarity, learning and ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsProfile {
    pub news_id: NewsId,
    pub topic_vector: TopicVector,
    pub dominant_topic: String,
    pub category: String,
    pub channel: String,
    pub hashtags: BTreeSet<String>,
    pub location: GeoPoint,
    pub created_at: Timestamp,
    pub author_id: UserId,
}

impl NewsProfile {
    /// The topic vector, or a unit vector on the category when it is all-zero.
    pub fn effective_topics(&self) -> TopicVector {
        if self.topic_vector.is_zero() {
            TopicVector::unit(&self.category)
        } else {
            self.topic_vector.clone()
        }
    }
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

pub fn analyze<S: AsRef<str>>(
    description: &str,
    hashtags: impl IntoIterator<Item = S>,
    lexicon: &TopicLexicon,
) -> TopicVector {
    let mut counts: BTreeMap<&str, f64> = BTreeMap::new();
    for tok in tokens(description) {
        if let Some(topic) = lexicon.topic_of(&tok) {
            *counts.entry(topic).or_default() += 1.0;
        }
    }
    for tag in hashtags {
        let tag = tag.as_ref().trim_start_matches('#').to_lowercase();
        if let Some(topic) = lexicon.topic_of(&tag) {
            *counts.entry(topic).or_default() += HASHTAG_HIT_WEIGHT;
        }
    }
    TopicVector::from_counts(counts)
}

pub fn build_profile(item: &NewsItem, lexicon: &TopicLexicon) -> NewsProfile {
    let topic_vector = analyze(&item.description, &item.hashtags, lexicon);
    let dominant_topic = topic_vector
        .argmax()
        .map_or_else(|| item.category.clone(), str::to_string);
    NewsProfile {
        news_id: item.id.clone(),
        topic_vector,
        dominant_topic,
        category: item.category.clone(),
        channel: item.channel.clone(),
        hashtags: item.hashtags.clone(),
        location: item.location,
        created_at: item.created_at,
        author_id: item.author_id.clone(),
    }
}

/// Mixing weights of the item-item similarity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilarityWeights {
    pub topic: f64,
    pub category: f64,
    pub hashtags: f64,
}

impl Default for SimilarityWeights {
    fn default() -> Self {
        Self {
            topic: 0.6,
            category: 0.2,
            hashtags: 0.2,
        }
    }
}

/// Jaccard index; two empty sets score 0.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn similarity_with(a: &NewsProfile, b: &NewsProfile, w: &SimilarityWeights) -> f64 {
    let same_category = if a.category == b.category { 1.0 } else { 0.0 };
    let s = w.topic * a.topic_vector.cosine(&b.topic_vector)
        + w.category * same_category
        + w.hashtags * jaccard(&a.hashtags, &b.hashtags);
    s.clamp(0.0, 1.0)
}

pub fn similarity(a: &NewsProfile, b: &NewsProfile) -> f64 {
    similarity_with(a, b, &SimilarityWeights::default())
}
