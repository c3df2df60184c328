#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::LazyLock;

use hyperfeed::batch::SimilarityRow;
use hyperfeed::content::{build_profile, TopicVector};
use hyperfeed::{EventKind, GeoPoint, NewsItem, NewsProfile, Timestamp, TopicLexicon, UsageEvent};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TRONDHEIM: GeoPoint = GeoPoint {
    lat: 63.4305,
    lon: 10.3951,
};

pub fn at(text: &str) -> Timestamp {
    text.parse().expect("RFC 3339 literal")
}

pub fn t0() -> Timestamp {
    at("2024-05-01T12:00:00Z")
}

pub fn minutes(m: i64) -> chrono::Duration {
    chrono::Duration::minutes(m)
}

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// A post whose description is the topic's own keyword, so it analyzes to a
/// unit vector on `topic`.
pub fn news(id: &str, topic: &str, location: GeoPoint, created_at: Timestamp) -> NewsItem {
    NewsItem {
        id: id.into(),
        media_ref: None,
        description: topic.into(),
        category: topic.into(),
        channel: "test".into(),
        hashtags: BTreeSet::new(),
        location,
        created_at,
        author_id: format!("author-{id}"),
    }
}

static LEXICON: LazyLock<TopicLexicon> = LazyLock::new(TopicLexicon::default);

pub fn profile_of(item: &NewsItem) -> NewsProfile {
    build_profile(item, &LEXICON)
}

pub fn event(user: &str, news_id: &str, kind: EventKind, when: Timestamp) -> UsageEvent {
    UsageEvent {
        user_id: user.into(),
        news_id: news_id.into(),
        kind,
        at: when,
        location: None,
    }
}

/// Uniform point in a square of side `side_km` centred on `center`.
pub fn point_in_box(rng: &mut ChaCha8Rng, center: GeoPoint, side_km: f64) -> GeoPoint {
    let half = side_km / 2.0;
    let dy = rng.random_range(-half..=half);
    let dx = rng.random_range(-half..=half);
    let lat = center.lat + dy / hyperfeed::geo::KM_PER_DEGREE;
    let lon = center.lon + dx / (hyperfeed::geo::KM_PER_DEGREE * center.lat.to_radians().cos());
    GeoPoint { lat, lon }
}

pub const TOPICS: [&str; 4] = ["traffic", "food", "events", "crime"];

/// `n` items scattered over a `side_km` box with ages up to 36 h before `now`.
pub fn random_corpus(seed: u64, n: usize, center: GeoPoint, side_km: f64, now: Timestamp) -> Vec<NewsItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let topic = TOPICS[rng.random_range(0..TOPICS.len())];
            let age_s = rng.random_range(0..36 * 3600);
            let loc = point_in_box(&mut rng, center, side_km);
            news(&format!("r{i:06}"), topic, loc, now - chrono::Duration::seconds(age_s))
        })
        .collect()
}

/// Profiles with random topic mixes, tags and two categories, ids permuted.
pub fn random_profiles(seed: u64, n: usize) -> Vec<NewsProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut counts: Vec<(&str, f64)> = Vec::new();
            for t in TOPICS {
                if rng.random_bool(0.5) {
                    counts.push((t, rng.random_range(1..4) as f64));
                }
            }
            let tags: BTreeSet<String> = ["a", "b", "c", "d"]
                .iter()
                .filter(|_| rng.random_bool(0.4))
                .map(|t| t.to_string())
                .collect();
            let category = TOPICS[rng.random_range(0..2)];
            NewsProfile {
                news_id: format!("item{:02}", (i * 37) % n),
                topic_vector: TopicVector::from_counts(counts),
                dominant_topic: category.into(),
                category: category.into(),
                channel: String::new(),
                hashtags: tags,
                location: TRONDHEIM,
                created_at: t0(),
                author_id: "a".into(),
            }
        })
        .collect()
}

/// All-pairs reference written from the similarity definition.
pub fn brute_force_similarity(profiles: &[NewsProfile], top_k: usize) -> Vec<SimilarityRow> {
    let norm = |v: &TopicVector| v.iter().map(|(_, w)| w * w).sum::<f64>();
    let cos = |a: &TopicVector, b: &TopicVector| {
        let (na, nb) = (norm(a), norm(b));
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        let dot: f64 = a.iter().map(|(t, w)| w * b.get(t)).sum();
        (dot / (na * nb).sqrt()).clamp(0.0, 1.0)
    };
    let jac = |a: &BTreeSet<String>, b: &BTreeSet<String>| {
        let union = a.union(b).count();
        if union == 0 {
            0.0
        } else {
            a.intersection(b).count() as f64 / union as f64
        }
    };
    let mut by_id: BTreeMap<&str, &NewsProfile> = BTreeMap::new();
    for p in profiles {
        by_id.insert(&p.news_id, p);
    }
    let mut out = Vec::new();
    for (id, a) in &by_id {
        let mut rows: Vec<SimilarityRow> = by_id
            .iter()
            .filter(|(other, _)| *other != id)
            .map(|(other, b)| {
                let same = if a.category == b.category { 1.0 } else { 0.0 };
                let s = 0.6 * cos(&a.topic_vector, &b.topic_vector) + 0.2 * same + 0.2 * jac(&a.hashtags, &b.hashtags);
                SimilarityRow {
                    news_id: id.to_string(),
                    similar_news: other.to_string(),
                    similarity_score: s.clamp(0.0, 1.0),
                }
            })
            .collect();
        rows.sort_by(|x, y| {
            y.similarity_score
                .partial_cmp(&x.similarity_score)
                .unwrap()
                .then(x.similar_news.cmp(&y.similar_news))
        });
        rows.truncate(top_k);
        out.extend(rows);
    }
    out
}
