mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use hyperfeed::batch::{self, merge_online, BaseScoreRow, OnlineInputs, SimilarityRow};
use hyperfeed::content::{SimilarityWeights, TopicVector};
use hyperfeed::engine::EngineConfig;
use hyperfeed::rank::{self, recency_weight, EngagementLog, RankContext, RankWeights};
use hyperfeed::{EventKind, NewsProfile, SocialGraph, TopicLexicon, UserProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn run_fixture(workers: usize) -> (String, String) {
    let out = tempfile::tempdir().unwrap();
    batch::run_batch(
        &fixtures().join("store"),
        out.path(),
        &EngineConfig::default(),
        &TopicLexicon::default(),
        None,
        workers,
    )
    .unwrap();
    let read = |name: &str| std::fs::read_to_string(out.path().join(name)).unwrap();
    (read("news_similarity.csv"), read("user_news_base.csv"))
}

#[test]
fn fixture_store_matches_oracle_goldens() {
    // Goldens come from tests/fixtures/batch_oracle.py run on the same store.
    let golden = fixtures().join("golden");
    let want_sim = std::fs::read_to_string(golden.join("news_similarity.csv")).unwrap();
    let want_base = std::fs::read_to_string(golden.join("user_news_base.csv")).unwrap();
    for workers in [1, 4] {
        let (sim, base) = run_fixture(workers);
        assert_eq!(sim, want_sim, "similarity table, {workers} workers");
        assert_eq!(base, want_base, "base table, {workers} workers");
    }
}

#[test]
fn batch_meta_records_reference_time_and_counts() {
    let out = tempfile::tempdir().unwrap();
    let meta = batch::run_batch(
        &fixtures().join("store"),
        out.path(),
        &EngineConfig::default(),
        &TopicLexicon::default(),
        None,
        2,
    )
    .unwrap();
    assert_eq!(meta.batch_at, at("2024-05-01T11:55:00Z"));
    assert_eq!(meta.event_count, 18);
    assert_eq!(meta.similarity_rows, 11 * 10);
    let snap = batch::load_snapshot(&hyperfeed::store::StoreLayout::new(out.path()))
        .unwrap()
        .unwrap();
    assert_eq!(snap.event_count, 18);
    assert!(snap.rows_for("alice").is_some());
    assert!(snap.rows_for("nobody").is_none());
    assert_eq!(snap.similar_to("n01").len(), 10);
}

#[test]
fn fifty_items_match_all_pairs_reference() {
    let profiles = random_profiles(50, 50);
    let want = brute_force_similarity(&profiles, 5);
    for workers in [1, 4] {
        let got = batch::build_news_similarity(&profiles, 5, &SimilarityWeights::default(), workers);
        assert_eq!(got.len(), 50 * 5);
        for (g, w) in got.iter().zip(&want) {
            assert_eq!((&g.news_id, &g.similar_news), (&w.news_id, &w.similar_news));
            assert!((g.similarity_score - w.similarity_score).abs() <= 1e-12, "{g:?} vs {w:?}");
        }
    }
}

#[test]
fn similarity_rows_respect_table_invariants() {
    let profiles = random_profiles(7, 30);
    let rows = batch::build_news_similarity(&profiles, 20, &SimilarityWeights::default(), 3);
    let mut per_item: BTreeMap<&str, Vec<&SimilarityRow>> = BTreeMap::new();
    for r in &rows {
        assert_ne!(r.news_id, r.similar_news);
        assert!((0.0..=1.0).contains(&r.similarity_score));
        per_item.entry(&r.news_id).or_default().push(r);
    }
    for list in per_item.values() {
        assert!(list.len() <= 20);
        assert!(list.windows(2).all(|w| w[0].similarity_score >= w[1].similarity_score));
    }
}

#[test]
fn single_item_and_identical_pair() {
    let one = random_profiles(1, 1);
    assert!(batch::build_news_similarity(&one, 20, &SimilarityWeights::default(), 1).is_empty());

    let mut a = one[0].clone();
    a.topic_vector = TopicVector::unit("food");
    a.hashtags = ["x".to_string()].into();
    let mut b = a.clone();
    a.news_id = "a".into();
    b.news_id = "b".into();
    let rows = batch::build_news_similarity(&[a, b], 20, &SimilarityWeights::default(), 1);
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| (r.similarity_score - 1.0).abs() < 1e-12));
    assert_eq!((rows[0].news_id.as_str(), rows[0].similar_news.as_str()), ("a", "b"));
    assert_eq!((rows[1].news_id.as_str(), rows[1].similar_news.as_str()), ("b", "a"));
}

fn reader_of(topic: &str, read: &[&str]) -> UserProfile {
    let mut p = UserProfile::new("u");
    p.short_term.insert(topic.into(), 1.0);
    p.long_term.insert(topic.into(), 1.0);
    p.read_set = read.iter().map(|s| s.to_string()).collect();
    p
}

#[test]
fn base_rows_follow_the_score_formula() {
    let cfg = EngineConfig::default();
    assert!(batch::build_user_news_base(&[], &[], &SocialGraph::new(), &EngagementLog::new(), t0(), &cfg).is_empty());

    // One reader who only ever read traffic, one traffic item six hours old,
    // no follows and no reads in the trend window.
    let item = profile_of(&news("n1", "traffic", TRONDHEIM, t0() - minutes(360)));
    let user = reader_of("traffic", &[]);
    let rows = batch::build_user_news_base(&[user], &[item], &SocialGraph::new(), &EngagementLog::new(), t0(), &cfg);
    assert_eq!(rows.len(), 1);
    let want = 0.4 * 1.0 + 0.2 * 0.0 + 0.3 * 0.5 + 0.1 * 0.0;
    assert!((rows[0].recommendation_score - want).abs() < 1e-12);

    let read = reader_of("traffic", &["n1"]);
    let item = profile_of(&news("n1", "traffic", TRONDHEIM, t0()));
    assert!(batch::build_user_news_base(&[read], &[item], &SocialGraph::new(), &EngagementLog::new(), t0(), &cfg).is_empty());
}

#[test]
fn expired_items_get_no_base_rows() {
    let cfg = EngineConfig::default();
    let fresh = profile_of(&news("fresh", "food", TRONDHEIM, t0() - minutes(24 * 60)));
    let stale = profile_of(&news("stale", "food", TRONDHEIM, t0() - minutes(24 * 60 + 1)));
    let rows = batch::build_user_news_base(
        &[UserProfile::new("u")],
        &[fresh, stale],
        &SocialGraph::new(),
        &EngagementLog::new(),
        t0(),
        &cfg,
    );
    let ids: Vec<_> = rows.iter().map(|r| r.news_id.as_str()).collect();
    assert_eq!(ids, ["fresh"]);
}

struct MergeSetup {
    items: Vec<NewsProfile>,
    user: UserProfile,
    base: Vec<BaseScoreRow>,
}

fn merge_setup() -> MergeSetup {
    let batch_at = t0();
    let items: Vec<NewsProfile> = [("m1", "traffic", 30), ("m2", "food", 90), ("m3", "events", 200)]
        .iter()
        .map(|(id, topic, age)| profile_of(&news(id, topic, TRONDHEIM, batch_at - minutes(*age))))
        .collect();
    let user = reader_of("traffic", &[]);
    let base = batch::build_user_news_base(
        std::slice::from_ref(&user),
        &items,
        &SocialGraph::new(),
        &EngagementLog::new(),
        batch_at,
        &EngineConfig::default(),
    );
    MergeSetup { items, user, base }
}

#[test]
fn merge_without_news_only_moves_recency() {
    let s = merge_setup();
    let w = RankWeights::default();
    let later = t0() + minutes(45);
    let pool: Vec<&NewsProfile> = s.items.iter().collect();
    let (graph, log) = (SocialGraph::new(), EngagementLog::new());
    let ctx = RankContext::new(later, &s.user, &graph, &log, &pool, &w, &Default::default());
    let merged = merge_online(
        &s.user,
        OnlineInputs {
            base: &s.base,
            events_since: &[],
            fresh: &[],
        },
        |id| s.items.iter().find(|p| p.news_id == id),
        &ctx,
        &w,
    );
    assert_eq!(merged.len(), s.base.len());
    for (m, b) in merged.iter().zip(&s.base) {
        let before = b.components.unwrap();
        let item = s.items.iter().find(|p| p.news_id == m.news_id).unwrap();
        let age_h = (later - item.created_at).num_minutes() as f64 / 60.0;
        assert!((m.components.recency - recency_weight(age_h, w.lambda_per_hour)).abs() < 1e-12);
        assert_eq!(m.components.pref, before.pref);
        assert_eq!(m.components.social, before.social);
        assert_eq!(m.components.trend, before.trend);
        assert_eq!(m.components.q_boosted, before.q_boosted);
        assert!(m.components.recency < before.recency);
    }
}

#[test]
fn merge_drops_items_read_since_batch_and_adds_fresh_ones() {
    let s = merge_setup();
    let w = RankWeights::default();
    let now = t0() + minutes(10);
    let fresh_item = profile_of(&news("f1", "crime", TRONDHEIM, now - minutes(1)));
    let since = [event("u", "m2", EventKind::Read, t0() + minutes(5))];
    let mut user = s.user.clone();
    user.read_set.insert("m2".into());

    let mut pool: Vec<&NewsProfile> = s.items.iter().collect();
    pool.push(&fresh_item);
    let graph = SocialGraph::new();
    let log = EngagementLog::from_events(&since);
    let ctx = RankContext::new(now, &user, &graph, &log, &pool, &w, &Default::default());
    let merged = merge_online(
        &s.user, // the stale profile: exclusion must come from the event itself
        OnlineInputs {
            base: &s.base,
            events_since: &since,
            fresh: &[&fresh_item],
        },
        |id| pool.iter().copied().find(|p| p.news_id == id),
        &ctx,
        &w,
    );
    let ids: BTreeSet<&str> = merged.iter().map(|r| r.news_id.as_str()).collect();
    assert!(!ids.contains("m2"));
    assert!(ids.contains("f1"));
    let fresh = merged.iter().find(|r| r.news_id == "f1").unwrap();
    assert!((fresh.components.recency - (-w.lambda_per_hour / 60.0).exp()).abs() < 1e-12);
    assert!(fresh.components.recency > 0.998);
}

#[test]
fn merge_never_returns_read_items() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let s = merge_setup();
    let w = RankWeights::default();
    for _ in 0..50 {
        let mut user = s.user.clone();
        let mut since = Vec::new();
        for item in &s.items {
            match rng.random_range(0..3) {
                0 => {
                    user.read_set.insert(item.news_id.clone());
                }
                1 => since.push(event("u", &item.news_id, EventKind::Read, t0() + minutes(1))),
                _ => {}
            }
        }
        let pool: Vec<&NewsProfile> = s.items.iter().collect();
        let (graph, log) = (SocialGraph::new(), EngagementLog::from_events(&since));
        let ctx = RankContext::new(t0() + minutes(2), &user, &graph, &log, &pool, &w, &Default::default());
        let merged = merge_online(
            &user,
            OnlineInputs {
                base: &s.base,
                events_since: &since,
                fresh: &pool,
            },
            |id| s.items.iter().find(|p| p.news_id == id),
            &ctx,
            &w,
        );
        for r in &merged {
            assert!(!user.has_read(&r.news_id));
            assert!(!since.iter().any(|e| e.news_id == r.news_id));
        }
    }
}

#[test]
fn rows_read_back_from_csv_are_rescored_in_full() {
    let s = merge_setup();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("base.csv");
    batch::write_base_csv(&path, &s.base).unwrap();
    let loaded = batch::read_base_csv(&path).unwrap();
    assert!(loaded.iter().all(|r| r.components.is_none()));
    assert_eq!(loaded.len(), s.base.len());

    let w = RankWeights::default();
    let pool: Vec<&NewsProfile> = s.items.iter().collect();
    let (graph, log) = (SocialGraph::new(), EngagementLog::new());
    let ctx = RankContext::new(t0(), &s.user, &graph, &log, &pool, &w, &Default::default());
    let merged = merge_online(
        &s.user,
        OnlineInputs {
            base: &loaded,
            events_since: &[],
            fresh: &[],
        },
        |id| s.items.iter().find(|p| p.news_id == id),
        &ctx,
        &w,
    );
    for (m, b) in merged.iter().zip(&s.base) {
        let direct = rank::score(s.items.iter().find(|p| p.news_id == m.news_id).unwrap(), &s.user, &ctx, &w).unwrap();
        assert_eq!(m, &direct);
        assert!((m.score - b.recommendation_score).abs() < 1e-12);
    }
}
