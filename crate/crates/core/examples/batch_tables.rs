//! Build the two offline tables from a data directory, then serve from them.
//!
//!     cargo run --example batch_tables

use chrono::{Duration, TimeZone, Utc};
use hyperfeed::batch::{load_snapshot, run_batch};
use hyperfeed::engine::{Engine, EngineConfig, RecommendRequest};
use hyperfeed::store::StoreLayout;
use hyperfeed::{EventKind, GeoPoint, NewsItem, TopicLexicon, UsageEvent};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let now = Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap();
    let here = GeoPoint::new(63.4305, 10.3951)?;
    let cfg = EngineConfig::default();

    // Writes go to news.jsonl / events.jsonl / follows.jsonl in `dir`.
    {
        let engine = Engine::open(cfg.clone(), TopicLexicon::default(), dir.path())?;
        let texts = ["bus detour", "tram delay", "pizza deal", "sushi menu", "jazz concert", "burglary arrest"];
        for (i, text) in texts.iter().enumerate() {
            engine.add_news(NewsItem {
                id: format!("n{i}"),
                media_ref: None,
                description: text.to_string(),
                category: "local".into(),
                channel: "city".into(),
                hashtags: Default::default(),
                location: here.destination(i as f64 * 60.0, 1.0),
                created_at: now - Duration::hours(i as i64),
                author_id: format!("author{}", i % 2),
            })?;
        }
        for (user, news) in [("ane", "n0"), ("ane", "n1"), ("bo", "n2")] {
            engine.post_event(UsageEvent {
                user_id: user.into(),
                news_id: news.into(),
                kind: EventKind::Read,
                at: now,
                location: None,
            })?;
        }
    }

    let meta = run_batch(dir.path(), dir.path(), &cfg, &TopicLexicon::default(), None, 2)?;
    println!("batch at {} over {} events", meta.batch_at, meta.event_count);
    for name in ["news_similarity.csv", "user_news_base.csv"] {
        let body = std::fs::read_to_string(dir.path().join(name))?;
        println!("\n{name} ({} rows)", body.lines().count() - 1);
        for line in body.lines().take(6) {
            println!("  {line}");
        }
    }

    // A restarted engine picks the tables up and merges newer events online.
    let engine = Engine::open(cfg, TopicLexicon::default(), dir.path())?;
    let snapshot = load_snapshot(&StoreLayout::new(dir.path()))?.expect("tables just written");
    println!("\nmost similar to n2: {:?}", snapshot.similar_to("n2").first().map(|r| &r.similar_news));
    engine.post_event(UsageEvent {
        user_id: "ane".into(),
        news_id: "n4".into(),
        kind: EventKind::Read,
        at: now + Duration::minutes(5),
        location: None,
    })?;
    let recs = engine.recommend(&RecommendRequest {
        user_id: "ane".into(),
        location: here,
        now: now + Duration::minutes(10),
        limit: 10,
        seed: 1,
    })?;
    let ids: Vec<_> = recs.iter().map(|r| r.news_id.as_str()).collect();
    println!("ane now sees {ids:?} (n0, n1 read before the batch, n4 after)");
    Ok(())
}
