//! Score a small neighbourhood feed for two readers, then diversify and
//! explore.
//!
//!     cargo run --example ranking

use chrono::{Duration, TimeZone, Utc};
use hyperfeed::engine::{Engine, EngineConfig, RecommendRequest};
use hyperfeed::{EventKind, GeoPoint, NewsItem, TopicLexicon, UsageEvent};

fn main() {
    let now = Utc.with_ymd_and_hms(2024, 5, 1, 18, 0, 0).unwrap();
    let here = GeoPoint::new(63.4305, 10.3951).unwrap();
    let engine = Engine::new(EngineConfig::default(), TopicLexicon::default()).unwrap();

    let feed = [
        ("jam-e6", "traffic", "Jam on the highway", 1, "ola"),
        ("tram-bridge", "traffic", "Tram stuck on the bridge", 3, "kari"),
        ("roadwork", "traffic", "Roadwork and a detour downtown", 8, "kari"),
        ("new-cafe", "food", "New cafe with brunch", 2, "nils"),
        ("night-market", "food", "Night market with sushi and pizza", 5, "ola"),
        ("gig", "events", "Free concert in the park", 4, "nils"),
        ("bike-theft", "crime", "Police warn of bike theft", 12, "kari"),
    ];
    for (id, category, text, age_h, author) in feed {
        engine
            .add_news(NewsItem {
                id: id.into(),
                media_ref: None,
                description: text.into(),
                category: category.into(),
                channel: "city".into(),
                hashtags: Default::default(),
                location: here.destination(age_h as f64 * 30.0, 0.3 * age_h as f64),
                created_at: now - Duration::hours(age_h),
                author_id: author.into(),
            })
            .unwrap();
    }

    // A commuter who reads traffic, follows kari, and a crowd reading the market.
    let at = |m: i64| now - Duration::minutes(m);
    let history = [
        ("commuter", "roadwork", EventKind::Read, at(300)),
        ("commuter", "tram-bridge", EventKind::Like, at(90)),
        ("commuter", "new-cafe", EventKind::Dismiss, at(60)),
        ("crowd1", "night-market", EventKind::Read, at(50)),
        ("crowd2", "night-market", EventKind::Read, at(40)),
        ("crowd3", "gig", EventKind::Read, at(30)),
    ];
    for (user, news, kind, when) in history {
        engine
            .post_event(UsageEvent {
                user_id: user.into(),
                news_id: news.into(),
                kind,
                at: when,
                location: None,
            })
            .unwrap();
    }
    engine.follow("commuter", "kari").unwrap();

    for user in ["commuter", "newcomer"] {
        let recs = engine
            .recommend(&RecommendRequest {
                user_id: user.into(),
                location: here,
                now,
                limit: 5,
                seed: 42,
            })
            .unwrap();
        println!("{user}:");
        println!("  {:<13} {:<8} {:>6}  pref  social recency trend  boost explore", "news", "topic", "score");
        for r in recs {
            let c = r.components;
            println!(
                "  {:<13} {:<8} {:>6.3}  {:.2}  {:.2}   {:.2}    {:.2}   {:<5} {}",
                r.news_id, r.topic, r.score, c.pref, c.social, c.recency, c.trend, c.q_boosted, c.explored
            );
        }
    }
    // The newcomer has no history: only recency and trend separate the items,
    // and topic diversity keeps the list from being all traffic.
}
