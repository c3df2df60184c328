//! Follow one reader's profile through a day of interactions: Q-values over
//! topic transitions, short and long-term interest, and the shift alarm.
//!
//!     cargo run --example profile_learning

use chrono::{Duration, TimeZone, Utc};
use hyperfeed::change::{detect_shift, DecayConfig};
use hyperfeed::content::build_profile;
use hyperfeed::engine::{apply_event, EngineConfig};
use hyperfeed::learner::greedy_action;
use hyperfeed::{EventKind, GeoPoint, NewsItem, TopicLexicon, UsageEvent, UserProfile};

fn main() {
    let lexicon = TopicLexicon::default();
    let cfg = EngineConfig::default();
    let start = Utc.with_ymd_and_hms(2024, 5, 1, 7, 0, 0).unwrap();
    let item = |id: &str, topic: &str| {
        build_profile(
            &NewsItem {
                id: id.into(),
                media_ref: None,
                description: topic.into(),
                category: topic.into(),
                channel: String::new(),
                hashtags: Default::default(),
                location: GeoPoint { lat: 63.43, lon: 10.39 },
                created_at: start,
                author_id: "a".into(),
            },
            &lexicon,
        )
    };

    // A commuter: traffic in the morning for weeks, then suddenly food.
    let mut script = Vec::new();
    for day in 0..20 {
        script.push((day * 24, "traffic", EventKind::Read));
        script.push((day * 24 + 1, "traffic", EventKind::Like));
        script.push((day * 24 + 2, "crime", EventKind::Dismiss));
    }
    for h in 0..6 {
        script.push((20 * 24 + h, "food", EventKind::Read));
    }

    let mut p = UserProfile::new("commuter");
    for (i, (hour, topic, kind)) in script.into_iter().enumerate() {
        let news = item(&format!("n{i}"), topic);
        let ev = UsageEvent {
            user_id: p.user_id.clone(),
            news_id: news.news_id.clone(),
            kind,
            at: start + Duration::hours(hour),
            location: None,
        };
        apply_event(&mut p, &ev, &news, &cfg);
        if i < 3 || i % 20 == 0 || hour >= 20 * 24 {
            println!(
                "{:>3}h {:<10} {:<8} state={:<8} Q(state->traffic)={:.3} Q(state->food)={:.3}",
                hour,
                format!("{kind:?}"),
                topic,
                p.last_state,
                p.qtable.get(&p.last_state, "traffic"),
                p.qtable.get(&p.last_state, "food"),
            );
        }
    }

    println!("\ngreedy next topic after traffic: {:?}", greedy_action(&p.qtable, "traffic"));
    println!("greedy next topic after food:    {:?}", greedy_action(&p.qtable, "food"));
    match detect_shift(&p, &DecayConfig::default()) {
        Some(shift) => println!("interest shift: L1 {:.2}, rising {:?}", shift.l1_distance, shift.rising_topics),
        None => println!("no interest shift"),
    }
}
