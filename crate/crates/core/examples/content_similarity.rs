//! Turn posts into topic vectors and compare them.
//!
//!     cargo run --example content_similarity

use chrono::Utc;
use hyperfeed::content::{build_profile, similarity};
use hyperfeed::model::normalize_hashtags;
use hyperfeed::{GeoPoint, NewsItem, TopicLexicon};

fn post(id: &str, category: &str, text: &str, tags: &[&str]) -> NewsItem {
    NewsItem {
        id: id.into(),
        media_ref: None,
        description: text.into(),
        category: category.into(),
        channel: "city".into(),
        hashtags: normalize_hashtags(tags),
        location: GeoPoint { lat: 63.43, lon: 10.39 },
        created_at: Utc::now(),
        author_id: "someone".into(),
    }
}

fn main() {
    let lexicon = TopicLexicon::default();
    let posts = [
        post("tram", "traffic", "Tram stuck on the bridge, expect a detour", &["#commute"]),
        post("jam", "traffic", "Long jam on the highway after an accident", &["#commute", "#e6"]),
        post("brunch", "food", "New brunch cafe by the market, great coffee", &["#food"]),
        post("festival", "events", "Street food festival this weekend with a pizza truck", &["#food"]),
    ];
    let profiles: Vec<_> = posts.iter().map(|p| build_profile(p, &lexicon)).collect();

    for p in &profiles {
        let mix: Vec<String> = p.topic_vector.iter().map(|(t, w)| format!("{t}={w:.2}")).collect();
        println!("{:<9} dominant {:<8} [{}]", p.news_id, p.dominant_topic, mix.join(", "));
    }
    // Hashtag hits count double: "#food" on the festival post outweighs one "festival".

    println!();
    for (i, a) in profiles.iter().enumerate() {
        for b in &profiles[i + 1..] {
            println!("{:<9} ~ {:<9} {:.3}", a.news_id, b.news_id, similarity(a, b));
        }
    }
}
