//! Which posts can a reader standing in Trondheim see right now?
//!
//!     cargo run --example geo_filter

use chrono::{Duration, TimeZone, Utc};
use hyperfeed::filter::{passes, FilterConfig, GeoGridIndex};
use hyperfeed::{haversine_km, GeoPoint};

fn main() {
    let now = Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap();
    let here = GeoPoint::new(63.4305, 10.3951).unwrap();
    let cfg = FilterConfig::default(); // 5 km, 24 h, both edges included

    let posts = [
        ("bakery-opens", here.destination(45.0, 1.2), now - Duration::hours(2)),
        ("edge-of-town", here.destination(180.0, 5.0), now - Duration::hours(24)),
        ("just-too-far", here.destination(90.0, 5.01), now),
        ("yesterdays-news", here, now - Duration::hours(24) - Duration::seconds(1)),
        ("oslo-traffic", GeoPoint::new(59.9139, 10.7522).unwrap(), now),
    ];

    let mut index = GeoGridIndex::for_config(&cfg);
    for (id, loc, at) in posts {
        index.insert_point(id.to_string(), loc, at).unwrap();
        println!(
            "{id:<16} {:>8.3} km  {:>5.1} h old",
            haversine_km(here, loc),
            (now - at).num_seconds() as f64 / 3600.0
        );
    }

    let visible = index.query(here, now, &cfg).unwrap();
    println!("\nvisible: {visible:?}");
    // visible: ["bakery-opens", "edge-of-town"]

    // The index only narrows the search; `passes` is the rule itself.
    let oslo = hyperfeed::content::build_profile(
        &hyperfeed::NewsItem {
            id: "x".into(),
            media_ref: None,
            description: String::new(),
            category: "traffic".into(),
            channel: String::new(),
            hashtags: Default::default(),
            location: GeoPoint::new(59.9139, 10.7522).unwrap(),
            created_at: now,
            author_id: "a".into(),
        },
        &Default::default(),
    );
    println!("Oslo post passes from Trondheim: {}", passes(&oslo, here, now, &cfg));
    println!("Oslo post passes from Oslo:      {}", passes(&oslo, oslo.location, now, &cfg));
}
