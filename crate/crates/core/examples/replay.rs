//! Offline evaluation: replay a recorded event log and count how often the
//! item a reader actually read was in the top-k the engine would have shown.
//!
//!     cargo run --example replay [path/to/events.jsonl]

use std::path::PathBuf;

use hyperfeed::sim::{replay_log, DEFAULT_REPLAY_WINDOW};
use hyperfeed::{EngineConfig, TopicLexicon};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // news.jsonl is read from the log's directory.
    let log = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/store/events.jsonl")
    });
    for k in [1, 3, 5] {
        let m = replay_log(&log, k, DEFAULT_REPLAY_WINDOW, &EngineConfig::default(), &TopicLexicon::default())?;
        let reads: usize = m.windows.iter().map(|w| w.reads).sum();
        println!("k={k}: {} of {reads} reads were in the top-{k} ({} events skipped)", m.total_hits(), m.skipped);
    }
    Ok(())
}
