//! Synthetic readers with known tastes, and offline replay of recorded logs.
//!
//! A simulated reader requests a feed, then reads each shown item with
//! probability equal to their ground-truth weight on the item's topic, and
//! likes half of what they read. Items shown but not read are reported as
//! impressions by default, so the learner also sees the zero-reward outcome of
//! every action it took. Items are published evenly over the run, like a news
//! stream, rather than all up front.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::Duration;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::batch;
use crate::content::TopicLexicon;
use crate::engine::{Engine, EngineConfig, EngineError, RecommendRequest};
use crate::geo::{GeoPoint, KM_PER_DEGREE};
use crate::learner::START;
use crate::model::{EventKind, NewsId, NewsItem, Timestamp, UsageEvent, UserId};
use crate::store::{read_jsonl, StoreError, StoreLayout};

pub const SIM_CSV_HEADER: &str = "step,precision@k,greedy_accuracy";
pub const REPLAY_CSV_HEADER: &str = "window,reads,hits,hit_rate";

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Topic weights of one reader; must sum to 1.
pub type Taste = BTreeMap<String, f64>;

#[derive(Debug, Clone)]
pub struct SimScenario {
    pub n_users: usize,
    pub n_items: usize,
    /// Centre of the square in which items are placed; every reader stands here.
    pub center: GeoPoint,
    /// Half the side of that square.
    pub half_width_km: f64,
    /// Reader `u` uses `tastes[u % tastes.len()]`.
    pub tastes: Vec<Taste>,
    pub steps: usize,
    pub k: usize,
    pub seed: u64,
    pub start: Timestamp,
    pub step_minutes: i64,
    pub engine: EngineConfig,
    /// Event posted for a shown item the reader passed over.
    pub ignored: EventKind,
    /// Publish items evenly over the run instead of all before the first step.
    pub staggered: bool,
    /// Batch tables are written here after the last step.
    pub snapshot_dir: Option<PathBuf>,
}

pub fn taste<I: IntoIterator<Item = (&'static str, f64)>>(weights: I) -> Taste {
    weights.into_iter().map(|(t, w)| (t.to_string(), w)).collect()
}

fn sim_epoch() -> Timestamp {
    "2024-01-01T08:00:00Z".parse().expect("static timestamp")
}

impl SimScenario {
    /// One reader who reads traffic 80%, food 15% and events 5% of the time.
    pub fn convergence(seed: u64) -> Self {
        Self {
            n_users: 1,
            n_items: 200,
            center: GeoPoint { lat: 63.4305, lon: 10.3951 },
            half_width_km: 3.0,
            tastes: vec![taste([("traffic", 0.8), ("food", 0.15), ("events", 0.05)])],
            steps: 1000,
            k: 10,
            seed,
            start: sim_epoch(),
            step_minutes: 1,
            engine: EngineConfig::default(),
            ignored: EventKind::Impression,
            staggered: true,
            snapshot_dir: None,
        }
    }

    /// `n_users` readers whose tastes rotate the convergence weights over a
    /// seed-dependent ordering of three topics.
    pub fn synthetic(n_users: usize, n_items: usize, steps: usize, k: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_7a57e);
        let mut topics = ["traffic", "food", "events"];
        for i in (1..topics.len()).rev() {
            topics.swap(i, rng.random_range(0..=i));
        }
        let weights = [0.8, 0.15, 0.05];
        let tastes = (0..topics.len())
            .map(|r| (0..topics.len()).map(|i| (topics[(i + r) % topics.len()], weights[i])).collect::<Vec<_>>())
            .map(taste)
            .collect();
        Self {
            n_users,
            n_items,
            tastes,
            steps,
            k,
            ..Self::convergence(seed)
        }
    }

    pub fn validate(&self, lexicon: &TopicLexicon) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Scenario(m.to_string()));
        if self.n_users == 0 || self.n_items == 0 || self.k == 0 {
            return bad("users, items and k must be positive");
        }
        if self.tastes.is_empty() {
            return bad("at least one taste is required");
        }
        for t in &self.tastes {
            if t.values().any(|w| !(0.0..=1.0).contains(w)) {
                return bad("taste weights must lie in [0, 1]");
            }
            if (t.values().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad("taste weights must sum to 1");
            }
            if let Some(topic) = t.keys().find(|topic| lexicon.keywords_for(topic).is_empty()) {
                return Err(SimError::Scenario(format!("topic `{topic}` is not in the lexicon")));
            }
        }
        if !(self.half_width_km >= 0.0) || self.step_minutes < 0 {
            return bad("geometry and clock step must be non-negative");
        }
        self.engine.validate()?;
        Ok(())
    }

    fn taste_of(&self, user: usize) -> &Taste {
        &self.tastes[user % self.tastes.len()]
    }

    fn topics(&self) -> Vec<String> {
        let all: BTreeSet<&String> = self.tastes.iter().flat_map(|t| t.keys()).collect();
        all.into_iter().cloned().collect()
    }
}

/// Topic with the largest weight; ties go to the smallest label.
pub fn top_topic(t: &Taste) -> Option<&str> {
    let mut best: Option<(&str, f64)> = None;
    for (topic, &w) in t {
        if best.is_none_or(|(_, bw)| w > bw) {
            best = Some((topic, w));
        }
    }
    best.map(|(t, _)| t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    /// Share of shown items on the reader's favourite topic, averaged over
    /// readers who were shown anything; 0 when nobody was.
    pub precision: f64,
    /// Share of readers whose greedy action at their current state is their
    /// favourite topic.
    pub greedy_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserOutcome {
    pub user_id: UserId,
    pub favourite: String,
    /// Greedy action at every topic state the reader moved into.
    pub visited: BTreeMap<String, Option<String>>,
    /// Greedy action at the initial state, reported apart from `visited`.
    pub start_greedy: Option<String>,
    pub reads: usize,
}

impl UserOutcome {
    pub fn converged(&self) -> bool {
        !self.visited.is_empty() && self.visited.values().all(|g| g.as_deref() == Some(self.favourite.as_str()))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimMetrics {
    pub steps: Vec<StepMetrics>,
    pub users: Vec<UserOutcome>,
    pub events_posted: usize,
    pub tables: Vec<PathBuf>,
}

impl SimMetrics {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{SIM_CSV_HEADER}")?;
        for s in &self.steps {
            writeln!(out, "{},{:.6},{:.6}", s.step, s.precision, s.greedy_accuracy)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii csv")
    }
}

/// What one reader saw and did in one step.
#[derive(Debug, Clone)]
pub struct StepTrace<'a> {
    pub step: usize,
    pub user_id: &'a str,
    pub shown: &'a [NewsId],
    pub events: &'a [UsageEvent],
}

pub fn simulate(scenario: &SimScenario, lexicon: &TopicLexicon) -> Result<SimMetrics, SimError> {
    simulate_traced(scenario, lexicon, |_| {})
}

fn place(center: GeoPoint, half_width_km: f64, rng: &mut ChaCha8Rng) -> GeoPoint {
    let dy = rng.random_range(-1.0..=1.0) * half_width_km;
    let dx = rng.random_range(-1.0..=1.0) * half_width_km;
    let lat = center.lat + dy / KM_PER_DEGREE;
    let lon = center.lon + dx / (KM_PER_DEGREE * center.lat.to_radians().cos());
    GeoPoint { lat, lon }
}

/// Like [`simulate`], handing every step's shown items and posted events to `observe`.
pub fn simulate_traced<F>(scenario: &SimScenario, lexicon: &TopicLexicon, mut observe: F) -> Result<SimMetrics, SimError>
where
    F: FnMut(&StepTrace<'_>),
{
    scenario.validate(lexicon)?;
    let engine = Engine::new(scenario.engine.clone(), lexicon.clone())?;
    let mut world = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut readers = ChaCha8Rng::seed_from_u64(scenario.seed.wrapping_add(1));
    let mut explore = ChaCha8Rng::seed_from_u64(scenario.seed.wrapping_add(2));

    let topics = scenario.topics();
    let publish_step = |i: usize| if scenario.staggered { i * scenario.steps / scenario.n_items } else { 0 };
    let mut arrivals = (0..scenario.n_items)
        .map(|i| {
            let topic = &topics[i % topics.len()];
            let at = publish_step(i);
            let item = NewsItem {
                id: format!("item-{i:04}"),
                media_ref: None,
                description: lexicon.keywords_for(topic)[0].to_string(),
                category: topic.clone(),
                channel: "sim".into(),
                hashtags: BTreeSet::new(),
                location: place(scenario.center, scenario.half_width_km, &mut world),
                created_at: scenario.start + Duration::minutes(scenario.step_minutes * at as i64),
                author_id: format!("author-{}", i % 7),
            };
            (at, item)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .peekable();

    let users: Vec<UserId> = (0..scenario.n_users).map(|u| format!("user-{u:03}")).collect();
    let favourites: Vec<String> = (0..scenario.n_users)
        .map(|u| top_topic(scenario.taste_of(u)).unwrap_or_default().to_string())
        .collect();
    let mut visited: Vec<BTreeSet<String>> = vec![BTreeSet::new(); scenario.n_users];
    let mut reads = vec![0usize; scenario.n_users];
    let mut metrics = SimMetrics::default();

    for step in 1..=scenario.steps {
        let now = scenario.start + Duration::minutes(scenario.step_minutes * step as i64);
        while let Some((_, item)) = arrivals.next_if(|(at, _)| *at < step) {
            engine.add_news(item)?;
        }
        let mut precision_sum = 0.0;
        let mut precision_n = 0usize;
        let mut greedy_hits = 0usize;

        for (u, user) in users.iter().enumerate() {
            let recs = engine.recommend(&RecommendRequest {
                user_id: user.clone(),
                location: scenario.center,
                now,
                limit: scenario.k,
                seed: explore.random(),
            })?;
            let taste = scenario.taste_of(u);
            let mut events = Vec::with_capacity(recs.len() * 2);
            let mut relevant = 0usize;
            for rec in &recs {
                if rec.topic == favourites[u] {
                    relevant += 1;
                }
                let p = taste.get(&rec.topic).copied().unwrap_or(0.0);
                let event = |kind| UsageEvent {
                    user_id: user.clone(),
                    news_id: rec.news_id.clone(),
                    kind,
                    at: now,
                    location: Some(scenario.center),
                };
                if readers.random::<f64>() < p {
                    events.push(event(EventKind::Read));
                    if readers.random::<f64>() < 0.5 {
                        events.push(event(EventKind::Like));
                    }
                    visited[u].insert(rec.topic.clone());
                    reads[u] += 1;
                } else {
                    events.push(event(scenario.ignored));
                }
            }
            for e in &events {
                engine.post_event(e.clone())?;
            }
            metrics.events_posted += events.len();
            if !recs.is_empty() {
                precision_sum += relevant as f64 / recs.len() as f64;
                precision_n += 1;
            }
            let profile = engine.profile(user);
            if profile.as_ref().and_then(|p| p.greedy()) == Some(favourites[u].as_str()) {
                greedy_hits += 1;
            }
            let shown: Vec<NewsId> = recs.into_iter().map(|r| r.news_id).collect();
            observe(&StepTrace {
                step,
                user_id: user,
                shown: &shown,
                events: &events,
            });
        }

        metrics.steps.push(StepMetrics {
            step,
            precision: if precision_n == 0 { 0.0 } else { precision_sum / precision_n as f64 },
            greedy_accuracy: greedy_hits as f64 / users.len() as f64,
        });
    }

    for (u, user) in users.iter().enumerate() {
        let profile = engine.profile(user);
        let greedy_at = |state: &str| {
            profile
                .as_ref()
                .and_then(|p| crate::learner::greedy_action(&p.qtable, state).map(str::to_string))
        };
        metrics.users.push(UserOutcome {
            user_id: user.clone(),
            favourite: favourites[u].clone(),
            visited: visited[u].iter().map(|s| (s.clone(), greedy_at(s))).collect(),
            start_greedy: greedy_at(START),
            reads: reads[u],
        });
    }

    if let Some(dir) = &scenario.snapshot_dir {
        let end = scenario.start + Duration::minutes(scenario.step_minutes * scenario.steps as i64);
        let tables = engine.compute_batch(end, 1);
        let layout = StoreLayout::new(dir);
        std::fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
        batch::write_tables(&layout, &tables, &engine.profiles_snapshot())?;
        metrics.tables = vec![layout.news_similarity(), layout.user_news_base(), layout.profiles()];
    }
    Ok(metrics)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowMetrics {
    pub window: usize,
    pub reads: usize,
    pub hits: usize,
}

impl WindowMetrics {
    pub fn hit_rate(&self) -> f64 {
        if self.reads == 0 {
            0.0
        } else {
            self.hits as f64 / self.reads as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayMetrics {
    pub windows: Vec<WindowMetrics>,
    /// Events whose news item was never published in the log's store.
    pub skipped: usize,
}

impl ReplayMetrics {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{REPLAY_CSV_HEADER}")?;
        for w in &self.windows {
            writeln!(out, "{},{},{},{:.6}", w.window, w.reads, w.hits, w.hit_rate())?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii csv")
    }

    pub fn total_hits(&self) -> usize {
        self.windows.iter().map(|w| w.hits).sum()
    }
}

pub const DEFAULT_REPLAY_WINDOW: usize = 10;

/// Feeds `events` in order through a fresh engine. Before each read, the
/// reader's top `k` (exploitation only) is computed at the event's time and
/// place; a hit means the item read was among them. Hits are grouped into
/// windows of `window` consecutive reads.
pub fn replay(
    events: &[UsageEvent],
    news: &[NewsItem],
    k: usize,
    window: usize,
    cfg: &EngineConfig,
    lexicon: &TopicLexicon,
) -> Result<ReplayMetrics, SimError> {
    if k == 0 || window == 0 {
        return Err(SimError::Scenario("k and window must be positive".into()));
    }
    let mut cfg = cfg.clone();
    cfg.weights.epsilon = 0.0;
    let engine = Engine::new(cfg, lexicon.clone())?;

    let mut pending: Vec<&NewsItem> = news.iter().collect();
    pending.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
    let mut pending = pending.into_iter().peekable();

    let mut metrics = ReplayMetrics::default();
    let mut current = WindowMetrics {
        window: 1,
        reads: 0,
        hits: 0,
    };
    for event in events {
        while let Some(item) = pending.next_if(|n| n.created_at <= event.at) {
            match engine.add_news(item.clone()) {
                Ok(_) | Err(EngineError::DuplicateId(_)) => {}
                Err(e) => return Err(e.into()),
            }
        }
        let Some(item) = engine.news_profile(&event.news_id) else {
            metrics.skipped += 1;
            continue;
        };
        if event.kind == EventKind::Read {
            let recs = engine.recommend(&RecommendRequest {
                user_id: event.user_id.clone(),
                location: event.location.unwrap_or(item.location),
                now: event.at,
                limit: k,
                seed: 0,
            })?;
            current.reads += 1;
            if recs.iter().any(|r| r.news_id == event.news_id) {
                current.hits += 1;
            }
        }
        engine.post_event(event.clone())?;
        if current.reads == window {
            let next = current.window + 1;
            metrics.windows.push(std::mem::replace(
                &mut current,
                WindowMetrics {
                    window: next,
                    reads: 0,
                    hits: 0,
                },
            ));
        }
    }
    if current.reads > 0 {
        metrics.windows.push(current);
    }
    Ok(metrics)
}

/// Replays `log` (an `events.jsonl`) against the `news.jsonl` next to it.
pub fn replay_log(log: &Path, k: usize, window: usize, cfg: &EngineConfig, lexicon: &TopicLexicon) -> Result<ReplayMetrics, SimError> {
    // Unlike a data directory, a named log that is absent is a mistake.
    if let Err(source) = std::fs::metadata(log) {
        return Err(StoreError::Io {
            path: log.to_path_buf(),
            source,
        }
        .into());
    }
    let events: Vec<UsageEvent> = read_jsonl(log)?;
    let news_path = StoreLayout::new(log.parent().unwrap_or(Path::new("."))).news();
    let news: Vec<NewsItem> = if news_path.exists() { read_jsonl(&news_path)? } else { Vec::new() };
    replay(&events, &news, k, window, cfg, lexicon)
}
