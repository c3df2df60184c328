//! In-process recommendation engine: ingestion, profile updates and the
//! filter -> merge -> score -> diversify -> select query path.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::batch::{self, BatchSnapshot, BatchTables, OnlineInputs};
use crate::change::{self, DecayConfig};
use crate::content::{build_profile, NewsProfile, SimilarityWeights, TopicLexicon};
use crate::filter::{FilterConfig, FilterError, GeoGridIndex};
use crate::geo::GeoPoint;
use crate::learner::{self, LearnerConfig, UserProfile};
use crate::model::{
    validate_news, FollowEdge, NewsId, NewsItem, RawNews, Rejection, SelfFollow, SocialGraph, Timestamp, UsageEvent,
    UserId,
};
use crate::rank::{self, EngagementLog, RankContext, RankWeights, Recommendation};
use crate::store::{Store, StoreError, StoreLayout, StoreSnapshot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub filter: FilterConfig,
    pub weights: RankWeights,
    pub learner: LearnerConfig,
    pub decay: DecayConfig,
    pub similarity: SimilarityWeights,
    pub similarity_top_k: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            filter: FilterConfig::default(),
            weights: RankWeights::default(),
            learner: LearnerConfig::default(),
            decay: DecayConfig::default(),
            similarity: SimilarityWeights::default(),
            similarity_top_k: 20,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        self.filter.validate()?;
        self.weights.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        self.learner.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        self.decay.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Invalid(#[from] Rejection),
    #[error("news `{0}` already exists")]
    DuplicateId(NewsId),
    #[error("unknown news `{0}`")]
    UnknownNews(NewsId),
    #[error("unknown user `{0}`")]
    UnknownUser(UserId),
    #[error(transparent)]
    SelfFollow(#[from] SelfFollow),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("invalid config: {0}")]
    Config(String),
}

/// Parameters of one recommendation request.
#[derive(Debug, Clone)]
pub struct RecommendRequest {
    pub user_id: UserId,
    pub location: GeoPoint,
    pub now: Timestamp,
    pub limit: usize,
    pub seed: u64,
}

type SharedProfile = Arc<Mutex<UserProfile>>;

/// Live state of the recommender.
pub struct Engine {
    cfg: EngineConfig,
    lexicon: TopicLexicon,
    news: RwLock<HashMap<NewsId, Arc<NewsProfile>>>,
    index: RwLock<GeoGridIndex>,
    log: RwLock<EngagementLog>,
    events: RwLock<Vec<UsageEvent>>,
    graph: RwLock<SocialGraph>,
    profiles: RwLock<HashMap<UserId, SharedProfile>>,
    batch: RwLock<Option<Arc<BatchSnapshot>>>,
    store: Option<Store>,
    news_ingest: Mutex<()>,
}

/// Applies one interaction to a profile: TD update plus preference bumps.
pub fn apply_event(profile: &mut UserProfile, event: &UsageEvent, item: &NewsProfile, cfg: &EngineConfig) {
    learner::record_event(profile, event, item, &cfg.learner).expect("event routed to its own profile");
    change::apply_event(profile, event, item, &cfg.learner, &cfg.decay);
}

impl Engine {
    pub fn new(cfg: EngineConfig, lexicon: TopicLexicon) -> Result<Self, EngineError> {
        cfg.validate()?;
        Ok(Self {
            index: RwLock::new(GeoGridIndex::for_config(&cfg.filter)),
            cfg,
            lexicon,
            news: RwLock::default(),
            log: RwLock::default(),
            events: RwLock::default(),
            graph: RwLock::default(),
            profiles: RwLock::default(),
            batch: RwLock::new(None),
            store: None,
            news_ingest: Mutex::new(()),
        })
    }

    /// Rebuilds state from a snapshot without persisting anything.
    pub fn from_snapshot(cfg: EngineConfig, lexicon: TopicLexicon, snapshot: &StoreSnapshot) -> Result<Self, EngineError> {
        let engine = Self::new(cfg, lexicon)?;
        engine.replay(snapshot)?;
        Ok(engine)
    }

    /// Replays the data directory, then appends new records to it. Loads the
    /// latest batch tables when present.
    pub fn open(cfg: EngineConfig, lexicon: TopicLexicon, data_dir: &Path) -> Result<Self, EngineError> {
        let layout = StoreLayout::new(data_dir);
        let snapshot = StoreSnapshot::load(&layout)?;
        let mut engine = Self::from_snapshot(cfg, lexicon, &snapshot)?;
        if let Some(snap) = batch::load_snapshot(&layout)? {
            engine.install_batch(snap);
        }
        engine.store = Some(Store::open(layout)?);
        Ok(engine)
    }

    fn replay(&self, snapshot: &StoreSnapshot) -> Result<(), EngineError> {
        for item in &snapshot.news {
            self.insert_news(item.clone())?;
        }
        for edge in &snapshot.follows {
            self.graph.write().follow(&edge.follower_id, &edge.followee_id)?;
        }
        for event in &snapshot.events {
            self.apply(event.clone())?;
        }
        Ok(())
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn lexicon(&self) -> &TopicLexicon {
        &self.lexicon
    }

    pub fn layout(&self) -> Option<&StoreLayout> {
        self.store.as_ref().map(Store::layout)
    }

    pub fn news_count(&self) -> usize {
        self.news.read().len()
    }

    pub fn event_count(&self) -> usize {
        self.events.read().len()
    }

    pub fn news_profile(&self, id: &str) -> Option<Arc<NewsProfile>> {
        self.news.read().get(id).cloned()
    }

    /// Validates, profiles, persists and indexes a client post.
    pub fn post_news(&self, raw: RawNews) -> Result<NewsId, EngineError> {
        let item = validate_news(raw)?;
        self.add_news(item)
    }

    pub fn add_news(&self, item: NewsItem) -> Result<NewsId, EngineError> {
        let _ingest = self.news_ingest.lock();
        if self.news.read().contains_key(&item.id) {
            return Err(EngineError::DuplicateId(item.id));
        }
        if let Some(store) = &self.store {
            store.append_news(&item)?;
        }
        self.insert_news(item)
    }

    fn insert_news(&self, item: NewsItem) -> Result<NewsId, EngineError> {
        let profile = Arc::new(build_profile(&item, &self.lexicon));
        let mut news = self.news.write();
        if news.contains_key(&item.id) {
            return Err(EngineError::DuplicateId(item.id));
        }
        self.index.write().insert(&profile).map_err(|e| match e {
            FilterError::DuplicateId(id) => EngineError::DuplicateId(id),
            other => other.into(),
        })?;
        news.insert(item.id.clone(), profile);
        Ok(item.id)
    }

    fn shared_profile(&self, user: &str) -> SharedProfile {
        if let Some(p) = self.profiles.read().get(user) {
            return p.clone();
        }
        self.profiles
            .write()
            .entry(user.to_string())
            .or_insert_with(|| Arc::new(Mutex::new(UserProfile::new(user))))
            .clone()
    }

    /// Records an interaction. Unknown users get an empty profile first.
    pub fn post_event(&self, event: UsageEvent) -> Result<(), EngineError> {
        let item = self
            .news_profile(&event.news_id)
            .ok_or_else(|| EngineError::UnknownNews(event.news_id.clone()))?;
        let shared = self.shared_profile(&event.user_id);
        // Holding the user's lock across append and apply keeps per-user order.
        let mut profile = shared.lock();
        if let Some(store) = &self.store {
            store.append_event(&event)?;
        }
        apply_event(&mut profile, &event, &item, &self.cfg);
        drop(profile);
        self.log.write().record(&event);
        self.events.write().push(event);
        Ok(())
    }

    fn apply(&self, event: UsageEvent) -> Result<(), EngineError> {
        let item = self
            .news_profile(&event.news_id)
            .ok_or_else(|| EngineError::UnknownNews(event.news_id.clone()))?;
        let shared = self.shared_profile(&event.user_id);
        apply_event(&mut shared.lock(), &event, &item, &self.cfg);
        self.log.write().record(&event);
        self.events.write().push(event);
        Ok(())
    }

    /// Adds a follow edge; returns whether it was new.
    pub fn follow(&self, follower: &str, followee: &str) -> Result<bool, EngineError> {
        if follower == followee {
            return Err(SelfFollow(follower.to_string()).into());
        }
        let mut graph = self.graph.write();
        if graph.is_following(follower, followee) {
            return Ok(false);
        }
        if let Some(store) = &self.store {
            store.append_follow(&FollowEdge {
                follower_id: follower.to_string(),
                followee_id: followee.to_string(),
            })?;
        }
        Ok(graph.follow(follower, followee)?)
    }

    pub fn profile(&self, user: &str) -> Option<UserProfile> {
        let shared = self.profiles.read().get(user).cloned()?;
        let snapshot = shared.lock().clone();
        Some(snapshot)
    }

    pub fn user_ids(&self) -> Vec<UserId> {
        let mut ids: Vec<_> = self.profiles.read().keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn profiles_snapshot(&self) -> Vec<UserProfile> {
        self.user_ids().iter().filter_map(|u| self.profile(u)).collect()
    }

    pub fn graph_snapshot(&self) -> SocialGraph {
        self.graph.read().clone()
    }

    pub fn news_snapshot(&self) -> Vec<NewsProfile> {
        let mut all: Vec<NewsProfile> = self.news.read().values().map(|p| (**p).clone()).collect();
        all.sort_by(|a, b| a.news_id.cmp(&b.news_id));
        all
    }

    pub fn events_snapshot(&self) -> Vec<UsageEvent> {
        self.events.read().clone()
    }

    /// Latest timestamp seen in news or events.
    pub fn latest_timestamp(&self) -> Option<Timestamp> {
        let news_max = self.news.read().values().map(|p| p.created_at).max();
        let event_max = self.events.read().iter().map(|e| e.at).max();
        news_max.max(event_max)
    }

    pub fn evict_older_than(&self, cutoff: Timestamp) -> usize {
        self.index.write().evict_older_than(cutoff)
    }

    pub fn install_batch(&self, snapshot: BatchSnapshot) {
        *self.batch.write() = Some(Arc::new(snapshot));
    }

    pub fn batch_snapshot(&self) -> Option<Arc<BatchSnapshot>> {
        self.batch.read().clone()
    }

    /// Computes both batch tables from the current state as of `now`.
    pub fn compute_batch(&self, now: Timestamp, workers: usize) -> BatchTables {
        let news = self.news_snapshot();
        let users = self.profiles_snapshot();
        let graph = self.graph.read().clone();
        let log = self.log.read().clone();
        let similarity = batch::build_news_similarity(&news, self.cfg.similarity_top_k, &self.cfg.similarity, workers);
        let base = batch::build_user_news_base_with(&users, &news, &graph, &log, now, &self.cfg, workers);
        BatchTables {
            similarity,
            base,
            batch_at: now,
            event_count: self.event_count(),
        }
    }

    /// Ranked recommendations for one request.
    pub fn recommend(&self, req: &RecommendRequest) -> Result<Vec<Recommendation>, EngineError> {
        let profile = self
            .profile(&req.user_id)
            .unwrap_or_else(|| UserProfile::new(req.user_id.clone()));
        let candidate_ids = self.index.read().query(req.location, req.now, &self.cfg.filter)?;

        let candidates: Vec<Arc<NewsProfile>> = {
            let news = self.news.read();
            candidate_ids
                .iter()
                .filter(|id| !profile.has_read(id))
                .filter_map(|id| news.get(id).cloned())
                .collect()
        };
        let pool: Vec<&NewsProfile> = candidates.iter().map(|p| p.as_ref()).collect();

        let batch = self.batch_snapshot();
        let graph = self.graph.read();
        let log = self.log.read();
        let ctx = RankContext::new(req.now, &profile, &graph, &log, &pool, &self.cfg.weights, &self.cfg.decay);

        let scored = match batch.as_deref().and_then(|b| b.rows_for(&req.user_id).map(|rows| (b, rows))) {
            Some((snap, rows)) => {
                let in_pool: HashSet<&str> = pool.iter().map(|p| p.news_id.as_str()).collect();
                let base: Vec<_> = rows.iter().filter(|r| in_pool.contains(r.news_id.as_str())).cloned().collect();
                let based: HashSet<&str> = base.iter().map(|r| r.news_id.as_str()).collect();
                let fresh: Vec<&NewsProfile> = pool.iter().copied().filter(|p| !based.contains(p.news_id.as_str())).collect();
                let lookup: BTreeMap<&str, &NewsProfile> = pool.iter().map(|p| (p.news_id.as_str(), *p)).collect();
                let events = self.events.read();
                let since = events.get(snap.event_count.min(events.len())..).unwrap_or(&[]);
                batch::merge_online(
                    &profile,
                    OnlineInputs {
                        base: &base,
                        events_since: since,
                        fresh: &fresh,
                    },
                    |id| lookup.get(id).copied(),
                    &ctx,
                    &self.cfg.weights,
                )
            }
            None => pool
                .iter()
                .filter_map(|item| rank::score(item, &profile, &ctx, &self.cfg.weights).ok())
                .collect(),
        };
        drop(log);
        drop(graph);

        let mut scored = scored;
        rank::sort_by_score(&mut scored);
        let diversified = rank::diversify(scored, self.cfg.weights.diversity_decay);
        let mut rng = rank::exploration_rng(req.seed);
        Ok(rank::select(diversified, req.limit, self.cfg.weights.epsilon, &mut rng))
    }
}
