//! Context-weighted scoring, diversity re-ranking and epsilon-greedy selection.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::change::PreferenceModel;
use crate::content::NewsProfile;
use crate::learner::UserProfile;
use crate::model::{hours_between, EventKind, NewsId, SocialGraph, Timestamp, UsageEvent, UserId};

/// Floor on the social factor for items written by someone the reader follows.
pub const FOLLOWED_AUTHOR_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankWeights {
    pub w_pref: f64,
    pub w_social: f64,
    pub w_recency: f64,
    pub w_trend: f64,
    pub lambda_per_hour: f64,
    pub epsilon: f64,
    pub q_boost: f64,
    pub diversity_decay: f64,
    pub trend_window_hours: f64,
}

impl Default for RankWeights {
    fn default() -> Self {
        Self {
            w_pref: 0.4,
            w_social: 0.2,
            w_recency: 0.3,
            w_trend: 0.1,
            lambda_per_hour: std::f64::consts::LN_2 / 6.0,
            epsilon: 0.1,
            q_boost: 0.25,
            diversity_decay: 0.7,
            trend_window_hours: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RankError {
    #[error("news `{0}` was already read by the user")]
    AlreadyRead(NewsId),
    #[error("invalid rank weights: {0}")]
    InvalidWeights(&'static str),
}

impl RankWeights {
    pub fn validate(&self) -> Result<(), RankError> {
        let w = [self.w_pref, self.w_social, self.w_recency, self.w_trend];
        if w.iter().any(|x| !(*x >= 0.0)) {
            return Err(RankError::InvalidWeights("factor weights must be non-negative"));
        }
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(RankError::InvalidWeights("factor weights must sum to 1"));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(RankError::InvalidWeights("epsilon must be in [0, 1)"));
        }
        if !(self.diversity_decay > 0.0 && self.diversity_decay <= 1.0) {
            return Err(RankError::InvalidWeights("diversity_decay must be in (0, 1]"));
        }
        if !(self.lambda_per_hour >= 0.0) || !(self.q_boost >= 0.0) || !(self.trend_window_hours > 0.0) {
            return Err(RankError::InvalidWeights("lambda, q_boost and trend window must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub pref: f64,
    pub social: f64,
    pub recency: f64,
    pub trend: f64,
    pub q_boosted: bool,
    pub explored: bool,
}

impl Components {
    pub fn combine(&self, w: &RankWeights) -> f64 {
        let base = w.w_pref * self.pref
            + w.w_social * self.social
            + w.w_recency * self.recency
            + w.w_trend * self.trend;
        if self.q_boosted {
            base * (1.0 + w.q_boost)
        } else {
            base
        }
    }
}

/// A scored candidate as returned to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub news_id: NewsId,
    pub topic: String,
    pub score: f64,
    pub components: Components,
}

impl Recommendation {
    pub fn from_components(news_id: NewsId, topic: String, components: Components, w: &RankWeights) -> Self {
        Self {
            news_id,
            topic,
            score: components.combine(w),
            components,
        }
    }

    /// Recomputes the score after a component was edited.
    pub fn rescore(&mut self, w: &RankWeights) {
        self.score = self.components.combine(w);
    }
}

pub fn recency_weight(age_hours: f64, lambda_per_hour: f64) -> f64 {
    (-lambda_per_hour * age_hours.max(0.0)).exp()
}

/// Who engaged with what, and when items were read. Fed from the event log.
#[derive(Debug, Clone, Default)]
pub struct EngagementLog {
    engagers: HashMap<NewsId, BTreeSet<UserId>>,
    reads: HashMap<NewsId, Vec<Timestamp>>,
}

impl EngagementLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_events<'a>(events: impl IntoIterator<Item = &'a UsageEvent>) -> Self {
        let mut log = Self::new();
        events.into_iter().for_each(|e| log.record(e));
        log
    }

    pub fn record(&mut self, event: &UsageEvent) {
        if event.kind.is_engagement() {
            self.engagers
                .entry(event.news_id.clone())
                .or_default()
                .insert(event.user_id.clone());
        }
        if event.kind == EventKind::Read {
            let reads = self.reads.entry(event.news_id.clone()).or_default();
            let pos = reads.partition_point(|t| *t <= event.at);
            reads.insert(pos, event.at);
        }
    }

    pub fn engaged(&self, news_id: &str, user: &str) -> bool {
        self.engagers
            .get(news_id)
            .is_some_and(|users| users.contains(user))
    }

    /// Reads of `news_id` with timestamps in `[now - window, now]`.
    pub fn reads_in_window(&self, news_id: &str, now: Timestamp, window_hours: f64) -> usize {
        let Some(reads) = self.reads.get(news_id) else {
            return 0;
        };
        let window_ms = (window_hours * 3_600_000.0).round() as i64;
        let start = now - chrono::Duration::milliseconds(window_ms);
        let lo = reads.partition_point(|t| *t < start);
        let hi = reads.partition_point(|t| *t <= now);
        hi.saturating_sub(lo)
    }
}

pub fn social_weight(item: &NewsProfile, user: &str, graph: &SocialGraph, log: &EngagementLog) -> f64 {
    let followed = graph.followee_count(user);
    if followed == 0 {
        return 0.0;
    }
    let engaged = graph
        .followees(user)
        .filter(|f| log.engaged(&item.news_id, f))
        .count();
    let mut so = engaged as f64 / followed as f64;
    if graph.is_following(user, &item.author_id) {
        so = so.max(FOLLOWED_AUTHOR_FLOOR);
    }
    so
}

/// Max window read count over a candidate pool, computed once per query.
#[derive(Debug, Clone, Copy)]
pub struct TrendNormalizer {
    pub now: Timestamp,
    pub window_hours: f64,
    pub pool_max: usize,
}

impl TrendNormalizer {
    pub fn new<'a>(pool: impl IntoIterator<Item = &'a str>, log: &EngagementLog, now: Timestamp, window_hours: f64) -> Self {
        let pool_max = pool
            .into_iter()
            .map(|id| log.reads_in_window(id, now, window_hours))
            .max()
            .unwrap_or(0);
        Self {
            now,
            window_hours,
            pool_max,
        }
    }

    pub fn weight(&self, news_id: &str, log: &EngagementLog) -> f64 {
        if self.pool_max == 0 {
            return 0.0;
        }
        log.reads_in_window(news_id, self.now, self.window_hours) as f64 / self.pool_max as f64
    }
}

pub fn trend_weight(item: &NewsProfile, pool: &[NewsProfile], log: &EngagementLog, now: Timestamp, window_hours: f64) -> f64 {
    TrendNormalizer::new(pool.iter().map(|p| p.news_id.as_str()), log, now, window_hours).weight(&item.news_id, log)
}

/// Query-time context shared by every candidate of one request.
pub struct RankContext<'a> {
    pub now: Timestamp,
    pub graph: &'a SocialGraph,
    pub log: &'a EngagementLog,
    pub trend: TrendNormalizer,
    pub preference: PreferenceModel,
}

impl<'a> RankContext<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        now: Timestamp,
        profile: &UserProfile,
        graph: &'a SocialGraph,
        log: &'a EngagementLog,
        pool: &[&NewsProfile],
        weights: &RankWeights,
        decay: &crate::change::DecayConfig,
    ) -> Self {
        Self {
            now,
            graph,
            log,
            trend: TrendNormalizer::new(pool.iter().map(|p| p.news_id.as_str()), log, now, weights.trend_window_hours),
            preference: PreferenceModel::from_profile(profile, decay),
        }
    }
}

/// Scores one filtered, unread candidate.
pub fn score(item: &NewsProfile, profile: &UserProfile, ctx: &RankContext<'_>, w: &RankWeights) -> Result<Recommendation, RankError> {
    if profile.has_read(&item.news_id) {
        return Err(RankError::AlreadyRead(item.news_id.clone()));
    }
    let components = Components {
        pref: ctx.preference.score(item),
        social: social_weight(item, &profile.user_id, ctx.graph, ctx.log),
        recency: recency_weight(hours_between(item.created_at, ctx.now), w.lambda_per_hour),
        trend: ctx.trend.weight(&item.news_id, ctx.log),
        q_boosted: profile.greedy() == Some(item.dominant_topic.as_str()),
        explored: false,
    };
    Ok(Recommendation::from_components(
        item.news_id.clone(),
        item.dominant_topic.clone(),
        components,
        w,
    ))
}

/// Descending score, then ascending id.
pub fn sort_by_score(list: &mut [Recommendation]) {
    list.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.news_id.cmp(&b.news_id)));
}

/// Greedy topic-diversity re-rank: each pick maximizes
/// `score * decay^(already picked with the same topic)`.
pub fn diversify(list: Vec<Recommendation>, decay: f64) -> Vec<Recommendation> {
    let mut queues: BTreeMap<String, VecDeque<Recommendation>> = BTreeMap::new();
    let mut sorted = list;
    sort_by_score(&mut sorted);
    let total = sorted.len();
    for rec in sorted {
        queues.entry(rec.topic.clone()).or_default().push_back(rec);
    }
    let mut picked: HashMap<String, i32> = HashMap::new();
    let mut out = Vec::with_capacity(total);
    while out.len() < total {
        let mut best: Option<(&String, f64, &NewsId)> = None;
        for (topic, queue) in &queues {
            let Some(head) = queue.front() else { continue };
            let adjusted = head.score * decay.powi(picked.get(topic).copied().unwrap_or(0));
            let better = match best {
                None => true,
                Some((_, s, id)) => adjusted > s || (adjusted == s && head.news_id < *id),
            };
            if better {
                best = Some((topic, adjusted, &head.news_id));
            }
        }
        let topic = best.map(|(t, _, _)| t.clone()).expect("a non-empty queue remains");
        let rec = queues.get_mut(&topic).and_then(VecDeque::pop_front).expect("head exists");
        *picked.entry(topic).or_default() += 1;
        out.push(rec);
    }
    out
}

/// The random source behind exploration: ChaCha8 seeded from a `u64`.
pub fn exploration_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fills up to `k` slots; each slot explores a uniformly random remaining
/// candidate with probability `epsilon`, otherwise takes the next one in order.
pub fn select<R: Rng + ?Sized>(list: Vec<Recommendation>, k: usize, epsilon: f64, rng: &mut R) -> Vec<Recommendation> {
    let mut remaining = list;
    let mut out = Vec::with_capacity(k.min(remaining.len()));
    while out.len() < k && !remaining.is_empty() {
        if epsilon > 0.0 && rng.random::<f64>() < epsilon {
            let idx = rng.random_range(0..remaining.len());
            let mut rec = remaining.remove(idx);
            rec.components.explored = true;
            out.push(rec);
        } else {
            out.push(remaining.remove(0));
        }
    }
    out
}
