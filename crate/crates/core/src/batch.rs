//! Offline tables and the online merge that serves them.
//!
//! The batch run produces two tables: `news_similarity.csv` (item-item content
//! similarity, top-k per item) and `user_news_base.csv` (precomputed user-item
//! scores). At query time [`merge_online`] refreshes the base scores with
//! whatever happened since the batch ran.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::content::{similarity_with, NewsProfile, SimilarityWeights, TopicLexicon};
use crate::engine::{Engine, EngineConfig, EngineError};
use crate::learner::UserProfile;
use crate::model::{hours_between, EventKind, NewsId, SocialGraph, Timestamp, UsageEvent, UserId};
use crate::rank::{self, recency_weight, social_weight, Components, EngagementLog, RankContext, RankWeights, Recommendation};
use crate::store::{StoreError, StoreLayout, StoreSnapshot};

pub const SIMILARITY_HEADER: [&str; 3] = ["news_id", "similar_news", "similarity_score"];
pub const BASE_HEADER: [&str; 3] = ["user_id", "news_id", "recommendation_score"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub news_id: NewsId,
    pub similar_news: NewsId,
    pub similarity_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseScoreRow {
    pub user_id: UserId,
    pub news_id: NewsId,
    pub recommendation_score: f64,
    /// Factor breakdown; only available when the row was computed in-process.
    #[serde(skip)]
    pub components: Option<Components>,
}

/// Output of one batch run.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchTables {
    pub similarity: Vec<SimilarityRow>,
    pub base: Vec<BaseScoreRow>,
    pub batch_at: Timestamp,
    /// Number of events the run had seen; later events are "since batch".
    pub event_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMeta {
    pub batch_at: Timestamp,
    pub event_count: usize,
    pub similarity_rows: usize,
    pub base_rows: usize,
}

/// Base rows grouped by user, as served between batch runs.
#[derive(Debug, Clone, Default)]
pub struct BatchSnapshot {
    pub batch_at: Option<Timestamp>,
    pub event_count: usize,
    base: HashMap<UserId, Vec<BaseScoreRow>>,
    similar: HashMap<NewsId, Vec<SimilarityRow>>,
}

impl BatchSnapshot {
    pub fn new(tables: BatchTables) -> Self {
        let mut base: HashMap<UserId, Vec<BaseScoreRow>> = HashMap::new();
        for row in tables.base {
            base.entry(row.user_id.clone()).or_default().push(row);
        }
        let mut similar: HashMap<NewsId, Vec<SimilarityRow>> = HashMap::new();
        for row in tables.similarity {
            similar.entry(row.news_id.clone()).or_default().push(row);
        }
        Self {
            batch_at: Some(tables.batch_at),
            event_count: tables.event_count,
            base,
            similar,
        }
    }

    pub fn rows_for(&self, user: &str) -> Option<&[BaseScoreRow]> {
        self.base.get(user).map(Vec::as_slice)
    }

    pub fn similar_to(&self, news_id: &str) -> &[SimilarityRow] {
        self.similar.get(news_id).map_or(&[], Vec::as_slice)
    }
}

fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool")
}

fn by_score_then_id(a: &SimilarityRow, b: &SimilarityRow) -> std::cmp::Ordering {
    b.similarity_score
        .total_cmp(&a.similarity_score)
        .then_with(|| a.similar_news.cmp(&b.similar_news))
}

/// Top-`top_k` most similar other items for every item. Items are processed
/// independently, so the work is split across `workers` threads.
pub fn build_news_similarity(
    profiles: &[NewsProfile],
    top_k: usize,
    weights: &SimilarityWeights,
    workers: usize,
) -> Vec<SimilarityRow> {
    let mut sorted: Vec<&NewsProfile> = profiles.iter().collect();
    sorted.sort_by(|a, b| a.news_id.cmp(&b.news_id));
    let per_item = |a: &&NewsProfile| -> Vec<SimilarityRow> {
        let mut rows: Vec<SimilarityRow> = sorted
            .iter()
            .filter(|b| b.news_id != a.news_id)
            .map(|b| SimilarityRow {
                news_id: a.news_id.clone(),
                similar_news: b.news_id.clone(),
                similarity_score: similarity_with(a, b, weights),
            })
            .collect();
        rows.sort_by(by_score_then_id);
        rows.truncate(top_k);
        rows
    };
    pool(workers).install(|| sorted.par_iter().map(per_item).collect::<Vec<_>>())
        .into_iter()
        .flatten()
        .collect()
}

/// Items still inside the age window at `now`.
fn unexpired(items: &[NewsProfile], now: Timestamp, max_age_hours: f64) -> Vec<&NewsProfile> {
    items
        .iter()
        .filter(|i| hours_between(i.created_at, now) <= max_age_hours)
        .collect()
}

/// Scores every unread unexpired item for every user, without exploration or
/// diversification. Rows are ordered by user id, then news id.
pub fn build_user_news_base(
    users: &[UserProfile],
    items: &[NewsProfile],
    graph: &SocialGraph,
    log: &EngagementLog,
    now: Timestamp,
    cfg: &EngineConfig,
) -> Vec<BaseScoreRow> {
    build_user_news_base_with(users, items, graph, log, now, cfg, rayon::current_num_threads())
}

pub fn build_user_news_base_with(
    users: &[UserProfile],
    items: &[NewsProfile],
    graph: &SocialGraph,
    log: &EngagementLog,
    now: Timestamp,
    cfg: &EngineConfig,
    workers: usize,
) -> Vec<BaseScoreRow> {
    let mut users: Vec<&UserProfile> = users.iter().collect();
    users.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    let mut live = unexpired(items, now, cfg.filter.max_age_hours);
    live.sort_by(|a, b| a.news_id.cmp(&b.news_id));

    let per_user = |user: &&UserProfile| -> Vec<BaseScoreRow> {
        let candidates: Vec<&NewsProfile> = live.iter().copied().filter(|i| !user.has_read(&i.news_id)).collect();
        let ctx = RankContext::new(now, user, graph, log, &candidates, &cfg.weights, &cfg.decay);
        candidates
            .iter()
            .filter_map(|item| rank::score(item, user, &ctx, &cfg.weights).ok())
            .map(|rec| BaseScoreRow {
                user_id: user.user_id.clone(),
                news_id: rec.news_id,
                recommendation_score: rec.score,
                components: Some(rec.components),
            })
            .collect()
    };
    pool(workers).install(|| users.par_iter().map(per_user).collect::<Vec<_>>())
        .into_iter()
        .flatten()
        .collect()
}

/// What changed since the batch for one user's query.
pub struct OnlineInputs<'a> {
    /// The user's base rows, already restricted to the current candidates.
    pub base: &'a [BaseScoreRow],
    /// Every event recorded after the batch snapshot was taken.
    pub events_since: &'a [UsageEvent],
    /// Candidates without a base row.
    pub fresh: &'a [&'a NewsProfile],
}

/// Merges base rows with recent activity.
///
/// Recency is always recomputed. Trend is recomputed when any read happened
/// since the batch, social when the item itself saw engagement, and preference
/// plus the Q boost when the user has new events. Rows without a stored
/// breakdown are rescored in full, as are fresh items. Items in the user's
/// read set never appear in the output.
pub fn merge_online<'a>(
    profile: &UserProfile,
    inputs: OnlineInputs<'_>,
    lookup: impl Fn(&str) -> Option<&'a NewsProfile>,
    ctx: &RankContext<'_>,
    weights: &RankWeights,
) -> Vec<Recommendation> {
    let user = profile.user_id.as_str();
    let own_events = inputs.events_since.iter().any(|e| e.user_id == user);
    let any_reads = inputs.events_since.iter().any(|e| e.kind == EventKind::Read);
    let read_since: HashSet<&str> = inputs
        .events_since
        .iter()
        .filter(|e| e.user_id == user && e.kind == EventKind::Read)
        .map(|e| e.news_id.as_str())
        .collect();
    let touched: HashSet<&str> = inputs
        .events_since
        .iter()
        .filter(|e| e.kind.is_engagement())
        .map(|e| e.news_id.as_str())
        .collect();
    let unread = |id: &str| !profile.has_read(id) && !read_since.contains(id);

    let mut out = Vec::with_capacity(inputs.base.len() + inputs.fresh.len());
    for row in inputs.base {
        if row.user_id != user || !unread(&row.news_id) {
            continue;
        }
        let Some(item) = lookup(&row.news_id) else { continue };
        let rec = match row.components {
            None => match rank::score(item, profile, ctx, weights) {
                Ok(r) => r,
                Err(_) => continue,
            },
            Some(mut c) => {
                c.recency = recency_weight(hours_between(item.created_at, ctx.now), weights.lambda_per_hour);
                if any_reads {
                    c.trend = ctx.trend.weight(&item.news_id, ctx.log);
                }
                if touched.contains(item.news_id.as_str()) {
                    c.social = social_weight(item, user, ctx.graph, ctx.log);
                }
                if own_events {
                    c.pref = ctx.preference.score(item);
                    c.q_boosted = profile.greedy() == Some(item.dominant_topic.as_str());
                }
                c.explored = false;
                Recommendation::from_components(item.news_id.clone(), item.dominant_topic.clone(), c, weights)
            }
        };
        out.push(rec);
    }
    for item in inputs.fresh {
        if !unread(&item.news_id) {
            continue;
        }
        if let Ok(rec) = rank::score(item, profile, ctx, weights) {
            out.push(rec);
        }
    }
    out
}

fn csv_error(path: &Path, source: csv::Error) -> StoreError {
    StoreError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn fmt_score(v: f64) -> String {
    format!("{v:.6}")
}

pub fn write_similarity_csv(path: &Path, rows: &[SimilarityRow]) -> Result<(), StoreError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(SIMILARITY_HEADER).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record([r.news_id.as_str(), r.similar_news.as_str(), &fmt_score(r.similarity_score)])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| StoreError::io(path, e))
}

pub fn write_base_csv(path: &Path, rows: &[BaseScoreRow]) -> Result<(), StoreError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(BASE_HEADER).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record([r.user_id.as_str(), r.news_id.as_str(), &fmt_score(r.recommendation_score)])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| StoreError::io(path, e))
}

pub fn read_similarity_csv(path: &Path) -> Result<Vec<SimilarityRow>, StoreError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

pub fn read_base_csv(path: &Path) -> Result<Vec<BaseScoreRow>, StoreError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

/// Loads a previously written batch, if the directory holds one.
pub fn load_snapshot(layout: &StoreLayout) -> Result<Option<BatchSnapshot>, StoreError> {
    let meta_path = layout.batch_meta();
    if !meta_path.exists() || !layout.user_news_base().exists() {
        return Ok(None);
    }
    let meta: BatchMeta =
        serde_json::from_slice(&fs::read(&meta_path).map_err(|e| StoreError::io(&meta_path, e))?)?;
    let similarity = if layout.news_similarity().exists() {
        read_similarity_csv(&layout.news_similarity())?
    } else {
        Vec::new()
    };
    Ok(Some(BatchSnapshot::new(BatchTables {
        similarity,
        base: read_base_csv(&layout.user_news_base())?,
        batch_at: meta.batch_at,
        event_count: meta.event_count,
    })))
}

/// Writes both tables, the batch metadata and a profile snapshot into `out`.
pub fn write_tables(out: &StoreLayout, tables: &BatchTables, profiles: &[UserProfile]) -> Result<BatchMeta, StoreError> {
    fs::create_dir_all(&out.data_dir).map_err(|e| StoreError::io(&out.data_dir, e))?;
    write_similarity_csv(&out.news_similarity(), &tables.similarity)?;
    write_base_csv(&out.user_news_base(), &tables.base)?;

    let profiles_path = out.profiles();
    let mut buf = Vec::new();
    for p in profiles {
        serde_json::to_writer(&mut buf, p)?;
        buf.push(b'\n');
    }
    fs::File::create(&profiles_path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| StoreError::io(&profiles_path, e))?;

    let meta = BatchMeta {
        batch_at: tables.batch_at,
        event_count: tables.event_count,
        similarity_rows: tables.similarity.len(),
        base_rows: tables.base.len(),
    };
    let meta_path = out.batch_meta();
    fs::write(&meta_path, serde_json::to_vec_pretty(&meta)?).map_err(|e| StoreError::io(&meta_path, e))?;
    Ok(meta)
}

/// Loads `data_dir`, computes both tables as of `now` (default: the latest
/// timestamp in the store) and writes them to `out_dir`.
pub fn run_batch(
    data_dir: &Path,
    out_dir: &Path,
    cfg: &EngineConfig,
    lexicon: &TopicLexicon,
    now: Option<Timestamp>,
    workers: usize,
) -> Result<BatchMeta, EngineError> {
    let snapshot = StoreSnapshot::load(&StoreLayout::new(data_dir))?;
    let engine = Engine::from_snapshot(cfg.clone(), lexicon.clone(), &snapshot)?;
    let now = now
        .or_else(|| engine.latest_timestamp())
        .unwrap_or(DateTime::<Utc>::UNIX_EPOCH);
    let tables = engine.compute_batch(now, workers);
    Ok(write_tables(&StoreLayout::new(out_dir), &tables, &engine.profiles_snapshot())?)
}

/// Per-user lookup of base rows, sorted by descending score.
pub fn top_base_rows(rows: &[BaseScoreRow], k: usize) -> BTreeMap<UserId, Vec<&BaseScoreRow>> {
    let mut by_user: BTreeMap<UserId, Vec<&BaseScoreRow>> = BTreeMap::new();
    for r in rows {
        by_user.entry(r.user_id.clone()).or_default().push(r);
    }
    for list in by_user.values_mut() {
        list.sort_by(|a, b| {
            b.recommendation_score
                .total_cmp(&a.recommendation_score)
                .then_with(|| a.news_id.cmp(&b.news_id))
        });
        list.truncate(k);
    }
    by_user
}
