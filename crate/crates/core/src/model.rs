//! Domain records shared by every stage of the pipeline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::geo::{GeoError, GeoPoint};

/// UTC instant; serializes as RFC 3339 text.
pub type Timestamp = DateTime<Utc>;

pub type NewsId = String;
pub type UserId = String;

/// Hours elapsed from `earlier` to `later`, at millisecond resolution. Negative
/// when `later` precedes `earlier`.
pub fn hours_between(earlier: Timestamp, later: Timestamp) -> f64 {
    (later - earlier).num_milliseconds() as f64 / 3_600_000.0
}

/// A geo- and time-stamped user post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsItem {
    pub id: NewsId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media_ref: Option<String>,
    #[serde(default)]
    pub description: String,
    pub category: String,
    #[serde(default)]
    pub channel: String,
    #[serde(default)]
    pub hashtags: BTreeSet<String>,
    pub location: GeoPoint,
    pub created_at: Timestamp,
    pub author_id: UserId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Read,
    Like,
    Comment,
    Impression,
    Dismiss,
}

impl EventKind {
    pub const ALL: [EventKind; 5] = [
        EventKind::Read,
        EventKind::Like,
        EventKind::Comment,
        EventKind::Impression,
        EventKind::Dismiss,
    ];

    /// Kinds that count as consuming an item: they advance the learner state
    /// and feed the social signal.
    pub fn is_engagement(self) -> bool {
        matches!(self, EventKind::Read | EventKind::Like | EventKind::Comment)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Read => "read",
            EventKind::Like => "like",
            EventKind::Comment => "comment",
            EventKind::Impression => "impression",
            EventKind::Dismiss => "dismiss",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown event kind `{0}`")]
pub struct UnknownKind(pub String);

impl FromStr for EventKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownKind(s.to_string()))
    }
}

/// One user interaction with a news item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageEvent {
    pub user_id: UserId,
    pub news_id: NewsId,
    pub kind: EventKind,
    pub at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<GeoPoint>,
}

/// Directed follow relation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SocialGraph {
    follows: BTreeMap<UserId, BTreeSet<UserId>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("user `{0}` cannot follow themselves")]
pub struct SelfFollow(pub UserId);

/// A single follow edge, as persisted in the follow log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FollowEdge {
    pub follower_id: UserId,
    pub followee_id: UserId,
}

impl SocialGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `follower -> followee`. Returns whether the edge was new.
    pub fn follow(&mut self, follower: &str, followee: &str) -> Result<bool, SelfFollow> {
        if follower == followee {
            return Err(SelfFollow(follower.to_string()));
        }
        Ok(self
            .follows
            .entry(follower.to_string())
            .or_default()
            .insert(followee.to_string()))
    }

    pub fn followees(&self, user: &str) -> impl Iterator<Item = &UserId> {
        self.follows.get(user).into_iter().flatten()
    }

    pub fn followee_count(&self, user: &str) -> usize {
        self.follows.get(user).map_or(0, BTreeSet::len)
    }

    pub fn is_following(&self, follower: &str, followee: &str) -> bool {
        self.follows
            .get(follower)
            .is_some_and(|set| set.contains(followee))
    }

    pub fn edges(&self) -> impl Iterator<Item = FollowEdge> + '_ {
        self.follows.iter().flat_map(|(follower, set)| {
            set.iter().map(move |followee| FollowEdge {
                follower_id: follower.clone(),
                followee_id: followee.clone(),
            })
        })
    }
}

/// Unvalidated news fields as they arrive from clients.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct RawNews {
    pub id: Option<String>,
    pub media_ref: Option<String>,
    pub description: Option<String>,
    pub category: Option<String>,
    pub channel: Option<String>,
    pub hashtags: Option<Vec<String>>,
    pub location: Option<RawPoint>,
    pub created_at: Option<String>,
    pub author_id: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
pub struct RawPoint {
    pub lat: Option<f64>,
    pub lon: Option<f64>,
}

/// Why a news record was rejected. Each variant names the offending field.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Rejection {
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("field `{0}` out of range")]
    OutOfRange(&'static str),
}

impl Rejection {
    pub fn field(&self) -> &'static str {
        match self {
            Rejection::MissingField(f) | Rejection::OutOfRange(f) => f,
        }
    }
}

fn required(value: Option<String>, name: &'static str) -> Result<String, Rejection> {
    match value {
        Some(v) if !v.trim().is_empty() => Ok(v),
        _ => Err(Rejection::MissingField(name)),
    }
}

/// Lowercases, strips a leading `#`, drops empties and duplicates.
pub fn normalize_hashtags<I, S>(tags: I) -> BTreeSet<String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    tags.into_iter()
        .map(|t| t.as_ref().trim().trim_start_matches('#').to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

pub fn validate_news(raw: RawNews) -> Result<NewsItem, Rejection> {
    let id = required(raw.id, "id")?;
    let loc = raw.location.ok_or(Rejection::MissingField("location"))?;
    let lat = loc.lat.ok_or(Rejection::MissingField("lat"))?;
    let lon = loc.lon.ok_or(Rejection::MissingField("lon"))?;
    let location = GeoPoint::new(lat, lon).map_err(|e| match e {
        GeoError::Latitude => Rejection::OutOfRange("lat"),
        GeoError::Longitude => Rejection::OutOfRange("lon"),
    })?;
    let created_at = raw
        .created_at
        .ok_or(Rejection::MissingField("created_at"))?;
    let created_at = DateTime::parse_from_rfc3339(created_at.trim())
        .map_err(|_| Rejection::OutOfRange("created_at"))?
        .with_timezone(&Utc);
    let category = required(raw.category, "category")?.trim().to_lowercase();
    let author_id = required(raw.author_id, "author_id")?;

    Ok(NewsItem {
        id,
        media_ref: raw.media_ref.filter(|m| !m.is_empty()),
        description: raw.description.unwrap_or_default(),
        category,
        channel: raw.channel.unwrap_or_default(),
        hashtags: normalize_hashtags(raw.hashtags.unwrap_or_default()),
        location,
        created_at,
        author_id,
    })
}
