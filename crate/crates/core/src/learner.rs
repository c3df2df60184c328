//! Per-user profile learning.
//!
//! A user's state is the topic of the item they consumed last (`START` before
//! the first one) and an action is the topic of the next consumed item. Each
//! interaction applies the temporal-difference update
//!
//! ```text
//! Q(s,a) <- Q(s,a) + alpha * (r + gamma * Q(s',a') - Q(s,a))
//! ```
//!
//! with `s' = a` and `a'` the current greedy action at `s'`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::content::NewsProfile;
use crate::model::{EventKind, NewsId, Timestamp, UsageEvent, UserId};

/// Label of the initial state, before any item has been consumed.
pub const START: &str = "START";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearnerError {
    #[error("event for user `{event}` applied to profile of `{profile}`")]
    UnknownUser { profile: UserId, event: UserId },
    #[error("invalid learner config: {0}")]
    InvalidConfig(&'static str),
}

/// Which next-state value enters the TD target.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// `Q(s', a')` with `a'` the greedy stored action at `s'` (0 when none).
    #[default]
    AsWritten,
    /// `max_a Q(s', a)` over every action, unstored ones counting as 0.
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Rewards {
    pub read: f64,
    pub like: f64,
    pub comment: f64,
    pub impression: f64,
    pub dismiss: f64,
}

impl Default for Rewards {
    fn default() -> Self {
        Self {
            read: 1.0,
            like: 2.0,
            comment: 3.0,
            impression: 0.0,
            dismiss: -0.5,
        }
    }
}

impl Rewards {
    pub fn get(&self, kind: EventKind) -> f64 {
        match kind {
            EventKind::Read => self.read,
            EventKind::Like => self.like,
            EventKind::Comment => self.comment,
            EventKind::Impression => self.impression,
            EventKind::Dismiss => self.dismiss,
        }
    }

    pub fn max_abs(&self) -> f64 {
        EventKind::ALL
            .into_iter()
            .map(|k| self.get(k).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub rewards: Rewards,
    pub target: TargetMode,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma: 0.9,
            rewards: Rewards::default(),
            target: TargetMode::AsWritten,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(LearnerError::InvalidConfig("alpha must be in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(LearnerError::InvalidConfig("gamma must be in [0, 1)"));
        }
        if EventKind::ALL
            .into_iter()
            .any(|k| !self.rewards.get(k).is_finite())
        {
            return Err(LearnerError::InvalidConfig("rewards must be finite"));
        }
        Ok(())
    }
}

pub fn reward_for(kind: EventKind, cfg: &LearnerConfig) -> f64 {
    cfg.rewards.get(kind)
}

/// One temporal-difference step.
pub fn q_update(q: f64, reward: f64, q_next: f64, alpha: f64, gamma: f64) -> f64 {
    q + alpha * (reward + gamma * q_next - q)
}

/// State-action values; absent pairs read as 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QTable {
    entries: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QEntry {
    pub state: String,
    pub action: String,
    pub value: f64,
}

impl QTable {
    pub fn get(&self, state: &str, action: &str) -> f64 {
        self.entries
            .get(state)
            .and_then(|row| row.get(action))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn set(&mut self, state: &str, action: &str, value: f64) {
        debug_assert!(value.is_finite());
        self.entries
            .entry(state.to_string())
            .or_default()
            .insert(action.to_string(), value);
    }

    pub fn actions(&self, state: &str) -> impl Iterator<Item = (&str, f64)> {
        self.entries
            .get(state)
            .into_iter()
            .flatten()
            .map(|(a, &v)| (a.as_str(), v))
    }

    pub fn states(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = QEntry> + '_ {
        self.entries.iter().flat_map(|(s, row)| {
            row.iter().map(move |(a, &v)| QEntry {
                state: s.clone(),
                action: a.clone(),
                value: v,
            })
        })
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Serialize for QTable {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.entries())
    }
}

impl<'de> Deserialize<'de> for QTable {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let entries = Vec::<QEntry>::deserialize(deserializer)?;
        let mut table = QTable::default();
        for e in entries {
            if !e.value.is_finite() {
                return Err(serde::de::Error::custom("non-finite Q value"));
            }
            table.set(&e.state, &e.action, e.value);
        }
        Ok(table)
    }
}

/// Best stored action at `state`; ties go to the lexicographically smallest label.
pub fn greedy_action<'a>(qtable: &'a QTable, state: &str) -> Option<&'a str> {
    let mut best: Option<(&str, f64)> = None;
    for (action, v) in qtable.actions(state) {
        if best.is_none_or(|(_, bv)| v > bv) {
            best = Some((action, v));
        }
    }
    best.map(|(a, _)| a)
}

fn next_value(qtable: &QTable, state: &str, mode: TargetMode) -> f64 {
    match mode {
        TargetMode::AsWritten => greedy_action(qtable, state).map_or(0.0, |a| qtable.get(state, a)),
        TargetMode::Max => qtable.actions(state).map(|(_, v)| v).fold(0.0, f64::max),
    }
}

/// Everything the engine knows about one reader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: UserId,
    pub qtable: QTable,
    pub short_term: BTreeMap<String, f64>,
    pub long_term: BTreeMap<String, f64>,
    pub read_set: BTreeSet<NewsId>,
    pub last_state: String,
    pub last_update_at: Option<Timestamp>,
}

impl UserProfile {
    pub fn new(user_id: impl Into<UserId>) -> Self {
        Self {
            user_id: user_id.into(),
            qtable: QTable::default(),
            short_term: BTreeMap::new(),
            long_term: BTreeMap::new(),
            read_set: BTreeSet::new(),
            last_state: START.to_string(),
            last_update_at: None,
        }
    }

    pub fn has_read(&self, news_id: &str) -> bool {
        self.read_set.contains(news_id)
    }

    /// Greedy action at the current state.
    pub fn greedy(&self) -> Option<&str> {
        greedy_action(&self.qtable, &self.last_state)
    }
}

/// Applies the TD update for one interaction.
///
/// Engagements (read/like/comment) move the state to the item's topic;
/// impressions and dismissals only adjust `Q(last_state, topic)`.
pub fn record_event(
    profile: &mut UserProfile,
    event: &UsageEvent,
    item: &NewsProfile,
    cfg: &LearnerConfig,
) -> Result<(), LearnerError> {
    if event.user_id != profile.user_id {
        return Err(LearnerError::UnknownUser {
            profile: profile.user_id.clone(),
            event: event.user_id.clone(),
        });
    }
    let state = profile.last_state.clone();
    let action = item.dominant_topic.as_str();
    let reward = reward_for(event.kind, cfg);
    let q = profile.qtable.get(&state, action);
    let q_next = next_value(&profile.qtable, action, cfg.target);
    let updated = q_update(q, reward, q_next, cfg.alpha, cfg.gamma);
    profile.qtable.set(&state, action, updated);

    if event.kind.is_engagement() {
        profile.last_state = action.to_string();
    }
    if event.kind == EventKind::Read {
        profile.read_set.insert(event.news_id.clone());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::content::TopicVector;
    use crate::geo::GeoPoint;
    use proptest::prelude::*;

    fn item(id: &str, topic: &str) -> NewsProfile {
        NewsProfile {
            news_id: id.into(),
            topic_vector: TopicVector::unit(topic),
            dominant_topic: topic.into(),
            category: topic.into(),
            channel: String::new(),
            hashtags: Default::default(),
            location: GeoPoint { lat: 0.0, lon: 0.0 },
            created_at: "2024-01-01T00:00:00Z".parse().unwrap(),
            author_id: "a".into(),
        }
    }

    fn event(news: &str, kind: EventKind) -> UsageEvent {
        UsageEvent {
            user_id: "u".into(),
            news_id: news.into(),
            kind,
            at: "2024-01-01T01:00:00Z".parse().unwrap(),
            location: None,
        }
    }

    #[test]
    fn default_rewards() {
        let cfg = LearnerConfig::default();
        assert_eq!(reward_for(EventKind::Read, &cfg), 1.0);
        assert_eq!(reward_for(EventKind::Impression, &cfg), 0.0);
        assert_eq!(reward_for(EventKind::Dismiss, &cfg), -0.5);
        assert_eq!(reward_for(EventKind::Like, &cfg), 2.0);
        assert_eq!(reward_for(EventKind::Comment, &cfg), 3.0);
    }

    #[test]
    fn q_update_substitutions() {
        assert_eq!(q_update(0.0, 0.0, 0.0, 0.1, 0.9), 0.0);
        assert!((q_update(0.0, 1.0, 0.0, 0.1, 0.9) - 0.1).abs() < 1e-12);
        assert!((q_update(0.5, 0.0, 1.0, 0.5, 0.9) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn two_step_trace() {
        let cfg = LearnerConfig::default();
        let mut p = UserProfile::new("u");
        record_event(&mut p, &event("n1", EventKind::Read), &item("n1", "traffic"), &cfg).unwrap();
        assert!((p.qtable.get(START, "traffic") - 0.1).abs() < 1e-12);
        assert_eq!(p.last_state, "traffic");

        record_event(&mut p, &event("n2", EventKind::Impression), &item("n2", "events"), &cfg)
            .unwrap();
        assert_eq!(p.last_state, "traffic");
        assert!(!p.has_read("n2"));

        record_event(&mut p, &event("n3", EventKind::Read), &item("n3", "food"), &cfg).unwrap();
        assert!((p.qtable.get("traffic", "food") - 0.1).abs() < 1e-12);
        assert_eq!(p.last_state, "food");
        assert!(p.has_read("n1") && p.has_read("n3"));
    }

    #[test]
    fn dismiss_is_negative_and_does_not_advance() {
        let cfg = LearnerConfig::default();
        let mut p = UserProfile::new("u");
        record_event(&mut p, &event("n", EventKind::Dismiss), &item("n", "crime"), &cfg).unwrap();
        assert!((p.qtable.get(START, "crime") + 0.05).abs() < 1e-12);
        assert_eq!(p.last_state, START);
    }

    #[test]
    fn mismatched_user_is_rejected() {
        let mut p = UserProfile::new("other");
        let err = record_event(
            &mut p,
            &event("n", EventKind::Read),
            &item("n", "food"),
            &LearnerConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, LearnerError::UnknownUser { .. }));
    }

    #[test]
    fn greedy_tie_breaks_lexicographically() {
        let mut q = QTable::default();
        assert_eq!(greedy_action(&q, "s"), None);
        q.set("s", "food", 0.3);
        assert_eq!(greedy_action(&q, "s"), Some("food"));
        q.set("s", "events", 0.3);
        assert_eq!(greedy_action(&q, "s"), Some("events"));
    }

    #[test]
    fn max_target_counts_unstored_actions_as_zero() {
        let mut q = QTable::default();
        q.set("s", "a", -1.0);
        assert_eq!(next_value(&q, "s", TargetMode::AsWritten), -1.0);
        assert_eq!(next_value(&q, "s", TargetMode::Max), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(LearnerConfig::default().validate().is_ok());
        let bad = LearnerConfig {
            gamma: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = LearnerConfig {
            alpha: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn geometric_convergence_with_zero_discount() {
        let (alpha, target, q0) = (0.1, 2.5, -1.0);
        let mut q = q0;
        for n in 1..=50 {
            q = q_update(q, target, 123.0, alpha, 0.0);
            let expected = (1.0 - alpha).powi(n) * (q0 - target).abs();
            assert!(((q - target).abs() - expected).abs() < 1e-12, "step {n}");
        }
    }

    #[test]
    fn profile_serializes_round_trip() {
        let cfg = LearnerConfig::default();
        let mut p = UserProfile::new("u");
        record_event(&mut p, &event("n1", EventKind::Read), &item("n1", "traffic"), &cfg).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains(r#"{"state":"START","action":"traffic","value":0.1}"#), "{json}");
        let back: UserProfile = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }

    fn arb_kind() -> impl Strategy<Value = EventKind> {
        proptest::sample::select(EventKind::ALL.to_vec())
    }

    fn arb_events() -> impl Strategy<Value = Vec<(EventKind, String, usize)>> {
        proptest::collection::vec(
            (arb_kind(), prop_oneof![Just("a".to_string()), Just("b".into()), Just("c".into())], 0usize..20),
            0..80,
        )
    }

    proptest! {
        #[test]
        fn linear_in_reward(q in -10.0f64..10.0, r1 in -5.0f64..5.0, r2 in -5.0f64..5.0,
                            qn in -10.0f64..10.0, alpha in 0.01f64..1.0, gamma in 0.0f64..0.99) {
            let diff = q_update(q, r1 + r2, qn, alpha, gamma) - q_update(q, r1, qn, alpha, gamma);
            prop_assert!((diff - alpha * r2).abs() < 1e-9);
        }

        #[test]
        fn values_stay_bounded_and_replay_is_deterministic(
            events in arb_events(), alpha in 0.01f64..1.0, gamma in 0.0f64..0.95,
            target in prop_oneof![Just(TargetMode::AsWritten), Just(TargetMode::Max)],
        ) {
            let cfg = LearnerConfig { alpha, gamma, target, ..Default::default() };
            let bound = cfg.rewards.max_abs() / (1.0 - gamma) + 1e-9;
            let run = || {
                let mut p = UserProfile::new("u");
                let mut prev_reads = 0;
                for (kind, topic, n) in &events {
                    let id = format!("n{n}");
                    record_event(&mut p, &event(&id, *kind), &item(&id, topic), &cfg).unwrap();
                    assert!(p.read_set.len() >= prev_reads);
                    prev_reads = p.read_set.len();
                }
                p
            };
            let p = run();
            for e in p.qtable.entries() {
                prop_assert!(e.value.is_finite() && e.value.abs() <= bound);
            }
            prop_assert_eq!(p, run());
        }
    }
}
