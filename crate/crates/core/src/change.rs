//! Short-term versus long-term interest tracking and shift detection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::content::NewsProfile;
use crate::learner::{reward_for, LearnerConfig, UserProfile};
use crate::model::{hours_between, UsageEvent, UserId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecayConfig {
    pub short_half_life_hours: f64,
    pub long_half_life_hours: f64,
    pub shift_threshold: f64,
    pub boost_factor: f64,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self {
            short_half_life_hours: 24.0,
            long_half_life_hours: 720.0,
            shift_threshold: 0.4,
            boost_factor: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid decay config: {0}")]
pub struct InvalidDecayConfig(pub &'static str);

impl DecayConfig {
    pub fn validate(&self) -> Result<(), InvalidDecayConfig> {
        if !(self.short_half_life_hours > 0.0) {
            return Err(InvalidDecayConfig("short half-life must be positive"));
        }
        if !(self.short_half_life_hours < self.long_half_life_hours) {
            return Err(InvalidDecayConfig("short half-life must be below long half-life"));
        }
        if !(self.shift_threshold > 0.0 && self.shift_threshold <= 2.0) {
            return Err(InvalidDecayConfig("shift threshold must be in (0, 2]"));
        }
        if !(self.boost_factor >= 1.0) {
            return Err(InvalidDecayConfig("boost factor must be >= 1"));
        }
        Ok(())
    }
}

/// Emitted when short-term interest has moved away from the long-term baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub user_id: UserId,
    pub l1_distance: f64,
    pub rising_topics: Vec<String>,
}

/// Decays every weight by `2^(-dt/half_life)` and adds `event_weight` to `topic`.
pub fn bump(
    prefs: &mut BTreeMap<String, f64>,
    topic: &str,
    event_weight: f64,
    dt_hours: f64,
    half_life_hours: f64,
) {
    let factor = (-dt_hours.max(0.0) / half_life_hours).exp2();
    if factor != 1.0 {
        prefs.values_mut().for_each(|w| *w *= factor);
    }
    *prefs.entry(topic.to_string()).or_default() += event_weight.max(0.0);
}

/// Folds one interaction into both preference accumulators.
pub fn apply_event(
    profile: &mut UserProfile,
    event: &UsageEvent,
    item: &NewsProfile,
    learner: &LearnerConfig,
    cfg: &DecayConfig,
) {
    let dt = profile
        .last_update_at
        .map_or(0.0, |last| hours_between(last, event.at).max(0.0));
    let weight = reward_for(event.kind, learner).max(0.0);
    let topic = item.dominant_topic.as_str();
    bump(&mut profile.short_term, topic, weight, dt, cfg.short_half_life_hours);
    bump(&mut profile.long_term, topic, weight, dt, cfg.long_half_life_hours);
    profile.last_update_at = Some(profile.last_update_at.map_or(event.at, |t| t.max(event.at)));
}

pub(crate) fn normalize(map: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let total: f64 = map.values().sum();
    if total <= 0.0 {
        return BTreeMap::new();
    }
    map.iter()
        .filter(|(_, &w)| w > 0.0)
        .map(|(t, w)| (t.clone(), w / total))
        .collect()
}

/// L1 distance between two distributions; missing topics count as 0.
pub fn l1_distance(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let mut d = 0.0;
    for (t, wa) in a {
        d += (wa - b.get(t).copied().unwrap_or(0.0)).abs();
    }
    for (t, wb) in b {
        if !a.contains_key(t) {
            d += wb.abs();
        }
    }
    d
}

pub fn detect_shift(profile: &UserProfile, cfg: &DecayConfig) -> Option<ShiftReport> {
    let short = normalize(&profile.short_term);
    let long = normalize(&profile.long_term);
    if short.is_empty() || long.is_empty() {
        return None;
    }
    let distance = l1_distance(&short, &long);
    if distance <= cfg.shift_threshold {
        return None;
    }
    let rising_topics = short
        .iter()
        .filter(|(t, &s)| s - long.get(*t).copied().unwrap_or(0.0) > cfg.shift_threshold / 2.0)
        .map(|(t, _)| t.clone())
        .collect();
    Some(ShiftReport {
        user_id: profile.user_id.clone(),
        l1_distance: distance,
        rising_topics,
    })
}

/// Blended topic preference of one user, computed once per query.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PreferenceModel {
    blend: BTreeMap<String, f64>,
    pub shift: Option<ShiftReport>,
}

impl PreferenceModel {
    pub fn from_profile(profile: &UserProfile, cfg: &DecayConfig) -> Self {
        let short = normalize(&profile.short_term);
        let long = normalize(&profile.long_term);
        let mut blend: BTreeMap<String, f64> = BTreeMap::new();
        for (t, w) in short.iter().chain(long.iter()) {
            *blend.entry(t.clone()).or_default() += 0.5 * w;
        }
        let shift = detect_shift(profile, cfg);
        if let Some(report) = &shift {
            for t in &report.rising_topics {
                if let Some(w) = blend.get_mut(t) {
                    *w *= cfg.boost_factor;
                }
            }
            blend = normalize(&blend);
        }
        Self { blend, shift }
    }

    pub fn is_empty(&self) -> bool {
        self.blend.is_empty()
    }

    pub fn weight(&self, topic: &str) -> f64 {
        self.blend.get(topic).copied().unwrap_or(0.0)
    }

    pub fn score(&self, item: &NewsProfile) -> f64 {
        if self.blend.is_empty() {
            return 0.0;
        }
        let p = if item.topic_vector.is_zero() {
            self.weight(&item.category)
        } else {
            item.topic_vector.iter().map(|(t, w)| w * self.weight(t)).sum()
        };
        p.clamp(0.0, 1.0)
    }
}

pub fn preference_score(item: &NewsProfile, profile: &UserProfile, cfg: &DecayConfig) -> f64 {
    PreferenceModel::from_profile(profile, cfg).score(item)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::content::TopicVector;
    use crate::geo::GeoPoint;
    use proptest::prelude::*;

    fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(t, w)| (t.to_string(), *w)).collect()
    }

    fn item(vector: TopicVector, category: &str) -> NewsProfile {
        NewsProfile {
            news_id: "n".into(),
            dominant_topic: vector.argmax().unwrap_or(category).to_string(),
            topic_vector: vector,
            category: category.into(),
            channel: String::new(),
            hashtags: Default::default(),
            location: GeoPoint { lat: 0.0, lon: 0.0 },
            created_at: "2024-01-01T00:00:00Z".parse().unwrap(),
            author_id: "a".into(),
        }
    }

    fn profile(short: &[(&str, f64)], long: &[(&str, f64)]) -> UserProfile {
        let mut p = UserProfile::new("u");
        p.short_term = map(short);
        p.long_term = map(long);
        p
    }

    #[test]
    fn bump_examples() {
        let mut m = BTreeMap::new();
        bump(&mut m, "food", 1.0, 0.0, 24.0);
        assert_eq!(m, map(&[("food", 1.0)]));

        bump(&mut m, "traffic", 1.0, 24.0, 24.0);
        assert_eq!(m, map(&[("food", 0.5), ("traffic", 1.0)]));

        bump(&mut m, "traffic", 0.0, 48.0, 24.0);
        assert_eq!(m, map(&[("food", 0.125), ("traffic", 0.25)]));
    }

    #[test]
    fn shift_examples() {
        let cfg = DecayConfig::default();
        assert_eq!(detect_shift(&profile(&[("food", 2.0)], &[("food", 7.0)]), &cfg), None);

        let report = detect_shift(&profile(&[("food", 1.0)], &[("traffic", 3.0)]), &cfg).unwrap();
        assert!((report.l1_distance - 2.0).abs() < 1e-12);
        assert_eq!(report.rising_topics, vec!["food".to_string()]);

        assert_eq!(detect_shift(&profile(&[], &[("traffic", 1.0)]), &cfg), None);
    }

    #[test]
    fn preference_examples() {
        let cfg = DecayConfig::default();
        let food = item(TopicVector::unit("food"), "food");
        assert_eq!(preference_score(&food, &UserProfile::new("u"), &cfg), 0.0);

        let aligned = profile(&[("food", 3.0)], &[("food", 1.0)]);
        assert!((preference_score(&food, &aligned, &cfg) - 1.0).abs() < 1e-12);

        let split = profile(&[("food", 1.0), ("traffic", 1.0)], &[("food", 2.0), ("traffic", 2.0)]);
        assert!((preference_score(&food, &split, &cfg) - 0.5).abs() < 1e-12);

        // zero vector falls back to the declared category
        let uncategorized = item(TopicVector::default(), "food");
        assert!((preference_score(&uncategorized, &split, &cfg) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rising_topic_is_boosted() {
        let cfg = DecayConfig::default();
        // short: all food; long: mostly traffic -> food rising
        let p = profile(&[("food", 1.0)], &[("traffic", 9.0), ("food", 1.0)]);
        let model = PreferenceModel::from_profile(&p, &cfg);
        assert!(model.shift.is_some());
        // blend before boost: food 0.55, traffic 0.45 -> food 0.825 / 1.275
        assert!((model.weight("food") - 0.825 / 1.275).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(DecayConfig::default().validate().is_ok());
        let bad = DecayConfig {
            short_half_life_hours: 800.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    fn arb_map() -> impl Strategy<Value = BTreeMap<String, f64>> {
        proptest::collection::btree_map("[a-e]", 0.0f64..10.0, 0..5)
    }

    proptest! {
        #[test]
        fn bump_keeps_weights_non_negative(mut m in arb_map(), w in 0.0f64..5.0, dt in 0.0f64..100.0) {
            let before: f64 = m.values().sum();
            bump(&mut m, "a", w, dt, 24.0);
            prop_assert!(m.values().all(|&x| x >= 0.0));
            prop_assert!(m.values().sum::<f64>() <= before + w + 1e-9);
        }

        #[test]
        fn distance_bounded_and_symmetric(a in arb_map(), b in arb_map()) {
            let (na, nb) = (normalize(&a), normalize(&b));
            let d = l1_distance(&na, &nb);
            prop_assert!((0.0..=2.0 + 1e-12).contains(&d));
            prop_assert!((d - l1_distance(&nb, &na)).abs() < 1e-12);
        }

        #[test]
        fn preference_in_unit_interval(s in arb_map(), l in arb_map(),
                                       w in proptest::collection::vec(0.0f64..3.0, 3)) {
            let v = TopicVector::from_counts([("a", w[0]), ("b", w[1]), ("c", w[2])]);
            let p = profile(&[], &[]);
            let p = UserProfile { short_term: s, long_term: l, ..p };
            let score = preference_score(&item(v, "d"), &p, &DecayConfig::default());
            prop_assert!((0.0..=1.0).contains(&score));
        }

        #[test]
        fn boost_never_lowers_rising_topic_relative(s in arb_map(), l in arb_map(),
                                                    ta in 0.0f64..1.0, tb in 0.0f64..1.0) {
            let p = UserProfile { short_term: s, long_term: l, ..UserProfile::new("u") };
            let boosted = DecayConfig::default();
            let flat = DecayConfig { boost_factor: 1.0, ..boosted.clone() };
            let Some(report) = detect_shift(&p, &boosted) else { return Ok(()); };
            let Some(rising) = report.rising_topics.first() else { return Ok(()); };
            let Some(other) = ["a", "b", "c", "d", "e"].into_iter().find(|t| !report.rising_topics.iter().any(|r| r == t)) else { return Ok(()); };
            let t_item = item(TopicVector::from_counts([(rising.as_str(), 1.0 + ta)]), "x");
            let o_item = item(TopicVector::from_counts([(other, 1.0 + tb)]), "x");
            let (mb, mf) = (PreferenceModel::from_profile(&p, &boosted), PreferenceModel::from_profile(&p, &flat));
            if mf.score(&t_item) >= mf.score(&o_item) {
                prop_assert!(mb.score(&t_item) >= mb.score(&o_item));
            }
            if mf.score(&t_item) > mf.score(&o_item) {
                prop_assert!(mb.score(&t_item) > mb.score(&o_item));
            }
        }
    }
}
