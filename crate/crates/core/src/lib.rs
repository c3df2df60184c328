//! # hyperfeed
//!
//! A context-aware recommender for hyper-local, user-generated news.
//!
//! Posts carry a location and a creation time. A reader pulls a feed for
//! where they are now; the engine keeps only posts within a radius and age
//! window, scores them by learned topic preference, social proximity, recency
//! and trend, spreads topics out, and mixes in a little exploration. Every
//! read, like, comment, impression or dismissal updates the reader's profile
//! through a temporal-difference rule over topic-to-topic transitions.
//!
//! Modules, in pipeline order:
//!
//! - [`geo`] and [`model`]: coordinates, records, validation.
//! - [`content`]: keyword lexicon, topic vectors, item similarity.
//! - [`learner`]: Q-table user profiles and the update rule.
//! - [`change`]: short/long-term interest and shift detection.
//! - [`filter`]: radius/age filter behind a grid index.
//! - [`rank`]: factor scoring, diversity re-rank, epsilon-greedy selection.
//! - [`store`] and [`batch`]: JSON-lines logs, offline tables, online merge.
//! - [`engine`]: the in-process service; [`service`] puts HTTP in front of it.
//! - [`sim`]: synthetic users and log replay for measuring learning.
//!
//! See the crate's `examples/` directory for one runnable program per capability.

// Range checks are written `!(x > 0.0)` on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod change;
pub mod config;
pub mod content;
pub mod engine;
pub mod filter;
pub mod geo;
pub mod learner;
pub mod model;
pub mod rank;
pub mod service;
pub mod sim;
pub mod store;

pub use content::{NewsProfile, TopicLexicon, TopicVector};
pub use engine::{Engine, EngineConfig, EngineError, RecommendRequest};
pub use geo::{haversine_km, GeoPoint};
pub use learner::{LearnerConfig, UserProfile};
pub use model::{EventKind, NewsItem, SocialGraph, Timestamp, UsageEvent};
pub use rank::{Recommendation, RankWeights};
