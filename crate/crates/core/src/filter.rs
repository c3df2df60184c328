//! Spatio-temporal candidate filtering.
//!
//! [`GeoGridIndex`] buckets items into latitude bands `radius_km` tall, each band
//! split into equal longitude columns at least `radius_km` wide at the band's
//! most poleward neighbouring latitude. Any point within the radius of a query
//! therefore lies in the 3x3 neighbourhood of the query's cell. Items and
//! queries poleward of [`POLAR_CUTOFF_DEG`] bypass the grid.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::content::NewsProfile;
use crate::geo::{haversine_km, GeoPoint, EARTH_RADIUS_KM, KM_PER_DEGREE};
use crate::model::{hours_between, NewsId, Timestamp};

/// Latitude beyond which the grid falls back to a linear scan.
pub const POLAR_CUTOFF_DEG: f64 = 85.0;

/// Slack on the radius comparison absorbing floating-point rounding in the
/// haversine evaluation (one millimetre).
pub const RADIUS_TOLERANCE_KM: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub radius_km: f64,
    pub max_age_hours: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            radius_km: 5.0,
            max_age_hours: 24.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FilterError {
    #[error("index built for {index_km} km cells but queried with radius {query_km} km")]
    StaleIndex { index_km: f64, query_km: f64 },
    #[error("news `{0}` is already indexed")]
    DuplicateId(NewsId),
    #[error("invalid filter config: {0}")]
    InvalidConfig(&'static str),
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        if !(self.radius_km > 0.0 && self.radius_km.is_finite()) {
            return Err(FilterError::InvalidConfig("radius_km must be positive"));
        }
        if !(self.max_age_hours > 0.0 && self.max_age_hours.is_finite()) {
            return Err(FilterError::InvalidConfig("max_age_hours must be positive"));
        }
        Ok(())
    }
}

fn passes_at(location: GeoPoint, created_at: Timestamp, user_loc: GeoPoint, now: Timestamp, cfg: &FilterConfig) -> bool {
    hours_between(created_at, now) <= cfg.max_age_hours
        && haversine_km(user_loc, location) <= cfg.radius_km + RADIUS_TOLERANCE_KM
}

/// Whether an item is within the radius and age window; both bounds inclusive.
pub fn passes(item: &NewsProfile, user_loc: GeoPoint, now: Timestamp, cfg: &FilterConfig) -> bool {
    passes_at(item.location, item.created_at, user_loc, now, cfg)
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    id: NewsId,
    location: GeoPoint,
    created_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Slot {
    Cell(i64, i64),
    Polar,
}

/// Grid-bucketed positions of every live item.
#[derive(Debug, Clone)]
pub struct GeoGridIndex {
    cell_size_km: f64,
    band_deg: f64,
    cells: HashMap<(i64, i64), Vec<Entry>>,
    polar: Vec<Entry>,
    slots: HashMap<NewsId, Slot>,
}

impl GeoGridIndex {
    pub fn new(cell_size_km: f64) -> Self {
        assert!(cell_size_km > 0.0 && cell_size_km.is_finite());
        // Pad the band so a point exactly one radius away never skips a band.
        let reach = cell_size_km * (1.0 + 1e-9) + RADIUS_TOLERANCE_KM;
        Self {
            cell_size_km,
            band_deg: reach / KM_PER_DEGREE,
            cells: HashMap::new(),
            polar: Vec::new(),
            slots: HashMap::new(),
        }
    }

    pub fn for_config(cfg: &FilterConfig) -> Self {
        Self::new(cfg.radius_km)
    }

    pub fn cell_size_km(&self) -> f64 {
        self.cell_size_km
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.slots.contains_key(id)
    }

    fn band(&self, lat: f64) -> i64 {
        ((lat + 90.0) / self.band_deg).floor() as i64
    }

    /// Number of longitude columns in a band.
    fn columns(&self, band: i64) -> i64 {
        // Most poleward latitude across this band and its two neighbours.
        let lo = (band - 1) as f64 * self.band_deg - 90.0;
        let hi = (band + 2) as f64 * self.band_deg - 90.0;
        let extreme = lo.abs().max(hi.abs()).min(90.0);
        let cos = extreme.to_radians().cos();
        let reach = self.band_deg * KM_PER_DEGREE;
        // Largest longitude gap between two points within `reach` when both
        // latitudes are at most `extreme` in magnitude.
        let half = (reach / (2.0 * EARTH_RADIUS_KM)).sin() / cos;
        if !(half < 1.0) {
            return 1;
        }
        let width_deg = 2.0 * half.asin().to_degrees();
        ((360.0 / width_deg).floor() as i64).max(1)
    }

    fn column(&self, band: i64, lon: f64) -> i64 {
        let n = self.columns(band);
        let width = 360.0 / n as f64;
        (((lon + 180.0) / width).floor() as i64).rem_euclid(n)
    }

    fn slot_for(&self, p: GeoPoint) -> Slot {
        if p.lat.abs() > POLAR_CUTOFF_DEG {
            Slot::Polar
        } else {
            let band = self.band(p.lat);
            Slot::Cell(band, self.column(band, p.lon))
        }
    }

    fn insert_entry(&mut self, entry: Entry) -> Result<(), FilterError> {
        if self.slots.contains_key(&entry.id) {
            return Err(FilterError::DuplicateId(entry.id));
        }
        let slot = self.slot_for(entry.location);
        self.slots.insert(entry.id.clone(), slot);
        match slot {
            Slot::Polar => self.polar.push(entry),
            Slot::Cell(r, c) => self.cells.entry((r, c)).or_default().push(entry),
        }
        Ok(())
    }

    pub fn insert(&mut self, item: &NewsProfile) -> Result<(), FilterError> {
        self.insert_entry(Entry {
            id: item.news_id.clone(),
            location: item.location,
            created_at: item.created_at,
        })
    }

    pub fn insert_point(&mut self, id: NewsId, location: GeoPoint, created_at: Timestamp) -> Result<(), FilterError> {
        self.insert_entry(Entry {
            id,
            location,
            created_at,
        })
    }

    /// Removes every item created strictly before `cutoff`; returns how many.
    pub fn evict_older_than(&mut self, cutoff: Timestamp) -> usize {
        let mut removed = 0;
        let mut drop_from = |list: &mut Vec<Entry>, slots: &mut HashMap<NewsId, Slot>| {
            list.retain(|e| {
                let keep = e.created_at >= cutoff;
                if !keep {
                    slots.remove(&e.id);
                    removed += 1;
                }
                keep
            });
        };
        for list in self.cells.values_mut() {
            drop_from(list, &mut self.slots);
        }
        drop_from(&mut self.polar, &mut self.slots);
        self.cells.retain(|_, list| !list.is_empty());
        removed
    }

    fn for_each_entry(&self, mut f: impl FnMut(&Entry)) {
        self.cells.values().flatten().for_each(&mut f);
        self.polar.iter().for_each(f);
    }

    /// Ids of indexed items that [`passes`] the filter, sorted.
    pub fn query(&self, user_loc: GeoPoint, now: Timestamp, cfg: &FilterConfig) -> Result<Vec<NewsId>, FilterError> {
        if cfg.radius_km != self.cell_size_km {
            return Err(FilterError::StaleIndex {
                index_km: self.cell_size_km,
                query_km: cfg.radius_km,
            });
        }
        let mut out = Vec::new();
        let mut visit = |e: &Entry| {
            if passes_at(e.location, e.created_at, user_loc, now, cfg) {
                out.push(e.id.clone());
            }
        };
        if user_loc.lat.abs() > POLAR_CUTOFF_DEG {
            self.for_each_entry(visit);
        } else {
            let band = self.band(user_loc.lat);
            for b in band - 1..=band + 1 {
                let n = self.columns(b);
                let c = self.column(b, user_loc.lon);
                let mut cols = vec![(c - 1).rem_euclid(n), c, (c + 1).rem_euclid(n)];
                cols.sort_unstable();
                cols.dedup();
                for col in cols {
                    if let Some(list) = self.cells.get(&(b, col)) {
                        list.iter().for_each(&mut visit);
                    }
                }
            }
            self.polar.iter().for_each(visit);
        }
        out.sort_unstable();
        Ok(out)
    }
}
