//! Great-circle geometry on a spherical Earth.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Mean Earth radius in kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Kilometers spanned by one degree of latitude (and of longitude on the equator).
pub const KM_PER_DEGREE: f64 = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;

/// A position in decimal degrees.
///
/// Construct through [`GeoPoint::new`] to get range checking. Serializes with at
/// least six fractional digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum GeoError {
    #[error("latitude out of range")]
    Latitude,
    #[error("longitude out of range")]
    Longitude,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::Latitude);
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::Longitude);
        }
        Ok(Self { lat, lon })
    }

    pub fn is_valid(&self) -> bool {
        Self::new(self.lat, self.lon).is_ok()
    }

    /// Point reached by travelling `distance_km` from `self` along the initial
    /// `bearing_deg` (clockwise from north).
    pub fn destination(&self, bearing_deg: f64, distance_km: f64) -> GeoPoint {
        let delta = distance_km / EARTH_RADIUS_KM;
        let theta = bearing_deg.to_radians();
        let phi1 = self.lat.to_radians();
        let lambda1 = self.lon.to_radians();
        let phi2 = (phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * theta.cos()).asin();
        let lambda2 = lambda1
            + (theta.sin() * delta.sin() * phi1.cos()).atan2(delta.cos() - phi1.sin() * phi2.sin());
        let mut lon = lambda2.to_degrees();
        if lon > 180.0 {
            lon -= 360.0;
        } else if lon < -180.0 {
            lon += 360.0;
        }
        GeoPoint {
            lat: phi2.to_degrees(),
            lon,
        }
    }
}

/// Haversine distance in kilometers.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Formats a coordinate with at least six fractional digits, adding more only
/// when six would not round-trip.
fn format_degrees(v: f64) -> String {
    let six = format!("{v:.6}");
    if six.parse::<f64>().ok() == Some(v) {
        return six;
    }
    let shortest = format!("{v}");
    match shortest.split_once('.') {
        Some((_, frac)) if frac.len() >= 6 => shortest,
        _ => six,
    }
}

impl Serialize for GeoPoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::{Error, SerializeStruct};
        let raw = |v: f64| {
            serde_json::value::RawValue::from_string(format_degrees(v)).map_err(S::Error::custom)
        };
        let mut st = serializer.serialize_struct("GeoPoint", 2)?;
        st.serialize_field("lat", &raw(self.lat)?)?;
        st.serialize_field("lon", &raw(self.lon)?)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for GeoPoint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            lat: f64,
            lon: f64,
        }
        let raw = Raw::deserialize(deserializer)?;
        GeoPoint::new(raw.lat, raw.lon).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn identical_points_are_zero_apart() {
        assert_eq!(haversine_km(pt(63.43, 10.39), pt(63.43, 10.39)), 0.0);
    }

    #[test]
    fn one_degree_on_equator() {
        let expected = 2.0 * std::f64::consts::PI * 6371.0 / 360.0;
        let d = haversine_km(pt(0.0, 0.0), pt(0.0, 1.0));
        assert!((d - expected).abs() < 1e-9);
        assert!((d - 111.195).abs() < 0.001);
    }

    #[test]
    fn trondheim_to_oslo() {
        // 391.480 km from an independent spherical-law script.
        let d = haversine_km(pt(63.4305, 10.3951), pt(59.9139, 10.7522));
        assert!((d - 392.0).abs() <= 1.0, "{d}");
        assert!((d - 391.480_156_9).abs() < 1e-6, "{d}");
    }

    #[test]
    fn rejects_out_of_range() {
        assert_eq!(GeoPoint::new(91.0, 0.0), Err(GeoError::Latitude));
        assert_eq!(GeoPoint::new(0.0, -180.5), Err(GeoError::Longitude));
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn destination_round_trips_distance() {
        let origin = pt(63.4305, 10.3951);
        for bearing in [0.0, 45.0, 90.0, 180.0, 270.0] {
            let p = origin.destination(bearing, 5.0);
            assert!((haversine_km(origin, p) - 5.0).abs() < 1e-9);
        }
    }

    #[test]
    fn serializes_with_six_fraction_digits() {
        let s = serde_json::to_string(&pt(63.43, 10.0)).unwrap();
        assert_eq!(s, r#"{"lat":63.430000,"lon":10.000000}"#);
        let precise = pt(63.430_512_345_678_9, -0.1);
        let back: GeoPoint = serde_json::from_str(&serde_json::to_string(&precise).unwrap()).unwrap();
        assert_eq!(back, precise);
    }

    fn point() -> impl Strategy<Value = GeoPoint> {
        (-90.0f64..=90.0, -180.0f64..=180.0).prop_map(|(lat, lon)| GeoPoint { lat, lon })
    }

    proptest! {
        #[test]
        fn symmetric(a in point(), b in point()) {
            prop_assert_eq!(haversine_km(a, b), haversine_km(b, a));
            prop_assert!(haversine_km(a, b) >= 0.0);
        }

        #[test]
        fn zero_iff_equal(a in point(), b in point()) {
            prop_assert!(haversine_km(a, a).abs() < 1e-9);
            if haversine_km(a, b) == 0.0 {
                prop_assert!((a.lat - b.lat).abs() < 1e-9);
            }
        }

        #[test]
        fn triangle_inequality(a in point(), b in point(), c in point()) {
            prop_assert!(haversine_km(a, c) <= haversine_km(a, b) + haversine_km(b, c) + 1e-6);
        }
    }
}
