//! WGS84 coordinates and great-circle distance on a spherical Earth.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("coordinate out of bounds: lat {latitude}, lon {longitude}")]
pub struct CoordinateOutOfBounds {
    pub latitude: f64,
    pub longitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoCoordinate {
    pub latitude: f64,
    pub longitude: f64,
}

impl GeoCoordinate {
    pub fn new(latitude: f64, longitude: f64) -> Result<Self, CoordinateOutOfBounds> {
        let c = GeoCoordinate { latitude, longitude };
        if c.in_bounds() {
            Ok(c)
        } else {
            Err(CoordinateOutOfBounds { latitude, longitude })
        }
    }

    pub fn in_bounds(&self) -> bool {
        self.latitude.is_finite()
            && self.longitude.is_finite()
            && (-90.0..=90.0).contains(&self.latitude)
            && (-180.0..=180.0).contains(&self.longitude)
    }

    /// Point reached by travelling `distance_m` along the initial bearing
    /// `bearing_deg` (clockwise from north) on the sphere.
    pub fn destination(&self, bearing_deg: f64, distance_m: f64) -> GeoCoordinate {
        let lat1 = self.latitude.to_radians();
        let lon1 = self.longitude.to_radians();
        let brg = bearing_deg.to_radians();
        let delta = distance_m / EARTH_RADIUS_M;

        let lat2 = (lat1.sin() * delta.cos() + lat1.cos() * delta.sin() * brg.cos()).asin();
        let lon2 = lon1 + (brg.sin() * delta.sin() * lat1.cos()).atan2(delta.cos() - lat1.sin() * lat2.sin());
        let mut lon2 = lon2.to_degrees();
        if lon2 > 180.0 {
            lon2 -= 360.0;
        } else if lon2 < -180.0 {
            lon2 += 360.0;
        }
        GeoCoordinate { latitude: lat2.to_degrees().clamp(-90.0, 90.0), longitude: lon2 }
    }
}

/// Haversine great-circle distance in meters.
pub fn haversine_distance(a: &GeoCoordinate, b: &GeoCoordinate) -> f64 {
    let phi1 = a.latitude.to_radians();
    let phi2 = b.latitude.to_radians();
    let dphi = (b.latitude - a.latitude).to_radians();
    let dlambda = (b.longitude - a.longitude).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}
