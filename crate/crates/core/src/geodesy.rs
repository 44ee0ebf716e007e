//! Geodetic, ECEF and local East-North-Up coordinates.
//!
//! All conversions use SI doubles on an [`Ellipsoid`] (WGS-84 by default:
//! `a = 6378137.0 m`, `1/f = 298.257223563`). Scaled-integer GPS fields
//! (1e-7 degrees, millimetres) convert at the boundary through
//! [`Geodetic::from_scaled`] and [`Geodetic::to_scaled`].
//!
//! The inverse ECEF to geodetic conversion is Bowring's method followed by
//! two fixed-point refinements of the parametric latitude, which is well
//! below a micrometre for altitudes between -5 km and 50 km.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeodesyError {
    #[error("point is {norm:.3} m from the Earth's centre; geodetic coordinates are not defined there")]
    DegenerateEcef { norm: f64 },
    #[error("alignment reference lies on the vertical axis through the origin; bearing is undefined")]
    UndefinedBearing,
    #[error("latitude {0} outside [-90, 90]")]
    LatitudeOutOfRange(f64),
    #[error("longitude {0} outside (-180, 180]")]
    LongitudeOutOfRange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipsoid {
    pub a: f64,
    pub f: f64,
}

impl Ellipsoid {
    pub const WGS84: Ellipsoid = Ellipsoid {
        a: 6_378_137.0,
        f: 1.0 / 298.257_223_563,
    };

    pub fn b(&self) -> f64 {
        self.a * (1.0 - self.f)
    }

    /// First eccentricity squared.
    pub fn e2(&self) -> f64 {
        self.f * (2.0 - self.f)
    }

    /// Second eccentricity squared.
    pub fn ep2(&self) -> f64 {
        let e2 = self.e2();
        e2 / (1.0 - e2)
    }

    /// Prime-vertical radius of curvature at geodetic latitude `lat_rad`.
    pub fn prime_vertical_radius(&self, lat_rad: f64) -> f64 {
        let s = lat_rad.sin();
        self.a / (1.0 - self.e2() * s * s).sqrt()
    }
}

impl Default for Ellipsoid {
    fn default() -> Self {
        Self::WGS84
    }
}

/// Latitude/longitude in degrees, altitude in metres above the ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geodetic {
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

impl Geodetic {
    pub fn new(lat: f64, lon: f64, alt: f64) -> Result<Self, GeodesyError> {
        let g = Self { lat, lon, alt };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), GeodesyError> {
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(GeodesyError::LatitudeOutOfRange(self.lat));
        }
        if !(self.lon > -180.0 && self.lon <= 180.0) {
            return Err(GeodesyError::LongitudeOutOfRange(self.lon));
        }
        Ok(())
    }

    /// From MAVLink scaled units: 1e-7 degrees and millimetres.
    pub fn from_scaled(lat_1e7: i32, lon_1e7: i32, alt_mm: i32) -> Self {
        Self {
            lat: lat_1e7 as f64 * 1e-7,
            lon: lon_1e7 as f64 * 1e-7,
            alt: alt_mm as f64 * 1e-3,
        }
    }

    /// To MAVLink scaled units, rounding to nearest.
    pub fn to_scaled(&self) -> (i32, i32, i32) {
        (
            (self.lat * 1e7).round() as i32,
            (self.lon * 1e7).round() as i32,
            (self.alt * 1e3).round() as i32,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ecef {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Ecef {
    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(&self, other: &Ecef) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// East/North/Up offset in metres from a reference point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Enu {
    pub e: f64,
    pub n: f64,
    pub u: f64,
}

impl Enu {
    pub const fn new(e: f64, n: f64, u: f64) -> Self {
        Self { e, n, u }
    }

    pub fn horizontal_norm(&self) -> f64 {
        self.e.hypot(self.n)
    }

    pub fn distance(&self, other: &Enu) -> f64 {
        let (de, dn, du) = (self.e - other.e, self.n - other.n, self.u - other.u);
        (de * de + dn * dn + du * du).sqrt()
    }
}

pub fn geodetic_to_ecef(p: &Geodetic, ell: &Ellipsoid) -> Ecef {
    let lat = p.lat.to_radians();
    let lon = p.lon.to_radians();
    let n = ell.prime_vertical_radius(lat);
    let (slat, clat) = lat.sin_cos();
    let (slon, clon) = lon.sin_cos();
    Ecef {
        x: (n + p.alt) * clat * clon,
        y: (n + p.alt) * clat * slon,
        z: (n * (1.0 - ell.e2()) + p.alt) * slat,
    }
}

pub fn ecef_to_geodetic(q: &Ecef, ell: &Ellipsoid) -> Result<Geodetic, GeodesyError> {
    let norm = q.norm();
    if norm.is_nan() || norm < ell.a / 2.0 {
        return Err(GeodesyError::DegenerateEcef { norm });
    }
    let a = ell.a;
    let b = ell.b();
    let e2 = ell.e2();
    let ep2 = ell.ep2();
    let p = q.x.hypot(q.y);
    let lon = q.y.atan2(q.x);

    // Bowring's initial parametric latitude, then refine.
    let mut beta = (a * q.z).atan2(b * p);
    let mut lat = 0.0;
    for _ in 0..3 {
        let (sb, cb) = beta.sin_cos();
        lat = (q.z + ep2 * b * sb * sb * sb).atan2(p - e2 * a * cb * cb * cb);
        beta = ((1.0 - ell.f) * lat.sin()).atan2(lat.cos());
    }
    let (slat, clat) = lat.sin_cos();
    let alt = p * clat + q.z * slat - a * (1.0 - e2 * slat * slat).sqrt();

    let mut lon_deg = lon.to_degrees();
    if lon_deg <= -180.0 {
        lon_deg += 360.0;
    }
    Ok(Geodetic {
        lat: lat.to_degrees(),
        lon: lon_deg,
        alt,
    })
}

/// Rows of the ECEF-to-ENU rotation at `reference`.
fn enu_basis(reference: &Geodetic) -> [[f64; 3]; 3] {
    let (slat, clat) = reference.lat.to_radians().sin_cos();
    let (slon, clon) = reference.lon.to_radians().sin_cos();
    [
        [-slon, clon, 0.0],
        [-slat * clon, -slat * slon, clat],
        [clat * clon, clat * slon, slat],
    ]
}

pub fn ecef_to_enu(q: &Ecef, reference: &Geodetic, ell: &Ellipsoid) -> Enu {
    let origin = geodetic_to_ecef(reference, ell);
    let d = [q.x - origin.x, q.y - origin.y, q.z - origin.z];
    let r = enu_basis(reference);
    let dot = |row: &[f64; 3]| row[0] * d[0] + row[1] * d[1] + row[2] * d[2];
    Enu {
        e: dot(&r[0]),
        n: dot(&r[1]),
        u: dot(&r[2]),
    }
}

pub fn enu_to_ecef(v: &Enu, reference: &Geodetic, ell: &Ellipsoid) -> Ecef {
    let origin = geodetic_to_ecef(reference, ell);
    let r = enu_basis(reference);
    let l = [v.e, v.n, v.u];
    // Transpose of the ECEF-to-ENU rotation.
    let col = |j: usize| r[0][j] * l[0] + r[1][j] * l[1] + r[2][j] * l[2];
    Ecef {
        x: origin.x + col(0),
        y: origin.y + col(1),
        z: origin.z + col(2),
    }
}

pub fn geodetic_to_enu(p: &Geodetic, reference: &Geodetic, ell: &Ellipsoid) -> Enu {
    ecef_to_enu(&geodetic_to_ecef(p, ell), reference, ell)
}

pub fn enu_to_geodetic(v: &Enu, reference: &Geodetic, ell: &Ellipsoid) -> Result<Geodetic, GeodesyError> {
    ecef_to_geodetic(&enu_to_ecef(v, reference, ell), ell)
}

/// Rotation about Up that takes the horizontal bearing of `reference_point`
/// onto +East.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EastAlignment {
    cos: f64,
    sin: f64,
}

impl EastAlignment {
    pub fn new(reference_point: &Enu) -> Result<Self, GeodesyError> {
        let r = reference_point.horizontal_norm();
        if r.is_nan() || r <= 0.0 || r.is_infinite() {
            return Err(GeodesyError::UndefinedBearing);
        }
        // Rotating by -theta, theta = atan2(n, e).
        Ok(Self {
            cos: reference_point.e / r,
            sin: -reference_point.n / r,
        })
    }

    pub fn angle(&self) -> f64 {
        self.sin.atan2(self.cos)
    }

    pub fn apply(&self, p: &Enu) -> Enu {
        Enu {
            e: self.cos * p.e - self.sin * p.n,
            n: self.sin * p.e + self.cos * p.n,
            u: p.u,
        }
    }
}

pub fn align_to_east(track: &[Enu], reference_point: &Enu) -> Result<Vec<Enu>, GeodesyError> {
    let rot = EastAlignment::new(reference_point)?;
    Ok(track.iter().map(|p| rot.apply(p)).collect())
}
