use std::f64::consts::PI;

use super::{GeometryError, SphericalPolygon, Vec3};

/// Slack added to bounding-cap radii so vertices sit strictly inside.
const CAP_SLACK: f64 = 1e-9;

/// The set of directions within `angular_radius` of `axis`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalCap {
    axis: Vec3,
    angular_radius: f64,
}

impl SphericalCap {
    pub fn new(axis: Vec3, angular_radius: f64) -> Result<Self, GeometryError> {
        if !(angular_radius > 0.0 && angular_radius <= PI) {
            return Err(GeometryError::InvalidCap(angular_radius));
        }
        let axis = axis
            .try_normalize()
            .ok_or(GeometryError::InvalidHalfSpace)?;
        Ok(Self {
            axis,
            angular_radius,
        })
    }

    /// Smallest cap around the normalized centroid of `directions` that
    /// contains all of them. Returns `None` when the centroid vanishes.
    pub fn around_directions(directions: &[Vec3]) -> Option<Self> {
        let axis = directions
            .iter()
            .fold(Vec3::ZERO, |acc, &v| acc + v)
            .try_normalize()?;
        let radius = directions
            .iter()
            .map(|&v| axis.angle_to(v))
            .fold(0.0, f64::max)
            + CAP_SLACK;
        Some(Self {
            axis,
            angular_radius: radius.min(PI),
        })
    }

    #[inline]
    pub fn axis(&self) -> Vec3 {
        self.axis
    }

    #[inline]
    pub fn angular_radius(&self) -> f64 {
        self.angular_radius
    }

    /// Area in steradians, `2π(1 − cos r)`.
    #[inline]
    pub fn area(&self) -> f64 {
        // 1 - cos r = 2 sin²(r/2), stable for small r.
        let s = (0.5 * self.angular_radius).sin();
        4.0 * PI * s * s
    }

    #[inline]
    pub fn contains(&self, direction: Vec3) -> bool {
        self.axis.angle_to(direction) <= self.angular_radius
    }
}

/// Bounding cap of a polygon: axis at the normalized vertex centroid, radius
/// the largest vertex angle plus a small slack.
pub fn bounding_cap(poly: &SphericalPolygon) -> SphericalCap {
    SphericalCap::around_directions(poly.vertices())
        .expect("a valid spherical polygon has a non-vanishing vertex centroid")
}

/// Conservative disjointness: axes further apart than the summed radii.
#[inline]
pub fn caps_disjoint(a: &SphericalCap, b: &SphericalCap) -> bool {
    a.axis.angle_to(b.axis) > a.angular_radius + b.angular_radius
}
