//! Box and unit-sphere geometry.
//!
//! Everything here is an immutable value type plus pure functions, so it can
//! be shared freely across threads.

mod cap;
mod objbox;
mod polygon;
mod vec3;

pub use cap::{bounding_cap, caps_disjoint, SphericalCap};
pub use objbox::{silhouette, wrap_angle, Dims, ObjectBox, ObjectClass, ORIGIN_CLEARANCE};
pub use polygon::{
    clip, intersect, solid_angle, spherical_excess, subtract_from_fragments, subtract_with_overlap,
    GreatCircleHalfSpace, SphericalPolygon, Subtraction, CLIP_EPSILON, MIN_POLYGON_AREA,
};
pub use vec3::Vec3;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error(
        "origin lies inside or within {margin} m of the box surface (clearance {clearance:.3e} m)"
    )]
    OriginInsideBox { clearance: f64, margin: f64 },
    #[error("degenerate spherical polygon ({vertices} vertices, area {area:.3e} sr)")]
    DegeneratePolygon { vertices: usize, area: f64 },
    #[error("spherical polygon is not convex at edge {edge}")]
    NotConvex { edge: usize },
    #[error("spherical polygon does not fit in an open hemisphere")]
    NotInHemisphere,
    #[error("vertex {index} is zero or non-finite")]
    InvalidVertex { index: usize },
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("half-space normal must be a non-zero finite vector")]
    InvalidHalfSpace,
    #[error("cap radius {0} outside (0, pi]")]
    InvalidCap(f64),
}
