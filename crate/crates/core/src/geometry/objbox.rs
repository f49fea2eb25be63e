use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use super::{GeometryError, SphericalPolygon, Vec3};

/// Minimum distance between the origin and a box surface for the box to have
/// a well-defined projection.
pub const ORIGIN_CLEARANCE: f64 = 1e-6;

/// Faces whose plane passes within this distance of the origin are edge-on
/// and classified back-facing.
const FACE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObjectClass {
    Car,
    Pedestrian,
    Cyclist,
    Other,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 4] = [
        ObjectClass::Car,
        ObjectClass::Pedestrian,
        ObjectClass::Cyclist,
        ObjectClass::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectClass::Car => "Car",
            ObjectClass::Pedestrian => "Pedestrian",
            ObjectClass::Cyclist => "Cyclist",
            ObjectClass::Other => "Other",
        }
    }

    /// Maps a free-form type name (e.g. a KITTI `type` field); anything that
    /// is not one of the three evaluated classes becomes `Other`.
    pub fn from_type_name(name: &str) -> Self {
        match name {
            "Car" => ObjectClass::Car,
            "Pedestrian" => ObjectClass::Pedestrian,
            "Cyclist" => ObjectClass::Cyclist,
            _ => ObjectClass::Other,
        }
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObjectClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Car" => Ok(ObjectClass::Car),
            "Pedestrian" => Ok(ObjectClass::Pedestrian),
            "Cyclist" => Ok(ObjectClass::Cyclist),
            "Other" => Ok(ObjectClass::Other),
            other => Err(format!("unknown class {other:?}")),
        }
    }
}

/// Box extents in meters: length along the heading, width to the left,
/// height along ego up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dims {
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

impl Dims {
    pub const fn new(length: f64, width: f64, height: f64) -> Self {
        Self {
            length,
            width,
            height,
        }
    }

    #[inline]
    pub fn half_extents(&self) -> Vec3 {
        Vec3::new(0.5 * self.length, 0.5 * self.width, 0.5 * self.height)
    }

    #[inline]
    pub fn volume(&self) -> f64 {
        self.length * self.width * self.height
    }
}

/// Wraps an angle into `[-π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let tau = 2.0 * PI;
    let wrapped = angle - tau * (angle / tau).round();
    wrapped.clamp(-PI, PI)
}

/// An oriented 3D box in the ego frame, rotated by `yaw` about ego up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectBox {
    pub id: u64,
    pub class: ObjectClass,
    pub center: Vec3,
    pub dims: Dims,
    pub yaw: f64,
}

impl ObjectBox {
    pub fn new(
        id: u64,
        class: ObjectClass,
        center: Vec3,
        dims: Dims,
        yaw: f64,
    ) -> Result<Self, GeometryError> {
        let b = Self {
            id,
            class,
            center,
            dims,
            yaw,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !self.center.is_finite() {
            return Err(GeometryError::InvalidBox(format!(
                "box {}: non-finite center",
                self.id
            )));
        }
        let Dims {
            length,
            width,
            height,
        } = self.dims;
        if !(length > 0.0 && width > 0.0 && height > 0.0)
            || !(length.is_finite() && width.is_finite() && height.is_finite())
        {
            return Err(GeometryError::InvalidBox(format!(
                "box {}: dimensions must be positive, got ({length}, {width}, {height})",
                self.id
            )));
        }
        if !(-PI..=PI).contains(&self.yaw) {
            return Err(GeometryError::InvalidBox(format!(
                "box {}: yaw {} outside [-pi, pi]",
                self.id, self.yaw
            )));
        }
        Ok(())
    }

    /// Euclidean distance from the origin to the box center.
    #[inline]
    pub fn depth(&self) -> f64 {
        self.center.norm()
    }

    /// Expresses a world point in the box frame (centered, unrotated).
    #[inline]
    pub fn to_local(&self, p: Vec3) -> Vec3 {
        (p - self.center).rotate_z(-self.yaw)
    }

    /// Rotates a world direction into the box frame.
    #[inline]
    pub fn direction_to_local(&self, d: Vec3) -> Vec3 {
        d.rotate_z(-self.yaw)
    }

    #[inline]
    pub fn to_world(&self, local: Vec3) -> Vec3 {
        local.rotate_z(self.yaw) + self.center
    }

    /// Corner `k` has local sign `+` on axis `a` iff bit `a` of `k` is set.
    pub fn corners(&self) -> [Vec3; 8] {
        let h = self.dims.half_extents();
        std::array::from_fn(|k| {
            let local = Vec3::new(
                if k & 1 != 0 { h.x } else { -h.x },
                if k & 2 != 0 { h.y } else { -h.y },
                if k & 4 != 0 { h.z } else { -h.z },
            );
            self.to_world(local)
        })
    }

    /// Signed distance from the origin to the box surface (positive outside).
    pub fn origin_clearance(&self) -> f64 {
        let q = self.to_local(Vec3::ZERO);
        let h = self.dims.half_extents();
        let d = Vec3::new(q.x.abs() - h.x, q.y.abs() - h.y, q.z.abs() - h.z);
        let outside = Vec3::new(d.x.max(0.0), d.y.max(0.0), d.z.max(0.0)).norm();
        let inside = d.x.max(d.y).max(d.z).min(0.0);
        outside + inside
    }

    /// True when `p` lies within the box enlarged by `tol` on every side.
    pub fn contains_point(&self, p: Vec3, tol: f64) -> bool {
        let q = self.to_local(p);
        let h = self.dims.half_extents();
        q.x.abs() <= h.x + tol && q.y.abs() <= h.y + tol && q.z.abs() <= h.z + tol
    }

    /// Center and dimensions scaled by `s` about the origin.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            center: self.center * s,
            dims: Dims::new(
                self.dims.length * s,
                self.dims.width * s,
                self.dims.height * s,
            ),
            ..*self
        }
    }

    /// Box rotated about the ego up axis through the origin.
    pub fn rotated_z(&self, angle: f64) -> Self {
        Self {
            center: self.center.rotate_z(angle),
            yaw: wrap_angle(self.yaw + angle),
            ..*self
        }
    }

    pub fn silhouette(&self) -> Result<SphericalPolygon, GeometryError> {
        silhouette(self)
    }
}

/// Projection of the box onto the unit sphere around the origin.
///
/// The union of the six face projections of a convex box seen from outside
/// is the projection of its silhouette loop: the edges whose two adjacent
/// faces differ in front/back classification.
pub fn silhouette(b: &ObjectBox) -> Result<SphericalPolygon, GeometryError> {
    b.validate()?;
    let clearance = b.origin_clearance();
    if !(clearance > ORIGIN_CLEARANCE) {
        return Err(GeometryError::OriginInsideBox {
            clearance,
            margin: ORIGIN_CLEARANCE,
        });
    }

    let q = b.to_local(Vec3::ZERO);
    let h = b.dims.half_extents();
    let (q, h): ([f64; 3], [f64; 3]) = (q.into(), h.into());
    // front[axis][0] is the face at -h, front[axis][1] the face at +h.
    let front: [[bool; 2]; 3] =
        std::array::from_fn(|k| [-q[k] - h[k] > FACE_EPSILON, q[k] - h[k] > FACE_EPSILON]);

    let mut neighbors: [[usize; 2]; 8] = [[usize::MAX; 2]; 8];
    let mut degree = [0usize; 8];
    for axis in 0..3 {
        let (a, c) = ((axis + 1) % 3, (axis + 2) % 3);
        for sa in 0..2 {
            for sc in 0..2 {
                if front[a][sa] == front[c][sc] {
                    continue;
                }
                let base = (sa << a) | (sc << c);
                let (u, v) = (base, base | (1 << axis));
                for (x, y) in [(u, v), (v, u)] {
                    if degree[x] >= 2 {
                        return Err(GeometryError::InvalidBox(format!(
                            "box {}: malformed silhouette loop",
                            b.id
                        )));
                    }
                    neighbors[x][degree[x]] = y;
                    degree[x] += 1;
                }
            }
        }
    }

    let Some(start) = (0..8).find(|&k| degree[k] == 2) else {
        return Err(GeometryError::InvalidBox(format!(
            "box {}: empty silhouette",
            b.id
        )));
    };
    if degree.contains(&1) {
        return Err(GeometryError::InvalidBox(format!(
            "box {}: open silhouette loop",
            b.id
        )));
    }

    let corners = b.corners();
    let mut loop_vertices = vec![corners[start]];
    let (mut prev, mut current) = (start, neighbors[start][0]);
    while current != start {
        loop_vertices.push(corners[current]);
        let next = if neighbors[current][0] == prev {
            neighbors[current][1]
        } else {
            neighbors[current][0]
        };
        prev = current;
        current = next;
        if loop_vertices.len() > 8 {
            return Err(GeometryError::InvalidBox(format!(
                "box {}: silhouette loop does not close",
                b.id
            )));
        }
    }
    SphericalPolygon::new(loop_vertices)
}
