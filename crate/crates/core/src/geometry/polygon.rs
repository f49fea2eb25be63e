//! Convex spherical polygons with minor-arc edges, their areas, and clipping
//! against great-circle half-spaces.

use super::{GeometryError, Vec3};

/// Signed-distance band used when classifying vertices against a great circle.
pub const CLIP_EPSILON: f64 = 1e-9;

/// Polygons below this area (steradians) are treated as empty.
pub const MIN_POLYGON_AREA: f64 = 1e-12;

/// Consecutive clip output vertices closer than this (chord length) are merged.
const MERGE_DISTANCE: f64 = 1e-12;

/// The closed hemisphere `{p : dot(p, normal) >= -CLIP_EPSILON}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreatCircleHalfSpace {
    normal: Vec3,
}

impl GreatCircleHalfSpace {
    pub fn new(normal: Vec3) -> Result<Self, GeometryError> {
        if !normal.is_finite() {
            return Err(GeometryError::InvalidHalfSpace);
        }
        normal
            .try_normalize()
            .map(|normal| Self { normal })
            .ok_or(GeometryError::InvalidHalfSpace)
    }

    #[inline]
    pub fn normal(&self) -> Vec3 {
        self.normal
    }

    #[inline]
    pub fn signed_distance(&self, p: Vec3) -> f64 {
        p.dot(self.normal)
    }

    #[inline]
    pub fn contains(&self, p: Vec3) -> bool {
        self.signed_distance(p) >= -CLIP_EPSILON
    }

    /// The complementary half-space.
    #[inline]
    pub fn flipped(&self) -> Self {
        Self {
            normal: -self.normal,
        }
    }
}

/// A convex polygon on the unit sphere, vertices counterclockwise as seen
/// from outside, consecutive vertices joined by minor great-circle arcs.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalPolygon {
    vertices: Vec<Vec3>,
    area: f64,
}

impl SphericalPolygon {
    /// Validates and canonicalizes a vertex loop. Vertices are normalized,
    /// orientation is flipped to counterclockwise if needed, and convexity
    /// and hemisphere containment are checked.
    pub fn new(vertices: Vec<Vec3>) -> Result<Self, GeometryError> {
        let mut unit = Vec::with_capacity(vertices.len());
        for (index, v) in vertices.into_iter().enumerate() {
            if !v.is_finite() {
                return Err(GeometryError::InvalidVertex { index });
            }
            unit.push(
                v.try_normalize()
                    .ok_or(GeometryError::InvalidVertex { index })?,
            );
        }
        if unit.len() < 3 {
            return Err(GeometryError::DegeneratePolygon {
                vertices: unit.len(),
                area: 0.0,
            });
        }

        let centroid = unit
            .iter()
            .fold(Vec3::ZERO, |acc, &v| acc + v)
            .try_normalize()
            .ok_or(GeometryError::NotInHemisphere)?;
        if unit.iter().any(|v| v.dot(centroid) <= 0.0) {
            return Err(GeometryError::NotInHemisphere);
        }

        let mut signed = signed_fan_area(&unit);
        if signed < 0.0 {
            unit.reverse();
            signed = signed_fan_area(&unit);
        }

        let n = unit.len();
        for i in 0..n {
            let a = unit[i];
            let b = unit[(i + 1) % n];
            let Some(normal) = a.cross(b).try_normalize() else {
                return Err(GeometryError::NotConvex { edge: i });
            };
            let violates = unit
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i && k != (i + 1) % n)
                .any(|(_, v)| v.dot(normal) < -CLIP_EPSILON);
            if violates {
                return Err(GeometryError::NotConvex { edge: i });
            }
        }

        if !(signed >= MIN_POLYGON_AREA) {
            return Err(GeometryError::DegeneratePolygon {
                vertices: n,
                area: signed,
            });
        }
        Ok(Self {
            vertices: unit,
            area: signed,
        })
    }

    /// Builds a polygon from clip output. Vertices are already unit and
    /// counterclockwise; returns `None` when the result is empty or a sliver.
    fn from_clipped(mut vertices: Vec<Vec3>) -> Option<Self> {
        merge_close_vertices(&mut vertices);
        if vertices.len() < 3 {
            return None;
        }
        let area = signed_fan_area(&vertices);
        (area >= MIN_POLYGON_AREA).then_some(Self { vertices, area })
    }

    #[inline]
    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Area in steradians (equal to the solid angle subtended at the center).
    #[inline]
    pub fn area(&self) -> f64 {
        self.area
    }

    /// Iterator over the interior half-space of every edge.
    pub fn edge_half_spaces(&self) -> impl Iterator<Item = GreatCircleHalfSpace> + '_ {
        let n = self.vertices.len();
        (0..n).filter_map(move |i| {
            GreatCircleHalfSpace::new(self.vertices[i].cross(self.vertices[(i + 1) % n])).ok()
        })
    }

    /// True when `p` is inside or on the boundary (within the clip band).
    pub fn contains(&self, p: Vec3) -> bool {
        self.edge_half_spaces().all(|h| h.contains(p))
    }

    /// Same polygon with every vertex mapped through `f` (which must be a
    /// rotation for the result to stay meaningful).
    pub fn map_vertices(&self, f: impl Fn(Vec3) -> Vec3) -> Result<Self, GeometryError> {
        Self::new(self.vertices.iter().map(|&v| f(v)).collect())
    }
}

/// Spherical excess of a counterclockwise loop of unit vectors, summed over a
/// fan of triangles. Each triangle's excess comes from the half-angle tangent
/// identity `tan(E/2) = a.(b x c) / (1 + a.b + b.c + c.a)`, which stays
/// accurate for tiny triangles where the interior-angle sum would cancel.
fn signed_fan_area(vertices: &[Vec3]) -> f64 {
    let a = vertices[0];
    vertices[1..]
        .windows(2)
        .map(|w| {
            let (b, c) = (w[0], w[1]);
            let numer = a.dot(b.cross(c));
            let denom = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
            2.0 * numer.atan2(denom)
        })
        .sum()
}

fn merge_close_vertices(vertices: &mut Vec<Vec3>) {
    vertices.dedup_by(|b, a| (*b - *a).norm() < MERGE_DISTANCE);
    while vertices.len() > 1 {
        let first = vertices[0];
        let last = vertices[vertices.len() - 1];
        if (first - last).norm() < MERGE_DISTANCE {
            vertices.pop();
        } else {
            break;
        }
    }
}

/// Spherical excess of an arbitrary vertex loop, with the orientation
/// canonicalized so the value is positive.
pub fn spherical_excess(vertices: &[Vec3]) -> Result<f64, GeometryError> {
    if vertices.len() < 3 {
        return Err(GeometryError::DegeneratePolygon {
            vertices: vertices.len(),
            area: 0.0,
        });
    }
    let area = signed_fan_area(vertices).abs();
    if !(area >= MIN_POLYGON_AREA) {
        return Err(GeometryError::DegeneratePolygon {
            vertices: vertices.len(),
            area,
        });
    }
    Ok(area)
}

/// Solid angle in steradians subtended by `poly` at the sphere center.
pub fn solid_angle(poly: &SphericalPolygon) -> Result<f64, GeometryError> {
    if poly.len() < 3 || !(poly.area() >= MIN_POLYGON_AREA) {
        return Err(GeometryError::DegeneratePolygon {
            vertices: poly.len(),
            area: poly.area(),
        });
    }
    Ok(poly.area())
}

#[inline]
fn side(d: f64) -> i8 {
    if d > CLIP_EPSILON {
        1
    } else if d < -CLIP_EPSILON {
        -1
    } else {
        0
    }
}

/// Portion of `poly` inside `hs`, or `None` if that portion is empty.
pub fn clip(poly: &SphericalPolygon, hs: &GreatCircleHalfSpace) -> Option<SphericalPolygon> {
    let verts = poly.vertices();
    let dist: Vec<f64> = verts.iter().map(|&v| hs.signed_distance(v)).collect();
    let sides: Vec<i8> = dist.iter().map(|&d| side(d)).collect();

    if sides.iter().all(|&s| s >= 0) {
        return Some(poly.clone());
    }
    if sides.iter().all(|&s| s < 0) {
        return None;
    }

    let n = verts.len();
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..n {
        let j = (i + 1) % n;
        let (a, b) = (verts[i], verts[j]);
        let (sa, sb) = (sides[i], sides[j]);
        if sa >= 0 {
            out.push(a);
        }
        if sa * sb < 0 {
            let (da, db) = (dist[i], dist[j]);
            // Chord point on the plane; normalizing it lands on the minor arc.
            let p = (a * (-db) + b * da) / (da - db);
            out.push(p.normalize());
        }
    }
    SphericalPolygon::from_clipped(out)
}

/// Intersection of two convex polygons: `a` clipped by every edge of `b`.
pub fn intersect(a: &SphericalPolygon, b: &SphericalPolygon) -> Option<SphericalPolygon> {
    let mut current = a.clone();
    for hs in b.edge_half_spaces() {
        current = clip(&current, &hs)?;
    }
    Some(current)
}

/// Result of removing an occluder from a fragment set.
#[derive(Debug, Clone, Default)]
pub struct Subtraction {
    pub remaining: Vec<SphericalPolygon>,
    /// Area of `(union of fragments) ∩ occluder`, summed per fragment.
    pub removed_area: f64,
    /// Whether any fragment overlapped the occluder at all.
    pub overlapped: bool,
}

/// True when every vertex of `poly` lies strictly outside `hs`.
fn fully_outside(poly: &SphericalPolygon, hs: &GreatCircleHalfSpace) -> bool {
    poly.vertices()
        .iter()
        .all(|&v| hs.signed_distance(v) < -CLIP_EPSILON)
}

/// True when some edge in `edges` has all of `other` strictly outside it.
fn separated(edges: &[GreatCircleHalfSpace], other: &SphericalPolygon) -> bool {
    edges.iter().any(|h| fully_outside(other, h))
}

/// Removes `occluder` from a set of interior-disjoint convex fragments.
///
/// The complement of the occluder is split into edge-anchored wedges
/// (`outside(e_j) ∩ inside(e_1..e_{j-1})`) and each fragment is clipped by
/// every wedge, so the output stays a set of interior-disjoint convex pieces.
pub fn subtract_with_overlap(
    fragments: &[SphericalPolygon],
    occluder: &SphericalPolygon,
) -> Subtraction {
    let occluder_edges: Vec<GreatCircleHalfSpace> = occluder.edge_half_spaces().collect();
    let mut result = Subtraction {
        remaining: Vec::with_capacity(fragments.len()),
        ..Default::default()
    };

    for fragment in fragments {
        if separated(&occluder_edges, fragment) {
            result.remaining.push(fragment.clone());
            continue;
        }
        let fragment_edges: Vec<GreatCircleHalfSpace> = fragment.edge_half_spaces().collect();
        if separated(&fragment_edges, occluder) {
            result.remaining.push(fragment.clone());
            continue;
        }

        let mut inside = Some(fragment.clone());
        for edge in &occluder_edges {
            let Some(current) = inside.take() else { break };
            if let Some(piece) = clip(&current, &edge.flipped()) {
                result.remaining.push(piece);
            }
            inside = clip(&current, edge);
        }
        if let Some(covered) = inside {
            result.removed_area += covered.area();
            result.overlapped = true;
        }
    }
    result
}

/// Interior-disjoint convex pieces covering `(union of fragments) \ occluder`.
pub fn subtract_from_fragments(
    fragments: &[SphericalPolygon],
    occluder: &SphericalPolygon,
) -> Vec<SphericalPolygon> {
    subtract_with_overlap(fragments, occluder).remaining
}
