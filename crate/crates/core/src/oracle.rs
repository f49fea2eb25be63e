//! Monte-Carlo estimates of solid angle and visibility by casting rays from
//! the origin.
//!
//! Directions are drawn uniformly inside a cap around the target box's corner
//! directions. The fraction of rays hitting the box, scaled by the cap area,
//! estimates its solid angle; the fraction of hitting rays that also hit a
//! closer box estimates the occluded share. Nothing here touches the
//! polygon code in [`crate::geometry`], so it serves as an independent check.
//!
//! Random streams come from ChaCha8 seeded with `seed`, one stream per box id
//! (`set_stream(id)`), so estimates do not depend on thread count or on the
//! order in which boxes are evaluated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{caps_disjoint, ObjectBox, SphericalCap, Vec3, ORIGIN_CLEARANCE};
use crate::visibility::{occluder_set, Scene};

/// Fewer hitting rays than this make a visibility estimate unreliable.
pub const MIN_HITS: u64 = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("origin lies inside box {0}")]
    OriginInsideBox(u64),
    #[error("only {hits} sampled rays hit box {box_id} (need {MIN_HITS})")]
    InsufficientHits { box_id: u64, hits: u64 },
    #[error("box index {index} out of range for a scene of {len} boxes")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("sample count must be positive")]
    NoSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleConfig {
    pub sample_count: u64,
    pub seed: u64,
}

/// A binomial estimate. `mean` is a fraction in `[0, 1]` for visibility and
/// a solid angle in steradians for [`estimate_solid_angle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples_hit: u64,
    pub samples_total: u64,
}

/// Box prepared for repeated ray tests from the origin.
#[derive(Debug, Clone, Copy)]
struct RayTarget {
    origin_local: Vec3,
    half: Vec3,
    cos_yaw: f64,
    sin_yaw: f64,
}

impl RayTarget {
    fn new(b: &ObjectBox) -> Self {
        Self {
            origin_local: b.to_local(Vec3::ZERO),
            half: b.dims.half_extents(),
            cos_yaw: b.yaw.cos(),
            sin_yaw: b.yaw.sin(),
        }
    }

    /// Slab test in the box frame for a ray leaving the origin.
    #[inline]
    fn hit(&self, dir: Vec3) -> Option<f64> {
        let local = Vec3::new(
            self.cos_yaw * dir.x + self.sin_yaw * dir.y,
            -self.sin_yaw * dir.x + self.cos_yaw * dir.y,
            dir.z,
        );
        slab(self.origin_local, local, self.half)
    }
}

#[inline]
fn slab(o: Vec3, d: Vec3, h: Vec3) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for (o, d, h) in [(o.x, d.x, h.x), (o.y, d.y, h.y), (o.z, d.z, h.z)] {
        if d == 0.0 {
            if o.abs() > h {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d;
        let t1 = (-h - o) * inv;
        let t2 = (h - o) * inv;
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        t_near = t_near.max(lo);
        t_far = t_far.min(hi);
    }
    let t = t_near.max(0.0);
    (t_far >= t).then_some(t)
}

/// Smallest `t >= 0` with `origin + t * dir` on or inside the box.
pub fn ray_box_intersect(origin: Vec3, dir: Vec3, b: &ObjectBox) -> Option<f64> {
    slab(
        b.to_local(origin),
        b.direction_to_local(dir),
        b.dims.half_extents(),
    )
}

/// Cap containing every corner direction of the box, hence its whole cone.
fn corner_cap(b: &ObjectBox) -> Option<SphericalCap> {
    let dirs: Vec<Vec3> = b
        .corners()
        .iter()
        .filter_map(|c| c.try_normalize())
        .collect();
    if dirs.len() < 8 {
        return None;
    }
    SphericalCap::around_directions(&dirs)
}

/// Uniform directions inside a cap.
struct CapSampler {
    axis: Vec3,
    e1: Vec3,
    e2: Vec3,
    /// `1 - cos(radius)`
    depth: f64,
}

impl CapSampler {
    fn new(cap: &SphericalCap) -> Self {
        let axis = cap.axis();
        let e1 = axis.any_orthogonal();
        let e2 = axis.cross(e1);
        let s = (0.5 * cap.angular_radius()).sin();
        Self {
            axis,
            e1,
            e2,
            depth: 2.0 * s * s,
        }
    }

    #[inline]
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec3 {
        // (u, v) uniform in the unit disk: s = u² + v² is uniform on [0, 1]
        // and (u, v) / sqrt(s) is a uniform azimuth.
        let (u, v, s) = loop {
            let u = 2.0 * rng.gen::<f64>() - 1.0;
            let v = 2.0 * rng.gen::<f64>() - 1.0;
            let s = u * u + v * v;
            if s <= 1.0 {
                break (u, v, s);
            }
        };
        // t = 1 - cos(theta), uniform on [0, 1 - cos(radius)]
        let t = self.depth * s;
        // sin(theta) / sqrt(s)
        let k = (self.depth * (2.0 - t)).max(0.0).sqrt();
        self.axis * (1.0 - t) + (self.e1 * u + self.e2 * v) * k
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Raw counts from one sampling pass over a target box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSample {
    pub cap_area: f64,
    pub total: u64,
    pub hits: u64,
    /// Hitting rays that also hit an occluder.
    pub covered: u64,
    /// Ids of occluders that covered at least one ray, nearest first.
    pub covering_ids: Vec<u64>,
}

impl BoxSample {
    pub fn solid_angle(&self) -> OracleEstimate {
        let p = self.hits as f64 / self.total as f64;
        OracleEstimate {
            mean: self.cap_area * p,
            std_error: self.cap_area * (p * (1.0 - p) / self.total as f64).sqrt(),
            samples_hit: self.hits,
            samples_total: self.total,
        }
    }

    pub fn visibility(&self) -> OracleEstimate {
        if self.hits == 0 {
            return OracleEstimate {
                mean: 0.0,
                std_error: 0.0,
                samples_hit: 0,
                samples_total: 0,
            };
        }
        let uncovered = self.hits - self.covered;
        let m = uncovered as f64 / self.hits as f64;
        OracleEstimate {
            mean: m,
            std_error: (m * (1.0 - m) / self.hits as f64).sqrt(),
            samples_hit: uncovered,
            samples_total: self.hits,
        }
    }
}

fn sample_target(
    target: &ObjectBox,
    occluders: &[&ObjectBox],
    cfg: OracleConfig,
) -> Result<BoxSample, OracleError> {
    if cfg.sample_count == 0 {
        return Err(OracleError::NoSamples);
    }
    if !(target.origin_clearance() > ORIGIN_CLEARANCE) {
        return Err(OracleError::OriginInsideBox(target.id));
    }
    let cap = corner_cap(target).ok_or(OracleError::OriginInsideBox(target.id))?;

    // Occluders whose corner cap misses the sampling cap can never be hit.
    let relevant: Vec<(u64, RayTarget)> = occluders
        .iter()
        .filter(|o| match corner_cap(o) {
            Some(c) => !caps_disjoint(&cap, &c),
            // origin inside the occluder: every ray starts inside it
            None => true,
        })
        .map(|o| (o.id, RayTarget::new(o)))
        .collect();
    let mut covering = vec![false; relevant.len()];

    let sampler = CapSampler::new(&cap);
    let target_ray = RayTarget::new(target);
    let mut rng = rng_for(cfg.seed, target.id);
    let (mut hits, mut covered) = (0u64, 0u64);
    for _ in 0..cfg.sample_count {
        let dir = sampler.sample(&mut rng);
        if target_ray.hit(dir).is_none() {
            continue;
        }
        hits += 1;
        if let Some(k) = relevant.iter().position(|(_, o)| o.hit(dir).is_some()) {
            covered += 1;
            covering[k] = true;
        }
    }
    Ok(BoxSample {
        cap_area: cap.area(),
        total: cfg.sample_count,
        hits,
        covered,
        covering_ids: relevant
            .iter()
            .zip(&covering)
            .filter(|(_, &c)| c)
            .map(|((id, _), _)| *id)
            .collect(),
    })
}

/// One sampling pass for box `i` against its occluder set. Which boxes count
/// as occluders follows the center-depth ordering, not per-ray hit distance.
pub fn sample_box(scene: &Scene, i: usize, cfg: OracleConfig) -> Result<BoxSample, OracleError> {
    if i >= scene.len() {
        return Err(OracleError::IndexOutOfRange {
            index: i,
            len: scene.len(),
        });
    }
    let occluders: Vec<&ObjectBox> = occluder_set(scene, i)
        .into_iter()
        .map(|j| &scene.boxes[j])
        .collect();
    sample_target(&scene.boxes[i], &occluders, cfg)
}

/// Solid angle of a single box, in steradians.
pub fn estimate_solid_angle(
    b: &ObjectBox,
    cfg: OracleConfig,
) -> Result<OracleEstimate, OracleError> {
    Ok(sample_target(b, &[], cfg)?.solid_angle())
}

/// Visibility of box `i` in `scene`.
pub fn estimate_visibility(
    scene: &Scene,
    i: usize,
    cfg: OracleConfig,
) -> Result<OracleEstimate, OracleError> {
    let s = sample_box(scene, i, cfg)?;
    if s.hits < MIN_HITS {
        return Err(OracleError::InsufficientHits {
            box_id: scene.boxes[i].id,
            hits: s.hits,
        });
    }
    Ok(s.visibility())
}

/// Estimates `area(cap) * P(inside(dir))` for directions uniform in `cap`.
/// Exposed for testing the sampler on shapes other than boxes.
pub fn estimate_cap_measure(
    cap: &SphericalCap,
    cfg: OracleConfig,
    stream: u64,
    inside: impl Fn(Vec3) -> bool,
) -> OracleEstimate {
    let sampler = CapSampler::new(cap);
    let mut rng = rng_for(cfg.seed, stream);
    let hits = (0..cfg.sample_count)
        .filter(|_| inside(sampler.sample(&mut rng)))
        .count() as u64;
    BoxSample {
        cap_area: cap.area(),
        total: cfg.sample_count,
        hits,
        covered: 0,
        covering_ids: Vec::new(),
    }
    .solid_angle()
}
