//! Per-box visibility over a scene.
//!
//! A box's occluders are the boxes whose centers are closer to the origin.
//! The exact backends project the box, then subtract every occluder's full
//! projection in ascending depth order; visibility is the surviving fraction
//! of the box's solid angle.

use std::collections::HashSet;
use std::f64::consts::PI;

use log::warn;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{
    caps_disjoint, subtract_with_overlap, ObjectBox, SphericalCap, SphericalPolygon,
};
use crate::oracle::{self, OracleConfig};

/// Center depths closer than this are treated as ties and ordered by id.
pub const DEPTH_TIE_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("duplicate box id {0} in scene")]
    DuplicateId(u64),
    #[error("box index {index} out of range for a scene of {len} boxes")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("Monte-Carlo backend needs at least one sample")]
    NoSamples,
}

/// A set of boxes around the ego origin.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub boxes: Vec<ObjectBox>,
    pub frame_id: Option<String>,
}

impl Scene {
    pub fn new(boxes: Vec<ObjectBox>, frame_id: Option<String>) -> Result<Self, SceneError> {
        let mut seen = HashSet::with_capacity(boxes.len());
        for b in &boxes {
            if !seen.insert(b.id) {
                return Err(SceneError::DuplicateId(b.id));
            }
        }
        Ok(Self { boxes, frame_id })
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.boxes.iter().position(|b| b.id == id)
    }

    /// Every box rotated about ego up by `angle`.
    pub fn rotated_z(&self, angle: f64) -> Self {
        Self {
            boxes: self.boxes.iter().map(|b| b.rotated_z(angle)).collect(),
            frame_id: self.frame_id.clone(),
        }
    }

    /// Every center and dimension scaled by `s` about the origin.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            boxes: self.boxes.iter().map(|b| b.scaled(s)).collect(),
            frame_id: self.frame_id.clone(),
        }
    }

    fn check_index(&self, index: usize) -> Result<(), SceneError> {
        if index < self.boxes.len() {
            Ok(())
        } else {
            Err(SceneError::IndexOutOfRange {
                index,
                len: self.boxes.len(),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    /// Subtracts every closer box.
    NaiveQuadratic,
    /// Depth sort plus an azimuth-binned bounding-cap broad phase.
    CapPruned,
    /// Ray-sampling estimate from [`crate::oracle`].
    MonteCarlo { sample_count: u64, seed: u64 },
}

impl Backend {
    pub fn validate(&self) -> Result<(), SceneError> {
        match self {
            Backend::MonteCarlo {
                sample_count: 0, ..
            } => Err(SceneError::NoSamples),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Backend::NaiveQuadratic => "naive",
            Backend::CapPruned => "pruned",
            Backend::MonteCarlo { .. } => "mc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityRecord {
    pub box_id: u64,
    /// Solid angle of the box's projection, steradians.
    pub omega: f64,
    /// Portion of `omega` covered by the occluders' projections.
    pub occluded_omega: f64,
    /// `(omega - occluded_omega) / omega`; `None` for degenerate boxes.
    pub visibility: Option<f64>,
    /// Occluders whose projection overlapped this box's.
    pub occluder_ids: Vec<u64>,
    /// The origin is inside (or on) the box, so nothing is defined.
    pub degenerate: bool,
}

impl VisibilityRecord {
    fn degenerate(box_id: u64) -> Self {
        Self {
            box_id,
            omega: 0.0,
            occluded_omega: 0.0,
            visibility: None,
            occluder_ids: Vec::new(),
            degenerate: true,
        }
    }

    fn from_areas(box_id: u64, omega: f64, occluded: f64, occluder_ids: Vec<u64>) -> Self {
        let occluded = occluded.clamp(0.0, omega);
        let visibility = ((omega - occluded) / omega).clamp(0.0, 1.0);
        Self {
            box_id,
            omega,
            occluded_omega: occluded,
            visibility: Some(visibility),
            occluder_ids,
            degenerate: false,
        }
    }
}

/// True when box `j` precedes box `i` in the occlusion order.
#[inline]
fn is_closer(scene: &Scene, j: usize, i: usize) -> bool {
    let (bj, bi) = (&scene.boxes[j], &scene.boxes[i]);
    let (dj, di) = (bj.depth(), bi.depth());
    if (dj - di).abs() <= DEPTH_TIE_EPSILON {
        bj.id < bi.id
    } else {
        dj < di
    }
}

fn depth_order(scene: &Scene, indices: &mut [usize]) {
    indices.sort_by(|&a, &b| {
        let (ba, bb) = (&scene.boxes[a], &scene.boxes[b]);
        ba.depth().total_cmp(&bb.depth()).then(ba.id.cmp(&bb.id))
    });
}

/// Indices of the boxes that can occlude box `i`, nearest first.
pub fn occluder_set(scene: &Scene, i: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..scene.len())
        .filter(|&j| j != i && is_closer(scene, j, i))
        .collect();
    depth_order(scene, &mut out);
    out
}

/// Projection and bounding cap of every box, computed once per scene.
struct Projections {
    polygons: Vec<Option<SphericalPolygon>>,
    caps: Vec<Option<SphericalCap>>,
}

impl Projections {
    fn new(scene: &Scene) -> Self {
        let polygons: Vec<Option<SphericalPolygon>> = scene
            .boxes
            .iter()
            .map(|b| match b.silhouette() {
                Ok(p) => Some(p),
                Err(e) => {
                    warn!("box {}: {e}; skipped as target and occluder", b.id);
                    None
                }
            })
            .collect();
        let caps = polygons
            .iter()
            .map(|p| p.as_ref().map(crate::geometry::bounding_cap))
            .collect();
        Self { polygons, caps }
    }

    fn for_one(scene: &Scene, i: usize, occluders: &[usize]) -> Self {
        let mut polygons = vec![None; scene.len()];
        let mut caps = vec![None; scene.len()];
        for &k in occluders.iter().chain(std::iter::once(&i)) {
            match scene.boxes[k].silhouette() {
                Ok(p) => {
                    caps[k] = Some(crate::geometry::bounding_cap(&p));
                    polygons[k] = Some(p);
                }
                Err(e) if k != i => {
                    warn!("occluder {}: {e}; skipped", scene.boxes[k].id)
                }
                Err(_) => {}
            }
        }
        Self { polygons, caps }
    }
}

/// Subtracts each occluder's projection in turn. With `stop_when_hidden`
/// the scan ends once nothing of the target remains; the naive backend
/// always visits the whole occluder set.
fn exact_record(
    scene: &Scene,
    i: usize,
    projections: &Projections,
    occluders: impl IntoIterator<Item = usize>,
    stop_when_hidden: bool,
) -> VisibilityRecord {
    let target = &scene.boxes[i];
    let Some(poly) = projections.polygons[i].as_ref() else {
        return VisibilityRecord::degenerate(target.id);
    };
    let omega = poly.area();
    let mut fragments = vec![poly.clone()];
    let mut occluded = 0.0;
    let mut ids = Vec::new();
    for j in occluders {
        if stop_when_hidden && fragments.is_empty() {
            break;
        }
        let Some(occluder) = projections.polygons[j].as_ref() else {
            continue;
        };
        let step = subtract_with_overlap(&fragments, occluder);
        if step.overlapped {
            occluded += step.removed_area;
            ids.push(scene.boxes[j].id);
        }
        fragments = step.remaining;
    }
    VisibilityRecord::from_areas(target.id, omega, occluded, ids)
}

fn monte_carlo_record(scene: &Scene, i: usize, cfg: OracleConfig) -> VisibilityRecord {
    let id = scene.boxes[i].id;
    match oracle::sample_box(scene, i, cfg) {
        Ok(s) => {
            if s.hits < oracle::MIN_HITS {
                warn!(
                    "box {id}: only {} of {} rays hit; estimate unreliable",
                    s.hits, s.total
                );
            }
            if s.hits == 0 {
                return VisibilityRecord::degenerate(id);
            }
            let omega = s.solid_angle().mean;
            let visibility = s.visibility().mean;
            VisibilityRecord {
                box_id: id,
                omega,
                occluded_omega: omega * (1.0 - visibility),
                visibility: Some(visibility),
                occluder_ids: s.covering_ids,
                degenerate: false,
            }
        }
        Err(e) => {
            warn!("box {id}: {e}");
            VisibilityRecord::degenerate(id)
        }
    }
}

/// Visibility of box `i` alone.
pub fn visibility_one(
    scene: &Scene,
    i: usize,
    backend: Backend,
) -> Result<VisibilityRecord, SceneError> {
    scene.check_index(i)?;
    backend.validate()?;
    let record = match backend {
        Backend::MonteCarlo { sample_count, seed } => {
            monte_carlo_record(scene, i, OracleConfig { sample_count, seed })
        }
        Backend::NaiveQuadratic => {
            let occluders = occluder_set(scene, i);
            let projections = Projections::for_one(scene, i, &occluders);
            exact_record(scene, i, &projections, occluders, false)
        }
        Backend::CapPruned => {
            let occluders = occluder_set(scene, i);
            let projections = Projections::for_one(scene, i, &occluders);
            let kept: Vec<usize> = match projections.caps[i] {
                Some(target_cap) => occluders
                    .into_iter()
                    .filter(|&j| {
                        projections.caps[j].is_some_and(|cap| !caps_disjoint(&target_cap, &cap))
                    })
                    .collect(),
                None => Vec::new(),
            };
            exact_record(scene, i, &projections, kept, true)
        }
    };
    if record.degenerate {
        warn!(
            "box {}: origin inside box; visibility undefined",
            record.box_id
        );
    }
    Ok(record)
}

/// Visibility of every box, in input order, computed in parallel.
pub fn visibility_all(
    scene: &Scene,
    backend: Backend,
) -> Result<Vec<VisibilityRecord>, SceneError> {
    visibility_all_with(scene, backend, Execution::Parallel)
}

pub fn visibility_all_with(
    scene: &Scene,
    backend: Backend,
    execution: Execution,
) -> Result<Vec<VisibilityRecord>, SceneError> {
    backend.validate()?;
    let n = scene.len();
    let run = |f: &(dyn Fn(usize) -> VisibilityRecord + Sync)| -> Vec<VisibilityRecord> {
        match execution {
            Execution::Sequential => (0..n).map(f).collect(),
            Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
        }
    };

    let records = match backend {
        Backend::MonteCarlo { sample_count, seed } => {
            let cfg = OracleConfig { sample_count, seed };
            run(&|i| monte_carlo_record(scene, i, cfg))
        }
        Backend::NaiveQuadratic => {
            let projections = Projections::new(scene);
            let mut order: Vec<usize> = (0..n).collect();
            depth_order(scene, &mut order);
            run(&|i| {
                let occluders = order
                    .iter()
                    .copied()
                    .filter(|&j| j != i && is_closer(scene, j, i));
                exact_record(scene, i, &projections, occluders, false)
            })
        }
        Backend::CapPruned => {
            let projections = Projections::new(scene);
            let index = AzimuthIndex::new(scene, &projections.caps);
            run(&|i| {
                let Some(cap) = projections.caps[i] else {
                    return exact_record(scene, i, &projections, std::iter::empty(), true);
                };
                let candidates = index.candidates(i, &cap, |j| {
                    is_closer(scene, j, i)
                        && projections.caps[j].is_some_and(|c| !caps_disjoint(&cap, &c))
                });
                exact_record(scene, i, &projections, candidates, true)
            })
        }
    };
    for r in records.iter().filter(|r| r.degenerate) {
        warn!("box {}: origin inside box; visibility undefined", r.box_id);
    }
    Ok(records)
}

/// Azimuth interval `[lo, lo + width]` covered by a cap, or `None` when the
/// cap reaches a pole and so spans every azimuth.
fn azimuth_interval(cap: &SphericalCap) -> Option<(f64, f64)> {
    let a = cap.axis();
    let r = cap.angular_radius();
    let polar = a.x.hypot(a.y).atan2(a.z);
    if r >= polar || r >= PI - polar {
        return None;
    }
    let half = (r.sin() / polar.sin()).clamp(-1.0, 1.0).asin() + 1e-9;
    if half >= PI {
        return None;
    }
    let center = a.y.atan2(a.x);
    Some((center - half, 2.0 * half))
}

/// Boxes bucketed by the azimuth range their bounding cap covers. Two caps
/// can only intersect if their azimuth ranges overlap, so a target only has
/// to look at the buckets its own range touches.
struct AzimuthIndex {
    bins: Vec<Vec<usize>>,
    /// Boxes whose cap spans every azimuth.
    everywhere: Vec<usize>,
    rank: Vec<usize>,
}

impl AzimuthIndex {
    fn new(scene: &Scene, caps: &[Option<SphericalCap>]) -> Self {
        let n = scene.len();
        let bin_count = n.next_power_of_two().clamp(16, 4096);
        let mut bins = vec![Vec::new(); bin_count];
        let mut everywhere = Vec::new();

        let mut order: Vec<usize> = (0..n).collect();
        depth_order(scene, &mut order);
        let mut rank = vec![0; n];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }

        for &i in &order {
            let Some(cap) = caps[i].as_ref() else {
                continue;
            };
            match Self::bin_span(bin_count, cap) {
                None => everywhere.push(i),
                Some((first, count)) => {
                    for k in 0..count {
                        bins[(first + k) % bin_count].push(i);
                    }
                }
            }
        }
        Self {
            bins,
            everywhere,
            rank,
        }
    }

    /// First bin and number of consecutive bins (wrapping) touched by a cap.
    fn bin_span(bin_count: usize, cap: &SphericalCap) -> Option<(usize, usize)> {
        let (lo, width) = azimuth_interval(cap)?;
        let scale = bin_count as f64 / (2.0 * PI);
        let start = ((lo + PI) * scale).floor();
        let end = ((lo + width + PI) * scale).floor();
        let count = (end - start) as usize + 1;
        if count >= bin_count {
            return None;
        }
        let first = start.rem_euclid(bin_count as f64) as usize;
        Some((first, count))
    }

    /// Boxes sharing a bucket with `i` and passing `keep`, in depth order.
    fn candidates(&self, i: usize, cap: &SphericalCap, keep: impl Fn(usize) -> bool) -> Vec<usize> {
        let mut out: Vec<usize> = match Self::bin_span(self.bins.len(), cap) {
            None => (0..self.rank.len()).filter(|&j| j != i).collect(),
            Some((first, count)) => {
                let mut v = self.everywhere.clone();
                for k in 0..count {
                    v.extend_from_slice(&self.bins[(first + k) % self.bins.len()]);
                }
                v
            }
        };
        out.retain(|&j| j != i && keep(j));
        out.sort_unstable_by_key(|&j| self.rank[j]);
        out.dedup();
        out
    }
}
