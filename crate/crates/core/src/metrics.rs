//! Scoring predicted visibilities against algorithmic ones.
//!
//! Predictions are first matched to ground-truth boxes (greedy, per class,
//! by footprint IoU); only the matched pairs are scored, with the absolute
//! error `|v_pred - v_algo|`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{ObjectBox, ObjectClass};
use crate::visibility::Scene;

pub const SUMMARY_HEADER: &str = "# boxvis-ae-summary v1 class,count,mean_ae";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IouKind {
    /// Overlap of the yaw-rotated ground footprints.
    #[default]
    Bev,
    /// Footprint overlap times vertical overlap, over the volume union.
    Full3D,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    pub iou_threshold: f64,
    pub iou_kind: IouKind,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.25,
            iou_kind: IouKind::Bev,
        }
    }
}

impl MatchConfig {
    pub fn new(iou_threshold: f64, iou_kind: IouKind) -> Result<Self, String> {
        if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
            return Err(format!("IoU threshold {iou_threshold} outside (0, 1]"));
        }
        Ok(Self {
            iou_threshold,
            iou_kind,
        })
    }
}

type P2 = (f64, f64);

fn footprint(b: &ObjectBox) -> [P2; 4] {
    let (s, c) = b.yaw.sin_cos();
    let (hl, hw) = (0.5 * b.dims.length, 0.5 * b.dims.width);
    // counterclockwise in the ground plane
    [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)]
        .map(|(u, v)| (b.center.x + c * u - s * v, b.center.y + s * u + c * v))
}

fn shoelace(poly: &[P2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
}

/// Sutherland–Hodgman: `subject` clipped by the convex counterclockwise `clip`.
fn convex_intersection(subject: &[P2], clip: &[P2]) -> Vec<P2> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let side = |p: P2| (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        let input = std::mem::take(&mut out);
        for k in 0..input.len() {
            let (p, q) = (input[k], input[(k + 1) % input.len()]);
            let (sp, sq) = (side(p), side(q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                let t = sp / (sp - sq);
                out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
            }
        }
    }
    out
}

fn bev_intersection(a: &ObjectBox, b: &ObjectBox) -> f64 {
    shoelace(&convex_intersection(&footprint(a), &footprint(b))).max(0.0)
}

pub fn box_iou(a: &ObjectBox, b: &ObjectBox, kind: IouKind) -> f64 {
    let inter = bev_intersection(a, b);
    let area_a = a.dims.length * a.dims.width;
    let area_b = b.dims.length * b.dims.width;
    let iou = match kind {
        IouKind::Bev => inter / (area_a + area_b - inter),
        IouKind::Full3D => {
            let top = (a.center.z + 0.5 * a.dims.height).min(b.center.z + 0.5 * b.dims.height);
            let bottom = (a.center.z - 0.5 * a.dims.height).max(b.center.z - 0.5 * b.dims.height);
            let inter_vol = inter * (top - bottom).max(0.0);
            inter_vol / (a.dims.volume() + b.dims.volume() - inter_vol)
        }
    };
    iou.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxMatch {
    pub pred_index: usize,
    pub gt_index: usize,
    pub pred_box_id: u64,
    pub gt_box_id: u64,
    pub class: ObjectClass,
    pub iou: f64,
}

/// Greedy one-to-one matching within each class, highest IoU first. Ties
/// are broken by input position, so the result only depends on input order.
pub fn match_true_positives(pred: &Scene, gt: &Scene, cfg: &MatchConfig) -> Vec<BoxMatch> {
    let mut candidates = Vec::new();
    for (pi, p) in pred.boxes.iter().enumerate() {
        for (gi, g) in gt.boxes.iter().enumerate() {
            if p.class != g.class {
                continue;
            }
            let iou = box_iou(p, g, cfg.iou_kind);
            if iou >= cfg.iou_threshold {
                candidates.push((iou, pi, gi));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut pred_used = vec![false; pred.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut out = Vec::new();
    for (iou, pi, gi) in candidates {
        if pred_used[pi] || gt_used[gi] {
            continue;
        }
        pred_used[pi] = true;
        gt_used[gi] = true;
        out.push(BoxMatch {
            pred_index: pi,
            gt_index: gi,
            pred_box_id: pred.boxes[pi].id,
            gt_box_id: gt.boxes[gi].id,
            class: gt.boxes[gi].class,
            iou,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPair {
    pub pred_box_id: u64,
    pub gt_box_id: u64,
    pub class: ObjectClass,
    pub iou: f64,
    pub v_pred: f64,
    pub v_algo: f64,
}

impl EvalPair {
    pub fn absolute_error(&self) -> f64 {
        absolute_error(self.v_pred, self.v_algo)
    }
}

#[inline]
pub fn absolute_error(v_pred: f64, v_algo: f64) -> f64 {
    (v_pred - v_algo).abs()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassSummary {
    pub count: usize,
    pub mean_ae: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AeSummary {
    /// Only classes with at least one pair appear.
    pub per_class: BTreeMap<ObjectClass, ClassSummary>,
    pub overall: Option<ClassSummary>,
}

impl AeSummary {
    pub fn total_pairs(&self) -> usize {
        self.overall.map_or(0, |o| o.count)
    }
}

/// Mean of `values`, summed in ascending order so the result does not
/// depend on the order pairs arrive in.
fn order_free_mean(mut values: Vec<f64>) -> Option<ClassSummary> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let count = values.len();
    Some(ClassSummary {
        count,
        mean_ae: values.iter().sum::<f64>() / count as f64,
    })
}

pub fn summarize(pairs: &[EvalPair]) -> AeSummary {
    let mut by_class: BTreeMap<ObjectClass, Vec<f64>> = BTreeMap::new();
    for p in pairs {
        by_class
            .entry(p.class)
            .or_default()
            .push(p.absolute_error());
    }
    AeSummary {
        per_class: by_class
            .into_iter()
            .filter_map(|(c, v)| order_free_mean(v).map(|s| (c, s)))
            .collect(),
        overall: order_free_mean(pairs.iter().map(EvalPair::absolute_error).collect()),
    }
}

/// Replaces every prediction with an independent uniform draw on `[0, 1]`.
pub fn random_baseline(pairs: &[EvalPair], seed: u64) -> Vec<EvalPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs
        .iter()
        .map(|p| EvalPair {
            v_pred: rng.gen::<f64>(),
            ..*p
        })
        .collect()
}

/// `E|U - v|` for `U ~ Uniform[0, 1]`, averaged over the given `v` values:
/// `v² - v + 1/2` per value.
pub fn expected_random_ae(v_algo: impl IntoIterator<Item = f64>) -> Option<f64> {
    let terms: Vec<f64> = v_algo.into_iter().map(|v| v * v - v + 0.5).collect();
    order_free_mean(terms).map(|s| s.mean_ae)
}

pub fn format_summary_table(summary: &AeSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<12} {:>8} {:>10}", "class", "pairs", "mean AE");
    for (class, c) in &summary.per_class {
        let _ = writeln!(
            s,
            "{:<12} {:>8} {:>10.6}",
            class.as_str(),
            c.count,
            c.mean_ae
        );
    }
    match summary.overall {
        Some(o) => {
            let _ = writeln!(s, "{:<12} {:>8} {:>10.6}", "All", o.count, o.mean_ae);
        }
        None => {
            let _ = writeln!(s, "{:<12} {:>8} {:>10}", "All", 0, "-");
        }
    }
    s
}

/// Machine-readable rows: one per class present, then `All`.
pub fn write_summary_rows<W: Write>(mut w: W, summary: &AeSummary) -> io::Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    for (class, c) in &summary.per_class {
        writeln!(w, "{},{},{:.6}", class, c.count, c.mean_ae)?;
    }
    if let Some(o) = summary.overall {
        writeln!(w, "All,{},{:.6}", o.count, o.mean_ae)?;
    } else {
        writeln!(w, "All,0,nan")?;
    }
    Ok(())
}
