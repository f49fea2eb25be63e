use std::f64::consts::FRAC_PI_2;

use log::debug;

use super::{numbered_lines, ParseError};
use crate::geometry::{wrap_angle, Dims, ObjectBox, ObjectClass, Vec3};
use crate::visibility::Scene;

/// How label coordinates map into the ego frame (x forward, y left, z up).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FrameConvention {
    /// KITTI camera frame (x right, y down, z forward) with bottom-center
    /// locations: `x_ego = z_cam`, `y_ego = -x_cam`, `z_ego = -y_cam`, then the
    /// center is lifted by half the height, and `yaw = -rotation_y - π/2`.
    #[default]
    KittiCamera,
    /// Locations are already ego-frame geometric centers and `rotation_y` is
    /// the ego yaw.
    EgoDirect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrameConfig {
    pub convention: FrameConvention,
}

impl FrameConfig {
    pub fn new(convention: FrameConvention) -> Self {
        Self { convention }
    }
}

/// One whitespace-separated KITTI object line.
#[derive(Debug, Clone, PartialEq)]
pub struct KittiLabelLine {
    pub type_name: String,
    pub truncated: f64,
    pub occluded: i64,
    pub alpha: f64,
    pub bbox2d: [f64; 4],
    /// Height, width, length in meters.
    pub dimensions: [f64; 3],
    /// Bottom-face center in the camera frame.
    pub location: [f64; 3],
    pub rotation_y: f64,
    /// Present only on prediction lines.
    pub score: Option<f64>,
}

impl KittiLabelLine {
    pub fn parse(text: &str, line: usize) -> Result<Self, ParseError> {
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 15 && fields.len() != 16 {
            return Err(ParseError::new(
                line,
                None,
                format!("expected 15 or 16 fields, found {}", fields.len()),
            ));
        }
        let num = |k: usize| -> Result<f64, ParseError> {
            fields[k].parse::<f64>().map_err(|_| {
                ParseError::new(line, Some(k + 1), format!("not a number: {:?}", fields[k]))
            })
        };
        let occluded = match fields[2].parse::<i64>() {
            Ok(v) => v,
            Err(_) => {
                let v = num(2)?;
                if v.fract() != 0.0 || !v.is_finite() {
                    return Err(ParseError::new(
                        line,
                        Some(3),
                        "occluded must be an integer",
                    ));
                }
                v as i64
            }
        };
        Ok(Self {
            type_name: fields[0].to_string(),
            truncated: num(1)?,
            occluded,
            alpha: num(3)?,
            bbox2d: [num(4)?, num(5)?, num(6)?, num(7)?],
            dimensions: [num(8)?, num(9)?, num(10)?],
            location: [num(11)?, num(12)?, num(13)?],
            rotation_y: num(14)?,
            score: if fields.len() == 16 {
                Some(num(15)?)
            } else {
                None
            },
        })
    }

    pub fn is_dont_care(&self) -> bool {
        self.type_name == "DontCare"
    }

    /// Converts to an ego-frame box; fails if the box invariants do not hold.
    pub fn to_object_box(
        &self,
        id: u64,
        cfg: FrameConfig,
    ) -> Result<ObjectBox, crate::geometry::GeometryError> {
        let [h, w, l] = self.dimensions;
        let [x, y, z] = self.location;
        let (center, yaw) = match cfg.convention {
            FrameConvention::KittiCamera => (
                Vec3::new(z, -x, -y + 0.5 * h),
                wrap_angle(-self.rotation_y - FRAC_PI_2),
            ),
            FrameConvention::EgoDirect => (Vec3::new(x, y, z), wrap_angle(self.rotation_y)),
        };
        ObjectBox::new(
            id,
            ObjectClass::from_type_name(&self.type_name),
            center,
            Dims::new(l, w, h),
            yaw,
        )
    }
}

/// Something noteworthy about one input line.
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    /// Well-formed line deliberately not turned into a box.
    Skipped { line: usize, reason: String },
    /// Malformed line.
    Error(ParseError),
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Diagnostic::Skipped { line, reason } => write!(f, "line {line}: skipped: {reason}"),
            Diagnostic::Error(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedFrame {
    pub scene: Scene,
    /// Detection score per box (same order as `scene.boxes`).
    pub scores: Vec<Option<f64>>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ParsedFrame {
    pub fn errors(&self) -> impl Iterator<Item = &ParseError> {
        self.diagnostics.iter().filter_map(|d| match d {
            Diagnostic::Error(e) => Some(e),
            Diagnostic::Skipped { .. } => None,
        })
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }
}

/// Parses a KITTI label or prediction file.
///
/// Each line is handled on its own: malformed lines are reported as errors,
/// `DontCare` lines and boxes with invalid geometry are reported as skipped,
/// and every other line becomes a box whose id is its 0-based line index.
pub fn parse_kitti_labels(bytes: &[u8], cfg: FrameConfig) -> ParsedFrame {
    let mut out = ParsedFrame::default();
    for (line_no, line) in numbered_lines(bytes) {
        let text = match line {
            Ok(t) => t,
            Err(e) => {
                out.diagnostics.push(Diagnostic::Error(e));
                continue;
            }
        };
        if text.trim().is_empty() {
            continue;
        }
        let label = match KittiLabelLine::parse(text, line_no) {
            Ok(l) => l,
            Err(e) => {
                out.diagnostics.push(Diagnostic::Error(e));
                continue;
            }
        };
        if label.is_dont_care() {
            out.diagnostics.push(Diagnostic::Skipped {
                line: line_no,
                reason: "DontCare".into(),
            });
            continue;
        }
        match label.to_object_box((line_no - 1) as u64, cfg) {
            Ok(b) => {
                out.scene.boxes.push(b);
                out.scores.push(label.score);
            }
            Err(e) => out.diagnostics.push(Diagnostic::Skipped {
                line: line_no,
                reason: e.to_string(),
            }),
        }
    }
    for d in &out.diagnostics {
        debug!("{d}");
    }
    out
}
