//! Comma-separated visibility rows.
//!
//! ```text
//! # boxvis-visibility v1 frame_id,box_id,class,x,y,z,l,w,h,yaw,omega_sr,visibility,degenerate
//! 000001,0,Car,10.000000,-2.000000,-0.750000,3.600000,1.600000,1.500000,-0.070796,0.054161262,1.000000,0
//! ```
//!
//! Positions, dimensions, yaw and visibility carry 6 decimals, the solid
//! angle 9. Degenerate rows write `nan` for both the solid angle and the
//! visibility.

use std::f64::consts::PI;
use std::io::{self, Write};

use super::{numbered_lines, ParseError};
use crate::geometry::{Dims, ObjectBox, ObjectClass, Vec3};
use crate::visibility::{Scene, VisibilityRecord};

pub const VISIBILITY_HEADER: &str =
    "# boxvis-visibility v1 frame_id,box_id,class,x,y,z,l,w,h,yaw,omega_sr,visibility,degenerate";
const FORMAT_TAG: &str = "boxvis-visibility v1";
const COLUMNS: usize = 13;

#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityRow {
    pub frame_id: String,
    pub object: ObjectBox,
    pub omega: f64,
    /// `None` exactly when `degenerate` is set.
    pub visibility: Option<f64>,
    pub degenerate: bool,
}

/// Frame ids are written unquoted, so separators are replaced.
pub fn sanitize_frame_id(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c == ',' || c.is_whitespace() {
                '_'
            } else {
                c
            }
        })
        .collect()
}

pub fn rows_from_records(scene: &Scene, records: &[VisibilityRecord]) -> Vec<VisibilityRow> {
    let frame_id = sanitize_frame_id(scene.frame_id.as_deref().unwrap_or(""));
    scene
        .boxes
        .iter()
        .zip(records)
        .map(|(b, r)| {
            debug_assert_eq!(b.id, r.box_id);
            VisibilityRow {
                frame_id: frame_id.clone(),
                object: *b,
                omega: r.omega,
                visibility: r.visibility,
                degenerate: r.degenerate,
            }
        })
        .collect()
}

pub fn format_row(row: &VisibilityRow) -> String {
    let b = &row.object;
    let (omega, vis) = match (row.degenerate, row.visibility) {
        (false, Some(v)) => (format!("{:.9}", row.omega), format!("{v:.6}")),
        _ => ("nan".to_string(), "nan".to_string()),
    };
    format!(
        "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{}",
        sanitize_frame_id(&row.frame_id),
        b.id,
        b.class,
        b.center.x,
        b.center.y,
        b.center.z,
        b.dims.length,
        b.dims.width,
        b.dims.height,
        b.yaw,
        omega,
        vis,
        u8::from(row.degenerate || row.visibility.is_none()),
    )
}

/// Writes the header followed by one line per row.
pub fn write_visibility_rows<W: Write>(
    mut w: W,
    rows: &[VisibilityRow],
    header: bool,
) -> io::Result<()> {
    if header {
        writeln!(w, "{VISIBILITY_HEADER}")?;
    }
    for row in rows {
        writeln!(w, "{}", format_row(row))?;
    }
    Ok(())
}

fn parse_row(text: &str, line: usize) -> Result<VisibilityRow, ParseError> {
    let fields: Vec<&str> = text.split(',').map(str::trim).collect();
    if fields.len() != COLUMNS {
        return Err(ParseError::new(
            line,
            None,
            format!("expected {COLUMNS} columns, found {}", fields.len()),
        ));
    }
    let num = |k: usize| -> Result<f64, ParseError> {
        fields[k].parse::<f64>().map_err(|_| {
            ParseError::new(line, Some(k + 1), format!("not a number: {:?}", fields[k]))
        })
    };
    let finite = |k: usize| -> Result<f64, ParseError> {
        let v = num(k)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ParseError::new(line, Some(k + 1), "value must be finite"))
        }
    };

    let box_id = fields[1]
        .parse::<u64>()
        .map_err(|_| ParseError::new(line, Some(2), format!("bad box id {:?}", fields[1])))?;
    let class: ObjectClass = fields[2]
        .parse()
        .map_err(|e: String| ParseError::new(line, Some(3), e))?;
    let center = Vec3::new(finite(3)?, finite(4)?, finite(5)?);
    let dims = Dims::new(finite(6)?, finite(7)?, finite(8)?);
    // 6-decimal rounding can push ±π just outside the valid range.
    let yaw = finite(9)?.clamp(-PI, PI);
    let degenerate = match fields[12] {
        "0" => false,
        "1" => true,
        other => {
            return Err(ParseError::new(
                line,
                Some(13),
                format!("degenerate flag must be 0 or 1, got {other:?}"),
            ))
        }
    };
    let (omega, visibility) = if degenerate {
        (0.0, None)
    } else {
        let omega = finite(10)?;
        if omega < 0.0 {
            return Err(ParseError::new(
                line,
                Some(11),
                "solid angle must be non-negative",
            ));
        }
        let v = num(11)?;
        if !(0.0..=1.0).contains(&v) {
            return Err(ParseError::new(
                line,
                Some(12),
                format!("visibility {v} outside [0, 1]"),
            ));
        }
        (omega, Some(v))
    };
    let object = ObjectBox::new(box_id, class, center, dims, yaw)
        .map_err(|e| ParseError::new(line, None, e.to_string()))?;
    Ok(VisibilityRow {
        frame_id: fields[0].to_string(),
        object,
        omega,
        visibility,
        degenerate,
    })
}

/// Parses visibility rows, either produced by this crate or by an external
/// predictor writing the same format. The first non-empty line must be the
/// versioned header; later `#` lines are comments.
pub fn parse_prediction_visibilities(bytes: &[u8]) -> Result<Vec<VisibilityRow>, ParseError> {
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (line_no, line) in numbered_lines(bytes) {
        let text = line?.trim();
        if text.is_empty() {
            continue;
        }
        if !saw_header {
            if !(text.starts_with('#') && text.contains(FORMAT_TAG)) {
                return Err(ParseError::new(
                    line_no,
                    None,
                    format!("missing '# {FORMAT_TAG}' header"),
                ));
            }
            saw_header = true;
            continue;
        }
        if text.starts_with('#') {
            continue;
        }
        rows.push(parse_row(text, line_no)?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(vis: Option<f64>) -> VisibilityRow {
        VisibilityRow {
            frame_id: "000007".into(),
            object: ObjectBox::new(
                3,
                ObjectClass::Pedestrian,
                Vec3::new(12.25, -3.5, -0.9),
                Dims::new(0.8, 0.6, 1.7),
                0.3,
            )
            .unwrap(),
            omega: 0.0123456789,
            visibility: vis,
            degenerate: vis.is_none(),
        }
    }

    fn doc(lines: &[&str]) -> String {
        let mut s = String::from(VISIBILITY_HEADER);
        for l in lines {
            s.push('\n');
            s.push_str(l);
        }
        s
    }

    #[test]
    fn visibility_one_accepted() {
        let line = format_row(&row(Some(1.0)));
        let rows = parse_prediction_visibilities(doc(&[&line]).as_bytes()).unwrap();
        assert_eq!(rows[0].visibility, Some(1.0));
    }

    #[test]
    fn out_of_range_visibility_rejected() {
        let line = format_row(&row(Some(1.0))).replace(",1.000000,0", ",1.300000,0");
        let err = parse_prediction_visibilities(doc(&[&line]).as_bytes()).unwrap_err();
        assert_eq!((err.line, err.field), (2, Some(12)));
    }

    #[test]
    fn degenerate_row_round_trip() {
        let line = format_row(&row(None));
        assert!(line.ends_with("nan,nan,1"));
        let rows = parse_prediction_visibilities(doc(&[&line]).as_bytes()).unwrap();
        assert!(rows[0].degenerate);
        assert_eq!(rows[0].visibility, None);
        assert_eq!(format_row(&rows[0]), line);
    }

    #[test]
    fn header_required() {
        let line = format_row(&row(Some(0.5)));
        let err = parse_prediction_visibilities(line.as_bytes()).unwrap_err();
        assert_eq!(err.line, 1);
    }

    #[test]
    fn malformed_rows() {
        for bad in [
            "a,b,c",
            "f,x,Car,1,2,3,1,1,1,0,0.1,0.5,0",
            "f,1,Truck,1,2,3,1,1,1,0,0.1,0.5,0",
            "f,1,Car,1,2,3,1,1,1,0,0.1,0.5,2",
        ] {
            assert!(
                parse_prediction_visibilities(doc(&[bad]).as_bytes()).is_err(),
                "{bad}"
            );
        }
    }

    #[test]
    fn yaw_at_pi_survives_rounding() {
        let mut r = row(Some(0.25));
        r.object.yaw = PI;
        let line = format_row(&r);
        let back = parse_prediction_visibilities(doc(&[&line]).as_bytes()).unwrap();
        assert_eq!(format_row(&back[0]), line);
    }

    #[test]
    fn frame_id_sanitized() {
        assert_eq!(sanitize_frame_id("a,b c"), "a_b_c");
    }
}
