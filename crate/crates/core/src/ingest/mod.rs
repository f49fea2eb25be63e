//! Reading KITTI label files and reading/writing the visibility interchange
//! format.

mod interchange;
mod kitti;

pub use interchange::{
    format_row, parse_prediction_visibilities, rows_from_records, sanitize_frame_id,
    write_visibility_rows, VisibilityRow, VISIBILITY_HEADER,
};
pub use kitti::{
    parse_kitti_labels, Diagnostic, FrameConfig, FrameConvention, KittiLabelLine, ParsedFrame,
};

use thiserror::Error;

/// A malformed input line. `line` is 1-based; `field` is the 1-based
/// column when one specific field is at fault.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}{}: {message}", field.map(|f| format!(", field {f}")).unwrap_or_default())]
pub struct ParseError {
    pub line: usize,
    pub field: Option<usize>,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(line: usize, field: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            line,
            field,
            message: message.into(),
        }
    }
}

/// Splits raw bytes into numbered lines, rejecting invalid UTF-8 per line.
pub(crate) fn numbered_lines(
    bytes: &[u8],
) -> impl Iterator<Item = (usize, Result<&str, ParseError>)> {
    bytes.split(|&b| b == b'\n').enumerate().map(|(k, raw)| {
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let line =
            std::str::from_utf8(raw).map_err(|_| ParseError::new(k + 1, None, "invalid UTF-8"));
        (k + 1, line)
    })
}
