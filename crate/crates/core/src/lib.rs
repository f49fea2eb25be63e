//! Visibility of 3D bounding boxes by projection onto the unit sphere around
//! the ego origin.
//!
//! Each box is projected to a convex spherical polygon; its visibility is the
//! fraction of that polygon's solid angle not covered by the projections of
//! boxes whose centers are closer to the origin.
//!
//! - [`geometry`]: boxes, silhouettes, spherical polygons, clipping, caps.
//! - [`visibility`]: occluder ordering and the exact/pruned/Monte-Carlo engines.
//! - [`oracle`]: seeded ray-sampling estimator used as an independent check.
//! - [`ingest`]: KITTI label parsing and the visibility interchange format.
//! - [`metrics`]: true-positive matching and absolute-error summaries.
//! - [`bench`]: synthetic scenes and runtime scaling measurements.
//! - [`cli`]: the `boxvis` command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > y)` also rejects NaN

pub mod bench;
pub mod cli;
pub mod geometry;
pub mod ingest;
pub mod metrics;
pub mod oracle;
pub mod visibility;
