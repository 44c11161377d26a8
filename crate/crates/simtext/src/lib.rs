//! Scene-text detection toolkit built around similarity-transform region
//! masks.
//!
//! The crate covers the full label-to-detection loop:
//!
//! * [`geometry`] — polygon shrink/expand transforms and offset outlines;
//! * [`raster`] — rasterization, connected components, border tracing;
//! * [`pipeline`] — training-label generation and contour reconstruction;
//! * [`losses`] — feature refinement, center-similarity mining, and
//!   hard-example binary cross-entropy with gradients;
//! * [`eval`] — detection matching, precision/recall/F-measure, and a
//!   post-processing benchmark harness;
//! * [`formats`] — annotation, detection, feature-map, and image file I/O;
//! * [`synth`] — seeded synthetic scenes and motion blur;
//! * [`cli`] — the `simtext` command-line front end.
//!
//! The runnable examples under `examples/` demonstrate each capability
//! end to end.

pub mod cli;
pub mod error;
pub mod eval;
pub mod formats;
pub mod geometry;
pub mod losses;
pub mod pipeline;
pub mod raster;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{Point2, Polygon};
pub use raster::{BinaryMask, ProbMap};
