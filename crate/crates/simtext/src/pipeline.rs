//! The two ends of the detector: turning annotations into training masks,
//! and turning predicted probability maps back into text polygons.
//!
//! Label generation shrinks every ground-truth polygon — either by the
//! similarity transform (vertex-mean scaling by δ) or by a perimeter-ratio
//! inward offset — and rasterizes the result. Reconstruction inverts that:
//! binarize, label components, trace each border, then expand the contour
//! back to full text extent, timing every stage along the way.
//!
//! One subtlety is owned here: traced contours sample border pixel
//! *centers*, which sit half a pixel inside the true region edge. Both
//! expansion methods first restore that half pixel (see
//! [`raster::dilate_contour`]) so the inverse transform reproduces the
//! original extent rather than a systematically shrunken one.

use crate::error::{Error, Result};
use crate::geometry::{
    clip_to_rect, offset_expand_distance, offset_shrink_distance, polygon_offset, simplify_closed,
    JoinStyle, Point2, Polygon,
};
use crate::raster::{
    self, binarize, connected_components, dilate_contour, rasterize, region_score, BinaryMask,
    ProbMap, HALF_PIXEL,
};
use std::str::FromStr;
use std::time::Instant;

/// Transcription marking an instance as don't-care for training and
/// evaluation.
pub const IGNORE_SENTINEL: &str = "###";

/// Shrink factor suited to line-level annotations.
pub const DELTA_LINE_LEVEL: f64 = 0.6;
/// Shrink factor suited to word-level annotations.
pub const DELTA_WORD_LEVEL: f64 = 0.5;
/// Default perimeter-ratio shrink strength for the offset baseline.
pub const DEFAULT_OFFSET_GAMMA: f64 = 0.4;
/// Default outward offset strength inverting [`DEFAULT_OFFSET_GAMMA`].
pub const DEFAULT_EXPAND_BETA: f64 = 1.5;
/// Default probability threshold for binarization.
pub const DEFAULT_BINARIZE_THRESH: f64 = 0.3;
/// Components below this pixel count are noise.
pub const DEFAULT_MIN_AREA: usize = 16;
/// Components at or below this mean probability are dropped.
pub const DEFAULT_SCORE_THRESH: f64 = 0.5;

/// One ground-truth text instance.
///
/// The don't-care flag is derived from the transcription at construction,
/// so `ignore() == (transcription() == IGNORE_SENTINEL)` always holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    polygon: Polygon,
    transcription: String,
    ignore: bool,
}

impl Annotation {
    pub fn new(polygon: Polygon, transcription: impl Into<String>) -> Annotation {
        let transcription = transcription.into();
        let ignore = transcription == IGNORE_SENTINEL;
        Annotation { polygon, transcription, ignore }
    }

    pub fn polygon(&self) -> &Polygon {
        &self.polygon
    }

    pub fn transcription(&self) -> &str {
        &self.transcription
    }

    pub fn ignore(&self) -> bool {
        self.ignore
    }
}

/// One detected text instance with its mean-probability confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub polygon: Polygon,
    /// Mean probability of the source component, in `[0, 1]`.
    pub score: f64,
}

/// How a traced contour is expanded back to full text extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpandMethod {
    /// Scale about the vertex mean by `1/delta` — the exact inverse of the
    /// label-side shrink.
    Similar,
    /// Outward offset by `area * beta / perimeter` of the traced contour.
    Offset,
}

impl FromStr for ExpandMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<ExpandMethod> {
        match s {
            "similar" => Ok(ExpandMethod::Similar),
            "offset" => Ok(ExpandMethod::Offset),
            other => Err(Error::Parameter(format!(
                "unknown expand method {other:?} (expected \"similar\" or \"offset\")"
            ))),
        }
    }
}

impl std::fmt::Display for ExpandMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExpandMethod::Similar => "similar",
            ExpandMethod::Offset => "offset",
        })
    }
}

/// Knobs for [`reconstruct`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructConfig {
    /// Shrink factor the masks were generated with.
    pub delta: f64,
    /// Probability threshold (strictly greater keeps a pixel).
    pub binarize_thresh: f64,
    /// Minimum component pixel count.
    pub min_area: usize,
    /// Minimum mean component probability (strictly greater keeps it).
    pub score_thresh: f64,
    pub method: ExpandMethod,
    /// Outward offset strength; used by the offset method only.
    pub beta: f64,
}

impl Default for ReconstructConfig {
    fn default() -> ReconstructConfig {
        ReconstructConfig {
            delta: DELTA_LINE_LEVEL,
            binarize_thresh: DEFAULT_BINARIZE_THRESH,
            min_area: DEFAULT_MIN_AREA,
            score_thresh: DEFAULT_SCORE_THRESH,
            method: ExpandMethod::Similar,
            beta: DEFAULT_EXPAND_BETA,
        }
    }
}

impl ReconstructConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::Parameter(format!(
                "delta must lie in (0, 1], got {}",
                self.delta
            )));
        }
        if !(0.0..=1.0).contains(&self.binarize_thresh) {
            return Err(Error::Parameter(format!(
                "binarize threshold must lie in [0, 1], got {}",
                self.binarize_thresh
            )));
        }
        if !(0.0..=1.0).contains(&self.score_thresh) {
            return Err(Error::Parameter(format!(
                "score threshold must lie in [0, 1], got {}",
                self.score_thresh
            )));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Parameter(format!(
                "beta must be finite and non-negative, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Ground-truth masks for one image plus the count of instances that could
/// not contribute (degenerate or fully collapsed).
#[derive(Debug, Clone)]
pub struct LabelMasks {
    /// Union of shrunken non-ignored instances.
    pub gt: BinaryMask,
    /// Union of full-extent ignored instances.
    pub ignore: BinaryMask,
    /// Instances skipped with a warning.
    pub skipped: usize,
}

fn check_shrink_range(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must lie in (0, 1], got {v}")))
    }
}

/// Renders similarity-shrunk training masks: each kept polygon is scaled
/// about its vertex mean by `delta` and rasterized into `gt`; ignored
/// instances are rasterized at full extent into `ignore`.
pub fn generate_similar_label(
    anns: &[Annotation],
    delta: f64,
    height: usize,
    width: usize,
) -> Result<LabelMasks> {
    check_shrink_range("delta", delta)?;
    let mut masks = LabelMasks {
        gt: BinaryMask::new(height, width),
        ignore: BinaryMask::new(height, width),
        skipped: 0,
    };
    for ann in anns {
        if ann.ignore() {
            masks.ignore.or_with(&rasterize(ann.polygon(), height, width));
            continue;
        }
        if ann.polygon().area() <= f64::EPSILON {
            log::warn!("skipping degenerate instance {:?}", ann.transcription());
            masks.skipped += 1;
            continue;
        }
        let shrunk = ann.polygon().similar_shrink(delta)?;
        masks.gt.or_with(&rasterize(&shrunk, height, width));
    }
    Ok(masks)
}

/// Renders inward-offset training masks (the shrink-mask baseline): each
/// kept polygon moves inward by `area * (1 - gamma^2) / perimeter`.
pub fn generate_offset_label(
    anns: &[Annotation],
    gamma: f64,
    height: usize,
    width: usize,
) -> Result<LabelMasks> {
    check_shrink_range("gamma", gamma)?;
    let mut masks = LabelMasks {
        gt: BinaryMask::new(height, width),
        ignore: BinaryMask::new(height, width),
        skipped: 0,
    };
    for ann in anns {
        if ann.ignore() {
            masks.ignore.or_with(&rasterize(ann.polygon(), height, width));
            continue;
        }
        let d = match offset_shrink_distance(ann.polygon(), gamma) {
            Ok(d) => d,
            Err(_) => {
                log::warn!("skipping degenerate instance {:?}", ann.transcription());
                masks.skipped += 1;
                continue;
            }
        };
        let shrunk = polygon_offset(ann.polygon(), -d, JoinStyle::Round);
        if shrunk.is_empty() {
            log::warn!("instance {:?} collapsed at offset {d:.3}", ann.transcription());
            masks.skipped += 1;
            continue;
        }
        for piece in &shrunk {
            masks.gt.or_with(&rasterize(piece, height, width));
        }
    }
    Ok(masks)
}

/// Wall-clock per-stage timings from one [`reconstruct`] run, in
/// microseconds. Trace and expand are sampled once per instance; collect
/// these from single-threaded runs when benchmarking.
#[derive(Debug, Clone, Default)]
pub struct TimingReport {
    pub binarize_us: f64,
    pub components_us: f64,
    pub trace_samples_us: Vec<f64>,
    pub expand_samples_us: Vec<f64>,
    /// Instances that reached the trace stage.
    pub instances: usize,
}

impl TimingReport {
    pub fn trace_median_us(&self) -> f64 {
        median_of(&self.trace_samples_us)
    }

    pub fn expand_median_us(&self) -> f64 {
        median_of(&self.expand_samples_us)
    }
}

fn median_of(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    }
}

/// Recovers text polygons from a probability map.
///
/// Stages: binarize → connected components → per surviving component
/// (pixel count ≥ `min_area`, mean probability > `score_thresh`): trace the
/// border, restore the half-pixel extent, expand by the configured method,
/// and clip to the canvas. Detections come back sorted by descending score;
/// ties keep component order, so the output is fully deterministic.
pub fn reconstruct(m: &ProbMap, cfg: &ReconstructConfig) -> Result<(Vec<Detection>, TimingReport)> {
    cfg.validate()?;
    let mut report = TimingReport::default();
    let (height, width) = (m.height(), m.width());

    let t = Instant::now();
    let mask = binarize(m, cfg.binarize_thresh);
    report.binarize_us = t.elapsed().as_secs_f64() * 1e6;

    let t = Instant::now();
    let lr = connected_components(&mask);
    report.components_us = t.elapsed().as_secs_f64() * 1e6;

    let mut detections = Vec::new();
    for label in 1..=lr.count() as u32 {
        let info = *lr.region(label)?;
        if info.area < cfg.min_area {
            continue;
        }
        let score = region_score(m, &lr, label)?;
        if !(score > cfg.score_thresh) {
            continue;
        }

        let t = Instant::now();
        let traced = trace_timed(&lr, label)?;
        report.trace_samples_us.push(t.elapsed().as_secs_f64() * 1e6);
        report.instances += 1;

        let t = Instant::now();
        let expanded = expand_instance(&traced, cfg);
        report.expand_samples_us.push(t.elapsed().as_secs_f64() * 1e6);

        let Some(poly) = expanded else { continue };
        let Some(clipped) = clip_to_rect(&poly, width as f64, height as f64) else {
            continue;
        };
        detections.push(Detection { polygon: clipped, score });
    }
    detections.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok((detections, report))
}

fn trace_timed(lr: &raster::LabeledRegions, label: u32) -> Result<Vec<Point2>> {
    raster::trace_contour(lr, label)
}

/// Staircase-removal tolerance for the offset method; pixel-center traces
/// deviate at most ~0.71 px from the smooth boundary.
const OFFSET_SIMPLIFY_TOL: f64 = 1.0;

fn expand_instance(traced: &[Point2], cfg: &ReconstructConfig) -> Option<Polygon> {
    let restored = dilate_contour(traced, HALF_PIXEL).ok()?;
    let expanded = match cfg.method {
        ExpandMethod::Similar => restored.similar_expand(cfg.delta).ok()?,
        ExpandMethod::Offset => {
            // The area/perimeter ratio needs the true perimeter, not the
            // Manhattan-inflated staircase length of the pixel trace.
            let smooth = simplify_closed(&restored, OFFSET_SIMPLIFY_TOL);
            let d = offset_expand_distance(&smooth, cfg.beta).ok()?;
            polygon_offset(&smooth, d, JoinStyle::Round).into_iter().next()?
        }
    };
    if expanded.area() <= f64::EPSILON {
        return None;
    }
    Some(expanded)
}
