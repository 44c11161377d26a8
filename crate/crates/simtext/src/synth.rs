//! Deterministic synthetic scenes: seeded layouts of non-overlapping
//! rotated text boxes, their probability maps, and motion-blur corruption.

use crate::error::{Error, Result};
use crate::geometry::Polygon;
use crate::pipeline::{generate_similar_label, Annotation};
use crate::raster::ProbMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Default motion-blur streak length in pixels.
pub const DEFAULT_BLUR_LEN: usize = 9;
/// Placement attempts per instance before giving up on it.
const PLACEMENT_RETRIES: usize = 60;
/// Instances are kept apart by the gap this shrink factor's inverse
/// expansion creates around each box.
const SEPARATION_DELTA: f64 = 0.9;

/// Layout parameters for one synthetic scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    /// Requested instance count; placement may yield fewer.
    pub count: usize,
    /// Box side length range in pixels.
    pub size_min: f64,
    pub size_max: f64,
    /// Box rotation range in radians.
    pub rot_min: f64,
    pub rot_max: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> SceneSpec {
        SceneSpec {
            height: 256,
            width: 256,
            count: 5,
            size_min: 16.0,
            size_max: 48.0,
            rot_min: 0.0,
            rot_max: std::f64::consts::PI,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::Parameter("canvas must be non-empty".into()));
        }
        if !(self.size_min > 0.0 && self.size_min <= self.size_max && self.size_max.is_finite()) {
            return Err(Error::Parameter(format!(
                "size range [{}, {}] must be positive and non-empty",
                self.size_min, self.size_max
            )));
        }
        if !(self.rot_min <= self.rot_max && self.rot_max.is_finite() && self.rot_min.is_finite())
        {
            return Err(Error::Parameter(format!(
                "rotation range [{}, {}] must be finite and non-empty",
                self.rot_min, self.rot_max
            )));
        }
        Ok(())
    }
}

fn rotated_box(cx: f64, cy: f64, hw: f64, hh: f64, angle: f64) -> Polygon {
    let (sin, cos) = angle.sin_cos();
    let corner = |dx: f64, dy: f64| (cx + dx * cos - dy * sin, cy + dx * sin + dy * cos);
    Polygon::from_xy(&[
        corner(-hw, -hh),
        corner(hw, -hh),
        corner(hw, hh),
        corner(-hw, hh),
    ])
    .expect("rotated box is a valid quad")
}

/// Places up to `spec.count` non-overlapping rotated boxes on the canvas
/// and renders the probability map as 1.0 inside each box's similar mask
/// (shrink factor `delta`), 0.0 elsewhere. The same spec always produces
/// identical output. When bounded retries cannot fit an instance it is
/// dropped with a warning, so the returned list may be shorter than
/// requested.
pub fn synth_scene(spec: &SceneSpec, delta: f64) -> Result<(Vec<Annotation>, ProbMap)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut anns: Vec<Annotation> = Vec::with_capacity(spec.count);
    let mut buffers: Vec<Polygon> = Vec::with_capacity(spec.count);
    for idx in 0..spec.count {
        let mut placed = false;
        for _ in 0..PLACEMENT_RETRIES {
            let w: f64 = rng.gen_range(spec.size_min..=spec.size_max);
            let h: f64 = rng.gen_range(spec.size_min..=spec.size_max);
            let angle = rng.gen_range(spec.rot_min..=spec.rot_max);
            // Keep the whole rotated box (plus a safety pixel) on canvas.
            let margin = (w * w + h * h).sqrt() / 2.0 + 1.0;
            if 2.0 * margin >= spec.width as f64 || 2.0 * margin >= spec.height as f64 {
                continue;
            }
            let cx = rng.gen_range(margin..spec.width as f64 - margin);
            let cy = rng.gen_range(margin..spec.height as f64 - margin);
            let quad = rotated_box(cx, cy, w / 2.0, h / 2.0, angle);
            let buffer = quad
                .similar_expand(SEPARATION_DELTA)
                .expect("expansion of a valid quad succeeds");
            let clear = buffers
                .iter()
                .all(|b| crate::raster::polygon_iou(&buffer, b) == 0.0);
            if clear {
                anns.push(Annotation::new(quad, format!("w{idx}")));
                buffers.push(buffer);
                placed = true;
                break;
            }
        }
        if !placed {
            log::warn!(
                "placement gave up on instance {idx} after {PLACEMENT_RETRIES} attempts"
            );
        }
    }
    if anns.len() < spec.count {
        log::warn!("placed {} of {} requested instances", anns.len(), spec.count);
    }
    let masks = generate_similar_label(&anns, delta, spec.height, spec.width)?;
    Ok((anns, ProbMap::from_mask(&masks.gt)))
}

/// Motion-blur parameters: a 1-px-wide streak of odd `length` at `angle`
/// radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlurSpec {
    pub length: usize,
    pub angle: f64,
}

impl BlurSpec {
    pub fn new(length: usize, angle: f64) -> Result<BlurSpec> {
        let spec = BlurSpec { length, angle };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 || self.length % 2 == 0 {
            return Err(Error::Parameter(format!(
                "blur length must be an odd positive integer, got {}",
                self.length
            )));
        }
        if !self.angle.is_finite() {
            return Err(Error::Parameter("blur angle must be finite".into()));
        }
        Ok(())
    }
}

/// The discrete line kernel for a blur spec as `(dx, dy, weight)` taps:
/// `length` unit-weight samples along the streak direction, rounded to
/// pixel offsets, with coinciding samples merged. Weights always sum to 1.
pub fn motion_kernel(spec: &BlurSpec) -> Result<Vec<(i64, i64, f64)>> {
    spec.validate()?;
    let (sin, cos) = spec.angle.sin_cos();
    let half = (spec.length as f64 - 1.0) / 2.0;
    let w = 1.0 / spec.length as f64;
    let mut taps: Vec<(i64, i64, f64)> = Vec::with_capacity(spec.length);
    for i in 0..spec.length {
        let t = i as f64 - half;
        let dx = (t * cos).round() as i64;
        let dy = (t * sin).round() as i64;
        match taps.iter_mut().find(|(x, y, _)| (*x, *y) == (dx, dy)) {
            Some((_, _, acc)) => *acc += w,
            None => taps.push((dx, dy, w)),
        }
    }
    Ok(taps)
}

/// Convolves the map with the blur kernel, replicating edge values. A
/// convex combination of in-range inputs, so outputs stay in `[0, 1]` and
/// the maximum never increases; `length == 1` is the identity.
pub fn motion_blur(m: &ProbMap, spec: &BlurSpec) -> Result<ProbMap> {
    let taps = motion_kernel(spec)?;
    let (h, w) = (m.height() as i64, m.width() as i64);
    let mut out = ProbMap::zeros(m.height(), m.width());
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for &(dx, dy, wt) in &taps {
                let rr = (r + dy).clamp(0, h - 1) as usize;
                let cc = (c + dx).clamp(0, w - 1) as usize;
                acc += wt * m.get(rr, cc);
            }
            out.set(r as usize, c as usize, acc.clamp(0.0, 1.0));
        }
    }
    Ok(out)
}
