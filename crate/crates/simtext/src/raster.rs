//! Pixel-grid operations: rasterization, connected components, and border
//! tracing.
//!
//! All grids are row-major with `(row, col)` indexing; the continuous
//! coordinate of pixel `(r, c)` is its center `(c + 0.5, r + 0.5)`. A pixel
//! belongs to a polygon when its center does (even-odd rule, half-open on
//! boundaries so shared edges are claimed once).

use crate::error::{Error, Result};
use crate::geometry::{Point2, Polygon};
use std::collections::VecDeque;

/// Dense boolean image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize) -> BinaryMask {
        BinaryMask {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn from_rows(rows: &[&[bool]]) -> BinaryMask {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        let mut bits = Vec::with_capacity(height * width);
        for row in rows {
            assert_eq!(row.len(), width, "ragged rows");
            bits.extend_from_slice(row);
        }
        BinaryMask { height, width, bits }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.width + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.bits[r * self.width + c] = v;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn or_with(&mut self, other: &BinaryMask) {
        assert_eq!((self.height, self.width), (other.height, other.width));
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }

    /// Block-max downsampling; `factor` must divide both dimensions.
    pub fn maxpool(&self, factor: usize) -> Result<BinaryMask> {
        let (h, w) = pooled_dims(self.height, self.width, factor)?;
        let mut out = BinaryMask::new(h, w);
        for r in 0..self.height {
            for c in 0..self.width {
                if self.get(r, c) {
                    out.set(r / factor, c / factor, true);
                }
            }
        }
        Ok(out)
    }
}

/// Dense probability image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ProbMap {
    /// Validates range and finiteness of every value.
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<ProbMap> {
        if values.len() != height * width {
            return Err(Error::Dimension(format!(
                "expected {} values for {height}x{width}, got {}",
                height * width,
                values.len()
            )));
        }
        if values.iter().any(|v| !(*v >= 0.0 && *v <= 1.0)) {
            return Err(Error::Parameter(
                "probability values must lie in [0, 1]".into(),
            ));
        }
        Ok(ProbMap { height, width, values })
    }

    pub fn zeros(height: usize, width: usize) -> ProbMap {
        ProbMap {
            height,
            width,
            values: vec![0.0; height * width],
        }
    }

    pub fn from_mask(mask: &BinaryMask) -> ProbMap {
        ProbMap {
            height: mask.height(),
            width: mask.width(),
            values: mask.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.width + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!((0.0..=1.0).contains(&v));
        self.values[r * self.width + c] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Block-max downsampling; `factor` must divide both dimensions.
    pub fn maxpool(&self, factor: usize) -> Result<ProbMap> {
        let (h, w) = pooled_dims(self.height, self.width, factor)?;
        let mut values = vec![0.0f64; h * w];
        for r in 0..self.height {
            for c in 0..self.width {
                let idx = (r / factor) * w + c / factor;
                values[idx] = values[idx].max(self.get(r, c));
            }
        }
        Ok(ProbMap { height: h, width: w, values })
    }
}

fn pooled_dims(height: usize, width: usize, factor: usize) -> Result<(usize, usize)> {
    if factor == 0 {
        return Err(Error::Parameter("pooling factor must be positive".into()));
    }
    if height % factor != 0 || width % factor != 0 {
        return Err(Error::Dimension(format!(
            "pooling factor {factor} does not divide {height}x{width}"
        )));
    }
    Ok((height / factor, width / factor))
}

/// Fills a polygon onto a `height x width` grid by scanline parity.
pub fn rasterize(p: &Polygon, height: usize, width: usize) -> BinaryMask {
    let mut mask = BinaryMask::new(height, width);
    rasterize_into(p, &mut mask);
    mask
}

fn rasterize_into(p: &Polygon, mask: &mut BinaryMask) {
    let (min, max) = p.bbox();
    let height = mask.height;
    let width = mask.width;
    let r_lo = (min.y - 0.5).ceil().max(0.0) as usize;
    let r_hi = (max.y - 0.5).floor().min(height as f64 - 1.0);
    if r_hi < 0.0 {
        return;
    }
    let r_hi = r_hi as usize;
    let vs = p.vertices();
    let n = vs.len();
    let mut xs: Vec<f64> = Vec::with_capacity(8);
    for r in r_lo..=r_hi.min(height.saturating_sub(1)) {
        let y = r as f64 + 0.5;
        xs.clear();
        for i in 0..n {
            let (a, b) = (vs[i], vs[(i + 1) % n]);
            // Half-open in y so a scanline through a vertex counts once.
            if (a.y <= y && b.y > y) || (b.y <= y && a.y > y) {
                xs.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        xs.sort_unstable_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            // Centers in [x0, x1): c + 0.5 >= x0 and c + 0.5 < x1.
            let c_lo = (pair[0] - 0.5).ceil().max(0.0) as usize;
            let c_hi = (pair[1] - 0.5).ceil() - 1.0;
            if c_hi < 0.0 {
                continue;
            }
            for c in c_lo..=(c_hi as usize).min(width.saturating_sub(1)) {
                mask.set(r, c, true);
            }
        }
    }
}

/// Thresholds a probability map; a bit is set only when the value is
/// strictly greater than `thresh`.
pub fn binarize(m: &ProbMap, thresh: f64) -> BinaryMask {
    let mut mask = BinaryMask::new(m.height, m.width);
    for (i, v) in m.values.iter().enumerate() {
        mask.bits[i] = *v > thresh;
    }
    mask
}

/// Summary of one labeled component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionInfo {
    /// Pixel count.
    pub area: usize,
    /// First pixel in row-major order.
    pub first: (usize, usize),
    /// Inclusive bounding box `(min_r, min_c, max_r, max_c)`.
    pub bbox: (usize, usize, usize, usize),
}

/// Label image from [`connected_components`]; label 0 is background and
/// labels `1..=count` index `regions`.
#[derive(Debug, Clone)]
pub struct LabeledRegions {
    height: usize,
    width: usize,
    labels: Vec<u32>,
    regions: Vec<RegionInfo>,
}

impl LabeledRegions {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn count(&self) -> usize {
        self.regions.len()
    }

    pub fn label(&self, r: usize, c: usize) -> u32 {
        self.labels[r * self.width + c]
    }

    pub fn region(&self, label: u32) -> Result<&RegionInfo> {
        if label == 0 || label as usize > self.regions.len() {
            return Err(Error::UnknownLabel(label));
        }
        Ok(&self.regions[label as usize - 1])
    }
}

/// Labels 8-connected foreground components.
///
/// Labels are assigned in the order a component's first pixel appears in a
/// row-major scan, so numbering is deterministic for a given mask.
pub fn connected_components(mask: &BinaryMask) -> LabeledRegions {
    let (height, width) = (mask.height(), mask.width());
    let mut labels = vec![0u32; height * width];
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    for start_r in 0..height {
        for start_c in 0..width {
            if !mask.get(start_r, start_c) || labels[start_r * width + start_c] != 0 {
                continue;
            }
            let label = regions.len() as u32 + 1;
            let mut info = RegionInfo {
                area: 0,
                first: (start_r, start_c),
                bbox: (start_r, start_c, start_r, start_c),
            };
            labels[start_r * width + start_c] = label;
            queue.push_back((start_r, start_c));
            while let Some((r, c)) = queue.pop_front() {
                info.area += 1;
                info.bbox.0 = info.bbox.0.min(r);
                info.bbox.1 = info.bbox.1.min(c);
                info.bbox.2 = info.bbox.2.max(r);
                info.bbox.3 = info.bbox.3.max(c);
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                        if nr < 0 || nc < 0 || nr >= height as i64 || nc >= width as i64 {
                            continue;
                        }
                        let (nr, nc) = (nr as usize, nc as usize);
                        if mask.get(nr, nc) && labels[nr * width + nc] == 0 {
                            labels[nr * width + nc] = label;
                            queue.push_back((nr, nc));
                        }
                    }
                }
            }
            regions.push(info);
        }
    }
    LabeledRegions { height, width, labels, regions }
}

// Moore neighborhood in clockwise screen order starting west.
const MOORE: [(i64, i64); 8] = [
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
];

/// Traces the outer border of one component as pixel centers, clockwise,
/// starting at the component's first row-major pixel.
///
/// Single-pixel components yield a single point. The walk stops when a
/// (pixel, backtrack) state repeats, which also terminates one-pixel-wide
/// appendages that revisit pixels.
pub fn trace_contour(lr: &LabeledRegions, label: u32) -> Result<Vec<Point2>> {
    let info = *lr.region(label)?;
    let (min_r, min_c, max_r, max_c) = info.bbox;
    let bw = max_c - min_c + 1;
    let bh = max_r - min_r + 1;
    let at = |r: i64, c: i64| -> bool {
        r >= 0
            && c >= 0
            && (r as usize) < lr.height
            && (c as usize) < lr.width
            && lr.label(r as usize, c as usize) == label
    };
    let center = |(r, c): (i64, i64)| Point2::new(c as f64 + 0.5, r as f64 + 0.5);

    let start = (info.first.0 as i64, info.first.1 as i64);
    let mut pts = vec![center(start)];
    // One bit per (pixel, backtrack direction) state within the bbox.
    let mut seen = vec![0u8; bw * bh];
    let state_bit = |(r, c): (i64, i64), back: usize| -> (usize, u8) {
        let idx = (r as usize - min_r) * bw + (c as usize - min_c);
        (idx, 1u8 << back)
    };
    let mut cur = start;
    // The west neighbor of the first row-major pixel is always background.
    let mut back = 0usize;
    let (idx, bit) = state_bit(cur, back);
    seen[idx] |= bit;
    loop {
        let mut found = None;
        for k in 1..=8 {
            let dir = (back + k) % 8;
            let cand = (cur.0 + MOORE[dir].0, cur.1 + MOORE[dir].1);
            if at(cand.0, cand.1) {
                found = Some((dir, k));
                break;
            }
        }
        let Some((dir, k)) = found else {
            break; // isolated pixel
        };
        let next = (cur.0 + MOORE[dir].0, cur.1 + MOORE[dir].1);
        // The probe just before the hit is background and Moore-adjacent to
        // `next`; it becomes the new backtrack reference.
        let bg_dir = (back + k - 1) % 8;
        let bg = (cur.0 + MOORE[bg_dir].0, cur.1 + MOORE[bg_dir].1);
        let nb = MOORE
            .iter()
            .position(|&(dr, dc)| (next.0 + dr, next.1 + dc) == bg)
            .expect("backtrack cell is Moore-adjacent");
        let (idx, bit) = state_bit(next, nb);
        if seen[idx] & bit != 0 {
            break;
        }
        seen[idx] |= bit;
        cur = next;
        back = nb;
        pts.push(center(cur));
    }
    if pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    Ok(pts)
}

/// Mean probability over one component's pixels.
pub fn region_score(m: &ProbMap, lr: &LabeledRegions, label: u32) -> Result<f64> {
    let info = lr.region(label)?;
    if (m.height(), m.width()) != (lr.height(), lr.width()) {
        return Err(Error::Dimension(
            "probability map and label image differ in size".into(),
        ));
    }
    let mut sum = 0.0;
    for r in 0..lr.height {
        for c in 0..lr.width {
            if lr.label(r, c) == label {
                sum += m.get(r, c);
            }
        }
    }
    Ok(sum / info.area as f64)
}

/// Interprets traced pixel centers as a region outline.
///
/// Center sampling places the contour half a pixel inside the true region
/// edge, so each point is pushed `margin` (normally [`HALF_PIXEL`]) along
/// its local outward normal, estimated from a small neighbor window of the
/// ordered contour. Points with a degenerate neighborhood fall back to
/// radial motion away from the vertex mean. Works for either winding.
pub fn dilate_contour(contour: &[Point2], margin: f64) -> Result<Polygon> {
    let n = contour.len();
    if n < 3 {
        return Err(Error::Degenerate(format!(
            "contour with {n} points cannot form a polygon"
        )));
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    let mut area2 = 0.0;
    for i in 0..n {
        let (a, b) = (contour[i], contour[(i + 1) % n]);
        cx += a.x;
        cy += a.y;
        area2 += a.x * b.y - b.x * a.y;
    }
    let (cx, cy) = (cx / n as f64, cy / n as f64);
    // Outward side of the tangent depends on the winding.
    let orient = if area2 >= 0.0 { 1.0 } else { -1.0 };
    let win = if n >= 9 { 2 } else { 1 };
    let vertices = (0..n)
        .map(|i| {
            let p = contour[i];
            let a = contour[(i + n - win) % n];
            let b = contour[(i + win) % n];
            let (tx, ty) = (b.x - a.x, b.y - a.y);
            let len = (tx * tx + ty * ty).sqrt();
            if len > 1e-9 {
                return Point2::new(p.x + orient * margin * ty / len, p.y - orient * margin * tx / len);
            }
            // Degenerate window (repeated pixels): move away from the mean.
            let (dx, dy) = (p.x - cx, p.y - cy);
            let r = (dx * dx + dy * dy).sqrt();
            if r < 1e-12 {
                p
            } else {
                Point2::new(p.x + margin * dx / r, p.y + margin * dy / r)
            }
        })
        .collect();
    Polygon::new(vertices)
}

/// Half-pixel margin between a border pixel's center and the region edge.
pub const HALF_PIXEL: f64 = 0.5;

/// Intersection-over-union of two polygons on the integer pixel grid of
/// their joint bounding box. Returns 0 when neither covers a pixel center.
pub fn polygon_iou(a: &Polygon, b: &Polygon) -> f64 {
    let counts = raster_overlap(a, b);
    match counts {
        Some((inter, area_a, area_b)) => {
            let union = area_a + area_b - inter;
            if union == 0 {
                0.0
            } else {
                inter as f64 / union as f64
            }
        }
        None => 0.0,
    }
}

/// Intersection area of `a` and `b` as a fraction of `a`'s area, on the
/// joint pixel grid. Used for don't-care overlap tests.
pub fn intersection_over_first(a: &Polygon, b: &Polygon) -> f64 {
    match raster_overlap(a, b) {
        Some((inter, area_a, _)) if area_a > 0 => inter as f64 / area_a as f64,
        _ => 0.0,
    }
}

fn raster_overlap(a: &Polygon, b: &Polygon) -> Option<(usize, usize, usize)> {
    let (amin, amax) = a.bbox();
    let (bmin, bmax) = b.bbox();
    let min_x = amin.x.min(bmin.x).floor();
    let min_y = amin.y.min(bmin.y).floor();
    let max_x = amax.x.max(bmax.x).ceil();
    let max_y = amax.y.max(bmax.y).ceil();
    let width = (max_x - min_x).max(0.0) as usize + 1;
    let height = (max_y - min_y).max(0.0) as usize + 1;
    let ra = rasterize(&a.translate(-min_x, -min_y), height, width);
    let rb = rasterize(&b.translate(-min_x, -min_y), height, width);
    let mut inter = 0;
    let mut area_a = 0;
    let mut area_b = 0;
    for (pa, pb) in ra.bits.iter().zip(&rb.bits) {
        area_a += *pa as usize;
        area_b += *pb as usize;
        inter += (*pa && *pb) as usize;
    }
    Some((inter, area_a, area_b))
}
