//! Planar polygon primitives for text-region masks.
//!
//! Two mask constructions are supported: a similarity transform that scales
//! every vertex toward the vertex-mean centroid (cheap, exactly invertible),
//! and the classic perimeter-normalized inward/outward offset. Both operate
//! in pixel coordinates (x right, y down).

use crate::error::{Error, Result};

/// A point in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Point2 {
        Point2 { x, y }
    }

    pub fn dist(self, other: Point2) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

fn cross(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ax * by - ay * bx
}

/// A simple polygon with at least three vertices.
///
/// Construction normalizes winding so the shoelace sum is non-negative
/// (counter-clockwise in the x-right/y-down frame), keeping the first
/// vertex first. Downstream code relies on that orientation when choosing
/// outward edge normals.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point2>,
}

impl Polygon {
    /// Builds a polygon, validating vertex count and finiteness.
    pub fn new(mut vertices: Vec<Point2>) -> Result<Polygon> {
        if vertices.len() < 3 {
            return Err(Error::Degenerate(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::Degenerate("non-finite vertex coordinate".into()));
        }
        if signed_area_of(&vertices) < 0.0 {
            // Reverse the cycle but keep the original first vertex first.
            vertices[1..].reverse();
        }
        Ok(Polygon { vertices })
    }

    /// Builds from `(x, y)` pairs; convenience for literals and tests.
    pub fn from_xy(coords: &[(f64, f64)]) -> Result<Polygon> {
        Polygon::new(coords.iter().map(|&(x, y)| Point2::new(x, y)).collect())
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Vertex-mean centroid: the arithmetic mean of the vertices.
    ///
    /// This is deliberately not the area centroid; the similarity transform
    /// below is defined relative to this point so that the inverse transform
    /// can recompute it from the transformed vertices alone.
    pub fn centroid(&self) -> Point2 {
        let n = self.vertices.len() as f64;
        let (sx, sy) = self
            .vertices
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Point2::new(sx / n, sy / n)
    }

    fn scale_about_centroid(&self, factor: f64) -> Polygon {
        let c = self.centroid();
        let vertices = self
            .vertices
            .iter()
            .map(|p| Point2::new(c.x + (p.x - c.x) * factor, c.y + (p.y - c.y) * factor))
            .collect();
        // Positive scaling preserves orientation and finiteness.
        Polygon { vertices }
    }

    /// Shrinks every vertex toward the centroid by factor `delta` in (0, 1].
    ///
    /// The result has the same centroid, area scaled by `delta^2`, and
    /// perimeter scaled by `delta`. `delta = 1` is the identity.
    pub fn similar_shrink(&self, delta: f64) -> Result<Polygon> {
        check_shrink_factor(delta)?;
        Ok(self.scale_about_centroid(delta))
    }

    /// Inverse of [`similar_shrink`](Self::similar_shrink): scales vertices
    /// away from the centroid by `1/delta`.
    ///
    /// Because shrinking preserves the vertex mean, applying this to a
    /// shrunk polygon recovers the original vertices up to rounding.
    pub fn similar_expand(&self, delta: f64) -> Result<Polygon> {
        check_shrink_factor(delta)?;
        Ok(self.scale_about_centroid(1.0 / delta))
    }

    /// Shoelace area with sign; positive for the normalized winding.
    pub fn signed_area(&self) -> f64 {
        signed_area_of(&self.vertices)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| self.vertices[i].dist(self.vertices[(i + 1) % n]))
            .sum()
    }

    /// Returns `(area, perimeter)`, rejecting zero-area polygons that the
    /// offset formulas below would divide into nonsense.
    pub fn area_perimeter(&self) -> Result<(f64, f64)> {
        let area = self.area();
        if area <= f64::EPSILON {
            return Err(Error::Degenerate("zero-area polygon".into()));
        }
        Ok((area, self.perimeter()))
    }

    /// Axis-aligned bounding box as `(min, max)`.
    /// Rigid translation by `(dx, dy)`.
    pub fn translate(&self, dx: f64, dy: f64) -> Polygon {
        Polygon {
            vertices: self
                .vertices
                .iter()
                .map(|p| Point2::new(p.x + dx, p.y + dy))
                .collect(),
        }
    }

    pub fn bbox(&self) -> (Point2, Point2) {
        let mut min = self.vertices[0];
        let mut max = self.vertices[0];
        for p in &self.vertices[1..] {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        (min, max)
    }

    /// Even-odd point-in-polygon test with a half-open edge rule, so points
    /// exactly on a shared boundary are claimed by exactly one side.
    pub fn contains(&self, p: Point2) -> bool {
        let mut inside = false;
        let n = self.vertices.len();
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Best-effort simplicity check: no two non-adjacent edges intersect.
    ///
    /// Exactly-collinear overlapping edges may escape detection; inputs from
    /// the annotation parsers are quads, where this does not arise.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        for i in 0..n {
            let (a1, a2) = (self.vertices[i], self.vertices[(i + 1) % n]);
            for j in (i + 1)..n {
                // Skip edges sharing a vertex, including the wrap-around pair.
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (b1, b2) = (self.vertices[j], self.vertices[(j + 1) % n]);
                if segments_touch(a1, a2, b1, b2) {
                    return false;
                }
            }
        }
        true
    }

    /// Minimum distance from `p` to the polygon boundary.
    pub fn boundary_distance(&self, p: Point2) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| point_segment_distance(p, self.vertices[i], self.vertices[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min)
    }
}

fn signed_area_of(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    let mut sum = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        sum += a.x * b.y - b.x * a.y;
    }
    sum / 2.0
}

fn check_shrink_factor(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 1.0) || !delta.is_finite() {
        return Err(Error::Parameter(format!(
            "shrink factor must be in (0, 1], got {delta}"
        )));
    }
    Ok(())
}

fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.dist(Point2::new(a.x + t * dx, a.y + t * dy))
}

/// True when segments intersect or touch anywhere (inclusive bounds).
fn segments_touch(a1: Point2, a2: Point2, b1: Point2, b2: Point2) -> bool {
    let d1 = cross(a2.x - a1.x, a2.y - a1.y, b1.x - a1.x, b1.y - a1.y);
    let d2 = cross(a2.x - a1.x, a2.y - a1.y, b2.x - a1.x, b2.y - a1.y);
    let d3 = cross(b2.x - b1.x, b2.y - b1.y, a1.x - b1.x, a1.y - b1.y);
    let d4 = cross(b2.x - b1.x, b2.y - b1.y, a2.x - b1.x, a2.y - b1.y);
    if ((d1 > 0.0) != (d2 > 0.0)) && ((d3 > 0.0) != (d4 > 0.0)) {
        return true;
    }
    let on = |d: f64, p: Point2, q1: Point2, q2: Point2| {
        d == 0.0
            && p.x >= q1.x.min(q2.x)
            && p.x <= q1.x.max(q2.x)
            && p.y >= q1.y.min(q2.y)
            && p.y <= q1.y.max(q2.y)
    };
    on(d1, b1, a1, a2) || on(d2, b2, a1, a2) || on(d3, a1, b1, b2) || on(d4, a2, b1, b2)
}

/// Margin-to-scale ratio `(1 - delta) / delta` of a shrink factor: how far
/// the original boundary sits outside the shrunk mask, relative to the mask.
pub fn margin_ratio(delta: f64) -> Result<f64> {
    check_shrink_factor(delta)?;
    Ok((1.0 - delta) / delta)
}

/// Inward offset distance `area * (1 - gamma^2) / perimeter` used by
/// perimeter-normalized shrink masks; `gamma` in (0, 1].
pub fn offset_shrink_distance(p: &Polygon, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) || !gamma.is_finite() {
        return Err(Error::Parameter(format!(
            "shrink coefficient must be in (0, 1], got {gamma}"
        )));
    }
    let (area, perimeter) = p.area_perimeter()?;
    Ok(area * (1.0 - gamma * gamma) / perimeter)
}

/// Outward offset distance `area * beta / perimeter` used to undo a
/// perimeter-normalized shrink; `beta >= 0`.
pub fn offset_expand_distance(p: &Polygon, beta: f64) -> Result<f64> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::Parameter(format!(
            "expand coefficient must be >= 0, got {beta}"
        )));
    }
    let (area, perimeter) = p.area_perimeter()?;
    Ok(area * beta / perimeter)
}

/// Corner treatment for [`polygon_offset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinStyle {
    /// Extend neighboring offset edges to their intersection, falling back
    /// to a bevel past [`MITER_LIMIT`].
    Miter,
    /// Approximate a circular arc with steps of [`DEFAULT_ARC_STEP`] radians.
    Round,
}

/// Miter corners farther than this multiple of `|d|` from the vertex are
/// beveled instead.
pub const MITER_LIMIT: f64 = 2.0;

/// Angular step for sampling round joins, in radians.
pub const DEFAULT_ARC_STEP: f64 = 0.3;

/// Offsets a polygon boundary by `d` pixels: outward for `d > 0`, inward for
/// `d < 0`.
///
/// Inward offsets can split the region or collapse it entirely; an empty
/// vector means nothing survives at that depth. Outward offsets return the
/// single enclosing boundary. Self-intersections of the raw offset ring are
/// resolved by splitting it into simple loops and keeping the ones that
/// bound real offset area.
pub fn polygon_offset(p: &Polygon, d: f64, join: JoinStyle) -> Vec<Polygon> {
    if !d.is_finite() {
        return Vec::new();
    }
    if d == 0.0 {
        return vec![p.clone()];
    }
    let ring = offset_ring(p, d, join);
    if ring.len() < 3 {
        return Vec::new();
    }
    let loops = split_into_simple_loops(&ring);
    let mut out = Vec::new();
    if d > 0.0 {
        // The dilated region is connected; its outer boundary is the largest
        // correctly-oriented loop.
        let best = loops
            .into_iter()
            .filter(|l| signed_area_of(l) > AREA_EPS)
            .max_by(|a, b| signed_area_of(a).total_cmp(&signed_area_of(b)));
        if let Some(l) = best {
            out.push(Polygon { vertices: l });
        }
    } else {
        let depth = -d;
        for l in loops {
            if signed_area_of(&l) <= AREA_EPS {
                continue;
            }
            // A genuine inward loop lies inside the source polygon with the
            // full offset depth of clearance; inverted remnants do not.
            match interior_probe(&l) {
                Some(rep)
                    if p.contains(rep) && p.boundary_distance(rep) >= depth - DIST_TOL =>
                {
                    out.push(Polygon { vertices: l });
                }
                _ => {}
            }
        }
    }
    out
}

const AREA_EPS: f64 = 1e-9;
const DIST_TOL: f64 = 1e-6;

/// Builds the raw (possibly self-intersecting) offset ring.
fn offset_ring(p: &Polygon, d: f64, join: JoinStyle) -> Vec<Point2> {
    let vs = p.vertices();
    let n = vs.len();
    let mut ring: Vec<Point2> = Vec::with_capacity(n * 2);
    for i in 0..n {
        let prev = vs[(i + n - 1) % n];
        let v = vs[i];
        let next = vs[(i + 1) % n];
        let (e0x, e0y) = (v.x - prev.x, v.y - prev.y);
        let (e1x, e1y) = (next.x - v.x, next.y - v.y);
        let l0 = (e0x * e0x + e0y * e0y).sqrt();
        let l1 = (e1x * e1x + e1y * e1y).sqrt();
        if l0 == 0.0 || l1 == 0.0 {
            continue;
        }
        // Outward normals for counter-clockwise winding in x-right/y-down.
        let n0 = Point2::new(e0y / l0, -e0x / l0);
        let n1 = Point2::new(e1y / l1, -e1x / l1);
        let p0 = Point2::new(v.x + n0.x * d, v.y + n0.y * d);
        let p1 = Point2::new(v.x + n1.x * d, v.y + n1.y * d);
        let turn = cross(e0x, e0y, e1x, e1y);
        if turn.abs() < 1e-12 * l0 * l1 {
            // Collinear continuation (or a spur); both offsets coincide or
            // the untangling pass sorts out the U-turn.
            push_point(&mut ring, p0);
            if p0.dist(p1) > POINT_EPS {
                push_point(&mut ring, p1);
            }
            continue;
        }
        if turn * d > 0.0 {
            // Gap side: the offset edges pull apart around this corner.
            match join {
                JoinStyle::Miter => {
                    if let Some(m) = line_intersection(p0, e0x, e0y, p1, e1x, e1y) {
                        if m.dist(v) <= MITER_LIMIT * d.abs() {
                            push_point(&mut ring, m);
                        } else {
                            push_point(&mut ring, p0);
                            push_point(&mut ring, p1);
                        }
                    } else {
                        push_point(&mut ring, p0);
                        push_point(&mut ring, p1);
                    }
                }
                JoinStyle::Round => {
                    push_point(&mut ring, p0);
                    let sign = d.signum();
                    let a0 = (n0.y * sign).atan2(n0.x * sign);
                    let a1 = (n1.y * sign).atan2(n1.x * sign);
                    let mut sweep = a1 - a0;
                    while sweep > std::f64::consts::PI {
                        sweep -= 2.0 * std::f64::consts::PI;
                    }
                    while sweep < -std::f64::consts::PI {
                        sweep += 2.0 * std::f64::consts::PI;
                    }
                    let steps = (sweep.abs() / DEFAULT_ARC_STEP).ceil() as usize;
                    for k in 1..steps {
                        let a = a0 + sweep * (k as f64) / (steps as f64);
                        push_point(
                            &mut ring,
                            Point2::new(v.x + d.abs() * a.cos(), v.y + d.abs() * a.sin()),
                        );
                    }
                    push_point(&mut ring, p1);
                }
            }
        } else {
            // Overlap side: let the neighboring offset edges cross naturally;
            // the loop splitter removes the inverted pocket.
            push_point(&mut ring, p0);
            push_point(&mut ring, p1);
        }
    }
    // Drop a trailing duplicate of the ring start.
    while ring.len() > 1 && ring[0].dist(*ring.last().unwrap()) <= POINT_EPS {
        ring.pop();
    }
    ring
}

const POINT_EPS: f64 = 1e-9;

fn push_point(ring: &mut Vec<Point2>, p: Point2) {
    if ring.last().map_or(true, |last| last.dist(p) > POINT_EPS) {
        ring.push(p);
    }
}

/// Intersection of two lines given as point + direction.
fn line_intersection(p: Point2, dx0: f64, dy0: f64, q: Point2, dx1: f64, dy1: f64) -> Option<Point2> {
    let denom = cross(dx0, dy0, dx1, dy1);
    if denom.abs() < 1e-12 {
        return None;
    }
    let t = cross(q.x - p.x, q.y - p.y, dx1, dy1) / denom;
    Some(Point2::new(p.x + t * dx0, p.y + t * dy0))
}

/// Splits a closed ring at its self-intersections into simple loops.
///
/// Walks the ring and, at every crossing, switches to the other strand; each
/// directed piece is traversed exactly once, so the pieces partition into
/// closed loops whose signed areas reveal which side of the crossing they
/// bound.
fn split_into_simple_loops(ring: &[Point2]) -> Vec<Vec<Point2>> {
    let n = ring.len();
    // Intersection points found on each segment, with their parameter.
    let mut cuts: Vec<Vec<(f64, usize)>> = vec![Vec::new(); n];
    let mut nodes: Vec<Point2> = Vec::new();
    for i in 0..n {
        let (a1, a2) = (ring[i], ring[(i + 1) % n]);
        let (alo_x, ahi_x) = (a1.x.min(a2.x), a1.x.max(a2.x));
        let (alo_y, ahi_y) = (a1.y.min(a2.y), a1.y.max(a2.y));
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (b1, b2) = (ring[j], ring[(j + 1) % n]);
            if b1.x.max(b2.x) < alo_x
                || b1.x.min(b2.x) > ahi_x
                || b1.y.max(b2.y) < alo_y
                || b1.y.min(b2.y) > ahi_y
            {
                continue;
            }
            let hit = proper_crossing(a1, a2, b1, b2)
                .or_else(|| collinear_overlap_node(a1, a2, b1, b2));
            if let Some((t, u, pt)) = hit {
                let id = nodes.len();
                nodes.push(pt);
                cuts[i].push((t, id));
                cuts[j].push((u, id));
            }
        }
    }
    if nodes.is_empty() {
        return vec![ring.to_vec()];
    }

    // Point ids: ring vertices first, then crossing nodes.
    let coord = |id: usize| -> Point2 {
        if id < n {
            ring[id]
        } else {
            nodes[id - n]
        }
    };
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for (i, cut) in cuts.iter_mut().enumerate() {
        cut.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut from = i;
        for &(_, node) in cut.iter() {
            edges.push((from, n + node));
            from = n + node;
        }
        edges.push((from, (i + 1) % n));
    }
    let m = edges.len();
    // For each crossing node, the (at most two) ring edges arriving there.
    let mut arrivals: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for (idx, &(_, to)) in edges.iter().enumerate() {
        if to >= n {
            arrivals[to - n].push(idx);
        }
    }
    let next_edge = |idx: usize| -> usize {
        let to = edges[idx].1;
        if to >= n {
            let arr = &arrivals[to - n];
            if arr.len() == 2 {
                // Leave along the other strand's continuation.
                let other = if arr[0] == idx { arr[1] } else { arr[0] };
                return (other + 1) % m;
            }
        }
        (idx + 1) % m
    };

    let mut visited = vec![false; m];
    let mut loops = Vec::new();
    for start in 0..m {
        if visited[start] {
            continue;
        }
        let mut pts = Vec::new();
        let mut cur = start;
        loop {
            visited[cur] = true;
            pts.push(coord(edges[cur].0));
            cur = next_edge(cur);
            if cur == start {
                break;
            }
        }
        let mut clean: Vec<Point2> = Vec::with_capacity(pts.len());
        for p in pts {
            push_point(&mut clean, p);
        }
        while clean.len() > 1 && clean[0].dist(*clean.last().unwrap()) <= POINT_EPS {
            clean.pop();
        }
        if clean.len() >= 3 {
            loops.push(clean);
        }
    }
    loops
}

/// Strict interior crossing of two segments; endpoint touches are ignored.
fn proper_crossing(a1: Point2, a2: Point2, b1: Point2, b2: Point2) -> Option<(f64, f64, Point2)> {
    let (rx, ry) = (a2.x - a1.x, a2.y - a1.y);
    let (sx, sy) = (b2.x - b1.x, b2.y - b1.y);
    let denom = cross(rx, ry, sx, sy);
    if denom.abs() < 1e-12 {
        return None;
    }
    let (qx, qy) = (b1.x - a1.x, b1.y - a1.y);
    let t = cross(qx, qy, sx, sy) / denom;
    let u = cross(qx, qy, rx, ry) / denom;
    const T_EPS: f64 = 1e-9;
    if t <= T_EPS || t >= 1.0 - T_EPS || u <= T_EPS || u >= 1.0 - T_EPS {
        return None;
    }
    Some((t, u, Point2::new(a1.x + t * rx, a1.y + t * ry)))
}

/// Degenerate pinch case: two same-direction segments running along one
/// line. The region is being squeezed shut there, which behaves like a
/// single crossing; a node at the shared interval's midpoint lets the loop
/// walk swap strands once. Opposite-direction overlaps (zero-width spikes)
/// are tangencies, not crossings, and are left alone.
fn collinear_overlap_node(
    a1: Point2,
    a2: Point2,
    b1: Point2,
    b2: Point2,
) -> Option<(f64, f64, Point2)> {
    let (rx, ry) = (a2.x - a1.x, a2.y - a1.y);
    let (sx, sy) = (b2.x - b1.x, b2.y - b1.y);
    let rlen = (rx * rx + ry * ry).sqrt();
    let slen = (sx * sx + sy * sy).sqrt();
    if rlen == 0.0 || slen == 0.0 {
        return None;
    }
    if rx * sx + ry * sy <= 0.0 {
        return None;
    }
    const LATERAL_TOL: f64 = 1e-7;
    let lateral = |p: Point2| cross(rx, ry, p.x - a1.x, p.y - a1.y).abs() / rlen;
    if lateral(b1) > LATERAL_TOL || lateral(b2) > LATERAL_TOL {
        return None;
    }
    // Project b's endpoints onto a's parameter and intersect the intervals.
    let proj = |p: Point2| ((p.x - a1.x) * rx + (p.y - a1.y) * ry) / (rlen * rlen);
    let (tb1, tb2) = (proj(b1), proj(b2));
    let lo = tb1.min(tb2).max(0.0);
    let hi = tb1.max(tb2).min(1.0);
    if hi - lo <= 1e-9 {
        return None;
    }
    let t = (lo + hi) / 2.0;
    let pt = Point2::new(a1.x + t * rx, a1.y + t * ry);
    let u = ((pt.x - b1.x) * sx + (pt.y - b1.y) * sy) / (slen * slen);
    if u <= 1e-9 || u >= 1.0 - 1e-9 {
        return None;
    }
    Some((t, u, pt))
}

/// Finds a point inside a simple loop, preferring the vertex mean.
fn interior_probe(loop_pts: &[Point2]) -> Option<Point2> {
    let tmp = Polygon {
        vertices: loop_pts.to_vec(),
    };
    let mean = tmp.centroid();
    if tmp.contains(mean) {
        return Some(mean);
    }
    let n = loop_pts.len();
    for i in 0..n {
        let a = loop_pts[i];
        let b = loop_pts[(i + n / 2) % n];
        let mid = Point2::new((a.x + b.x) / 2.0, (a.y + b.y) / 2.0);
        if tmp.contains(mid) {
            return Some(mid);
        }
    }
    None
}

/// Clips a polygon to the axis-aligned rectangle `[0, width] x [0, height]`
/// (Sutherland–Hodgman against each boundary half-plane). Returns `None`
/// when nothing of substance survives.
pub fn clip_to_rect(p: &Polygon, width: f64, height: f64) -> Option<Polygon> {
    let mut pts: Vec<Point2> = p.vertices().to_vec();
    // (signed distance to the inside) per clip plane; >= 0 means kept.
    let planes: [Box<dyn Fn(Point2) -> f64>; 4] = [
        Box::new(|q: Point2| q.x),
        Box::new(move |q: Point2| width - q.x),
        Box::new(|q: Point2| q.y),
        Box::new(move |q: Point2| height - q.y),
    ];
    for side in &planes {
        if pts.is_empty() {
            return None;
        }
        let mut out = Vec::with_capacity(pts.len() + 4);
        for i in 0..pts.len() {
            let a = pts[i];
            let b = pts[(i + 1) % pts.len()];
            let (da, db) = (side(a), side(b));
            if da >= 0.0 {
                out.push(a);
            }
            if (da >= 0.0) != (db >= 0.0) {
                let t = da / (da - db);
                out.push(Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
            }
        }
        pts = out;
    }
    pts.dedup_by(|a, b| a.dist(*b) < POINT_EPS);
    while pts.len() > 1 && pts[0].dist(pts[pts.len() - 1]) < POINT_EPS {
        pts.pop();
    }
    if pts.len() < 3 || signed_area_of(&pts).abs() <= AREA_EPS {
        return None;
    }
    Polygon::new(pts).ok()
}

/// Removes jitter from a dense closed contour by split-and-merge
/// simplification: a vertex survives only if it strays more than
/// `tolerance` from the chord between its retained neighbors.
///
/// Pixel-center traces are staircases whose perimeter exceeds the smooth
/// boundary's by up to √2; simplifying with a ~1 px tolerance recovers the
/// true perimeter before any area/perimeter ratio is taken.
pub fn simplify_closed(p: &Polygon, tolerance: f64) -> Polygon {
    let vs = p.vertices();
    let n = vs.len();
    if n <= 4 || !(tolerance > 0.0) {
        return p.clone();
    }
    // Anchor the ring at vertex 0 and its farthest companion, then refine
    // the two open chains between them.
    let mut far = 0;
    let mut best = 0.0;
    for (i, q) in vs.iter().enumerate() {
        let d = vs[0].dist(*q);
        if d > best {
            best = d;
            far = i;
        }
    }
    if far == 0 {
        return p.clone();
    }
    let mut keep = vec![false; n];
    keep[0] = true;
    keep[far] = true;
    let chain_a: Vec<usize> = (0..=far).collect();
    let chain_b: Vec<usize> = (far..n).chain(std::iter::once(0)).collect();
    refine_chain(vs, &chain_a, tolerance, &mut keep);
    refine_chain(vs, &chain_b, tolerance, &mut keep);
    let kept: Vec<Point2> = (0..n).filter(|&i| keep[i]).map(|i| vs[i]).collect();
    if kept.len() < 3 || signed_area_of(&kept).abs() <= AREA_EPS {
        return p.clone();
    }
    Polygon::new(kept).unwrap_or_else(|_| p.clone())
}

fn refine_chain(vs: &[Point2], idx: &[usize], tolerance: f64, keep: &mut [bool]) {
    let mut stack = vec![(0usize, idx.len() - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo + 1 {
            continue;
        }
        let (a, b) = (vs[idx[lo]], vs[idx[hi]]);
        let mut best = tolerance;
        let mut split = None;
        for k in lo + 1..hi {
            let d = point_segment_distance(vs[idx[k]], a, b);
            if d > best {
                best = d;
                split = Some(k);
            }
        }
        if let Some(k) = split {
            keep[idx[k]] = true;
            stack.push((lo, k));
            stack.push((k, hi));
        }
    }
}

/// Convex hull by monotone chain; returns hull vertices in normalized
/// winding. Useful for fuzzing the transforms with guaranteed-convex input.
pub fn convex_hull(points: &[Point2]) -> Result<Polygon> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| a.x == b.x && a.y == b.y);
    if pts.len() < 3 {
        return Err(Error::Degenerate("hull needs at least 3 distinct points".into()));
    }
    let turn = |o: Point2, a: Point2, b: Point2| cross(a.x - o.x, a.y - o.y, b.x - o.x, b.y - o.y);
    let mut lower: Vec<Point2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && turn(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && turn(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    Polygon::new(lower)
}
