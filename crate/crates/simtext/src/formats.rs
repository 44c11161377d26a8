//! Bit-exact parsers and writers for annotation files, detection lists,
//! binary masks (PGM), and float tensors (FMAP), plus the file pairing
//! used by evaluation.

use crate::error::{Error, Result};
use crate::geometry::Polygon;
use crate::losses::FeatureMap;
use crate::pipeline::{Annotation, Detection, IGNORE_SENTINEL};
use crate::raster::{BinaryMask, ProbMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Magic bytes opening every FMAP tensor file.
pub const FMAP_MAGIC: [u8; 4] = *b"FMAP";
/// The only FMAP container version this build reads or writes.
pub const FMAP_VERSION: u32 = 1;

/// Supported annotation file dialects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    /// Comma-separated quads: `x1,y1,...,x4,y4,transcription`.
    IcdarQuad,
    /// Space-separated rotated boxes: `index difficult x y w h angle`.
    Td500Rotbox,
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<DatasetKind> {
        match s {
            "icdar-quad" => Ok(DatasetKind::IcdarQuad),
            "td500-rotbox" => Ok(DatasetKind::Td500Rotbox),
            other => Err(Error::Parameter(format!(
                "unknown dataset kind {other:?}; use icdar-quad or td500-rotbox"
            ))),
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::IcdarQuad => "icdar-quad",
            DatasetKind::Td500Rotbox => "td500-rotbox",
        })
    }
}

fn parse_coord(field: &str, lineno: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        line: lineno,
        msg: format!("expected a number, found {field:?}"),
    })
}

/// Parses one quad annotation line: eight comma-separated coordinates
/// followed by the transcription (which may itself contain commas).
/// `lineno` is 1-based and only used in error messages.
pub fn parse_icdar(line: &str, lineno: usize) -> Result<Annotation> {
    let line = line.trim_start_matches('\u{feff}').trim_end_matches('\r');
    let fields: Vec<&str> = line.splitn(9, ',').collect();
    if fields.len() < 9 {
        return Err(Error::Parse {
            line: lineno,
            msg: format!("expected 8 coordinates and a transcription, found {} fields", fields.len()),
        });
    }
    let mut xy = [0.0; 8];
    for (i, slot) in xy.iter_mut().enumerate() {
        *slot = parse_coord(fields[i], lineno)?;
    }
    let polygon = Polygon::from_xy(&[
        (xy[0], xy[1]),
        (xy[2], xy[3]),
        (xy[4], xy[5]),
        (xy[6], xy[7]),
    ])
    .map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
    Ok(Annotation::new(polygon, fields[8]))
}

/// Parses one rotated-box annotation line: `index difficult x y w h angle`,
/// where the axis-aligned box `(x, y, w, h)` is rotated by `angle` radians
/// about its center. A difficult flag of 1 marks the instance ignored.
pub fn parse_td500(line: &str, lineno: usize) -> Result<Annotation> {
    let line = line.trim_start_matches('\u{feff}').trim_end_matches('\r');
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 7 {
        return Err(Error::Parse {
            line: lineno,
            msg: format!("expected 7 space-separated fields, found {}", fields.len()),
        });
    }
    fields[0].parse::<i64>().map_err(|_| Error::Parse {
        line: lineno,
        msg: format!("expected an integer index, found {:?}", fields[0]),
    })?;
    let difficult = match fields[1] {
        "0" => false,
        "1" => true,
        other => {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("difficult flag must be 0 or 1, found {other:?}"),
            })
        }
    };
    let x = parse_coord(fields[2], lineno)?;
    let y = parse_coord(fields[3], lineno)?;
    let w = parse_coord(fields[4], lineno)?;
    let h = parse_coord(fields[5], lineno)?;
    let angle = parse_coord(fields[6], lineno)?;
    let (cx, cy) = (x + w / 2.0, y + h / 2.0);
    let (sin, cos) = angle.sin_cos();
    let rotate = |px: f64, py: f64| {
        let (dx, dy) = (px - cx, py - cy);
        (cx + dx * cos - dy * sin, cy + dx * sin + dy * cos)
    };
    let polygon = Polygon::from_xy(&[
        rotate(x, y),
        rotate(x + w, y),
        rotate(x + w, y + h),
        rotate(x, y + h),
    ])
    .map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
    let transcription = if difficult { IGNORE_SENTINEL } else { "" };
    Ok(Annotation::new(polygon, transcription))
}

/// Parses a whole annotation file in the given dialect, skipping blank
/// lines; errors carry the 1-based line number.
pub fn parse_annotations(kind: DatasetKind, text: &str) -> Result<Vec<Annotation>> {
    let mut anns = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_start_matches('\u{feff}').trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        anns.push(match kind {
            DatasetKind::IcdarQuad => parse_icdar(line, i + 1)?,
            DatasetKind::Td500Rotbox => parse_td500(line, i + 1)?,
        });
    }
    Ok(anns)
}

fn round_int(v: f64) -> i64 {
    v.round() as i64
}

/// Writes quad annotations, one line per instance with integer-rounded
/// coordinates. Only quads are representable in this dialect.
pub fn write_icdar(anns: &[Annotation]) -> Result<String> {
    let mut out = String::new();
    for ann in anns {
        let vs = ann.polygon().vertices();
        if vs.len() != 4 {
            return Err(Error::Parameter(format!(
                "quad format cannot hold a {}-vertex polygon",
                vs.len()
            )));
        }
        let coords: Vec<String> = vs
            .iter()
            .flat_map(|p| [round_int(p.x).to_string(), round_int(p.y).to_string()])
            .collect();
        out.push_str(&coords.join(","));
        out.push(',');
        out.push_str(ann.transcription());
        out.push('\n');
    }
    Ok(out)
}

/// Writes rotated-box annotations by recovering `(x, y, w, h, angle)` from
/// each quad: the center is the vertex mean, the angle comes from the first
/// edge, and the sides from the first and last edge lengths. Lines carry a
/// running index; the difficult flag mirrors the ignore state.
pub fn write_td500(anns: &[Annotation]) -> Result<String> {
    let mut out = String::new();
    for (i, ann) in anns.iter().enumerate() {
        let vs = ann.polygon().vertices();
        if vs.len() != 4 {
            return Err(Error::Parameter(format!(
                "rotated-box format cannot hold a {}-vertex polygon",
                vs.len()
            )));
        }
        let c = ann.polygon().centroid();
        let w = vs[0].dist(vs[1]);
        let h = vs[0].dist(vs[3]);
        let angle = (vs[1].y - vs[0].y).atan2(vs[1].x - vs[0].x);
        let x = c.x - w / 2.0;
        let y = c.y - h / 2.0;
        out.push_str(&format!(
            "{} {} {:.6} {:.6} {:.6} {:.6} {:.6}\n",
            i,
            ann.ignore() as u8,
            x,
            y,
            w,
            h,
            angle
        ));
    }
    Ok(out)
}

/// Writes a whole annotation file in the given dialect.
pub fn write_annotations(kind: DatasetKind, anns: &[Annotation]) -> Result<String> {
    match kind {
        DatasetKind::IcdarQuad => write_icdar(anns),
        DatasetKind::Td500Rotbox => write_td500(anns),
    }
}

/// Writes detections one per line — integer-rounded coordinates followed by
/// the score with four decimals — ordered by descending score.
pub fn write_detections(dets: &[Detection]) -> String {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut out = String::new();
    for i in order {
        let coords: Vec<String> = dets[i]
            .polygon
            .vertices()
            .iter()
            .flat_map(|p| [round_int(p.x).to_string(), round_int(p.y).to_string()])
            .collect();
        out.push_str(&coords.join(","));
        out.push_str(&format!(",{:.4}\n", dets[i].score));
    }
    out
}

/// Reads detection lines written by [`write_detections`]: an even run of
/// coordinates (at least six) followed by a score.
pub fn read_detections(text: &str) -> Result<Vec<Detection>> {
    let mut dets = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_start_matches('\u{feff}').trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 7 || fields.len() % 2 == 0 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!(
                    "expected an even coordinate count (>= 6) plus a score, found {} fields",
                    fields.len()
                ),
            });
        }
        let mut nums = Vec::with_capacity(fields.len());
        for f in &fields {
            nums.push(parse_coord(f, lineno)?);
        }
        let score = nums.pop().unwrap();
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("score {score} outside [0, 1]"),
            });
        }
        let pts: Vec<(f64, f64)> = nums.chunks(2).map(|c| (c[0], c[1])).collect();
        let polygon = Polygon::from_xy(&pts)
            .map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
        dets.push(Detection { polygon, score });
    }
    Ok(dets)
}

/// Serializes a feature map: magic, version, `C H W` (all little-endian
/// u32), then `C*H*W` little-endian f32 values, channel-major.
pub fn write_fmap(map: &FeatureMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + map.values().len() * 4);
    out.extend_from_slice(&FMAP_MAGIC);
    out.extend_from_slice(&FMAP_VERSION.to_le_bytes());
    out.extend_from_slice(&(map.channels() as u32).to_le_bytes());
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    for &v in map.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

/// Reads a feature map written by [`write_fmap`], validating magic,
/// version, and payload length. Values pass through f32, so a
/// write-then-read round trip is bit-identical.
pub fn read_fmap(bytes: &[u8]) -> Result<FeatureMap> {
    if bytes.len() < 20 {
        return Err(Error::PayloadLength { expected: 20, found: bytes.len() });
    }
    let found: [u8; 4] = bytes[0..4].try_into().unwrap();
    if found != FMAP_MAGIC {
        return Err(Error::BadMagic { expected: FMAP_MAGIC, found });
    }
    let version = read_u32(bytes, 4);
    if version != FMAP_VERSION {
        return Err(Error::BadVersion(version));
    }
    let channels = read_u32(bytes, 8) as usize;
    let height = read_u32(bytes, 12) as usize;
    let width = read_u32(bytes, 16) as usize;
    let count = channels
        .checked_mul(height)
        .and_then(|n| n.checked_mul(width))
        .ok_or_else(|| Error::Dimension("tensor dimensions overflow".into()))?;
    let expected = 20 + count * 4;
    if bytes.len() != expected {
        return Err(Error::PayloadLength { expected, found: bytes.len() });
    }
    let values: Vec<f64> = bytes[20..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    FeatureMap::new(channels, height, width, values)
}

/// Wraps a probability map as a single-channel feature map for FMAP
/// serialization.
pub fn prob_to_fmap(m: &ProbMap) -> FeatureMap {
    FeatureMap::new(1, m.height(), m.width(), m.values().to_vec())
        .expect("a probability map is a valid single-channel tensor")
}

/// Interprets a single-channel feature map with values in `[0, 1]` as a
/// probability map.
pub fn fmap_to_prob(f: &FeatureMap) -> Result<ProbMap> {
    if f.channels() != 1 {
        return Err(Error::Dimension(format!(
            "probability maps are single-channel, found {} channels",
            f.channels()
        )));
    }
    ProbMap::new(f.height(), f.width(), f.values().to_vec())
}

/// Serializes a mask as binary PGM (P5, maxval 255): background 0,
/// foreground 255.
pub fn write_pgm(mask: &BinaryMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    for r in 0..mask.height() {
        for c in 0..mask.width() {
            out.push(if mask.get(r, c) { 255 } else { 0 });
        }
    }
    out
}

/// Reads a binary PGM into a mask; any nonzero pixel is foreground.
/// Header comments (`#` to end of line) are tolerated; the ASCII `P2`
/// variant and maxval above 255 are rejected.
pub fn read_pgm(bytes: &[u8]) -> Result<BinaryMask> {
    let mut pos = 0;
    let mut token = |what: &str| -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse { line: 1, msg: format!("missing {what} in header") });
        }
        String::from_utf8(bytes[start..pos].to_vec())
            .map_err(|_| Error::Parse { line: 1, msg: format!("non-ASCII {what} in header") })
    };
    let magic = token("magic")?;
    if magic != "P5" {
        return Err(Error::UnsupportedFormat(format!("PGM variant {magic:?} (only binary P5)")));
    }
    let dim = |tok: String, what: &str| -> Result<usize> {
        tok.parse::<usize>().map_err(|_| Error::Parse {
            line: 1,
            msg: format!("bad {what} {tok:?} in header"),
        })
    };
    let width = dim(token("width")?, "width")?;
    let height = dim(token("height")?, "height")?;
    let maxval = dim(token("maxval")?, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::UnsupportedFormat(format!("PGM maxval {maxval} (need 1..=255)")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Parse { line: 1, msg: "missing raster separator".into() });
    }
    pos += 1;
    let expected = pos + width * height;
    if bytes.len() != expected {
        return Err(Error::PayloadLength { expected, found: bytes.len() });
    }
    let mut mask = BinaryMask::new(height, width);
    for r in 0..height {
        for c in 0..width {
            mask.set(r, c, bytes[pos + r * width + c] != 0);
        }
    }
    Ok(mask)
}

/// One evaluation unit: an annotation file and, when present, the
/// detection file sharing its numeric stem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalPair {
    /// Annotation file stem, e.g. `img_12`.
    pub name: String,
    /// The shared numeric stem.
    pub stem: u64,
    pub annotations: PathBuf,
    pub detections: Option<PathBuf>,
}

fn numeric_stem(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

/// Text annotation/detection file extensions considered by [`pair_by_stem`].
const TEXT_EXTS: [&str; 2] = ["txt", "gt"];

/// Pairs annotation files (`img_N.txt` or `.gt`) with detection files
/// (`res_img_N.txt`) by their shared numeric stem, sorted by stem.
/// Non-text siblings (masks, tensors) are ignored. An annotation file
/// without a counterpart pairs with `None`; a stem appearing twice in
/// either directory is an error.
pub fn pair_by_stem(ann_dir: &Path, det_dir: &Path) -> Result<Vec<EvalPair>> {
    let scan = |dir: &Path| -> Result<Vec<(u64, PathBuf)>> {
        let mut found: Vec<(u64, PathBuf)> = Vec::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let text_ext = path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| TEXT_EXTS.contains(&e));
            if !path.is_file() || !text_ext {
                continue;
            }
            if let Some(stem) = numeric_stem(&path) {
                if let Some((_, prev)) = found.iter().find(|(s, _)| *s == stem) {
                    return Err(Error::Parameter(format!(
                        "stem {stem} is ambiguous: {} and {}",
                        prev.display(),
                        path.display()
                    )));
                }
                found.push((stem, path));
            }
        }
        found.sort_by_key(|(s, _)| *s);
        Ok(found)
    };
    let dets = scan(det_dir)?;
    let mut pairs = Vec::new();
    for (stem, ann_path) in scan(ann_dir)? {
        let name = ann_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let detections = dets.iter().find(|(s, _)| *s == stem).map(|(_, p)| p.clone());
        pairs.push(EvalPair { name, stem, annotations: ann_path, detections });
    }
    Ok(pairs)
}
