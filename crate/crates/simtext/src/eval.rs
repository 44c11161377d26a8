//! Detection quality and speed measurement: IoU matching with don't-care
//! handling, precision/recall/F-measure, and a single-threaded wall-clock
//! benchmark of the post-processing path.

use crate::error::{Error, Result};
use crate::pipeline::{reconstruct, Annotation, Detection, ReconstructConfig};
use crate::raster::{intersection_over_first, polygon_iou, ProbMap};
use std::fmt;
use std::time::Instant;

/// Default IoU acceptance threshold for matching.
pub const DEFAULT_IOU_THRESH: f64 = 0.5;
/// A detection covering an ignored instance by more than this fraction of
/// its own area is removed before matching.
pub const IGNORE_COVER_THRESH: f64 = 0.5;

/// Match counts for one image or a whole set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    /// False negatives (unmatched non-ignored ground truth).
    pub fn_: usize,
}

impl MatchCounts {
    pub fn add(&mut self, other: MatchCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Greedy one-to-one matching of detections against ground truth.
///
/// Detections are visited by descending score (ties keep input order);
/// each takes the highest-IoU unmatched non-ignored instance, counting a
/// true positive when that IoU strictly exceeds `iou_thresh`. Before
/// matching, any detection whose intersection-over-own-area with an
/// ignored instance exceeds [`IGNORE_COVER_THRESH`] is discarded outright.
/// The result does not depend on ground-truth order.
pub fn match_detections(
    dets: &[Detection],
    gts: &[Annotation],
    iou_thresh: f64,
) -> MatchCounts {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));

    let live: Vec<&Annotation> = gts.iter().filter(|g| !g.ignore()).collect();
    let mut taken = vec![false; live.len()];
    let mut counts = MatchCounts::default();

    for &di in &order {
        let det = &dets[di];
        let covered_by_ignore = gts.iter().filter(|g| g.ignore()).any(|g| {
            intersection_over_first(&det.polygon, g.polygon()) > IGNORE_COVER_THRESH
        });
        if covered_by_ignore {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in live.iter().enumerate() {
            if taken[gi] {
                continue;
            }
            let iou = polygon_iou(&det.polygon, gt.polygon());
            if iou > iou_thresh && best.map_or(true, |(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        match best {
            Some((gi, _)) => {
                taken[gi] = true;
                counts.tp += 1;
            }
            None => counts.fp += 1,
        }
    }
    counts.fn_ = taken.iter().filter(|&&t| !t).count();
    counts
}

/// Precision, recall, and F-measure with zero-denominator guards.
pub fn compute_prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let fmeasure = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, fmeasure)
}

/// Aggregated evaluation over a set of images.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub counts: MatchCounts,
    pub precision: f64,
    pub recall: f64,
    pub fmeasure: f64,
    /// `(image name, counts)` in evaluation order.
    pub per_image: Vec<(String, MatchCounts)>,
}

impl EvalReport {
    pub fn from_per_image(per_image: Vec<(String, MatchCounts)>) -> EvalReport {
        let mut counts = MatchCounts::default();
        for (_, c) in &per_image {
            counts.add(*c);
        }
        let (precision, recall, fmeasure) = compute_prf(counts.tp, counts.fp, counts.fn_);
        EvalReport { counts, precision, recall, fmeasure, per_image }
    }

    /// Machine-readable `key=value` lines.
    pub fn to_kv(&self) -> String {
        format!(
            "tp={}\nfp={}\nfn={}\nprecision={:.6}\nrecall={:.6}\nfmeasure={:.6}\n",
            self.counts.tp,
            self.counts.fp,
            self.counts.fn_,
            self.precision,
            self.recall,
            self.fmeasure
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<24} {:>5} {:>5} {:>5}", "image", "tp", "fp", "fn")?;
        for (name, c) in &self.per_image {
            writeln!(f, "{:<24} {:>5} {:>5} {:>5}", name, c.tp, c.fp, c.fn_)?;
        }
        writeln!(
            f,
            "{:<24} {:>5} {:>5} {:>5}",
            "total", self.counts.tp, self.counts.fp, self.counts.fn_
        )?;
        write!(
            f,
            "precision {:.4}  recall {:.4}  fmeasure {:.4}",
            self.precision, self.recall, self.fmeasure
        )
    }
}

/// Latency statistics from [`bench_postprocess`]; one sample is a full
/// single-threaded pass over every map, warmup passes excluded.
#[derive(Debug, Clone)]
pub struct BenchResult {
    pub iterations: usize,
    pub warmup: usize,
    pub median_us: f64,
    pub mean_us: f64,
    pub p95_us: f64,
    /// Passes per second derived from the median.
    pub fps: f64,
    pub binarize_median_us: f64,
    pub components_median_us: f64,
    pub trace_median_us: f64,
    pub expand_median_us: f64,
    /// Instances processed in one pass.
    pub instances: usize,
}

impl BenchResult {
    pub fn to_kv(&self) -> String {
        format!(
            "iterations={}\nwarmup={}\nmedian_us={:.3}\nmean_us={:.3}\np95_us={:.3}\nfps={:.3}\n\
             binarize_median_us={:.3}\ncomponents_median_us={:.3}\ntrace_median_us={:.3}\n\
             expand_median_us={:.3}\ninstances={}\n",
            self.iterations,
            self.warmup,
            self.median_us,
            self.mean_us,
            self.p95_us,
            self.fps,
            self.binarize_median_us,
            self.components_median_us,
            self.trace_median_us,
            self.expand_median_us,
            self.instances
        )
    }
}

impl fmt::Display for BenchResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "passes {} (warmup {}): median {:.1} us  mean {:.1} us  p95 {:.1} us  ({:.1}/s)",
            self.iterations, self.warmup, self.median_us, self.mean_us, self.p95_us, self.fps
        )?;
        write!(
            f,
            "stages (median us): binarize {:.1}  components {:.1}  trace {:.1}  expand {:.1}  [{} instances/pass]",
            self.binarize_median_us,
            self.components_median_us,
            self.trace_median_us,
            self.expand_median_us,
            self.instances
        )
    }
}

/// Times `iterations` single-threaded reconstruction passes over `maps`,
/// reporting statistics over the passes after the first `warmup` and
/// pooling per-stage samples from the same passes.
pub fn bench_postprocess(
    maps: &[ProbMap],
    cfg: &ReconstructConfig,
    iterations: usize,
    warmup: usize,
) -> Result<BenchResult> {
    if iterations == 0 {
        return Err(Error::Parameter("need at least one iteration".into()));
    }
    if warmup >= iterations {
        return Err(Error::Parameter(format!(
            "warmup ({warmup}) must be smaller than iterations ({iterations})"
        )));
    }
    cfg.validate()?;
    let mut pass_us = Vec::with_capacity(iterations - warmup);
    let mut binarize = Vec::new();
    let mut components = Vec::new();
    let mut trace = Vec::new();
    let mut expand = Vec::new();
    let mut instances = 0;
    for pass in 0..iterations {
        let t = Instant::now();
        let mut pass_instances = 0;
        for m in maps {
            let (_, report) = reconstruct(m, cfg)?;
            pass_instances += report.instances;
            if pass >= warmup {
                binarize.push(report.binarize_us);
                components.push(report.components_us);
                trace.extend(report.trace_samples_us);
                expand.extend(report.expand_samples_us);
            }
        }
        if pass >= warmup {
            pass_us.push(t.elapsed().as_secs_f64() * 1e6);
        }
        instances = pass_instances;
    }
    let median_us = median(&pass_us);
    Ok(BenchResult {
        iterations,
        warmup,
        median_us,
        mean_us: pass_us.iter().sum::<f64>() / pass_us.len() as f64,
        p95_us: percentile(&pass_us, 0.95),
        fps: if median_us > 0.0 { 1e6 / median_us } else { 0.0 },
        binarize_median_us: median(&binarize),
        components_median_us: median(&components),
        trace_median_us: median(&trace),
        expand_median_us: median(&expand),
        instances,
    })
}

fn median(xs: &[f64]) -> f64 {
    percentile(xs, 0.5)
}

/// Nearest-rank percentile on a copy; empty input yields 0.
fn percentile(xs: &[f64], p: f64) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    if p <= 0.5 && sorted.len() % 2 == 0 && (p - 0.5).abs() < 1e-12 {
        let mid = sorted.len() / 2;
        return 0.5 * (sorted[mid - 1] + sorted[mid]);
    }
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polygon;
    use crate::pipeline::IGNORE_SENTINEL;

    fn square(x0: f64, y0: f64, side: f64) -> Polygon {
        Polygon::from_xy(&[
            (x0, y0),
            (x0 + side, y0),
            (x0 + side, y0 + side),
            (x0, y0 + side),
        ])
        .unwrap()
    }

    fn det(p: Polygon, score: f64) -> Detection {
        Detection { polygon: p, score }
    }

    #[test]
    fn single_overlap_is_a_true_positive() {
        // 10x10 det over 10x10 gt shifted by 2: IoU = 64/136 ~ 0.47; use a
        // closer pair for IoU ~0.6: shift 1 -> 81/119 = 0.68.
        let dets = [det(square(1.0, 1.0, 10.0), 0.9)];
        let gts = [Annotation::new(square(0.0, 0.0, 10.0), "t")];
        let c = match_detections(&dets, &gts, 0.5);
        assert_eq!((c.tp, c.fp, c.fn_), (1, 0, 0));
    }

    #[test]
    fn detection_over_ignored_region_is_discarded() {
        let dets = [det(square(1.0, 1.0, 8.0), 0.9)];
        let gts = [Annotation::new(square(0.0, 0.0, 10.0), IGNORE_SENTINEL)];
        let c = match_detections(&dets, &gts, 0.5);
        assert_eq!((c.tp, c.fp, c.fn_), (0, 0, 0));
    }

    #[test]
    fn greedy_gives_the_gt_to_the_higher_score() {
        let dets = [
            det(square(0.5, 0.5, 10.0), 0.8),
            det(square(0.0, 0.0, 10.0), 0.9),
        ];
        let gts = [Annotation::new(square(0.0, 0.0, 10.0), "t")];
        let c = match_detections(&dets, &gts, 0.5);
        assert_eq!((c.tp, c.fp, c.fn_), (1, 1, 0));
    }

    #[test]
    fn score_ties_keep_input_order() {
        // Both dets have the same score; the first in input order wins the
        // single gt and the second becomes the false positive.
        let a = square(0.0, 0.0, 10.0);
        let dets = [det(a.clone(), 0.9), det(a.clone(), 0.9)];
        let gts = [Annotation::new(a, "t")];
        let c = match_detections(&dets, &gts, 0.5);
        assert_eq!((c.tp, c.fp), (1, 1));
    }

    #[test]
    fn exact_detections_have_no_errors() {
        let gts = [
            Annotation::new(square(0.0, 0.0, 12.0), "a"),
            Annotation::new(square(30.0, 5.0, 16.0), "b"),
        ];
        let dets: Vec<Detection> = gts
            .iter()
            .map(|g| det(g.polygon().clone(), 0.9))
            .collect();
        let c = match_detections(&dets, &gts, 0.5);
        assert_eq!((c.tp, c.fp, c.fn_), (2, 0, 0));
    }

    #[test]
    fn matching_ignores_gt_order() {
        let gts_a = [
            Annotation::new(square(0.0, 0.0, 12.0), "a"),
            Annotation::new(square(30.0, 5.0, 16.0), "b"),
            Annotation::new(square(60.0, 0.0, 10.0), IGNORE_SENTINEL),
        ];
        let gts_b = [gts_a[2].clone(), gts_a[1].clone(), gts_a[0].clone()];
        let dets = [
            det(square(1.0, 1.0, 12.0), 0.7),
            det(square(29.0, 5.0, 16.0), 0.9),
            det(square(61.0, 1.0, 9.0), 0.5),
        ];
        let ca = match_detections(&dets, &gts_a, 0.5);
        let cb = match_detections(&dets, &gts_b, 0.5);
        assert_eq!(ca, cb);
    }

    #[test]
    fn precision_and_recall_shrink_as_threshold_rises() {
        let gts = [
            Annotation::new(square(0.0, 0.0, 10.0), "a"),
            Annotation::new(square(30.0, 0.0, 10.0), "b"),
        ];
        let dets = [
            det(square(1.0, 1.0, 10.0), 0.9),  // IoU ~0.68
            det(square(33.0, 3.0, 10.0), 0.8), // IoU ~0.32
        ];
        let mut prev_p = f64::INFINITY;
        let mut prev_r = f64::INFINITY;
        for thresh in [0.2, 0.5, 0.7] {
            let c = match_detections(&dets, &gts, thresh);
            let (p, r, _) = compute_prf(c.tp, c.fp, c.fn_);
            assert!(p <= prev_p && r <= prev_r, "not monotone at {thresh}");
            prev_p = p;
            prev_r = r;
        }
    }

    #[test]
    fn prf_reference_values() {
        let (p, r, f) = compute_prf(2, 1, 1);
        assert!((p - 2.0 / 3.0).abs() < 1e-4);
        assert!((r - 2.0 / 3.0).abs() < 1e-4);
        assert!((f - 2.0 / 3.0).abs() < 1e-4);
        assert_eq!(compute_prf(0, 0, 0), (0.0, 0.0, 0.0));
        assert_eq!(compute_prf(5, 0, 0), (1.0, 1.0, 1.0));
        assert_eq!(compute_prf(0, 3, 2), (0.0, 0.0, 0.0));
    }

    #[test]
    fn fmeasure_satisfies_harmonic_identity() {
        for (tp, fp, fn_) in [(2, 1, 1), (5, 2, 7), (1, 0, 9), (10, 10, 0)] {
            let (p, r, f) = compute_prf(tp, fp, fn_);
            assert!((f * (p + r) - 2.0 * p * r).abs() < 1e-12);
        }
    }

    #[test]
    fn report_aggregates_per_image() {
        let per = vec![
            ("img_1".to_string(), MatchCounts { tp: 2, fp: 1, fn_: 0 }),
            ("img_2".to_string(), MatchCounts { tp: 0, fp: 0, fn_: 1 }),
        ];
        let report = EvalReport::from_per_image(per);
        assert_eq!(report.counts, MatchCounts { tp: 2, fp: 1, fn_: 1 });
        assert!((report.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((report.recall - 2.0 / 3.0).abs() < 1e-12);
        let kv = report.to_kv();
        assert!(kv.contains("tp=2") && kv.contains("fn=1"));
        let table = report.to_string();
        assert!(table.contains("img_1") && table.contains("total"));
    }

    fn blob_map() -> ProbMap {
        let mut m = ProbMap::zeros(48, 48);
        for r in 4..20 {
            for c in 4..24 {
                m.set(r, c, 1.0);
            }
        }
        for r in 28..44 {
            for c in 20..44 {
                m.set(r, c, 0.9);
            }
        }
        m
    }

    #[test]
    fn bench_counts_samples_correctly() {
        let maps = [blob_map()];
        let cfg = ReconstructConfig::default();
        let res = bench_postprocess(&maps, &cfg, 10, 2).unwrap();
        assert_eq!(res.iterations, 10);
        assert_eq!(res.warmup, 2);
        assert_eq!(res.instances, 2);
        assert!(res.median_us > 0.0 && res.fps > 0.0);
        assert!(res.p95_us >= res.median_us);
        assert!(res.expand_median_us > 0.0);
        assert!(bench_postprocess(&maps, &cfg, 0, 0).is_err());
        assert!(bench_postprocess(&maps, &cfg, 5, 5).is_err());
    }

    #[test]
    fn bench_leaves_outputs_deterministic() {
        use crate::pipeline::ExpandMethod;
        let maps = [blob_map()];
        let cfg = ReconstructConfig::default();
        let (before, _) = reconstruct(&maps[0], &cfg).unwrap();
        let _ = bench_postprocess(&maps, &cfg, 3, 1).unwrap();
        let (after, _) = reconstruct(&maps[0], &cfg).unwrap();
        assert_eq!(before, after);

        let offset_cfg = ReconstructConfig { method: ExpandMethod::Offset, ..cfg };
        let a = bench_postprocess(&maps, &cfg, 3, 1).unwrap();
        let b = bench_postprocess(&maps, &offset_cfg, 3, 1).unwrap();
        assert_eq!(a.instances, b.instances);
    }

    #[test]
    fn percentile_nearest_rank() {
        let xs = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(median(&xs), 3.0);
        assert_eq!(percentile(&xs, 0.95), 5.0);
        let even = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(median(&even), 2.5);
        assert_eq!(percentile(&[], 0.95), 0.0);
    }
}
