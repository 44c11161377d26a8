//! Score detections against ground truth the dataset way.
//!
//! Matching is greedy by score with one-to-one assignment above an IoU
//! threshold, and regions marked unreadable ("###") are don't-cares: any
//! detection mostly covered by one is silently dropped rather than counted
//! as a false positive. Run with
//!
//! ```text
//! cargo run --example detection_eval
//! ```

use simtext::eval::{compute_prf, match_detections, EvalReport, DEFAULT_IOU_THRESH};
use simtext::formats::{parse_annotations, read_detections, DatasetKind};
use simtext::pipeline::Detection;

fn main() -> simtext::Result<()> {
    // Ground truth: two readable words and one unreadable region.
    let gt_text = "\
10,10,90,10,90,40,10,40,alpha
110,10,190,10,190,40,110,40,beta
10,60,60,60,60,90,10,90,###
";
    let gts = parse_annotations(DatasetKind::IcdarQuad, gt_text)?;

    // Detections, as the reconstruction stage would write them: a good hit,
    // a slightly shifted hit, a duplicate, and a box over the don't-care.
    let det_text = "\
12,11,91,11,91,41,12,41,0.9500
115,12,193,12,193,43,115,43,0.9000
118,14,195,14,195,45,118,45,0.7000
12,62,58,62,58,88,12,88,0.8000
";
    let dets: Vec<Detection> = read_detections(det_text)?;

    println!("{} ground-truth regions, {} detections\n", gts.len(), dets.len());
    for thresh in [0.3, DEFAULT_IOU_THRESH, 0.7] {
        let c = match_detections(&dets, &gts, thresh);
        let (p, r, f) = compute_prf(c.tp, c.fp, c.fn_);
        println!(
            "IoU > {thresh:.1}: tp={} fp={} fn={}  P={p:.3} R={r:.3} F={f:.3}",
            c.tp, c.fp, c.fn_
        );
    }
    println!(
        "\nNote the duplicate detection of the second word counts as a false \
         positive once its target is taken, and the detection over the \
         unreadable region never counts either way."
    );

    // The same counts aggregated across a small image set, as the eval
    // command prints them.
    let per_image = vec![
        ("img_1".to_string(), match_detections(&dets, &gts, DEFAULT_IOU_THRESH)),
        ("img_2".to_string(), match_detections(&dets[..1], &gts[..1], DEFAULT_IOU_THRESH)),
    ];
    let report = EvalReport::from_per_image(per_image);
    println!("\n{report}");
    Ok(())
}
