//! Walk the training objectives and audit their gradients.
//!
//! Three pieces cooperate: a small refinement head (3x3 conv, per-channel
//! affine, ReLU, 1x1 conv) produces per-pixel features; a correction term
//! pushes features at confidently-wrong pixels away from the foreground
//! mean direction; and the mask loss mines the hardest negatives at a
//! fixed ratio before averaging binary cross-entropy. All gradients here
//! are hand-derived, so the example finishes by checking them against
//! central finite differences. Run with
//!
//! ```text
//! cargo run --example loss_gradcheck
//! ```

use simtext::losses::{
    bce_ohem, correction_loss, correction_selection, gradcheck, ohem_select, refine_features,
    total_loss, ChannelAffine, Conv1x1, Conv3x3, FeatureMap, DEFAULT_CORRECTION_SIGMA,
    DEFAULT_CORRECTION_THETA, DEFAULT_LAMBDA_CORRECTION, DEFAULT_LAMBDA_MASK, DEFAULT_NEG_RATIO,
};
use simtext::raster::{BinaryMask, ProbMap};

fn main() -> simtext::Result<()> {
    // A 2-channel 4x4 feature tile; identity weights keep the arithmetic
    // inspectable while still exercising the full head.
    let features = FeatureMap::new(
        2,
        4,
        4,
        (0..32).map(|i| (i as f64 / 31.0) * 2.0 - 1.0).collect(),
    )?;
    let refined = refine_features(
        &features,
        &Conv3x3::identity(2),
        &ChannelAffine::identity(2),
        &Conv1x1::identity(2),
    )?;
    println!(
        "refined features: {} channels, {}x{} (identity head = ReLU), first row ch0: {:?}",
        refined.channels(),
        refined.height(),
        refined.width(),
        &refined.values()[0..4]
    );

    // Downsampled ground truth and prediction: the top half is text, and
    // the model is confidently wrong at two background pixels.
    let mut gt = BinaryMask::new(4, 4);
    for c in 0..4 {
        gt.set(0, c, true);
        gt.set(1, c, true);
    }
    let mut pred_vals = vec![0.1; 16];
    for i in 0..8 {
        pred_vals[i] = 0.9; // text rows predicted well
    }
    pred_vals[10] = 0.8; // two confident false positives
    pred_vals[13] = 0.7;
    let pred = ProbMap::new(4, 4, pred_vals)?;

    let sel = correction_selection(&refined, &gt, &pred, DEFAULT_CORRECTION_THETA)?
        .expect("foreground pixels exist");
    println!(
        "\ncorrection selection: {} false-positive pixels at {:?}, center dim {}",
        sel.fp_positions.len(),
        sel.fp_positions,
        sel.center.len()
    );
    let corr = correction_loss(&sel, DEFAULT_CORRECTION_SIGMA);
    println!("correction loss {:.4} ({} gradient entries)", corr.value, corr.grad.len());

    // Hard-negative mining keeps every text pixel and only the worst
    // background pixels at a fixed ratio.
    let ohem = ohem_select(&pred, &gt, DEFAULT_NEG_RATIO, 100)?;
    println!(
        "\nmined selection: {} positives + {} negatives (ratio {})",
        ohem.positives.len(),
        ohem.negatives.len(),
        DEFAULT_NEG_RATIO
    );
    let mask_loss = bce_ohem(&pred, &gt, DEFAULT_NEG_RATIO)?;
    println!("mined cross-entropy {:.4}", mask_loss.value);

    let combined = total_loss(
        mask_loss.value,
        corr.value,
        DEFAULT_LAMBDA_MASK,
        DEFAULT_LAMBDA_CORRECTION,
    );
    println!(
        "combined objective {combined:.4} = {DEFAULT_LAMBDA_MASK} * {:.4} + {DEFAULT_LAMBDA_CORRECTION} * {:.4}",
        mask_loss.value, corr.value
    );

    // Finite-difference audit over seeded random tensors.
    let report = gradcheck(20, 7);
    println!(
        "\ngradient audit over {} cases: max rel err {:.2e} (cross-entropy {:.2e}, correction {:.2e})",
        report.cases,
        report.max_rel_err(),
        report.max_bce_rel_err,
        report.max_correction_rel_err
    );
    assert!(report.max_rel_err() < 1e-4, "analytic gradients disagree");
    println!("analytic gradients match finite differences within 1e-4");
    Ok(())
}
