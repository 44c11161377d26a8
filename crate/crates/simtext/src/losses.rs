//! Training objectives with analytic gradients: hard-example-mined binary
//! cross-entropy on the shrunk-mask map, and a cosine repulsion loss that
//! pushes false-positive feature vectors away from the foreground feature
//! center.
//!
//! Everything here is plain 64-bit arithmetic on small dense tensors, so each
//! gradient can be validated against central finite differences (see
//! [`gradcheck`]). Gradients are computed with selection sets and the
//! foreground center held fixed, matching how the finite-difference probes
//! are run.

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ProbMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Predictions are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before taking
/// logarithms.
pub const BCE_CLAMP: f64 = 1e-7;
/// Hard-negative to positive selection ratio.
pub const DEFAULT_NEG_RATIO: usize = 3;
/// Negatives kept when an image has no positive pixels at all.
pub const DEFAULT_ZERO_POSITIVE_FLOOR: usize = 100;
/// Probability threshold above which a background pixel counts as a false
/// positive for the correction loss.
pub const DEFAULT_CORRECTION_THETA: f64 = 0.5;
/// Cosine sharpness of the correction loss.
pub const DEFAULT_CORRECTION_SIGMA: f64 = 1.0;
/// Weight of the mask loss in [`total_loss`].
pub const DEFAULT_LAMBDA_MASK: f64 = 6.0;
/// Weight of the correction loss in [`total_loss`].
pub const DEFAULT_LAMBDA_CORRECTION: f64 = 0.02;

/// Dense `C x H x W` tensor, channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<FeatureMap> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Dimension("feature map dimensions must be positive".into()));
        }
        if values.len() != channels * height * width {
            return Err(Error::Dimension(format!(
                "expected {} values for {channels}x{height}x{width}, got {}",
                channels * height * width,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("feature values must be finite".into()));
        }
        Ok(FeatureMap { channels, height, width, values })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> FeatureMap {
        FeatureMap {
            channels,
            height,
            width,
            values: vec![0.0; channels * height * width],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, ch: usize, r: usize, c: usize) -> f64 {
        self.values[(ch * self.height + r) * self.width + c]
    }

    pub fn set(&mut self, ch: usize, r: usize, c: usize, v: f64) {
        self.values[(ch * self.height + r) * self.width + c] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Feature column at one spatial position (one value per channel).
    pub fn feature_at(&self, r: usize, c: usize) -> Vec<f64> {
        (0..self.channels).map(|ch| self.get(ch, r, c)).collect()
    }
}

/// `3x3` convolution weights, zero-padded application, no bias (the affine
/// stage that follows supplies the shift).
#[derive(Debug, Clone)]
pub struct Conv3x3 {
    out_channels: usize,
    in_channels: usize,
    /// `[out][in][ky][kx]` layout.
    weights: Vec<f64>,
}

impl Conv3x3 {
    pub fn new(out_channels: usize, in_channels: usize, weights: Vec<f64>) -> Result<Conv3x3> {
        if weights.len() != out_channels * in_channels * 9 {
            return Err(Error::Dimension(format!(
                "expected {} kernel values, got {}",
                out_channels * in_channels * 9,
                weights.len()
            )));
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("kernel values must be finite".into()));
        }
        Ok(Conv3x3 { out_channels, in_channels, weights })
    }

    /// Center-one kernel on matching channels: output equals input.
    pub fn identity(channels: usize) -> Conv3x3 {
        let mut weights = vec![0.0; channels * channels * 9];
        for ch in 0..channels {
            weights[(ch * channels + ch) * 9 + 4] = 1.0;
        }
        Conv3x3 { out_channels: channels, in_channels: channels, weights }
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    fn w(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((o * self.in_channels + i) * 3 + ky) * 3 + kx]
    }
}

/// Per-channel scale and shift (inference-mode normalization).
#[derive(Debug, Clone)]
pub struct ChannelAffine {
    scale: Vec<f64>,
    shift: Vec<f64>,
}

impl ChannelAffine {
    pub fn new(scale: Vec<f64>, shift: Vec<f64>) -> Result<ChannelAffine> {
        if scale.len() != shift.len() {
            return Err(Error::Dimension("scale and shift lengths differ".into()));
        }
        if scale.iter().chain(&shift).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("affine parameters must be finite".into()));
        }
        Ok(ChannelAffine { scale, shift })
    }

    pub fn identity(channels: usize) -> ChannelAffine {
        ChannelAffine {
            scale: vec![1.0; channels],
            shift: vec![0.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }
}

/// `1x1` convolution (a per-pixel linear map across channels) with bias.
#[derive(Debug, Clone)]
pub struct Conv1x1 {
    out_channels: usize,
    in_channels: usize,
    /// `[out][in]` layout.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Conv1x1 {
    pub fn new(out_channels: usize, in_channels: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Conv1x1> {
        if weights.len() != out_channels * in_channels || bias.len() != out_channels {
            return Err(Error::Dimension(format!(
                "expected {}+{} weight/bias values, got {}+{}",
                out_channels * in_channels,
                out_channels,
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("weights must be finite".into()));
        }
        Ok(Conv1x1 { out_channels, in_channels, weights, bias })
    }

    pub fn identity(channels: usize) -> Conv1x1 {
        let mut weights = vec![0.0; channels * channels];
        for ch in 0..channels {
            weights[ch * channels + ch] = 1.0;
        }
        Conv1x1 {
            out_channels: channels,
            in_channels: channels,
            weights,
            bias: vec![0.0; channels],
        }
    }
}

/// Smooths a fused feature map: `Conv1x1(ReLU(affine(Conv3x3(f))))`.
pub fn refine_features(
    f: &FeatureMap,
    conv3: &Conv3x3,
    norm: &ChannelAffine,
    conv1: &Conv1x1,
) -> Result<FeatureMap> {
    if conv3.in_channels != f.channels {
        return Err(Error::Dimension(format!(
            "3x3 kernel expects {} input channels, feature map has {}",
            conv3.in_channels, f.channels
        )));
    }
    if norm.channels() != conv3.out_channels {
        return Err(Error::Dimension(format!(
            "affine expects {} channels, 3x3 stage produces {}",
            norm.channels(),
            conv3.out_channels
        )));
    }
    if conv1.in_channels != conv3.out_channels {
        return Err(Error::Dimension(format!(
            "1x1 kernel expects {} input channels, hidden stage has {}",
            conv1.in_channels, conv3.out_channels
        )));
    }
    let (h, w) = (f.height, f.width);
    let mut hidden = FeatureMap::zeros(conv3.out_channels, h, w);
    for o in 0..conv3.out_channels {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for i in 0..conv3.in_channels {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let (sy, sx) = (y as i64 + ky as i64 - 1, x as i64 + kx as i64 - 1);
                            if sy < 0 || sx < 0 || sy >= h as i64 || sx >= w as i64 {
                                continue; // zero padding
                            }
                            acc += conv3.w(o, i, ky, kx) * f.get(i, sy as usize, sx as usize);
                        }
                    }
                }
                let v = (norm.scale[o] * acc + norm.shift[o]).max(0.0);
                hidden.set(o, y, x, v);
            }
        }
    }
    let mut out = FeatureMap::zeros(conv1.out_channels, h, w);
    for q in 0..conv1.out_channels {
        for y in 0..h {
            for x in 0..w {
                let mut acc = conv1.bias[q];
                for o in 0..conv1.in_channels {
                    acc += conv1.weights[q * conv1.in_channels + o] * hidden.get(o, y, x);
                }
                out.set(q, y, x, acc);
            }
        }
    }
    Ok(out)
}

fn check_spatial(fr: &FeatureMap, h: usize, w: usize, what: &str) -> Result<()> {
    if (fr.height, fr.width) != (h, w) {
        return Err(Error::Dimension(format!(
            "feature map is {}x{} but {what} is {h}x{w}",
            fr.height, fr.width
        )));
    }
    Ok(())
}

/// Mean feature column over positive mask positions; `None` when the mask
/// has no positives.
pub fn foreground_center(fr: &FeatureMap, g_down: &BinaryMask) -> Result<Option<Vec<f64>>> {
    check_spatial(fr, g_down.height(), g_down.width(), "mask")?;
    let mut center = vec![0.0; fr.channels];
    let mut n = 0usize;
    for r in 0..fr.height {
        for c in 0..fr.width {
            if g_down.get(r, c) {
                n += 1;
                for ch in 0..fr.channels {
                    center[ch] += fr.get(ch, r, c);
                }
            }
        }
    }
    if n == 0 {
        return Ok(None);
    }
    for v in &mut center {
        *v /= n as f64;
    }
    Ok(Some(center))
}

/// Feature columns at background positions predicted above `theta`, in
/// row-major order. Returns `(linear positions, feature columns)`.
pub fn false_positive_select(
    fr: &FeatureMap,
    g_down: &BinaryMask,
    p_down: &ProbMap,
    theta: f64,
) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    check_spatial(fr, g_down.height(), g_down.width(), "mask")?;
    check_spatial(fr, p_down.height(), p_down.width(), "probability map")?;
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Parameter(format!("theta must lie in [0, 1], got {theta}")));
    }
    let mut positions = Vec::new();
    let mut features = Vec::new();
    for r in 0..fr.height {
        for c in 0..fr.width {
            if !g_down.get(r, c) && p_down.get(r, c) > theta {
                positions.push(r * fr.width + c);
                features.push(fr.feature_at(r, c));
            }
        }
    }
    Ok((positions, features))
}

/// Inputs to the correction loss: the foreground center plus every selected
/// false-positive feature column.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSelection {
    /// Foreground feature center, one value per channel.
    pub center: Vec<f64>,
    /// Row-major linear positions of the selected pixels.
    pub fp_positions: Vec<usize>,
    /// One feature column per selected pixel.
    pub fp_features: Vec<Vec<f64>>,
}

/// Builds the correction-loss selection; `None` when the downsampled mask
/// has no positive pixel (the loss is skipped for such images).
pub fn correction_selection(
    fr: &FeatureMap,
    g_down: &BinaryMask,
    p_down: &ProbMap,
    theta: f64,
) -> Result<Option<FeatureSelection>> {
    let Some(center) = foreground_center(fr, g_down)? else {
        return Ok(None);
    };
    let (fp_positions, fp_features) = false_positive_select(fr, g_down, p_down, theta)?;
    Ok(Some(FeatureSelection { center, fp_positions, fp_features }))
}

/// A scalar objective value plus its gradient with respect to the
/// differentiated input, flattened in that input's natural order.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValueGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Mean sigmoid-of-scaled-cosine between each false-positive feature and the
/// (fixed) foreground center; minimizing it pushes false positives away from
/// the center.
///
/// The gradient is with respect to `fp_features` only, flattened
/// feature-major (`M x C` values); the center is treated as a constant
/// repulsion target. A zero-norm feature contributes `sigmoid(0)` with zero
/// gradient; a zero-norm center makes the whole term 0.
pub fn correction_loss(sel: &FeatureSelection, sigma: f64) -> LossValueGrad {
    let ch = sel.center.len();
    let m = sel.fp_features.len();
    let mut grad = vec![0.0; m * ch];
    let center_norm = norm(&sel.center);
    if m == 0 || center_norm < 1e-300 {
        return LossValueGrad { value: 0.0, grad };
    }
    let mut value = 0.0;
    for (j, f) in sel.fp_features.iter().enumerate() {
        let f_norm = norm(f);
        if f_norm < 1e-300 {
            value += sigmoid(0.0);
            continue;
        }
        let cos = dot(f, &sel.center) / (f_norm * center_norm);
        let s = sigmoid(sigma * cos);
        value += s;
        // d/df sigmoid(sigma*cos) = s(1-s) * sigma * dcos/df,
        // dcos/df_k = g_k/(|f||g|) - cos * f_k/|f|^2.
        let coeff = s * (1.0 - s) * sigma / m as f64;
        for k in 0..ch {
            let dcos = sel.center[k] / (f_norm * center_norm) - cos * f[k] / (f_norm * f_norm);
            grad[j * ch + k] = coeff * dcos;
        }
    }
    LossValueGrad { value: value / m as f64, grad }
}

/// Pixels entering the mined cross-entropy: every positive plus the hardest
/// negatives, as row-major linear indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OhemSelection {
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

impl OhemSelection {
    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty() && self.negatives.is_empty()
    }
}

fn per_pixel_bce(pred: f64, positive: bool) -> f64 {
    let p = pred.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    if positive {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Picks all positives and the `neg_ratio * positives` negatives with the
/// largest per-pixel cross-entropy (ties broken by pixel index). With zero
/// positives the `zero_positive_floor` hardest negatives are kept instead.
pub fn ohem_select(
    pred: &ProbMap,
    gt: &BinaryMask,
    neg_ratio: usize,
    zero_positive_floor: usize,
) -> Result<OhemSelection> {
    if (pred.height(), pred.width()) != (gt.height(), gt.width()) {
        return Err(Error::Dimension("prediction and mask sizes differ".into()));
    }
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for r in 0..gt.height() {
        for c in 0..gt.width() {
            let idx = r * gt.width() + c;
            if gt.get(r, c) {
                positives.push(idx);
            } else {
                negatives.push((per_pixel_bce(pred.get(r, c), false), idx));
            }
        }
    }
    let want = if positives.is_empty() {
        zero_positive_floor
    } else {
        neg_ratio * positives.len()
    };
    negatives.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    negatives.truncate(want);
    let mut negatives: Vec<usize> = negatives.into_iter().map(|(_, idx)| idx).collect();
    negatives.sort_unstable();
    Ok(OhemSelection { positives, negatives })
}

/// Mean binary cross-entropy over a fixed pixel selection, with gradient
/// with respect to the prediction map (zero outside the selection).
pub fn bce_over_selection(pred: &ProbMap, gt: &BinaryMask, sel: &OhemSelection) -> Result<LossValueGrad> {
    if (pred.height(), pred.width()) != (gt.height(), gt.width()) {
        return Err(Error::Dimension("prediction and mask sizes differ".into()));
    }
    let w = pred.width();
    let total = sel.len();
    let mut grad = vec![0.0; pred.height() * w];
    if total == 0 {
        return Ok(LossValueGrad { value: 0.0, grad });
    }
    let mut value = 0.0;
    for &idx in sel.positives.iter().chain(&sel.negatives) {
        let (r, c) = (idx / w, idx % w);
        let positive = gt.get(r, c);
        let raw = pred.get(r, c);
        value += per_pixel_bce(raw, positive);
        // The clamp saturates the gradient outside its range.
        if raw > BCE_CLAMP && raw < 1.0 - BCE_CLAMP {
            grad[idx] = if positive { -1.0 / raw } else { 1.0 / (1.0 - raw) } / total as f64;
        }
    }
    Ok(LossValueGrad { value: value / total as f64, grad })
}

/// Hard-example-mined binary cross-entropy: selection via [`ohem_select`]
/// (with the default zero-positive floor) followed by [`bce_over_selection`].
pub fn bce_ohem(pred: &ProbMap, gt: &BinaryMask, neg_ratio: usize) -> Result<LossValueGrad> {
    let sel = ohem_select(pred, gt, neg_ratio, DEFAULT_ZERO_POSITIVE_FLOOR)?;
    bce_over_selection(pred, gt, &sel)
}

/// Weighted sum of the mask and correction objectives.
pub fn total_loss(l_mask: f64, l_correction: f64, lambda_mask: f64, lambda_correction: f64) -> f64 {
    lambda_mask * l_mask + lambda_correction * l_correction
}

/// Outcome of the finite-difference gradient audit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckReport {
    pub cases: usize,
    pub max_bce_rel_err: f64,
    pub max_correction_rel_err: f64,
}

impl GradcheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.max_bce_rel_err.max(self.max_correction_rel_err)
    }
}

const FD_STEP: f64 = 1e-6;

fn rel_err(a: f64, n: f64) -> f64 {
    let denom = a.abs().max(n.abs());
    if denom < 1e-12 {
        (a - n).abs()
    } else {
        (a - n).abs() / denom
    }
}

/// Compares analytic gradients of the mined cross-entropy and the correction
/// loss against central finite differences on seeded random tensors
/// (channels ≤ 4, spatial dims ≤ 8), holding selections and the center fixed
/// across probes. Uses the default selection threshold and cosine scale.
pub fn gradcheck(cases: usize, seed: u64) -> GradcheckReport {
    gradcheck_with(cases, seed, DEFAULT_CORRECTION_THETA, DEFAULT_CORRECTION_SIGMA)
}

/// [`gradcheck`] with an explicit false-positive selection threshold and
/// cosine scale for the correction-loss cases.
pub fn gradcheck_with(cases: usize, seed: u64, theta: f64, sigma: f64) -> GradcheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_bce: f64 = 0.0;
    let mut max_corr: f64 = 0.0;
    for _ in 0..cases {
        let h = rng.gen_range(2..=8usize);
        let w = rng.gen_range(2..=8usize);
        let ch = rng.gen_range(1..=4usize);

        // Mined cross-entropy: interior predictions keep probes inside the
        // clamp and the [0,1] domain.
        let pred_vals: Vec<f64> = (0..h * w).map(|_| rng.gen_range(0.05..0.95)).collect();
        let pred = ProbMap::new(h, w, pred_vals.clone()).unwrap();
        let mut gt = BinaryMask::new(h, w);
        for r in 0..h {
            for c in 0..w {
                gt.set(r, c, rng.gen_bool(0.4));
            }
        }
        let sel = ohem_select(&pred, &gt, DEFAULT_NEG_RATIO, DEFAULT_ZERO_POSITIVE_FLOOR).unwrap();
        let analytic = bce_over_selection(&pred, &gt, &sel).unwrap();
        for idx in 0..h * w {
            let probe = |delta: f64| {
                let mut v = pred_vals.clone();
                v[idx] += delta;
                let p = ProbMap::new(h, w, v).unwrap();
                bce_over_selection(&p, &gt, &sel).unwrap().value
            };
            let numeric = (probe(FD_STEP) - probe(-FD_STEP)) / (2.0 * FD_STEP);
            max_bce = max_bce.max(rel_err(analytic.grad[idx], numeric));
        }

        // Correction loss: perturb each selected feature entry with the
        // stored center untouched.
        let fr = FeatureMap::new(
            ch,
            h,
            w,
            (0..ch * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let mut g_down = BinaryMask::new(h, w);
        g_down.set(0, 0, true); // at least one positive
        for r in 0..h {
            for c in 0..w {
                if rng.gen_bool(0.3) {
                    g_down.set(r, c, true);
                }
            }
        }
        let p_down = ProbMap::new(h, w, (0..h * w).map(|_| rng.gen()).collect()).unwrap();
        let Some(sel) = correction_selection(&fr, &g_down, &p_down, theta).unwrap() else {
            continue;
        };
        let analytic = correction_loss(&sel, sigma);
        for j in 0..sel.fp_features.len() {
            for k in 0..ch {
                let probe = |delta: f64| {
                    let mut s = sel.clone();
                    s.fp_features[j][k] += delta;
                    correction_loss(&s, sigma).value
                };
                let numeric = (probe(FD_STEP) - probe(-FD_STEP)) / (2.0 * FD_STEP);
                max_corr = max_corr.max(rel_err(analytic.grad[j * ch + k], numeric));
            }
        }
    }
    GradcheckReport {
        cases,
        max_bce_rel_err: max_bce,
        max_correction_rel_err: max_corr,
    }
}
