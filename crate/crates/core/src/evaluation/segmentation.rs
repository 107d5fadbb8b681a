use crate::error::{invalid, Result};
use crate::imaging::BinaryMask;
use serde::{Deserialize, Serialize};

/// Pixel-count segmentation scores. A field is `None` where its denominator vanishes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub sen: Option<f64>,
    pub acc: f64,
    pub g_mean: Option<f64>,
    pub kappa: Option<f64>,
    pub fdr: Option<f64>,
    pub dice: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn confusion_metrics(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionMetrics> {
    if pred.dims() != gt.dims() {
        return invalid(format!("mask dims differ: {:?} vs {:?}", pred.dims(), gt.dims()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for (&p, &t) in pred.pixels().iter().zip(gt.pixels()) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let total = tp + fp + tn + fn_;
    if total == 0 {
        return invalid("confusion metrics of an empty mask");
    }
    let n = total as f64;
    let acc = (tp + tn) as f64 / n;
    let sen = ratio(tp, tp + fn_);
    let spec = ratio(tn, tn + fp);
    let g_mean = sen.zip(spec).map(|(a, b)| (a * b).sqrt());
    // Chance agreement from the marginal totals of both masks.
    let p_e = ((tp + fn_) as f64 * (tp + fp) as f64 + (tn + fp) as f64 * (tn + fn_) as f64) / (n * n);
    let kappa = (p_e < 1.0).then(|| (acc - p_e) / (1.0 - p_e));
    Ok(ConfusionMetrics {
        tp,
        fp,
        tn,
        fn_,
        sen,
        acc,
        g_mean,
        kappa,
        fdr: ratio(fp, fp + tp),
        dice: ratio(2 * tp, fp + fn_ + 2 * tp),
    })
}

/// Area under the ROC curve traced over every distinct score threshold.
///
/// The trapezoid areas are accumulated as integers (twice the area times
/// `P*N`) so the result equals the pairwise rank statistic bit for bit.
pub fn auc_score(scores: &[f64], gt: &BinaryMask) -> Result<f64> {
    if scores.len() != gt.pixels().len() {
        return invalid(format!("{} scores for a {:?} mask", scores.len(), gt.dims()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return invalid("NaN score");
    }
    let pos = gt.count() as u64;
    let neg = scores.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return invalid("AUC needs both classes in the ground truth");
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let labels = gt.pixels();
    let mut twice_area = 0u64;
    let mut tp = 0u64;
    let mut i = 0;
    while i < order.len() {
        let (mut dp, mut dn) = (0u64, 0u64);
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                dp += 1;
            } else {
                dn += 1;
            }
            i += 1;
        }
        // Trapezoid between (fp, tp) and (fp + dn, tp + dp).
        twice_area += dn * (2 * tp + dp);
        tp += dp;
    }
    Ok(twice_area as f64 / (2 * pos * neg) as f64)
}
