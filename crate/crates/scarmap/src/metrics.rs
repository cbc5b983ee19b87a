//! Segmentation quality measures: pixel confusion counts, Dice coefficient,
//! omission and commission errors, binary cross-entropy, and Spearman rank
//! correlation for the area-stratified analysis.
//!
//! Commission error is computed in two forms. `commission` divides false
//! positives by the reference burned count (FP / (TP + FN)), matching the
//! operational definition used alongside `omission`; `commission_of_detected`
//! is the conventional FP / (TP + FP). The first can exceed 1 when a model
//! grossly over-predicts, which callers should surface rather than clamp.

use ndarray::{Array2, Array3};

use crate::{Error, Result};

/// Probability clamp applied inside [`bce_loss`] so log terms stay finite.
pub const BCE_EPS: f64 = 1e-7;

/// Decision threshold turning probabilities into a binary mask.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// Pixel-level confusion counts for the positive (burned) class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    /// Counts agreement between a binary prediction and reference mask.
    pub fn from_masks(pred: &Array2<u8>, truth: &Array2<u8>) -> Result<Confusion> {
        if pred.dim() != truth.dim() {
            return Err(Error::ShapeMismatch(format!(
                "prediction {:?} vs reference {:?}",
                pred.dim(),
                truth.dim()
            )));
        }
        let mut c = Confusion::default();
        for (&p, &t) in pred.iter().zip(truth.iter()) {
            match (p != 0, t != 0) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    /// Thresholds a probability map at [`DECISION_THRESHOLD`] and counts.
    pub fn from_probs(probs: &Array3<f64>, truth: &Array2<u8>) -> Result<Confusion> {
        let pred = threshold(probs)?;
        Confusion::from_masks(&pred, truth)
    }

    pub fn add_assign(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    /// 2 TP / (2 TP + FP + FN); `None` when both masks are empty.
    pub fn dice(&self) -> Option<f64> {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            None
        } else {
            Some(2.0 * self.tp as f64 / denom as f64)
        }
    }

    /// FN / (TP + FN); `None` when the reference has no burned pixels.
    pub fn omission(&self) -> Option<f64> {
        let denom = self.tp + self.fn_;
        if denom == 0 {
            None
        } else {
            Some(self.fn_ as f64 / denom as f64)
        }
    }

    /// FP / (TP + FN), false positives relative to the reference burned
    /// area; can exceed 1. `None` when the reference has no burned pixels.
    pub fn commission(&self) -> Option<f64> {
        let denom = self.tp + self.fn_;
        if denom == 0 {
            None
        } else {
            Some(self.fp as f64 / denom as f64)
        }
    }

    /// FP / (TP + FP), the conventional commission form; `None` when
    /// nothing was predicted burned.
    pub fn commission_of_detected(&self) -> Option<f64> {
        let denom = self.tp + self.fp;
        if denom == 0 {
            None
        } else {
            Some(self.fp as f64 / denom as f64)
        }
    }
}

/// Binarizes a single-channel probability map.
pub fn threshold(probs: &Array3<f64>) -> Result<Array2<u8>> {
    let (c, h, w) = probs.dim();
    if c != 1 {
        return Err(Error::ShapeMismatch(format!(
            "expected 1 probability channel, got {c}"
        )));
    }
    let mut out = Array2::zeros((h, w));
    for ((r, col), v) in out.indexed_iter_mut() {
        *v = (probs[[0, r, col]] >= DECISION_THRESHOLD) as u8;
    }
    Ok(out)
}

/// Mean binary cross-entropy over all pixels, probabilities clamped to
/// `[BCE_EPS, 1 - BCE_EPS]`.
pub fn bce_loss(probs: &Array3<f64>, truth: &Array2<u8>) -> Result<f64> {
    let (c, h, w) = probs.dim();
    if c != 1 || truth.dim() != (h, w) {
        return Err(Error::ShapeMismatch(format!(
            "probs {:?} vs truth {:?}",
            probs.dim(),
            truth.dim()
        )));
    }
    let n = (h * w) as f64;
    let mut total = 0.0;
    for ((r, col), &t) in truth.indexed_iter() {
        let p = probs[[0, r, col]].clamp(BCE_EPS, 1.0 - BCE_EPS);
        total -= if t != 0 { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(total / n)
}

/// dL/dp of [`bce_loss`]; zero where the clamp is active.
pub fn bce_grad(probs: &Array3<f64>, truth: &Array2<u8>) -> Result<Array3<f64>> {
    let (c, h, w) = probs.dim();
    if c != 1 || truth.dim() != (h, w) {
        return Err(Error::ShapeMismatch(format!(
            "probs {:?} vs truth {:?}",
            probs.dim(),
            truth.dim()
        )));
    }
    let n = (h * w) as f64;
    let mut grad = Array3::zeros(probs.dim());
    for ((r, col), &t) in truth.indexed_iter() {
        let p = probs[[0, r, col]];
        if !(BCE_EPS..=1.0 - BCE_EPS).contains(&p) {
            continue;
        }
        grad[[0, r, col]] = if t != 0 { -1.0 / p } else { 1.0 / (1.0 - p) } / n;
    }
    Ok(grad)
}

/// Ranks with ties sharing their average rank (1-based).
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
/// `None` for fewer than two points or when either variable is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} x values vs {} y values",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Ok(None);
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(ry.iter()) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some(sxy / (sxx * syy).sqrt()))
}
