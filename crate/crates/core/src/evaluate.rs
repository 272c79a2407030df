//! Detector evaluation: confusion matrices, ROC and precision-recall curves,
//! prevalence thresholding, outcome maps and PCA projection.
//!
//! ROC area is accumulated in integers (trapezoids over tie groups), which
//! makes it exactly the Mann-Whitney concordance probability. PR area is the
//! step-integrated average precision, never a linear interpolation, so a
//! random scorer's PR area converges to the class prevalence.

use nalgebra::SymmetricEigen;
use ndarray::Array2;

use crate::annotation::{AnnotationMask, UNCERTAIN_CLASS};
use crate::detect::ScoreMap;
use crate::error::{Error, Result};
use crate::spectrum::Spectrum;
use crate::stats::{dot, sample_mean_covariance};

/// How uncertain-class pixels enter the evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UncertainPolicy {
    /// Neither positive nor negative; dropped from every count.
    #[default]
    Exclude,
    /// Counted as target pixels.
    Positive,
    /// Counted as background pixels.
    Negative,
}

impl UncertainPolicy {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exclude" => Some(Self::Exclude),
            "positive" => Some(Self::Positive),
            "negative" => Some(Self::Negative),
            _ => None,
        }
    }
}

/// Per-pixel ground truth: which pixels are positive and which take part in
/// the evaluation at all.
#[derive(Debug, Clone)]
pub struct TruthMask {
    positive: Array2<bool>,
    evaluated: Array2<bool>,
}

impl TruthMask {
    /// Derive truth for one target class from an annotation, applying the
    /// uncertain-class policy.
    pub fn from_annotation(
        annotation: &AnnotationMask,
        target_class: u8,
        policy: UncertainPolicy,
    ) -> Self {
        let positive = annotation.labels().mapv(|l| {
            l == target_class || (l == UNCERTAIN_CLASS && policy == UncertainPolicy::Positive)
        });
        let evaluated = annotation
            .labels()
            .mapv(|l| l != UNCERTAIN_CLASS || policy != UncertainPolicy::Exclude);
        Self {
            positive,
            evaluated,
        }
    }

    /// All pixels evaluated; `positive` marks the targets.
    pub fn from_positive(positive: Array2<bool>) -> Self {
        let evaluated = Array2::from_elem(positive.dim(), true);
        Self {
            positive,
            evaluated,
        }
    }

    pub fn lines(&self) -> usize {
        self.positive.dim().0
    }

    pub fn samples(&self) -> usize {
        self.positive.dim().1
    }

    pub fn is_positive(&self, line: usize, sample: usize) -> bool {
        self.positive[(line, sample)]
    }

    pub fn is_evaluated(&self, line: usize, sample: usize) -> bool {
        self.evaluated[(line, sample)]
    }

    pub fn positive_count(&self) -> usize {
        self.positive
            .iter()
            .zip(self.evaluated.iter())
            .filter(|(p, e)| **p && **e)
            .count()
    }

    pub fn evaluated_count(&self) -> usize {
        self.evaluated.iter().filter(|e| **e).count()
    }

    /// Actual positive fraction among evaluated pixels.
    pub fn prevalence(&self) -> f64 {
        self.positive_count() as f64 / self.evaluated_count() as f64
    }

    fn check_shape(&self, scores: &ScoreMap) -> Result<()> {
        if scores.lines() != self.lines() || scores.samples() != self.samples() {
            return Err(Error::ShapeMismatch {
                lines: self.lines(),
                samples: self.samples(),
                got_lines: scores.lines(),
                got_samples: scores.samples(),
            });
        }
        Ok(())
    }
}

/// Scores of evaluated pixels paired with their truth labels.
pub fn labeled_scores(scores: &ScoreMap, truth: &TruthMask) -> Result<Vec<(f64, bool)>> {
    truth.check_shape(scores)?;
    Ok(scores
        .flat()
        .iter()
        .zip(truth.positive.iter().zip(truth.evaluated.iter()))
        .filter(|(_, (_, &e))| e)
        .map(|(&s, (&p, _))| (s, p))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    pub fn tpr(&self) -> f64 {
        self.true_pos as f64 / (self.true_pos + self.false_neg) as f64
    }

    pub fn fpr(&self) -> f64 {
        self.false_pos as f64 / (self.false_pos + self.true_neg) as f64
    }

    pub fn precision(&self) -> f64 {
        self.true_pos as f64 / (self.true_pos + self.false_pos) as f64
    }

    pub fn recall(&self) -> f64 {
        self.tpr()
    }
}

/// Count outcomes when predicting positive for `score >= eta` over evaluated
/// pixels.
pub fn confusion_at_threshold(
    scores: &ScoreMap,
    truth: &TruthMask,
    eta: f64,
) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix {
        true_pos: 0,
        false_pos: 0,
        true_neg: 0,
        false_neg: 0,
    };
    for (score, positive) in labeled_scores(scores, truth)? {
        match (score >= eta, positive) {
            (true, true) => cm.true_pos += 1,
            (true, false) => cm.false_pos += 1,
            (false, false) => cm.true_neg += 1,
            (false, true) => cm.false_neg += 1,
        }
    }
    Ok(cm)
}

/// A performance curve swept over score thresholds, with its area.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    /// (x, y) pairs; x is non-decreasing.
    pub points: Vec<(f64, f64)>,
    /// Threshold that produced each point.
    pub thresholds: Vec<f64>,
    pub auc: f64,
}

/// Distinct descending thresholds with the positive/negative counts they add.
fn threshold_groups(mut pairs: Vec<(f64, bool)>) -> Vec<(f64, usize, usize)> {
    pairs.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for (score, positive) in pairs {
        match groups.last_mut() {
            Some((t, pos, neg)) if *t == score => {
                if positive {
                    *pos += 1;
                } else {
                    *neg += 1;
                }
            }
            _ => groups.push((score, positive as usize, !positive as usize)),
        }
    }
    groups
}

/// ROC curve over all distinct thresholds plus the two infinite endpoints.
/// The area equals the probability that a random positive outscores a random
/// negative (ties counted half).
pub fn roc_curve(scores: &ScoreMap, truth: &TruthMask) -> Result<Curve> {
    roc_curve_from_pairs(labeled_scores(scores, truth)?)
}

pub fn roc_curve_from_pairs(pairs: Vec<(f64, bool)>) -> Result<Curve> {
    let total_pos: usize = pairs.iter().filter(|(_, p)| *p).count();
    let total_neg = pairs.len() - total_pos;
    if total_pos == 0 || total_neg == 0 {
        return Err(Error::SingleClass);
    }
    let groups = threshold_groups(pairs);

    let mut thresholds = vec![f64::INFINITY];
    let mut points = vec![(0.0, 0.0)];
    let mut tp = 0usize;
    let mut fp = 0usize;
    // Twice the unnormalized area; integer so the trapezoid sum is exact.
    let mut area2: u128 = 0;
    for (threshold, pos, neg) in groups {
        area2 += (neg as u128) * ((2 * tp + pos) as u128);
        tp += pos;
        fp += neg;
        thresholds.push(threshold);
        points.push((fp as f64 / total_neg as f64, tp as f64 / total_pos as f64));
    }
    thresholds.push(f64::NEG_INFINITY);
    points.push((1.0, 1.0));

    let auc = area2 as f64 / (2 * total_pos as u128 * total_neg as u128) as f64;
    Ok(Curve {
        points,
        thresholds,
        auc,
    })
}

/// Precision-recall curve over all distinct thresholds, descending. The area
/// is step-integrated average precision.
pub fn pr_curve(scores: &ScoreMap, truth: &TruthMask) -> Result<Curve> {
    pr_curve_from_pairs(labeled_scores(scores, truth)?)
}

pub fn pr_curve_from_pairs(pairs: Vec<(f64, bool)>) -> Result<Curve> {
    let total_pos: usize = pairs.iter().filter(|(_, p)| *p).count();
    if total_pos == 0 {
        return Err(Error::NoPositives);
    }
    let groups = threshold_groups(pairs);

    let mut thresholds = Vec::with_capacity(groups.len());
    let mut points = Vec::with_capacity(groups.len());
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut auc = 0.0;
    let mut prev_recall = 0.0;
    for (threshold, pos, neg) in groups {
        tp += pos;
        fp += neg;
        let recall = tp as f64 / total_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        auc += (recall - prev_recall) * precision;
        prev_recall = recall;
        thresholds.push(threshold);
        points.push((recall, precision));
    }
    Ok(Curve {
        points,
        thresholds,
        auc,
    })
}

/// Threshold flagging approximately the given fraction of the scores: the
/// k-th largest value for `k = round(prevalence * n)` (at least one). With
/// distinct scores, predicting `score >= eta` flags exactly k pixels; tied
/// scores at the cut are all flagged.
pub fn threshold_at_prevalence(scores: &[f64], prevalence: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    if !(prevalence > 0.0 && prevalence <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "prevalence {prevalence} outside (0, 1]"
        )));
    }
    let n = scores.len();
    let k = ((prevalence * n as f64).round() as usize).clamp(1, n);
    let mut sorted = scores.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    Ok(sorted[k - 1])
}

/// Prevalence threshold computed over evaluated pixels only.
pub fn threshold_for_map(scores: &ScoreMap, truth: &TruthMask, prevalence: f64) -> Result<f64> {
    let evaluated: Vec<f64> = labeled_scores(scores, truth)?
        .into_iter()
        .map(|(s, _)| s)
        .collect();
    threshold_at_prevalence(&evaluated, prevalence)
}

/// Outcome codes used by [`DetectionMap`].
pub mod outcome {
    /// Pixel excluded from evaluation.
    pub const NONE: u8 = 0;
    pub const TRUE_POS: u8 = 1;
    pub const TRUE_NEG: u8 = 2;
    pub const FALSE_NEG: u8 = 3;
    pub const FALSE_POS: u8 = 4;
}

/// Per-pixel confusion outcome at a fixed threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionMap {
    pub codes: Array2<u8>,
}

impl DetectionMap {
    pub fn counts(&self) -> ConfusionMatrix {
        let mut cm = ConfusionMatrix {
            true_pos: 0,
            false_pos: 0,
            true_neg: 0,
            false_neg: 0,
        };
        for &code in self.codes.iter() {
            match code {
                outcome::TRUE_POS => cm.true_pos += 1,
                outcome::TRUE_NEG => cm.true_neg += 1,
                outcome::FALSE_NEG => cm.false_neg += 1,
                outcome::FALSE_POS => cm.false_pos += 1,
                _ => {}
            }
        }
        cm
    }
}

/// Classify each evaluated pixel at threshold `eta`.
pub fn detection_map(scores: &ScoreMap, truth: &TruthMask, eta: f64) -> Result<DetectionMap> {
    truth.check_shape(scores)?;
    let mut codes = Array2::from_elem((scores.lines(), scores.samples()), outcome::NONE);
    for line in 0..scores.lines() {
        for sample in 0..scores.samples() {
            if !truth.is_evaluated(line, sample) {
                continue;
            }
            let flagged = scores.scores()[(line, sample)] >= eta;
            let positive = truth.is_positive(line, sample);
            codes[(line, sample)] = match (flagged, positive) {
                (true, true) => outcome::TRUE_POS,
                (true, false) => outcome::FALSE_POS,
                (false, true) => outcome::FALSE_NEG,
                (false, false) => outcome::TRUE_NEG,
            };
        }
    }
    Ok(DetectionMap { codes })
}

/// Codes of the two-detector comparison map.
pub mod compare_code {
    pub const NONE: u8 = 0;
    /// Detected by the algorithm under test (red).
    pub const BOTH_OR_A_TP: u8 = 1;
    /// Missed by the algorithm, caught by the reference (orange).
    pub const ONLY_REF_TP: u8 = 2;
    /// Missed by both (blue).
    pub const BOTH_FN: u8 = 3;
    /// False positive of the algorithm (grey).
    pub const A_FP: u8 = 4;
    /// False positive of the reference correctly ignored by the algorithm
    /// (green).
    pub const REF_FP_A_TN: u8 = 5;
}

/// Joint outcome of an algorithm versus a reference detector, both
/// thresholded by the same prevalence rule over evaluated pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonMap {
    pub codes: Array2<u8>,
}

pub fn compare_map(
    algorithm: &ScoreMap,
    reference: &ScoreMap,
    truth: &TruthMask,
    prevalence: f64,
) -> Result<ComparisonMap> {
    truth.check_shape(algorithm)?;
    truth.check_shape(reference)?;
    let eta_a = threshold_for_map(algorithm, truth, prevalence)?;
    let eta_r = threshold_for_map(reference, truth, prevalence)?;
    let a = detection_map(algorithm, truth, eta_a)?;
    let r = detection_map(reference, truth, eta_r)?;

    let mut codes = Array2::from_elem(a.codes.dim(), compare_code::NONE);
    for ((line, sample), code) in codes.indexed_iter_mut() {
        let ac = a.codes[(line, sample)];
        let rc = r.codes[(line, sample)];
        *code = match (ac, rc) {
            (outcome::TRUE_POS, _) => compare_code::BOTH_OR_A_TP,
            (outcome::FALSE_NEG, outcome::TRUE_POS) => compare_code::ONLY_REF_TP,
            (outcome::FALSE_NEG, outcome::FALSE_NEG) => compare_code::BOTH_FN,
            (outcome::FALSE_POS, _) => compare_code::A_FP,
            (outcome::TRUE_NEG, outcome::FALSE_POS) => compare_code::REF_FP_A_TN,
            _ => compare_code::NONE,
        };
    }
    Ok(ComparisonMap { codes })
}

/// Principal components of a pixel set: mean, descending-eigenvalue
/// components, and the convention that each component's largest-magnitude
/// loading is positive.
#[derive(Debug, Clone)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        self.components.iter().map(|c| dot(&centered, c)).collect()
    }
}

/// Fit a PCA model on a flat pixel-major buffer.
pub fn pca_fit(data: &[f64], dim: usize, k: usize) -> Result<PcaModel> {
    let n = data.len() / dim;
    if n < k + 1 {
        return Err(Error::TooFewSamples {
            needed: k + 1,
            got: n,
        });
    }
    let (mean, covariance) = sample_mean_covariance(data, dim)?;
    let eigen = SymmetricEigen::new(covariance);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_unstable_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));

    let mut components = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let mut component: Vec<f64> = eigen.eigenvectors.column(idx).iter().copied().collect();
        let dominant = component
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.abs().total_cmp(&b.abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if component[dominant] < 0.0 {
            for c in &mut component {
                *c = -*c;
            }
        }
        components.push(component);
        eigenvalues.push(eigen.eigenvalues[idx]);
    }
    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
    })
}

/// Mean-centered projection of the pixels onto their top-k principal
/// components.
pub fn pca_project(pixels: &[Spectrum], k: usize) -> Result<Vec<Vec<f64>>> {
    if pixels.is_empty() {
        return Err(Error::TooFewSamples {
            needed: k + 1,
            got: 0,
        });
    }
    let dim = pixels[0].len();
    for p in pixels {
        if p.len() != dim {
            return Err(Error::DimensionMismatch(dim, p.len()));
        }
    }
    let mut flat = Vec::with_capacity(pixels.len() * dim);
    for p in pixels {
        flat.extend_from_slice(p.values());
    }
    let model = pca_fit(&flat, dim, k)?;
    Ok(pixels.iter().map(|p| model.transform(p.values())).collect())
}
