//! Evaluation metrics: confusion counts, G-Mean, F1, exact ROC AUC and the
//! Youden operating point, plus the smoothing/threshold sweep that picks
//! the best result per metric.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{
    apply_threshold, smooth, threshold_grid, DetectorError, DEFAULT_SMOOTHING_WINDOWS,
    DEFAULT_THRESHOLD_COUNT,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} scores/alerts vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("labels contain a single class")]
    SingleClass,
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Detector(#[from] DetectorError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Recall; 0 without positives.
    pub fn tpr(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }

    /// Specificity; 0 without negatives.
    pub fn tnr(&self) -> f64 {
        ratio(self.tn, self.tn + self.fp)
    }

    /// 0 without positive predictions.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }
}

pub fn confusion(alerts: &[bool], labels: &[bool]) -> Result<ConfusionCounts, MetricsError> {
    if alerts.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(alerts.len(), labels.len()));
    }
    let mut c = ConfusionCounts::default();
    for (&a, &l) in alerts.iter().zip(labels) {
        match (a, l) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

pub fn g_mean(c: &ConfusionCounts) -> f64 {
    (c.tpr() * c.tnr()).sqrt()
}

/// F1, defined as 0 when nothing was correctly flagged.
pub fn f1(c: &ConfusionCounts) -> f64 {
    if c.tp == 0 {
        return 0.0;
    }
    let (p, r) = (c.precision(), c.tpr());
    2.0 * p * r / (p + r)
}

fn check_scores(scores: &[f64], labels: &[bool]) -> Result<(u64, u64), MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(scores.len(), labels.len()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFinite(i));
    }
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    Ok((pos, neg))
}

/// One ROC vertex: predicting positive for `score >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub tp: u64,
    pub fp: u64,
    pub tpr: f64,
    pub fpr: f64,
}

/// Exact ROC over every distinct score, thresholds descending.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>, MetricsError> {
    let (pos, neg) = check_scores(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            tp,
            fp,
            tpr: tp as f64 / pos as f64,
            fpr: fp as f64 / neg as f64,
        });
    }
    Ok(points)
}

/// Area under the exact ROC by the trapezoidal rule.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    let (pos, neg) = check_scores(scores, labels)?;
    let roc = roc_curve(scores, labels)?;
    // twice the area in units of one (tp, fp) cell; exact in integers
    let mut twice_area: u128 = 0;
    let (mut tp0, mut fp0) = (0u64, 0u64);
    for p in &roc {
        twice_area += u128::from(p.fp - fp0) * u128::from(p.tp + tp0);
        tp0 = p.tp;
        fp0 = p.fp;
    }
    Ok(twice_area as f64 / (2.0 * pos as f64 * neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YoudenPoint {
    /// Alerts are `score >= threshold` at this operating point.
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub j: f64,
}

/// ROC threshold maximizing `TPR - FPR`, preferring the larger threshold on ties.
pub fn youden_threshold(scores: &[f64], labels: &[bool]) -> Result<YoudenPoint, MetricsError> {
    let (pos, neg) = check_scores(scores, labels)?;
    let roc = roc_curve(scores, labels)?;
    // J * pos * neg = tp * neg - fp * pos, compared exactly
    let key = |p: &RocPoint| i128::from(p.tp) * i128::from(neg) - i128::from(p.fp) * i128::from(pos);
    let mut best = &roc[0];
    for p in &roc[1..] {
        if key(p) > key(best) {
            best = p;
        }
    }
    Ok(YoudenPoint {
        threshold: best.threshold,
        tpr: best.tpr,
        fpr: best.fpr,
        j: best.tpr - best.fpr,
    })
}

/// Smoothing windows and threshold count swept by [`evaluate_run`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationOptions {
    pub smoothing_windows: Vec<usize>,
    pub threshold_count: usize,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        Self {
            smoothing_windows: DEFAULT_SMOOTHING_WINDOWS.to_vec(),
            threshold_count: DEFAULT_THRESHOLD_COUNT,
        }
    }
}

/// Best value of a thresholded metric and where it was found.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub value: f64,
    pub threshold: f64,
    /// `None` means the raw signal.
    pub smoothing: Option<usize>,
    pub counts: ConfusionCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucChoice {
    pub value: f64,
    pub smoothing: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YoudenChoice {
    #[serde(flatten)]
    pub point: YoudenPoint,
    pub smoothing: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub g_mean: ThresholdChoice,
    pub f1: ThresholdChoice,
    /// Absent when the labels hold a single class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc: Option<AucChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub youden: Option<YoudenChoice>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn better(candidate: f64, incumbent: Option<f64>) -> bool {
    incumbent.is_none_or(|best| candidate.partial_cmp(&best) == Some(Ordering::Greater))
}

/// Sweeps the raw signal and each smoothing window; for every variant tries
/// the uniform threshold grid for G-Mean and F1 and computes AUC directly.
/// Each metric keeps its own best variant (first one wins ties).
pub fn evaluate_run(
    scores: &[f64],
    labels: &[bool],
    opts: &EvaluationOptions,
) -> Result<MetricsReport, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(DetectorError::EmptySignal.into());
    }
    let single_class = {
        let pos = labels.iter().filter(|&&l| l).count();
        pos == 0 || pos == labels.len()
    };
    let variants = std::iter::once(None).chain(opts.smoothing_windows.iter().map(|&w| Some(w)));

    let mut best_gm: Option<ThresholdChoice> = None;
    let mut best_f1: Option<ThresholdChoice> = None;
    let mut best_auc: Option<(AucChoice, Vec<f64>)> = None;
    for smoothing in variants {
        let signal = match smoothing {
            Some(w) => smooth(scores, w)?,
            None => scores.to_vec(),
        };
        for threshold in threshold_grid(&signal, opts.threshold_count)? {
            let counts = confusion(&apply_threshold(&signal, threshold), labels)?;
            let choice = |value| ThresholdChoice {
                value,
                threshold,
                smoothing,
                counts,
            };
            let gm = g_mean(&counts);
            if better(gm, best_gm.map(|c| c.value)) {
                best_gm = Some(choice(gm));
            }
            let f = f1(&counts);
            if better(f, best_f1.map(|c| c.value)) {
                best_f1 = Some(choice(f));
            }
        }
        if !single_class {
            let value = auc(&signal, labels)?;
            if better(value, best_auc.as_ref().map(|(c, _)| c.value)) {
                best_auc = Some((AucChoice { value, smoothing }, signal));
            }
        }
    }

    let mut warnings = Vec::new();
    let youden = match &best_auc {
        Some((choice, signal)) => Some(YoudenChoice {
            point: youden_threshold(signal, labels)?,
            smoothing: choice.smoothing,
        }),
        None => {
            warnings.push("labels contain a single class; AUC and Youden point omitted".into());
            None
        }
    };
    Ok(MetricsReport {
        g_mean: best_gm.expect("threshold grid is non-empty"),
        f1: best_f1.expect("threshold grid is non-empty"),
        auc: best_auc.map(|(c, _)| c),
        youden,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Mann-Whitney statistic: share of (positive, negative) pairs ranked
    // correctly, ties counting one half.
    fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn confusion_examples() {
        let c = confusion(&[true, false, true, false], &[true, true, false, false]).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, fp: 1, tn: 1, fn_: 1 });
        let perfect = confusion(&[true, false], &[true, false]).unwrap();
        assert_eq!((perfect.tpr(), perfect.tnr()), (1.0, 1.0));
        let silent = confusion(&[false, false], &[true, false]).unwrap();
        assert_eq!((silent.tp, silent.tpr()), (0, 0.0));
        assert_eq!(confusion(&[true], &[]), Err(MetricsError::LengthMismatch(1, 0)));
    }

    #[test]
    fn gmean_and_f1_examples() {
        assert_eq!(g_mean(&ConfusionCounts { tp: 3, fp: 0, tn: 4, fn_: 0 }), 1.0);
        assert_eq!(g_mean(&ConfusionCounts { tp: 0, fp: 0, tn: 4, fn_: 3 }), 0.0);
        assert_eq!(g_mean(&ConfusionCounts { tp: 1, fp: 1, tn: 1, fn_: 1 }), 0.5);
        assert_eq!(f1(&ConfusionCounts { tp: 0, fp: 5, tn: 1, fn_: 3 }), 0.0);
        assert_eq!(f1(&ConfusionCounts { tp: 4, fp: 0, tn: 1, fn_: 0 }), 1.0);
        assert!((f1(&ConfusionCounts { tp: 1, fp: 1, tn: 0, fn_: 1 }) - 0.5).abs() < 1e-15);
        // no positives in the labels: TPR and hence G-Mean are 0
        assert_eq!(g_mean(&ConfusionCounts { tp: 0, fp: 0, tn: 4, fn_: 0 }), 0.0);
    }

    #[test]
    fn auc_examples() {
        let s = [0.1, 0.4, 0.35, 0.8];
        let l = [false, false, true, true];
        assert_eq!(pairwise_auc(&s, &l), 0.75);
        assert_eq!(auc(&s, &l).unwrap(), 0.75);
        assert_eq!(auc(&[0.1, 0.2, 0.9, 0.95], &l).unwrap(), 1.0);
        assert_eq!(auc(&s, &[true; 4]), Err(MetricsError::SingleClass));
        assert_eq!(auc(&[3.0; 4], &l).unwrap(), 0.5);
    }

    #[test]
    fn youden_examples() {
        let l = [false, false, true, true];
        let y = youden_threshold(&[0.1, 0.4, 0.35, 0.8], &l).unwrap();
        assert_eq!(y.threshold, 0.8);
        assert_eq!((y.tpr, y.fpr, y.j), (0.5, 0.0, 0.5));
        let sep = youden_threshold(&[0.1, 0.2, 0.9, 0.95], &l).unwrap();
        assert_eq!(sep.threshold, 0.9);
        assert_eq!(sep.j, 1.0);
        assert_eq!(youden_threshold(&[2.0; 4], &l).unwrap().threshold, 2.0);
    }

    #[test]
    fn perfect_signal_report() {
        let labels: Vec<bool> = (0..400).map(|i| (150..230).contains(&i)).collect();
        let scores: Vec<f64> = labels.iter().map(|&l| if l { 5.0 } else { 0.0 }).collect();
        let r = evaluate_run(&scores, &labels, &EvaluationOptions::default()).unwrap();
        assert_eq!(r.g_mean.value, 1.0);
        assert_eq!(r.f1.value, 1.0);
        assert_eq!(r.auc.unwrap().value, 1.0);
        assert_eq!(r.g_mean.smoothing, None);
    }

    #[test]
    fn constant_signal_report() {
        let labels: Vec<bool> = (0..50).map(|i| i % 5 == 0).collect();
        let r = evaluate_run(&[1.0; 50], &labels, &EvaluationOptions::default()).unwrap();
        assert_eq!(r.auc.unwrap().value, 0.5);
    }

    #[test]
    fn single_class_omits_auc() {
        let r = evaluate_run(&[0., 1., 2.], &[false; 3], &EvaluationOptions::default()).unwrap();
        assert!(r.auc.is_none() && r.youden.is_none());
        assert_eq!(r.g_mean.value, 0.0);
        assert_eq!(r.warnings.len(), 1);
    }

    // Sparse spikes: one every third record inside the anomaly, one every
    // fiftieth outside. Per-record thresholds can only catch a third of the
    // anomaly, a 100-record mean separates both regimes, and longer windows
    // smear the edges further.
    #[test]
    fn smoothing_choice_follows_the_separating_window() {
        let n = 3000;
        let labels: Vec<bool> = (0..n).map(|i| (1500..2100).contains(&i)).collect();
        let scores: Vec<f64> = (0..n)
            .map(|i| {
                let hit = if labels[i] { i % 3 == 0 } else { i % 50 == 0 };
                if hit { 1.0 } else { 0.0 }
            })
            .collect();
        let r = evaluate_run(&scores, &labels, &EvaluationOptions::default()).unwrap();
        assert_eq!(r.g_mean.smoothing, Some(100));
        let raw_only = EvaluationOptions { smoothing_windows: vec![], ..Default::default() };
        let raw = evaluate_run(&scores, &labels, &raw_only).unwrap();
        assert!(raw.g_mean.value < 0.6);
        assert!(r.g_mean.value > 0.9);
    }

    proptest! {
        #[test]
        fn trapezoid_equals_pairwise(
            data in prop::collection::vec((0u8..12, any::<bool>()), 2..200)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s) / 4.0).collect();
            let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
            match auc(&scores, &labels) {
                Ok(a) => prop_assert!((a - pairwise_auc(&scores, &labels)).abs() < 1e-9),
                Err(e) => prop_assert_eq!(e, MetricsError::SingleClass),
            }
        }

        #[test]
        fn auc_invariant_under_monotone_map(
            data in prop::collection::vec((0.0f64..5.0, any::<bool>()), 2..100)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s).collect();
            let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
            let mapped: Vec<f64> = scores.iter().map(|s| (s * 1.7).exp() + 3.0).collect();
            if let Ok(a) = auc(&scores, &labels) {
                prop_assert!((a - auc(&mapped, &labels).unwrap()).abs() < 1e-12);
            }
        }

        #[test]
        fn reported_best_dominates_grid(
            data in prop::collection::vec((0u8..6, any::<bool>()), 2..150)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s)).collect();
            let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
            let opts = EvaluationOptions { smoothing_windows: vec![3], threshold_count: 10 };
            let r = evaluate_run(&scores, &labels, &opts).unwrap();
            for sig in [scores.clone(), smooth(&scores, 3).unwrap()] {
                for t in threshold_grid(&sig, 10).unwrap() {
                    let c = confusion(&apply_threshold(&sig, t), &labels).unwrap();
                    prop_assert!(r.g_mean.value >= g_mean(&c));
                    prop_assert!(r.f1.value >= f1(&c));
                }
            }
            for v in [r.g_mean.value, r.f1.value] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if let Some(a) = r.auc {
                prop_assert!((0.0..=1.0).contains(&a.value));
            }
        }
    }
}
