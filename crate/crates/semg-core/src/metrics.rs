//! Confusion matrix, accuracy, class-balanced accuracy, Matthews Correlation
//! Coefficient, and the naive baseline predictors used as reference points.
//!
//! MCC uses the multiclass covariance-form generalization computed from the
//! confusion matrix; it is 0 whenever the denominator degenerates, which is
//! exactly the constant-predictor case. Balanced accuracy averages per-class
//! recall over the classes actually present in the truth labels, making it
//! insensitive to class prevalence.

use crate::error::{Error, Result};
use crate::rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// `counts[true][predicted]` over `K` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; num_classes]; num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|k| self.counts[k][k]).sum()
    }

    fn row_sums(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|row| row.iter().sum::<u64>() as f64)
            .collect()
    }

    fn col_sums(&self) -> Vec<f64> {
        let k = self.num_classes();
        let mut sums = vec![0.0; k];
        for row in &self.counts {
            for (j, &v) in row.iter().enumerate() {
                sums[j] += v as f64;
            }
        }
        sums
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        self.trace() as f64 / total as f64
    }

    /// Mean per-class recall over classes present in the truth labels.
    pub fn balanced_accuracy(&self) -> f64 {
        let mut acc = 0.0;
        let mut present = 0usize;
        for (k, row) in self.counts.iter().enumerate() {
            let support: u64 = row.iter().sum();
            if support > 0 {
                acc += row[k] as f64 / support as f64;
                present += 1;
            }
        }
        if present == 0 {
            0.0
        } else {
            acc / present as f64
        }
    }

    /// Multiclass MCC: `(c*s - sum_k p_k t_k) / sqrt((s^2 - sum p^2)(s^2 - sum t^2))`,
    /// defined as 0 when the denominator vanishes.
    pub fn mcc(&self) -> f64 {
        let s = self.total() as f64;
        if s == 0.0 {
            return 0.0;
        }
        let c = self.trace() as f64;
        let t = self.row_sums();
        let p = self.col_sums();
        let dot: f64 = t.iter().zip(&p).map(|(a, b)| a * b).sum();
        let t_sq: f64 = t.iter().map(|v| v * v).sum();
        let p_sq: f64 = p.iter().map(|v| v * v).sum();
        let denom = ((s * s - p_sq) * (s * s - t_sq)).sqrt();
        if denom == 0.0 {
            return 0.0;
        }
        (c * s - dot) / denom
    }

    /// CSV rendering: header row `pred0..predK`, one row per true class.
    pub fn to_csv(&self) -> String {
        let k = self.num_classes();
        let mut out = String::new();
        for j in 0..k {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("pred{}", j));
        }
        out.push('\n');
        for row in &self.counts {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Scalar metrics plus the confusion matrix they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub mcc: f64,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        Self {
            accuracy: confusion.accuracy(),
            balanced_accuracy: confusion.balanced_accuracy(),
            mcc: confusion.mcc(),
            confusion,
        }
    }
}

/// Scores a prediction sequence against the truth.
pub fn evaluate(predictions: &[usize], truth: &[usize], num_classes: usize) -> Result<EvalReport> {
    if predictions.len() != truth.len() {
        return Err(Error::Validation(format!(
            "{} predictions vs {} truth labels",
            predictions.len(),
            truth.len()
        )));
    }
    let mut confusion = ConfusionMatrix::new(num_classes);
    for (&p, &t) in predictions.iter().zip(truth) {
        if p >= num_classes || t >= num_classes {
            return Err(Error::Validation(format!(
                "label out of range: predicted {}, truth {}, K = {}",
                p, t, num_classes
            )));
        }
        confusion.record(t, p);
    }
    Ok(EvalReport::from_confusion(confusion))
}

/// The four naive reference predictors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    /// Predictions sampled from the empirical truth distribution.
    WeightedRandom,
    /// Predictions sampled uniformly over all classes.
    UnweightedRandom,
    /// Constant rest (class 0).
    AllZeros,
    /// Constant class 1.
    AllOnes,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::WeightedRandom => "weighted-random",
            BaselineKind::UnweightedRandom => "unweighted-random",
            BaselineKind::AllZeros => "all-zeros",
            BaselineKind::AllOnes => "all-ones",
        }
    }
}

/// Scores a baseline predictor against `truth`.
///
/// Random baselines average their scalar metrics over `trials` seeded draws
/// and sum the confusion counts; constant baselines ignore `trials`.
pub fn baseline_report(
    kind: BaselineKind,
    truth: &[usize],
    num_classes: usize,
    trials: usize,
    seed: u64,
) -> Result<EvalReport> {
    if truth.is_empty() {
        return Err(Error::Validation("empty truth label sequence".into()));
    }
    match kind {
        BaselineKind::AllZeros => evaluate(&vec![0; truth.len()], truth, num_classes),
        BaselineKind::AllOnes => evaluate(&vec![1; truth.len()], truth, num_classes),
        BaselineKind::WeightedRandom | BaselineKind::UnweightedRandom => {
            if trials == 0 {
                return Err(Error::Validation("trials must be >= 1".into()));
            }
            // Cumulative empirical distribution for the weighted case.
            let mut class_counts = vec![0u64; num_classes];
            for &t in truth {
                class_counts[t] += 1;
            }
            let n = truth.len() as u64;

            let mut confusion = ConfusionMatrix::new(num_classes);
            let mut acc = 0.0;
            let mut bal = 0.0;
            let mut mcc = 0.0;
            for trial in 0..trials {
                let mut rng = rng::stream_rng(seed, trial as u64);
                let preds: Vec<usize> = truth
                    .iter()
                    .map(|_| match kind {
                        BaselineKind::UnweightedRandom => rng.random_range(0..num_classes),
                        BaselineKind::WeightedRandom => {
                            let mut u = rng.random_range(0..n);
                            let mut pick = num_classes - 1;
                            for (k, &count) in class_counts.iter().enumerate() {
                                if u < count {
                                    pick = k;
                                    break;
                                }
                                u -= count;
                            }
                            pick
                        }
                        _ => unreachable!(),
                    })
                    .collect();
                let report = evaluate(&preds, truth, num_classes)?;
                acc += report.accuracy;
                bal += report.balanced_accuracy;
                mcc += report.mcc;
                for (row, src) in confusion.counts.iter_mut().zip(&report.confusion.counts) {
                    for (dst, &v) in row.iter_mut().zip(src) {
                        *dst += v;
                    }
                }
            }
            let tf = trials as f64;
            Ok(EvalReport {
                accuracy: acc / tf,
                balanced_accuracy: bal / tf,
                mcc: mcc / tf,
                confusion,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Truth stream with rest prevalence exactly 0.635 and the remaining
    /// mass spread evenly over 53 classes: 67310 rest + 53 * 730.
    pub fn db5_like_truth() -> Vec<usize> {
        let mut truth = vec![0usize; 67_310];
        for k in 1..54 {
            truth.extend(std::iter::repeat_n(k, 730));
        }
        truth
    }

    #[test]
    fn perfect_predictions_score_one() {
        let truth: Vec<usize> = (0..100).map(|i| i % 5).collect();
        let report = evaluate(&truth, &truth, 5).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.balanced_accuracy, 1.0);
        assert!((report.mcc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_error() {
        assert!(evaluate(&[0, 1], &[0], 2).is_err());
    }

    #[test]
    fn all_rest_on_db5_distribution() {
        let truth = db5_like_truth();
        let report = baseline_report(BaselineKind::AllZeros, &truth, 54, 1, 0).unwrap();
        assert!((report.accuracy - 0.635).abs() < 1e-12);
        assert!((report.balanced_accuracy - 1.0 / 54.0).abs() < 1e-12);
        assert_eq!(report.mcc, 0.0);
    }

    #[test]
    fn uniform_random_balanced_accuracy_near_inverse_k() {
        let truth = db5_like_truth();
        let report =
            baseline_report(BaselineKind::UnweightedRandom, &truth, 54, 50, 13).unwrap();
        assert!(
            (report.balanced_accuracy - 0.018876).abs() < 0.001,
            "balanced accuracy {}",
            report.balanced_accuracy
        );
    }

    #[test]
    fn weighted_random_matches_squared_mass() {
        let truth = db5_like_truth();
        let report = baseline_report(BaselineKind::WeightedRandom, &truth, 54, 50, 29).unwrap();
        // Expected accuracy is sum of squared class prevalences.
        let n = truth.len() as f64;
        let mut class_counts = vec![0f64; 54];
        for &t in &truth {
            class_counts[t] += 1.0;
        }
        let expected: f64 = class_counts.iter().map(|c| (c / n) * (c / n)).sum();
        assert!(
            (report.accuracy - expected).abs() < 0.002,
            "accuracy {} vs expected {}",
            report.accuracy,
            expected
        );
        assert!(report.mcc.abs() < 0.001);
    }

    #[test]
    fn all_ones_accuracy_equals_class_prevalence() {
        let truth = db5_like_truth();
        let report = baseline_report(BaselineKind::AllOnes, &truth, 54, 1, 0).unwrap();
        let prevalence = 730.0 / truth.len() as f64;
        assert!((report.accuracy - prevalence).abs() < 1e-12);
        assert_eq!(report.mcc, 0.0);
    }

    #[test]
    fn single_class_truth_with_matching_constant_prediction() {
        let truth = vec![0usize; 50];
        let report = evaluate(&truth, &truth, 3).unwrap();
        assert_eq!(report.accuracy, 1.0);
        // Degenerate denominator rule.
        assert_eq!(report.mcc, 0.0);
    }

    #[test]
    fn mcc_is_zero_for_any_constant_prediction() {
        let truth: Vec<usize> = (0..90).map(|i| i % 3).collect();
        for k in 0..3 {
            let report = evaluate(&vec![k; 90], &truth, 3).unwrap();
            assert_eq!(report.mcc, 0.0, "constant class {}", k);
        }
    }

    #[test]
    fn mcc_symmetric_under_label_permutation() {
        let truth: Vec<usize> = (0..300).map(|i| (i * 7 + i / 13) % 4).collect();
        let preds: Vec<usize> = (0..300).map(|i| (i * 3 + 1) % 4).collect();
        let base = evaluate(&preds, &truth, 4).unwrap().mcc;
        // Apply the same relabeling to both sequences.
        let perm = [2usize, 0, 3, 1];
        let truth_p: Vec<usize> = truth.iter().map(|&t| perm[t]).collect();
        let preds_p: Vec<usize> = preds.iter().map(|&p| perm[p]).collect();
        let permuted = evaluate(&preds_p, &truth_p, 4).unwrap().mcc;
        assert!((base - permuted).abs() < 1e-12);
    }

    #[test]
    fn balanced_accuracy_of_uniform_random_converges() {
        // Law of large numbers at 1e5 samples: recall per class ~ 1/K with
        // binomial noise; 3-sigma band on the mean of per-class recalls.
        let k = 8usize;
        let per_class = 12_500usize;
        let truth: Vec<usize> = (0..k).flat_map(|c| std::iter::repeat_n(c, per_class)).collect();
        let report = baseline_report(BaselineKind::UnweightedRandom, &truth, k, 1, 51).unwrap();
        let p = 1.0 / k as f64;
        let sigma_recall = (p * (1.0 - p) / per_class as f64).sqrt();
        let sigma_mean = sigma_recall / (k as f64).sqrt();
        assert!(
            (report.balanced_accuracy - p).abs() < 3.0 * sigma_mean,
            "balanced accuracy {} vs {}",
            report.balanced_accuracy,
            p
        );
    }

    #[test]
    fn metric_ranges() {
        let truth: Vec<usize> = (0..200).map(|i| i % 6).collect();
        let preds: Vec<usize> = (0..200).map(|i| (i * 5 + 2) % 6).collect();
        let report = evaluate(&preds, &truth, 6).unwrap();
        assert!((0.0..=1.0).contains(&report.accuracy));
        assert!((0.0..=1.0).contains(&report.balanced_accuracy));
        assert!((-1.0..=1.0).contains(&report.mcc));
    }

    #[test]
    fn confusion_csv_shape() {
        let report = evaluate(&[0, 1, 1], &[0, 1, 0], 2).unwrap();
        let csv = report.confusion.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "pred0,pred1");
        assert_eq!(lines[1], "1,1");
        assert_eq!(lines[2], "0,1");
    }
}
