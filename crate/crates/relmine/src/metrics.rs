//! Binary classification metrics: thresholded confusion counts, per-class
//! and macro precision/recall/F1, and a rank-based AUC with midrank tie
//! handling. Undefined ratios (zero denominators) become 0.0 and raise a
//! flag instead of poisoning downstream aggregation with NaN.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub confusion: Confusion,
    pub accuracy: f64,
    pub precision_pos: f64,
    pub recall_pos: f64,
    pub f1_pos: f64,
    pub precision_neg: f64,
    pub recall_neg: f64,
    pub f1_neg: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub auc: f64,
    /// True when any ratio above had a zero denominator.
    pub zero_denominator: bool,
}

fn check_inputs(probs: &[f64], labels: &[bool]) -> Result<()> {
    if probs.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} probabilities vs {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::Schema("metrics on an empty prediction set".into()));
    }
    for &p in probs {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Schema(format!("probability {p} outside [0, 1]")));
        }
    }
    Ok(())
}

/// Predicted positive when probability >= threshold.
pub fn confusion_at(probs: &[f64], labels: &[bool], threshold: f64) -> Confusion {
    let mut c = Confusion { true_pos: 0, false_pos: 0, true_neg: 0, false_neg: 0 };
    for (&p, &y) in probs.iter().zip(labels) {
        match (p >= threshold, y) {
            (true, true) => c.true_pos += 1,
            (true, false) => c.false_pos += 1,
            (false, false) => c.true_neg += 1,
            (false, true) => c.false_neg += 1,
        }
    }
    c
}

/// Probability that a random positive outranks a random negative, with
/// ties counted half. Computed from midranks; O(n log n). Errors when the
/// labels contain a single class, where the quantity is undefined.
pub fn rank_auc(probs: &[f64], labels: &[bool]) -> Result<f64> {
    check_inputs(probs, labels)?;
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Schema(format!(
            "auc undefined for a single-class sample ({n_pos} positive, {n_neg} negative)"
        )));
    }

    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].partial_cmp(&probs[b]).expect("finite probabilities"));

    // Midranks: each tie group shares the average of its 1-based ranks.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && probs[order[j]] == probs[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }

    let auc = (rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos * n_neg) as f64;
    Ok(auc)
}

impl Metrics {
    pub fn compute(probs: &[f64], labels: &[bool], threshold: f64) -> Result<Metrics> {
        check_inputs(probs, labels)?;
        let auc = rank_auc(probs, labels)?;
        let c = confusion_at(probs, labels, threshold);
        let n = probs.len() as f64;

        let mut flagged = false;
        let mut ratio = |num: usize, den: usize| -> f64 {
            if den == 0 {
                flagged = true;
                0.0
            } else {
                num as f64 / den as f64
            }
        };

        let precision_pos = ratio(c.true_pos, c.true_pos + c.false_pos);
        let recall_pos = ratio(c.true_pos, c.true_pos + c.false_neg);
        let precision_neg = ratio(c.true_neg, c.true_neg + c.false_neg);
        let recall_neg = ratio(c.true_neg, c.true_neg + c.false_pos);
        drop(ratio);

        let mut f1 = |p: f64, r: f64| -> f64 {
            if p + r == 0.0 {
                flagged = true;
                0.0
            } else {
                2.0 * p * r / (p + r)
            }
        };
        let f1_pos = f1(precision_pos, recall_pos);
        let f1_neg = f1(precision_neg, recall_neg);
        drop(f1);

        Ok(Metrics {
            confusion: c,
            accuracy: (c.true_pos + c.true_neg) as f64 / n,
            precision_pos,
            recall_pos,
            f1_pos,
            precision_neg,
            recall_neg,
            f1_neg,
            macro_precision: (precision_pos + precision_neg) / 2.0,
            macro_recall: (recall_pos + recall_neg) / 2.0,
            macro_f1: (f1_pos + f1_neg) / 2.0,
            auc,
            zero_denominator: flagged,
        })
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn hand_computed_confusion_and_ratios() {
        let probs = [0.9, 0.8, 0.6, 0.4, 0.3, 0.2];
        let labels = [true, false, true, true, false, false];
        let m = Metrics::compute(&probs, &labels, 0.5).unwrap();
        assert_eq!(
            m.confusion,
            Confusion { true_pos: 2, false_pos: 1, true_neg: 2, false_neg: 1 }
        );
        assert_eq!(m.accuracy, 4.0 / 6.0);
        assert_eq!(m.precision_pos, 2.0 / 3.0);
        assert_eq!(m.recall_pos, 2.0 / 3.0);
        assert_eq!(m.f1_pos, 2.0 / 3.0);
        assert_eq!(m.macro_f1, 2.0 / 3.0);
        assert!(!m.zero_denominator);
        // Positives at ranks {0.9, 0.6, 0.4} vs negatives {0.8, 0.3, 0.2}:
        // 7 of 9 pairs correctly ordered.
        assert_eq!(m.auc, 7.0 / 9.0);
    }

    #[test]
    fn threshold_is_inclusive() {
        let c = confusion_at(&[0.5], &[true], 0.5);
        assert_eq!(c.true_pos, 1);
    }

    #[test]
    fn tied_probabilities_use_midranks() {
        let probs = [0.5, 0.5];
        let labels = [true, false];
        assert_eq!(rank_auc(&probs, &labels).unwrap(), 0.5);
        // Four-way tie plus separated extremes.
        let probs = [0.9, 0.5, 0.5, 0.5, 0.5, 0.1];
        let labels = [true, true, false, true, false, false];
        assert_eq!(rank_auc(&probs, &labels).unwrap(), oracle::auc(&probs, &labels));
    }

    #[test]
    fn perfect_and_inverted_rankings() {
        let probs = [0.9, 0.8, 0.2, 0.1];
        let labels = [true, true, false, false];
        assert_eq!(rank_auc(&probs, &labels).unwrap(), 1.0);
        let inverted = [false, false, true, true];
        assert_eq!(rank_auc(&probs, &inverted).unwrap(), 0.0);
    }

    #[test]
    fn single_class_auc_is_an_error() {
        assert!(rank_auc(&[0.4, 0.6], &[true, true]).is_err());
        assert!(Metrics::compute(&[0.4, 0.6], &[false, false], 0.5).is_err());
    }

    #[test]
    fn zero_denominator_substitutes_and_flags() {
        // Everything predicted positive: the negative-precision denominator
        // (tn + fn) is zero.
        let probs = [0.9, 0.8];
        let labels = [true, false];
        let m = Metrics::compute(&probs, &labels, 0.5).unwrap();
        assert_eq!(m.precision_neg, 0.0);
        assert!(m.zero_denominator);
    }

    #[test]
    fn invalid_probabilities_rejected() {
        assert!(Metrics::compute(&[1.2], &[true], 0.5).is_err());
        assert!(Metrics::compute(&[0.5, 0.5], &[true], 0.5).is_err());
    }

    #[test]
    fn matches_quadratic_oracle_on_random_data() {
        let mut rng = crate::rng::substream(99, "metrics:test");
        for _ in 0..10 {
            let n = 50;
            // Quantized probabilities force plenty of ties.
            let probs: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..=10) as f64) / 10.0).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.gen::<f64>() < 0.4).collect();
            if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
                continue;
            }
            let m = Metrics::compute(&probs, &labels, 0.5).unwrap();
            assert_eq!(m.auc, oracle::auc(&probs, &labels));
            assert_eq!(m.accuracy, oracle::accuracy(&probs, &labels, 0.5));
        }
    }
}
