//! Evaluation metrics: confusion matrix, per-class and averaged
//! precision/recall/F1 (plus specificity), and one-vs-rest ROC curves with
//! micro/macro AUC.
//!
//! Zero-denominator metrics report 0.0 with an `undefined` flag instead of
//! NaN. Tied scores follow the pairwise (rank-sum) convention, which the
//! threshold-group trapezoid sweep below reproduces exactly.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Rows are true labels, columns are predictions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn at(&self, truth: usize, pred: usize) -> usize {
        self.counts[truth * self.classes + pred]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// One-vs-rest (tp, fp, fn, tn) for a class.
    pub fn ovr(&self, class: usize) -> (usize, usize, usize, usize) {
        let p = self.classes;
        let tp = self.at(class, class);
        let fp: usize = (0..p).filter(|&t| t != class).map(|t| self.at(t, class)).sum();
        let fun: usize = (0..p).filter(|&c| c != class).map(|c| self.at(class, c)).sum();
        let tn = self.total() - tp - fp - fun;
        (tp, fp, fun, tn)
    }
}

pub fn confusion(truth: &[usize], pred: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::Input(format!(
            "confusion: {} true labels vs {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    let mut counts = vec![0usize; classes * classes];
    for (&t, &p) in truth.iter().zip(pred) {
        if t >= classes || p >= classes {
            return Err(Error::Input(format!(
                "confusion: label pair ({t}, {p}) out of range for {classes} classes"
            )));
        }
        counts[t * classes + p] += 1;
    }
    Ok(ConfusionMatrix { classes, counts })
}

/// A rate that may be undefined (zero denominator); the value is then 0.0
/// and the flag is set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rate {
    pub value: f64,
    pub undefined: bool,
}

impl Rate {
    fn from(num: usize, den: usize) -> Rate {
        if den == 0 {
            Rate {
                value: 0.0,
                undefined: true,
            }
        } else {
            Rate {
                value: num as f64 / den as f64,
                undefined: false,
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct ClassMetrics {
    pub precision: Rate,
    /// Recall; the same quantity reported as sensitivity.
    pub recall: Rate,
    pub f1: Rate,
    pub specificity: Rate,
    pub support: usize,
}

#[derive(Clone, Debug)]
pub struct Prf1Report {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    /// Unweighted means over classes.
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Computed from pooled one-vs-rest counts.
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
}

pub fn prf1(cm: &ConfusionMatrix) -> Prf1Report {
    let p = cm.classes;
    let mut per_class = Vec::with_capacity(p);
    let (mut tp_sum, mut fp_sum, mut fn_sum) = (0usize, 0usize, 0usize);
    for c in 0..p {
        let (tp, fp, fun, tn) = cm.ovr(c);
        tp_sum += tp;
        fp_sum += fp;
        fn_sum += fun;
        let precision = Rate::from(tp, tp + fp);
        let recall = Rate::from(tp, tp + fun);
        let f1 = if precision.undefined || recall.undefined || precision.value + recall.value == 0.0
        {
            Rate {
                value: 0.0,
                undefined: true,
            }
        } else {
            Rate {
                value: 2.0 * precision.value * recall.value / (precision.value + recall.value),
                undefined: false,
            }
        };
        per_class.push(ClassMetrics {
            precision,
            recall,
            f1,
            specificity: Rate::from(tn, tn + fp),
            support: tp + fun,
        });
    }
    let total = cm.total();
    let correct: usize = (0..p).map(|c| cm.at(c, c)).sum();
    let mean = |f: &dyn Fn(&ClassMetrics) -> f64| -> f64 {
        per_class.iter().map(|m| f(m)).sum::<f64>() / p as f64
    };
    let micro_precision = if tp_sum + fp_sum == 0 {
        0.0
    } else {
        tp_sum as f64 / (tp_sum + fp_sum) as f64
    };
    let micro_recall = if tp_sum + fn_sum == 0 {
        0.0
    } else {
        tp_sum as f64 / (tp_sum + fn_sum) as f64
    };
    let micro_f1 = if micro_precision + micro_recall == 0.0 {
        0.0
    } else {
        2.0 * micro_precision * micro_recall / (micro_precision + micro_recall)
    };
    Prf1Report {
        accuracy: if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        },
        macro_precision: mean(&|m| m.precision.value),
        macro_recall: mean(&|m| m.recall.value),
        macro_f1: mean(&|m| m.f1.value),
        micro_precision,
        micro_recall,
        micro_f1,
        per_class,
    }
}

/// One ROC curve: points from (0,0) to (1,1) and the trapezoid AUC.
#[derive(Clone, Debug)]
pub struct RocCurve {
    /// (false positive rate, true positive rate) per threshold group.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Binary ROC via a descending threshold sweep with tied scores grouped,
/// which makes the trapezoid AUC equal the pairwise rank-sum statistic.
pub fn roc_binary(scores: &[f64], positive: &[bool]) -> Option<RocCurve> {
    let pos = positive.iter().filter(|&&b| b).count();
    let neg = positive.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let (mut last_fpr, mut last_tpr) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        // advance through the tie group
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if positive[order[j]] {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let tpr = tp as f64 / pos as f64;
        let fpr = fp as f64 / neg as f64;
        auc += (fpr - last_fpr) * (tpr + last_tpr) / 2.0;
        points.push((fpr, tpr));
        last_fpr = fpr;
        last_tpr = tpr;
        i = j;
    }
    Some(RocCurve { points, auc })
}

#[derive(Clone, Debug)]
pub struct RocReport {
    /// Per-class curve; `None` when the class is absent from the truth
    /// (AUC undefined, omitted from the macro average).
    pub per_class: Vec<Option<RocCurve>>,
    pub micro: Option<RocCurve>,
    /// Mean of the defined per-class AUCs.
    pub macro_auc: Option<f64>,
}

/// One-vs-rest ROC analysis of score rows against integer labels.
pub fn roc_auc(scores: &Tensor, labels: &[usize]) -> Result<RocReport> {
    let [n, p] = scores.dims2("roc")?;
    if labels.len() != n {
        return Err(Error::Input(format!(
            "roc: {n} score rows vs {} labels",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&g| g >= p) {
        return Err(Error::Input(format!("roc: label {bad} out of range")));
    }
    scores.check_finite("roc scores")?;
    let mut per_class = Vec::with_capacity(p);
    for c in 0..p {
        let col: Vec<f64> = (0..n).map(|i| scores.data()[i * p + c]).collect();
        let pos: Vec<bool> = labels.iter().map(|&g| g == c).collect();
        per_class.push(roc_binary(&col, &pos));
    }
    // Micro: flatten all (score, indicator) pairs.
    let mut flat_scores = Vec::with_capacity(n * p);
    let mut flat_pos = Vec::with_capacity(n * p);
    for i in 0..n {
        for c in 0..p {
            flat_scores.push(scores.data()[i * p + c]);
            flat_pos.push(labels[i] == c);
        }
    }
    let micro = roc_binary(&flat_scores, &flat_pos);
    let defined: Vec<f64> = per_class
        .iter()
        .flatten()
        .map(|c| c.auc)
        .collect();
    let macro_auc = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    Ok(RocReport {
        per_class,
        micro,
        macro_auc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn perfect_predictions_are_diagonal() {
        let truth = vec![0, 1, 2, 1, 0];
        let cm = confusion(&truth, &truth, 3).unwrap();
        for t in 0..3 {
            for p in 0..3 {
                if t != p {
                    assert_eq!(cm.at(t, p), 0);
                }
            }
        }
        let r = prf1(&cm);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.macro_f1, 1.0);
        for m in &r.per_class {
            assert_eq!(m.precision.value, 1.0);
            assert_eq!(m.recall.value, 1.0);
        }
    }

    #[test]
    fn collapsed_predictions_fill_one_column() {
        let truth = vec![0, 1, 2, 2];
        let pred = vec![0, 0, 0, 0];
        let cm = confusion(&truth, &pred, 3).unwrap();
        for t in 0..3 {
            for p in 1..3 {
                assert_eq!(cm.at(t, p), 0);
            }
        }
        assert_eq!(cm.total(), 4);
        // Undefined precision for never-predicted classes flags, not NaN.
        let r = prf1(&cm);
        assert!(r.per_class[1].precision.undefined);
        assert_eq!(r.per_class[1].precision.value, 0.0);
    }

    #[test]
    fn confusion_matches_counting_oracle() {
        let mut rng = Rng::new(3);
        let truth: Vec<usize> = (0..300).map(|_| rng.below(4)).collect();
        let pred: Vec<usize> = (0..300).map(|_| rng.below(4)).collect();
        let cm = confusion(&truth, &pred, 4).unwrap();
        for t in 0..4 {
            for p in 0..4 {
                let want = truth
                    .iter()
                    .zip(&pred)
                    .filter(|(&a, &b)| a == t && b == p)
                    .count();
                assert_eq!(cm.at(t, p), want);
            }
        }
        assert_eq!(cm.total(), 300);
    }

    #[test]
    fn prf1_direct_substitution() {
        // tp=8, fp=2, fn=2 -> precision = recall = f1 = 0.8
        let mut counts = vec![0usize; 4];
        counts[0] = 8; // tp for class 0
        counts[1] = 2; // fn: true 0 predicted 1
        counts[2] = 2; // fp: true 1 predicted 0
        counts[3] = 8;
        let cm = ConfusionMatrix { classes: 2, counts };
        let r = prf1(&cm);
        assert!((r.per_class[0].precision.value - 0.8).abs() < 1e-12);
        assert!((r.per_class[0].recall.value - 0.8).abs() < 1e-12);
        assert!((r.per_class[0].f1.value - 0.8).abs() < 1e-12);
    }

    #[test]
    fn micro_identity_for_single_label_classification() {
        let mut rng = Rng::new(5);
        for _ in 0..20 {
            let truth: Vec<usize> = (0..100).map(|_| rng.below(5)).collect();
            let pred: Vec<usize> = (0..100).map(|_| rng.below(5)).collect();
            let cm = confusion(&truth, &pred, 5).unwrap();
            let r = prf1(&cm);
            assert_eq!(r.micro_precision, r.micro_recall);
            assert_eq!(r.micro_precision, r.accuracy);
        }
    }

    /// O(N^2) Mann-Whitney with half-credit for ties.
    fn mann_whitney(scores: &[f64], positive: &[bool]) -> Option<f64> {
        let pos: Vec<f64> = scores
            .iter()
            .zip(positive)
            .filter(|(_, &p)| p)
            .map(|(&s, _)| s)
            .collect();
        let neg: Vec<f64> = scores
            .iter()
            .zip(positive)
            .filter(|(_, &p)| !p)
            .map(|(&s, _)| s)
            .collect();
        if pos.is_empty() || neg.is_empty() {
            return None;
        }
        let mut acc = 0.0;
        for &sp in &pos {
            for &sn in &neg {
                acc += if sp > sn {
                    1.0
                } else if sp == sn {
                    0.5
                } else {
                    0.0
                };
            }
        }
        Some(acc / (pos.len() * neg.len()) as f64)
    }

    #[test]
    fn roc_trivial_cases() {
        // perfectly separated
        let scores = vec![0.9, 0.8, 0.2, 0.1];
        let pos = vec![true, true, false, false];
        let c = roc_binary(&scores, &pos).unwrap();
        assert_eq!(c.auc, 1.0);

        // identical scores -> 0.5 by the tie convention
        let scores = vec![0.5; 6];
        let pos = vec![true, false, true, false, true, false];
        let c = roc_binary(&scores, &pos).unwrap();
        assert!((c.auc - 0.5).abs() < 1e-12);

        // single-class truth is undefined
        assert!(roc_binary(&[0.1, 0.2], &[true, true]).is_none());
    }

    #[test]
    fn roc_matches_mann_whitney_oracle() {
        let mut rng = Rng::new(7);
        for round in 0..50 {
            let n = 30 + rng.below(40);
            // quantized scores force plenty of ties
            let scores: Vec<f64> = (0..n).map(|_| (rng.below(8) as f64) / 8.0).collect();
            let pos: Vec<bool> = (0..n).map(|_| rng.bool()).collect();
            let (got, want) = (roc_binary(&scores, &pos), mann_whitney(&scores, &pos));
            match (got, want) {
                (Some(c), Some(w)) => {
                    assert!((c.auc - w).abs() < 1e-10, "round {round}: {} vs {w}", c.auc)
                }
                (None, None) => {}
                other => panic!("round {round}: disagreement {other:?}"),
            }
        }
    }

    #[test]
    fn auc_invariant_under_monotone_transform_and_flips_under_negation() {
        let mut rng = Rng::new(9);
        let scores: Vec<f64> = (0..50).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let pos: Vec<bool> = (0..50).map(|_| rng.bool()).collect();
        let base = roc_binary(&scores, &pos).unwrap().auc;
        let squashed: Vec<f64> = scores.iter().map(|&s| (3.0 * s).tanh() * 5.0 + 1.0).collect();
        let t = roc_binary(&squashed, &pos).unwrap().auc;
        assert!((base - t).abs() < 1e-12);
        let negated: Vec<f64> = scores.iter().map(|&s| -s).collect();
        let n = roc_binary(&negated, &pos).unwrap().auc;
        assert!((base + n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn multiclass_roc_report_shapes() {
        let mut rng = Rng::new(11);
        let n = 40;
        let scores = Tensor::from_fn(&[n, 3], |_| rng.uniform(0.0, 1.0));
        let labels: Vec<usize> = (0..n).map(|_| rng.below(3)).collect();
        let rep = roc_auc(&scores, &labels).unwrap();
        assert_eq!(rep.per_class.len(), 3);
        assert!(rep.micro.is_some());
        assert!(rep.macro_auc.is_some());
        // absent class is omitted with a flag
        let labels0: Vec<usize> = vec![0; n];
        let rep0 = roc_auc(&scores, &labels0).unwrap();
        assert!(rep0.per_class[1].is_none());
        assert!(rep0.per_class[0].is_none()); // no negatives either
        assert!(rep0.macro_auc.is_none());
    }
}
