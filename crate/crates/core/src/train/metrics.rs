//! Threshold metrics and the rank-statistic ROC AUC.

use std::fmt;

/// Counts at a fixed decision threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    /// Predict resistant when `score >= threshold`.
    pub fn from_scores(scores: &[f64], labels: &[u8], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for (&s, &y) in scores.iter().zip(labels) {
            match (s >= threshold, y == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Classification metrics for one split. Undefined ratios are reported as 0
/// except AUC, which is `None` when only one class is present.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: Option<f64>,
    pub n: usize,
}

impl MetricsReport {
    pub fn from_scores(scores: &[f64], labels: &[u8]) -> Self {
        let c = Confusion::from_scores(scores, labels, 0.5);
        Self::from_confusion(&c, roc_auc(scores, labels))
    }

    pub fn from_confusion(c: &Confusion, auc: Option<f64>) -> Self {
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let specificity = ratio(c.tn, c.tn + c.fp);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let pos = c.tp + c.fn_;
        let neg = c.tn + c.fp;
        let balanced_accuracy = match (pos > 0, neg > 0) {
            (true, true) => 0.5 * (recall + specificity),
            (true, false) => recall,
            (false, true) => specificity,
            (false, false) => 0.0,
        };
        MetricsReport {
            accuracy: ratio(c.tp + c.tn, c.total()),
            balanced_accuracy,
            precision,
            recall,
            f1,
            auc,
            n: c.total(),
        }
    }

    pub const CSV_HEADER: &'static str = "split,accuracy,balanced_accuracy,precision,recall,f1,auc,n";

    pub fn csv_row(&self, split: &str) -> String {
        format!(
            "{split},{},{},{},{},{},{},{}",
            self.accuracy,
            self.balanced_accuracy,
            self.precision,
            self.recall,
            self.f1,
            fmt_auc(self.auc),
            self.n
        )
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "acc={:.4} bal_acc={:.4} prec={:.4} rec={:.4} f1={:.4} auc={}",
            self.accuracy,
            self.balanced_accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.auc.map_or("NA".to_string(), |a| format!("{a:.4}"))
        )
    }
}

/// `NA` marks an undefined AUC in CSV output.
pub fn fmt_auc(auc: Option<f64>) -> String {
    auc.map_or_else(|| "NA".to_string(), |a| a.to_string())
}

/// Mann-Whitney ROC AUC with mid-ranks, i.e. ties count one half.
/// `None` unless both classes are present.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of doubled mid-ranks of positives keeps everything in integers.
    let mut rank2_pos: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j, doubled mid-rank = i + 1 + j
        let mid2 = (i + 1 + j) as u128;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        rank2_pos += mid2 * pos_in_group;
        i = j;
    }
    let np = n_pos as u128;
    // 2U = 2*R_pos - n_pos(n_pos+1)
    let u2 = rank2_pos - np * (np + 1);
    Some(u2 as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]), Some(1.0));
        assert_eq!(roc_auc(&[0.5; 6], &[0, 1, 0, 1, 1, 0]), Some(0.5));
        assert_eq!(roc_auc(&[0.9, 0.1], &[1, 1]), None);
    }

    #[test]
    fn metrics_on_small_case() {
        let scores = [0.9, 0.8, 0.3, 0.6, 0.1];
        let labels = [1, 1, 1, 0, 0];
        let m = MetricsReport::from_scores(&scores, &labels);
        assert_eq!(m.accuracy, 0.6);
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.balanced_accuracy - (2.0 / 3.0 + 0.5) / 2.0).abs() < 1e-15);
        assert_eq!(m.auc, Some(5.0 / 6.0));
    }

    #[test]
    fn single_class_split_has_no_auc() {
        let m = MetricsReport::from_scores(&[0.7, 0.2], &[0, 0]);
        assert_eq!(m.auc, None);
        assert_eq!(m.accuracy, 0.5);
        assert!(m.csv_row("test").contains(",NA,"));
    }
}
