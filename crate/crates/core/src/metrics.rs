//! Per-instance multi-label scores over 0/1 location masks and their means.
//!
//! With `y` the set of true location positions and `ŷ` the predicted set:
//! precision `|y∩ŷ|/|ŷ|`, recall `|y∩ŷ|/|y|`, F1 the harmonic mean of the two,
//! Hamming loss the fraction of mismatched positions, Jaccard `|y∩ŷ|/|y∪ŷ|`,
//! and exact match 1 iff the masks are identical.
//!
//! Empty sets: if both are empty every ratio is 1; if only one is empty the
//! ratios with a zero denominator are 0 and F1 is 0.

use std::fmt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("true mask has {truth} labels but prediction has {predicted}")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("cannot aggregate an empty set of scores")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub hamming_loss: f64,
    pub jaccard: f64,
    pub exact_match: f64,
}

impl InstanceScores {
    pub const PERFECT: InstanceScores = InstanceScores {
        precision: 1.0,
        recall: 1.0,
        f1: 1.0,
        hamming_loss: 0.0,
        jaccard: 1.0,
        exact_match: 1.0,
    };

    fn fields(&self) -> [f64; 6] {
        [
            self.precision,
            self.recall,
            self.f1,
            self.hamming_loss,
            self.jaccard,
            self.exact_match,
        ]
    }

    fn from_fields(f: [f64; 6]) -> Self {
        InstanceScores {
            precision: f[0],
            recall: f[1],
            f1: f[2],
            hamming_loss: f[3],
            jaccard: f[4],
            exact_match: f[5],
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores one instance. The Hamming denominator is the mask length.
pub fn score_instance(y: &[u8], y_hat: &[u8]) -> Result<InstanceScores, MetricsError> {
    if y.len() != y_hat.len() {
        return Err(MetricsError::LengthMismatch {
            truth: y.len(),
            predicted: y_hat.len(),
        });
    }
    let (mut both, mut truth, mut predicted, mut wrong) = (0usize, 0usize, 0usize, 0usize);
    for (&a, &b) in y.iter().zip(y_hat) {
        let (a, b) = (a != 0, b != 0);
        both += usize::from(a && b);
        truth += usize::from(a);
        predicted += usize::from(b);
        wrong += usize::from(a != b);
    }
    let exact_match = if wrong == 0 { 1.0 } else { 0.0 };
    let hamming_loss = ratio(wrong, y.len());
    if truth == 0 && predicted == 0 {
        return Ok(InstanceScores {
            hamming_loss,
            exact_match,
            ..InstanceScores::PERFECT
        });
    }
    let precision = ratio(both, predicted);
    let recall = ratio(both, truth);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(InstanceScores {
        precision,
        recall,
        f1,
        hamming_loss,
        jaccard: ratio(both, truth + predicted - both),
        exact_match,
    })
}

/// Which label count the Hamming loss was divided by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSpace {
    /// Each instance's own mask length.
    MaskLength,
    /// The fixed padded output length of the model.
    Padded(usize),
}

/// Field-wise means over a set of instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub hamming_loss: f64,
    pub jaccard: f64,
    /// Mean exact match, i.e. the exact matching score.
    pub exact_match: f64,
    pub count: usize,
    pub label_space: LabelSpace,
}

pub const CSV_HEADER: &str = "precision,recall,f1,hamming_loss,jaccard,exact_match";

pub fn aggregate(scores: &[InstanceScores]) -> Result<MetricsReport, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut sums = [0.0; 6];
    for s in scores {
        for (acc, v) in sums.iter_mut().zip(s.fields()) {
            *acc += v;
        }
    }
    let n = scores.len() as f64;
    Ok(MetricsReport::from_means(
        sums.map(|s| s / n),
        scores.len(),
        LabelSpace::MaskLength,
    ))
}

impl MetricsReport {
    fn from_means(m: [f64; 6], count: usize, label_space: LabelSpace) -> Self {
        let s = InstanceScores::from_fields(m);
        MetricsReport {
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
            hamming_loss: s.hamming_loss,
            jaccard: s.jaccard,
            exact_match: s.exact_match,
            count,
            label_space,
        }
    }

    pub fn with_label_space(mut self, label_space: LabelSpace) -> Self {
        self.label_space = label_space;
        self
    }

    pub fn fields(&self) -> [f64; 6] {
        [
            self.precision,
            self.recall,
            self.f1,
            self.hamming_loss,
            self.jaccard,
            self.exact_match,
        ]
    }

    /// Unweighted mean of several reports (e.g. one per fold). The count is
    /// the total instance count; the label space is taken from the first.
    pub fn mean_of(reports: &[MetricsReport]) -> Result<MetricsReport, MetricsError> {
        let first = reports.first().ok_or(MetricsError::Empty)?;
        let mut sums = [0.0; 6];
        for r in reports {
            for (acc, v) in sums.iter_mut().zip(r.fields()) {
                *acc += v;
            }
        }
        let n = reports.len() as f64;
        Ok(MetricsReport::from_means(
            sums.map(|s| s / n),
            reports.iter().map(|r| r.count).sum(),
            first.label_space,
        ))
    }

    /// One CSV data row in [`CSV_HEADER`] column order.
    pub fn csv_row(&self) -> String {
        self.fields().map(|v| format!("{v:.6}")).join(",")
    }

    pub fn to_csv(&self) -> String {
        format!("{CSV_HEADER}\n{}\n", self.csv_row())
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>9} {:>9} {:>9} {:>12} {:>9} {:>11}",
            "Precision", "Recall", "F1-score", "Hamming loss", "Jaccard", "Exact match"
        )?;
        write!(
            f,
            "{:>9.3} {:>9.3} {:>9.3} {:>12.4} {:>9.3} {:>11.3}",
            self.precision, self.recall, self.f1, self.hamming_loss, self.jaccard, self.exact_match
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_example() {
        let y = [0, 0, 0, 0, 0, 1, 1, 1, 1];
        let y_hat = [0, 0, 0, 0, 1, 0, 0, 1, 1];
        let s = score_instance(&y, &y_hat).unwrap();
        assert!((s.precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.recall, 0.5);
        assert!((s.f1 - 4.0 / 7.0).abs() < 1e-12);
        assert!((s.hamming_loss - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.jaccard, 0.4);
        assert_eq!(s.exact_match, 0.0);
    }

    #[test]
    fn perfect_prediction_follows_the_equations() {
        let y = [0, 0, 0, 0, 0, 1, 1, 1, 1];
        assert_eq!(score_instance(&y, &y).unwrap(), InstanceScores::PERFECT);
        assert_eq!(score_instance(&[0; 5], &[0; 5]).unwrap(), InstanceScores::PERFECT);
        assert_eq!(score_instance(&[], &[]).unwrap(), InstanceScores::PERFECT);
    }

    #[test]
    fn one_sided_empty_sets() {
        let s = score_instance(&[0, 1, 1], &[0, 0, 0]).unwrap();
        assert_eq!((s.precision, s.recall, s.f1, s.jaccard), (0.0, 0.0, 0.0, 0.0));
        let s = score_instance(&[0, 0, 0], &[1, 0, 0]).unwrap();
        assert_eq!((s.precision, s.recall, s.f1, s.jaccard), (0.0, 0.0, 0.0, 0.0));
        assert!((s.hamming_loss - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert_eq!(
            score_instance(&[0, 1], &[0]),
            Err(MetricsError::LengthMismatch { truth: 2, predicted: 1 })
        );
    }

    #[test]
    fn aggregate_examples() {
        let a = score_instance(&[1, 0], &[1, 0]).unwrap();
        let b = score_instance(&[1, 0], &[0, 1]).unwrap();
        let single = aggregate(&[b]).unwrap();
        assert_eq!(single.fields(), b.fields());
        assert_eq!(single.count, 1);
        let both = aggregate(&[a, b]).unwrap();
        assert_eq!(both.exact_match, 0.5);
        assert_eq!(both.fields(), aggregate(&[b, a]).unwrap().fields());
        assert_eq!(aggregate(&[]), Err(MetricsError::Empty));
    }

    #[test]
    fn csv_layout() {
        let r = aggregate(&[InstanceScores::PERFECT]).unwrap();
        assert_eq!(
            r.to_csv(),
            "precision,recall,f1,hamming_loss,jaccard,exact_match\n1.000000,1.000000,1.000000,0.000000,1.000000,1.000000\n"
        );
    }

    #[test]
    fn mean_of_reports_is_unweighted() {
        let a = aggregate(&[InstanceScores::PERFECT; 3]).unwrap();
        let b = aggregate(&[score_instance(&[1], &[0]).unwrap()]).unwrap();
        let m = MetricsReport::mean_of(&[a, b]).unwrap();
        assert_eq!(m.f1, 0.5);
        assert_eq!(m.count, 4);
    }

    fn mask(len: usize) -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
        (
            proptest::collection::vec(0u8..2, len),
            proptest::collection::vec(0u8..2, len),
        )
    }

    proptest! {
        #[test]
        fn set_identities((y, y_hat) in (1usize..40).prop_flat_map(mask)) {
            let s = score_instance(&y, &y_hat).unwrap();
            let only_truth = y.iter().zip(&y_hat).filter(|(&a, &b)| a == 1 && b == 0).count();
            let only_pred = y.iter().zip(&y_hat).filter(|(&a, &b)| a == 0 && b == 1).count();
            prop_assert!((s.hamming_loss - (only_truth + only_pred) as f64 / y.len() as f64).abs() < 1e-15);
            prop_assert!(s.jaccard <= s.precision.min(s.recall) + 1e-12);
            prop_assert!(s.f1 + 1e-12 >= s.jaccard);
            if s.exact_match == 1.0 {
                prop_assert_eq!(s.hamming_loss, 0.0);
                prop_assert_eq!(s.jaccard, 1.0);
            }
            for v in s.fields() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert_eq!(score_instance(&y, &y).unwrap(), InstanceScores::PERFECT);
        }
    }
}
