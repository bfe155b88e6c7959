//! Binary classification metrics with label 1 (malware) as the positive
//! class.

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when a ratio had a zero denominator and was reported as 0.
    pub zero_division: bool,
}

fn ratio(num: usize, den: usize, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn classification_metrics(predictions: &[u8], labels: &[u8]) -> Result<Classification> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(CoreError::domain(format!(
            "need equal, non-empty prediction and label lists (got {} and {})",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.iter().chain(labels).any(|&v| v > 1) {
        return Err(CoreError::domain("predictions and labels must be 0 or 1"));
    }
    let (mut tp, mut fp, mut fneg, mut tn) = (0, 0, 0, 0);
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p, y) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fneg += 1,
            _ => tn += 1,
        }
    }
    let mut zero_division = false;
    let accuracy = (tp + tn) as f64 / labels.len() as f64;
    let precision = ratio(tp, tp + fp, &mut zero_division);
    let recall = ratio(tp, tp + fneg, &mut zero_division);
    let f1 = if precision + recall == 0.0 {
        zero_division = true;
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Classification { accuracy, precision, recall, f1, zero_division })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 1, 0];
        let m = classification_metrics(&y, &y).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
        assert!(!m.zero_division);
    }

    #[test]
    fn confusion_matrix_arithmetic() {
        // TP=9, FP=1, FN=1, TN=9.
        let mut pred = vec![1u8; 9];
        let mut lab = vec![1u8; 9];
        pred.push(1);
        lab.push(0);
        pred.push(0);
        lab.push(1);
        pred.extend([0; 9]);
        lab.extend([0; 9]);
        let m = classification_metrics(&pred, &lab).unwrap();
        for v in [m.accuracy, m.precision, m.recall, m.f1] {
            assert!((v - 0.9).abs() < 1e-15);
        }
    }

    #[test]
    fn all_negative_predictions_flag_zero_division() {
        let m = classification_metrics(&[0, 0, 0, 0], &[0, 1, 0, 1]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert_eq!(m.accuracy, 0.5);
        assert!(m.zero_division);
    }

    #[test]
    fn empty_or_mismatched_input_is_rejected() {
        assert!(classification_metrics(&[], &[]).is_err());
        assert!(classification_metrics(&[0], &[0, 1]).is_err());
        assert!(classification_metrics(&[2], &[0]).is_err());
    }
}
