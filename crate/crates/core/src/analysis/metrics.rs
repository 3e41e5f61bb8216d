use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Binary classification scores with class 1 as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    /// No positive predictions; precision reported as 0.
    pub precision_undefined: bool,
    /// No positive labels; recall reported as 0.
    pub recall_undefined: bool,
}

impl ClassificationMetrics {
    pub const NAMES: [&'static str; 4] = ["accuracy", "precision", "recall", "f1"];

    pub fn values(&self) -> [f64; 4] {
        [self.accuracy, self.precision, self.recall, self.f1]
    }
}

pub fn classification_metrics(predicted: &[u8], actual: &[u8]) -> Result<ClassificationMetrics> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            what: "predicted labels",
            expected: actual.len(),
            got: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::Empty("labels"));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (&p, &a) in predicted.iter().zip(actual) {
        match (p == 1, a == 1) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ClassificationMetrics {
        accuracy: (tp + tn) as f64 / actual.len() as f64,
        precision,
        recall,
        f1,
        tp,
        tn,
        fp,
        fn_,
        precision_undefined: tp + fp == 0,
        recall_undefined: tp + fn_ == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect() {
        let m = classification_metrics(&[0, 1, 1, 0], &[0, 1, 1, 0]).unwrap();
        assert_eq!(m.values(), [1.0; 4]);
    }

    #[test]
    fn all_negative_predictions() {
        let m = classification_metrics(&[0, 0, 0, 0], &[0, 1, 0, 1]).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.precision, 0.0);
        assert!(m.precision_undefined);
        assert!(!m.recall_undefined);
    }

    #[test]
    fn length_mismatch() {
        assert!(classification_metrics(&[0, 1], &[0]).is_err());
    }

    proptest! {
        #[test]
        fn bounds(pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..60)) {
            let (p, a): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let m = classification_metrics(&p, &a).unwrap();
            for v in m.values() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert_eq!(m.accuracy, (m.tp + m.tn) as f64 / p.len() as f64);
            if m.precision == m.recall {
                prop_assert!((m.f1 - m.precision).abs() < 1e-15);
            }
        }
    }
}
