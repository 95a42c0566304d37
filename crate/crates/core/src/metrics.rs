//! Confusion matrix, overall accuracy, average accuracy, Cohen's kappa.

use crate::error::{Error, Result};

/// M x M count matrix; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_counts(num_classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != num_classes * num_classes {
            return Err(Error::invalid("count vector does not match class count"));
        }
        Ok(Self { num_classes, counts })
    }

    #[inline]
    pub fn count(&self, truth0: usize, pred0: usize) -> u64 {
        self.counts[truth0 * self.num_classes + pred0]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, truth0: usize) -> u64 {
        (0..self.num_classes).map(|p| self.count(truth0, p)).sum()
    }

    pub fn col_sum(&self, pred0: usize) -> u64 {
        (0..self.num_classes).map(|t| self.count(t, pred0)).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes).map(|i| self.count(i, i)).sum()
    }
}

/// Tallies (truth, prediction) pairs with labels in 1..=M.
pub fn confusion(truth: &[usize], pred: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::invalid(format!(
            "truth has {} entries, predictions {}",
            truth.len(),
            pred.len()
        )));
    }
    let mut counts = vec![0u64; num_classes * num_classes];
    for (&t, &p) in truth.iter().zip(pred) {
        if t < 1 || t > num_classes || p < 1 || p > num_classes {
            return Err(Error::invalid(format!(
                "label pair ({t},{p}) out of range 1..={num_classes}"
            )));
        }
        counts[(t - 1) * num_classes + (p - 1)] += 1;
    }
    ConfusionMatrix::from_counts(num_classes, counts)
}

/// Overall accuracy: trace / total.
pub fn oa(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("empty confusion matrix"));
    }
    Ok(cm.trace() as f64 / total as f64)
}

/// Average accuracy: mean per-class recall.
pub fn aa(cm: &ConfusionMatrix) -> Result<f64> {
    let mut sum = 0.0;
    for t in 0..cm.num_classes {
        let row = cm.row_sum(t);
        if row == 0 {
            return Err(Error::invalid(format!("class {} has no true samples", t + 1)));
        }
        sum += cm.count(t, t) as f64 / row as f64;
    }
    Ok(sum / cm.num_classes as f64)
}

/// Cohen's kappa: (p_o - p_e) / (1 - p_e).
pub fn kappa(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("empty confusion matrix"));
    }
    let p_o = cm.trace() as f64 / total as f64;
    let mut p_e = 0.0;
    for i in 0..cm.num_classes {
        p_e += cm.row_sum(i) as f64 * cm.col_sum(i) as f64;
    }
    p_e /= (total as f64) * (total as f64);
    if (1.0 - p_e).abs() < 1e-15 {
        if (1.0 - p_o).abs() < 1e-15 {
            return Ok(1.0);
        }
        return Err(Error::invalid("chance agreement is 1 with imperfect observed agreement"));
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Per-class recall values in class order.
pub fn per_class_accuracy(cm: &ConfusionMatrix) -> Result<Vec<f64>> {
    (0..cm.num_classes)
        .map(|t| {
            let row = cm.row_sum(t);
            if row == 0 {
                Err(Error::invalid(format!("class {} has no true samples", t + 1)))
            } else {
                Ok(cm.count(t, t) as f64 / row as f64)
            }
        })
        .collect()
}
