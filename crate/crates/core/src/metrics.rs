//! Segmentation overlap and binary-classification metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Volume;

/// Dice similarity coefficient `2|A∩B| / (|A| + |B|)`.
pub fn dice(a: &Volume, b: &Volume) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::Geometry(format!(
            "dice of masks with dims {} and {}",
            a.dims(),
            b.dims()
        )));
    }
    let (ma, mb) = (a.as_mask()?, b.as_mask()?);
    let (mut size_a, mut size_b, mut both) = (0u64, 0u64, 0u64);
    for (&x, &y) in ma.iter().zip(mb) {
        size_a += x as u64;
        size_b += y as u64;
        both += (x & y) as u64;
    }
    if size_a + size_b == 0 {
        return Err(Error::UndefinedMetric("dice of two empty masks".into()));
    }
    Ok(2.0 * both as f64 / (size_a + size_b) as f64)
}

/// ROC AUC as the Mann-Whitney probability that a positive outscores a
/// negative, ties counting one half. Computed from midranks in O(n log n).
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::Validation(format!("score {s} is not a number")));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "roc auc needs at least one positive and one negative".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of 1-based midranks of the positives.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + 1 + end) as f64 / 2.0;
        let positives = order[start..end].iter().filter(|&&i| labels[i]).count();
        rank_sum += midrank * positives as f64;
        start = end;
    }
    let n_pos = n_pos as f64;
    let u = rank_sum - n_pos * (n_pos + 1.0) / 2.0;
    Ok(u / (n_pos * n_neg as f64))
}

/// Counts relative to one designated positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    /// Tallies `(truth, prediction)` pairs against `positive`.
    pub fn tally<'a, L: PartialEq + 'a>(
        pairs: impl IntoIterator<Item = (&'a L, &'a L)>,
        positive: &L,
    ) -> Self {
        let mut c = ConfusionCounts::default();
        for (truth, pred) in pairs {
            match (truth == positive, pred == positive) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The same table seen from the other class.
    pub fn swapped(&self) -> Self {
        ConfusionCounts {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub sensitivity: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    /// Positive class first.
    pub classes: Vec<ClassMetrics>,
    /// Unweighted mean of the per-class F1 scores.
    pub macro_f1: f64,
    pub auc: Option<f64>,
}

fn ratio(num: u64, den: u64, field: &str) -> Result<f64> {
    if den == 0 {
        return Err(Error::UndefinedMetric(format!("{field} has a zero denominator")));
    }
    Ok(num as f64 / den as f64)
}

fn class_metrics(c: &ConfusionCounts, label: &str) -> Result<ClassMetrics> {
    let precision = ratio(c.tp, c.tp + c.fp, &format!("{label} precision"))?;
    let sensitivity = ratio(c.tp, c.tp + c.fn_, &format!("{label} sensitivity"))?;
    if precision + sensitivity == 0.0 {
        return Err(Error::UndefinedMetric(format!("{label} f1 has a zero denominator")));
    }
    Ok(ClassMetrics {
        label: label.to_string(),
        precision,
        sensitivity,
        f1: 2.0 * precision * sensitivity / (precision + sensitivity),
    })
}

/// Binary report from counts taken with `positive` as the positive class.
/// A class that never occurs in either truth or prediction is left out of
/// the per-class rows and the macro average.
pub fn classification_report(
    counts: &ConfusionCounts,
    positive: &str,
    negative: &str,
) -> Result<ClassificationReport> {
    let accuracy = ratio(counts.tp + counts.tn, counts.total(), "accuracy")?;
    let mut classes = Vec::with_capacity(2);
    for (c, label) in [(*counts, positive), (counts.swapped(), negative)] {
        if c.tp + c.fp + c.fn_ > 0 {
            classes.push(class_metrics(&c, label)?);
        }
    }
    let macro_f1 = classes.iter().map(|m| m.f1).sum::<f64>() / classes.len() as f64;
    Ok(ClassificationReport {
        accuracy,
        classes,
        macro_f1,
        auc: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Dims, Orientation, Payload};

    fn mask(dims: Dims, bits: &[u8]) -> Volume {
        Volume::new(dims, [1.0; 3], Orientation::LPS, Payload::Mask(bits.to_vec())).unwrap()
    }

    #[test]
    fn dice_cases() {
        let d = Dims::new(2, 2, 1);
        let a = mask(d, &[1, 1, 1, 0]);
        let b = mask(d, &[1, 0, 0, 0]);
        assert_eq!(dice(&a, &b).unwrap(), 0.5);
        assert_eq!(dice(&b, &a).unwrap(), 0.5);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        let c = mask(d, &[0, 0, 0, 1]);
        assert_eq!(dice(&a, &c).unwrap(), 0.0);
    }

    #[test]
    fn dice_errors() {
        let e = mask(Dims::new(2, 2, 1), &[0; 4]);
        assert!(matches!(dice(&e, &e), Err(Error::UndefinedMetric(_))));
        let other = mask(Dims::new(4, 1, 1), &[1; 4]);
        assert!(matches!(dice(&e, &other), Err(Error::Geometry(_))));
    }

    #[test]
    fn auc_examples() {
        let labels = [true, true, false, false];
        assert_eq!(roc_auc(&[0.9, 0.8, 0.3, 0.2], &labels).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5; 4], &labels).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.9, 0.4, 0.6, 0.2], &labels).unwrap(), 0.75);
        assert!(matches!(
            roc_auc(&[0.1, 0.2], &[true, true]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn reference_confusion_matrix() {
        let c = ConfusionCounts::new(43, 4, 7, 46);
        let r = classification_report(&c, "PLD", "MCC").unwrap();
        assert!((r.accuracy - 0.890).abs() < 5e-4);
        assert!((r.classes[0].precision - 0.915).abs() < 5e-4);
        assert!((r.classes[0].sensitivity - 0.860).abs() < 5e-4);
        assert!((r.classes[1].precision - 0.868).abs() < 5e-4);
        assert!((r.classes[1].sensitivity - 0.920).abs() < 5e-4);
        assert!((r.macro_f1 - 0.890).abs() < 5e-4);
    }

    #[test]
    fn perfect_and_undefined() {
        let r = classification_report(&ConfusionCounts::new(9, 0, 0, 0), "PLD", "MCC").unwrap();
        assert_eq!(r.classes.len(), 1);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.classes[0].precision, 1.0);
        assert_eq!(r.classes[0].sensitivity, 1.0);
        assert_eq!(r.macro_f1, 1.0);
        let r = classification_report(&ConfusionCounts::new(9, 0, 0, 3), "PLD", "MCC").unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.classes[0].precision, 1.0);
        assert_eq!(r.classes[0].sensitivity, 1.0);
        assert_eq!(r.classes[0].f1, 1.0);
        let err = classification_report(&ConfusionCounts::new(0, 0, 5, 5), "PLD", "MCC").unwrap_err();
        assert!(err.to_string().contains("PLD precision"));
    }

    #[test]
    fn tally_counts() {
        let truth = ["PLD", "PLD", "MCC", "MCC", "MCC"];
        let pred = ["PLD", "MCC", "PLD", "MCC", "MCC"];
        let c = ConfusionCounts::tally(truth.iter().zip(pred.iter()), &"PLD");
        assert_eq!(c, ConfusionCounts::new(1, 1, 1, 2));
    }
}
