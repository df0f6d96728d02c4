//! Classifier and segmenter abstractions with in-process reference models
//! and a client for out-of-process models.

mod external;
mod features;
mod linear;
pub mod morphology;
pub mod protocol;
mod threshold;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use external::{ExternalModel, ExternalSpec, DEFAULT_TIMEOUT};
pub use features::{extract_features, FeatureVector, FEATURE_LEN, HISTOGRAM_BINS};
pub use linear::{
    loss_gradient, train_linear_classifier, weighted_loss, ClassWeights, LinearClassifier,
    TrainConfig, FEATURE_VERSION,
};
pub use threshold::ThresholdSegmenter;

use crate::error::{Error, Result};
use crate::volume::Volume;

/// Pathology class name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassLabel(String);

impl ClassLabel {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() || name.contains([',', '\n', '"']) || name.contains("->") {
            return Err(Error::Validation(format!("invalid class label {name:?}")));
        }
        Ok(ClassLabel(name))
    }

    pub fn pld() -> Self {
        ClassLabel("PLD".into())
    }

    pub fn mcc() -> Self {
        ClassLabel("MCC".into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassLabel::new(s)
    }
}

/// Tolerance on the sum of class probabilities.
pub const SCORE_SUM_TOLERANCE: f64 = 1e-9;

/// Per-class probabilities. Non-negative, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<ClassLabel, f64>", into = "BTreeMap<ClassLabel, f64>")]
pub struct ClassScores(BTreeMap<ClassLabel, f64>);

impl ClassScores {
    pub fn new(scores: BTreeMap<ClassLabel, f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Validation("class scores are empty".into()));
        }
        if let Some((l, p)) = scores.iter().find(|(_, p)| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::Validation(format!("score {p} for {l} is not a probability")));
        }
        let total: f64 = scores.values().sum();
        if (total - 1.0).abs() > SCORE_SUM_TOLERANCE {
            return Err(Error::Validation(format!("class scores sum to {total}")));
        }
        Ok(ClassScores(scores))
    }

    /// Binary scores with `p` on `positive`.
    pub fn binary(negative: &ClassLabel, positive: &ClassLabel, p: f64) -> Result<Self> {
        ClassScores::new(BTreeMap::from([
            (negative.clone(), 1.0 - p),
            (positive.clone(), p),
        ]))
    }

    /// All mass on one label.
    pub fn certain(labels: &[ClassLabel], winner: &ClassLabel) -> Result<Self> {
        let mut map: BTreeMap<ClassLabel, f64> = labels.iter().map(|l| (l.clone(), 0.0)).collect();
        map.insert(winner.clone(), 1.0);
        ClassScores::new(map)
    }

    pub fn get(&self, label: &ClassLabel) -> Option<f64> {
        self.0.get(label).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ClassLabel, f64)> {
        self.0.iter().map(|(l, p)| (l, *p))
    }

    pub fn labels(&self) -> impl Iterator<Item = &ClassLabel> {
        self.0.keys()
    }

    /// Highest-probability label; ties go to the lexicographically first label.
    pub fn argmax(&self) -> &ClassLabel {
        let mut best = self.0.iter().next().expect("scores are non-empty");
        for entry in &self.0 {
            if *entry.1 > *best.1 {
                best = entry;
            }
        }
        best.0
    }
}

impl TryFrom<BTreeMap<ClassLabel, f64>> for ClassScores {
    type Error = Error;

    fn try_from(map: BTreeMap<ClassLabel, f64>) -> Result<Self> {
        ClassScores::new(map)
    }
}

impl From<ClassScores> for BTreeMap<ClassLabel, f64> {
    fn from(s: ClassScores) -> Self {
        s.0
    }
}

/// Maps a preprocessed volume to class probabilities.
pub trait Classifier: Send + Sync {
    fn labels(&self) -> Vec<ClassLabel>;
    fn classify(&self, v: &Volume) -> Result<ClassScores>;
}

/// Maps a windowed volume to a binary mask on the same grid.
pub trait Segmenter: Send + Sync {
    fn segment(&self, v: &Volume) -> Result<Volume>;
}

/// Returns the same scores for every input.
#[derive(Debug, Clone)]
pub struct FixedClassifier(pub ClassScores);

impl Classifier for FixedClassifier {
    fn labels(&self) -> Vec<ClassLabel> {
        self.0.labels().cloned().collect()
    }

    fn classify(&self, _v: &Volume) -> Result<ClassScores> {
        Ok(self.0.clone())
    }
}

impl<C: Classifier + ?Sized> Classifier for std::sync::Arc<C> {
    fn labels(&self) -> Vec<ClassLabel> {
        (**self).labels()
    }

    fn classify(&self, v: &Volume) -> Result<ClassScores> {
        (**self).classify(v)
    }
}

impl<S: Segmenter + ?Sized> Segmenter for std::sync::Arc<S> {
    fn segment(&self, v: &Volume) -> Result<Volume> {
        (**self).segment(v)
    }
}
