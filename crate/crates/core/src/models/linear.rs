use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{extract_features, FeatureVector, FEATURE_LEN};
use super::{ClassLabel, ClassScores, Classifier};
use crate::error::{Error, Result};
use crate::volume::Volume;

/// Version of the feature layout a serialized model was trained on.
pub const FEATURE_VERSION: u32 = 1;

/// Per-class loss multipliers. Labels without an entry weigh 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassWeights(BTreeMap<ClassLabel, f64>);

impl Default for ClassWeights {
    fn default() -> Self {
        ClassWeights(BTreeMap::from([(ClassLabel::pld(), 4.0), (ClassLabel::mcc(), 1.0)]))
    }
}

impl ClassWeights {
    pub fn new(weights: BTreeMap<ClassLabel, f64>) -> Result<Self> {
        if let Some((l, w)) = weights.iter().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Validation(format!("class weight {w} for {l} must be positive")));
        }
        Ok(ClassWeights(weights))
    }

    pub fn uniform() -> Self {
        ClassWeights(BTreeMap::new())
    }

    pub fn weight(&self, label: &ClassLabel) -> f64 {
        self.0.get(label).copied().unwrap_or(1.0)
    }

    /// Parses `LABEL=WEIGHT`.
    pub fn parse_entry(entry: &str) -> Result<(ClassLabel, f64)> {
        let (label, weight) = entry
            .split_once('=')
            .ok_or_else(|| Error::Validation(format!("class weight {entry:?} is not LABEL=WEIGHT")))?;
        let weight: f64 = weight
            .trim()
            .parse()
            .map_err(|_| Error::Validation(format!("class weight {weight:?} is not a number")))?;
        Ok((ClassLabel::new(label.trim())?, weight))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Unused by full-batch descent from a zero start; kept for stochastic variants.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2000,
            learning_rate: 0.5,
            seed: 0,
        }
    }
}

/// Logistic model over standardized [`FeatureVector`]s:
/// `logit = Σ weights[i] · (f[i] − feature_mean[i]) / feature_scale[i] + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub feature_version: u32,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub negative_label: ClassLabel,
    pub positive_label: ClassLabel,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl LinearClassifier {
    pub fn zeros(negative: ClassLabel, positive: ClassLabel) -> Self {
        LinearClassifier {
            feature_version: FEATURE_VERSION,
            weights: vec![0.0; FEATURE_LEN],
            bias: 0.0,
            feature_mean: vec![0.0; FEATURE_LEN],
            feature_scale: vec![1.0; FEATURE_LEN],
            negative_label: negative,
            positive_label: positive,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_version != FEATURE_VERSION {
            return Err(Error::Validation(format!(
                "model feature version {} unsupported (expected {FEATURE_VERSION})",
                self.feature_version
            )));
        }
        for (name, v) in [
            ("weights", &self.weights),
            ("feature_mean", &self.feature_mean),
            ("feature_scale", &self.feature_scale),
        ] {
            if v.len() != FEATURE_LEN {
                return Err(Error::Validation(format!(
                    "model has {} {name}, features have {FEATURE_LEN}",
                    v.len()
                )));
            }
            if v.iter().any(|w| !w.is_finite()) {
                return Err(Error::Validation(format!("model {name} must be finite")));
            }
        }
        if !self.bias.is_finite() {
            return Err(Error::Validation("model bias must be finite".into()));
        }
        if self.feature_scale.iter().any(|&s| s <= 0.0) {
            return Err(Error::Validation("feature scales must be positive".into()));
        }
        if self.negative_label == self.positive_label {
            return Err(Error::Validation("model labels must differ".into()));
        }
        Ok(())
    }

    fn standardize(&self, f: &[f64]) -> Vec<f64> {
        f.iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    pub fn logit(&self, f: &FeatureVector) -> f64 {
        dot(&self.weights, &self.standardize(f.as_slice())) + self.bias
    }

    pub fn positive_probability(&self, f: &FeatureVector) -> f64 {
        sigmoid(self.logit(f))
    }

    pub fn scores_for(&self, f: &FeatureVector) -> Result<ClassScores> {
        ClassScores::binary(&self.negative_label, &self.positive_label, self.positive_probability(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let model: LinearClassifier = serde_json::from_str(&text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::file(path, e))
    }
}

impl Classifier for LinearClassifier {
    fn labels(&self) -> Vec<ClassLabel> {
        vec![self.negative_label.clone(), self.positive_label.clone()]
    }

    fn classify(&self, v: &Volume) -> Result<ClassScores> {
        self.scores_for(&extract_features(v)?)
    }
}

struct Example {
    features: Vec<f64>,
    target: f64,
    weight: f64,
}

fn examples(
    data: &[(FeatureVector, ClassLabel)],
    model: &LinearClassifier,
    class_weights: &ClassWeights,
) -> Result<Vec<Example>> {
    data.iter()
        .map(|(f, label)| {
            let target = if *label == model.positive_label {
                1.0
            } else if *label == model.negative_label {
                0.0
            } else {
                return Err(Error::Validation(format!("label {label} unknown to the model")));
            };
            Ok(Example {
                features: model.standardize(f.as_slice()),
                target,
                weight: class_weights.weight(label),
            })
        })
        .collect()
}

/// Class-weighted binary cross-entropy, averaged over examples:
/// `(1/N) Σ w(label_i) · CE(σ(θ·f_i + b), y_i)`.
pub fn weighted_loss(
    model: &LinearClassifier,
    data: &[(FeatureVector, ClassLabel)],
    class_weights: &ClassWeights,
) -> Result<f64> {
    let ex = examples(data, model, class_weights)?;
    let total: f64 = ex
        .iter()
        .map(|e| {
            let z: f64 = dot(&model.weights, &e.features) + model.bias;
            e.weight * (softplus(z) - e.target * z)
        })
        .sum();
    Ok(total / ex.len() as f64)
}

/// Gradient of [`weighted_loss`]: `(∂/∂weights, ∂/∂bias)`.
pub fn loss_gradient(
    model: &LinearClassifier,
    data: &[(FeatureVector, ClassLabel)],
    class_weights: &ClassWeights,
) -> Result<(Vec<f64>, f64)> {
    let ex = examples(data, model, class_weights)?;
    Ok(gradient(&model.weights, model.bias, &ex))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gradient(weights: &[f64], bias: f64, ex: &[Example]) -> (Vec<f64>, f64) {
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for e in ex {
        let residual = e.weight * (sigmoid(dot(weights, &e.features) + bias) - e.target);
        for (g, x) in gw.iter_mut().zip(&e.features) {
            *g += residual * x;
        }
        gb += residual;
    }
    let n = ex.len() as f64;
    gw.iter_mut().for_each(|g| *g /= n);
    (gw, gb / n)
}

/// Full-batch gradient descent on [`weighted_loss`] from all-zero
/// parameters, on features standardized by the training-set mean and
/// population standard deviation (constant features keep scale 1). The
/// negative label is the lexicographically smaller one.
pub fn train_linear_classifier(
    data: &[(FeatureVector, ClassLabel)],
    class_weights: &ClassWeights,
    config: &TrainConfig,
) -> Result<LinearClassifier> {
    let mut labels: Vec<&ClassLabel> = data.iter().map(|(_, l)| l).collect();
    labels.sort();
    labels.dedup();
    if labels.len() != 2 {
        return Err(Error::Validation(format!(
            "training needs exactly two labels, found {}",
            labels.len()
        )));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::Validation("learning rate must be positive".into()));
    }
    let mut model = LinearClassifier::zeros(labels[0].clone(), labels[1].clone());
    let n = data.len() as f64;
    for d in 0..FEATURE_LEN {
        let mean = data.iter().map(|(f, _)| f.as_slice()[d]).sum::<f64>() / n;
        let var = data.iter().map(|(f, _)| (f.as_slice()[d] - mean).powi(2)).sum::<f64>() / n;
        model.feature_mean[d] = mean;
        model.feature_scale[d] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    }
    let ex = examples(data, &model, class_weights)?;
    for _ in 0..config.epochs {
        let (gw, gb) = gradient(&model.weights, model.bias, &ex);
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= config.learning_rate * g;
        }
        model.bias -= config.learning_rate * gb;
    }
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fv(first: f64, second: f64) -> FeatureVector {
        let mut v = vec![0.0; FEATURE_LEN];
        v[0] = first;
        v[1] = second;
        FeatureVector::from_values(v).unwrap()
    }

    /// Positives have feature 0 above 0.8, negatives below 0.2.
    fn toy_set() -> Vec<(FeatureVector, ClassLabel)> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut data = Vec::new();
        for _ in 0..20 {
            data.push((fv(rng.random_range(0.8..1.0), rng.random()), ClassLabel::pld()));
            data.push((fv(rng.random_range(0.0..0.2), rng.random()), ClassLabel::mcc()));
        }
        data
    }

    fn accuracy(model: &LinearClassifier, data: &[(FeatureVector, ClassLabel)]) -> f64 {
        let hits = data
            .iter()
            .filter(|(f, l)| model.scores_for(f).unwrap().argmax() == l)
            .count();
        hits as f64 / data.len() as f64
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let data = toy_set();
        let cfg = TrainConfig {
            epochs: 500,
            learning_rate: 0.5,
            seed: 0,
        };
        let model = train_linear_classifier(&data, &ClassWeights::default(), &cfg).unwrap();
        assert_eq!(model.positive_label, ClassLabel::pld());
        assert_eq!(accuracy(&model, &data), 1.0);
    }

    #[test]
    fn weight_scales_sample_loss() {
        let model = LinearClassifier {
            weights: (0..FEATURE_LEN).map(|i| 0.1 * i as f64 - 1.0).collect(),
            bias: 0.3,
            ..LinearClassifier::zeros(ClassLabel::mcc(), ClassLabel::pld())
        };
        let one = vec![(fv(0.4, 0.7), ClassLabel::pld())];
        let weighted = weighted_loss(&model, &one, &ClassWeights::default()).unwrap();
        let plain = weighted_loss(&model, &one, &ClassWeights::uniform()).unwrap();
        assert_eq!(weighted, 4.0 * plain);
    }

    #[test]
    fn loss_decreases_at_small_rate() {
        let data = toy_set();
        let weights = ClassWeights::default();
        let mut model = LinearClassifier::zeros(ClassLabel::mcc(), ClassLabel::pld());
        let mut last = weighted_loss(&model, &data, &weights).unwrap();
        for _ in 0..200 {
            let (gw, gb) = loss_gradient(&model, &data, &weights).unwrap();
            for (w, g) in model.weights.iter_mut().zip(&gw) {
                *w -= 0.01 * g;
            }
            model.bias -= 0.01 * gb;
            let now = weighted_loss(&model, &data, &weights).unwrap();
            assert!(now <= last, "{now} > {last}");
            last = now;
        }
    }

    #[test]
    fn zero_model_is_undecided() {
        let model = LinearClassifier::zeros(ClassLabel::mcc(), ClassLabel::pld());
        let s = model.scores_for(&fv(0.3, 0.2)).unwrap();
        assert_eq!(s.get(&ClassLabel::pld()), Some(0.5));
        assert_eq!(s.get(&ClassLabel::mcc()), Some(0.5));
    }

    #[test]
    fn single_class_is_rejected() {
        let data = vec![(fv(0.1, 0.1), ClassLabel::pld())];
        assert!(train_linear_classifier(&data, &ClassWeights::default(), &TrainConfig::default()).is_err());
    }

    #[test]
    fn weights_parse() {
        assert_eq!(
            ClassWeights::parse_entry("PLD=4").unwrap(),
            (ClassLabel::pld(), 4.0)
        );
        assert!(ClassWeights::parse_entry("PLD").is_err());
        assert!(ClassWeights::parse_entry("PLD=x").is_err());
        assert!(ClassWeights::new(BTreeMap::from([(ClassLabel::pld(), 0.0)])).is_err());
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let model = train_linear_classifier(&toy_set(), &ClassWeights::default(), &TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        })
        .unwrap();
        model.save(&path).unwrap();
        assert_eq!(LinearClassifier::load(&path).unwrap(), model);
    }
}
