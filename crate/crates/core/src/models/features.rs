use crate::error::{Error, Result};
use crate::volume::Volume;

pub const HISTOGRAM_BINS: usize = 32;
/// Histogram bins, then mean, standard deviation and foreground fraction.
pub const FEATURE_LEN: usize = HISTOGRAM_BINS + 3;

/// Intensity summary of a preprocessed volume.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() != FEATURE_LEN {
            return Err(Error::Validation(format!(
                "feature vector needs {FEATURE_LEN} entries, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("feature vector has non-finite entries".into()));
        }
        Ok(FeatureVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn histogram(&self) -> &[f64] {
        &self.0[..HISTOGRAM_BINS]
    }

    pub fn mean(&self) -> f64 {
        self.0[HISTOGRAM_BINS]
    }

    pub fn std(&self) -> f64 {
        self.0[HISTOGRAM_BINS + 1]
    }

    pub fn foreground_fraction(&self) -> f64 {
        self.0[HISTOGRAM_BINS + 2]
    }
}

/// 32-bin histogram over [0, 1] (last bin right-closed), population mean
/// and standard deviation, and fraction of voxels above zero.
pub fn extract_features(v: &Volume) -> Result<FeatureVector> {
    let data = v.as_real()?;
    let n = data.len() as f64;
    let mut hist = [0u64; HISTOGRAM_BINS];
    let (mut sum, mut foreground) = (0.0f64, 0u64);
    for &x in data {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Validation(format!(
                "feature input value {x} outside [0, 1]"
            )));
        }
        let bin = ((x as f64 * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        hist[bin] += 1;
        sum += x as f64;
        foreground += u64::from(x > 0.0);
    }
    let mean = sum / n;
    let var = data
        .iter()
        .map(|&x| (x as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    let mut out: Vec<f64> = hist.iter().map(|&c| c as f64 / n).collect();
    out.extend([mean, var.sqrt(), foreground as f64 / n]);
    Ok(FeatureVector(out))
}
