use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use segroute::models::{
    ClassLabel, ClassScores, ExternalModel, ExternalSpec, FixedClassifier, LinearClassifier, Segmenter,
    ThresholdSegmenter,
};
use segroute::pipeline::{ModelClassifier, OracleClassifier, ScanClassifier, SegmenterRegistry};
use segroute::preprocess::{AugmentSpec, WindowSpec};
use segroute::stats::DEFAULT_ALPHA;
use segroute::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClassifierSpec {
    Linear { path: PathBuf },
    /// Routes by the ground-truth label.
    Oracle { labels: Vec<ClassLabel> },
    Fixed { scores: ClassScores },
    External(ExternalSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SegmenterSpec {
    Threshold(ThresholdSegmenter),
    External(ExternalSpec),
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

/// Experiment description for `run`. Relative paths resolve against the
/// config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    #[serde(default)]
    pub classifier: Option<ClassifierSpec>,
    #[serde(default)]
    pub segmenters: BTreeMap<ClassLabel, SegmenterSpec>,
    #[serde(default)]
    pub generic: Option<SegmenterSpec>,
    #[serde(default)]
    pub window: WindowSpec,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub augment: Option<AugmentSpec>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn check_exists(p: &Path) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::Validation(format!("{} does not exist", p.display())))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::File {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.manifest = resolve(base, &cfg.manifest);
        if let Some(ClassifierSpec::Linear { path }) = &mut cfg.classifier {
            *path = resolve(base, path);
        }
        let externals = cfg
            .segmenters
            .values_mut()
            .chain(cfg.generic.as_mut())
            .filter_map(|s| match s {
                SegmenterSpec::External(e) => Some(e),
                SegmenterSpec::Threshold(_) => None,
            })
            .chain(match &mut cfg.classifier {
                Some(ClassifierSpec::External(e)) => Some(e),
                _ => None,
            });
        for e in externals {
            if let Some(dir) = &mut e.working_dir {
                *dir = resolve(base, dir);
            } else {
                e.working_dir = Some(base.to_path_buf());
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Validation(format!("alpha {} must lie in (0, 1)", self.alpha)));
        }
        self.window.validate()?;
        if let Some(a) = &self.augment {
            a.validate()?;
        }
        check_exists(&self.manifest)?;
        if let Some(ClassifierSpec::Linear { path }) = &self.classifier {
            check_exists(path)?;
        }
        Ok(())
    }

    pub fn build_classifier(&self) -> Result<Box<dyn ScanClassifier>> {
        Ok(match &self.classifier {
            None => return Err(Error::Validation("config has no classifier".into())),
            Some(ClassifierSpec::Linear { path }) => Box::new(ModelClassifier(LinearClassifier::load(path)?)),
            Some(ClassifierSpec::Oracle { labels }) => Box::new(OracleClassifier::new(labels.clone())),
            Some(ClassifierSpec::Fixed { scores }) => Box::new(ModelClassifier(FixedClassifier(scores.clone()))),
            Some(ClassifierSpec::External(spec)) => {
                if spec.labels.is_empty() {
                    return Err(Error::Validation("external classifier must declare labels".into()));
                }
                Box::new(ModelClassifier(ExternalModel::launch(spec.clone())?))
            }
        })
    }

    pub fn build_registry(&self) -> Result<SegmenterRegistry> {
        let mut reg = SegmenterRegistry::new();
        for (label, spec) in &self.segmenters {
            reg = reg.with_specialist(label.clone(), build_segmenter(spec)?);
        }
        if let Some(g) = &self.generic {
            reg = reg.with_generic(build_segmenter(g)?);
        }
        Ok(reg)
    }
}

pub fn build_segmenter(spec: &SegmenterSpec) -> Result<Arc<dyn Segmenter>> {
    Ok(match spec {
        SegmenterSpec::Threshold(t) => {
            t.validate()?;
            Arc::new(t.clone())
        }
        SegmenterSpec::External(e) => Arc::new(ExternalModel::launch(e.clone())?),
    })
}
