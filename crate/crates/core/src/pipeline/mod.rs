//! Adaptive, generic and ground-truth-routed segmentation runs.

mod io;

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use io::{
    load_manifest, read_results_csv, results_to_csv, results_to_jsonl, ResultRow, RESULTS_HEADER,
};

use crate::error::{Error, Result};
use crate::metrics::dice;
use crate::models::{extract_features, ClassLabel, ClassScores, Classifier, FeatureVector, Segmenter};
use crate::preprocess::{augment, canonicalize, window, AugmentSpec, WindowSpec, CLASSIFIER_DIMS};
use crate::volume::Volume;

pub const GENERIC_MODEL: &str = "generic";

/// One dataset entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord {
    pub id: String,
    pub volume: Volume,
    pub truth_mask: Volume,
    pub true_label: ClassLabel,
}

impl ScanRecord {
    pub fn new(id: String, volume: Volume, truth_mask: Volume, true_label: ClassLabel) -> Result<Self> {
        volume.as_hu()?;
        truth_mask.as_mask()?;
        if truth_mask.dims() != volume.dims() {
            return Err(Error::Geometry(format!(
                "{id}: mask dims {} differ from volume dims {}",
                truth_mask.dims(),
                volume.dims()
            )));
        }
        if id.is_empty() || id.contains([',', '\n', '"']) {
            return Err(Error::Validation(format!("invalid scan id {id:?}")));
        }
        Ok(ScanRecord {
            id,
            volume,
            truth_mask,
            true_label,
        })
    }
}

/// Label → specialist segmenter, plus an optional generic one.
#[derive(Clone, Default)]
pub struct SegmenterRegistry {
    specialists: BTreeMap<ClassLabel, Arc<dyn Segmenter>>,
    generic: Option<Arc<dyn Segmenter>>,
}

impl SegmenterRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_specialist(mut self, label: ClassLabel, s: Arc<dyn Segmenter>) -> Self {
        self.specialists.insert(label, s);
        self
    }

    pub fn with_generic(mut self, s: Arc<dyn Segmenter>) -> Self {
        self.generic = Some(s);
        self
    }

    pub fn specialist(&self, label: &ClassLabel) -> Result<&dyn Segmenter> {
        self.specialists
            .get(label)
            .map(|s| s.as_ref())
            .ok_or_else(|| Error::MissingRoute(label.to_string()))
    }

    pub fn generic(&self) -> Option<&dyn Segmenter> {
        self.generic.as_deref()
    }

    pub fn labels(&self) -> impl Iterator<Item = &ClassLabel> {
        self.specialists.keys()
    }
}

/// Produces routing scores for a scan. `windowed` is the full-resolution
/// windowed volume in the scan's own orientation.
pub trait ScanClassifier: Send + Sync {
    fn labels(&self) -> Vec<ClassLabel>;
    fn classify_scan(&self, scan: &ScanRecord, windowed: &Volume) -> Result<ClassScores>;
}

/// Runs a [`Classifier`] on the standard 128³ LPS classifier input.
pub struct ModelClassifier<C>(pub C);

impl<C: Classifier> ScanClassifier for ModelClassifier<C> {
    fn labels(&self) -> Vec<ClassLabel> {
        self.0.labels()
    }

    fn classify_scan(&self, _scan: &ScanRecord, windowed: &Volume) -> Result<ClassScores> {
        self.0.classify(&canonicalize(windowed, CLASSIFIER_DIMS)?)
    }
}

/// Reads the ground-truth label: a perfect classifier.
pub struct OracleClassifier {
    labels: Vec<ClassLabel>,
}

impl OracleClassifier {
    pub fn new(labels: Vec<ClassLabel>) -> Self {
        OracleClassifier { labels }
    }
}

impl ScanClassifier for OracleClassifier {
    fn labels(&self) -> Vec<ClassLabel> {
        self.labels.clone()
    }

    fn classify_scan(&self, scan: &ScanRecord, _windowed: &Volume) -> Result<ClassScores> {
        if !self.labels.contains(&scan.true_label) {
            return Err(Error::Validation(format!(
                "{}: true label {} is not among the oracle's labels",
                scan.id, scan.true_label
            )));
        }
        ClassScores::certain(&self.labels, &scan.true_label)
    }
}

/// Per-scan outcome. Failed scans carry `error` and no Dice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingResult {
    pub id: String,
    pub true_label: ClassLabel,
    pub predicted_label: Option<ClassLabel>,
    pub scores: Option<ClassScores>,
    /// Segmenter used: a class label or `generic`.
    pub model: Option<String>,
    pub category: String,
    pub dice: Option<f64>,
    pub error: Option<String>,
    #[serde(skip)]
    pub mask: Option<Volume>,
}

impl RoutingResult {
    pub fn is_failure(&self) -> bool {
        self.error.is_some()
    }
}

pub fn category(true_label: &ClassLabel, model: &str) -> String {
    format!("{true_label}->{model}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub window: WindowSpec,
    /// Worker threads; 0 uses the global pool.
    pub jobs: usize,
    /// Keep predicted masks on the results.
    pub keep_masks: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            window: WindowSpec::default(),
            jobs: 0,
            keep_masks: false,
        }
    }
}

fn in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Which segmenter a scan goes to, decided from its windowed volume.
enum Route<'a> {
    Classify(&'a dyn ScanClassifier, &'a SegmenterRegistry),
    TrueLabel(&'a SegmenterRegistry),
    Specialist(&'a SegmenterRegistry, &'a ClassLabel),
    Generic(&'a dyn Segmenter),
}

fn process(scan: &ScanRecord, route: &Route<'_>, opts: &RunOptions) -> RoutingResult {
    let mut r = RoutingResult {
        id: scan.id.clone(),
        true_label: scan.true_label.clone(),
        predicted_label: None,
        scores: None,
        model: None,
        category: category(&scan.true_label, "unrouted"),
        dice: None,
        error: None,
        mask: None,
    };
    if let Err(e) = route_and_segment(scan, route, opts, &mut r) {
        r.error = Some(e.to_string());
    }
    r
}

fn route_and_segment(scan: &ScanRecord, route: &Route<'_>, opts: &RunOptions, r: &mut RoutingResult) -> Result<()> {
    let windowed = window(&scan.volume, &opts.window)?;
    let segmenter = match route {
        Route::Classify(classifier, registry) => {
            let scores = classifier.classify_scan(scan, &windowed)?;
            let predicted = scores.argmax().clone();
            r.scores = Some(scores);
            r.predicted_label = Some(predicted.clone());
            let s = registry.specialist(&predicted)?;
            r.model = Some(predicted.to_string());
            s
        }
        Route::TrueLabel(registry) => {
            r.predicted_label = Some(scan.true_label.clone());
            let s = registry.specialist(&scan.true_label)?;
            r.model = Some(scan.true_label.to_string());
            s
        }
        Route::Specialist(registry, label) => {
            let s = registry.specialist(label)?;
            r.model = Some(label.to_string());
            s
        }
        Route::Generic(s) => {
            r.model = Some(GENERIC_MODEL.to_string());
            *s
        }
    };
    r.category = category(&scan.true_label, r.model.as_deref().unwrap_or("unrouted"));
    let mask = segmenter.segment(&windowed)?;
    mask.as_mask()?;
    if mask.dims() != scan.truth_mask.dims() {
        return Err(Error::Geometry(format!(
            "segmenter returned {} for a {} scan",
            mask.dims(),
            scan.truth_mask.dims()
        )));
    }
    r.dice = Some(dice(&mask, &scan.truth_mask)?);
    if opts.keep_masks {
        r.mask = Some(mask);
    }
    Ok(())
}

fn run(data: &[ScanRecord], route: Route<'_>, opts: &RunOptions) -> Result<Vec<RoutingResult>> {
    let route = &route;
    let mut out = in_pool(opts.jobs, || {
        data.par_iter().map(|scan| process(scan, route, opts)).collect::<Vec<_>>()
    })?;
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Classify each scan on the 128³ LPS input, route by argmax (ties to the
/// lexicographically first label) and segment the full-resolution windowed
/// volume. Per-scan failures become failure rows.
pub fn run_adaptive(
    classifier: &dyn ScanClassifier,
    registry: &SegmenterRegistry,
    data: &[ScanRecord],
    opts: &RunOptions,
) -> Result<Vec<RoutingResult>> {
    run(data, Route::Classify(classifier, registry), opts)
}

/// Segment every scan with the registry's generic model.
pub fn run_generic(registry: &SegmenterRegistry, data: &[ScanRecord], opts: &RunOptions) -> Result<Vec<RoutingResult>> {
    let generic = registry
        .generic()
        .ok_or_else(|| Error::MissingRoute(GENERIC_MODEL.into()))?;
    run(data, Route::Generic(generic), opts)
}

/// Route every scan by its ground-truth label.
pub fn run_optimal(registry: &SegmenterRegistry, data: &[ScanRecord], opts: &RunOptions) -> Result<Vec<RoutingResult>> {
    run(data, Route::TrueLabel(registry), opts)
}

/// Send every scan to one specialist regardless of its label.
pub fn run_specialist(
    registry: &SegmenterRegistry,
    label: &ClassLabel,
    data: &[ScanRecord],
    opts: &RunOptions,
) -> Result<Vec<RoutingResult>> {
    registry.specialist(label)?;
    run(data, Route::Specialist(registry, label), opts)
}

/// Groups results by category.
pub fn categorize(results: &[RoutingResult]) -> BTreeMap<String, Vec<&RoutingResult>> {
    let mut out: BTreeMap<String, Vec<&RoutingResult>> = BTreeMap::new();
    for r in results {
        out.entry(r.category.clone()).or_default().push(r);
    }
    out
}

/// `(id, dice)` pairs for the paired tests. Fails on any failure row.
pub fn dice_pairs(results: &[RoutingResult]) -> Result<Vec<(String, f64)>> {
    results
        .iter()
        .map(|r| {
            r.dice.map(|d| (r.id.clone(), d)).ok_or_else(|| {
                Error::Pairing(format!(
                    "{} has no Dice: {}",
                    r.id,
                    r.error.as_deref().unwrap_or("unknown failure")
                ))
            })
        })
        .collect()
}

/// Classifier training pairs: the standard classifier input, optionally
/// augmented with the scan id as salt.
pub fn training_features(
    data: &[ScanRecord],
    window_spec: &WindowSpec,
    augmentation: Option<&AugmentSpec>,
    jobs: usize,
) -> Result<Vec<(FeatureVector, ClassLabel)>> {
    in_pool(jobs, || {
        data.par_iter()
            .map(|scan| {
                let mut v = canonicalize(&window(&scan.volume, window_spec)?, CLASSIFIER_DIMS)?;
                if let Some(spec) = augmentation {
                    v = augment(&v, spec, &scan.id)?;
                }
                Ok((extract_features(&v)?, scan.true_label.clone()))
            })
            .collect::<Result<Vec<_>>>()
    })?
}
