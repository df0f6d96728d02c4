//! Seeded synthetic liver phantoms with PLD-like and MCC-like inclusions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ClassLabel, Segmenter, ThresholdSegmenter};
use crate::pipeline::{ScanRecord, SegmenterRegistry};
use crate::volume::{write_svol, Dims, Orientation, Payload, Volume};

pub const BACKGROUND_HU: i16 = -1000;
pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;
pub const MIN_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhantomKind {
    #[serde(rename = "PLD")]
    Pld,
    #[serde(rename = "MCC")]
    Mcc,
}

impl PhantomKind {
    pub fn label(self) -> ClassLabel {
        match self {
            PhantomKind::Pld => ClassLabel::pld(),
            PhantomKind::Mcc => ClassLabel::mcc(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PhantomKind::Pld => "PLD",
            PhantomKind::Mcc => "MCC",
        }
    }
}

impl std::str::FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "PLD" | "pld" => Ok(PhantomKind::Pld),
            "MCC" | "mcc" => Ok(PhantomKind::Mcc),
            other => Err(Error::Validation(format!("unknown phantom kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub dims: Dims,
    pub spacing: [f64; 3],
    pub orientation: Orientation,
    pub seed: u64,
    /// Inclusive; used for PLD-like phantoms.
    pub cyst_count_range: (usize, usize),
    /// Inclusive; used for MCC-like phantoms.
    pub lesion_count_range: (usize, usize),
    /// Inclusion radii as fractions of the liver's shortest semi-axis.
    pub cyst_radius_range: (f64, f64),
    pub lesion_radius_range: (f64, f64),
    pub parenchyma_hu: f64,
    pub cyst_hu: f64,
    pub lesion_hu: f64,
    pub noise_sd: f64,
}

impl PhantomSpec {
    pub fn new(kind: PhantomKind, seed: u64) -> Self {
        PhantomSpec {
            kind,
            dims: Dims::cube(96),
            spacing: [1.0; 3],
            orientation: Orientation::RAS,
            seed,
            cyst_count_range: (15, 40),
            lesion_count_range: (1, 6),
            cyst_radius_range: (0.06, 0.18),
            lesion_radius_range: (0.10, 0.25),
            parenchyma_hu: 60.0,
            cyst_hu: 5.0,
            lesion_hu: 120.0,
            noise_sd: 8.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.0.iter().any(|&d| d < MIN_DIM) {
            return Err(Error::Validation(format!(
                "phantom dims {} must be at least {MIN_DIM} per axis",
                self.dims
            )));
        }
        for (name, (lo, hi)) in [
            ("cyst_count_range", self.cyst_count_range),
            ("lesion_count_range", self.lesion_count_range),
        ] {
            if lo > hi {
                return Err(Error::Validation(format!("{name} ({lo}, {hi}) is reversed")));
            }
        }
        for (name, (lo, hi)) in [
            ("cyst_radius_range", self.cyst_radius_range),
            ("lesion_radius_range", self.lesion_radius_range),
        ] {
            if !(lo > 0.0 && lo <= hi && hi < 1.0) {
                return Err(Error::Validation(format!(
                    "{name} ({lo}, {hi}) must satisfy 0 < lo <= hi < 1"
                )));
            }
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::Validation(format!("noise_sd {} must be >= 0", self.noise_sd)));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Validation(format!("spacing {:?} must be positive", self.spacing)));
        }
        Ok(())
    }
}

struct Liver {
    center: [f64; 3],
    semi: [f64; 3],
    exponent: f64,
}

impl Liver {
    fn contains(&self, p: [f64; 3]) -> bool {
        (0..3)
            .map(|d| ((p[d] - self.center[d]) / self.semi[d]).abs().powf(self.exponent))
            .sum::<f64>()
            <= 1.0
    }
}

fn sphere_offsets(dims: Dims, c: [f64; 3], r: f64) -> Vec<usize> {
    let lo = |d: usize| (c[d] - r).floor().max(0.0) as usize;
    let hi = |d: usize| ((c[d] + r).ceil() as usize).min(dims.0[d] - 1);
    let mut out = Vec::new();
    for k in lo(2)..=hi(2) {
        for j in lo(1)..=hi(1) {
            for i in lo(0)..=hi(0) {
                let d2 = (i as f64 - c[0]).powi(2) + (j as f64 - c[1]).powi(2) + (k as f64 - c[2]).powi(2);
                if d2 <= r * r {
                    out.push(dims.offset(i, j, k));
                }
            }
        }
    }
    out
}

/// Builds one phantom. Inclusions never leave the liver, so the mask is the
/// liver region alone.
pub fn generate_phantom(spec: &PhantomSpec, id: impl Into<String>) -> Result<ScanRecord> {
    spec.validate()?;
    let dims = spec.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut center = [0.0; 3];
    let mut semi = [0.0; 3];
    for d in 0..3 {
        let n = dims.0[d] as f64;
        center[d] = (n - 1.0) / 2.0 + rng.random_range(-0.05..=0.05) * n;
        let want = rng.random_range(0.28..=0.38) * n;
        // Leave at least one background voxel on every side.
        semi[d] = want.min(center[d] - 1.0).min(n - 2.0 - center[d]);
    }
    let liver = Liver {
        center,
        semi,
        exponent: rng.random_range(2.0..=3.0),
    };

    let mut in_liver = vec![false; dims.len()];
    let lo = |d: usize| (center[d] - semi[d]).floor().max(0.0) as usize;
    let hi = |d: usize| ((center[d] + semi[d]).ceil() as usize).min(dims.0[d] - 1);
    for k in lo(2)..=hi(2) {
        for j in lo(1)..=hi(1) {
            for i in lo(0)..=hi(0) {
                in_liver[dims.offset(i, j, k)] = liver.contains([i as f64, j as f64, k as f64]);
            }
        }
    }

    let (count_range, radius_range, inclusion_hu) = match spec.kind {
        PhantomKind::Pld => (spec.cyst_count_range, spec.cyst_radius_range, spec.cyst_hu),
        PhantomKind::Mcc => (spec.lesion_count_range, spec.lesion_radius_range, spec.lesion_hu),
    };
    let count = rng.random_range(count_range.0..=count_range.1);
    let shortest = semi.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut level = vec![spec.parenchyma_hu; dims.len()];
    for n in 0..count {
        let r = rng.random_range(radius_range.0..=radius_range.1) * shortest;
        let mut placed = false;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let c = [0, 1, 2].map(|d| rng.random_range((center[d] - semi[d])..=(center[d] + semi[d])));
            let voxels = sphere_offsets(dims, c, r);
            if !voxels.is_empty() && voxels.iter().all(|&o| in_liver[o]) && liver.contains(c) {
                for o in voxels {
                    level[o] = inclusion_hu;
                }
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Generation(format!(
                "could not place inclusion {} of {count} (radius {r:.2}) inside the liver after {MAX_PLACEMENT_ATTEMPTS} attempts",
                n + 1
            )));
        }
    }

    let noise = if spec.noise_sd > 0.0 {
        Some(Normal::new(0.0, spec.noise_sd).map_err(|e| Error::Validation(e.to_string()))?)
    } else {
        None
    };
    let hu: Vec<i16> = (0..dims.len())
        .map(|o| {
            let base = if in_liver[o] { level[o] } else { BACKGROUND_HU as f64 };
            let x = base + noise.as_ref().map_or(0.0, |n| n.sample(&mut rng));
            x.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
        })
        .collect();
    let mask: Vec<u8> = in_liver.iter().map(|&b| u8::from(b)).collect();
    if !mask.contains(&1) {
        return Err(Error::Generation("liver region is empty".into()));
    }

    let volume = Volume::new(dims, spec.spacing, spec.orientation, Payload::Hu(hu))?;
    let truth_mask = volume.with_payload(Payload::Mask(mask))?;
    ScanRecord::new(id.into(), volume, truth_mask, spec.kind.label())
}

/// Threshold segmenters tuned to the default HU constants: the PLD
/// specialist keeps cysts and parenchyma, the MCC specialist keeps lesions
/// and parenchyma, and the generic model uses one narrower band that
/// clips both kinds of inclusion.
pub fn reference_registry() -> SegmenterRegistry {
    let band = |lo, hi| -> Arc<dyn Segmenter> {
        Arc::new(ThresholdSegmenter::new((lo, hi), 1, true).expect("valid reference band"))
    };
    SegmenterRegistry::new()
        .with_specialist(ClassLabel::pld(), band(0.04, 0.30))
        .with_specialist(ClassLabel::mcc(), band(0.16, 0.45))
        .with_generic(band(0.10, 0.35))
}

pub fn cohort_id(kind: PhantomKind, index: usize) -> String {
    format!("{}-{index:04}", kind.as_str())
}

/// `count` phantoms with seeds `base_seed ^ index`, built from `template`
/// (its kind and seed are overridden).
pub fn generate_cohort_with(
    template: &PhantomSpec,
    kind: PhantomKind,
    count: usize,
    base_seed: u64,
) -> Result<Vec<ScanRecord>> {
    use rayon::prelude::*;
    if count == 0 {
        return Err(Error::Validation("cohort count must be at least 1".into()));
    }
    (0..count)
        .into_par_iter()
        .map(|index| {
            let spec = PhantomSpec {
                kind,
                seed: base_seed ^ index as u64,
                ..template.clone()
            };
            generate_phantom(&spec, cohort_id(kind, index))
        })
        .collect()
}

pub fn generate_cohort(kind: PhantomKind, count: usize, base_seed: u64) -> Result<Vec<ScanRecord>> {
    generate_cohort_with(&PhantomSpec::new(kind, 0), kind, count, base_seed)
}

/// One manifest line. Paths are relative to the manifest's directory
/// unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub label: ClassLabel,
    pub volume: PathBuf,
    pub mask: PathBuf,
}

pub const MANIFEST_NAME: &str = "manifest.jsonl";

/// Writes `<id>.svol` and `<id>_mask.svol` into `dir` and merges the
/// entries into `dir/manifest.jsonl`, which stays sorted by id (entries
/// with the same id are replaced). Returns the manifest path.
pub fn write_cohort(records: &[ScanRecord], dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let manifest = dir.join(MANIFEST_NAME);
    let mut entries: BTreeMap<String, ManifestEntry> = BTreeMap::new();
    if manifest.exists() {
        let text = std::fs::read_to_string(&manifest).map_err(|e| Error::file(&manifest, e))?;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let e: ManifestEntry = serde_json::from_str(line)?;
            entries.insert(e.id.clone(), e);
        }
    }
    for r in records {
        let volume = PathBuf::from(format!("{}.svol", r.id));
        let mask = PathBuf::from(format!("{}_mask.svol", r.id));
        write_svol(&r.volume, dir.join(&volume))?;
        write_svol(&r.truth_mask, dir.join(&mask))?;
        entries.insert(
            r.id.clone(),
            ManifestEntry {
                id: r.id.clone(),
                label: r.true_label.clone(),
                volume,
                mask,
            },
        );
    }
    let mut lines = String::new();
    for e in entries.values() {
        lines.push_str(&serde_json::to_string(e)?);
        lines.push('\n');
    }
    std::fs::write(&manifest, lines).map_err(|e| Error::file(&manifest, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::morphology::label_components;

    fn small(kind: PhantomKind, seed: u64) -> PhantomSpec {
        PhantomSpec {
            dims: Dims::cube(32),
            ..PhantomSpec::new(kind, seed)
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_phantom(&small(PhantomKind::Pld, 3), "a").unwrap();
        let b = generate_phantom(&small(PhantomKind::Pld, 3), "a").unwrap();
        assert_eq!(a.volume, b.volume);
        assert_eq!(a.truth_mask, b.truth_mask);
        let c = generate_phantom(&small(PhantomKind::Pld, 4), "a").unwrap();
        assert_ne!(a.volume, c.volume);
    }

    #[test]
    fn mask_is_one_component_inside_bounds() {
        for seed in 0..6 {
            for kind in [PhantomKind::Pld, PhantomKind::Mcc] {
                let r = generate_phantom(&small(kind, seed), "x").unwrap();
                let dims = r.truth_mask.dims();
                let m = r.truth_mask.as_mask().unwrap();
                let (_, sizes) = label_components(m, dims);
                assert_eq!(sizes.len(), 1);
                for (o, &v) in m.iter().enumerate() {
                    if v == 1 {
                        let c = dims.coords(o);
                        assert!((0..3).all(|d| c[d] > 0 && c[d] + 1 < dims.0[d]));
                    }
                }
            }
        }
    }

    #[test]
    fn noiseless_empty_liver_is_flat() {
        let spec = PhantomSpec {
            noise_sd: 0.0,
            cyst_count_range: (0, 0),
            ..small(PhantomKind::Pld, 9)
        };
        let r = generate_phantom(&spec, "flat").unwrap();
        let hu = r.volume.as_hu().unwrap();
        for (&h, &m) in hu.iter().zip(r.truth_mask.as_mask().unwrap()) {
            assert_eq!(h, if m == 1 { 60 } else { BACKGROUND_HU });
        }
    }

    #[test]
    fn unplaceable_inclusions_error() {
        let spec = PhantomSpec {
            cyst_radius_range: (0.95, 0.99),
            cyst_count_range: (3, 3),
            ..small(PhantomKind::Pld, 1)
        };
        assert!(matches!(generate_phantom(&spec, "x"), Err(Error::Generation(_))));
    }

    #[test]
    fn validation() {
        let mut spec = small(PhantomKind::Mcc, 0);
        spec.dims = Dims::new(15, 32, 32);
        assert!(spec.validate().is_err());
        let mut spec = small(PhantomKind::Mcc, 0);
        spec.noise_sd = -1.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn cohort_ids_and_seeds() {
        let template = small(PhantomKind::Mcc, 0);
        let c = generate_cohort_with(&template, PhantomKind::Mcc, 3, 10).unwrap();
        let ids: Vec<&str> = c.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["MCC-0000", "MCC-0001", "MCC-0002"]);
        let direct = generate_phantom(
            &PhantomSpec {
                seed: 10 ^ 2,
                ..template
            },
            "MCC-0002",
        )
        .unwrap();
        assert_eq!(direct.volume, c[2].volume);
    }
}
