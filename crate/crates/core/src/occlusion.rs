//! Occlusion sensitivity maps for any classifier.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ClassLabel, Classifier};
use crate::volume::{Dims, Payload, Volume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionSpec {
    pub patch_size: [usize; 3],
    pub stride: [usize; 3],
    #[serde(default)]
    pub fill_value: f64,
    pub target_class: ClassLabel,
}

impl OcclusionSpec {
    pub fn new(patch_size: [usize; 3], stride: [usize; 3], target_class: ClassLabel) -> Self {
        OcclusionSpec {
            patch_size,
            stride,
            fill_value: 0.0,
            target_class,
        }
    }

    pub fn validate(&self, dims: Dims) -> Result<()> {
        for d in 0..3 {
            let (p, s, n) = (self.patch_size[d], self.stride[d], dims.0[d]);
            if p == 0 || s == 0 {
                return Err(Error::Validation("patch and stride must be positive".into()));
            }
            if p > n || s > n {
                return Err(Error::Validation(format!(
                    "patch {:?} / stride {:?} exceed volume dims {dims}",
                    self.patch_size, self.stride
                )));
            }
        }
        if !self.fill_value.is_finite() {
            return Err(Error::Validation("fill value must be finite".into()));
        }
        Ok(())
    }
}

/// Patch origins along one axis: multiples of the stride that keep the patch
/// inside, plus the last in-bounds origin.
pub fn axis_anchors(n: usize, patch: usize, stride: usize) -> Vec<usize> {
    let last = n - patch;
    let mut out: Vec<usize> = (0..=last).step_by(stride).collect();
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

/// Anchors in scan order (i fastest).
pub fn anchors(dims: Dims, spec: &OcclusionSpec) -> Vec<[usize; 3]> {
    let ax: Vec<Vec<usize>> = (0..3)
        .map(|d| axis_anchors(dims.0[d], spec.patch_size[d], spec.stride[d]))
        .collect();
    let mut out = Vec::new();
    for &k in &ax[2] {
        for &j in &ax[1] {
            for &i in &ax[0] {
                out.push([i, j, k]);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionMap {
    /// Coverage-averaged sensitivity on the input grid.
    pub map: Volume,
    /// `(anchor, delta)` per patch, in anchor order.
    pub deltas: Vec<([usize; 3], f64)>,
    pub coverage: Vec<u32>,
}

impl OcclusionMap {
    pub fn deltas_csv(&self) -> String {
        let mut s = String::from("i,j,k,delta\n");
        for ([i, j, k], d) in &self.deltas {
            s.push_str(&format!("{i},{j},{k},{d:e}\n"));
        }
        s
    }
}

fn target_probability(classifier: &dyn Classifier, v: &Volume, target: &ClassLabel) -> Result<f64> {
    classifier
        .classify(v)?
        .get(target)
        .ok_or_else(|| Error::Validation(format!("classifier has no score for {target}")))
}

/// Δ = p(v) − p(v with the patch filled), averaged over the patches covering
/// each voxel. Positive values mark regions supporting the target class.
pub fn occlusion_map(classifier: &dyn Classifier, v: &Volume, spec: &OcclusionSpec) -> Result<OcclusionMap> {
    let data = v.as_real()?;
    let dims = v.dims();
    spec.validate(dims)?;
    let base = target_probability(classifier, v, &spec.target_class)?;
    let fill = spec.fill_value as f32;
    let [px, py, pz] = spec.patch_size;

    let anchors = anchors(dims, spec);
    let deltas: Vec<([usize; 3], f64)> = anchors
        .par_iter()
        .map(|&a| {
            let mut occluded = data.to_vec();
            for k in a[2]..a[2] + pz {
                for j in a[1]..a[1] + py {
                    let o = dims.offset(a[0], j, k);
                    occluded[o..o + px].fill(fill);
                }
            }
            let p = target_probability(classifier, &v.with_payload(Payload::Real(occluded))?, &spec.target_class)?;
            Ok((a, base - p))
        })
        .collect::<Result<_>>()?;

    let mut sum = vec![0.0f64; dims.len()];
    let mut coverage = vec![0u32; dims.len()];
    for (a, d) in &deltas {
        for k in a[2]..a[2] + pz {
            for j in a[1]..a[1] + py {
                let o = dims.offset(a[0], j, k);
                for n in o..o + px {
                    sum[n] += d;
                    coverage[n] += 1;
                }
            }
        }
    }
    let values: Vec<f32> = sum
        .iter()
        .zip(&coverage)
        .map(|(&s, &c)| (s / c as f64) as f32)
        .collect();
    Ok(OcclusionMap {
        map: v.with_payload(Payload::Real(values))?,
        deltas,
        coverage,
    })
}
