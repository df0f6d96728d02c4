//! Classifier-input preprocessing: HU windowing, orientation
//! standardization, box-filter resizing and seeded augmentation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Dims, Orientation, Payload, Volume};

/// Grid every classifier input is resized to.
pub const CLASSIFIER_DIMS: Dims = Dims([128, 128, 128]);

/// Linear HU window mapping `[level - width/2, level + width/2]` onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub level: f64,
    pub width: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            level: 180.0,
            width: 440.0,
        }
    }
}

impl WindowSpec {
    pub fn new(level: f64, width: f64) -> Result<Self> {
        let w = WindowSpec { level, width };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.width.is_finite() && self.level.is_finite()) {
            return Err(Error::Validation(format!(
                "window width must be positive (level {}, width {})",
                self.level, self.width
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, hu: f64) -> f64 {
        let lo = self.level - self.width / 2.0;
        ((hu - lo) / self.width).clamp(0.0, 1.0)
    }
}

pub fn window(v: &Volume, w: &WindowSpec) -> Result<Volume> {
    w.validate()?;
    let hu = v.as_hu()?;
    let out = hu.iter().map(|&x| w.apply(x as f64) as f32).collect();
    v.with_payload(Payload::Real(out))
}

/// Per-axis overlap weights for mapping `n_src` cells onto `n_tgt` cells.
/// Entry `t` lists `(source index, weight)` with weights summing to one.
fn box_weights(n_src: usize, n_tgt: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n_src as f64 / n_tgt as f64;
    (0..n_tgt)
        .map(|t| {
            let lo = (t * n_src) as f64 / n_tgt as f64;
            let hi = ((t + 1) * n_src) as f64 / n_tgt as f64;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(n_src);
            (first..last)
                .filter_map(|u| {
                    let overlap = (hi.min(u as f64 + 1.0) - lo.max(u as f64)).max(0.0);
                    (overlap > 0.0).then_some((u, overlap / scale))
                })
                .collect()
        })
        .collect()
}

/// Resamples one axis of an x-fastest buffer.
fn resize_axis(data: &[f64], dims: [usize; 3], axis: usize, n_tgt: usize) -> (Vec<f64>, [usize; 3]) {
    let n_src = dims[axis];
    let mut out_dims = dims;
    out_dims[axis] = n_tgt;
    if n_src == n_tgt {
        return (data.to_vec(), out_dims);
    }
    let weights = box_weights(n_src, n_tgt);
    let stride_src: usize = dims[..axis].iter().product();
    let stride_tgt = stride_src;
    let outer: usize = dims[axis + 1..].iter().product();
    let mut out = vec![0.0; out_dims.iter().product()];
    for o in 0..outer {
        let src_base = o * n_src * stride_src;
        let tgt_base = o * n_tgt * stride_tgt;
        for (t, taps) in weights.iter().enumerate() {
            let dst = &mut out[tgt_base + t * stride_tgt..tgt_base + (t + 1) * stride_tgt];
            for &(u, w) in taps {
                let src = &data[src_base + u * stride_src..src_base + (u + 1) * stride_src];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
    (out, out_dims)
}

/// Box-filter resize computed in `f64`. Returns values in x-fastest order.
pub fn resize_box_f64(values: &[f64], dims: Dims, target: Dims) -> Result<Vec<f64>> {
    if target.0.contains(&0) {
        return Err(Error::Validation(format!("target dims {target} must be positive")));
    }
    if values.len() != dims.len() {
        return Err(Error::Geometry(format!(
            "{} values for dims {dims}",
            values.len()
        )));
    }
    let mut cur = values.to_vec();
    let mut cur_dims = dims.0;
    for axis in 0..3 {
        let (next, next_dims) = resize_axis(&cur, cur_dims, axis, target.0[axis]);
        cur = next;
        cur_dims = next_dims;
    }
    Ok(cur)
}

/// Resizes by overlap-weighted box averaging. HU and Real inputs produce a
/// Real volume; masks are averaged then re-binarized at 0.5. Spacing scales
/// so the physical extent is unchanged.
pub fn resize_box(v: &Volume, target: Dims) -> Result<Volume> {
    let values = v.payload().to_f64();
    let out = resize_box_f64(&values, v.dims(), target)?;
    let src = v.dims().0;
    let sp = v.spacing();
    let spacing = [
        sp[0] * src[0] as f64 / target.0[0] as f64,
        sp[1] * src[1] as f64 / target.0[1] as f64,
        sp[2] * src[2] as f64 / target.0[2] as f64,
    ];
    let payload = match v.payload() {
        Payload::Mask(_) => Payload::Mask(out.iter().map(|&x| u8::from(x >= 0.5)).collect()),
        _ => Payload::Real(out.iter().map(|&x| x as f32).collect()),
    };
    Volume::new(target, spacing, v.orientation(), payload)
}

/// Storage axis selector for flips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    I,
    J,
    K,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::I => 0,
            Axis::J => 1,
            Axis::K => 2,
        }
    }
}

/// Random rotation about the k axis plus random flips.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentSpec {
    /// Subset of {90, 180, 270}.
    pub rotation_angles: Vec<u16>,
    pub flip_axes: Vec<Axis>,
    pub seed: u64,
}

impl AugmentSpec {
    pub fn none() -> Self {
        AugmentSpec {
            rotation_angles: Vec::new(),
            flip_axes: Vec::new(),
            seed: 0,
        }
    }

    pub fn standard(seed: u64) -> Self {
        AugmentSpec {
            rotation_angles: vec![90, 180, 270],
            flip_axes: vec![Axis::I, Axis::J, Axis::K],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.rotation_angles.iter().find(|a| ![90, 180, 270].contains(*a)) {
            return Err(Error::Validation(format!(
                "rotation angle {a} not in {{90, 180, 270}}"
            )));
        }
        Ok(())
    }
}

/// Rotates about the k axis by a multiple of 90 degrees. Quarter turns
/// require a square (i, j) plane.
pub fn rotate_k(v: &Volume, degrees: u16) -> Result<Volume> {
    let [nx, ny, nz] = v.dims().0;
    let quarter = match degrees {
        0 => return Ok(v.clone()),
        90 | 270 if nx != ny => {
            return Err(Error::Validation(format!(
                "{degrees} degree rotation needs square in-plane dims, got {nx}x{ny}"
            )))
        }
        90 => 1,
        180 => 2,
        270 => 3,
        other => {
            return Err(Error::Validation(format!(
                "rotation must be a multiple of 90 degrees, got {other}"
            )))
        }
    };
    let src = v.dims();
    let mut src_of_dst = Vec::with_capacity(src.len());
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let (si, sj) = match quarter {
                    1 => (j, nx - 1 - i),
                    2 => (nx - 1 - i, ny - 1 - j),
                    _ => (ny - 1 - j, i),
                };
                src_of_dst.push(src.offset(si, sj, k));
            }
        }
    }
    Ok(v.gathered(src, v.spacing(), &src_of_dst))
}

pub fn flip(v: &Volume, axis: Axis) -> Volume {
    let dims = v.dims();
    let a = axis.index();
    let mut src_of_dst = Vec::with_capacity(dims.len());
    for k in 0..dims.0[2] {
        for j in 0..dims.0[1] {
            for i in 0..dims.0[0] {
                let mut idx = [i, j, k];
                idx[a] = dims.0[a] - 1 - idx[a];
                src_of_dst.push(dims.offset(idx[0], idx[1], idx[2]));
            }
        }
    }
    v.gathered(dims, v.spacing(), &src_of_dst)
}

/// 64-bit FNV-1a.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Applies a random rotation and random flips. The draw depends only on
/// `spec.seed` and `salt` (normally the scan id).
pub fn augment(v: &Volume, spec: &AugmentSpec, salt: &str) -> Result<Volume> {
    spec.validate()?;
    let [nx, ny, _] = v.dims().0;
    if nx != ny && spec.rotation_angles.iter().any(|&a| a == 90 || a == 270) {
        return Err(Error::Validation(format!(
            "quarter-turn rotations need square in-plane dims, got {nx}x{ny}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ fnv1a(salt.as_bytes()));
    let choice = rng.random_range(0..=spec.rotation_angles.len());
    let angle = if choice == 0 {
        0
    } else {
        spec.rotation_angles[choice - 1]
    };
    let mut out = rotate_k(v, angle)?;
    for &axis in &spec.flip_axes {
        if rng.random_bool(0.5) {
            out = flip(&out, axis);
        }
    }
    Ok(out)
}

/// Window, reorient to LPS, then box-resize to the classifier grid.
pub fn preprocess_for_classification(v: &Volume, w: &WindowSpec) -> Result<Volume> {
    preprocess_to(v, w, CLASSIFIER_DIMS)
}

pub fn preprocess_to(v: &Volume, w: &WindowSpec, target: Dims) -> Result<Volume> {
    canonicalize(&window(v, w)?, target)
}

/// The post-window half of the chain: reorient to LPS, then box-resize.
pub fn canonicalize(windowed: &Volume, target: Dims) -> Result<Volume> {
    resize_box(&windowed.reorient(Orientation::LPS), target)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hu_line(values: &[i16]) -> Volume {
        Volume::new(
            Dims::new(values.len(), 1, 1),
            [1.0; 3],
            Orientation::LPS,
            Payload::Hu(values.to_vec()),
        )
        .unwrap()
    }

    fn real(dims: Dims, values: Vec<f32>) -> Volume {
        Volume::new(dims, [1.0; 3], Orientation::LPS, Payload::Real(values)).unwrap()
    }

    #[test]
    fn default_window_values() {
        let v = hu_line(&[-1000, 180, 400, 620, -40]);
        let w = window(&v, &WindowSpec::default()).unwrap();
        assert_eq!(w.as_real().unwrap(), &[0.0, 0.5, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn window_rejects_non_hu_and_bad_width() {
        let r = real(Dims::cube(1), vec![0.5]);
        assert!(matches!(
            window(&r, &WindowSpec::default()),
            Err(Error::PayloadType { .. })
        ));
        assert!(WindowSpec::new(0.0, 0.0).is_err());
        assert!(WindowSpec::new(0.0, -3.0).is_err());
    }

    #[test]
    fn resize_even_split() {
        let v = real(Dims::new(4, 1, 1), vec![0.0, 2.0, 4.0, 6.0]);
        let r = resize_box(&v, Dims::new(2, 1, 1)).unwrap();
        assert_eq!(r.as_real().unwrap(), &[1.0, 5.0]);
        assert_eq!(r.spacing(), [2.0, 1.0, 1.0]);
    }

    #[test]
    fn resize_fractional_overlap() {
        let v = real(Dims::new(3, 1, 1), vec![0.0, 3.0, 6.0]);
        let r = resize_box(&v, Dims::new(2, 1, 1)).unwrap();
        let out = r.as_real().unwrap();
        assert!((out[0] - 1.0).abs() < 1e-6);
        assert!((out[1] - 5.0).abs() < 1e-6);
    }

    #[test]
    fn resize_constant_and_upsample() {
        let v = real(Dims::new(5, 3, 2), vec![0.25; 30]);
        for target in [Dims::new(2, 2, 2), Dims::new(7, 11, 3), Dims::cube(1)] {
            let r = resize_box(&v, target).unwrap();
            assert!(r.as_real().unwrap().iter().all(|&x| (x - 0.25).abs() < 1e-7));
        }
    }

    #[test]
    fn resize_rejects_zero_target() {
        let v = real(Dims::cube(2), vec![0.0; 8]);
        assert!(matches!(
            resize_box(&v, Dims::new(2, 0, 2)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn resize_mask_rebinarizes() {
        let v = Volume::new(
            Dims::new(4, 1, 1),
            [1.0; 3],
            Orientation::LPS,
            Payload::Mask(vec![1, 1, 1, 0]),
        )
        .unwrap();
        let r = resize_box(&v, Dims::new(2, 1, 1)).unwrap();
        assert_eq!(r.as_mask().unwrap(), &[1, 1]);
        let r = resize_box(&v, Dims::new(1, 1, 1)).unwrap();
        assert_eq!(r.as_mask().unwrap(), &[1]);
    }

    #[test]
    fn box_weights_sum_to_one() {
        for (s, t) in [(3, 2), (96, 128), (128, 96), (7, 7), (1, 5), (5, 1)] {
            for taps in box_weights(s, t) {
                let total: f64 = taps.iter().map(|(_, w)| w).sum();
                assert!((total - 1.0).abs() < 1e-12, "{s}->{t}: {total}");
            }
        }
    }

    fn ramp(dims: Dims) -> Volume {
        real(dims, (0..dims.len()).map(|n| n as f32).collect())
    }

    #[test]
    fn rotation_180_twice_is_identity() {
        let v = ramp(Dims::new(3, 5, 2));
        let r = rotate_k(&rotate_k(&v, 180).unwrap(), 180).unwrap();
        assert_eq!(r, v);
        assert_ne!(rotate_k(&v, 180).unwrap(), v);
    }

    #[test]
    fn quarter_turns_compose() {
        let v = ramp(Dims::new(4, 4, 2));
        let r90 = rotate_k(&v, 90).unwrap();
        assert_eq!(rotate_k(&r90, 90).unwrap(), rotate_k(&v, 180).unwrap());
        assert_eq!(rotate_k(&r90, 270).unwrap(), v);
        assert!(rotate_k(&ramp(Dims::new(3, 4, 2)), 90).is_err());
        assert!(rotate_k(&v, 45).is_err());
    }

    #[test]
    fn augment_is_deterministic_and_permutes() {
        let v = ramp(Dims::new(4, 4, 3));
        let spec = AugmentSpec::standard(42);
        let a = augment(&v, &spec, "PLD-0001").unwrap();
        let b = augment(&v, &spec, "PLD-0001").unwrap();
        assert_eq!(a, b);
        let mut vals: Vec<f32> = a.as_real().unwrap().to_vec();
        vals.sort_by(f32::total_cmp);
        assert_eq!(vals, v.as_real().unwrap());
    }

    #[test]
    fn augment_identity_when_empty() {
        let v = ramp(Dims::new(3, 4, 2));
        assert_eq!(augment(&v, &AugmentSpec::none(), "x").unwrap(), v);
    }

    #[test]
    fn augment_rejects_quarter_turns_on_rectangles() {
        let v = ramp(Dims::new(3, 4, 2));
        assert!(augment(&v, &AugmentSpec::standard(1), "x").is_err());
        let spec = AugmentSpec {
            rotation_angles: vec![180],
            flip_axes: vec![Axis::I],
            seed: 1,
        };
        assert!(augment(&v, &spec, "x").is_ok());
        let bad = AugmentSpec {
            rotation_angles: vec![45],
            ..spec
        };
        assert!(augment(&v, &bad, "x").is_err());
    }

    #[test]
    fn full_chain_on_small_input() {
        let v = Volume::new(
            Dims::new(6, 5, 4),
            [0.8, 0.8, 2.5],
            Orientation::RAS,
            Payload::Hu(vec![-1000; 120]),
        )
        .unwrap();
        let out = preprocess_to(&v, &WindowSpec::default(), Dims::new(8, 8, 8)).unwrap();
        assert_eq!(out.orientation(), Orientation::LPS);
        assert!(out.as_real().unwrap().iter().all(|&x| x == 0.0));
        assert!(matches!(
            preprocess_to(&out, &WindowSpec::default(), Dims::new(8, 8, 8)),
            Err(Error::PayloadType { .. })
        ));
    }
}
