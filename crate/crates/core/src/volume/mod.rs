//! Voxel grids with geometry and typed payloads.
//!
//! Storage order is x-fastest: the linear offset of `(i, j, k)` is
//! `i + nx * (j + ny * k)`. Every module relies on this.

mod orientation;
pub mod svol;

pub use orientation::{Direction, Orientation};
pub use svol::{read_svol, write_svol};

use crate::error::{Error, Result};

/// Voxel counts along the three storage axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct Dims(pub [usize; 3]);

impl Dims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Dims([nx, ny, nz])
    }

    pub fn cube(n: usize) -> Self {
        Dims([n, n, n])
    }

    pub fn len(&self) -> usize {
        self.0.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.0[0] * (j + self.0[1] * k)
    }

    #[inline]
    pub fn coords(&self, offset: usize) -> [usize; 3] {
        let [nx, ny, _] = self.0;
        [offset % nx, (offset / nx) % ny, offset / (nx * ny)]
    }

    pub fn contains(&self, idx: [usize; 3]) -> bool {
        idx.iter().zip(self.0).all(|(&a, n)| a < n)
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.0[0], self.0[1], self.0[2])
    }
}

/// An in-bounds voxel coordinate for a particular grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VoxelIndex([usize; 3]);

impl VoxelIndex {
    pub fn new(dims: Dims, i: usize, j: usize, k: usize) -> Result<Self> {
        if dims.contains([i, j, k]) {
            Ok(VoxelIndex([i, j, k]))
        } else {
            Err(Error::Validation(format!(
                "index ({i}, {j}, {k}) outside {dims}"
            )))
        }
    }

    pub fn get(&self) -> [usize; 3] {
        self.0
    }
}

/// Typed voxel values.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Hounsfield units.
    Hu(Vec<i16>),
    /// Binary mask, values in {0, 1}.
    Mask(Vec<u8>),
    /// Finite reals.
    Real(Vec<f32>),
}

impl Payload {
    pub fn len(&self) -> usize {
        match self {
            Payload::Hu(v) => v.len(),
            Payload::Mask(v) => v.len(),
            Payload::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Hu(_) => "HU",
            Payload::Mask(_) => "Mask",
            Payload::Real(_) => "Real",
        }
    }

    /// Values widened to `f64`.
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            Payload::Hu(v) => v.iter().map(|&x| x as f64).collect(),
            Payload::Mask(v) => v.iter().map(|&x| x as f64).collect(),
            Payload::Real(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }

    fn permuted(&self, src_of_dst: &[usize]) -> Payload {
        fn gather<T: Copy>(data: &[T], src_of_dst: &[usize]) -> Vec<T> {
            src_of_dst.iter().map(|&s| data[s]).collect()
        }
        match self {
            Payload::Hu(v) => Payload::Hu(gather(v, src_of_dst)),
            Payload::Mask(v) => Payload::Mask(gather(v, src_of_dst)),
            Payload::Real(v) => Payload::Real(gather(v, src_of_dst)),
        }
    }
}

/// A 3D voxel grid. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: Dims,
    spacing: [f64; 3],
    orientation: Orientation,
    payload: Payload,
}

impl Volume {
    pub fn new(
        dims: Dims,
        spacing: [f64; 3],
        orientation: Orientation,
        payload: Payload,
    ) -> Result<Self> {
        if dims.0.contains(&0) {
            return Err(Error::Validation(format!("dims {dims} must be positive")));
        }
        if dims.len() != payload.len() {
            return Err(Error::Validation(format!(
                "dims {dims} need {} voxels, payload has {}",
                dims.len(),
                payload.len()
            )));
        }
        if !spacing.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::Validation(format!(
                "spacing {spacing:?} must be positive and finite"
            )));
        }
        match &payload {
            Payload::Mask(m) => {
                if let Some(bad) = m.iter().find(|&&x| x > 1) {
                    return Err(Error::Validation(format!("mask value {bad} not in {{0,1}}")));
                }
            }
            Payload::Real(r) => {
                if let Some(bad) = r.iter().find(|x| !x.is_finite()) {
                    return Err(Error::Validation(format!("non-finite real voxel {bad}")));
                }
            }
            Payload::Hu(_) => {}
        }
        Ok(Volume {
            dims,
            spacing,
            orientation,
            payload,
        })
    }

    /// Same geometry as `self`, different payload.
    pub fn with_payload(&self, payload: Payload) -> Result<Self> {
        Volume::new(self.dims, self.spacing, self.orientation, payload)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn into_payload(self) -> Payload {
        self.payload
    }

    pub fn same_geometry(&self, other: &Volume) -> bool {
        self.dims == other.dims
            && self.spacing == other.spacing
            && self.orientation == other.orientation
    }

    pub fn as_hu(&self) -> Result<&[i16]> {
        match &self.payload {
            Payload::Hu(v) => Ok(v),
            other => Err(Error::PayloadType {
                expected: "HU",
                found: other.kind(),
            }),
        }
    }

    pub fn as_mask(&self) -> Result<&[u8]> {
        match &self.payload {
            Payload::Mask(v) => Ok(v),
            other => Err(Error::PayloadType {
                expected: "Mask",
                found: other.kind(),
            }),
        }
    }

    pub fn as_real(&self) -> Result<&[f32]> {
        match &self.payload {
            Payload::Real(v) => Ok(v),
            other => Err(Error::PayloadType {
                expected: "Real",
                found: other.kind(),
            }),
        }
    }

    /// Rearranges storage so the volume is expressed in `target` orientation.
    /// The same anatomical location keeps its physical position; dims and
    /// spacing follow the axis permutation.
    pub fn reorient(&self, target: Orientation) -> Volume {
        if target == self.orientation {
            return self.clone();
        }
        let map = self.orientation.mapping_to(&target);
        let src = self.dims.0;
        let dst = Dims([src[map[0].0], src[map[1].0], src[map[2].0]]);
        let spacing = [
            self.spacing[map[0].0],
            self.spacing[map[1].0],
            self.spacing[map[2].0],
        ];
        let mut src_of_dst = Vec::with_capacity(dst.len());
        let mut s = [0usize; 3];
        for k in 0..dst.0[2] {
            for j in 0..dst.0[1] {
                for i in 0..dst.0[0] {
                    for (t, &d) in [i, j, k].iter().enumerate() {
                        let (axis, flip) = map[t];
                        s[axis] = if flip { dst.0[t] - 1 - d } else { d };
                    }
                    src_of_dst.push(self.dims.offset(s[0], s[1], s[2]));
                }
            }
        }
        Volume {
            dims: dst,
            spacing,
            orientation: target,
            payload: self.payload.permuted(&src_of_dst),
        }
    }

    /// Builds a volume by gathering `self[src_of_dst[n]]` into output slot `n`.
    pub(crate) fn gathered(&self, dims: Dims, spacing: [f64; 3], src_of_dst: &[usize]) -> Volume {
        debug_assert_eq!(dims.len(), src_of_dst.len());
        Volume {
            dims,
            spacing,
            orientation: self.orientation,
            payload: self.payload.permuted(src_of_dst),
        }
    }
}
