use serde::{Deserialize, Serialize};

use super::morphology::{closing, largest_component};
use super::Segmenter;
use crate::error::{Error, Result};
use crate::volume::{Payload, Volume};

/// Intensity-band segmenter with morphological clean-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSegmenter {
    /// Inclusive band of normalized intensities.
    pub include_band: (f64, f64),
    pub closing_radius: usize,
    pub keep_largest_component: bool,
}

impl ThresholdSegmenter {
    pub fn new(include_band: (f64, f64), closing_radius: usize, keep_largest_component: bool) -> Result<Self> {
        let s = ThresholdSegmenter {
            include_band,
            closing_radius,
            keep_largest_component,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.include_band;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
            return Err(Error::Validation(format!(
                "include band ({lo}, {hi}) must satisfy 0 <= lo < hi <= 1"
            )));
        }
        Ok(())
    }
}

impl Segmenter for ThresholdSegmenter {
    fn segment(&self, v: &Volume) -> Result<Volume> {
        self.validate()?;
        let (lo, hi) = self.include_band;
        let data = v.as_real()?;
        let dims = v.dims();
        let band: Vec<u8> = data
            .iter()
            .map(|&x| u8::from((lo..=hi).contains(&(x as f64))))
            .collect();
        let closed = closing(&band, dims, self.closing_radius);
        let mask = if self.keep_largest_component {
            largest_component(&closed, dims)
                .ok_or_else(|| Error::EmptyMask(format!("no voxels in band ({lo}, {hi})")))?
        } else {
            closed
        };
        v.with_payload(Payload::Mask(mask))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Dims, Orientation};

    fn cube_volume(dims: Dims, lo: usize, hi: usize, inside: f32) -> Volume {
        let mut data = vec![0.0f32; dims.len()];
        for k in lo..hi {
            for j in lo..hi {
                for i in lo..hi {
                    data[dims.offset(i, j, k)] = inside;
                }
            }
        }
        Volume::new(dims, [1.0; 3], Orientation::LPS, Payload::Real(data)).unwrap()
    }

    fn count(v: &Volume) -> usize {
        v.as_mask().unwrap().iter().filter(|&&x| x == 1).count()
    }

    #[test]
    fn pure_threshold_recovers_cube() {
        let v = cube_volume(Dims::cube(9), 2, 7, 0.6);
        let m = ThresholdSegmenter::new((0.4, 0.8), 0, false).unwrap().segment(&v).unwrap();
        assert_eq!(count(&m), 125);
        assert!(m.same_geometry(&v));
    }

    #[test]
    fn closing_fills_dropped_voxel() {
        let v = cube_volume(Dims::cube(9), 2, 7, 0.6);
        let mut data = v.as_real().unwrap().to_vec();
        data[v.dims().offset(4, 4, 4)] = 0.0;
        let holed = v.with_payload(Payload::Real(data)).unwrap();
        let seg = ThresholdSegmenter::new((0.4, 0.8), 1, false).unwrap();
        assert_eq!(count(&seg.segment(&holed).unwrap()), 125);
        let no_close = ThresholdSegmenter::new((0.4, 0.8), 0, false).unwrap();
        assert_eq!(count(&no_close.segment(&holed).unwrap()), 124);
    }

    #[test]
    fn keep_largest_drops_small_blob() {
        let dims = Dims::new(20, 3, 3);
        let mut data = vec![0.0f32; dims.len()];
        for i in (0..10).chain(14..17) {
            data[dims.offset(i, 1, 1)] = 0.5;
        }
        let v = Volume::new(dims, [1.0; 3], Orientation::LPS, Payload::Real(data)).unwrap();
        let m = ThresholdSegmenter::new((0.4, 0.8), 0, true).unwrap().segment(&v).unwrap();
        assert_eq!(count(&m), 10);
    }

    #[test]
    fn empty_band_errors_when_keeping_largest() {
        let v = cube_volume(Dims::cube(4), 0, 0, 0.0);
        let seg = ThresholdSegmenter::new((0.4, 0.8), 1, true).unwrap();
        assert!(matches!(seg.segment(&v), Err(Error::EmptyMask(_))));
    }

    #[test]
    fn idempotent_without_closing() {
        let v = cube_volume(Dims::cube(6), 1, 4, 0.6);
        let seg = ThresholdSegmenter::new((0.4, 0.8), 0, true).unwrap();
        let once = seg.segment(&v).unwrap();
        let as_real: Vec<f32> = once.as_mask().unwrap().iter().map(|&x| x as f32).collect();
        let again_in = once.with_payload(Payload::Real(as_real)).unwrap();
        let seg_bin = ThresholdSegmenter::new((0.5, 1.0), 0, true).unwrap();
        assert_eq!(seg_bin.segment(&again_in).unwrap(), once);
    }

    #[test]
    fn band_validation() {
        assert!(ThresholdSegmenter::new((0.5, 0.5), 0, false).is_err());
        assert!(ThresholdSegmenter::new((-0.1, 0.5), 0, false).is_err());
        assert!(ThresholdSegmenter::new((0.2, 1.5), 0, false).is_err());
    }
}
