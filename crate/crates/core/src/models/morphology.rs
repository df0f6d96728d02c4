//! Binary morphology on x-fastest `u8` grids with 6-connectivity.
//!
//! A radius-`r` structuring element is the set of offsets with
//! `|dx| + |dy| + |dz| <= r`, applied as `r` unit steps.

use std::collections::VecDeque;

use crate::volume::Dims;

fn neighbours(dims: Dims, i: usize, j: usize, k: usize) -> impl Iterator<Item = usize> {
    let [nx, ny, nz] = dims.0;
    let mut out = [usize::MAX; 6];
    if i > 0 {
        out[0] = dims.offset(i - 1, j, k);
    }
    if i + 1 < nx {
        out[1] = dims.offset(i + 1, j, k);
    }
    if j > 0 {
        out[2] = dims.offset(i, j - 1, k);
    }
    if j + 1 < ny {
        out[3] = dims.offset(i, j + 1, k);
    }
    if k > 0 {
        out[4] = dims.offset(i, j, k - 1);
    }
    if k + 1 < nz {
        out[5] = dims.offset(i, j, k + 1);
    }
    out.into_iter().filter(|&o| o != usize::MAX)
}

/// One 6-neighbour dilation step. Outside the grid counts as background.
pub fn dilate_step(mask: &[u8], dims: Dims) -> Vec<u8> {
    let mut out = mask.to_vec();
    for k in 0..dims.0[2] {
        for j in 0..dims.0[1] {
            for i in 0..dims.0[0] {
                let o = dims.offset(i, j, k);
                if mask[o] == 0 && neighbours(dims, i, j, k).any(|n| mask[n] != 0) {
                    out[o] = 1;
                }
            }
        }
    }
    out
}

/// One 6-neighbour erosion step. Outside the grid counts as background.
pub fn erode_step(mask: &[u8], dims: Dims) -> Vec<u8> {
    let mut out = mask.to_vec();
    let [nx, ny, nz] = dims.0;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let o = dims.offset(i, j, k);
                if mask[o] == 0 {
                    continue;
                }
                let interior = i > 0 && j > 0 && k > 0 && i + 1 < nx && j + 1 < ny && k + 1 < nz;
                if !interior || neighbours(dims, i, j, k).any(|n| mask[n] == 0) {
                    out[o] = 0;
                }
            }
        }
    }
    out
}

fn pad(mask: &[u8], dims: Dims, r: usize) -> (Vec<u8>, Dims) {
    let padded = Dims([dims.0[0] + 2 * r, dims.0[1] + 2 * r, dims.0[2] + 2 * r]);
    let mut out = vec![0u8; padded.len()];
    for k in 0..dims.0[2] {
        for j in 0..dims.0[1] {
            let src = dims.offset(0, j, k);
            let dst = padded.offset(r, j + r, k + r);
            out[dst..dst + dims.0[0]].copy_from_slice(&mask[src..src + dims.0[0]]);
        }
    }
    (out, padded)
}

fn crop(mask: &[u8], padded: Dims, dims: Dims, r: usize) -> Vec<u8> {
    let mut out = vec![0u8; dims.len()];
    for k in 0..dims.0[2] {
        for j in 0..dims.0[1] {
            let src = padded.offset(r, j + r, k + r);
            let dst = dims.offset(0, j, k);
            out[dst..dst + dims.0[0]].copy_from_slice(&mask[src..src + dims.0[0]]);
        }
    }
    out
}

/// Dilation then erosion, evaluated on a background-padded grid so the
/// result always contains the input.
pub fn closing(mask: &[u8], dims: Dims, radius: usize) -> Vec<u8> {
    if radius == 0 {
        return mask.to_vec();
    }
    let (mut work, padded) = pad(mask, dims, radius);
    for _ in 0..radius {
        work = dilate_step(&work, padded);
    }
    for _ in 0..radius {
        work = erode_step(&work, padded);
    }
    crop(&work, padded, dims, radius)
}

/// Labels 6-connected foreground components. Returns per-voxel labels
/// (0 = background, components numbered from 1 in scan order) and sizes.
pub fn label_components(mask: &[u8], dims: Dims) -> (Vec<u32>, Vec<usize>) {
    let mut labels = vec![0u32; mask.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if mask[start] == 0 || labels[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        labels[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(o) = queue.pop_front() {
            size += 1;
            let [i, j, k] = dims.coords(o);
            for n in neighbours(dims, i, j, k) {
                if mask[n] != 0 && labels[n] == 0 {
                    labels[n] = id;
                    queue.push_back(n);
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Keeps only the largest component (the earliest in scan order on ties).
/// `None` when the mask is empty.
pub fn largest_component(mask: &[u8], dims: Dims) -> Option<Vec<u8>> {
    let (labels, sizes) = label_components(mask, dims);
    let (best, _) = sizes
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, usize)>, (i, &s)| match acc {
            Some((_, bs)) if bs >= s => acc,
            _ => Some((i, s)),
        })?;
    let keep = best as u32 + 1;
    Some(labels.iter().map(|&l| u8::from(l == keep)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube_in(dims: Dims, lo: usize, hi: usize) -> Vec<u8> {
        let mut m = vec![0u8; dims.len()];
        for k in lo..hi {
            for j in lo..hi {
                for i in lo..hi {
                    m[dims.offset(i, j, k)] = 1;
                }
            }
        }
        m
    }

    #[test]
    fn closing_fills_a_single_hole() {
        let dims = Dims::cube(9);
        let cube = cube_in(dims, 2, 7);
        let mut holed = cube.clone();
        holed[dims.offset(4, 4, 4)] = 0;
        assert_eq!(closing(&holed, dims, 1), cube);
    }

    #[test]
    fn closing_keeps_a_cube_touching_the_border() {
        let dims = Dims::cube(5);
        let full = vec![1u8; dims.len()];
        assert_eq!(closing(&full, dims, 2), full);
        let cube = cube_in(dims, 0, 3);
        assert_eq!(closing(&cube, dims, 1), cube);
    }

    #[test]
    fn closing_is_extensive() {
        let dims = Dims::new(7, 6, 5);
        let mask: Vec<u8> = (0..dims.len()).map(|n| u8::from(n % 7 == 0 || n % 5 == 1)).collect();
        for r in 0..3 {
            let c = closing(&mask, dims, r);
            assert!(mask.iter().zip(&c).all(|(&m, &c)| c >= m));
        }
    }

    #[test]
    fn keeps_the_largest_component() {
        let dims = Dims::new(20, 3, 3);
        let mut m = vec![0u8; dims.len()];
        for i in 0..10 {
            m[dims.offset(i, 1, 1)] = 1;
        }
        for i in 14..17 {
            m[dims.offset(i, 1, 1)] = 1;
        }
        let (_, sizes) = label_components(&m, dims);
        assert_eq!(sizes, vec![10, 3]);
        let kept = largest_component(&m, dims).unwrap();
        assert_eq!(kept.iter().filter(|&&x| x == 1).count(), 10);
        assert_eq!(kept[dims.offset(15, 1, 1)], 0);
        assert!(largest_component(&vec![0; dims.len()], dims).is_none());
    }

    #[test]
    fn diagonal_voxels_are_separate_components() {
        let dims = Dims::cube(2);
        let mut m = vec![0u8; 8];
        m[dims.offset(0, 0, 0)] = 1;
        m[dims.offset(1, 1, 0)] = 1;
        let (_, sizes) = label_components(&m, dims);
        assert_eq!(sizes.len(), 2);
    }
}
