//! SVOL: a minimal little-endian volume container.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "SVOL"
//!      4     4  version (u32) = 1
//!      8     4  dtype (u32): 0 = HU i16, 1 = Mask u8, 2 = Real f32
//!     12    24  dims (3 x u64)
//!     36    24  spacing (3 x f64)
//!     60     4  orientation (3 ASCII letters + one zero byte)
//!     64     -  voxels, x-fastest
//! ```

use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use super::{Dims, Orientation, Payload, Volume};
use crate::error::{Error, FormatError, Result};

pub const MAGIC: &[u8; 4] = b"SVOL";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 64;

const DTYPE_HU: u32 = 0;
const DTYPE_MASK: u32 = 1;
const DTYPE_REAL: u32 = 2;

pub fn encode(v: &Volume) -> Vec<u8> {
    let (dtype, elem) = match v.payload() {
        Payload::Hu(_) => (DTYPE_HU, 2),
        Payload::Mask(_) => (DTYPE_MASK, 1),
        Payload::Real(_) => (DTYPE_REAL, 4),
    };
    let n = v.dims().len();
    let mut buf = vec![0u8; HEADER_LEN + n * elem];
    buf[0..4].copy_from_slice(MAGIC);
    LittleEndian::write_u32(&mut buf[4..8], VERSION);
    LittleEndian::write_u32(&mut buf[8..12], dtype);
    for (a, &d) in v.dims().0.iter().enumerate() {
        LittleEndian::write_u64(&mut buf[12 + 8 * a..20 + 8 * a], d as u64);
    }
    for (a, &s) in v.spacing().iter().enumerate() {
        LittleEndian::write_f64(&mut buf[36 + 8 * a..44 + 8 * a], s);
    }
    buf[60..63].copy_from_slice(&v.orientation().to_bytes());
    buf[63] = 0;
    let body = &mut buf[HEADER_LEN..];
    match v.payload() {
        Payload::Hu(data) => LittleEndian::write_i16_into(data, body),
        Payload::Mask(data) => body.copy_from_slice(data),
        Payload::Real(data) => LittleEndian::write_f32_into(data, body),
    }
    buf
}

pub fn decode(bytes: &[u8]) -> Result<Volume> {
    if bytes.len() < 4 {
        return Err(FormatError::Truncated {
            needed: HEADER_LEN,
            found: bytes.len(),
        }
        .into());
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(FormatError::BadMagic(magic).into());
    }
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::Truncated {
            needed: HEADER_LEN,
            found: bytes.len(),
        }
        .into());
    }
    let version = LittleEndian::read_u32(&bytes[4..8]);
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version).into());
    }
    let dtype = LittleEndian::read_u32(&bytes[8..12]);
    let elem = match dtype {
        DTYPE_HU => 2,
        DTYPE_MASK => 1,
        DTYPE_REAL => 4,
        other => return Err(FormatError::UnknownDtype(other).into()),
    };
    let mut dims = [0usize; 3];
    for (a, d) in dims.iter_mut().enumerate() {
        let raw = LittleEndian::read_u64(&bytes[12 + 8 * a..20 + 8 * a]);
        *d = usize::try_from(raw)
            .map_err(|_| Error::Validation(format!("dimension {raw} too large")))?;
    }
    let mut spacing = [0f64; 3];
    for (a, s) in spacing.iter_mut().enumerate() {
        *s = LittleEndian::read_f64(&bytes[36 + 8 * a..44 + 8 * a]);
    }
    let orient_bytes: [u8; 4] = bytes[60..64].try_into().unwrap();
    if orient_bytes[3] != 0 {
        return Err(FormatError::BadOrientation(orient_bytes).into());
    }
    let orientation = Orientation::from_bytes([orient_bytes[0], orient_bytes[1], orient_bytes[2]])
        .map_err(|_| FormatError::BadOrientation(orient_bytes))?;

    let expected = dims
        .iter()
        .try_fold(elem, |acc: usize, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Validation(format!("dims {dims:?} overflow")))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() < expected {
        return Err(FormatError::Truncated {
            needed: HEADER_LEN + expected,
            found: bytes.len(),
        }
        .into());
    }
    if body.len() > expected {
        return Err(FormatError::DimsMismatch {
            expected,
            found: body.len(),
        }
        .into());
    }
    let n = expected / elem;
    let payload = match dtype {
        DTYPE_HU => {
            let mut v = vec![0i16; n];
            LittleEndian::read_i16_into(body, &mut v);
            Payload::Hu(v)
        }
        DTYPE_MASK => Payload::Mask(body.to_vec()),
        _ => {
            let mut v = vec![0f32; n];
            LittleEndian::read_f32_into(body, &mut v);
            Payload::Real(v)
        }
    };
    Volume::new(Dims(dims), spacing, orientation, payload)
}

pub fn read_svol(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    decode(&bytes)
}

pub fn write_svol(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(v)).map_err(|e| Error::file(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hu_single(value: i16) -> Volume {
        Volume::new(
            Dims::cube(1),
            [0.76, 0.76, 5.0],
            Orientation::LPS,
            Payload::Hu(vec![value]),
        )
        .unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&hu_single(-1000));
        assert_eq!(bytes.len(), HEADER_LEN + 2);
        assert_eq!(&bytes[0..4], b"SVOL");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[0, 0, 0, 0]);
        assert_eq!(&bytes[12..20], &[1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&bytes[60..64], b"LPS\0");
        assert_eq!(&bytes[64..66], &(-1000i16).to_le_bytes());
    }

    #[test]
    fn single_voxel_round_trip() {
        let v = hu_single(-1000);
        assert_eq!(decode(&encode(&v)).unwrap(), v);
    }

    #[test]
    fn one_byte_short_is_truncated() {
        let mut bytes = encode(&hu_single(5));
        bytes.pop();
        assert!(matches!(
            decode(&bytes),
            Err(Error::Format(FormatError::Truncated { .. }))
        ));
    }

    #[test]
    fn trailing_bytes_are_a_dims_mismatch() {
        let mut bytes = encode(&hu_single(5));
        bytes.push(0);
        assert!(matches!(
            decode(&bytes),
            Err(Error::Format(FormatError::DimsMismatch { expected: 2, found: 3 }))
        ));
    }

    #[test]
    fn header_errors_are_distinct() {
        let good = encode(&hu_single(5));

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Format(FormatError::BadMagic(_)))));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(
            decode(&bad),
            Err(Error::Format(FormatError::UnsupportedVersion(2)))
        ));

        let mut bad = good.clone();
        bad[8] = 9;
        assert!(matches!(decode(&bad), Err(Error::Format(FormatError::UnknownDtype(9)))));

        let mut bad = good.clone();
        bad[61] = b'L';
        assert!(matches!(decode(&bad), Err(Error::Format(FormatError::BadOrientation(_)))));

        assert!(matches!(
            decode(&good[..30]),
            Err(Error::Format(FormatError::Truncated { .. }))
        ));
    }

    #[test]
    fn large_real_round_trip_is_bit_exact() {
        let dims = Dims::cube(128);
        let data: Vec<f32> = (0..dims.len())
            .map(|n| ((n as f32) * 0.618_034).sin() * 1.0e-3 + (n % 7) as f32)
            .collect();
        let v = Volume::new(dims, [1.0; 3], Orientation::RAS, Payload::Real(data.clone())).unwrap();
        let back = decode(&encode(&v)).unwrap();
        let got = back.as_real().unwrap();
        assert!(got.iter().zip(&data).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(back.same_geometry(&v));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.svol");
        let v = Volume::new(
            Dims::new(2, 1, 1),
            [1.0; 3],
            Orientation::RAS,
            Payload::Mask(vec![0, 1]),
        )
        .unwrap();
        write_svol(&v, &path).unwrap();
        assert_eq!(read_svol(&path).unwrap(), v);
        assert!(matches!(
            read_svol(dir.path().join("missing.svol")),
            Err(Error::File { .. })
        ));
    }
}
