use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One anatomical direction a storage axis can increase toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Left,
    Right,
    Posterior,
    Anterior,
    Superior,
    Inferior,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::Left,
        Direction::Right,
        Direction::Posterior,
        Direction::Anterior,
        Direction::Superior,
        Direction::Inferior,
    ];

    pub fn letter(self) -> u8 {
        match self {
            Direction::Left => b'L',
            Direction::Right => b'R',
            Direction::Posterior => b'P',
            Direction::Anterior => b'A',
            Direction::Superior => b'S',
            Direction::Inferior => b'I',
        }
    }

    pub fn from_letter(letter: u8) -> Option<Self> {
        Some(match letter.to_ascii_uppercase() {
            b'L' => Direction::Left,
            b'R' => Direction::Right,
            b'P' => Direction::Posterior,
            b'A' => Direction::Anterior,
            b'S' => Direction::Superior,
            b'I' => Direction::Inferior,
            _ => return None,
        })
    }

    /// Anatomical axis: 0 = left/right, 1 = posterior/anterior, 2 = superior/inferior.
    pub fn anatomical_axis(self) -> usize {
        match self {
            Direction::Left | Direction::Right => 0,
            Direction::Posterior | Direction::Anterior => 1,
            Direction::Superior | Direction::Inferior => 2,
        }
    }
}

/// Axis-aligned orientation: the direction each storage axis increases toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Orientation([Direction; 3]);

impl Orientation {
    pub const LPS: Orientation = Orientation([
        Direction::Left,
        Direction::Posterior,
        Direction::Superior,
    ]);
    pub const RAS: Orientation = Orientation([
        Direction::Right,
        Direction::Anterior,
        Direction::Superior,
    ]);

    pub fn new(axes: [Direction; 3]) -> Result<Self> {
        let mut seen = [false; 3];
        for d in axes {
            let a = d.anatomical_axis();
            if seen[a] {
                return Err(Error::Validation(format!(
                    "orientation {} repeats an anatomical axis",
                    code_string(axes)
                )));
            }
            seen[a] = true;
        }
        Ok(Orientation(axes))
    }

    pub fn axes(&self) -> [Direction; 3] {
        self.0
    }

    pub fn to_bytes(self) -> [u8; 3] {
        [self.0[0].letter(), self.0[1].letter(), self.0[2].letter()]
    }

    pub fn from_bytes(bytes: [u8; 3]) -> Result<Self> {
        let mut axes = [Direction::Left; 3];
        for (slot, b) in axes.iter_mut().zip(bytes) {
            *slot = Direction::from_letter(b).ok_or_else(|| {
                Error::Validation(format!("invalid orientation letter {:?}", b as char))
            })?;
        }
        Orientation::new(axes)
    }

    /// All 48 valid axis-aligned codes.
    pub fn all() -> Vec<Orientation> {
        let mut out = Vec::with_capacity(48);
        for a in Direction::ALL {
            for b in Direction::ALL {
                for c in Direction::ALL {
                    if let Ok(o) = Orientation::new([a, b, c]) {
                        out.push(o);
                    }
                }
            }
        }
        out
    }

    /// For each target axis: the source storage axis carrying the same
    /// anatomical axis, and whether its polarity is reversed.
    pub(crate) fn mapping_to(&self, target: &Orientation) -> [(usize, bool); 3] {
        let mut map = [(0, false); 3];
        for (t, td) in target.0.iter().enumerate() {
            let s = self
                .0
                .iter()
                .position(|sd| sd.anatomical_axis() == td.anatomical_axis())
                .expect("valid orientations cover every anatomical axis");
            map[t] = (s, self.0[s] != *td);
        }
        map
    }
}

fn code_string(axes: [Direction; 3]) -> String {
    axes.iter().map(|d| d.letter() as char).collect()
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&code_string(self.0))
    }
}

impl FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bytes: [u8; 3] = s
            .as_bytes()
            .try_into()
            .map_err(|_| Error::Validation(format!("orientation code {s:?} must be 3 letters")))?;
        Orientation::from_bytes(bytes)
    }
}

impl Serialize for Orientation {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Orientation {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
