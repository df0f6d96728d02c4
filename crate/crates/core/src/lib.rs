//! Classification-routed adaptive segmentation.
//!
//! Volumes are windowed, canonicalized and classified; each scan is then
//! routed to the segmenter registered for its predicted class. Runs can be
//! compared pairwise with the Wilcoxon signed-rank test.

pub mod error;
pub mod metrics;
pub mod models;
pub mod occlusion;
pub mod phantom;
pub mod pipeline;
pub mod preprocess;
pub mod stats;
pub mod volume;

pub use error::{Error, FormatError, ModelError, Result};
pub use volume::{Dims, Orientation, Payload, Volume};
