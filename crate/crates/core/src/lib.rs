//! Category-aware semantic edge detection at desk scale.
//!
//! The crate covers the whole loop: a small autodiff kernel, the Basic, DSN
//! and CASENet network families on a five-stage residual backbone, the
//! multi-label edge loss and its baselines, label generation from
//! segmentations, the MF(ODS)/AP boundary benchmark and multi-label HSV
//! visualization.

pub mod arch;
pub mod bench;
pub mod error;
pub mod kernel;
pub mod labels;
pub mod loss;
pub mod pnm;
pub mod run;
pub mod viz;

pub use error::{Error, Result};
