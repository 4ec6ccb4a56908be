//! Refinement of coarse segmentation masks through a promptable segmenter.
//!
//! Prompts (clicks, an elastic box and a Gaussian-style soft mask) are mined
//! from each coarse mask, the segmenter returns several candidates, and the
//! best candidate is selected, optionally by a quality head adapted on the
//! target data with a pairwise ranking loss.

pub mod adaption;
pub mod error;
pub mod excavation;
pub mod exec;
pub mod mask;
pub mod metrics;
pub mod pipeline;
pub mod seed;
pub mod segmenter;
pub mod stm;

pub use error::{Error, Result};
