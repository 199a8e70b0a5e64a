//! Patch generation-to-selection masking.
//!
//! Given an image and per-patch features, [`selector::generate_mask`] picks
//! which patches an image encoder should drop: a few random candidates seed
//! the mask, a blended feature/pixel similarity matrix refined by Sinkhorn
//! balancing decides which neighbors join them, strong-edge patches are
//! protected, and the result is held within configured ratio bounds.
//!
//! [`contrastive`] contains a small dual-encoder harness that trains with
//! these masks end to end.

pub mod contrastive;
pub mod edge;
pub mod error;
pub mod image_io;
pub mod matrix;
pub mod otn;
pub mod selector;
pub mod similarity;

pub use error::{PgsError, Result};
pub use image_io::{GrayImage, GridGeometry, Image, PatchGrid};
pub use matrix::Matrix;
pub use selector::{generate_mask, MaskPlan, MaskingConfig, PgsConfig};
