//! Desk-scale contrastive image-text training used to exercise masking end
//! to end: symmetric InfoNCE with analytic gradients, linear toy encoders,
//! a synthetic shape/color caption dataset and an SGD loop.

mod data;
mod encoders;
mod gradcheck;
mod loss;
mod train;

pub use data::{Sample, SyntheticPairs, COLORS, SHAPES, SIZES};
pub use encoders::{EncoderGrads, ImageForward, TextForward, ToyEncoders};
pub use gradcheck::{finite_diff_check, GradCheck};
pub use loss::{info_nce, info_nce_logits, ContrastiveConfig, EmbeddingBatch, InfoNceOutput, LogitLoss};
pub use train::{recall_at_1, train_toy, EpochRecord, MaskingMode, StepTiming, TrainConfig, TrainReport};
