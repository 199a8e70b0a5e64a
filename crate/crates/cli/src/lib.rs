//! Command-line driver for `pgs-core`: batch masking, overlays, stage
//! benchmarks, toy training and Sinkhorn inspection.

pub mod batch;
pub mod bench;
pub mod config;
pub mod debug;
