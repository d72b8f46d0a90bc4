//! Motion style extraction and transfer for skeletal animation clips.
//!
//! The library decomposes joint-position animation matrices into per-frame
//! weights and sparse style components, and recombines decompositions from
//! different clips by core blending or basic-motion exchange. Supporting
//! modules handle BVH import with forward kinematics, dynamic time warping
//! for pre-alignment, and limb-length post-correction.

pub mod artifact;
pub mod decompose;
pub mod dtw;
pub mod error;
pub mod fixtures;
pub mod motion_io;
pub mod pipeline;
pub mod postprocess;
pub mod sparse;
pub mod synth;

pub use decompose::{decompose, extract_basic_chain, Decomposition};
pub use error::{Error, Result};
pub use motion_io::{MotionClip, Skeleton};
pub use sparse::SparsityBudget;
