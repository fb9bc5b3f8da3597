//! Behavior-prior state representations for offline reinforcement learning.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: dense MLPs with hand-written backprop, Adam, a cyclic Jacobi
//!   eigensolver and the checkpoint format.
//! * [`environments`]: finite MDPs with exact evaluation, the point-mass task,
//!   offline datasets and the collapsed-state counterexample.
//! * [`bpr`]: encoder pretraining on the normalized action-prediction loss.
//! * [`agents`]: BC, TD3+BC, CQL and SPIBB trained on raw states or frozen
//!   representations.
//! * [`analysis`]: effective dimension, bound verification and audits.
//!
//! Data-parallel sweeps go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise. Every parallel
//! map is order preserving and seeds its work items independently, so results
//! are bit-identical either way.

pub mod agents;
pub mod analysis;
pub mod bpr;
pub mod environments;
mod error;
pub mod io;
pub mod numerics;
pub mod par;

pub use error::{Error, Result};
