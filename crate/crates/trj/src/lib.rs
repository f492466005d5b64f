//! Rig-free transfer of joint-angle motion onto unrigged triangle meshes.
//!
//! The pipeline predicts per-face 3x3 Jacobians for every frame of a motion,
//! integrates them in space through a prefactorized Poisson solve and in time
//! through an Euler-stepped residual ODE, and is trained end to end against
//! ground-truth mesh sequences.
//!
//! Module map:
//! - [`mesh`]: triangle-mesh kernel (local bases, gradients, cotan Laplacian,
//!   Jacobian extraction, Poisson solve).
//! - [`nn`]: reverse-mode autodiff tape, MLPs, multi-head attention, Adam.
//! - [`features`]: per-face descriptors (learned point features + wave kernel
//!   signatures).
//! - [`model`]: posing network, window encoders, residual ODE integration,
//!   full sequence forward pass.
//! - [`train`]: losses, training loop, evaluation metrics, baselines.
//! - [`io`]: OBJ meshes, motion manifests, checkpoints, synthetic data
//!   generation with a linear-blend-skinning oracle.

pub mod error;
pub mod features;
pub mod io;
pub mod mesh;
pub mod model;
pub mod nn;
pub mod train;

pub use error::{Error, Result};
