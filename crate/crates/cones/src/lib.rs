//! Integer-constrained cone singularities for seamless conformal
//! parameterization with low area distortion.
//!
//! The pipeline alternates four steps until the Hencky-norm area distortion
//! drops below a target: add cones where the adjoint field concentrates,
//! solve a small integer-constrained quadratic program for cone angles (and,
//! on higher-genus surfaces, holonomy integers), relocate cones along
//! distortion gradients, and remove near-cancelling cone pairs.

pub mod count;
pub mod driver;
pub mod error;
pub mod highgenus;
pub mod homology;
pub mod mesh;
pub mod miqp;
pub mod relocate;
pub mod shapes;
pub mod sparse;
pub mod state;
pub mod yamabe;

pub use error::{Error, Result};
