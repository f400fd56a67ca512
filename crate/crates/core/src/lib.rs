//! Constrained generation of random porous-medium images.
//!
//! A porous medium is a square binary image: grain (solid) pixels are 1,
//! void pixels are 0. The crate generates images that provably satisfy
//! declarative geometric constraints (grain count, connectivity,
//! compactness, void boundary) together with process constraints on the
//! effective dispersion coefficient of the medium. It does so by compiling
//! the geometry and an integer-thresholded binarized neural network
//! surrogate of the diffusion solve into a single pseudo-Boolean formula
//! and handing it to a SAT/PB backend. Generated images are re-checked
//! against a real finite-difference diffusion oracle.
//!
//! Module map:
//! - [`grid`]: cells, images, PBM I/O, geometric validation oracle.
//! - [`geometry`]: connectivity DAGs, compactness rings, seed placement.
//! - [`pde`]: finite-difference dispersion solve and quantization.
//! - [`bnn`]: binarized network training, threshold folding, inference.
//! - [`encode`]: pseudo-Boolean compilation of geometry + network.
//! - [`solve`]: CDCL backend, CNF/OPB translation, model decoding.
//! - [`dataset`]: procedural training-set generation and labeling.

pub mod bnn;
pub mod dataset;
pub mod encode;
mod error;
pub mod geometry;
pub mod grid;
pub mod pde;
pub mod solve;

pub use error::{Error, Result};
