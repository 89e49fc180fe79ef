//! Cylindrical feature-plane neural fields.
//!
//! A point is converted to cylindrical coordinates `(theta, r, y)` and reads
//! features from a bank of nested `theta-y` shells plus an `r-theta` and a
//! `y-r` plane. Features are summed, decoded into density and color by a small
//! MLP, and volume rendered. Every stage has a hand-written adjoint so planes
//! and decoder can be fit directly to posed images.
//!
//! The crate is `no_std` (with `alloc`); file formats, threads and the CLI live
//! in the `cylfield` companion crate.

#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Kernels index several parallel slices with one counter.
#![allow(clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod error;
pub mod exec;
pub mod field;
pub mod geometry;
pub mod optim;
pub mod planes;
pub mod real;
pub mod regularizer;
pub mod renderer;
pub mod scenes;

pub use error::{Error, Result};
pub use exec::{Executor, Serial};
pub use field::{
    Decoder, Field, NestedCylinderField, NestedSpec, ShellMode, TriPlaneField, TriPlaneSpec,
};
pub use geometry::{CameraPose, CylCoord, Mat3, Ray, Vec3};
pub use planes::{FeaturePlane, Uv};
pub use real::Real;
pub use regularizer::SeamConfig;
pub use renderer::{Image, RenderConfig};
