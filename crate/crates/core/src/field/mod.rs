//! Feature fields and the feature-to-radiance decoder.

mod decoder;
mod nested;
mod triplane;

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::geometry::Vec3;
use crate::planes::FeaturePlane;
use crate::real::Real;

pub use decoder::{sigmoid, softplus, softplus_inverse, DecodeTrace, Decoder, DecoderGrad, Dense};
pub use nested::{shell_widths, NestedCylinderField, NestedSpec, ShellMode};
pub use triplane::{BoxBounds, TriPlaneField, TriPlaneSpec};

/// A point-to-feature map backed by trainable feature planes.
///
/// Gradients flow into plane texels only; sample positions are treated as
/// constants.
pub trait Field<T: Real>: Send + Sync {
    fn channels(&self) -> usize;

    fn planes(&self) -> &[FeaturePlane<T>];

    fn planes_mut(&mut self) -> &mut [FeaturePlane<T>];

    /// Human-readable plane names, in `planes()` order.
    fn plane_names(&self) -> Vec<alloc::string::String>;

    /// Writes the aggregated feature at `p` into `out[..channels]`.
    fn sample_into(&self, p: Vec3, out: &mut [T]);

    /// Adjoint of `sample_into`: scatters `upstream` into `grads[k]`, one
    /// buffer per plane shaped like that plane's data.
    fn backward_into(&self, p: Vec3, upstream: &[T], grads: &mut [Vec<T>]);

    fn sample(&self, p: Vec3) -> Vec<T> {
        let mut out = vec![T::zero(); self.channels()];
        self.sample_into(p, &mut out);
        out
    }

    /// Zeroed per-plane gradient buffers.
    fn grad_buffers(&self) -> Vec<Vec<T>> {
        self.planes()
            .iter()
            .map(|p| vec![T::zero(); p.len()])
            .collect()
    }

    /// Indices of planes with a periodic `u` axis.
    fn wrap_planes(&self) -> Vec<usize> {
        self.planes()
            .iter()
            .enumerate()
            .filter(|(_, p)| p.wrap_u)
            .map(|(i, _)| i)
            .collect()
    }

    fn zero_grad(&mut self) {
        self.planes_mut()
            .iter_mut()
            .for_each(FeaturePlane::zero_grad);
    }

    /// Adds detached gradient buffers into the planes' own `grad`.
    fn accumulate_grads(&mut self, grads: &[Vec<T>]) {
        for (plane, g) in self.planes_mut().iter_mut().zip(grads) {
            for (a, &b) in plane.grad.iter_mut().zip(g) {
                *a += b;
            }
        }
    }

    /// Accumulates the adjoint directly into the planes' own `grad`.
    fn sample_backward(&mut self, p: Vec3, upstream: &[T]) {
        let mut grads = self.grad_buffers();
        self.backward_into(p, upstream, &mut grads);
        self.accumulate_grads(&grads);
    }

    fn parameter_count(&self) -> usize {
        self.planes().iter().map(FeaturePlane::len).sum()
    }

    /// Uniform random texels in `[-scale, scale]`.
    fn init_uniform<R: Rng>(&mut self, rng: &mut R, scale: f64)
    where
        Self: Sized,
    {
        for plane in self.planes_mut() {
            for x in plane.data.iter_mut() {
                *x = T::of(rng.gen_range(-scale..=scale));
            }
        }
    }
}
