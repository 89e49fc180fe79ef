use alloc::string::String;
use alloc::vec::Vec;

use super::Field;
use crate::error::{invalid, Result};
use crate::geometry::Vec3;
use crate::planes::{FeaturePlane, Uv};
use crate::real::Real;

/// Axis-aligned box that the tri-plane covers.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoxBounds {
    pub min: Vec3,
    pub max: Vec3,
}

impl BoxBounds {
    pub fn cube(half: f64) -> Self {
        BoxBounds {
            min: Vec3::new(-half, -half, -half),
            max: Vec3::new(half, half, half),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max.x > self.min.x && self.max.y > self.min.y && self.max.z > self.min.z) {
            return Err(invalid("box max must exceed min on every axis"));
        }
        Ok(())
    }

    /// Normalized box coordinates, clamped to `[0, 1]`.
    pub fn normalize(&self, p: Vec3) -> Vec3 {
        let f = |x: f64, lo: f64, hi: f64| ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
        Vec3::new(
            f(p.x, self.min.x, self.max.x),
            f(p.y, self.min.y, self.max.y),
            f(p.z, self.min.z, self.max.z),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TriPlaneSpec {
    pub resolution: usize,
    pub channels: usize,
    pub bounds: BoxBounds,
}

impl Default for TriPlaneSpec {
    fn default() -> Self {
        TriPlaneSpec {
            resolution: 64,
            channels: 16,
            bounds: BoxBounds::cube(1.0),
        }
    }
}

/// Axis-aligned `xy`, `xz` and `yz` planes summed at each point.
#[derive(Debug, Clone, PartialEq)]
pub struct TriPlaneField<T> {
    planes: Vec<FeaturePlane<T>>,
    bounds: BoxBounds,
}

impl<T: Real> TriPlaneField<T> {
    pub fn zeros(spec: &TriPlaneSpec) -> Result<Self> {
        let n = spec.resolution;
        let mk = || FeaturePlane::zeros(n, n, spec.channels, false);
        Self::from_parts([mk()?, mk()?, mk()?], spec.bounds)
    }

    /// Planes in `xy, xz, yz` order.
    pub fn from_parts(planes: [FeaturePlane<T>; 3], bounds: BoxBounds) -> Result<Self> {
        bounds.validate()?;
        let c = planes[0].channels;
        if planes.iter().any(|p| p.channels != c || p.wrap_u) {
            return Err(invalid(
                "tri-plane planes must share channels and must not wrap",
            ));
        }
        Ok(TriPlaneField {
            planes: planes.into(),
            bounds,
        })
    }

    pub fn bounds(&self) -> BoxBounds {
        self.bounds
    }

    pub fn plane_xy(&self) -> &FeaturePlane<T> {
        &self.planes[0]
    }

    pub fn plane_xz(&self) -> &FeaturePlane<T> {
        &self.planes[1]
    }

    pub fn plane_yz(&self) -> &FeaturePlane<T> {
        &self.planes[2]
    }

    /// Lookup coordinates on the `xy`, `xz` and `yz` planes.
    pub fn plane_uvs(&self, p: Vec3) -> [Uv; 3] {
        let n = self.bounds.normalize(p);
        [Uv::new(n.x, n.y), Uv::new(n.x, n.z), Uv::new(n.y, n.z)]
    }

    pub fn triplane_sample(&self, p: Vec3) -> Vec<T> {
        self.sample(p)
    }

    pub fn cast<U: Real>(&self) -> TriPlaneField<U> {
        TriPlaneField {
            planes: self.planes.iter().map(FeaturePlane::cast).collect(),
            bounds: self.bounds,
        }
    }
}

impl<T: Real> Field<T> for TriPlaneField<T> {
    fn channels(&self) -> usize {
        self.planes[0].channels
    }

    fn planes(&self) -> &[FeaturePlane<T>] {
        &self.planes
    }

    fn planes_mut(&mut self) -> &mut [FeaturePlane<T>] {
        &mut self.planes
    }

    fn plane_names(&self) -> Vec<String> {
        ["xy", "xz", "yz"]
            .iter()
            .map(|s| String::from(*s))
            .collect()
    }

    fn sample_into(&self, p: Vec3, out: &mut [T]) {
        out[..self.channels()].fill(T::zero());
        for (plane, uv) in self.planes.iter().zip(self.plane_uvs(p)) {
            plane.sample_add(&plane.footprint(uv), T::one(), out);
        }
    }

    fn backward_into(&self, p: Vec3, upstream: &[T], grads: &mut [Vec<T>]) {
        let c = self.channels();
        for ((plane, uv), g) in self
            .planes
            .iter()
            .zip(self.plane_uvs(p))
            .zip(grads.iter_mut())
        {
            FeaturePlane::scatter(&plane.footprint(uv), c, T::one(), upstream, g);
        }
    }
}
