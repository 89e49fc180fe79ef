use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::Field;
use crate::error::{invalid, Result};
use crate::geometry::{cart_to_cyl, CylCoord, Vec3};
use crate::planes::{uv_rtheta, uv_thetay, uv_yr, CylBounds, FeaturePlane, Uv};
use crate::real::Real;

/// How a point reads the bank of `theta-y` shells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum ShellMode {
    /// Every shell is sampled at the point's `(theta, y)` and summed.
    #[default]
    Sum,
    /// Only the two shells bracketing the point's radius contribute,
    /// linearly blended by radius.
    RadialLerp,
}

/// Geometry and resolutions for a [`NestedCylinderField`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct NestedSpec {
    /// Strictly increasing shell radii; the last one is `r_max`.
    pub radii: Vec<f64>,
    /// Angular resolution of the outermost shell.
    pub finest_width: usize,
    /// Height resolution shared by all shells.
    pub shell_height: usize,
    pub min_width: usize,
    pub rtheta_res: [usize; 2],
    pub yr_res: [usize; 2],
    pub channels: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub shell_mode: ShellMode,
}

impl Default for NestedSpec {
    fn default() -> Self {
        NestedSpec {
            radii: alloc::vec![1.0 / 3.0, 2.0 / 3.0, 1.0],
            finest_width: 128,
            shell_height: 64,
            min_width: 8,
            rtheta_res: [64, 64],
            yr_res: [64, 64],
            channels: 16,
            y_min: -1.0,
            y_max: 1.0,
            shell_mode: ShellMode::Sum,
        }
    }
}

impl NestedSpec {
    /// `n` shells evenly spaced up to `r_max`.
    pub fn even_radii(n: usize, r_max: f64) -> Vec<f64> {
        (1..=n).map(|i| r_max * i as f64 / n as f64).collect()
    }
}

/// Angular texel count per shell, proportional to circumference.
pub fn shell_widths(radii: &[f64], finest_width: usize, min_width: usize) -> Vec<usize> {
    let r_n = radii.last().copied().unwrap_or(1.0);
    radii
        .iter()
        .map(|&r| min_width.max((finest_width as f64 * r / r_n).round() as usize))
        .collect()
}

/// Nested `theta-y` shells plus an `r-theta` disc and a `y-r` section plane.
///
/// Planes are stored shells first (innermost to outermost), then `r-theta`,
/// then `y-r`.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedCylinderField<T> {
    radii: Vec<f64>,
    planes: Vec<FeaturePlane<T>>,
    bounds: CylBounds,
    mode: ShellMode,
}

impl<T: Real> NestedCylinderField<T> {
    pub fn zeros(spec: &NestedSpec) -> Result<Self> {
        let widths = shell_widths(&spec.radii, spec.finest_width, spec.min_width);
        let mut shells = Vec::with_capacity(widths.len());
        for w in widths {
            shells.push(FeaturePlane::zeros(
                w,
                spec.shell_height,
                spec.channels,
                true,
            )?);
        }
        let rtheta =
            FeaturePlane::zeros(spec.rtheta_res[0], spec.rtheta_res[1], spec.channels, true)?;
        let yr = FeaturePlane::zeros(spec.yr_res[0], spec.yr_res[1], spec.channels, false)?;
        Self::from_parts(
            spec.radii.clone(),
            shells,
            rtheta,
            yr,
            spec.y_min,
            spec.y_max,
            spec.shell_mode,
        )
    }

    pub fn from_parts(
        radii: Vec<f64>,
        shells: Vec<FeaturePlane<T>>,
        rtheta: FeaturePlane<T>,
        yr: FeaturePlane<T>,
        y_min: f64,
        y_max: f64,
        mode: ShellMode,
    ) -> Result<Self> {
        if radii.is_empty() || radii.len() != shells.len() {
            return Err(invalid("need one radius per shell and at least one shell"));
        }
        if !(radii[0] > 0.0) || radii.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid(
                "shell radii must be positive and strictly increasing",
            ));
        }
        if shells.windows(2).any(|w| w[1].width < w[0].width) {
            return Err(invalid(
                "shell angular resolution must be nondecreasing with radius",
            ));
        }
        let c = rtheta.channels;
        if shells.iter().any(|s| s.channels != c) || yr.channels != c {
            return Err(invalid("all planes must share the channel count"));
        }
        if shells.iter().any(|s| !s.wrap_u) || !rtheta.wrap_u || yr.wrap_u {
            return Err(invalid("shells and r-theta must wrap in u; y-r must not"));
        }
        let bounds = CylBounds {
            y_min,
            y_max,
            r_max: *radii.last().unwrap(),
        };
        bounds.validate()?;
        let mut planes = shells;
        planes.push(rtheta);
        planes.push(yr);
        Ok(NestedCylinderField {
            radii,
            planes,
            bounds,
            mode,
        })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn bounds(&self) -> CylBounds {
        self.bounds
    }

    pub fn shell_mode(&self) -> ShellMode {
        self.mode
    }

    pub fn set_shell_mode(&mut self, mode: ShellMode) {
        self.mode = mode;
    }

    pub fn shell_count(&self) -> usize {
        self.radii.len()
    }

    pub fn shells(&self) -> &[FeaturePlane<T>] {
        &self.planes[..self.radii.len()]
    }

    pub fn shells_mut(&mut self) -> &mut [FeaturePlane<T>] {
        let n = self.radii.len();
        &mut self.planes[..n]
    }

    pub fn rtheta(&self) -> &FeaturePlane<T> {
        &self.planes[self.radii.len()]
    }

    pub fn rtheta_mut(&mut self) -> &mut FeaturePlane<T> {
        let n = self.radii.len();
        &mut self.planes[n]
    }

    pub fn yr(&self) -> &FeaturePlane<T> {
        &self.planes[self.radii.len() + 1]
    }

    pub fn yr_mut(&mut self) -> &mut FeaturePlane<T> {
        let n = self.radii.len();
        &mut self.planes[n + 1]
    }

    /// Index of the lower bracketing shell for radius `r` and the blend
    /// weight of the shell above it.
    fn bracket(&self, r: f64) -> (usize, f64) {
        let radii = &self.radii;
        let last = radii.len() - 1;
        if r <= radii[0] {
            (0, 0.0)
        } else if r >= radii[last] {
            (last, 0.0)
        } else {
            let i = radii.windows(2).position(|w| r < w[1]).unwrap();
            (i, (r - radii[i]) / (radii[i + 1] - radii[i]))
        }
    }

    /// Contribution weight of each shell for a point at radius `r`.
    pub fn shell_weights(&self, r: f64) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.radii.len()];
        match self.mode {
            ShellMode::Sum => out.fill(1.0),
            ShellMode::RadialLerp => {
                let (i, t) = self.bracket(r);
                out[i] = 1.0 - t;
                if t > 0.0 {
                    out[i + 1] = t;
                }
            }
        }
        out
    }

    /// Aggregated feature at `p`.
    pub fn nested_sample(&self, p: Vec3) -> Vec<T> {
        self.sample(p)
    }

    /// Accumulates the adjoint of [`nested_sample`](Self::nested_sample) into
    /// every touched plane's `grad`.
    pub fn nested_sample_backward(&mut self, p: Vec3, upstream: &[T]) {
        self.sample_backward(p, upstream)
    }

    fn for_each_lookup(&self, c: CylCoord, mut f: impl FnMut(usize, Uv, f64)) {
        let n = self.radii.len();
        let uv = uv_thetay(c, &self.bounds);
        match self.mode {
            ShellMode::Sum => (0..n).for_each(|i| f(i, uv, 1.0)),
            ShellMode::RadialLerp => {
                let (i, t) = self.bracket(c.r);
                f(i, uv, 1.0 - t);
                if t > 0.0 {
                    f(i + 1, uv, t);
                }
            }
        }
        f(n, uv_rtheta(c, &self.bounds), 1.0);
        f(n + 1, uv_yr(c, &self.bounds), 1.0);
    }

    /// Circularly shifts all wrapping planes by a fraction of a turn, which
    /// rotates the field content by `turns * 2 pi` about `y`. Every wrapping
    /// plane's width must make the shift an integer texel count.
    pub fn rotate_by_turns(&mut self, turns: f64) -> Result<()> {
        let n = self.radii.len();
        for (idx, plane) in self.planes.iter_mut().enumerate().take(n + 1) {
            let shift = turns * plane.width as f64;
            if (shift - shift.round()).abs() > 1e-9 {
                return Err(invalid(format!(
                    "plane {idx} width {} cannot shift by {turns} turns",
                    plane.width
                )));
            }
            plane.roll_u(shift.round() as isize);
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> NestedCylinderField<U> {
        NestedCylinderField {
            radii: self.radii.clone(),
            planes: self.planes.iter().map(FeaturePlane::cast).collect(),
            bounds: self.bounds,
            mode: self.mode,
        }
    }
}

impl<T: Real> Field<T> for NestedCylinderField<T> {
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
        let mut names: Vec<String> = self
            .radii
            .iter()
            .enumerate()
            .map(|(i, r)| format!("shell{i}(r={r})"))
            .collect();
        names.push("rtheta".into());
        names.push("yr".into());
        names
    }

    fn sample_into(&self, p: Vec3, out: &mut [T]) {
        let c = self.channels();
        out[..c].fill(T::zero());
        self.for_each_lookup(cart_to_cyl(p), |k, uv, w| {
            let plane = &self.planes[k];
            plane.sample_add(&plane.footprint(uv), T::of(w), out);
        });
    }

    fn backward_into(&self, p: Vec3, upstream: &[T], grads: &mut [Vec<T>]) {
        let c = self.channels();
        self.for_each_lookup(cart_to_cyl(p), |k, uv, w| {
            let fp = self.planes[k].footprint(uv);
            FeaturePlane::scatter(&fp, c, T::of(w), upstream, &mut grads[k]);
        });
    }
}
