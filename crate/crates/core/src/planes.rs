//! Feature planes and wrap-aware bilinear sampling.
//!
//! Texel `(i, j)` is centered at `u = (i + 0.5) / W`, `v = (j + 0.5) / H`.
//! The `u` axis either wraps modulo `W` or clamps; `v` always clamps.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Result};
use crate::geometry::CylCoord;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uv {
    pub u: f64,
    pub v: f64,
}

impl Uv {
    pub const fn new(u: f64, v: f64) -> Self {
        Uv { u, v }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePlane<T> {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub wrap_u: bool,
    /// `height x width x channels`, v-major.
    pub data: Vec<T>,
    pub grad: Vec<T>,
}

/// The four texels touched by one bilinear lookup and their weights.
///
/// Weights are ordered `(i0,j0), (i1,j0), (i0,j1), (i1,j1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    /// Offsets of the first channel of each texel in `data`.
    pub offsets: [usize; 4],
    pub weights: [f64; 4],
    pub fx: f64,
    pub fy: f64,
}

impl<T: Real> FeaturePlane<T> {
    pub fn zeros(width: usize, height: usize, channels: usize, wrap_u: bool) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(invalid("plane dimensions must be at least 1"));
        }
        let n = width * height * channels;
        Ok(FeaturePlane {
            width,
            height,
            channels,
            wrap_u,
            data: vec![T::zero(); n],
            grad: vec![T::zero(); n],
        })
    }

    pub fn from_data(
        width: usize,
        height: usize,
        channels: usize,
        wrap_u: bool,
        data: Vec<T>,
    ) -> Result<Self> {
        let mut p = Self::zeros(width, height, channels, wrap_u)?;
        if data.len() != p.data.len() {
            return Err(invalid("plane data length does not match dimensions"));
        }
        p.data = data;
        Ok(p)
    }

    pub fn filled(
        width: usize,
        height: usize,
        channels: usize,
        wrap_u: bool,
        value: T,
    ) -> Result<Self> {
        let mut p = Self::zeros(width, height, channels, wrap_u)?;
        p.data.fill(value);
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn offset(&self, col: usize, row: usize) -> usize {
        (row * self.width + col) * self.channels
    }

    pub fn texel(&self, col: usize, row: usize) -> &[T] {
        let o = self.offset(col, row);
        &self.data[o..o + self.channels]
    }

    pub fn texel_mut(&mut self, col: usize, row: usize) -> &mut [T] {
        let o = self.offset(col, row);
        let c = self.channels;
        &mut self.data[o..o + c]
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn footprint(&self, uv: Uv) -> Footprint {
        let u = if self.wrap_u {
            uv.u - uv.u.floor()
        } else {
            uv.u.clamp(0.0, 1.0)
        };
        let v = uv.v.clamp(0.0, 1.0);
        let x = u * self.width as f64 - 0.5;
        let y = v * self.height as f64 - 0.5;
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let w = self.width as i64;
        let col = |i: i64| -> usize {
            if self.wrap_u {
                i.rem_euclid(w) as usize
            } else {
                i.clamp(0, w - 1) as usize
            }
        };
        let row = |j: i64| -> usize { j.clamp(0, self.height as i64 - 1) as usize };
        let (c0, c1) = (col(x0), col(x0 + 1));
        let (r0, r1) = (row(y0), row(y0 + 1));
        Footprint {
            offsets: [
                self.offset(c0, r0),
                self.offset(c1, r0),
                self.offset(c0, r1),
                self.offset(c1, r1),
            ],
            weights: [
                (1.0 - fx) * (1.0 - fy),
                fx * (1.0 - fy),
                (1.0 - fx) * fy,
                fx * fy,
            ],
            fx,
            fy,
        }
    }

    /// Writes the bilinear sample at `uv` into `out[..channels]`.
    pub fn sample_into(&self, uv: Uv, out: &mut [T]) {
        out[..self.channels].fill(T::zero());
        self.sample_add(&self.footprint(uv), T::one(), out);
    }

    pub fn sample(&self, uv: Uv) -> Vec<T> {
        let mut out = vec![T::zero(); self.channels];
        self.sample_into(uv, &mut out);
        out
    }

    /// `out += scale * sample`, for a precomputed footprint.
    #[inline]
    pub fn sample_add(&self, fp: &Footprint, scale: T, out: &mut [T]) {
        let c = self.channels;
        for (&o, &w) in fp.offsets.iter().zip(&fp.weights) {
            let w = scale * T::of(w);
            for (acc, &d) in out[..c].iter_mut().zip(&self.data[o..o + c]) {
                *acc += w * d;
            }
        }
    }

    /// `grad[texel] += scale * weight * upstream` for each texel in the footprint.
    #[inline]
    pub fn scatter(fp: &Footprint, channels: usize, scale: T, upstream: &[T], grad: &mut [T]) {
        for (&o, &w) in fp.offsets.iter().zip(&fp.weights) {
            let w = scale * T::of(w);
            for (g, &up) in grad[o..o + channels].iter_mut().zip(&upstream[..channels]) {
                *g += w * up;
            }
        }
    }

    /// Adjoint of [`sample_into`](Self::sample_into) writing texel gradients into
    /// an external buffer shaped like `data`. Returns `(d/du, d/dv)` of
    /// `<sample(uv), upstream>`.
    pub fn backward_into(&self, uv: Uv, upstream: &[T], grad: &mut [T]) -> (T, T) {
        let fp = self.footprint(uv);
        Self::scatter(&fp, self.channels, T::one(), upstream, grad);
        self.uv_gradient(uv, &fp, upstream)
    }

    /// Adjoint of [`sample_into`](Self::sample_into), accumulating into `self.grad`.
    pub fn sample_bilinear_backward(&mut self, uv: Uv, upstream: &[T]) -> (T, T) {
        let fp = self.footprint(uv);
        Self::scatter(&fp, self.channels, T::one(), upstream, &mut self.grad);
        self.uv_gradient(uv, &fp, upstream)
    }

    fn uv_gradient(&self, uv: Uv, fp: &Footprint, upstream: &[T]) -> (T, T) {
        let c = self.channels;
        let t = |k: usize| &self.data[fp.offsets[k]..fp.offsets[k] + c];
        let (fx, fy) = (T::of(fp.fx), T::of(fp.fy));
        let one = T::one();
        let mut du = T::zero();
        let mut dv = T::zero();
        for ch in 0..c {
            let (f00, f10, f01, f11) = (t(0)[ch], t(1)[ch], t(2)[ch], t(3)[ch]);
            du += upstream[ch] * ((one - fy) * (f10 - f00) + fy * (f11 - f01));
            dv += upstream[ch] * ((one - fx) * (f01 - f00) + fx * (f11 - f10));
        }
        // clamped coordinates have zero derivative
        let du_scale = if !self.wrap_u && !(0.0..=1.0).contains(&uv.u) {
            0.0
        } else {
            self.width as f64
        };
        let dv_scale = if !(0.0..=1.0).contains(&uv.v) {
            0.0
        } else {
            self.height as f64
        };
        (du * T::of(du_scale), dv * T::of(dv_scale))
    }

    /// Rotates content along `u` so that new column `i + shift` holds old column `i`.
    pub fn roll_u(&mut self, shift: isize) {
        let w = self.width as isize;
        let c = self.channels;
        let old = self.data.clone();
        for row in 0..self.height {
            for col in 0..self.width {
                let dst = (col as isize + shift).rem_euclid(w) as usize;
                let s = self.offset(col, row);
                let d = self.offset(dst, row);
                self.data[d..d + c].copy_from_slice(&old[s..s + c]);
            }
        }
    }

    pub fn cast<U: Real>(&self) -> FeaturePlane<U> {
        FeaturePlane {
            width: self.width,
            height: self.height,
            channels: self.channels,
            wrap_u: self.wrap_u,
            data: self.data.iter().map(|&x| U::of(x.f64())).collect(),
            grad: self.grad.iter().map(|&x| U::of(x.f64())).collect(),
        }
    }
}

/// Vertical extent and radius of the cylindrical volume.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CylBounds {
    pub y_min: f64,
    pub y_max: f64,
    pub r_max: f64,
}

impl CylBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.y_max > self.y_min) {
            return Err(invalid("y_max must exceed y_min"));
        }
        if !(self.r_max > 0.0) {
            return Err(invalid("r_max must be positive"));
        }
        Ok(())
    }

    fn height_fraction(&self, y: f64) -> f64 {
        ((y - self.y_min) / (self.y_max - self.y_min)).clamp(0.0, 1.0)
    }

    fn radius_fraction(&self, r: f64) -> f64 {
        (r / self.r_max).clamp(0.0, 1.0)
    }
}

#[inline]
fn azimuth_fraction(theta: f64) -> f64 {
    (theta + PI) / (2.0 * PI)
}

/// Unrolled side of the cylinder: `u` follows azimuth (wrapping), `v` height.
pub fn uv_thetay(c: CylCoord, b: &CylBounds) -> Uv {
    Uv::new(azimuth_fraction(c.theta), b.height_fraction(c.y))
}

/// Disc plane stored as a square grid over `(theta, r)`.
pub fn uv_rtheta(c: CylCoord, b: &CylBounds) -> Uv {
    Uv::new(azimuth_fraction(c.theta), b.radius_fraction(c.r))
}

/// Half-section plane over `(y, r)`; no wrap.
pub fn uv_yr(c: CylCoord, b: &CylBounds) -> Uv {
    Uv::new(b.height_fraction(c.y), b.radius_fraction(c.r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plane(w: usize, h: usize, c: usize, wrap: bool, seed: u64) -> FeaturePlane<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..w * h * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        FeaturePlane::from_data(w, h, c, wrap, data).unwrap()
    }

    /// Independent evaluation as a sum of tent functions centered on texels.
    /// A clamped axis is equivalent to clamping the continuous texel coordinate.
    fn reference_sample(p: &FeaturePlane<f64>, u: f64, v: f64, ch: usize) -> f64 {
        let (w, h) = (p.width as f64, p.height as f64);
        let x = if p.wrap_u {
            u.rem_euclid(1.0) * w - 0.5
        } else {
            (u.clamp(0.0, 1.0) * w - 0.5).max(0.0).min(w - 1.0)
        };
        let y = (v.clamp(0.0, 1.0) * h - 0.5).max(0.0).min(h - 1.0);
        let mut total = 0.0;
        for row in 0..p.height {
            let wy = (1.0 - (y - row as f64).abs()).max(0.0);
            for col in -1..=p.width as i64 {
                let wx = (1.0 - (x - col as f64).abs()).max(0.0);
                if wx == 0.0 || wy == 0.0 {
                    continue;
                }
                let c = if p.wrap_u {
                    col.rem_euclid(p.width as i64) as usize
                } else if col < 0 || col >= p.width as i64 {
                    continue;
                } else {
                    col as usize
                };
                total += wx * wy * p.texel(c, row)[ch];
            }
        }
        total
    }

    #[test]
    fn constant_plane() {
        let p = FeaturePlane::filled(5, 3, 2, true, 3.5f64).unwrap();
        for uv in [
            Uv::new(0.0, 0.0),
            Uv::new(0.37, 0.91),
            Uv::new(-2.3, 1.7),
            Uv::new(0.999, 0.5),
        ] {
            for x in p.sample(uv) {
                assert!((x - 3.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_by_two_center() {
        let p =
            FeaturePlane::from_data(2, 2, 1, false, alloc::vec![0.0, 1.0, 2.0, 3.0f64]).unwrap();
        assert_eq!(p.sample(Uv::new(0.5, 0.5))[0], 1.5);
    }

    #[test]
    fn wrap_blends_across_seam() {
        let p = FeaturePlane::from_data(4, 1, 1, true, alloc::vec![0.0, 1.0, 2.0, 3.0f64]).unwrap();
        assert_eq!(p.sample(Uv::new(0.0, 0.5))[0], 1.5);
        let q =
            FeaturePlane::from_data(4, 1, 1, false, alloc::vec![0.0, 1.0, 2.0, 3.0f64]).unwrap();
        assert_eq!(q.sample(Uv::new(0.0, 0.5))[0], 0.0);
    }

    #[test]
    fn matches_reference_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for wrap in [true, false] {
            let p = random_plane(7, 5, 3, wrap, 3);
            for _ in 0..200 {
                let u = rng.gen_range(-0.2..1.2);
                let v = rng.gen_range(-0.2..1.2);
                let s = p.sample(Uv::new(u, v));
                for ch in 0..3 {
                    let r = reference_sample(&p, u, v, ch);
                    assert!(
                        (s[ch] - r).abs() < 1e-12,
                        "wrap={wrap} u={u} v={v}: {} vs {r}",
                        s[ch]
                    );
                }
            }
        }
    }

    #[test]
    fn backward_partition_of_unity() {
        let mut p = random_plane(6, 6, 3, true, 1);
        let _ = p.sample_bilinear_backward(Uv::new(0.41, 0.63), &[1.0, 1.0, 1.0]);
        let total: f64 = p.grad.iter().sum();
        assert!((total - 3.0).abs() < 1e-14);
    }

    #[test]
    fn constant_plane_has_flat_uv_gradient() {
        let mut p = FeaturePlane::filled(6, 4, 2, true, 0.7f64).unwrap();
        let (du, dv) = p.sample_bilinear_backward(Uv::new(0.33, 0.52), &[0.3, -2.0]);
        assert!(du.abs() < 1e-12 && dv.abs() < 1e-12);
    }

    #[test]
    fn uv_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let eps = 1e-7;
        for wrap in [true, false] {
            let p = random_plane(8, 8, 4, wrap, 5);
            for _ in 0..50 {
                let uv = Uv::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
                let up: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let f = |u: f64, v: f64| -> f64 {
                    p.sample(Uv::new(u, v))
                        .iter()
                        .zip(&up)
                        .map(|(a, b)| a * b)
                        .sum()
                };
                let mut grad = vec![0.0; p.len()];
                let (du, dv) = p.backward_into(uv, &up, &mut grad);
                let ndu = (f(uv.u + eps, uv.v) - f(uv.u - eps, uv.v)) / (2.0 * eps);
                let ndv = (f(uv.u, uv.v + eps) - f(uv.u, uv.v - eps)) / (2.0 * eps);
                // FD round-off is ~1e-9 absolute, so compare relative to max(1, |g|)
                let close = |a: f64, n: f64| (a - n).abs() <= 1e-6 * a.abs().max(n.abs()).max(1.0);
                assert!(close(du, ndu), "du {du} vs {ndu}");
                assert!(close(dv, ndv), "dv {dv} vs {ndv}");
            }
        }
    }

    #[test]
    fn texel_gradient_is_scatter_of_weights() {
        // <sample(data), up> is linear in data, so its gradient is exactly the scatter
        let p = random_plane(5, 4, 2, true, 8);
        let uv = Uv::new(0.93, 0.2);
        let up = [0.4, -1.3];
        let mut grad = vec![0.0; p.len()];
        p.backward_into(uv, &up, &mut grad);
        for k in 0..p.len() {
            let mut basis = FeaturePlane::zeros(5, 4, 2, true).unwrap();
            basis.data[k] = 1.0;
            let s = basis.sample(uv);
            let expect = s[0] * up[0] + s[1] * up[1];
            assert_eq!(grad[k], expect);
        }
    }

    #[test]
    fn uv_mappings() {
        let b = CylBounds {
            y_min: -1.0,
            y_max: 1.0,
            r_max: 2.0,
        };
        let c = |theta, r, y| CylCoord { theta, r, y };
        assert_eq!(uv_thetay(c(0.0, 0.3, 0.0), &b), Uv::new(0.5, 0.5));
        assert_eq!(uv_thetay(c(-PI, 0.3, 0.0), &b).u, 0.0);
        assert_eq!(uv_rtheta(c(0.0, 0.0, 0.0), &b), Uv::new(0.5, 0.0));
        assert_eq!(uv_rtheta(c(0.0, 2.0, 0.0), &b).v, 1.0);
        assert_eq!(uv_rtheta(c(0.0, 5.0, 0.0), &b).v, 1.0);
        assert_eq!(uv_yr(c(0.0, 0.0, -1.0), &b), Uv::new(0.0, 0.0));
        assert_eq!(uv_yr(c(1.0, 1.0, 0.0), &b), Uv::new(0.5, 0.5));
        assert_eq!(uv_yr(c(1.0, 1.0, 7.0), &b).u, 1.0);
        assert_eq!(uv_yr(c(1.0, 1.0, -7.0), &b).u, 0.0);
    }

    #[test]
    fn seam_footprints_overlap() {
        let b = CylBounds {
            y_min: -1.0,
            y_max: 1.0,
            r_max: 1.0,
        };
        let p = FeaturePlane::<f64>::zeros(16, 4, 1, true).unwrap();
        let a = p.footprint(uv_thetay(
            CylCoord {
                theta: PI - 1e-9,
                r: 1.0,
                y: 0.0,
            },
            &b,
        ));
        let z = p.footprint(uv_thetay(
            CylCoord {
                theta: -PI,
                r: 1.0,
                y: 0.0,
            },
            &b,
        ));
        assert!(a.offsets.iter().any(|o| z.offsets.contains(o)));
    }

    #[test]
    fn roll_shifts_columns() {
        let mut p =
            FeaturePlane::from_data(4, 1, 1, true, alloc::vec![0.0, 1.0, 2.0, 3.0f64]).unwrap();
        p.roll_u(1);
        assert_eq!(p.data, alloc::vec![3.0, 0.0, 1.0, 2.0]);
    }

    proptest! {
        #[test]
        fn wrap_periodicity_dyadic(k in 0u32..65536, shift in -3i32..4, v in 0.0..1.0f64) {
            let p = random_plane(7, 3, 2, true, 4);
            let u = k as f64 / 65536.0;
            prop_assert_eq!(p.sample(Uv::new(u, v)), p.sample(Uv::new(u + shift as f64, v)));
        }

        #[test]
        fn wrap_periodicity_general(u in -1.0..1.0f64, v in 0.0..1.0f64) {
            let p = random_plane(7, 3, 2, true, 4);
            let a = p.sample(Uv::new(u, v));
            let b = p.sample(Uv::new(u + 1.0, v));
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn weights_are_partition_of_unity(u in -3.0..3.0f64, v in -1.0..2.0f64, wrap in any::<bool>()) {
            let p = FeaturePlane::<f64>::zeros(5, 6, 1, wrap).unwrap();
            let fp = p.footprint(Uv::new(u, v));
            prop_assert!(fp.weights.iter().all(|&w| w >= 0.0));
            prop_assert!((fp.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }

        #[test]
        fn seam_is_continuous(eps_exp in 3i32..12) {
            let p = random_plane(9, 4, 2, true, 11);
            let b = CylBounds { y_min: -1.0, y_max: 1.0, r_max: 1.0 };
            let eps = 10f64.powi(-eps_exp);
            let a = p.sample(uv_thetay(CylCoord { theta: PI - eps, r: 0.5, y: 0.2 }, &b));
            let z = p.sample(uv_thetay(CylCoord { theta: -PI + eps, r: 0.5, y: 0.2 }, &b));
            for (x, y) in a.iter().zip(&z) {
                prop_assert!((x - y).abs() < 100.0 * eps);
            }
        }
    }
}
