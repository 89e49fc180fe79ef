//! Points, cylindrical coordinates, pinhole cameras and primary rays.
//!
//! Conventions: `y` is the vertical axis and `theta` is measured from `+x`
//! toward `+z`, so mirroring a point through the `xy` plane (`z -> -z`)
//! negates its azimuth. Cameras look down their local `-z` axis with `+y` up.

use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub};

// Only needed without std: the inherent float methods win when std is linked.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(from = "[f64; 3]", into = "[f64; 3]"))]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const UP: Vec3 = Vec3::new(0.0, 1.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self / self.norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Rotates about the `y` axis so that azimuth increases by `angle`.
    pub fn rotate_y(self, angle: f64) -> Vec3 {
        let (s, c) = angle.sin_cos();
        Vec3::new(c * self.x - s * self.z, self.y, s * self.x + c * self.z)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Cylindrical coordinates about the `y` axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylCoord {
    /// Azimuth in `[-pi, pi)`.
    pub theta: f64,
    pub r: f64,
    pub y: f64,
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = num_traits::Euclid::rem_euclid(&(theta + PI), &(2.0 * PI)) - PI;
    // rem_euclid can round up to exactly 2*pi
    if t >= PI {
        t - 2.0 * PI
    } else {
        t
    }
}

pub fn cart_to_cyl(p: Vec3) -> CylCoord {
    let r = p.x.hypot(p.z);
    let theta = if r == 0.0 {
        0.0
    } else {
        let t = p.z.atan2(p.x);
        // atan2 returns pi (not -pi) on the negative x axis
        if t >= PI {
            -PI
        } else {
            t
        }
    };
    CylCoord { theta, r, y: p.y }
}

pub fn cyl_to_cart(c: CylCoord) -> Vec3 {
    let (s, co) = c.theta.sin_cos();
    Vec3::new(c.r * co, c.y, c.r * s)
}

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn from_columns(a: Vec3, b: Vec3, c: Vec3) -> Mat3 {
        Mat3([[a.x, b.x, c.x], [a.y, b.y, c.y], [a.z, b.z, c.z]])
    }

    pub fn column(&self, j: usize) -> Vec3 {
        Vec3::new(self.0[0][j], self.0[1][j], self.0[2][j])
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        Mat3(out)
    }

    /// Largest absolute entry of `M^T M - I`.
    pub fn orthonormality_error(&self) -> f64 {
        let p = self.transpose().mul_mat(self);
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p.0[i][j] - target).abs());
            }
        }
        worst
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    pub fn from_row_major(a: [f64; 9]) -> Mat3 {
        Mat3([[a[0], a[1], a[2]], [a[3], a[4], a[5]], [a[6], a[7], a[8]]])
    }
}

impl Index<(usize, usize)> for Mat3 {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.0[i][j]
    }
}

/// Pinhole camera. `rotation` maps camera axes to world axes; its columns are
/// the world-space right, up and backward directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub position: Vec3,
    pub rotation: Mat3,
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraPose {
    pub fn new(
        position: Vec3,
        rotation: Mat3,
        fov_y: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let cam = CameraPose {
            position,
            rotation,
            fov_y,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.position.is_finite() {
            return Err(invalid("camera position is not finite"));
        }
        if !(self.fov_y > 0.0 && self.fov_y < PI) {
            return Err(invalid("fov_y must lie in (0, pi)"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(invalid("camera resolution must be nonzero"));
        }
        if !(self.rotation.orthonormality_error() <= 1e-9) {
            return Err(invalid("camera rotation is not orthonormal"));
        }
        Ok(())
    }

    pub fn forward(&self) -> Vec3 {
        -self.rotation.column(2)
    }

    pub fn up(&self) -> Vec3 {
        self.rotation.column(1)
    }

    pub fn right(&self) -> Vec3 {
        self.rotation.column(0)
    }

    /// Focal length in pixels.
    pub fn focal_px(&self) -> f64 {
        0.5 * self.height as f64 / (0.5 * self.fov_y).tan()
    }

    /// Ray through the center of pixel `(col, row)`, row 0 at the top.
    pub fn pixel_ray(&self, col: usize, row: usize) -> Ray {
        self.ray_at(col as f64 + 0.5, row as f64 + 0.5)
    }

    /// Ray through continuous image coordinates (pixel units, origin at the
    /// top-left corner).
    pub fn ray_at(&self, px: f64, py: f64) -> Ray {
        let scale = 2.0 * (0.5 * self.fov_y).tan() / self.height as f64;
        let cx = (px - 0.5 * self.width as f64) * scale;
        let cy = -(py - 0.5 * self.height as f64) * scale;
        let dir = self.rotation.mul_vec(Vec3::new(cx, cy, -1.0)).normalized();
        Ray {
            origin: self.position,
            direction: dir,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub direction: Vec3,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Camera on a sphere of radius `distance` about `target`, looking at it with
/// world up `+y`. Azimuth 0 places the camera on `+x`, azimuth `pi/2` on `+z`.
pub fn orbit_camera(
    azimuth: f64,
    elevation: f64,
    distance: f64,
    target: Vec3,
    fov_y: f64,
    width: usize,
    height: usize,
) -> Result<CameraPose> {
    if !(distance > 0.0) {
        return Err(invalid("orbit distance must be positive"));
    }
    let (se, ce) = elevation.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    let offset = Vec3::new(ce * ca, se, ce * sa);
    let position = target + offset * distance;
    let forward = -offset;
    let side = forward.cross(Vec3::UP);
    if side.norm() < 1e-9 {
        return Err(Error::DegenerateCamera);
    }
    let right = side.normalized();
    let up = right.cross(forward);
    CameraPose::new(
        position,
        Mat3::from_columns(right, up, -forward),
        fov_y,
        width,
        height,
    )
}

/// One ray per pixel in row-major order.
pub fn generate_rays(camera: &CameraPose) -> Vec<Ray> {
    let mut rays = Vec::with_capacity(camera.width * camera.height);
    for row in 0..camera.height {
        for col in 0..camera.width {
            rays.push(camera.pixel_ray(col, row));
        }
    }
    rays
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::FRAC_PI_2;
    use proptest::prelude::*;

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn cart_to_cyl_examples() {
        let c = cart_to_cyl(Vec3::new(1.0, 0.0, 0.0));
        assert_eq!((c.theta, c.r, c.y), (0.0, 1.0, 0.0));
        let c = cart_to_cyl(Vec3::new(0.0, 5.0, 0.0));
        assert_eq!((c.theta, c.r, c.y), (0.0, 0.0, 5.0));
        let c = cart_to_cyl(Vec3::new(0.0, 2.0, 1.0));
        assert!((c.theta - FRAC_PI_2).abs() < 1e-15);
        assert_eq!((c.r, c.y), (1.0, 2.0));
    }

    #[test]
    fn negative_x_axis_maps_to_minus_pi() {
        assert_eq!(cart_to_cyl(Vec3::new(-1.0, 0.0, 0.0)).theta, -PI);
        assert_eq!(cart_to_cyl(Vec3::new(-1.0, 0.0, -0.0)).theta, -PI);
    }

    #[test]
    fn cyl_to_cart_examples() {
        let p = cyl_to_cart(CylCoord {
            theta: 0.0,
            r: 1.0,
            y: 0.0,
        });
        assert_eq!(p, Vec3::new(1.0, 0.0, 0.0));
        let p = cyl_to_cart(CylCoord {
            theta: FRAC_PI_2,
            r: 2.0,
            y: -1.0,
        });
        assert!(close(p, Vec3::new(0.0, -1.0, 2.0), 1e-15));
    }

    #[test]
    fn orbit_camera_examples() {
        let cam = orbit_camera(0.0, 0.0, 3.0, Vec3::ZERO, 0.8, 8, 8).unwrap();
        assert!(close(cam.position, Vec3::new(3.0, 0.0, 0.0), 1e-15));
        assert!(close(cam.forward(), Vec3::new(-1.0, 0.0, 0.0), 1e-15));
        let cam = orbit_camera(PI, 0.0, 3.0, Vec3::ZERO, 0.8, 8, 8).unwrap();
        assert!(close(cam.position, Vec3::new(-3.0, 0.0, 0.0), 1e-12));
        assert_eq!(
            orbit_camera(0.3, FRAC_PI_2, 3.0, Vec3::ZERO, 0.8, 8, 8),
            Err(Error::DegenerateCamera)
        );
        assert!(orbit_camera(0.0, 0.0, 0.0, Vec3::ZERO, 0.8, 8, 8).is_err());
    }

    #[test]
    fn orbit_rotation_is_proper() {
        let cam = orbit_camera(1.1, 0.4, 2.0, Vec3::new(0.1, 0.2, 0.3), 0.8, 8, 8).unwrap();
        assert!(cam.rotation.orthonormality_error() < 1e-12);
        let r = cam.right();
        let det = r.dot(cam.up().cross(cam.rotation.column(2)));
        assert!((det - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_pixel_ray_is_forward() {
        let cam = orbit_camera(0.7, 0.2, 3.0, Vec3::ZERO, 0.9, 1, 1).unwrap();
        let rays = generate_rays(&cam);
        assert_eq!(rays.len(), 1);
        assert!(close(rays[0].direction, cam.forward(), 1e-12));
    }

    #[test]
    fn center_pixel_is_forward_for_odd_sizes() {
        let cam = orbit_camera(2.0, -0.3, 3.0, Vec3::ZERO, 0.9, 7, 5).unwrap();
        let rays = generate_rays(&cam);
        assert_eq!(rays.len(), 35);
        assert!(close(rays[2 * 7 + 3].direction, cam.forward(), 1e-6));
    }

    #[test]
    fn pinhole_vertical_offsets() {
        // Camera-space frame equals world frame for the identity rotation.
        let cam = CameraPose::new(Vec3::ZERO, Mat3::IDENTITY, FRAC_PI_2, 1, 2).unwrap();
        let expected = (FRAC_PI_2 / 2.0).tan() / 2.0;
        for (row, sign) in [(0, 1.0), (1, -1.0)] {
            let d = cam.pixel_ray(0, row).direction;
            // undo normalization: camera-space direction is (cx, cy, -1)
            let cy = d.y / -d.z;
            assert!((cy - sign * expected).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_non_orthonormal_rotation() {
        let mut m = Mat3::IDENTITY;
        m.0[0][1] = 1e-6;
        assert!(CameraPose::new(Vec3::ZERO, m, 1.0, 4, 4).is_err());
    }

    fn finite_point() -> impl Strategy<Value = Vec3> {
        (-100.0..100.0f64, -100.0..100.0f64, -100.0..100.0f64)
            .prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn round_trip(p in finite_point()) {
            let c = cart_to_cyl(p);
            prop_assume!(c.r > 1e-9);
            let q = cyl_to_cart(c);
            prop_assert!((q - p).norm() <= 1e-12 * (1.0 + p.norm()));
        }

        #[test]
        fn theta_range(p in finite_point()) {
            let c = cart_to_cyl(p);
            prop_assert!(c.theta >= -PI && c.theta < PI);
            prop_assert!(c.r >= 0.0);
        }

        #[test]
        fn mirror_negates_theta(p in finite_point()) {
            let a = cart_to_cyl(p);
            let b = cart_to_cyl(Vec3::new(p.x, p.y, -p.z));
            prop_assert_eq!(a.r, b.r);
            prop_assert_eq!(a.y, b.y);
            prop_assert!(wrap_angle(a.theta + b.theta).abs() < 1e-12);
        }

        #[test]
        fn rays_unit_norm(az in -PI..PI, el in -1.4..1.4f64, w in 1usize..9, h in 1usize..9) {
            let cam = orbit_camera(az, el, 2.5, Vec3::ZERO, 0.7, w, h).unwrap();
            prop_assert!(cam.rotation.orthonormality_error() <= 1e-9);
            for r in generate_rays(&cam) {
                prop_assert!((r.direction.norm() - 1.0).abs() <= 1e-9);
            }
        }
    }
}
