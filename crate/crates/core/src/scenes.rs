//! Analytic ground-truth scenes, posed datasets, and the mirror-collision
//! experiment comparing a tri-plane `xy` plane with a cylinder `theta-y` plane.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::geometry::{cart_to_cyl, orbit_camera, CameraPose, Ray, Vec3};
use crate::optim::{AdamConfig, AdamState};
use crate::planes::{uv_thetay, CylBounds, FeaturePlane, Uv};
use crate::renderer::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere {
        center: Vec3,
        radius: f64,
    },
    /// Torus around a vertical axis through `center`.
    Torus {
        center: Vec3,
        major: f64,
        minor: f64,
    },
}

impl Shape {
    pub fn center(&self) -> Vec3 {
        match *self {
            Shape::Sphere { center, .. } | Shape::Torus { center, .. } => center,
        }
    }

    /// Nearest positive hit distance along the ray.
    pub fn intersect(&self, ray: &Ray) -> Option<f64> {
        match *self {
            Shape::Sphere { center, radius } => {
                sphere_hits(ray, center, radius).and_then(|(t0, t1)| {
                    if t0 > 1e-9 {
                        Some(t0)
                    } else if t1 > 1e-9 {
                        Some(t1)
                    } else {
                        None
                    }
                })
            }
            Shape::Torus {
                center,
                major,
                minor,
            } => trace_torus(ray, center, major, minor),
        }
    }

    fn extent(&self) -> (f64, f64) {
        // (horizontal reach from the y axis, half height)
        match *self {
            Shape::Sphere { center, radius } => (center.x.hypot(center.z) + radius, radius),
            Shape::Torus {
                center,
                major,
                minor,
            } => (center.x.hypot(center.z) + major + minor, minor),
        }
    }
}

fn sphere_hits(ray: &Ray, center: Vec3, radius: f64) -> Option<(f64, f64)> {
    let oc = ray.origin - center;
    let b = oc.dot(ray.direction);
    let c = oc.dot(oc) - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    // numerically stable pair
    let q = if b > 0.0 { -b - s } else { -b + s };
    let (a, z) = if q == 0.0 { (0.0, 0.0) } else { (q, c / q) };
    Some((a.min(z), a.max(z)))
}

fn torus_sdf(p: Vec3, major: f64, minor: f64) -> f64 {
    (p.x.hypot(p.z) - major).hypot(p.y) - minor
}

/// Sphere tracing inside the bounding sphere, stopping within `1e-9`.
fn trace_torus(ray: &Ray, center: Vec3, major: f64, minor: f64) -> Option<f64> {
    let (t0, t1) = sphere_hits(ray, center, major + minor)?;
    if t1 <= 0.0 {
        return None;
    }
    let mut t = t0.max(0.0);
    for _ in 0..2000 {
        let d = torus_sdf(ray.at(t) - center, major, minor);
        if d < 1e-9 {
            return Some(t);
        }
        t += d;
        if t > t1 {
            return None;
        }
    }
    None
}

/// Surface coloring as a function of the hit point's azimuth about the
/// shape's vertical axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Palette {
    /// `m` equal azimuthal stripes, each with its own hue.
    Stripes(usize),
    /// Hue A where `cos(theta) > 0` (facing `+x`), hue B elsewhere.
    FrontBack,
}

pub const FRONT_COLOR: [f64; 3] = [0.9, 0.25, 0.2];
pub const BACK_COLOR: [f64; 3] = [0.15, 0.35, 0.85];

fn hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h - h.floor()) * 6.0;
    let i = h6.floor();
    let f = h6 - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i as u32 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

impl Palette {
    pub fn color(&self, theta: f64) -> [f64; 3] {
        match *self {
            Palette::FrontBack => {
                if theta.cos() > 0.0 {
                    FRONT_COLOR
                } else {
                    BACK_COLOR
                }
            }
            Palette::Stripes(m) => {
                let idx = (((theta + PI) / (2.0 * PI) * m as f64).floor() as usize).min(m - 1);
                // golden-ratio hue steps keep neighbouring stripes far apart
                hsv(idx as f64 * 0.618_033_988_749_894_9, 0.85, 0.9)
            }
        }
    }
}

impl FromStr for Palette {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "front_back" {
            return Ok(Palette::FrontBack);
        }
        if let Some(m) = s.strip_prefix("stripes_") {
            if let Ok(m) = m.parse::<usize>() {
                if m >= 1 {
                    return Ok(Palette::Stripes(m));
                }
            }
        }
        Err(invalid(format!(
            "unknown palette '{s}' (expected front_back or stripes_<m>)"
        )))
    }
}

impl fmt::Display for Palette {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Palette::FrontBack => f.write_str("front_back"),
            Palette::Stripes(m) => write!(f, "stripes_{m}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticScene {
    pub shape: Shape,
    pub palette: Palette,
    pub background: [f64; 3],
}

impl SyntheticScene {
    /// Radiance along `ray`: texture color at the first hit, else background.
    pub fn trace(&self, ray: &Ray) -> [f64; 3] {
        match self.shape.intersect(ray) {
            Some(t) => {
                let local = ray.at(t) - self.shape.center();
                self.palette.color(cart_to_cyl(local).theta)
            }
            None => self.background,
        }
    }

    pub fn fits(&self, bounds: &CylBounds) -> bool {
        let (reach, half) = self.shape.extent();
        let cy = self.shape.center().y;
        reach <= bounds.r_max && cy - half >= bounds.y_min && cy + half <= bounds.y_max
    }
}

/// One ray through each pixel center.
pub fn render_ground_truth(scene: &SyntheticScene, camera: &CameraPose) -> Image {
    render_ground_truth_supersampled(scene, camera, 1)
}

/// Averages `factor x factor` rays on a regular sub-pixel grid.
pub fn render_ground_truth_supersampled(
    scene: &SyntheticScene,
    camera: &CameraPose,
    factor: usize,
) -> Image {
    let mut img = Image::filled(camera.width, camera.height, [0.0; 3]);
    let f = factor.max(1);
    let norm = (f * f) as f64;
    for row in 0..camera.height {
        for col in 0..camera.width {
            let mut acc = [0.0; 3];
            for sy in 0..f {
                for sx in 0..f {
                    let px = col as f64 + (sx as f64 + 0.5) / f as f64;
                    let py = row as f64 + (sy as f64 + 0.5) / f as f64;
                    let c = scene.trace(&camera.ray_at(px, py));
                    (0..3).for_each(|k| acc[k] += c[k]);
                }
            }
            img.set_pixel(col, row, acc.map(|a| a / norm));
        }
    }
    img
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Split {
    Train,
    Holdout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub image: Image,
    pub camera: CameraPose,
    pub azimuth: f64,
    pub elevation: f64,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub views: Vec<View>,
}

impl Dataset {
    pub fn train_views(&self) -> impl Iterator<Item = &View> {
        self.views.iter().filter(|v| v.split == Split::Train)
    }

    pub fn holdout_views(&self) -> impl Iterator<Item = &View> {
        self.views.iter().filter(|v| v.split == Split::Holdout)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DatasetSpec {
    pub n_views: usize,
    pub width: usize,
    pub height: usize,
    pub elevation: f64,
    pub distance: f64,
    pub fov_y: f64,
    /// Every view whose index is a multiple of this is held out; 0 holds out nothing.
    pub holdout_every: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            n_views: 32,
            width: 64,
            height: 64,
            elevation: 0.2,
            distance: 3.0,
            fov_y: 0.6,
            holdout_every: 4,
        }
    }
}

/// Cameras at azimuths `2 pi k / n_views` around the shape's center.
pub fn make_dataset(scene: &SyntheticScene, spec: &DatasetSpec) -> Result<Dataset> {
    if spec.n_views < 4 {
        return Err(invalid("need at least 4 views"));
    }
    let target = scene.shape.center();
    let mut views = Vec::with_capacity(spec.n_views);
    for k in 0..spec.n_views {
        let azimuth = 2.0 * PI * k as f64 / spec.n_views as f64;
        let camera = orbit_camera(
            azimuth,
            spec.elevation,
            spec.distance,
            target,
            spec.fov_y,
            spec.width,
            spec.height,
        )?;
        let split = if spec.holdout_every > 0 && k % spec.holdout_every == 0 {
            Split::Holdout
        } else {
            Split::Train
        };
        views.push(View {
            image: render_ground_truth(scene, &camera),
            camera,
            azimuth,
            elevation: spec.elevation,
            split,
        });
    }
    Ok(Dataset { views })
}

/// Target function on the mirror-collision circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MirrorTarget {
    /// Odd under `z -> -z`; the tri-plane `xy` projection cannot represent it.
    Sin,
    /// A function of `x` alone on the circle; both planes can represent it.
    Cos,
}

impl MirrorTarget {
    fn eval(self, theta: f64) -> f64 {
        match self {
            MirrorTarget::Sin => theta.sin(),
            MirrorTarget::Cos => theta.cos(),
        }
    }
}

impl FromStr for MirrorTarget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sin" => Ok(MirrorTarget::Sin),
            "cos" => Ok(MirrorTarget::Cos),
            _ => Err(invalid(format!("unknown mirror target '{s}'"))),
        }
    }
}

impl fmt::Display for MirrorTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MirrorTarget::Sin => "sin",
            MirrorTarget::Cos => "cos",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MirrorConfig {
    pub m_points: usize,
    pub plane_resolution: usize,
    pub iterations: usize,
    pub lr: f64,
    pub seed: u64,
    pub target: MirrorTarget,
}

impl Default for MirrorConfig {
    fn default() -> Self {
        MirrorConfig {
            m_points: 1000,
            plane_resolution: 64,
            iterations: 500,
            lr: 0.05,
            seed: 0,
            target: MirrorTarget::Sin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MirrorResult {
    pub mse_triplane_xy: f64,
    pub mse_cylinder_thetay: f64,
}

const MIRROR_RADIUS: f64 = 0.8;

/// Full-batch Adam regression of `targets` by a single-channel plane read
/// directly (identity decoder) at fixed lookup coordinates. Returns final MSE.
fn regress_plane(
    plane: &mut FeaturePlane<f64>,
    uvs: &[Uv],
    targets: &[f64],
    cfg: &MirrorConfig,
) -> Result<f64> {
    let n = uvs.len() as f64;
    let footprints: Vec<_> = uvs.iter().map(|&uv| plane.footprint(uv)).collect();
    let mut adam = AdamState::new();
    let acfg = AdamConfig {
        lr: cfg.lr,
        ..Default::default()
    };
    let predict = |plane: &FeaturePlane<f64>, k: usize| {
        let mut out = [0.0];
        plane.sample_add(&footprints[k], 1.0, &mut out);
        out[0]
    };
    for _ in 0..cfg.iterations {
        plane.zero_grad();
        for (k, &t) in targets.iter().enumerate() {
            let r = predict(plane, k) - t;
            FeaturePlane::scatter(&footprints[k], 1, 2.0 * r / n, &[1.0], &mut plane.grad);
        }
        let FeaturePlane { data, grad, .. } = plane;
        adam.step(&mut [data.as_mut_slice()], &[grad.as_slice()], &acfg)?;
    }
    Ok(targets
        .iter()
        .enumerate()
        .map(|(k, &t)| (predict(plane, k) - t).powi(2))
        .sum::<f64>()
        / n)
}

/// Fits `f(theta)` on the circle `r = 0.8, y = 0` with (a) a lone tri-plane
/// `xy` plane over `[-1, 1]^2` and (b) a lone cylinder `theta-y` plane.
/// Points mirrored through `z = 0` share their `xy` lookup, so an odd target
/// such as `sin(theta)` leaves the tri-plane with error near `E[sin^2] = 1/2`.
pub fn mirror_collision_experiment(cfg: &MirrorConfig) -> Result<MirrorResult> {
    if cfg.m_points < 100 {
        return Err(invalid("mirror experiment needs at least 100 points"));
    }
    if cfg.plane_resolution < 2 {
        return Err(invalid("plane resolution must be at least 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let thetas: Vec<f64> = (0..cfg.m_points).map(|_| rng.gen_range(-PI..PI)).collect();
    let points: Vec<Vec3> = thetas
        .iter()
        .map(|t| Vec3::new(MIRROR_RADIUS * t.cos(), 0.0, MIRROR_RADIUS * t.sin()))
        .collect();
    let targets: Vec<f64> = thetas.iter().map(|&t| cfg.target.eval(t)).collect();
    let n = cfg.plane_resolution;

    let mut xy = FeaturePlane::zeros(n, n, 1, false)?;
    let xy_uvs: Vec<Uv> = points
        .iter()
        .map(|p| Uv::new((p.x + 1.0) / 2.0, (p.y + 1.0) / 2.0))
        .collect();
    let mse_triplane_xy = regress_plane(&mut xy, &xy_uvs, &targets, cfg)?;

    let bounds = CylBounds {
        y_min: -1.0,
        y_max: 1.0,
        r_max: 1.0,
    };
    let mut thetay = FeaturePlane::zeros(n, n, 1, true)?;
    let cyl_uvs: Vec<Uv> = points
        .iter()
        .map(|&p| uv_thetay(cart_to_cyl(p), &bounds))
        .collect();
    let mse_cylinder_thetay = regress_plane(&mut thetay, &cyl_uvs, &targets, cfg)?;

    Ok(MirrorResult {
        mse_triplane_xy,
        mse_cylinder_thetay,
    })
}

/// Human-readable scene summary.
pub fn describe(scene: &SyntheticScene) -> String {
    match scene.shape {
        Shape::Sphere { radius, .. } => format!("sphere(r={radius}) {}", scene.palette),
        Shape::Torus { major, minor, .. } => {
            format!("torus(R={major}, r={minor}) {}", scene.palette)
        }
    }
    .to_string()
}
