//! JSON run configuration. Every section is optional and unknown keys are
//! rejected, so a typo fails loudly instead of silently using a default.

use std::path::{Path, PathBuf};

use cylfield_core::field::{NestedSpec, TriPlaneSpec};
use cylfield_core::optim::TrainConfig;
use cylfield_core::planes::CylBounds;
use cylfield_core::scenes::{DatasetSpec, Palette, Shape, SyntheticScene};
use cylfield_core::{RenderConfig, SeamConfig, Vec3};
use serde::{Deserialize, Serialize};

use crate::error::{read_input, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Sphere,
    Torus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub shape: ShapeKind,
    pub center: Vec3,
    /// Sphere radius.
    pub radius: f64,
    /// Torus ring radius and tube radius.
    pub major_radius: f64,
    pub minor_radius: f64,
    /// `front_back` or `stripes_<m>`.
    pub palette: String,
    pub background: [f64; 3],
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            shape: ShapeKind::Sphere,
            center: Vec3::ZERO,
            radius: 0.6,
            major_radius: 0.6,
            minor_radius: 0.25,
            palette: "front_back".into(),
            background: [1.0; 3],
        }
    }
}

impl SceneConfig {
    pub fn build(&self) -> CliResult<SyntheticScene> {
        let palette: Palette = self.palette.parse()?;
        let shape = match self.shape {
            ShapeKind::Sphere => {
                if self.radius.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
                    return Err(CliError::BadInput("scene.radius must be positive".into()));
                }
                Shape::Sphere {
                    center: self.center,
                    radius: self.radius,
                }
            }
            ShapeKind::Torus => {
                if !(self.minor_radius > 0.0 && self.major_radius > self.minor_radius) {
                    return Err(CliError::BadInput(
                        "torus needs major_radius > minor_radius > 0".into(),
                    ));
                }
                Shape::Torus {
                    center: self.center,
                    major: self.major_radius,
                    minor: self.minor_radius,
                }
            }
        };
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(CliError::BadInput(
                "scene.background must lie in [0, 1]".into(),
            ));
        }
        Ok(SyntheticScene {
            shape,
            palette,
            background: self.background,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    #[default]
    Nested,
    Triplane,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub kind: FieldKind,
    pub nested: NestedSpec,
    pub triplane: TriPlaneSpec,
    pub decoder_hidden: Vec<usize>,
    /// Planes start uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    /// Density the untrained decoder emits everywhere.
    pub initial_density: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            kind: FieldKind::Nested,
            nested: NestedSpec::default(),
            triplane: TriPlaneSpec::default(),
            decoder_hidden: vec![64, 64],
            init_scale: 1e-2,
            initial_density: 0.1,
        }
    }
}

impl FieldConfig {
    pub fn channels(&self) -> usize {
        match self.kind {
            FieldKind::Nested => self.nested.channels,
            FieldKind::Triplane => self.triplane.channels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds plane/decoder initialization, ray batching and sample jitter.
    pub seed: u64,
    pub scene: SceneConfig,
    pub dataset: DatasetSpec,
    pub field: FieldConfig,
    pub train: TrainConfig,
    pub seam: SeamConfig,
    pub render: RenderConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            scene: SceneConfig::default(),
            dataset: DatasetSpec::default(),
            field: FieldConfig::default(),
            train: TrainConfig::default(),
            seam: SeamConfig::default(),
            // jittered depths during training avoid fitting the sample lattice
            render: RenderConfig {
                jitter: true,
                ..RenderConfig::default()
            },
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::BadInput(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = read_input(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| CliError::BadInput(format!("{} is not UTF-8", path.display())))?;
        Self::from_json(&text).map_err(|e| CliError::BadInput(format!("{}: {e}", path.display())))
    }

    pub fn load_or_default(path: Option<&Path>) -> CliResult<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        let scene = self.scene.build()?;
        if self.dataset.n_views < 4 {
            return Err(CliError::BadInput(
                "dataset.n_views must be at least 4".into(),
            ));
        }
        if self.dataset.width == 0 || self.dataset.height == 0 {
            return Err(CliError::BadInput(
                "dataset width and height must be positive".into(),
            ));
        }
        if self.field.decoder_hidden.is_empty() || self.field.decoder_hidden.contains(&0) {
            return Err(CliError::BadInput(
                "field.decoder_hidden needs at least one nonzero layer".into(),
            ));
        }
        if !(self.field.init_scale >= 0.0 && self.field.initial_density > 0.0) {
            return Err(CliError::BadInput(
                "field.init_scale must be >= 0 and initial_density > 0".into(),
            ));
        }
        match self.field.kind {
            FieldKind::Nested => {
                let n = &self.field.nested;
                let bounds = CylBounds {
                    y_min: n.y_min,
                    y_max: n.y_max,
                    r_max: n.radii.last().copied().unwrap_or(0.0),
                };
                if !scene.fits(&bounds) {
                    return Err(CliError::BadInput(
                        "scene does not fit inside the cylinder bounds".into(),
                    ));
                }
            }
            FieldKind::Triplane => {
                let b = self.field.triplane.bounds;
                b.validate()?;
                let (c, r) = match scene.shape {
                    Shape::Sphere { center, radius } => (center, Vec3::new(radius, radius, radius)),
                    Shape::Torus {
                        center,
                        major,
                        minor,
                    } => (center, Vec3::new(major + minor, minor, major + minor)),
                };
                let inside = |lo: f64, hi: f64, c: f64, r: f64| c - r >= lo && c + r <= hi;
                if !(inside(b.min.x, b.max.x, c.x, r.x)
                    && inside(b.min.y, b.max.y, c.y, r.y)
                    && inside(b.min.z, b.max.z, c.z, r.z))
                {
                    return Err(CliError::BadInput(
                        "scene does not fit inside the tri-plane box".into(),
                    ));
                }
            }
        }
        self.train_config().validate()?;
        self.render.validate()?;
        Ok(())
    }

    /// Training settings with the top-level seam section and seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seam: self.seam,
            rng_seed: self.seed,
            ..self.train.clone()
        }
    }

    /// Settings used while fitting.
    pub fn train_render(&self) -> RenderConfig {
        RenderConfig {
            rng_seed: self.seed,
            ..self.render.clone()
        }
    }

    /// Settings used for evaluation and novel views: deterministic midpoint samples.
    pub fn eval_render(&self) -> RenderConfig {
        RenderConfig {
            jitter: false,
            ..self.render.clone()
        }
    }
}
