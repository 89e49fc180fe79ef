//! Dataset directories: `images/view_####.ppm` plus `manifest.json`.

use std::path::Path;

use cylfield_core::geometry::{CameraPose, Mat3};
use cylfield_core::scenes::{Dataset, DatasetSpec, Split, View};
use cylfield_core::Vec3;
use serde::{Deserialize, Serialize};

use crate::config::SceneConfig;
use crate::error::{read_input, write_output, CliError, CliResult};
use crate::ppm;

pub const MANIFEST: &str = "manifest.json";
pub const FORMAT: u32 = 1;

/// Camera pose as stored on disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    /// Camera-to-world rotation, row-major; columns are right, up and backward.
    pub rotation: [f64; 9],
    pub position: [f64; 3],
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
}

impl From<&CameraPose> for CameraRecord {
    fn from(c: &CameraPose) -> Self {
        CameraRecord {
            rotation: c.rotation.to_row_major(),
            position: c.position.to_array(),
            fov_y: c.fov_y,
            width: c.width,
            height: c.height,
        }
    }
}

impl CameraRecord {
    pub fn to_pose(&self) -> cylfield_core::Result<CameraPose> {
        CameraPose::new(
            Vec3::from(self.position),
            Mat3::from_row_major(self.rotation),
            self.fov_y,
            self.width,
            self.height,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewRecord {
    pub file: String,
    pub azimuth: f64,
    pub elevation: f64,
    pub split: Split,
    pub camera: CameraRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: u32,
    pub scene: SceneConfig,
    pub spec: DatasetSpec,
    pub views: Vec<ViewRecord>,
}

pub fn view_file(index: usize) -> String {
    format!("images/view_{index:04}.ppm")
}

pub fn write(
    dir: &Path,
    scene: &SceneConfig,
    spec: &DatasetSpec,
    ds: &Dataset,
) -> CliResult<Manifest> {
    let mut views = Vec::with_capacity(ds.views.len());
    for (i, v) in ds.views.iter().enumerate() {
        let file = view_file(i);
        ppm::write(&dir.join(&file), &v.image)?;
        views.push(ViewRecord {
            file,
            azimuth: v.azimuth,
            elevation: v.elevation,
            split: v.split,
            camera: (&v.camera).into(),
        });
    }
    let manifest = Manifest {
        format: FORMAT,
        scene: scene.clone(),
        spec: *spec,
        views,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_output(&dir.join(MANIFEST), text.as_bytes())?;
    Ok(manifest)
}

pub fn read(dir: &Path) -> CliResult<(Manifest, Dataset)> {
    let path = dir.join(MANIFEST);
    let bytes = read_input(&path)?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes).map_err(|e| CliError::corrupt(&path, e.to_string()))?;
    if manifest.format != FORMAT {
        return Err(CliError::corrupt(
            &path,
            format!("unsupported manifest format {}", manifest.format),
        ));
    }
    let mut views = Vec::with_capacity(manifest.views.len());
    for rec in &manifest.views {
        let camera = rec
            .camera
            .to_pose()
            .map_err(|e| CliError::corrupt(&path, format!("{}: {e}", rec.file)))?;
        let img_path = dir.join(&rec.file);
        let image = ppm::read(&img_path)?;
        if (image.width, image.height) != (camera.width, camera.height) {
            return Err(CliError::corrupt(
                &img_path,
                "image size does not match its camera",
            ));
        }
        views.push(View {
            image,
            camera,
            azimuth: rec.azimuth,
            elevation: rec.elevation,
            split: rec.split,
        });
    }
    Ok((manifest, Dataset { views }))
}
