//! Self-describing binary checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "CYLP"  u32 version  u32 kind (1 nested, 2 tri-plane)
//! nested:    u32 shell_mode (0 sum, 1 radial-lerp)  f64 y_min  f64 y_max  u32 n  f64 radii[n]
//! tri-plane: f64 min[3]  f64 max[3]
//! u32 planes, then per plane: u32 W  u32 H  u32 C  u8 wrap  f32 data[H*W*C]
//! u32 layers, then per layer: u32 inputs  u32 outputs  f32 weight[outputs*inputs]  f32 bias[outputs]
//! u64 step
//! ```
//!
//! Plane data is stored at training precision, so save/load/save is byte-identical.

use std::path::Path;

use cylfield_core::field::{BoxBounds, Decoder, Dense, NestedCylinderField, TriPlaneField};
use cylfield_core::{FeaturePlane, ShellMode, Vec3};

use crate::error::{read_input, write_output, CliError, CliResult};
use crate::model::{AnyField, Model};

pub const MAGIC: &[u8; 4] = b"CYLP";
pub const VERSION: u32 = 1;
const KIND_NESTED: u32 = 1;
const KIND_TRIPLANE: u32 = 2;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend(
            u32::try_from(v)
                .expect("dimension fits in u32")
                .to_le_bytes(),
        );
    }
    fn f64(&mut self, v: f64) {
        self.0.extend(v.to_le_bytes());
    }
    fn f32s(&mut self, v: &[f32]) {
        self.0.reserve(v.len() * 4);
        for x in v {
            self.0.extend(x.to_le_bytes());
        }
    }
    fn plane(&mut self, p: &FeaturePlane<f32>) {
        self.u32(p.width);
        self.u32(p.height);
        self.u32(p.channels);
        self.u8(p.wrap_u.into());
        self.f32s(&p.data);
    }
}

pub fn encode(model: &Model) -> Vec<u8> {
    let mut w = Writer(MAGIC.to_vec());
    w.u32(VERSION as usize);
    match &model.field {
        AnyField::Nested(f) => {
            w.u32(KIND_NESTED as usize);
            w.u32(match f.shell_mode() {
                ShellMode::Sum => 0,
                ShellMode::RadialLerp => 1,
            });
            let b = f.bounds();
            w.f64(b.y_min);
            w.f64(b.y_max);
            w.u32(f.radii().len());
            f.radii().iter().for_each(|&r| w.f64(r));
        }
        AnyField::TriPlane(f) => {
            w.u32(KIND_TRIPLANE as usize);
            let b = f.bounds();
            b.min
                .to_array()
                .into_iter()
                .chain(b.max.to_array())
                .for_each(|v| w.f64(v));
        }
    }
    let planes = cylfield_core::Field::planes(&model.field);
    w.u32(planes.len());
    planes.iter().for_each(|p| w.plane(p));
    w.u32(model.decoder.layers.len());
    for l in &model.decoder.layers {
        w.u32(l.inputs);
        w.u32(l.outputs);
        w.f32s(&l.weight);
        w.f32s(&l.bias);
    }
    w.0.extend(model.step.to_le_bytes());
    w.0
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or("unexpected end of file")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, String> {
        let raw = self.take(n.checked_mul(4).ok_or("length overflow")?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn plane(&mut self) -> Result<FeaturePlane<f32>, String> {
        let (w, h, c) = (self.u32()?, self.u32()?, self.u32()?);
        let wrap = match self.u8()? {
            0 => false,
            1 => true,
            b => return Err(format!("bad wrap flag {b}")),
        };
        let n = w
            .checked_mul(h)
            .and_then(|x| x.checked_mul(c))
            .ok_or("plane size overflow")?;
        let data = self.f32s(n)?;
        FeaturePlane::from_data(w, h, c, wrap, data).map_err(|e| e.to_string())
    }
}

pub fn decode(bytes: &[u8]) -> Result<Model, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).ok() != Some(MAGIC.as_slice()) {
        return Err("bad magic (not a cylfield checkpoint)".into());
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(format!("unsupported format version {version}"));
    }
    let kind = r.u32()? as u32;
    let field = match kind {
        KIND_NESTED => {
            let mode = match r.u32()? {
                0 => ShellMode::Sum,
                1 => ShellMode::RadialLerp,
                m => return Err(format!("bad shell mode {m}")),
            };
            let (y_min, y_max) = (r.f64()?, r.f64()?);
            let n = r.u32()?;
            if n > bytes.len() {
                return Err("implausible shell count".into());
            }
            let radii = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
            let count = r.u32()?;
            if count != n + 2 {
                return Err(format!("expected {} planes, found {count}", n + 2));
            }
            let shells = (0..n).map(|_| r.plane()).collect::<Result<Vec<_>, _>>()?;
            let rtheta = r.plane()?;
            let yr = r.plane()?;
            AnyField::Nested(
                NestedCylinderField::from_parts(radii, shells, rtheta, yr, y_min, y_max, mode)
                    .map_err(|e| e.to_string())?,
            )
        }
        KIND_TRIPLANE => {
            let mut v = [0.0; 6];
            for x in &mut v {
                *x = r.f64()?;
            }
            let bounds = BoxBounds {
                min: Vec3::new(v[0], v[1], v[2]),
                max: Vec3::new(v[3], v[4], v[5]),
            };
            if r.u32()? != 3 {
                return Err("tri-plane checkpoints hold exactly 3 planes".into());
            }
            let planes = [r.plane()?, r.plane()?, r.plane()?];
            AnyField::TriPlane(
                TriPlaneField::from_parts(planes, bounds).map_err(|e| e.to_string())?,
            )
        }
        k => return Err(format!("unknown field kind {k}")),
    };
    let layers = r.u32()?;
    if layers > bytes.len() {
        return Err("implausible decoder depth".into());
    }
    let mut dense = Vec::with_capacity(layers);
    for _ in 0..layers {
        let (inputs, outputs) = (r.u32()?, r.u32()?);
        let weight = r.f32s(inputs.checked_mul(outputs).ok_or("layer size overflow")?)?;
        let bias = r.f32s(outputs)?;
        dense.push(Dense {
            inputs,
            outputs,
            weight,
            bias,
        });
    }
    let decoder = Decoder::from_layers(dense).map_err(|e| e.to_string())?;
    if decoder.inputs() != cylfield_core::Field::channels(&field) {
        return Err("decoder input width does not match field channels".into());
    }
    let step = r.u64()?;
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok(Model {
        field,
        decoder,
        step,
    })
}

pub fn save(path: &Path, model: &Model) -> CliResult<()> {
    write_output(path, &encode(model))
}

pub fn load(path: &Path) -> CliResult<Model> {
    decode(&read_input(path)?).map_err(|reason| CliError::corrupt(path, reason))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{FieldConfig, FieldKind};
    use cylfield_core::field::NestedSpec;

    fn models() -> Vec<Model> {
        let nested = FieldConfig {
            nested: NestedSpec {
                finest_width: 16,
                shell_height: 4,
                rtheta_res: [8, 4],
                yr_res: [4, 4],
                channels: 3,
                ..Default::default()
            },
            decoder_hidden: vec![5],
            ..Default::default()
        };
        let mut lerp = nested.clone();
        lerp.nested.shell_mode = ShellMode::RadialLerp;
        let mut tri = FieldConfig {
            kind: FieldKind::Triplane,
            decoder_hidden: vec![4, 4],
            ..Default::default()
        };
        tri.triplane.resolution = 5;
        tri.triplane.channels = 2;
        [nested, lerp, tri]
            .iter()
            .enumerate()
            .map(|(i, c)| Model {
                step: 17 * i as u64,
                ..Model::init(c, i as u64).unwrap()
            })
            .collect()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        for m in models() {
            let bytes = encode(&m);
            let back = decode(&bytes).unwrap();
            assert_eq!(back, m);
            assert_eq!(encode(&back), bytes);
        }
    }

    #[test]
    fn non_finite_values_survive_bit_exactly() {
        let mut m = models().remove(0);
        if let AnyField::Nested(f) = &mut m.field {
            f.shells_mut()[0].data[0] = f32::NAN;
            f.yr_mut().data[1] = f32::NEG_INFINITY;
        }
        let bytes = encode(&m);
        assert_eq!(encode(&decode(&bytes).unwrap()), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode(&models().remove(0));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).unwrap_err().contains("magic"));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(decode(&bad).unwrap_err().contains("version"));
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(decode(&long).unwrap_err().contains("trailing"));
        for cut in [0, 3, 8, 12, 40, bytes.len() / 2] {
            assert!(decode(&bytes[..cut]).is_err());
        }
    }
}
