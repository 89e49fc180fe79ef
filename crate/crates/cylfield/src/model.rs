use cylfield_core::field::{Decoder, Field, NestedCylinderField, TriPlaneField};
use cylfield_core::{FeaturePlane, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{FieldConfig, FieldKind};
use crate::error::CliResult;

/// Either field representation, at training precision.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyField {
    Nested(NestedCylinderField<f32>),
    TriPlane(TriPlaneField<f32>),
}

macro_rules! each {
    ($self:expr, $f:ident => $body:expr) => {
        match $self {
            AnyField::Nested($f) => $body,
            AnyField::TriPlane($f) => $body,
        }
    };
}

impl Field<f32> for AnyField {
    fn channels(&self) -> usize {
        each!(self, f => f.channels())
    }

    fn planes(&self) -> &[FeaturePlane<f32>] {
        each!(self, f => f.planes())
    }

    fn planes_mut(&mut self) -> &mut [FeaturePlane<f32>] {
        each!(self, f => f.planes_mut())
    }

    fn plane_names(&self) -> Vec<String> {
        each!(self, f => f.plane_names())
    }

    fn sample_into(&self, p: Vec3, out: &mut [f32]) {
        each!(self, f => f.sample_into(p, out))
    }

    fn backward_into(&self, p: Vec3, upstream: &[f32], grads: &mut [Vec<f32>]) {
        each!(self, f => f.backward_into(p, upstream, grads))
    }
}

/// A field, its decoder and the number of optimizer steps taken so far.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub field: AnyField,
    pub decoder: Decoder<f32>,
    pub step: u64,
}

impl Model {
    /// Deterministic initialization: planes first, then decoder, from one seeded stream.
    pub fn init(cfg: &FieldConfig, seed: u64) -> CliResult<Model> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut field = match cfg.kind {
            FieldKind::Nested => AnyField::Nested(NestedCylinderField::zeros(&cfg.nested)?),
            FieldKind::Triplane => AnyField::TriPlane(TriPlaneField::zeros(&cfg.triplane)?),
        };
        init_planes(&mut field, &mut rng, cfg.init_scale);
        let decoder = Decoder::init(
            field.channels(),
            &cfg.decoder_hidden,
            cfg.initial_density,
            &mut rng,
        );
        Ok(Model {
            field,
            decoder,
            step: 0,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.field.parameter_count() + self.decoder.parameter_count()
    }
}

fn init_planes<R: Rng>(field: &mut AnyField, rng: &mut R, scale: f64) {
    each!(field, f => f.init_uniform(rng, scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded() {
        let cfg = FieldConfig::default();
        let a = Model::init(&cfg, 4).unwrap();
        assert_eq!(a, Model::init(&cfg, 4).unwrap());
        assert_ne!(a, Model::init(&cfg, 5).unwrap());
        let max = a
            .field
            .planes()
            .iter()
            .flat_map(|p| &p.data)
            .fold(0.0f32, |m, v| m.max(v.abs()));
        assert!(max > 0.0 && max <= 1e-2);
    }

    #[test]
    fn enum_delegates_to_the_wrapped_field() {
        let cfg = FieldConfig {
            kind: FieldKind::Triplane,
            ..Default::default()
        };
        let m = Model::init(&cfg, 0).unwrap();
        assert_eq!(m.field.plane_names(), ["xy", "xz", "yz"]);
        let AnyField::TriPlane(inner) = &m.field else {
            panic!()
        };
        let p = Vec3::new(0.2, -0.4, 0.1);
        assert_eq!(m.field.sample(p), inner.sample(p));
    }
}
