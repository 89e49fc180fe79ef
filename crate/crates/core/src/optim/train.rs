use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::{AdamConfig, AdamState};
use crate::error::{invalid, Error, Result};
use crate::exec::{chunk_ranges, Executor};
use crate::field::{Decoder, Field};
use crate::real::Real;
use crate::regularizer::{field_seam_backward, field_seam_totals, SeamConfig, SeamTotals};
use crate::renderer::{backward_taped, render_ray_taped, RayTape, RenderConfig};
use crate::scenes::Dataset;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub lr_planes: f64,
    pub lr_decoder: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub iterations: usize,
    pub rays_per_batch: usize,
    pub rng_seed: u64,
    /// Serialized as its own top-level section by front ends.
    #[cfg_attr(feature = "serde", serde(skip))]
    pub seam: SeamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_planes: 1e-2,
            lr_decoder: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            iterations: 2000,
            rays_per_batch: 256,
            rng_seed: 0,
            seam: SeamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_planes > 0.0 && self.lr_decoder > 0.0) {
            return Err(invalid("learning rates must be positive"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(invalid("Adam betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(invalid("Adam eps must be positive"));
        }
        if self.rays_per_batch == 0 {
            return Err(invalid("rays_per_batch must be at least 1"));
        }
        self.seam.validate()
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossRecord {
    pub iteration: usize,
    pub mse: f64,
    /// Unweighted consistency loss summed over wrap planes.
    pub seam_consistency: f64,
    /// Unweighted smoothness loss summed over wrap planes.
    pub seam_smooth: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitLog {
    pub records: Vec<LossRecord>,
}

impl FitLog {
    pub fn last(&self) -> Option<&LossRecord> {
        self.records.last()
    }
}

fn has_non_finite<T: Real>(t: &[T]) -> bool {
    t.iter().any(|x| !x.is_finite())
}

/// Fits planes and decoder to the training views by minimizing per-ray MSE
/// plus the weighted seam penalties. Each iteration draws `rays_per_batch`
/// random `(view, pixel)` pairs from a generator seeded by `rng_seed`.
///
/// The batch is split into one contiguous chunk per executor worker; each
/// worker accumulates into its own buffers and the results are summed in
/// worker order, so runs are bit-reproducible at a fixed worker count.
pub fn fit<T, F, E>(
    dataset: &Dataset,
    field: &mut F,
    decoder: &mut Decoder<T>,
    cfg: &TrainConfig,
    render: &RenderConfig,
    exec: &E,
    mut progress: impl FnMut(&LossRecord),
) -> Result<FitLog>
where
    T: Real,
    F: Field<T>,
    E: Executor,
{
    cfg.validate()?;
    render.validate()?;
    let views: Vec<_> = dataset.train_views().collect();
    if views.is_empty() {
        return Err(invalid("dataset has no training views"));
    }
    if decoder.inputs() != field.channels() {
        return Err(Error::ShapeMismatch(format!(
            "decoder expects {} channels, field has {}",
            decoder.inputs(),
            field.channels()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut plane_adam = AdamState::<T>::new();
    let mut decoder_adam = AdamState::<T>::new();
    let names = field.plane_names();
    let mut log = FitLog::default();
    let count = (cfg.rays_per_batch * 3) as f64;
    let has_wrap = !field.wrap_planes().is_empty();

    for iteration in 0..cfg.iterations {
        let batch: Vec<(usize, usize, usize)> = (0..cfg.rays_per_batch)
            .map(|_| {
                let v = rng.gen_range(0..views.len());
                let cam = &views[v].camera;
                (v, rng.gen_range(0..cam.width), rng.gen_range(0..cam.height))
            })
            .collect();
        let mut rcfg = render.clone();
        rcfg.rng_seed = render.rng_seed.wrapping_add(iteration as u64);

        let chunks = chunk_ranges(batch.len(), exec.workers());
        let field_ref: &F = field;
        let decoder_ref: &Decoder<T> = decoder;
        let parts = exec.run(chunks.len(), |w| {
            let mut pg = field_ref.grad_buffers();
            let mut dg = decoder_ref.grad_buffer();
            let mut tape = RayTape::new(decoder_ref, rcfg.samples_per_ray);
            let mut sq = 0.0f64;
            for &(v, col, row) in &batch[chunks[w].clone()] {
                let view = views[v];
                let ray = view.camera.pixel_ray(col, row);
                let rgb = render_ray_taped(field_ref, decoder_ref, &ray, &rcfg, &mut tape);
                let target = view.image.pixel(col, row);
                let mut up = [T::zero(); 3];
                for k in 0..3 {
                    let d = rgb[k].f64() - target[k];
                    sq += d * d;
                    up[k] = T::of(2.0 * d / count);
                }
                backward_taped(field_ref, decoder_ref, &tape, up, &mut pg, &mut dg);
            }
            (sq, pg, dg)
        });

        field.zero_grad();
        decoder.zero_grad();
        let mut sq = 0.0;
        for (s, pg, dg) in &parts {
            sq += s;
            field.accumulate_grads(pg);
            decoder.grad.add(dg);
        }
        let mse = sq / count;

        let seam = if has_wrap {
            field_seam_totals(&*field, cfg.seam.band_k)?
        } else {
            SeamTotals::default()
        };
        field_seam_backward(field, &cfg.seam)?;
        let record = LossRecord {
            iteration,
            mse,
            seam_consistency: seam.consistency,
            seam_smooth: seam.smoothness,
            total: mse + seam.weighted(&cfg.seam),
        };

        // Parameters first: an infinite weight can still yield a finite loss.
        let non_finite = |tensor: alloc::string::String| Error::NonFinite { tensor, iteration };
        for (plane, name) in field.planes().iter().zip(&names) {
            if has_non_finite(&plane.data) {
                return Err(non_finite(format!("plane {name}")));
            }
        }
        for (i, l) in decoder.layers.iter().enumerate() {
            if has_non_finite(&l.weight) || has_non_finite(&l.bias) {
                return Err(non_finite(format!("decoder layer {i}")));
            }
        }
        if !record.total.is_finite() {
            return Err(non_finite("loss".into()));
        }
        for (plane, name) in field.planes().iter().zip(&names) {
            if has_non_finite(&plane.grad) {
                return Err(non_finite(format!("plane {name} gradient")));
            }
        }
        for (i, (w, b)) in decoder.grad.layers.iter().enumerate() {
            if has_non_finite(w) || has_non_finite(b) {
                return Err(non_finite(format!("decoder layer {i} gradient")));
            }
        }

        {
            let mut params: Vec<&mut [T]> = Vec::new();
            let mut grads: Vec<&[T]> = Vec::new();
            for plane in field.planes_mut() {
                params.push(plane.data.as_mut_slice());
                grads.push(plane.grad.as_slice());
            }
            plane_adam.step(&mut params, &grads, &cfg.adam(cfg.lr_planes))?;
        }
        {
            let (mut params, grads) = decoder.params_and_grads();
            decoder_adam.step(&mut params, &grads, &cfg.adam(cfg.lr_decoder))?;
        }

        progress(&record);
        log.records.push(record);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Serial;
    use crate::field::{NestedCylinderField, NestedSpec, ShellMode};
    use crate::scenes::{make_dataset, DatasetSpec, Palette, Shape, SyntheticScene};
    use alloc::vec;

    fn tiny_setup() -> (Dataset, NestedCylinderField<f64>, Decoder<f64>) {
        let scene = SyntheticScene {
            shape: Shape::Sphere {
                center: crate::geometry::Vec3::ZERO,
                radius: 0.6,
            },
            palette: Palette::FrontBack,
            background: [1.0; 3],
        };
        let ds = make_dataset(
            &scene,
            &DatasetSpec {
                n_views: 4,
                width: 6,
                height: 6,
                elevation: 0.2,
                distance: 3.0,
                fov_y: 0.6,
                holdout_every: 4,
            },
        )
        .unwrap();
        let spec = NestedSpec {
            radii: vec![0.5, 1.0],
            finest_width: 16,
            shell_height: 8,
            min_width: 8,
            rtheta_res: [8, 8],
            yr_res: [8, 8],
            channels: 4,
            y_min: -1.0,
            y_max: 1.0,
            shell_mode: ShellMode::Sum,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut field = NestedCylinderField::zeros(&spec).unwrap();
        field.init_uniform(&mut rng, 1e-2);
        let decoder = Decoder::init(4, &[8, 8], 0.1, &mut rng);
        (ds, field, decoder)
    }

    #[test]
    fn zero_iterations_change_nothing() {
        let (ds, mut field, mut dec) = tiny_setup();
        let (f0, d0) = (field.clone(), dec.clone());
        let cfg = TrainConfig {
            iterations: 0,
            ..Default::default()
        };
        let log = fit(
            &ds,
            &mut field,
            &mut dec,
            &cfg,
            &RenderConfig::default(),
            &Serial,
            |_| {},
        )
        .unwrap();
        assert!(log.records.is_empty());
        assert_eq!(field, f0);
        assert_eq!(dec, d0);
    }

    #[test]
    fn loss_decreases_and_is_deterministic() {
        let cfg = TrainConfig {
            iterations: 60,
            rays_per_batch: 32,
            lr_decoder: 1e-2,
            ..Default::default()
        };
        let rcfg = RenderConfig {
            samples_per_ray: 8,
            jitter: true,
            ..Default::default()
        };
        let run = || {
            let (ds, mut field, mut dec) = tiny_setup();
            fit(&ds, &mut field, &mut dec, &cfg, &rcfg, &Serial, |_| {}).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        let head: f64 = a.records[..10].iter().map(|r| r.mse).sum();
        let tail: f64 = a.records[50..].iter().map(|r| r.mse).sum();
        assert!(tail < head, "{head} -> {tail}");
    }

    #[test]
    fn background_targets_stay_at_fixed_point() {
        let (mut ds, mut field, _) = tiny_setup();
        for v in &mut ds.views {
            v.image = crate::renderer::Image::filled(v.image.width, v.image.height, [1.0; 3]);
        }
        let mut dec = Decoder::<f64>::init(4, &[8, 8], 1e-6, &mut ChaCha8Rng::seed_from_u64(1));
        let cfg = TrainConfig {
            iterations: 20,
            rays_per_batch: 16,
            ..Default::default()
        };
        let log = fit(
            &ds,
            &mut field,
            &mut dec,
            &cfg,
            &RenderConfig::default(),
            &Serial,
            |_| {},
        )
        .unwrap();
        assert!(log.records.iter().all(|r| r.mse < 1e-6), "{:?}", log.last());
    }

    #[test]
    fn nan_aborts_with_tensor_name() {
        let (ds, mut field, mut dec) = tiny_setup();
        field.shells_mut()[1].data[3] = f64::NAN;
        let cfg = TrainConfig {
            iterations: 5,
            rays_per_batch: 8,
            ..Default::default()
        };
        let err = fit(
            &ds,
            &mut field,
            &mut dec,
            &cfg,
            &RenderConfig::default(),
            &Serial,
            |_| {},
        )
        .unwrap_err();
        match err {
            Error::NonFinite { tensor, iteration } => {
                assert_eq!(iteration, 0);
                assert!(tensor.contains("shell1"), "{tensor}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn infinite_weight_is_caught_even_with_finite_loss() {
        let (ds, mut field, mut dec) = tiny_setup();
        dec.layers[1].bias[0] = f64::INFINITY;
        let cfg = TrainConfig {
            iterations: 3,
            rays_per_batch: 8,
            ..Default::default()
        };
        match fit(
            &ds,
            &mut field,
            &mut dec,
            &cfg,
            &RenderConfig::default(),
            &Serial,
            |_| {},
        ) {
            Err(Error::NonFinite { tensor, .. }) => assert_eq!(tensor, "decoder layer 1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_empty_training_split() {
        let (mut ds, mut field, mut dec) = tiny_setup();
        ds.views.clear();
        let err = fit(
            &ds,
            &mut field,
            &mut dec,
            &TrainConfig::default(),
            &RenderConfig::default(),
            &Serial,
            |_| {},
        );
        assert!(err.is_err());
    }
}
