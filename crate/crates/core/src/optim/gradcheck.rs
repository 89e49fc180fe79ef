use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::{Decoder, Field, NestedCylinderField, NestedSpec, ShellMode};
use crate::geometry::{Ray, Vec3};
use crate::planes::{FeaturePlane, Uv};
use crate::regularizer::{
    seam_backward_into, seam_consistency_loss, seam_smoothness_loss, SeamConfig,
};
use crate::renderer::{render_ray, render_ray_backward, RenderConfig};

pub const GRADCHECK_EPSILON: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

/// Gradients smaller than this are compared in absolute terms.
const RELATIVE_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    /// Parameter index with the largest error.
    pub worst: Option<usize>,
    pub probes: usize,
}

/// Compares `analytic[i]` against central differences of `loss` for each
/// probed coordinate.
pub fn gradcheck<F: FnMut(&[f64]) -> f64>(
    mut loss: F,
    params: &[f64],
    analytic: &[f64],
    probes: &[usize],
    epsilon: f64,
) -> GradcheckReport {
    let mut x = params.to_vec();
    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        worst: None,
        probes: probes.len(),
    };
    for &i in probes {
        let orig = x[i];
        x[i] = orig + epsilon;
        let up = loss(&x);
        x[i] = orig - epsilon;
        let down = loss(&x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let err = relative_error(analytic[i], numeric);
        if report.worst.is_none() || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some(i);
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteEntry {
    pub name: String,
    pub report: GradcheckReport,
    pub passed: bool,
}

fn flatten_planes(planes: &[FeaturePlane<f64>]) -> Vec<f64> {
    planes.iter().flat_map(|p| p.data.iter().copied()).collect()
}

fn load_planes(planes: &mut [FeaturePlane<f64>], flat: &[f64]) {
    let mut o = 0;
    for p in planes {
        let n = p.len();
        p.data.copy_from_slice(&flat[o..o + n]);
        o += n;
    }
}

fn flatten_grads(planes: &[FeaturePlane<f64>]) -> Vec<f64> {
    planes.iter().flat_map(|p| p.grad.iter().copied()).collect()
}

fn flatten_decoder(d: &Decoder<f64>) -> Vec<f64> {
    d.layers
        .iter()
        .flat_map(|l| l.weight.iter().chain(&l.bias).copied())
        .collect()
}

fn load_decoder(d: &mut Decoder<f64>, flat: &[f64]) {
    let mut o = 0;
    for l in &mut d.layers {
        let (nw, nb) = (l.weight.len(), l.bias.len());
        l.weight.copy_from_slice(&flat[o..o + nw]);
        l.bias.copy_from_slice(&flat[o + nw..o + nw + nb]);
        o += nw + nb;
    }
}

fn flatten_decoder_grad(d: &Decoder<f64>) -> Vec<f64> {
    d.grad
        .layers
        .iter()
        .flat_map(|(w, b)| w.iter().chain(b).copied())
        .collect()
}

/// Picks up to `k` indices from `range` with nonzero analytic gradient.
fn pick<R: Rng>(
    rng: &mut R,
    analytic: &[f64],
    range: core::ops::Range<usize>,
    k: usize,
) -> Vec<usize> {
    let mut live: Vec<usize> = range.filter(|&i| analytic[i] != 0.0).collect();
    live.shuffle(rng);
    live.truncate(k);
    live
}

fn small_field(rng: &mut ChaCha8Rng, channels: usize) -> NestedCylinderField<f64> {
    let spec = NestedSpec {
        radii: vec![0.35, 0.7, 1.0],
        finest_width: 24,
        shell_height: 10,
        min_width: 6,
        rtheta_res: [16, 8],
        yr_res: [10, 8],
        channels,
        y_min: -1.0,
        y_max: 1.0,
        shell_mode: ShellMode::Sum,
    };
    let mut f = NestedCylinderField::zeros(&spec).expect("valid spec");
    f.init_uniform(rng, 0.5);
    f
}

fn random_decoder(rng: &mut ChaCha8Rng, channels: usize) -> Decoder<f64> {
    let mut d = Decoder::init(channels, &[16, 16], 0.5, rng);
    for l in &mut d.layers {
        for b in &mut l.bias {
            *b = rng.gen_range(-0.3..0.3);
        }
    }
    d
}

fn entry(name: &str, report: GradcheckReport) -> SuiteEntry {
    SuiteEntry {
        name: name.into(),
        passed: report.max_rel_error <= GRADCHECK_TOLERANCE,
        report,
    }
}

fn check_bilinear(rng: &mut ChaCha8Rng, probes: usize) -> SuiteEntry {
    let c = 3;
    let data: Vec<f64> = (0..8 * 8 * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let plane = FeaturePlane::from_data(8, 8, c, true, data).expect("valid plane");
    let w: Vec<f64> = (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let uv = Uv::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
    let n = plane.len();
    let mut params = plane.data.clone();
    params.extend([uv.u, uv.v]);
    let mut analytic = vec![0.0; n];
    let (du, dv) = plane.backward_into(uv, &w, &mut analytic);
    analytic.extend([du, dv]);
    let mut idx = pick(rng, &analytic, 0..n, probes);
    idx.extend([n, n + 1]);
    let mut scratch = plane.clone();
    let report = gradcheck(
        |x| {
            scratch.data.copy_from_slice(&x[..n]);
            let s = scratch.sample(Uv::new(x[n], x[n + 1]));
            s.iter().zip(&w).map(|(a, b)| a * b).sum()
        },
        &params,
        &analytic,
        &idx,
        GRADCHECK_EPSILON,
    );
    entry("bilinear_sampling", report)
}

fn check_nested(rng: &mut ChaCha8Rng, probes: usize) -> SuiteEntry {
    let c = 4;
    let mut field = small_field(rng, c);
    let points: Vec<Vec3> = (0..6)
        .map(|_| {
            Vec3::new(
                rng.gen_range(-1.1..1.1),
                rng.gen_range(-1.1..1.1),
                rng.gen_range(-1.1..1.1),
            )
        })
        .collect();
    let weights: Vec<Vec<f64>> = points
        .iter()
        .map(|_| (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    for (p, w) in points.iter().zip(&weights) {
        field.nested_sample_backward(*p, w);
    }
    let params = flatten_planes(field.planes());
    let analytic = flatten_grads(field.planes());
    let idx = pick(rng, &analytic, 0..params.len(), probes);
    let mut scratch = field.clone();
    let report = gradcheck(
        |x| {
            load_planes(scratch.planes_mut(), x);
            points
                .iter()
                .zip(&weights)
                .map(|(p, w)| {
                    scratch
                        .nested_sample(*p)
                        .iter()
                        .zip(w)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                })
                .sum()
        },
        &params,
        &analytic,
        &idx,
        GRADCHECK_EPSILON,
    );
    entry("nested_sample", report)
}

fn check_decoder(rng: &mut ChaCha8Rng, probes: usize) -> SuiteEntry {
    let c = 8;
    let mut dec = random_decoder(rng, c);
    let feature: Vec<f64> = (0..c).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let us = rng.gen_range(-1.0..1.0);
    let urgb = [
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    ];
    let fg = dec.decode_backward(&feature, us, urgb);
    let mut params = feature.clone();
    params.extend(flatten_decoder(&dec));
    let mut analytic = fg;
    analytic.extend(flatten_decoder_grad(&dec));
    let mut idx = pick(rng, &analytic, 0..c, c);
    idx.extend(pick(rng, &analytic, c..params.len(), probes));
    let mut scratch = dec.clone();
    let report = gradcheck(
        |x| {
            load_decoder(&mut scratch, &x[c..]);
            let (s, rgb) = scratch.decode(&x[..c]);
            us * s + urgb[0] * rgb[0] + urgb[1] * rgb[1] + urgb[2] * rgb[2]
        },
        &params,
        &analytic,
        &idx,
        GRADCHECK_EPSILON,
    );
    entry("decoder", report)
}

fn check_render(rng: &mut ChaCha8Rng, probes: usize) -> SuiteEntry {
    let c = 4;
    let mut field = small_field(rng, c);
    let mut dec = random_decoder(rng, c);
    let cfg = RenderConfig {
        samples_per_ray: 12,
        t_near: 1.8,
        t_far: 4.2,
        background: [1.0, 1.0, 1.0],
        jitter: true,
        rng_seed: 5,
    };
    let origin = Vec3::new(3.0, 0.3, 0.4);
    let target = Vec3::new(
        rng.gen_range(-0.3..0.3),
        rng.gen_range(-0.3..0.3),
        rng.gen_range(-0.3..0.3),
    );
    let ray = Ray {
        origin,
        direction: (target - origin).normalized(),
    };
    let goal = [0.2, 0.6, 0.1];
    let rgb = render_ray(&field, &dec, &ray, &cfg);
    let upstream = core::array::from_fn(|k| 2.0 * (rgb[k] - goal[k]));
    render_ray_backward(&mut field, &mut dec, &ray, &cfg, upstream);
    let np = field.parameter_count();
    let mut params = flatten_planes(field.planes());
    params.extend(flatten_decoder(&dec));
    let mut analytic = flatten_grads(field.planes());
    analytic.extend(flatten_decoder_grad(&dec));
    let mut idx = pick(rng, &analytic, 0..np, probes);
    idx.extend(pick(rng, &analytic, np..params.len(), probes));
    let (mut sf, mut sd) = (field.clone(), dec.clone());
    let report = gradcheck(
        |x| {
            load_planes(sf.planes_mut(), &x[..np]);
            load_decoder(&mut sd, &x[np..]);
            let out = render_ray(&sf, &sd, &ray, &cfg);
            (0..3).map(|k| (out[k] - goal[k]).powi(2)).sum()
        },
        &params,
        &analytic,
        &idx,
        GRADCHECK_EPSILON,
    );
    entry("render_ray", report)
}

fn check_seam(rng: &mut ChaCha8Rng, probes: usize, smooth: bool) -> SuiteEntry {
    let (w, h, c) = (12, 5, 3);
    let data: Vec<f64> = (0..w * h * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let plane = FeaturePlane::from_data(w, h, c, true, data).expect("valid plane");
    let cfg = if smooth {
        SeamConfig {
            lambda_consistency: 0.0,
            lambda_smooth: 1.0,
            band_k: 3,
        }
    } else {
        SeamConfig {
            lambda_consistency: 1.0,
            lambda_smooth: 0.0,
            band_k: 1,
        }
    };
    let mut analytic = vec![0.0; plane.len()];
    seam_backward_into(&plane, &cfg, 1.0, &mut analytic).expect("wrap plane");
    let idx = pick(rng, &analytic, 0..plane.len(), probes);
    let mut scratch = plane.clone();
    let report = gradcheck(
        |x| {
            scratch.data.copy_from_slice(x);
            if smooth {
                seam_smoothness_loss(&scratch, cfg.band_k).expect("wrap plane")
            } else {
                seam_consistency_loss(&scratch).expect("wrap plane")
            }
        },
        &plane.data,
        &analytic,
        &idx,
        GRADCHECK_EPSILON,
    );
    entry(
        if smooth {
            "seam_smoothness"
        } else {
            "seam_consistency"
        },
        report,
    )
}

/// Runs every analytic adjoint against central differences at 64-bit.
/// `probes` coordinates are checked per parameter group.
pub fn gradcheck_suite(probes: usize, seed: u64) -> Vec<SuiteEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        check_bilinear(&mut rng, probes),
        check_nested(&mut rng, probes),
        check_decoder(&mut rng, probes),
        check_render(&mut rng, probes),
        check_seam(&mut rng, probes, false),
        check_seam(&mut rng, probes, true),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let p = [0.3, -1.2, 2.5, 0.01];
        let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
        let r = gradcheck(
            |x| x.iter().map(|v| v * v).sum(),
            &p,
            &g,
            &[0, 1, 2, 3],
            1e-5,
        );
        assert!(r.max_rel_error < 1e-9, "{r:?}");
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let p = [0.3, -1.2, 2.5];
        let g: Vec<f64> = p.iter().map(|x| 2.0 * x * 1.01).collect();
        let r = gradcheck(|x| x.iter().map(|v| v * v).sum(), &p, &g, &[0, 1, 2], 1e-5);
        assert!(r.max_rel_error >= 9e-3);
    }

    #[test]
    fn suite_passes() {
        for e in gradcheck_suite(20, 1) {
            assert!(e.passed, "{}: {:?}", e.name, e.report);
            assert!(e.report.probes > 0);
        }
    }
}
