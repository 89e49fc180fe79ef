//! Seam penalties for planes whose `u` axis wraps around `theta = +-pi`.
//!
//! The consistency term compares the last column (just below `theta = pi`)
//! with the first (just above `theta = -pi`). The smoothness term is a squared
//! total variation over horizontally adjacent pairs inside a band of `2k`
//! columns straddling the seam: columns `W-k .. W-1` followed by `0 .. k-1`.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::field::Field;
use crate::planes::FeaturePlane;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SeamConfig {
    pub lambda_consistency: f64,
    pub lambda_smooth: f64,
    pub band_k: usize,
}

impl Default for SeamConfig {
    fn default() -> Self {
        SeamConfig {
            lambda_consistency: 1e-2,
            lambda_smooth: 1e-3,
            band_k: 2,
        }
    }
}

impl SeamConfig {
    pub const OFF: SeamConfig = SeamConfig {
        lambda_consistency: 0.0,
        lambda_smooth: 0.0,
        band_k: 1,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_consistency >= 0.0 && self.lambda_smooth >= 0.0) {
            return Err(invalid("seam weights must be nonnegative"));
        }
        if self.band_k == 0 {
            return Err(invalid("seam band_k must be at least 1"));
        }
        Ok(())
    }

    pub fn is_off(&self) -> bool {
        self.lambda_consistency == 0.0 && self.lambda_smooth == 0.0
    }
}

fn require_wrap<T>(plane: &FeaturePlane<T>) -> Result<()> {
    if plane.wrap_u {
        Ok(())
    } else {
        Err(Error::NotWrapPlane)
    }
}

/// Column pairs `(left, right)` adjacent across or beside the seam.
fn band_pairs(width: usize, k: usize) -> Vec<(usize, usize)> {
    (0..2 * k - 1)
        .map(|i| ((width - k + i) % width, (width - k + i + 1) % width))
        .collect()
}

fn check_band<T>(plane: &FeaturePlane<T>, k: usize) -> Result<()> {
    if k == 0 || 2 * k > plane.width {
        return Err(invalid("band_k must satisfy 1 <= band_k <= W/2"));
    }
    Ok(())
}

/// Mean over pairs, rows and channels of the squared column difference.
fn pair_loss<T: Real>(plane: &FeaturePlane<T>, pairs: &[(usize, usize)]) -> f64 {
    let mut sum = 0.0;
    for row in 0..plane.height {
        for &(a, b) in pairs {
            for (x, y) in plane.texel(a, row).iter().zip(plane.texel(b, row)) {
                let d = x.f64() - y.f64();
                sum += d * d;
            }
        }
    }
    sum / (pairs.len() * plane.height * plane.channels) as f64
}

fn pair_backward<T: Real>(
    plane: &FeaturePlane<T>,
    pairs: &[(usize, usize)],
    scale: f64,
    grad: &mut [T],
) {
    let norm = (pairs.len() * plane.height * plane.channels) as f64;
    let s = T::of(2.0 * scale / norm);
    let c = plane.channels;
    for row in 0..plane.height {
        for &(a, b) in pairs {
            let (oa, ob) = (plane.offset(a, row), plane.offset(b, row));
            for ch in 0..c {
                let d = s * (plane.data[oa + ch] - plane.data[ob + ch]);
                grad[oa + ch] += d;
                grad[ob + ch] -= d;
            }
        }
    }
}

pub fn seam_consistency_loss<T: Real>(plane: &FeaturePlane<T>) -> Result<f64> {
    require_wrap(plane)?;
    Ok(pair_loss(plane, &[(plane.width - 1, 0)]))
}

pub fn seam_smoothness_loss<T: Real>(plane: &FeaturePlane<T>, band_k: usize) -> Result<f64> {
    require_wrap(plane)?;
    check_band(plane, band_k)?;
    Ok(pair_loss(plane, &band_pairs(plane.width, band_k)))
}

/// Adds `upstream * (lambda_c * dLc + lambda_s * dLs)` into `grad`.
pub fn seam_backward_into<T: Real>(
    plane: &FeaturePlane<T>,
    cfg: &SeamConfig,
    upstream: f64,
    grad: &mut [T],
) -> Result<()> {
    require_wrap(plane)?;
    check_band(plane, cfg.band_k)?;
    if cfg.lambda_consistency != 0.0 {
        pair_backward(
            plane,
            &[(plane.width - 1, 0)],
            upstream * cfg.lambda_consistency,
            grad,
        );
    }
    if cfg.lambda_smooth != 0.0 {
        pair_backward(
            plane,
            &band_pairs(plane.width, cfg.band_k),
            upstream * cfg.lambda_smooth,
            grad,
        );
    }
    Ok(())
}

/// Accumulates the weighted seam gradients into `plane.grad`.
pub fn seam_losses_backward<T: Real>(
    plane: &mut FeaturePlane<T>,
    cfg: &SeamConfig,
    upstream: f64,
) -> Result<()> {
    let mut grad = core::mem::take(&mut plane.grad);
    let r = seam_backward_into(plane, cfg, upstream, &mut grad);
    plane.grad = grad;
    r
}

/// Unweighted seam losses summed over a field's wrap planes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SeamTotals {
    pub consistency: f64,
    pub smoothness: f64,
}

impl SeamTotals {
    pub fn weighted(&self, cfg: &SeamConfig) -> f64 {
        cfg.lambda_consistency * self.consistency + cfg.lambda_smooth * self.smoothness
    }
}

pub fn field_seam_totals<T: Real, F: Field<T> + ?Sized>(
    field: &F,
    band_k: usize,
) -> Result<SeamTotals> {
    let mut t = SeamTotals::default();
    for i in field.wrap_planes() {
        let p = &field.planes()[i];
        t.consistency += seam_consistency_loss(p)?;
        t.smoothness += seam_smoothness_loss(p, band_k)?;
    }
    Ok(t)
}

/// Adds weighted seam gradients for every wrap plane into the planes' `grad`.
pub fn field_seam_backward<T: Real, F: Field<T> + ?Sized>(
    field: &mut F,
    cfg: &SeamConfig,
) -> Result<()> {
    if cfg.is_off() {
        return Ok(());
    }
    for i in field.wrap_planes() {
        seam_losses_backward(&mut field.planes_mut()[i], cfg, 1.0)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plane(w: usize, h: usize, c: usize, seed: u64) -> FeaturePlane<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeaturePlane::from_data(
            w,
            h,
            c,
            true,
            (0..w * h * c).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn set_column(p: &mut FeaturePlane<f64>, col: usize, v: f64) {
        for row in 0..p.height {
            p.texel_mut(col, row).fill(v);
        }
    }

    #[test]
    fn band_pairs_straddle_seam() {
        assert_eq!(band_pairs(8, 1), vec![(7, 0)]);
        assert_eq!(band_pairs(8, 2), vec![(6, 7), (7, 0), (0, 1)]);
    }

    #[test]
    fn consistency_examples() {
        let mut p = random_plane(6, 3, 2, 1);
        let first: Vec<f64> = (0..3).flat_map(|r| p.texel(0, r).to_vec()).collect();
        for row in 0..3 {
            let v = first[row * 2..row * 2 + 2].to_vec();
            p.texel_mut(5, row).copy_from_slice(&v);
        }
        assert_eq!(seam_consistency_loss(&p).unwrap(), 0.0);

        set_column(&mut p, 0, 0.25);
        set_column(&mut p, 5, -1.5);
        assert!((seam_consistency_loss(&p).unwrap() - 1.75f64.powi(2)).abs() < 1e-15);

        // swapping the columns leaves the loss unchanged
        set_column(&mut p, 0, -1.5);
        set_column(&mut p, 5, 0.25);
        assert!((seam_consistency_loss(&p).unwrap() - 1.75f64.powi(2)).abs() < 1e-15);
    }

    #[test]
    fn non_wrap_plane_is_rejected() {
        let p = FeaturePlane::<f64>::zeros(4, 4, 1, false).unwrap();
        assert_eq!(seam_consistency_loss(&p), Err(Error::NotWrapPlane));
        assert_eq!(seam_smoothness_loss(&p, 1), Err(Error::NotWrapPlane));
        let mut p = p;
        assert_eq!(
            seam_losses_backward(&mut p, &SeamConfig::default(), 1.0),
            Err(Error::NotWrapPlane)
        );
    }

    #[test]
    fn smoothness_examples() {
        let p = FeaturePlane::filled(8, 3, 2, true, 0.4f64).unwrap();
        assert_eq!(seam_smoothness_loss(&p, 2).unwrap(), 0.0);

        // step of height h across the seam only
        let h = 0.3;
        let mut p = FeaturePlane::filled(8, 3, 2, true, 1.0f64).unwrap();
        for col in 4..8 {
            set_column(&mut p, col, 1.0 + h);
        }
        assert!((seam_smoothness_loss(&p, 1).unwrap() - h * h).abs() < 1e-15);

        let q = random_plane(8, 3, 2, 4);
        let mut shifted = q.clone();
        shifted.data.iter_mut().for_each(|x| *x += 7.0);
        let (a, b) = (
            seam_smoothness_loss(&q, 2).unwrap(),
            seam_smoothness_loss(&shifted, 2).unwrap(),
        );
        assert!((a - b).abs() < 1e-12);
        assert!(seam_smoothness_loss(&q, 5).is_err());
    }

    #[test]
    fn consistency_gradient_closed_form() {
        let (a, b) = (0.9, -0.2);
        let mut p = FeaturePlane::filled(5, 2, 3, true, 0.0f64).unwrap();
        set_column(&mut p, 4, a);
        set_column(&mut p, 0, b);
        let cfg = SeamConfig {
            lambda_consistency: 1.0,
            lambda_smooth: 0.0,
            band_k: 1,
        };
        seam_losses_backward(&mut p, &cfg, 1.0).unwrap();
        let norm = (2 * 3) as f64;
        for row in 0..2 {
            for ch in 0..3 {
                assert!((p.grad[p.offset(4, row) + ch] - 2.0 * (a - b) / norm).abs() < 1e-15);
                assert!((p.grad[p.offset(0, row) + ch] + 2.0 * (a - b) / norm).abs() < 1e-15);
            }
        }
        // identical seam columns: zero gradient
        let mut q = FeaturePlane::filled(5, 2, 3, true, 0.6f64).unwrap();
        seam_losses_backward(&mut q, &cfg, 1.0).unwrap();
        assert!(q.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = random_plane(10, 4, 3, 2);
        let cfg = SeamConfig {
            lambda_consistency: 0.7,
            lambda_smooth: 1.3,
            band_k: 3,
        };
        let total = |p: &FeaturePlane<f64>| {
            cfg.lambda_consistency * seam_consistency_loss(p).unwrap()
                + cfg.lambda_smooth * seam_smoothness_loss(p, cfg.band_k).unwrap()
        };
        let mut grad = vec![0.0; p.len()];
        seam_backward_into(&p, &cfg, 1.0, &mut grad).unwrap();
        let eps = 1e-5;
        for i in 0..p.len() {
            let mut q = p.clone();
            q.data[i] += eps;
            let up = total(&q);
            q.data[i] -= 2.0 * eps;
            let n = (up - total(&q)) / (2.0 * eps);
            let err = (grad[i] - n).abs() / grad[i].abs().max(n.abs()).max(1e-6);
            assert!(
                err < 1e-8 || (grad[i] == 0.0 && n.abs() < 1e-10),
                "texel {i}: {} vs {n}",
                grad[i]
            );
        }
    }

    #[test]
    fn gradient_is_lambda_linear() {
        let p = random_plane(8, 3, 2, 9);
        let cfg = SeamConfig {
            lambda_consistency: 0.2,
            lambda_smooth: 0.05,
            band_k: 2,
        };
        let double = SeamConfig {
            lambda_consistency: 0.4,
            lambda_smooth: 0.1,
            band_k: 2,
        };
        let mut g1 = vec![0.0; p.len()];
        let mut g2 = vec![0.0; p.len()];
        seam_backward_into(&p, &cfg, 1.0, &mut g1).unwrap();
        seam_backward_into(&p, &double, 1.0, &mut g2).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn one_gradient_step_decreases_consistency() {
        let mut p = random_plane(8, 4, 2, 13);
        let cfg = SeamConfig {
            lambda_consistency: 1.0,
            lambda_smooth: 0.0,
            band_k: 1,
        };
        let before = seam_consistency_loss(&p).unwrap();
        seam_losses_backward(&mut p, &cfg, 1.0).unwrap();
        let g = p.grad.clone();
        p.data.iter_mut().zip(&g).for_each(|(x, g)| *x -= 0.5 * g);
        assert!(seam_consistency_loss(&p).unwrap() < before);
    }
}
