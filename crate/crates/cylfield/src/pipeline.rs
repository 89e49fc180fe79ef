//! Reusable building blocks behind the commands.

use std::io::Write;
use std::path::Path;

use cylfield_core::field::Field;
use cylfield_core::optim::{fit, psnr, FitLog, LossRecord, TrainConfig};
use cylfield_core::regularizer::seam_consistency_loss;
use cylfield_core::renderer::render_image;
use cylfield_core::scenes::{make_dataset, Dataset, Split};
use cylfield_core::RenderConfig;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{write_output, CliResult};
use crate::model::Model;
use crate::threads::Threaded;

/// The configured scene's dataset, quantized to 8 bits exactly as it would
/// be after a round trip through disk.
pub fn build_dataset(cfg: &RunConfig) -> CliResult<Dataset> {
    let scene = cfg.scene.build()?;
    let mut ds = make_dataset(&scene, &cfg.dataset)?;
    for v in &mut ds.views {
        v.image = v.image.quantized();
    }
    Ok(ds)
}

/// Fits `model` in place and advances its step counter.
pub fn fit_model(
    ds: &Dataset,
    model: &mut Model,
    train: &TrainConfig,
    render: &RenderConfig,
    workers: usize,
) -> CliResult<FitLog> {
    let every = (train.iterations / 20).max(1);
    let log = fit(
        ds,
        &mut model.field,
        &mut model.decoder,
        train,
        render,
        &Threaded::new(workers),
        |r: &LossRecord| {
            if r.iteration.is_multiple_of(every) || r.iteration + 1 == train.iterations {
                log::info!(
                    "iter {:>5}  mse {:.6}  seam {:.3e}/{:.3e}  total {:.6}",
                    r.iteration,
                    r.mse,
                    r.seam_consistency,
                    r.seam_smooth,
                    r.total
                );
            }
            log::debug!("iter {} total {}", r.iteration, r.total);
        },
    )?;
    model.step += log.records.len() as u64;
    Ok(log)
}

pub fn loss_csv(log: &FitLog) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "iteration",
        "mse",
        "seam_consistency",
        "seam_smooth",
        "total",
    ])
    .expect("in-memory write");
    for r in &log.records {
        // `{:?}` prints the shortest string that parses back to the same f64
        w.write_record([
            r.iteration.to_string(),
            format!("{:?}", r.mse),
            format!("{:?}", r.seam_consistency),
            format!("{:?}", r.seam_smooth),
            format!("{:?}", r.total),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViewScore {
    pub index: usize,
    pub split: Split,
    pub azimuth: f64,
    pub psnr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeamMetric {
    pub plane: String,
    pub seam_consistency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub views: Vec<ViewScore>,
    pub mean_psnr: f64,
    pub mean_psnr_train: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_psnr_holdout: Option<f64>,
    pub seam: Vec<SeamMetric>,
    pub seam_consistency_total: f64,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Post-training seam mismatch of every wrapping plane.
pub fn seam_metrics(model: &Model) -> CliResult<Vec<SeamMetric>> {
    let names = model.field.plane_names();
    let planes = model.field.planes();
    model
        .field
        .wrap_planes()
        .into_iter()
        .map(|i| {
            Ok(SeamMetric {
                plane: names[i].clone(),
                seam_consistency: seam_consistency_loss(&planes[i])?,
            })
        })
        .collect()
}

pub fn evaluate(
    model: &Model,
    ds: &Dataset,
    render: &RenderConfig,
    workers: usize,
) -> CliResult<EvalReport> {
    let exec = Threaded::new(workers);
    let mut views = Vec::with_capacity(ds.views.len());
    for (index, v) in ds.views.iter().enumerate() {
        let img = render_image(&model.field, &model.decoder, &v.camera, render, &exec);
        views.push(ViewScore {
            index,
            split: v.split,
            azimuth: v.azimuth,
            psnr: psnr(&img, &v.image)?,
        });
    }
    let seam = seam_metrics(model)?;
    let of = |s: Split| mean(views.iter().filter(|v| v.split == s).map(|v| v.psnr));
    Ok(EvalReport {
        mean_psnr: mean(views.iter().map(|v| v.psnr)).unwrap_or(f64::NAN),
        mean_psnr_train: of(Split::Train),
        mean_psnr_holdout: of(Split::Holdout),
        seam_consistency_total: seam.iter().map(|s| s.seam_consistency).sum(),
        seam,
        views,
    })
}

pub fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    match path {
        Some(p) => write_output(p, text.as_bytes()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| crate::error::CliError::write(Path::new("<stdout>"), e))
        }
    }
}

/// Result of fitting one configuration and scoring its holdout views.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: Model,
    pub log: FitLog,
    pub report: EvalReport,
}

pub fn fit_and_evaluate(cfg: &RunConfig, ds: &Dataset, workers: usize) -> CliResult<FitOutcome> {
    let mut model = Model::init(&cfg.field, cfg.seed)?;
    let log = fit_model(
        ds,
        &mut model,
        &cfg.train_config(),
        &cfg.train_render(),
        workers,
    )?;
    let report = evaluate(&model, ds, &cfg.eval_render(), workers)?;
    Ok(FitOutcome { model, log, report })
}
