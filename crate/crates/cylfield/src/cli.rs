use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use cylfield_core::field::Field;
use cylfield_core::geometry::orbit_camera;
use cylfield_core::optim::gradcheck_suite;
use cylfield_core::renderer::render_image;
use cylfield_core::scenes::{
    mirror_collision_experiment, MirrorConfig, MirrorResult, MirrorTarget,
};
use cylfield_core::SeamConfig;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::{FieldKind, RunConfig};
use crate::dataset::{self, CameraRecord};
use crate::error::{read_input, write_output, CliError, CliResult};
use crate::model::Model;
use crate::pipeline::{
    self, build_dataset, evaluate, fit_and_evaluate, fit_model, loss_csv, write_json,
};
use crate::ppm;
use crate::threads::Threaded;

#[derive(Debug, Parser)]
#[command(
    name = "cylfield",
    version,
    about = "Fit and render cylindrical feature-plane fields"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration; omitted sections use defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results are reproducible for a fixed count.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: u64,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    /// Same fit with and without the seam penalties.
    Seam,
    /// Single-plane regression on a circle, tri-plane `xy` vs cylinder `theta-y`.
    Mirror,
    /// Nested cylinder field vs tri-plane on the same dataset.
    Baseline,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the configured analytic scene into a dataset directory.
    MakeScene {
        #[command(flatten)]
        common: Common,
        /// Overrides `scene.palette` (`front_back` or `stripes_<m>`).
        #[arg(long)]
        palette: Option<String>,
    },
    /// Fit a field to a dataset; writes `checkpoint.cylp` and `loss.csv` under `--out`.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        /// Continue from an existing checkpoint instead of a fresh initialization.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Render novel views from a checkpoint.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Camera azimuth in radians (orbit around the scene center).
        #[arg(long, allow_hyphen_values = true)]
        azimuth: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        elevation: Option<f64>,
        /// JSON camera record, or an array of them.
        #[arg(long, conflicts_with_all = ["azimuth", "orbit"])]
        pose: Option<PathBuf>,
        /// Render an n-view turntable into the `--out` directory.
        #[arg(long, conflicts_with = "azimuth")]
        orbit: Option<usize>,
    },
    /// Score a checkpoint against a dataset; writes a JSON report.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Compare every analytic gradient against central differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Coordinates probed per parameter group.
        #[arg(long, default_value_t = 16)]
        probes: usize,
    },
    /// Run a comparison experiment and write a JSON report.
    Ablate {
        #[arg(value_enum)]
        which: Ablation,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        iterations: Option<usize>,
    },
}

fn load_config(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load_or_default(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn required(opt: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    opt.or_else(|| fallback.clone())
        .ok_or_else(|| CliError::BadInput(format!("missing {what}")))
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::MakeScene { common, palette } => {
            let mut cfg = load_config(&common)?;
            if let Some(p) = palette {
                cfg.scene.palette = p;
            }
            cfg.validate()?;
            let out = required(common.out, &cfg.paths.out, "--out directory")?;
            cmd_make_scene(&cfg, &out)
        }
        Command::Fit {
            common,
            dataset,
            iterations,
            resume,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(n) = iterations {
                cfg.train.iterations = n;
            }
            let data = required(dataset, &cfg.paths.dataset, "--dataset directory")?;
            let out = required(common.out, &cfg.paths.out, "--out directory")?;
            cmd_fit(
                &cfg,
                &data,
                &out,
                resume.as_deref(),
                common.workers as usize,
            )
        }
        Command::Render {
            common,
            checkpoint,
            azimuth,
            elevation,
            pose,
            orbit,
        } => {
            let cfg = load_config(&common)?;
            let out = required(common.out, &cfg.paths.out, "--out path")?;
            let view = match (pose, orbit) {
                (Some(p), _) => RenderRequest::Poses(p),
                (None, Some(n)) => RenderRequest::Orbit { n, elevation },
                (None, None) => RenderRequest::Single {
                    azimuth: azimuth.unwrap_or(0.0),
                    elevation,
                },
            };
            cmd_render(&cfg, &checkpoint, view, &out, common.workers as usize)
        }
        Command::Eval {
            common,
            checkpoint,
            dataset,
        } => {
            let cfg = load_config(&common)?;
            let data = required(dataset, &cfg.paths.dataset, "--dataset directory")?;
            cmd_eval(
                &cfg,
                &checkpoint,
                &data,
                common.out.as_deref(),
                common.workers as usize,
            )
        }
        Command::Gradcheck { common, probes } => {
            cmd_gradcheck(probes, common.seed.unwrap_or(0), common.out.as_deref())
        }
        Command::Ablate {
            which,
            common,
            iterations,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(n) = iterations {
                cfg.train.iterations = n;
            }
            cfg.validate()?;
            cmd_ablate(which, &cfg, common.out.as_deref(), common.workers as usize)
        }
    }
}

pub fn cmd_make_scene(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let ds = build_dataset(cfg)?;
    dataset::write(out, &cfg.scene, &cfg.dataset, &ds)?;
    log::info!(
        "wrote {} views ({} holdout) to {}",
        ds.views.len(),
        ds.holdout_views().count(),
        out.display()
    );
    Ok(())
}

pub const CHECKPOINT_FILE: &str = "checkpoint.cylp";
pub const LOSS_FILE: &str = "loss.csv";

pub fn cmd_fit(
    cfg: &RunConfig,
    data: &Path,
    out: &Path,
    resume: Option<&Path>,
    workers: usize,
) -> CliResult<()> {
    cfg.validate()?;
    let (_, ds) = dataset::read(data)?;
    let mut model = match resume {
        Some(p) => checkpoint::load(p)?,
        None => Model::init(&cfg.field, cfg.seed)?,
    };
    log::info!(
        "fitting {} parameters on {} training views",
        model.parameter_count(),
        ds.train_views().count()
    );
    let log = fit_model(
        &ds,
        &mut model,
        &cfg.train_config(),
        &cfg.train_render(),
        workers,
    )?;
    checkpoint::save(&out.join(CHECKPOINT_FILE), &model)?;
    write_output(&out.join(LOSS_FILE), &loss_csv(&log))?;
    if let Some(last) = log.last() {
        log::info!(
            "final mse {:.6} ({:.2} dB)",
            last.mse,
            cylfield_core::optim::psnr_from_mse(last.mse)
        );
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub enum RenderRequest {
    Single {
        azimuth: f64,
        elevation: Option<f64>,
    },
    Orbit {
        n: usize,
        elevation: Option<f64>,
    },
    Poses(PathBuf),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PoseFile {
    One(CameraRecord),
    Many(Vec<CameraRecord>),
}

pub fn cmd_render(
    cfg: &RunConfig,
    ckpt: &Path,
    req: RenderRequest,
    out: &Path,
    workers: usize,
) -> CliResult<()> {
    let model = checkpoint::load(ckpt)?;
    let rcfg = cfg.eval_render();
    rcfg.validate()?;
    let d = &cfg.dataset;
    let center = cfg.scene.center;
    let orbit = |az: f64, el: Option<f64>| {
        orbit_camera(
            az,
            el.unwrap_or(d.elevation),
            d.distance,
            center,
            d.fov_y,
            d.width,
            d.height,
        )
    };
    let (cameras, single) = match req {
        RenderRequest::Single { azimuth, elevation } => (vec![orbit(azimuth, elevation)?], true),
        RenderRequest::Orbit { n, elevation } => {
            if n == 0 {
                return Err(CliError::BadInput("--orbit needs at least one view".into()));
            }
            let cams = (0..n)
                .map(|k| orbit(std::f64::consts::TAU * k as f64 / n as f64, elevation))
                .collect::<Result<Vec<_>, _>>()?;
            (cams, false)
        }
        RenderRequest::Poses(p) => {
            let parsed: PoseFile = serde_json::from_slice(&read_input(&p)?)
                .map_err(|e| CliError::BadInput(format!("{}: {e}", p.display())))?;
            let recs = match parsed {
                PoseFile::One(r) => vec![r],
                PoseFile::Many(v) => v,
            };
            let single = recs.len() == 1;
            (
                recs.iter()
                    .map(|r| r.to_pose())
                    .collect::<Result<Vec<_>, _>>()?,
                single,
            )
        }
    };
    let exec = Threaded::new(workers);
    for (k, cam) in cameras.iter().enumerate() {
        let img = render_image(&model.field, &model.decoder, cam, &rcfg, &exec);
        let path = if single {
            out.to_path_buf()
        } else {
            out.join(format!("view_{k:04}.ppm"))
        };
        ppm::write(&path, &img)?;
    }
    log::info!("rendered {} view(s) to {}", cameras.len(), out.display());
    Ok(())
}

pub fn cmd_eval(
    cfg: &RunConfig,
    ckpt: &Path,
    data: &Path,
    out: Option<&Path>,
    workers: usize,
) -> CliResult<()> {
    let model = checkpoint::load(ckpt)?;
    let (_, ds) = dataset::read(data)?;
    let report = evaluate(&model, &ds, &cfg.eval_render(), workers)?;
    write_json(out, &report)
}

#[derive(Debug, Serialize)]
struct GradcheckRow {
    name: String,
    max_rel_error: f64,
    probes: usize,
    passed: bool,
}

pub fn cmd_gradcheck(probes: usize, seed: u64, out: Option<&Path>) -> CliResult<()> {
    if probes == 0 {
        return Err(CliError::BadInput("--probes must be at least 1".into()));
    }
    let suite = gradcheck_suite(probes, seed);
    let rows: Vec<GradcheckRow> = suite
        .iter()
        .map(|e| GradcheckRow {
            name: e.name.clone(),
            max_rel_error: e.report.max_rel_error,
            probes: e.report.probes,
            passed: e.passed,
        })
        .collect();
    println!(
        "{:<20} {:>14} {:>7}  result",
        "target", "max rel error", "probes"
    );
    for r in &rows {
        println!(
            "{:<20} {:>14.3e} {:>7}  {}",
            r.name,
            r.max_rel_error,
            r.probes,
            if r.passed { "pass" } else { "FAIL" }
        );
    }
    if let Some(p) = out {
        write_json(Some(p), &rows)?;
    }
    if rows.iter().all(|r| r.passed) {
        Ok(())
    } else {
        Err(CliError::Numerical("gradient check failed".into()))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeamAblation {
    pub seam_gap_with: f64,
    pub seam_gap_without: f64,
    pub holdout_psnr_with: Option<f64>,
    pub holdout_psnr_without: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MirrorAblation {
    pub sin: MirrorResult,
    pub cos: MirrorResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct RepresentationScore {
    pub parameters: usize,
    pub holdout_psnr: Option<f64>,
    pub train_psnr: Option<f64>,
    pub final_mse: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineAblation {
    pub cylinder: RepresentationScore,
    pub triplane: RepresentationScore,
}

pub fn seam_ablation(cfg: &RunConfig, workers: usize) -> CliResult<SeamAblation> {
    let ds = build_dataset(cfg)?;
    let with = fit_and_evaluate(cfg, &ds, workers)?;
    let off = RunConfig {
        seam: SeamConfig::OFF,
        ..cfg.clone()
    };
    let without = fit_and_evaluate(&off, &ds, workers)?;
    Ok(SeamAblation {
        seam_gap_with: with.report.seam_consistency_total,
        seam_gap_without: without.report.seam_consistency_total,
        holdout_psnr_with: with.report.mean_psnr_holdout,
        holdout_psnr_without: without.report.mean_psnr_holdout,
    })
}

pub fn mirror_ablation(seed: u64) -> CliResult<MirrorAblation> {
    let base = MirrorConfig {
        seed,
        ..Default::default()
    };
    Ok(MirrorAblation {
        sin: mirror_collision_experiment(&MirrorConfig {
            target: MirrorTarget::Sin,
            ..base
        })?,
        cos: mirror_collision_experiment(&MirrorConfig {
            target: MirrorTarget::Cos,
            ..base
        })?,
    })
}

pub fn baseline_ablation(cfg: &RunConfig, workers: usize) -> CliResult<BaselineAblation> {
    let ds = build_dataset(cfg)?;
    let score = |kind: FieldKind| -> CliResult<RepresentationScore> {
        let mut c = cfg.clone();
        c.field.kind = kind;
        c.validate()?;
        let o = fit_and_evaluate(&c, &ds, workers)?;
        Ok(RepresentationScore {
            parameters: o.model.field.parameter_count(),
            holdout_psnr: o.report.mean_psnr_holdout,
            train_psnr: o.report.mean_psnr_train,
            final_mse: o.log.last().map(|r| r.mse),
        })
    };
    Ok(BaselineAblation {
        cylinder: score(FieldKind::Nested)?,
        triplane: score(FieldKind::Triplane)?,
    })
}

pub fn cmd_ablate(
    which: Ablation,
    cfg: &RunConfig,
    out: Option<&Path>,
    workers: usize,
) -> CliResult<()> {
    match which {
        Ablation::Seam => write_json(out, &seam_ablation(cfg, workers)?),
        Ablation::Mirror => write_json(out, &mirror_ablation(cfg.seed)?),
        Ablation::Baseline => write_json(out, &baseline_ablation(cfg, workers)?),
    }
}

pub use pipeline::EvalReport;
