use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use dsolocate::model::{digest, load_checkpoint, ModelParams};
use dsolocate::pipeline::{
    baseline_contours, baseline_from_starless, detect, draw_contours, ContourSet, RunStats,
};
use dsolocate::sky_image::SkyImage;
use dsolocate::synthgen::PATCH_SIZE;
use dsolocate::{Error, Result};

use crate::config::{require_file, RunConfig};
use crate::{create_dir, write_json};

const CONTOUR_RGB: [f32; 3] = [0.0, 1.0, 0.0];

/// Files written for one input image.
#[derive(Clone, Debug, Serialize)]
pub struct DetectOutput {
    pub image: PathBuf,
    pub annotated: PathBuf,
    pub heatmap: Option<PathBuf>,
    pub contours: PathBuf,
    pub stats: PathBuf,
    pub run: RunStats,
}

/// Runs detection (or the baseline with `baseline_mode`) on every input image.
///
/// For an input `name.png` the outputs under `config.out` are `name.annotated.png`,
/// `name.heatmap.png` + `name.heatmap.json`, `name.contours.json` and `name.stats.json`.
pub fn cmd_detect(config: &RunConfig) -> Result<Vec<DetectOutput>> {
    config.validate()?;
    let paths = &config.paths;
    if paths.images.is_empty() {
        return Err(Error::Config(
            "detect needs at least one input image".into(),
        ));
    }
    for p in &paths.images {
        require_file(Some(p), "input image")?;
    }
    if paths.starless.is_some() {
        if !config.baseline_mode {
            return Err(Error::Config(
                "--starless only applies with --baseline".into(),
            ));
        }
        if paths.images.len() != 1 {
            return Err(Error::Config(
                "--starless takes exactly one input image".into(),
            ));
        }
        require_file(paths.starless.as_ref(), "starless image")?;
    }
    let params = if config.baseline_mode {
        None
    } else {
        Some(load_checkpoint(require_file(
            paths.checkpoint.as_ref(),
            "checkpoint",
        )?)?)
    };
    create_dir(&config.out)?;
    paths
        .images
        .iter()
        .map(|p| detect_one(config, p, params.as_ref()))
        .collect()
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "image".to_string(), |s| s.to_string_lossy().into_owned())
}

fn detect_one(
    config: &RunConfig,
    path: &Path,
    params: Option<&ModelParams>,
) -> Result<DetectOutput> {
    let image = SkyImage::load(path)?;
    let name = stem(path);
    let out = |suffix: &str| config.out.join(format!("{name}.{suffix}"));
    let (w, h) = (image.width(), image.height());

    let (contours, run, heatmap, settings): (ContourSet, RunStats, Option<PathBuf>, Value) =
        match params {
            Some(params) => {
                let dcfg = config.effective_detect();
                let (sw, sh) = (w as f64 * dcfg.scale, h as f64 * dcfg.scale);
                if sw < PATCH_SIZE as f64 || sh < PATCH_SIZE as f64 {
                    return Err(Error::Config(format!(
                    "{}: {w}x{h} at scale {} is {sw:.0}x{sh:.0}, smaller than one {PATCH_SIZE}x{PATCH_SIZE} patch",
                    path.display(),
                    dcfg.scale
                )));
                }
                let (hm, contours, run) = detect(&image, params, &dcfg)?;
                let hm_path = out("heatmap.png");
                hm.save(&hm_path, &out("heatmap.json"))?;
                let settings = json!({"detect": dcfg, "checkpoint_digest": digest(params), "fallback": hm.meta.fallback});
                (contours, run, Some(hm_path), settings)
            }
            None => {
                let start = Instant::now();
                let contours = match &config.paths.starless {
                    Some(s) => baseline_from_starless(&SkyImage::load(s)?, &config.baseline)?,
                    None => baseline_contours(&image, &config.baseline)?,
                };
                let run = RunStats {
                    width: w,
                    height: h,
                    processed_width: w,
                    processed_height: h,
                    slot_count: 0,
                    selected_count: 0,
                    forward_calls: 0,
                    attribution_calls: 0,
                    contour_count: contours.len(),
                    wall_time_s: start.elapsed().as_secs_f64(),
                    probabilities: Vec::new(),
                };
                (
                    contours,
                    run,
                    None,
                    json!({"baseline": config.baseline, "starless": config.paths.starless}),
                )
            }
        };

    let annotated = out("annotated.png");
    draw_contours(&image, &contours, CONTOUR_RGB).save_png16(&annotated)?;
    let contours_path = out("contours.json");
    contours.to_annotation(&name).save(&contours_path)?;
    let stats_path = out("stats.json");
    write_json(
        &stats_path,
        &json!({
            "seed": config.seed,
            "image": path.display().to_string(),
            "mode": if params.is_some() { "xrai" } else { "baseline" },
            "config": settings,
            "stats": run,
        }),
    )?;
    Ok(DetectOutput {
        image: path.to_path_buf(),
        annotated,
        heatmap,
        contours: contours_path,
        stats: stats_path,
        run,
    })
}
