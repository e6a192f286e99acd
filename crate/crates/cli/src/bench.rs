use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use dsolocate::evaluation::{evaluate, Annotation, EvalConfig};
use dsolocate::model::{digest, load_checkpoint};
use dsolocate::pipeline::{baseline_contours, detect, DetectConfig};
use dsolocate::sky_image::SkyImage;
use dsolocate::{Error, Result};

use crate::config::{require_file, RunConfig};
use crate::generate::load_manifest;
use crate::{create_dir, write_json};

pub const BENCH_THRESHOLDS: [f64; 2] = [0.0, 0.5];
pub const BENCH_SCALES: [f64; 2] = [1.0, 0.5];

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub threshold: f64,
    pub scale: f64,
    pub slot_count: usize,
    pub selected_count: usize,
    pub attribution_calls: usize,
    pub wall_time_s: f64,
    pub precision: f64,
    pub recall: f64,
    pub map: f64,
    /// Against the threshold 0, scale 1 row.
    pub map_delta: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub seed: u64,
    pub checkpoint_digest: String,
    pub scenes: usize,
    pub detect: DetectConfig,
    pub rows: Vec<BenchRow>,
    pub baseline_map: f64,
    pub baseline_precision: f64,
    pub baseline_recall: f64,
}

impl BenchReport {
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:>9} {:>6} {:>6} {:>8} {:>6} {:>9} {:>7} {:>7}\n",
            "threshold", "scale", "slots", "selected", "calls", "wall_s", "mAP", "delta"
        );
        for r in &self.rows {
            s += &format!(
                "{:>9.2} {:>6.2} {:>6} {:>8} {:>6} {:>9.2} {:>7.4} {:>+7.4}\n",
                r.threshold,
                r.scale,
                r.slot_count,
                r.selected_count,
                r.attribution_calls,
                r.wall_time_s,
                r.map,
                r.map_delta
            );
        }
        s += &format!("baseline mAP {:.4}\n", self.baseline_map);
        s
    }
}

fn load_scenes(manifest_path: &Path) -> Result<Vec<(SkyImage, Annotation)>> {
    let manifest = load_manifest(manifest_path)?;
    if manifest.scenes.is_empty() {
        return Err(Error::Config(format!(
            "{} lists no scenes",
            manifest_path.display()
        )));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    manifest
        .scenes
        .iter()
        .map(|s| {
            let truth = Annotation::load_all(&base.join(&s.annotation))?;
            let truth = truth.into_iter().next().ok_or_else(|| Error::Format {
                path: base.join(&s.annotation),
                reason: "empty annotation file".into(),
            })?;
            Ok((SkyImage::load(&base.join(&s.image))?, truth))
        })
        .collect()
}

/// Detection over the manifest's scenes at every (threshold, scale) setting; writes `bench.json`.
pub fn cmd_bench(config: &RunConfig) -> Result<BenchReport> {
    config.validate()?;
    let params = load_checkpoint(require_file(
        config.paths.checkpoint.as_ref(),
        "checkpoint",
    )?)?;
    let scenes = load_scenes(require_file(config.paths.manifest.as_ref(), "manifest")?)?;
    let truths: Vec<Annotation> = scenes.iter().map(|(_, t)| t.clone()).collect();
    let eval_cfg = EvalConfig {
        class_agnostic: true,
        ..config.evaluate.clone()
    };
    let base_cfg = config.effective_detect();

    let mut rows: Vec<BenchRow> = Vec::new();
    for &scale in &BENCH_SCALES {
        for &threshold in &BENCH_THRESHOLDS {
            let dcfg = DetectConfig {
                threshold,
                scale,
                ..base_cfg.clone()
            };
            let start = Instant::now();
            let (mut slots, mut selected, mut calls) = (0, 0, 0);
            let mut preds = Vec::with_capacity(scenes.len());
            for (img, truth) in &scenes {
                let (_, contours, run) = detect(img, &params, &dcfg)?;
                slots += run.slot_count;
                selected += run.selected_count;
                calls += run.attribution_calls;
                preds.push(contours.to_annotation(&truth.image));
            }
            let wall = start.elapsed().as_secs_f64();
            let rep = evaluate(&preds, &truths, &eval_cfg)?;
            log::info!(
                "threshold {threshold} scale {scale}: {calls} calls, mAP {:.4}",
                rep.map
            );
            rows.push(BenchRow {
                threshold,
                scale,
                slot_count: slots,
                selected_count: selected,
                attribution_calls: calls,
                wall_time_s: wall,
                precision: rep.precision,
                recall: rep.recall,
                map: rep.map,
                map_delta: 0.0,
            });
        }
    }
    let reference = rows[0].map;
    for r in &mut rows {
        r.map_delta = r.map - reference;
    }

    let base_preds = scenes
        .iter()
        .map(|(img, truth)| {
            Ok(baseline_contours(img, &config.baseline)?.to_annotation(&truth.image))
        })
        .collect::<Result<Vec<_>>>()?;
    let base = evaluate(&base_preds, &truths, &eval_cfg)?;

    let report = BenchReport {
        seed: config.seed,
        checkpoint_digest: digest(&params),
        scenes: scenes.len(),
        detect: base_cfg,
        rows,
        baseline_map: base.map,
        baseline_precision: base.precision,
        baseline_recall: base.recall,
    };
    create_dir(&config.out)?;
    write_json(&config.out.join("bench.json"), &report)?;
    Ok(report)
}
