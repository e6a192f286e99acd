use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use dsolocate::Result;

use crate::config::RunConfig;
use crate::{
    cmd_bench, cmd_detect, cmd_evaluate, cmd_generate, cmd_train, exit_code, training_echo,
    EXIT_CONFIG, EXIT_OK,
};

#[derive(Debug, Parser)]
#[command(
    name = "dsolocate",
    version,
    about = "Deep-sky object detection and localization in telescope images"
)]
pub struct Cli {
    /// Root random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Concurrent patch workers.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// JSON run configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic patch dataset, its manifest and evaluation scenes.
    Generate(GenerateArgs),
    /// Train the patch classifier from a manifest.
    Train(TrainArgs),
    /// Localize objects in full frames.
    Detect(DetectArgs),
    /// Score prediction annotations against truth annotations.
    Evaluate(EvaluateArgs),
    /// Compare patch skipping and downscaling on the manifest's scenes.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Number of patches.
    #[arg(long)]
    pub n: Option<usize>,
    /// Instrument preset (stellina, vespera).
    #[arg(long)]
    pub profile: Option<String>,
    /// Number of full evaluation scenes.
    #[arg(long)]
    pub scenes: Option<usize>,
    #[arg(long)]
    pub scene_width: Option<usize>,
    #[arg(long)]
    pub scene_height: Option<usize>,
    #[arg(long)]
    pub objects_min: Option<usize>,
    #[arg(long)]
    pub objects_max: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Stop after this many epochs without validation improvement.
    #[arg(long)]
    pub early_stop: Option<usize>,
    #[arg(long)]
    pub no_augment: bool,
}

#[derive(Debug, Args)]
pub struct DetectFlags {
    /// Minimum P(dso_present) for a patch to be attributed.
    #[arg(long, alias = "threshold")]
    pub select_threshold: Option<f64>,
    #[arg(long)]
    pub percentile: Option<f64>,
    #[arg(long)]
    pub ig_steps: Option<usize>,
    #[arg(long)]
    pub overlap: Option<usize>,
    /// Resize factor applied before tiling.
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub min_area: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Input PNG or TIFF frames.
    pub images: Vec<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Use the star-removal thresholding baseline instead of the classifier.
    #[arg(long)]
    pub baseline: bool,
    /// Pre-computed starless frame for the baseline.
    #[arg(long)]
    pub starless: Option<PathBuf>,
    #[command(flatten)]
    pub detect: DetectFlags,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub truths: Option<PathBuf>,
    #[arg(long)]
    pub iou: Option<f64>,
    /// Keep class labels instead of collapsing them.
    #[arg(long)]
    pub per_class: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub detect: DetectFlags,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl DetectFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        let d = &mut cfg.detect;
        set(&mut d.threshold, self.select_threshold);
        set(&mut d.percentile, self.percentile);
        set(&mut d.xrai.ig_steps, self.ig_steps);
        set(&mut d.overlap, self.overlap);
        set(&mut d.scale, self.scale);
        set(&mut d.min_area, self.min_area);
    }
}

impl Cli {
    /// Defaults, then the config file, then flags.
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.jobs, self.jobs);
        set(&mut cfg.out, self.out.clone());
        match &self.command {
            Command::Generate(a) => {
                let g = &mut cfg.generate;
                set(&mut g.n, a.n);
                set(
                    &mut g.profile,
                    a.profile.clone().map(crate::ProfileChoice::Preset),
                );
                set(&mut g.scenes, a.scenes);
                set(&mut g.scene_width, a.scene_width);
                set(&mut g.scene_height, a.scene_height);
                set(&mut g.objects_min, a.objects_min);
                set(&mut g.objects_max, a.objects_max);
            }
            Command::Train(a) => {
                set(&mut cfg.paths.manifest, a.manifest.clone().map(Some));
                let t = &mut cfg.train;
                set(&mut t.epochs, a.epochs);
                set(&mut t.learning_rate, a.learning_rate);
                set(&mut t.batch_size, a.batch_size);
                set(&mut t.early_stop, a.early_stop.map(Some));
                if a.no_augment {
                    t.augment = false;
                }
            }
            Command::Detect(a) => {
                if !a.images.is_empty() {
                    cfg.paths.images = a.images.clone();
                }
                set(&mut cfg.paths.checkpoint, a.checkpoint.clone().map(Some));
                set(&mut cfg.paths.starless, a.starless.clone().map(Some));
                if a.baseline {
                    cfg.baseline_mode = true;
                }
                a.detect.apply(&mut cfg);
            }
            Command::Evaluate(a) => {
                set(&mut cfg.paths.predictions, a.predictions.clone().map(Some));
                set(&mut cfg.paths.truths, a.truths.clone().map(Some));
                set(&mut cfg.evaluate.iou_threshold, a.iou);
                if a.per_class {
                    cfg.evaluate.class_agnostic = false;
                }
            }
            Command::Bench(a) => {
                set(&mut cfg.paths.checkpoint, a.checkpoint.clone().map(Some));
                set(&mut cfg.paths.manifest, a.manifest.clone().map(Some));
                a.detect.apply(&mut cfg);
            }
        }
        Ok(cfg)
    }

    fn execute(&self) -> Result<()> {
        let cfg = self.run_config()?;
        cfg.validate()?;
        match &self.command {
            Command::Generate(_) => {
                let m = cmd_generate(&cfg)?;
                println!(
                    "{}",
                    serde_json::json!({"seed": m.seed, "counts": m.counts, "scenes": m.scenes.len(), "out": cfg.out})
                );
            }
            Command::Train(_) => {
                println!("{}", training_echo(&cfg));
                let t = cmd_train(&cfg)?;
                println!(
                    "{}",
                    serde_json::json!({
                        "digest": t.digest,
                        "epochs_run": t.history.epochs.len(),
                        "best_epoch": t.history.best_epoch,
                        "val_accuracy": t.val.as_ref().map(|r| r.accuracy),
                        "test_accuracy": t.test.as_ref().map(|r| r.accuracy),
                    })
                );
            }
            Command::Detect(_) => {
                for d in cmd_detect(&cfg)? {
                    println!(
                        "{}",
                        serde_json::json!({
                            "image": d.image,
                            "contours": d.run.contour_count,
                            "slots": d.run.slot_count,
                            "attribution_calls": d.run.attribution_calls,
                            "wall_time_s": d.run.wall_time_s,
                        })
                    );
                }
            }
            Command::Evaluate(_) => print!("{}", cmd_evaluate(&cfg)?.to_table()),
            Command::Bench(_) => print!("{}", cmd_bench(&cfg)?.to_table()),
        }
        Ok(())
    }
}

/// Parses `args` (program name first), runs the subcommand, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.execute() {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
