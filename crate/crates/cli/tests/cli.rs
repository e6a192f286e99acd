use std::path::{Path, PathBuf};

use dsolocate::evaluation::Annotation;
use dsolocate::geometry::Polygon;
use dsolocate::model::{save_checkpoint, Architecture, ModelParams};
use dsolocate::sky_image::SkyImage;
use dsolocate_cli::{
    cmd_bench, cmd_detect, cmd_evaluate, cmd_generate, cmd_train, load_manifest, run,
    training_echo, RunConfig, EXIT_CONFIG, EXIT_IO, EXIT_OK,
};

fn small_generate(out: &Path, n: usize, scenes: usize) -> RunConfig {
    let mut cfg = RunConfig {
        seed: 7,
        out: out.to_path_buf(),
        ..Default::default()
    };
    cfg.generate.n = n;
    cfg.generate.scenes = scenes;
    cfg.generate.scene_width = 448;
    cfg.generate.scene_height = 448;
    cfg
}

fn random_checkpoint(dir: &Path) -> PathBuf {
    let path = dir.join("random.ckpt");
    save_checkpoint(
        &ModelParams::new(Architecture::desk_scale(), 1).unwrap(),
        &path,
    )
    .unwrap();
    path
}

fn quick_detect(cfg: &mut RunConfig) {
    cfg.detect.xrai.ig_steps = 2;
}

#[test]
fn generate_100_splits_80_10_10() {
    let dir = tempfile::tempdir().unwrap();
    let m = cmd_generate(&small_generate(dir.path(), 100, 0)).unwrap();
    assert_eq!((m.counts.train, m.counts.val, m.counts.test), (80, 10, 10));
    assert_eq!(m.counts.present, 50);
    assert_eq!(m.seed, 7);
    for p in &m.patches {
        assert!(dir.path().join(&p.path).is_file(), "{}", p.path);
    }
}

#[test]
fn generate_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cmd_generate(&small_generate(a.path(), 20, 1)).unwrap();
    cmd_generate(&small_generate(b.path(), 20, 1)).unwrap();
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(
        read(a.path(), "manifest.json"),
        read(b.path(), "manifest.json")
    );
    assert_eq!(
        read(a.path(), "scenes/scene_000.png"),
        read(b.path(), "scenes/scene_000.png")
    );
    let m = load_manifest(&a.path().join("manifest.json")).unwrap();
    assert_eq!(m.scenes.len(), 1);
}

#[test]
fn default_training_echo() {
    let echo = training_echo(&RunConfig::default());
    assert_eq!(echo["learning_rate"], 0.001);
    assert_eq!(echo["epochs"], 50);
    assert_eq!(echo["batch_size"], 16);
    assert_eq!(echo["optimizer"], "adam");
}

#[test]
fn one_epoch_gives_one_history_entry() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    cmd_generate(&small_generate(&data, 20, 0)).unwrap();
    let mut cfg = RunConfig {
        seed: 3,
        out: dir.path().join("model"),
        ..Default::default()
    };
    cfg.paths.manifest = Some(data.join("manifest.json"));
    cfg.train.epochs = 1;
    let t = cmd_train(&cfg).unwrap();
    assert_eq!(t.history.epochs.len(), 1);
    let progress = std::fs::read_to_string(cfg.out.join("progress.jsonl")).unwrap();
    assert_eq!(progress.lines().count(), 1);
    assert!(progress.contains("val_accuracy"));
    assert!(cfg.out.join("model.ckpt").is_file());
    assert!(cfg.out.join("history.json").is_file());
}

#[test]
fn exit_codes_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(run(["dsolocate", "train", "--out", out]), EXIT_CONFIG);
    let missing = dir.path().join("nope.json");
    assert_eq!(
        run([
            "dsolocate",
            "train",
            "--out",
            out,
            "--manifest",
            missing.to_str().unwrap()
        ]),
        EXIT_IO
    );
    assert_eq!(run(["dsolocate", "frobnicate"]), EXIT_CONFIG);
    assert_eq!(
        run(["dsolocate", "generate", "--n", "3", "--out", out]),
        EXIT_CONFIG
    );
    assert_eq!(run(["dsolocate", "--help"]), EXIT_OK);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.json");
    std::fs::write(&file, r#"{"seed": 5, "generate": {"n": 30, "scenes": 0}}"#).unwrap();
    let out = dir.path().join("o");
    let code = run([
        "dsolocate",
        "--config",
        file.to_str().unwrap(),
        "--seed",
        "6",
        "--out",
        out.to_str().unwrap(),
        "generate",
    ]);
    assert_eq!(code, EXIT_OK);
    let m = load_manifest(&out.join("manifest.json")).unwrap();
    assert_eq!(m.seed, 6);
    assert_eq!(m.patches.len(), 30);
}

#[test]
fn detect_threshold_zero_attributes_every_slot() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("frame.png");
    SkyImage::filled(448, 300, [0.1, 0.1, 0.12])
        .save_png16(&img)
        .unwrap();
    let mut cfg = RunConfig {
        out: dir.path().join("det"),
        ..Default::default()
    };
    cfg.paths.images = vec![img];
    cfg.paths.checkpoint = Some(random_checkpoint(dir.path()));
    cfg.detect.threshold = 0.0;
    quick_detect(&mut cfg);
    let d = cmd_detect(&cfg).unwrap().remove(0);
    assert_eq!(d.run.slot_count, 4);
    assert_eq!(d.run.attribution_calls, d.run.slot_count);
    for f in [
        "frame.annotated.png",
        "frame.heatmap.png",
        "frame.heatmap.json",
        "frame.contours.json",
        "frame.stats.json",
    ] {
        assert!(cfg.out.join(f).is_file(), "{f}");
    }
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.stats).unwrap()).unwrap();
    assert_eq!(stats["seed"], 0);
    assert_eq!(stats["config"]["detect"]["threshold"], 0.0);
    Annotation::load_all(&d.contours).unwrap();
}

#[test]
fn detect_baseline_makes_no_attribution_calls() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("frame.png");
    SkyImage::filled(300, 300, [0.1; 3])
        .save_png16(&img)
        .unwrap();
    let mut cfg = RunConfig {
        out: dir.path().join("det"),
        baseline_mode: true,
        ..Default::default()
    };
    cfg.paths.images = vec![img];
    let d = cmd_detect(&cfg).unwrap().remove(0);
    assert_eq!(d.run.attribution_calls, 0);
    assert!(d.heatmap.is_none());
}

#[test]
fn detect_rejects_frames_below_one_patch() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("small.png");
    SkyImage::filled(300, 300, [0.1; 3])
        .save_png16(&img)
        .unwrap();
    let mut cfg = RunConfig {
        out: dir.path().join("det"),
        ..Default::default()
    };
    cfg.paths.images = vec![img];
    cfg.paths.checkpoint = Some(random_checkpoint(dir.path()));
    cfg.detect.scale = 0.5;
    assert!(matches!(cmd_detect(&cfg), Err(dsolocate::Error::Config(_))));
}

fn square(x: f64, y: f64, s: f64) -> Polygon {
    Polygon::new(vec![[x, y], [x + s, y], [x + s, y + s], [x, y + s]])
}

#[test]
fn evaluate_identity_and_empty() {
    let dir = tempfile::tempdir().unwrap();
    let mut truth = Annotation::empty("a", 100, 100);
    truth.objects.push(dsolocate::evaluation::AnnotatedObject {
        label: "galaxy".into(),
        polygon: square(10.0, 10.0, 20.0),
        confidence: None,
        difficult: None,
    });
    let truths = dir.path().join("truth.json");
    truth.save(&truths).unwrap();
    let mut cfg = RunConfig {
        out: dir.path().join("eval"),
        ..Default::default()
    };
    cfg.paths.truths = Some(truths.clone());
    cfg.paths.predictions = Some(truths);
    let r = cmd_evaluate(&cfg).unwrap();
    assert_eq!((r.precision, r.recall, r.map), (1.0, 1.0, 1.0));
    assert!(cfg.out.join("eval_table.txt").is_file());

    let empty = dir.path().join("empty.json");
    Annotation::empty("a", 100, 100).save(&empty).unwrap();
    cfg.paths.predictions = Some(empty);
    let r = cmd_evaluate(&cfg).unwrap();
    assert_eq!((r.precision, r.recall, r.map), (0.0, 0.0, 0.0));
}

#[test]
fn evaluate_reports_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"image": "a", "width": 10, "objects": []}"#).unwrap();
    let mut cfg = RunConfig {
        out: dir.path().join("eval"),
        ..Default::default()
    };
    cfg.paths.truths = Some(bad.clone());
    cfg.paths.predictions = Some(bad);
    match cmd_evaluate(&cfg) {
        Err(dsolocate::Error::Format { reason, .. }) => {
            assert!(reason.contains("height"), "{reason}")
        }
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn bench_reports_four_settings() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let mut gen = small_generate(&data, 10, 1);
    gen.generate.objects_max = 1;
    cmd_generate(&gen).unwrap();
    let mut cfg = RunConfig {
        out: dir.path().join("bench"),
        ..Default::default()
    };
    cfg.paths.manifest = Some(data.join("manifest.json"));
    cfg.paths.checkpoint = Some(random_checkpoint(dir.path()));
    quick_detect(&mut cfg);
    let r = cmd_bench(&cfg).unwrap();
    assert_eq!(r.rows.len(), 4);
    let full = r
        .rows
        .iter()
        .find(|r| r.threshold == 0.0 && r.scale == 1.0)
        .unwrap();
    let half = r
        .rows
        .iter()
        .find(|r| r.threshold == 0.0 && r.scale == 0.5)
        .unwrap();
    assert_eq!(full.slot_count, 4);
    assert_eq!(half.slot_count, 1);
    assert_eq!(full.attribution_calls, 4);
    assert_eq!(full.map_delta, 0.0);
    assert!(cfg.out.join("bench.json").is_file());
}
