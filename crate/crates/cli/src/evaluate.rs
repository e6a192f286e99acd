use serde_json::json;

use dsolocate::evaluation::{evaluate, Annotation, EvalReport};
use dsolocate::Result;

use crate::config::{require_file, RunConfig};
use crate::{create_dir, write_json};

/// Scores predictions against truths; writes `eval_report.json` and `eval_table.txt`.
pub fn cmd_evaluate(config: &RunConfig) -> Result<EvalReport> {
    config.validate()?;
    let preds = require_file(config.paths.predictions.as_ref(), "predictions")?;
    let truths = require_file(config.paths.truths.as_ref(), "truths")?;
    let preds = Annotation::load_all(preds)?;
    let truths = Annotation::load_all(truths)?;
    let mut report = evaluate(&preds, &truths, &config.evaluate)?;
    report.stats = Some(json!({"seed": config.seed, "config": config.evaluate}));
    create_dir(&config.out)?;
    write_json(&config.out.join("eval_report.json"), &report)?;
    let table_path = config.out.join("eval_table.txt");
    std::fs::write(&table_path, report.to_table()).map_err(|source| dsolocate::Error::Io {
        path: table_path,
        source,
    })?;
    Ok(report)
}
