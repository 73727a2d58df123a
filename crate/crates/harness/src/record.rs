//! Run execution, persistence and the run registry.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::experiments::{execute, Verdict};

pub const SUMMARY_FILE: &str = "summary.json";
pub const RECORD_FILE: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub experiment: String,
    pub kind: String,
    pub config_digest: String,
    pub seed: u64,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub directory: PathBuf,
    /// File names inside `directory`.
    pub outputs: Vec<String>,
    pub summary: serde_json::Value,
    pub verdicts: Vec<Verdict>,
}

impl RunRecord {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(HarnessError::io(path))
}

/// Runs the experiment and writes its CSVs, `summary.json` and `run.json`
/// under `<root>/<run id>/`, where `root` is the config's `output_dir` if set.
pub fn run(config: &ExperimentConfig, root: &Path) -> Result<RunRecord> {
    let started_at = Utc::now();
    let outcome = execute(&config.experiment, config.seed)?;
    let root = config.output_dir.as_deref().unwrap_or(root);
    let run_id = config.run_id();
    let dir = root.join(&run_id);
    fs::create_dir_all(&dir).map_err(HarnessError::io(&dir))?;

    let digest = config.digest();
    let mut outputs = Vec::new();
    for (name, text) in &outcome.files {
        write(&dir.join(name), text)?;
        outputs.push(name.clone());
    }
    let summary = json!({
        "run_id": run_id,
        "kind": config.experiment.kind(),
        "config_digest": digest,
        "seed": config.seed,
        "config": config,
        "results": outcome.summary,
        "verdicts": outcome.verdicts,
        "passed": outcome.verdicts.iter().all(|v| v.passed),
    });
    let summary_path = dir.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&summary).map_err(HarnessError::json(&summary_path))?;
    write(&summary_path, &(text + "\n"))?;
    outputs.push(SUMMARY_FILE.to_string());

    let record = RunRecord {
        run_id,
        experiment: config.name.clone().unwrap_or_else(|| config.experiment.kind().to_string()),
        kind: config.experiment.kind().to_string(),
        config_digest: digest,
        seed: config.seed,
        started_at,
        finished_at: Utc::now(),
        directory: dir.clone(),
        outputs,
        summary: outcome.summary,
        verdicts: outcome.verdicts,
    };
    let record_path = dir.join(RECORD_FILE);
    let text = serde_json::to_string_pretty(&record).map_err(HarnessError::json(&record_path))?;
    write(&record_path, &(text + "\n"))?;
    Ok(record)
}

/// [`run`] inside a dedicated rayon pool of `threads` workers.
pub fn run_with_threads(config: &ExperimentConfig, root: &Path, threads: usize) -> Result<RunRecord> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    pool.install(|| run(config, root))
}

pub fn load_record(root: &Path, run_id: &str) -> Result<RunRecord> {
    let path = root.join(run_id).join(RECORD_FILE);
    if !path.is_file() {
        return Err(HarnessError::UnknownRun(run_id.to_string()));
    }
    let text = fs::read_to_string(&path).map_err(HarnessError::io(&path))?;
    serde_json::from_str(&text).map_err(HarnessError::json(&path))
}

/// Completed runs under `root`, sorted by run id. A missing root is empty.
pub fn list(root: &Path) -> Result<Vec<RunRecord>> {
    let entries = match fs::read_dir(root) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(HarnessError::io(root)(e)),
    };
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry.map_err(HarnessError::io(root))?;
        if entry.path().join(RECORD_FILE).is_file() {
            ids.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    ids.sort();
    ids.iter().map(|id| load_record(root, id)).collect()
}
