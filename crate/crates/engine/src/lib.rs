//! Batch data engine: runs the screenshot-to-page pipeline over a corpus
//! directory and writes one JSONL record per image plus a resumable manifest.
//!
//! Layout of an output directory:
//! - `dataset.jsonl`: completed records in corpus order, one per line.
//! - `manifest.json`: per-input status, the config hash and reward statistics.
//!
//! Sidecars next to an image `<stem>.<ext>` are picked up when present:
//! `<stem>.blocks.json` supplies reference blocks for scoring and
//! `<stem>.detections.json` supplies element detections.

mod filter;
mod record;

pub use filter::{filter_by_reward, filter_lines, FilterError, FilterReport};
pub use record::{
    DatasetRecord, ManifestEntry, ManifestSummary, RecordMetadata, RecordStatus, RewardStats, RunManifest, TermStats,
    MANIFEST_SCHEMA_VERSION, RECORD_SCHEMA_VERSION,
};

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use screencoder_core::generation::render_html;
use screencoder_core::pipeline::{self, write_atomic, Backends, PipelineConfig, RunInputs};
use screencoder_core::placeholder::ingest_detections;
use screencoder_core::raster::PageImage;

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("corpus {0} holds no images")]
    EmptyCorpus(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("existing manifest was produced by config {found}, current config is {expected}")]
    ConfigMismatch { expected: String, found: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EngineError + '_ {
    move |source| EngineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchConfig {
    pub pipeline: PipelineConfig,
    pub workers: usize,
    /// Record start and finish times in record metadata.
    pub timestamps: bool,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(8),
            timestamps: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub manifest: RunManifest,
    pub processed: usize,
    pub skipped: usize,
}

/// Image files directly inside `dir`, by file name, sorted.
pub fn list_corpus(dir: &Path) -> Result<Vec<String>, EngineError> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if is_image && path.is_file() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    if names.is_empty() {
        return Err(EngineError::EmptyCorpus(dir.to_path_buf()));
    }
    Ok(names)
}

fn record_id(line: &str) -> Option<String> {
    #[derive(Deserialize)]
    struct Id {
        id: String,
    }
    serde_json::from_str::<Id>(line).ok().map(|i| i.id)
}

fn load_manifest(path: &Path) -> Result<Option<RunManifest>, EngineError> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map(Some).map_err(|e| EngineError::Corrupt {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Existing dataset lines keyed by record id. Unparseable lines are dropped.
fn load_dataset(path: &Path) -> Result<BTreeMap<String, String>, EngineError> {
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        match record_id(line) {
            Some(id) => {
                out.insert(id, line.to_string());
            }
            None if line.trim().is_empty() => {}
            None => log::warn!("{}:{}: unreadable record dropped", path.display(), n + 1),
        }
    }
    Ok(out)
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn sidecar(image: &Path, suffix: &str) -> PathBuf {
    let stem = image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    image.with_file_name(format!("{stem}.{suffix}"))
}

/// Runs the pipeline on one corpus file.
pub fn process_one(corpus: &Path, name: &str, backends: &Backends, config: &BatchConfig) -> Result<DatasetRecord, String> {
    let started_at = config.timestamps.then(now);
    let path = corpus.join(name);
    let bytes = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let image = PageImage::decode(&bytes).map_err(|e| e.to_string())?;
    let detections_path = sidecar(&path, "detections.json");
    let detections = if detections_path.exists() {
        let text = std::fs::read_to_string(&detections_path).map_err(|e| format!("{}: {e}", detections_path.display()))?;
        let (elements, warnings) =
            ingest_detections(&text, image.width(), image.height()).map_err(|e| format!("{}: {e}", detections_path.display()))?;
        for w in warnings {
            log::warn!("{}: {w}", detections_path.display());
        }
        Some(elements)
    } else {
        None
    };
    let reference_blocks = pipeline::sidecar_blocks(&path).map_err(|e| e.to_string())?.map(|(set, warnings)| {
        for w in warnings {
            log::warn!("{name}: {w}");
        }
        set
    });
    let inputs = RunInputs {
        detections,
        reference_blocks,
    };
    let out = pipeline::run(&image, backends, inputs, &config.pipeline).map_err(|e| e.to_string())?;
    Ok(DatasetRecord {
        schema_version: RECORD_SCHEMA_VERSION,
        id: name.to_string(),
        image: name.to_string(),
        status: out.status(),
        html: render_html(&out.document),
        layout: out.layout,
        tree: out.tree,
        reward: out.metrics,
        metadata: RecordMetadata {
            grounding_backend: backends.grounding.id(),
            generation_backend: backends.generation.id(),
            config_hash: out.report.config_hash,
            started_at,
            finished_at: config.timestamps.then(now),
        },
    })
}

fn process_isolated(corpus: &Path, name: &str, backends: &Backends, config: &BatchConfig) -> Result<DatasetRecord, String> {
    std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| process_one(corpus, name, backends, config))).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| p.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into());
        Err(format!("internal error: {msg}"))
    })
}

/// Processes every image of `corpus` not already completed in `out`.
///
/// Records are produced by a pool of `config.workers` threads. A single
/// appender writes each finished record to the dataset and then replaces the
/// manifest, so an interrupted run resumes from the last manifest. The
/// dataset is finally rewritten in corpus order.
pub fn run_batch(corpus: &Path, out: &Path, backends: &Backends, config: &BatchConfig) -> Result<BatchOutcome, EngineError> {
    let names = list_corpus(corpus)?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let manifest_path = out.join(MANIFEST_FILE);
    let dataset_path = out.join(DATASET_FILE);
    let config_hash = config.pipeline.hash();

    let mut manifest = RunManifest::new(config_hash.clone(), names.clone());
    if let Some(previous) = load_manifest(&manifest_path)? {
        if previous.config_hash != config_hash {
            return Err(EngineError::ConfigMismatch {
                expected: config_hash,
                found: previous.config_hash,
            });
        }
        manifest.entries = previous
            .entries
            .into_iter()
            .filter(|(id, _)| names.contains(id))
            .collect();
    }
    let mut lines = load_dataset(&dataset_path)?;
    lines.retain(|id, _| manifest.is_complete(id));
    manifest.entries.retain(|id, e| !e.status.is_complete() || lines.contains_key(id));

    let pending: Vec<&String> = names.iter().filter(|n| !manifest.is_complete(n)).collect();
    let skipped = names.len() - pending.len();
    // the dataset on disk must only hold lines the manifest vouches for
    write_dataset(&dataset_path, &names, &lines)?;
    write_atomic(&manifest_path, manifest_json(&manifest).as_bytes()).map_err(|e| EngineError::Corrupt {
        path: manifest_path.clone(),
        message: e.to_string(),
    })?;

    let workers = config.workers.clamp(1, pending.len().max(1));
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(String, Result<DatasetRecord, String>)>();
    std::thread::scope(|scope| -> Result<(), EngineError> {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, pending) = (&next, &pending);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(name) = pending.get(i) else { break };
                let result = process_isolated(corpus, name, backends, config);
                if tx.send(((*name).clone(), result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut appender = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&dataset_path)
            .map_err(io_err(&dataset_path))?;
        for (name, result) in rx {
            let entry = match result {
                Ok(record) => {
                    let line = serde_json::to_string(&record).expect("records serialize");
                    writeln!(appender, "{line}")
                        .and_then(|_| appender.flush())
                        .map_err(io_err(&dataset_path))?;
                    lines.insert(name.clone(), line);
                    ManifestEntry {
                        status: record.status.into(),
                        error: None,
                        composite: record.reward.as_ref().map(|m| m.rewards.composite),
                    }
                }
                Err(error) => {
                    log::warn!("{name}: {error}");
                    ManifestEntry {
                        status: RecordStatus::Failed,
                        error: Some(error),
                        composite: None,
                    }
                }
            };
            manifest.entries.insert(name, entry);
            write_atomic(&manifest_path, manifest_json(&manifest).as_bytes()).map_err(|e| EngineError::Corrupt {
                path: manifest_path.clone(),
                message: e.to_string(),
            })?;
        }
        Ok(())
    })?;

    write_dataset(&dataset_path, &names, &lines)?;
    let records: Vec<DatasetRecord> = names
        .iter()
        .filter_map(|n| lines.get(n))
        .filter_map(|l| serde_json::from_str(l).ok())
        .collect();
    let rewards: Vec<_> = records.iter().filter_map(|r| r.reward.as_ref()).collect();
    manifest.summarize(&rewards);
    write_atomic(&manifest_path, manifest_json(&manifest).as_bytes()).map_err(|e| EngineError::Corrupt {
        path: manifest_path.clone(),
        message: e.to_string(),
    })?;
    Ok(BatchOutcome {
        manifest,
        processed: pending.len(),
        skipped,
    })
}

fn manifest_json(m: &RunManifest) -> String {
    screencoder_core::canonical::to_canonical_json(m)
}

fn write_dataset(path: &Path, order: &[String], lines: &BTreeMap<String, String>) -> Result<(), EngineError> {
    let mut body = String::new();
    for line in order.iter().filter_map(|n| lines.get(n)) {
        body.push_str(line);
        body.push('\n');
    }
    write_atomic(path, body.as_bytes()).map_err(|e| EngineError::Corrupt {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Removes the timestamp fields from a dataset line.
pub fn strip_timestamps(line: &str) -> Result<String, serde_json::Error> {
    let mut v: serde_json::Value = serde_json::from_str(line)?;
    if let Some(meta) = v.get_mut("metadata").and_then(|m| m.as_object_mut()) {
        meta.remove("started_at");
        meta.remove("finished_at");
    }
    serde_json::to_string(&v)
}
