//! Dataset record and run manifest schemas.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use screencoder_core::grounding::LayoutMap;
use screencoder_core::pipeline::{Metrics, RunStatus};
use screencoder_core::planning::LayoutTree;

pub const RECORD_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMetadata {
    pub grounding_backend: String,
    pub generation_backend: String,
    pub config_hash: String,
    /// RFC 3339; the only fields allowed to differ between identical runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<String>,
}

/// One image/code pair. Images are stored by reference, relative to the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub schema_version: u32,
    pub id: String,
    pub image: String,
    pub status: RunStatus,
    pub layout: LayoutMap,
    pub tree: LayoutTree,
    pub html: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<Metrics>,
    pub metadata: RecordMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    Degraded,
    Failed,
}

impl RecordStatus {
    pub fn is_complete(&self) -> bool {
        matches!(self, RecordStatus::Ok | RecordStatus::Degraded)
    }
}

impl From<RunStatus> for RecordStatus {
    fn from(s: RunStatus) -> Self {
        match s {
            RunStatus::Ok => RecordStatus::Ok,
            RunStatus::Degraded => RecordStatus::Degraded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub composite: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TermStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl TermStats {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardStats {
    pub count: usize,
    pub block: TermStats,
    pub text: TermStats,
    pub position: TermStats,
    pub color: TermStats,
    pub composite: TermStats,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestSummary {
    pub total: usize,
    pub ok: usize,
    pub degraded: usize,
    pub failed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<RewardStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub config_hash: String,
    /// Every input file, relative to the corpus, in processing order.
    pub corpus: Vec<String>,
    pub entries: BTreeMap<String, ManifestEntry>,
    pub summary: ManifestSummary,
}

impl RunManifest {
    pub fn new(config_hash: String, corpus: Vec<String>) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            config_hash,
            corpus,
            entries: BTreeMap::new(),
            summary: ManifestSummary::default(),
        }
    }

    pub fn is_complete(&self, id: &str) -> bool {
        self.entries.get(id).is_some_and(|e| e.status.is_complete())
    }

    /// Recomputes the summary from the entries and the given rewards.
    pub fn summarize(&mut self, rewards: &[&Metrics]) {
        let count = |s: RecordStatus| self.entries.values().filter(|e| e.status == s).count();
        let terms = |f: fn(&Metrics) -> f64| -> Vec<f64> { rewards.iter().map(|m| f(m)).collect() };
        let reward = (!rewards.is_empty()).then(|| RewardStats {
            count: rewards.len(),
            block: TermStats::of(&terms(|m| m.rewards.r_block)).expect("non-empty"),
            text: TermStats::of(&terms(|m| m.rewards.r_text)).expect("non-empty"),
            position: TermStats::of(&terms(|m| m.rewards.r_pos)).expect("non-empty"),
            color: TermStats::of(&terms(|m| m.rewards.r_color)).expect("non-empty"),
            composite: TermStats::of(&terms(|m| m.rewards.composite)).expect("non-empty"),
        });
        self.summary = ManifestSummary {
            total: self.corpus.len(),
            ok: count(RecordStatus::Ok),
            degraded: count(RecordStatus::Degraded),
            failed: count(RecordStatus::Failed),
            reward,
        };
    }
}
