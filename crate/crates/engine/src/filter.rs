//! Reward-floor filtering of dataset files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("floor must lie in [0, 1], got {0}")]
    InvalidFloor(f64),
    #[error("line {line}: record {id:?} carries no reward")]
    MissingReward { line: usize, id: Option<String> },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub total: usize,
    pub kept: usize,
    /// `kept / total`; 1.0 for an empty input.
    pub retention: f64,
}

#[derive(Deserialize)]
struct Rewarded {
    id: Option<String>,
    reward: Option<Composite>,
}

#[derive(Deserialize)]
struct Composite {
    composite: f64,
}

/// Keeps the lines whose composite reward is at least `floor`. Kept lines
/// are copied byte for byte.
pub fn filter_lines(text: &str, floor: f64) -> Result<(String, FilterReport), FilterError> {
    if !(0.0..=1.0).contains(&floor) {
        return Err(FilterError::InvalidFloor(floor));
    }
    let mut out = String::new();
    let (mut total, mut kept) = (0, 0);
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        let rec: Rewarded = serde_json::from_str(line).map_err(|e| FilterError::Malformed {
            line: n + 1,
            message: e.to_string(),
        })?;
        let Some(reward) = rec.reward else {
            return Err(FilterError::MissingReward { line: n + 1, id: rec.id });
        };
        if reward.composite >= floor {
            kept += 1;
            out.push_str(line);
            out.push('\n');
        }
    }
    let retention = if total == 0 { 1.0 } else { kept as f64 / total as f64 };
    Ok((out, FilterReport { total, kept, retention }))
}

pub fn filter_by_reward(input: &Path, output: &Path, floor: f64) -> Result<FilterReport, FilterError> {
    let text = std::fs::read_to_string(input).map_err(|source| FilterError::Io {
        path: input.to_path_buf(),
        source,
    })?;
    let (kept, report) = filter_lines(&text, floor)?;
    std::fs::write(output, kept).map_err(|source| FilterError::Io {
        path: output.to_path_buf(),
        source,
    })?;
    Ok(report)
}
