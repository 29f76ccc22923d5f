//! Editing sessions, persisted as directories holding the same artifacts the
//! CLI writes plus the screenshot, the detections and a session record.
//!
//! Every mutation carries the revision it was based on. A mismatch is a
//! conflict, except for an exact replay of the last mutation, which returns
//! the state that mutation produced.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use screencoder_core::backend::BackendError;
use screencoder_core::canonical::to_canonical_json;
use screencoder_core::generation::{parse_html, render_html, GeneratedDocument, GenerationError};
use screencoder_core::grounding::{GroundingError, LayoutMap, Provenance};
use screencoder_core::placeholder::{detect_in_regions, DetectedElement, DetectionFile, DETECTION_SCHEMA_VERSION};
use screencoder_core::pipeline::{
    self, write_artifacts, write_atomic, AssetMode, PipelineConfig, PipelineError, RunInputs, RunReport, RunStatus,
    HTML_FILE, LAYOUT_FILE, METRICS_FILE, REPORT_FILE, TREE_FILE,
};
use screencoder_core::planning::{parse_tree, serialize_tree, LayoutTree};
use screencoder_core::raster::PageImage;

use crate::backends::BackendSet;

pub const SESSION_FILE: &str = "session.json";
pub const SCREENSHOT_FILE: &str = "screenshot.png";
pub const DETECTIONS_FILE: &str = "detections.json";
pub const SESSION_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("no session `{0}`")]
    UnknownSession(String),
    #[error("no node `{0}` in the session tree")]
    UnknownNode(String),
    #[error("revision {given} is stale; the session is at revision {current}")]
    Conflict { given: u64, current: u64 },
    #[error("{0}")]
    Invalid(String),
    #[error("backend failure: {0}")]
    Backend(BackendError),
    #[error(transparent)]
    Pipeline(PipelineError),
    #[error("{path}: {message}")]
    Storage { path: PathBuf, message: String },
}

impl From<PipelineError> for SessionError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Grounding(GroundingError::Backend(b)) | PipelineError::Generation(GenerationError::Backend(b)) => {
                SessionError::Backend(b)
            }
            PipelineError::Grounding(GroundingError::Image(i)) => SessionError::Invalid(i.to_string()),
            PipelineError::Planning(p) => SessionError::Invalid(p.to_string()),
            other => SessionError::Pipeline(other),
        }
    }
}

fn storage(path: &Path) -> impl FnOnce(std::io::Error) -> SessionError + '_ {
    move |e| SessionError::Storage {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    PutLayout,
    PutTree,
    Regenerate,
}

/// The last accepted mutation, kept to recognize replays.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mutation {
    pub kind: MutationKind,
    pub basis: u64,
    /// SHA-256 of the canonical payload.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionEntry {
    pub revision: u64,
    pub instruction: Option<String>,
}

/// Persistent session record. `layout_revision <= tree_revision <=
/// document_revision <= revision` always holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub schema_version: u32,
    pub id: String,
    pub revision: u64,
    pub layout_revision: u64,
    /// Revision at which the current tree was set or derived.
    pub tree_revision: u64,
    /// Layout revision the current tree was built against.
    pub tree_layout_revision: u64,
    pub document_revision: u64,
    pub status: RunStatus,
    /// Regenerate instructions per target node, oldest first.
    pub history: BTreeMap<String, Vec<InstructionEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_mutation: Option<Mutation>,
}

/// What the API reports about a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub revision: u64,
    pub layout_revision: u64,
    pub tree_revision: u64,
    pub tree_layout_revision: u64,
    pub document_revision: u64,
    pub status: RunStatus,
    pub history: BTreeMap<String, Vec<InstructionEntry>>,
}

impl From<SessionState> for SessionView {
    fn from(s: SessionState) -> Self {
        Self {
            id: s.id,
            revision: s.revision,
            layout_revision: s.layout_revision,
            tree_revision: s.tree_revision,
            tree_layout_revision: s.tree_layout_revision,
            document_revision: s.document_revision,
            status: s.status,
            history: s.history,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutBody {
    pub revision: u64,
    pub layout: LayoutMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeBody {
    pub revision: u64,
    pub tree: LayoutTree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegenerateBody {
    pub revision: u64,
    #[serde(default)]
    pub instruction: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBody {
    revision: u64,
    #[serde(default)]
    layout: Option<serde_json::Value>,
    #[serde(default)]
    tree: Option<serde_json::Value>,
}

/// Parses a put-layout body; every failure is a schema violation.
pub fn parse_layout_body(bytes: &[u8]) -> Result<LayoutBody, SessionError> {
    let raw: RawBody = serde_json::from_slice(bytes).map_err(|e| SessionError::Invalid(e.to_string()))?;
    let value = raw.layout.ok_or_else(|| SessionError::Invalid("missing field `layout`".into()))?;
    let layout = LayoutMap::from_json(&value.to_string()).map_err(|e| SessionError::Invalid(e.to_string()))?;
    Ok(LayoutBody {
        revision: raw.revision,
        layout,
    })
}

pub fn parse_tree_body(bytes: &[u8]) -> Result<TreeBody, SessionError> {
    let raw: RawBody = serde_json::from_slice(bytes).map_err(|e| SessionError::Invalid(e.to_string()))?;
    let value = raw.tree.ok_or_else(|| SessionError::Invalid("missing field `tree`".into()))?;
    let tree = parse_tree(&value.to_string()).map_err(|e| SessionError::Invalid(e.to_string()))?;
    Ok(TreeBody {
        revision: raw.revision,
        tree,
    })
}

pub fn parse_regenerate_body(bytes: &[u8]) -> Result<RegenerateBody, SessionError> {
    serde_json::from_slice(bytes).map_err(|e| SessionError::Invalid(e.to_string()))
}

fn digest(payload: &str) -> String {
    hex::encode(Sha256::digest(payload.as_bytes()))
}

/// Directory-backed session store. Mutations on one session are serialized
/// by a per-session lock; different sessions proceed independently.
pub struct SessionStore {
    root: PathBuf,
    backends: BackendSet,
    config: PipelineConfig,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

enum Check {
    Apply,
    Replay,
}

impl SessionStore {
    pub fn new(root: impl Into<PathBuf>, backends: BackendSet, config: PipelineConfig) -> Result<Self, SessionError> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(storage(&root))?;
        Ok(Self {
            root,
            backends,
            config,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Session directory; ids that are not UUIDs never reach the filesystem.
    pub fn dir(&self, id: &str) -> Result<PathBuf, SessionError> {
        let unknown = || SessionError::UnknownSession(id.to_string());
        let parsed = uuid::Uuid::try_parse(id).map_err(|_| unknown())?;
        if parsed.simple().to_string() != id {
            return Err(unknown());
        }
        let dir = self.root.join(id);
        if !dir.join(SESSION_FILE).is_file() {
            return Err(unknown());
        }
        Ok(dir)
    }

    fn lock(&self, id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|p| p.into_inner());
        locks.entry(id.to_string()).or_default().clone()
    }

    /// Runs the whole pipeline on an uploaded screenshot and stores the result
    /// as revision 1.
    pub fn create(&self, image: &[u8]) -> Result<SessionView, SessionError> {
        let shot = PageImage::decode(image).map_err(|e| SessionError::Invalid(e.to_string()))?;
        let out = pipeline::run(&shot, &self.backends.borrow(), RunInputs::default(), &self.config)?;
        let elements = detect_in_regions(&shot, &out.layout, &self.config.mapper.detector);

        let id = uuid::Uuid::new_v4().simple().to_string();
        let staging = self.root.join(format!(".{id}.new"));
        std::fs::create_dir_all(&staging).map_err(storage(&staging))?;
        let png = shot.to_png().map_err(|e| SessionError::Invalid(e.to_string()))?;
        write_atomic(&staging.join(SCREENSHOT_FILE), &png)?;
        write_artifacts(&out, &staging, AssetMode::Inline)?;
        write_detections(&staging, &elements)?;
        let state = SessionState {
            schema_version: SESSION_SCHEMA_VERSION,
            id: id.clone(),
            revision: 1,
            layout_revision: 1,
            tree_revision: 1,
            tree_layout_revision: 1,
            document_revision: 1,
            status: out.status(),
            history: BTreeMap::new(),
            last_mutation: None,
        };
        write_state(&staging, &state)?;
        let dir = self.root.join(&id);
        std::fs::rename(&staging, &dir).map_err(storage(&dir))?;
        Ok(state.into())
    }

    pub fn view(&self, id: &str) -> Result<SessionView, SessionError> {
        Ok(read_state(&self.dir(id)?)?.into())
    }

    pub fn layout(&self, id: &str) -> Result<LayoutBody, SessionError> {
        let dir = self.dir(id)?;
        let state = read_state(&dir)?;
        Ok(LayoutBody {
            revision: state.revision,
            layout: read_layout(&dir)?,
        })
    }

    pub fn tree(&self, id: &str) -> Result<TreeBody, SessionError> {
        let dir = self.dir(id)?;
        let state = read_state(&dir)?;
        Ok(TreeBody {
            revision: state.revision,
            tree: read_tree(&dir)?,
        })
    }

    pub fn html(&self, id: &str) -> Result<String, SessionError> {
        read_text(&self.dir(id)?.join(HTML_FILE))
    }

    /// The stored metrics document, `null` when scoring is disabled.
    pub fn metrics(&self, id: &str) -> Result<String, SessionError> {
        read_text(&self.dir(id)?.join(METRICS_FILE))
    }

    pub fn report(&self, id: &str) -> Result<String, SessionError> {
        read_text(&self.dir(id)?.join(REPORT_FILE))
    }

    pub fn screenshot(&self, id: &str) -> Result<Vec<u8>, SessionError> {
        let path = self.dir(id)?.join(SCREENSHOT_FILE);
        std::fs::read(&path).map_err(storage(&path))
    }

    fn check(state: &SessionState, kind: MutationKind, basis: u64, digest: &str) -> Result<Check, SessionError> {
        if let Some(m) = &state.last_mutation {
            if m.kind == kind && m.basis == basis && m.digest == digest && state.revision == basis + 1 {
                return Ok(Check::Replay);
            }
        }
        if basis != state.revision {
            return Err(SessionError::Conflict {
                given: basis,
                current: state.revision,
            });
        }
        Ok(Check::Apply)
    }

    /// Replaces the layout map and re-runs planning onward. Grounding is not
    /// repeated.
    pub fn put_layout(&self, id: &str, body: LayoutBody) -> Result<SessionView, SessionError> {
        let dir = self.dir(id)?;
        let lock = self.lock(id);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut state = read_state(&dir)?;
        let d = digest(&to_canonical_json(&body.layout));
        if let Check::Replay = Self::check(&state, MutationKind::PutLayout, body.revision, &d)? {
            return Ok(state.into());
        }
        let shot = read_screenshot(&dir)?;
        let page = body.layout.page_size;
        if (page.width, page.height) != (shot.width(), shot.height()) {
            return Err(SessionError::Invalid(format!(
                "layout page size {}x{} differs from the screenshot's {}x{}",
                page.width,
                page.height,
                shot.width(),
                shot.height()
            )));
        }
        let report = read_report(&dir)?;
        let elements = detect_in_regions(&shot, &body.layout, &self.config.mapper.detector);
        let mut warnings = Vec::new();
        let tree = pipeline::plan(&body.layout, &elements, &self.config, &mut warnings)?;
        let config = self.config_for(&state, &tree);
        let out = pipeline::run_from_tree(
            &shot,
            body.layout,
            report.regions,
            tree,
            self.backends.generation.as_ref(),
            &elements,
            None,
            &config,
            warnings,
        )?;
        write_artifacts(&out, &dir, AssetMode::Inline)?;
        write_detections(&dir, &elements)?;
        let rev = state.revision + 1;
        state.revision = rev;
        state.layout_revision = rev;
        state.tree_revision = rev;
        state.tree_layout_revision = rev;
        state.document_revision = rev;
        state.status = out.status();
        state.last_mutation = Some(Mutation {
            kind: MutationKind::PutLayout,
            basis: body.revision,
            digest: d,
        });
        write_state(&dir, &state)?;
        Ok(state.into())
    }

    /// Replaces the tree and re-runs generation onward. The layout map is
    /// left untouched.
    pub fn put_tree(&self, id: &str, body: TreeBody) -> Result<SessionView, SessionError> {
        let dir = self.dir(id)?;
        let lock = self.lock(id);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut state = read_state(&dir)?;
        let d = digest(&serialize_tree(&body.tree));
        if let Check::Replay = Self::check(&state, MutationKind::PutTree, body.revision, &d)? {
            return Ok(state.into());
        }
        let layout = read_layout(&dir)?;
        if body.tree.page_size != layout.page_size {
            return Err(SessionError::Invalid("tree page size differs from the layout's".into()));
        }
        let shot = read_screenshot(&dir)?;
        let report = read_report(&dir)?;
        let elements = read_detections(&dir, &shot)?;
        let config = self.config_for(&state, &body.tree);
        let out = pipeline::run_from_tree(
            &shot,
            layout,
            report.regions,
            body.tree,
            self.backends.generation.as_ref(),
            &elements,
            None,
            &config,
            Vec::new(),
        )?;
        write_atomic(&dir.join(TREE_FILE), serialize_tree(&out.tree).as_bytes())?;
        write_atomic(&dir.join(HTML_FILE), render_html(&out.document).as_bytes())?;
        write_atomic(&dir.join(REPORT_FILE), to_canonical_json(&out.report).as_bytes())?;
        write_metrics(&dir, out.metrics.as_ref())?;
        let rev = state.revision + 1;
        state.revision = rev;
        state.tree_revision = rev;
        state.tree_layout_revision = state.layout_revision;
        state.document_revision = rev;
        state.status = out.status();
        state.last_mutation = Some(Mutation {
            kind: MutationKind::PutTree,
            basis: body.revision,
            digest: d,
        });
        write_state(&dir, &state)?;
        Ok(state.into())
    }

    /// Re-prompts the leaves under `node` and reassembles the page; the rest
    /// of the document is kept as is.
    pub fn regenerate(&self, id: &str, node: &str, body: RegenerateBody) -> Result<SessionView, SessionError> {
        let dir = self.dir(id)?;
        let lock = self.lock(id);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut state = read_state(&dir)?;
        let tree = read_tree(&dir)?;
        if tree.find(node).is_none() {
            return Err(SessionError::UnknownNode(node.to_string()));
        }
        let d = digest(&to_canonical_json(&(node, &body.instruction)));
        if let Check::Replay = Self::check(&state, MutationKind::Regenerate, body.revision, &d)? {
            return Ok(state.into());
        }
        let layout = read_layout(&dir)?;
        let shot = read_screenshot(&dir)?;
        let mut report = read_report(&dir)?;
        let elements = read_detections(&dir, &shot)?;
        let document = read_document(&dir)?;
        let re = pipeline::regenerate_subtree(
            &shot,
            &layout,
            &tree,
            &document,
            &elements,
            report.restoration.as_ref(),
            node,
            body.instruction.as_deref(),
            self.backends.generation.as_ref(),
            None,
            &self.config,
        )?;
        report.generation.nodes.extend(re.nodes);
        report.restoration = self.config.restore.then_some(re.restoration);
        let fallback = layout.entries.values().any(|e| e.provenance == Provenance::Fallback);
        report.status = if report.generation.degraded() || fallback {
            RunStatus::Degraded
        } else {
            RunStatus::Ok
        };
        write_atomic(&dir.join(HTML_FILE), render_html(&re.document).as_bytes())?;
        write_atomic(&dir.join(REPORT_FILE), to_canonical_json(&report).as_bytes())?;
        write_metrics(&dir, re.metrics.as_ref())?;
        let rev = state.revision + 1;
        state.revision = rev;
        state.document_revision = rev;
        state.status = report.status;
        state.history.entry(node.to_string()).or_default().push(InstructionEntry {
            revision: rev,
            instruction: body.instruction,
        });
        state.last_mutation = Some(Mutation {
            kind: MutationKind::Regenerate,
            basis: body.revision,
            digest: d,
        });
        write_state(&dir, &state)?;
        Ok(state.into())
    }

    /// The pipeline configuration with the session's instructions replayed
    /// onto the leaves of `tree`, oldest first.
    fn config_for(&self, state: &SessionState, tree: &LayoutTree) -> PipelineConfig {
        let mut config = self.config.clone();
        let mut entries: Vec<(&String, &InstructionEntry)> = state
            .history
            .iter()
            .flat_map(|(node, hist)| hist.iter().map(move |e| (node, e)))
            .collect();
        entries.sort_by_key(|(_, e)| e.revision);
        for (node, entry) in entries {
            let Some(target) = tree.find(node) else { continue };
            for leaf in target.walk().into_iter().filter(|n| n.is_leaf()) {
                match &entry.instruction {
                    Some(text) => config.generation.instructions.insert(leaf.id.clone(), text.clone()),
                    None => config.generation.instructions.remove(&leaf.id),
                };
            }
        }
        config
    }
}

fn read_text(path: &Path) -> Result<String, SessionError> {
    std::fs::read_to_string(path).map_err(storage(path))
}

fn corrupt(path: &Path, e: impl std::fmt::Display) -> SessionError {
    SessionError::Storage {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn read_state(dir: &Path) -> Result<SessionState, SessionError> {
    let path = dir.join(SESSION_FILE);
    serde_json::from_str(&read_text(&path)?).map_err(|e| corrupt(&path, e))
}

fn write_state(dir: &Path, state: &SessionState) -> Result<(), SessionError> {
    write_atomic(&dir.join(SESSION_FILE), to_canonical_json(state).as_bytes())?;
    Ok(())
}

fn read_layout(dir: &Path) -> Result<LayoutMap, SessionError> {
    let path = dir.join(LAYOUT_FILE);
    LayoutMap::from_json(&read_text(&path)?).map_err(|e| corrupt(&path, e))
}

fn read_tree(dir: &Path) -> Result<LayoutTree, SessionError> {
    let path = dir.join(TREE_FILE);
    parse_tree(&read_text(&path)?).map_err(|e| corrupt(&path, e))
}

fn read_report(dir: &Path) -> Result<RunReport, SessionError> {
    let path = dir.join(REPORT_FILE);
    serde_json::from_str(&read_text(&path)?).map_err(|e| corrupt(&path, e))
}

fn read_document(dir: &Path) -> Result<GeneratedDocument, SessionError> {
    let path = dir.join(HTML_FILE);
    parse_html(&read_text(&path)?).map_err(|e| corrupt(&path, e))
}

fn read_screenshot(dir: &Path) -> Result<PageImage, SessionError> {
    let path = dir.join(SCREENSHOT_FILE);
    PageImage::open(&path).map_err(|e| corrupt(&path, e))
}

fn read_detections(dir: &Path, shot: &PageImage) -> Result<Vec<DetectedElement>, SessionError> {
    let path = dir.join(DETECTIONS_FILE);
    let (elements, _) = screencoder_core::placeholder::ingest_detections(&read_text(&path)?, shot.width(), shot.height())
        .map_err(|e| corrupt(&path, e))?;
    Ok(elements)
}

fn write_detections(dir: &Path, elements: &[DetectedElement]) -> Result<(), SessionError> {
    let file = DetectionFile {
        version: DETECTION_SCHEMA_VERSION,
        elements: elements.to_vec(),
    };
    write_atomic(&dir.join(DETECTIONS_FILE), to_canonical_json(&file).as_bytes())?;
    Ok(())
}

fn write_metrics(dir: &Path, metrics: Option<&pipeline::Metrics>) -> Result<(), SessionError> {
    let body = metrics.map_or_else(|| "null".to_string(), to_canonical_json);
    write_atomic(&dir.join(METRICS_FILE), body.as_bytes())?;
    Ok(())
}
