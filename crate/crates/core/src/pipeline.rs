//! The staged screenshot-to-page run and its on-disk artifacts.
//!
//! Stages: grounding, element detection, planning, generation, placeholder
//! restoration and scoring. Each stage is callable on its own so edits to an
//! intermediate artifact re-run only the stages after it.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::to_canonical_json;
use crate::eval::{
    evaluate, ingest_ocr_blocks, rasterize, Block, BlockKind, BlockSet, BlockSource, EvalConfig, EvalError, ResolveError,
    RewardBreakdown,
};
use crate::generation::html::{Element, Node};
use crate::generation::{
    assemble, extract_fragments, generate, generate_node, leaf_ids, render_html, GeneratedDocument, GenerationBackend,
    GenerationConfig, GenerationError, GenerationReport, NodeReport,
};
use crate::geometry::NormRect;
use crate::grounding::{ground, GroundedRegion, Grounding, GroundingBackend, GroundingConfig, GroundingError, LayoutMap, Provenance};
use crate::placeholder::{
    detect_in_regions, map_placeholders, map_placeholders_in, DetectedElement, Embedding, MapperConfig, MappingScope,
    PlaceholderError, RestorationReport,
};
use crate::planning::{build_tree, build_tree_with, serialize_tree, ChildElement, LayoutTree, PlanningConfig, PlanningError};
use crate::raster::{mean_color, pixel_window, PageImage};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const LAYOUT_FILE: &str = "layout.json";
pub const TREE_FILE: &str = "tree.json";
pub const HTML_FILE: &str = "index.html";
pub const REPORT_FILE: &str = "report.json";
pub const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Grounding(#[from] GroundingError),
    #[error(transparent)]
    Planning(#[from] PlanningError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Placeholder(#[from] PlaceholderError),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub grounding: GroundingConfig,
    pub planning: PlanningConfig,
    pub generation: GenerationConfig,
    pub mapper: MapperConfig,
    pub eval: EvalConfig,
    /// Detected image and icon elements become grid children of their region.
    pub subdivide: bool,
    pub restore: bool,
    pub evaluate: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            grounding: GroundingConfig::default(),
            planning: PlanningConfig::default(),
            generation: GenerationConfig::default(),
            mapper: MapperConfig::default(),
            eval: EvalConfig::default(),
            subdivide: true,
            restore: true,
            evaluate: true,
        }
    }
}

impl PipelineConfig {
    /// SHA-256 of the canonical JSON form; identifies the configuration.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(to_canonical_json(self).as_bytes()))
    }
}

pub struct Backends<'a> {
    pub grounding: &'a dyn GroundingBackend,
    pub generation: &'a dyn GenerationBackend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Degraded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricsSource {
    /// Reference blocks came from an external block file.
    Ocr,
    /// Both sides came from the baseline detector.
    Detector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub schema_version: u32,
    pub source: MetricsSource,
    pub reference_blocks: usize,
    pub candidate_blocks: usize,
    pub matched: usize,
    #[serde(flatten)]
    pub rewards: RewardBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub width: u32,
    pub height: u32,
    pub sha256: String,
}

/// Everything a run records besides the layout, tree, page and metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub status: RunStatus,
    pub config_hash: String,
    pub image: ImageInfo,
    pub regions: Vec<GroundedRegion>,
    pub detections: usize,
    pub generation: GenerationReport,
    pub restoration: Option<RestorationReport>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub layout: LayoutMap,
    pub tree: LayoutTree,
    pub document: GeneratedDocument,
    pub report: RunReport,
    pub metrics: Option<Metrics>,
}

impl RunOutput {
    pub fn status(&self) -> RunStatus {
        self.report.status
    }
}

#[derive(Default)]
pub struct RunInputs {
    /// Externally supplied detections; the baseline detector runs otherwise.
    pub detections: Option<Vec<DetectedElement>>,
    /// Reference blocks for scoring; detector blocks are used otherwise.
    pub reference_blocks: Option<BlockSet>,
}

/// Runs every stage on one screenshot.
pub fn run(
    screenshot: &PageImage,
    backends: &Backends,
    inputs: RunInputs,
    config: &PipelineConfig,
) -> Result<RunOutput, PipelineError> {
    let grounding = ground(screenshot, backends.grounding, &config.grounding)?;
    run_from_layout(screenshot, grounding, backends.generation, inputs, config)
}

/// Runs planning onward from an existing grounding.
pub fn run_from_layout(
    screenshot: &PageImage,
    grounding: Grounding,
    generation: &dyn GenerationBackend,
    inputs: RunInputs,
    config: &PipelineConfig,
) -> Result<RunOutput, PipelineError> {
    let mut warnings = grounding.warnings.clone();
    let elements = inputs
        .detections
        .unwrap_or_else(|| detect_in_regions(screenshot, &grounding.layout, &config.mapper.detector));
    let tree = plan(&grounding.layout, &elements, config, &mut warnings)?;
    run_from_tree(
        screenshot,
        grounding.layout,
        grounding.regions,
        tree,
        generation,
        &elements,
        inputs.reference_blocks.as_ref(),
        config,
        warnings,
    )
}

/// Runs generation onward from an existing tree.
#[allow(clippy::too_many_arguments)]
pub fn run_from_tree(
    screenshot: &PageImage,
    layout: LayoutMap,
    regions: Vec<GroundedRegion>,
    tree: LayoutTree,
    generation: &dyn GenerationBackend,
    elements: &[DetectedElement],
    reference: Option<&BlockSet>,
    config: &PipelineConfig,
    warnings: Vec<String>,
) -> Result<RunOutput, PipelineError> {
    let (document, generation_report) = generate(&tree, generation, &config.generation, Some(screenshot))?;
    finish(
        screenshot,
        layout,
        regions,
        tree,
        document,
        generation_report,
        elements,
        reference,
        config,
        warnings,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Regenerated {
    pub document: GeneratedDocument,
    /// Reports for the regenerated leaves only.
    pub nodes: BTreeMap<String, NodeReport>,
    /// Restorations outside the subtree are carried over from `previous`.
    pub restoration: RestorationReport,
    pub metrics: Option<Metrics>,
}

/// Re-prompts every leaf under `node_id` with `instruction` and reassembles.
/// Fragments of all other leaves are reused as they appear in `document`,
/// and placeholder restoration only considers slots inside the subtree.
#[allow(clippy::too_many_arguments)]
pub fn regenerate_subtree(
    screenshot: &PageImage,
    layout: &LayoutMap,
    tree: &LayoutTree,
    document: &GeneratedDocument,
    elements: &[DetectedElement],
    previous: Option<&RestorationReport>,
    node_id: &str,
    instruction: Option<&str>,
    generation: &dyn GenerationBackend,
    reference: Option<&BlockSet>,
    config: &PipelineConfig,
) -> Result<Regenerated, PipelineError> {
    let node = tree
        .find(node_id)
        .ok_or_else(|| GenerationError::UnknownNode(node_id.to_string()))?;
    let subtree: BTreeSet<String> = node.walk().into_iter().map(|n| n.id.clone()).collect();
    let mut gen_config = config.generation.clone();
    let mut fragments = extract_fragments(document, tree);
    let mut nodes = BTreeMap::new();
    for leaf in leaf_ids(tree).into_iter().filter(|id| subtree.contains(id)) {
        match instruction {
            Some(text) => gen_config.instructions.insert(leaf.clone(), text.to_string()),
            None => gen_config.instructions.remove(&leaf),
        };
        let (el, report) = generate_node(tree, &leaf, generation, &gen_config, Some(screenshot))?;
        fragments.insert(leaf.clone(), el);
        nodes.insert(leaf, report);
    }
    let assembled = assemble(tree, &fragments)?;
    let kept: Vec<_> = previous
        .map(|p| {
            p.restored
                .iter()
                .filter(|r| r.owner.as_ref().is_none_or(|o| !subtree.contains(o)))
                .cloned()
                .collect()
        })
        .unwrap_or_default();
    let (document, restoration) = if config.restore {
        let scope = MappingScope {
            owners: Some(subtree),
            taken: kept.iter().map(|r| r.source).collect(),
        };
        let (doc, mut report) =
            map_placeholders_in(&assembled, layout, screenshot, elements, &Embedding::DataUri, &config.mapper, &scope)?;
        report.restored.extend(kept);
        (doc, report)
    } else {
        (assembled, RestorationReport::default())
    };
    let metrics = if config.evaluate {
        Some(score(screenshot, layout, &document, reference, config)?)
    } else {
        None
    };
    Ok(Regenerated {
        document,
        nodes,
        restoration,
        metrics,
    })
}

/// Builds the tree, subdividing regions by their detected visual elements.
/// A region whose children cannot be placed stays a leaf, with a warning.
pub fn plan(
    layout: &LayoutMap,
    elements: &[DetectedElement],
    config: &PipelineConfig,
    warnings: &mut Vec<String>,
) -> Result<LayoutTree, PipelineError> {
    if !config.subdivide {
        return Ok(build_tree_with(layout, &BTreeMap::new(), &config.planning)?);
    }
    let partition = crate::placeholder::partition_by_region(elements, layout);
    let mut children: BTreeMap<String, Vec<ChildElement>> = BTreeMap::new();
    for (label, members) in &partition.regions {
        let visual: Vec<ChildElement> = members
            .iter()
            .filter(|e| e.kind.is_visual())
            .map(|e| ChildElement {
                rect: e.rect,
                label: e.kind.as_label().to_string(),
            })
            .collect();
        if visual.len() >= 2 {
            children.insert(label.clone(), visual);
        }
    }
    let mut accepted = BTreeMap::new();
    for (label, kids) in children {
        let one = BTreeMap::from([(label.clone(), kids)]);
        match build_tree_with(layout, &one, &config.planning) {
            Ok(_) => {
                accepted.extend(one);
            }
            Err(e) => warnings.push(format!("region `{label}` kept as a single leaf: {e}")),
        }
    }
    if accepted.is_empty() {
        return Ok(build_tree(layout));
    }
    Ok(build_tree_with(layout, &accepted, &config.planning)?)
}

/// Restoration, scoring and report assembly after generation.
#[allow(clippy::too_many_arguments)]
pub fn finish(
    screenshot: &PageImage,
    layout: LayoutMap,
    regions: Vec<GroundedRegion>,
    tree: LayoutTree,
    document: GeneratedDocument,
    generation: GenerationReport,
    elements: &[DetectedElement],
    reference: Option<&BlockSet>,
    config: &PipelineConfig,
    mut warnings: Vec<String>,
) -> Result<RunOutput, PipelineError> {
    let (document, restoration) = if config.restore {
        let (doc, report) = map_placeholders(&document, &layout, screenshot, elements, &Embedding::DataUri, &config.mapper)?;
        (doc, Some(report))
    } else {
        (document, None)
    };
    let metrics = if config.evaluate {
        Some(score(screenshot, &layout, &document, reference, config)?)
    } else {
        None
    };
    let fallback = layout.entries.values().any(|e| e.provenance == Provenance::Fallback);
    if fallback {
        warnings.push("some regions were recovered by the layout fallback".into());
    }
    let status = if generation.degraded() || fallback {
        RunStatus::Degraded
    } else {
        RunStatus::Ok
    };
    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        status,
        config_hash: config.hash(),
        image: ImageInfo {
            width: screenshot.width(),
            height: screenshot.height(),
            sha256: screenshot.content_hash().to_string(),
        },
        regions,
        detections: elements.len(),
        generation,
        restoration,
        warnings,
    };
    Ok(RunOutput {
        layout,
        tree,
        document,
        report,
        metrics,
    })
}

/// Scores a page against the screenshot. With reference blocks the page side
/// comes from the layout resolver; otherwise both sides are detector blocks,
/// the page side taken from its rasterization.
pub fn score(
    screenshot: &PageImage,
    layout: &LayoutMap,
    document: &GeneratedDocument,
    reference: Option<&BlockSet>,
    config: &PipelineConfig,
) -> Result<Metrics, PipelineError> {
    let viewport = (screenshot.width(), screenshot.height());
    let (source, reference, candidate) = match reference {
        Some(r) => (MetricsSource::Ocr, r.clone(), crate::eval::resolve_blocks(document, viewport)?),
        None => {
            let rendered = PageImage::from_rgba(rasterize(document, viewport)?);
            (
                MetricsSource::Detector,
                detector_blocks(screenshot, layout, &config.mapper),
                detector_blocks(&rendered, layout, &config.mapper),
            )
        }
    };
    let (rewards, matching) = evaluate(&reference, &candidate, &config.eval)?;
    Ok(Metrics {
        schema_version: REPORT_SCHEMA_VERSION,
        source,
        reference_blocks: reference.blocks.len(),
        candidate_blocks: candidate.blocks.len(),
        matched: matching.pairs.len(),
        rewards,
    })
}

/// Detector boxes as image blocks colored by their pixel mean.
pub fn detector_blocks(image: &PageImage, layout: &LayoutMap, config: &MapperConfig) -> BlockSet {
    let (w, h) = (image.width() as f64, image.height() as f64);
    let blocks = detect_in_regions(image, layout, &config.detector)
        .into_iter()
        .filter_map(|e| {
            let window = pixel_window(image.rgba(), &e.rect)?;
            Some(Block {
                rect: NormRect::new(e.rect.x / w, e.rect.y / h, e.rect.w / w, e.rect.h / h).ok()?,
                text: String::new(),
                mean_color: mean_color(image.rgba(), window),
                kind: BlockKind::Image,
            })
        })
        .collect();
    BlockSet {
        blocks,
        source: BlockSource::Detector,
    }
}

/// Reads `<stem>.blocks.json` next to an image when present.
pub fn sidecar_blocks(image_path: &Path) -> Result<Option<(BlockSet, Vec<String>)>, PipelineError> {
    let path = sidecar_path(image_path);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    Ok(Some(ingest_ocr_blocks(&text)?))
}

pub fn sidecar_path(image_path: &Path) -> PathBuf {
    let stem = image_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    image_path.with_file_name(format!("{stem}.blocks.json"))
}

/// How restored patches are stored next to `index.html`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetMode {
    #[default]
    Inline,
    /// Patches go to `assets/` and are referenced relatively.
    Directory,
}

pub const ASSET_DIR: &str = "assets";

/// Moves inline PNG data URIs of `img` elements into `dir`, rewriting their
/// sources to `<prefix><name>`. Names are content hashes, so identical
/// patches share a file.
pub fn externalize_images(doc: &GeneratedDocument, dir: &Path, prefix: &str) -> Result<GeneratedDocument, PipelineError> {
    use sha2::{Digest, Sha256};
    fn visit(el: &mut Element, dir: &Path, prefix: &str) -> Result<(), PipelineError> {
        if el.tag == "img" {
            if let Some(payload) = el.attrs.get("src").and_then(|s| s.strip_prefix("data:image/png;base64,")) {
                if let Ok(bytes) = base64::engine::general_purpose::STANDARD.decode(payload) {
                    let name = format!("{}.png", &hex::encode(Sha256::digest(&bytes))[..16]);
                    let path = dir.join(&name);
                    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
                    std::fs::write(&path, &bytes).map_err(io_err(&path))?;
                    el.attrs.insert("src".into(), format!("{prefix}{name}"));
                }
            }
        }
        for c in &mut el.children {
            if let Node::Element(c) = c {
                visit(c, dir, prefix)?;
            }
        }
        Ok(())
    }
    let mut out = doc.clone();
    visit(&mut out.root, dir, prefix)?;
    Ok(out)
}

/// Writes the five run artifacts into `dir`.
pub fn write_artifacts(out: &RunOutput, dir: &Path, assets: AssetMode) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let doc = match assets {
        AssetMode::Inline => out.document.clone(),
        AssetMode::Directory => externalize_images(&out.document, &dir.join(ASSET_DIR), &format!("{ASSET_DIR}/"))?,
    };
    let files = [
        (LAYOUT_FILE, out.layout.to_json()),
        (TREE_FILE, serialize_tree(&out.tree)),
        (HTML_FILE, render_html(&doc)),
        (REPORT_FILE, to_canonical_json(&out.report)),
        (
            METRICS_FILE,
            match &out.metrics {
                Some(m) => to_canonical_json(m),
                None => "null".into(),
            },
        ),
    ];
    for (name, body) in files {
        write_atomic(&dir.join(name), body.as_bytes())?;
    }
    Ok(())
}

/// Writes through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_default()
    ));
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::{MockGenerationBackend, TemplateBackend};
    use crate::geometry::Rect;
    use crate::grounding::MockGroundingBackend;
    use image::{Rgba, RgbaImage};

    fn fill(img: &mut RgbaImage, (x, y, w, h): (u32, u32, u32, u32), c: [u8; 3]) {
        for yy in y..y + h {
            for xx in x..x + w {
                img.put_pixel(xx, yy, Rgba([c[0], c[1], c[2], 255]));
            }
        }
    }

    /// Header band with two logos, a sidebar and a main area with photos.
    fn screenshot() -> PageImage {
        let mut img = RgbaImage::from_pixel(400, 300, Rgba([255, 255, 255, 255]));
        fill(&mut img, (0, 0, 400, 40), [230, 230, 240]);
        fill(&mut img, (10, 8, 24, 24), [200, 40, 40]);
        fill(&mut img, (44, 8, 24, 24), [40, 40, 200]);
        fill(&mut img, (0, 40, 80, 260), [240, 240, 230]);
        fill(&mut img, (100, 60, 120, 90), [30, 160, 60]);
        fill(&mut img, (250, 60, 120, 90), [160, 90, 30]);
        PageImage::from_rgba(img)
    }

    fn grounding_backend(img: &PageImage) -> MockGroundingBackend {
        let h = img.content_hash();
        MockGroundingBackend::new()
            .with_box(h, "header", Rect::new(0.0, 0.0, 400.0, 40.0).unwrap(), 0.9)
            .with_box(h, "sidebar", Rect::new(0.0, 40.0, 80.0, 260.0).unwrap(), 0.9)
            .with_box(h, "navigation", Rect::new(80.0, 40.0, 320.0, 10.0).unwrap(), 0.8)
    }

    #[test]
    fn full_run_restores_every_detected_image() {
        let shot = screenshot();
        let g = grounding_backend(&shot);
        let backends = Backends {
            grounding: &g,
            generation: &TemplateBackend,
        };
        let out = run(&shot, &backends, RunInputs::default(), &PipelineConfig::default()).unwrap();
        assert_eq!(out.status(), RunStatus::Ok);
        assert!(out.tree.find("header.grid").is_some());
        assert!(out.tree.find("main_content.grid").is_some());
        let restoration = out.report.restoration.as_ref().unwrap();
        assert_eq!(restoration.restored.len(), 4, "{restoration:?}");
        assert!(restoration.restored.iter().all(|r| r.ciou > 0.95));
        let m = out.metrics.as_ref().unwrap();
        assert_eq!(m.source, MetricsSource::Detector);
        assert!(m.rewards.composite > 0.9, "{m:?}");
    }

    #[test]
    fn runs_are_deterministic_and_artifacts_complete() {
        let shot = screenshot();
        let g = grounding_backend(&shot);
        let backends = Backends {
            grounding: &g,
            generation: &TemplateBackend,
        };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        for dir in [a.path(), b.path()] {
            let out = run(&shot, &backends, RunInputs::default(), &PipelineConfig::default()).unwrap();
            write_artifacts(&out, dir, AssetMode::Directory).unwrap();
        }
        for f in [LAYOUT_FILE, TREE_FILE, HTML_FILE, REPORT_FILE, METRICS_FILE] {
            let (x, y) = (std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
            assert_eq!(x, y, "{f}");
        }
        assert_eq!(std::fs::read_dir(a.path().join(ASSET_DIR)).unwrap().count(), 4);
        let html = std::fs::read_to_string(a.path().join(HTML_FILE)).unwrap();
        assert!(html.contains("src=\"assets/") && !html.contains("data:image"));
    }

    #[test]
    fn substitution_marks_the_run_degraded() {
        let shot = screenshot();
        let g = grounding_backend(&shot);
        let gen = MockGenerationBackend::new().with_unreachable("sidebar");
        let backends = Backends {
            grounding: &g,
            generation: &gen,
        };
        let out = run(&shot, &backends, RunInputs::default(), &PipelineConfig::default()).unwrap();
        assert_eq!(out.status(), RunStatus::Degraded);
        assert_eq!(out.report.generation.substitutions(), 1);
    }

    #[test]
    fn regenerate_touches_only_the_subtree() {
        let shot = screenshot();
        let g = grounding_backend(&shot);
        let backends = Backends {
            grounding: &g,
            generation: &TemplateBackend,
        };
        let config = PipelineConfig::default();
        let out = run(&shot, &backends, RunInputs::default(), &config).unwrap();
        let elements = detect_in_regions(&shot, &out.layout, &config.mapper.detector);
        let gen = MockGenerationBackend::new().with_fragment("sidebar", Some("darker"), "<nav class=\"bg-gray-700\"><p>Menu</p></nav>");
        let re = regenerate_subtree(
            &shot,
            &out.layout,
            &out.tree,
            &out.document,
            &elements,
            out.report.restoration.as_ref(),
            "sidebar",
            Some("darker"),
            &gen,
            None,
            &config,
        )
        .unwrap();
        assert_eq!(re.nodes.keys().collect::<Vec<_>>(), ["sidebar"]);
        let find = |d: &GeneratedDocument, id: &str| d.root.find_by_ref(id).cloned();
        assert_ne!(find(&re.document, "sidebar"), find(&out.document, "sidebar"));
        assert!(find(&re.document, "sidebar").unwrap().walk().iter().any(|e| e.has_class("bg-gray-700")));
        for id in ["header", "main_content"] {
            assert_eq!(find(&re.document, id), find(&out.document, id), "{id}");
        }
        assert_eq!(re.restoration.restored.len(), 4);

        let again = regenerate_subtree(
            &shot,
            &out.layout,
            &out.tree,
            &out.document,
            &elements,
            out.report.restoration.as_ref(),
            "main_content",
            None,
            &TemplateBackend,
            None,
            &config,
        )
        .unwrap();
        assert_eq!(again.document, out.document);
        assert_eq!(again.restoration.restored.len(), 4);
        let unknown = regenerate_subtree(
            &shot, &out.layout, &out.tree, &out.document, &elements, None, "nope", None, &TemplateBackend, None, &config,
        );
        assert!(matches!(unknown, Err(PipelineError::Generation(GenerationError::UnknownNode(_)))));
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.eval.weights = [0.5, 0.25, 0.25];
        assert_ne!(a.hash(), b.hash());
    }
}
