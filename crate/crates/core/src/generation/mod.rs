//! Code generation: per-node prompts, backend calls with template
//! substitution on failure, and deterministic assembly of the document.
//!
//! Every leaf of the layout tree is generated independently. Its fragment is
//! wrapped in a `<div data-node=...>`; assembly then positions top-level
//! wrappers as absolute `.box` elements and grid members with cell classes.

mod backend;
mod document;
pub mod html;
mod prompt;
pub mod vocab;

pub use backend::{
    template_fragment, GenerationBackend, GenerationRequest, HttpGenerationBackend, MockFragment,
    MockGenerationBackend, MockGenerationFixture, TemplateBackend, IMAGE_LABELS,
};
pub use document::{parse_html, render_html, DocumentError, GeneratedDocument, ROOT_STYLE};
pub use prompt::{build_prompt, ComponentPrompt, GENERIC_TEMPLATE};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{with_retries, BackendError};
use crate::planning::{LayoutNode, LayoutTree, ROOT_ID};
use crate::geometry::NormRect;
use crate::raster::PageImage;
use html::{parse_fragment, sanitize, Element, HtmlError, Node};
use vocab::{GAP_UNIT_PX, MAX_GAP};

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("no prompt template for label `{0}` and the generic template is disabled")]
    UnknownLabel(String),
    #[error("no node `{0}` in the layout tree")]
    UnknownNode(String),
    #[error("missing fragments for nodes: {}", .0.join(", "))]
    MissingFragments(Vec<String>),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("unparseable fragment: {0}")]
    Fragment(#[from] HtmlError),
    #[error("fragment is empty after sanitization")]
    EmptyFragment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub generic_template: bool,
    pub max_retries: u32,
    /// Send the node's screenshot crop along with the prompt.
    pub attach_image: bool,
    /// Per-node user instructions.
    pub instructions: BTreeMap<String, String>,
    /// Substitute the template fragment for failed nodes instead of failing.
    pub substitute: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            generic_template: true,
            max_retries: 2,
            attach_image: false,
            instructions: BTreeMap::new(),
            substitute: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Ok,
    Substituted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub backend: String,
    pub template_id: String,
    pub status: NodeStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
}

/// Per-node outcome of a generation run; written as the report sidecar.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub nodes: BTreeMap<String, NodeReport>,
}

impl GenerationReport {
    pub fn degraded(&self) -> bool {
        self.nodes.values().any(|n| n.status == NodeStatus::Substituted)
    }

    pub fn substitutions(&self) -> usize {
        self.nodes.values().filter(|n| n.status == NodeStatus::Substituted).count()
    }
}

/// Ids of the nodes that receive a generated fragment, in tree order.
pub fn leaf_ids(tree: &LayoutTree) -> Vec<String> {
    tree.root
        .walk()
        .into_iter()
        .filter(|n| n.is_leaf() && n.id != ROOT_ID)
        .map(|n| n.id.clone())
        .collect()
}

/// Markdown code fences some models put around their answer.
fn strip_fences(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let body = rest.split_once('\n').map_or("", |(_, b)| b);
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

/// Parses and sanitizes a backend answer into a wrapper carrying `node_id`.
pub fn fragment_from_text(node_id: &str, text: &str) -> Result<Element, GenerationError> {
    let nodes = sanitize(parse_fragment(strip_fences(text))?);
    if nodes.is_empty() {
        return Err(GenerationError::EmptyFragment);
    }
    let mut wrapper = Element::new("div");
    wrapper.node_ref = Some(node_id.into());
    wrapper.children = nodes;
    Ok(wrapper)
}

pub fn generate_component(
    prompt: &ComponentPrompt,
    backend: &dyn GenerationBackend,
    max_retries: u32,
    image: Option<&PageImage>,
) -> Result<Element, GenerationError> {
    let text = with_retries(max_retries, || backend.generate(&GenerationRequest { prompt, image }))?;
    fragment_from_text(&prompt.node_id, &text)
}

/// Generates one node, substituting the template fragment when the backend
/// fails or answers with unusable markup and `config.substitute` is set.
pub fn generate_node(
    tree: &LayoutTree,
    node_id: &str,
    backend: &dyn GenerationBackend,
    config: &GenerationConfig,
    screenshot: Option<&PageImage>,
) -> Result<(Element, NodeReport), GenerationError> {
    let instruction = config.instructions.get(node_id).map(String::as_str);
    let prompt = build_prompt(tree, node_id, instruction, config.generic_template)?;
    let crop = match (config.attach_image, screenshot) {
        (true, Some(img)) => crop_node(img, tree, node_id),
        _ => None,
    };
    let mut report = NodeReport {
        backend: backend.id(),
        template_id: prompt.template_id.clone(),
        status: NodeStatus::Ok,
        reason: None,
        instruction: instruction.map(String::from),
    };
    match generate_component(&prompt, backend, config.max_retries, crop.as_ref()) {
        Ok(el) => Ok((el, report)),
        Err(e) if !config.substitute => Err(e),
        Err(e) => {
            log::warn!("node `{node_id}`: {e}; substituting the template fragment");
            report.status = NodeStatus::Substituted;
            report.reason = Some(e.to_string());
            let el = fragment_from_text(node_id, &template_fragment(&prompt.label))?;
            Ok((el, report))
        }
    }
}

fn crop_node(img: &PageImage, tree: &LayoutTree, node_id: &str) -> Option<PageImage> {
    let node = tree.find(node_id)?;
    let r = node.rect.to_pixels(img.width() as f64, img.height() as f64).ok()?;
    let (x, y, w, h) = crate::raster::pixel_window(img.rgba(), &r)?;
    let sub = image::imageops::crop_imm(img.rgba(), x, y, w, h).to_image();
    Some(PageImage::from_rgba(sub))
}

/// Generates every leaf and assembles the document.
pub fn generate(
    tree: &LayoutTree,
    backend: &dyn GenerationBackend,
    config: &GenerationConfig,
    screenshot: Option<&PageImage>,
) -> Result<(GeneratedDocument, GenerationReport), GenerationError> {
    let mut fragments = BTreeMap::new();
    let mut report = GenerationReport::default();
    for id in leaf_ids(tree) {
        let (el, node_report) = generate_node(tree, &id, backend, config, screenshot)?;
        fragments.insert(id.clone(), el);
        report.nodes.insert(id, node_report);
    }
    Ok((assemble(tree, &fragments)?, report))
}

/// Formats a unit fraction as a percentage with two decimals, dropping `.00`.
pub fn percent(v: f64) -> String {
    let s = format!("{:.2}", v * 100.0);
    let s = s.strip_suffix(".00").unwrap_or(&s);
    let s = if s == "-0" { "0" } else { s };
    format!("{s}%")
}

pub fn assemble(
    tree: &LayoutTree,
    fragments: &BTreeMap<String, Element>,
) -> Result<GeneratedDocument, GenerationError> {
    let missing: Vec<String> = leaf_ids(tree)
        .into_iter()
        .filter(|id| !fragments.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(GenerationError::MissingFragments(missing));
    }
    let mut doc = GeneratedDocument::empty(tree.page_size, ROOT_ID);
    for node in ordered(&tree.root.children) {
        let mut el = emit(node, fragments, tree);
        position(&mut el, &node.rect, &NormRect::UNIT);
        doc.root.children.push(Node::Element(el));
    }
    Ok(doc)
}

/// Makes `el` a `.box` placed at `r` relative to `within`.
fn position(el: &mut Element, r: &NormRect, within: &NormRect) {
    el.classes.insert(0, "box".into());
    let rel = |v: f64, origin: f64, extent: f64| if extent > 0.0 { (v - origin) / extent } else { 0.0 };
    let values = [
        ("left", rel(r.l, within.l, within.w)),
        ("top", rel(r.t, within.t, within.h)),
        ("width", rel(r.w, 0.0, within.w)),
        ("height", rel(r.h, 0.0, within.h)),
    ];
    for (prop, v) in values {
        el.set_style(prop, percent(v));
    }
}

fn ordered(nodes: &[LayoutNode]) -> Vec<&LayoutNode> {
    let mut v: Vec<&LayoutNode> = nodes.iter().collect();
    v.sort_by(|a, b| a.order_index.cmp(&b.order_index).then_with(|| a.id.cmp(&b.id)));
    v
}

fn emit(node: &LayoutNode, fragments: &BTreeMap<String, Element>, tree: &LayoutTree) -> Element {
    let mut el = if node.is_leaf() {
        let f = &fragments[&node.id];
        let mut el = Element::new("div");
        el.children = f.children.clone();
        el
    } else {
        Element::new("div")
    };
    el.node_ref = Some(node.id.clone());
    if let Some(grid) = &node.grid {
        let width_px = node.rect.w * tree.page_size.width as f64;
        let gap = ((grid.gap * width_px / GAP_UNIT_PX).round() as u32).min(MAX_GAP);
        el.classes = vec![
            "container".into(),
            "grid".into(),
            format!("grid-cols-{}", grid.columns),
            format!("grid-rows-{}", grid.rows),
            format!("gap-{gap}"),
        ];
    }
    for child in ordered(&node.children) {
        let mut c = emit(child, fragments, tree);
        if child.grid.is_some() {
            position(&mut c, &child.rect, &node.rect);
        }
        if let Some(cell) = node.grid.as_ref().and_then(|g| g.cell_assignments.get(&child.id)) {
            let mut cls = vec![
                format!("col-start-{}", cell.col_start + 1),
                format!("col-span-{}", cell.col_span),
                format!("row-start-{}", cell.row_start + 1),
                format!("row-span-{}", cell.row_span),
            ];
            cls.append(&mut c.classes);
            c.classes = cls;
        }
        el.children.push(Node::Element(c));
    }
    el
}

/// The per-leaf fragments of an assembled document, as [`assemble`] expects them.
pub fn extract_fragments(doc: &GeneratedDocument, tree: &LayoutTree) -> BTreeMap<String, Element> {
    leaf_ids(tree)
        .into_iter()
        .filter_map(|id| {
            let found = doc.root.find_by_ref(&id)?;
            let mut el = Element::new("div");
            el.node_ref = Some(id.clone());
            el.children = found.children.clone();
            Some((id, el))
        })
        .collect()
}
