//! Restoration of screenshot image patches into gray placeholder slots.
//!
//! Detections are partitioned by layout region, each region is mapped into
//! render space by its own axis-aligned transform, and slots are paired with
//! transformed detections by minimum total negative CIoU.

mod detect;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use base64::Engine;
use image::imageops;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use detect::{
    detect_elements_baseline, ingest_detections, DetectedElement, DetectionFile, DetectorConfig, ElementKind,
    DETECTION_SCHEMA_VERSION,
};

use crate::eval::{resolve_document, Resolution, ResolveError};
use crate::generation::html::{Element, Node, PLACEHOLDER_CLASS};
use crate::generation::vocab::{parse_class, Utility};
use crate::generation::GeneratedDocument;
use crate::geometry::{ciou, fit_affine, hungarian_min_cost, intersection_area, AffineTransform, CostMatrix, Rect};
use crate::grounding::LayoutMap;
use crate::raster::{encode_png, pixel_window, ImageError, PageImage};

#[derive(Debug, Error)]
pub enum PlaceholderError {
    #[error("region `{0}` is degenerate")]
    DegenerateRegion(String),
    #[error("invalid detection file: {0}")]
    Detections(String),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("cannot write asset {path}: {source}")]
    Asset {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionPartition {
    pub regions: BTreeMap<String, Vec<DetectedElement>>,
    pub unassigned: Vec<DetectedElement>,
}

/// Assigns each element to the region it overlaps most; ties go to the
/// lexicographically first label.
pub fn partition_by_region(elements: &[DetectedElement], layout: &LayoutMap) -> RegionPartition {
    let mut out = RegionPartition::default();
    for e in elements {
        let mut best: Option<(&str, f64)> = None;
        for (label, entry) in &layout.entries {
            let a = intersection_area(&e.rect, &entry.rect);
            if a > 0.0 && best.is_none_or(|(_, b)| a > b) {
                best = Some((label, a));
            }
        }
        match best {
            Some((label, _)) => out.regions.entry(label.to_string()).or_default().push(e.clone()),
            None => out.unassigned.push(e.clone()),
        }
    }
    out
}

/// Fits the corner correspondence `src -> dst` and applies it to every element.
pub fn align_region(
    elements: &[DetectedElement],
    src: &Rect,
    dst: &Rect,
) -> Result<(AffineTransform, Vec<DetectedElement>), PlaceholderError> {
    let degenerate = |r: &Rect| !(r.w > 0.0 && r.h > 0.0);
    if degenerate(src) || degenerate(dst) {
        return Err(PlaceholderError::DegenerateRegion(format!("{src:?} -> {dst:?}")));
    }
    let fit = fit_affine(&src.corners(), &dst.corners())
        .map_err(|e| PlaceholderError::DegenerateRegion(e.to_string()))?;
    let t = fit.transform;
    let mapped = elements
        .iter()
        .map(|e| {
            let (x0, y0) = t.apply_point((e.rect.x, e.rect.y));
            let (x1, y1) = t.apply_point((e.rect.right(), e.rect.bottom()));
            DetectedElement {
                rect: Rect {
                    x: x0,
                    y: y0,
                    w: x1 - x0,
                    h: y1 - y0,
                },
                ..e.clone()
            }
        })
        .collect();
    Ok((t, mapped))
}

/// A placeholder element of a document, addressed by its pre-order position
/// among placeholders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceholderSlot {
    pub ordinal: usize,
    pub path: String,
    /// Nearest enclosing element carrying a node reference.
    pub owner: Option<String>,
    #[serde(rename = "box")]
    pub rect: Rect,
}

pub fn collect_slots(resolution: &Resolution) -> Vec<PlaceholderSlot> {
    resolution
        .elements
        .iter()
        .filter(|e| e.placeholder)
        .enumerate()
        .map(|(ordinal, e)| PlaceholderSlot {
            ordinal,
            path: e.path.clone(),
            owner: owner_of(&e.path),
            rect: e.rect,
        })
        .collect()
}

fn owner_of(path: &str) -> Option<String> {
    let head = path.split('/').next()?;
    let start = head.find("[data-node=")? + "[data-node=".len();
    Some(head[start..head.len() - 1].to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotMatch {
    pub slot: usize,
    pub element: usize,
    pub ciou: f64,
}

/// Indices refer to the slot and element lists given to [`match_placeholders`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<SlotMatch>,
    pub unmatched_slots: Vec<usize>,
    pub unmatched_elements: Vec<usize>,
}

/// Default CIoU below which an assigned pair is rejected.
pub const DEFAULT_CIOU_FLOOR: f64 = 0.0;

pub fn match_placeholders(slots: &[PlaceholderSlot], elements: &[DetectedElement], floor: f64) -> MatchResult {
    let mut result = MatchResult::default();
    let mut slot_used = vec![false; slots.len()];
    let mut element_used = vec![false; elements.len()];
    if !slots.is_empty() && !elements.is_empty() {
        let costs = CostMatrix::from_fn(slots.len(), elements.len(), |i, j| -ciou(&slots[i].rect, &elements[j].rect))
            .expect("ciou is finite for valid rects");
        for (i, j) in hungarian_min_cost(&costs) {
            let c = -costs.get(i, j);
            if c >= floor {
                slot_used[i] = true;
                element_used[j] = true;
                result.pairs.push(SlotMatch {
                    slot: i,
                    element: j,
                    ciou: c,
                });
            }
        }
    }
    result.unmatched_slots = (0..slots.len()).filter(|&i| !slot_used[i]).collect();
    result.unmatched_elements = (0..elements.len()).filter(|&j| !element_used[j]).collect();
    result
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Embedding {
    DataUri,
    /// Patches are written to `dir/<stem>-<ordinal>.png` and referenced as
    /// `<href_prefix><stem>-<ordinal>.png`.
    AssetDir { dir: PathBuf, href_prefix: String, stem: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestoredSlot {
    pub slot: usize,
    pub owner: Option<String>,
    #[serde(rename = "source_box")]
    pub source: Rect,
    pub ciou: f64,
    pub src: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RestorationReport {
    pub restored: Vec<RestoredSlot>,
    pub unmatched_slots: Vec<usize>,
    pub unmatched_elements: usize,
    pub warnings: Vec<String>,
}

/// Replaces each matched placeholder with an `img` carrying the screenshot
/// patch under the element's original box. Layout classes, inline style and
/// node reference survive; the placeholder marker and gray fill do not.
///
/// `originals` holds the untransformed boxes in the order `matches` indexes.
pub fn restore_images(
    doc: &GeneratedDocument,
    slots: &[PlaceholderSlot],
    originals: &[DetectedElement],
    matches: &MatchResult,
    screenshot: &PageImage,
    embedding: &Embedding,
) -> Result<(GeneratedDocument, RestorationReport), PlaceholderError> {
    let mut report = RestorationReport {
        unmatched_slots: matches.unmatched_slots.iter().map(|&i| slots[i].ordinal).collect(),
        unmatched_elements: matches.unmatched_elements.len(),
        ..Default::default()
    };
    let mut replacements: BTreeMap<usize, String> = BTreeMap::new();
    let page = screenshot.page_rect();
    for m in &matches.pairs {
        let slot = &slots[m.slot];
        let source = originals[m.element].rect;
        let Some(clipped) = source.clip_to(&page) else {
            report
                .warnings
                .push(format!("slot {} source box lies outside the screenshot; left gray", slot.ordinal));
            report.unmatched_slots.push(slot.ordinal);
            continue;
        };
        if clipped != source {
            report
                .warnings
                .push(format!("slot {} source box clipped to the screenshot", slot.ordinal));
        }
        let (x, y, w, h) = pixel_window(screenshot.rgba(), &clipped).expect("clipped box is non-empty");
        let patch = imageops::crop_imm(screenshot.rgba(), x, y, w, h).to_image();
        let png = encode_png(&patch)?;
        let src = match embedding {
            Embedding::DataUri => format!(
                "data:image/png;base64,{}",
                base64::engine::general_purpose::STANDARD.encode(&png)
            ),
            Embedding::AssetDir { dir, href_prefix, stem } => {
                let name = format!("{stem}-{}.png", slot.ordinal);
                let path = dir.join(&name);
                std::fs::create_dir_all(dir)
                    .and_then(|_| std::fs::write(&path, &png))
                    .map_err(|source| PlaceholderError::Asset { path, source })?;
                format!("{href_prefix}{name}")
            }
        };
        report.restored.push(RestoredSlot {
            slot: slot.ordinal,
            owner: slot.owner.clone(),
            source: clipped,
            ciou: m.ciou,
            src: src.clone(),
        });
        replacements.insert(slot.ordinal, src);
    }
    report.unmatched_slots.sort_unstable();
    report.restored.sort_by_key(|r| r.slot);
    let mut out = doc.clone();
    let mut counter = 0;
    rewrite(&mut out.root, &replacements, &mut counter);
    Ok((out, report))
}

fn image_element(placeholder: &Element, src: &str) -> Element {
    let mut img = Element::new("img");
    img.classes = placeholder
        .classes
        .iter()
        .filter(|c| c.as_str() != PLACEHOLDER_CLASS && !matches!(parse_class(c), Some(Utility::BgGray(_))))
        .cloned()
        .collect();
    img.style = placeholder.style.clone();
    img.node_ref = placeholder.node_ref.clone();
    img.attrs.insert("src".into(), src.into());
    img.attrs.insert("alt".into(), String::new());
    img
}

/// Pre-order traversal matching [`collect_slots`] ordinals.
fn rewrite(el: &mut Element, replacements: &BTreeMap<usize, String>, counter: &mut usize) {
    if el.is_placeholder() {
        if let Some(src) = replacements.get(counter) {
            *el = image_element(el, src);
        }
        *counter += 1;
        return;
    }
    for child in &mut el.children {
        if let Node::Element(c) = child {
            rewrite(c, replacements, counter);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapperConfig {
    pub ciou_floor: f64,
    pub detector: DetectorConfig,
}

impl Default for MapperConfig {
    fn default() -> Self {
        Self {
            ciou_floor: DEFAULT_CIOU_FLOOR,
            detector: DetectorConfig::default(),
        }
    }
}

/// Limits a mapping pass to part of a document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MappingScope {
    /// Only slots whose owner is listed take part; all do when `None`.
    pub owners: Option<BTreeSet<String>>,
    /// Detections with these exact boxes are already in use elsewhere.
    pub taken: Vec<Rect>,
}

/// Full mapping pass: partition, per-region alignment into the rendered
/// region boxes, matching and restoration. Regions absent from the document
/// keep their elements out of matching.
pub fn map_placeholders(
    doc: &GeneratedDocument,
    layout: &LayoutMap,
    screenshot: &PageImage,
    elements: &[DetectedElement],
    embedding: &Embedding,
    config: &MapperConfig,
) -> Result<(GeneratedDocument, RestorationReport), PlaceholderError> {
    map_placeholders_in(doc, layout, screenshot, elements, embedding, config, &MappingScope::default())
}

pub fn map_placeholders_in(
    doc: &GeneratedDocument,
    layout: &LayoutMap,
    screenshot: &PageImage,
    elements: &[DetectedElement],
    embedding: &Embedding,
    config: &MapperConfig,
    scope: &MappingScope,
) -> Result<(GeneratedDocument, RestorationReport), PlaceholderError> {
    let viewport = (doc.page_size.width, doc.page_size.height);
    let resolution = resolve_document(doc, viewport)?;
    let mut slots = collect_slots(&resolution);
    if let Some(owners) = &scope.owners {
        slots.retain(|s| s.owner.as_ref().is_some_and(|o| owners.contains(o)));
    }
    let free: Vec<DetectedElement> = elements.iter().filter(|e| !scope.taken.contains(&e.rect)).cloned().collect();
    let partition = partition_by_region(&free, layout);
    let mut originals = Vec::new();
    let mut transformed = Vec::new();
    let mut warnings = Vec::new();
    for (label, members) in &partition.regions {
        let src = &layout.entries[label].rect;
        let Some(dst) = resolution.element(label) else {
            warnings.push(format!("region `{label}` has no rendered element; its detections were skipped"));
            continue;
        };
        let (_, mapped) = align_region(members, src, &dst.rect)?;
        originals.extend(members.iter().cloned());
        transformed.extend(mapped);
    }
    let matches = match_placeholders(&slots, &transformed, config.ciou_floor);
    let (out, mut report) = restore_images(doc, &slots, &originals, &matches, screenshot, embedding)?;
    report.unmatched_elements += partition.unassigned.len();
    warnings.append(&mut report.warnings);
    report.warnings = warnings;
    Ok((out, report))
}

/// Detects elements inside each layout region against that region's own
/// background, so regions drawn on a colored band still yield their content.
pub fn detect_in_regions(screenshot: &PageImage, layout: &LayoutMap, config: &DetectorConfig) -> Vec<DetectedElement> {
    let mut out = Vec::new();
    for entry in layout.entries.values() {
        let Some((x, y, w, h)) = pixel_window(screenshot.rgba(), &entry.rect) else {
            continue;
        };
        let crop = PageImage::from_rgba(imageops::crop_imm(screenshot.rgba(), x, y, w, h).to_image());
        for mut e in detect_elements_baseline(&crop, config) {
            e.rect.x += x as f64;
            e.rect.y += y as f64;
            out.push(e);
        }
    }
    out
}
