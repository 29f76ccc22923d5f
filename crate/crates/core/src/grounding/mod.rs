//! Grounding: labeled structural regions from a screenshot.
//!
//! Each configured label is queried once against a [`GroundingBackend`]. The
//! answers are clipped to the page, deduplicated with class-specific NMS,
//! completed with spatial-prior fallbacks for missing labels, and finally the
//! main content region is inferred as the largest empty rectangle left over
//! (or asked for directly, see [`MainContentMode`]).

mod backend;
mod fallback;

pub use backend::{
    parse_regions, GroundingBackend, GroundingRequest, HttpGroundingBackend, MockFixture,
    MockFixtureEntry, MockGroundingBackend, ParsedResponse, RawRegion, ANY_IMAGE,
};
pub use fallback::{fallback_recover, fallback_recover_guided, FallbackPriors};

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{with_retries, BackendError};
use crate::geometry::{max_empty_rect, nms_per_class, GeometryError, Rect, Scored};
use crate::raster::{ImageError, PageImage};

pub const HEADER: &str = "header";
pub const SIDEBAR: &str = "sidebar";
pub const NAVIGATION: &str = "navigation";
pub const MAIN_CONTENT: &str = "main_content";

pub const LAYOUT_SCHEMA_VERSION: u32 = 1;
pub const MIN_IMAGE_SIDE: u32 = 32;

#[derive(Debug, Error)]
pub enum GroundingError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("no label could be resolved and fallback recovery is disabled")]
    Empty,
    #[error("grounded regions cover the whole page; no main content area remains")]
    FullCoverage,
    #[error("invalid label set: {0}")]
    InvalidLabels(String),
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
}

/// Ordered, duplicate-free set of labels the backend is asked about.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet(Vec<String>);

impl LabelSet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self, GroundingError> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(GroundingError::InvalidLabels("label set is empty".into()));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if l == MAIN_CONTENT {
                return Err(GroundingError::InvalidLabels(
                    "main_content is inferred and cannot be queried as a label".into(),
                ));
            }
            if l.trim().is_empty() || !seen.insert(l.as_str()) {
                return Err(GroundingError::InvalidLabels(format!("bad or duplicate label `{l}`")));
            }
        }
        Ok(Self(labels))
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.0.iter().any(|l| l == label)
    }
}

impl Default for LabelSet {
    fn default() -> Self {
        Self(vec![SIDEBAR.into(), HEADER.into(), NAVIGATION.into()])
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = GroundingError;
    fn try_from(v: Vec<String>) -> Result<Self, Self::Error> {
        LabelSet::new(v)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(s: LabelSet) -> Self {
        s.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionSource {
    Backend,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedRegion {
    #[serde(rename = "box")]
    pub rect: Rect,
    pub label: String,
    pub confidence: f64,
    pub source: RegionSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Backend,
    Fallback,
    Inferred,
}

impl From<RegionSource> for Provenance {
    fn from(s: RegionSource) -> Self {
        match s {
            RegionSource::Backend => Provenance::Backend,
            RegionSource::Fallback => Provenance::Fallback,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageSize {
    pub width: u32,
    pub height: u32,
}

impl PageSize {
    pub fn rect(&self) -> Rect {
        Rect {
            x: 0.0,
            y: 0.0,
            w: self.width as f64,
            h: self.height as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutEntry {
    #[serde(rename = "box")]
    pub rect: Rect,
    pub provenance: Provenance,
}

/// The layout dictionary: one pixel box per resolved label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutMap {
    pub schema_version: u32,
    pub page_size: PageSize,
    pub entries: BTreeMap<String, LayoutEntry>,
}

impl LayoutMap {
    pub fn new(page_size: PageSize) -> Self {
        Self {
            schema_version: LAYOUT_SCHEMA_VERSION,
            page_size,
            entries: BTreeMap::new(),
        }
    }

    pub fn get(&self, label: &str) -> Option<&Rect> {
        self.entries.get(label).map(|e| &e.rect)
    }

    pub fn insert(&mut self, label: impl Into<String>, rect: Rect, provenance: Provenance) {
        self.entries.insert(label.into(), LayoutEntry { rect, provenance });
    }

    /// Checks the invariants a layout received from outside must satisfy.
    pub fn validate(&self) -> Result<(), GroundingError> {
        if self.schema_version != LAYOUT_SCHEMA_VERSION {
            return Err(GroundingError::InvalidLayout(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        if self.page_size.width == 0 || self.page_size.height == 0 {
            return Err(GroundingError::InvalidLayout("empty page size".into()));
        }
        let page = self.page_size.rect();
        for (label, entry) in &self.entries {
            if label.trim().is_empty() {
                return Err(GroundingError::InvalidLayout("empty label".into()));
            }
            if !page.contains(&entry.rect) {
                return Err(GroundingError::InvalidLayout(format!(
                    "box of `{label}` exceeds the page bounds"
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, GroundingError> {
        let map: LayoutMap =
            serde_json::from_str(text).map_err(|e| GroundingError::InvalidLayout(e.to_string()))?;
        map.validate()?;
        Ok(map)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout map serializes")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MainContentMode {
    /// Largest empty rectangle left by the other regions.
    #[default]
    Inferred,
    /// Ask the backend for the main content box, inferring it when absent.
    Prompted,
}

impl std::str::FromStr for MainContentMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inferred" => Ok(Self::Inferred),
            "prompted" => Ok(Self::Prompted),
            other => Err(format!("unknown main content mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundingConfig {
    pub labels: LabelSet,
    /// Query text per label; labels without an entry get a generic query.
    pub queries: BTreeMap<String, String>,
    pub nms_threshold: f64,
    pub fallback: bool,
    pub priors: FallbackPriors,
    pub main_content: MainContentMode,
    pub max_retries: u32,
}

impl Default for GroundingConfig {
    fn default() -> Self {
        let schema = "Answer with a JSON list of objects {\"label\", \"box\": [x, y, width, height], \"confidence\"} in pixel coordinates.";
        let queries = [
            (SIDEBAR, "Where is the sidebar of this page?"),
            (HEADER, "Locate the page header."),
            (NAVIGATION, "Identify the navigation bar."),
            (MAIN_CONTENT, "Where is the main content area of this page?"),
        ]
        .into_iter()
        .map(|(l, q)| (l.to_string(), format!("{q} {schema}")))
        .collect();
        Self {
            labels: LabelSet::default(),
            queries,
            nms_threshold: crate::geometry::DEFAULT_NMS_THRESHOLD,
            fallback: true,
            priors: FallbackPriors::default(),
            main_content: MainContentMode::Inferred,
            max_retries: 2,
        }
    }
}

impl GroundingConfig {
    pub fn query_for(&self, label: &str) -> String {
        self.queries.get(label).cloned().unwrap_or_else(|| {
            format!("Where is the {label}? Answer with a JSON list of objects {{\"label\", \"box\": [x, y, width, height], \"confidence\"}}.")
        })
    }
}

/// Grounding result: the layout dictionary plus the resolved regions behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grounding {
    pub layout: LayoutMap,
    pub regions: Vec<GroundedRegion>,
    pub warnings: Vec<String>,
}

/// Grounds `image` using `config.main_content` to pick the main-content variant.
pub fn ground(
    image: &PageImage,
    backend: &dyn GroundingBackend,
    config: &GroundingConfig,
) -> Result<Grounding, GroundingError> {
    if image.width() < MIN_IMAGE_SIDE || image.height() < MIN_IMAGE_SIDE {
        return Err(ImageError::TooSmall {
            width: image.width(),
            height: image.height(),
            min: MIN_IMAGE_SIDE,
        }
        .into());
    }
    let page = image.page_rect();
    let mut warnings = Vec::new();

    let mut candidates: Vec<Scored<String>> = Vec::new();
    for label in config.labels.iter() {
        candidates.extend(query_label(image, backend, config, label, &page, &mut warnings)?);
    }
    let resolved = resolve_per_label(&candidates, config);
    let mut regions: Vec<GroundedRegion> = resolved
        .into_iter()
        .map(|s| GroundedRegion {
            rect: s.rect,
            label: s.label,
            confidence: s.confidence,
            source: RegionSource::Backend,
        })
        .collect();

    if config.fallback {
        for label in fallback_order(&config.labels) {
            if regions.iter().any(|r| r.label == label) {
                continue;
            }
            match fallback_recover_guided(label, &regions, &page, &config.priors, image.rgba()) {
                Some(r) => regions.push(r),
                None => warnings.push(format!("`{label}` unresolved: no admissible fallback")),
            }
        }
    } else if regions.is_empty() {
        return Err(GroundingError::Empty);
    }

    let mut layout = LayoutMap::new(PageSize {
        width: image.width(),
        height: image.height(),
    });
    for r in &regions {
        layout.insert(r.label.clone(), r.rect, r.source.into());
    }

    if config.main_content == MainContentMode::Prompted {
        let asked = query_label(image, backend, config, MAIN_CONTENT, &page, &mut warnings)?;
        if let Some(best) = resolve_per_label(&asked, config).into_iter().next() {
            layout.insert(MAIN_CONTENT, best.rect, Provenance::Backend);
        }
    }
    if layout.get(MAIN_CONTENT).is_none() {
        match infer_main_content(&page, &regions) {
            Ok(rect) => layout.insert(MAIN_CONTENT, rect, Provenance::Inferred),
            Err(e) => warnings.push(e.to_string()),
        }
    }

    Ok(Grounding {
        layout,
        regions,
        warnings,
    })
}

/// The variant that asks the backend for the main content explicitly.
pub fn ground_direct_main(
    image: &PageImage,
    backend: &dyn GroundingBackend,
    config: &GroundingConfig,
) -> Result<Grounding, GroundingError> {
    let config = GroundingConfig {
        main_content: MainContentMode::Prompted,
        ..config.clone()
    };
    ground(image, backend, &config)
}

/// Largest rectangle of the page not overlapping any resolved region.
pub fn infer_main_content(page: &Rect, resolved: &[GroundedRegion]) -> Result<Rect, GroundingError> {
    let obstacles: Vec<Rect> = resolved.iter().map(|r| r.rect).collect();
    max_empty_rect(page, &obstacles).map_err(|e| match e {
        GeometryError::FullyCovered => GroundingError::FullCoverage,
        other => GroundingError::InvalidLayout(other.to_string()),
    })
}

fn query_label(
    image: &PageImage,
    backend: &dyn GroundingBackend,
    config: &GroundingConfig,
    label: &str,
    page: &Rect,
    warnings: &mut Vec<String>,
) -> Result<Vec<Scored<String>>, GroundingError> {
    let query = config.query_for(label);
    let text = with_retries(config.max_retries, || {
        backend.query(&GroundingRequest {
            image,
            label,
            query: &query,
        })
    })?;
    let parsed = parse_regions(&text);
    warnings.extend(parsed.rejected.iter().map(|w| format!("`{label}` query: {w}")));
    let mut out = Vec::new();
    for raw in parsed.regions {
        if raw.label != label {
            warnings.push(format!(
                "`{label}` query: ignored box labeled `{}`",
                raw.label
            ));
            continue;
        }
        match raw.rect.clip_to(page) {
            Some(rect) => out.push(Scored {
                rect,
                label: raw.label,
                confidence: raw.confidence,
            }),
            None => warnings.push(format!("`{label}` query: box lies outside the page")),
        }
    }
    Ok(out)
}

/// NMS, then the most confident survivor per label (first-seen order kept).
fn resolve_per_label(candidates: &[Scored<String>], config: &GroundingConfig) -> Vec<Scored<String>> {
    let mut seen = HashSet::new();
    nms_per_class(candidates, config.nms_threshold)
        .into_iter()
        .filter(|s| seen.insert(s.label.clone()))
        .collect()
}

/// Header first so navigation can be placed below it; the rest in set order.
fn fallback_order(labels: &LabelSet) -> Vec<&str> {
    let mut order: Vec<&str> = [HEADER, NAVIGATION]
        .into_iter()
        .filter(|l| labels.contains(l))
        .collect();
    order.extend(labels.iter().filter(|l| *l != HEADER && *l != NAVIGATION));
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgba, RgbaImage};

    fn r(x: f64, y: f64, w: f64, h: f64) -> Rect {
        Rect::new(x, y, w, h).unwrap()
    }

    fn blank(w: u32, h: u32) -> PageImage {
        PageImage::from_rgba(RgbaImage::from_pixel(w, h, Rgba([255, 255, 255, 255])))
    }

    fn exact_mock() -> MockGroundingBackend {
        MockGroundingBackend::new()
            .with_box(ANY_IMAGE, HEADER, r(0.0, 0.0, 1000.0, 80.0), 0.95)
            .with_box(ANY_IMAGE, NAVIGATION, r(0.0, 80.0, 1000.0, 40.0), 0.9)
            .with_box(ANY_IMAGE, SIDEBAR, r(0.0, 120.0, 200.0, 680.0), 0.85)
    }

    #[test]
    fn pass_through_exact_boxes() {
        let g = ground(&blank(1000, 800), &exact_mock(), &GroundingConfig::default()).unwrap();
        assert_eq!(g.layout.get(HEADER), Some(&r(0.0, 0.0, 1000.0, 80.0)));
        assert_eq!(g.layout.get(SIDEBAR), Some(&r(0.0, 120.0, 200.0, 680.0)));
        for l in [HEADER, NAVIGATION, SIDEBAR] {
            assert_eq!(g.layout.entries[l].provenance, Provenance::Backend);
        }
        assert_eq!(g.layout.get(MAIN_CONTENT), Some(&r(200.0, 120.0, 800.0, 680.0)));
        assert_eq!(g.layout.entries[MAIN_CONTENT].provenance, Provenance::Inferred);
    }

    #[test]
    fn overlapping_candidates_are_deduplicated() {
        // IoU of the two navigation boxes is 0.8
        let nav = serde_json::json!([
            {"label": "navigation", "box": [0, 100, 1000, 50], "confidence": 0.6},
            {"label": "navigation", "box": [0, 100, 800, 50], "confidence": 0.9},
        ]);
        let mock = exact_mock().with_text(ANY_IMAGE, NAVIGATION, nav.to_string());
        let g = ground(&blank(1000, 800), &mock, &GroundingConfig::default()).unwrap();
        assert_eq!(g.layout.get(NAVIGATION), Some(&r(0.0, 100.0, 800.0, 50.0)));
        assert_eq!(g.regions.iter().filter(|x| x.label == NAVIGATION).count(), 1);
    }

    #[test]
    fn missing_header_recovered_from_top_strip() {
        let mut img = RgbaImage::from_pixel(1000, 800, Rgba([255, 255, 255, 255]));
        // 900 px wide (>= 70%), 60 px tall (<= 12%), starting at y = 20 (within 15%)
        for y in 20..80 {
            for x in 50..950 {
                img.put_pixel(x, y, Rgba([40, 40, 120, 255]));
            }
        }
        let mock = MockGroundingBackend::new()
            .with_box(ANY_IMAGE, SIDEBAR, r(0.0, 200.0, 200.0, 600.0), 0.9);
        let config = GroundingConfig {
            labels: LabelSet::new([SIDEBAR, HEADER]).unwrap(),
            ..Default::default()
        };
        let g = ground(&PageImage::from_rgba(img), &mock, &config).unwrap();
        assert_eq!(g.layout.entries[HEADER].provenance, Provenance::Fallback);
        assert_eq!(g.layout.get(HEADER), Some(&r(50.0, 20.0, 900.0, 60.0)));
    }

    #[test]
    fn prompted_and_inferred_agree_on_consistent_backend() {
        let mock = exact_mock().with_box(ANY_IMAGE, MAIN_CONTENT, r(200.0, 120.0, 800.0, 680.0), 0.9);
        let img = blank(1000, 800);
        let inferred = ground(&img, &mock, &GroundingConfig::default()).unwrap();
        let prompted = ground_direct_main(&img, &mock, &GroundingConfig::default()).unwrap();
        assert_eq!(prompted.layout.entries[MAIN_CONTENT].provenance, Provenance::Backend);
        let boxes = |m: &LayoutMap| -> Vec<(String, Rect)> {
            m.entries.iter().map(|(k, v)| (k.clone(), v.rect)).collect()
        };
        assert_eq!(boxes(&inferred.layout), boxes(&prompted.layout));
    }

    #[test]
    fn prompted_without_answer_falls_back_to_inference() {
        let g = ground_direct_main(&blank(1000, 800), &exact_mock(), &GroundingConfig::default())
            .unwrap();
        assert_eq!(g.layout.entries[MAIN_CONTENT].provenance, Provenance::Inferred);
    }

    #[test]
    fn empty_without_fallback_is_an_error() {
        let config = GroundingConfig {
            fallback: false,
            ..Default::default()
        };
        let err = ground(&blank(100, 100), &MockGroundingBackend::new(), &config).unwrap_err();
        assert!(matches!(err, GroundingError::Empty));
    }

    #[test]
    fn unreachable_backend_propagates() {
        let mock = MockGroundingBackend::new().with_unreachable(ANY_IMAGE, SIDEBAR);
        let err = ground(&blank(100, 100), &mock, &GroundingConfig::default()).unwrap_err();
        assert!(matches!(err, GroundingError::Backend(BackendError::Unreachable(_))));
    }

    #[test]
    fn small_images_are_rejected() {
        let err = ground(&blank(20, 100), &exact_mock(), &GroundingConfig::default()).unwrap_err();
        assert!(matches!(err, GroundingError::Image(ImageError::TooSmall { .. })));
    }

    #[test]
    fn out_of_page_boxes_are_clipped() {
        let mock = MockGroundingBackend::new()
            .with_box(ANY_IMAGE, HEADER, r(0.0, 0.0, 5000.0, 50.0), 1.0);
        let config = GroundingConfig {
            labels: LabelSet::new([HEADER]).unwrap(),
            ..Default::default()
        };
        let g = ground(&blank(400, 300), &mock, &config).unwrap();
        assert_eq!(g.layout.get(HEADER), Some(&r(0.0, 0.0, 400.0, 50.0)));
        g.layout.validate().unwrap();
    }

    #[test]
    fn infer_main_content_cases() {
        let page = r(0.0, 0.0, 1000.0, 800.0);
        assert_eq!(infer_main_content(&page, &[]).unwrap(), page);
        let full = GroundedRegion {
            rect: page,
            label: HEADER.into(),
            confidence: 1.0,
            source: RegionSource::Backend,
        };
        assert!(matches!(
            infer_main_content(&page, &[full]),
            Err(GroundingError::FullCoverage)
        ));
    }

    #[test]
    fn label_set_rules() {
        assert!(LabelSet::new(Vec::<String>::new()).is_err());
        assert!(LabelSet::new([HEADER, HEADER]).is_err());
        assert!(LabelSet::new([MAIN_CONTENT]).is_err());
        assert_eq!(LabelSet::default().iter().collect::<Vec<_>>(), [SIDEBAR, HEADER, NAVIGATION]);
    }

    #[test]
    fn layout_validation() {
        let mut m = LayoutMap::new(PageSize { width: 100, height: 100 });
        m.insert(HEADER, r(0.0, 0.0, 100.0, 10.0), Provenance::Backend);
        m.validate().unwrap();
        let round = LayoutMap::from_json(&m.to_json()).unwrap();
        assert_eq!(round, m);
        m.insert(SIDEBAR, r(50.0, 0.0, 100.0, 10.0), Provenance::Backend);
        assert!(m.validate().is_err());
    }

    #[test]
    fn deterministic_given_deterministic_backend() {
        let img = blank(640, 480);
        let a = ground(&img, &exact_mock(), &GroundingConfig::default()).unwrap();
        let b = ground(&img, &exact_mock(), &GroundingConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
