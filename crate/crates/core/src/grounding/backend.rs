//! Grounding backends and the defensive parser for their responses.
//!
//! A backend answers one textual query per label with free-form text. The
//! text must contain a structured block: a JSON list of
//! `{"label": .., "box": [x, y, w, h], "confidence": ..}` objects (pixels),
//! a `{"regions": [..]}` wrapper, or a single such object. The first
//! well-formed block wins; malformed entries inside it are dropped.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backend::{BackendError, HttpEndpoint};
use crate::geometry::Rect;
use crate::raster::PageImage;

pub struct GroundingRequest<'a> {
    pub image: &'a PageImage,
    pub label: &'a str,
    pub query: &'a str,
}

pub trait GroundingBackend: Send + Sync {
    /// Short identifier recorded in reports and dataset metadata.
    fn id(&self) -> String;

    /// Raw text answer for one label query.
    fn query(&self, request: &GroundingRequest<'_>) -> Result<String, BackendError>;
}

/// One candidate box parsed from a backend answer.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRegion {
    pub label: String,
    pub rect: Rect,
    pub confidence: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedResponse {
    pub regions: Vec<RawRegion>,
    /// Human-readable reasons for every rejected entry or missing block.
    pub rejected: Vec<String>,
}

/// Extracts the first structured block of `text` and validates its entries.
/// Missing confidences default to 1.0.
pub fn parse_regions(text: &str) -> ParsedResponse {
    let mut out = ParsedResponse::default();
    let Some(entries) = first_block(text) else {
        if !text.trim().is_empty() {
            out.rejected.push("no structured block in response".to_string());
        }
        return out;
    };
    for (i, entry) in entries.iter().enumerate() {
        match parse_entry(entry) {
            Ok(r) => out.regions.push(r),
            Err(why) => out.rejected.push(format!("entry {i}: {why}")),
        }
    }
    out
}

fn first_block(text: &str) -> Option<Vec<Value>> {
    for (pos, ch) in text.char_indices() {
        if ch != '[' && ch != '{' {
            continue;
        }
        let mut stream = serde_json::Deserializer::from_str(&text[pos..]).into_iter::<Value>();
        let Some(Ok(value)) = stream.next() else {
            continue;
        };
        if let Some(entries) = as_entries(value) {
            return Some(entries);
        }
    }
    None
}

fn as_entries(value: Value) -> Option<Vec<Value>> {
    match value {
        Value::Array(items) if items.iter().all(Value::is_object) => Some(items),
        Value::Object(mut map) => match map.remove("regions") {
            Some(Value::Array(items)) => Some(items),
            Some(_) => None,
            None if map.contains_key("label") && map.contains_key("box") => {
                Some(vec![Value::Object(map)])
            }
            None => None,
        },
        _ => None,
    }
}

fn parse_entry(entry: &Value) -> Result<RawRegion, String> {
    let label = entry
        .get("label")
        .and_then(Value::as_str)
        .ok_or("missing string field `label`")?
        .trim()
        .to_string();
    let coords: Vec<f64> = entry
        .get("box")
        .and_then(Value::as_array)
        .ok_or("missing array field `box`")?
        .iter()
        .map(|v| v.as_f64().ok_or("non-numeric box coordinate"))
        .collect::<Result<_, _>>()?;
    if coords.len() != 4 {
        return Err(format!("box has {} coordinates, expected 4", coords.len()));
    }
    let rect = Rect::new(coords[0], coords[1], coords[2], coords[3]).map_err(|e| e.to_string())?;
    let confidence = match entry.get("confidence") {
        None | Some(Value::Null) => 1.0,
        Some(v) => v.as_f64().ok_or("non-numeric confidence")?,
    };
    if !(0.0..=1.0).contains(&confidence) {
        return Err(format!("confidence {confidence} outside [0, 1]"));
    }
    Ok(RawRegion {
        label,
        rect,
        confidence,
    })
}

/// Remote vision-language model reached over HTTP.
///
/// Request body: `{"label", "query", "image_base64"}` with a PNG image.
/// Response body: free text containing the structured block.
pub struct HttpGroundingBackend {
    endpoint: HttpEndpoint,
}

impl HttpGroundingBackend {
    pub fn new(endpoint: HttpEndpoint) -> Self {
        Self { endpoint }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    label: &'a str,
    query: &'a str,
    image_base64: String,
}

impl GroundingBackend for HttpGroundingBackend {
    fn id(&self) -> String {
        format!("http:{}", self.endpoint.url)
    }

    fn query(&self, request: &GroundingRequest<'_>) -> Result<String, BackendError> {
        let image_base64 = request
            .image
            .to_base64_png()
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        self.endpoint.post_json(&WireRequest {
            label: request.label,
            query: request.query,
            image_base64,
        })
    }
}

/// Fixture-driven backend keyed by `(image content hash, label)`.
///
/// An image key of `"*"` matches any image. Labels without a fixture answer
/// with an empty list.
#[derive(Debug, Clone, Default)]
pub struct MockGroundingBackend {
    responses: HashMap<(String, String), MockAnswer>,
}

#[derive(Debug, Clone, PartialEq)]
enum MockAnswer {
    Text(String),
    Unreachable,
}

/// On-disk fixture format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockFixture {
    pub version: u32,
    pub responses: Vec<MockFixtureEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockFixtureEntry {
    /// Content hash of the image, or `"*"`.
    pub image: String,
    pub label: String,
    /// Raw answer text; takes precedence over `regions`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    /// Structured answer, serialized to text when served.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regions: Option<Value>,
    /// Simulates a transport failure for this key.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unreachable: bool,
}

pub const ANY_IMAGE: &str = "*";

impl MockGroundingBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_fixture(fixture: &MockFixture) -> Self {
        let mut m = Self::new();
        for e in &fixture.responses {
            let answer = if e.unreachable {
                MockAnswer::Unreachable
            } else if let Some(t) = &e.text {
                MockAnswer::Text(t.clone())
            } else {
                MockAnswer::Text(
                    e.regions
                        .as_ref()
                        .map(Value::to_string)
                        .unwrap_or_else(|| "[]".to_string()),
                )
            };
            m.responses.insert((e.image.clone(), e.label.clone()), answer);
        }
        m
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Protocol(format!("{}: {e}", path.display())))?;
        let fixture: MockFixture = serde_json::from_str(&text)
            .map_err(|e| BackendError::Protocol(format!("{}: {e}", path.display())))?;
        Ok(Self::from_fixture(&fixture))
    }

    pub fn with_text(mut self, image: &str, label: &str, text: impl Into<String>) -> Self {
        self.responses
            .insert((image.to_string(), label.to_string()), MockAnswer::Text(text.into()));
        self
    }

    /// Answers `label` with a single box.
    pub fn with_box(self, image: &str, label: &str, rect: Rect, confidence: f64) -> Self {
        let body = serde_json::json!([{
            "label": label,
            "box": [rect.x, rect.y, rect.w, rect.h],
            "confidence": confidence,
        }]);
        self.with_text(image, label, body.to_string())
    }

    pub fn with_unreachable(mut self, image: &str, label: &str) -> Self {
        self.responses
            .insert((image.to_string(), label.to_string()), MockAnswer::Unreachable);
        self
    }
}

impl GroundingBackend for MockGroundingBackend {
    fn id(&self) -> String {
        "mock".to_string()
    }

    fn query(&self, request: &GroundingRequest<'_>) -> Result<String, BackendError> {
        let exact = (request.image.content_hash().to_string(), request.label.to_string());
        let any = (ANY_IMAGE.to_string(), request.label.to_string());
        match self.responses.get(&exact).or_else(|| self.responses.get(&any)) {
            Some(MockAnswer::Text(t)) => Ok(t.clone()),
            Some(MockAnswer::Unreachable) => Err(BackendError::Unreachable(format!(
                "mock backend configured unreachable for `{}`",
                request.label
            ))),
            None => Ok("[]".to_string()),
        }
    }
}
