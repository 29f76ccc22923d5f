//! Generation backends: the offline template backend, a fixture-driven mock
//! and the HTTP client for a remote language model.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::prompt::ComponentPrompt;
use crate::backend::{BackendError, HttpEndpoint};
use crate::raster::PageImage;

pub struct GenerationRequest<'a> {
    pub prompt: &'a ComponentPrompt,
    /// Crop of the node's region, sent only when image attachment is enabled.
    pub image: Option<&'a PageImage>,
}

pub trait GenerationBackend: Send + Sync {
    fn id(&self) -> String;
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError>;
}

/// Labels rendered as gray image placeholders by the template backend.
pub const IMAGE_LABELS: [&str; 2] = ["image", "icon"];

/// Deterministic fragment for a label: a gray placeholder for image-like
/// leaves, otherwise a gray block showing the label.
pub fn template_fragment(label: &str) -> String {
    if IMAGE_LABELS.contains(&label) {
        "<div class=\"placeholder bg-gray-400 w-full h-full\"></div>".into()
    } else {
        format!("<div class=\"bg-gray-400 w-full h-full\">{}</div>", escape(label))
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Debug, Clone, Default)]
pub struct TemplateBackend;

impl GenerationBackend for TemplateBackend {
    fn id(&self) -> String {
        "template".into()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        Ok(template_fragment(&request.prompt.label))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockFragment {
    /// Node id or label the entry answers for; node ids take precedence.
    pub target: String,
    /// Matches only this instruction when set, any instruction otherwise.
    #[serde(default)]
    pub instruction: Option<String>,
    #[serde(default)]
    pub html: Option<String>,
    #[serde(default)]
    pub unreachable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockGenerationFixture {
    pub version: u32,
    pub fragments: Vec<MockFragment>,
}

/// Fixture-driven backend; prompts without a fixture entry get the template
/// fragment.
#[derive(Debug, Clone, Default)]
pub struct MockGenerationBackend {
    entries: BTreeMap<(String, Option<String>), MockFragment>,
}

impl MockGenerationBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_fixture(fixture: MockGenerationFixture) -> Self {
        let mut me = Self::new();
        for f in fixture.fragments {
            me.entries.insert((f.target.clone(), f.instruction.clone()), f);
        }
        me
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Protocol(format!("{}: {e}", path.display())))?;
        let fixture: MockGenerationFixture = serde_json::from_str(&text)
            .map_err(|e| BackendError::Protocol(format!("{}: {e}", path.display())))?;
        Ok(Self::from_fixture(fixture))
    }

    pub fn with_fragment(mut self, target: &str, instruction: Option<&str>, html: &str) -> Self {
        let f = MockFragment {
            target: target.into(),
            instruction: instruction.map(String::from),
            html: Some(html.into()),
            unreachable: false,
        };
        self.entries.insert((f.target.clone(), f.instruction.clone()), f);
        self
    }

    pub fn with_unreachable(mut self, target: &str) -> Self {
        let f = MockFragment {
            target: target.into(),
            instruction: None,
            html: None,
            unreachable: true,
        };
        self.entries.insert((f.target.clone(), None), f);
        self
    }

    fn lookup(&self, prompt: &ComponentPrompt) -> Option<&MockFragment> {
        let instr = prompt.user_instruction.clone();
        [&prompt.node_id, &prompt.label].into_iter().find_map(|target| {
            self.entries
                .get(&(target.clone(), instr.clone()))
                .or_else(|| self.entries.get(&(target.clone(), None)))
        })
    }
}

impl GenerationBackend for MockGenerationBackend {
    fn id(&self) -> String {
        "mock".into()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        match self.lookup(request.prompt) {
            Some(f) if f.unreachable => Err(BackendError::Unreachable(format!(
                "mock marks `{}` unreachable",
                f.target
            ))),
            Some(f) => Ok(f.html.clone().unwrap_or_default()),
            None => Ok(template_fragment(&request.prompt.label)),
        }
    }
}

#[derive(Debug, Serialize)]
struct WireRequest<'a> {
    node_id: &'a str,
    label: &'a str,
    template_id: &'a str,
    prompt: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_base64: Option<String>,
}

pub struct HttpGenerationBackend {
    endpoint: HttpEndpoint,
}

impl HttpGenerationBackend {
    pub fn new(endpoint: HttpEndpoint) -> Self {
        Self { endpoint }
    }
}

impl GenerationBackend for HttpGenerationBackend {
    fn id(&self) -> String {
        format!("http:{}", self.endpoint.url)
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let image_base64 = match request.image {
            Some(img) => Some(img.to_base64_png().map_err(|e| BackendError::Protocol(e.to_string()))?),
            None => None,
        };
        let p = request.prompt;
        let body = WireRequest {
            node_id: &p.node_id,
            label: &p.label,
            template_id: &p.template_id,
            prompt: &p.text,
            image_base64,
        };
        let text = self.endpoint.post_json(&body)?;
        // either a bare fragment or {"html": "..."}
        match serde_json::from_str::<serde_json::Value>(&text) {
            Ok(serde_json::Value::Object(o)) => o
                .get("html")
                .and_then(|h| h.as_str())
                .map(String::from)
                .ok_or_else(|| BackendError::Protocol("response object lacks an `html` string".into())),
            _ => Ok(text),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prompt(node_id: &str, label: &str, instruction: Option<&str>) -> ComponentPrompt {
        ComponentPrompt {
            node_id: node_id.into(),
            label: label.into(),
            layout_context: String::new(),
            user_instruction: instruction.map(String::from),
            template_id: "generic".into(),
            text: String::new(),
        }
    }

    fn ask(b: &dyn GenerationBackend, p: &ComponentPrompt) -> Result<String, BackendError> {
        b.generate(&GenerationRequest { prompt: p, image: None })
    }

    #[test]
    fn template_output() {
        let p = prompt("header", "header", None);
        assert_eq!(
            ask(&TemplateBackend, &p).unwrap(),
            "<div class=\"bg-gray-400 w-full h-full\">header</div>"
        );
        assert!(ask(&TemplateBackend, &prompt("x.grid.0", "image", None)).unwrap().contains("placeholder"));
    }

    #[test]
    fn mock_prefers_node_then_instruction() {
        let m = MockGenerationBackend::new()
            .with_fragment("sidebar", None, "<nav>light</nav>")
            .with_fragment("sidebar", Some("use dark theme"), "<nav class=\"bg-gray-900\">dark</nav>")
            .with_unreachable("header");
        assert_eq!(ask(&m, &prompt("sidebar", "sidebar", None)).unwrap(), "<nav>light</nav>");
        assert!(ask(&m, &prompt("sidebar", "sidebar", Some("use dark theme"))).unwrap().contains("dark"));
        assert!(ask(&m, &prompt("sidebar", "sidebar", Some("other"))).unwrap().contains("light"));
        assert!(ask(&m, &prompt("header", "header", None)).is_err());
        assert!(ask(&m, &prompt("n", "footer", None)).unwrap().contains("footer"));
    }

    #[test]
    fn fixture_round_trip() {
        let fx = MockGenerationFixture {
            version: 1,
            fragments: vec![MockFragment {
                target: "header".into(),
                instruction: None,
                html: Some("<h1>x</h1>".into()),
                unreachable: false,
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gen.json");
        std::fs::write(&path, serde_json::to_string(&fx).unwrap()).unwrap();
        let m = MockGenerationBackend::load(&path).unwrap();
        assert_eq!(ask(&m, &prompt("header", "header", None)).unwrap(), "<h1>x</h1>");
    }
}
