//! The generated document and its standalone HTML serialization.

use std::collections::BTreeSet;

use super::html::{parse_fragment, render_element, Element, HtmlError, Node};
use super::vocab::stylesheet;
use crate::grounding::PageSize;

pub const ROOT_STYLE: [(&str, &str); 3] = [("position", "relative"), ("width", "100%"), ("height", "100%")];
const PAGE_SIZE_META: &str = "page-size";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedDocument {
    pub page_size: PageSize,
    pub root: Element,
}

#[derive(Debug, thiserror::Error)]
pub enum DocumentError {
    #[error(transparent)]
    Markup(#[from] HtmlError),
    #[error("invalid document: {0}")]
    Invalid(String),
}

impl GeneratedDocument {
    /// A document with an empty root container.
    pub fn empty(page_size: PageSize, root_ref: &str) -> Self {
        let mut root = Element::new("div").with_classes(&["root"]);
        root.style = ROOT_STYLE.iter().map(|(p, v)| (p.to_string(), v.to_string())).collect();
        root.node_ref = Some(root_ref.into());
        Self { page_size, root }
    }

    pub fn validate(&self) -> Result<(), DocumentError> {
        for (p, v) in ROOT_STYLE {
            if self.root.style_value(p) != Some(v) {
                return Err(DocumentError::Invalid(format!("root element lacks `{p}: {v}`")));
            }
        }
        let mut refs = BTreeSet::new();
        for el in self.root.walk() {
            if el.tag == "script" || el.attrs.keys().any(|k| k.starts_with("on")) {
                return Err(DocumentError::Invalid("active content in document".into()));
            }
            if let Some(r) = &el.node_ref {
                if !refs.insert(r.as_str()) {
                    return Err(DocumentError::Invalid(format!("node `{r}` referenced twice")));
                }
            }
        }
        Ok(())
    }

    pub fn node_refs(&self) -> BTreeSet<String> {
        self.root.walk().iter().filter_map(|e| e.node_ref.clone()).collect()
    }
}

/// Deterministic standalone page: fixed attribute order, two-space indent,
/// embedded stylesheet, no external resources.
pub fn render_html(doc: &GeneratedDocument) -> String {
    let mut out = String::from("<!DOCTYPE html>\n<html>\n  <head>\n    <meta charset=\"utf-8\">\n");
    out.push_str(&format!(
        "    <meta name=\"{PAGE_SIZE_META}\" content=\"{}x{}\">\n",
        doc.page_size.width, doc.page_size.height
    ));
    out.push_str("    <style>\n");
    out.push_str(&stylesheet());
    out.push_str("    </style>\n  </head>\n  <body>\n");
    render_element(&doc.root, 2, &mut out);
    out.push_str("  </body>\n</html>\n");
    out
}

/// Reads back a page written by [`render_html`].
pub fn parse_html(text: &str) -> Result<GeneratedDocument, DocumentError> {
    let nodes = parse_fragment(text)?;
    let html = single_element(&nodes, "html")
        .ok_or_else(|| DocumentError::Invalid("expected a single <html> element".into()))?;
    let head = html
        .child_elements()
        .find(|e| e.tag == "head")
        .ok_or_else(|| DocumentError::Invalid("missing <head>".into()))?;
    let body = html
        .child_elements()
        .find(|e| e.tag == "body")
        .ok_or_else(|| DocumentError::Invalid("missing <body>".into()))?;
    let page_size = head
        .child_elements()
        .find(|e| e.tag == "meta" && e.attrs.get("name").map(String::as_str) == Some(PAGE_SIZE_META))
        .and_then(|e| e.attrs.get("content"))
        .and_then(|c| c.split_once('x'))
        .and_then(|(w, h)| Some(PageSize { width: w.parse().ok()?, height: h.parse().ok()? }))
        .ok_or_else(|| DocumentError::Invalid("missing or malformed page-size meta".into()))?;
    let root = single_element(&body.children, "div")
        .ok_or_else(|| DocumentError::Invalid("<body> must hold exactly one root <div>".into()))?
        .clone();
    let doc = GeneratedDocument { page_size, root };
    doc.validate()?;
    Ok(doc)
}

fn single_element<'a>(nodes: &'a [Node], tag: &str) -> Option<&'a Element> {
    match nodes {
        [Node::Element(e)] if e.tag == tag => Some(e),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_only_document() {
        let doc = GeneratedDocument::empty(PageSize { width: 1000, height: 800 }, "root");
        let html = render_html(&doc);
        assert!(html.contains(
            "    <div class=\"root\" style=\"position: relative; width: 100%; height: 100%\" data-node=\"root\"></div>\n"
        ));
        let back = parse_html(&html).unwrap();
        assert_eq!(back, doc);
        assert_eq!(render_html(&back), html);
    }

    #[test]
    fn rejects_documents_without_root_style() {
        let doc = GeneratedDocument::empty(PageSize { width: 10, height: 10 }, "root");
        let html = render_html(&doc).replace("position: relative; ", "");
        assert!(matches!(parse_html(&html), Err(DocumentError::Invalid(_))));
    }
}
