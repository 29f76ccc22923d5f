//! Element tree for the emitted HTML subset, with a strict parser and a
//! deterministic serializer.
//!
//! The parser accepts well-formed markup only: every non-void element must be
//! closed in order. Whitespace-only text is dropped and text is trimmed, which
//! makes `parse(render(x))` reproduce `x` for every tree the renderer emits.

use std::collections::BTreeMap;

use thiserror::Error;

pub const PLACEHOLDER_CLASS: &str = "placeholder";
pub const NODE_ATTR: &str = "data-node";

const VOID: &[&str] = &[
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "source", "track", "wbr",
];
const RAW_TEXT: &[&str] = &["script", "style"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed markup at byte {offset}: {message}")]
pub struct HtmlError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Element(Element),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Element {
    pub tag: String,
    pub classes: Vec<String>,
    /// Inline style declarations in source order.
    pub style: Vec<(String, String)>,
    pub node_ref: Option<String>,
    /// Every other attribute.
    pub attrs: BTreeMap<String, String>,
    pub children: Vec<Node>,
}

impl Element {
    pub fn new(tag: &str) -> Self {
        Self {
            tag: tag.into(),
            ..Default::default()
        }
    }

    pub fn with_classes(mut self, classes: &[&str]) -> Self {
        self.classes.extend(classes.iter().map(|c| c.to_string()));
        self
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.children.push(Node::Text(text.into()));
        self
    }

    pub fn has_class(&self, class: &str) -> bool {
        self.classes.iter().any(|c| c == class)
    }

    pub fn is_placeholder(&self) -> bool {
        self.has_class(PLACEHOLDER_CLASS)
    }

    pub fn style_value(&self, prop: &str) -> Option<&str> {
        self.style
            .iter()
            .rev()
            .find(|(p, _)| p == prop)
            .map(|(_, v)| v.as_str())
    }

    pub fn set_style(&mut self, prop: &str, value: impl Into<String>) {
        let value = value.into();
        match self.style.iter_mut().find(|(p, _)| p == prop) {
            Some(slot) => slot.1 = value,
            None => self.style.push((prop.into(), value)),
        }
    }

    /// Concatenated direct text children.
    pub fn text(&self) -> String {
        let parts: Vec<&str> = self
            .children
            .iter()
            .filter_map(|c| match c {
                Node::Text(t) => Some(t.as_str()),
                Node::Element(_) => None,
            })
            .collect();
        parts.join(" ")
    }

    pub fn child_elements(&self) -> impl Iterator<Item = &Element> {
        self.children.iter().filter_map(|c| match c {
            Node::Element(e) => Some(e),
            Node::Text(_) => None,
        })
    }

    pub fn child_elements_mut(&mut self) -> impl Iterator<Item = &mut Element> {
        self.children.iter_mut().filter_map(|c| match c {
            Node::Element(e) => Some(e),
            Node::Text(_) => None,
        })
    }

    /// Pre-order walk over this element and its element descendants.
    pub fn walk(&self) -> Vec<&Element> {
        let mut out = vec![self];
        for c in self.child_elements() {
            out.extend(c.walk());
        }
        out
    }

    pub fn find_by_ref(&self, node_ref: &str) -> Option<&Element> {
        if self.node_ref.as_deref() == Some(node_ref) {
            return Some(self);
        }
        self.child_elements().find_map(|c| c.find_by_ref(node_ref))
    }

    pub fn find_by_ref_mut(&mut self, node_ref: &str) -> Option<&mut Element> {
        if self.node_ref.as_deref() == Some(node_ref) {
            return Some(self);
        }
        self.child_elements_mut().find_map(|c| c.find_by_ref_mut(node_ref))
    }
}

pub fn parse_fragment(src: &str) -> Result<Vec<Node>, HtmlError> {
    Parser { src, pos: 0 }.parse()
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, HtmlError> {
        Err(HtmlError {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn parse(mut self) -> Result<Vec<Node>, HtmlError> {
        // open elements; the bottom entry collects top-level nodes
        let mut stack: Vec<Element> = vec![Element::default()];
        while self.pos < self.src.len() {
            let rest = self.rest();
            if let Some(after) = rest.strip_prefix("<!--") {
                match after.find("-->") {
                    Some(end) => self.pos += 4 + end + 3,
                    None => return self.err("unterminated comment"),
                }
            } else if rest.starts_with("<!") {
                match rest.find('>') {
                    Some(end) => self.pos += end + 1,
                    None => return self.err("unterminated declaration"),
                }
            } else if let Some(after) = rest.strip_prefix("</") {
                let len = after.find('>').map_or(0, |e| e);
                let name = after[..len].trim().to_ascii_lowercase();
                if len == 0 && !after.starts_with('>') {
                    return self.err("unterminated closing tag");
                }
                if stack.len() == 1 {
                    return self.err(format!("stray closing tag </{name}>"));
                }
                let open = stack.pop().expect("non-empty");
                if open.tag != name {
                    return self.err(format!("</{name}> closes <{}>", open.tag));
                }
                self.pos += 2 + len + 1;
                push_child(&mut stack, Node::Element(open));
            } else if rest.starts_with('<') {
                let (el, self_closed) = self.open_tag()?;
                if RAW_TEXT.contains(&el.tag.as_str()) && !self_closed {
                    let close = format!("</{}", el.tag);
                    let lower = self.rest().to_ascii_lowercase();
                    let Some(end) = lower.find(&close) else {
                        return self.err(format!("unterminated <{}>", el.tag));
                    };
                    let body = self.rest()[..end].trim().to_string();
                    self.pos += end;
                    let Some(gt) = self.rest().find('>') else {
                        return self.err("unterminated closing tag");
                    };
                    self.pos += gt + 1;
                    let mut el = el;
                    if !body.is_empty() {
                        el.children.push(Node::Text(body));
                    }
                    push_child(&mut stack, Node::Element(el));
                } else if self_closed || VOID.contains(&el.tag.as_str()) {
                    push_child(&mut stack, Node::Element(el));
                } else {
                    stack.push(el);
                }
            } else {
                let end = rest.find('<').unwrap_or(rest.len());
                let text = decode_entities(rest[..end].trim());
                if !text.is_empty() {
                    push_child(&mut stack, Node::Text(text));
                }
                self.pos += end;
            }
        }
        if stack.len() > 1 {
            let open = &stack[stack.len() - 1].tag;
            return self.err(format!("unclosed <{open}>"));
        }
        Ok(stack.pop().expect("bottom entry").children)
    }

    fn open_tag(&mut self) -> Result<(Element, bool), HtmlError> {
        self.pos += 1;
        let name = self.take_while(|c| c.is_ascii_alphanumeric() || c == '-');
        if name.is_empty() || !name.starts_with(|c: char| c.is_ascii_alphabetic()) {
            return self.err("malformed tag");
        }
        let mut el = Element::new(&name.to_ascii_lowercase());
        let mut seen = std::collections::BTreeSet::new();
        loop {
            self.skip_ws();
            let rest = self.rest();
            if rest.starts_with("/>") {
                self.pos += 2;
                return Ok((el, true));
            }
            if rest.starts_with('>') {
                self.pos += 1;
                return Ok((el, false));
            }
            if rest.is_empty() {
                return self.err(format!("unterminated <{}>", el.tag));
            }
            let key = self
                .take_while(|c| !c.is_whitespace() && !matches!(c, '=' | '>' | '/' | '"' | '\'' | '<'))
                .to_ascii_lowercase();
            if key.is_empty() {
                return self.err("malformed attribute");
            }
            if !seen.insert(key.clone()) {
                return self.err(format!("duplicate attribute `{key}`"));
            }
            self.skip_ws();
            let value = if self.rest().starts_with('=') {
                self.pos += 1;
                self.skip_ws();
                self.attr_value()?
            } else {
                String::new()
            };
            set_attr(&mut el, key, value);
        }
    }

    fn attr_value(&mut self) -> Result<String, HtmlError> {
        let rest = self.rest();
        let quote = rest.chars().next();
        match quote {
            Some(q @ ('"' | '\'')) => match rest[1..].find(q) {
                Some(end) => {
                    let raw = &rest[1..1 + end];
                    self.pos += end + 2;
                    Ok(decode_entities(raw))
                }
                None => self.err("unterminated attribute value"),
            },
            _ => {
                let raw = self.take_while(|c| !c.is_whitespace() && c != '>');
                if raw.is_empty() || raw.contains(['"', '\'', '<', '=']) {
                    return self.err("malformed attribute value");
                }
                Ok(decode_entities(&raw))
            }
        }
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> String {
        let rest = self.rest();
        let end = rest.find(|c: char| !f(c)).unwrap_or(rest.len());
        self.pos += end;
        rest[..end].to_string()
    }

    fn skip_ws(&mut self) {
        self.take_while(char::is_whitespace);
    }
}

fn push_child(stack: &mut [Element], node: Node) {
    stack.last_mut().expect("bottom entry").children.push(node);
}

fn set_attr(el: &mut Element, key: String, value: String) {
    match key.as_str() {
        "class" => el.classes = value.split_whitespace().map(String::from).collect(),
        "style" => el.style = parse_style(&value),
        NODE_ATTR => el.node_ref = Some(value),
        _ => {
            el.attrs.insert(key, value);
        }
    }
}

pub fn parse_style(value: &str) -> Vec<(String, String)> {
    value
        .split(';')
        .filter_map(|decl| {
            let (p, v) = decl.split_once(':')?;
            let (p, v) = (p.trim().to_ascii_lowercase(), v.trim());
            (!p.is_empty() && !v.is_empty()).then(|| (p, v.to_string()))
        })
        .collect()
}

fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('&') {
        out.push_str(&rest[..i]);
        rest = &rest[i..];
        let decoded = rest.find(';').filter(|&e| e <= 10).and_then(|e| {
            let name = &rest[1..e];
            let ch = match name {
                "amp" => Some('&'),
                "lt" => Some('<'),
                "gt" => Some('>'),
                "quot" => Some('"'),
                "apos" | "#39" => Some('\''),
                "nbsp" => Some('\u{a0}'),
                _ => name
                    .strip_prefix("#x")
                    .or_else(|| name.strip_prefix("#X"))
                    .and_then(|h| u32::from_str_radix(h, 16).ok())
                    .or_else(|| name.strip_prefix('#').and_then(|d| d.parse().ok()))
                    .and_then(char::from_u32),
            };
            ch.map(|c| (c, e + 1))
        });
        match decoded {
            Some((c, len)) => {
                out.push(c);
                rest = &rest[len..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn escape_text(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn escape_attr(s: &str) -> String {
    escape_text(s).replace('"', "&quot;")
}

pub fn render_style(style: &[(String, String)]) -> String {
    style
        .iter()
        .map(|(p, v)| format!("{p}: {v}"))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Serializes `el` at `depth` levels of two-space indentation, newline-terminated.
pub fn render_element(el: &Element, depth: usize, out: &mut String) {
    let indent = "  ".repeat(depth);
    out.push_str(&indent);
    out.push('<');
    out.push_str(&el.tag);
    if !el.classes.is_empty() {
        out.push_str(&format!(" class=\"{}\"", escape_attr(&el.classes.join(" "))));
    }
    if !el.style.is_empty() {
        out.push_str(&format!(" style=\"{}\"", escape_attr(&render_style(&el.style))));
    }
    if let Some(r) = &el.node_ref {
        out.push_str(&format!(" {NODE_ATTR}=\"{}\"", escape_attr(r)));
    }
    for (k, v) in &el.attrs {
        out.push_str(&format!(" {k}=\"{}\"", escape_attr(v)));
    }
    out.push('>');
    if VOID.contains(&el.tag.as_str()) {
        out.push('\n');
        return;
    }
    let raw = RAW_TEXT.contains(&el.tag.as_str());
    match el.children.as_slice() {
        [] => {}
        [Node::Text(t)] if !raw => out.push_str(&escape_text(t)),
        children => {
            out.push('\n');
            for c in children {
                match c {
                    Node::Element(e) => render_element(e, depth + 1, out),
                    Node::Text(t) if raw => {
                        out.push_str(t);
                        out.push('\n');
                        out.push_str(&indent);
                    }
                    Node::Text(t) => {
                        out.push_str(&"  ".repeat(depth + 1));
                        out.push_str(&escape_text(t));
                        out.push('\n');
                    }
                }
            }
            if !raw {
                out.push_str(&indent);
            }
        }
    }
    out.push_str("</");
    out.push_str(&el.tag);
    out.push_str(">\n");
}

pub fn render_nodes(nodes: &[Node]) -> String {
    let mut out = String::new();
    for n in nodes {
        match n {
            Node::Element(e) => render_element(e, 0, &mut out),
            Node::Text(t) => {
                out.push_str(&escape_text(t));
                out.push('\n');
            }
        }
    }
    out
}

const STRIPPED_TAGS: &[&str] = &["script", "style", "link", "iframe", "object", "embed", "meta", "base"];

/// Removes active content: dangerous elements, event handlers, script URLs
/// and any `data-node` references, which only assembly may set.
pub fn sanitize(nodes: Vec<Node>) -> Vec<Node> {
    nodes
        .into_iter()
        .filter_map(|n| match n {
            Node::Element(e) if STRIPPED_TAGS.contains(&e.tag.as_str()) => None,
            Node::Element(mut e) => {
                e.node_ref = None;
                e.attrs.retain(|k, v| {
                    !k.starts_with("on") && !is_script_url(v) && k != "srcdoc"
                });
                e.style.retain(|(_, v)| !v.to_ascii_lowercase().contains("url("));
                e.children = sanitize(std::mem::take(&mut e.children));
                Some(Node::Element(e))
            }
            text => Some(text),
        })
        .collect()
}

fn is_script_url(v: &str) -> bool {
    let squashed: String = v
        .chars()
        .filter(|c| !c.is_whitespace() && !c.is_control())
        .collect::<String>()
        .to_ascii_lowercase();
    squashed.starts_with("javascript:") || squashed.starts_with("vbscript:")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(src: &str) -> Element {
        match parse_fragment(src).unwrap().as_slice() {
            [Node::Element(e)] => e.clone(),
            other => panic!("expected one element, got {other:?}"),
        }
    }

    #[test]
    fn parses_attributes_and_text() {
        let e = one("<DIV class='a  b' style=\"left: 1%;top:2%\" data-node=x id=k>hi &amp; bye</DIV>");
        assert_eq!(e.tag, "div");
        assert_eq!(e.classes, ["a", "b"]);
        assert_eq!(e.style_value("top"), Some("2%"));
        assert_eq!(e.node_ref.as_deref(), Some("x"));
        assert_eq!(e.attrs["id"], "k");
        assert_eq!(e.text(), "hi & bye");
    }

    #[test]
    fn void_and_self_closing() {
        let nodes = parse_fragment("<img src=\"a.png\"><br/><span/>").unwrap();
        assert_eq!(nodes.len(), 3);
    }

    #[test]
    fn malformed_markup_is_rejected() {
        for bad in ["<div>", "<div></span>", "</div>", "<div class=\"x>", "<<", "<div a=1 a=2></div>", "<!-- x"] {
            assert!(parse_fragment(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn comments_and_doctype_are_skipped() {
        let nodes = parse_fragment("<!DOCTYPE html><!-- c --><p>x</p>").unwrap();
        assert_eq!(nodes.len(), 1);
    }

    #[test]
    fn render_parse_fixpoint() {
        let src = "<div class=\"c\" style=\"position: relative\"><p>a &lt; b</p>text<img alt=\"q&quot;\"><div></div></div>";
        let first = render_nodes(&parse_fragment(src).unwrap());
        let second = render_nodes(&parse_fragment(&first).unwrap());
        assert_eq!(first, second);
        assert_eq!(
            first,
            "<div class=\"c\" style=\"position: relative\">\n  <p>a &lt; b</p>\n  text\n  <img alt=\"q&quot;\">\n  <div></div>\n</div>\n"
        );
    }

    #[test]
    fn sanitizer_strips_active_content() {
        let nodes = parse_fragment(
            "<div onclick=\"x()\" data-node=\"root\"><script>alert(1)</script><a href=\" JavaScript:evil()\">l</a><link rel=x><style>p{}</style><img src=\"a.png\" onerror=\"y\"></div>",
        )
        .unwrap();
        let out = render_nodes(&sanitize(nodes));
        assert!(!out.contains("script"), "{out}");
        assert!(!out.contains("onclick") && !out.contains("onerror"));
        assert!(!out.contains("data-node") && !out.contains("<link") && !out.contains("<style"));
        assert!(out.contains("src=\"a.png\""));
    }

    #[test]
    fn raw_text_elements_keep_their_body() {
        let e = one("<style>.a > .b { x: y }</style>");
        assert_eq!(e.children, [Node::Text(".a > .b { x: y }".into())]);
    }
}
