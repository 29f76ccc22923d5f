//! Adaptive per-node prompts.

use serde::{Deserialize, Serialize};

use super::GenerationError;
use crate::geometry::NormRect;
use crate::planning::{LayoutNode, LayoutTree};

pub const GENERIC_TEMPLATE: &str = "generic";

const TEMPLATES: [(&str, &str); 5] = [
    ("header", "Write the page header: brand mark, site title and the primary actions, laid out in one horizontal band."),
    ("sidebar", "Write the sidebar: a vertical stack of section links and secondary controls."),
    ("navigation", "Write the navigation bar: a horizontal row of top-level menu entries."),
    ("main_content", "Write the main content area: headings, body text and media in reading order."),
    ("container", "Write a layout container whose children sit on a CSS grid."),
];
const GENERIC: &str = "Write the `{label}` component of the page.";
const RULES: &str = "Return one HTML fragment without <html>, <head>, scripts or stylesheets. \
Use only these utility classes: grid-cols-1..12, gap-0..8, bg-gray-100..900, w-full, h-full. \
Render every image as <div class=\"placeholder bg-gray-400\"></div>.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentPrompt {
    pub node_id: String,
    pub label: String,
    pub layout_context: String,
    pub user_instruction: Option<String>,
    pub template_id: String,
    /// The full prompt text sent to the backend.
    pub text: String,
}

pub fn build_prompt(
    tree: &LayoutTree,
    node_id: &str,
    instruction: Option<&str>,
    generic_template: bool,
) -> Result<ComponentPrompt, GenerationError> {
    let node = tree
        .find(node_id)
        .ok_or_else(|| GenerationError::UnknownNode(node_id.into()))?;
    let (template_id, body) = match TEMPLATES.iter().find(|(l, _)| *l == node.label) {
        Some((l, body)) => (l.to_string(), body.to_string()),
        None if generic_template => (GENERIC_TEMPLATE.to_string(), GENERIC.replace("{label}", &node.label)),
        None => return Err(GenerationError::UnknownLabel(node.label.clone())),
    };
    let layout_context = layout_context(tree, node);
    let mut text = format!("{body}\n\n{layout_context}\n\n{RULES}");
    if let Some(i) = instruction {
        text.push_str("\n\n");
        text.push_str(i);
    }
    Ok(ComponentPrompt {
        node_id: node.id.clone(),
        label: node.label.clone(),
        layout_context,
        user_instruction: instruction.map(String::from),
        template_id,
        text,
    })
}

fn describe_box(r: &NormRect) -> String {
    format!(
        "[{:.6}, {:.6}, {:.6}, {:.6}] (left {:.2}%, top {:.2}%, width {:.2}%, height {:.2}%)",
        r.l,
        r.t,
        r.w,
        r.h,
        r.l * 100.0,
        r.t * 100.0,
        r.w * 100.0,
        r.h * 100.0
    )
}

fn layout_context(tree: &LayoutTree, node: &LayoutNode) -> String {
    let mut lines = vec![format!(
        "Component `{}` (label {}) occupies the normalized box {} of a {}x{} page.",
        node.id,
        node.label,
        describe_box(&node.rect),
        tree.page_size.width,
        tree.page_size.height
    )];
    let parent = tree.root.walk().into_iter().find(|p| p.children.iter().any(|c| c.id == node.id));
    if let Some(parent) = parent {
        if let Some(cell) = parent.grid.as_ref().and_then(|g| g.cell_assignments.get(&node.id).map(|c| (g, c))) {
            let (g, c) = cell;
            lines.push(format!(
                "It fills grid column {} (span {}) and row {} (span {}) of a {}-column, {}-row grid.",
                c.col_start + 1,
                c.col_span,
                c.row_start + 1,
                c.row_span,
                g.columns,
                g.rows
            ));
        }
        let neighbors: Vec<String> = parent
            .children
            .iter()
            .filter(|s| s.id != node.id)
            .map(|s| format!("{} {}", s.label, relation(&node.rect, &s.rect)))
            .collect();
        if !neighbors.is_empty() {
            lines.push(format!("Neighbors: {}.", neighbors.join(", ")));
        }
    }
    if !node.children.is_empty() {
        let kids: Vec<&str> = node.children.iter().map(|c| c.label.as_str()).collect();
        lines.push(format!("It contains: {}.", kids.join(", ")));
    }
    lines.join(" ")
}

/// Where `other` lies relative to `me`.
fn relation(me: &NormRect, other: &NormRect) -> &'static str {
    if other.bottom() <= me.t + 1e-9 {
        "above"
    } else if other.t >= me.bottom() - 1e-9 {
        "below"
    } else if other.right() <= me.l + 1e-9 {
        "to the left"
    } else if other.l >= me.right() - 1e-9 {
        "to the right"
    } else {
        "overlapping"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;
    use crate::grounding::{LayoutMap, PageSize, Provenance};
    use crate::planning::build_tree;

    fn tree() -> LayoutTree {
        let mut m = LayoutMap::new(PageSize { width: 1000, height: 800 });
        m.insert("header", Rect::new(0.0, 0.0, 1000.0, 100.0).unwrap(), Provenance::Backend);
        m.insert("sidebar", Rect::new(0.0, 100.0, 200.0, 700.0).unwrap(), Provenance::Backend);
        m.insert("footer", Rect::new(200.0, 700.0, 800.0, 100.0).unwrap(), Provenance::Backend);
        build_tree(&m)
    }

    #[test]
    fn header_prompt() {
        let p = build_prompt(&tree(), "header", None, true).unwrap();
        assert_eq!(p.template_id, "header");
        assert!(p.layout_context.contains("header"));
        assert!(p.layout_context.contains("[0.000000, 0.000000, 1.000000, 0.125000]"));
        assert!(p.layout_context.contains("sidebar below"));
        assert_eq!(p.user_instruction, None);
    }

    #[test]
    fn instruction_is_appended_verbatim() {
        let p = build_prompt(&tree(), "sidebar", Some("use dark theme"), true).unwrap();
        assert!(p.text.ends_with("use dark theme"));
        assert_eq!(p.user_instruction.as_deref(), Some("use dark theme"));
    }

    #[test]
    fn unknown_label_uses_generic_or_fails() {
        let p = build_prompt(&tree(), "footer", None, true).unwrap();
        assert_eq!(p.template_id, GENERIC_TEMPLATE);
        assert!(p.text.contains("`footer`"));
        assert!(matches!(
            build_prompt(&tree(), "footer", None, false),
            Err(GenerationError::UnknownLabel(_))
        ));
        assert!(matches!(
            build_prompt(&tree(), "nope", None, true),
            Err(GenerationError::UnknownNode(_))
        ));
    }
}
