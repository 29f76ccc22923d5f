//! Geometry of emitted documents, computed without a browser.
//!
//! The resolver understands exactly what assembly produces:
//! - `.box` elements are placed by their percentage (or px) inline styles
//!   against the nearest `.box` or root ancestor;
//! - grid containers place their children on equal tracks from the
//!   `grid-cols-*`, `grid-rows-*`, `gap-*` and cell classes, auto-placing
//!   children without explicit cells densely in row-major order;
//! - any other element splits its height equally among its children, which
//!   the stylesheet realizes with a flex column.
//!
//! Childless elements other than the root become blocks.

use std::collections::{BTreeSet, HashSet};

use thiserror::Error;

use super::{Block, BlockKind, BlockSet, BlockSource};
use crate::generation::html::Element;
use crate::generation::vocab::{gray_rgb, parse_class, Utility, GAP_UNIT_PX};
use crate::generation::GeneratedDocument;
use crate::geometry::{NormRect, Rect};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot resolve the geometry of {element}: {reason}")]
pub struct ResolveError {
    pub element: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedElement {
    /// Locator such as `div[data-node=header]/div[0]`.
    pub path: String,
    pub tag: String,
    pub node_ref: Option<String>,
    /// Pixel rectangle in the viewport; may extend past it.
    pub rect: Rect,
    pub placeholder: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub viewport: (f64, f64),
    pub elements: Vec<ResolvedElement>,
    pub blocks: BlockSet,
    pub warnings: Vec<String>,
}

impl Resolution {
    pub fn element(&self, node_ref: &str) -> Option<&ResolvedElement> {
        self.elements.iter().find(|e| e.node_ref.as_deref() == Some(node_ref))
    }

    /// Normalized box of the element carrying `node_ref`.
    pub fn norm_rect(&self, node_ref: &str) -> Option<NormRect> {
        let r = self.element(node_ref)?.rect;
        let (vw, vh) = self.viewport;
        NormRect::new(r.x / vw, r.y / vh, r.w / vw, r.h / vh).ok()
    }
}

const WHITE: [f64; 3] = [1.0, 1.0, 1.0];

struct Ctx {
    viewport: Rect,
    elements: Vec<ResolvedElement>,
    blocks: Vec<Block>,
    unknown: BTreeSet<String>,
    warnings: Vec<String>,
}

pub fn resolve_document(doc: &GeneratedDocument, viewport: (u32, u32)) -> Result<Resolution, ResolveError> {
    let vp = Rect {
        x: 0.0,
        y: 0.0,
        w: viewport.0 as f64,
        h: viewport.1 as f64,
    };
    let mut ctx = Ctx {
        viewport: vp,
        elements: Vec::new(),
        blocks: Vec::new(),
        unknown: BTreeSet::new(),
        warnings: Vec::new(),
    };
    let root_path = locator(&doc.root, None, 0);
    visit(&doc.root, vp, vp, WHITE, false, true, root_path, &mut ctx)?;
    let mut warnings: Vec<String> = ctx
        .unknown
        .iter()
        .map(|c| format!("class `{c}` is outside the layout vocabulary and was ignored"))
        .collect();
    warnings.extend(ctx.warnings);
    Ok(Resolution {
        viewport: (vp.w, vp.h),
        elements: ctx.elements,
        blocks: BlockSet {
            blocks: ctx.blocks,
            source: BlockSource::Resolver,
        },
        warnings,
    })
}

pub fn resolve_blocks(doc: &GeneratedDocument, viewport: (u32, u32)) -> Result<BlockSet, ResolveError> {
    Ok(resolve_document(doc, viewport)?.blocks)
}

fn locator(el: &Element, parent: Option<&str>, index: usize) -> String {
    let own = match &el.node_ref {
        Some(r) => format!("{}[data-node={r}]", el.tag),
        None => format!("{}[{index}]", el.tag),
    };
    match (parent, &el.node_ref) {
        (Some(p), None) => format!("{p}/{own}"),
        _ => own,
    }
}

fn utilities(el: &Element, ctx: &mut Ctx) -> Vec<Utility> {
    el.classes
        .iter()
        .filter_map(|c| {
            let u = parse_class(c);
            if u.is_none() {
                ctx.unknown.insert(c.clone());
            }
            u
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn visit(
    el: &Element,
    rect: Rect,
    containing: Rect,
    inherited_bg: [f64; 3],
    parent_is_box: bool,
    is_root: bool,
    path: String,
    ctx: &mut Ctx,
) -> Result<(), ResolveError> {
    let utils = utilities(el, ctx);
    let is_box = utils.contains(&Utility::Box);
    let is_grid = utils.contains(&Utility::Grid) || (parent_is_box && utils.contains(&Utility::Container));
    let bg = utils
        .iter()
        .find_map(|u| match u {
            Utility::BgGray(s) => gray_rgb(*s),
            _ => None,
        })
        .or_else(|| el.is_placeholder().then(|| gray_rgb(400).expect("palette shade")))
        .unwrap_or(inherited_bg);
    ctx.elements.push(ResolvedElement {
        path: path.clone(),
        tag: el.tag.clone(),
        node_ref: el.node_ref.clone(),
        rect,
        placeholder: el.is_placeholder(),
    });

    let children: Vec<&Element> = el.child_elements().collect();
    if children.is_empty() {
        if !is_root {
            leaf_block(el, rect, bg, &path, ctx);
        }
        return Ok(());
    }
    let inner_containing = if is_box || is_root { rect } else { containing };
    let child_paths: Vec<String> = children
        .iter()
        .enumerate()
        .map(|(i, c)| locator(c, Some(&path), i))
        .collect();
    let (boxed, flow): (Vec<usize>, Vec<usize>) = (0..children.len()).partition(|&i| children[i].has_class("box"));
    let mut rects = vec![None; children.len()];
    for &i in &boxed {
        rects[i] = Some(box_rect(children[i], inner_containing, &child_paths[i])?);
    }
    if !flow.is_empty() {
        let flow_children: Vec<&Element> = flow.iter().map(|&i| children[i]).collect();
        let placed = if is_grid {
            grid_rects(el, rect, &flow_children, &path)?
        } else {
            let h = rect.h / flow.len() as f64;
            (0..flow.len())
                .map(|k| Rect {
                    x: rect.x,
                    y: rect.y + k as f64 * h,
                    w: rect.w,
                    h,
                })
                .collect()
        };
        for (&i, r) in flow.iter().zip(placed) {
            rects[i] = Some(r);
        }
    }
    for (i, c) in children.iter().enumerate() {
        let r = rects[i].expect("every child placed");
        visit(c, r, inner_containing, bg, is_box, false, child_paths[i].clone(), ctx)?;
    }
    Ok(())
}

fn leaf_block(el: &Element, rect: Rect, bg: [f64; 3], path: &str, ctx: &mut Ctx) {
    let Some(clipped) = rect.clip_to(&ctx.viewport) else {
        ctx.warnings.push(format!("{path} lies outside the viewport and yields no block"));
        return;
    };
    let (vw, vh) = (ctx.viewport.w, ctx.viewport.h);
    let Ok(norm) = NormRect::new(clipped.x / vw, clipped.y / vh, clipped.w / vw, clipped.h / vh) else {
        ctx.warnings.push(format!("{path} has no valid normalized box"));
        return;
    };
    let text = el.text().trim().to_string();
    let image = el.tag == "img" || el.is_placeholder();
    let kind = if image {
        BlockKind::Image
    } else if !text.is_empty() {
        BlockKind::Text
    } else {
        BlockKind::Container
    };
    let mean_color = if el.tag == "img" {
        el.attrs.get("src").and_then(|s| data_uri_mean(s)).unwrap_or(bg)
    } else {
        bg
    };
    ctx.blocks.push(Block {
        rect: norm,
        text: if image { String::new() } else { text },
        mean_color,
        kind,
    });
}

fn data_uri_mean(src: &str) -> Option<[f64; 3]> {
    let img = super::render::decode_data_uri(src)?;
    (img.width() > 0 && img.height() > 0).then(|| crate::raster::mean_color(&img, (0, 0, img.width(), img.height())))
}

fn length(value: Option<&str>, extent: f64, prop: &str, path: &str) -> Result<f64, ResolveError> {
    let err = |reason: String| ResolveError {
        element: path.into(),
        reason,
    };
    let v = value.ok_or_else(|| err(format!("`.box` without `{prop}`")))?.trim();
    let parsed = if let Some(p) = v.strip_suffix('%') {
        p.trim().parse::<f64>().map(|p| p / 100.0 * extent)
    } else if let Some(px) = v.strip_suffix("px") {
        px.trim().parse::<f64>()
    } else if v == "0" {
        Ok(0.0)
    } else {
        return Err(err(format!("unsupported `{prop}` value `{v}`")));
    };
    parsed
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| err(format!("unparseable `{prop}` value `{v}`")))
}

fn box_rect(el: &Element, containing: Rect, path: &str) -> Result<Rect, ResolveError> {
    let x = containing.x + length(el.style_value("left"), containing.w, "left", path)?;
    let y = containing.y + length(el.style_value("top"), containing.h, "top", path)?;
    let w = length(el.style_value("width"), containing.w, "width", path)?;
    let h = length(el.style_value("height"), containing.h, "height", path)?;
    if w < 0.0 || h < 0.0 {
        return Err(ResolveError {
            element: path.into(),
            reason: "negative size".into(),
        });
    }
    Ok(Rect { x, y, w, h })
}

#[derive(Default)]
struct Cell {
    col: Option<u32>,
    col_span: u32,
    row: Option<u32>,
    row_span: u32,
}

fn cell_of(el: &Element) -> Cell {
    let mut c = Cell {
        col_span: 1,
        row_span: 1,
        ..Default::default()
    };
    for u in el.classes.iter().filter_map(|s| parse_class(s)) {
        match u {
            Utility::ColStart(n) => c.col = Some(n - 1),
            Utility::ColSpan(n) => c.col_span = n,
            Utility::RowStart(n) => c.row = Some(n - 1),
            Utility::RowSpan(n) => c.row_span = n,
            _ => {}
        }
    }
    c
}

fn grid_rects(grid: &Element, rect: Rect, items: &[&Element], path: &str) -> Result<Vec<Rect>, ResolveError> {
    let mut cols = 1;
    let mut explicit_rows = None;
    let mut gap = 0.0;
    for u in grid.classes.iter().filter_map(|s| parse_class(s)) {
        match u {
            Utility::GridCols(n) => cols = n,
            Utility::GridRows(n) => explicit_rows = Some(n),
            Utility::Gap(k) => gap = k as f64 * GAP_UNIT_PX,
            _ => {}
        }
    }
    let err = |reason: String| ResolveError {
        element: path.into(),
        reason,
    };
    let cells: Vec<Cell> = items.iter().map(|e| cell_of(e)).collect();
    let mut placed: Vec<Option<(u32, u32)>> = vec![None; items.len()];
    let mut taken: HashSet<(u32, u32)> = HashSet::new();
    let occupy = |c: u32, r: u32, cell: &Cell, taken: &mut HashSet<(u32, u32)>| {
        for dc in 0..cell.col_span {
            for dr in 0..cell.row_span {
                taken.insert((c + dc, r + dr));
            }
        }
    };
    for (i, cell) in cells.iter().enumerate() {
        if cell.col_span > cols {
            return Err(err(format!("item {i} spans {} of {cols} columns", cell.col_span)));
        }
        if let (Some(c), Some(r)) = (cell.col, cell.row) {
            if c + cell.col_span > cols {
                return Err(err(format!("item {i} ends past column {cols}")));
            }
            occupy(c, r, cell, &mut taken);
            placed[i] = Some((c, r));
        }
    }
    let fits = |c: u32, r: u32, cell: &Cell, taken: &HashSet<(u32, u32)>| {
        c + cell.col_span <= cols
            && (0..cell.col_span).all(|dc| (0..cell.row_span).all(|dr| !taken.contains(&(c + dc, r + dr))))
    };
    for (i, cell) in cells.iter().enumerate() {
        if placed[i].is_some() {
            continue;
        }
        let mut r = cell.row.unwrap_or(0);
        let spot = loop {
            let candidates: Vec<u32> = match cell.col {
                Some(c) => vec![c],
                None => (0..cols).collect(),
            };
            if let Some(&c) = candidates.iter().find(|&&c| fits(c, r, cell, &taken)) {
                break (c, r);
            }
            if cell.row.is_some() {
                return Err(err(format!("item {i} has no free cell in row {}", r + 1)));
            }
            r += 1;
        };
        occupy(spot.0, spot.1, cell, &mut taken);
        placed[i] = Some(spot);
    }
    let used_rows = placed
        .iter()
        .zip(&cells)
        .map(|(p, c)| p.expect("placed").1 + c.row_span)
        .max()
        .unwrap_or(1);
    let rows = match explicit_rows {
        Some(n) if used_rows > n => {
            return Err(err(format!("items need {used_rows} rows but the grid declares {n}")));
        }
        Some(n) => n,
        None => used_rows,
    };
    let col_w = (rect.w - gap * (cols - 1) as f64) / cols as f64;
    let row_h = (rect.h - gap * (rows - 1) as f64) / rows as f64;
    if col_w < 0.0 || row_h < 0.0 {
        return Err(err("gaps exceed the container size".into()));
    }
    Ok(placed
        .iter()
        .zip(&cells)
        .map(|(p, cell)| {
            let (c, r) = p.expect("placed");
            Rect {
                x: rect.x + c as f64 * (col_w + gap),
                y: rect.y + r as f64 * (row_h + gap),
                w: cell.col_span as f64 * col_w + (cell.col_span - 1) as f64 * gap,
                h: cell.row_span as f64 * row_h + (cell.row_span - 1) as f64 * gap,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::html::{parse_fragment, Node};
    use crate::grounding::PageSize;

    fn doc(body: &str) -> GeneratedDocument {
        let mut d = GeneratedDocument::empty(PageSize { width: 1000, height: 800 }, "root");
        d.root.children = parse_fragment(body).unwrap();
        d
    }

    #[test]
    fn root_only_is_empty() {
        let r = resolve_document(&doc(""), (1000, 800)).unwrap();
        assert!(r.blocks.blocks.is_empty());
    }

    #[test]
    fn single_header_box() {
        let d = doc(
            "<div class=\"box\" style=\"left: 0%; top: 0%; width: 100%; height: 12.50%\" data-node=\"header\"><div class=\"bg-gray-400 w-full h-full\">header</div></div>",
        );
        let r = resolve_document(&d, (1000, 800)).unwrap();
        assert_eq!(r.blocks.blocks.len(), 1);
        let b = &r.blocks.blocks[0];
        assert_eq!(b.kind, BlockKind::Text);
        assert_eq!(b.text, "header");
        assert_eq!(b.rect, NormRect::new(0.0, 0.0, 1.0, 0.125).unwrap());
        assert_eq!(b.mean_color, gray_rgb(400).unwrap());
        assert!(r.warnings.is_empty(), "{:?}", r.warnings);
    }

    #[test]
    fn three_column_grid_of_placeholders() {
        let d = doc(
            "<div class=\"box\" style=\"left: 0%; top: 0%; width: 60%; height: 50%\"><div class=\"container grid grid-cols-3\">\
             <div class=\"placeholder\"></div><div class=\"placeholder\"></div><div class=\"placeholder\"></div></div></div>",
        );
        let r = resolve_document(&d, (1000, 800)).unwrap();
        let boxes: Vec<Rect> = r.blocks.blocks.iter().map(|b| b.rect.to_pixels(1000.0, 800.0).unwrap()).collect();
        assert_eq!(boxes.len(), 3);
        for (i, b) in boxes.iter().enumerate() {
            assert!((b.x - 200.0 * i as f64).abs() < 1e-9 && (b.w - 200.0).abs() < 1e-9, "{b:?}");
            assert!((b.h - 400.0).abs() < 1e-9);
        }
        assert!(r.blocks.blocks.iter().all(|b| b.kind == BlockKind::Image));
    }

    #[test]
    fn explicit_cells_and_gap() {
        let d = doc(
            "<div class=\"box\" style=\"left: 0%; top: 0%; width: 100%; height: 100%\"><div class=\"container grid grid-cols-2 grid-rows-2 gap-5\">\
             <div class=\"col-start-1 col-span-2 row-start-1 row-span-1\">top</div>\
             <div class=\"col-start-2 row-start-2\">right</div>\
             <div class=\"col-start-1 row-start-2\">left</div></div></div>",
        );
        let r = resolve_document(&d, (1000, 800)).unwrap();
        let by_text = |t: &str| r.blocks.blocks.iter().find(|b| b.text == t).unwrap().rect.to_pixels(1000.0, 800.0).unwrap();
        let top = by_text("top");
        assert!((top.w - 1000.0).abs() < 1e-9 && (top.h - 390.0).abs() < 1e-9);
        let right = by_text("right");
        assert!((right.x - 510.0).abs() < 1e-9 && (right.y - 410.0).abs() < 1e-9);
    }

    #[test]
    fn flow_children_split_height() {
        let d = doc(
            "<div class=\"box\" style=\"left: 10%; top: 0%; width: 50%; height: 100%\"><p>a</p><p>b</p></div>",
        );
        let r = resolve_document(&d, (1000, 800)).unwrap();
        let b = &r.blocks.blocks[1];
        assert_eq!(b.rect, NormRect::new(0.1, 0.5, 0.5, 0.5).unwrap());
    }

    #[test]
    fn unknown_classes_warn() {
        let d = doc("<div class=\"box flex\" style=\"left: 0%; top: 0%; width: 10%; height: 10%\">x</div>");
        let r = resolve_document(&d, (1000, 800)).unwrap();
        assert_eq!(r.warnings.len(), 1);
        assert!(r.warnings[0].contains("flex"));
    }

    #[test]
    fn unresolvable_box_names_the_element() {
        let d = doc("<div class=\"box\" style=\"left: 0%; top: 0%; width: auto; height: 10%\" data-node=\"header\">x</div>");
        let err = resolve_document(&d, (1000, 800)).unwrap_err();
        assert!(err.element.contains("header"), "{err}");
        let d = doc("<div class=\"box\" style=\"left: 0%; top: 0%; width: 10%; height: 10%\"><div class=\"container grid grid-cols-1\"><div class=\"col-span-2\"></div></div></div>");
        assert!(resolve_document(&d, (1000, 800)).is_err());
    }

    #[test]
    fn nested_grid_inherits_position() {
        let mut d = doc("");
        let mut bx = Element::new("div").with_classes(&["box"]);
        for (p, v) in [("left", "50%"), ("top", "50%"), ("width", "50%"), ("height", "50%")] {
            bx.set_style(p, v);
        }
        bx.node_ref = Some("main".into());
        bx.children.push(Node::Element(Element::new("span").with_text("hello")));
        d.root.children.push(Node::Element(bx));
        let r = resolve_document(&d, (1000, 800)).unwrap();
        assert_eq!(r.norm_rect("main"), NormRect::new(0.5, 0.5, 0.5, 0.5).ok());
    }
}
