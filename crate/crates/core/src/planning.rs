//! Layout planning: the layout dictionary becomes a tree of normalized boxes
//! with reading order and per-container grid configuration.
//!
//! Node ids are stable and derived from labels: the root is `root`, each
//! top-level node takes its region label, a region's grid container is
//! `<label>.grid` and its children are `<label>.grid.<i>` numbered in
//! reading order.
//!
//! Boxes are stored on a 1e-6 grid, so the canonical document written by
//! [`serialize_tree`] parses back to an identical tree.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::to_canonical_json;
use crate::geometry::{NormRect, Rect};
use crate::grounding::{LayoutMap, PageSize};

pub const TREE_SCHEMA_VERSION: u32 = 1;
pub const ROOT_ID: &str = "root";
pub const CONTAINER: &str = "container";

#[derive(Debug, Error)]
pub enum PlanningError {
    #[error("child `{0}` has zero area after normalization")]
    DegenerateChild(String),
    #[error("invalid tree: {0}")]
    Invalid(String),
    #[error("malformed tree document: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellSpan {
    pub col_span: u32,
    pub row_span: u32,
    /// 0-based first column.
    pub col_start: u32,
    /// 0-based first row.
    pub row_start: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub columns: u32,
    pub rows: u32,
    /// Track spacing as a fraction of the container width.
    pub gap: f64,
    pub cell_assignments: BTreeMap<String, CellSpan>,
}

impl GridConfig {
    fn validate(&self, child_ids: &BTreeSet<&str>) -> Result<(), PlanningError> {
        if self.columns == 0 || self.rows == 0 {
            return Err(PlanningError::Invalid("grid with zero tracks".into()));
        }
        if !(0.0..=1.0).contains(&self.gap) {
            return Err(PlanningError::Invalid(format!("grid gap {} outside [0, 1]", self.gap)));
        }
        let assigned: BTreeSet<&str> = self.cell_assignments.keys().map(String::as_str).collect();
        if &assigned != child_ids {
            return Err(PlanningError::Invalid(
                "grid assignments do not cover exactly the container children".into(),
            ));
        }
        let mut taken = BTreeSet::new();
        for (id, c) in &self.cell_assignments {
            if c.col_span == 0
                || c.row_span == 0
                || c.col_start + c.col_span > self.columns
                || c.row_start + c.row_span > self.rows
            {
                return Err(PlanningError::Invalid(format!("cell of `{id}` exceeds the grid")));
            }
            for col in c.col_start..c.col_start + c.col_span {
                for row in c.row_start..c.row_start + c.row_span {
                    if !taken.insert((col, row)) {
                        return Err(PlanningError::Invalid(format!(
                            "cell ({col}, {row}) claimed twice, last by `{id}`"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutNode {
    pub id: String,
    pub label: String,
    #[serde(rename = "box")]
    pub rect: NormRect,
    pub order_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub children: Vec<LayoutNode>,
}

impl LayoutNode {
    pub fn find(&self, id: &str) -> Option<&LayoutNode> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(id))
    }

    pub fn find_mut(&mut self, id: &str) -> Option<&mut LayoutNode> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter_mut().find_map(|c| c.find_mut(id))
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Pre-order walk over this node and its descendants.
    pub fn walk(&self) -> Vec<&LayoutNode> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.walk());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutTree {
    pub schema_version: u32,
    pub page_size: PageSize,
    pub root: LayoutNode,
}

impl LayoutTree {
    pub fn find(&self, id: &str) -> Option<&LayoutNode> {
        self.root.find(id)
    }

    pub fn validate(&self) -> Result<(), PlanningError> {
        if self.schema_version != TREE_SCHEMA_VERSION {
            return Err(PlanningError::Invalid(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        if self.root.id != ROOT_ID || self.root.rect != NormRect::UNIT {
            return Err(PlanningError::Invalid("root must be `root` covering the page".into()));
        }
        let mut ids = BTreeSet::new();
        validate_node(&self.root, &mut ids)
    }
}

fn validate_node<'a>(node: &'a LayoutNode, ids: &mut BTreeSet<&'a str>) -> Result<(), PlanningError> {
    if node.id.is_empty() || !ids.insert(node.id.as_str()) {
        return Err(PlanningError::Invalid(format!("empty or duplicate node id `{}`", node.id)));
    }
    let mut orders: Vec<u32> = node.children.iter().map(|c| c.order_index).collect();
    orders.sort_unstable();
    if orders.iter().enumerate().any(|(i, &o)| o != i as u32) {
        return Err(PlanningError::Invalid(format!(
            "children of `{}` do not have dense order indices",
            node.id
        )));
    }
    for c in &node.children {
        if !node.rect.contains(&c.rect) {
            return Err(PlanningError::Invalid(format!(
                "`{}` is not contained in its parent `{}`",
                c.id, node.id
            )));
        }
    }
    if let Some(grid) = &node.grid {
        let child_ids = node.children.iter().map(|c| c.id.as_str()).collect();
        grid.validate(&child_ids)?;
    }
    for c in &node.children {
        validate_node(c, ids)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanningConfig {
    /// Tops closer than this fraction of the page height share a reading row.
    pub row_band: f64,
    /// Edges closer than this fraction of the page merge into one grid line.
    pub track_merge: f64,
}

impl Default for PlanningConfig {
    fn default() -> Self {
        Self {
            row_band: 0.02,
            track_merge: 0.01,
        }
    }
}

/// A sub-element supplied for a region, in page pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildElement {
    #[serde(rename = "box")]
    pub rect: Rect,
    pub label: String,
}

pub fn build_tree(layout: &LayoutMap) -> LayoutTree {
    build_tree_with(layout, &BTreeMap::new(), &PlanningConfig::default())
        .expect("no children supplied, so no child can be degenerate")
}

/// Builds the tree; regions with two or more supplied children get a grid
/// container holding them.
pub fn build_tree_with(
    layout: &LayoutMap,
    children: &BTreeMap<String, Vec<ChildElement>>,
    config: &PlanningConfig,
) -> Result<LayoutTree, PlanningError> {
    let page = layout.page_size;
    let mut top: Vec<LayoutNode> = Vec::new();
    for (label, entry) in &layout.entries {
        let rect = snap(&entry.rect, page, &NormRect::UNIT);
        let mut node = LayoutNode {
            id: label.clone(),
            label: label.clone(),
            rect,
            order_index: 0,
            grid: None,
            children: Vec::new(),
        };
        if let Some(elems) = children.get(label).filter(|e| e.len() >= 2) {
            node.children.push(grid_container(&node, elems, page, config)?);
        }
        top.push(node);
    }
    assign_reading_order(&mut top, config.row_band);
    Ok(LayoutTree {
        schema_version: TREE_SCHEMA_VERSION,
        page_size: page,
        root: LayoutNode {
            id: ROOT_ID.into(),
            label: CONTAINER.into(),
            rect: NormRect::UNIT,
            order_index: 0,
            grid: None,
            children: top,
        },
    })
}

fn grid_container(
    parent: &LayoutNode,
    elems: &[ChildElement],
    page: PageSize,
    config: &PlanningConfig,
) -> Result<LayoutNode, PlanningError> {
    let id = format!("{}.grid", parent.id);
    let mut leaves = Vec::with_capacity(elems.len());
    for (i, e) in elems.iter().enumerate() {
        let rect = snap(&e.rect, page, &parent.rect);
        if rect.w <= 0.0 || rect.h <= 0.0 {
            return Err(PlanningError::DegenerateChild(format!("{id}[{i}] ({})", e.label)));
        }
        leaves.push(LayoutNode {
            id: String::new(),
            label: e.label.clone(),
            rect,
            order_index: 0,
            grid: None,
            children: Vec::new(),
        });
    }
    assign_reading_order(&mut leaves, config.row_band);
    for leaf in &mut leaves {
        leaf.id = format!("{id}.{}", leaf.order_index);
    }
    let mut container = LayoutNode {
        id,
        label: CONTAINER.into(),
        rect: bounding(&leaves),
        order_index: 0,
        grid: None,
        children: Vec::new(),
    };
    container.grid = Some(infer_grid(&container, &leaves, page, config)?);
    container.children = leaves;
    Ok(container)
}

/// Smallest box on the 1e-6 grid holding every node.
fn bounding(nodes: &[LayoutNode]) -> NormRect {
    let m = |v: f64| (v * 1e6).round() as i64;
    let l = nodes.iter().map(|n| m(n.rect.l)).min().unwrap_or(0);
    let t = nodes.iter().map(|n| m(n.rect.t)).min().unwrap_or(0);
    let r = nodes.iter().map(|n| m(n.rect.right())).max().unwrap_or(0);
    let b = nodes.iter().map(|n| m(n.rect.bottom())).max().unwrap_or(0);
    NormRect {
        l: l as f64 / 1e6,
        t: t as f64 / 1e6,
        w: (r - l) as f64 / 1e6,
        h: (b - t) as f64 / 1e6,
    }
}

/// Normalizes a pixel box onto the 1e-6 grid, clipped to `within`.
fn snap(r: &Rect, page: PageSize, within: &NormRect) -> NormRect {
    let (pw, ph) = (page.width as f64, page.height as f64);
    let m = |v: f64| (v * 1e6).round() as i64;
    let (wl, wt, wr, wb) = (m(within.l), m(within.t), m(within.right()), m(within.bottom()));
    let l = m(r.x / pw).clamp(wl, wr);
    let t = m(r.y / ph).clamp(wt, wb);
    let right = m(r.right() / pw).clamp(l, wr);
    let bottom = m(r.bottom() / ph).clamp(t, wb);
    NormRect {
        l: l as f64 / 1e6,
        t: t as f64 / 1e6,
        w: (right - l) as f64 / 1e6,
        h: (bottom - t) as f64 / 1e6,
    }
}

/// Ranks siblings top to bottom in row bands, left to right inside a band.
/// The result depends only on the set of boxes, never on input order.
pub fn assign_reading_order(nodes: &mut [LayoutNode], row_band: f64) {
    let key = |n: &LayoutNode| (n.rect.t, n.rect.l, n.label.clone(), n.rect.w, n.rect.h);
    nodes.sort_by(|a, b| {
        key(a)
            .partial_cmp(&key(b))
            .expect("normalized boxes are finite")
    });
    let mut band = 0usize;
    let mut band_top = f64::NEG_INFINITY;
    let mut banded: Vec<(usize, usize)> = Vec::with_capacity(nodes.len());
    for (i, n) in nodes.iter().enumerate() {
        if n.rect.t - band_top > row_band {
            band += 1;
            band_top = n.rect.t;
        }
        banded.push((band, i));
    }
    banded.sort_by(|&(ba, ia), &(bb, ib)| {
        let (a, b) = (&nodes[ia], &nodes[ib]);
        ba.cmp(&bb).then(
            (a.rect.l, a.rect.t, &a.label, a.rect.w, a.rect.h)
                .partial_cmp(&(b.rect.l, b.rect.t, &b.label, b.rect.w, b.rect.h))
                .expect("normalized boxes are finite"),
        )
    });
    let ranks: Vec<usize> = banded.iter().map(|&(_, i)| i).collect();
    for (rank, &i) in ranks.iter().enumerate() {
        nodes[i].order_index = rank as u32;
    }
    nodes.sort_by_key(|n| n.order_index);
}

/// Derives grid tracks from the children's edges.
///
/// Left (top) edges are clustered with the merge tolerance; each cluster opens
/// a column (row). A child starts at the track of its own edge and spans every
/// track that opens before its far edge. When jittered input makes two
/// footprints collide, the children fall back to one track each in reading
/// order, along the container's longer axis.
pub fn infer_grid(
    container: &LayoutNode,
    children: &[LayoutNode],
    page: PageSize,
    config: &PlanningConfig,
) -> Result<GridConfig, PlanningError> {
    for c in children {
        if c.rect.w <= 0.0 || c.rect.h <= 0.0 {
            return Err(PlanningError::DegenerateChild(c.id.clone()));
        }
    }
    if children.is_empty() {
        return Ok(GridConfig {
            columns: 1,
            rows: 1,
            gap: 0.0,
            cell_assignments: BTreeMap::new(),
        });
    }
    let tol = config.track_merge;
    let cols = Axis::new(children.iter().map(|c| (c.rect.l, c.rect.right())), tol);
    let rows = Axis::new(children.iter().map(|c| (c.rect.t, c.rect.bottom())), tol);

    let mut cells = BTreeMap::new();
    for c in children {
        let (col_start, col_span) = cols.place(c.rect.l, c.rect.right());
        let (row_start, row_span) = rows.place(c.rect.t, c.rect.bottom());
        cells.insert(
            c.id.clone(),
            CellSpan {
                col_span,
                row_span,
                col_start,
                row_start,
            },
        );
    }
    let aspect = page.height as f64 / page.width as f64;
    let width = container.rect.w.max(f64::MIN_POSITIVE);
    let mut spacings: Vec<f64> = cols.spacings(children.iter().map(|c| (c.rect.l, c.rect.right())));
    spacings.extend(
        rows.spacings(children.iter().map(|c| (c.rect.t, c.rect.bottom())))
            .into_iter()
            .map(|s| s * aspect),
    );
    let gap = crate::canonical::micro((median(&mut spacings) / width).clamp(0.0, 1.0));

    let mut grid = GridConfig {
        columns: cols.starts.len() as u32,
        rows: rows.starts.len() as u32,
        gap,
        cell_assignments: cells,
    };
    let ids = children.iter().map(|c| c.id.as_str()).collect();
    if grid.validate(&ids).is_err() {
        let horizontal = container.rect.w >= container.rect.h * aspect;
        let n = children.len() as u32;
        let mut ordered: Vec<&LayoutNode> = children.iter().collect();
        ordered.sort_by_key(|c| c.order_index);
        grid.columns = if horizontal { n } else { 1 };
        grid.rows = if horizontal { 1 } else { n };
        grid.cell_assignments = ordered
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let i = i as u32;
                let (col_start, row_start) = if horizontal { (i, 0) } else { (0, i) };
                (
                    c.id.clone(),
                    CellSpan {
                        col_span: 1,
                        row_span: 1,
                        col_start,
                        row_start,
                    },
                )
            })
            .collect();
    }
    Ok(grid)
}

/// Clustered track openings along one axis.
struct Axis {
    starts: Vec<f64>,
    tol: f64,
}

impl Axis {
    fn new(intervals: impl Iterator<Item = (f64, f64)>, tol: f64) -> Self {
        let mut edges: Vec<f64> = intervals.map(|(a, _)| a).collect();
        edges.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let mut starts: Vec<f64> = Vec::new();
        let mut last = f64::NEG_INFINITY;
        for e in edges {
            if e - last > tol {
                starts.push(e);
            }
            last = e;
        }
        Self { starts, tol }
    }

    fn track_of(&self, v: f64) -> usize {
        self.starts
            .iter()
            .rposition(|&s| s <= v + self.tol)
            .unwrap_or(0)
    }

    fn place(&self, lo: f64, hi: f64) -> (u32, u32) {
        let first = self.track_of(lo);
        let last = self
            .starts
            .iter()
            .rposition(|&s| s < hi - self.tol)
            .unwrap_or(first)
            .max(first);
        (first as u32, (last - first + 1) as u32)
    }

    /// Distance from each track's furthest end to the next opening.
    fn spacings(&self, intervals: impl Iterator<Item = (f64, f64)>) -> Vec<f64> {
        let mut ends = vec![f64::NEG_INFINITY; self.starts.len()];
        for (lo, hi) in intervals {
            let (first, span) = self.place(lo, hi);
            let last = (first + span - 1) as usize;
            ends[last] = ends[last].max(hi);
        }
        (0..self.starts.len().saturating_sub(1))
            .filter(|&i| ends[i].is_finite())
            .map(|i| (self.starts[i + 1] - ends[i]).max(0.0))
            .collect()
    }
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn serialize_tree(tree: &LayoutTree) -> String {
    to_canonical_json(tree)
}

/// Parses and validates a tree document; boxes must lie on the 1e-6 grid.
pub fn parse_tree(text: &str) -> Result<LayoutTree, PlanningError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let tree: LayoutTree = serde_path_to_error::deserialize(de)
        .map_err(|e| PlanningError::Parse(format!("{}: {}", e.path(), e.inner())))?;
    tree.validate()?;
    Ok(tree)
}
