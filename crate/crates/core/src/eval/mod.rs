//! Layout rewards and visual-block metrics.
//!
//! Both sides of a comparison are [`BlockSet`]s: normalized boxes carrying
//! text, mean color and a kind. Blocks are paired by a maximum-similarity
//! assignment; the block, text, position and color terms are computed over
//! that pairing.

mod color;
mod ocr;
mod render;
mod resolve;

pub use color::{color_similarity, srgb_to_lab};
pub use ocr::{ingest_ocr_blocks, OcrBlock, OcrDocument, OCR_SCHEMA_VERSION};
pub use render::rasterize;
pub use resolve::{resolve_blocks, resolve_document, ResolveError, Resolution, ResolvedElement};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ciou, covered_area, hungarian_min_cost, CostMatrix, NormRect, Rect};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("weights must be finite and non-negative, got {0:?}")]
    InvalidWeights([f64; 3]),
    #[error("matching threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("{0}")]
    Schema(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Text,
    Image,
    Container,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    #[serde(rename = "box")]
    pub rect: NormRect,
    pub text: String,
    /// RGB in unit fractions.
    pub mean_color: [f64; 3],
    pub kind: BlockKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockSource {
    Resolver,
    OcrIngest,
    Detector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSet {
    pub blocks: Vec<Block>,
    pub source: BlockSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub reference: usize,
    pub candidate: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockMatching {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_reference: Vec<usize>,
    pub unmatched_candidate: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// (block, text, position) weights of the composite.
    pub weights: [f64; 3],
    /// Minimum text similarity for a text pair to count as matched.
    pub text_threshold: f64,
    /// Minimum CIoU for image and container pairs, which carry no text.
    pub image_ciou_floor: f64,
    /// Whether unmatched candidate blocks enlarge the block-reward union.
    pub union_includes_candidates: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            weights: [0.4, 0.3, 0.3],
            text_threshold: 0.5,
            image_ciou_floor: 0.1,
            union_includes_candidates: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_block: f64,
    pub r_text: f64,
    pub r_pos: f64,
    pub r_color: f64,
    pub composite: f64,
    pub weights: [f64; 3],
}

fn multiset<T: Ord>(items: impl Iterator<Item = T>) -> BTreeMap<T, usize> {
    let mut m = BTreeMap::new();
    for i in items {
        *m.entry(i).or_insert(0) += 1;
    }
    m
}

/// Sørensen-Dice coefficient over character-bigram multisets. Strings shorter
/// than two characters have no bigrams, so such comparisons use single
/// characters instead.
pub fn text_similarity(r: &str, g: &str) -> f64 {
    let (rc, gc): (Vec<char>, Vec<char>) = (r.chars().collect(), g.chars().collect());
    match (rc.is_empty(), gc.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let (a, b) = if rc.len() < 2 || gc.len() < 2 {
        (multiset(rc.iter().map(|&c| (c, '\0'))), multiset(gc.iter().map(|&c| (c, '\0'))))
    } else {
        (multiset(rc.windows(2).map(|w| (w[0], w[1]))), multiset(gc.windows(2).map(|w| (w[0], w[1]))))
    };
    let shared: usize = a.iter().map(|(k, n)| (*n).min(*b.get(k).unwrap_or(&0))).sum();
    let total: usize = a.values().sum::<usize>() + b.values().sum::<usize>();
    2.0 * shared as f64 / total as f64
}

fn unit(r: &NormRect) -> Option<Rect> {
    r.as_unit_rect()
}

fn box_ciou(a: &NormRect, b: &NormRect) -> f64 {
    match (unit(a), unit(b)) {
        (Some(a), Some(b)) => ciou(&a, &b),
        _ => -1.0,
    }
}

/// Pair similarity and the floor it must reach to count as a match.
fn pair_similarity(r: &Block, c: &Block, config: &EvalConfig) -> (f64, f64) {
    if r.kind != c.kind {
        return (0.0, f64::INFINITY);
    }
    match r.kind {
        BlockKind::Text => (text_similarity(&r.text, &c.text), config.text_threshold),
        BlockKind::Image | BlockKind::Container => (box_ciou(&r.rect, &c.rect).max(0.0), config.image_ciou_floor),
    }
}

/// Maximum-similarity one-to-one pairing. Among pairings of equal total
/// similarity, geometrically closer pairs win.
pub fn match_blocks(reference: &BlockSet, candidate: &BlockSet, config: &EvalConfig) -> Result<BlockMatching, EvalError> {
    if !(config.text_threshold > 0.0 && config.text_threshold < 1.0) {
        return Err(EvalError::InvalidThreshold(config.text_threshold));
    }
    let (n, m) = (reference.blocks.len(), candidate.blocks.len());
    let mut sim = vec![vec![(0.0, f64::INFINITY); m]; n];
    for (i, r) in reference.blocks.iter().enumerate() {
        for (j, c) in candidate.blocks.iter().enumerate() {
            sim[i][j] = pair_similarity(r, c, config);
        }
    }
    let costs = CostMatrix::from_fn(n, m, |i, j| {
        let (s, _) = sim[i][j];
        let closeness = (box_ciou(&reference.blocks[i].rect, &candidate.blocks[j].rect) + 2.0) / 3.0;
        -(s + 1e-6 * closeness)
    })
    .expect("similarities are finite");
    let mut matching = BlockMatching::default();
    let mut used_r = vec![false; n];
    let mut used_c = vec![false; m];
    for (i, j) in hungarian_min_cost(&costs) {
        let (s, floor) = sim[i][j];
        if s >= floor {
            matching.pairs.push(MatchedPair {
                reference: i,
                candidate: j,
                similarity: s,
            });
            used_r[i] = true;
            used_c[j] = true;
        }
    }
    matching.unmatched_reference = (0..n).filter(|&i| !used_r[i]).collect();
    matching.unmatched_candidate = (0..m).filter(|&j| !used_c[j]).collect();
    Ok(matching)
}

fn rects<'a>(blocks: impl Iterator<Item = &'a Block>) -> Vec<Rect> {
    blocks.filter_map(|b| unit(&b.rect)).collect()
}

/// Covered area of the matched reference blocks over the covered area of
/// all blocks. Areas are unions, so overlapping blocks are not double counted.
pub fn block_reward(matching: &BlockMatching, reference: &BlockSet, candidate: &BlockSet, config: &EvalConfig) -> f64 {
    if reference.blocks.is_empty() && candidate.blocks.is_empty() {
        return 1.0;
    }
    let matched = rects(matching.pairs.iter().map(|p| &reference.blocks[p.reference]));
    let mut all = rects(reference.blocks.iter());
    if config.union_includes_candidates {
        all.extend(rects(candidate.blocks.iter()));
    } else {
        all.extend(rects(matching.pairs.iter().map(|p| &candidate.blocks[p.candidate])));
    }
    let union = covered_area(&all);
    if union <= 0.0 {
        let complete = matching.unmatched_reference.is_empty() && matching.unmatched_candidate.is_empty();
        return if complete { 1.0 } else { 0.0 };
    }
    (covered_area(&matched) / union).clamp(0.0, 1.0)
}

const FIXED: f64 = 1e12;

/// `1 - max(|dx|, |dy|)` over two normalized centers. Differences are taken on
/// a 1e-12 fixed-point grid, which makes decimal inputs give decimal-exact
/// results (plain float subtraction turns 0.6 - 0.2 into 0.39999999999999997).
pub fn position_similarity(p: (f64, f64), q: (f64, f64)) -> f64 {
    let fx = |v: f64| (v * FIXED).round();
    let d = (fx(p.0) - fx(q.0)).abs().max((fx(p.1) - fx(q.1)).abs());
    ((FIXED - d) / FIXED).clamp(0.0, 1.0)
}

pub fn position_reward(a: &Block, b: &Block) -> f64 {
    position_similarity(a.rect.center(), b.rect.center())
}

/// Mean of `f` over the matched pairs; 1 when both sets are empty, 0 when
/// blocks exist but none matched.
fn mean_over_pairs(
    matching: &BlockMatching,
    reference: &BlockSet,
    candidate: &BlockSet,
    f: impl Fn(&Block, &Block, &MatchedPair) -> f64,
) -> f64 {
    if matching.pairs.is_empty() {
        return if reference.blocks.is_empty() && candidate.blocks.is_empty() { 1.0 } else { 0.0 };
    }
    let sum: f64 = matching
        .pairs
        .iter()
        .map(|p| f(&reference.blocks[p.reference], &candidate.blocks[p.candidate], p))
        .sum();
    (sum / matching.pairs.len() as f64).clamp(0.0, 1.0)
}

/// Text term: mean Dice similarity over matched pairs. Pairs without text on
/// either side (images, containers) count as exact.
pub fn text_reward(matching: &BlockMatching, reference: &BlockSet, candidate: &BlockSet) -> f64 {
    mean_over_pairs(matching, reference, candidate, |r, c, _| text_similarity(&r.text, &c.text))
}

pub fn position_term(matching: &BlockMatching, reference: &BlockSet, candidate: &BlockSet) -> f64 {
    mean_over_pairs(matching, reference, candidate, |r, c, _| position_reward(r, c))
}

pub fn color_term(matching: &BlockMatching, reference: &BlockSet, candidate: &BlockSet) -> f64 {
    mean_over_pairs(matching, reference, candidate, |r, c, _| color_similarity(r.mean_color, c.mean_color))
}

pub fn composite_reward(r_block: f64, r_text: f64, r_pos: f64, r_color: f64, weights: [f64; 3]) -> Result<RewardBreakdown, EvalError> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(EvalError::InvalidWeights(weights));
    }
    Ok(RewardBreakdown {
        r_block,
        r_text,
        r_pos,
        r_color,
        composite: weights[0] * r_block + weights[1] * r_text + weights[2] * r_pos,
        weights,
    })
}

/// Matches the two sets and computes every term.
pub fn evaluate(reference: &BlockSet, candidate: &BlockSet, config: &EvalConfig) -> Result<(RewardBreakdown, BlockMatching), EvalError> {
    let matching = match_blocks(reference, candidate, config)?;
    let breakdown = composite_reward(
        block_reward(&matching, reference, candidate, config),
        text_reward(&matching, reference, candidate),
        position_term(&matching, reference, candidate),
        color_term(&matching, reference, candidate),
        config.weights,
    )?;
    Ok((breakdown, matching))
}
