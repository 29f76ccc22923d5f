//! Ingestion of externally extracted visual blocks.
//!
//! Schema, version 1:
//! `{"version": 1, "page_size": {"width": W, "height": H}, "blocks": [{"box":
//! [x, y, w, h], "text": "...", "color": [r, g, b], "kind": "text"}]}` with
//! boxes in pixels and colors as 0..=255 channels. `text` defaults to empty,
//! `color` to white and `kind` to `text`.

use serde::{Deserialize, Serialize};

use super::{Block, BlockKind, BlockSet, BlockSource, EvalError};
use crate::geometry::{NormRect, Rect};
use crate::grounding::PageSize;

pub const OCR_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcrBlock {
    #[serde(rename = "box")]
    pub rect: [f64; 4],
    #[serde(default)]
    pub text: String,
    #[serde(default = "white")]
    pub color: [u8; 3],
    #[serde(default = "text_kind")]
    pub kind: BlockKind,
}

fn white() -> [u8; 3] {
    [255, 255, 255]
}

fn text_kind() -> BlockKind {
    BlockKind::Text
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcrDocument {
    pub version: u32,
    pub page_size: PageSize,
    pub blocks: Vec<OcrBlock>,
}

/// Parses and validates a block file. Boxes reaching past the page are
/// clipped (with a warning) and boxes wholly outside it are dropped. Blocks
/// come back in reading order.
pub fn ingest_ocr_blocks(text: &str) -> Result<(BlockSet, Vec<String>), EvalError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: OcrDocument = serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        EvalError::Schema(format!(
            "block file field `{}` at line {}, column {}: {inner}",
            e.path(),
            inner.line(),
            inner.column()
        ))
    })?;
    if doc.version != OCR_SCHEMA_VERSION {
        return Err(EvalError::Schema(format!("unsupported block file version {}", doc.version)));
    }
    if doc.page_size.width == 0 || doc.page_size.height == 0 {
        return Err(EvalError::Schema("field `page_size` must be non-empty".into()));
    }
    let page = doc.page_size.rect();
    let (pw, ph) = (page.w, page.h);
    let mut warnings = Vec::new();
    let mut blocks = Vec::with_capacity(doc.blocks.len());
    for (i, b) in doc.blocks.into_iter().enumerate() {
        let [x, y, w, h] = b.rect;
        let rect = Rect::new(x, y, w, h)
            .map_err(|e| EvalError::Schema(format!("block file field `blocks[{i}].box`: {e}")))?;
        let Some(clipped) = rect.clip_to(&page) else {
            warnings.push(format!("blocks[{i}] lies outside the page and was dropped"));
            continue;
        };
        if clipped != rect {
            warnings.push(format!("blocks[{i}] exceeds the page bounds and was clipped"));
        }
        let norm = NormRect::new(clipped.x / pw, clipped.y / ph, clipped.w / pw, clipped.h / ph)
            .map_err(|e| EvalError::Schema(format!("block file field `blocks[{i}].box`: {e}")))?;
        blocks.push(Block {
            rect: norm,
            text: b.text.trim().to_string(),
            mean_color: b.color.map(|c| c as f64 / 255.0),
            kind: b.kind,
        });
    }
    blocks.sort_by(|a, b| {
        (a.rect.t, a.rect.l)
            .partial_cmp(&(b.rect.t, b.rect.l))
            .expect("finite boxes")
    });
    Ok((
        BlockSet {
            blocks,
            source: BlockSource::OcrIngest,
        },
        warnings,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_two_block_file() {
        let text = r#"{"version": 1, "page_size": {"width": 1000, "height": 800},
            "blocks": [{"box": [0, 400, 500, 400], "text": "b"}, {"box": [0, 0, 1000, 80], "text": "a", "color": [0, 0, 0]}]}"#;
        let (set, warnings) = ingest_ocr_blocks(text).unwrap();
        assert_eq!(set.blocks.len(), 2);
        assert_eq!(set.source, BlockSource::OcrIngest);
        assert_eq!(set.blocks[0].text, "a");
        assert_eq!(set.blocks[0].rect, NormRect::new(0.0, 0.0, 1.0, 0.1).unwrap());
        assert_eq!(set.blocks[0].mean_color, [0.0; 3]);
        assert!(warnings.is_empty());
    }

    #[test]
    fn oversized_box_is_clipped() {
        let text = r#"{"version": 1, "page_size": {"width": 100, "height": 100},
            "blocks": [{"box": [50, 50, 100, 10]}, {"box": [500, 500, 1, 1]}]}"#;
        let (set, warnings) = ingest_ocr_blocks(text).unwrap();
        assert_eq!(set.blocks.len(), 1);
        assert_eq!(set.blocks[0].rect, NormRect::new(0.5, 0.5, 0.5, 0.1).unwrap());
        assert_eq!(warnings.len(), 2);
    }

    #[test]
    fn malformed_field_is_named() {
        let text = r#"{"version": 1, "page_size": {"width": 100, "height": 100},
            "blocks": [{"box": [0, 0, 10, 10], "text": 7}]}"#;
        let err = ingest_ocr_blocks(text).unwrap_err().to_string();
        assert!(err.contains("blocks[0].text"), "{err}");
        assert!(err.contains("line 2"), "{err}");
    }
}
