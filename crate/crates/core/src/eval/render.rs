//! Flat rasterization of resolved documents: backgrounds, placeholders and
//! embedded images are painted in document order. Text is not drawn.

use base64::Engine;
use image::{imageops, Rgba, RgbaImage};

use super::resolve::{resolve_document, ResolveError};
use crate::generation::html::Element;
use crate::generation::vocab::{gray_rgb, parse_class, Utility};
use crate::generation::GeneratedDocument;
use crate::geometry::Rect;
use crate::raster::pixel_window;

pub fn rasterize(doc: &GeneratedDocument, viewport: (u32, u32)) -> Result<RgbaImage, ResolveError> {
    let resolution = resolve_document(doc, viewport)?;
    let mut img = RgbaImage::from_pixel(viewport.0, viewport.1, Rgba([255, 255, 255, 255]));
    for (el, resolved) in doc.root.walk().into_iter().zip(&resolution.elements) {
        paint(&mut img, el, &resolved.rect);
    }
    Ok(img)
}

fn paint(img: &mut RgbaImage, el: &Element, rect: &Rect) {
    let Some((x, y, w, h)) = pixel_window_rounded(img, rect) else {
        return;
    };
    if el.tag == "img" {
        if let Some(src) = el.attrs.get("src").and_then(|s| decode_data_uri(s)) {
            let scaled = imageops::resize(&src, w, h, imageops::FilterType::Nearest);
            imageops::overlay(img, &scaled, x as i64, y as i64);
        }
        return;
    }
    let shade = el.classes.iter().find_map(|c| match parse_class(c) {
        Some(Utility::BgGray(s)) => Some(s),
        _ => None,
    });
    let shade = shade.or_else(|| el.is_placeholder().then_some(400));
    if let Some(rgb) = shade.and_then(gray_rgb) {
        let px = Rgba([to_u8(rgb[0]), to_u8(rgb[1]), to_u8(rgb[2]), 255]);
        for yy in y..y + h {
            for xx in x..x + w {
                img.put_pixel(xx, yy, px);
            }
        }
    }
}

fn to_u8(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Pixel window with edges rounded to the nearest pixel boundary, so abutting
/// rectangles neither overlap nor leave seams.
fn pixel_window_rounded(img: &RgbaImage, r: &Rect) -> Option<(u32, u32, u32, u32)> {
    let snapped = Rect::from_edges(r.x.round(), r.y.round(), r.right().round(), r.bottom().round())?;
    pixel_window(img, &snapped)
}

pub(crate) fn decode_data_uri(src: &str) -> Option<RgbaImage> {
    let (_, payload) = src.strip_prefix("data:image/")?.split_once(";base64,")?;
    let bytes = base64::engine::general_purpose::STANDARD.decode(payload).ok()?;
    Some(image::load_from_memory(&bytes).ok()?.to_rgba8())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::html::parse_fragment;
    use crate::grounding::PageSize;

    #[test]
    fn paints_placeholders_and_backgrounds() {
        let mut d = GeneratedDocument::empty(PageSize { width: 100, height: 100 }, "root");
        d.root.children = parse_fragment(
            "<div class=\"box\" style=\"left: 10%; top: 10%; width: 20%; height: 20%\"><div class=\"placeholder\"></div></div>\
             <div class=\"box bg-gray-900\" style=\"left: 50%; top: 50%; width: 10%; height: 10%\">t</div>",
        )
        .unwrap();
        let img = rasterize(&d, (100, 100)).unwrap();
        assert_eq!(img.get_pixel(15, 15).0, [156, 163, 175, 255]);
        assert_eq!(img.get_pixel(9, 9).0, [255, 255, 255, 255]);
        assert_eq!(img.get_pixel(30, 30).0, [255, 255, 255, 255]);
        assert_eq!(img.get_pixel(55, 55).0, [17, 24, 39, 255]);
    }
}
