#![allow(dead_code)]

use std::path::{Path, PathBuf};

use image::{Rgba, RgbaImage};
use serde_json::json;

pub fn fill(img: &mut RgbaImage, (x, y, w, h): (u32, u32, u32, u32), c: [u8; 3]) {
    for yy in y..y + h {
        for xx in x..x + w {
            img.put_pixel(xx, yy, Rgba([c[0], c[1], c[2], 255]));
        }
    }
}

/// Header band with two logos, a sidebar and a main area with two photos.
pub fn page() -> RgbaImage {
    let mut img = RgbaImage::from_pixel(400, 300, Rgba([255, 255, 255, 255]));
    fill(&mut img, (0, 0, 400, 40), [230, 230, 240]);
    fill(&mut img, (10, 8, 24, 24), [200, 40, 40]);
    fill(&mut img, (44, 8, 24, 24), [40, 40, 200]);
    fill(&mut img, (0, 40, 80, 260), [240, 240, 230]);
    fill(&mut img, (100, 60, 120, 90), [30, 160, 60]);
    fill(&mut img, (250, 60, 120, 90), [160, 90, 30]);
    img
}

pub fn page_png() -> Vec<u8> {
    let mut buf = std::io::Cursor::new(Vec::new());
    page().write_to(&mut buf, image::ImageFormat::Png).unwrap();
    buf.into_inner()
}

/// Grounding fixture answering for any image.
pub fn grounding_fixture(unreachable: Option<&str>) -> serde_json::Value {
    let boxes = [
        ("header", [0.0, 0.0, 400.0, 40.0], 0.9),
        ("sidebar", [0.0, 40.0, 80.0, 260.0], 0.9),
        ("navigation", [80.0, 40.0, 320.0, 10.0], 0.8),
    ];
    let responses: Vec<_> = boxes
        .iter()
        .map(|(label, b, c)| {
            if Some(*label) == unreachable {
                json!({"image": "*", "label": label, "unreachable": true})
            } else {
                json!({"image": "*", "label": label, "regions": [{"label": label, "box": b, "confidence": c}]})
            }
        })
        .collect();
    json!({"version": 1, "responses": responses})
}

pub fn generation_fixture(fragments: serde_json::Value) -> serde_json::Value {
    json!({"version": 1, "fragments": fragments})
}

pub fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(value).unwrap()).unwrap();
    p
}
