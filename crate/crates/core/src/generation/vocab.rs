//! The frozen utility-class vocabulary. Every class listed here has a rule in
//! [`stylesheet`] and a meaning in the layout resolver.

pub const MAX_TRACKS: u32 = 12;
pub const MAX_GAP: u32 = 8;
/// Pixels per `gap-*` step.
pub const GAP_UNIT_PX: f64 = 4.0;

pub const GRAYS: [(u32, &str); 9] = [
    (100, "#f3f4f6"),
    (200, "#e5e7eb"),
    (300, "#d1d5db"),
    (400, "#9ca3af"),
    (500, "#6b7280"),
    (600, "#4b5563"),
    (700, "#374151"),
    (800, "#1f2937"),
    (900, "#111827"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Utility {
    Root,
    Box,
    Container,
    Grid,
    Placeholder,
    WFull,
    HFull,
    GridCols(u32),
    GridRows(u32),
    Gap(u32),
    ColSpan(u32),
    ColStart(u32),
    RowSpan(u32),
    RowStart(u32),
    BgGray(u32),
}

pub fn parse_class(class: &str) -> Option<Utility> {
    let num = |prefix: &str, lo: u32, hi: u32| {
        class
            .strip_prefix(prefix)
            .and_then(|n| n.parse::<u32>().ok())
            .filter(|n| (lo..=hi).contains(n))
    };
    Some(match class {
        "root" => Utility::Root,
        "box" => Utility::Box,
        "container" => Utility::Container,
        "grid" => Utility::Grid,
        "placeholder" => Utility::Placeholder,
        "w-full" => Utility::WFull,
        "h-full" => Utility::HFull,
        _ => {
            if let Some(n) = num("grid-cols-", 1, MAX_TRACKS) {
                Utility::GridCols(n)
            } else if let Some(n) = num("grid-rows-", 1, MAX_TRACKS) {
                Utility::GridRows(n)
            } else if let Some(n) = num("gap-", 0, MAX_GAP) {
                Utility::Gap(n)
            } else if let Some(n) = num("col-span-", 1, MAX_TRACKS) {
                Utility::ColSpan(n)
            } else if let Some(n) = num("col-start-", 1, MAX_TRACKS + 1) {
                Utility::ColStart(n)
            } else if let Some(n) = num("row-span-", 1, MAX_TRACKS) {
                Utility::RowSpan(n)
            } else if let Some(n) = num("row-start-", 1, MAX_TRACKS + 1) {
                Utility::RowStart(n)
            } else if let Some(n) = num("bg-gray-", 100, 900).filter(|n| n % 100 == 0) {
                Utility::BgGray(n)
            } else {
                return None;
            }
        }
    })
}

pub fn gray_hex(shade: u32) -> Option<&'static str> {
    GRAYS.iter().find(|(s, _)| *s == shade).map(|(_, h)| *h)
}

/// Gray shade as RGB unit fractions.
pub fn gray_rgb(shade: u32) -> Option<[f64; 3]> {
    let hex = gray_hex(shade)?;
    let c = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).expect("valid palette") as f64 / 255.0;
    Some([c(1), c(3), c(5)])
}

/// The embedded stylesheet: base layout rules plus one rule per utility class.
pub fn stylesheet() -> String {
    let mut css = String::from(
        "html, body { margin: 0; padding: 0; width: 100%; height: 100%; }
.root { overflow: hidden; }
.box { position: absolute; box-sizing: border-box; overflow: hidden; }
.box > .container { display: grid; }
.container { width: 100%; height: 100%; box-sizing: border-box; }
[data-node] { display: flex; flex-direction: column; }
[data-node] > * { flex: 1 1 0; min-height: 0; }
.grid { display: grid; }
.w-full { width: 100%; }
.h-full { height: 100%; }
img { display: block; width: 100%; height: 100%; object-fit: cover; }
",
    );
    for n in 1..=MAX_TRACKS {
        css.push_str(&format!(
            ".grid-cols-{n} {{ grid-template-columns: repeat({n}, minmax(0, 1fr)); }}\n"
        ));
    }
    for n in 1..=MAX_TRACKS {
        css.push_str(&format!(
            ".grid-rows-{n} {{ grid-template-rows: repeat({n}, minmax(0, 1fr)); }}\n"
        ));
    }
    for k in 0..=MAX_GAP {
        css.push_str(&format!(".gap-{k} {{ gap: {}px; }}\n", k as f64 * GAP_UNIT_PX));
    }
    for n in 1..=MAX_TRACKS {
        css.push_str(&format!(".col-span-{n} {{ grid-column: span {n} / span {n}; }}\n"));
    }
    for n in 1..=MAX_TRACKS + 1 {
        css.push_str(&format!(".col-start-{n} {{ grid-column-start: {n}; }}\n"));
    }
    for n in 1..=MAX_TRACKS {
        css.push_str(&format!(".row-span-{n} {{ grid-row: span {n} / span {n}; }}\n"));
    }
    for n in 1..=MAX_TRACKS + 1 {
        css.push_str(&format!(".row-start-{n} {{ grid-row-start: {n}; }}\n"));
    }
    for (shade, hex) in GRAYS {
        css.push_str(&format!(".bg-gray-{shade} {{ background-color: {hex}; }}\n"));
    }
    css.push_str(".placeholder { background-color: #9ca3af; }\n");
    css
}
