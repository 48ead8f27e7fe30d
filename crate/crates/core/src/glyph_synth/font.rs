//! Embedded stroke fonts.
//!
//! Glyphs are stored as line/box/circle primitives in a 16x16 design grid
//! (Latin and the CJK subset) or composed procedurally from jamo parts
//! (Hangul syllables, U+AC00..U+D7A3). Rasterization is a pure function of
//! the shape list and canvas size, so renders are identical across runs.

use ndarray::Array2;

/// Shape in glyph-box coordinates, x right / y down, unit square.
#[derive(Debug, Clone, Copy)]
pub enum Shape {
    Seg { x0: f64, y0: f64, x1: f64, y1: f64 },
    Circle { cx: f64, cy: f64, r: f64 },
}

/// Integer strokes on the 16x16 design grid used by the glyph tables.
#[derive(Debug, Clone, Copy)]
enum Gs {
    /// Horizontal run at row `y` from `x0` to `x1`.
    H(i32, i32, i32),
    /// Vertical run at column `x` from `y0` to `y1`.
    V(i32, i32, i32),
    /// Arbitrary line.
    L(i32, i32, i32, i32),
    /// Rectangle outline with corners `(x0, y0)` and `(x1, y1)`.
    R(i32, i32, i32, i32),
}

const GRID: f64 = 16.0;
/// Stroke half-width in glyph-box units.
const HALF_WIDTH: f64 = 0.042;
/// Fraction of the canvas covered by the glyph box (em box).
const EM_FRACTION: f64 = 0.78;

fn gp(v: i32) -> f64 {
    (v as f64 + 0.5) / GRID
}

fn expand(strokes: &[Gs]) -> Vec<Shape> {
    let mut out = Vec::new();
    for s in strokes {
        match *s {
            Gs::H(y, x0, x1) => out.push(Shape::Seg { x0: gp(x0), y0: gp(y), x1: gp(x1), y1: gp(y) }),
            Gs::V(x, y0, y1) => out.push(Shape::Seg { x0: gp(x), y0: gp(y0), x1: gp(x), y1: gp(y1) }),
            Gs::L(x0, y0, x1, y1) => {
                out.push(Shape::Seg { x0: gp(x0), y0: gp(y0), x1: gp(x1), y1: gp(y1) })
            }
            Gs::R(x0, y0, x1, y1) => {
                out.push(Shape::Seg { x0: gp(x0), y0: gp(y0), x1: gp(x1), y1: gp(y0) });
                out.push(Shape::Seg { x0: gp(x1), y0: gp(y0), x1: gp(x1), y1: gp(y1) });
                out.push(Shape::Seg { x0: gp(x1), y0: gp(y1), x1: gp(x0), y1: gp(y1) });
                out.push(Shape::Seg { x0: gp(x0), y0: gp(y1), x1: gp(x0), y1: gp(y0) });
            }
        }
    }
    out
}

use Gs::{H, L, R, V};

const LATIN: &[(char, &[Gs])] = &[
    (' ', &[]),
    ('A', &[L(7, 1, 3, 14), L(8, 1, 12, 14), H(10, 5, 10)]),
    ('B', &[V(3, 1, 14), H(1, 3, 11), H(7, 3, 11), H(14, 3, 11), V(12, 2, 6), V(12, 8, 13)]),
    ('C', &[H(1, 4, 12), V(3, 2, 13), H(14, 4, 12)]),
    ('D', &[V(3, 1, 14), H(1, 3, 10), H(14, 3, 10), V(12, 3, 12)]),
    ('E', &[V(3, 1, 14), H(1, 3, 12), H(7, 3, 10), H(14, 3, 12)]),
    ('F', &[V(3, 1, 14), H(1, 3, 12), H(7, 3, 10)]),
    ('G', &[H(1, 4, 12), V(3, 2, 13), H(14, 4, 12), V(12, 9, 13), H(8, 8, 12)]),
    ('H', &[V(3, 1, 14), V(12, 1, 14), H(7, 4, 11)]),
    ('I', &[H(1, 5, 10), H(14, 5, 10), V(7, 1, 14)]),
    ('J', &[H(1, 5, 12), V(10, 1, 12), H(14, 4, 9), V(3, 10, 13)]),
    ('K', &[V(3, 1, 14), L(12, 1, 4, 8), L(5, 8, 12, 14)]),
    ('L', &[V(3, 1, 14), H(14, 3, 12)]),
    ('M', &[V(2, 1, 14), V(13, 1, 14), L(3, 2, 7, 8), L(12, 2, 8, 8)]),
    ('N', &[V(3, 1, 14), V(12, 1, 14), L(3, 1, 12, 14)]),
    ('O', &[H(1, 4, 11), H(14, 4, 11), V(2, 3, 12), V(13, 3, 12)]),
    ('P', &[V(3, 1, 14), H(1, 3, 11), H(8, 3, 11), V(12, 2, 7)]),
    ('Q', &[H(1, 4, 11), H(14, 4, 11), V(2, 3, 12), V(13, 3, 12), L(9, 10, 13, 14)]),
    ('R', &[V(3, 1, 14), H(1, 3, 11), H(8, 3, 11), V(12, 2, 7), L(6, 8, 12, 14)]),
    ('S', &[H(1, 4, 12), V(3, 2, 6), H(7, 4, 11), V(12, 8, 13), H(14, 3, 11)]),
    ('T', &[H(1, 2, 13), V(7, 1, 14)]),
    ('U', &[V(3, 1, 12), V(12, 1, 12), H(14, 4, 11)]),
    ('V', &[L(3, 1, 7, 14), L(12, 1, 8, 14)]),
    ('W', &[L(2, 1, 5, 14), L(5, 14, 8, 6), L(8, 6, 11, 14), L(11, 14, 13, 1)]),
    ('X', &[L(3, 1, 12, 14), L(12, 1, 3, 14)]),
    ('Y', &[L(3, 1, 7, 7), L(12, 1, 8, 7), V(7, 7, 14)]),
    ('Z', &[H(1, 3, 12), L(12, 2, 3, 13), H(14, 3, 12)]),
];

const CJK: &[(char, &[Gs])] = &[
    ('一', &[H(7, 2, 13)]),
    ('二', &[H(4, 3, 12), H(11, 2, 13)]),
    ('三', &[H(2, 3, 12), H(7, 4, 11), H(13, 2, 13)]),
    ('十', &[H(7, 2, 13), V(7, 1, 14)]),
    ('口', &[R(3, 3, 12, 12)]),
    ('日', &[R(3, 1, 12, 14), H(7, 4, 11)]),
    ('月', &[H(1, 3, 12), V(3, 1, 11), V(12, 1, 14), H(5, 4, 11), H(9, 4, 11), L(3, 11, 2, 13)]),
    ('目', &[R(3, 1, 12, 14), H(5, 4, 11), H(9, 4, 11)]),
    ('田', &[R(2, 2, 13, 13), H(7, 3, 12), V(7, 3, 12)]),
    ('中', &[R(4, 3, 11, 9), V(7, 1, 14)]),
    ('山', &[V(7, 1, 12), V(2, 6, 12), V(13, 6, 12), H(12, 3, 12)]),
    ('王', &[H(2, 3, 12), H(7, 4, 11), H(13, 2, 13), V(7, 2, 13)]),
    ('土', &[H(6, 4, 11), H(13, 2, 13), V(7, 2, 13)]),
    ('工', &[H(2, 3, 12), H(13, 2, 13), V(7, 3, 12)]),
    ('大', &[V(7, 1, 5), H(5, 2, 13), L(7, 5, 3, 14), L(8, 5, 12, 14)]),
    ('人', &[L(7, 1, 3, 14), L(8, 4, 12, 14)]),
    ('八', &[L(6, 3, 3, 13), L(9, 3, 12, 13)]),
    ('小', &[V(7, 1, 12), L(4, 5, 2, 11), L(11, 5, 13, 11)]),
    ('木', &[H(5, 2, 13), V(7, 1, 14), L(6, 6, 3, 12), L(9, 6, 12, 12)]),
    ('林', &[H(5, 1, 7), V(4, 1, 14), L(3, 7, 1, 11), L(5, 7, 7, 11), H(5, 8, 14), V(11, 1, 14), L(10, 7, 8, 11), L(12, 7, 14, 11)]),
    ('火', &[V(7, 1, 8), L(7, 8, 3, 14), L(8, 8, 12, 14), L(3, 3, 4, 6), L(12, 3, 11, 6)]),
    ('水', &[V(7, 1, 14), L(2, 3, 6, 7), L(6, 8, 2, 13), L(9, 7, 13, 3), L(9, 8, 13, 13)]),
    ('上', &[V(7, 1, 12), H(6, 8, 11), H(12, 2, 13)]),
    ('下', &[H(2, 2, 13), V(7, 3, 14), L(8, 6, 11, 9)]),
    ('不', &[H(2, 2, 13), L(7, 2, 3, 11), V(8, 2, 14), L(9, 7, 12, 10)]),
    ('了', &[H(2, 3, 12), L(12, 2, 8, 7), V(8, 7, 14)]),
    ('子', &[H(2, 3, 12), L(12, 2, 8, 6), V(8, 6, 14), H(8, 2, 13)]),
    ('干', &[H(3, 4, 11), H(7, 2, 13), V(7, 3, 14)]),
    ('千', &[L(10, 1, 4, 3), H(6, 2, 13), V(7, 3, 14)]),
    ('天', &[H(2, 4, 11), H(6, 2, 13), L(7, 6, 3, 14), L(8, 6, 12, 14)]),
    ('本', &[H(5, 2, 13), V(7, 1, 14), L(6, 6, 3, 12), L(9, 6, 12, 12), H(12, 4, 11)]),
    ('末', &[H(3, 2, 13), H(6, 4, 11), V(7, 1, 14), L(6, 8, 3, 12), L(9, 8, 12, 12)]),
    ('未', &[H(3, 4, 11), H(6, 2, 13), V(7, 1, 14), L(6, 8, 3, 12), L(9, 8, 12, 12)]),
    ('米', &[H(7, 2, 13), V(7, 1, 14), L(3, 3, 6, 6), L(12, 3, 9, 6), L(5, 9, 3, 13), L(10, 9, 12, 13)]),
    ('由', &[R(3, 4, 12, 13), H(8, 4, 11), V(7, 1, 13)]),
    ('甲', &[R(3, 2, 12, 10), H(6, 4, 11), V(7, 3, 14)]),
    ('申', &[R(3, 3, 12, 11), H(7, 4, 11), V(7, 1, 14)]),
    ('回', &[R(2, 2, 13, 13), R(5, 5, 10, 10)]),
    ('国', &[R(2, 2, 13, 13), H(5, 4, 11), H(8, 5, 10), H(11, 4, 11), V(8, 4, 11)]),
    ('品', &[R(5, 1, 10, 6), R(2, 8, 7, 13), R(8, 8, 13, 13)]),
    ('吕', &[R(4, 1, 11, 6), R(3, 8, 12, 14)]),
    ('井', &[V(5, 1, 14), V(10, 1, 14), H(4, 2, 13), H(9, 2, 13)]),
    ('丰', &[H(3, 3, 12), H(7, 3, 12), H(11, 2, 13), V(7, 1, 14)]),
    ('正', &[H(2, 2, 13), V(8, 3, 13), H(8, 9, 12), V(4, 8, 13), H(13, 2, 13)]),
    ('止', &[V(8, 2, 13), H(8, 9, 12), V(4, 6, 13), H(13, 2, 13)]),
    ('卜', &[V(7, 1, 14), L(8, 6, 11, 9)]),
    ('入', &[L(8, 1, 12, 14), L(8, 4, 4, 14)]),
    ('丁', &[H(2, 2, 13), V(8, 3, 14)]),
    ('七', &[L(2, 8, 13, 6), V(7, 1, 12), H(12, 7, 13)]),
    ('刀', &[H(2, 3, 12), L(7, 4, 3, 14), V(12, 3, 8), L(12, 8, 10, 13)]),
    ('力', &[H(3, 3, 12), L(8, 3, 3, 14), V(12, 3, 9), L(12, 9, 10, 13)]),
    ('又', &[H(2, 3, 12), L(11, 2, 3, 14), L(6, 7, 12, 14)]),
    ('丈', &[H(3, 2, 13), V(8, 1, 7), L(8, 7, 3, 14), L(6, 10, 12, 14)]),
    ('万', &[H(2, 2, 13), L(7, 3, 3, 14), V(9, 3, 11), L(9, 11, 7, 13)]),
    ('门', &[V(3, 2, 14), H(2, 4, 12), V(12, 2, 13), L(12, 13, 10, 14)]),
    ('问', &[V(3, 2, 14), H(2, 4, 12), V(12, 2, 13), L(12, 13, 10, 14), R(6, 6, 10, 10)]),
    ('间', &[V(3, 2, 14), H(2, 4, 12), V(12, 2, 13), L(12, 13, 10, 14), R(6, 5, 10, 11), H(8, 7, 9)]),
    ('出', &[V(7, 1, 13), V(3, 3, 7), V(12, 3, 7), H(7, 3, 12), V(2, 9, 13), V(13, 9, 13), H(13, 2, 13)]),
    ('生', &[L(5, 1, 3, 4), H(4, 3, 12), H(8, 4, 11), H(13, 2, 13), V(7, 2, 13)]),
    ('半', &[L(4, 2, 5, 5), L(11, 2, 10, 5), H(6, 4, 11), H(9, 2, 13), V(7, 2, 14)]),
    ('羊', &[L(4, 1, 5, 3), L(11, 1, 10, 3), H(5, 4, 11), H(8, 4, 11), H(11, 2, 13), V(7, 5, 14)]),
    ('主', &[L(7, 1, 8, 2), H(4, 3, 12), H(8, 4, 11), H(13, 2, 13), V(7, 4, 13)]),
    ('玉', &[H(3, 3, 12), H(7, 4, 11), H(13, 2, 13), V(7, 3, 13), L(10, 9, 11, 11)]),
];

// ---- Hangul composition ----

type UnitShapes = Vec<Shape>;

fn seg(x0: f64, y0: f64, x1: f64, y1: f64) -> Shape {
    Shape::Seg { x0, y0, x1, y1 }
}

/// Base consonant drawn in a unit box.
fn consonant_shapes(jamo: char) -> UnitShapes {
    match jamo {
        'ㄱ' => vec![seg(0.05, 0.08, 0.92, 0.08), seg(0.92, 0.08, 0.92, 0.95)],
        'ㄴ' => vec![seg(0.08, 0.05, 0.08, 0.92), seg(0.08, 0.92, 0.95, 0.92)],
        'ㄷ' => vec![seg(0.92, 0.08, 0.08, 0.08), seg(0.08, 0.08, 0.08, 0.92), seg(0.08, 0.92, 0.92, 0.92)],
        'ㄹ' => vec![
            seg(0.08, 0.08, 0.9, 0.08),
            seg(0.9, 0.08, 0.9, 0.5),
            seg(0.9, 0.5, 0.1, 0.5),
            seg(0.1, 0.5, 0.1, 0.92),
            seg(0.1, 0.92, 0.92, 0.92),
        ],
        'ㅁ' => vec![
            seg(0.1, 0.1, 0.9, 0.1),
            seg(0.9, 0.1, 0.9, 0.9),
            seg(0.9, 0.9, 0.1, 0.9),
            seg(0.1, 0.9, 0.1, 0.1),
        ],
        'ㅂ' => vec![
            seg(0.12, 0.05, 0.12, 0.92),
            seg(0.88, 0.05, 0.88, 0.92),
            seg(0.12, 0.5, 0.88, 0.5),
            seg(0.12, 0.92, 0.88, 0.92),
        ],
        'ㅅ' => vec![seg(0.5, 0.05, 0.06, 0.95), seg(0.5, 0.05, 0.94, 0.95)],
        'ㅇ' => vec![Shape::Circle { cx: 0.5, cy: 0.5, r: 0.4 }],
        'ㅈ' => vec![
            seg(0.06, 0.1, 0.94, 0.1),
            seg(0.5, 0.1, 0.08, 0.95),
            seg(0.5, 0.1, 0.92, 0.95),
        ],
        'ㅊ' => vec![
            seg(0.35, 0.02, 0.65, 0.02),
            seg(0.06, 0.28, 0.94, 0.28),
            seg(0.5, 0.28, 0.1, 0.95),
            seg(0.5, 0.28, 0.9, 0.95),
        ],
        'ㅋ' => vec![
            seg(0.05, 0.08, 0.92, 0.08),
            seg(0.92, 0.08, 0.92, 0.95),
            seg(0.05, 0.5, 0.92, 0.5),
        ],
        'ㅌ' => vec![
            seg(0.92, 0.08, 0.08, 0.08),
            seg(0.08, 0.08, 0.08, 0.92),
            seg(0.08, 0.5, 0.9, 0.5),
            seg(0.08, 0.92, 0.92, 0.92),
        ],
        'ㅍ' => vec![
            seg(0.05, 0.1, 0.95, 0.1),
            seg(0.3, 0.1, 0.3, 0.9),
            seg(0.7, 0.1, 0.7, 0.9),
            seg(0.05, 0.9, 0.95, 0.9),
        ],
        'ㅎ' => vec![
            seg(0.38, 0.02, 0.62, 0.02),
            seg(0.1, 0.22, 0.9, 0.22),
            Shape::Circle { cx: 0.5, cy: 0.66, r: 0.26 },
        ],
        _ => panic!("not a base consonant jamo: {jamo}"),
    }
}

/// Compound consonant (doubled or cluster) as two base jamo side by side.
fn consonant_pair(a: char, b: char) -> UnitShapes {
    let mut out = transform(&consonant_shapes(a), 0.0, 0.0, 0.46, 1.0);
    out.extend(transform(&consonant_shapes(b), 0.54, 0.0, 0.46, 1.0));
    out
}

/// Vertical vowel drawn in the right-hand column box.
fn vertical_vowel_shapes(index: usize) -> UnitShapes {
    let bar = |x: f64| seg(x, 0.04, x, 0.96);
    let tick = |x0: f64, x1: f64, y: f64| seg(x0, y, x1, y);
    match index {
        0 => vec![bar(0.4), tick(0.4, 0.9, 0.5)],                              // ㅏ
        1 => vec![bar(0.3), tick(0.3, 0.75, 0.5), bar(0.75)],                  // ㅐ
        2 => vec![bar(0.4), tick(0.4, 0.9, 0.36), tick(0.4, 0.9, 0.64)],       // ㅑ
        3 => vec![bar(0.3), tick(0.3, 0.75, 0.36), tick(0.3, 0.75, 0.64), bar(0.75)], // ㅒ
        4 => vec![tick(0.1, 0.6, 0.5), bar(0.6)],                              // ㅓ
        5 => vec![tick(0.08, 0.5, 0.5), bar(0.5), bar(0.85)],                  // ㅔ
        6 => vec![tick(0.1, 0.6, 0.36), tick(0.1, 0.6, 0.64), bar(0.6)],       // ㅕ
        7 => vec![tick(0.08, 0.5, 0.36), tick(0.08, 0.5, 0.64), bar(0.5), bar(0.85)], // ㅖ
        20 => vec![bar(0.5)],                                                  // ㅣ
        _ => panic!("not a vertical vowel index: {index}"),
    }
}

/// Horizontal vowel drawn in the bottom box.
fn horizontal_vowel_shapes(index: usize) -> UnitShapes {
    let bar = |y: f64| seg(0.05, y, 0.95, y);
    match index {
        8 => vec![seg(0.5, 0.08, 0.5, 0.55), bar(0.55)],                        // ㅗ
        12 => vec![seg(0.35, 0.1, 0.35, 0.55), seg(0.65, 0.1, 0.65, 0.55), bar(0.55)], // ㅛ
        13 => vec![bar(0.4), seg(0.5, 0.4, 0.5, 0.92)],                         // ㅜ
        17 => vec![bar(0.38), seg(0.35, 0.38, 0.35, 0.9), seg(0.65, 0.38, 0.65, 0.9)], // ㅠ
        18 => vec![bar(0.5)],                                                   // ㅡ
        _ => panic!("not a horizontal vowel index: {index}"),
    }
}

enum MedialKind {
    Vertical(usize),
    Horizontal(usize),
    /// `(horizontal part, vertical part)` for compound vowels.
    Compound(usize, usize),
}

fn medial_kind(index: usize) -> MedialKind {
    match index {
        0..=7 | 20 => MedialKind::Vertical(index),
        8 | 12 | 13 | 17 | 18 => MedialKind::Horizontal(index),
        9 => MedialKind::Compound(8, 0),   // ㅘ = ㅗ + ㅏ
        10 => MedialKind::Compound(8, 1),  // ㅙ = ㅗ + ㅐ
        11 => MedialKind::Compound(8, 20), // ㅚ = ㅗ + ㅣ
        14 => MedialKind::Compound(13, 4), // ㅝ = ㅜ + ㅓ
        15 => MedialKind::Compound(13, 5), // ㅞ = ㅜ + ㅔ
        16 => MedialKind::Compound(13, 20), // ㅟ = ㅜ + ㅣ
        19 => MedialKind::Compound(18, 20), // ㅢ = ㅡ + ㅣ
        _ => panic!("medial index out of range: {index}"),
    }
}

const INITIALS: [&str; 19] = [
    "ㄱ", "ㄱㄱ", "ㄴ", "ㄷ", "ㄷㄷ", "ㄹ", "ㅁ", "ㅂ", "ㅂㅂ", "ㅅ", "ㅅㅅ", "ㅇ", "ㅈ", "ㅈㅈ",
    "ㅊ", "ㅋ", "ㅌ", "ㅍ", "ㅎ",
];

const FINALS: [&str; 28] = [
    "", "ㄱ", "ㄱㄱ", "ㄱㅅ", "ㄴ", "ㄴㅈ", "ㄴㅎ", "ㄷ", "ㄹ", "ㄹㄱ", "ㄹㅁ", "ㄹㅂ", "ㄹㅅ",
    "ㄹㅌ", "ㄹㅍ", "ㄹㅎ", "ㅁ", "ㅂ", "ㅂㅅ", "ㅅ", "ㅅㅅ", "ㅇ", "ㅈ", "ㅊ", "ㅋ", "ㅌ", "ㅍ",
    "ㅎ",
];

fn consonant_group(spec: &str) -> UnitShapes {
    let chars: Vec<char> = spec.chars().collect();
    match chars.len() {
        1 => consonant_shapes(chars[0]),
        2 => consonant_pair(chars[0], chars[1]),
        _ => panic!("bad consonant spec: {spec}"),
    }
}

/// Map unit-box shapes into the sub-box `(ox, oy, w, h)`.
fn transform(shapes: &[Shape], ox: f64, oy: f64, w: f64, h: f64) -> Vec<Shape> {
    shapes
        .iter()
        .map(|s| match *s {
            Shape::Seg { x0, y0, x1, y1 } => Shape::Seg {
                x0: ox + x0 * w,
                y0: oy + y0 * h,
                x1: ox + x1 * w,
                y1: oy + y1 * h,
            },
            Shape::Circle { cx, cy, r } => Shape::Circle {
                cx: ox + cx * w,
                cy: oy + cy * h,
                r: r * w.min(h),
            },
        })
        .collect()
}

/// Compose a modern Hangul syllable from its jamo. `None` for non-syllables.
fn hangul_shapes(ch: char) -> Option<Vec<Shape>> {
    let code = ch as u32;
    if !(0xAC00..=0xD7A3).contains(&code) {
        return None;
    }
    let idx = code - 0xAC00;
    let ini = (idx / (21 * 28)) as usize;
    let med = ((idx / 28) % 21) as usize;
    let fin = (idx % 28) as usize;

    let initial = consonant_group(INITIALS[ini]);
    let final_shapes = if fin > 0 { Some(consonant_group(FINALS[fin])) } else { None };

    let mut out = Vec::new();
    match (medial_kind(med), final_shapes) {
        (MedialKind::Vertical(v), None) => {
            out.extend(transform(&initial, 0.05, 0.12, 0.45, 0.76));
            out.extend(transform(&vertical_vowel_shapes(v), 0.55, 0.02, 0.4, 0.94));
        }
        (MedialKind::Vertical(v), Some(fs)) => {
            out.extend(transform(&initial, 0.05, 0.04, 0.42, 0.44));
            out.extend(transform(&vertical_vowel_shapes(v), 0.52, 0.02, 0.42, 0.52));
            out.extend(transform(&fs, 0.2, 0.62, 0.6, 0.35));
        }
        (MedialKind::Horizontal(h), None) => {
            out.extend(transform(&initial, 0.2, 0.04, 0.6, 0.42));
            out.extend(transform(&horizontal_vowel_shapes(h), 0.05, 0.5, 0.9, 0.45));
        }
        (MedialKind::Horizontal(h), Some(fs)) => {
            out.extend(transform(&initial, 0.22, 0.02, 0.56, 0.3));
            out.extend(transform(&horizontal_vowel_shapes(h), 0.05, 0.33, 0.9, 0.3));
            out.extend(transform(&fs, 0.2, 0.67, 0.6, 0.31));
        }
        (MedialKind::Compound(h, v), None) => {
            out.extend(transform(&initial, 0.05, 0.04, 0.46, 0.42));
            out.extend(transform(&horizontal_vowel_shapes(h), 0.02, 0.5, 0.56, 0.46));
            out.extend(transform(&vertical_vowel_shapes(v), 0.6, 0.02, 0.38, 0.94));
        }
        (MedialKind::Compound(h, v), Some(fs)) => {
            out.extend(transform(&initial, 0.05, 0.02, 0.42, 0.34));
            out.extend(transform(&horizontal_vowel_shapes(h), 0.02, 0.38, 0.52, 0.26));
            out.extend(transform(&vertical_vowel_shapes(v), 0.58, 0.02, 0.38, 0.6));
            out.extend(transform(&fs, 0.2, 0.68, 0.6, 0.3));
        }
    }
    Some(out)
}

// ---- Font registry ----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FontId {
    Sans,
    Cjk,
    Hangul,
    /// Resolve per codepoint: sans, then cjk, then hangul.
    Auto,
}

impl FontId {
    pub fn parse(name: &str) -> Option<FontId> {
        match name {
            "bundled-sans" => Some(FontId::Sans),
            "bundled-cjk" => Some(FontId::Cjk),
            "bundled-hangul" => Some(FontId::Hangul),
            "bundled-auto" => Some(FontId::Auto),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FontId::Sans => "bundled-sans",
            FontId::Cjk => "bundled-cjk",
            FontId::Hangul => "bundled-hangul",
            FontId::Auto => "bundled-auto",
        }
    }
}

fn table_lookup(table: &[(char, &[Gs])], ch: char) -> Option<Vec<Shape>> {
    table.iter().find(|(c, _)| *c == ch).map(|(_, strokes)| expand(strokes))
}

/// Shape list for a codepoint, or `None` when the font lacks the glyph.
pub fn glyph_shapes(font: FontId, ch: char) -> Option<Vec<Shape>> {
    match font {
        FontId::Sans => table_lookup(LATIN, ch),
        FontId::Cjk => table_lookup(CJK, ch),
        FontId::Hangul => hangul_shapes(ch),
        FontId::Auto => table_lookup(LATIN, ch)
            .or_else(|| table_lookup(CJK, ch))
            .or_else(|| hangul_shapes(ch)),
    }
}

/// Characters covered by the CJK table, in table order.
pub fn cjk_charset() -> Vec<char> {
    CJK.iter().map(|(c, _)| *c).collect()
}

/// 60 syllables used by the korean-mini preset: ten common initials crossed
/// with six simple vowels, no final consonant.
pub fn hangul_mini_charset() -> Vec<char> {
    let initials = [0usize, 2, 3, 5, 6, 7, 9, 11, 12, 18];
    let medials = [0usize, 4, 8, 13, 18, 20];
    let mut out = Vec::new();
    for &ini in &initials {
        for &med in &medials {
            let code = 0xAC00 + ((ini * 21 + med) * 28) as u32;
            out.push(char::from_u32(code).unwrap());
        }
    }
    out
}

pub fn latin_charset() -> Vec<char> {
    ('A'..='Z').collect()
}

/// Render shapes as an ink mask (1.0 = ink) on an otherwise zero canvas.
pub fn rasterize(shapes: &[Shape], canvas: usize) -> Array2<f64> {
    let mut mask = Array2::<f64>::zeros((canvas, canvas));
    if shapes.is_empty() {
        return mask;
    }
    let size = canvas as f64;
    let margin = size * (1.0 - EM_FRACTION) / 2.0;
    let em = size * EM_FRACTION;
    let half_w = HALF_WIDTH * em;
    for y in 0..canvas {
        for x in 0..canvas {
            let px = x as f64 + 0.5;
            let py = y as f64 + 0.5;
            // to glyph-box pixel coordinates
            let mut on = false;
            for s in shapes {
                let d = match *s {
                    Shape::Seg { x0, y0, x1, y1 } => dist_to_segment(
                        px,
                        py,
                        margin + x0 * em,
                        margin + y0 * em,
                        margin + x1 * em,
                        margin + y1 * em,
                    ),
                    Shape::Circle { cx, cy, r } => {
                        let dx = px - (margin + cx * em);
                        let dy = py - (margin + cy * em);
                        ((dx * dx + dy * dy).sqrt() - r * em).abs()
                    }
                };
                if d <= half_w {
                    on = true;
                    break;
                }
            }
            if on {
                mask[[y, x]] = 1.0;
            }
        }
    }
    mask
}

fn dist_to_segment(px: f64, py: f64, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((px - x0) * dx + (py - y0) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (cx, cy) = (x0 + t * dx, y0 + t * dy);
    ((px - cx) * (px - cx) + (py - cy) * (py - cy)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latin_covers_all_capitals() {
        for ch in 'A'..='Z' {
            assert!(glyph_shapes(FontId::Sans, ch).is_some(), "missing {ch}");
        }
        assert!(glyph_shapes(FontId::Sans, 'a').is_none());
        assert!(glyph_shapes(FontId::Sans, '好').is_none());
    }

    #[test]
    fn hangul_mini_charset_is_60_distinct_syllables() {
        let cs = hangul_mini_charset();
        assert_eq!(cs.len(), 60);
        let mut sorted = cs.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 60);
        for ch in cs {
            assert!(glyph_shapes(FontId::Hangul, ch).is_some());
        }
    }

    #[test]
    fn every_bundled_glyph_has_sane_coverage() {
        let mut specs: Vec<(FontId, char)> =
            latin_charset().into_iter().map(|c| (FontId::Sans, c)).collect();
        specs.extend(cjk_charset().into_iter().map(|c| (FontId::Cjk, c)));
        specs.extend(hangul_mini_charset().into_iter().map(|c| (FontId::Hangul, c)));
        // plus a few syllables with finals and compound vowels
        for ch in ['각', '한', '뷁', '좋', '의', '꿈'] {
            specs.push((FontId::Hangul, ch));
        }
        for (font, ch) in specs {
            let shapes = glyph_shapes(font, ch).unwrap();
            let mask = rasterize(&shapes, 64);
            let frac = mask.sum() / (64.0 * 64.0);
            assert!(frac > 0.01 && frac < 0.9, "U+{:04X} coverage {frac}", ch as u32);
        }
    }

    #[test]
    fn distinct_codepoints_render_distinct_masks() {
        let chars = latin_charset();
        let masks: Vec<_> = chars
            .iter()
            .map(|&c| rasterize(&glyph_shapes(FontId::Sans, c).unwrap(), 32))
            .collect();
        for i in 0..masks.len() {
            for j in (i + 1)..masks.len() {
                assert_ne!(masks[i], masks[j], "{} vs {}", chars[i], chars[j]);
            }
        }
    }
}
