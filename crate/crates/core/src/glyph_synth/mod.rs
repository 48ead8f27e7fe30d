//! Synthetic artistic-glyph dataset construction.
//!
//! Source glyphs come from the embedded uniform font; target/reference
//! images are produced by applying procedural styles (fill, gradient,
//! texture, outline) on top of the rendered glyph mask. Everything is a
//! pure function of `(charset, n_styles, seed, split)`.

pub mod font;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::imageio::{self, ImageTensor};
use anyglyph_nn::rng::{stream_rng, sub_seed};

pub use font::FontId;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("codepoint U+{0:04X} is not renderable by font `{1}`")]
    UnrenderableCodepoint(u32, String),
    #[error("canvas {0} is too small (minimum 16)")]
    CanvasTooSmall(usize),
    #[error("charset is empty")]
    EmptyCharset,
    #[error("charset must contain at least two characters to draw references")]
    CharsetTooSmall,
    #[error("unknown font `{0}`")]
    UnknownFont(String),
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] imageio::ImageIoError),
    #[error("malformed manifest line {0}: {1}")]
    ManifestParse(usize, String),
}

/// What to render: a codepoint in one of the bundled fonts.
#[derive(Debug, Clone)]
pub struct GlyphSpec {
    pub codepoint: char,
    pub font_id: FontId,
    pub canvas: usize,
}

impl GlyphSpec {
    pub fn new(codepoint: char, font_id: FontId, canvas: usize) -> Self {
        GlyphSpec { codepoint, font_id, canvas }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Fill {
    Solid([u8; 3]),
    /// Two-stop linear gradient across the glyph bounding box.
    Gradient { start: [u8; 3], end: [u8; 3], angle: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outline {
    pub color: [u8; 3],
    pub width_px: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TextureKind {
    None,
    /// Value noise blended into the fill.
    Noise { scale: f64, strength: f64 },
    /// Parallel stripes modulating the fill.
    Stripes { period: f64, angle: f64, strength: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Texture {
    pub kind: TextureKind,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StyleParams {
    pub style_id: String,
    pub fill: Fill,
    pub outline: Option<Outline>,
    pub texture: Texture,
    pub background: [u8; 3],
}

impl StyleParams {
    /// Identity style: black on white, no decoration. `apply_style` with this
    /// style reproduces a binary glyph exactly.
    pub fn identity(style_id: &str) -> Self {
        StyleParams {
            style_id: style_id.to_string(),
            fill: Fill::Solid([0, 0, 0]),
            outline: None,
            texture: Texture { kind: TextureKind::None, seed: 0 },
            background: [255, 255, 255],
        }
    }

    /// Procedural style, fully determined by `(style_id, global_seed)`.
    pub fn derive(style_id: &str, global_seed: u64) -> Self {
        let mut rng = stream_rng(global_seed, &format!("style.{style_id}"));
        let dark = |rng: &mut rand_chacha::ChaCha8Rng| -> [u8; 3] {
            [rng.gen_range(0..=170), rng.gen_range(0..=170), rng.gen_range(0..=170)]
        };
        let fill = if rng.gen_bool(0.5) {
            Fill::Solid(dark(&mut rng))
        } else {
            Fill::Gradient {
                start: dark(&mut rng),
                end: dark(&mut rng),
                angle: rng.gen_range(0.0..std::f64::consts::PI),
            }
        };
        let outline = if rng.gen_bool(0.5) {
            Some(Outline { color: dark(&mut rng), width_px: rng.gen_range(1..=3) })
        } else {
            None
        };
        let kind = match rng.gen_range(0..3u32) {
            0 => TextureKind::None,
            1 => TextureKind::Noise {
                scale: rng.gen_range(4.0..20.0),
                strength: rng.gen_range(0.25..0.7),
            },
            _ => TextureKind::Stripes {
                period: rng.gen_range(4.0..16.0),
                angle: rng.gen_range(0.0..std::f64::consts::PI),
                strength: rng.gen_range(0.25..0.7),
            },
        };
        let texture = Texture { kind, seed: rng.gen() };
        let background =
            [rng.gen_range(200..=255), rng.gen_range(200..=255), rng.gen_range(200..=255)];
        StyleParams { style_id: style_id.to_string(), fill, outline, texture, background }
    }
}

/// Render a codepoint as a black glyph centered on a white canvas.
pub fn render_glyph(spec: &GlyphSpec) -> Result<ImageTensor, SynthError> {
    if spec.canvas < 16 {
        return Err(SynthError::CanvasTooSmall(spec.canvas));
    }
    let shapes = font::glyph_shapes(spec.font_id, spec.codepoint).ok_or_else(|| {
        SynthError::UnrenderableCodepoint(spec.codepoint as u32, spec.font_id.name().to_string())
    })?;
    let mask = font::rasterize(&shapes, spec.canvas);
    let frac = mask.sum() / (spec.canvas * spec.canvas) as f64;
    if !(0.01..=0.9).contains(&frac) {
        return Err(SynthError::UnrenderableCodepoint(
            spec.codepoint as u32,
            spec.font_id.name().to_string(),
        ));
    }
    let mut img = Array3::<f64>::ones((spec.canvas, spec.canvas, 3));
    for ((y, x), &ink) in mask.indexed_iter() {
        if ink > 0.5 {
            for ch in 0..3 {
                img[[y, x, ch]] = 0.0;
            }
        }
    }
    Ok(img)
}

fn foreground_mask(glyph: &ImageTensor) -> Array2<bool> {
    let (h, w, _) = glyph.dim();
    let mut mask = Array2::from_elem((h, w), false);
    for y in 0..h {
        for x in 0..w {
            let lum =
                0.299 * glyph[[y, x, 0]] + 0.587 * glyph[[y, x, 1]] + 0.114 * glyph[[y, x, 2]];
            mask[[y, x]] = lum < 0.5;
        }
    }
    mask
}

fn dilate(mask: &Array2<bool>, radius: usize) -> Array2<bool> {
    let (h, w) = mask.dim();
    let mut out = mask.clone();
    let r = radius as i64;
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            if out[[y as usize, x as usize]] {
                continue;
            }
            'scan: for dy in -r..=r {
                for dx in -r..=r {
                    if dy * dy + dx * dx > r * r {
                        continue;
                    }
                    let (ny, nx) = (y + dy, x + dx);
                    if ny >= 0
                        && nx >= 0
                        && ny < h as i64
                        && nx < w as i64
                        && mask[[ny as usize, nx as usize]]
                    {
                        out[[y as usize, x as usize]] = true;
                        break 'scan;
                    }
                }
            }
        }
    }
    out
}

/// Deterministic lattice value noise in [0, 1].
fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    fn hash01(ix: i64, iy: i64, seed: u64) -> f64 {
        let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
        h = h.wrapping_add((ix as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9));
        h ^= h >> 27;
        h = h.wrapping_add((iy as u64).wrapping_mul(0x94D0_49BB_1331_11EB));
        h ^= h >> 31;
        h = h.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        h ^= h >> 32;
        (h & 0xFFFF_FFFF) as f64 / u32::MAX as f64
    }
    let (ix, iy) = (x.floor() as i64, y.floor() as i64);
    let (fx, fy) = (x - x.floor(), y - y.floor());
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let (sx, sy) = (smooth(fx), smooth(fy));
    let v00 = hash01(ix, iy, seed);
    let v10 = hash01(ix + 1, iy, seed);
    let v01 = hash01(ix, iy + 1, seed);
    let v11 = hash01(ix + 1, iy + 1, seed);
    let a = v00 + (v10 - v00) * sx;
    let b = v01 + (v11 - v01) * sx;
    a + (b - a) * sy
}

fn to_unit(c: [u8; 3]) -> [f64; 3] {
    [c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0]
}

/// Recolor a rendered glyph with a procedural style. Pure in
/// `(glyph, style, seed)`.
pub fn apply_style(glyph: &ImageTensor, style: &StyleParams, seed: u64) -> ImageTensor {
    let (h, w, _) = glyph.dim();
    let mask = foreground_mask(glyph);

    // glyph bounding box for gradient normalization
    let (mut min_x, mut min_y, mut max_x, mut max_y) = (w, h, 0usize, 0usize);
    for ((y, x), &m) in mask.indexed_iter() {
        if m {
            min_x = min_x.min(x);
            min_y = min_y.min(y);
            max_x = max_x.max(x);
            max_y = max_y.max(y);
        }
    }
    if min_x > max_x {
        // blank glyph: style applies to background only
        min_x = 0;
        min_y = 0;
        max_x = w.saturating_sub(1);
        max_y = h.saturating_sub(1);
    }

    let bg = to_unit(style.background);
    let mut out = Array3::<f64>::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                out[[y, x, c]] = bg[c];
            }
        }
    }

    if let Some(outline) = &style.outline {
        let ring = dilate(&mask, outline.width_px);
        let oc = to_unit(outline.color);
        for ((y, x), &r) in ring.indexed_iter() {
            if r && !mask[[y, x]] {
                for c in 0..3 {
                    out[[y, x, c]] = oc[c];
                }
            }
        }
    }

    let noise_seed = style.texture.seed ^ seed;
    let diag = (((max_x - min_x + 1).pow(2) + (max_y - min_y + 1).pow(2)) as f64).sqrt();
    for ((y, x), &m) in mask.indexed_iter() {
        if !m {
            continue;
        }
        let mut color = match &style.fill {
            Fill::Solid(c) => to_unit(*c),
            Fill::Gradient { start, end, angle } => {
                let (s, e) = (to_unit(*start), to_unit(*end));
                let proj = (x as f64 - min_x as f64) * angle.cos()
                    + (y as f64 - min_y as f64) * angle.sin();
                let t = (proj / diag.max(1.0)).clamp(0.0, 1.0);
                [
                    s[0] + (e[0] - s[0]) * t,
                    s[1] + (e[1] - s[1]) * t,
                    s[2] + (e[2] - s[2]) * t,
                ]
            }
        };
        match &style.texture.kind {
            TextureKind::None => {}
            TextureKind::Noise { scale, strength } => {
                // blend toward white by the local noise amount
                let blend = strength * value_noise(x as f64 / scale, y as f64 / scale, noise_seed);
                color = [
                    color[0] * (1.0 - blend) + blend,
                    color[1] * (1.0 - blend) + blend,
                    color[2] * (1.0 - blend) + blend,
                ];
            }
            TextureKind::Stripes { period, angle, strength } => {
                let proj = x as f64 * angle.cos() + y as f64 * angle.sin();
                let phase = ((proj / period) * std::f64::consts::TAU).sin() * 0.5 + 0.5;
                let blend = strength * phase;
                color = [
                    color[0] * (1.0 - blend) + blend,
                    color[1] * (1.0 - blend) + blend,
                    color[2] * (1.0 - blend) + blend,
                ];
            }
        }
        for c in 0..3 {
            out[[y, x, c]] = color[c].clamp(0.0, 1.0);
        }
    }
    out
}

/// Canonical prompt for one `(character, style)` pair.
pub fn make_prompt(ch: char, style_id: &str) -> String {
    format!("render glyph \"{ch}\" in style {style_id}")
}

// ---- dataset ----

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub codepoint: char,
    pub style_id: String,
    pub path_x0: String,
    pub path_lg: String,
    pub path_lr: String,
    pub prompt: String,
}

impl ManifestEntry {
    /// Character of the reference image, recovered from its path.
    pub fn ref_codepoint(&self) -> Option<char> {
        let stem = Path::new(&self.path_lr).file_name()?.to_str()?;
        let hex = stem.strip_suffix("_x0.png")?.rsplit('_').next()?;
        char::from_u32(u32::from_str_radix(hex, 16).ok()?)
    }

    pub fn ref_style_id(&self) -> Option<String> {
        let stem = Path::new(&self.path_lr).file_name()?.to_str()?;
        let body = stem.strip_suffix("_x0.png")?;
        let (style, _) = body.rsplit_once('_')?;
        Some(style.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct Manifest {
    /// Directory every path in the manifest is relative to.
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest, SynthError> {
        let text = fs::read_to_string(path)?;
        let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let mut entries = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 7 {
                return Err(SynthError::ManifestParse(ln + 1, "expected 7 columns".into()));
            }
            let code = u32::from_str_radix(cols[1], 16)
                .map_err(|e| SynthError::ManifestParse(ln + 1, e.to_string()))?;
            let codepoint = char::from_u32(code)
                .ok_or_else(|| SynthError::ManifestParse(ln + 1, "bad codepoint".into()))?;
            entries.push(ManifestEntry {
                id: cols[0].to_string(),
                codepoint,
                style_id: cols[2].to_string(),
                path_x0: cols[3].to_string(),
                path_lg: cols[4].to_string(),
                path_lr: cols[5].to_string(),
                prompt: cols[6].to_string(),
            });
        }
        Ok(Manifest { root, entries })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{}\t{:06x}\t{}\t{}\t{}\t{}\t{}",
                e.id, e.codepoint as u32, e.style_id, e.path_x0, e.path_lg, e.path_lr, e.prompt
            );
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), SynthError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Structural validity: reference is a different character of the same
    /// style, prompts match the canonical template and all files exist.
    pub fn validate(&self) -> Result<(), String> {
        for e in &self.entries {
            let ref_char = e.ref_codepoint().ok_or_else(|| format!("{}: bad lr path", e.id))?;
            if ref_char == e.codepoint {
                return Err(format!("{}: reference equals source character", e.id));
            }
            let ref_style =
                e.ref_style_id().ok_or_else(|| format!("{}: bad lr style", e.id))?;
            if ref_style != e.style_id {
                return Err(format!("{}: reference style {} != {}", e.id, ref_style, e.style_id));
            }
            if e.prompt != make_prompt(e.codepoint, &e.style_id) {
                return Err(format!("{}: prompt does not match template", e.id));
            }
            for rel in [&e.path_x0, &e.path_lg, &e.path_lr] {
                if !self.root.join(rel).exists() {
                    return Err(format!("{}: missing file {rel}", e.id));
                }
            }
        }
        Ok(())
    }
}

/// A fully loaded training example.
#[derive(Debug, Clone)]
pub struct GlyphSample {
    pub id: String,
    pub x0: ImageTensor,
    pub lg: ImageTensor,
    pub lr: ImageTensor,
    pub y: String,
    pub char_: char,
    pub style_id: String,
}

impl Manifest {
    pub fn load_sample(&self, index: usize) -> Result<GlyphSample, SynthError> {
        let e = &self.entries[index];
        Ok(GlyphSample {
            id: e.id.clone(),
            x0: imageio::load_png(&self.root.join(&e.path_x0))?,
            lg: imageio::load_png(&self.root.join(&e.path_lg))?,
            lr: imageio::load_png(&self.root.join(&e.path_lr))?,
            y: e.prompt.clone(),
            char_: e.codepoint,
            style_id: e.style_id.clone(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct DatasetConfig {
    pub charset: Vec<char>,
    pub n_styles: usize,
    pub seed: u64,
    /// Fraction of styles assigned to the training split.
    pub split: f64,
    pub canvas: usize,
    pub font_id: FontId,
}

pub struct DatasetOutput {
    pub manifest: Manifest,
    pub train: Manifest,
    pub test: Manifest,
}

/// Build the dataset on disk. Every sample's reference is the styled image
/// of a different character in the same style, so `path_lr` points at that
/// character's own target file.
pub fn build_dataset(config: &DatasetConfig, out_dir: &Path) -> Result<DatasetOutput, SynthError> {
    if config.charset.is_empty() {
        return Err(SynthError::EmptyCharset);
    }
    if config.charset.len() < 2 {
        return Err(SynthError::CharsetTooSmall);
    }
    assert!(config.n_styles >= 1, "n_styles must be >= 1");
    let images_dir = out_dir.join("images");
    fs::create_dir_all(&images_dir)?;

    // render all source glyphs once; fails fast on unrenderable codepoints
    let mut glyphs = Vec::with_capacity(config.charset.len());
    for &ch in &config.charset {
        let spec = GlyphSpec::new(ch, config.font_id, config.canvas);
        glyphs.push(render_glyph(&spec)?);
    }

    let n_train = ((config.split * config.n_styles as f64).round() as usize).min(config.n_styles);
    let mut entries = Vec::new();
    for si in 0..config.n_styles {
        let style_id = format!("s{si:04}");
        let style = StyleParams::derive(&style_id, config.seed);
        let style_seed = sub_seed(config.seed, &format!("texture.{style_id}"));

        // styled target for every character of this style
        let styled: Vec<ImageTensor> =
            glyphs.iter().map(|g| apply_style(g, &style, style_seed)).collect();

        for (ci, &ch) in config.charset.iter().enumerate() {
            let id = format!("{style_id}_{:06x}", ch as u32);
            let mut rng = stream_rng(config.seed, &format!("ref.{id}"));
            let mut others: Vec<usize> = (0..config.charset.len()).filter(|&j| j != ci).collect();
            others.shuffle(&mut rng);
            let ref_ci = others[0];
            let ref_ch = config.charset[ref_ci];

            let path_x0 = format!("images/{id}_x0.png");
            let path_lg = format!("images/{id}_lg.png");
            let path_lr = format!("images/{style_id}_{:06x}_x0.png", ref_ch as u32);
            imageio::save_png(&styled[ci], &out_dir.join(&path_x0))?;
            imageio::save_png(&glyphs[ci], &out_dir.join(&path_lg))?;
            entries.push(ManifestEntry {
                id,
                codepoint: ch,
                style_id: style_id.clone(),
                path_x0,
                path_lg,
                path_lr,
                prompt: make_prompt(ch, &style_id),
            });
        }
    }

    let manifest = Manifest { root: out_dir.to_path_buf(), entries: entries.clone() };
    let is_train = |e: &ManifestEntry| -> bool {
        let si: usize = e.style_id[1..].parse().unwrap();
        si < n_train
    };
    let train = Manifest {
        root: out_dir.to_path_buf(),
        entries: entries.iter().filter(|e| is_train(e)).cloned().collect(),
    };
    let test = Manifest {
        root: out_dir.to_path_buf(),
        entries: entries.iter().filter(|e| !is_train(e)).cloned().collect(),
    };
    manifest.save(&out_dir.join("manifest.txt"))?;
    train.save(&out_dir.join("manifest_train.txt"))?;
    test.save(&out_dir.join("manifest_test.txt"))?;
    Ok(DatasetOutput { manifest, train, test })
}

/// Named charset presets used by the CLI and the experiment harness.
pub fn preset_charset(name: &str) -> Option<(Vec<char>, FontId)> {
    match name {
        "latin26" => Some((font::latin_charset(), FontId::Sans)),
        "chinese-mini" => Some((font::cjk_charset().into_iter().take(60).collect(), FontId::Cjk)),
        "korean-mini" => Some((font::hangul_mini_charset(), FontId::Hangul)),
        _ => None,
    }
}
