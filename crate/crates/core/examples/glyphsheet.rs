use anyglyph_core::glyph_synth::{self, font::FontId, GlyphSpec, StyleParams};
use anyglyph_core::imageio;
use ndarray::Array3;

fn main() {
    let chars: Vec<(char, FontId)> = vec![
        ('A', FontId::Sans), ('R', FontId::Sans), ('W', FontId::Sans), ('S', FontId::Sans),
        ('中', FontId::Cjk), ('国', FontId::Cjk), ('水', FontId::Cjk), ('米', FontId::Cjk),
        ('가', FontId::Hangul), ('한', FontId::Hangul), ('물', FontId::Hangul), ('꿈', FontId::Hangul),
    ];
    let canvas = 64usize;
    let cols = chars.len();
    let rows = 4usize; // plain + 3 styles
    let mut sheet = Array3::<f64>::ones((rows * canvas, cols * canvas, 3));
    for (ci, (ch, font)) in chars.iter().enumerate() {
        let g = glyph_synth::render_glyph(&GlyphSpec::new(*ch, *font, canvas)).unwrap();
        for (ri, style_id) in ["plain", "s0000", "s0001", "s0002"].iter().enumerate() {
            let img = if ri == 0 {
                g.clone()
            } else {
                let style = StyleParams::derive(style_id, 7);
                glyph_synth::apply_style(&g, &style, 42)
            };
            for y in 0..canvas { for x in 0..canvas { for c in 0..3 {
                sheet[[ri * canvas + y, ci * canvas + x, c]] = img[[y, x, c]];
            }}}
        }
    }
    imageio::save_png(&sheet, std::path::Path::new("/tmp/glyphcheck/sheet.png")).unwrap();
    println!("ok");
}
