//! In-memory image representation and 8-bit RGB PNG round-trips.
//!
//! Images are `Array3<f64>` in HWC layout with values in [0, 1]. PNG writes
//! quantize to 8 bits; loading divides by 255, so a save/load round-trip is
//! exact for values that are already multiples of 1/255.

use std::path::Path;

use image::{ImageBuffer, Rgb};
use ndarray::{Array3, Array4, ArrayD, Axis};
use thiserror::Error;

pub type ImageTensor = Array3<f64>;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("image codec failure: {0}")]
    Codec(#[from] image::ImageError),
    #[error("expected RGB image data")]
    NotRgb,
}

pub fn save_png(img: &ImageTensor, path: &Path) -> Result<(), ImageIoError> {
    let (h, w, c) = img.dim();
    assert_eq!(c, 3, "save_png expects HxWx3");
    let mut buf = ImageBuffer::<Rgb<u8>, Vec<u8>>::new(w as u32, h as u32);
    for (y, x, px) in buf.enumerate_pixels_mut().map(|(x, y, p)| (y, x, p)) {
        let quant = |v: f64| -> u8 { (v.clamp(0.0, 1.0) * 255.0).round() as u8 };
        *px = Rgb([
            quant(img[[y as usize, x as usize, 0]]),
            quant(img[[y as usize, x as usize, 1]]),
            quant(img[[y as usize, x as usize, 2]]),
        ]);
    }
    buf.save(path)?;
    Ok(())
}

pub fn load_png(path: &Path) -> Result<ImageTensor, ImageIoError> {
    let img = image::open(path)?.into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = Array3::<f64>::zeros((h, w, 3));
    for (x, y, px) in img.enumerate_pixels() {
        for ch in 0..3 {
            out[[y as usize, x as usize, ch]] = px.0[ch] as f64 / 255.0;
        }
    }
    Ok(out)
}

/// HWC image -> CHW tensor.
pub fn hwc_to_chw(img: &ImageTensor) -> Array3<f64> {
    img.view().permuted_axes([2, 0, 1]).as_standard_layout().into_owned()
}

/// CHW tensor -> HWC image.
pub fn chw_to_hwc(t: &Array3<f64>) -> ImageTensor {
    t.view().permuted_axes([1, 2, 0]).as_standard_layout().into_owned()
}

/// Stack HWC images into an NCHW batch (dyn-shaped, ready for the graph).
pub fn batch_nchw(imgs: &[&ImageTensor]) -> ArrayD<f64> {
    assert!(!imgs.is_empty());
    let (h, w, _) = imgs[0].dim();
    let mut out = Array4::<f64>::zeros((imgs.len(), 3, h, w));
    for (i, img) in imgs.iter().enumerate() {
        out.index_axis_mut(Axis(0), i).assign(&hwc_to_chw(img));
    }
    out.into_dyn()
}

/// First sample of an NCHW batch back to an HWC image.
pub fn nchw_to_image(batch: &ArrayD<f64>, index: usize) -> ImageTensor {
    let b4 = batch.view().into_dimensionality::<ndarray::Ix4>().expect("expected NCHW");
    let chw = b4.index_axis(Axis(0), index).to_owned();
    chw_to_hwc(&chw)
}

pub fn mean_abs_diff(a: &ImageTensor, b: &ImageTensor) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

pub fn max_abs_diff(a: &ImageTensor, b: &ImageTensor) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_roundtrip_preserves_quantized_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let mut img = Array3::<f64>::zeros((5, 7, 3));
        for (i, v) in img.iter_mut().enumerate() {
            *v = ((i * 11) % 256) as f64 / 255.0;
        }
        save_png(&img, &path).unwrap();
        let back = load_png(&path).unwrap();
        assert!(max_abs_diff(&img, &back) < 1e-12);
    }

    #[test]
    fn layout_conversions_invert() {
        let mut img = Array3::<f64>::zeros((4, 6, 3));
        for (i, v) in img.iter_mut().enumerate() {
            *v = i as f64;
        }
        let chw = hwc_to_chw(&img);
        assert_eq!(chw.dim(), (3, 4, 6));
        assert_eq!(chw_to_hwc(&chw), img);
    }
}
