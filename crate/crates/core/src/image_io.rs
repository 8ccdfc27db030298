//! 8-bit RGB images and their `[0, 1]` tensor form.

use std::io::Cursor;
use std::path::Path;

use image::{ColorType, DynamicImage, ImageFormat};

use crate::engine::{Element, Tensor};
use crate::{Error, Result};

/// Interleaved 8-bit RGB pixels, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != 3 * width * height {
            return Err(Error::Format(format!(
                "{} bytes for a {width}x{height} RGB image",
                pixels.len()
            )));
        }
        Ok(RgbImage { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn from_dynamic(img: DynamicImage) -> Self {
        match img.color() {
            ColorType::Rgb8 | ColorType::L8 | ColorType::La8 | ColorType::Rgba8 => {}
            other => log::warn!("converting {other:?} image to 8-bit RGB"),
        }
        if img.color().has_alpha() {
            log::debug!("dropping alpha channel");
        }
        let rgb = img.into_rgb8();
        RgbImage {
            width: rgb.width() as usize,
            height: rgb.height() as usize,
            pixels: rgb.into_raw(),
        }
    }

    fn to_buffer(&self) -> Result<image::RgbImage> {
        image::RgbImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .ok_or_else(|| Error::Format("image dimensions exceed the codec limit".into()))
    }
}

/// Decodes a PNG stream. Grayscale is replicated to three channels, alpha is
/// dropped and 16-bit samples are reduced to 8 bits.
pub fn decode_png(bytes: &[u8]) -> Result<RgbImage> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    Ok(RgbImage::from_dynamic(img))
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.to_buffer()?.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Reads any supported format (PNG or JPEG), detected from content.
pub fn read_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes)?;
    Ok(RgbImage::from_dynamic(img))
}

/// Whether `path` has a PNG or JPEG extension.
pub fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
}

/// Writes a PNG, creating parent directories.
pub fn write_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let bytes = encode_png(img)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// `1 x 3 x H x W` tensor with values `byte / 255`.
pub fn to_tensor<T: Element>(img: &RgbImage) -> Tensor<T> {
    let plane = img.width * img.height;
    Tensor::from_fn([1, 3, img.height, img.width], |_, c, y, x| {
        let i = y * img.width + x;
        debug_assert!(i < plane);
        T::from_f64_lossy(img.pixels[3 * i + c] as f64 / 255.0)
    })
}

/// Byte for a tensor value: clamp to `[0, 1]`, scale, round half up. NaN maps to 0.
pub fn quantize(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Converts batch item `index` of a 3-channel tensor back to bytes.
pub fn from_tensor<T: Element>(t: &Tensor<T>, index: usize) -> Result<RgbImage> {
    let s = t.shape();
    if s.channels != 3 {
        return Err(Error::Format(format!("expected 3 channels, got shape {s}")));
    }
    if index >= s.batch {
        return Err(Error::IndexOutOfRange { index, len: s.batch });
    }
    let mut pixels = vec![0u8; 3 * s.height * s.width];
    for c in 0..3 {
        for (i, v) in t.plane(index, c).iter().enumerate() {
            pixels[3 * i + c] = quantize(v.as_f64());
        }
    }
    RgbImage::new(s.width, s.height, pixels)
}
