//! Square RGB raster shared by the renderer, QC and sheet composition.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, RgbImage};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),
    #[error("buffer of {len} bytes does not match {width}x{height} RGB")]
    Size { width: u32, height: u32, len: usize },
}

/// Row-major 8-bit RGB pixels.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageBuf {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for ImageBuf {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ImageBuf({}x{})", self.width, self.height)
    }
}

impl ImageBuf {
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            pixels.extend_from_slice(&rgb);
        }
        Self { width, height, pixels }
    }

    pub fn white(size: u32) -> Self {
        Self::filled(size, size, [255; 3])
    }

    pub fn from_raw(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImageIoError> {
        if pixels.len() != width as usize * height as usize * 3 {
            return Err(ImageIoError::Size { width, height, len: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    /// Builds an image from a per-pixel closure `(x, y) -> rgb`.
    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, pixels }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn is_square(&self) -> bool {
        self.width == self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// ITU-R BT.601 luma per pixel, in `[0, 255]`, row-major.
    pub fn luma(&self) -> Vec<f64> {
        self.pixels
            .chunks_exact(3)
            .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
            .collect()
    }

    pub fn is_grayscale(&self) -> bool {
        self.pixels.chunks_exact(3).all(|p| p[0] == p[1] && p[1] == p[2])
    }

    /// Copies `src` into this image with its top-left corner at `(x0, y0)`;
    /// pixels falling outside are clipped.
    pub fn blit(&mut self, src: &ImageBuf, x0: u32, y0: u32) {
        for y in 0..src.height {
            let ty = y0 + y;
            if ty >= self.height {
                break;
            }
            let w = src.width.min(self.width.saturating_sub(x0)) as usize;
            let s = (y as usize * src.width as usize) * 3;
            let d = (ty as usize * self.width as usize + x0 as usize) * 3;
            self.pixels[d..d + w * 3].copy_from_slice(&src.pixels[s..s + w * 3]);
        }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, ImageIoError> {
        let img = RgbImage::from_raw(self.width, self.height, self.pixels.clone()).ok_or(ImageIoError::Size {
            width: self.width,
            height: self.height,
            len: self.pixels.len(),
        })?;
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self, ImageIoError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_rgb8();
        let (width, height) = img.dimensions();
        Ok(Self { width, height, pixels: img.into_raw() })
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImageIoError> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Self, ImageIoError> {
        Self::decode_png(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_lossless() {
        let img = ImageBuf::from_fn(17, 9, |x, y| [(x * 13) as u8, (y * 29) as u8, ((x + y) * 7) as u8]);
        let back = ImageBuf::decode_png(&img.encode_png().unwrap()).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn blit_clips() {
        let mut dst = ImageBuf::white(4);
        let src = ImageBuf::filled(3, 3, [0, 0, 0]);
        dst.blit(&src, 2, 2);
        assert_eq!(dst.get(3, 3), [0, 0, 0]);
        assert_eq!(dst.get(1, 1), [255, 255, 255]);
    }
}
