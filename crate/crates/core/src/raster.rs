//! 8-bit raster images, validity masks and their PNG I/O.

use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("image i/o: {0}")]
    Image(#[from] image::ImageError),
    #[error("unsupported channel count {0}")]
    Channels(usize),
}

/// Interleaved `height × width × channels` 8-bit image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0; width * height * channels],
        }
    }

    pub fn from_raw(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Option<Self> {
        (channels > 0 && data.len() == width * height * channels).then_some(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: &[u8]) -> Self {
        let mut img = Self::new(width, height, value.len());
        for px in img.data.chunks_exact_mut(value.len()) {
            px.copy_from_slice(value);
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &RasterImage) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, value: &[u8]) {
        let i = (y * self.width + x) * self.channels;
        self.data[i..i + self.channels].copy_from_slice(value);
    }

    /// Three-channel copy; grayscale is replicated, RGB is returned as is.
    pub fn to_rgb(&self) -> Result<Self, RasterError> {
        match self.channels {
            3 => Ok(self.clone()),
            1 => Ok(Self {
                width: self.width,
                height: self.height,
                channels: 3,
                data: self.data.iter().flat_map(|&v| [v, v, v]).collect(),
            }),
            n => Err(RasterError::Channels(n)),
        }
    }

    /// One channel as `f64`, row-major.
    pub fn channel_f64(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.channels).map(|&v| v as f64).collect()
    }

    /// Bilinear sample of channel `c` at `(x, y)`, where pixel `(i, j)` sits at
    /// integer coordinates. Coordinates are clamped to the image.
    pub fn sample_bilinear(&self, x: f64, y: f64, c: usize) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let at = |xx: usize, yy: usize| self.data[(yy * self.width + xx) * self.channels + c] as f64;
        let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
        let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RasterError> {
        let img = image::open(path)?;
        Ok(match img {
            DynamicImage::ImageLuma8(g) => {
                let (w, h) = g.dimensions();
                Self::from_raw(w as usize, h as usize, 1, g.into_raw()).expect("luma buffer size")
            }
            other => {
                let rgb = other.to_rgb8();
                let (w, h) = rgb.dimensions();
                Self::from_raw(w as usize, h as usize, 3, rgb.into_raw()).expect("rgb buffer size")
            }
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        let (w, h) = (self.width as u32, self.height as u32);
        match self.channels {
            1 => GrayImage::from_raw(w, h, self.data.clone()).expect("buffer size").save(path)?,
            3 => RgbImage::from_raw(w, h, self.data.clone()).expect("buffer size").save(path)?,
            n => return Err(RasterError::Channels(n)),
        }
        Ok(())
    }
}

/// Single-channel validity mask: nonzero marks a valid face pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Mask {
    /// All-invalid mask.
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn all_valid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![255; width * height],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Option<Self> {
        (data.len() == width * height).then_some(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.data[y * self.width + x] = value;
    }

    /// Whether the pixel nearest to `(x, y)` is valid; outside the mask is invalid.
    pub fn is_valid_at(&self, x: f64, y: f64) -> bool {
        let (xr, yr) = (x.round(), y.round());
        if !(xr >= 0.0 && yr >= 0.0 && xr < self.width as f64 && yr < self.height as f64) {
            return false;
        }
        self.get(xr as usize, yr as usize) != 0
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RasterError> {
        let g = image::open(path)?.to_luma8();
        let (w, h) = g.dimensions();
        Ok(Self::from_raw(w as usize, h as usize, g.into_raw()).expect("luma buffer size"))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        GrayImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("buffer size")
            .save(path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_hits_pixels_exactly_at_integer_coordinates() {
        let data: Vec<u8> = (0..12).map(|v| v * 20).collect();
        let img = RasterImage::from_raw(4, 3, 1, data).unwrap();
        for y in 0..3 {
            for x in 0..4 {
                assert_eq!(img.sample_bilinear(x as f64, y as f64, 0), img.pixel(x, y)[0] as f64);
            }
        }
        assert_eq!(img.sample_bilinear(0.5, 0.0, 0), 10.0);
        // clamped
        assert_eq!(img.sample_bilinear(-3.0, 10.0, 0), img.pixel(0, 2)[0] as f64);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = RasterImage::new(5, 4, 3);
        img.set_pixel(2, 1, &[1, 2, 3]);
        let path = dir.path().join("a.png");
        img.save(&path).unwrap();
        assert_eq!(RasterImage::load(&path).unwrap(), img);

        let mut mask = Mask::new(5, 4);
        mask.set(4, 3, 200);
        let path = dir.path().join("m.png");
        mask.save(&path).unwrap();
        assert_eq!(Mask::load(&path).unwrap(), mask);
    }

    #[test]
    fn mask_lookup_rounds_and_rejects_out_of_bounds() {
        let mut mask = Mask::new(3, 3);
        mask.set(1, 1, 1);
        assert!(mask.is_valid_at(1.4, 0.6));
        assert!(!mask.is_valid_at(1.6, 1.0));
        assert!(!mask.is_valid_at(-0.6, 1.0));
        assert!(!mask.is_valid_at(1.0, 2.6));
    }
}
