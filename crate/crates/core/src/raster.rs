//! Raster containers shared by all stages.
//!
//! Pixel centres sit at integer coordinates: pixel `(x, y)` covers the square
//! `[x - 0.5, x + 0.5] x [y - 0.5, y + 0.5]`. Bilinear lookups use the same
//! convention and clamp to the border.

use std::path::Path;

use crate::color::rgb_to_yuv;
use crate::error::{Result, RtiError};

/// Single-channel float raster, row-major, values nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ImagePlane {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(RtiError::invalid(format!(
                "plane data length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn same_dims(&self, other: &ImagePlane) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Clamps every value into `[0, 1]`, mapping NaN to 0.
    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
    }

    /// Bilinear lookup with edge clamping.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let (x0, x1, fx) = bilinear_taps(x, self.width);
        let (y0, y1, fy) = bilinear_taps(y, self.height);
        let a = self.get(x0, y0) as f64;
        let b = self.get(x1, y0) as f64;
        let c = self.get(x0, y1) as f64;
        let d = self.get(x1, y1) as f64;
        let top = a + (b - a) * fx;
        let bot = c + (d - c) * fx;
        top + (bot - top) * fy
    }

    /// Quantises to 8 bits and writes a grayscale PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes: Vec<u8> = self.data.iter().map(|&v| unit_to_u8(v)).collect();
        image::save_buffer(
            path,
            &bytes,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::L8,
        )?;
        Ok(())
    }

    /// Reads any image as 8-bit luminance scaled to `[0, 1]`.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path)?.into_luma8();
        let (w, h) = img.dimensions();
        let data = img.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
        Self::new(w as usize, h as usize, data)
    }
}

/// 8-bit interleaved RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(RtiError::invalid(format!(
                "rgb data length {} does not match 3x{}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(3 * width * height);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Gray image replicated into three channels.
    pub fn from_gray(gray: &[u8], width: usize, height: usize) -> Result<Self> {
        if gray.len() != width * height {
            return Err(RtiError::invalid("gray buffer length mismatch"));
        }
        Ok(Self {
            width,
            height,
            data: gray.iter().flat_map(|&g| [g, g, g]).collect(),
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Bilinear lookup of all three channels (edge clamped), in `[0, 255]`.
    pub fn sample(&self, x: f64, y: f64) -> [f64; 3] {
        let (x0, x1, fx) = bilinear_taps(x, self.width);
        let (y0, y1, fy) = bilinear_taps(y, self.height);
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate() {
            let at = |xx: usize, yy: usize| self.data[3 * (yy * self.width + xx) + c] as f64;
            let top = at(x0, y0) + (at(x1, y0) - at(x0, y0)) * fx;
            let bot = at(x0, y1) + (at(x1, y1) - at(x0, y1)) * fx;
            *o = top + (bot - top) * fy;
        }
        out
    }

    /// BT.601 luma of every pixel, in `[0, 1]`.
    pub fn luminance(&self) -> ImagePlane {
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| {
                let (y, _, _) = rgb_to_yuv(
                    p[0] as f64 / 255.0,
                    p[1] as f64 / 255.0,
                    p[2] as f64 / 255.0,
                );
                y as f32
            })
            .collect();
        ImagePlane {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Luma quantised to 8 bits, for histogram-based processing.
    pub fn gray8(&self) -> Vec<u8> {
        self.luminance().data.iter().map(|&v| unit_to_u8(v)).collect()
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        image::save_buffer(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
        )?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path)?.into_rgb8();
        let (w, h) = img.dimensions();
        Self::new(w as usize, h as usize, img.into_raw())
    }
}

#[inline]
pub(crate) fn unit_to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[inline]
fn bilinear_taps(c: f64, len: usize) -> (usize, usize, f64) {
    let max = (len - 1) as f64;
    let c = if c.is_nan() { 0.0 } else { c.clamp(0.0, max) };
    let i0 = c.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, c - i0 as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_rejects_wrong_length() {
        assert!(ImagePlane::new(3, 3, vec![0.0; 8]).is_err());
        assert!(RgbImage::new(2, 2, vec![0; 11]).is_err());
    }

    #[test]
    fn bilinear_hits_pixel_centres_and_midpoints() {
        let p = ImagePlane::from_fn(3, 2, |x, y| (x + 10 * y) as f32);
        assert_eq!(p.sample(2.0, 1.0), 12.0);
        assert!((p.sample(0.5, 0.5) - 5.5).abs() < 1e-12);
        // clamped outside
        assert_eq!(p.sample(-4.0, -1.0), 0.0);
        assert_eq!(p.sample(9.0, 9.0), 12.0);
    }

    #[test]
    fn white_rgb_has_unit_luminance() {
        let img = RgbImage::from_fn(2, 2, |_, _| [255, 255, 255]);
        assert!(img.luminance().data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
        assert_eq!(img.gray8(), vec![255; 4]);
    }

    #[test]
    fn png_round_trip_quantises() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.png");
        let p = ImagePlane::from_fn(4, 3, |x, y| (x * 3 + y) as f32 / 12.0);
        p.save_png(&path).unwrap();
        let q = ImagePlane::load_png(&path).unwrap();
        for (a, b) in p.data().iter().zip(q.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }
}
