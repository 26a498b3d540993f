//! Plain image containers: RGB in `[0, 1]`, K-channel feature maps and binary
//! masks. All buffers are row-major and channel-interleaved.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        RgbImage {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut img = RgbImage::new(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::invalid(format!(
                "RGB buffer of {} values does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(RgbImage { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * 3 + c]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn same_shape(&self, other: &RgbImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Quantizes to 8-bit with round-to-nearest after clamping to `[0, 1]`.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|v| quantize(*v)).collect()
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        RgbImage::from_raw(width, height, bytes.iter().map(|b| *b as f64 / 255.0).collect())
    }
}

pub(crate) fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    width: usize,
    height: usize,
    k: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(width: usize, height: usize, k: usize) -> Self {
        FeatureMap {
            width,
            height,
            k,
            data: vec![0.0; width * height * k],
        }
    }

    pub fn from_raw(width: usize, height: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * k {
            return Err(Error::invalid(format!(
                "feature buffer of {} values does not match {width}x{height}x{k}",
                data.len()
            )));
        }
        Ok(FeatureMap { width, height, k, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.k;
        &self.data[i..i + self.k]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = (y * self.width + x) * self.k;
        &mut self.data[i..i + self.k]
    }

    pub fn pixels(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.k.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "mask of {} values does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Mask { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    pub fn same_shape(&self, other: &Mask) -> bool {
        self.width == other.width && self.height == other.height
    }
}
