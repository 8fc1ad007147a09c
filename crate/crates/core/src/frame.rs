//! Grayscale B-mode frames and per-frame masks.

use crate::error::{Error, Result};

/// Row-major grayscale image, intensities in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::LengthMismatch {
                what: "frame pixels",
                expected: width * height,
                actual: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, v: f32) {
        self.data[row * self.width + col] = v;
    }

    pub fn same_size(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_same_size(&self, other: &Frame) -> Result<()> {
        if !self.same_size(other) {
            return Err(Error::InvalidInput(format!(
                "frame size mismatch: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len().max(1) as f64
    }

    /// Bilinear sample at continuous pixel-center coordinates, clamped at the
    /// border.
    pub fn sample_clamped(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let a = self.get(x0, y0) as f64 * (1.0 - fx) + self.get(x1, y0) as f64 * fx;
        let b = self.get(x0, y1) as f64 * (1.0 - fx) + self.get(x1, y1) as f64 * fx;
        a * (1.0 - fy) + b * fy
    }

    /// Quantized copy as stored on disk.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| v.round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Frame::new(width, height, bytes.iter().map(|&b| b as f32).collect())
    }

    /// Edge-replicated copy padded on the right and bottom to the given size.
    pub fn padded(&self, width: usize, height: usize) -> Frame {
        let mut out = Frame::filled(width, height, 0.0);
        for row in 0..height {
            let sr = row.min(self.height - 1);
            for col in 0..width {
                let sc = col.min(self.width - 1);
                out.set(col, row, self.get(sc, sr));
            }
        }
        out
    }
}

/// Binary per-pixel mask, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Mean pixel-center coordinates `(u, v)` of the set pixels.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let mut n = 0usize;
        let (mut su, mut sv) = (0.0, 0.0);
        for row in 0..self.height {
            for col in 0..self.width {
                if self.data[row * self.width + col] {
                    n += 1;
                    su += col as f64 + 0.5;
                    sv += row as f64 + 0.5;
                }
            }
        }
        (n > 0).then(|| (su / n as f64, sv / n as f64))
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&b| b as u8).collect()
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height {
            return Err(Error::LengthMismatch {
                what: "mask pixels",
                expected: width * height,
                actual: bytes.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data: bytes.iter().map(|&b| b != 0).collect(),
        })
    }
}
