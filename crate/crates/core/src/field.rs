//! Dense per-pixel field containers and bilinear sampling.
//!
//! All fields are row-major with `x` as the fast axis; grid nodes sit at
//! integer pixel coordinates, so pixel `(x, y)` and grid node `(x, y)` are
//! the same location.

use crate::error::{Error, Result};

/// Dense 2D motion field, one `(u, v)` vector per pixel, in pixels per step.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: u32,
    height: u32,
    vectors: Vec<[f32; 2]>,
}

impl FlowField {
    /// Validates dimensions, storage length and finiteness.
    pub fn new(width: u32, height: u32, vectors: Vec<[f32; 2]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "flow field dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize;
        if vectors.len() != expected {
            return Err(Error::Dimension(format!(
                "flow field storage holds {} vectors, expected {expected}",
                vectors.len()
            )));
        }
        if let Some(i) = vectors
            .iter()
            .position(|v| !v[0].is_finite() || !v[1].is_finite())
        {
            return Err(Error::Format(format!(
                "non-finite flow vector at pixel index {i}"
            )));
        }
        Ok(FlowField {
            width,
            height,
            vectors,
        })
    }

    /// All-zero field, useful as a neutral element in tests and generators.
    pub fn zeros(width: u32, height: u32) -> Result<Self> {
        FlowField::new(
            width,
            height,
            vec![[0.0, 0.0]; width as usize * height as usize],
        )
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn vectors(&self) -> &[[f32; 2]] {
        &self.vectors
    }

    pub fn get(&self, x: u32, y: u32) -> [f32; 2] {
        self.vectors[y as usize * self.width as usize + x as usize]
    }

    /// Bilinear sample at a continuous position.
    ///
    /// Positions outside `[0, w-1] x [0, h-1]` are clamped to the domain
    /// boundary first, so the operation is total. Exact grid positions return
    /// the stored vector.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> [f64; 2] {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);

        let x0 = x.floor() as u32;
        let y0 = y.floor() as u32;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;

        let v00 = self.get(x0, y0);
        let v10 = self.get(x1, y0);
        let v01 = self.get(x0, y1);
        let v11 = self.get(x1, y1);

        let mut out = [0.0f64; 2];
        for c in 0..2 {
            let top = (1.0 - fx) * v00[c] as f64 + fx * v10[c] as f64;
            let bottom = (1.0 - fx) * v01[c] as f64 + fx * v11[c] as f64;
            out[c] = (1.0 - fy) * top + fy * bottom;
        }
        out
    }
}

/// Per-pixel scalar field with finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "scalar field dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize;
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "scalar field storage holds {} values, expected {expected}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!(
                "non-finite scalar value at pixel index {i}"
            )));
        }
        Ok(ScalarField {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &v in &self.values {
            min = min.min(v);
            max = max.max(v);
        }
        (min, max)
    }
}

/// Per-pixel boolean mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "mask dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize;
        if bits.len() != expected {
            return Err(Error::Dimension(format!(
                "mask storage holds {} bits, expected {expected}",
                bits.len()
            )));
        }
        Ok(BinaryMask {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: u32, height: u32) -> Result<Self> {
        BinaryMask::new(width, height, vec![false; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, bit: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = bit;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// True when `other` is set everywhere `self` is set.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self
                .bits
                .iter()
                .zip(&other.bits)
                .all(|(&a, &b)| !a || b)
    }
}
