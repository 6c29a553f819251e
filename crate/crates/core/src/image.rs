//! Grayscale image container.
//!
//! Pixels are kept row-major in 64-bit floats regardless of the precision of
//! the file they came from; the likelihood step solves against precisions of
//! order 1/ρ², so intermediate arithmetic stays in `f64` throughout.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::param("dims", format!("{height}x{width} image is empty")));
        }
        let len = height
            .checked_mul(width)
            .ok_or_else(|| Error::param("dims", "height*width overflows"))?;
        if data.len() != len {
            return Err(Error::Dimension {
                expected: format!("{len} pixels"),
                actual: format!("{} pixels", data.len()),
            });
        }
        Ok(Self { height, width, data })
    }

    /// # Panics
    /// Panics if either dimension is zero.
    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "image dimensions must be nonzero");
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "image dimensions must be nonzero");
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    /// Same dimensions, new pixel values.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(self.height, self.width, data)
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Self {
        self.map(|v| v.clamp(lo, hi))
    }

    pub fn ensure_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::dims(dims, self.dims()));
        }
        Ok(())
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Affine rescale to [0, 1]. A constant image maps to all zeros.
pub fn normalize(img: &Image) -> Image {
    let (lo, hi) = img.min_max();
    let span = hi - lo;
    if span <= 0.0 || !span.is_finite() {
        return img.map(|_| 0.0);
    }
    img.map(|v| ((v - lo) / span).clamp(0.0, 1.0))
}

/// Pixelwise mean of equally-sized images.
pub fn pixel_mean<'a>(images: impl IntoIterator<Item = &'a Image>) -> Option<Image> {
    let mut iter = images.into_iter();
    let first = iter.next()?;
    let mut acc = first.data.clone();
    let mut count = 1usize;
    for img in iter {
        debug_assert_eq!(img.dims(), first.dims());
        for (a, v) in acc.iter_mut().zip(&img.data) {
            *a += v;
        }
        count += 1;
    }
    let inv = 1.0 / count as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    Some(Image {
        height: first.height,
        width: first.width,
        data: acc,
    })
}
