//! Layered B-scan phantoms with multiplicative speckle, and the LR
//! degradation used to build benchmark pairs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::operators::block_average_downsample;

/// Interface depth as a quadratic in the column index:
/// `row = c0 + c1·col + c2·col²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interface {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Interface {
    pub fn depth(&self, col: f64) -> f64 {
        self.c0 + col * (self.c1 + col * self.c2)
    }

    /// Parabola with its apex at (`apex_row`, `apex_col`).
    pub fn parabola(apex_row: f64, apex_col: f64, curvature: f64) -> Self {
        Self {
            c0: apex_row + curvature * apex_col * apex_col,
            c1: -2.0 * curvature * apex_col,
            c2: curvature,
        }
    }

    pub fn flat(row: f64) -> Self {
        Self::parabola(row, 0.0, 0.0)
    }
}

/// A band starting at `interface` and running down to the next layer's
/// interface (or the bottom edge).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layer {
    pub interface: Interface,
    pub brightness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub height: usize,
    pub width: usize,
    pub layers: Vec<Layer>,
    /// Gamma shape `L` of the unit-mean speckle; variance is `1/L`.
    pub speckle_shape: f64,
    pub background: f64,
    pub seed: u64,
}

impl PhantomSpec {
    /// Corneal-style geometry: curved epithelium, stroma, endothelium and
    /// aqueous bands over a flat iris, scaled to the requested size.
    pub fn cornea(height: usize, width: usize, seed: u64) -> Self {
        let sy = height as f64 / 256.0;
        let sx = width as f64 / 256.0;
        let apex_col = (width as f64 - 1.0) / 2.0;
        let k = 0.003 * sy / (sx * sx);
        let curved = |row: f64, brightness| Layer {
            interface: Interface::parabola(row * sy, apex_col, k),
            brightness,
        };
        Self {
            height,
            width,
            layers: vec![
                curved(40.0, 0.85),
                curved(52.0, 0.45),
                curved(120.0, 0.75),
                curved(128.0, 0.08),
                Layer {
                    interface: Interface::flat(200.0 * sy),
                    brightness: 0.6,
                },
            ],
            speckle_shape: 6.0,
            background: 0.05,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::param("dims", "phantom must be nonempty"));
        }
        if !(self.speckle_shape > 0.0 && self.speckle_shape.is_finite()) {
            return Err(Error::param("speckle_shape", "must be positive"));
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.background) {
            return Err(Error::param("background", "must lie in [0, 1]"));
        }
        if let Some(l) = self.layers.iter().find(|l| !unit(l.brightness)) {
            return Err(Error::param("brightness", format!("{} outside [0, 1]", l.brightness)));
        }
        let center = (self.width as f64 - 1.0) / 2.0;
        let depths: Vec<f64> = self.layers.iter().map(|l| l.interface.depth(center)).collect();
        if depths.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::param(
                "layers",
                "interfaces must be ordered by increasing depth at the center column",
            ));
        }
        Ok(())
    }

    /// Noise-free piecewise-constant scene.
    pub fn clean(&self) -> Result<Image> {
        self.validate()?;
        Ok(Image::from_fn(self.height, self.width, |r, c| {
            let row = r as f64 + 0.5;
            let col = c as f64;
            self.layers
                .iter()
                .rfind(|l| l.interface.depth(col) <= row)
                .map_or(self.background, |l| l.brightness)
        }))
    }
}

/// Returns `(clean, speckled)`; the speckled image is
/// `clamp(clean · g, 0, 1)` with `g ~ Gamma(L, 1/L)` per pixel.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(Image, Image)> {
    let clean = spec.clean()?;
    let gamma = Gamma::new(spec.speckle_shape, 1.0 / spec.speckle_shape)
        .map_err(|e| Error::param("speckle_shape", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let speckled = clean.map(|v| (v * gamma.sample(&mut rng)).clamp(0.0, 1.0));
    Ok((clean, speckled))
}

/// Block-average by `factor`, then add `N(0, sigma_y²)` per pixel.
pub fn degrade(clean_hr: &Image, factor: usize, sigma_y: f64, seed: u64) -> Result<Image> {
    if !(sigma_y >= 0.0 && sigma_y.is_finite()) {
        return Err(Error::param("sigma_y", "must be nonnegative"));
    }
    let op = block_average_downsample(factor, clean_hr.height(), clean_hr.width())?;
    let mean = op.apply(clean_hr)?;
    if sigma_y == 0.0 {
        return Ok(mean);
    }
    let noise = Normal::new(0.0, sigma_y).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(mean.map(|v| v + noise.sample(&mut rng)))
}
