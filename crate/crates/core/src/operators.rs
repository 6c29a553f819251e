//! Linear forward operators with closed-form SVDs.
//!
//! Both operators here have the standard basis as left singular vectors
//! (`U = I`), so a factorization is fully described by the singular values
//! and the orthogonal right basis `V`. For block averaging, `V` is made of
//! one normalized indicator per block (the measured directions) followed by
//! a Helmert basis of each block's mean-zero subspace (the null space). The
//! Helmert vectors are identical across blocks, so every spectral transform
//! is a block-local O(n) pass with no stored matrix.

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Identity,
    BlockAverage { factor: usize },
}

/// A linear map `A: R^n -> R^m` stored through its SVD `A = U diag(s) V^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdOperator {
    kind: OperatorKind,
    height: usize,
    width: usize,
}

/// Averages each `f x f` block of an `H x W` image into one output pixel.
pub fn block_average_downsample(factor: usize, height: usize, width: usize) -> Result<SvdOperator> {
    if factor == 0 {
        return Err(Error::param("factor", "must be at least 1"));
    }
    if height == 0 || width == 0 {
        return Err(Error::param("dims", "image must be nonempty"));
    }
    if !height.is_multiple_of(factor) || !width.is_multiple_of(factor) {
        return Err(Error::Dimension {
            expected: format!("dims divisible by factor {factor}"),
            actual: format!("{height}x{width}"),
        });
    }
    Ok(SvdOperator {
        kind: OperatorKind::BlockAverage { factor },
        height,
        width,
    })
}

pub fn identity_operator(height: usize, width: usize) -> Result<SvdOperator> {
    if height == 0 || width == 0 {
        return Err(Error::param("dims", "image must be nonempty"));
    }
    Ok(SvdOperator {
        kind: OperatorKind::Identity,
        height,
        width,
    })
}

impl SvdOperator {
    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    /// Downsampling factor; 1 for the identity.
    pub fn factor(&self) -> usize {
        match self.kind {
            OperatorKind::Identity => 1,
            OperatorKind::BlockAverage { factor } => factor,
        }
    }

    pub fn in_dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn out_dims(&self) -> (usize, usize) {
        let f = self.factor();
        (self.height / f, self.width / f)
    }

    pub fn in_len(&self) -> usize {
        self.height * self.width
    }

    pub fn out_len(&self) -> usize {
        let (h, w) = self.out_dims();
        h * w
    }

    /// Number of measured spectral directions, `min(m, n) = m`.
    pub fn rank(&self) -> usize {
        self.out_len()
    }

    /// Singular values, sorted descending.
    pub fn singular_values(&self) -> Vec<f64> {
        vec![1.0 / self.factor() as f64; self.rank()]
    }

    /// `n / m`: the scale that turns `A^T` into a replicating upsampler.
    pub fn upsample_scale(&self) -> f64 {
        let f = self.factor() as f64;
        f * f
    }

    pub fn apply(&self, x: &Image) -> Result<Image> {
        x.ensure_dims(self.in_dims())?;
        let f = self.factor();
        if f == 1 {
            return Ok(x.clone());
        }
        let (oh, ow) = self.out_dims();
        let inv = 1.0 / (f * f) as f64;
        let mut out = vec![0.0; oh * ow];
        for r in 0..self.height {
            let orow = (r / f) * ow;
            let row = &x.data()[r * self.width..(r + 1) * self.width];
            for (c, &v) in row.iter().enumerate() {
                out[orow + c / f] += v;
            }
        }
        out.iter_mut().for_each(|v| *v *= inv);
        Image::new(oh, ow, out)
    }

    pub fn apply_adjoint(&self, y: &Image) -> Result<Image> {
        y.ensure_dims(self.out_dims())?;
        let f = self.factor();
        if f == 1 {
            return Ok(y.clone());
        }
        let inv = 1.0 / (f * f) as f64;
        let ow = self.out_dims().1;
        Ok(Image::from_fn(self.height, self.width, |r, c| {
            y.data()[(r / f) * ow + c / f] * inv
        }))
    }

    /// `V^T x`: coefficients in the right singular basis. The first
    /// `rank()` entries pair with the singular values.
    pub fn to_spectral(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        let f = self.factor();
        if f == 1 {
            return Ok(x.to_vec());
        }
        let d = f * f;
        let m = self.rank();
        let mut out = vec![0.0; self.in_len()];
        let mut block = vec![0.0; d];
        let (bh, bw) = self.out_dims();
        let helmert = HelmertBasis::new(d);
        for bi in 0..bh {
            for bj in 0..bw {
                let b = bi * bw + bj;
                self.gather_block(x, bi, bj, &mut block);
                let null = &mut out[m + b * (d - 1)..m + (b + 1) * (d - 1)];
                out[b] = helmert.analyze(&block, null);
            }
        }
        Ok(out)
    }

    /// `V c`: inverse of [`to_spectral`](Self::to_spectral).
    pub fn from_spectral(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        self.check_len(coeffs.len())?;
        let f = self.factor();
        if f == 1 {
            return Ok(coeffs.to_vec());
        }
        let d = f * f;
        let m = self.rank();
        let mut out = vec![0.0; self.in_len()];
        let mut block = vec![0.0; d];
        let (bh, bw) = self.out_dims();
        let helmert = HelmertBasis::new(d);
        for bi in 0..bh {
            for bj in 0..bw {
                let b = bi * bw + bj;
                let null = &coeffs[m + b * (d - 1)..m + (b + 1) * (d - 1)];
                helmert.synthesize(coeffs[b], null, &mut block);
                self.scatter_block(&block, bi, bj, &mut out);
            }
        }
        Ok(out)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.in_len() {
            return Err(Error::Dimension {
                expected: format!("{} coefficients", self.in_len()),
                actual: format!("{len}"),
            });
        }
        Ok(())
    }

    fn gather_block(&self, x: &[f64], bi: usize, bj: usize, block: &mut [f64]) {
        let f = self.factor();
        for dr in 0..f {
            let start = (bi * f + dr) * self.width + bj * f;
            block[dr * f..(dr + 1) * f].copy_from_slice(&x[start..start + f]);
        }
    }

    fn scatter_block(&self, block: &[f64], bi: usize, bj: usize, x: &mut [f64]) {
        let f = self.factor();
        for dr in 0..f {
            let start = (bi * f + dr) * self.width + bj * f;
            x[start..start + f].copy_from_slice(&block[dr * f..(dr + 1) * f]);
        }
    }
}

/// Orthonormal Helmert basis of `R^d`: the normalized constant vector
/// followed by `d - 1` mean-zero contrasts, the k-th comparing element `k`
/// against the mean of elements `0..k`.
struct HelmertBasis {
    d: usize,
    // 1 / sqrt(k (k + 1)) for k = 1..d
    norms: Vec<f64>,
}

impl HelmertBasis {
    fn new(d: usize) -> Self {
        let norms = (1..d).map(|k| 1.0 / ((k * (k + 1)) as f64).sqrt()).collect();
        Self { d, norms }
    }

    /// Returns the constant coefficient; writes contrasts into `null`.
    fn analyze(&self, v: &[f64], null: &mut [f64]) -> f64 {
        let mut prefix = v[0];
        for k in 1..self.d {
            null[k - 1] = (prefix - k as f64 * v[k]) * self.norms[k - 1];
            prefix += v[k];
        }
        prefix / (self.d as f64).sqrt()
    }

    fn synthesize(&self, constant: f64, null: &[f64], v: &mut [f64]) {
        let base = constant / (self.d as f64).sqrt();
        // suffix = sum_{k > j} c_k / sqrt(k (k + 1))
        let mut suffix = 0.0;
        for j in (0..self.d).rev() {
            let own = if j > 0 {
                j as f64 * null[j - 1] * self.norms[j - 1]
            } else {
                0.0
            };
            v[j] = base + suffix - own;
            if j > 0 {
                suffix += null[j - 1] * self.norms[j - 1];
            }
        }
    }
}
