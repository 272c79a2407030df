//! Sample mean / covariance estimation and the cached symmetric factorization
//! used for all covariance solves.
//!
//! Covariance matrices are never inverted explicitly: solves go through a
//! Cholesky factor. When factorization fails the estimate is retried with an
//! escalating diagonal ridge. Reductions run over fixed-size pixel blocks
//! combined in block order, so results are identical at any thread count.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spectrum::Spectrum;

/// Pixels per reduction block. Fixed so that partial sums combine in a
/// reproducible order regardless of parallelism.
const BLOCK: usize = 4096;

/// Base ridge is `RIDGE_EPS * trace/d`, escalating tenfold per retry.
const RIDGE_EPS: f64 = 1e-8;
const MAX_RIDGE_RETRIES: usize = 6;

/// Gaussian background/target model: mean, covariance and its factorization.
///
/// `covariance` is the matrix that was actually factored; when a ridge was
/// needed it differs from the raw sample covariance by `ridge_applied` on the
/// diagonal.
#[derive(Debug, Clone)]
pub struct GaussianStats {
    mean: Vec<f64>,
    covariance: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
    ridge_applied: f64,
}

impl GaussianStats {
    /// Estimate from a flat pixel-major buffer (`data.len() == n * dim`),
    /// using the unbiased covariance (divisor n-1).
    pub fn estimate_flat(data: &[f64], dim: usize) -> Result<Self> {
        assert_eq!(data.len() % dim, 0, "flat buffer must be pixel-major");
        let n = data.len() / dim;
        if n < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: n });
        }
        let row = |i: usize| &data[i * dim..(i + 1) * dim];
        Self::from_rows(n, dim, row)
    }

    /// Estimate from a flat buffer restricted to the given pixel indices.
    pub fn estimate_selected(data: &[f64], dim: usize, indices: &[usize]) -> Result<Self> {
        if indices.len() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: indices.len(),
            });
        }
        let row = |i: usize| {
            let p = indices[i];
            &data[p * dim..(p + 1) * dim]
        };
        Self::from_rows(indices.len(), dim, row)
    }

    /// Estimate from a list of spectra sharing one axis.
    pub fn estimate(pixels: &[Spectrum]) -> Result<Self> {
        if pixels.len() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: pixels.len(),
            });
        }
        let dim = pixels[0].len();
        for p in pixels {
            if p.len() != dim {
                return Err(Error::DimensionMismatch(dim, p.len()));
            }
        }
        Self::from_rows(pixels.len(), dim, |i| pixels[i].values())
    }

    fn from_rows<'a, F>(n: usize, dim: usize, row: F) -> Result<Self>
    where
        F: Fn(usize) -> &'a [f64] + Sync,
    {
        let (mean, covariance) = mean_covariance_from_rows(n, dim, row);
        Self::factorize(mean, covariance)
    }
    /// Build directly from a mean and covariance (used by tests and by
    /// synthetic oracles).
    pub fn from_mean_covariance(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        assert_eq!(mean.len(), covariance.nrows());
        assert_eq!(covariance.nrows(), covariance.ncols());
        Self::factorize(mean, covariance)
    }

    fn factorize(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let dim = covariance.nrows();
        if let Some(factor) = Cholesky::new(covariance.clone()) {
            return Ok(Self {
                mean,
                covariance,
                factor,
                ridge_applied: 0.0,
            });
        }
        let trace: f64 = covariance.diagonal().sum();
        let base = if trace > 0.0 {
            RIDGE_EPS * trace / dim as f64
        } else {
            // Degenerate zero-trace estimate (e.g. identical pixels): fall
            // back to an absolute floor so the ridge can take effect at all.
            RIDGE_EPS
        };
        let mut ridge = base;
        for _ in 0..MAX_RIDGE_RETRIES {
            let mut ridged = covariance.clone();
            for i in 0..dim {
                ridged[(i, i)] += ridge;
            }
            if let Some(factor) = Cholesky::new(ridged.clone()) {
                return Ok(Self {
                    mean,
                    covariance: ridged,
                    factor,
                    ridge_applied: ridge,
                });
            }
            ridge *= 10.0;
        }
        Err(Error::UnrecoverablySingular {
            retries: MAX_RIDGE_RETRIES,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn mean_spectrum(&self, wavelengths: &[f64]) -> Result<Spectrum> {
        Spectrum::new(self.mean.clone(), wavelengths.to_vec())
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn ridge_applied(&self) -> f64 {
        self.ridge_applied
    }

    /// Solve `covariance * out = rhs` through the cached factor.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(rhs);
        self.factor.solve(&v).as_slice().to_vec()
    }

    /// Squared Mahalanobis distance of `x` from the stored mean.
    pub fn mahalanobis_sq(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(x.len(), self.dim()));
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        let solved = self.solve(&centered);
        Ok(dot(&centered, &solved))
    }
}

/// Two-pass sample mean and unbiased covariance over `n` rows of width `dim`.
/// Block partials combine in block order, so the result does not depend on
/// the thread count.
pub(crate) fn mean_covariance_from_rows<'a, F>(
    n: usize,
    dim: usize,
    row: F,
) -> (Vec<f64>, DMatrix<f64>)
where
    F: Fn(usize) -> &'a [f64] + Sync,
{
    let blocks = n.div_ceil(BLOCK);
    let partial_sums: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|blk| {
            let mut acc = vec![0.0f64; dim];
            for i in blk * BLOCK..((blk + 1) * BLOCK).min(n) {
                for (a, v) in acc.iter_mut().zip(row(i)) {
                    *a += v;
                }
            }
            acc
        })
        .collect();
    let mut mean = vec![0.0f64; dim];
    for partial in &partial_sums {
        for (m, p) in mean.iter_mut().zip(partial) {
            *m += p;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    // Second pass: upper triangle of sum (x - mean)(x - mean)^T, packed.
    let tri = dim * (dim + 1) / 2;
    let partial_outer: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|blk| {
            let mut acc = vec![0.0f64; tri];
            let mut centered = vec![0.0f64; dim];
            for i in blk * BLOCK..((blk + 1) * BLOCK).min(n) {
                for ((c, v), m) in centered.iter_mut().zip(row(i)).zip(&mean) {
                    *c = v - m;
                }
                let mut k = 0;
                for a in 0..dim {
                    let ca = centered[a];
                    for cb in &centered[a..] {
                        acc[k] += ca * cb;
                        k += 1;
                    }
                }
            }
            acc
        })
        .collect();
    let mut packed = vec![0.0f64; tri];
    for partial in &partial_outer {
        for (t, p) in packed.iter_mut().zip(partial) {
            *t += p;
        }
    }
    let denom = (n - 1) as f64;
    let mut covariance = DMatrix::zeros(dim, dim);
    let mut k = 0;
    for a in 0..dim {
        for b in a..dim {
            let v = packed[k] / denom;
            covariance[(a, b)] = v;
            covariance[(b, a)] = v;
            k += 1;
        }
    }
    (mean, covariance)
}

/// Sample mean and unbiased covariance of a flat pixel-major buffer.
pub fn sample_mean_covariance(data: &[f64], dim: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    assert_eq!(data.len() % dim, 0, "flat buffer must be pixel-major");
    let n = data.len() / dim;
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    Ok(mean_covariance_from_rows(n, dim, |i| {
        &data[i * dim..(i + 1) * dim]
    }))
}

/// Plain sequential dot product; fixed order keeps scores reproducible.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectra(rows: &[&[f64]]) -> Vec<Spectrum> {
        rows.iter()
            .map(|r| {
                let wl: Vec<f64> = (0..r.len()).map(|i| 400.0 + i as f64).collect();
                Spectrum::new(r.to_vec(), wl).unwrap()
            })
            .collect()
    }

    #[test]
    fn hand_computed_mean_and_covariance() {
        let pixels = spectra(&[&[0.0, 0.0], &[2.0, 0.0], &[0.0, 2.0], &[2.0, 2.0]]);
        let stats = GaussianStats::estimate(&pixels).unwrap();
        assert_eq!(stats.mean(), &[1.0, 1.0]);
        let cov = stats.covariance();
        assert!((cov[(0, 0)] - 4.0 / 3.0).abs() < 1e-15);
        assert!((cov[(1, 1)] - 4.0 / 3.0).abs() < 1e-15);
        assert!(cov[(0, 1)].abs() < 1e-15);
        assert_eq!(stats.ridge_applied(), 0.0);
    }

    #[test]
    fn identical_pixels_force_ridge() {
        let pixels = spectra(&[&[1.0, 2.0], &[1.0, 2.0]]);
        let stats = GaussianStats::estimate(&pixels).unwrap();
        assert!(stats.ridge_applied() > 0.0);
        // Factor must still solve against the ridged covariance.
        let out = stats.solve(&[1.0, 0.0]);
        assert!((out[0] - 1.0 / stats.ridge_applied()).abs() / out[0].abs() < 1e-8);
    }

    #[test]
    fn single_pixel_is_too_few() {
        let pixels = spectra(&[&[1.0, 2.0]]);
        assert!(matches!(
            GaussianStats::estimate(&pixels),
            Err(Error::TooFewSamples { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn solve_residual_is_small() {
        // Random-ish but fixed SPD system.
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.2, 0.3, 1.2, 3.0, 0.7, 0.3, 0.7, 2.0]);
        let stats = GaussianStats::from_mean_covariance(vec![0.0; 3], a.clone()).unwrap();
        let x = stats.solve(&[1.0, 2.0, 3.0]);
        let back = &a * DVector::from_column_slice(&x);
        let rhs = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        let rel = (&back - &rhs).norm() / rhs.norm();
        assert!(rel < 1e-12, "relative residual {rel}");
    }

    #[test]
    fn mahalanobis_identity_covariance() {
        let stats =
            GaussianStats::from_mean_covariance(vec![1.0, 1.0], DMatrix::identity(2, 2)).unwrap();
        let d2 = stats.mahalanobis_sq(&[3.0, 1.0]).unwrap();
        assert!((d2 - 4.0).abs() < 1e-12);
        assert!(stats.mahalanobis_sq(&[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn estimation_independent_of_block_partitioning() {
        // More pixels than one block, exercising the two-pass reduction.
        let n = BLOCK + 257;
        let dim = 3;
        let mut data = Vec::with_capacity(n * dim);
        let mut state = 1u64;
        for _ in 0..n * dim {
            // Small deterministic LCG keeps this test self-contained.
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            data.push((state >> 11) as f64 / (1u64 << 53) as f64);
        }
        let a = GaussianStats::estimate_flat(&data, dim).unwrap();
        let indices: Vec<usize> = (0..n).collect();
        let b = GaussianStats::estimate_selected(&data, dim, &indices).unwrap();
        assert_eq!(a.mean(), b.mean());
        assert_eq!(a.covariance(), b.covariance());
    }
}
