//! In-memory hyperspectral cube: a (lines, samples, bands) reflectance grid
//! plus its wavelength axis.

use ndarray::{Array3, ArrayView2};

use crate::error::{Error, Result};
use crate::spectrum::{validate_axis, Spectrum};

#[derive(Debug, Clone, PartialEq)]
pub struct HyperCube {
    data: Array3<f64>,
    wavelengths: Vec<f64>,
}

impl HyperCube {
    /// Wrap a decoded grid. The band axis must match the wavelength axis and
    /// every value must be finite.
    pub fn new(data: Array3<f64>, wavelengths: Vec<f64>) -> Result<Self> {
        let (_, _, bands) = data.dim();
        if bands != wavelengths.len() {
            return Err(Error::DimensionMismatch(bands, wavelengths.len()));
        }
        validate_axis(&wavelengths)?;
        if let Some(((line, sample, band), _)) =
            data.indexed_iter().find(|(_, v)| !v.is_finite())
        {
            return Err(Error::NonFiniteValue { line, sample, band });
        }
        Ok(Self { data, wavelengths })
    }

    pub fn lines(&self) -> usize {
        self.data.dim().0
    }

    pub fn samples(&self) -> usize {
        self.data.dim().1
    }

    pub fn bands(&self) -> usize {
        self.data.dim().2
    }

    pub fn n_pixels(&self) -> usize {
        self.lines() * self.samples()
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    /// One pixel's spectrum as a slice of band values.
    pub fn pixel(&self, line: usize, sample: usize) -> &[f64] {
        let d = self.bands();
        let base = (line * self.samples() + sample) * d;
        &self.flat()[base..base + d]
    }

    pub fn pixel_spectrum(&self, line: usize, sample: usize) -> Spectrum {
        Spectrum::new(self.pixel(line, sample).to_vec(), self.wavelengths.clone())
            .expect("cube pixels are finite on a validated axis")
    }

    /// The whole grid as one contiguous pixel-major slice: pixel `i` occupies
    /// `flat[i*bands..(i+1)*bands]` with pixels in (line, sample) order.
    pub fn flat(&self) -> &[f64] {
        self.data
            .as_slice()
            .expect("cube storage is standard layout")
    }

    /// (n_pixels, bands) view of the same storage.
    pub fn pixels(&self) -> ArrayView2<'_, f64> {
        let n = self.n_pixels();
        let d = self.bands();
        self.data
            .view()
            .into_shape_with_order((n, d))
            .expect("cube storage is standard layout")
    }
}
