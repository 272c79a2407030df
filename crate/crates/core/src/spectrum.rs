//! One-dimensional reflectance spectra with an explicit wavelength axis.

use crate::error::{Error, Result};

/// A reflectance spectrum sampled at strictly increasing wavelengths (nm).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    values: Vec<f64>,
    wavelengths: Vec<f64>,
}

impl Spectrum {
    /// Build a spectrum, validating that both axes have equal length, the
    /// wavelength axis is strictly increasing, and every value is finite.
    pub fn new(values: Vec<f64>, wavelengths: Vec<f64>) -> Result<Self> {
        if values.len() != wavelengths.len() {
            return Err(Error::DimensionMismatch(values.len(), wavelengths.len()));
        }
        validate_axis(&wavelengths)?;
        for (band, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    line: 0,
                    sample: 0,
                    band,
                });
            }
        }
        Ok(Self {
            values,
            wavelengths,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// True when both spectra sample the same wavelength axis.
    pub fn same_axis(&self, other: &Spectrum) -> bool {
        self.wavelengths == other.wavelengths
    }
}

/// Check that a wavelength axis is strictly increasing.
pub fn validate_axis(wavelengths: &[f64]) -> Result<()> {
    for (i, pair) in wavelengths.windows(2).enumerate() {
        if !(pair[1] > pair[0]) {
            return Err(Error::NonMonotoneWavelengths(i + 1));
        }
    }
    Ok(())
}
