//! External spectral libraries: CSV files with a shared wavelength column and
//! one spectrum per remaining column.

use std::path::Path;

use crate::error::{Error, Result};
use crate::spectrum::Spectrum;

#[derive(Debug, Clone, PartialEq)]
pub struct LibraryEntry {
    /// Library index, parsed from the leading integer of the column header
    /// (falls back to the column position).
    pub index: u32,
    /// Full column header, typically `<index>:<age>`.
    pub age_label: String,
    pub spectrum: Spectrum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralLibrary {
    pub entries: Vec<LibraryEntry>,
}

impl SpectralLibrary {
    pub fn by_index(&self, index: u32) -> Option<&LibraryEntry> {
        self.entries.iter().find(|e| e.index == index)
    }
}

fn leading_integer(text: &str) -> Option<u32> {
    let digits: String = text.trim().chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

/// Parse library CSV text: header row of labels, then one row per wavelength
/// with the wavelength in the first column.
pub fn parse_spectral_library(text: &str) -> Result<SpectralLibrary> {
    let mut rows = text.lines().filter(|l| !l.trim().is_empty());
    let header = rows.next().ok_or(Error::EmptyLibrary)?;
    let labels: Vec<&str> = header.split(',').map(str::trim).collect();
    if labels.len() < 2 {
        return Err(Error::EmptyLibrary);
    }
    let n_entries = labels.len() - 1;

    let mut wavelengths = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n_entries];
    for row in rows {
        let cells: Vec<&str> = row.split(',').map(str::trim).collect();
        if cells.len() != labels.len() {
            return Err(Error::Config(format!(
                "library row has {} cells, expected {}",
                cells.len(),
                labels.len()
            )));
        }
        let w: f64 = cells[0]
            .parse()
            .map_err(|_| Error::Config(format!("bad wavelength `{}`", cells[0])))?;
        if let Some(&last) = wavelengths.last() {
            if w <= last {
                return Err(Error::NonMonotoneWavelengths(wavelengths.len()));
            }
        }
        wavelengths.push(w);
        for (col, cell) in cells[1..].iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::Config(format!("bad reflectance `{cell}`")))?;
            if v < 0.0 {
                return Err(Error::Config(format!(
                    "negative reflectance {v} in column `{}`",
                    labels[col + 1]
                )));
            }
            columns[col].push(v);
        }
    }
    if wavelengths.is_empty() {
        return Err(Error::EmptyLibrary);
    }

    let mut entries = Vec::with_capacity(n_entries);
    for (col, values) in columns.into_iter().enumerate() {
        let label = labels[col + 1];
        entries.push(LibraryEntry {
            index: leading_integer(label).unwrap_or((col + 1) as u32),
            age_label: label.to_string(),
            spectrum: Spectrum::new(values, wavelengths.clone())?,
        });
    }
    Ok(SpectralLibrary { entries })
}

pub fn read_spectral_library(path: impl AsRef<Path>) -> Result<SpectralLibrary> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_spectral_library(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_spectrum() {
        let lib = parse_spectral_library("wavelength,24:1h15\n400,0.1\n500,0.2\n").unwrap();
        assert_eq!(lib.entries.len(), 1);
        assert_eq!(lib.entries[0].index, 24);
        assert_eq!(lib.entries[0].spectrum.values(), &[0.1, 0.2]);
        assert!(lib.by_index(24).is_some());
    }

    #[test]
    fn column_order_preserved() {
        let lib =
            parse_spectral_library("w,5:22d,12:7d,15:4d\n400,0.1,0.2,0.3\n500,0.4,0.5,0.6\n")
                .unwrap();
        let indices: Vec<u32> = lib.entries.iter().map(|e| e.index).collect();
        assert_eq!(indices, vec![5, 12, 15]);
        assert_eq!(lib.entries[2].spectrum.values(), &[0.3, 0.6]);
    }

    #[test]
    fn non_monotone_axis_rejected() {
        let err = parse_spectral_library("w,a\n500,0.1\n400,0.2\n").unwrap_err();
        assert!(matches!(err, Error::NonMonotoneWavelengths(_)));
    }

    #[test]
    fn no_columns_is_empty() {
        assert!(matches!(
            parse_spectral_library("wavelength\n400\n").unwrap_err(),
            Error::EmptyLibrary
        ));
    }
}
