//! Per-pixel class annotations.
//!
//! Masks are read from either CSV (rows of integers) or flat unsigned 8-bit
//! binary, selected by file extension. The default roster has nine classes:
//! 0 background, 1 blood, 2 ketchup, 3 artificial blood, 4 beetroot juice,
//! 5 poster paint, 6 tomato concentrate, 7 acrylic paint, 8 uncertain blood.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const BLOOD_CLASS: u8 = 1;
/// Pixels where the target substance is indistinct; handled specially in
/// template estimation and evaluation.
pub const UNCERTAIN_CLASS: u8 = 8;
pub const DEFAULT_MAX_LABEL: u8 = 8;

pub const DEFAULT_CLASS_NAMES: [&str; 9] = [
    "background",
    "blood",
    "ketchup",
    "artificial blood",
    "beetroot juice",
    "poster paint",
    "tomato concentrate",
    "acrylic paint",
    "uncertain blood",
];

/// Integer class labels on the (line, sample) grid of a companion cube.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationMask {
    labels: Array2<u8>,
}

impl AnnotationMask {
    pub fn new(labels: Array2<u8>, max_label: u8) -> Result<Self> {
        if let Some(((line, sample), &label)) =
            labels.indexed_iter().find(|(_, &l)| l > max_label)
        {
            return Err(Error::LabelOutOfRange {
                label: label as u32,
                line,
                sample,
            });
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &Array2<u8> {
        &self.labels
    }

    pub fn lines(&self) -> usize {
        self.labels.dim().0
    }

    pub fn samples(&self) -> usize {
        self.labels.dim().1
    }

    pub fn label(&self, line: usize, sample: usize) -> u8 {
        self.labels[(line, sample)]
    }

    pub fn class_count(&self, class: u8) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }

    /// Flat row-major pixel indices carrying any of the given labels.
    pub fn indices_of(&self, classes: &[u8]) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| classes.contains(l))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Read a mask with the default 0-8 roster.
pub fn read_annotation(path: impl AsRef<Path>, expected: (usize, usize)) -> Result<AnnotationMask> {
    read_annotation_with_max(path, expected, DEFAULT_MAX_LABEL)
}

/// Read a mask, allowing labels up to `max_label` for non-default rosters.
/// `.csv` files are parsed as integer rows; anything else is taken as flat
/// row-major unsigned bytes.
pub fn read_annotation_with_max(
    path: impl AsRef<Path>,
    expected: (usize, usize),
    max_label: u8,
) -> Result<AnnotationMask> {
    let path = path.as_ref();
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_annotation_csv(&text, expected, max_label)
    } else {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        parse_annotation_flat(&bytes, expected, max_label)
    }
}

pub fn parse_annotation_csv(
    text: &str,
    (lines, samples): (usize, usize),
    max_label: u8,
) -> Result<AnnotationMask> {
    let mut values = Vec::with_capacity(lines * samples);
    let mut row_count = 0usize;
    for row in text.lines() {
        let row = row.trim();
        if row.is_empty() {
            continue;
        }
        let cells: Vec<&str> = row.split(',').map(str::trim).collect();
        if cells.len() != samples {
            return Err(Error::ShapeMismatch {
                lines,
                samples,
                got_lines: row_count + 1,
                got_samples: cells.len(),
            });
        }
        for (col, cell) in cells.iter().enumerate() {
            let label: u32 = cell.parse().map_err(|_| {
                Error::Config(format!("annotation cell `{cell}` is not an integer"))
            })?;
            if label > max_label as u32 {
                return Err(Error::LabelOutOfRange {
                    label,
                    line: row_count,
                    sample: col,
                });
            }
            values.push(label as u8);
        }
        row_count += 1;
    }
    if row_count != lines {
        return Err(Error::ShapeMismatch {
            lines,
            samples,
            got_lines: row_count,
            got_samples: samples,
        });
    }
    let labels = Array2::from_shape_vec((lines, samples), values).expect("shape checked");
    AnnotationMask::new(labels, max_label)
}

pub fn parse_annotation_flat(
    bytes: &[u8],
    (lines, samples): (usize, usize),
    max_label: u8,
) -> Result<AnnotationMask> {
    if bytes.len() != lines * samples {
        return Err(Error::SizeMismatch {
            expected: (lines * samples) as u64,
            got: bytes.len() as u64,
        });
    }
    let labels = Array2::from_shape_vec((lines, samples), bytes.to_vec()).expect("len checked");
    AnnotationMask::new(labels, max_label)
}

/// Write a mask as CSV, one row per line of the image.
pub fn write_annotation_csv(path: impl AsRef<Path>, mask: &AnnotationMask) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for row in mask.labels().rows() {
        let cells: Vec<String> = row.iter().map(|l| l.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
