//! Deterministic artifact emission: curve CSVs, standalone SVG plots, and
//! indexed-palette PNG maps. Output bytes depend only on the input values.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::evaluate::{compare_code, outcome, ComparisonMap, Curve, DetectionMap};

/// RGB palette shared by the outcome maps:
/// none (black), red, orange, blue, grey, green.
pub const MAP_PALETTE: [[u8; 3]; 6] = [
    [0x00, 0x00, 0x00],
    [0xFF, 0x00, 0x00],
    [0xFF, 0xA5, 0x00],
    [0x00, 0x00, 0xFF],
    [0x80, 0x80, 0x80],
    [0x00, 0x80, 0x00],
];

/// Palette slot for each comparison code (codes already index the palette).
pub fn compare_palette_index(code: u8) -> u8 {
    match code {
        compare_code::BOTH_OR_A_TP => 1,
        compare_code::ONLY_REF_TP => 2,
        compare_code::BOTH_FN => 3,
        compare_code::A_FP => 4,
        compare_code::REF_FP_A_TN => 5,
        _ => 0,
    }
}

/// Palette slot for each single-detector outcome: hits red, misses blue,
/// false alarms grey; correct rejections and excluded pixels stay black.
pub fn outcome_palette_index(code: u8) -> u8 {
    match code {
        outcome::TRUE_POS => 1,
        outcome::FALSE_NEG => 3,
        outcome::FALSE_POS => 4,
        _ => 0,
    }
}

/// Write a curve as CSV rows of `threshold,<x>,<y>`.
pub fn curve_csv(curve: &Curve, x_name: &str, y_name: &str) -> String {
    let mut out = format!("threshold,{x_name},{y_name}\n");
    for (threshold, (x, y)) in curve.thresholds.iter().zip(&curve.points) {
        let _ = writeln!(out, "{threshold},{x},{y}");
    }
    out
}

/// One named curve for a multi-series plot.
pub struct CurveSeries<'a> {
    pub label: String,
    pub curve: &'a Curve,
}

const SERIES_COLORS: [&str; 5] = ["#c62828", "#1565c0", "#2e7d32", "#ef6c00", "#6a1b9a"];

const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 480.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 48.0;

fn map_x(x: f64) -> f64 {
    MARGIN_L + x * (PLOT_W - MARGIN_L - MARGIN_R)
}

fn map_y(y: f64) -> f64 {
    PLOT_H - MARGIN_B - y * (PLOT_H - MARGIN_T - MARGIN_B)
}

/// Render unit-square curves (ROC or PR) as a standalone SVG document.
pub fn plot_curves(title: &str, x_label: &str, y_label: &str, series: &[CurveSeries]) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PLOT_W}" height="{PLOT_H}" viewBox="0 0 {PLOT_W} {PLOT_H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{PLOT_W}" height="{PLOT_H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        (MARGIN_L + PLOT_W - MARGIN_R) / 2.0,
        title
    );

    // Axes box and quarter gridlines with tick labels.
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let x = map_x(f);
        let y = map_y(f);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#dddddd"/>"##,
            map_y(0.0),
            map_y(1.0)
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/>"##,
            map_x(0.0),
            map_x(1.0)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{f:.2}</text>"#,
            map_y(0.0) + 16.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{f:.2}</text>"#,
            map_x(0.0) - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        map_x(0.0),
        map_y(1.0),
        map_x(1.0) - map_x(0.0),
        map_y(0.0) - map_y(1.0)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        (map_x(0.0) + map_x(1.0)) / 2.0,
        PLOT_H - 12.0,
        x_label
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (map_y(0.0) + map_y(1.0)) / 2.0,
        (map_y(0.0) + map_y(1.0)) / 2.0,
        y_label
    );

    for (i, s) in series.iter().enumerate() {
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        let mut path = String::new();
        for (j, &(x, y)) in s.curve.points.iter().enumerate() {
            let cmd = if j == 0 { 'M' } else { 'L' };
            let _ = write!(path, "{cmd}{:.2} {:.2} ", map_x(x), map_y(y));
        }
        let _ = writeln!(
            svg,
            r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.trim_end()
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" fill="{color}">{} (AUC {:.4})</text>"#,
            map_x(0.0) + 8.0,
            map_y(1.0) + 16.0 + 15.0 * i as f64,
            s.label,
            s.curve.auc
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn write_indexed_png(path: &Path, indices: &Array2<u8>) -> Result<()> {
    let (lines, samples) = indices.dim();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(
        std::io::BufWriter::new(file),
        samples as u32,
        lines as u32,
    );
    encoder.set_color(png::ColorType::Indexed);
    encoder.set_depth(png::BitDepth::Eight);
    encoder.set_palette(MAP_PALETTE.iter().flatten().copied().collect::<Vec<u8>>());
    let mut writer = encoder.write_header().map_err(|e| Error::Png(e.to_string()))?;
    let data: Vec<u8> = indices.iter().copied().collect();
    writer
        .write_image_data(&data)
        .map_err(|e| Error::Png(e.to_string()))?;
    Ok(())
}

/// Save a comparison map as an indexed PNG with the fixed palette.
pub fn save_compare_png(path: impl AsRef<Path>, map: &ComparisonMap) -> Result<()> {
    let indices = map.codes.mapv(compare_palette_index);
    write_indexed_png(path.as_ref(), &indices)
}

/// Save a single-detector outcome map as an indexed PNG.
pub fn save_detection_png(path: impl AsRef<Path>, map: &DetectionMap) -> Result<()> {
    let indices = map.codes.mapv(outcome_palette_index);
    write_indexed_png(path.as_ref(), &indices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::pr_curve_from_pairs;

    #[test]
    fn csv_has_one_row_per_point() {
        let curve =
            pr_curve_from_pairs(vec![(0.9, true), (0.5, false), (0.3, true)]).unwrap();
        let csv = curve_csv(&curve, "recall", "precision");
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "threshold,recall,precision");
        assert_eq!(lines.len(), 1 + curve.points.len());
    }

    #[test]
    fn svg_output_is_deterministic() {
        let curve =
            pr_curve_from_pairs(vec![(0.9, true), (0.5, false), (0.3, true)]).unwrap();
        let series = [CurveSeries {
            label: "two-stage".into(),
            curve: &curve,
        }];
        let a = plot_curves("PR", "recall", "precision", &series);
        let b = plot_curves("PR", "recall", "precision", &series);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.contains("AUC"));
    }

    #[test]
    fn png_roundtrip_palette() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.png");
        let codes = Array2::from_shape_vec((2, 3), vec![0u8, 1, 2, 3, 4, 5]).unwrap();
        save_compare_png(&path, &ComparisonMap { codes }).unwrap();

        let decoder = png::Decoder::new(std::fs::File::open(&path).unwrap());
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!(info.width, 3);
        assert_eq!(info.height, 2);
        assert_eq!(reader.info().color_type, png::ColorType::Indexed);
        let palette = reader.info().palette.as_ref().unwrap();
        assert_eq!(&palette[3..6], &[0xFF, 0x00, 0x00]);
        assert_eq!(&buf[..6], &[0, 1, 2, 3, 4, 5]);
    }
}
