//! Cube preprocessing: noisy-band removal, per-pixel median normalization,
//! panel-based reflectance correction and wavelength resampling.
//!
//! The standard pipeline order is decode -> (optional reflectance correction)
//! -> band removal -> median normalization; correction is an acquisition-time
//! fix, and normalization uses the median over the retained bands.

use std::collections::BTreeSet;

use ndarray::{Array2, Array3};
use rayon::prelude::*;

use crate::annotation::AnnotationMask;
use crate::cube::HyperCube;
use crate::error::{Error, Result};
use crate::spectrum::{validate_axis, Spectrum};

/// Median of a non-empty slice; even lengths average the two central order
/// statistics.
pub fn median(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Set of 0-based band indices to drop before detection.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BandMask {
    removed: BTreeSet<usize>,
}

/// Default mask for the 128-band sensor: the noisy edges and the three
/// mid-range bands, leaving 113 bands.
pub const DEFAULT_BAND_MASK: &str = "0-4,48-50,121-127";

impl BandMask {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        Self {
            removed: indices.into_iter().collect(),
        }
    }

    /// Parse a mask spec of comma-separated singletons and inclusive ranges,
    /// e.g. `0-4,48-50,121-127`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut removed = BTreeSet::new();
        for part in spec.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let bad = || Error::InvalidArgument(format!("bad band mask item `{part}`"));
            match part.split_once('-') {
                Some((a, b)) => {
                    let lo: usize = a.trim().parse().map_err(|_| bad())?;
                    let hi: usize = b.trim().parse().map_err(|_| bad())?;
                    if hi < lo {
                        return Err(bad());
                    }
                    removed.extend(lo..=hi);
                }
                None => {
                    removed.insert(part.parse().map_err(|_| bad())?);
                }
            }
        }
        Ok(Self { removed })
    }

    pub fn default_noisy() -> Self {
        Self::parse(DEFAULT_BAND_MASK).expect("default mask spec is valid")
    }

    pub fn removed(&self) -> impl Iterator<Item = usize> + '_ {
        self.removed.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.removed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.removed.is_empty()
    }

    pub fn contains(&self, band: usize) -> bool {
        self.removed.contains(&band)
    }
}

impl std::fmt::Display for BandMask {
    /// Canonical spec string: inclusive ranges and singletons.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut parts: Vec<String> = Vec::new();
        let mut iter = self.removed.iter().copied().peekable();
        while let Some(start) = iter.next() {
            let mut end = start;
            while iter.peek() == Some(&(end + 1)) {
                end = iter.next().unwrap();
            }
            if start == end {
                parts.push(format!("{start}"));
            } else {
                parts.push(format!("{start}-{end}"));
            }
        }
        f.write_str(&parts.join(","))
    }
}

/// Drop the masked bands from a cube, filtering the wavelength axis the same
/// way and leaving all other values untouched.
pub fn remove_bands(cube: &HyperCube, mask: &BandMask) -> Result<HyperCube> {
    let bands = cube.bands();
    if let Some(&bad) = mask.removed.iter().find(|&&i| i >= bands) {
        return Err(Error::IndexOutOfRange { index: bad, bands });
    }
    let kept: Vec<usize> = (0..bands).filter(|b| !mask.contains(*b)).collect();
    if kept.is_empty() {
        return Err(Error::AllBandsRemoved);
    }
    let (lines, samples) = (cube.lines(), cube.samples());
    let flat = cube.flat();
    let mut out = Vec::with_capacity(lines * samples * kept.len());
    for pixel in 0..lines * samples {
        let base = pixel * bands;
        out.extend(kept.iter().map(|&b| flat[base + b]));
    }
    let wavelengths: Vec<f64> = kept.iter().map(|&b| cube.wavelengths()[b]).collect();
    let data = Array3::from_shape_vec((lines, samples, kept.len()), out).expect("shape");
    HyperCube::new(data, wavelengths)
}

/// Divide every pixel by its own median across bands. Pixels whose median is
/// not strictly positive are left unchanged and reported back by (line,
/// sample) so the caller can warn.
pub fn median_normalize(cube: &HyperCube) -> (HyperCube, Vec<(usize, usize)>) {
    let (lines, samples, bands) = (cube.lines(), cube.samples(), cube.bands());
    let flat = cube.flat();
    let results: Vec<(Vec<f64>, bool)> = (0..lines * samples)
        .into_par_iter()
        .map(|pixel| {
            let spectrum = &flat[pixel * bands..(pixel + 1) * bands];
            let m = median(spectrum);
            if m > 0.0 {
                (spectrum.iter().map(|v| v / m).collect(), false)
            } else {
                (spectrum.to_vec(), true)
            }
        })
        .collect();

    let mut out = Vec::with_capacity(flat.len());
    let mut flagged = Vec::new();
    for (pixel, (values, skip)) in results.into_iter().enumerate() {
        if skip {
            flagged.push((pixel / samples, pixel % samples));
        }
        out.extend(values);
    }
    let data = Array3::from_shape_vec((lines, samples, bands), out).expect("shape");
    let cube = HyperCube::new(data, cube.wavelengths().to_vec())
        .expect("normalization preserves finiteness");
    (cube, flagged)
}

/// Correct one measured spectrum against the corresponding grey-panel pixel
/// and the panel's reference spectrum:
/// `corrected = measured - (panel - reference) * median(measured) / median(panel)`.
pub fn reflectance_correct(
    measured: &Spectrum,
    panel: &Spectrum,
    reference: &Spectrum,
) -> Result<Spectrum> {
    if !measured.same_axis(panel) || !measured.same_axis(reference) {
        return Err(Error::AxisMismatch);
    }
    let scale_num = median(measured.values());
    let scale_den = median(panel.values());
    if !(scale_den > 0.0) {
        return Err(Error::ZeroMedianPanel);
    }
    let ratio = scale_num / scale_den;
    let values: Vec<f64> = measured
        .values()
        .iter()
        .zip(panel.values())
        .zip(reference.values())
        .map(|((p, g), h)| p - (g - h) * ratio)
        .collect();
    Spectrum::new(values, measured.wavelengths().to_vec())
}

/// Apply [`reflectance_correct`] to every pixel of a cube using the panel
/// pixel at the same position.
pub fn correct_cube(
    cube: &HyperCube,
    panel: &HyperCube,
    reference: &Spectrum,
) -> Result<HyperCube> {
    if cube.lines() != panel.lines()
        || cube.samples() != panel.samples()
        || cube.wavelengths() != panel.wavelengths()
    {
        return Err(Error::AxisMismatch);
    }
    if reference.wavelengths() != cube.wavelengths() {
        return Err(Error::AxisMismatch);
    }
    let (lines, samples, bands) = (cube.lines(), cube.samples(), cube.bands());
    let flat = cube.flat();
    let panel_flat = panel.flat();
    let reference_values = reference.values();
    let corrected: std::result::Result<Vec<Vec<f64>>, Error> = (0..lines * samples)
        .into_par_iter()
        .map(|pixel| {
            let range = pixel * bands..(pixel + 1) * bands;
            let p = &flat[range.clone()];
            let g = &panel_flat[range];
            let den = median(g);
            if !(den > 0.0) {
                return Err(Error::ZeroMedianPanel);
            }
            let ratio = median(p) / den;
            Ok(p.iter()
                .zip(g)
                .zip(reference_values)
                .map(|((p, g), h)| p - (g - h) * ratio)
                .collect())
        })
        .collect();
    let mut out = Vec::with_capacity(flat.len());
    for values in corrected? {
        out.extend(values);
    }
    let data = Array3::from_shape_vec((lines, samples, bands), out).expect("shape");
    HyperCube::new(data, cube.wavelengths().to_vec())
}

/// Piecewise-linear resampling onto a new wavelength axis. Targets outside
/// the source range take the nearest endpoint value; their indices are
/// returned as the clamped set.
pub fn resample_spectrum(
    source: &Spectrum,
    target_wavelengths: &[f64],
) -> Result<(Spectrum, Vec<usize>)> {
    if source.is_empty() {
        return Err(Error::EmptySource);
    }
    validate_axis(target_wavelengths)?;
    let w = source.wavelengths();
    let v = source.values();
    let mut clamped = Vec::new();
    let mut values = Vec::with_capacity(target_wavelengths.len());
    for (i, &t) in target_wavelengths.iter().enumerate() {
        if t < w[0] {
            clamped.push(i);
            values.push(v[0]);
            continue;
        }
        if t > w[w.len() - 1] {
            clamped.push(i);
            values.push(v[v.len() - 1]);
            continue;
        }
        // partition_point gives the first index with w[idx] > t, so the
        // enclosing segment is [idx-1, idx].
        let idx = w.partition_point(|&x| x <= t);
        if idx == 0 {
            values.push(v[0]);
            continue;
        }
        if t == w[idx - 1] {
            values.push(v[idx - 1]);
            continue;
        }
        let (w0, w1) = (w[idx - 1], w[idx]);
        let (v0, v1) = (v[idx - 1], v[idx]);
        values.push(v0 + (t - w0) * (v1 - v0) / (w1 - w0));
    }
    Ok((Spectrum::new(values, target_wavelengths.to_vec())?, clamped))
}

/// Arithmetic mean spectrum over all pixels labelled `class_id`.
pub fn mean_spectrum(cube: &HyperCube, mask: &AnnotationMask, class_id: u8) -> Result<Spectrum> {
    mean_spectrum_of_classes(cube, mask, &[class_id]).map_err(|e| match e {
        Error::EmptyClass(_) => Error::EmptyClass(class_id),
        other => other,
    })
}

/// Mean spectrum over pixels carrying any of the given labels.
pub fn mean_spectrum_of_classes(
    cube: &HyperCube,
    mask: &AnnotationMask,
    classes: &[u8],
) -> Result<Spectrum> {
    if mask.lines() != cube.lines() || mask.samples() != cube.samples() {
        return Err(Error::ShapeMismatch {
            lines: cube.lines(),
            samples: cube.samples(),
            got_lines: mask.lines(),
            got_samples: mask.samples(),
        });
    }
    let bands = cube.bands();
    let flat = cube.flat();
    let mut sum = vec![0.0f64; bands];
    let mut count = 0usize;
    for (pixel, label) in mask.labels().iter().enumerate() {
        if classes.contains(label) {
            let spectrum = &flat[pixel * bands..(pixel + 1) * bands];
            for (acc, v) in sum.iter_mut().zip(spectrum) {
                *acc += v;
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyClass(classes.first().copied().unwrap_or(0)));
    }
    for acc in &mut sum {
        *acc /= count as f64;
    }
    Spectrum::new(sum, cube.wavelengths().to_vec())
}

/// Per-pixel outcome grid flattened back into an `Array2` helper.
pub fn grid_from_flat<T: Clone>(flat: Vec<T>, lines: usize, samples: usize) -> Array2<T> {
    Array2::from_shape_vec((lines, samples), flat).expect("shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::parse_annotation_flat;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn cube_from(values: Vec<f64>, lines: usize, samples: usize, bands: usize) -> HyperCube {
        let wavelengths = (0..bands).map(|b| 400.0 + 10.0 * b as f64).collect();
        let data = Array3::from_shape_vec((lines, samples, bands), values).unwrap();
        HyperCube::new(data, wavelengths).unwrap()
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[2.0, 4.0, 6.0]), 4.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 10.0]), 2.5);
        assert_eq!(median(&[5.0]), 5.0);
    }

    #[test]
    fn band_mask_parse_and_display() {
        let mask = BandMask::parse("0-4,48-50,121-127").unwrap();
        assert_eq!(mask.len(), 15);
        assert_eq!(mask.to_string(), "0-4,48-50,121-127");
        assert!(mask.contains(49));
        assert!(!mask.contains(51));
    }

    #[test]
    fn default_mask_leaves_113_of_128() {
        let values: Vec<f64> = (0..128).map(|b| b as f64).collect();
        let cube = cube_from(values, 1, 1, 128);
        let trimmed = remove_bands(&cube, &BandMask::default_noisy()).unwrap();
        assert_eq!(trimmed.bands(), 113);
        // Band 5 is the first survivor, band 47 still present, 51 follows 47.
        assert_eq!(trimmed.pixel(0, 0)[0], 5.0);
        assert!(trimmed.pixel(0, 0).contains(&47.0));
        assert!(!trimmed.pixel(0, 0).contains(&49.0));
        assert!(!trimmed.pixel(0, 0).contains(&127.0));
    }

    #[test]
    fn empty_mask_is_identity() {
        let cube = cube_from(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 1, 2, 3);
        let out = remove_bands(&cube, &BandMask::empty()).unwrap();
        assert_eq!(out, cube);
    }

    #[test]
    fn removing_all_bands_fails() {
        let cube = cube_from(vec![1.0, 2.0], 1, 1, 2);
        assert!(matches!(
            remove_bands(&cube, &BandMask::from_indices([0, 1])),
            Err(Error::AllBandsRemoved)
        ));
    }

    #[test]
    fn out_of_range_index_fails() {
        let cube = cube_from(vec![1.0, 2.0], 1, 1, 2);
        assert!(matches!(
            remove_bands(&cube, &BandMask::from_indices([2])),
            Err(Error::IndexOutOfRange { index: 2, bands: 2 })
        ));
    }

    #[test]
    fn disjoint_removals_commute() {
        let values: Vec<f64> = (0..16).map(f64::from).collect();
        let cube = cube_from(values, 2, 1, 8);
        let a = BandMask::from_indices([0, 3]);
        let b = BandMask::from_indices([6]);
        // Indices shift after the first removal; express b's bands in the
        // reduced axis via wavelength identity instead.
        let ab = remove_bands(&remove_bands(&cube, &a).unwrap(), &BandMask::from_indices([4]))
            .unwrap();
        let ba = remove_bands(&remove_bands(&cube, &b).unwrap(), &BandMask::from_indices([0, 3]))
            .unwrap();
        assert_eq!(ab, ba);
        assert_eq!(ab.bands(), 5);
    }

    #[test]
    fn median_normalize_examples() {
        let cube = cube_from(vec![2.0, 4.0, 6.0, 3.0, 3.0, 3.0], 1, 2, 3);
        let (out, flagged) = median_normalize(&cube);
        assert!(flagged.is_empty());
        assert_eq!(out.pixel(0, 0), &[0.5, 1.0, 1.5]);
        assert_eq!(out.pixel(0, 1), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn median_normalize_flags_non_positive() {
        let cube = cube_from(vec![0.0, 0.0, 0.0, 1.0, 2.0, 3.0], 2, 1, 3);
        let (out, flagged) = median_normalize(&cube);
        assert_eq!(flagged, vec![(0, 0)]);
        assert_eq!(out.pixel(0, 0), &[0.0, 0.0, 0.0]);
        assert_eq!(out.pixel(1, 0), &[0.5, 1.0, 1.5]);
    }

    #[test]
    fn median_normalize_idempotent() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let values: Vec<f64> = (0..5 * 4 * 7).map(|_| rng.gen_range(0.05..2.0)).collect();
        let cube = cube_from(values, 5, 4, 7);
        let (once, _) = median_normalize(&cube);
        let (twice, _) = median_normalize(&once);
        for (a, b) in once.flat().iter().zip(twice.flat()) {
            assert!((a - b).abs() < 1e-12);
        }
        // And each pixel's median is 1 after one pass.
        for p in 0..once.n_pixels() {
            let m = median(&once.flat()[p * 7..(p + 1) * 7]);
            assert!((m - 1.0).abs() < 1e-12);
        }
    }

    fn spec(values: &[f64]) -> Spectrum {
        let wl: Vec<f64> = (0..values.len()).map(|i| 400.0 + i as f64).collect();
        Spectrum::new(values.to_vec(), wl).unwrap()
    }

    #[test]
    fn correction_vanishes_when_panel_matches_reference() {
        let p = spec(&[0.4, 0.9, 1.3]);
        let g = spec(&[0.5, 0.6, 0.7]);
        let out = reflectance_correct(&p, &g, &g).unwrap();
        assert_eq!(out.values(), p.values());
    }

    #[test]
    fn correction_substitutes_reference_when_pixel_is_panel() {
        let g = spec(&[0.5, 0.6, 0.7]);
        let h = spec(&[0.45, 0.55, 0.65]);
        let out = reflectance_correct(&g, &g, &h).unwrap();
        for (o, e) in out.values().iter().zip(h.values()) {
            assert!((o - e).abs() < 1e-15);
        }
    }

    #[test]
    fn correction_hand_computed_case() {
        let p = spec(&[2.0, 2.0]);
        let g = spec(&[1.0, 2.0]);
        let h = spec(&[1.0, 1.0]);
        // medians: 2 and 1.5, ratio 4/3; artifact (0, 1) scaled by 4/3.
        let out = reflectance_correct(&p, &g, &h).unwrap();
        assert!((out.values()[0] - 2.0).abs() < 1e-15);
        assert!((out.values()[1] - (2.0 - 4.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn correction_identity_on_random_spectra() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let n = rng.gen_range(2..24);
            let p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..2.0)).collect();
            let g: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..2.0)).collect();
            let out = reflectance_correct(&spec(&p), &spec(&g), &spec(&g)).unwrap();
            assert_eq!(out.values(), &p[..]);
        }
    }

    #[test]
    fn zero_median_panel_rejected() {
        let p = spec(&[1.0, 1.0]);
        let g = spec(&[0.0, 0.0]);
        assert!(matches!(
            reflectance_correct(&p, &g, &g),
            Err(Error::ZeroMedianPanel)
        ));
    }

    #[test]
    fn resample_reproduces_affine_functions() {
        let wl: Vec<f64> = (0..20).map(|i| 420.0 + 7.0 * i as f64).collect();
        let values: Vec<f64> = wl.iter().map(|w| 0.001 * w).collect();
        let source = Spectrum::new(values, wl).unwrap();
        let targets: Vec<f64> = (0..50).map(|i| 421.0 + 2.5 * i as f64).collect();
        let (out, clamped) = resample_spectrum(&source, &targets).unwrap();
        assert!(clamped.is_empty());
        for (t, v) in targets.iter().zip(out.values()) {
            assert!((v - 0.001 * t).abs() < 1e-12, "target {t}: {v}");
        }
    }

    #[test]
    fn resample_exact_at_source_nodes() {
        let source = spec(&[0.3, 0.7, 0.1]);
        let (out, clamped) = resample_spectrum(&source, source.wavelengths()).unwrap();
        assert!(clamped.is_empty());
        assert_eq!(out.values(), source.values());
    }

    #[test]
    fn resample_clamps_and_flags_outside_range() {
        let source = spec(&[0.3, 0.7, 0.1]);
        let (out, clamped) = resample_spectrum(&source, &[399.0, 401.5, 403.0]).unwrap();
        assert_eq!(clamped, vec![0, 2]);
        assert_eq!(out.values()[0], 0.3);
        assert!((out.values()[1] - 0.4).abs() < 1e-12);
        assert_eq!(out.values()[2], 0.1);
    }

    #[test]
    fn mean_spectrum_examples() {
        let cube = cube_from(vec![1.0, 1.0, 3.0, 3.0, 9.0, 9.0], 1, 3, 2);
        let mask = parse_annotation_flat(&[1, 1, 0], (1, 3), 8).unwrap();
        let mean = mean_spectrum(&cube, &mask, 1).unwrap();
        assert_eq!(mean.values(), &[2.0, 2.0]);
        let single = parse_annotation_flat(&[0, 0, 1], (1, 3), 8).unwrap();
        assert_eq!(mean_spectrum(&cube, &single, 1).unwrap().values(), &[9.0, 9.0]);
        assert!(matches!(
            mean_spectrum(&cube, &mask, 5),
            Err(Error::EmptyClass(5))
        ));
    }
}
