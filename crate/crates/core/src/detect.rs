//! Gaussian likelihood-ratio detectors and the two-stage refinement.
//!
//! The quadratic detector compares squared Mahalanobis distances to a
//! background and a target distribution. The matched filter projects each
//! pixel onto the covariance-whitened line from the data mean to the target
//! signature, normalized so the mean scores 0 and the target signature
//! scores 1. The two-stage variant re-estimates the target signature from the
//! highest scoring pixels of a first pass and reapplies the filter with the
//! same data statistics.

use ndarray::Array2;
use rayon::prelude::*;

use crate::annotation::{AnnotationMask, UNCERTAIN_CLASS};
use crate::cube::HyperCube;
use crate::error::{Error, Result};
use crate::preprocess::{mean_spectrum_of_classes, resample_spectrum};
use crate::spectrum::Spectrum;
use crate::stats::{dot, GaussianStats};

/// Matched filter denominators at or below this are treated as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-12;

/// Default number of top-scoring pixels averaged by the second stage.
pub const DEFAULT_N_PIXELS: usize = 1000;

/// Per-pixel detection statistics on the (line, sample) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    scores: Array2<f64>,
}

impl ScoreMap {
    pub fn new(scores: Array2<f64>) -> Self {
        Self { scores }
    }

    pub fn scores(&self) -> &Array2<f64> {
        &self.scores
    }

    pub fn lines(&self) -> usize {
        self.scores.dim().0
    }

    pub fn samples(&self) -> usize {
        self.scores.dim().1
    }

    /// Row-major flat view; pixel `i` is line `i / samples`, sample
    /// `i % samples`.
    pub fn flat(&self) -> &[f64] {
        self.scores.as_slice().expect("standard layout")
    }
}

/// A matched filter with its whitened direction precomputed, so scoring a
/// pixel is a single pass over the bands.
#[derive(Debug, Clone)]
pub struct MatchedFilter {
    mean: Vec<f64>,
    weights: Vec<f64>,
    denominator: f64,
}

impl MatchedFilter {
    /// Build from a data mean, a target signature and covariance statistics.
    /// Fails with [`Error::DegenerateTarget`] when the target is too close to
    /// the mean for the projection to be defined.
    pub fn new(mean: &[f64], target: &[f64], stats: &GaussianStats) -> Result<Self> {
        if mean.len() != target.len() || mean.len() != stats.dim() {
            return Err(Error::DimensionMismatch(mean.len(), target.len()));
        }
        let direction: Vec<f64> = target.iter().zip(mean).map(|(t, m)| t - m).collect();
        let weights = stats.solve(&direction);
        let denominator = dot(&direction, &weights);
        if !(denominator > DEGENERACY_TOLERANCE) {
            return Err(Error::DegenerateTarget);
        }
        Ok(Self {
            mean: mean.to_vec(),
            weights,
            denominator,
        })
    }

    /// Score one pixel. Affine in the pixel; the data mean maps to exactly 0
    /// and the target signature to exactly 1.
    pub fn score(&self, pixel: &[f64]) -> f64 {
        debug_assert_eq!(pixel.len(), self.mean.len());
        let mut acc = 0.0;
        for ((x, m), w) in pixel.iter().zip(&self.mean).zip(&self.weights) {
            acc += (x - m) * w;
        }
        acc / self.denominator
    }
}

/// Matched filter statistic for a single pixel.
pub fn mf_score(
    x: &Spectrum,
    mean: &Spectrum,
    target: &Spectrum,
    stats: &GaussianStats,
) -> Result<f64> {
    if x.len() != mean.len() {
        return Err(Error::DimensionMismatch(x.len(), mean.len()));
    }
    let filter = MatchedFilter::new(mean.values(), target.values(), stats)?;
    Ok(filter.score(x.values()))
}

/// Quadratic detector statistic: squared Mahalanobis distance to the
/// background minus squared Mahalanobis distance to the target. Larger means
/// more target-like.
pub fn qd_score(x: &Spectrum, background: &GaussianStats, target: &GaussianStats) -> Result<f64> {
    if background.dim() != target.dim() || x.len() != background.dim() {
        return Err(Error::DimensionMismatch(x.len(), background.dim()));
    }
    Ok(background.mahalanobis_sq(x.values())? - target.mahalanobis_sq(x.values())?)
}

fn score_cube_with(cube: &HyperCube, filter: &MatchedFilter) -> ScoreMap {
    let (lines, samples, bands) = (cube.lines(), cube.samples(), cube.bands());
    let flat = cube.flat();
    let scores: Vec<f64> = (0..lines * samples)
        .into_par_iter()
        .map(|pixel| filter.score(&flat[pixel * bands..(pixel + 1) * bands]))
        .collect();
    ScoreMap::new(Array2::from_shape_vec((lines, samples), scores).expect("shape"))
}

/// Matched-filter the whole cube against `target`, reusing precomputed stats.
pub fn mf_image_with_stats(
    cube: &HyperCube,
    target: &Spectrum,
    stats: &GaussianStats,
) -> Result<ScoreMap> {
    if target.wavelengths() != cube.wavelengths() {
        return Err(Error::AxisMismatch);
    }
    let filter = MatchedFilter::new(stats.mean(), target.values(), stats)?;
    Ok(score_cube_with(cube, &filter))
}

/// Matched-filter the whole cube against `target`, estimating the mean and
/// covariance from all cube pixels.
pub fn mf_image(cube: &HyperCube, target: &Spectrum) -> Result<ScoreMap> {
    let stats = GaussianStats::estimate_flat(cube.flat(), cube.bands())?;
    mf_image_with_stats(cube, target, &stats)
}

/// Quadratic-detect the whole cube given background and target models.
pub fn qd_image(
    cube: &HyperCube,
    background: &GaussianStats,
    target: &GaussianStats,
) -> Result<ScoreMap> {
    if background.dim() != cube.bands() || target.dim() != cube.bands() {
        return Err(Error::DimensionMismatch(background.dim(), cube.bands()));
    }
    let (lines, samples, bands) = (cube.lines(), cube.samples(), cube.bands());
    let flat = cube.flat();
    let scores: std::result::Result<Vec<f64>, Error> = (0..lines * samples)
        .into_par_iter()
        .map(|pixel| {
            let x = &flat[pixel * bands..(pixel + 1) * bands];
            Ok(background.mahalanobis_sq(x)? - target.mahalanobis_sq(x)?)
        })
        .collect();
    Ok(ScoreMap::new(
        Array2::from_shape_vec((lines, samples), scores?).expect("shape"),
    ))
}

/// Output of the two-stage detector. `scores` holds the final (second stage)
/// statistics; the first pass and the refined signature are kept for
/// diagnostics and reporting.
#[derive(Debug, Clone)]
pub struct TwoStageOutput {
    pub scores: ScoreMap,
    pub stage1_scores: ScoreMap,
    pub refined_template: Spectrum,
    pub stats: GaussianStats,
}

/// Indices of the `n` highest scores, ties broken by ascending pixel index
/// ((line, sample) order).
pub fn top_n_indices(scores: &ScoreMap, n: usize) -> Vec<usize> {
    let flat = scores.flat();
    let mut order: Vec<usize> = (0..flat.len()).collect();
    order.sort_unstable_by(|&a, &b| flat[b].total_cmp(&flat[a]).then(a.cmp(&b)));
    order.truncate(n);
    order
}

/// Two-stage matched filter: score against the supplied signature, average
/// the `n_pixels` best pixels into a refined signature, and rescore with the
/// same mean and covariance.
pub fn two_stage(cube: &HyperCube, target: &Spectrum, n_pixels: usize) -> Result<TwoStageOutput> {
    let stats = GaussianStats::estimate_flat(cube.flat(), cube.bands())?;
    two_stage_with_stats(cube, target, n_pixels, stats)
}

pub fn two_stage_with_stats(
    cube: &HyperCube,
    target: &Spectrum,
    n_pixels: usize,
    stats: GaussianStats,
) -> Result<TwoStageOutput> {
    let n_total = cube.n_pixels();
    if n_pixels == 0 || n_pixels > n_total {
        return Err(Error::InvalidArgument(format!(
            "n_pixels {n_pixels} outside 1..={n_total}"
        )));
    }
    let stage1 = mf_image_with_stats(cube, target, &stats)?;

    let mut top = top_n_indices(&stage1, n_pixels);
    // Average in pixel order so the refined signature matches a plain class
    // mean bit-for-bit when the selected set is the class.
    top.sort_unstable();
    let bands = cube.bands();
    let flat = cube.flat();
    let mut refined = vec![0.0f64; bands];
    for &pixel in &top {
        for (acc, v) in refined.iter_mut().zip(&flat[pixel * bands..(pixel + 1) * bands]) {
            *acc += v;
        }
    }
    for acc in &mut refined {
        *acc /= n_pixels as f64;
    }
    let refined = Spectrum::new(refined, cube.wavelengths().to_vec())?;

    let stage2 = mf_image_with_stats(cube, &refined, &stats)?;
    Ok(TwoStageOutput {
        scores: stage2,
        stage1_scores: stage1,
        refined_template: refined,
        stats,
    })
}

/// Which detector to run and where its target signature comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Quadratic detector with target and background models from the test
    /// image's own annotation.
    IdealQd,
    /// Matched filter with the target signature averaged from the test
    /// image's own annotation.
    IdealMf,
    /// Matched filter with the signature averaged from another image.
    InductiveMf,
    /// Matched filter with a library spectrum resampled to the test axis.
    LibraryMf,
    /// Two-stage matched filter seeded with an inductive or library
    /// signature.
    TwoStage,
}

impl ScenarioKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ideal-qd" => Some(Self::IdealQd),
            "ideal-mf" => Some(Self::IdealMf),
            "inductive-mf" => Some(Self::InductiveMf),
            "library-mf" => Some(Self::LibraryMf),
            "two-stage" => Some(Self::TwoStage),
            _ => None,
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::IdealQd => "ideal-qd",
            Self::IdealMf => "ideal-mf",
            Self::InductiveMf => "inductive-mf",
            Self::LibraryMf => "library-mf",
            Self::TwoStage => "two-stage",
        })
    }
}

/// Where the target signature is taken from.
#[derive(Debug, Clone, Copy)]
pub enum TemplateSource<'a> {
    /// The test image's own annotation.
    SelfClass,
    /// Another annotated image.
    OtherImage {
        cube: &'a HyperCube,
        annotation: &'a AnnotationMask,
    },
    /// An external library spectrum (resampled to the test axis).
    Library(&'a Spectrum),
}

#[derive(Debug, Clone, Copy)]
pub struct Scenario<'a> {
    pub kind: ScenarioKind,
    pub source: TemplateSource<'a>,
    pub target_class: u8,
    /// Fold the uncertain class into target estimation.
    pub include_uncertain: bool,
    pub n_pixels: usize,
}

impl<'a> Scenario<'a> {
    pub fn new(kind: ScenarioKind, source: TemplateSource<'a>) -> Self {
        Self {
            kind,
            source,
            target_class: crate::annotation::BLOOD_CLASS,
            include_uncertain: false,
            n_pixels: DEFAULT_N_PIXELS,
        }
    }
}

pub struct ImageUnderTest<'a> {
    pub cube: &'a HyperCube,
    pub annotation: Option<&'a AnnotationMask>,
}

fn template_classes(scenario: &Scenario) -> Vec<u8> {
    if scenario.include_uncertain {
        vec![scenario.target_class, UNCERTAIN_CLASS]
    } else {
        vec![scenario.target_class]
    }
}

fn resolve_template(scenario: &Scenario, test: &ImageUnderTest) -> Result<Spectrum> {
    let classes = template_classes(scenario);
    let raw = match scenario.source {
        TemplateSource::SelfClass => {
            let annotation = test.annotation.ok_or_else(|| {
                Error::UnresolvableTarget("self-sourced template needs an annotation".into())
            })?;
            mean_spectrum_of_classes(test.cube, annotation, &classes)
        }
        TemplateSource::OtherImage { cube, annotation } => {
            mean_spectrum_of_classes(cube, annotation, &classes)
        }
        TemplateSource::Library(spectrum) => Ok((*spectrum).clone()),
    }
    .map_err(|e| match e {
        Error::EmptyClass(c) => {
            Error::UnresolvableTarget(format!("class {c} absent from template source"))
        }
        other => other,
    })?;

    if raw.wavelengths() == test.cube.wavelengths() {
        return Ok(raw);
    }
    let (resampled, _clamped) = resample_spectrum(&raw, test.cube.wavelengths())?;
    Ok(resampled)
}

/// Run one detection scenario on the image under test and return the final
/// score map.
pub fn run_scenario(scenario: &Scenario, test: &ImageUnderTest) -> Result<ScoreMap> {
    match scenario.kind {
        ScenarioKind::IdealQd => {
            let annotation = test.annotation.ok_or_else(|| {
                Error::UnresolvableTarget("quadratic detector needs an annotation".into())
            })?;
            let target_classes = template_classes(scenario);
            let flat = test.cube.flat();
            let bands = test.cube.bands();
            let target_idx = annotation.indices_of(&target_classes);
            if target_idx.is_empty() {
                return Err(Error::UnresolvableTarget(format!(
                    "class {} absent from test image",
                    scenario.target_class
                )));
            }
            let mut excluded = target_classes;
            if !excluded.contains(&UNCERTAIN_CLASS) {
                excluded.push(UNCERTAIN_CLASS);
            }
            let background_idx: Vec<usize> = annotation
                .labels()
                .iter()
                .enumerate()
                .filter(|(_, l)| !excluded.contains(l))
                .map(|(i, _)| i)
                .collect();
            let target = GaussianStats::estimate_selected(flat, bands, &target_idx)?;
            let background = GaussianStats::estimate_selected(flat, bands, &background_idx)?;
            qd_image(test.cube, &background, &target)
        }
        ScenarioKind::IdealMf | ScenarioKind::InductiveMf | ScenarioKind::LibraryMf => {
            let template = resolve_template(scenario, test)?;
            mf_image(test.cube, &template)
        }
        ScenarioKind::TwoStage => {
            let template = resolve_template(scenario, test)?;
            Ok(two_stage(test.cube, &template, scenario.n_pixels)?.scores)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::parse_annotation_flat;
    use nalgebra::DMatrix;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn spectrum(values: &[f64]) -> Spectrum {
        let wl: Vec<f64> = (0..values.len()).map(|i| 400.0 + i as f64).collect();
        Spectrum::new(values.to_vec(), wl).unwrap()
    }

    fn identity_stats(mean: &[f64]) -> GaussianStats {
        GaussianStats::from_mean_covariance(mean.to_vec(), DMatrix::identity(mean.len(), mean.len()))
            .unwrap()
    }

    #[test]
    fn qd_midpoint_and_extremes() {
        let bg = identity_stats(&[0.0, 0.0]);
        let tg = identity_stats(&[2.0, 0.0]);
        assert_eq!(qd_score(&spectrum(&[1.0, 0.0]), &bg, &tg).unwrap(), 0.0);
        assert_eq!(qd_score(&spectrum(&[2.0, 0.0]), &bg, &tg).unwrap(), 4.0);
        assert_eq!(qd_score(&spectrum(&[0.0, 0.0]), &bg, &tg).unwrap(), -4.0);
    }

    #[test]
    fn mf_anchor_points_and_identity_case() {
        let stats = identity_stats(&[0.0, 0.0]);
        let mean = spectrum(&[0.0, 0.0]);
        let target = spectrum(&[1.0, 1.0]);
        assert_eq!(mf_score(&mean, &mean, &target, &stats).unwrap(), 0.0);
        assert_eq!(mf_score(&target, &mean, &target, &stats).unwrap(), 1.0);
        let x = spectrum(&[2.0, 2.0]);
        assert_eq!(mf_score(&x, &mean, &target, &stats).unwrap(), 2.0);
    }

    #[test]
    fn mf_degenerate_when_target_equals_mean() {
        let stats = identity_stats(&[0.5, 0.5]);
        let mean = spectrum(&[0.5, 0.5]);
        assert!(matches!(
            mf_score(&mean, &mean, &mean, &stats),
            Err(Error::DegenerateTarget)
        ));
    }

    fn random_spd(rng: &mut ChaCha12Rng, d: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(d, d) * (0.1 * d as f64)
    }

    #[test]
    fn mf_anchors_on_random_spd_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..200 {
            let d = rng.gen_range(2..12);
            let stats = GaussianStats::from_mean_covariance(
                (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                random_spd(&mut rng, d),
            )
            .unwrap();
            let mean: Vec<f64> = stats.mean().to_vec();
            let target: Vec<f64> = mean.iter().map(|m| m + rng.gen_range(0.1..1.0)).collect();
            let filter = MatchedFilter::new(&mean, &target, &stats).unwrap();
            assert_eq!(filter.score(&mean), 0.0);
            assert_eq!(filter.score(&target), 1.0);
        }
    }

    #[test]
    fn mf_affine_in_the_pixel() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..100 {
            let d = rng.gen_range(2..10);
            let mean: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let target: Vec<f64> = mean.iter().map(|m| m + rng.gen_range(0.2..1.0)).collect();
            let stats =
                GaussianStats::from_mean_covariance(mean.clone(), random_spd(&mut rng, d))
                    .unwrap();
            let filter = MatchedFilter::new(&mean, &target, &stats).unwrap();
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let alpha: f64 = rng.gen_range(-1.5..1.5);
            let blended: Vec<f64> = x
                .iter()
                .zip(&mean)
                .map(|(xv, m)| alpha * xv + (1.0 - alpha) * m)
                .collect();
            let lhs = filter.score(&blended);
            let rhs = alpha * filter.score(&x);
            assert!((lhs - rhs).abs() < 1e-10, "affinity violated: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn qd_zero_on_equidistant_pixels_with_shared_covariance() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..100 {
            let d = rng.gen_range(2..10);
            let cov = random_spd(&mut rng, d);
            let mu0: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mu1: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let bg = GaussianStats::from_mean_covariance(mu0.clone(), cov.clone()).unwrap();
            let tg = GaussianStats::from_mean_covariance(mu1.clone(), cov.clone()).unwrap();
            // The hyperplane of Mahalanobis-equidistant points contains the
            // midpoint of the two means.
            let mid: Vec<f64> = mu0.iter().zip(&mu1).map(|(a, b)| 0.5 * (a + b)).collect();
            let q = qd_score(&spectrum(&mid), &bg, &tg).unwrap();
            assert!(q.abs() < 1e-10, "midpoint score {q}");
        }
    }

    fn synthetic_two_class_cube(rng: &mut ChaCha12Rng, lines: usize, samples: usize, bands: usize) -> (HyperCube, Vec<f64>) {
        let target: Vec<f64> = (0..bands).map(|_| rng.gen_range(0.8..1.2)).collect();
        let mut values = Vec::with_capacity(lines * samples * bands);
        for pixel in 0..lines * samples {
            let is_target = pixel % 17 == 0;
            for b in 0..bands {
                let base = if is_target { target[b] } else { 0.4 };
                values.push(base + rng.gen_range(-0.05..0.05));
            }
        }
        let wl: Vec<f64> = (0..bands).map(|b| 400.0 + b as f64).collect();
        let cube = HyperCube::new(
            Array3::from_shape_vec((lines, samples, bands), values).unwrap(),
            wl,
        )
        .unwrap();
        (cube, target)
    }

    #[test]
    fn mf_image_matches_explicit_inverse_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let (cube, target) = synthetic_two_class_cube(&mut rng, 12, 11, 6);
        let template = Spectrum::new(target, cube.wavelengths().to_vec()).unwrap();
        let stats = GaussianStats::estimate_flat(cube.flat(), cube.bands()).unwrap();
        let map = mf_image_with_stats(&cube, &template, &stats).unwrap();

        // Brute-force oracle: dense inverse applied per pixel.
        let inv = stats.covariance().clone().try_inverse().unwrap();
        let mean = nalgebra::DVector::from_column_slice(stats.mean());
        let t = nalgebra::DVector::from_column_slice(template.values());
        let direction = &t - &mean;
        let denom = (direction.transpose() * &inv * &direction)[(0, 0)];
        for (pixel, &score) in map.flat().iter().enumerate() {
            let x = nalgebra::DVector::from_column_slice(cube.pixel(
                pixel / cube.samples(),
                pixel % cube.samples(),
            ));
            let naive = ((&x - &mean).transpose() * &inv * &direction)[(0, 0)] / denom;
            let scale = naive.abs().max(1.0);
            assert!(
                (score - naive).abs() / scale < 1e-8,
                "pixel {pixel}: {score} vs {naive}"
            );
        }
    }

    #[test]
    fn mf_image_scores_implanted_template_exactly_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let (cube, _) = synthetic_two_class_cube(&mut rng, 8, 8, 4);
        // Re-implant two pixels with an exact copy of the template.
        let template: Vec<f64> = vec![1.5, 1.4, 1.3, 1.2];
        let mut data = cube.data().clone();
        for &(l, s) in &[(1usize, 2usize), (5, 6)] {
            for b in 0..4 {
                data[(l, s, b)] = template[b];
            }
        }
        let cube = HyperCube::new(data, cube.wavelengths().to_vec()).unwrap();
        let template = Spectrum::new(template, cube.wavelengths().to_vec()).unwrap();
        let map = mf_image(&cube, &template).unwrap();
        assert_eq!(map.scores()[(1, 2)], 1.0);
        assert_eq!(map.scores()[(5, 6)], 1.0);
    }

    #[test]
    fn mf_image_degenerate_for_global_mean_template() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let (cube, _) = synthetic_two_class_cube(&mut rng, 6, 6, 4);
        let stats = GaussianStats::estimate_flat(cube.flat(), cube.bands()).unwrap();
        let template = stats.mean_spectrum(cube.wavelengths()).unwrap();
        assert!(matches!(
            mf_image_with_stats(&cube, &template, &stats),
            Err(Error::DegenerateTarget)
        ));
    }

    #[test]
    fn scaling_cube_and_template_preserves_ranking() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let (cube, target) = synthetic_two_class_cube(&mut rng, 9, 7, 5);
        let template = Spectrum::new(target.clone(), cube.wavelengths().to_vec()).unwrap();
        let base = mf_image(&cube, &template).unwrap();

        let c = 3.7;
        let scaled_data = cube.data().mapv(|v| c * v);
        let scaled_cube = HyperCube::new(scaled_data, cube.wavelengths().to_vec()).unwrap();
        let scaled_template = Spectrum::new(
            target.iter().map(|v| c * v).collect(),
            cube.wavelengths().to_vec(),
        )
        .unwrap();
        let scaled = mf_image(&scaled_cube, &scaled_template).unwrap();

        let rank = |map: &ScoreMap| {
            let mut order: Vec<usize> = (0..map.flat().len()).collect();
            order.sort_unstable_by(|&a, &b| map.flat()[b].total_cmp(&map.flat()[a]).then(a.cmp(&b)));
            order
        };
        assert_eq!(rank(&base), rank(&scaled));
    }

    #[test]
    fn two_stage_reduces_to_ideal_when_top_n_is_the_class() {
        // Plant a well-separated target class; the top-N pixels of stage one
        // are exactly the class, so the refined signature is the class mean.
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let (lines, samples, bands) = (10, 10, 4);
        let mut values = Vec::new();
        let mut labels = vec![0u8; lines * samples];
        for pixel in 0..lines * samples {
            let is_target = pixel < 10;
            if is_target {
                labels[pixel] = 1;
            }
            for _ in 0..bands {
                let base: f64 = if is_target { 2.0 } else { 0.5 };
                values.push(base + rng.gen_range(-0.01..0.01));
            }
        }
        let wl: Vec<f64> = (0..bands).map(|b| 500.0 + b as f64).collect();
        let cube = HyperCube::new(
            Array3::from_shape_vec((lines, samples, bands), values).unwrap(),
            wl.clone(),
        )
        .unwrap();
        let mask = parse_annotation_flat(&labels, (lines, samples), 8).unwrap();

        // A scaled-down template is off in magnitude but along the class
        // separation direction, so stage one still ranks the class on top.
        let template = Spectrum::new(vec![1.8, 1.8, 1.8, 1.8], wl).unwrap();
        let out = two_stage(&cube, &template, 10).unwrap();
        let mut top = top_n_indices(&out.stage1_scores, 10);
        top.sort_unstable();
        assert_eq!(top, (0..10).collect::<Vec<_>>());

        let class_mean = mean_spectrum_of_classes(&cube, &mask, &[1]).unwrap();
        for (a, b) in out.refined_template.values().iter().zip(class_mean.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        let ideal = mf_image(&cube, &class_mean).unwrap();
        for (a, b) in out.scores.flat().iter().zip(ideal.flat()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn two_stage_all_pixels_is_degenerate() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let (cube, target) = synthetic_two_class_cube(&mut rng, 6, 5, 4);
        let template = Spectrum::new(target, cube.wavelengths().to_vec()).unwrap();
        let err = two_stage(&cube, &template, cube.n_pixels()).unwrap_err();
        assert!(matches!(err, Error::DegenerateTarget));
    }

    #[test]
    fn two_stage_is_deterministic_across_thread_counts() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let (cube, target) = synthetic_two_class_cube(&mut rng, 16, 16, 5);
        let template = Spectrum::new(target, cube.wavelengths().to_vec()).unwrap();
        let baseline = two_stage(&cube, &template, 40).unwrap();
        for threads in [1usize, 3] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            let run = pool.install(|| two_stage(&cube, &template, 40).unwrap());
            assert_eq!(run.scores.flat(), baseline.scores.flat(), "{threads} threads");
            assert_eq!(
                run.refined_template.values(),
                baseline.refined_template.values()
            );
        }
    }

    #[test]
    fn top_n_ties_break_by_pixel_order() {
        let scores = ScoreMap::new(
            Array2::from_shape_vec((2, 2), vec![0.5, 0.9, 0.5, 0.1]).unwrap(),
        );
        assert_eq!(top_n_indices(&scores, 3), vec![1, 0, 2]);
    }

    #[test]
    fn scenario_runner_resolves_templates() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let (lines, samples, bands) = (8, 8, 4);
        let mut values = Vec::new();
        let mut labels = vec![0u8; lines * samples];
        for pixel in 0..lines * samples {
            let is_target = pixel % 9 == 0;
            if is_target {
                labels[pixel] = 1;
            }
            for _ in 0..bands {
                let base: f64 = if is_target { 1.6 } else { 0.6 };
                values.push(base + rng.gen_range(-0.05..0.05));
            }
        }
        let wl: Vec<f64> = (0..bands).map(|b| 500.0 + 10.0 * b as f64).collect();
        let cube = HyperCube::new(
            Array3::from_shape_vec((lines, samples, bands), values).unwrap(),
            wl.clone(),
        )
        .unwrap();
        let mask = parse_annotation_flat(&labels, (lines, samples), 8).unwrap();
        let test = ImageUnderTest {
            cube: &cube,
            annotation: Some(&mask),
        };

        let ideal = run_scenario(
            &Scenario::new(ScenarioKind::IdealMf, TemplateSource::SelfClass),
            &test,
        )
        .unwrap();
        assert_eq!(ideal.lines(), lines);

        // Library source on a finer axis gets resampled onto the cube axis.
        let lib_axis: Vec<f64> = (0..16).map(|i| 495.0 + 3.0 * i as f64).collect();
        let lib_values: Vec<f64> = lib_axis.iter().map(|_| 1.6).collect();
        let lib = Spectrum::new(lib_values, lib_axis).unwrap();
        let library = run_scenario(
            &Scenario::new(ScenarioKind::LibraryMf, TemplateSource::Library(&lib)),
            &test,
        )
        .unwrap();
        assert_eq!(library.samples(), samples);

        let qd = run_scenario(
            &Scenario::new(ScenarioKind::IdealQd, TemplateSource::SelfClass),
            &test,
        )
        .unwrap();
        // Target pixels should sit above background pixels on average.
        let target_mean: f64 = mask
            .indices_of(&[1])
            .iter()
            .map(|&i| qd.flat()[i])
            .sum::<f64>()
            / mask.class_count(1) as f64;
        let bg_mean: f64 = mask
            .indices_of(&[0])
            .iter()
            .map(|&i| qd.flat()[i])
            .sum::<f64>()
            / mask.class_count(0) as f64;
        assert!(target_mean > bg_mean);

        let missing = run_scenario(
            &Scenario::new(ScenarioKind::IdealMf, TemplateSource::SelfClass),
            &ImageUnderTest {
                cube: &cube,
                annotation: None,
            },
        );
        assert!(matches!(missing, Err(Error::UnresolvableTarget(_))));
    }
}
