//! Seeded synthetic scenes: Gaussian-mixture backgrounds with implanted
//! target pixels, plus the sweep drivers for target-size and top-N
//! sensitivity experiments.
//!
//! Scenes are bit-reproducible: all randomness flows from the spec's single
//! 64-bit seed through one ChaCha stream with a fixed draw order.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::annotation::AnnotationMask;
use crate::cube::HyperCube;
use crate::detect::{two_stage_with_stats, TwoStageOutput};
use crate::error::{Error, Result};
use crate::evaluate::{pr_curve, TruthMask, UncertainPolicy};
use crate::kv;
use crate::spectrum::Spectrum;
use crate::stats::GaussianStats;

/// One Gaussian background population: mixture weight, mean spectrum, and an
/// isotropic standard deviation.
#[derive(Debug, Clone)]
pub struct BackgroundComponent {
    pub weight: f64,
    pub mean: Spectrum,
    pub scale: f64,
}

/// Everything needed to generate a scene deterministically.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub lines: usize,
    pub samples: usize,
    pub bands: usize,
    pub background: Vec<BackgroundComponent>,
    pub target_mean: Spectrum,
    pub target_scale: f64,
    /// Number of implanted target pixels (T).
    pub target_pixels: usize,
    /// Implanted pixel = alpha * target draw + (1 - alpha) * local background.
    pub mixing_alpha: f64,
    /// Relative magnitude of the smooth multiplicative distortion applied to
    /// the template handed to the detector.
    pub template_perturbation: f64,
    pub seed: u64,
}

/// Evenly spaced synthetic wavelength axis over the visible/NIR range.
pub fn default_wavelengths(bands: usize) -> Vec<f64> {
    if bands == 1 {
        return vec![450.0];
    }
    (0..bands)
        .map(|b| 450.0 + 450.0 * b as f64 / (bands - 1) as f64)
        .collect()
}

fn band_fraction(b: usize, bands: usize) -> f64 {
    if bands == 1 {
        0.0
    } else {
        b as f64 / (bands - 1) as f64
    }
}

/// Built-in background shapes: gentle opposing slopes per component.
pub fn default_background_mean(component: usize, bands: usize) -> Vec<f64> {
    (0..bands)
        .map(|b| {
            let t = band_fraction(b, bands);
            match component % 2 {
                0 => 0.90 + 0.15 * t,
                _ => 1.15 - 0.25 * t,
            }
        })
        .collect()
}

/// Built-in target shape: lower plateau with a mid-spectrum absorption dip.
pub fn default_target_mean(bands: usize) -> Vec<f64> {
    (0..bands)
        .map(|b| {
            let t = band_fraction(b, bands);
            let dip = (-((t - 0.45) / 0.12).powi(2)).exp();
            0.55 + 0.10 * t - 0.25 * dip
        })
        .collect()
}

impl SceneSpec {
    /// A well-separated two-component scene with the built-in spectra.
    pub fn separable(
        lines: usize,
        samples: usize,
        bands: usize,
        target_pixels: usize,
        seed: u64,
    ) -> Self {
        let wavelengths = default_wavelengths(bands);
        let background = vec![
            BackgroundComponent {
                weight: 0.6,
                mean: Spectrum::new(default_background_mean(0, bands), wavelengths.clone())
                    .expect("default shapes are valid"),
                scale: 0.04,
            },
            BackgroundComponent {
                weight: 0.4,
                mean: Spectrum::new(default_background_mean(1, bands), wavelengths.clone())
                    .expect("default shapes are valid"),
                scale: 0.05,
            },
        ];
        Self {
            lines,
            samples,
            bands,
            background,
            target_mean: Spectrum::new(default_target_mean(bands), wavelengths)
                .expect("default shapes are valid"),
            target_scale: 0.04,
            target_pixels,
            mixing_alpha: 1.0,
            template_perturbation: 0.0,
            seed,
        }
    }

    /// A harder scene: the two default backgrounds plus a distractor
    /// population whose mean lies `blend` of the way toward the target,
    /// standing in for look-alike substances.
    pub fn with_distractor(
        lines: usize,
        samples: usize,
        bands: usize,
        target_pixels: usize,
        seed: u64,
        distractor_weight: f64,
        blend: f64,
    ) -> Self {
        let mut spec = Self::separable(lines, samples, bands, target_pixels, seed);
        let wavelengths = default_wavelengths(bands);
        let distractor_mean: Vec<f64> = default_background_mean(0, bands)
            .iter()
            .zip(default_target_mean(bands).iter())
            .map(|(b, t)| b * (1.0 - blend) + t * blend)
            .collect();
        spec.background[0].weight -= distractor_weight;
        spec.background[0].scale = 0.04;
        spec.background[1].scale = 0.04;
        spec.background.push(BackgroundComponent {
            weight: distractor_weight,
            mean: Spectrum::new(distractor_mean, wavelengths).expect("default shapes are valid"),
            scale: 0.04,
        });
        spec
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_target_pixels(mut self, t: usize) -> Self {
        self.target_pixels = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidSpec(msg));
        if self.lines == 0 || self.samples == 0 || self.bands == 0 {
            return fail("zero-sized scene".into());
        }
        if self.target_pixels >= self.lines * self.samples {
            return fail(format!(
                "target_pixels {} must be below pixel count {}",
                self.target_pixels,
                self.lines * self.samples
            ));
        }
        if self.background.is_empty() {
            return fail("no background components".into());
        }
        let weight_sum: f64 = self.background.iter().map(|c| c.weight).sum();
        if (weight_sum - 1.0).abs() > 1e-9 {
            return fail(format!("background weights sum to {weight_sum}, not 1"));
        }
        for (i, c) in self.background.iter().enumerate() {
            if c.weight < 0.0 || c.scale < 0.0 {
                return fail(format!("component {i} has negative weight or scale"));
            }
            if c.mean.len() != self.bands {
                return fail(format!(
                    "component {i} mean has {} bands, scene has {}",
                    c.mean.len(),
                    self.bands
                ));
            }
        }
        if self.target_mean.len() != self.bands {
            return fail("target mean band count differs from scene".into());
        }
        if !(0.0..=1.0).contains(&self.mixing_alpha) {
            return fail(format!("mixing_alpha {} outside [0, 1]", self.mixing_alpha));
        }
        if self.template_perturbation < 0.0 {
            return fail("negative template_perturbation".into());
        }
        Ok(())
    }

    /// Parse a scene spec from `key = value` text. Spectra may be given as
    /// brace lists (`target_mean`, `background_mean_1`, ...); omitted spectra
    /// fall back to the built-in shapes.
    pub fn from_config(text: &str) -> Result<Self> {
        let entries = kv::parse_entries(text)?;
        let mut map = std::collections::BTreeMap::new();
        for (k, v) in entries {
            map.insert(k, v);
        }
        let missing = |key: &str| Error::Config(format!("scene spec missing `{key}`"));
        let parse_num = |key: &str, v: &str| -> Result<f64> {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad number `{v}` for `{key}`")))
        };
        let parse_list = |key: &str, v: &str| -> Result<Vec<f64>> {
            kv::split_list(v)
                .into_iter()
                .map(|item| {
                    item.parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad number `{item}` in `{key}`")))
                })
                .collect()
        };

        let get_usize = |map: &std::collections::BTreeMap<String, String>,
                         key: &str|
         -> Result<usize> {
            let v = map.get(key).ok_or_else(|| missing(key))?;
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad integer `{v}` for `{key}`")))
        };

        let lines = get_usize(&map, "lines")?;
        let samples = get_usize(&map, "samples")?;
        let bands = get_usize(&map, "bands")?;
        let target_pixels = get_usize(&map, "target_pixels")?;
        let seed = map
            .get("seed")
            .map(|v| {
                v.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::Config(format!("bad seed `{v}`")))
            })
            .transpose()?
            .unwrap_or(0);

        let wavelengths = match map.get("wavelengths") {
            Some(v) => parse_list("wavelengths", v)?,
            None => default_wavelengths(bands),
        };
        if wavelengths.len() != bands {
            return Err(Error::Config(format!(
                "wavelengths list has {} entries, bands = {bands}",
                wavelengths.len()
            )));
        }

        let weights = match map.get("background_weights") {
            Some(v) => parse_list("background_weights", v)?,
            None => vec![0.6, 0.4],
        };
        let scales = match map.get("background_scales") {
            Some(v) => parse_list("background_scales", v)?,
            None => vec![0.04; weights.len()],
        };
        if scales.len() != weights.len() {
            return Err(Error::Config(
                "background_scales and background_weights differ in length".into(),
            ));
        }
        let mut background = Vec::with_capacity(weights.len());
        for (i, (&weight, &scale)) in weights.iter().zip(&scales).enumerate() {
            let mean_key = format!("background_mean_{}", i + 1);
            let mean = match map.get(mean_key.as_str()) {
                Some(v) => parse_list(&mean_key, v)?,
                None => default_background_mean(i, bands),
            };
            background.push(BackgroundComponent {
                weight,
                mean: Spectrum::new(mean, wavelengths.clone())?,
                scale,
            });
        }

        let target_mean = match map.get("target_mean") {
            Some(v) => parse_list("target_mean", v)?,
            None => default_target_mean(bands),
        };

        let spec = Self {
            lines,
            samples,
            bands,
            background,
            target_mean: Spectrum::new(target_mean, wavelengths)?,
            target_scale: match map.get("target_scale") {
                Some(v) => parse_num("target_scale", v)?,
                None => 0.04,
            },
            target_pixels,
            mixing_alpha: match map.get("mixing_alpha") {
                Some(v) => parse_num("mixing_alpha", v)?,
                None => 1.0,
            },
            template_perturbation: match map.get("template_perturbation") {
                Some(v) => parse_num("template_perturbation", v)?,
                None => 0.0,
            },
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// A generated scene: the cube, its annotation, the true target template and
/// the (possibly distorted) template handed to detectors.
#[derive(Debug, Clone)]
pub struct Scene {
    pub cube: HyperCube,
    pub mask: AnnotationMask,
    pub true_template: Spectrum,
    pub detector_template: Spectrum,
}

/// Generate a scene. Deterministic given the spec, including its seed.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let (lines, samples, bands) = (spec.lines, spec.samples, spec.bands);
    let n = lines * samples;

    // Cumulative component weights for the per-pixel draw.
    let mut cumulative = Vec::with_capacity(spec.background.len());
    let mut acc = 0.0;
    for c in &spec.background {
        acc += c.weight;
        cumulative.push(acc);
    }

    // Background pass, pixel by pixel in (line, sample) order.
    let mut values = vec![0.0f64; n * bands];
    for pixel in 0..n {
        let u: f64 = rng.gen();
        let component = cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(spec.background.len() - 1);
        let c = &spec.background[component];
        let mean = c.mean.values();
        for b in 0..bands {
            let noise: f64 = rng.sample(StandardNormal);
            values[pixel * bands + b] = mean[b] + c.scale * noise;
        }
    }

    // Choose target positions: partial Fisher-Yates prefix of a pixel
    // permutation.
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..spec.target_pixels {
        let j = rng.gen_range(i..n);
        order.swap(i, j);
    }
    let target_positions = &order[..spec.target_pixels];

    // Implant targets, mixing with the background already in place.
    let alpha = spec.mixing_alpha;
    let target_mean = spec.target_mean.values();
    let mut labels = vec![0u8; n];
    for &pixel in target_positions {
        labels[pixel] = 1;
        for b in 0..bands {
            let noise: f64 = rng.sample(StandardNormal);
            let draw = target_mean[b] + spec.target_scale * noise;
            let background = values[pixel * bands + b];
            values[pixel * bands + b] = alpha * draw + (1.0 - alpha) * background;
        }
    }

    // Smooth multiplicative template distortion: a low-order cosine series
    // normalized to unit peak, scaled by the requested relative magnitude.
    let mut field = vec![0.0f64; bands];
    for j in 1..=3 {
        let amplitude: f64 = rng.sample(StandardNormal);
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        for (b, f) in field.iter_mut().enumerate() {
            let t = band_fraction(b, bands);
            *f += amplitude * (std::f64::consts::PI * j as f64 * t + phase).cos();
        }
    }
    let peak = field.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let epsilon = spec.template_perturbation;
    let detector_values: Vec<f64> = target_mean
        .iter()
        .enumerate()
        .map(|(b, &v)| {
            let g = if peak > 0.0 { field[b] / peak } else { 0.0 };
            v * (1.0 + epsilon * g)
        })
        .collect();

    let wavelengths = spec.target_mean.wavelengths().to_vec();
    let cube = HyperCube::new(
        Array3::from_shape_vec((lines, samples, bands), values).expect("shape"),
        wavelengths.clone(),
    )?;
    let mask = AnnotationMask::new(
        Array2::from_shape_vec((lines, samples), labels).expect("shape"),
        crate::annotation::DEFAULT_MAX_LABEL,
    )?;
    Ok(Scene {
        cube,
        mask,
        true_template: spec.target_mean.clone(),
        detector_template: Spectrum::new(detector_values, wavelengths)?,
    })
}

/// How the two-stage N parameter is chosen in a target-size sweep.
#[derive(Debug, Clone, Copy)]
pub enum NRule {
    Constant(usize),
    /// Percent of the implanted target count, e.g. 50.0 for half.
    PercentOfTarget(f64),
}

impl NRule {
    pub fn resolve(&self, target_pixels: usize) -> usize {
        match *self {
            NRule::Constant(k) => k,
            NRule::PercentOfTarget(p) => {
                ((p / 100.0 * target_pixels as f64).round() as usize).max(1)
            }
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(p) = s.strip_suffix('%') {
            let p: f64 = p
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad N rule `{s}`")))?;
            Ok(NRule::PercentOfTarget(p))
        } else {
            let k: usize = s
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad N rule `{s}`")))?;
            Ok(NRule::Constant(k))
        }
    }
}

/// One row of a target-size sweep: mean and spread of the two-stage PR area
/// over the seeded repetitions.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub target_pixels: usize,
    pub n_pixels: usize,
    pub auc_pr_mean: f64,
    pub auc_pr_sd: f64,
    pub runs: Vec<f64>,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Two-stage PR area of one generated scene.
pub fn scene_two_stage_auc(spec: &SceneSpec, n_pixels: usize) -> Result<(f64, TwoStageOutput, Scene)> {
    let scene = generate_scene(spec)?;
    let stats = GaussianStats::estimate_flat(scene.cube.flat(), scene.cube.bands())?;
    let out = two_stage_with_stats(&scene.cube, &scene.detector_template, n_pixels, stats)?;
    let truth = TruthMask::from_annotation(&scene.mask, 1, UncertainPolicy::Exclude);
    let auc = pr_curve(&out.scores, &truth)?.auc;
    Ok((auc, out, scene))
}

/// Sweep the implanted target count, running `reps` seeded repetitions per
/// value and reporting the mean and standard deviation of the two-stage PR
/// area.
pub fn sweep_target_size(
    base: &SceneSpec,
    t_values: &[usize],
    rule: NRule,
    reps: usize,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(t_values.len());
    for &t in t_values {
        let n_pixels = rule.resolve(t);
        let mut runs = Vec::with_capacity(reps);
        for rep in 0..reps {
            let spec = base
                .clone()
                .with_target_pixels(t)
                .with_seed(base.seed.wrapping_add(rep as u64));
            let (auc, _, _) = scene_two_stage_auc(&spec, n_pixels)?;
            runs.push(auc);
        }
        let (mean, sd) = mean_sd(&runs);
        rows.push(SweepRow {
            target_pixels: t,
            n_pixels,
            auc_pr_mean: mean,
            auc_pr_sd: sd,
            runs,
        });
    }
    Ok(rows)
}

/// An N value for the top-N sensitivity sweep: absolute or percent of the
/// target-class size.
#[derive(Debug, Clone, Copy)]
pub enum NValue {
    Count(usize),
    PercentOfClass(f64),
}

impl NValue {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(p) = s.strip_suffix('%') {
            Ok(NValue::PercentOfClass(p.trim().parse().map_err(|_| {
                Error::InvalidArgument(format!("bad N value `{s}`"))
            })?))
        } else {
            Ok(NValue::Count(s.parse().map_err(|_| {
                Error::InvalidArgument(format!("bad N value `{s}`"))
            })?))
        }
    }

    pub fn resolve(&self, class_size: usize) -> usize {
        match *self {
            NValue::Count(k) => k,
            NValue::PercentOfClass(p) => ((p / 100.0 * class_size as f64).round() as usize).max(1),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            NValue::Count(k) => k.to_string(),
            NValue::PercentOfClass(p) => format!("{p}%"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NSweepRow {
    pub label: String,
    pub n_pixels: usize,
    pub auc_pr: f64,
}

/// Run the two-stage detector for each N value against an annotated image,
/// estimating the image statistics once.
pub fn sweep_n(
    cube: &HyperCube,
    mask: &AnnotationMask,
    template: &Spectrum,
    target_class: u8,
    n_values: &[NValue],
    policy: UncertainPolicy,
) -> Result<Vec<NSweepRow>> {
    let class_size = mask.class_count(target_class);
    let stats = GaussianStats::estimate_flat(cube.flat(), cube.bands())?;
    let truth = TruthMask::from_annotation(mask, target_class, policy);
    let mut rows = Vec::with_capacity(n_values.len());
    for value in n_values {
        let n_pixels = value.resolve(class_size);
        let out = two_stage_with_stats(cube, template, n_pixels, stats.clone())?;
        let auc = pr_curve(&out.scores, &truth)?.auc;
        rows.push(NSweepRow {
            label: value.label(),
            n_pixels,
            auc_pr: auc,
        });
    }
    Ok(rows)
}
