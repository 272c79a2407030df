//! Run configuration for the detect command: a `key = value` scenario file
//! merged with command-line overrides, plus the batch manifest format.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hsdetect_core::detect::ScenarioKind;
use hsdetect_core::evaluate::UncertainPolicy;
use hsdetect_core::preprocess::BandMask;

use crate::exit::{CmdError, CmdResult};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    pub test_header: PathBuf,
    pub annotation: Option<PathBuf>,
    pub source_header: Option<PathBuf>,
    pub source_annotation: Option<PathBuf>,
    pub library: Option<PathBuf>,
    pub library_index: Option<u32>,
    pub target_class: u8,
    pub include_uncertain: bool,
    pub uncertain: UncertainPolicy,
    pub n_pixels: usize,
    pub band_mask: Option<BandMask>,
    pub normalize: bool,
    /// None means the actual positive fraction of the evaluated pixels.
    pub prevalence: Option<f64>,
    pub output_dir: PathBuf,
    pub name: String,
    pub seed: u64,
}

/// Optional values collected from flags; `None` defers to the config file or
/// the defaults.
#[derive(Debug, Default, Clone)]
pub struct RunOverrides {
    pub scenario: Option<String>,
    pub test_header: Option<PathBuf>,
    pub annotation: Option<PathBuf>,
    pub source_header: Option<PathBuf>,
    pub source_annotation: Option<PathBuf>,
    pub library: Option<PathBuf>,
    pub library_index: Option<u32>,
    pub target_class: Option<u8>,
    pub include_uncertain: bool,
    pub uncertain: Option<String>,
    pub n_pixels: Option<usize>,
    pub band_mask: Option<String>,
    pub normalize: bool,
    pub prevalence: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub name: Option<String>,
    pub seed: Option<u64>,
}

fn parse_config_entries(path: &Path) -> CmdResult<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CmdError::config(format!("cannot read config {}: {e}", path.display())))?;
    let entries = hsdetect_core::config_entries(&text)
        .map_err(|e| CmdError::config(format!("{}: {e}", path.display())))?;
    Ok(entries.into_iter().collect())
}

pub fn parse_band_mask(spec: &str) -> CmdResult<Option<BandMask>> {
    match spec.trim() {
        "none" | "" => Ok(None),
        "default" => Ok(Some(BandMask::default_noisy())),
        other => Ok(Some(BandMask::parse(other).map_err(|e| {
            CmdError::config(format!("--band-mask: {e}"))
        })?)),
    }
}

pub fn parse_prevalence(spec: &str) -> CmdResult<Option<f64>> {
    if spec.trim().eq_ignore_ascii_case("auto") {
        return Ok(None);
    }
    let p: f64 = spec
        .trim()
        .parse()
        .map_err(|_| CmdError::config(format!("bad prevalence `{spec}`")))?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(CmdError::config(format!("prevalence {p} outside (0, 1]")));
    }
    Ok(Some(p))
}

impl RunConfig {
    /// Merge a scenario config file (when given) with flag overrides; flags
    /// win.
    pub fn resolve(config_path: Option<&Path>, flags: &RunOverrides) -> CmdResult<Self> {
        let file = match config_path {
            Some(p) => parse_config_entries(p)?,
            None => BTreeMap::new(),
        };
        let get = |key: &str| file.get(key).cloned();

        let scenario_text = flags
            .scenario
            .clone()
            .or_else(|| get("kind"))
            .or_else(|| get("scenario"))
            .ok_or_else(|| CmdError::config("no scenario given (--scenario or `kind =` in config)"))?;
        let scenario = ScenarioKind::parse(&scenario_text)
            .ok_or_else(|| CmdError::config(format!("unknown scenario `{scenario_text}`")))?;

        let test_header = flags
            .test_header
            .clone()
            .or_else(|| get("test").map(PathBuf::from))
            .ok_or_else(|| CmdError::config("no test image given (--test or `test =` in config)"))?;

        let annotation = flags
            .annotation
            .clone()
            .or_else(|| get("annotation").map(PathBuf::from));
        let source_header = flags
            .source_header
            .clone()
            .or_else(|| get("source").map(PathBuf::from));
        let source_annotation = flags
            .source_annotation
            .clone()
            .or_else(|| get("source annotation").map(PathBuf::from));
        let library = flags
            .library
            .clone()
            .or_else(|| get("library").map(PathBuf::from));

        let library_index = match flags.library_index {
            Some(i) => Some(i),
            None => get("library index")
                .map(|v| {
                    v.trim()
                        .parse::<u32>()
                        .map_err(|_| CmdError::config(format!("bad library index `{v}`")))
                })
                .transpose()?,
        };

        let target_class = match flags.target_class {
            Some(c) => c,
            None => get("target class")
                .map(|v| {
                    v.trim()
                        .parse::<u8>()
                        .map_err(|_| CmdError::config(format!("bad target class `{v}`")))
                })
                .transpose()?
                .unwrap_or(hsdetect_core::annotation::BLOOD_CLASS),
        };

        let include_uncertain = flags.include_uncertain
            || get("include uncertain").is_some_and(|v| v.trim() == "true" || v.trim() == "1");

        let uncertain_text = flags
            .uncertain
            .clone()
            .or_else(|| get("uncertain"))
            .unwrap_or_else(|| "exclude".to_string());
        let uncertain = UncertainPolicy::parse(&uncertain_text)
            .ok_or_else(|| CmdError::config(format!("unknown uncertain policy `{uncertain_text}`")))?;

        let n_pixels = match flags.n_pixels {
            Some(n) => n,
            None => get("n pixels")
                .or_else(|| get("n_pixels"))
                .map(|v| {
                    v.trim()
                        .parse::<usize>()
                        .map_err(|_| CmdError::config(format!("bad n_pixels `{v}`")))
                })
                .transpose()?
                .unwrap_or(hsdetect_core::detect::DEFAULT_N_PIXELS),
        };

        let band_mask = match &flags.band_mask {
            Some(spec) => parse_band_mask(spec)?,
            None => match get("band mask").or_else(|| get("band_mask")) {
                Some(spec) => parse_band_mask(&spec)?,
                None => None,
            },
        };

        let normalize = flags.normalize
            || get("normalize").is_some_and(|v| v.trim() == "true" || v.trim() == "1");

        let prevalence = match &flags.prevalence {
            Some(spec) => parse_prevalence(spec)?,
            None => match get("prevalence") {
                Some(spec) => parse_prevalence(&spec)?,
                None => None,
            },
        };

        let output_dir = flags
            .output_dir
            .clone()
            .or_else(|| get("output dir").or_else(|| get("output_dir")).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));

        let name = flags
            .name
            .clone()
            .or_else(|| get("name"))
            .unwrap_or_else(|| {
                test_header
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "run".to_string())
            });

        let seed = match flags.seed {
            Some(s) => s,
            None => get("seed")
                .map(|v| {
                    v.trim()
                        .parse::<u64>()
                        .map_err(|_| CmdError::config(format!("bad seed `{v}`")))
                })
                .transpose()?
                .unwrap_or(0),
        };

        Ok(Self {
            scenario,
            test_header,
            annotation,
            source_header,
            source_annotation,
            library,
            library_index,
            target_class,
            include_uncertain,
            uncertain,
            n_pixels,
            band_mask,
            normalize,
            prevalence,
            output_dir,
            name,
            seed,
        })
    }
}

impl RunConfig {
    /// Base config for batch mode: only the flags shared by every row matter;
    /// scenario, paths and name are filled in per manifest row.
    pub fn batch_base(flags: &RunOverrides) -> CmdResult<Self> {
        let uncertain_text = flags
            .uncertain
            .clone()
            .unwrap_or_else(|| "exclude".to_string());
        let uncertain = UncertainPolicy::parse(&uncertain_text).ok_or_else(|| {
            CmdError::config(format!("unknown uncertain policy `{uncertain_text}`"))
        })?;
        let band_mask = match &flags.band_mask {
            Some(spec) => parse_band_mask(spec)?,
            None => None,
        };
        let prevalence = match &flags.prevalence {
            Some(spec) => parse_prevalence(spec)?,
            None => None,
        };
        Ok(Self {
            scenario: ScenarioKind::IdealMf,
            test_header: PathBuf::new(),
            annotation: None,
            source_header: None,
            source_annotation: None,
            library: None,
            library_index: None,
            target_class: flags
                .target_class
                .unwrap_or(hsdetect_core::annotation::BLOOD_CLASS),
            include_uncertain: flags.include_uncertain,
            uncertain,
            n_pixels: flags
                .n_pixels
                .unwrap_or(hsdetect_core::detect::DEFAULT_N_PIXELS),
            band_mask,
            normalize: flags.normalize,
            prevalence,
            output_dir: flags
                .output_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from(".")),
            name: String::new(),
            seed: flags.seed.unwrap_or(0),
        })
    }
}

/// One row of a batch manifest: an annotated image plus where its inductive
/// template comes from.
#[derive(Debug, Clone)]
pub struct ManifestRow {
    pub code: String,
    pub header: PathBuf,
    pub annotation: PathBuf,
    pub source_code: Option<String>,
    pub library_index: Option<u32>,
}

/// Parse a batch manifest CSV with columns
/// `code,header,annotation,source_code,library_index`.
pub fn parse_manifest(path: &Path) -> CmdResult<Vec<ManifestRow>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CmdError::config(format!("cannot read manifest {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rows = Vec::new();
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| CmdError::config("empty manifest"))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| columns.iter().position(|c| c.eq_ignore_ascii_case(name));
    let code_col = find("code").ok_or_else(|| CmdError::config("manifest lacks `code` column"))?;
    let header_col =
        find("header").ok_or_else(|| CmdError::config("manifest lacks `header` column"))?;
    let annotation_col = find("annotation")
        .ok_or_else(|| CmdError::config("manifest lacks `annotation` column"))?;
    let source_col = find("source_code");
    let library_col = find("library_index");

    for line in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let cell = |i: usize| cells.get(i).copied().unwrap_or("");
        let library_index = match library_col.map(cell) {
            Some("") | None => None,
            Some(v) => Some(
                v.parse::<u32>()
                    .map_err(|_| CmdError::config(format!("bad library index `{v}`")))?,
            ),
        };
        rows.push(ManifestRow {
            code: cell(code_col).to_string(),
            header: base.join(cell(header_col)),
            annotation: base.join(cell(annotation_col)),
            source_code: match source_col.map(cell) {
                Some("") | None => None,
                Some(v) => Some(v.to_string()),
            },
            library_index,
        });
    }
    Ok(rows)
}
