//! Command bodies. Every writer here is deterministic: the same RunConfig
//! (seed and thread count included) produces byte-identical outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hsdetect_core::annotation::{read_annotation, write_annotation_csv, AnnotationMask};
use hsdetect_core::detect::{
    run_scenario, ImageUnderTest, Scenario, ScenarioKind, ScoreMap, TemplateSource,
};
use hsdetect_core::envi::{
    read_cube_file, read_header_file, read_score_grid, write_cube_file, write_score_grid,
    ByteOrder, DataType, Interleave,
};
use hsdetect_core::evaluate::{
    compare_map, confusion_at_threshold, detection_map, pca_fit, pr_curve, roc_curve,
    threshold_for_map, Curve, TruthMask, UncertainPolicy,
};
use hsdetect_core::library::read_spectral_library;
use hsdetect_core::preprocess::{
    correct_cube, median_normalize, remove_bands, BandMask,
};
use hsdetect_core::render::{
    curve_csv, plot_curves, save_compare_png, save_detection_png, CurveSeries,
};
use hsdetect_core::synth::{
    generate_scene, sweep_n, sweep_target_size, NRule, NValue, SceneSpec,
};
use hsdetect_core::{Error, HyperCube, Spectrum};

use crate::exit::{CmdError, CmdResult, InOp};
use crate::runcfg::{ManifestRow, RunConfig};

fn ensure_dir(dir: &Path) -> CmdResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CmdError::config(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CmdResult<()> {
    std::fs::write(path, text)
        .map_err(|e| CmdError::data(format!("cannot write {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// inspect
// ---------------------------------------------------------------------------

pub fn cmd_inspect(header_path: &Path) -> CmdResult<()> {
    let header = read_header_file(header_path).in_op("inspect")?;
    let dtype = match header.data_type {
        DataType::U16 => "uint16",
        DataType::F32 => "float32",
        DataType::F64 => "float64",
    };
    println!(
        "{}x{}x{} {} {}",
        header.samples, header.lines, header.bands, header.interleave, dtype
    );
    println!(
        "byte order: {}, header offset: {}",
        match header.byte_order {
            ByteOrder::Little => "little",
            ByteOrder::Big => "big",
        },
        header.header_offset
    );
    if let Some(ws) = &header.wavelengths {
        println!(
            "wavelengths: {:.1}..{:.1} nm ({} bands)",
            ws[0],
            ws[ws.len() - 1],
            ws.len()
        );
    }
    if let Some(scale) = header.reflectance_scale {
        println!("reflectance scale factor: {scale}");
    }
    if !header.extra.is_empty() {
        let keys: Vec<&str> = header.extra.keys().map(String::as_str).collect();
        println!("other keys: {}", keys.join(", "));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

pub struct PreprocessParams<'a> {
    pub input: &'a Path,
    pub output: &'a Path,
    pub band_mask: Option<BandMask>,
    pub normalize: bool,
    pub panel: Option<&'a Path>,
    pub panel_reference: Option<&'a Path>,
}

pub fn cmd_preprocess(p: PreprocessParams) -> CmdResult<()> {
    let mut cube = read_cube_file(p.input).in_op("preprocess/read")?;
    println!(
        "loaded {}x{}x{}",
        cube.lines(),
        cube.samples(),
        cube.bands()
    );

    match (p.panel, p.panel_reference) {
        (Some(panel_path), Some(reference_path)) => {
            let panel = read_cube_file(panel_path).in_op("preprocess/read-panel")?;
            let reference = load_single_spectrum(reference_path)?;
            cube = correct_cube(&cube, &panel, &reference).in_op("preprocess/reflectance-correct")?;
            println!("applied panel reflectance correction");
        }
        (None, None) => {}
        _ => {
            return Err(CmdError::config(
                "--panel and --panel-reference must be given together",
            ))
        }
    }

    if let Some(mask) = &p.band_mask {
        cube = remove_bands(&cube, mask).in_op("preprocess/remove-bands")?;
        println!("removed {} bands, {} remain", mask.len(), cube.bands());
    }
    if p.normalize {
        let (normalized, flagged) = median_normalize(&cube);
        cube = normalized;
        if !flagged.is_empty() {
            eprintln!(
                "warning: {} pixels had a non-positive median and were left unnormalized",
                flagged.len()
            );
        }
        println!("median-normalized {} pixels", cube.n_pixels());
    }

    if let Some(dir) = p.output.parent() {
        if !dir.as_os_str().is_empty() {
            ensure_dir(dir)?;
        }
    }
    let hdr = write_cube_file(
        p.output,
        &cube,
        Interleave::Bsq,
        DataType::F64,
        ByteOrder::Little,
        None,
    )
    .in_op("preprocess/write")?;
    println!("wrote {}", hdr.display());
    Ok(())
}

/// Read a spectrum from a 2-column CSV (wavelength plus one value column).
fn load_single_spectrum(path: &Path) -> CmdResult<Spectrum> {
    let library = read_spectral_library(path).in_op("read-spectrum")?;
    Ok(library.entries[0].spectrum.clone())
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

fn load_test_image(cfg: &RunConfig) -> CmdResult<(HyperCube, Option<AnnotationMask>)> {
    let mut cube = read_cube_file(&cfg.test_header).in_op("detect/read-test")?;
    if let Some(mask) = &cfg.band_mask {
        cube = remove_bands(&cube, mask).in_op("detect/remove-bands")?;
    }
    if cfg.normalize {
        let (normalized, flagged) = median_normalize(&cube);
        cube = normalized;
        if !flagged.is_empty() {
            eprintln!(
                "warning: {} pixels had a non-positive median and were left unnormalized",
                flagged.len()
            );
        }
    }
    let annotation = match &cfg.annotation {
        Some(path) => Some(
            read_annotation(path, (cube.lines(), cube.samples())).in_op("detect/read-annotation")?,
        ),
        None => None,
    };
    Ok((cube, annotation))
}

/// Load and preprocess the inductive source image named in the config.
fn load_source_image(cfg: &RunConfig) -> CmdResult<Option<(HyperCube, AnnotationMask)>> {
    let Some(source_header) = &cfg.source_header else {
        return Ok(None);
    };
    let source_annotation = cfg.source_annotation.as_ref().ok_or_else(|| {
        CmdError::config("--source needs --source-annotation for its target class")
    })?;
    let mut cube = read_cube_file(source_header).in_op("detect/read-source")?;
    if let Some(mask) = &cfg.band_mask {
        cube = remove_bands(&cube, mask).in_op("detect/remove-bands")?;
    }
    if cfg.normalize {
        cube = median_normalize(&cube).0;
    }
    let annotation = read_annotation(source_annotation, (cube.lines(), cube.samples()))
        .in_op("detect/read-source-annotation")?;
    Ok(Some((cube, annotation)))
}

fn load_library_spectrum(cfg: &RunConfig) -> CmdResult<Option<Spectrum>> {
    let Some(path) = &cfg.library else {
        return Ok(None);
    };
    let library = read_spectral_library(path).in_op("detect/read-library")?;
    let entry = match cfg.library_index {
        Some(index) => library.by_index(index).ok_or_else(|| {
            CmdError::in_op(
                "detect/resolve-library",
                Error::UnresolvableTarget(format!("library has no entry with index {index}")),
            )
        })?,
        None => &library.entries[0],
    };
    Ok(Some(entry.spectrum.clone()))
}

pub struct RunOutputs {
    pub auc_pr: Option<f64>,
    pub auc_roc: Option<f64>,
}

/// Execute one configured run: score the image, persist the map, and (when an
/// annotation is present) the PR/ROC curves plus a run manifest for `report`.
pub fn run_configured(cfg: &RunConfig) -> CmdResult<RunOutputs> {
    ensure_dir(&cfg.output_dir)?;
    let (cube, annotation) = load_test_image(cfg)?;
    let source = load_source_image(cfg)?;
    let library_spectrum = load_library_spectrum(cfg)?;

    let template_source = match cfg.scenario {
        ScenarioKind::IdealQd | ScenarioKind::IdealMf => TemplateSource::SelfClass,
        ScenarioKind::InductiveMf => match &source {
            Some((cube, annotation)) => TemplateSource::OtherImage { cube, annotation },
            None => return Err(CmdError::config("inductive-mf needs --source")),
        },
        ScenarioKind::LibraryMf => match &library_spectrum {
            Some(s) => TemplateSource::Library(s),
            None => return Err(CmdError::config("library-mf needs --library")),
        },
        ScenarioKind::TwoStage => {
            if let Some(s) = &library_spectrum {
                TemplateSource::Library(s)
            } else if let Some((cube, annotation)) = &source {
                TemplateSource::OtherImage { cube, annotation }
            } else {
                return Err(CmdError::config("two-stage needs --library or --source"));
            }
        }
    };

    let mut scenario = Scenario::new(cfg.scenario, template_source);
    scenario.target_class = cfg.target_class;
    scenario.include_uncertain = cfg.include_uncertain;
    scenario.n_pixels = cfg.n_pixels;

    let test = ImageUnderTest {
        cube: &cube,
        annotation: annotation.as_ref(),
    };
    let scores = run_scenario(&scenario, &test).in_op("detect/run-scenario")?;

    let stem = format!("{}_{}", cfg.name, cfg.scenario);
    let scores_base = cfg.output_dir.join(format!("{stem}_scores"));
    let scores_hdr =
        write_score_grid(&scores_base, scores.scores()).in_op("detect/write-scores")?;

    let mut outputs = RunOutputs {
        auc_pr: None,
        auc_roc: None,
    };
    let mut run_meta = String::new();
    let _ = writeln!(run_meta, "name = {}", cfg.name);
    let _ = writeln!(run_meta, "scenario = {}", cfg.scenario);
    let _ = writeln!(run_meta, "test = {}", cfg.test_header.display());
    let _ = writeln!(run_meta, "scores = {}", scores_hdr.display());
    let _ = writeln!(run_meta, "target class = {}", cfg.target_class);
    let _ = writeln!(run_meta, "include uncertain = {}", cfg.include_uncertain);
    let _ = writeln!(
        run_meta,
        "uncertain = {}",
        match cfg.uncertain {
            UncertainPolicy::Exclude => "exclude",
            UncertainPolicy::Positive => "positive",
            UncertainPolicy::Negative => "negative",
        }
    );
    let _ = writeln!(run_meta, "n pixels = {}", cfg.n_pixels);
    if let Some(mask) = &cfg.band_mask {
        let _ = writeln!(run_meta, "band mask = {mask}");
    }
    let _ = writeln!(run_meta, "normalize = {}", cfg.normalize);
    let _ = writeln!(run_meta, "seed = {}", cfg.seed);
    if let Some(annotation_path) = &cfg.annotation {
        let _ = writeln!(run_meta, "annotation = {}", annotation_path.display());
    }
    match cfg.prevalence {
        Some(p) => {
            let _ = writeln!(run_meta, "prevalence = {p}");
        }
        None => {
            let _ = writeln!(run_meta, "prevalence = auto");
        }
    }

    if let Some(annotation) = &annotation {
        let truth = TruthMask::from_annotation(annotation, cfg.target_class, cfg.uncertain);
        let pr = pr_curve(&scores, &truth).in_op("evaluate/pr-curve")?;
        let roc = roc_curve(&scores, &truth).in_op("evaluate/roc-curve")?;
        write_text(
            &cfg.output_dir.join(format!("{stem}_pr.csv")),
            &curve_csv(&pr, "recall", "precision"),
        )?;
        write_text(
            &cfg.output_dir.join(format!("{stem}_roc.csv")),
            &curve_csv(&roc, "fpr", "tpr"),
        )?;
        let prevalence = cfg.prevalence.unwrap_or_else(|| truth.prevalence());
        let eta = threshold_for_map(&scores, &truth, prevalence).in_op("evaluate/threshold")?;
        println!(
            "{} {} AUC_PR={:.4} AUC_ROC={:.4} eta={eta:.6}",
            cfg.name, cfg.scenario, pr.auc, roc.auc
        );
        outputs.auc_pr = Some(pr.auc);
        outputs.auc_roc = Some(roc.auc);
    } else {
        println!("{} {} scores written (no annotation, skipping curves)", cfg.name, cfg.scenario);
    }

    write_text(&cfg.output_dir.join(format!("{stem}_run.txt")), &run_meta)?;
    Ok(outputs)
}

/// Batch mode: run the four reference scenarios for every manifest row and
/// emit an aggregated PR-area table.
pub fn run_batch(
    rows: &[ManifestRow],
    library_path: Option<&Path>,
    base: &RunConfig,
) -> CmdResult<()> {
    ensure_dir(&base.output_dir)?;
    let mut summary = String::from("Code,Ideal MF,Inductive MF,MF lib,Algorithm 1\n");
    for row in rows {
        let mut cells = vec![row.code.clone()];
        let run_kind = |scenario: ScenarioKind| -> CmdResult<Option<f64>> {
            let mut cfg = base.clone();
            cfg.scenario = scenario;
            cfg.test_header = row.header.clone();
            cfg.annotation = Some(row.annotation.clone());
            cfg.name = row.code.clone();
            cfg.library = library_path.map(Path::to_path_buf);
            cfg.library_index = row.library_index;
            if let Some(source_code) = &row.source_code {
                if let Some(source_row) = rows.iter().find(|r| &r.code == source_code) {
                    cfg.source_header = Some(source_row.header.clone());
                    cfg.source_annotation = Some(source_row.annotation.clone());
                }
            }
            let needs_source = matches!(scenario, ScenarioKind::InductiveMf);
            let needs_library = matches!(scenario, ScenarioKind::LibraryMf);
            if needs_source && cfg.source_header.is_none() {
                return Ok(None);
            }
            if needs_library && (cfg.library.is_none() || cfg.library_index.is_none()) {
                return Ok(None);
            }
            if matches!(scenario, ScenarioKind::TwoStage)
                && cfg.library_index.is_none()
                && cfg.source_header.is_none()
            {
                return Ok(None);
            }
            Ok(run_configured(&cfg)?.auc_pr)
        };
        for scenario in [
            ScenarioKind::IdealMf,
            ScenarioKind::InductiveMf,
            ScenarioKind::LibraryMf,
            ScenarioKind::TwoStage,
        ] {
            match run_kind(scenario)? {
                Some(auc) => cells.push(format!("{auc:.2}")),
                None => cells.push(String::new()),
            }
        }
        summary.push_str(&cells.join(","));
        summary.push('\n');
    }
    let summary_path = base.output_dir.join("summary.csv");
    write_text(&summary_path, &summary)?;
    println!("wrote {}", summary_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

pub struct EvaluateParams<'a> {
    pub scores: &'a Path,
    pub annotation: &'a Path,
    pub target_class: u8,
    pub uncertain: UncertainPolicy,
    pub prevalence: Option<f64>,
    pub output_dir: &'a Path,
    pub name: String,
    pub pca_cube: Option<&'a Path>,
    pub pca_sample: usize,
    pub seed: u64,
}

pub fn cmd_evaluate(p: EvaluateParams) -> CmdResult<()> {
    ensure_dir(p.output_dir)?;
    let grid = read_score_grid(p.scores).in_op("evaluate/read-scores")?;
    let scores = ScoreMap::new(grid);
    let annotation = read_annotation(p.annotation, (scores.lines(), scores.samples()))
        .in_op("evaluate/read-annotation")?;
    let truth = TruthMask::from_annotation(&annotation, p.target_class, p.uncertain);

    let pr = pr_curve(&scores, &truth).in_op("evaluate/pr-curve")?;
    let roc = roc_curve(&scores, &truth).in_op("evaluate/roc-curve")?;
    let prevalence = p.prevalence.unwrap_or_else(|| truth.prevalence());
    let eta = threshold_for_map(&scores, &truth, prevalence).in_op("evaluate/threshold")?;
    let cm = confusion_at_threshold(&scores, &truth, eta).in_op("evaluate/confusion")?;
    let dm = detection_map(&scores, &truth, eta).in_op("evaluate/detection-map")?;

    write_text(
        &p.output_dir.join(format!("{}_pr.csv", p.name)),
        &curve_csv(&pr, "recall", "precision"),
    )?;
    write_text(
        &p.output_dir.join(format!("{}_roc.csv", p.name)),
        &curve_csv(&roc, "fpr", "tpr"),
    )?;
    save_detection_png(p.output_dir.join(format!("{}_detection.png", p.name)), &dm)
        .in_op("evaluate/write-map")?;

    let mut metrics = String::new();
    let _ = writeln!(metrics, "auc_pr,{}", pr.auc);
    let _ = writeln!(metrics, "auc_roc,{}", roc.auc);
    let _ = writeln!(metrics, "prevalence,{prevalence}");
    let _ = writeln!(metrics, "eta,{eta}");
    let _ = writeln!(metrics, "tp,{}", cm.true_pos);
    let _ = writeln!(metrics, "fp,{}", cm.false_pos);
    let _ = writeln!(metrics, "tn,{}", cm.true_neg);
    let _ = writeln!(metrics, "fn,{}", cm.false_neg);
    let _ = writeln!(metrics, "tpr,{}", cm.tpr());
    let _ = writeln!(metrics, "fpr,{}", cm.fpr());
    let _ = writeln!(metrics, "precision,{}", cm.precision());
    let _ = writeln!(metrics, "recall,{}", cm.recall());
    write_text(&p.output_dir.join(format!("{}_metrics.csv", p.name)), &metrics)?;

    println!(
        "{} AUC_PR={:.4} AUC_ROC={:.4} eta={eta:.6} TP={} FP={} TN={} FN={}",
        p.name, pr.auc, roc.auc, cm.true_pos, cm.false_pos, cm.true_neg, cm.false_neg
    );

    if let Some(cube_path) = p.pca_cube {
        let cube = read_cube_file(cube_path).in_op("evaluate/read-pca-cube")?;
        if cube.lines() != scores.lines() || cube.samples() != scores.samples() {
            return Err(CmdError::data("pca cube shape differs from score map"));
        }
        let csv = pca_scatter_csv(&cube, &annotation, p.pca_sample, p.seed)?;
        write_text(&p.output_dir.join(format!("{}_pca.csv", p.name)), &csv)?;
    }
    Ok(())
}

/// Project a seeded pixel sample onto the first two principal components and
/// emit `class,pc1,pc2` rows.
fn pca_scatter_csv(
    cube: &HyperCube,
    annotation: &AnnotationMask,
    sample: usize,
    seed: u64,
) -> CmdResult<String> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    let n = cube.n_pixels();
    let mut indices: Vec<usize> = (0..n).collect();
    if sample < n {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
        indices.truncate(sample);
        indices.sort_unstable();
    }
    let bands = cube.bands();
    let flat = cube.flat();
    let mut data = Vec::with_capacity(indices.len() * bands);
    for &i in &indices {
        data.extend_from_slice(&flat[i * bands..(i + 1) * bands]);
    }
    let model = pca_fit(&data, bands, 2).in_op("evaluate/pca")?;
    let mut csv = String::from("class,pc1,pc2\n");
    for &i in &indices {
        let coords = model.transform(&flat[i * bands..(i + 1) * bands]);
        let label = annotation.labels().as_slice().expect("standard layout")[i];
        let _ = writeln!(csv, "{label},{},{}", coords[0], coords[1]);
    }
    Ok(csv)
}

// ---------------------------------------------------------------------------
// sweep-n
// ---------------------------------------------------------------------------

pub struct SweepNParams<'a> {
    pub cfg: &'a RunConfig,
    pub n_values: Vec<NValue>,
}

pub fn cmd_sweep_n(p: SweepNParams) -> CmdResult<()> {
    ensure_dir(&p.cfg.output_dir)?;
    let (cube, annotation) = load_test_image(p.cfg)?;
    let annotation = annotation
        .ok_or_else(|| CmdError::config("sweep-n needs --annotation for ground truth"))?;

    let source = load_source_image(p.cfg)?;
    let library_spectrum = load_library_spectrum(p.cfg)?;
    let template = if let Some(spectrum) = &library_spectrum {
        let (resampled, _) =
            hsdetect_core::preprocess::resample_spectrum(spectrum, cube.wavelengths())
                .in_op("sweep-n/resample")?;
        resampled
    } else if let Some((source_cube, source_annotation)) = &source {
        let classes = if p.cfg.include_uncertain {
            vec![p.cfg.target_class, hsdetect_core::annotation::UNCERTAIN_CLASS]
        } else {
            vec![p.cfg.target_class]
        };
        hsdetect_core::preprocess::mean_spectrum_of_classes(
            source_cube,
            source_annotation,
            &classes,
        )
        .in_op("sweep-n/source-template")?
    } else {
        return Err(CmdError::config("sweep-n needs --library or --source for the template"));
    };

    let rows = sweep_n(
        &cube,
        &annotation,
        &template,
        p.cfg.target_class,
        &p.n_values,
        p.cfg.uncertain,
    )
    .in_op("sweep-n/run")?;

    let mut csv = String::from("n_label,n_pixels,auc_pr\n");
    for row in &rows {
        let _ = writeln!(csv, "{},{},{}", row.label, row.n_pixels, row.auc_pr);
        println!("N={:>8} ({} px) AUC_PR={:.4}", row.label, row.n_pixels, row.auc_pr);
    }
    let path = p.cfg.output_dir.join(format!("{}_sweep_n.csv", p.cfg.name));
    write_text(&path, &csv)?;
    println!("wrote {}", path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep-t
// ---------------------------------------------------------------------------

pub struct SweepTParams<'a> {
    pub spec: SceneSpec,
    pub t_values: Vec<usize>,
    pub n_rule: NRule,
    pub reps: usize,
    pub output_dir: &'a Path,
    pub name: String,
}

pub fn cmd_sweep_t(p: SweepTParams) -> CmdResult<()> {
    ensure_dir(p.output_dir)?;
    let rows = sweep_target_size(&p.spec, &p.t_values, p.n_rule, p.reps).in_op("sweep-t/run")?;
    let mut csv = String::from("target_pixels,n_pixels,auc_pr_mean,auc_pr_sd\n");
    for row in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            row.target_pixels, row.n_pixels, row.auc_pr_mean, row.auc_pr_sd
        );
        println!(
            "T={:>7} N={:>7} AUC_PR={:.4} (sd {:.4})",
            row.target_pixels, row.n_pixels, row.auc_pr_mean, row.auc_pr_sd
        );
    }
    let path = p.output_dir.join(format!("{}_sweep_t.csv", p.name));
    write_text(&path, &csv)?;
    println!("wrote {}", path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

pub fn cmd_synth(spec: SceneSpec, output_dir: &Path, name: &str) -> CmdResult<()> {
    ensure_dir(output_dir)?;
    let scene = generate_scene(&spec).in_op("synth/generate")?;
    let base = output_dir.join(name);
    let hdr = write_cube_file(
        &base,
        &scene.cube,
        Interleave::Bsq,
        DataType::F64,
        ByteOrder::Little,
        None,
    )
    .in_op("synth/write-cube")?;
    let mask_path = output_dir.join(format!("{name}_mask.csv"));
    write_annotation_csv(&mask_path, &scene.mask).in_op("synth/write-mask")?;

    // Templates as a two-entry library CSV so detect can ingest them:
    // index 1 is the true template, index 2 the detector's distorted copy.
    let mut csv = String::from("wavelength,1:true-template,2:detector-template\n");
    for ((w, t), d) in scene
        .cube
        .wavelengths()
        .iter()
        .zip(scene.true_template.values())
        .zip(scene.detector_template.values())
    {
        let _ = writeln!(csv, "{w},{t},{d}");
    }
    let templates_path = output_dir.join(format!("{name}_templates.csv"));
    write_text(&templates_path, &csv)?;

    println!(
        "wrote {} ({}x{}x{}, {} target pixels), {}, {}",
        hdr.display(),
        scene.cube.lines(),
        scene.cube.samples(),
        scene.cube.bands(),
        scene.mask.class_count(1),
        mask_path.display(),
        templates_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct RunRecord {
    name: String,
    scenario: ScenarioKind,
    scores_path: PathBuf,
    annotation_path: PathBuf,
    target_class: u8,
    uncertain: UncertainPolicy,
    prevalence: Option<f64>,
}

fn parse_run_record(path: &Path) -> CmdResult<Option<RunRecord>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CmdError::data(format!("cannot read {}: {e}", path.display())))?;
    let entries: std::collections::BTreeMap<String, String> = hsdetect_core::config_entries(&text)
        .map_err(|e| CmdError::data(format!("{}: {e}", path.display())))?
        .into_iter()
        .collect();
    let Some(annotation) = entries.get("annotation") else {
        // Runs without ground truth cannot be re-evaluated.
        return Ok(None);
    };
    let get = |key: &str| {
        entries
            .get(key)
            .cloned()
            .ok_or_else(|| CmdError::data(format!("{} lacks `{key}`", path.display())))
    };
    let scenario = ScenarioKind::parse(&get("scenario")?)
        .ok_or_else(|| CmdError::data(format!("{}: bad scenario", path.display())))?;
    let prevalence = match get("prevalence")?.as_str() {
        "auto" => None,
        v => Some(
            v.parse::<f64>()
                .map_err(|_| CmdError::data(format!("{}: bad prevalence", path.display())))?,
        ),
    };
    Ok(Some(RunRecord {
        name: get("name")?,
        scenario,
        scores_path: PathBuf::from(get("scores")?),
        annotation_path: PathBuf::from(annotation),
        target_class: get("target class")?.parse().map_err(|_| {
            CmdError::data(format!("{}: bad target class", path.display()))
        })?,
        uncertain: UncertainPolicy::parse(&get("uncertain")?)
            .ok_or_else(|| CmdError::data(format!("{}: bad uncertain policy", path.display())))?,
        prevalence,
    }))
}

fn load_run_curves(run: &RunRecord) -> CmdResult<(ScoreMap, TruthMask, Curve, Curve)> {
    if !run.scores_path.exists() {
        return Err(CmdError::data(format!(
            "missing score map {}",
            run.scores_path.display()
        )));
    }
    if !run.annotation_path.exists() {
        return Err(CmdError::data(format!(
            "missing annotation {}",
            run.annotation_path.display()
        )));
    }
    let scores = ScoreMap::new(read_score_grid(&run.scores_path).in_op("report/read-scores")?);
    let annotation = read_annotation(&run.annotation_path, (scores.lines(), scores.samples()))
        .in_op("report/read-annotation")?;
    let truth = TruthMask::from_annotation(&annotation, run.target_class, run.uncertain);
    let pr = pr_curve(&scores, &truth).in_op("report/pr-curve")?;
    let roc = roc_curve(&scores, &truth).in_op("report/roc-curve")?;
    Ok((scores, truth, pr, roc))
}

/// Rebuild curves and comparison maps from the outputs of prior detect runs.
pub fn cmd_report(run_dir: &Path, output_dir: &Path) -> CmdResult<()> {
    let mut run_files: Vec<PathBuf> = std::fs::read_dir(run_dir)
        .map_err(|e| CmdError::data(format!("cannot read {}: {e}", run_dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .map(|n| n.to_string_lossy().ends_with("_run.txt"))
                .unwrap_or(false)
        })
        .collect();
    run_files.sort();
    if run_files.is_empty() {
        return Err(CmdError::data(format!(
            "no detector runs found in {}",
            run_dir.display()
        )));
    }
    ensure_dir(output_dir)?;

    let mut runs = Vec::new();
    for file in &run_files {
        if let Some(record) = parse_run_record(file)? {
            runs.push(record);
        }
    }
    if runs.is_empty() {
        return Err(CmdError::data(
            "runs found, but none carry an annotation to evaluate against",
        ));
    }

    let mut by_name: std::collections::BTreeMap<String, Vec<usize>> = Default::default();
    for (i, run) in runs.iter().enumerate() {
        by_name.entry(run.name.clone()).or_default().push(i);
    }

    for (name, run_indices) in &by_name {
        let mut loaded = Vec::new();
        for &i in run_indices {
            let run = &runs[i];
            let (scores, truth, pr, roc) = load_run_curves(run)?;
            let stem = format!("{}_{}", run.name, run.scenario);
            write_text(
                &output_dir.join(format!("{stem}_pr.svg")),
                &plot_curves(
                    &format!("{stem} precision-recall"),
                    "recall",
                    "precision",
                    &[CurveSeries {
                        label: run.scenario.to_string(),
                        curve: &pr,
                    }],
                ),
            )?;
            write_text(
                &output_dir.join(format!("{stem}_roc.svg")),
                &plot_curves(
                    &format!("{stem} ROC"),
                    "false positive rate",
                    "true positive rate",
                    &[CurveSeries {
                        label: run.scenario.to_string(),
                        curve: &roc,
                    }],
                ),
            )?;
            println!("{stem}: AUC_PR={:.4} AUC_ROC={:.4}", pr.auc, roc.auc);
            loaded.push((i, scores, truth));
        }

        // Comparison map: the first non-ideal detector against the ideal MF.
        let ideal = loaded
            .iter()
            .position(|(i, _, _)| runs[*i].scenario == ScenarioKind::IdealMf);
        let algorithm = loaded.iter().position(|(i, _, _)| {
            matches!(
                runs[*i].scenario,
                ScenarioKind::TwoStage | ScenarioKind::InductiveMf | ScenarioKind::LibraryMf
            )
        });
        match (algorithm, ideal) {
            (Some(a), Some(r)) => {
                let (ai, a_scores, truth) = &loaded[a];
                let (_, r_scores, _) = &loaded[r];
                let prevalence = runs[*ai].prevalence.unwrap_or_else(|| truth.prevalence());
                let map = compare_map(a_scores, r_scores, truth, prevalence)
                    .in_op("report/compare-map")?;
                let path = output_dir.join(format!("{name}_compare.png"));
                save_compare_png(&path, &map).in_op("report/write-compare")?;
                println!("wrote {}", path.display());
            }
            (Some(_), None) => {
                return Err(CmdError::data(format!(
                    "{name}: comparison needs an ideal-mf run alongside the detector runs"
                )));
            }
            _ => {}
        }
    }
    Ok(())
}
