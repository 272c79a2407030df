//! Batch front-end for the detection pipeline: ingest, preprocess, detect,
//! evaluate, sweep, synthesize, report.

mod exit;
mod ops;
mod runcfg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hsdetect_core::evaluate::UncertainPolicy;
use hsdetect_core::synth::{NRule, NValue, SceneSpec};

use exit::{CmdError, CmdResult};
use runcfg::{parse_band_mask, parse_manifest, parse_prevalence, RunConfig, RunOverrides};

#[derive(Parser)]
#[command(
    name = "hsdetect",
    version,
    about = "Hyperspectral target detection pipeline",
    disable_help_subcommand = true
)]
struct Cli {
    /// Worker threads (0 uses all cores; affects speed only, never results).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the dimensions, layout and wavelength range of an ENVI header.
    Inspect {
        /// Path to the .hdr file.
        header: PathBuf,
    },
    /// Apply reflectance correction, band removal and median normalization,
    /// writing a new cube.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        /// Output base path; writes <base>.hdr and <base>.raw.
        #[arg(long)]
        output: PathBuf,
        /// Bands to drop: "default", "none", or ranges like "0-4,48-50,121-127".
        #[arg(long, default_value = "none")]
        band_mask: String,
        /// Divide each pixel by its median across bands.
        #[arg(long)]
        normalize: bool,
        /// Grey-panel cube for reflectance correction.
        #[arg(long)]
        panel: Option<PathBuf>,
        /// Panel reference spectrum (2-column CSV) measured independently.
        #[arg(long)]
        panel_reference: Option<PathBuf>,
    },
    /// Run a detection scenario (or a batch manifest) and write score maps
    /// plus PR/ROC curves.
    Detect(DetectArgs),
    /// Evaluate a stored score map against an annotation.
    Evaluate(EvaluateArgs),
    /// Two-stage detector performance for a range of top-N values.
    SweepN(SweepNArgs),
    /// Two-stage detector performance for a range of implanted target sizes
    /// on synthetic scenes.
    SweepT(SweepTArgs),
    /// Generate a synthetic annotated scene (ENVI cube + CSV mask +
    /// template library).
    Synth(SynthArgs),
    /// Render SVG curves and comparison maps from prior detect runs.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
        /// Defaults to the run directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DetectArgs {
    /// Scenario config file (key = value); flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Batch manifest CSV (code,header,annotation,source_code,library_index).
    #[arg(long)]
    batch: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    annotation: Option<PathBuf>,
    /// ideal-qd | ideal-mf | inductive-mf | library-mf | two-stage
    #[arg(long)]
    scenario: Option<String>,
    /// Source image header for the inductive template.
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    source_annotation: Option<PathBuf>,
    /// Spectral library CSV for library templates.
    #[arg(long)]
    library: Option<PathBuf>,
    #[arg(long)]
    library_index: Option<u32>,
    #[arg(long)]
    target_class: Option<u8>,
    /// Fold uncertain-class pixels into template estimation.
    #[arg(long)]
    include_uncertain: bool,
    /// Evaluation role of uncertain pixels: exclude | positive | negative.
    #[arg(long)]
    uncertain: Option<String>,
    /// Top-N pixels averaged by the two-stage second pass.
    #[arg(long)]
    n_pixels: Option<usize>,
    #[arg(long)]
    band_mask: Option<String>,
    #[arg(long)]
    normalize: bool,
    /// "auto" or a fraction in (0, 1].
    #[arg(long)]
    prevalence: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Output file stem; defaults to the test image stem.
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Score map header written by detect.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    annotation: PathBuf,
    #[arg(long, default_value_t = hsdetect_core::annotation::BLOOD_CLASS)]
    target_class: u8,
    #[arg(long, default_value = "exclude")]
    uncertain: String,
    #[arg(long, default_value = "auto")]
    prevalence: String,
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
    #[arg(long)]
    name: Option<String>,
    /// Also project this cube's pixels onto two principal components.
    #[arg(long)]
    pca_cube: Option<PathBuf>,
    /// Pixel sample size for the PCA scatter.
    #[arg(long, default_value_t = 5000)]
    pca_sample: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SweepNArgs {
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    annotation: PathBuf,
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    source_annotation: Option<PathBuf>,
    #[arg(long)]
    library: Option<PathBuf>,
    #[arg(long)]
    library_index: Option<u32>,
    #[arg(long)]
    target_class: Option<u8>,
    #[arg(long)]
    include_uncertain: bool,
    #[arg(long)]
    uncertain: Option<String>,
    #[arg(long)]
    band_mask: Option<String>,
    #[arg(long)]
    normalize: bool,
    /// Comma-separated N values: counts or percents of the class size,
    /// e.g. "750,1000,10%,20%".
    #[arg(long)]
    n_values: String,
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct SweepTArgs {
    /// Scene spec config; inline flags below are used when absent.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    lines: usize,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 16)]
    bands: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    perturbation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated implanted-target counts, e.g. "200,1000,5000,20000".
    #[arg(long)]
    t_values: String,
    /// Two-stage N rule: a count ("1000") or a percent of T ("50%").
    #[arg(long)]
    n_rule: String,
    /// Seeded repetitions per T value.
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
    #[arg(long, default_value = "scene")]
    name: String,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene spec config; inline flags below are used when absent.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    lines: usize,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 16)]
    bands: usize,
    #[arg(long, default_value_t = 500)]
    target_pixels: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    perturbation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
    #[arg(long, default_value = "scene")]
    name: String,
}

#[allow(clippy::too_many_arguments)]
fn scene_spec_from(
    scene: Option<&PathBuf>,
    lines: usize,
    samples: usize,
    bands: usize,
    target_pixels: usize,
    alpha: f64,
    perturbation: f64,
    seed: u64,
) -> CmdResult<SceneSpec> {
    match scene {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CmdError::config(format!("cannot read {}: {e}", path.display())))?;
            SceneSpec::from_config(&text).map_err(|e| CmdError::config(format!("{e}")))
        }
        None => {
            let mut spec = SceneSpec::separable(lines, samples, bands, target_pixels, seed);
            spec.mixing_alpha = alpha;
            spec.template_perturbation = perturbation;
            spec.validate()
                .map_err(|e| CmdError::config(format!("{e}")))?;
            Ok(spec)
        }
    }
}

fn run(cli: Cli) -> CmdResult<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CmdError::config(format!("cannot set thread count: {e}")))?;
    }
    match cli.command {
        Command::Inspect { header } => ops::cmd_inspect(&header),
        Command::Preprocess {
            input,
            output,
            band_mask,
            normalize,
            panel,
            panel_reference,
        } => ops::cmd_preprocess(ops::PreprocessParams {
            input: &input,
            output: &output,
            band_mask: parse_band_mask(&band_mask)?,
            normalize,
            panel: panel.as_deref(),
            panel_reference: panel_reference.as_deref(),
        }),
        Command::Detect(args) => {
            let overrides = RunOverrides {
                scenario: args.scenario,
                test_header: args.test,
                annotation: args.annotation,
                source_header: args.source,
                source_annotation: args.source_annotation,
                library: args.library,
                library_index: args.library_index,
                target_class: args.target_class,
                include_uncertain: args.include_uncertain,
                uncertain: args.uncertain,
                n_pixels: args.n_pixels,
                band_mask: args.band_mask,
                normalize: args.normalize,
                prevalence: args.prevalence,
                output_dir: args.output_dir,
                name: args.name,
                seed: args.seed,
            };
            match &args.batch {
                Some(manifest_path) => {
                    let rows = parse_manifest(manifest_path)?;
                    let base = RunConfig::batch_base(&overrides)?;
                    ops::run_batch(&rows, overrides.library.as_deref(), &base)
                }
                None => {
                    let cfg = RunConfig::resolve(args.config.as_deref(), &overrides)?;
                    ops::run_configured(&cfg).map(|_| ())
                }
            }
        }
        Command::Evaluate(args) => {
            let uncertain = UncertainPolicy::parse(&args.uncertain).ok_or_else(|| {
                CmdError::config(format!("unknown uncertain policy `{}`", args.uncertain))
            })?;
            let name = args.name.clone().unwrap_or_else(|| {
                args.scores
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "scores".into())
            });
            ops::cmd_evaluate(ops::EvaluateParams {
                scores: &args.scores,
                annotation: &args.annotation,
                target_class: args.target_class,
                uncertain,
                prevalence: parse_prevalence(&args.prevalence)?,
                output_dir: &args.output_dir,
                name,
                pca_cube: args.pca_cube.as_deref(),
                pca_sample: args.pca_sample,
                seed: args.seed,
            })
        }
        Command::SweepN(args) => {
            let overrides = RunOverrides {
                scenario: Some("two-stage".into()),
                test_header: Some(args.test),
                annotation: Some(args.annotation),
                source_header: args.source,
                source_annotation: args.source_annotation,
                library: args.library,
                library_index: args.library_index,
                target_class: args.target_class,
                include_uncertain: args.include_uncertain,
                uncertain: args.uncertain,
                band_mask: args.band_mask,
                normalize: args.normalize,
                output_dir: Some(args.output_dir),
                name: args.name,
                ..RunOverrides::default()
            };
            let cfg = RunConfig::resolve(None, &overrides)?;
            let mut n_values = Vec::new();
            for item in args.n_values.split(',') {
                n_values.push(
                    NValue::parse(item).map_err(|e| CmdError::config(format!("--n-values: {e}")))?,
                );
            }
            ops::cmd_sweep_n(ops::SweepNParams {
                cfg: &cfg,
                n_values,
            })
        }
        Command::SweepT(args) => {
            let spec = scene_spec_from(
                args.scene.as_ref(),
                args.lines,
                args.samples,
                args.bands,
                0,
                args.alpha,
                args.perturbation,
                args.seed,
            )?;
            let mut t_values = Vec::new();
            for item in args.t_values.split(',') {
                t_values.push(item.trim().parse::<usize>().map_err(|_| {
                    CmdError::config(format!("bad T value `{item}` in --t-values"))
                })?);
            }
            let n_rule =
                NRule::parse(&args.n_rule).map_err(|e| CmdError::config(format!("--n-rule: {e}")))?;
            ops::cmd_sweep_t(ops::SweepTParams {
                spec,
                t_values,
                n_rule,
                reps: args.reps,
                output_dir: &args.output_dir,
                name: args.name,
            })
        }
        Command::Synth(args) => {
            let spec = scene_spec_from(
                args.scene.as_ref(),
                args.lines,
                args.samples,
                args.bands,
                args.target_pixels,
                args.alpha,
                args.perturbation,
                args.seed,
            )?;
            ops::cmd_synth(spec, &args.output_dir, &args.name)
        }
        Command::Report {
            run_dir,
            output_dir,
        } => {
            let out = output_dir.unwrap_or_else(|| run_dir.clone());
            ops::cmd_report(&run_dir, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("hsdetect: error: {}", err.message);
            ExitCode::from(err.code as u8)
        }
    }
}
