//! End-to-end runs of the `hsdetect` binary: synthesize a scene, detect,
//! evaluate, report, and check the documented exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn hsdetect(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsdetect"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn pipeline_synth_detect_evaluate_report() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // Synthesize a small separable scene with a distorted detector template.
    let out = hsdetect(
        &[
            "synth",
            "--lines",
            "48",
            "--samples",
            "40",
            "--bands",
            "8",
            "--target-pixels",
            "120",
            "--perturbation",
            "0.12",
            "--seed",
            "9",
            "--output-dir",
            "scene",
            "--name",
            "toy",
        ],
        root,
    );
    assert_success(&out);
    assert!(root.join("scene/toy.hdr").is_file());
    assert!(root.join("scene/toy.raw").is_file());
    assert!(root.join("scene/toy_mask.csv").is_file());
    assert!(root.join("scene/toy_templates.csv").is_file());

    let out = hsdetect(&["inspect", "scene/toy.hdr"], root);
    let stdout = assert_success(&out);
    assert!(stdout.contains("40x48x8 bsq float64"), "stdout: {stdout}");

    // Ideal matched filter on the scene's own annotation.
    let out = hsdetect(
        &[
            "detect",
            "--test",
            "scene/toy.hdr",
            "--annotation",
            "scene/toy_mask.csv",
            "--scenario",
            "ideal-mf",
            "--output-dir",
            "runs",
            "--name",
            "toy",
        ],
        root,
    );
    let stdout = assert_success(&out);
    assert!(stdout.contains("AUC_PR="), "stdout: {stdout}");
    assert!(root.join("runs/toy_ideal-mf_scores.hdr").is_file());
    assert!(root.join("runs/toy_ideal-mf_pr.csv").is_file());
    assert!(root.join("runs/toy_ideal-mf_roc.csv").is_file());

    // Two-stage seeded with the distorted template from the library CSV.
    let out = hsdetect(
        &[
            "detect",
            "--test",
            "scene/toy.hdr",
            "--annotation",
            "scene/toy_mask.csv",
            "--scenario",
            "two-stage",
            "--library",
            "scene/toy_templates.csv",
            "--library-index",
            "2",
            "--n-pixels",
            "60",
            "--output-dir",
            "runs",
            "--name",
            "toy",
        ],
        root,
    );
    assert_success(&out);
    assert!(root.join("runs/toy_two-stage_scores.hdr").is_file());

    // Standalone evaluation of the stored score map.
    let out = hsdetect(
        &[
            "evaluate",
            "--scores",
            "runs/toy_two-stage_scores.hdr",
            "--annotation",
            "scene/toy_mask.csv",
            "--output-dir",
            "eval",
            "--name",
            "toy",
        ],
        root,
    );
    let stdout = assert_success(&out);
    assert!(stdout.contains("TP="), "stdout: {stdout}");
    assert!(root.join("eval/toy_metrics.csv").is_file());
    assert!(root.join("eval/toy_detection.png").is_file());

    // Report over both runs produces curves and one comparison map.
    let out = hsdetect(&["report", "--run-dir", "runs"], root);
    assert_success(&out);
    assert!(root.join("runs/toy_ideal-mf_pr.svg").is_file());
    assert!(root.join("runs/toy_two-stage_roc.svg").is_file());
    assert!(root.join("runs/toy_compare.png").is_file());
}

#[test]
fn detect_outputs_are_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_success(&hsdetect(
        &[
            "synth",
            "--lines",
            "32",
            "--samples",
            "32",
            "--bands",
            "6",
            "--target-pixels",
            "50",
            "--seed",
            "3",
            "--output-dir",
            "scene",
            "--name",
            "toy",
        ],
        root,
    ));
    let detect = |out_dir: &str, threads: &str| {
        assert_success(&hsdetect(
            &[
                "detect",
                "--threads",
                threads,
                "--test",
                "scene/toy.hdr",
                "--annotation",
                "scene/toy_mask.csv",
                "--scenario",
                "two-stage",
                "--library",
                "scene/toy_templates.csv",
                "--library-index",
                "2",
                "--n-pixels",
                "25",
                "--output-dir",
                out_dir,
                "--name",
                "toy",
            ],
            root,
        ));
    };
    detect("a", "1");
    detect("b", "4");
    for file in [
        "toy_two-stage_scores.raw",
        "toy_two-stage_pr.csv",
        "toy_two-stage_roc.csv",
    ] {
        let a = std::fs::read(root.join("a").join(file)).unwrap();
        let b = std::fs::read(root.join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs across thread counts");
    }
}

#[test]
fn scenario_config_file_drives_detect() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_success(&hsdetect(
        &[
            "synth",
            "--lines",
            "24",
            "--samples",
            "24",
            "--bands",
            "5",
            "--target-pixels",
            "40",
            "--seed",
            "5",
            "--output-dir",
            "scene",
            "--name",
            "toy",
        ],
        root,
    ));
    std::fs::write(
        root.join("run.cfg"),
        "kind = ideal-mf\ntest = scene/toy.hdr\nannotation = scene/toy_mask.csv\noutput_dir = out\nname = cfgrun\n",
    )
    .unwrap();
    assert_success(&hsdetect(&["detect", "--config", "run.cfg"], root));
    assert!(root.join("out/cfgrun_ideal-mf_scores.hdr").is_file());

    // Flag overrides the config file's scenario.
    assert_success(&hsdetect(
        &[
            "detect",
            "--config",
            "run.cfg",
            "--scenario",
            "ideal-qd",
        ],
        root,
    ));
    assert!(root.join("out/cfgrun_ideal-qd_scores.hdr").is_file());
}

#[test]
fn sweep_commands_emit_tables() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_success(&hsdetect(
        &[
            "synth",
            "--lines",
            "30",
            "--samples",
            "30",
            "--bands",
            "6",
            "--target-pixels",
            "80",
            "--perturbation",
            "0.1",
            "--seed",
            "11",
            "--output-dir",
            "scene",
            "--name",
            "toy",
        ],
        root,
    ));
    let out = hsdetect(
        &[
            "sweep-n",
            "--test",
            "scene/toy.hdr",
            "--annotation",
            "scene/toy_mask.csv",
            "--library",
            "scene/toy_templates.csv",
            "--library-index",
            "2",
            "--n-values",
            "20,40,50%",
            "--output-dir",
            "sweeps",
            "--name",
            "toy",
        ],
        root,
    );
    assert_success(&out);
    let table = std::fs::read_to_string(root.join("sweeps/toy_sweep_n.csv")).unwrap();
    assert!(table.starts_with("n_label,n_pixels,auc_pr\n"));
    assert_eq!(table.lines().count(), 4);

    let out = hsdetect(
        &[
            "sweep-t",
            "--lines",
            "40",
            "--samples",
            "40",
            "--bands",
            "6",
            "--t-values",
            "30,60",
            "--n-rule",
            "50%",
            "--reps",
            "2",
            "--seed",
            "1",
            "--output-dir",
            "sweeps",
            "--name",
            "toy",
        ],
        root,
    );
    assert_success(&out);
    let table = std::fs::read_to_string(root.join("sweeps/toy_sweep_t.csv")).unwrap();
    assert!(table.starts_with("target_pixels,n_pixels,auc_pr_mean,auc_pr_sd\n"));
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn exit_codes_follow_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // Parse/config failures exit 2.
    let out = hsdetect(&["inspect", "missing.hdr"], root);
    assert_eq!(out.status.code(), Some(2));
    let out = hsdetect(&["detect", "--scenario", "ideal-mf"], root);
    assert_eq!(out.status.code(), Some(2));

    assert_success(&hsdetect(
        &[
            "synth",
            "--lines",
            "16",
            "--samples",
            "16",
            "--bands",
            "4",
            "--target-pixels",
            "20",
            "--seed",
            "2",
            "--output-dir",
            "scene",
            "--name",
            "toy",
        ],
        root,
    ));

    // Data failures exit 3: annotation shape differs from the cube.
    std::fs::write(root.join("bad_mask.csv"), "0,1\n1,0\n").unwrap();
    let out = hsdetect(
        &[
            "detect",
            "--test",
            "scene/toy.hdr",
            "--annotation",
            "bad_mask.csv",
            "--scenario",
            "ideal-mf",
            "--output-dir",
            "runs",
        ],
        root,
    );
    assert_eq!(out.status.code(), Some(3));

    // Numeric degeneracy exits 4: averaging every pixel collapses the
    // two-stage template onto the data mean.
    let out = hsdetect(
        &[
            "detect",
            "--test",
            "scene/toy.hdr",
            "--annotation",
            "scene/toy_mask.csv",
            "--scenario",
            "two-stage",
            "--library",
            "scene/toy_templates.csv",
            "--library-index",
            "1",
            "--n-pixels",
            "256",
            "--output-dir",
            "runs",
        ],
        root,
    );
    assert_eq!(out.status.code(), Some(4));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("degenerate"), "stderr: {stderr}");

    // Report on an empty directory exits 3.
    std::fs::create_dir_all(root.join("empty")).unwrap();
    let out = hsdetect(&["report", "--run-dir", "empty"], root);
    assert_eq!(out.status.code(), Some(3));
}
