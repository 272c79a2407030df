//! Scratch harness. Not shipped.
use hsdetect_core::spectrum::Spectrum;
use hsdetect_core::synth::*;

fn confuser_scene(lines: usize, samples: usize, bg: f64, ts: f64, eps: f64, w: f64, blend: f64, seed: u64) -> SceneSpec {
    let bands = 16;
    let wl = default_wavelengths(bands);
    let m0 = default_background_mean(0, bands);
    let m1 = default_background_mean(1, bands);
    let t = default_target_mean(bands);
    let confuser_mean: Vec<f64> = m0.iter().zip(&t).map(|(b, tv)| b * (1.0 - blend) + tv * blend).collect();
    SceneSpec {
        lines, samples, bands,
        background: vec![
            BackgroundComponent { weight: 0.6 - w, mean: Spectrum::new(m0, wl.clone()).unwrap(), scale: bg },
            BackgroundComponent { weight: 0.4, mean: Spectrum::new(m1, wl.clone()).unwrap(), scale: bg },
            BackgroundComponent { weight: w, mean: Spectrum::new(confuser_mean, wl.clone()).unwrap(), scale: bg },
        ],
        target_mean: Spectrum::new(t, wl).unwrap(),
        target_scale: ts,
        target_pixels: 0,
        mixing_alpha: 1.0,
        template_perturbation: eps,
        seed,
    }
}

fn main() {
    // T < N for the constant rule: dilution with confuser pixels should put
    // constant below percent at the same T.
    for ts in [0.04f64, 0.1] {
        for eps in [0.1f64, 0.15] {
            let spec = confuser_scene(60, 60, 0.04, ts, eps, 0.08, 0.6, 0);
            let t_values = [60usize];
            let constant = sweep_target_size(&spec, &t_values, NRule::Constant(600), 5).unwrap();
            let percent = sweep_target_size(&spec, &t_values, NRule::PercentOfTarget(50.0), 5).unwrap();
            println!(
                "ts={ts} eps={eps}: const(N=600) {:.4} vs pct(N=30) {:.4}  below={}",
                constant[0].auc_pr_mean,
                percent[0].auc_pr_mean,
                constant[0].auc_pr_mean < percent[0].auc_pr_mean
            );
        }
    }
}
