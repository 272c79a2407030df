//! Parameter scan for the sweep-direction scene. Not shipped.

use hsdetect_core::spectrum::Spectrum;
use hsdetect_core::synth::{
    default_background_mean, default_target_mean, default_wavelengths, sweep_target_size,
    BackgroundComponent, NRule, SceneSpec,
};

fn scene(bg_scale: f64, target_scale: f64, perturbation: f64, conf_w: f64, blend: f64) -> SceneSpec {
    let bands = 16;
    let wl = default_wavelengths(bands);
    let m0 = default_background_mean(0, bands);
    let m1 = default_background_mean(1, bands);
    let t = default_target_mean(bands);
    let confuser_mean: Vec<f64> = m0
        .iter()
        .zip(&t)
        .map(|(b, tv)| b * (1.0 - blend) + tv * blend)
        .collect();
    let background = vec![
        BackgroundComponent {
            weight: 0.6 - conf_w,
            mean: Spectrum::new(m0, wl.clone()).unwrap(),
            scale: bg_scale,
        },
        BackgroundComponent {
            weight: 0.4,
            mean: Spectrum::new(m1, wl.clone()).unwrap(),
            scale: bg_scale,
        },
        BackgroundComponent {
            weight: conf_w,
            mean: Spectrum::new(confuser_mean, wl.clone()).unwrap(),
            scale: bg_scale,
        },
    ];
    SceneSpec {
        lines: 200,
        samples: 200,
        bands,
        background,
        target_mean: Spectrum::new(t, wl).unwrap(),
        target_scale,
        target_pixels: 0,
        mixing_alpha: 1.0,
        template_perturbation: perturbation,
        seed: 0,
    }
}

fn main() {
    let t_values = [200usize, 1000, 5000, 20000];
    for bg_scale in [0.04, 0.05, 0.06] {
        for target_scale in [0.3, 0.4, 0.5] {
            for perturbation in [0.1, 0.15, 0.2] {
                for conf_w in [0.05, 0.08] {
                    for blend in [0.5, 0.6] {
                        let spec = scene(bg_scale, target_scale, perturbation, conf_w, blend);
                        let constant =
                            sweep_target_size(&spec, &t_values, NRule::Constant(1000), 5).unwrap();
                        let percent =
                            sweep_target_size(&spec, &t_values, NRule::PercentOfTarget(50.0), 5)
                                .unwrap();
                        let ca: Vec<f64> = constant.iter().map(|r| r.auc_pr_mean).collect();
                        let pa: Vec<f64> = percent.iter().map(|r| r.auc_pr_mean).collect();
                        let min_idx = ca
                            .iter()
                            .enumerate()
                            .min_by(|(_, a), (_, b)| a.total_cmp(b))
                            .map(|(i, _)| i)
                            .unwrap();
                        let dip = min_idx > 0
                            && min_idx + 1 < ca.len()
                            && ca[0] > ca[min_idx]
                            && ca[ca.len() - 1] > ca[min_idx];
                        let mono = pa.windows(2).all(|w| w[1] >= w[0]);
                        // margins: dip depth and worst percent step
                        let dip_margin = (ca[0] - ca[min_idx]).min(ca[ca.len() - 1] - ca[min_idx]);
                        let worst_step = pa
                            .windows(2)
                            .map(|w| w[1] - w[0])
                            .fold(f64::INFINITY, f64::min);
                        println!(
                            "bg={bg_scale} ts={target_scale} eps={perturbation} w={conf_w} bl={blend} | const {ca:.3?} dip={dip} ({dip_margin:+.3}) | pct {pa:.3?} mono={mono} ({worst_step:+.3}) {}",
                            if dip && mono { "<<< PASS" } else { "" }
                        );
                    }
                }
            }
        }
    }
}
