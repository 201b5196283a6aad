//! Random Alpha Blending: trains the foreground colour network on
//! composites of unrelated foreground, alpha and background, and compares
//! full-image supervision with supervision restricted to alpha > 0.

use mgmatte::datagen::{build_pools, make_rab_sample, stream_rng, BackgroundSource, SynthSpec};
use mgmatte::matte::MattingSample;
use mgmatte::prn::{predict_foreground, ColorNetConfig};
use mgmatte::trainer::{train_color, ColorSupervision, FixedSamples, RunOptions, TrainConfig};

fn main() -> mgmatte::Result<()> {
    let spec = SynthSpec {
        canvas: (32, 32),
        foreground_count: 3,
        background_count: 3,
        rng_seed: 8,
        ..Default::default()
    };
    let pools = build_pools(&spec, &BackgroundSource::Procedural)?;
    let samples: Vec<MattingSample> = (0..3)
        .map(|i| {
            Ok(make_rab_sample(
                &pools.colors(),
                &pools.alphas(),
                &pools.backgrounds,
                &mut stream_rng(8, i),
            )?
            .sample)
        })
        .collect::<mgmatte::Result<_>>()?;
    let source = FixedSamples {
        samples: samples.clone(),
        reperturb: None,
    };
    let cfg = TrainConfig {
        total_iters: 150,
        warmup_iters: 10,
        gt_phase_end: 0,
        mixed_phase_end: 0,
        batch_size: 3,
        ..Default::default()
    };

    for mode in [ColorSupervision::Full, ColorSupervision::ForegroundOnly] {
        let (net, log) = train_color(&source, &ColorNetConfig::tiny(), &cfg, mode, &RunOptions::default())?;
        let mut err = 0.0;
        for s in &samples {
            let f = predict_foreground(&s.image, &s.alpha, &net)?;
            err += f.mean_abs_diff(&s.foreground)? / samples.len() as f64;
        }
        let last = log.log.last().map_or(f64::NAN, |e| e.loss_total);
        println!("{mode:?}: final loss {last:.4}, foreground MAE {err:.4}");
    }
    Ok(())
}
