//! Trains a narrow matting network for a few hundred iterations on
//! synthetic data, then refines the same image from several kinds of
//! guidance and prints the whole-image error of each.

use mgmatte::datagen::{build_pools, AugmentConfig, BackgroundSource, SynthSpec};
use mgmatte::guidance::{binarize, dilate, encode_guidance, erode, trimap_from_prob, GuidanceMode, GuidanceSource};
use mgmatte::matte::RegionMask;
use mgmatte::metrics::sad;
use mgmatte::prn::PrnConfig;
use mgmatte::trainer::{train_matte, RunOptions, SyntheticStream, TrainConfig};

fn main() -> mgmatte::Result<()> {
    let spec = SynthSpec {
        canvas: (64, 64),
        rng_seed: 5,
        ..Default::default()
    };
    let augment = AugmentConfig {
        crop_size: 32,
        ..Default::default()
    };
    let pools = build_pools(&spec, &BackgroundSource::Procedural)?;
    let source = SyntheticStream {
        foregrounds: pools.foregrounds,
        backgrounds: pools.backgrounds,
        augment,
    };
    let cfg = TrainConfig {
        total_iters: 300,
        warmup_iters: 15,
        gt_phase_end: 30,
        mixed_phase_end: 90,
        batch_size: 2,
        ..Default::default()
    };
    let (model, outcome) = train_matte(&source, &PrnConfig::tiny(), &cfg, &RunOptions::default())?;
    for window in outcome.log.chunks(50) {
        let mean = window.iter().map(|e| e.loss_total).sum::<f64>() / window.len() as f64;
        println!(
            "iters {:>3}..{:<3}  lr {:.2e}  mean loss {mean:.3}",
            window[0].iter,
            window[0].iter + window.len(),
            window[0].lr
        );
    }

    let mut rng = mgmatte::datagen::stream_rng(99, 0);
    let pools = build_pools(
        &SynthSpec {
            rng_seed: 77,
            canvas: (64, 64),
            ..spec
        },
        &BackgroundSource::Procedural,
    )?;
    let test = mgmatte::datagen::make_training_sample(
        &pools.foregrounds,
        &pools.backgrounds,
        &AugmentConfig::identity(32),
        &mut rng,
    )?;
    let whole = RegionMask::ones(32, 32);
    let mask = binarize(&test.alpha, 0.5);
    let trimap = trimap_from_prob(&test.alpha, 0.95, 0.05, 2)?;
    let guides = [
        ("binary", mask.to_matte()),
        ("binary, dilated 9", dilate(&mask, 9)?.to_matte()),
        ("binary, eroded 9", erode(&mask, 9)?.to_matte()),
        (
            "trimap",
            encode_guidance(GuidanceSource::Trimap(&trimap), GuidanceMode::TrimapSoft)?,
        ),
        ("soft matte", test.alpha.clone()),
    ];
    for (name, g) in guides {
        let pred = model.refine(&test.image, &g)?;
        println!("{name:<18} SAD {:.4}", sad(&pred, &test.alpha, &whole)?);
    }
    Ok(())
}
