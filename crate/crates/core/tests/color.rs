use mgmatte::datagen::{build_pools, make_rab_sample, stream_rng, BackgroundSource, SynthSpec};
use mgmatte::matte::composite;
use mgmatte::prn::{predict_foreground, ColorNetConfig};
use mgmatte::trainer::{train_color, ColorSupervision, FixedSamples, RunOptions, TrainConfig};

#[test]
fn fit_on_one_rab_sample_recomposes_the_image() {
    let spec = SynthSpec {
        canvas: (32, 32),
        foreground_count: 2,
        background_count: 2,
        rng_seed: 11,
        ..Default::default()
    };
    let pools = build_pools(&spec, &BackgroundSource::Procedural).unwrap();
    let s = make_rab_sample(
        &pools.colors(),
        &pools.alphas(),
        &pools.backgrounds,
        &mut stream_rng(11, 0),
    )
    .unwrap()
    .sample;
    let cfg = TrainConfig {
        total_iters: 300,
        warmup_iters: 15,
        gt_phase_end: 0,
        mixed_phase_end: 0,
        batch_size: 1,
        peak_lr: 2e-3,
        ..Default::default()
    };
    let source = FixedSamples {
        samples: vec![s.clone()],
        reperturb: None,
    };
    let (net, _) = train_color(
        &source,
        &ColorNetConfig::tiny(),
        &cfg,
        ColorSupervision::Full,
        &RunOptions::default(),
    )
    .unwrap();
    let f = predict_foreground(&s.image, &s.alpha, &net).unwrap();
    assert!(f.data().iter().all(|v| (0.0..=1.0).contains(v)));
    let recomposed = composite(&s.alpha, &f, &s.background).unwrap();
    let err = recomposed.mean_abs_diff(&s.image).unwrap();
    assert!(err < 0.02, "recomposition error {err}");
}
