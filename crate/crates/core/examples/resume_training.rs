//! Interrupts a run, resumes it from the last checkpoint and checks the
//! weights match an uninterrupted run.

use mgmatte::checkpoint::Checkpoint;
use mgmatte::datagen::{synthesize, AugmentConfig, SynthSpec};
use mgmatte::guidance::PerturbConfig;
use mgmatte::prn::PrnConfig;
use mgmatte::trainer::{read_log, train_matte, FixedSamples, RunOptions, TrainConfig};

fn main() -> mgmatte::Result<()> {
    let spec = SynthSpec {
        canvas: (48, 48),
        count: 4,
        ..Default::default()
    };
    let (_, samples) = synthesize(
        &spec,
        &AugmentConfig {
            crop_size: 32,
            ..Default::default()
        },
    )?;
    let source = FixedSamples {
        samples,
        reperturb: Some(PerturbConfig::default()),
    };
    let cfg = TrainConfig {
        total_iters: 12,
        warmup_iters: 2,
        gt_phase_end: 3,
        mixed_phase_end: 6,
        batch_size: 2,
        ..Default::default()
    };
    let root = std::env::temp_dir().join("mgmatte-example-resume");
    let _ = std::fs::remove_dir_all(&root);

    let full = RunOptions {
        out_dir: Some(root.join("full")),
        ..Default::default()
    };
    let (reference, _) = train_matte(&source, &PrnConfig::tiny(), &cfg, &full)?;

    let part = RunOptions {
        out_dir: Some(root.join("part")),
        stop_at: Some(5),
        ..Default::default()
    };
    let (_, interrupted) = train_matte(&source, &PrnConfig::tiny(), &cfg, &part)?;
    let ckpt = interrupted.checkpoints.last().cloned().expect("checkpoint written");
    println!(
        "stopped at {}, next_iter {}",
        ckpt.display(),
        Checkpoint::load(&ckpt)?.meta["next_iter"]
    );

    let resumed = RunOptions {
        out_dir: Some(root.join("part")),
        resume: Some(ckpt),
        ..Default::default()
    };
    let (model, _) = train_matte(&source, &PrnConfig::tiny(), &cfg, &resumed)?;
    println!("weights identical: {}", model.params() == reference.params());
    println!(
        "logs identical: {}",
        read_log(&root.join("full/log.jsonl"))? == read_log(&root.join("part/log.jsonl"))?
    );
    Ok(())
}
