use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mgmatte::commands::{self, PerturbOp, Predictor, RefineOptions};
use mgmatte::config::{DataSource, RunConfig, TrainTarget};
use mgmatte::guidance::GuidanceMode;
use mgmatte::metrics::MetricRegion;
use mgmatte::{MatteError, Result};

/// Environment variable naming the default output root.
const OUT_ENV: &str = "MGMATTE_OUT";

#[derive(Parser)]
#[command(name = "mgmatte", version, about = "Mask-guided alpha matting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output location; defaults to `$MGMATTE_OUT/<command>` or `./mgmatte-out/<command>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Re-read the written samples and check the compositing invariant.
        #[arg(long)]
        validate: bool,
    },
    /// Train the matting or colour network.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory, or `synthetic`.
        #[arg(long)]
        data: Option<String>,
        #[arg(long, value_parser = parse_target)]
        target: Option<TrainTarget>,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score predictions on a dataset; writes metrics.csv and aggregate.json.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, required_unless_present = "predictions")]
        checkpoint: Option<PathBuf>,
        /// Directory of NNNN.png mattes to score instead of a checkpoint.
        #[arg(long, conflicts_with = "checkpoint")]
        predictions: Option<PathBuf>,
        /// Comma-separated subset of unknown, whole, detail.
        #[arg(long, value_delimiter = ',')]
        regions: Option<Vec<MetricRegion>>,
    },
    /// Refine one image with a guidance mask; `--out` is the alpha PNG path.
    Refine {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        guidance: PathBuf,
        /// binary, trimap_soft, trimapfg or soft_matte.
        #[arg(long)]
        mode: Option<GuidanceMode>,
        #[arg(long)]
        panel: bool,
        /// Guidance edits applied before refinement, e.g. `erode:30`.
        #[arg(long, num_args = 1..)]
        perturb: Vec<PerturbOp>,
        #[arg(long)]
        color_checkpoint: Option<PathBuf>,
        /// Ground-truth matte for scoring `--perturb` against unedited guidance.
        #[arg(long, requires = "perturb")]
        reference: Option<PathBuf>,
    },
    /// Apply guidance edits such as `binarize:0.5 dilate:15 cutmask:0.25:7`.
    Perturb {
        #[command(flatten)]
        common: Common,
        input: PathBuf,
        #[arg(required = true)]
        ops: Vec<PerturbOp>,
    },
}

fn parse_target(s: &str) -> std::result::Result<TrainTarget, String> {
    match s {
        "matte" => Ok(TrainTarget::Matte),
        "color" => Ok(TrainTarget::Color),
        _ => Err(format!("unknown target `{s}` (matte or color)")),
    }
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    if common.workers.is_some() {
        cfg.workers = common.workers;
    }
    Ok(cfg)
}

fn out_path(common: &Common, command: &str, file: Option<&str>) -> PathBuf {
    common.out.clone().unwrap_or_else(|| {
        let root = std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("mgmatte-out"));
        let dir = root.join(command);
        file.map(|f| dir.join(f)).unwrap_or(dir)
    })
}

fn write_resolved(cfg: &RunConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.json"), cfg.to_json()?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, validate } => {
            let cfg = resolve(&common)?;
            let out = out_path(&common, "synth", None);
            let m = commands::cmd_synth(&cfg, &out, validate)?;
            println!("wrote {} samples to {}", m.count, out.display());
        }
        Command::Train {
            common,
            data,
            target,
            resume,
        } => {
            let mut cfg = resolve(&common)?;
            match data.as_deref() {
                Some("synthetic") => cfg.data.source = DataSource::Synthetic,
                Some(dir) => cfg.data.source = DataSource::Directory(dir.into()),
                None => {}
            }
            if let Some(t) = target {
                cfg.target = t;
            }
            cfg.validate()?;
            let out = out_path(&common, "train", None);
            let outcome = commands::cmd_train(&cfg, &out, resume.as_deref())?;
            if let Some(last) = outcome.log.last() {
                println!("iter {} loss {:.6}", last.iter, last.loss_total);
            }
            for c in &outcome.checkpoints {
                println!("checkpoint {}", c.display());
            }
        }
        Command::Eval {
            common,
            data,
            checkpoint,
            predictions,
            regions,
        } => {
            let mut cfg = resolve(&common)?;
            if let Some(r) = regions {
                cfg.eval.regions = r;
            }
            let predictor = match (checkpoint, predictions) {
                (Some(c), _) => Predictor::Checkpoint(c),
                (None, Some(p)) => Predictor::Directory(p),
                (None, None) => return Err(MatteError::Config("need --checkpoint or --predictions".into())),
            };
            let out = out_path(&common, "eval", None);
            write_resolved(&cfg, &out)?;
            let rows = commands::cmd_eval(&cfg, &predictor, &data, &out)?;
            for (region, a) in mgmatte::metrics::aggregate(&rows) {
                println!(
                    "{region}: n={} sad={:.4} mse={:.4} grad={:.4} conn={:.4}",
                    a.samples, a.sad, a.mse, a.grad, a.conn
                );
            }
        }
        Command::Refine {
            common,
            checkpoint,
            image,
            guidance,
            mode,
            panel,
            perturb,
            color_checkpoint,
            reference,
        } => {
            let mut cfg = resolve(&common)?;
            if let Some(m) = mode {
                cfg.refine.mode = m;
            }
            let out = out_path(&common, "refine", Some("alpha.png"));
            let opts = RefineOptions {
                perturb,
                panel,
                color_checkpoint,
                reference,
            };
            let res = commands::cmd_refine(&cfg, &checkpoint, &image, &guidance, &out, &opts)?;
            for p in &res.written {
                println!("wrote {}", p.display());
            }
            if let Some(effect) = &res.perturb_effect {
                println!(
                    "sad between edited and unedited guidance outputs: {:.6}",
                    effect.sad_between
                );
                if let Some(r) = effect.reference {
                    println!(
                        "sad vs reference: unedited {:.6} edited {:.6} relative change {:.6}",
                        r.clean,
                        r.perturbed,
                        r.relative_change()
                    );
                }
            }
        }
        Command::Perturb { common, input, ops } => {
            let out = out_path(&common, "perturb", Some("mask.png"));
            if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            commands::cmd_perturb(&input, &ops, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
