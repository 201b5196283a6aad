use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mgmatte::config::quick_config;
use mgmatte::guidance::{binarize, dilate, erode, odd_kernel};
use mgmatte::io::read_matte;
use mgmatte::metrics::{Aggregate, MetricRegion};
use mgmatte::trainer::read_log;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mgmatte"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

fn fixture() -> Fixture {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_path_buf();
    let config = root.join("quick.json");
    std::fs::write(&config, quick_config().to_json().unwrap()).unwrap();
    Fixture {
        _tmp: tmp,
        root,
        config,
    }
}

impl Fixture {
    fn synth(&self, name: &str, seed: &str) -> PathBuf {
        let out = self.root.join(name);
        ok(&[
            "synth",
            "--config",
            p(&self.config),
            "--seed",
            seed,
            "--out",
            p(&out),
            "--validate",
        ]);
        out
    }

    fn train(&self, data: &Path, name: &str) -> PathBuf {
        let out = self.root.join(name);
        ok(&[
            "train",
            "--config",
            p(&self.config),
            "--seed",
            "3",
            "--data",
            p(data),
            "--out",
            p(&out),
        ]);
        out
    }
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v = Vec::new();
    for sub in std::fs::read_dir(dir).unwrap() {
        let path = sub.unwrap().path();
        if path.is_dir() {
            let name = path.file_name().unwrap().to_string_lossy().to_string();
            v.extend(files(&path).into_iter().map(|(n, b)| (format!("{name}/{n}"), b)));
        } else {
            v.push((
                path.file_name().unwrap().to_string_lossy().to_string(),
                std::fs::read(&path).unwrap(),
            ));
        }
    }
    v.sort();
    v
}

#[test]
fn synth_is_deterministic_and_counts_samples() {
    let f = fixture();
    let (a, b) = (f.synth("a", "7"), f.synth("b", "7"));
    assert_eq!(files(&a), files(&b));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["count"], 4);
    assert_eq!(manifest["samples"].as_array().unwrap().len(), 4);
    assert!(a.join("regions/0003_unknown.png").exists());
    assert_ne!(files(&a), files(&f.synth("c", "8")));
}

#[test]
fn train_eval_refine_round_trip() {
    let f = fixture();
    let data = f.synth("data", "7");
    let run_dir = f.train(&data, "run");
    let log = read_log(&run_dir.join("log.jsonl")).unwrap();
    assert_eq!(log.len(), quick_config().train.total_iters);
    let echo: serde_json::Value = serde_json::from_slice(&std::fs::read(run_dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["train"]["seed"], 3);
    let ckpt = run_dir.join("ckpt_000008.bin");

    // ground truth against itself
    let ev = f.root.join("ev_gt");
    ok(&[
        "eval",
        "--data",
        p(&data),
        "--predictions",
        p(&data.join("alpha")),
        "--regions",
        "whole,unknown",
        "--out",
        p(&ev),
    ]);
    let agg: std::collections::BTreeMap<MetricRegion, Aggregate> =
        serde_json::from_slice(&std::fs::read(ev.join("aggregate.json")).unwrap()).unwrap();
    assert_eq!(agg.len(), 2);
    for a in agg.values() {
        assert_eq!((a.sad, a.mse, a.grad, a.conn), (0.0, 0.0, 0.0, 0.0));
    }

    // model predictions: rows = samples x regions, aggregates are row means
    let ev = f.root.join("ev_model");
    ok(&[
        "eval",
        "--config",
        p(&f.config),
        "--data",
        p(&data),
        "--checkpoint",
        p(&ckpt),
        "--regions",
        "whole,unknown",
        "--out",
        p(&ev),
    ]);
    let csv = std::fs::read_to_string(ev.join("metrics.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4 * 2);
    let agg: std::collections::BTreeMap<MetricRegion, Aggregate> =
        serde_json::from_slice(&std::fs::read(ev.join("aggregate.json")).unwrap()).unwrap();
    for (region, a) in &agg {
        let mine: Vec<&Vec<&str>> = rows.iter().filter(|r| r[1] == region.name()).collect();
        let mean = |col: usize| mine.iter().map(|r| r[col].parse::<f64>().unwrap()).sum::<f64>() / mine.len() as f64;
        assert!((mean(3) - a.sad).abs() < 1e-9);
        assert!((mean(4) - a.mse).abs() < 1e-9);
        assert!((mean(5) - a.grad).abs() < 1e-9);
        assert!((mean(6) - a.conn).abs() < 1e-9);
    }

    // refine is byte-stable, single channel, and reports perturbation effects
    let (img, guide) = (data.join("image/0001.png"), data.join("guidance/0001.png"));
    let outs: Vec<PathBuf> = ["r1", "r2"].iter().map(|n| f.root.join(n).join("alpha.png")).collect();
    for o in &outs {
        ok(&[
            "refine",
            "--checkpoint",
            p(&ckpt),
            "--image",
            p(&img),
            "--guidance",
            p(&guide),
            "--mode",
            "binary",
            "--panel",
            "--out",
            p(o),
        ]);
    }
    assert_eq!(std::fs::read(&outs[0]).unwrap(), std::fs::read(&outs[1]).unwrap());
    let decoded = image::open(&outs[0]).unwrap();
    assert_eq!(decoded.color(), image::ColorType::L8);
    let panel = image::open(f.root.join("r1/alpha_panel.png")).unwrap();
    assert_eq!((panel.width(), panel.height()), (4 * decoded.width(), decoded.height()));
    let eroded = f.root.join("r3/alpha.png");
    let gt = data.join("alpha/0001.png");
    let out = ok(&[
        "refine",
        "--checkpoint",
        p(&ckpt),
        "--image",
        p(&img),
        "--guidance",
        p(&guide),
        "--perturb",
        "erode:30",
        "--reference",
        p(&gt),
        "--out",
        p(&eroded),
    ]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    let line = stdout
        .lines()
        .find(|l| l.starts_with("sad vs reference"))
        .expect("reference line");
    let nums: Vec<f64> = line.split_whitespace().filter_map(|t| t.parse().ok()).collect();

    let model =
        mgmatte::prn::PrnModel::from_checkpoint(&mgmatte::checkpoint::Checkpoint::load(&ckpt).unwrap()).unwrap();
    let image = mgmatte::io::read_rgb(&img).unwrap();
    let mask = binarize(&read_matte(&guide).unwrap(), 0.5);
    let gt = read_matte(&gt).unwrap();
    let whole = mgmatte::matte::RegionMask::ones(gt.height(), gt.width());
    let clean = mgmatte::metrics::sad(&model.refine(&image, &mask.to_matte()).unwrap(), &gt, &whole).unwrap();
    let edited = erode(&mask, odd_kernel(30)).unwrap().to_matte();
    let edited = mgmatte::metrics::sad(&model.refine(&image, &edited).unwrap(), &gt, &whole).unwrap();
    assert!(
        (nums[0] - clean).abs() < 1e-6 && (nums[1] - edited).abs() < 1e-6,
        "{line}"
    );
    assert!((nums[2] - (edited - clean).abs() / clean).abs() < 1e-5, "{line}");
    assert!(eroded.exists());
}

#[test]
fn perturb_ops_match_the_library() {
    let f = fixture();
    let data = f.synth("data", "5");
    let alpha_path = data.join("alpha/0000.png");
    let alpha = read_matte(&alpha_path).unwrap();
    let out = |n: &str| f.root.join(n);

    ok(&[
        "perturb",
        p(&alpha_path),
        "binarize:0.5",
        "dilate:15",
        "--out",
        p(&out("bd.png")),
    ]);
    let want = dilate(&binarize(&alpha, 0.5), 15).unwrap();
    assert_eq!(read_matte(&out("bd.png")).unwrap(), want.to_matte());

    ok(&["perturb", p(&out("bd.png")), "dilate:1", "--out", p(&out("id.png"))]);
    assert_eq!(
        std::fs::read(out("bd.png")).unwrap(),
        std::fs::read(out("id.png")).unwrap()
    );

    let mask = binarize(&alpha, 0.5);
    ok(&[
        "perturb",
        p(&alpha_path),
        "binarize:0.5",
        "erode:30",
        "dilate:30",
        "--out",
        p(&out("open.png")),
    ]);
    ok(&[
        "perturb",
        p(&alpha_path),
        "binarize:0.5",
        "dilate:30",
        "erode:30",
        "--out",
        p(&out("close.png")),
    ]);
    let (open, close) = (
        read_matte(&out("open.png")).unwrap(),
        read_matte(&out("close.png")).unwrap(),
    );
    assert!(open.data().iter().zip(close.data()).all(|(a, b)| a <= b));
    let k = odd_kernel(30);
    assert_eq!(open, dilate(&erode(&mask, k).unwrap(), k).unwrap().to_matte());

    ok(&[
        "perturb",
        p(&out("bd.png")),
        "cutmask:0.25:9",
        "--out",
        p(&out("c1.png")),
    ]);
    ok(&[
        "perturb",
        p(&out("bd.png")),
        "cutmask:0.25:9",
        "--out",
        p(&out("c2.png")),
    ]);
    assert_eq!(
        std::fs::read(out("c1.png")).unwrap(),
        std::fs::read(out("c2.png")).unwrap()
    );
}

#[test]
fn exit_codes_and_output_root() {
    let f = fixture();
    let bad = f.root.join("bad.json");
    std::fs::write(&bad, r#"{"train": {"totl_iters": 3}}"#).unwrap();
    assert_eq!(run(&["train", "--config", p(&bad)]).status.code(), Some(2));
    assert_eq!(run(&["perturb", "x.png", "dilate:abc"]).status.code(), Some(2));
    let missing = f.root.join("missing");
    assert_eq!(
        run(&[
            "train",
            "--config",
            p(&f.config),
            "--data",
            p(&missing),
            "--out",
            p(&f.root.join("o"))
        ])
        .status
        .code(),
        Some(3)
    );

    let mut cfg = quick_config();
    cfg.train.loss.term_weights.l1 = f64::MAX;
    let div = f.root.join("div.json");
    std::fs::write(&div, cfg.to_json().unwrap()).unwrap();
    let out = run(&["train", "--config", p(&div), "--out", p(&f.root.join("div_run"))]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));

    let out = bin()
        .args(["synth", "--config", p(&f.config)])
        .env("MGMATTE_OUT", &f.root)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(f.root.join("synth/manifest.json").exists());
}

#[test]
fn workers_do_not_change_training() {
    let f = fixture();
    let data = f.synth("data", "2");
    let runs: Vec<PathBuf> = [("1", "w1"), ("3", "w3")]
        .iter()
        .map(|(w, name)| {
            let out = f.root.join(name);
            ok(&[
                "train",
                "--config",
                p(&f.config),
                "--data",
                p(&data),
                "--workers",
                w,
                "--out",
                p(&out),
            ]);
            out
        })
        .collect();
    let a = std::fs::read(runs[0].join("ckpt_000008.bin")).unwrap();
    let b = std::fs::read(runs[1].join("ckpt_000008.bin")).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        std::fs::read(runs[0].join("log.jsonl")).unwrap(),
        std::fs::read(runs[1].join("log.jsonl")).unwrap()
    );
}
