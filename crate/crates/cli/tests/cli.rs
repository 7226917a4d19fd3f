use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cal"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = cal(args);
    assert!(
        out.status.success(),
        "cal {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    files.sort();
    files
}

fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(
        &path,
        format!(
            "[synth]\ncount = 6\ntest_count = 3\nsize = 20\nsmoothness = 6.0\n\n[train]\nepochs = 1\nbatch_size = 2\n{extra}"
        ),
    )
    .unwrap();
    path
}

fn eval_miou(path: &Path) -> f64 {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "split,patches,tp,fp,fn,tn,miou,precision,recall,f1,oa"
    );
    lines
        .next()
        .unwrap()
        .split(',')
        .nth(6)
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn help_lists_config_keys_with_defaults() {
    let help = ok(&["--help"]);
    for needle in [
        "initial_threshold = 60",
        "delta = 2",
        "lower_bound = 45",
        "update_frequency = 150",
        "learning_rate = 0.001",
        "epochs = 3",
        "intensity_weights",
        "opening_radius = 0",
        "true_threshold = 70",
    ] {
        assert!(help.contains(needle), "missing `{needle}`");
    }
    for sub in [
        "synth", "convert", "train", "finetune", "relabel", "eval", "plot",
    ] {
        assert!(help.contains(sub));
    }
}

#[test]
fn synth_is_reproducible_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    ok(&["synth", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["synth", "--config", s(&cfg), "--out", s(&b)]);
    ok(&["synth", "--config", s(&cfg), "--out", s(&c), "--seed", "9"]);
    let ta = tree(&a);
    assert_eq!(ta, tree(&b));
    assert_ne!(ta, tree(&c));
    for sub in ["train", "train-clean", "test"] {
        assert!(a.join(sub).join("manifest.toml").is_file());
    }
    assert!(a.join("train/synth_0000_mask.pgm").is_file());
    assert!(a.join("test/synth_0002_nir.pgm").is_file());
}

#[test]
fn config_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let low = small_config(dir.path(), "[synth]\n");
    fs::write(&low, "[synth]\ntrue_threshold = 40.0\n").unwrap();
    let out = cal(&[
        "synth",
        "--config",
        s(&low),
        "--out",
        s(&dir.path().join("x")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("configuration error"));

    fs::write(&low, "[controller]\nstep = 2.0\n").unwrap();
    let out = cal(&["synth", "--config", s(&low)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field"));
}

#[test]
fn relabel_at_true_threshold_matches_clean_masks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let data = dir.path().join("data");
    ok(&["synth", "--config", s(&cfg), "--out", s(&data)]);
    let out = dir.path().join("relabel");
    ok(&[
        "relabel",
        "--config",
        s(&cfg),
        "--train",
        s(&data.join("train/manifest.toml")),
        "--threshold",
        "70",
        "--out",
        s(&out),
    ]);
    for i in 0..6 {
        let name = format!("synth_{i:04}_mask.pgm");
        assert_eq!(
            fs::read(out.join("relabeled").join(&name)).unwrap(),
            fs::read(data.join("train-clean").join(&name)).unwrap(),
            "{name}"
        );
    }
    assert_ne!(
        fs::read(data.join("train/synth_0000_mask.pgm")).unwrap(),
        fs::read(data.join("train-clean/synth_0000_mask.pgm")).unwrap()
    );
}

#[test]
fn train_finetune_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "[controller]\nupdate_frequency = 2\n");
    let data = dir.path().join("data");
    ok(&["synth", "--config", s(&cfg), "--out", s(&data)]);
    let train_m = data.join("train/manifest.toml");
    let test_m = data.join("test/manifest.toml");
    let run = dir.path().join("run");
    let common = [
        "--config",
        s(&cfg),
        "--train",
        s(&train_m),
        "--test",
        s(&test_m),
        "--out",
        s(&run),
    ];

    ok(&[&["train"][..], &common].concat());
    for f in [
        "baseline.ckpt",
        "baseline_history.csv",
        "baseline_snapshots.csv",
        "baseline_eval.csv",
    ] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let baseline_ckpt = run.join("baseline.ckpt");
    let stdout = ok(&[
        &["finetune"][..],
        &common,
        &["--checkpoint", s(&baseline_ckpt)],
    ]
    .concat());
    assert!(stdout.contains("final threshold:"));
    let history = fs::read_to_string(run.join("finetune_history.csv")).unwrap();
    assert!(history.starts_with("step,epoch,loss,threshold,best_loss,action\n"));
    assert_eq!(history.lines().count(), 1 + 3);

    ok(&[
        &["eval"][..],
        &common,
        &["--checkpoint", s(&run.join("finetune.ckpt"))],
    ]
    .concat());
    let m = eval_miou(&run.join("eval.csv"));
    assert_eq!(m, eval_miou(&run.join("finetune_eval.csv")));

    // Rerunning the same commands reproduces every artifact byte for byte.
    let first = tree(&run);
    let again = dir.path().join("again");
    let common2 = [
        "--config",
        s(&cfg),
        "--train",
        s(&train_m),
        "--test",
        s(&test_m),
        "--out",
        s(&again),
    ];
    ok(&[&["train"][..], &common2].concat());
    ok(&[
        &["finetune"][..],
        &common2,
        &["--checkpoint", s(&again.join("baseline.ckpt"))],
    ]
    .concat());
    ok(&[
        &["eval"][..],
        &common2,
        &["--checkpoint", s(&again.join("finetune.ckpt"))],
    ]
    .concat());
    assert_eq!(first, tree(&again));
}

#[test]
fn finetune_without_checkpoint_warns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let data = dir.path().join("data");
    ok(&["synth", "--config", s(&cfg), "--out", s(&data)]);
    let out = cal(&[
        "finetune",
        "--config",
        s(&cfg),
        "--train",
        s(&data.join("train/manifest.toml")),
        "--out",
        s(&dir.path().join("run")),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning: no --checkpoint"));
    assert!(dir.path().join("run/finetune.ckpt").is_file());
}

#[test]
fn eval_requires_checkpoint_and_test_set() {
    let dir = tempfile::tempdir().unwrap();
    let out = cal(&["eval", "--out", s(dir.path())]);
    assert!(!out.status.success());
    let missing = dir.path().join("nope.ckpt");
    let out = cal(&[
        "eval",
        "--checkpoint",
        s(&missing),
        "--test",
        s(&dir.path().join("m.toml")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn plot_structure_errors_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let history = dir.path().join("toy_history.csv");
    fs::write(
        &history,
        "step,epoch,loss,threshold,best_loss,action\n\
         1,1,0.700000,60.000000,0.700000,none\n\
         2,1,0.650000,62.000000,0.650000,increase\n\
         3,2,0.660000,60.000000,0.650000,decrease\n",
    )
    .unwrap();
    let printed = ok(&["plot", s(&history)]);
    let svg_path = dir.path().join("toy_history.svg");
    assert_eq!(printed.trim(), s(&svg_path));
    let svg = fs::read_to_string(&svg_path).unwrap();
    assert!(svg.starts_with("<svg"));
    assert_eq!(svg.matches("<polyline").count(), 2);

    let other = dir.path().join("other");
    ok(&["plot", s(&history), "--out", s(&other)]);
    assert_eq!(
        fs::read(other.join("toy_history.svg")).unwrap(),
        svg.as_bytes()
    );

    let snaps = dir.path().join("snaps.csv");
    fs::write(
        &snaps,
        "epoch,miou,precision,recall,f1,oa\n1,0.5,0.6,0.7,0.65,0.8\n2,0.6,0.7,0.7,0.7,0.85\n",
    )
    .unwrap();
    ok(&[
        "plot",
        s(&history),
        "--snapshots",
        s(&snaps),
        "--out",
        s(&other),
    ]);
    assert_eq!(
        fs::read_to_string(other.join("toy_history.svg"))
            .unwrap()
            .matches("<polyline")
            .count(),
        4
    );

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "step,epoch,loss,threshold,best_loss,action\n").unwrap();
    assert!(!cal(&["plot", s(&empty)]).status.success());
    let garbled = dir.path().join("garbled.csv");
    fs::write(&garbled, "step,epoch,loss\n1,1,x\n").unwrap();
    assert!(!cal(&["plot", s(&garbled)]).status.success());
}

#[test]
fn convert_scans_a_38cloud_tree() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("38cloud");
    for band in ["red", "green", "blue", "nir", "gt"] {
        fs::create_dir_all(src.join(format!("train_{band}"))).unwrap();
        for stem in ["patch_1_1_by_1_SC", "patch_2_1_by_2_SC"] {
            let mut bytes = b"P5\n2 2\n255\n".to_vec();
            bytes.extend_from_slice(if band == "gt" {
                &[0, 255, 255, 0]
            } else {
                &[10, 20, 30, 40]
            });
            fs::write(src.join(format!("train_{band}/{band}_{stem}.pgm")), bytes).unwrap();
        }
    }
    let stdout = ok(&["convert", s(&src)]);
    assert!(stdout.starts_with("2 entries"));
    let manifest = fs::read_to_string(src.join("manifest.toml")).unwrap();
    assert!(manifest.contains("root = \".\""));

    // Written elsewhere, the manifest points back at the scanned directory.
    let elsewhere = dir.path().join("m");
    ok(&[
        "convert",
        s(&src),
        "--split",
        "test",
        "--out",
        s(&elsewhere),
    ]);
    let m = elsewhere.join("manifest.toml");
    let text = fs::read_to_string(&m).unwrap();
    assert!(text.contains("split = \"test\""));

    // The converted set is usable for evaluation.
    let run = dir.path().join("run");
    ok(&["train", "--train", s(&m), "--out", s(&run), "--seed", "1"]);
    ok(&[
        "eval",
        "--checkpoint",
        s(&run.join("baseline.ckpt")),
        "--test",
        s(&m),
        "--out",
        s(&run),
    ]);
    assert!(eval_miou(&run.join("eval.csv")) >= 0.0);
}

/// End-to-end version of the synthetic benchmark through the binary: the
/// adaptive fine-tune must beat both the noisy baseline and continued
/// baseline training on held-out mIoU.
#[test]
fn benchmark_improvement_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.toml");
    fs::write(
        &cfg,
        "seed = 3\n[train]\nlearning_rate = 0.01\nbatch_size = 2\n[controller]\nupdate_frequency = 10\n",
    )
    .unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--config", s(&cfg), "--out", s(&data)]);
    let train_m = data.join("train/manifest.toml");
    let test_m = data.join("test/manifest.toml");
    let base = dir.path().join("base");
    let cont = dir.path().join("cont");
    let tuned = dir.path().join("tuned");
    let with = |out: &PathBuf| {
        vec![
            "--config".to_string(),
            s(&cfg).into(),
            "--train".into(),
            s(&train_m).into(),
            "--test".into(),
            s(&test_m).into(),
            "--out".into(),
            s(out).into(),
        ]
    };
    let run = |cmd: &str, out: &PathBuf, extra: &[&str]| {
        let mut args: Vec<String> = vec![cmd.into()];
        args.extend(with(out));
        args.extend(extra.iter().map(|a| a.to_string()));
        ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    };
    run("train", &base, &[]);
    let ckpt = base.join("baseline.ckpt");
    run("train", &cont, &["--checkpoint", s(&ckpt)]);
    run("finetune", &tuned, &["--checkpoint", s(&ckpt)]);
    let b = eval_miou(&base.join("baseline_eval.csv"));
    let c = eval_miou(&cont.join("baseline_eval.csv"));
    let t = eval_miou(&tuned.join("finetune_eval.csv"));
    assert!(t >= b + 5.0, "baseline {b}, fine-tuned {t}");
    assert!(t > c, "continued {c}, fine-tuned {t}");
}
