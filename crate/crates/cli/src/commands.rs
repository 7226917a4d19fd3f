use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use cal_core::benchmark::held_out_config;
use cal_core::data::{
    generate_synthetic, load_dataset, scan_38cloud, write_dataset, Dataset, Split, MANIFEST_FILE,
};
use cal_core::metrics::{eval_csv_row, EVAL_CSV_HEADER};
use cal_core::model::TrainState;
use cal_core::trainer::{
    cal_finetune, evaluate, fresh_state, parse_history_csv, parse_snapshot_csv, relabel_dataset,
    train_baseline, Mode, TrainHistory,
};

use crate::config::RunConfig;
use crate::plot::render_svg;

fn create_out(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    Ok(&cfg.out)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str, flag: &str) -> Result<&'a Path> {
    path.as_deref()
        .with_context(|| format!("no {what} manifest: pass {flag} or set it in the config file"))
}

fn load(path: &Path) -> Result<Dataset> {
    load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn held_out(cfg: &RunConfig) -> Result<Option<Dataset>> {
    cfg.data.test.as_deref().map(load).transpose()
}

fn starting_state(
    cfg: &RunConfig,
    train: &Dataset,
    checkpoint: Option<&Path>,
) -> Result<TrainState> {
    let state = match checkpoint {
        Some(path) => TrainState::load(path, cfg.train.learning_rate)
            .with_context(|| format!("loading checkpoint {}", path.display()))?,
        None => fresh_state(train, cfg.model.window, cfg.train.learning_rate)?,
    };
    if state.model.bands() != train.bands.len() {
        bail!(
            "checkpoint expects {} bands, dataset has {}",
            state.model.bands(),
            train.bands.len()
        );
    }
    Ok(state)
}

/// Writes `<prefix>.ckpt`, `<prefix>_history.csv` and, with a held-out set,
/// `<prefix>_snapshots.csv` and `<prefix>_eval.csv`.
fn write_run(
    cfg: &RunConfig,
    prefix: &str,
    state: &TrainState,
    history: &TrainHistory,
    test: Option<&Dataset>,
) -> Result<()> {
    let out = create_out(cfg)?;
    let ckpt = out.join(format!("{prefix}.ckpt"));
    state.save(&ckpt)?;
    write(
        &out.join(format!("{prefix}_history.csv")),
        history.history_csv(),
    )?;
    println!("checkpoint: {}", ckpt.display());
    println!("steps: {}", history.records.len());
    if let Some(last) = history.epoch_mean_losses().last() {
        println!("final epoch mean loss: {last:.6}");
    }
    if let Some(test) = test {
        write(
            &out.join(format!("{prefix}_snapshots.csv")),
            history.snapshot_csv(),
        )?;
        let (cm, report) = evaluate(test, &state.model, cfg.model.cut)?;
        let csv = format!(
            "{EVAL_CSV_HEADER}\n{}\n",
            eval_csv_row("test", test.len(), &cm, &report)
        );
        write(&out.join(format!("{prefix}_eval.csv")), csv)?;
        println!("test (mIoU P R F1 OA): {}", report.table_row());
    }
    Ok(())
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let train_cfg = cfg.synth_config();
    let train = generate_synthetic(&train_cfg)?;
    let test = generate_synthetic(&held_out_config(&train_cfg, cfg.synth.test_count))?;
    let out = create_out(cfg)?;
    for (name, ds) in [
        ("train", train.noisy_dataset(Split::Train)),
        ("train-clean", train.clean_dataset(Split::Train)),
        ("test", test.clean_dataset(Split::Test)),
    ] {
        let manifest = write_dataset(&ds, &out.join(name))?;
        println!("{name}: {}", manifest.display());
    }
    Ok(())
}

pub fn convert(cfg: &RunConfig, dir: &Path, split: Split, out_given: bool) -> Result<()> {
    let dir = dir
        .canonicalize()
        .with_context(|| format!("cannot open {}", dir.display()))?;
    let mut manifest = scan_38cloud(&dir, split)?;
    let target = if out_given {
        create_out(cfg)?.canonicalize()?
    } else {
        dir.clone()
    };
    manifest.root = if target == dir {
        PathBuf::from(".")
    } else {
        dir
    };
    let path = target.join(MANIFEST_FILE);
    manifest.write(&path)?;
    println!("{} entries: {}", manifest.entries.len(), path.display());
    Ok(())
}

pub fn train(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<()> {
    let train = load(required(&cfg.data.train, "training", "--train")?)?;
    let test = held_out(cfg)?;
    let mut state = starting_state(cfg, &train, checkpoint)?;
    let history = train_baseline(
        &train,
        &mut state,
        &cfg.train_config(Mode::Baseline),
        test.as_ref(),
    )?;
    write_run(cfg, "baseline", &state, &history, test.as_ref())
}

pub fn finetune(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<()> {
    let train = load(required(&cfg.data.train, "training", "--train")?)?;
    let test = held_out(cfg)?;
    if checkpoint.is_none() {
        eprintln!("warning: no --checkpoint given, fine-tuning starts from a fresh model");
    }
    let mut state = starting_state(cfg, &train, checkpoint)?;
    let (history, controller) = cal_finetune(
        &train,
        &mut state,
        &cfg.train_config(Mode::CalFinetune),
        test.as_ref(),
    )?;
    write_run(cfg, "finetune", &state, &history, test.as_ref())?;
    println!("final threshold: {}", controller.current_threshold());
    if history.degenerate_batches > 0 {
        println!(
            "degenerate batches (all clear or all cloud labels): {}",
            history.degenerate_batches
        );
    }
    Ok(())
}

pub fn relabel(cfg: &RunConfig) -> Result<()> {
    let train = load(required(&cfg.data.train, "training", "--train")?)?;
    let tc = cfg.train_config(Mode::RelabelOnly);
    let weights = tc.weights_for(train.bands.len())?;
    let threshold = cfg.controller.initial_threshold;
    let relabeled = relabel_dataset(&train, threshold, &weights, tc.morphology)?;
    let manifest = write_dataset(&relabeled, &create_out(cfg)?.join("relabeled"))?;
    println!("relabeled at threshold {threshold}: {}", manifest.display());
    Ok(())
}

pub fn eval(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<()> {
    let checkpoint = checkpoint.context("eval needs --checkpoint")?;
    let test_path = required(&cfg.data.test, "test", "--test")?;
    let test = load(test_path)?;
    let state = TrainState::load(checkpoint, cfg.train.learning_rate)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let (cm, report) = evaluate(&test, &state.model, cfg.model.cut)?;
    let split = match test.split {
        Split::Train => "train",
        Split::Test => "test",
    };
    let path = create_out(cfg)?.join("eval.csv");
    write(
        &path,
        format!(
            "{EVAL_CSV_HEADER}\n{}\n",
            eval_csv_row(split, test.len(), &cm, &report)
        ),
    )?;
    println!("mIoU P R F1 OA: {}", report.table_row());
    println!("written: {}", path.display());
    Ok(())
}

pub fn plot(history: &Path, snapshots: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let text =
        fs::read_to_string(history).with_context(|| format!("reading {}", history.display()))?;
    let records = parse_history_csv(history, &text)?;
    let snaps = match snapshots {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_snapshot_csv(p, &text)?
        }
        None => Vec::new(),
    };
    let svg =
        render_svg(&records, &snaps).with_context(|| format!("plotting {}", history.display()))?;
    let dir = match out {
        Some(d) => {
            fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
            d.to_path_buf()
        }
        None => history
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .to_path_buf(),
    };
    let stem = history
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("history");
    let path = dir.join(format!("{stem}.svg"));
    write(&path, svg)?;
    println!("{}", path.display());
    Ok(())
}
