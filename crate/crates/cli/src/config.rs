//! Run configuration file.
//!
//! TOML, every key optional. Relative paths inside the file are resolved
//! against the file's own directory. Command-line flags override file values,
//! which override the defaults below.

use std::fmt::Write;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use cal_core::benchmark::DEFAULT_TEST_COUNT;
use cal_core::controller::ControllerConfig;
use cal_core::data::SynthConfig;
use cal_core::model::{DEFAULT_LEARNING_RATE, DEFAULT_WINDOW};
use cal_core::morphology::MorphRadii;
use cal_core::trainer::{Mode, TrainConfig, DEFAULT_BATCH_SIZE, DEFAULT_CUT, DEFAULT_EPOCHS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub controller: ControllerConfig,
    pub labels: LabelSection,
    pub synth: SynthSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub window: usize,
    pub cut: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelSection {
    pub intensity_weights: Option<Vec<f64>>,
    pub opening_radius: usize,
    pub closing_radius: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub count: usize,
    pub test_count: usize,
    pub size: usize,
    pub true_threshold: f64,
    pub smoothness: f64,
    pub flip_fraction: f64,
    pub dilation_radius: usize,
    pub bands: usize,
    pub band_jitter: f64,
    pub contrast: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("cal-out"),
            data: DataSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            controller: ControllerConfig::default(),
            labels: LabelSection::default(),
            synth: SynthSection::default(),
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            cut: DEFAULT_CUT,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        Self {
            count: s.count,
            test_count: DEFAULT_TEST_COUNT,
            size: s.size,
            true_threshold: s.true_threshold,
            smoothness: s.smoothness,
            flip_fraction: s.flip_fraction,
            dilation_radius: s.dilation_radius,
            bands: s.bands,
            band_jitter: s.band_jitter,
            contrast: s.contrast,
        }
    }
}

/// Values given on the command line; `None` leaves the file/default value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text)?;
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.out);
        if let Some(p) = cfg.data.train.as_mut() {
            rebase(p);
        }
        if let Some(p) = cfg.data.test.as_mut() {
            rebase(p);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
            .with_context(|| format!("configuration error in {}", path.display()))
    }

    /// Defaults, then `path` if given, then `flags`.
    pub fn resolve(path: Option<&Path>, flags: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(seed) = flags.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &flags.out {
            cfg.out = out.clone();
        }
        if let Some(t) = flags.threshold {
            cfg.controller.initial_threshold = t;
        }
        if let Some(p) = &flags.train {
            cfg.data.train = Some(p.clone());
        }
        if let Some(p) = &flags.test {
            cfg.data.test = Some(p.clone());
        }
        Ok(cfg)
    }

    pub fn train_config(&self, mode: Mode) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            seed: self.seed,
            controller: self.controller,
            mode,
            intensity_weights: self.labels.intensity_weights.clone(),
            morphology: MorphRadii::new(self.labels.opening_radius, self.labels.closing_radius),
            cut: self.model.cut,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        let s = &self.synth;
        SynthConfig {
            seed: self.seed,
            count: s.count,
            size: s.size,
            true_threshold: s.true_threshold,
            smoothness: s.smoothness,
            flip_fraction: s.flip_fraction,
            dilation_radius: s.dilation_radius,
            bands: s.bands,
            band_jitter: s.band_jitter,
            contrast: s.contrast,
        }
    }
}

/// Every configuration key with its default value, for `--help`.
pub fn reference() -> String {
    let d = RunConfig::default();
    let c = &d.controller;
    let s = &d.synth;
    let mut out = String::from(
        "CONFIGURATION FILE (--config, TOML; every key optional; flags > file > defaults)\n\n",
    );
    let mut line = |key: &str, value: String, note: &str| {
        let lhs = format!("  {key} = {value}");
        if note.is_empty() {
            writeln!(out, "{lhs}").unwrap();
        } else {
            writeln!(out, "{lhs:<44} # {note}").unwrap();
        }
    };
    line(
        "seed",
        d.seed.to_string(),
        "--seed; shuffling and synthesis",
    );
    line(
        "out",
        format!("{:?}", d.out.display().to_string()),
        "--out; output directory",
    );
    line(
        "[data] train",
        "<unset>".into(),
        "--train; training manifest",
    );
    line(
        "[data] test",
        "<unset>".into(),
        "--test; held-out manifest with masks",
    );
    line(
        "[model] window",
        d.model.window.to_string(),
        "odd square window side",
    );
    line(
        "[model] cut",
        d.model.cut.to_string(),
        "probability cut for predicted masks",
    );
    line(
        "[train] learning_rate",
        d.train.learning_rate.to_string(),
        "Adam step size",
    );
    line("[train] epochs", d.train.epochs.to_string(), "");
    line("[train] batch_size", d.train.batch_size.to_string(), "");
    line(
        "[controller] initial_threshold",
        c.initial_threshold.to_string(),
        "--threshold",
    );
    line("[controller] delta", c.delta.to_string(), "");
    line("[controller] lower_bound", c.lower_bound.to_string(), "");
    line("[controller] upper_bound", c.upper_bound.to_string(), "");
    line(
        "[controller] update_frequency",
        c.update_frequency.to_string(),
        "batches between updates",
    );
    line(
        "[labels] intensity_weights",
        "<uniform mean>".into(),
        "one weight per band, sum 1",
    );
    line(
        "[labels] opening_radius",
        d.labels.opening_radius.to_string(),
        "",
    );
    line(
        "[labels] closing_radius",
        d.labels.closing_radius.to_string(),
        "",
    );
    line("[synth] count", s.count.to_string(), "training patches");
    line(
        "[synth] test_count",
        s.test_count.to_string(),
        "held-out patches",
    );
    line("[synth] size", s.size.to_string(), "patch side in pixels");
    line(
        "[synth] true_threshold",
        s.true_threshold.to_string(),
        "intensity defining clean masks",
    );
    line(
        "[synth] smoothness",
        s.smoothness.to_string(),
        "value-noise lattice spacing",
    );
    line(
        "[synth] flip_fraction",
        s.flip_fraction.to_string(),
        "labels flipped per patch",
    );
    line(
        "[synth] dilation_radius",
        s.dilation_radius.to_string(),
        "dilation after flipping",
    );
    line("[synth] bands", s.bands.to_string(), "");
    line(
        "[synth] band_jitter",
        s.band_jitter.to_string(),
        "per-band noise half-width",
    );
    line(
        "[synth] contrast",
        s.contrast.to_string(),
        "tone-curve gain, 0 = linear",
    );
    out
}
