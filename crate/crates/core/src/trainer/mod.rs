//! Training regimes: baseline on stored labels, adaptive-label fine-tuning,
//! post-hoc relabeling, and evaluation.
//!
//! Every batch is reduced in ascending dataset-index order, so results do not
//! depend on how the shuffle happened to order samples inside a batch.

mod history;

pub use history::{
    parse_history_csv, parse_snapshot_csv, EpochSnapshot, StepRecord, TrainHistory,
    HISTORY_CSV_HEADER, SNAPSHOT_CSV_HEADER,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{ControllerConfig, ThresholdController};
use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::metrics::{ConfusionMatrix, MetricsReport};
use crate::model::{patch_sums, predict_mask, Gradient, SegModel, TrainState};
use crate::morphology::{morph_clean, MorphRadii};
use crate::raster::{
    binarize, to_intensity, uniform_weights, validate_weights, Mask, INTENSITY_MAX,
};

pub const DEFAULT_EPOCHS: usize = 3;
pub const DEFAULT_BATCH_SIZE: usize = 4;
pub const DEFAULT_CUT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Baseline,
    CalFinetune,
    RelabelOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub controller: ControllerConfig,
    pub mode: Mode,
    /// Band mix for the intensity map; `None` means the uniform mean.
    pub intensity_weights: Option<Vec<f64>>,
    pub morphology: MorphRadii,
    /// Probability cut used for evaluation snapshots.
    pub cut: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: crate::model::DEFAULT_LEARNING_RATE,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            seed: 0,
            controller: ControllerConfig::default(),
            mode: Mode::Baseline,
            intensity_weights: None,
            morphology: MorphRadii::default(),
            cut: DEFAULT_CUT,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "invalid learning rate {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.cut) {
            return Err(Error::Config(format!(
                "prediction cut {} outside [0, 1)",
                self.cut
            )));
        }
        self.controller.validate()
    }

    /// Resolves the band mix for a dataset with `bands` bands.
    pub fn weights_for(&self, bands: usize) -> Result<Vec<f64>> {
        let weights = match &self.intensity_weights {
            Some(w) => w.clone(),
            None => uniform_weights(bands),
        };
        validate_weights(&weights, bands)?;
        Ok(weights)
    }
}

/// Batches for one epoch: a seeded permutation split into chunks, each chunk
/// sorted ascending. Pure in `(len, batch_size, seed, epoch)`.
pub fn batch_order(len: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng);
    order
        .chunks(batch_size.max(1))
        .map(|c| {
            let mut c = c.to_vec();
            c.sort_unstable();
            c
        })
        .collect()
}

/// A zero-initialized model whose feature normalization is fitted on `train`.
pub fn fresh_state(train: &Dataset, window: usize, learning_rate: f64) -> Result<TrainState> {
    let bands = train.bands.len();
    let mut model = SegModel::zeros(window, bands)?;
    model.fit_normalization(train.patches())?;
    Ok(TrainState::new(model, learning_rate))
}

struct BatchStep {
    loss: f64,
    grad: Gradient,
}

fn batch_step<'a>(
    model: &SegModel,
    items: impl Iterator<Item = (&'a Sample, std::borrow::Cow<'a, Mask>)>,
) -> Result<BatchStep> {
    let mut loss = 0.0;
    let mut grad = Gradient::zeros(model.feature_count());
    let mut pixels = 0usize;
    for (sample, labels) in items {
        let sums = patch_sums(model, &sample.patch, &labels).map_err(|e| Error::Load {
            entry: sample.id.clone(),
            reason: e.to_string(),
        })?;
        loss += sums.loss;
        for (g, s) in grad.weights.iter_mut().zip(&sums.grad.weights) {
            *g += s;
        }
        grad.bias += sums.grad.bias;
        pixels += sums.pixels;
    }
    let n = pixels as f64;
    grad.weights.iter_mut().for_each(|g| *g /= n);
    grad.bias /= n;
    Ok(BatchStep {
        loss: loss / n,
        grad,
    })
}

fn check_trainable(dataset: &Dataset, config: &TrainConfig) -> Result<()> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    Ok(())
}

fn snapshot(
    history: &mut TrainHistory,
    held_out: Option<&Dataset>,
    model: &SegModel,
    epoch: usize,
    cut: f64,
) -> Result<()> {
    if let Some(ds) = held_out {
        let (_, report) = evaluate(ds, model, cut)?;
        history.snapshots.push(EpochSnapshot { epoch, report });
    }
    Ok(())
}

/// Trains against the dataset's stored masks. `held_out`, when given, is
/// evaluated after every epoch.
pub fn train_baseline(
    dataset: &Dataset,
    state: &mut TrainState,
    config: &TrainConfig,
    held_out: Option<&Dataset>,
) -> Result<TrainHistory> {
    check_trainable(dataset, config)?;
    if let Some(id) = dataset.first_unlabeled() {
        return Err(Error::Config(format!(
            "baseline training needs masks, entry `{id}` has none"
        )));
    }
    state.optimizer.learning_rate = config.learning_rate;
    let mut history = TrainHistory::default();
    let mut step = 0u64;
    for epoch in 1..=config.epochs {
        for batch in batch_order(dataset.len(), config.batch_size, config.seed, epoch) {
            let items = batch.iter().map(|&i| {
                let s = &dataset.samples[i];
                (
                    s,
                    std::borrow::Cow::Borrowed(s.mask.as_ref().expect("checked above")),
                )
            });
            let out = batch_step(&state.model, items)?;
            state.optimizer.step(&mut state.model, &out.grad)?;
            step += 1;
            history.records.push(StepRecord {
                step,
                epoch,
                loss: out.loss,
                threshold: None,
                best_loss: None,
                action: None,
            });
        }
        snapshot(&mut history, held_out, &state.model, epoch, config.cut)?;
    }
    Ok(history)
}

/// Regenerates labels for one patch from its own intensities.
pub fn adaptive_mask(
    sample: &Sample,
    threshold: f64,
    weights: &[f64],
    radii: MorphRadii,
) -> Result<Mask> {
    let mask = binarize(&to_intensity(&sample.patch, weights)?, threshold)?;
    Ok(if radii.is_identity() {
        mask
    } else {
        morph_clean(&mask, radii.opening, radii.closing)
    })
}

/// Fine-tunes on labels regenerated every batch by thresholding the input at
/// the controller's current value. Stored masks are never read. Returns the
/// history and the controller in its final state.
pub fn cal_finetune(
    dataset: &Dataset,
    state: &mut TrainState,
    config: &TrainConfig,
    held_out: Option<&Dataset>,
) -> Result<(TrainHistory, ThresholdController)> {
    check_trainable(dataset, config)?;
    let weights = config.weights_for(dataset.bands.len())?;
    let mut controller = ThresholdController::new(config.controller)?;
    state.optimizer.learning_rate = config.learning_rate;
    let mut history = TrainHistory::default();
    let mut step = 0u64;
    for epoch in 1..=config.epochs {
        for batch in batch_order(dataset.len(), config.batch_size, config.seed, epoch) {
            let threshold = controller.current_threshold();
            let mut labels = Vec::with_capacity(batch.len());
            for &i in &batch {
                labels.push(adaptive_mask(
                    &dataset.samples[i],
                    threshold,
                    &weights,
                    config.morphology,
                )?);
            }
            let positives: usize = labels.iter().map(Mask::count_positive).sum();
            let pixels: usize = labels.iter().map(Mask::len).sum();
            if positives == 0 || positives == pixels {
                history.degenerate_batches += 1;
            }
            let items = batch
                .iter()
                .zip(labels)
                .map(|(&i, m)| (&dataset.samples[i], std::borrow::Cow::Owned(m)));
            let out = batch_step(&state.model, items)?;
            state.optimizer.step(&mut state.model, &out.grad)?;
            let event = controller.observe(out.loss)?;
            step += 1;
            history.records.push(StepRecord {
                step,
                epoch,
                loss: out.loss,
                threshold: Some(event.threshold_after),
                best_loss: Some(event.best_loss_after),
                action: Some(event.action),
            });
        }
        snapshot(&mut history, held_out, &state.model, epoch, config.cut)?;
    }
    Ok((history, controller))
}

/// Replaces every mask with the thresholded intensity map. Patches are kept.
pub fn relabel_dataset(
    dataset: &Dataset,
    threshold: f64,
    weights: &[f64],
    radii: MorphRadii,
) -> Result<Dataset> {
    if !(0.0..=INTENSITY_MAX).contains(&threshold) {
        return Err(Error::Config(format!(
            "threshold {threshold} outside [0, 255]"
        )));
    }
    validate_weights(weights, dataset.bands.len())?;
    let samples = dataset
        .samples
        .iter()
        .map(|s| {
            Ok(Sample {
                id: s.id.clone(),
                patch: s.patch.clone(),
                mask: Some(adaptive_mask(s, threshold, weights, radii)?),
            })
        })
        .collect::<Result<_>>()?;
    Ok(Dataset {
        samples,
        ..dataset.clone()
    })
}

/// Micro-averaged scores of `model` predictions against stored masks.
pub fn evaluate(
    dataset: &Dataset,
    model: &SegModel,
    cut: f64,
) -> Result<(ConfusionMatrix, MetricsReport)> {
    let mut cm = ConfusionMatrix::default();
    for sample in &dataset.samples {
        let truth = sample.mask.as_ref().ok_or_else(|| Error::Load {
            entry: sample.id.clone(),
            reason: "evaluation needs a ground-truth mask".into(),
        })?;
        let pred = predict_mask(model, &sample.patch, cut)?;
        cm.add(&pred, truth).map_err(|e| Error::Load {
            entry: sample.id.clone(),
            reason: e.to_string(),
        })?;
    }
    let report = cm.report()?;
    Ok((cm, report))
}

/// Dispatches on `config.mode`. `RelabelOnly` does not train and returns an
/// empty history.
pub fn train(
    dataset: &Dataset,
    state: &mut TrainState,
    config: &TrainConfig,
    held_out: Option<&Dataset>,
) -> Result<TrainHistory> {
    match config.mode {
        Mode::Baseline => train_baseline(dataset, state, config, held_out),
        Mode::CalFinetune => cal_finetune(dataset, state, config, held_out).map(|(h, _)| h),
        Mode::RelabelOnly => Ok(TrainHistory::default()),
    }
}
