//! Per-pixel logistic segmentation over a `k x k x B` neighbourhood.
//!
//! Each pixel's feature vector is the flattened window of every band around
//! it (replicate padding at the borders), standardized with frozen per-feature
//! constants. The logit is `w . feat + b` and the output is its sigmoid.
//!
//! Feature index layout is `(band * k + dy) * k + dx`, with `dy`/`dx`
//! running over `0..k` (offset `-(k/2)..=k/2`).

mod adam;
mod checkpoint;

pub use adam::{
    adam_step, Adam, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON, DEFAULT_LEARNING_RATE,
};
pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use crate::error::{Error, Result};
use crate::raster::{ImagePatch, IntensityMap, Mask};

pub const DEFAULT_WINDOW: usize = 5;

/// Lower/upper clip applied to probabilities before taking logarithms.
pub const PROB_CLIP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct SegModel {
    window: usize,
    bands: usize,
    weights: Vec<f64>,
    bias: f64,
    feature_mean: Vec<f64>,
    feature_scale: Vec<f64>,
}

/// Gradient of the mean loss with respect to the weights and the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Gradient {
    pub fn zeros(len: usize) -> Self {
        Self {
            weights: vec![0.0; len],
            bias: 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .copied()
            .chain(std::iter::once(self.bias))
    }
}

/// Model output before the prediction cut.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ProbabilityMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height || values.is_empty() {
            return Err(Error::Dimension(format!(
                "{} probabilities for a {width}x{height} map",
                values.len()
            )));
        }
        if let Some(p) = values.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::InvalidRaster(format!(
                "probability {p} outside (0, 1)"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Rescales to `[0, 255]` so probabilities can go through `binarize`.
    pub fn as_intensity(&self) -> IntensityMap {
        let values = self.values.iter().map(|p| p * 255.0).collect();
        IntensityMap::new(self.width, self.height, values).expect("probabilities lie in (0, 1)")
    }
}

/// Persisted model plus optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: SegModel,
    pub optimizer: Adam,
}

impl TrainState {
    pub fn new(model: SegModel, learning_rate: f64) -> Self {
        let optimizer = Adam::new(model.param_count(), learning_rate);
        Self { model, optimizer }
    }
}

impl SegModel {
    /// All-zero parameters with identity normalization.
    pub fn zeros(window: usize, bands: usize) -> Result<Self> {
        if window == 0 || window.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "window must be odd and positive, got {window}"
            )));
        }
        if bands == 0 {
            return Err(Error::Config("model needs at least one band".into()));
        }
        let n = window * window * bands;
        Ok(Self {
            window,
            bands,
            weights: vec![0.0; n],
            bias: 0.0,
            feature_mean: vec![0.0; n],
            feature_scale: vec![1.0; n],
        })
    }

    pub fn from_parts(
        window: usize,
        bands: usize,
        weights: Vec<f64>,
        bias: f64,
        feature_mean: Vec<f64>,
        feature_scale: Vec<f64>,
    ) -> Result<Self> {
        let mut model = Self::zeros(window, bands)?;
        let n = model.feature_count();
        if weights.len() != n || feature_mean.len() != n || feature_scale.len() != n {
            return Err(Error::Dimension(format!(
                "parameter vectors must have length {n} for window {window} and {bands} bands"
            )));
        }
        let finite = weights
            .iter()
            .chain(&feature_mean)
            .chain(&feature_scale)
            .chain(std::iter::once(&bias))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("model parameters".into()));
        }
        if feature_scale.iter().any(|s| *s <= 0.0) {
            return Err(Error::Config("feature scales must be positive".into()));
        }
        model.weights = weights;
        model.bias = bias;
        model.feature_mean = feature_mean;
        model.feature_scale = feature_scale;
        Ok(model)
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn feature_count(&self) -> usize {
        self.window * self.window * self.bands
    }

    /// Weights plus the bias.
    pub fn param_count(&self) -> usize {
        self.feature_count() + 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn feature_mean(&self) -> &[f64] {
        &self.feature_mean
    }

    pub fn feature_scale(&self) -> &[f64] {
        &self.feature_scale
    }

    pub fn set_bias(&mut self, bias: f64) {
        self.bias = bias;
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Flat parameter vector: weights then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.push(self.bias);
        p
    }

    pub(crate) fn apply_update(&mut self, delta: &[f64]) {
        let (dw, db) = delta.split_at(self.weights.len());
        for (w, d) in self.weights.iter_mut().zip(dw) {
            *w += d;
        }
        self.bias += db[0];
    }

    /// Standardizes every feature with its mean and standard deviation over
    /// all pixels of `patches`. Constant features keep a unit scale.
    pub fn fit_normalization<'a, I>(&mut self, patches: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a ImagePatch>,
    {
        let patches: Vec<&ImagePatch> = patches.into_iter().collect();
        for p in &patches {
            self.check_patch(p)?;
        }
        let total: usize = patches.iter().map(|p| p.len()).sum();
        let n = self.feature_count();
        if total == 0 {
            self.feature_mean = vec![0.0; n];
            self.feature_scale = vec![1.0; n];
            return Ok(());
        }
        let mut sums = vec![0.0; n];
        for p in &patches {
            self.for_each_feature_plane(p, |f, value| sums[f] += value);
        }
        let mean: Vec<f64> = sums.iter().map(|s| s / total as f64).collect();
        let mut sq = vec![0.0; n];
        for p in &patches {
            self.for_each_feature_plane(p, |f, value| {
                let d = value - mean[f];
                sq[f] += d * d;
            });
        }
        self.feature_scale = sq
            .iter()
            .map(|s| {
                let sd = (s / total as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        self.feature_mean = mean;
        Ok(())
    }

    // Visits every (feature, pixel) value of a patch.
    fn for_each_feature_plane(&self, patch: &ImagePatch, mut visit: impl FnMut(usize, f64)) {
        let (w, h) = (patch.width(), patch.height());
        let offsets = self.offset_tables(w, h);
        for band in 0..self.bands {
            let plane = patch.plane(band);
            for dy in 0..self.window {
                for dx in 0..self.window {
                    let f = (band * self.window + dy) * self.window + dx;
                    for y in 0..h {
                        let row = offsets.rows[dy][y] * w;
                        for x in 0..w {
                            visit(f, plane[row + offsets.cols[dx][x]]);
                        }
                    }
                }
            }
        }
    }

    fn check_patch(&self, patch: &ImagePatch) -> Result<()> {
        if patch.band_count() != self.bands {
            return Err(Error::Dimension(format!(
                "model expects {} bands, patch has {}",
                self.bands,
                patch.band_count()
            )));
        }
        Ok(())
    }

    fn offset_tables(&self, width: usize, height: usize) -> Offsets {
        let half = (self.window / 2) as isize;
        let table = |len: usize| -> Vec<Vec<usize>> {
            (0..self.window as isize)
                .map(|d| {
                    (0..len as isize)
                        .map(|i| (i + d - half).clamp(0, len as isize - 1) as usize)
                        .collect()
                })
                .collect()
        };
        Offsets {
            rows: table(height),
            cols: table(width),
        }
    }

    fn logits(&self, patch: &ImagePatch) -> Vec<f64> {
        let (w, h) = (patch.width(), patch.height());
        let offsets = self.offset_tables(w, h);
        // Fold the normalization into effective weights and bias.
        let mut bias = self.bias;
        let eff: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.feature_scale)
            .map(|(w, s)| w / s)
            .collect();
        for (e, m) in eff.iter().zip(&self.feature_mean) {
            bias -= e * m;
        }
        let mut logits = vec![bias; w * h];
        for band in 0..self.bands {
            let plane = patch.plane(band);
            for dy in 0..self.window {
                for dx in 0..self.window {
                    let wf = eff[(band * self.window + dy) * self.window + dx];
                    if wf == 0.0 {
                        continue;
                    }
                    let cols = &offsets.cols[dx];
                    for y in 0..h {
                        let src = &plane[offsets.rows[dy][y] * w..][..w];
                        let dst = &mut logits[y * w..(y + 1) * w];
                        for (out, &c) in dst.iter_mut().zip(cols) {
                            *out += wf * src[c];
                        }
                    }
                }
            }
        }
        logits
    }
}

struct Offsets {
    rows: Vec<Vec<usize>>,
    cols: Vec<Vec<usize>>,
}

pub fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    // Keep the open interval even where f64 rounds the tails to 0 or 1.
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

pub fn forward(model: &SegModel, patch: &ImagePatch) -> Result<ProbabilityMap> {
    model.check_patch(patch)?;
    let values = model.logits(patch).into_iter().map(sigmoid).collect();
    Ok(ProbabilityMap {
        width: patch.width(),
        height: patch.height(),
        values,
    })
}

fn pixel_bce(p: f64, label: u8) -> f64 {
    let p = p.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

fn check_labels(width: usize, height: usize, labels: &Mask) -> Result<()> {
    if labels.width() != width || labels.height() != height {
        return Err(Error::Dimension(format!(
            "labels are {}x{}, predictions are {width}x{height}",
            labels.width(),
            labels.height()
        )));
    }
    Ok(())
}

/// Mean binary cross-entropy with probabilities clipped to `[1e-7, 1 - 1e-7]`.
pub fn bce_loss(probs: &ProbabilityMap, labels: &Mask) -> Result<f64> {
    check_labels(probs.width, probs.height, labels)?;
    let sum: f64 = probs
        .values
        .iter()
        .zip(labels.values())
        .map(|(&p, &y)| pixel_bce(p, y))
        .sum();
    Ok(sum / probs.values.len() as f64)
}

/// Unnormalized loss and gradient sums over one patch, so that batches can be
/// reduced in a fixed order and averaged once.
#[derive(Debug, Clone)]
pub(crate) struct PatchSums {
    pub loss: f64,
    pub grad: Gradient,
    pub pixels: usize,
}

pub(crate) fn patch_sums(model: &SegModel, patch: &ImagePatch, labels: &Mask) -> Result<PatchSums> {
    model.check_patch(patch)?;
    check_labels(patch.width(), patch.height(), labels)?;
    let (w, h) = (patch.width(), patch.height());
    let probs: Vec<f64> = model.logits(patch).into_iter().map(sigmoid).collect();
    let mut loss = 0.0;
    let mut residual = Vec::with_capacity(probs.len());
    for (&p, &y) in probs.iter().zip(labels.values()) {
        loss += pixel_bce(p, y);
        residual.push(p - f64::from(y));
    }
    let residual_sum: f64 = residual.iter().sum();

    // d/dw_f of sum_i (p_i - y_i) * (x_if - mean_f) / scale_f
    let offsets = model.offset_tables(w, h);
    let mut grad = Gradient::zeros(model.feature_count());
    for band in 0..model.bands {
        let plane = patch.plane(band);
        for dy in 0..model.window {
            for dx in 0..model.window {
                let f = (band * model.window + dy) * model.window + dx;
                let cols = &offsets.cols[dx];
                let mut acc = 0.0;
                for y in 0..h {
                    let src = &plane[offsets.rows[dy][y] * w..][..w];
                    let res = &residual[y * w..(y + 1) * w];
                    for (r, &c) in res.iter().zip(cols) {
                        acc += r * src[c];
                    }
                }
                grad.weights[f] =
                    (acc - model.feature_mean[f] * residual_sum) / model.feature_scale[f];
            }
        }
    }
    grad.bias = residual_sum;
    Ok(PatchSums {
        loss,
        grad,
        pixels: w * h,
    })
}

/// Exact gradient of `bce_loss(forward(model, patch), labels)` with respect to
/// the weights and bias, using the unclipped residual `p - y`.
pub fn backward(model: &SegModel, patch: &ImagePatch, labels: &Mask) -> Result<Gradient> {
    let sums = patch_sums(model, patch, labels)?;
    let n = sums.pixels as f64;
    let mut grad = sums.grad;
    grad.weights.iter_mut().for_each(|g| *g /= n);
    grad.bias /= n;
    Ok(grad)
}

/// Cloud wherever the predicted probability strictly exceeds `cut`.
pub fn predict_mask(model: &SegModel, patch: &ImagePatch, cut: f64) -> Result<Mask> {
    let probs = forward(model, patch)?;
    let values = probs.values.iter().map(|&p| u8::from(p > cut)).collect();
    Ok(Mask::from_raw(probs.width, probs.height, values))
}
