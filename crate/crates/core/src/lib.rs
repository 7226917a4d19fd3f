//! Noisy-label cloud segmentation with a loss-feedback intensity threshold.
//!
//! The crate is organised bottom-up:
//!
//! * [`raster`] and [`morphology`]: image/mask types, band reduction and the
//!   binarization operation that turns an image into a cloud mask.
//! * [`controller`]: the self-regulating threshold that is nudged up or down
//!   from the per-batch training loss.
//! * [`model`]: a small per-pixel logistic segmentation model with manual
//!   backpropagation, Adam, and a binary checkpoint format.
//! * [`metrics`]: confusion-matrix evaluation (mIoU, precision, recall, F1, OA).
//! * [`data`]: PGM I/O, dataset manifests, the 38-Cloud directory scanner and
//!   the synthetic noisy-label generator.
//! * [`trainer`]: baseline training, adaptive-label fine-tuning, relabeling
//!   and evaluation, with full step-level history.

pub mod benchmark;
pub mod controller;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod morphology;
pub mod raster;
pub mod trainer;

pub use controller::{Action, ControllerConfig, ThresholdController, ThresholdEvent};
pub use data::{Dataset, Sample};
pub use error::{Error, Result};
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use model::{Adam, ProbabilityMap, SegModel, TrainState};
pub use raster::{Band, ImagePatch, IntensityMap, Mask};
