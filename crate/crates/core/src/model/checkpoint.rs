//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! magic        4 bytes  "CALM"
//! version      u16
//! window       u32
//! bands        u32
//! param_count  u64      window^2 * bands + 1
//! f64 x n      weights
//! f64          bias
//! f64 x n      feature means
//! f64 x n      feature scales
//! f64 x (n+1)  Adam first moments
//! f64 x (n+1)  Adam second moments
//! f64          Adam step count
//! ```
//!
//! Optimizer hyperparameters are configuration, not state, and are not stored.

use std::fs;
use std::path::Path;

use super::{Adam, SegModel, TrainState};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CALM";
pub const CHECKPOINT_VERSION: u16 = 1;

const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 8;

impl TrainState {
    pub fn to_bytes(&self) -> Vec<u8> {
        let model = &self.model;
        let n = model.feature_count();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * (5 * n + 4));
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(model.window() as u32).to_le_bytes());
        out.extend_from_slice(&(model.bands() as u32).to_le_bytes());
        out.extend_from_slice(&(model.param_count() as u64).to_le_bytes());
        let bias = model.bias();
        let floats = model
            .weights()
            .iter()
            .chain(std::iter::once(&bias))
            .chain(model.feature_mean())
            .chain(model.feature_scale())
            .chain(self.optimizer.first_moment())
            .chain(self.optimizer.second_moment())
            .copied()
            .chain(std::iter::once(self.optimizer.step_count() as f64));
        for v in floats {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses a checkpoint. `learning_rate` is supplied by the caller.
    pub fn from_bytes(bytes: &[u8], learning_rate: f64) -> std::result::Result<Self, String> {
        if bytes.len() < HEADER_LEN {
            return Err("truncated header".into());
        }
        if &bytes[..4] != CHECKPOINT_MAGIC {
            return Err("bad magic, not a checkpoint".into());
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != CHECKPOINT_VERSION {
            return Err(format!("unsupported checkpoint version {version}"));
        }
        let window = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let bands = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(bytes[14..22].try_into().unwrap());
        let n = window
            .checked_mul(window)
            .and_then(|v| v.checked_mul(bands))
            .ok_or("window/band product overflows")?;
        if count != n as u64 + 1 {
            return Err(format!(
                "parameter count {count} inconsistent with window {window} and {bands} bands"
            ));
        }
        let expected = HEADER_LEN + 8 * (5 * n + 4);
        if bytes.len() != expected {
            return Err(format!("expected {expected} bytes, found {}", bytes.len()));
        }
        let mut floats = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut take = |len: usize| -> Vec<f64> { floats.by_ref().take(len).collect() };
        let weights = take(n);
        let bias = take(1)[0];
        let mean = take(n);
        let scale = take(n);
        let first = take(n + 1);
        let second = take(n + 1);
        let step = take(1)[0];
        if !(step >= 0.0 && step.fract() == 0.0 && step <= u64::MAX as f64) {
            return Err(format!("invalid step count {step}"));
        }
        if first.iter().chain(&second).any(|v| !v.is_finite()) {
            return Err("non-finite optimizer moments".into());
        }
        let model = SegModel::from_parts(window, bands, weights, bias, mean, scale)
            .map_err(|e| e.to_string())?;
        let mut optimizer = Adam::from_parts(first, second, step as u64);
        optimizer.learning_rate = learning_rate;
        Ok(Self { model, optimizer })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, learning_rate: f64) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, learning_rate).map_err(|reason| Error::format(path, reason))
    }
}
