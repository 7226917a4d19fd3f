//! Raster types and the image-to-mask binarization operation.
//!
//! All intensities live in `[0, 255]` regardless of the bit depth of the
//! source files; loaders normalize on the way in.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest representable intensity.
pub const INTENSITY_MAX: f64 = 255.0;

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Spectral band identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Red,
    Green,
    Blue,
    Nir,
}

impl Band {
    /// The 38-Cloud channel order.
    pub const ALL: [Band; 4] = [Band::Red, Band::Green, Band::Blue, Band::Nir];

    pub fn name(self) -> &'static str {
        match self {
            Band::Red => "red",
            Band::Green => "green",
            Band::Blue => "blue",
            Band::Nir => "nir",
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Band {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "red" => Ok(Band::Red),
            "green" => Ok(Band::Green),
            "blue" => Ok(Band::Blue),
            "nir" => Ok(Band::Nir),
            other => Err(Error::Config(format!("unknown band `{other}`"))),
        }
    }
}

/// Multi-band raster of intensities in `[0, 255]`, one row-major plane per band.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePatch {
    width: usize,
    height: usize,
    bands: Vec<Band>,
    planes: Vec<Vec<f64>>,
}

impl ImagePatch {
    pub fn new(
        width: usize,
        height: usize,
        bands: Vec<Band>,
        planes: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!(
                "empty raster {width}x{height}"
            )));
        }
        if bands.is_empty() || bands.len() != planes.len() {
            return Err(Error::InvalidRaster(format!(
                "{} band identifiers for {} planes",
                bands.len(),
                planes.len()
            )));
        }
        for (band, plane) in bands.iter().zip(&planes) {
            if plane.len() != width * height {
                return Err(Error::Dimension(format!(
                    "band {band} has {} samples, expected {}",
                    plane.len(),
                    width * height
                )));
            }
            if let Some(v) = plane.iter().find(|v| !(0.0..=INTENSITY_MAX).contains(*v)) {
                return Err(Error::InvalidRaster(format!(
                    "band {band} intensity {v} outside [0, 255]"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            bands,
            planes,
        })
    }

    /// Single-band patch, mostly useful in tests.
    pub fn single(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(width, height, vec![Band::Red], vec![values])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    pub fn plane(&self, band: usize) -> &[f64] {
        &self.planes[band]
    }

    pub fn planes(&self) -> &[Vec<f64>] {
        &self.planes
    }

    pub fn get(&self, band: usize, x: usize, y: usize) -> f64 {
        self.planes[band][y * self.width + x]
    }
}

/// Single-channel intensity grid fed to [`binarize`].
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl IntensityMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} values for a {width}x{height} intensity map",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=INTENSITY_MAX).contains(*v)) {
            return Err(Error::InvalidRaster(format!(
                "intensity {v} outside [0, 255]"
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
}

/// Binary per-pixel labels: 0 = clear, 1 = cloud.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: usize,
    height: usize,
    values: Vec<u8>,
}

impl Mask {
    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} labels for a {width}x{height} mask",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| **v > 1) {
            return Err(Error::InvalidRaster(format!(
                "mask label {v} is not 0 or 1"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, label: bool) -> Self {
        Self {
            width,
            height,
            values: vec![label as u8; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.values[y * self.width + x] == 1
    }

    pub fn count_positive(&self) -> usize {
        self.values.iter().filter(|v| **v == 1).count()
    }

    /// Pixel-wise complement.
    pub fn inverted(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| 1 - v).collect(),
        }
    }

    pub(crate) fn from_raw(width: usize, height: usize, values: Vec<u8>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        Self {
            width,
            height,
            values,
        }
    }

    pub(crate) fn values_mut(&mut self) -> &mut [u8] {
        &mut self.values
    }
}

/// Uniform weights over `bands` bands.
pub fn uniform_weights(bands: usize) -> Vec<f64> {
    vec![1.0 / bands as f64; bands]
}

/// Reduces a multi-band patch to one intensity channel as a convex band mix.
pub fn to_intensity(patch: &ImagePatch, weights: &[f64]) -> Result<IntensityMap> {
    validate_weights(weights, patch.band_count())?;
    let mut values = vec![0.0; patch.len()];
    for (plane, &w) in patch.planes.iter().zip(weights) {
        for (acc, &v) in values.iter_mut().zip(plane) {
            *acc += w * v;
        }
    }
    // Rounding in the weighted sum can overshoot the range by an ulp.
    for v in &mut values {
        *v = v.clamp(0.0, INTENSITY_MAX);
    }
    Ok(IntensityMap {
        width: patch.width,
        height: patch.height,
        values,
    })
}

pub fn validate_weights(weights: &[f64], bands: usize) -> Result<()> {
    if weights.len() != bands {
        return Err(Error::Dimension(format!(
            "{} band weights for a {bands}-band patch",
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidWeights(format!(
            "weight {w} is negative or non-finite"
        )));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::InvalidWeights(format!(
            "weights sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Cloud wherever the intensity strictly exceeds `threshold`.
pub fn binarize(intensity: &IntensityMap, threshold: f64) -> Result<Mask> {
    if !threshold.is_finite() {
        return Err(Error::NonFinite(format!("threshold {threshold}")));
    }
    let values = intensity
        .values
        .iter()
        .map(|&v| u8::from(v > threshold))
        .collect();
    Ok(Mask::from_raw(intensity.width, intensity.height, values))
}
