//! Synthetic cloud scenes with a known intensity threshold and corrupted labels.
//!
//! Each patch is a smooth value-noise field in `[0, 255]` shared by all bands,
//! with independent per-band jitter, quantized to the 16-bit storage grid.
//! The clean mask thresholds the uniform band mean at `true_threshold`; the
//! noisy mask flips an exact fraction of clean labels and then dilates.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BitDepth, Dataset, Sample, Split};
use crate::controller::DEFAULT_LOWER_BOUND;
use crate::error::{Error, Result};
use crate::morphology::dilate;
use crate::raster::{
    binarize, to_intensity, uniform_weights, Band, ImagePatch, Mask, INTENSITY_MAX,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub count: usize,
    /// Patch side length in pixels.
    pub size: usize,
    pub true_threshold: f64,
    /// Lattice spacing of the value noise, in pixels.
    pub smoothness: f64,
    pub flip_fraction: f64,
    pub dilation_radius: usize,
    pub bands: usize,
    /// Half-width of the uniform per-band perturbation, in intensity units.
    pub band_jitter: f64,
    /// Gain of the logistic tone curve that pushes the field towards dark
    /// ground and bright cloud. 0 keeps the field linear.
    pub contrast: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            count: 64,
            size: 64,
            true_threshold: 70.0,
            smoothness: 12.0,
            flip_fraction: 0.15,
            dilation_radius: 1,
            bands: 4,
            band_jitter: 2.0,
            contrast: 12.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.count == 0 {
            return bad("synthetic count must be at least 1".into());
        }
        if self.size == 0 {
            return bad("synthetic patch size must be at least 1".into());
        }
        if !(self.true_threshold > DEFAULT_LOWER_BOUND && self.true_threshold < INTENSITY_MAX) {
            return bad(format!(
                "true threshold {} must lie strictly between {DEFAULT_LOWER_BOUND} and {INTENSITY_MAX}",
                self.true_threshold
            ));
        }
        if !(self.smoothness.is_finite() && self.smoothness > 0.0) {
            return bad(format!(
                "smoothness must be positive, got {}",
                self.smoothness
            ));
        }
        if !(0.0..=1.0).contains(&self.flip_fraction) {
            return bad(format!(
                "flip fraction {} outside [0, 1]",
                self.flip_fraction
            ));
        }
        if self.bands == 0 || self.bands > Band::ALL.len() {
            return bad(format!("bands must be between 1 and {}", Band::ALL.len()));
        }
        if !(self.contrast.is_finite() && self.contrast >= 0.0) {
            return bad(format!(
                "contrast must be non-negative, got {}",
                self.contrast
            ));
        }
        if !(self.band_jitter.is_finite() && self.band_jitter >= 0.0) {
            return bad(format!(
                "band jitter must be non-negative, got {}",
                self.band_jitter
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub ids: Vec<String>,
    pub patches: Vec<ImagePatch>,
    pub clean: Vec<Mask>,
    pub noisy: Vec<Mask>,
    /// Number of labels flipped in each patch before dilation.
    pub flipped: Vec<usize>,
}

impl SyntheticSet {
    fn dataset(&self, split: Split, masks: &[Mask]) -> Dataset {
        let bands = self
            .patches
            .first()
            .map(|p| p.bands().to_vec())
            .unwrap_or_default();
        Dataset {
            split,
            bands,
            bit_depth: BitDepth::Sixteen,
            samples: self
                .ids
                .iter()
                .zip(&self.patches)
                .zip(masks)
                .map(|((id, patch), mask)| Sample {
                    id: id.clone(),
                    patch: patch.clone(),
                    mask: Some(mask.clone()),
                })
                .collect(),
        }
    }

    pub fn noisy_dataset(&self, split: Split) -> Dataset {
        self.dataset(split, &self.noisy)
    }

    pub fn clean_dataset(&self, split: Split) -> Dataset {
        self.dataset(split, &self.clean)
    }
}

fn quantize(v: f64) -> f64 {
    let scale = BitDepth::Sixteen.scale();
    (v.clamp(0.0, INTENSITY_MAX) * scale).round() / scale
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Logistic tone curve on `[0, 255]`, rescaled to map 0 to 0 and 255 to 255.
fn tone(v: f64, gain: f64) -> f64 {
    if gain == 0.0 {
        return v;
    }
    let s = |u: f64| 1.0 / (1.0 + (-gain * (u - 0.5)).exp());
    let (lo, hi) = (s(0.0), s(1.0));
    INTENSITY_MAX * (s(v / INTENSITY_MAX) - lo) / (hi - lo)
}

fn value_noise(rng: &mut ChaCha8Rng, size: usize, spacing: f64) -> Vec<f64> {
    let cells = (size as f64 / spacing).ceil() as usize + 2;
    let lattice: Vec<f64> = (0..cells * cells)
        .map(|_| rng.gen_range(0.0..=INTENSITY_MAX))
        .collect();
    let mut field = Vec::with_capacity(size * size);
    for y in 0..size {
        let gy = y as f64 / spacing;
        let (iy, ty) = (gy.floor() as usize, smoothstep(gy.fract()));
        for x in 0..size {
            let gx = x as f64 / spacing;
            let (ix, tx) = (gx.floor() as usize, smoothstep(gx.fract()));
            let at = |cx: usize, cy: usize| lattice[cy * cells + cx];
            let top = at(ix, iy) + (at(ix + 1, iy) - at(ix, iy)) * tx;
            let bottom = at(ix, iy + 1) + (at(ix + 1, iy + 1) - at(ix, iy + 1)) * tx;
            field.push(top + (bottom - top) * ty);
        }
    }
    field
}

/// Deterministic in `config`: the same config always yields identical data.
pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticSet> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.size * config.size;
    let bands = Band::ALL[..config.bands].to_vec();
    let weights = uniform_weights(config.bands);
    let flips = (config.flip_fraction * n as f64).round() as usize;

    let mut set = SyntheticSet {
        ids: Vec::with_capacity(config.count),
        patches: Vec::with_capacity(config.count),
        clean: Vec::with_capacity(config.count),
        noisy: Vec::with_capacity(config.count),
        flipped: Vec::with_capacity(config.count),
    };
    for i in 0..config.count {
        let field: Vec<f64> = value_noise(&mut rng, config.size, config.smoothness)
            .into_iter()
            .map(|v| tone(v, config.contrast))
            .collect();
        let planes = (0..config.bands)
            .map(|_| {
                field
                    .iter()
                    .map(|&v| {
                        let jitter = if config.band_jitter > 0.0 {
                            rng.gen_range(-config.band_jitter..=config.band_jitter)
                        } else {
                            0.0
                        };
                        quantize(v + jitter)
                    })
                    .collect()
            })
            .collect();
        let patch = ImagePatch::new(config.size, config.size, bands.clone(), planes)?;
        let clean = binarize(&to_intensity(&patch, &weights)?, config.true_threshold)?;

        let mut noisy = clean.clone();
        for idx in index::sample(&mut rng, n, flips).into_iter() {
            noisy.values_mut()[idx] ^= 1;
        }
        if config.dilation_radius > 0 {
            noisy = dilate(&noisy, config.dilation_radius);
        }

        set.ids.push(format!("synth_{i:04}"));
        set.patches.push(patch);
        set.clean.push(clean);
        set.noisy.push(noisy);
        set.flipped.push(flips);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            seed,
            count: 3,
            size: 16,
            smoothness: 5.0,
            ..Default::default()
        }
    }

    #[test]
    fn zero_noise_keeps_clean_masks() {
        let cfg = SynthConfig {
            flip_fraction: 0.0,
            dilation_radius: 0,
            ..small(1)
        };
        let set = generate_synthetic(&cfg).unwrap();
        assert_eq!(set.noisy, set.clean);
    }

    #[test]
    fn full_flip_is_complement() {
        let cfg = SynthConfig {
            flip_fraction: 1.0,
            dilation_radius: 0,
            ..small(2)
        };
        let set = generate_synthetic(&cfg).unwrap();
        for (c, n) in set.clean.iter().zip(&set.noisy) {
            assert_eq!(&c.inverted(), n);
        }
    }

    #[test]
    fn same_seed_same_data() {
        assert_eq!(
            generate_synthetic(&small(9)).unwrap(),
            generate_synthetic(&small(9)).unwrap()
        );
        assert_ne!(
            generate_synthetic(&small(9)).unwrap(),
            generate_synthetic(&small(10)).unwrap()
        );
    }

    #[test]
    fn flip_count_matches_hamming_distance() {
        let cfg = SynthConfig {
            flip_fraction: 0.3,
            dilation_radius: 0,
            ..small(4)
        };
        let set = generate_synthetic(&cfg).unwrap();
        for ((c, n), &k) in set.clean.iter().zip(&set.noisy).zip(&set.flipped) {
            let hamming = c
                .values()
                .iter()
                .zip(n.values())
                .filter(|(a, b)| a != b)
                .count();
            assert_eq!(hamming, k);
            assert_eq!(k, (0.3f64 * 256.0).round() as usize);
        }
    }

    #[test]
    fn values_sit_on_sixteen_bit_grid() {
        let set = generate_synthetic(&small(5)).unwrap();
        for p in &set.patches {
            for plane in p.planes() {
                for &v in plane {
                    assert_eq!((v * 257.0).round() / 257.0, v);
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        for bad in [
            SynthConfig {
                true_threshold: 40.0,
                ..small(0)
            },
            SynthConfig {
                true_threshold: 45.0,
                ..small(0)
            },
            SynthConfig {
                count: 0,
                ..small(0)
            },
            SynthConfig {
                flip_fraction: 1.5,
                ..small(0)
            },
            SynthConfig {
                smoothness: 0.0,
                ..small(0)
            },
            SynthConfig {
                bands: 5,
                ..small(0)
            },
        ] {
            assert!(generate_synthetic(&bad).is_err(), "{bad:?}");
        }
    }
}
