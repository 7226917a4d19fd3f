//! In-memory datasets and their on-disk form (PGM files plus a manifest).

mod manifest;
pub mod pgm;
mod scan;
mod synth;

use std::fs;
use std::path::{Path, PathBuf};

pub use manifest::{
    BitDepth, DatasetManifest, ManifestEntry, Split, MANIFEST_FILE, MANIFEST_FORMAT,
    MANIFEST_VERSION,
};
pub use scan::{parse_38cloud_stem, scan_38cloud, CloudStem};
pub use synth::{generate_synthetic, SynthConfig, SyntheticSet};

use crate::error::{Error, Result};
use crate::raster::{Band, ImagePatch, Mask};
use pgm::Pgm;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub patch: ImagePatch,
    pub mask: Option<Mask>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub bands: Vec<Band>,
    pub bit_depth: BitDepth,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(split: Split, bands: Vec<Band>, bit_depth: BitDepth) -> Self {
        Self {
            split,
            bands,
            bit_depth,
            samples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn patches(&self) -> impl Iterator<Item = &ImagePatch> {
        self.samples.iter().map(|s| &s.patch)
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.samples.iter().all(|s| s.mask.is_some())
    }

    /// First sample without a mask, if any.
    pub fn first_unlabeled(&self) -> Option<&str> {
        self.samples
            .iter()
            .find(|s| s.mask.is_none())
            .map(|s| s.id.as_str())
    }
}

/// Loads every entry of a manifest, in manifest order.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let root = manifest.resolve_root(manifest_path);
    let mut dataset = Dataset::new(manifest.split, manifest.bands.clone(), manifest.bit_depth);
    for entry in &manifest.entries {
        dataset.samples.push(load_entry(&manifest, entry, &root)?);
    }
    Ok(dataset)
}

fn load_entry(manifest: &DatasetManifest, entry: &ManifestEntry, root: &Path) -> Result<Sample> {
    let fail = |reason: String| Error::Load {
        entry: entry.id.clone(),
        reason,
    };
    let read = |name: &str| -> Result<Pgm> {
        let path = root.join(name);
        if !path.is_file() {
            return Err(fail(format!("missing file {}", path.display())));
        }
        Pgm::read(&path).map_err(|e| fail(e.to_string()))
    };

    let maxval = manifest.bit_depth.maxval();
    let scale = manifest.bit_depth.scale();
    let mut dims = None;
    let mut planes = Vec::with_capacity(entry.bands.len());
    for (band, name) in manifest.bands.iter().zip(&entry.bands) {
        let img = read(name)?;
        if img.maxval != maxval {
            return Err(fail(format!(
                "band {band} file {name} has maxval {}, manifest bit depth needs {maxval}",
                img.maxval
            )));
        }
        check_dims(&mut dims, &img, name).map_err(fail)?;
        planes.push(img.samples.iter().map(|&s| f64::from(s) / scale).collect());
    }
    let (width, height) = dims.expect("manifest validation guarantees at least one band");
    let patch = ImagePatch::new(width, height, manifest.bands.clone(), planes)
        .map_err(|e| fail(e.to_string()))?;

    let mask = match &entry.mask {
        None => None,
        Some(name) => {
            let img = read(name)?;
            check_dims(&mut dims, &img, name).map_err(fail)?;
            let mut values = Vec::with_capacity(img.samples.len());
            for &s in &img.samples {
                match s {
                    0 => values.push(0),
                    s if s == img.maxval => values.push(1),
                    s => {
                        return Err(fail(format!(
                            "mask {name} is not binary: value {s} (expected 0 or {})",
                            img.maxval
                        )))
                    }
                }
            }
            Some(Mask::new(width, height, values).map_err(|e| fail(e.to_string()))?)
        }
    };

    Ok(Sample {
        id: entry.id.clone(),
        patch,
        mask,
    })
}

fn check_dims(
    dims: &mut Option<(usize, usize)>,
    img: &Pgm,
    name: &str,
) -> std::result::Result<(), String> {
    match *dims {
        None => {
            *dims = Some((img.width, img.height));
            Ok(())
        }
        Some((w, h)) if (w, h) == (img.width, img.height) => Ok(()),
        Some((w, h)) => Err(format!(
            "{name} is {}x{}, other files of the entry are {w}x{h}",
            img.width, img.height
        )),
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

/// Writes PGM files and `manifest.toml` under `root`, returning the manifest
/// path. Intensities must sit exactly on the dataset's bit-depth grid.
pub fn write_dataset(dataset: &Dataset, root: &Path) -> Result<PathBuf> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut manifest =
        DatasetManifest::new(".", dataset.split, dataset.bands.clone(), dataset.bit_depth);
    let scale = dataset.bit_depth.scale();
    let maxval = dataset.bit_depth.maxval();

    for sample in &dataset.samples {
        if !valid_id(&sample.id) {
            return Err(Error::Load {
                entry: sample.id.clone(),
                reason: "id must be non-empty and use only [A-Za-z0-9_.-]".into(),
            });
        }
        let patch = &sample.patch;
        if patch.bands() != dataset.bands.as_slice() {
            return Err(Error::Load {
                entry: sample.id.clone(),
                reason: "patch bands differ from dataset bands".into(),
            });
        }
        let mut band_files = Vec::with_capacity(dataset.bands.len());
        for (b, band) in dataset.bands.iter().enumerate() {
            let mut raw = Vec::with_capacity(patch.len());
            for &v in patch.plane(b) {
                let s = (v * scale).round();
                if !(0.0..=f64::from(maxval)).contains(&s) || s / scale != v {
                    return Err(Error::Load {
                        entry: sample.id.clone(),
                        reason: format!(
                            "band {band} value {v} is not representable at {} bits",
                            u8::from(dataset.bit_depth)
                        ),
                    });
                }
                raw.push(s as u16);
            }
            let name = format!("{}_{band}.pgm", sample.id);
            Pgm::new(patch.width(), patch.height(), maxval, raw)?.write(&root.join(&name))?;
            band_files.push(name);
        }
        let mask = match &sample.mask {
            None => None,
            Some(mask) => {
                if (mask.width(), mask.height()) != (patch.width(), patch.height()) {
                    return Err(Error::Load {
                        entry: sample.id.clone(),
                        reason: "mask dimensions differ from patch".into(),
                    });
                }
                let name = format!("{}_mask.pgm", sample.id);
                let raw = mask.values().iter().map(|&v| u16::from(v) * 255).collect();
                Pgm::new(mask.width(), mask.height(), 255, raw)?.write(&root.join(&name))?;
                Some(name)
            }
        };
        manifest.entries.push(ManifestEntry {
            id: sample.id.clone(),
            bands: band_files,
            mask,
        });
    }
    let path = root.join(MANIFEST_FILE);
    manifest.write(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, w: usize, h: usize, values: Vec<f64>, mask: Option<Vec<u8>>) -> Sample {
        Sample {
            id: id.into(),
            patch: ImagePatch::single(w, h, values).unwrap(),
            mask: mask.map(|m| Mask::new(w, h, m).unwrap()),
        }
    }

    #[test]
    fn eight_bit_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = Dataset::new(Split::Test, vec![Band::Red], BitDepth::Eight);
        ds.samples.push(sample(
            "a",
            2,
            2,
            vec![0.0, 1.0, 128.0, 255.0],
            Some(vec![0, 1, 1, 0]),
        ));
        ds.samples
            .push(sample("b", 3, 1, vec![7.0, 8.0, 9.0], None));
        let path = write_dataset(&ds, dir.path()).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), ds);
    }

    #[test]
    fn sixteen_bit_normalization_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let raw = [0u16, 1, 257, 12345, 65535];
        let values: Vec<f64> = raw.iter().map(|&r| f64::from(r) / 257.0).collect();
        let mut ds = Dataset::new(Split::Train, vec![Band::Red], BitDepth::Sixteen);
        ds.samples.push(sample("p", 5, 1, values.clone(), None));
        let path = write_dataset(&ds, dir.path()).unwrap();
        let stored = Pgm::read(&dir.path().join("p_red.pgm")).unwrap();
        assert_eq!(stored.samples, raw.to_vec());
        let back = load_dataset(&path).unwrap();
        assert_eq!(back.samples[0].patch.plane(0), values.as_slice());
    }

    #[test]
    fn unrepresentable_values_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = Dataset::new(Split::Train, vec![Band::Red], BitDepth::Eight);
        ds.samples.push(sample("p", 1, 1, vec![0.5], None));
        assert!(write_dataset(&ds, dir.path()).is_err());
    }

    #[test]
    fn empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::new(Split::Train, Band::ALL.to_vec(), BitDepth::Eight);
        let path = write_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(&path).unwrap();
        assert!(back.is_empty());
        assert_eq!(back, ds);
    }

    #[test]
    fn non_binary_mask_names_entry() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = Dataset::new(Split::Train, vec![Band::Red], BitDepth::Eight);
        ds.samples
            .push(sample("bad", 2, 1, vec![1.0, 2.0], Some(vec![0, 1])));
        let path = write_dataset(&ds, dir.path()).unwrap();
        Pgm::new(2, 1, 255, vec![0, 128])
            .unwrap()
            .write(&dir.path().join("bad_mask.pgm"))
            .unwrap();
        let err = load_dataset(&path).unwrap_err();
        assert!(
            matches!(&err, Error::Load { entry, .. } if entry == "bad"),
            "{err}"
        );
        assert!(err.to_string().contains("128"));
    }

    #[test]
    fn missing_file_and_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = Dataset::new(Split::Train, vec![Band::Red], BitDepth::Eight);
        ds.samples
            .push(sample("x", 2, 1, vec![1.0, 2.0], Some(vec![0, 1])));
        let path = write_dataset(&ds, dir.path()).unwrap();

        Pgm::new(1, 2, 255, vec![0, 255])
            .unwrap()
            .write(&dir.path().join("x_mask.pgm"))
            .unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Load { .. })));

        fs::remove_file(dir.path().join("x_red.pgm")).unwrap();
        let err = load_dataset(&path).unwrap_err();
        assert!(err.to_string().contains("missing file"), "{err}");
    }

    #[test]
    fn bit_depth_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = Dataset::new(Split::Train, vec![Band::Red], BitDepth::Eight);
        ds.samples.push(sample("x", 1, 1, vec![3.0], None));
        let path = write_dataset(&ds, dir.path()).unwrap();
        let text = fs::read_to_string(&path)
            .unwrap()
            .replace("bit_depth = 8", "bit_depth = 16");
        fs::write(&path, text).unwrap();
        assert!(load_dataset(&path).is_err());
    }
}
