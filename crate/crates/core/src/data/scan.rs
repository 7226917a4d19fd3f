//! Builds a manifest from a directory of 38-Cloud patches converted to PGM.
//!
//! Files are matched on the `<band>_patch_<i>_<row>_by_<col>_<scene>.pgm`
//! naming convention, where `<band>` is one of `red`, `green`, `blue`, `nir`
//! or `gt` (the ground-truth mask). Subdirectories such as `train_red/` are
//! searched recursively.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::manifest::{BitDepth, DatasetManifest, ManifestEntry, Split};
use super::pgm::Pgm;
use crate::error::{Error, Result};
use crate::raster::Band;

/// Parsed `<band>_patch_<i>_<row>_by_<col>_<scene>` stem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CloudStem {
    /// `None` for the `gt` mask.
    pub band: Option<Band>,
    pub index: u64,
    pub row: u64,
    pub col: u64,
    pub scene: String,
}

impl CloudStem {
    /// The stem without its band prefix; shared by every file of a patch.
    pub fn patch_id(&self) -> String {
        format!(
            "patch_{}_{}_by_{}_{}",
            self.index, self.row, self.col, self.scene
        )
    }

    fn sort_key(&self) -> (String, u64, u64, u64) {
        (self.scene.clone(), self.index, self.row, self.col)
    }
}

pub fn parse_38cloud_stem(stem: &str) -> Option<CloudStem> {
    let (prefix, rest) = stem.split_once("_patch_")?;
    let band = match prefix {
        "gt" => None,
        other => Some(other.parse::<Band>().ok()?),
    };
    let mut parts = rest.splitn(5, '_');
    let index = parts.next()?.parse().ok()?;
    let row = parts.next()?.parse().ok()?;
    if parts.next()? != "by" {
        return None;
    }
    let col = parts.next()?.parse().ok()?;
    let scene = parts.next()?.to_string();
    if scene.is_empty() {
        return None;
    }
    Some(CloudStem {
        band,
        index,
        row,
        col,
        scene,
    })
}

fn collect(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect(&path, out)?;
        } else if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
        {
            out.push(path);
        }
    }
    Ok(())
}

#[derive(Default)]
struct PatchFiles {
    stem: Option<CloudStem>,
    bands: BTreeMap<usize, PathBuf>,
    mask: Option<PathBuf>,
}

/// Scans `dir` and returns a manifest rooted at `dir` with entries sorted by
/// scene, then patch index. Every patch must provide all four bands; the
/// `gt` mask is optional.
pub fn scan_38cloud(dir: &Path, split: Split) -> Result<DatasetManifest> {
    let mut files = Vec::new();
    collect(dir, &mut files)?;

    let mut patches: BTreeMap<String, PatchFiles> = BTreeMap::new();
    for path in files {
        let Some(stem) = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(parse_38cloud_stem)
        else {
            continue;
        };
        let slot = patches.entry(stem.patch_id()).or_default();
        let duplicate = match stem.band {
            Some(band) => {
                let b = Band::ALL.iter().position(|x| *x == band).unwrap();
                slot.bands.insert(b, path.clone()).is_some()
            }
            None => slot.mask.replace(path.clone()).is_some(),
        };
        if duplicate {
            return Err(Error::format(
                &path,
                "duplicate file for the same patch and band",
            ));
        }
        slot.stem.get_or_insert(stem);
    }

    let mut ordered: Vec<(String, PatchFiles)> = patches.into_iter().collect();
    ordered.sort_by_key(|(_, p)| p.stem.as_ref().map(CloudStem::sort_key));

    let relative = |p: &Path| -> String {
        p.strip_prefix(dir)
            .unwrap_or(p)
            .to_string_lossy()
            .replace('\\', "/")
    };

    let mut bit_depth = None;
    let mut entries = Vec::with_capacity(ordered.len());
    for (id, files) in ordered {
        if files.bands.len() != Band::ALL.len() {
            let missing: Vec<&str> = Band::ALL
                .iter()
                .enumerate()
                .filter(|(i, _)| !files.bands.contains_key(i))
                .map(|(_, b)| b.name())
                .collect();
            return Err(Error::Load {
                entry: id,
                reason: format!("missing band file(s): {}", missing.join(", ")),
            });
        }
        for path in files.bands.values() {
            let maxval = Pgm::read(path)?.maxval;
            let depth = BitDepth::from_maxval(maxval).ok_or_else(|| {
                Error::format(path, format!("maxval {maxval} is neither 255 nor 65535"))
            })?;
            match bit_depth {
                None => bit_depth = Some(depth),
                Some(d) if d == depth => {}
                Some(_) => return Err(Error::format(path, "bit depth differs from other patches")),
            }
        }
        entries.push(ManifestEntry {
            id,
            bands: files.bands.values().map(|p| relative(p)).collect(),
            mask: files.mask.as_deref().map(relative),
        });
    }

    let mut manifest = DatasetManifest::new(
        dir.to_path_buf(),
        split,
        Band::ALL.to_vec(),
        bit_depth.unwrap_or(BitDepth::Sixteen),
    );
    manifest.entries = entries;
    Ok(manifest)
}
