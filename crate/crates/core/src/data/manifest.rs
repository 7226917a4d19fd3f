//! Dataset manifest: a TOML document with a header and an entry table.
//!
//! ```toml
//! format = "cal-manifest"
//! version = 1
//! root = "."                  # relative to the manifest's directory
//! split = "train"             # train | test
//! bands = ["red", "green", "blue", "nir"]
//! bit_depth = 16              # 8 | 16
//!
//! [[entries]]
//! id = "synth_0000"
//! bands = ["synth_0000_red.pgm", "synth_0000_green.pgm", "synth_0000_blue.pgm", "synth_0000_nir.pgm"]
//! mask = "synth_0000_mask.pgm"    # optional
//! ```
//!
//! Unknown keys are rejected.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Band;

pub const MANIFEST_FORMAT: &str = "cal-manifest";
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn maxval(self) -> u16 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }

    /// Divisor mapping raw samples onto `[0, 255]`.
    pub fn scale(self) -> f64 {
        match self {
            BitDepth::Eight => 1.0,
            BitDepth::Sixteen => 257.0,
        }
    }

    pub fn from_maxval(maxval: u16) -> Option<Self> {
        match maxval {
            255 => Some(BitDepth::Eight),
            65535 => Some(BitDepth::Sixteen),
            _ => None,
        }
    }
}

impl TryFrom<u8> for BitDepth {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            8 => Ok(BitDepth::Eight),
            16 => Ok(BitDepth::Sixteen),
            other => Err(format!("bit_depth must be 8 or 16, got {other}")),
        }
    }
}

impl From<BitDepth> for u8 {
    fn from(d: BitDepth) -> u8 {
        match d {
            BitDepth::Eight => 8,
            BitDepth::Sixteen => 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub bands: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub root: PathBuf,
    pub split: Split,
    pub bands: Vec<Band>,
    pub bit_depth: BitDepth,
    #[serde(default)]
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(
        root: impl Into<PathBuf>,
        split: Split,
        bands: Vec<Band>,
        bit_depth: BitDepth,
    ) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            root: root.into(),
            split,
            bands,
            bit_depth,
            entries: Vec::new(),
        }
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let manifest: Self =
            toml::from_str(text).map_err(|e| Error::format(origin, e.to_string()))?;
        manifest
            .validate()
            .map_err(|reason| Error::format(origin, reason))?;
        Ok(manifest)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.format != MANIFEST_FORMAT {
            return Err(format!(
                "format must be `{MANIFEST_FORMAT}`, got `{}`",
                self.format
            ));
        }
        if self.version != MANIFEST_VERSION {
            return Err(format!("unsupported manifest version {}", self.version));
        }
        if self.bands.is_empty() {
            return Err("manifest lists no bands".into());
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.id.as_str()) {
                return Err(format!("duplicate entry id `{}`", e.id));
            }
            if e.bands.len() != self.bands.len() {
                return Err(format!(
                    "entry `{}` lists {} band files, manifest has {} bands",
                    e.id,
                    e.bands.len(),
                    self.bands.len()
                ));
            }
        }
        Ok(())
    }

    /// Directory that entry paths are relative to, given where the manifest lives.
    pub fn resolve_root(&self, manifest_path: &Path) -> PathBuf {
        if self.root.is_absolute() {
            self.root.clone()
        } else {
            manifest_path
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join(&self.root)
        }
    }
}
