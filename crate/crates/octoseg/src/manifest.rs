//! Dataset manifests: line-oriented UTF-8, one record per line as
//! `image_path<TAB>mask_path<TAB>provenance_json`, preceded by a `#` header
//! carrying name, split tag, seed, and generator version. Paths are relative
//! to the manifest file.

use std::fs;
use std::path::{Path, PathBuf};

use octoseg_core::scene::{DocPlacement, Homography, Provenance};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, AppError, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DocPlacementJson {
    pub homography: [[f64; 3]; 3],
    pub template_w: usize,
    pub template_h: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProvenanceJson {
    pub background_id: u32,
    pub docs: Vec<DocPlacementJson>,
    pub text_blocks: Vec<(usize, usize, usize, usize)>,
    pub noise_sigma: f64,
    pub brightness: f64,
    pub augmentations: Vec<String>,
    pub seed: u64,
}

impl From<&Provenance> for ProvenanceJson {
    fn from(p: &Provenance) -> Self {
        ProvenanceJson {
            background_id: p.background_id,
            docs: p
                .docs
                .iter()
                .map(|d| DocPlacementJson {
                    homography: d.homography.m,
                    template_w: d.template_w,
                    template_h: d.template_h,
                })
                .collect(),
            text_blocks: p.text_blocks.clone(),
            noise_sigma: p.noise_sigma,
            brightness: p.brightness,
            augmentations: p.augmentations.clone(),
            seed: p.seed,
        }
    }
}

impl ProvenanceJson {
    pub fn to_provenance(&self) -> Provenance {
        Provenance {
            background_id: self.background_id,
            docs: self
                .docs
                .iter()
                .map(|d| DocPlacement {
                    homography: Homography { m: d.homography },
                    template_w: d.template_w,
                    template_h: d.template_h,
                })
                .collect(),
            text_blocks: self.text_blocks.clone(),
            noise_sigma: self.noise_sigma,
            brightness: self.brightness,
            augmentations: self.augmentations.clone(),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub image: String,
    pub mask: String,
    pub provenance: ProvenanceJson,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub name: String,
    pub split: String,
    pub seed: u64,
    pub version: u32,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn encode(&self) -> String {
        let mut out = format!(
            "# octoseg-manifest v{} name={} split={} seed={}\n",
            self.version, self.name, self.split, self.seed
        );
        for r in &self.records {
            let prov = serde_json::to_string(&r.provenance).expect("provenance serializes");
            out.push_str(&format!("{}\t{}\t{}\n", r.image, r.mask, prov));
        }
        out
    }

    pub fn decode(text: &str, origin: &Path) -> Result<Manifest> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        let mut name = String::new();
        let mut split = String::new();
        let mut seed = 0u64;
        let mut version = 0u32;
        if !header.starts_with("# octoseg-manifest") {
            return Err(AppError::Format(format!(
                "{}: missing manifest header line",
                origin.display()
            )));
        }
        for tok in header.split_whitespace() {
            if let Some(v) = tok.strip_prefix('v') {
                version = version.max(v.parse().unwrap_or(0));
            } else if let Some(v) = tok.strip_prefix("name=") {
                name = v.to_string();
            } else if let Some(v) = tok.strip_prefix("split=") {
                split = v.to_string();
            } else if let Some(v) = tok.strip_prefix("seed=") {
                seed = v.parse().unwrap_or(0);
            }
        }
        if version != MANIFEST_VERSION {
            return Err(AppError::Format(format!(
                "{}: unsupported manifest version {version}",
                origin.display()
            )));
        }
        let mut records = Vec::new();
        for (ln, line) in lines.enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(3, '\t');
            let (image, mask, prov) = match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), Some(c)) => (a, b, c),
                _ => {
                    return Err(AppError::Format(format!(
                        "{}: line {}: expected image<TAB>mask<TAB>provenance_json",
                        origin.display(),
                        ln + 2
                    )))
                }
            };
            let provenance: ProvenanceJson = serde_json::from_str(prov).map_err(|e| {
                AppError::Format(format!("{}: line {}: {e}", origin.display(), ln + 2))
            })?;
            records.push(ManifestRecord {
                image: image.to_string(),
                mask: mask.to_string(),
                provenance,
            });
        }
        Ok(Manifest {
            name,
            split,
            seed,
            version,
            records,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::atomic_write(path, self.encode().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::decode(&text, path)
    }
}

/// Resolve a manifest-relative path against the manifest's directory.
pub fn resolve(manifest_path: &Path, rel: &str) -> PathBuf {
    manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(rel)
}
