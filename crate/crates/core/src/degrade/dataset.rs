use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{degrade, derive_seed, procedural_scene, resize_area, sample_params, DegradationParams, Preset};
use crate::engine::Tensor;
use crate::image_io::{from_tensor, is_image_file, read_image, to_tensor, write_png};
use crate::{par, Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Parameter(format!("unknown split {s:?}"))),
        }
    }
}

/// 80/10/10 assignment from the FNV-1a hash of the id.
pub fn split_of(id: &str) -> Split {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    match h % 10 {
        0..=7 => Split::Train,
        8 => Split::Val,
        _ => Split::Test,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub params: DegradationParams,
}

/// A source file that could not be decoded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedInput {
    pub file: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u16,
    pub seed: u64,
    pub preset: Preset,
    pub size: usize,
    pub entries: Vec<ManifestEntry>,
    #[serde(default)]
    pub skipped: Vec<SkippedInput>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

/// Clean and distorted versions of one image, both `1 x 3 x H x W`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePair {
    pub id: String,
    pub clean: Tensor,
    pub distorted: Tensor,
    pub params: DegradationParams,
}

fn load_sources(dir: &Path, size: usize) -> Result<(Vec<Tensor>, Vec<SkippedInput>)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image_file(p))
        .collect();
    paths.sort();
    let mut sources = Vec::new();
    let mut skipped = Vec::new();
    for path in paths {
        let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        match read_image(&path) {
            Ok(img) => sources.push(resize_area(&to_tensor::<f32>(&img), size, size)?),
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                skipped.push(SkippedInput {
                    file,
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok((sources, skipped))
}

/// Writes `count` pairs of `size x size` images into `out_dir` together with
/// a manifest.
///
/// Clean images come from `clean_dir` (cycled if there are fewer than
/// `count`, each resized by area interpolation) or, without a directory,
/// from [`procedural_scene`]. Undecodable files are skipped and listed in
/// the manifest.
pub fn build_dataset(
    clean_dir: Option<&Path>,
    out_dir: &Path,
    count: usize,
    size: usize,
    preset: Preset,
    seed: u64,
) -> Result<DatasetManifest> {
    if count == 0 || size == 0 {
        return Err(Error::Empty(format!("dataset of {count} images at size {size}")));
    }
    let (sources, skipped) = match clean_dir {
        Some(dir) => load_sources(dir, size)?,
        None => (Vec::new(), Vec::new()),
    };
    if let Some(dir) = clean_dir.filter(|_| sources.is_empty()) {
        return Err(Error::Empty(format!("no decodable images in {}", dir.display())));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let width = count.to_string().len().max(5);
    let entries = par::map_range(count, |i| -> Result<ManifestEntry> {
        let id = format!("{i:0width$}");
        let item_seed = derive_seed(seed, i as u64);
        let clean_img = match sources.is_empty() {
            true => from_tensor(&procedural_scene(item_seed, size, size)?, 0)?,
            false => from_tensor(&sources[i % sources.len()], 0)?,
        };
        let params = sample_params(derive_seed(item_seed, 1), preset);
        // degrade the quantised clean image so the stored pair is consistent
        let distorted = degrade(&to_tensor::<f32>(&clean_img), &params)?;
        write_png(&clean_img, out_dir.join(format!("{id}_clean.png")))?;
        write_png(&from_tensor(&distorted, 0)?, out_dir.join(format!("{id}_distorted.png")))?;
        Ok(ManifestEntry {
            split: split_of(&id),
            id,
            params,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        seed,
        preset,
        size,
        entries,
        skipped,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Version {
            found: manifest.version,
            expected: MANIFEST_VERSION,
        });
    }
    Ok(manifest)
}

/// Loads the pairs of one split, in manifest order.
pub fn load_split(dir: &Path, split: Split) -> Result<Vec<ImagePair>> {
    let manifest = load_manifest(dir)?;
    let entries: Vec<&ManifestEntry> = manifest.split(split).collect();
    par::map_slice(&entries, |e| {
        Ok(ImagePair {
            id: e.id.clone(),
            clean: to_tensor(&read_image(dir.join(format!("{}_clean.png", e.id)))?),
            distorted: to_tensor(&read_image(dir.join(format!("{}_distorted.png", e.id)))?),
            params: e.params.clone(),
        })
    })
    .into_iter()
    .collect()
}
