use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SegMap;
use crate::error::{Error, Result};
use crate::pnm::{read_pgm, read_ppm, RgbImage};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestPair {
    pub image: String,
    pub seg: String,
}

/// One dataset split on disk. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(default)]
    pub split: String,
    pub k: usize,
    pub classes: Vec<String>,
    pub pairs: Vec<ManifestPair>,
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if m.classes.len() != m.k {
            return Err(Error::data(format!(
                "manifest lists {} class names for k = {}",
                m.classes.len(),
                m.k
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn image_path(&self, i: usize) -> PathBuf {
        self.root.join(&self.pairs[i].image)
    }

    pub fn seg_path(&self, i: usize) -> PathBuf {
        self.root.join(&self.pairs[i].seg)
    }

    /// File stem of the `i`-th image, used to name per-image outputs.
    pub fn stem(&self, i: usize) -> String {
        Path::new(&self.pairs[i].image)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("{i:05}"))
    }

    pub fn load_image(&self, i: usize) -> Result<RgbImage> {
        read_ppm(self.image_path(i))
    }

    pub fn load_seg(&self, i: usize) -> Result<SegMap> {
        Ok(SegMap::from_gray(read_pgm(self.seg_path(i))?))
    }

    /// Loads every pair and checks that image and segmentation sizes agree.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.pairs.len() {
            let img = self.load_image(i)?;
            let seg = self.load_seg(i)?;
            if (img.height, img.width) != (seg.height(), seg.width()) {
                return Err(Error::data(format!(
                    "pair {i}: image {}x{} vs segmentation {}x{}",
                    img.height,
                    img.width,
                    seg.height(),
                    seg.width()
                )));
            }
        }
        Ok(())
    }
}
