use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::labels::{
    seg_to_eval_boundaries, seg_to_multiclass_labels, seg_to_training_edges, write_synthetic, DatasetManifest,
    LabelSpace, SyntheticConfig,
};
use crate::pnm::{write_pgm, GrayImage};

/// Writes a synthetic dataset as `out/train` and `out/test`.
///
/// Test images continue the index sequence after the training images, so the
/// two splits never share a sample. A non-empty `out` is refused unless
/// `force` is set.
pub fn gen_data(
    out: &Path,
    cfg: &SyntheticConfig,
    n_train: usize,
    n_test: usize,
    force: bool,
) -> Result<(DatasetManifest, DatasetManifest)> {
    if out.exists() {
        let mut entries = std::fs::read_dir(out).map_err(|e| Error::io(out, e))?;
        if entries.next().is_some() && !force {
            return Err(Error::config(format!(
                "{} is not empty; pass --force to overwrite",
                out.display()
            )));
        }
        if force {
            for split in ["train", "test"] {
                let d = out.join(split);
                if d.exists() {
                    std::fs::remove_dir_all(&d).map_err(|e| Error::io(&d, e))?;
                }
            }
        }
    }
    let train = write_synthetic(out.join("train"), cfg, "train", 0, n_train)?;
    let test = write_synthetic(out.join("test"), cfg, "test", n_train, n_test)?;
    Ok((train, test))
}

/// Exports the labels derived from every segmentation of `manifest`:
/// `<stem>.train.pgm` and `<stem>.eval.pgm` (class planes stacked
/// vertically, 0/255) and `<stem>.multiclass.pgm` (0 = non-edge, c = class c).
pub fn make_labels(manifest: &DatasetManifest, out: &Path, radius: usize, space: LabelSpace) -> Result<Vec<PathBuf>> {
    if radius == 0 {
        return Err(Error::config("label radius must be at least 1"));
    }
    if space.k != manifest.k {
        return Err(Error::config(format!(
            "labels requested for k = {} but the dataset has {}",
            space.k, manifest.k
        )));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    for i in 0..manifest.pairs.len() {
        let seg = manifest.load_seg(i)?;
        let stem = manifest.stem(i);
        let train = out.join(format!("{stem}.train.pgm"));
        write_pgm(&train, &seg_to_training_edges(&seg, radius, space).to_gray())?;
        let eval = out.join(format!("{stem}.eval.pgm"));
        write_pgm(&eval, &seg_to_eval_boundaries(&seg, space).to_gray())?;
        let multi = seg_to_multiclass_labels(&seg, radius, space);
        let mc = out.join(format!("{stem}.multiclass.pgm"));
        write_pgm(
            &mc,
            &GrayImage {
                width: multi.width(),
                height: multi.height(),
                data: multi.data().to_vec(),
            },
        )?;
        written.extend([train, eval, mc]);
    }
    Ok(written)
}
