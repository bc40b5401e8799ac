use std::path::{Path, PathBuf};

use super::predfile::{read_prediction, write_prediction};
use super::train::image_tensor;
use crate::arch::{Head, NetworkGraph, STAGE_STRIDES};
use crate::bench::{pr_table, BenchConfig, EvalReport, PrTable};
use crate::error::{Error, Result};
use crate::kernel::{sigmoid_scalar, Tape};
use crate::labels::{seg_to_eval_boundaries, DatasetManifest, LabelSpace, ProbMaps};
use crate::pnm::RgbImage;

fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let i = i % period;
    if i < n {
        i
    } else {
        period - i
    }
}

/// Pads bottom and right edges by reflection up to multiples of `multiple`.
pub fn reflect_pad(img: &RgbImage, multiple: usize) -> RgbImage {
    let h = img.height.div_ceil(multiple).max(1) * multiple;
    let w = img.width.div_ceil(multiple).max(1) * multiple;
    if (h, w) == (img.height, img.width) {
        return img.clone();
    }
    let mut out = RgbImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            out.put(y, x, img.pixel(reflect(y, img.height), reflect(x, img.width)));
        }
    }
    out
}

/// Edge probabilities of the fused output, at the image's own size.
///
/// Sigmoid heads yield `sigmoid(A)`; the softmax head yields the
/// probabilities of the K edge classes.
pub fn predict_image(net: &NetworkGraph<f32>, img: &RgbImage) -> Result<ProbMaps> {
    if img.height == 0 || img.width == 0 {
        return Err(Error::data("cannot predict on an empty image"));
    }
    let padded = reflect_pad(img, STAGE_STRIDES[4]);
    let mut tape = Tape::new();
    let outputs = net.forward(&mut tape, image_tensor(&padded))?;
    let a = tape.value(outputs.fused);
    let s = a.shape();
    let (h, w, k) = (img.height, img.width, net.k);
    let mut data = vec![0.0f32; k * h * w];
    for y in 0..h {
        for x in 0..w {
            match net.head {
                Head::Sigmoid => {
                    for c in 0..k {
                        data[(c * h + y) * w + x] = sigmoid_scalar(a.at(0, c, y, x));
                    }
                }
                Head::Softmax => {
                    let m = (0..s.c).map(|c| a.at(0, c, y, x)).fold(f32::NEG_INFINITY, f32::max);
                    let z: f32 = (0..s.c).map(|c| (a.at(0, c, y, x) - m).exp()).sum();
                    for c in 0..k {
                        data[(c * h + y) * w + x] = (a.at(0, c + 1, y, x) - m).exp() / z;
                    }
                }
            }
        }
    }
    let maps = ProbMaps::new(k, h, w, data)?;
    if maps.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite prediction"));
    }
    Ok(maps)
}

pub fn prediction_path(dir: &Path, manifest: &DatasetManifest, i: usize) -> PathBuf {
    dir.join(format!("{}.sedp", manifest.stem(i)))
}

/// Writes one `<stem>.sedp` per manifest image into `out_dir`.
pub fn predict_manifest(net: &NetworkGraph<f32>, manifest: &DatasetManifest, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if manifest.k != net.k {
        return Err(Error::config(format!(
            "checkpoint predicts {} classes but the dataset has {}",
            net.k, manifest.k
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    (0..manifest.pairs.len())
        .map(|i| {
            let maps = predict_image(net, &manifest.load_image(i)?)?;
            let path = prediction_path(out_dir, manifest, i);
            write_prediction(&path, &maps)?;
            Ok(path)
        })
        .collect()
}

/// Single-pixel evaluation boundaries of every manifest image.
pub fn eval_ground_truth(manifest: &DatasetManifest, space: LabelSpace) -> Result<Vec<crate::labels::EdgeLabelStack>> {
    (0..manifest.pairs.len())
        .map(|i| Ok(seg_to_eval_boundaries(&manifest.load_seg(i)?, space)))
        .collect()
}

/// Scores the predictions in `pred_dir` against `manifest`.
pub fn evaluate_predictions(
    pred_dir: &Path,
    manifest: &DatasetManifest,
    space: LabelSpace,
    bench: &BenchConfig,
    config: serde_json::Value,
) -> Result<(EvalReport, PrTable)> {
    if space.k != manifest.k {
        return Err(Error::config(format!(
            "evaluation configured for k = {} but the dataset has {}",
            space.k, manifest.k
        )));
    }
    let preds = (0..manifest.pairs.len())
        .map(|i| read_prediction(prediction_path(pred_dir, manifest, i)))
        .collect::<Result<Vec<_>>>()?;
    let gts = eval_ground_truth(manifest, space)?;
    let table = pr_table(&preds, &gts, bench)?;
    let report = EvalReport::from_table(&table, &manifest.classes, preds.len(), bench, config);
    Ok((report, table))
}

/// Predicts and scores `manifest` in memory.
pub fn evaluate_network(
    net: &NetworkGraph<f32>,
    manifest: &DatasetManifest,
    space: LabelSpace,
    bench: &BenchConfig,
    config: serde_json::Value,
) -> Result<EvalReport> {
    let preds = (0..manifest.pairs.len())
        .map(|i| predict_image(net, &manifest.load_image(i)?))
        .collect::<Result<Vec<_>>>()?;
    let gts = eval_ground_truth(manifest, space)?;
    let table = pr_table(&preds, &gts, bench)?;
    Ok(EvalReport::from_table(&table, &manifest.classes, preds.len(), bench, config))
}
