use std::collections::{BTreeMap, VecDeque};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::arch::{save_checkpoint, ArchVariant, Head, NetworkGraph, Outputs};
use crate::error::{Error, Result};
use crate::kernel::{Scalar, Shape, Tape, Tensor, Var};
use crate::labels::{
    seg_to_multiclass_labels, seg_to_training_edges, CropMirror, DatasetManifest, EdgeLabelStack, LabelMap,
};
use crate::loss::{binary_edge_loss, compute_beta, multilabel_loss, reweighted_softmax_loss, LossValue};
use crate::pnm::{write_pgm, write_ppm, RgbImage};

/// Supervision for one crop.
#[derive(Clone, Debug, PartialEq)]
pub struct Targets {
    pub edges: EdgeLabelStack,
    /// Single-label map for the softmax head.
    pub multiclass: Option<LabelMap>,
}

/// One training image with labels at full resolution.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub image: RgbImage,
    pub targets: Targets,
}

impl TrainSample {
    fn crop(&self, t: &CropMirror) -> Result<(RgbImage, Targets)> {
        Ok((
            t.apply_rgb(&self.image)?,
            Targets {
                edges: t.apply_stack(&self.targets.edges)?,
                multiclass: self.targets.multiclass.as_ref().map(|l| t.apply_labels(l)).transpose()?,
            },
        ))
    }
}

/// Loads every pair of `manifest` and builds its training labels.
pub fn load_training_set(manifest: &DatasetManifest, cfg: &RunConfig) -> Result<Vec<TrainSample>> {
    if manifest.k != cfg.k {
        return Err(Error::config(format!(
            "dataset has k = {} but the run is configured for k = {}",
            manifest.k, cfg.k
        )));
    }
    let space = cfg.label_space();
    (0..manifest.pairs.len())
        .map(|i| {
            let image = manifest.load_image(i)?;
            let seg = manifest.load_seg(i)?;
            let multiclass = (cfg.head == Head::Softmax).then(|| seg_to_multiclass_labels(&seg, cfg.label_radius, space));
            Ok(TrainSample {
                image,
                targets: Targets {
                    edges: seg_to_training_edges(&seg, cfg.label_radius, space),
                    multiclass,
                },
            })
        })
        .collect()
}

/// Maps bytes to `(v / 255 - 0.5) / 0.25`, giving a 1 x 3 x H x W tensor.
pub fn image_tensor<T: Scalar>(img: &RgbImage) -> Tensor<T> {
    let (h, w) = (img.height, img.width);
    Tensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| {
        T::of((img.data[(y * w + x) * 3 + c] as f64 / 255.0 - 0.5) / 0.25)
    })
}

/// Attaches the losses of `net`'s variant to a recorded forward pass and
/// returns their values together with the backward seeds.
///
/// Stream names: `side1`..`side5` and `fused` for the class outputs,
/// `side1-edge`..`side3-edge` for the binary feature losses.
pub fn variant_loss<T: Scalar>(
    net: &NetworkGraph<T>,
    tape: &Tape<T>,
    outputs: &Outputs,
    targets: &Targets,
) -> Result<(LossValue, Vec<(Var, Tensor<T>)>)> {
    let mut value = LossValue::default();
    let mut seeds = Vec::new();
    if net.head == Head::Softmax {
        let labels = targets
            .multiclass
            .as_ref()
            .ok_or_else(|| Error::config("softmax head needs multi-class labels"))?;
        let term = reweighted_softmax_loss(tape.value(outputs.fused), labels)?;
        value.add("fused", term.value);
        seeds.push((outputs.fused, term.grad));
        return Ok((value, seeds));
    }
    let beta = compute_beta(&targets.edges)?;
    let mut class_loss = |name: String, v: Var| -> Result<()> {
        let term = multilabel_loss(tape.value(v), &targets.edges, beta)?;
        value.add(name, term.value);
        seeds.push((v, term.grad));
        Ok(())
    };
    match net.variant {
        ArchVariant::Basic | ArchVariant::CaseNetMinus => class_loss("fused".into(), outputs.fused)?,
        ArchVariant::Dsn | ArchVariant::CaseNet | ArchVariant::CaseNetEdge => {
            for &(n, v) in &outputs.side_activations {
                class_loss(format!("side{n}"), v)?;
            }
            class_loss("fused".into(), outputs.fused)?;
        }
    }
    if net.variant == ArchVariant::CaseNetEdge {
        let any = targets.edges.collapse_any();
        let beta = compute_beta(&any)?;
        for &(n, v) in &outputs.side_features {
            let term = binary_edge_loss(tape.value(v), &any, beta)?;
            value.add(format!("side{n}-edge"), term.value);
            seeds.push((v, term.grad));
        }
    }
    Ok((value, seeds))
}

/// One line of the training log: mean per-pass losses of one update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: usize,
    pub lr: f64,
    pub total: f64,
    pub losses: BTreeMap<String, f64>,
    /// Trailing mean over the last `MOVING_WINDOW` updates.
    pub moving_average: BTreeMap<String, f64>,
}

pub const MOVING_WINDOW: usize = 20;

pub struct TrainOutcome {
    pub network: NetworkGraph<f32>,
    pub log: Vec<TrainRecord>,
}

/// Seeded sampler over shuffled epochs of the training set.
struct Sampler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    next: usize,
}

impl Sampler {
    fn new(seed: u64, n: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        Sampler {
            rng,
            order: (0..n).collect(),
            next: n,
        }
    }

    fn draw(&mut self) -> usize {
        if self.next == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.next = 0;
        }
        self.next += 1;
        self.order[self.next - 1]
    }
}

/// Trains a fresh network on `data`.
///
/// With `out_dir` set, writes `train_log.jsonl`, periodic checkpoints
/// `step_NNNNNN.sedw` and the final `model.sedw`; a non-finite loss or
/// gradient dumps the offending crop to `out_dir/nan_dump/` before failing.
pub fn train(cfg: &RunConfig, data: &[TrainSample], out_dir: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() && cfg.max_steps > 0 {
        return Err(Error::data("training set is empty"));
    }
    let mut net = NetworkGraph::<f32>::build(cfg.variant, cfg.head, cfg.k, cfg.backbone.clone(), cfg.seed)?;
    let sgd = cfg.sgd();
    let mut sampler = Sampler::new(cfg.seed, data.len());
    let mut log_file = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("train_log.jsonl");
            Some((BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?), path))
        }
        None => None,
    };
    let mut log = Vec::with_capacity(cfg.max_steps);
    let mut window: VecDeque<BTreeMap<String, f64>> = VecDeque::with_capacity(MOVING_WINDOW);
    for step in 0..cfg.max_steps {
        let mut sums = LossValue::default();
        for _ in 0..cfg.iter_size {
            let idx = sampler.draw();
            let sample = &data[idx];
            let mirror = cfg.mirror && sampler.rng.random_bool(0.5);
            let (h, w) = (sample.image.height, sample.image.width);
            let t = CropMirror::sample(&mut sampler.rng, h, w, (cfg.crop[0], cfg.crop[1]), mirror)?;
            let (img, targets) = sample.crop(&t)?;
            let value = pass(&mut net, &img, &targets).map_err(|e| match (e, out_dir) {
                (Error::Numeric(msg), Some(dir)) => match dump_batch(dir, step, idx, &t, &img, &targets) {
                    Ok(()) => Error::numeric(format!(
                        "{msg} at step {step}, image {idx}; crop dumped to {}",
                        dir.join("nan_dump").display()
                    )),
                    Err(dump) => Error::numeric(format!("{msg} at step {step}, image {idx}; dump failed: {dump}")),
                },
                (Error::Numeric(msg), None) => Error::numeric(format!("{msg} at step {step}, image {idx}")),
                (other, _) => other,
            })?;
            for (name, v) in value.breakdown {
                sums.add(name, v);
            }
        }
        let lr = cfg.lr_at(step);
        sgd.step(&mut net.params, lr)?;
        let scale = 1.0 / cfg.iter_size as f64;
        let losses: BTreeMap<String, f64> = sums.breakdown.iter().map(|(k, v)| (k.clone(), v * scale)).collect();
        if window.len() == MOVING_WINDOW {
            window.pop_front();
        }
        window.push_back(losses.clone());
        let moving_average = losses
            .keys()
            .map(|k| {
                let m = window.iter().filter_map(|w| w.get(k)).sum::<f64>() / window.len() as f64;
                (k.clone(), m)
            })
            .collect();
        let record = TrainRecord {
            step: step + 1,
            lr,
            total: sums.total * scale,
            losses,
            moving_average,
        };
        if let Some((w, path)) = log_file.as_mut() {
            let line = serde_json::to_string(&record).expect("record serializes");
            writeln!(w, "{line}").map_err(|e| Error::io(&*path, e))?;
        }
        log.push(record);
        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.max_steps {
                save_checkpoint(&net, dir.join(format!("step_{:06}.sedw", step + 1)))?;
            }
        }
    }
    if let Some((mut w, path)) = log_file {
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    if let Some(dir) = out_dir {
        save_checkpoint(&net, dir.join("model.sedw"))?;
    }
    Ok(TrainOutcome { network: net, log })
}

/// Forward, loss and backward of one crop, accumulating parameter gradients.
fn pass(net: &mut NetworkGraph<f32>, img: &RgbImage, targets: &Targets) -> Result<LossValue> {
    let mut tape = Tape::new();
    let outputs = net.forward(&mut tape, image_tensor(img))?;
    let (value, seeds) = variant_loss(net, &tape, &outputs, targets)?;
    if !value.total.is_finite() {
        return Err(Error::numeric(format!("non-finite loss {}", value.total)));
    }
    tape.backward(&mut net.params, seeds)?;
    Ok(value)
}

fn dump_batch(dir: &Path, step: usize, index: usize, t: &CropMirror, img: &RgbImage, targets: &Targets) -> Result<()> {
    let d = dir.join("nan_dump");
    std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    write_ppm(d.join("image.ppm"), img)?;
    write_pgm(d.join("edges.pgm"), &targets.edges.to_gray())?;
    let info = serde_json::json!({
        "step": step,
        "image_index": index,
        "crop": {"y0": t.y0, "x0": t.x0, "height": t.height, "width": t.width, "mirror": t.mirror},
    });
    let path = d.join("info.json");
    std::fs::write(&path, serde_json::to_string_pretty(&info).expect("json") + "\n").map_err(|e| Error::io(&path, e))
}
