use serde::{Deserialize, Serialize};

use super::matching::match_maps;
use super::thin::thin;
use crate::error::{Error, Result};
use crate::labels::{downsample_half_binary, downsample_half_probs, EdgeLabelStack, ProbMaps};

/// Dataset-aggregated counts at one threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall as `2tp / (2tp + fp + fn)`,
    /// a single rounding; 0 when nothing matched.
    pub fn f_measure(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    /// Ground-truth pixel count, identical at every threshold.
    pub fn gt_total(&self) -> u64 {
        self.tp + self.fn_
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn f_measure(p: f64, r: f64) -> f64 {
    if p + r <= 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// `0.01, 0.02, ..., 0.99`.
pub fn default_thresholds() -> Vec<f64> {
    (1..=99).map(|i| i as f64 / 100.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Matching tolerance as a fraction of the (evaluated) image diagonal.
    pub max_dist_frac: f64,
    pub thresholds: Vec<f64>,
    /// Halve prediction and ground truth resolution before matching.
    pub halve: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            max_dist_frac: 0.02,
            thresholds: default_thresholds(),
            halve: false,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(Error::config("threshold grid is empty"));
        }
        if self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("thresholds must be strictly increasing"));
        }
        if self.thresholds.iter().any(|&t| t <= 0.0 || t >= 1.0) {
            return Err(Error::config("thresholds must lie in (0, 1)"));
        }
        if !(self.max_dist_frac >= 0.0) {
            return Err(Error::config("matching tolerance must be nonnegative"));
        }
        Ok(())
    }
}

/// Per-class precision/recall counts over a shared threshold grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrTable {
    pub thresholds: Vec<f64>,
    /// `counts[class][threshold]`.
    pub counts: Vec<Vec<Counts>>,
}

impl PrTable {
    pub fn new(k: usize, thresholds: Vec<f64>) -> Self {
        let n = thresholds.len();
        PrTable {
            thresholds,
            counts: vec![vec![Counts::default(); n]; k],
        }
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    /// Thresholds, thins and matches one image, adding its counts.
    pub fn add_image(&mut self, pred: &ProbMaps, gt: &EdgeLabelStack, cfg: &BenchConfig) -> Result<()> {
        let counts = image_counts(pred, gt, cfg, &self.thresholds)?;
        for (acc, img) in self.counts.iter_mut().zip(counts) {
            for (a, c) in acc.iter_mut().zip(img) {
                a.tp += c.tp;
                a.fp += c.fp;
                a.fn_ += c.fn_;
            }
        }
        Ok(())
    }

    pub fn gt_totals(&self) -> Vec<u64> {
        self.counts
            .iter()
            .map(|c| c.first().map_or(0, Counts::gt_total))
            .collect()
    }
}

/// Counts of one image, `[class][threshold]`.
pub fn image_counts(
    pred: &ProbMaps,
    gt: &EdgeLabelStack,
    cfg: &BenchConfig,
    thresholds: &[f64],
) -> Result<Vec<Vec<Counts>>> {
    if (pred.k, pred.height, pred.width) != (gt.k(), gt.height(), gt.width()) {
        return Err(Error::data(format!(
            "prediction {}x{}x{} does not match ground truth {}x{}x{}",
            pred.k,
            pred.height,
            pred.width,
            gt.k(),
            gt.height(),
            gt.width()
        )));
    }
    let (pred, gt) = if cfg.halve {
        let mut g = downsample_half_binary(gt);
        for k in 0..g.k() {
            let t = thin(g.plane(k), g.height(), g.width());
            g.plane_mut(k).copy_from_slice(&t);
        }
        (downsample_half_probs(pred), g)
    } else {
        (pred.clone(), gt.clone())
    };
    let (h, w) = (pred.height, pred.width);
    let max_dist = cfg.max_dist_frac * ((h * h + w * w) as f64).sqrt();
    let mut out = Vec::with_capacity(pred.k);
    let mut binary = vec![0u8; h * w];
    for k in 0..pred.k {
        let probs = pred.plane(k);
        let g = gt.plane(k);
        let mut row = Vec::with_capacity(thresholds.len());
        let mut last: Option<(Vec<u8>, Counts)> = None;
        for &t in thresholds {
            for (b, &p) in binary.iter_mut().zip(probs) {
                *b = (p as f64 >= t) as u8;
            }
            if let Some((prev, c)) = &last {
                if *prev == binary {
                    row.push(*c);
                    continue;
                }
            }
            let thinned = thin(&binary, h, w);
            let m = match_maps(&thinned, g, w, max_dist);
            let c = Counts {
                tp: m.tp as u64,
                fp: m.fp as u64,
                fn_: m.fn_ as u64,
            };
            row.push(c);
            last = Some((binary.clone(), c));
        }
        out.push(row);
    }
    Ok(out)
}

/// Builds the table for a whole dataset.
pub fn pr_table(preds: &[ProbMaps], gts: &[EdgeLabelStack], cfg: &BenchConfig) -> Result<PrTable> {
    cfg.validate()?;
    if preds.len() != gts.len() {
        return Err(Error::data(format!(
            "{} predictions for {} ground-truth images",
            preds.len(),
            gts.len()
        )));
    }
    let k = gts.first().map_or(0, EdgeLabelStack::k);
    let mut table = PrTable::new(k, cfg.thresholds.clone());
    for (p, g) in preds.iter().zip(gts) {
        table.add_image(p, g, cfg)?;
    }
    Ok(table)
}

/// Best dataset-level F-measure of one class and the threshold reaching it
/// (the lowest such threshold on ties).
pub fn class_mf(thresholds: &[f64], counts: &[Counts]) -> (f64, f64) {
    let mut best = (0.0, thresholds.first().copied().unwrap_or(0.0));
    for (&t, c) in thresholds.iter().zip(counts) {
        let f = c.f_measure();
        if f > best.0 {
            best = (f, t);
        }
    }
    best
}

/// Area under the precision envelope of `(recall, precision)` points.
///
/// Points are sorted by recall; each precision is replaced by the maximum
/// precision at equal or higher recall, and the step function is integrated
/// from recall 0.
pub fn average_precision(points: &[(f64, f64)]) -> f64 {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut envelope = vec![0.0; pts.len()];
    let mut run = 0.0f64;
    for i in (0..pts.len()).rev() {
        run = run.max(pts[i].1);
        envelope[i] = run;
    }
    let mut area = 0.0;
    let mut prev_r = 0.0;
    for (i, &(r, _)) in pts.iter().enumerate() {
        area += (r - prev_r) * envelope[i];
        prev_r = r;
    }
    area
}

pub fn class_ap(counts: &[Counts]) -> f64 {
    let pts: Vec<_> = counts.iter().map(|c| (c.recall(), c.precision())).collect();
    average_precision(&pts)
}

/// Per-class scores plus the mean over classes with ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassScores {
    pub per_class: Vec<f64>,
    pub mean: f64,
}

fn mean_over(values: &[f64], include: &[bool]) -> f64 {
    let kept: Vec<f64> = values
        .iter()
        .zip(include)
        .filter(|(_, &i)| i)
        .map(|(&v, _)| v)
        .collect();
    if kept.is_empty() {
        0.0
    } else {
        kept.iter().sum::<f64>() / kept.len() as f64
    }
}

/// Maximum F-measure at the optimal dataset-wide threshold, per class.
pub fn mf_ods(table: &PrTable) -> ClassScores {
    let per_class: Vec<f64> = table
        .counts
        .iter()
        .map(|c| class_mf(&table.thresholds, c).0)
        .collect();
    let include: Vec<bool> = table.gt_totals().iter().map(|&n| n > 0).collect();
    ClassScores {
        mean: mean_over(&per_class, &include),
        per_class,
    }
}

pub fn ap(table: &PrTable) -> ClassScores {
    let per_class: Vec<f64> = table.counts.iter().map(|c| class_ap(c)).collect();
    let include: Vec<bool> = table.gt_totals().iter().map(|&n| n > 0).collect();
    ClassScores {
        mean: mean_over(&per_class, &include),
        per_class,
    }
}
