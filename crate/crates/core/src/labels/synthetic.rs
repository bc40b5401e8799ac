//! Overlapping-shapes dataset: rectangles, ellipses and triangles of random
//! classes painted in z-order over a background, rendered with per-class base
//! colours plus Gaussian noise.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, ManifestPair, SegMap};
use crate::error::{Error, Result};
use crate::kernel::layers::param_rng;
use crate::pnm::{write_pgm, write_ppm, RgbImage};
use crate::viz::hsv_to_rgb;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    /// Number of object classes; segmentation ids are `1..=k`, 0 is background.
    pub k: usize,
    pub shapes_per_image: usize,
    /// Standard deviation of the additive pixel noise, in 8-bit units.
    pub noise_sigma: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 1,
            height: 64,
            width: 64,
            k: 3,
            shapes_per_image: 4,
            noise_sigma: 12.0,
        }
    }
}

/// Base colour of segmentation id `id` (0 = background) among `k` classes.
pub fn class_color(id: u8, k: usize) -> [u8; 3] {
    if id == 0 {
        return [112, 112, 112];
    }
    let hue = (id as f64 - 1.0) * 360.0 / k.max(1) as f64;
    hsv_to_rgb(hue, 0.7 * 255.0, 0.85 * 255.0)
}

enum Shape {
    Rect { cx: f64, cy: f64, a: f64, b: f64, cos: f64, sin: f64 },
    Ellipse { cx: f64, cy: f64, a: f64, b: f64, cos: f64, sin: f64 },
    Triangle { v: [(f64, f64); 3] },
}

impl Shape {
    fn random(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Shape {
        let side = h.min(w) as f64;
        let cx = rng.random_range(0.0..w as f64);
        let cy = rng.random_range(0.0..h as f64);
        let a = side * rng.random_range(0.08..0.3);
        let b = side * rng.random_range(0.08..0.3);
        let theta: f64 = rng.random_range(0.0..PI);
        let (sin, cos) = theta.sin_cos();
        match rng.random_range(0..3u8) {
            0 => Shape::Rect { cx, cy, a, b, cos, sin },
            1 => Shape::Ellipse { cx, cy, a, b, cos, sin },
            _ => {
                let r = side * rng.random_range(0.15..0.35);
                let mut v = [(0.0, 0.0); 3];
                for (i, p) in v.iter_mut().enumerate() {
                    let ang = theta * 2.0 + i as f64 * 2.0 * PI / 3.0 + rng.random_range(-0.4..0.4);
                    let rr = r * rng.random_range(0.6..1.0);
                    *p = (cx + rr * ang.cos(), cy + rr * ang.sin());
                }
                Shape::Triangle { v }
            }
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Rect { cx, cy, a, b, cos, sin } => {
                let (dx, dy) = (x - cx, y - cy);
                let (u, v) = (dx * cos + dy * sin, -dx * sin + dy * cos);
                u.abs() <= a && v.abs() <= b
            }
            Shape::Ellipse { cx, cy, a, b, cos, sin } => {
                let (dx, dy) = (x - cx, y - cy);
                let (u, v) = (dx * cos + dy * sin, -dx * sin + dy * cos);
                (u / a).powi(2) + (v / b).powi(2) <= 1.0
            }
            Shape::Triangle { v } => {
                let cross = |(ax, ay): (f64, f64), (bx, by): (f64, f64)| (bx - ax) * (y - ay) - (by - ay) * (x - ax);
                let d = [cross(v[0], v[1]), cross(v[1], v[2]), cross(v[2], v[0])];
                d.iter().all(|&s| s >= 0.0) || d.iter().all(|&s| s <= 0.0)
            }
        }
    }
}

/// Renders image `index` of the dataset defined by `cfg`. The random stream
/// depends only on `(cfg.seed, index)`.
pub fn generate_sample(cfg: &SyntheticConfig, index: usize) -> (RgbImage, SegMap) {
    let mut rng = param_rng(cfg.seed, index);
    let (h, w) = (cfg.height, cfg.width);
    let mut seg = SegMap::filled(h, w, 0);
    for _ in 0..cfg.shapes_per_image {
        let class = rng.random_range(1..=cfg.k.max(1)) as u8;
        let shape = Shape::random(&mut rng, h, w);
        for y in 0..h {
            for x in 0..w {
                if shape.contains(x as f64 + 0.5, y as f64 + 0.5) {
                    seg.set(y, x, class);
                }
            }
        }
    }
    let noise = Normal::new(0.0, cfg.noise_sigma.max(0.0)).expect("finite sigma");
    let mut img = RgbImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let base = class_color(seg.get(y, x), cfg.k);
            let mut px = [0u8; 3];
            for (p, &b) in px.iter_mut().zip(&base) {
                let v = b as f64 + noise.sample(&mut rng);
                *p = v.round().clamp(0.0, 255.0) as u8;
            }
            img.put(y, x, px);
        }
    }
    (img, seg)
}

/// Writes images `first_index..first_index + n_images` as `images/NNNNN.ppm`
/// and `segs/NNNNN.pgm` under `dir`, plus `manifest.json`.
pub fn write_synthetic(
    dir: impl AsRef<Path>,
    cfg: &SyntheticConfig,
    split: &str,
    first_index: usize,
    n_images: usize,
) -> Result<DatasetManifest> {
    if cfg.k < 1 || cfg.k > 254 {
        return Err(Error::config(format!("synthetic k = {} out of range 1..=254", cfg.k)));
    }
    let dir = dir.as_ref();
    for sub in ["images", "segs"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut pairs = Vec::with_capacity(n_images);
    for i in first_index..first_index + n_images {
        let (img, seg) = generate_sample(cfg, i);
        let image = format!("images/{i:05}.ppm");
        let segp = format!("segs/{i:05}.pgm");
        write_ppm(dir.join(&image), &img)?;
        write_pgm(dir.join(&segp), &seg.to_gray())?;
        pairs.push(ManifestPair { image, seg: segp });
    }
    let manifest = DatasetManifest {
        split: split.to_string(),
        k: cfg.k,
        classes: (1..=cfg.k).map(|c| format!("class{c}")).collect(),
        pairs,
        root: dir.to_path_buf(),
    };
    manifest.save(dir.join("manifest.json"))?;
    Ok(manifest)
}
