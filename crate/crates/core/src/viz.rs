//! Multi-label edge visualization.
//!
//! Each class owns a hue. A pixel's hue is the response-weighted mean of the
//! class hues, its saturation the strongest response, its value always full.
//! The hue mean is linear in degrees, so hues on either side of 0/360 mix to
//! something in between rather than wrapping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::ProbMaps;
use crate::pnm::RgbImage;

pub const CITYSCAPES_CLASSES: [&str; 19] = [
    "road",
    "sidewalk",
    "building",
    "wall",
    "fence",
    "pole",
    "traffic light",
    "traffic sign",
    "vegetation",
    "terrain",
    "sky",
    "person",
    "rider",
    "car",
    "truck",
    "bus",
    "train",
    "motorcycle",
    "bicycle",
];

const CITYSCAPES_HUES: [f64; 19] = [
    359.0, 320.0, 40.0, 80.0, 90.0, 10.0, 20.0, 30.0, 140.0, 340.0, 280.0, 330.0, 350.0, 120.0,
    110.0, 130.0, 150.0, 160.0, 170.0,
];

/// One hue in degrees `[0, 360)` per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HueTable {
    pub hues: Vec<f64>,
    pub names: Vec<String>,
}

impl HueTable {
    pub fn new(hues: Vec<f64>, names: Vec<String>) -> Result<Self> {
        if hues.len() != names.len() {
            return Err(Error::config("hue table needs one name per hue"));
        }
        if let Some(h) = hues.iter().find(|h| !(0.0..360.0).contains(*h)) {
            return Err(Error::config(format!("hue {h} outside [0, 360)")));
        }
        Ok(HueTable { hues, names })
    }

    /// `k` hues spread evenly around the circle.
    pub fn evenly_spaced(k: usize) -> Self {
        HueTable {
            hues: (0..k).map(|i| i as f64 * 360.0 / k as f64).collect(),
            names: (0..k).map(|i| format!("class{}", i + 1)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.hues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hues.is_empty()
    }
}

/// The 19-class street-scene table.
pub fn cityscapes_hue_table() -> HueTable {
    HueTable {
        hues: CITYSCAPES_HUES.to_vec(),
        names: CITYSCAPES_CLASSES.iter().map(|s| s.to_string()).collect(),
    }
}

/// Sector-wise HSV to RGB with `h` in degrees and `s`, `v` on a 0-255 scale.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let s = (s / 255.0).clamp(0.0, 1.0);
    let v = (v / 255.0).clamp(0.0, 1.0);
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let byte = |u: f64| ((u + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [byte(r), byte(g), byte(b)]
}

/// Hue, saturation and value (0-255 scales) of one pixel's class responses.
///
/// With `top2_threshold`, responses below 0.5 are dropped and only the two
/// strongest survivors are kept. A pixel with no response is achromatic with
/// hue 0.
pub fn pixel_hsv(responses: &[f64], hues: &HueTable, top2_threshold: bool) -> (f64, f64, f64) {
    let mut active: Vec<(usize, f64)> = responses.iter().copied().enumerate().collect();
    if top2_threshold {
        active.retain(|&(_, y)| y >= 0.5);
        // stable sort keeps the lower class first on ties
        active.sort_by(|a, b| b.1.total_cmp(&a.1));
        active.truncate(2);
    }
    let sum: f64 = active.iter().map(|&(_, y)| y).sum();
    let max = active.iter().map(|&(_, y)| y).fold(0.0, f64::max);
    if sum <= 0.0 {
        return (0.0, 0.0, 255.0);
    }
    // normalized weights first, so a lone class maps to its hue exactly
    let hue = active.iter().map(|&(k, y)| (y / sum) * hues.hues[k]).sum::<f64>();
    (hue, 255.0 * max, 255.0)
}

pub fn encode_hsv(y: &ProbMaps, hues: &HueTable, top2_threshold: bool) -> Result<RgbImage> {
    if hues.len() != y.k {
        return Err(Error::config(format!(
            "hue table has {} entries for {} classes",
            hues.len(),
            y.k
        )));
    }
    let mut img = RgbImage::new(y.width, y.height);
    let plane = y.width * y.height;
    let mut responses = vec![0.0; y.k];
    for p in 0..plane {
        for (k, r) in responses.iter_mut().enumerate() {
            *r = y.data[k * plane + p] as f64;
        }
        let (h, s, v) = pixel_hsv(&responses, hues, top2_threshold);
        img.put(p / y.width, p % y.width, hsv_to_rgb(h, s, v));
    }
    Ok(img)
}

pub const TRUE_POSITIVE: [u8; 3] = [0, 255, 0];
pub const FALSE_NEGATIVE: [u8; 3] = [0, 0, 255];
pub const FALSE_POSITIVE: [u8; 3] = [255, 0, 0];
pub const TRUE_NEGATIVE: [u8; 3] = [255, 255, 255];

/// Green, blue, red and white for true positive, false negative, false
/// positive and true negative pixels.
pub fn tp_fp_overlay(pred: &[u8], gt: &[u8], height: usize, width: usize) -> Result<RgbImage> {
    if pred.len() != height * width || gt.len() != height * width {
        return Err(Error::data(format!(
            "overlay inputs of {} and {} pixels for a {height}x{width} image",
            pred.len(),
            gt.len()
        )));
    }
    let mut img = RgbImage::new(width, height);
    for (i, (&p, &g)) in pred.iter().zip(gt).enumerate() {
        let color = match (p != 0, g != 0) {
            (true, true) => TRUE_POSITIVE,
            (false, true) => FALSE_NEGATIVE,
            (true, false) => FALSE_POSITIVE,
            (false, false) => TRUE_NEGATIVE,
        };
        img.put(i / width, i % width, color);
    }
    Ok(img)
}

/// One grayscale rendering per class, white background with dark edges.
pub fn per_class_gray(y: &ProbMaps) -> Vec<RgbImage> {
    (0..y.k)
        .map(|k| {
            let mut img = RgbImage::new(y.width, y.height);
            for (i, &v) in y.plane(k).iter().enumerate() {
                let g = (255.0 * (1.0 - v.clamp(0.0, 1.0) as f64)).round() as u8;
                img.put(i / y.width, i % y.width, [g, g, g]);
            }
            img
        })
        .collect()
}
