//! Ground truth: segmentation maps, multi-label edge stacks for training,
//! single-pixel boundaries for evaluation, and the synthetic shapes dataset.

mod augment;
mod manifest;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::bench::thin;
use crate::error::{Error, Result};
use crate::pnm::GrayImage;

pub use augment::{augment, CropMirror};
pub use manifest::{DatasetManifest, ManifestPair};
pub use synthetic::{class_color, generate_sample, write_synthetic, SyntheticConfig};

/// Per-pixel segmentation class ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegMap {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl SegMap {
    pub fn from_vec(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::data(format!(
                "segmentation of {height}x{width} needs {} ids, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(SegMap { height, width, data })
    }

    pub fn filled(height: usize, width: usize, id: u8) -> Self {
        SegMap {
            height,
            width,
            data: vec![id; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, id: u8) {
        self.data[y * self.width + x] = id;
    }

    pub fn from_gray(img: GrayImage) -> Self {
        SegMap {
            height: img.height,
            width: img.width,
            data: img.data,
        }
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.clone(),
        }
    }
}

/// K binary edge maps over one image; classes may overlap.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeLabelStack {
    k: usize,
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl EdgeLabelStack {
    pub fn zeros(k: usize, height: usize, width: usize) -> Self {
        EdgeLabelStack {
            k,
            height,
            width,
            data: vec![0; k * height * width],
        }
    }

    /// Builds from class-major planes; any nonzero byte is an edge.
    pub fn from_planes(k: usize, height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != k * height * width {
            return Err(Error::data(format!(
                "label stack {k}x{height}x{width} needs {} entries, got {}",
                k * height * width,
                data.len()
            )));
        }
        Ok(EdgeLabelStack {
            k,
            height,
            width,
            data: data.into_iter().map(|v| (v != 0) as u8).collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Class-major 0/1 entries.
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn plane(&self, k: usize) -> &[u8] {
        let p = self.height * self.width;
        &self.data[k * p..(k + 1) * p]
    }

    pub fn plane_mut(&mut self, k: usize) -> &mut [u8] {
        let p = self.height * self.width;
        &mut self.data[k * p..(k + 1) * p]
    }

    #[inline]
    pub fn get(&self, k: usize, y: usize, x: usize) -> bool {
        self.data[(k * self.height + y) * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, k: usize, y: usize, x: usize, on: bool) {
        self.data[(k * self.height + y) * self.width + x] = on as u8;
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// One map marking pixels that are an edge of at least one class.
    pub fn collapse_any(&self) -> EdgeLabelStack {
        let p = self.height * self.width;
        let mut out = EdgeLabelStack::zeros(1, self.height, self.width);
        for k in 0..self.k {
            for (o, &v) in out.data.iter_mut().zip(&self.data[k * p..(k + 1) * p]) {
                *o |= v;
            }
        }
        out
    }

    /// Planes stacked vertically as a `width x (K * height)` 0/255 image.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.k * self.height,
            data: self.data.iter().map(|&v| v * 255).collect(),
        }
    }

    pub fn from_gray(img: &GrayImage, k: usize) -> Result<Self> {
        if k == 0 || !img.height.is_multiple_of(k) {
            return Err(Error::data(format!(
                "image height {} is not a multiple of {k} planes",
                img.height
            )));
        }
        Self::from_planes(k, img.height / k, img.width, img.data.clone())
    }
}

/// Non-overlapping multi-class labels: 0 is non-edge, `1..=K` an edge class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn from_vec(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::data("label map size mismatch"));
        }
        Ok(LabelMap { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn non_edge_fraction(&self) -> f64 {
        if self.data.is_empty() {
            return 1.0;
        }
        self.data.iter().filter(|&&l| l == 0).count() as f64 / self.data.len() as f64
    }
}

/// Whether segmentation id 0 has an edge channel of its own.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Background {
    /// Ids `0..K` map to channels `0..K`.
    AsClass,
    /// Id 0 is background without a channel; ids `1..=K` map to channels `0..K`.
    #[default]
    Excluded,
}

/// How segmentation ids map onto the K edge channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabelSpace {
    pub k: usize,
    pub background: Background,
}

impl LabelSpace {
    pub fn new(k: usize, background: Background) -> Self {
        LabelSpace { k, background }
    }

    #[inline]
    pub fn channel(&self, id: u8) -> Option<usize> {
        let c = match self.background {
            Background::AsClass => id as usize,
            Background::Excluded => (id as usize).checked_sub(1)?,
        };
        (c < self.k).then_some(c)
    }
}

/// Thick multi-label training edges.
///
/// Pixel `p` is an edge of class `c` when some `q` within Chebyshev distance
/// `radius` has a different id and `c` is the channel of `seg(p)` or `seg(q)`.
pub fn seg_to_training_edges(seg: &SegMap, radius: usize, space: LabelSpace) -> EdgeLabelStack {
    let (h, w) = (seg.height, seg.width);
    let mut out = EdgeLabelStack::zeros(space.k, h, w);
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(radius), (y + radius + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(radius), (x + radius + 1).min(w));
            let id = seg.get(y, x);
            let mut differs = false;
            for qy in y0..y1 {
                for qx in x0..x1 {
                    let other = seg.get(qy, qx);
                    if other != id {
                        differs = true;
                        if let Some(c) = space.channel(other) {
                            out.set(c, y, x, true);
                        }
                    }
                }
            }
            if differs {
                if let Some(c) = space.channel(id) {
                    out.set(c, y, x, true);
                }
            }
        }
    }
    out
}

/// Single-label variant of [`seg_to_training_edges`] for the softmax baseline.
///
/// An edge pixel takes its own class when that class is one of its edge
/// channels, otherwise the lowest edge channel present.
pub fn seg_to_multiclass_labels(seg: &SegMap, radius: usize, space: LabelSpace) -> LabelMap {
    let stack = seg_to_training_edges(seg, radius, space);
    let (h, w) = (seg.height, seg.width);
    let mut data = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            let own = space.channel(seg.get(y, x)).filter(|&c| stack.get(c, y, x));
            let pick = own.or_else(|| (0..space.k).find(|&c| stack.get(c, y, x)));
            if let Some(c) = pick {
                data[y * w + x] = (c + 1) as u8;
            }
        }
    }
    LabelMap {
        height: h,
        width: w,
        data,
    }
}

/// Unit-width evaluation boundaries: the rim of each class region (pixels of
/// that class with a 4-neighbour of another id), thinned.
pub fn seg_to_eval_boundaries(seg: &SegMap, space: LabelSpace) -> EdgeLabelStack {
    let (h, w) = (seg.height, seg.width);
    let mut out = EdgeLabelStack::zeros(space.k, h, w);
    for y in 0..h {
        for x in 0..w {
            let id = seg.get(y, x);
            let Some(c) = space.channel(id) else {
                continue;
            };
            let rim = (y > 0 && seg.get(y - 1, x) != id)
                || (y + 1 < h && seg.get(y + 1, x) != id)
                || (x > 0 && seg.get(y, x - 1) != id)
                || (x + 1 < w && seg.get(y, x + 1) != id);
            if rim {
                out.set(c, y, x, true);
            }
        }
    }
    for c in 0..space.k {
        let thinned = thin(out.plane(c), h, w);
        out.plane_mut(c).copy_from_slice(&thinned);
    }
    out
}

/// K probability planes in `[0, 1]`, class-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMaps {
    pub k: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl ProbMaps {
    pub fn new(k: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != k * height * width {
            return Err(Error::data(format!(
                "probability maps {k}x{height}x{width} need {} values, got {}",
                k * height * width,
                data.len()
            )));
        }
        Ok(ProbMaps {
            k,
            height,
            width,
            data,
        })
    }

    pub fn plane(&self, k: usize) -> &[f32] {
        let p = self.height * self.width;
        &self.data[k * p..(k + 1) * p]
    }
}

/// OR-pools every 2x2 cell, keeping thin structures; output is `ceil(h/2) x ceil(w/2)`.
pub fn downsample_half_binary(stack: &EdgeLabelStack) -> EdgeLabelStack {
    let (h2, w2) = (stack.height.div_ceil(2), stack.width.div_ceil(2));
    let mut out = EdgeLabelStack::zeros(stack.k, h2, w2);
    for k in 0..stack.k {
        for y in 0..stack.height {
            for x in 0..stack.width {
                if stack.get(k, y, x) {
                    out.set(k, y / 2, x / 2, true);
                }
            }
        }
    }
    out
}

/// Half-resolution bilinear resampling with pixel centres aligned (corners not
/// aligned): output `o` samples input coordinate `2o + 0.5`, clamped at the border.
pub fn downsample_half_probs(maps: &ProbMaps) -> ProbMaps {
    let (h, w) = (maps.height, maps.width);
    let (h2, w2) = (h.div_ceil(2), w.div_ceil(2));
    let mut data = Vec::with_capacity(maps.k * h2 * w2);
    for k in 0..maps.k {
        let p = maps.plane(k);
        for oy in 0..h2 {
            let (ya, yb) = (2 * oy, (2 * oy + 1).min(h - 1));
            for ox in 0..w2 {
                let (xa, xb) = (2 * ox, (2 * ox + 1).min(w - 1));
                let v = 0.25
                    * (p[ya * w + xa] as f64
                        + p[ya * w + xb] as f64
                        + p[yb * w + xa] as f64
                        + p[yb * w + xb] as f64);
                data.push(v as f32);
            }
        }
    }
    ProbMaps {
        k: maps.k,
        height: h2,
        width: w2,
        data,
    }
}
