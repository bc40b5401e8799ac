use rand::Rng;

use super::{EdgeLabelStack, LabelMap, SegMap};
use crate::error::{Error, Result};
use crate::pnm::RgbImage;

/// A crop window followed by an optional horizontal flip of the window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropMirror {
    pub y0: usize,
    pub x0: usize,
    pub height: usize,
    pub width: usize,
    pub mirror: bool,
}

impl CropMirror {
    pub fn identity(height: usize, width: usize) -> Self {
        CropMirror {
            y0: 0,
            x0: 0,
            height,
            width,
            mirror: false,
        }
    }

    /// Uniform crop offset for a `crop` window inside `height x width`.
    pub fn sample<R: Rng>(rng: &mut R, height: usize, width: usize, crop: (usize, usize), mirror: bool) -> Result<Self> {
        let (ch, cw) = crop;
        if ch == 0 || cw == 0 || ch > height || cw > width {
            return Err(Error::config(format!(
                "crop {ch}x{cw} does not fit a {height}x{width} image"
            )));
        }
        Ok(CropMirror {
            y0: rng.random_range(0..=height - ch),
            x0: rng.random_range(0..=width - cw),
            height: ch,
            width: cw,
            mirror,
        })
    }

    /// Source pixel of output `(y, x)`.
    #[inline]
    pub fn source(&self, y: usize, x: usize) -> (usize, usize) {
        let x = if self.mirror { self.width - 1 - x } else { x };
        (self.y0 + y, self.x0 + x)
    }

    fn check(&self, height: usize, width: usize) -> Result<()> {
        if self.y0 + self.height > height || self.x0 + self.width > width {
            return Err(Error::config(format!(
                "crop window {self:?} exceeds {height}x{width}"
            )));
        }
        Ok(())
    }

    fn remap<T: Copy>(&self, planes: usize, width: usize, src: &[T], px: usize) -> Vec<T> {
        let plane_in = src.len() / planes.max(1);
        let mut out = Vec::with_capacity(planes * self.height * self.width * px);
        for p in 0..planes {
            let base = &src[p * plane_in..(p + 1) * plane_in];
            for y in 0..self.height {
                for x in 0..self.width {
                    let (sy, sx) = self.source(y, x);
                    let i = (sy * width + sx) * px;
                    out.extend_from_slice(&base[i..i + px]);
                }
            }
        }
        out
    }

    pub fn apply_rgb(&self, img: &RgbImage) -> Result<RgbImage> {
        self.check(img.height, img.width)?;
        Ok(RgbImage {
            width: self.width,
            height: self.height,
            data: self.remap(1, img.width, &img.data, 3),
        })
    }

    pub fn apply_stack(&self, stack: &EdgeLabelStack) -> Result<EdgeLabelStack> {
        self.check(stack.height(), stack.width())?;
        EdgeLabelStack::from_planes(
            stack.k(),
            self.height,
            self.width,
            self.remap(stack.k(), stack.width(), stack.data(), 1),
        )
    }

    pub fn apply_labels(&self, labels: &LabelMap) -> Result<LabelMap> {
        self.check(labels.height(), labels.width())?;
        LabelMap::from_vec(
            self.height,
            self.width,
            self.remap(1, labels.width(), labels.data(), 1),
        )
    }

    pub fn apply_seg(&self, seg: &SegMap) -> Result<SegMap> {
        self.check(seg.height(), seg.width())?;
        SegMap::from_vec(self.height, self.width, self.remap(1, seg.width(), seg.data(), 1))
    }
}

/// Applies one random crop (and the requested mirroring) to an image and all
/// of its label maps.
pub fn augment<R: Rng>(
    image: &RgbImage,
    stack: &EdgeLabelStack,
    mirror: bool,
    crop: (usize, usize),
    rng: &mut R,
) -> Result<(RgbImage, EdgeLabelStack)> {
    if (image.height, image.width) != (stack.height(), stack.width()) {
        return Err(Error::data("image and label stack sizes differ"));
    }
    let t = CropMirror::sample(rng, image.height, image.width, crop, mirror)?;
    Ok((t.apply_rgb(image)?, t.apply_stack(stack)?))
}
